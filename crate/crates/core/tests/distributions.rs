use claclab::distrib::{gaussian_kl, pmf_entropy, DiagGaussian, DiscreteJoint, MarginalEstimate};
use claclab::seed;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

/// Plain double sum over the joint, independent of the library.
fn mi_double_sum(p: &[Vec<f64>]) -> f64 {
    let rows: Vec<f64> = p.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<f64> = (0..p[0].len())
        .map(|a| p.iter().map(|r| r[a]).sum())
        .collect();
    let mut mi = 0.0;
    for (s, row) in p.iter().enumerate() {
        for (a, &j) in row.iter().enumerate() {
            if j > 0.0 {
                mi += j * (j / (rows[s] * cols[a])).ln();
            }
        }
    }
    mi
}

fn random_joint<R: Rng>(n_s: usize, n_a: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let raw: Vec<Vec<f64>> = (0..n_s)
        .map(|_| (0..n_a).map(|_| rng.random::<f64>().powi(3)).collect())
        .collect();
    let total: f64 = raw.iter().flatten().sum();
    raw.into_iter()
        .map(|r| r.into_iter().map(|x| x / total).collect())
        .collect()
}

#[test]
fn mi_two_ways_agree_on_random_joints() {
    let mut rng = seed::rng(2024);
    for _ in 0..100 {
        let p = random_joint(4, 4, &mut rng);
        let joint = DiscreteJoint::from_rows(&p).unwrap();
        let direct = joint.mutual_information();
        let via_entropy = joint.mi_from_entropies();
        let oracle = mi_double_sum(&p);
        assert!(
            (direct - via_entropy).abs() < 1e-10,
            "{direct} vs {via_entropy}"
        );
        assert!((direct - oracle).abs() < 1e-12);
    }
}

#[test]
fn mi_extremes() {
    // Independent product: zero.
    let ps = [0.1, 0.2, 0.3, 0.4];
    let pa = [0.25, 0.25, 0.4, 0.1];
    let rows: Vec<Vec<f64>> = ps
        .iter()
        .map(|s| pa.iter().map(|a| s * a).collect())
        .collect();
    assert!(
        DiscreteJoint::from_rows(&rows)
            .unwrap()
            .mi_from_entropies()
            .abs()
            < 1e-12
    );
    // A one-to-one policy transmits the full state entropy.
    let policy: Vec<Vec<f64>> = (0..4)
        .map(|s| (0..4).map(|a| f64::from(u8::from(s == a))).collect())
        .collect();
    let joint = DiscreteJoint::from_policy(&ps, &policy).unwrap();
    assert!((joint.mutual_information() - pmf_entropy(&ps)).abs() < 1e-12);
}

proptest! {
    #[test]
    fn mi_is_bounded_and_symmetric(
        n_s in 1usize..6,
        n_a in 1usize..6,
        weights in proptest::collection::vec(0.0f64..1.0, 36),
    ) {
        let mut p: Vec<Vec<f64>> = (0..n_s).map(|s| weights[s * 6..s * 6 + n_a].to_vec()).collect();
        let total: f64 = p.iter().flatten().sum();
        prop_assume!(total > 1e-6);
        p.iter_mut().flatten().for_each(|x| *x /= total);
        let joint = DiscreteJoint::from_rows(&p).unwrap();
        let mi = joint.mutual_information();
        prop_assert!(mi >= 0.0);
        prop_assert!((mi - joint.transpose().mutual_information()).abs() < 1e-12);
        let cap = pmf_entropy(&joint.state_marginal()).min(pmf_entropy(&joint.action_marginal()));
        prop_assert!(mi <= cap + 1e-12, "mi {} exceeds {}", mi, cap);
    }

    #[test]
    fn kl_is_nonnegative_and_zero_on_itself(
        m in proptest::collection::vec(-3.0f64..3.0, 2),
        l in proptest::collection::vec(-2.0f64..1.5, 2),
        m2 in proptest::collection::vec(-3.0f64..3.0, 2),
        l2 in proptest::collection::vec(-2.0f64..1.5, 2),
    ) {
        let p = DiagGaussian::new(m, l).unwrap();
        let q = DiagGaussian::new(m2, l2).unwrap();
        prop_assert!(gaussian_kl(&p, &q).unwrap() >= -1e-12);
        prop_assert!(gaussian_kl(&p, &p).unwrap().abs() < 1e-12);
    }
}

fn samples(d: &DiagGaussian, n: usize, seed_value: u64) -> Vec<Vec<f64>> {
    let mut rng = seed::rng(seed_value);
    (0..n)
        .map(|_| {
            let eta: Vec<f64> = (0..d.dim()).map(|_| rng.sample(StandardNormal)).collect();
            d.sample_squashed(&eta).unwrap().pre_squash
        })
        .collect()
}

#[test]
fn entropy_matches_monte_carlo() {
    let d = DiagGaussian::new(vec![0.4, -1.0], vec![0.3, 0.6]).unwrap();
    let xs = samples(&d, 100_000, 5);
    let mc = -xs.iter().map(|x| d.log_prob(x).unwrap()).sum::<f64>() / xs.len() as f64;
    assert!(
        (mc - d.entropy()).abs() / d.entropy().abs() < 0.02,
        "mc {mc} vs {}",
        d.entropy()
    );
}

#[test]
fn kl_matches_monte_carlo() {
    let p = DiagGaussian::new(vec![0.4, -1.0], vec![0.3, -0.2]).unwrap();
    let q = DiagGaussian::new(vec![-0.5, 0.0], vec![0.6, 0.1]).unwrap();
    let xs = samples(&p, 100_000, 6);
    let mc = xs
        .iter()
        .map(|x| p.log_prob(x).unwrap() - q.log_prob(x).unwrap())
        .sum::<f64>()
        / xs.len() as f64;
    let exact = gaussian_kl(&p, &q).unwrap();
    assert!((mc - exact).abs() / exact < 0.02, "mc {mc} vs {exact}");
}

#[test]
fn squashed_samples_stay_in_the_box() {
    let d = DiagGaussian::new(vec![3.0], vec![1.5]).unwrap();
    let mut rng = seed::rng(7);
    for _ in 0..10_000 {
        let s = d.sample_squashed(&[rng.sample(StandardNormal)]).unwrap();
        assert!(s.action[0].abs() <= 1.0 && s.log_prob.is_finite());
    }
}

#[test]
fn marginal_recovers_mixture_moments() {
    // Three fixed components, chosen with weights 0.5 / 0.3 / 0.2.
    let comps = [(2.0, 0.5, 0.5), (4.0, 1.0, 0.3), (-1.0, 0.2, 0.2)];
    let mean: f64 = comps.iter().map(|(m, _, w)| w * m).sum();
    let second: f64 = comps.iter().map(|(m, v, w)| w * (v + m * m)).sum();
    let var = second - mean * mean;

    let mut est = MarginalEstimate::new(1, 1e-3).unwrap();
    let mut rng = seed::rng(8);
    for n in 1..=100_000u32 {
        let u: f64 = rng.random();
        let (m, v, _) = if u < 0.5 {
            comps[0]
        } else if u < 0.8 {
            comps[1]
        } else {
            comps[2]
        };
        let d = DiagGaussian::from_variance(vec![m], &[v]).unwrap();
        est.update_with_rate(&d, 1.0 / f64::from(n)).unwrap();
    }
    assert!(
        (est.mean()[0] - mean).abs() / mean.abs() < 0.01,
        "{} vs {mean}",
        est.mean()[0]
    );
    assert!(
        (est.variance()[0] - var).abs() / var < 0.01,
        "{} vs {var}",
        est.variance()[0]
    );
}

#[test]
fn marginal_first_update_copies_and_rate_one_replaces() {
    let mut est = MarginalEstimate::new(2, 0.1).unwrap();
    assert!(!est.is_initialized() && est.log_prob(&[0.0, 0.0]).is_err());
    est.update_moments(&[1.0, -2.0], &[0.5, 3.0], 0.1).unwrap();
    assert_eq!(est.mean(), &[1.0, -2.0]);
    assert_eq!(est.variance(), &[0.5, 3.0]);
    est.update_moments(&[0.0, 0.0], &[1.0, 1.0], 1.0).unwrap();
    assert_eq!(est.mean(), &[0.0, 0.0]);
    assert!((est.variance()[0] - 1.0).abs() < 1e-15);
}
