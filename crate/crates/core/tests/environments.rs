mod oracle;

use std::f64::consts::PI;

use claclab::envs::{
    advance_probability, resample, EnvParams, Environment, NChain, NChainParams, Pendulum,
    PendulumParams, Regime, ResampleSpec,
};
use claclab::harness::{default_regime, EvalRegime};
use claclab::seed;

#[test]
fn beta_prior_mean() {
    let params = EnvParams::Nchain(NChainParams::default());
    let spec = ResampleSpec::nchain_beta(&NChainParams::default());
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in 0..25_000 {
        let EnvParams::Nchain(p) = resample(&params, &spec, i).unwrap() else {
            unreachable!()
        };
        sum += p.hidden_values.iter().sum::<f64>();
        n += p.hidden_values.len();
    }
    let mean = sum / n as f64;
    assert!((mean - 2.0 / 7.0).abs() / (2.0 / 7.0) < 0.01, "mean {mean}");
}

#[test]
fn advance_frequency_within_binomial_bounds() {
    let hidden: f64 = 0.3;
    let trials = 20_000;
    for action in [-1.0f64, -0.5, -0.4, -0.2, 0.0, 0.5] {
        let p = (-10.0 * ((action + 1.0) / 2.0 - hidden).abs()).exp();
        assert!((advance_probability(action, hidden, 10.0) - p).abs() < 1e-15);
        let params = NChainParams {
            hidden_values: vec![hidden; 4],
            ..NChainParams::default()
        };
        let mut env =
            NChain::new(params, seed::derive(99, 0, (action * 100.0) as i64 as u64)).unwrap();
        let mut advances = 0;
        for _ in 0..trials {
            env.reset();
            env.step(&[action]).unwrap();
            advances += env.position();
        }
        let sigma = (trials as f64 * p * (1.0 - p)).sqrt();
        let expected = trials as f64 * p;
        assert!(
            (advances as f64 - expected).abs() <= 3.0 * sigma.max(1.0),
            "action {action}: {advances} advances, expected {expected:.1} ± {sigma:.1}"
        );
    }
}

fn pendulum_mass_draws(regime: EvalRegime, n: u64) -> Vec<f64> {
    let nominal = EnvParams::Pendulum(PendulumParams::default());
    let spec = default_regime(&nominal, regime);
    (0..n)
        .map(|i| match resample(&nominal, &spec, i).unwrap() {
            EnvParams::Pendulum(p) => p.mass,
            _ => unreachable!(),
        })
        .collect()
}

#[test]
fn disjoint_sampler_never_enters_the_gap() {
    let draws = pendulum_mass_draws(EvalRegime::Extreme, 100_000);
    let violations = draws
        .iter()
        .filter(|&&m| !((0.90..0.95).contains(&m) || (1.05..1.10).contains(&m)))
        .count();
    assert_eq!(violations, 0);
    let low = draws.iter().filter(|&&m| m < 1.0).count() as f64 / draws.len() as f64;
    assert!((low - 0.5).abs() < 0.01, "low-band share {low}");
}

#[test]
fn random_regime_stays_in_band() {
    let draws = pendulum_mass_draws(EvalRegime::Random, 20_000);
    assert!(draws.iter().all(|m| (0.95..1.05).contains(m)));
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    assert!((mean - 1.0).abs() < 0.002);
}

#[test]
fn relative_regimes_scale_every_listed_parameter() {
    let nominal = PendulumParams {
        mass: 2.0,
        gravity: 10.0,
        max_torque: 3.0,
        ..PendulumParams::default()
    };
    let spec = ResampleSpec::new(true).with("gravity", Regime::Uniform { lo: 0.5, hi: 0.6 });
    let EnvParams::Pendulum(p) = resample(&EnvParams::Pendulum(nominal.clone()), &spec, 3).unwrap()
    else {
        unreachable!()
    };
    assert!((5.0..6.0).contains(&p.gravity));
    assert_eq!(
        (p.mass, p.max_torque, p.length),
        (nominal.mass, nominal.max_torque, nominal.length)
    );
}

fn angle_normalize(x: f64) -> f64 {
    ((x + PI).rem_euclid(2.0 * PI)) - PI
}

#[test]
fn pendulum_follows_reference_dynamics() {
    let p = PendulumParams {
        mass: 1.3,
        gravity: 9.0,
        max_torque: 2.5,
        ..PendulumParams::default()
    };
    let mut env = Pendulum::new(p.clone(), 4).unwrap();
    env.reset();
    let (mut th, mut thdot) = env.angle();
    let actions = [0.3, -1.0, 1.0, 0.0, 2.0, -0.7];
    for k in 0..60 {
        let a: f64 = actions[k % actions.len()];
        let u = a.clamp(-1.0, 1.0) * p.max_torque;
        let cost = angle_normalize(th).powi(2) + 0.1 * thdot * thdot + 0.001 * u * u;
        thdot += (3.0 * p.gravity / (2.0 * p.length) * th.sin()
            + 3.0 / (p.mass * p.length * p.length) * u)
            * p.dt;
        thdot = thdot.clamp(-8.0, 8.0);
        th += thdot * p.dt;
        let step = env.step(&[a]).unwrap();
        assert!((step.reward + cost).abs() < 1e-12);
        let obs = &step.state.observation;
        assert!((obs[0] - th.cos()).abs() < 1e-12 && (obs[1] - th.sin()).abs() < 1e-12);
        assert!((obs[2] - thdot).abs() < 1e-12);
        assert!(!step.terminated);
    }
}

#[test]
fn pendulum_resets_within_start_box_and_truncates() {
    let mut env = Pendulum::new(
        PendulumParams {
            max_episode_steps: 7,
            ..PendulumParams::default()
        },
        5,
    )
    .unwrap();
    for _ in 0..200 {
        env.reset();
        let (th, thdot) = env.angle();
        assert!((-PI..PI).contains(&th) && (-1.0..1.0).contains(&thdot));
    }
    env.reset();
    for k in 1..=7 {
        let s = env.step(&[0.0]).unwrap();
        assert_eq!(s.truncated, k == 7);
    }
    assert!(env.step(&[0.0]).is_err());
}

#[test]
fn nchain_returns_agree_with_dynamic_programming() {
    // A fixed per-state action policy: simulated mean return vs exact expectation.
    let params = NChainParams::default();
    let xs = [0.3, 0.3, 0.25, 0.35];
    let exact = oracle::nchain_dp(
        &params.hidden_values,
        params.sharpness,
        params.max_episode_steps,
        &[],
        Some(&xs),
    );
    let mut env = NChain::new(params.clone(), 6).unwrap();
    let episodes = 20_000;
    let mut total = 0.0;
    for _ in 0..episodes {
        let mut s = env.reset();
        while !s.done {
            let a = 2.0 * xs[env.position()] - 1.0;
            let step = env.step(&[a]).unwrap();
            total += step.reward;
            s = step.state;
        }
    }
    let mean = total / episodes as f64;
    assert!(
        (mean - exact).abs() < 0.05 * exact.abs(),
        "simulated {mean} vs exact {exact}"
    );

    // With the hidden values on the grid, the optimum walks straight through.
    let grid: Vec<f64> = (0..=200).map(|i| i as f64 / 200.0).collect();
    let best = oracle::nchain_dp(
        &params.hidden_values,
        params.sharpness,
        params.max_episode_steps,
        &grid,
        None,
    );
    assert!((best + 3.0).abs() < 1e-9, "optimum {best}");
}

#[test]
fn env_seed_fixes_the_trajectory() {
    let run = |seed_value| {
        let mut env = NChain::new(NChainParams::default(), seed_value).unwrap();
        let mut s = env.reset();
        let mut positions = Vec::new();
        while !s.done {
            s = env.step(&[-0.45]).unwrap().state;
            positions.push(env.position());
        }
        positions
    };
    assert_eq!(run(1), run(1));
    assert_ne!(run(1), run(2));
}
