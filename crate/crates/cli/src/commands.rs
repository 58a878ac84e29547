use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use claclab::agents::{Agent, Algorithm};
use claclab::envs::EnvParams;
use claclab::harness::{
    aggregate, bars_svg, curves_svg, final_phase_scores, parse_grid, read_csv, read_metrics,
    refined_sweep, regime_params, run_generalization_eval, run_training, sweep_objective,
    write_csv, write_jsonl, EvalRegime, GenEvalResult, MetricRow,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ConfigFile;
use crate::{CliError, ConfigArgs};

const RESOLVED: &str = "config.resolved.toml";
const DEFAULT_OUT: &str = "claclab-out";

fn overrides(args: &ConfigArgs) -> Vec<String> {
    let mut sets = args.set.clone();
    if let Some(seed) = args.seed {
        sets.push(format!("seed={seed}"));
    }
    sets
}

/// `--config` if given, else `fallback` if it exists, else built-in defaults.
fn load_config(args: &ConfigArgs, fallback: Option<&Path>) -> Result<ConfigFile, CliError> {
    let sets = overrides(args);
    match (&args.config, fallback) {
        (Some(path), _) => ConfigFile::load(path, &sets),
        (None, Some(path)) if path.is_file() => ConfigFile::load(path, &sets),
        _ => ConfigFile::resolve("", &sets),
    }
}

fn require_config(args: &ConfigArgs) -> Result<ConfigFile, CliError> {
    if args.config.is_none() {
        return Err(CliError::Usage("--config <FILE> is required".into()));
    }
    load_config(args, None)
}

fn out_dir(args: &ConfigArgs, cfg: &ConfigFile) -> PathBuf {
    args.out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Runtime(format!("worker pool: {e}")))
}

pub fn train(args: &ConfigArgs, workers: usize) -> Result<(), CliError> {
    let cfg = require_config(args)?;
    let out = out_dir(args, &cfg);
    fs::create_dir_all(&out)?;
    fs::write(out.join(RESOLVED), cfg.to_toml()?)?;
    let spec = cfg.experiment_spec();
    let report = run_training(&spec, &cfg.agent, Some(&out), workers)?;

    println!(
        "{:<6} {:>6} {:>12} {:>10}",
        "alg", "runs", "final mean", "stderr"
    );
    for (alg, s) in final_phase_scores(&report, &spec) {
        println!(
            "{:<6} {:>6} {:>12.3} {:>10.3}",
            alg, s.n_runs, s.mean, s.stderr
        );
    }
    println!("wrote {}", out.display());

    let diverged = report.diverged();
    if !diverged.is_empty() {
        let ids: Vec<&str> = diverged.iter().map(|r| r.spec.id.as_str()).collect();
        return Err(CliError::Diverged(format!(
            "{} run(s): {}",
            ids.len(),
            ids.join(", ")
        )));
    }
    Ok(())
}

fn last_phase_params(run: &Path) -> Result<Option<EnvParams>, CliError> {
    let path = run.join("phases.jsonl");
    if !path.is_file() {
        return Ok(None);
    }
    let mut last = None;
    for line in BufReader::new(fs::File::open(&path)?).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            last = Some(line);
        }
    }
    last.map(|l| serde_json::from_str(&l))
        .transpose()
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

/// Run directories under `input` (an experiment or a single run) and the
/// experiment directory they belong to.
fn find_runs(input: &Path) -> Result<(Vec<PathBuf>, PathBuf), CliError> {
    if input.join("checkpoint").is_dir() {
        let exp = input
            .parent()
            .and_then(Path::parent)
            .map_or_else(|| input.to_path_buf(), Path::to_path_buf);
        return Ok((vec![input.to_path_buf()], exp));
    }
    let mut runs = Vec::new();
    if let Ok(entries) = fs::read_dir(input.join("runs")) {
        for e in entries {
            let path = e?.path();
            if path.join("checkpoint").is_dir() {
                runs.push(path);
            }
        }
    }
    if runs.is_empty() {
        return Err(CliError::Runtime(format!(
            "no checkpoints under {}",
            input.display()
        )));
    }
    runs.sort();
    Ok((runs, input.to_path_buf()))
}

#[derive(Serialize)]
struct EvalRow<'a> {
    run_id: &'a str,
    algorithm: Algorithm,
    regime: EvalRegime,
    resample: usize,
    episode: usize,
    #[serde(rename = "return")]
    episode_return: f64,
    length: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EvalSummaryRow {
    algorithm: Algorithm,
    regime: EvalRegime,
    n_runs: usize,
    episodes: usize,
    mean: f64,
    std: f64,
}

#[derive(Serialize)]
struct ParamsRecord<'a> {
    run_id: &'a str,
    regime: EvalRegime,
    resample: usize,
    params: &'a EnvParams,
}

struct RunEval {
    id: String,
    algorithm: Algorithm,
    results: Vec<GenEvalResult>,
}

pub fn eval(
    input: &Path,
    regime: Option<EvalRegime>,
    args: &ConfigArgs,
    workers: usize,
) -> Result<(), CliError> {
    let (runs, exp) = find_runs(input)?;
    let cfg = load_config(args, Some(&exp.join(RESOLVED)))?;
    let spec = cfg.experiment_spec();
    let out = args.out.clone().unwrap_or_else(|| exp.clone());
    fs::create_dir_all(&out)?;
    let regimes: Vec<EvalRegime> = regime.map_or_else(|| EvalRegime::ALL.to_vec(), |r| vec![r]);

    let evaluated: Vec<Result<RunEval, CliError>> = pool(workers)?.install(|| {
        runs.par_iter()
            .map(|run| {
                let agent = Agent::load(&run.join("checkpoint"))?;
                let train_params = last_phase_params(run)?.unwrap_or_else(|| cfg.env.clone());
                let results = regimes
                    .iter()
                    .map(|&r| {
                        run_generalization_eval(
                            &agent,
                            &train_params,
                            &spec.regime_spec(r),
                            r,
                            spec.eval_resamples,
                            spec.eval_episodes,
                            cfg.seed,
                        )
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let id = run
                    .file_name()
                    .map_or_else(String::new, |n| n.to_string_lossy().into_owned());
                Ok(RunEval {
                    id,
                    algorithm: agent.config().algorithm,
                    results,
                })
            })
            .collect()
    });
    let evaluated: Vec<RunEval> = evaluated.into_iter().collect::<Result<_, _>>()?;

    let mut rows = Vec::new();
    let mut params = Vec::new();
    let mut pooled: BTreeMap<(Algorithm, EvalRegime), Vec<GenEvalResult>> = BTreeMap::new();
    for run in &evaluated {
        for res in &run.results {
            for e in &res.episodes {
                rows.push(EvalRow {
                    run_id: &run.id,
                    algorithm: run.algorithm,
                    regime: e.regime,
                    resample: e.resample,
                    episode: e.episode,
                    episode_return: e.episode_return,
                    length: e.length,
                });
            }
            for (i, p) in res.params.iter().enumerate() {
                params.push(ParamsRecord {
                    run_id: &run.id,
                    regime: res.regime,
                    resample: i,
                    params: p,
                });
            }
            pooled
                .entry((run.algorithm, res.regime))
                .or_default()
                .push(res.clone());
        }
    }
    let summary: Vec<EvalSummaryRow> = pooled
        .iter()
        .map(|(&(algorithm, regime), results)| {
            let all = GenEvalResult::pooled(results)?;
            Ok(EvalSummaryRow {
                algorithm,
                regime,
                n_runs: results.len(),
                episodes: all.episodes.len(),
                mean: all.mean,
                std: all.std,
            })
        })
        .collect::<Result<_, claclab::Error>>()?;

    write_csv(&out.join("eval.csv"), &rows)?;
    write_csv(&out.join("eval_summary.csv"), &summary)?;
    write_jsonl(&out.join("eval_params.jsonl"), &params)?;

    println!(
        "{:<6} {:<12} {:>6} {:>12} {:>10}",
        "alg", "regime", "runs", "mean", "std"
    );
    for s in &summary {
        println!(
            "{:<6} {:<12} {:>6} {:>12.3} {:>10.3}",
            s.algorithm, s.regime, s.n_runs, s.mean, s.std
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct SweepRow {
    algorithm: Algorithm,
    coefficient: f64,
    score: f64,
    best: bool,
}

pub fn sweep(grid: Option<&str>, args: &ConfigArgs, workers: usize) -> Result<(), CliError> {
    let cfg = require_config(args)?;
    let grid =
        parse_grid(grid.unwrap_or(&cfg.sweep.grid)).map_err(|e| CliError::Usage(e.to_string()))?;
    let out = out_dir(args, &cfg);
    fs::create_dir_all(&out)?;
    let spec = cfg.experiment_spec();
    let pool = pool(workers)?;
    let mut rows = Vec::new();
    for &alg in &spec.algorithms {
        let objective = sweep_objective(&spec, &cfg.agent, alg);
        let result =
            pool.install(|| refined_sweep(&grid, cfg.sweep.rounds, cfg.sweep.points, &objective))?;
        println!(
            "{alg}: best coefficient {} (final-window return {:.3})",
            result.best, result.best_score
        );
        rows.extend(result.points.iter().map(|&(coefficient, score)| SweepRow {
            algorithm: alg,
            coefficient,
            score,
            best: coefficient == result.best,
        }));
    }
    write_csv(&out.join("sweep.csv"), &rows)?;
    Ok(())
}

/// Metric files under `input`: a CSV file, a run directory or an experiment.
fn metric_files(input: &Path) -> Result<Vec<PathBuf>, CliError> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    if input.join("metrics.csv").is_file() {
        return Ok(vec![input.join("metrics.csv")]);
    }
    let mut files = Vec::new();
    if let Ok(entries) = fs::read_dir(input.join("runs")) {
        for e in entries {
            let path = e?.path().join("metrics.csv");
            if path.is_file() {
                files.push(path);
            }
        }
    }
    files.sort();
    Ok(files)
}

pub fn plot(input: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let files = metric_files(input)?;
    if files.is_empty() {
        return Err(CliError::Runtime(format!(
            "no metrics.csv found under {}",
            input.display()
        )));
    }
    let mut rows: Vec<MetricRow> = Vec::new();
    for f in &files {
        rows.extend(read_metrics(f)?);
    }
    if rows.is_empty() {
        return Err(CliError::Runtime("metric files contain no episodes".into()));
    }
    let base = if input.is_file() {
        input.parent().unwrap_or(Path::new("."))
    } else {
        input
    };
    let resolved = base.join(RESOLVED);
    let bucket = if resolved.is_file() {
        ConfigFile::load(&resolved, &[])?.experiment.summary_bucket
    } else {
        claclab::harness::ExperimentSpec::default().summary_bucket
    };
    let out = out.unwrap_or(base);
    fs::create_dir_all(out)?;
    fs::write(
        out.join("curves.svg"),
        curves_svg(&aggregate(&rows, bucket), "Episode return"),
    )?;

    let summary_path = base.join("eval_summary.csv");
    if summary_path.is_file() {
        let items: Vec<_> = read_csv::<EvalSummaryRow>(&summary_path)?
            .into_iter()
            .map(|s| (s.algorithm, s.regime, s.mean, s.std))
            .collect();
        fs::write(
            out.join("bars.svg"),
            bars_svg(&items, "Deterministic return by regime"),
        )?;
    }
    println!("wrote {}", out.display());
    Ok(())
}

#[derive(Serialize)]
struct PhaseRecord<'a> {
    seed_index: usize,
    phase: usize,
    params: &'a EnvParams,
}

#[derive(Serialize)]
struct DrawRecord<'a> {
    regime: EvalRegime,
    resample: usize,
    params: &'a EnvParams,
}

/// Prints training phase draws, or evaluation draws around the configured
/// environment, as JSON lines.
pub fn dump_env(regime: &str, args: &ConfigArgs) -> Result<(), CliError> {
    let cfg = load_config(args, None)?;
    let spec = cfg.experiment_spec();
    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    let json = |e: serde_json::Error| CliError::Runtime(e.to_string());
    if regime == "phases" {
        for seed_index in 0..spec.n_agents {
            for phase in 0..spec.n_phases() {
                let params = spec.phase_params(seed_index, phase)?;
                let line = serde_json::to_string(&PhaseRecord {
                    seed_index,
                    phase,
                    params: &params,
                })
                .map_err(json)?;
                writeln!(w, "{line}")?;
            }
        }
        return Ok(());
    }
    let regime: EvalRegime = regime
        .parse()
        .map_err(|e: claclab::Error| CliError::Usage(e.to_string()))?;
    let rules = spec.regime_spec(regime);
    for resample in 0..spec.eval_resamples {
        let params = regime_params(&spec.env, &rules, regime, resample, cfg.seed)?;
        let line = serde_json::to_string(&DrawRecord {
            regime,
            resample,
            params: &params,
        })
        .map_err(json)?;
        writeln!(w, "{line}")?;
    }
    Ok(())
}
