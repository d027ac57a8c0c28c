//! Config-driven commands: `falsify`, `degree` and `bench`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use cpsconf_core::degree::{binary_search_epsilon, binary_search_tau, initial_bracket, pareto_front, Axis, SearchContext};
use cpsconf_core::falsify::{falsify, Campaign, FalsificationResult};
use cpsconf_core::systems::SystemUnderTest;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{load, BenchConfig, RunConfig};
use crate::report::{sig12, write_json, Manifest};
use crate::Outcome;

/// Absolute directory of the config file; relative paths inside the config refer to it.
fn base_dir(path: &Path) -> PathBuf {
    let dir = path.parent().unwrap_or(Path::new(""));
    std::path::absolute(dir).unwrap_or_else(|_| dir.to_path_buf())
}

fn prepare_out(out: &Path) -> Result<(), String> {
    std::fs::create_dir_all(out).map_err(|e| format!("{}: {e}", out.display()))
}

fn io(out: &Path) -> impl Fn(std::io::Error) -> String + '_ {
    move |e| format!("{}: {e}", out.display())
}

fn load_run(path: &Path, seed: Option<u64>) -> Result<RunConfig, String> {
    let mut cfg: RunConfig = load(path).map_err(|e| e.to_string())?;
    if seed.is_some() {
        cfg.seed = seed;
    }
    let cfg = cfg.resolve(&base_dir(path)).map_err(|e| e.to_string())?;
    eprintln!("seed {}", cfg.seed());
    Ok(cfg)
}

#[derive(Serialize)]
struct Timing {
    wall_time_s: f64,
}

pub fn cmd_falsify(path: &Path, out: &Path, seed: Option<u64>, budget: Option<usize>) -> Outcome {
    let mut cfg: RunConfig = load(path).map_err(|e| e.to_string())?;
    if let Some(b) = budget {
        cfg.budget = b;
    }
    if seed.is_some() {
        cfg.seed = seed;
    }
    let cfg = cfg.resolve(&base_dir(path)).map_err(|e| e.to_string())?;
    eprintln!("seed {}", cfg.seed());
    let objective = cfg.objective.as_ref().ok_or("objective: required for falsify")?.build(cfg.horizon).map_err(|e| e.to_string())?;
    let model = cfg.model.build().map_err(|e| format!("model: {e}"))?;
    let implementation = cfg.implementation.build().map_err(|e| format!("implementation: {e}"))?;
    let space = cfg.space.build().map_err(|e| e.to_string())?;
    let campaign = Campaign {
        model: &model,
        implementation: &implementation,
        horizon: cfg.horizon,
        max_jumps: cfg.max_jumps,
        space: &space,
        objective: &objective,
    };

    prepare_out(out)?;
    write_json(out, "manifest.json", &Manifest::new("falsify", cfg.seed(), &cfg)).map_err(io(out))?;
    let started = Instant::now();
    let result = falsify(&campaign, &cfg.optimizer, cfg.budget, cfg.seed(), None).map_err(|e| e.to_string())?;
    write_json(out, "report.json", &result).map_err(io(out))?;
    write_json(out, "timing.json", &Timing { wall_time_s: started.elapsed().as_secs_f64() }).map_err(io(out))?;

    if result.falsified {
        persist_witness(&campaign, &result, out)?;
        println!(
            "FALSIFIED after {} tests, robustness {}",
            result.tests_run,
            sig12(result.best_robustness.value())
        );
    } else {
        println!(
            "NOT FALSIFIED after {} tests, best robustness {}",
            result.tests_run,
            sig12(result.best_robustness.value())
        );
    }
    Ok(result.falsified)
}

/// Re-runs the falsifying test and stores its parameters and both traces.
fn persist_witness(campaign: &Campaign<'_>, result: &FalsificationResult, out: &Path) -> Result<(), String> {
    let test_id = result
        .log
        .iter()
        .find(|r| r.theta == result.best_theta && r.robustness == Some(result.best_robustness))
        .map_or(0, |r| r.test_id);
    write_json(out, "witness.json", &result.best_theta).map_err(io(out))?;
    let pt = campaign.parallel_trace(&result.best_theta, test_id)?;
    std::fs::write(out.join("witness_model.csv"), pt.model.to_csv_string()).map_err(io(out))?;
    std::fs::write(out.join("witness_implementation.csv"), pt.implementation.to_csv_string()).map_err(io(out))?;
    Ok(())
}

fn degree_row(csv: &mut String, phase: &str, r: &cpsconf_core::degree::IterationRecord) {
    let _ = writeln!(
        csv,
        "{phase},{},{},{},{},{}",
        r.iteration,
        sig12(r.value),
        sig12(r.best_robustness.value()),
        r.falsified,
        r.tests_run
    );
}

pub fn cmd_degree(path: &Path, out: &Path, seed: Option<u64>) -> Outcome {
    let cfg = load_run(path, seed)?;
    let spec = cfg.degree.clone().ok_or("degree: section required for the degree command")?;
    let model = cfg.model.build().map_err(|e| format!("model: {e}"))?;
    let implementation = cfg.implementation.build().map_err(|e| format!("implementation: {e}"))?;
    let space = cfg.space.build().map_err(|e| e.to_string())?;
    let ctx = SearchContext {
        model: &model,
        implementation: &implementation,
        horizon: cfg.horizon,
        max_jumps: cfg.max_jumps,
        space: &space,
        optimizer: cfg.optimizer.clone(),
        budget: cfg.budget,
        seed: cfg.seed(),
    };

    prepare_out(out)?;
    write_json(out, "manifest.json", &Manifest::new("degree", cfg.seed(), &cfg)).map_err(io(out))?;
    let started = Instant::now();

    if let Some(taus) = &spec.taus {
        if spec.axis != Axis::Epsilon {
            return Err("degree.taus: a Pareto front searches the epsilon axis".into());
        }
        let eps_h = spec.upper.unwrap_or(spec.start);
        let front = pareto_front(&ctx, taus, spec.k, eps_h, spec.max_doublings).map_err(|e| e.to_string())?;
        let mut csv = String::from("tau,lower,upper,status\n");
        for p in &front {
            match &p.result {
                Ok(r) => {
                    let _ = writeln!(csv, "{},{},{},ok", sig12(p.tau), sig12(r.lower), sig12(r.upper));
                    println!("tau {}: eps in [{}, {}]", sig12(p.tau), sig12(r.lower), sig12(r.upper));
                }
                Err(e) => {
                    let _ = writeln!(csv, "{},,,\"{}\"", sig12(p.tau), e.replace('"', "'"));
                    println!("tau {}: {e}", sig12(p.tau));
                }
            }
        }
        write_json(out, "report.json", &serde_json::json!({ "front": front })).map_err(io(out))?;
        std::fs::write(out.join("degree.csv"), csv).map_err(io(out))?;
        write_json(out, "timing.json", &Timing { wall_time_s: started.elapsed().as_secs_f64() }).map_err(io(out))?;
        return Ok(false);
    }

    let fixed = spec.fixed.ok_or(match spec.axis {
        Axis::Epsilon => "degree.fixed: the tau to search at is required",
        Axis::Tau => "degree.fixed: the eps to search at is required",
    })?;
    let (lower, upper, bracket) = match spec.upper {
        Some(u) => (spec.lower, u, Vec::new()),
        None => {
            let (h, log) =
                initial_bracket(&ctx, spec.axis, fixed, spec.start, spec.max_doublings).map_err(|e| e.to_string())?;
            let lower = log.iter().filter(|r| r.falsified).map(|r| r.value).fold(spec.lower, f64::max);
            (lower, h, log)
        }
    };
    let result = match spec.axis {
        Axis::Epsilon => binary_search_epsilon(&ctx, fixed, spec.k, lower, upper),
        Axis::Tau => binary_search_tau(&ctx, fixed, spec.k, lower, upper),
    }
    .map_err(|e| e.to_string())?;

    let mut csv = String::from("phase,iteration,value,best_robustness,falsified,tests_run\n");
    bracket.iter().for_each(|r| degree_row(&mut csv, "bracket", r));
    result.log.iter().for_each(|r| degree_row(&mut csv, "bisect", r));
    write_json(out, "report.json", &serde_json::json!({ "bracket": bracket, "result": result })).map_err(io(out))?;
    std::fs::write(out.join("degree.csv"), csv).map_err(io(out))?;
    write_json(out, "timing.json", &Timing { wall_time_s: started.elapsed().as_secs_f64() }).map_err(io(out))?;
    let name = match spec.axis {
        Axis::Epsilon => "eps",
        Axis::Tau => "tau",
    };
    println!("{name} in [{}, {}] after {} iterations", sig12(result.lower), sig12(result.upper), result.iterations);
    Ok(false)
}

/// Per-mutant statistics over the seeded runs.
#[derive(Debug, Serialize)]
pub struct MutantSummary {
    pub name: String,
    pub magnitude: f64,
    pub runs: usize,
    pub falsified: usize,
    /// Mean tests over falsified runs only.
    pub avg_tests_falsified: Option<f64>,
    /// Mean tests over all runs; an unfalsified run counts its whole budget.
    pub avg_tests: f64,
    /// Mean best robustness over runs where it is finite.
    pub avg_finite_robustness: Option<f64>,
    pub neg_inf: usize,
    pub pos_inf: usize,
    pub errors: usize,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".into(), sig12)
}

pub fn cmd_bench(path: &Path, out: &Path, seed: Option<u64>, runs: Option<usize>) -> Outcome {
    let mut cfg: BenchConfig = load(path).map_err(|e| e.to_string())?;
    if seed.is_some() {
        cfg.seed = seed;
    }
    if let Some(r) = runs {
        cfg.runs = r;
    }
    let cfg = cfg.resolve(&base_dir(path)).map_err(|e| e.to_string())?;
    eprintln!("seed {}", cfg.seed());
    let objective = cfg.objective.build(cfg.horizon).map_err(|e| e.to_string())?;
    let space = cfg.space.build().map_err(|e| e.to_string())?;
    let base = cfg.base.build().map_err(|e| format!("base: {e}"))?;

    prepare_out(out)?;
    write_json(out, "manifest.json", &Manifest::new("bench", cfg.seed(), &cfg)).map_err(io(out))?;

    let mut summaries = Vec::new();
    let mut times = Vec::new();
    let mut csv = String::from(
        "mutant,magnitude,runs,falsified,avg_tests_falsified,avg_tests,avg_finite_robustness,neg_inf,pos_inf,errors\n",
    );
    println!(
        "{:<14} {:>9} {:>10} {:>10} {:>9} {:>12} {:>5} {:>5} {:>9}",
        "mutant", "magnitude", "falsified", "tests|fals", "tests", "robustness", "-inf", "+inf", "time[s]"
    );
    for m in &cfg.mutants {
        let implementation: SystemUnderTest =
            cfg.base.with_mutation(m.mutation.clone()).and_then(|s| s.build()).map_err(|e| format!("{}: {e}", m.name))?;
        let campaign = Campaign {
            model: &base,
            implementation: &implementation,
            horizon: cfg.horizon,
            max_jumps: cfg.max_jumps,
            space: &space,
            objective: &objective,
        };
        let results: Vec<(Result<FalsificationResult, String>, f64)> = (0..cfg.runs as u64)
            .into_par_iter()
            .map(|r| {
                let started = Instant::now();
                let res = falsify(&campaign, &cfg.optimizer, cfg.budget, cfg.seed().wrapping_add(r), None)
                    .map_err(|e| e.to_string());
                (res, started.elapsed().as_secs_f64())
            })
            .collect();
        let ok: Vec<&FalsificationResult> = results.iter().filter_map(|(r, _)| r.as_ref().ok()).collect();
        let s = MutantSummary {
            name: m.name.clone(),
            magnitude: m.mutation.as_ref().map_or(0.0, |x| x.magnitude()),
            runs: cfg.runs,
            falsified: ok.iter().filter(|r| r.falsified).count(),
            avg_tests_falsified: mean(ok.iter().filter(|r| r.falsified).map(|r| r.tests_run as f64)),
            avg_tests: mean(
                results.iter().map(|(r, _)| r.as_ref().map_or(cfg.budget, |r| r.tests_run) as f64),
            )
            .unwrap_or(0.0),
            avg_finite_robustness: mean(
                ok.iter().map(|r| r.best_robustness.value()).filter(|v| v.is_finite()),
            ),
            neg_inf: ok.iter().filter(|r| r.best_robustness.value() == f64::NEG_INFINITY).count(),
            pos_inf: ok.iter().filter(|r| r.best_robustness.value() == f64::INFINITY).count(),
            errors: results.len() - ok.len(),
        };
        let avg_time = mean(results.iter().map(|(_, t)| *t)).unwrap_or(0.0);
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{}",
            s.name,
            sig12(s.magnitude),
            s.runs,
            s.falsified,
            opt(s.avg_tests_falsified),
            sig12(s.avg_tests),
            opt(s.avg_finite_robustness),
            s.neg_inf,
            s.pos_inf,
            s.errors
        );
        println!(
            "{:<14} {:>9} {:>10} {:>10} {:>9} {:>12} {:>5} {:>5} {:>9.3}",
            s.name,
            sig12(s.magnitude),
            format!("{}/{}", s.falsified, s.runs),
            opt(s.avg_tests_falsified.map(|x| (x * 100.0).round() / 100.0)),
            sig12((s.avg_tests * 100.0).round() / 100.0),
            opt(s.avg_finite_robustness.map(|x| (x * 1e4).round() / 1e4)),
            s.neg_inf,
            s.pos_inf,
            avg_time
        );
        times.push(serde_json::json!({ "mutant": s.name, "avg_time_s": avg_time }));
        summaries.push(s);
    }
    write_json(out, "report.json", &serde_json::json!({ "mutants": summaries })).map_err(io(out))?;
    std::fs::write(out.join("summary.csv"), csv).map_err(io(out))?;
    write_json(out, "timing.json", &times).map_err(io(out))?;
    Ok(false)
}
