//! Executes the configured sweep of conditions over seeded trials, writing
//! per-run traces and sign logs, aggregated results, recalled images,
//! sorted confusion matrices, latent dumps, and a reproducibility manifest.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde_json::json;

use emcom_core::data::write_pgm;
use emcom_core::game::{run, Condition, GameOutcome, GameTrace};
use emcom_core::metrics::{confusion_sorted, kappa_band};
use emcom_core::Scalar;

use crate::config::ExperimentConfig;
use crate::datasets::{prepare, Prepared};

struct RunResult {
    condition: Condition,
    mi: bool,
    trial: usize,
    final_ari_a: f64,
    final_ari_b: f64,
    final_kappa: Option<f64>,
}

pub fn cmd_run(cfg: &ExperimentConfig) -> Result<()> {
    match cfg.precision.as_str() {
        "f32" => run_experiment::<f32>(cfg),
        _ => run_experiment::<f64>(cfg),
    }
}

fn label(condition: Condition, mi: bool) -> String {
    format!("{}_{}", condition.as_str(), if mi { "mi" } else { "nomi" })
}

fn run_experiment<S: Scalar>(cfg: &ExperimentConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    let data: Prepared<S> = prepare(cfg)?;
    eprintln!(
        "dataset ready: D = {}, input dim = {}, {} classes",
        data.obs_a.len(),
        data.obs_a[0].len(),
        data.truth.iter().copied().max().unwrap_or(0) + 1
    );

    let mut tasks = Vec::new();
    for entry in &cfg.game.conditions {
        let condition = Condition::parse(&entry.condition).expect("validated");
        for trial in 0..cfg.trials {
            tasks.push((condition, entry.mi, trial));
        }
    }

    let results: Result<Vec<RunResult>> = tasks
        .par_iter()
        .map(|&(condition, mi, trial)| -> Result<RunResult> {
            let seed = cfg.trial_seed(trial);
            let game_cfg = cfg.game_config::<S>(condition, mi, seed);
            let outcome = run(&game_cfg, &data.obs_a, &data.obs_b, &data.truth)
                .with_context(|| format!("run {} trial {trial}", label(condition, mi)))?;
            write_run_outputs(cfg, &data, condition, mi, trial, &outcome)?;
            let last = outcome.trace.last();
            Ok(RunResult {
                condition,
                mi,
                trial,
                final_ari_a: last.map_or(f64::NAN, |r| r.ari_a),
                final_ari_b: last.map_or(f64::NAN, |r| r.ari_b),
                final_kappa: last.and_then(|r| r.kappa),
            })
        })
        .collect();
    let mut results = results?;
    results.sort_by_key(|r| (r.condition.as_str(), r.mi, r.trial));

    write_results_table(cfg, &results)?;
    write_manifest(cfg)?;
    print_summary(cfg, &results);
    Ok(())
}

fn trace_path(cfg: &ExperimentConfig, condition: Condition, mi: bool, trial: usize) -> PathBuf {
    cfg.out_dir
        .join(format!("trace_{}_t{trial}.csv", label(condition, mi)))
}

fn write_run_outputs<S: Scalar>(
    cfg: &ExperimentConfig,
    data: &Prepared<S>,
    condition: Condition,
    mi: bool,
    trial: usize,
    outcome: &GameOutcome<S>,
) -> Result<()> {
    let tag = label(condition, mi);
    fs::write(trace_path(cfg, condition, mi, trial), outcome.trace.to_csv())?;
    write_signs_csv(
        &cfg.out_dir.join(format!("signs_{tag}_t{trial}_agent_a.csv")),
        &outcome.trace,
        true,
    )?;
    write_signs_csv(
        &cfg.out_dir.join(format!("signs_{tag}_t{trial}_agent_b.csv")),
        &outcome.trace,
        false,
    )?;

    // Heavier artifacts only for the first trial of each condition.
    if trial != 0 {
        return Ok(());
    }
    for (agent_label, agent) in [("a", &outcome.agent_a), ("b", &outcome.agent_b)] {
        // Latents with truth labels for external projection.
        let mut csv = String::new();
        let l = agent.latent_dim();
        csv.push_str(&(0..l).map(|i| format!("z{i}")).collect::<Vec<_>>().join(","));
        csv.push_str(",label\n");
        for (zd, lab) in agent.export_latents().iter().zip(&data.truth) {
            let row: Vec<String> = zd.iter().map(|v| format!("{:.6}", v.cast_f64())).collect();
            csv.push_str(&format!("{},{lab}\n", row.join(",")));
        }
        fs::write(
            cfg.out_dir.join(format!("latents_{tag}_agent_{agent_label}.csv")),
            csv,
        )?;

        // Sorted confusion matrix plus its permutation.
        let signs = agent.signs().as_slice();
        let cm = confusion_sorted(&data.truth, signs, cfg.game.k)?;
        let mut csv = String::new();
        for row in &cm.counts {
            csv.push_str(
                &row.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(","),
            );
            csv.push('\n');
        }
        fs::write(
            cfg.out_dir.join(format!("confusion_{tag}_agent_{agent_label}.csv")),
            csv,
        )?;
        fs::write(
            cfg.out_dir
                .join(format!("confusion_{tag}_agent_{agent_label}_permutation.json")),
            serde_json::to_string(&cm.permutation)?,
        )?;

        // Recalled image per sign (image pipelines only).
        if data.is_images {
            for sign in 0..cfg.game.k {
                let img = agent
                    .recall(sign)
                    .with_context(|| format!("recall sign {sign}"))?;
                write_pgm(
                    &img,
                    data.height,
                    data.width,
                    &cfg.out_dir
                        .join(format!("recall_{tag}_agent_{agent_label}_sign{sign}.pgm")),
                )?;
            }
        }
    }
    Ok(())
}

fn write_signs_csv(path: &Path, trace: &GameTrace, agent_a: bool) -> Result<()> {
    let mut csv = String::from("t,d,w\n");
    for rec in &trace.iterations {
        let w = if agent_a { &rec.w_a } else { &rec.w_b };
        for (d, &sign) in w.iter().enumerate() {
            csv.push_str(&format!("{},{d},{sign}\n", rec.t));
        }
    }
    fs::write(path, csv)?;
    Ok(())
}

fn mean_std(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    (mean, Some(var.sqrt()))
}

fn write_results_table(cfg: &ExperimentConfig, results: &[RunResult]) -> Result<()> {
    let mut csv = String::from(
        "condition,mi,ari_a_mean,ari_a_std,ari_b_mean,ari_b_std,kappa_mean,kappa_std,kappa_band\n",
    );
    for entry in &cfg.game.conditions {
        let condition = Condition::parse(&entry.condition).expect("validated");
        let rows: Vec<&RunResult> = results
            .iter()
            .filter(|r| r.condition == condition && r.mi == entry.mi)
            .collect();
        if rows.is_empty() {
            continue;
        }
        let (a_mean, a_std) = mean_std(&rows.iter().map(|r| r.final_ari_a).collect::<Vec<_>>());
        let (b_mean, b_std) = mean_std(&rows.iter().map(|r| r.final_ari_b).collect::<Vec<_>>());
        let fmt_std = |s: Option<f64>| s.map(|v| format!("{v:.4}")).unwrap_or_default();
        // The topline's kappa is identically 1 by construction; print a dash
        // as the tables do.
        let (kappa_mean, kappa_std, band) = if condition == Condition::GibbsTopline {
            ("-".into(), "-".into(), "-".into())
        } else {
            let ks: Vec<f64> = rows.iter().filter_map(|r| r.final_kappa).collect();
            if ks.is_empty() {
                ("-".into(), "-".into(), "-".into())
            } else {
                let (m, s) = mean_std(&ks);
                (format!("{m:.4}"), fmt_std(s), kappa_band(m).to_string())
            }
        };
        csv.push_str(&format!(
            "{},{},{:.4},{},{:.4},{},{},{},{}\n",
            condition.as_str(),
            entry.mi,
            a_mean,
            fmt_std(a_std),
            b_mean,
            fmt_std(b_std),
            kappa_mean,
            kappa_std,
            band,
        ));
    }
    fs::write(cfg.out_dir.join("results_table.csv"), csv)?;
    Ok(())
}

fn write_manifest(cfg: &ExperimentConfig) -> Result<()> {
    let manifest = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "trial_seeds": (0..cfg.trials).map(|t| cfg.trial_seed(t)).collect::<Vec<u64>>(),
        "rng": "chacha12, one stream per agent keyed by (trial seed, agent id)",
        "approximations": {
            "decoder_weights": "updated by Adam gradient steps, not an exact posterior draw",
            "perception": "latents drawn from the trained encoder posterior",
        },
    });
    fs::write(
        cfg.out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}

fn print_summary(cfg: &ExperimentConfig, results: &[RunResult]) {
    println!("results ({} trials each):", cfg.trials);
    for entry in &cfg.game.conditions {
        let condition = Condition::parse(&entry.condition).expect("validated");
        let rows: Vec<&RunResult> = results
            .iter()
            .filter(|r| r.condition == condition && r.mi == entry.mi)
            .collect();
        if rows.is_empty() {
            continue;
        }
        let (a_mean, _) = mean_std(&rows.iter().map(|r| r.final_ari_a).collect::<Vec<_>>());
        let (b_mean, _) = mean_std(&rows.iter().map(|r| r.final_ari_b).collect::<Vec<_>>());
        let kappa: Vec<f64> = rows.iter().filter_map(|r| r.final_kappa).collect();
        let kappa_text = if condition == Condition::GibbsTopline || kappa.is_empty() {
            "-".to_string()
        } else {
            let (m, _) = mean_std(&kappa);
            format!("{m:.3} ({})", kappa_band(m))
        };
        println!(
            "  {:<16} mi={:<5} ARI_A {a_mean:.3}  ARI_B {b_mean:.3}  kappa {kappa_text}",
            condition.as_str(),
            entry.mi,
        );
    }
    println!("artifacts in {}", cfg.out_dir.display());
}
