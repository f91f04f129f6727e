//! The `train` and `dae` commands: replicated training runs that leave
//! behind checkpoints, per-epoch logs, analysis reports, and a manifest.
//!
//! Replication `r` runs at seed `seed + r`, and every stream inside a
//! replication (data draw, initialization, batching, measurement probes)
//! is derived from that one seed, so a rerun with the same configuration
//! reproduces every metric artifact byte for byte. The per-epoch timing
//! column of `train_log.csv` is the one intentional exception.

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::manifest::RunContext;
use dae_core::analysis::{
    code_usage_counts, codebook_cosine_stats, knn_accuracy, model_complexity, ComplexityLog,
    ComplexityRow, CosineStats,
};
use dae_core::checkpoint::Checkpoint;
use dae_core::data::{make_toy_data, MixtureSpec, ToyData};
use dae_core::models::Model;
use dae_core::rng::derive_seed;
use dae_core::train::{run_dae, run_single_stage, RunOutcome, TrainLog};
use serde::Serialize;

/// Everything measured about one trained replication.
#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub seed: u64,
    /// Mean reconstruction loss over the last training epoch.
    pub final_recon_loss: Option<f64>,
    pub knn_k: usize,
    /// k-NN label accuracy (percent) of test points among train points,
    /// measured in latent space.
    pub latent_knn_accuracy_pct: f64,
    /// Same readout measured on reconstructions in input space.
    pub recon_knn_accuracy_pct: f64,
    pub c_lip_encoder: f64,
    pub c_lip_decoder: f64,
    /// |C_enc − 1| + |C_dec − 1|: distance from unit-Lipschitz behavior.
    pub complexity_deviation: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub codebook: Option<CodebookReport>,
}

/// Codebook geometry and utilization for quantized models.
#[derive(Debug, Clone, Serialize)]
pub struct CodebookReport {
    pub cosine: CosineStats,
    /// How many test points selected each code.
    pub usage_counts: Vec<usize>,
    pub codes_used: usize,
}

pub fn run_training(config: &ExperimentConfig, command: &'static str) -> Result<()> {
    let seeds: Vec<u64> = (0..config.replications as u64).map(|r| config.seed + r).collect();
    let mut ctx = RunContext::create(command, config.out_dir().to_path_buf(), config, seeds.clone())?;
    let mut lines = Vec::new();
    for (r, &rep_seed) in seeds.iter().enumerate() {
        match run_replication(config, r, rep_seed, &mut ctx) {
            Ok(line) => {
                eprintln!("{line}");
                lines.push(line);
            }
            Err(err) => {
                lines.push(format!("replication {r} (seed {rep_seed}): aborted"));
                let _ = ctx.finish("fail", lines, Some(err.message()));
                return Err(err);
            }
        }
    }
    for line in &lines {
        println!("{line}");
    }
    ctx.finish("pass", lines, None)
}

fn run_replication(
    config: &ExperimentConfig,
    r: usize,
    rep_seed: u64,
    ctx: &mut RunContext,
) -> Result<String> {
    let rep = format!("rep-{r:04}");
    let mixture = MixtureSpec {
        seed: derive_seed(rep_seed, "data", config.data.mixture.seed),
        ..config.data.mixture.clone()
    };
    let toy = make_toy_data(&mixture, config.data.train_per_cluster, config.data.test_per_cluster)?;
    let model_config = config.model_config()?;
    let params = config.train_params();
    let train_seed = derive_seed(rep_seed, "train", 0);
    let two_stage = config.kind.is_two_stage();

    let mut trace = ComplexityLog::default();
    let outcome: RunOutcome = {
        let pairs = config.analysis.complexity_pairs;
        let trace_rows = &mut trace.rows;
        let probe_points = &toy.test.points;
        let mut hook = |stage: usize, epoch: usize, model: &Model| -> dae_core::error::Result<()> {
            let probe_seed = derive_seed(rep_seed, "trace", (stage * 1_000_000 + epoch) as u64);
            let (c_enc, c_dec) = model_complexity(model, probe_points, pairs, probe_seed)?;
            trace_rows.push(ComplexityRow {
                stage,
                epoch,
                c_lip_encoder: c_enc,
                c_lip_decoder: c_dec,
            });
            Ok(())
        };
        let on_epoch = if config.analysis.per_epoch_complexity {
            Some(&mut hook as _)
        } else {
            None
        };
        if two_stage {
            run_dae(
                &model_config,
                &toy.train.points,
                config.training.epochs,
                config.training.batch_size,
                &config.weak_decoder(),
                &params,
                train_seed,
                on_epoch,
            )?
        } else {
            run_single_stage(
                &model_config,
                &toy.train.points,
                config.training.epochs,
                config.training.batch_size,
                &params,
                train_seed,
                on_epoch,
            )?
        }
    };

    let final_stage = if two_stage { 2 } else { 1 };
    let checkpoint = Checkpoint::from_model(&outcome.model, final_stage, train_seed);
    ctx.write_artifact(&format!("{rep}/checkpoint.json"), &checkpoint.to_json()?)?;
    if two_stage {
        ctx.write_artifact(
            &format!("{rep}/stage1_checkpoint.json"),
            &outcome.stage1_checkpoint.to_json()?,
        )?;
    }
    ctx.write_artifact(&format!("{rep}/train_log.csv"), &outcome.log.to_csv())?;
    if config.analysis.per_epoch_complexity {
        ctx.write_artifact(&format!("{rep}/complexity_trace.csv"), &trace.to_csv())?;
    }

    let report = analyze(config, &outcome.model, &toy, &outcome.log, rep_seed)?;
    ctx.write_artifact(
        &format!("{rep}/analysis.json"),
        &serde_json::to_string_pretty(&report)?,
    )?;

    Ok(format!(
        "replication {r} (seed {rep_seed}): latent {k}-nn {lat:.1}%, recon {k}-nn {rec:.1}%, C_enc {ce:.3}, C_dec {cd:.3}, final recon loss {loss:.5}",
        k = report.knn_k,
        lat = report.latent_knn_accuracy_pct,
        rec = report.recon_knn_accuracy_pct,
        ce = report.c_lip_encoder,
        cd = report.c_lip_decoder,
        loss = report.final_recon_loss.unwrap_or(f64::NAN),
    ))
}

fn analyze(
    config: &ExperimentConfig,
    model: &Model,
    toy: &ToyData,
    log: &TrainLog,
    rep_seed: u64,
) -> Result<AnalysisReport> {
    let (latent_train, recon_train) = model.eval_latents_and_reconstructions(&toy.train.points)?;
    let (latent_test, recon_test) = model.eval_latents_and_reconstructions(&toy.test.points)?;
    let k = config.analysis.knn_k;
    let latent_acc = knn_accuracy(
        &latent_train,
        &toy.train.labels,
        &latent_test,
        &toy.test.labels,
        k,
    )?;
    let recon_acc = knn_accuracy(
        &recon_train,
        &toy.train.labels,
        &recon_test,
        &toy.test.labels,
        k,
    )?;
    let (c_enc, c_dec) = model_complexity(
        model,
        &toy.test.points,
        config.analysis.complexity_pairs,
        derive_seed(rep_seed, "analysis", 0),
    )?;

    let codebook = match model.codebook_entries() {
        Some(entries) => {
            let usage = code_usage_counts(&entries, &latent_test)?;
            let codes_used = usage.iter().filter(|&&c| c > 0).count();
            Some(CodebookReport {
                cosine: codebook_cosine_stats(&entries)?,
                usage_counts: usage,
                codes_used,
            })
        }
        None => None,
    };

    Ok(AnalysisReport {
        seed: rep_seed,
        final_recon_loss: log.last_recon(),
        knn_k: k,
        latent_knn_accuracy_pct: latent_acc * 100.0,
        recon_knn_accuracy_pct: recon_acc * 100.0,
        c_lip_encoder: c_enc,
        c_lip_decoder: c_dec,
        complexity_deviation: (c_enc - 1.0).abs() + (c_dec - 1.0).abs(),
        codebook,
    })
}
