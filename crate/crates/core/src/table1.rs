//! The headline benchmark harness: trains the four accuracy configurations
//! (two latent-probe VAEs with asymmetric widths, a single-stage baseline,
//! and the two-stage decoupled run) over paired replications, scores each
//! with 1-NN accuracy, and reports means, spreads, paired orderings, and
//! end-of-run complexity probes.
//!
//! Every replication `i` uses seed `base_seed + i` so any subset can be
//! reproduced independently; everything else derives from that seed.

use serde::{Deserialize, Serialize};

use crate::analysis::{knn_accuracy, model_complexity, DEFAULT_COMPLEXITY_PAIRS};
use crate::data::{make_toy_data, MixtureSpec, ToyData};
use crate::error::{CoreError, Result};
use crate::models::{Activation, Model, ModelConfig, ModelKind};
use crate::rng::derive_seed;
use crate::train::{run_dae, run_single_stage, TrainParams, WeakDecoderMode};

/// Latent-accuracy probe with the narrow encoder / wide decoder.
pub const ROW_LATENT_SMALL_ENCODER: &str = "vae_64_128_latent";
/// Latent-accuracy probe with the wide encoder / narrow decoder.
pub const ROW_LATENT_LARGE_ENCODER: &str = "vae_128_64_latent";
/// Reconstruction accuracy of the single-stage symmetric baseline.
pub const ROW_RECON_BASELINE: &str = "vae_128_128_recon";
/// Reconstruction accuracy of the two-stage run with a halved-width
/// auxiliary decoder (the headline decoupled configuration).
pub const ROW_RECON_DAE_HALVED: &str = "dae_halved_128_128_recon";
/// Reconstruction accuracy of the two-stage run with a dropout-regularized
/// auxiliary decoder, reported alongside the halved-width variant.
pub const ROW_RECON_DAE_DROPOUT: &str = "dae_dropout_128_128_recon";

/// Reference means and standard deviations for the four headline rows.
/// Fresh runs are soft-compared against these within ±10 accuracy points and
/// the deltas are reported, never asserted; only the two directional
/// orderings are hard requirements.
pub const REFERENCE_ROWS: [(&str, f64, f64); 4] = [
    (ROW_LATENT_SMALL_ENCODER, 80.6, 7.0),
    (ROW_LATENT_LARGE_ENCODER, 87.8, 5.8),
    (ROW_RECON_BASELINE, 92.2, 6.1),
    (ROW_RECON_DAE_HALVED, 98.0, 1.3),
];

/// Half-width of the soft comparison band around the reference means.
pub const SOFT_BAND_POINTS: f64 = 10.0;

/// Everything the harness needs; `Default` is the calibrated desk-scale
/// recipe that keeps the full ten-replication run under half an hour on one
/// core.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Table1Config {
    /// Cluster mixture the datasets are drawn from. Each replication draws
    /// a fresh train/test split with a seed derived from its own seed.
    pub mixture: MixtureSpec,
    pub train_per_cluster: usize,
    pub test_per_cluster: usize,
    /// Total epochs per configuration; two-stage runs split them evenly.
    pub total_epochs: usize,
    pub batch_size: usize,
    pub replications: usize,
    pub base_seed: u64,
    pub learning_rate: f64,
    pub kl_weight: f64,
    pub activation: Activation,
    pub latent_dim: usize,
    /// Keep probability complement for the dropout-weakened variant.
    pub dropout_p: f64,
    pub complexity_pairs: usize,
}

impl Default for Table1Config {
    fn default() -> Self {
        Table1Config {
            mixture: MixtureSpec {
                // Tighter clusters than the generator's default: at the
                // default spread the clusters overlap so heavily that a
                // 1-NN reading caps near 43% and no architecture choice can
                // differentiate, so the benchmark runs where the orderings
                // are observable.
                variance: 0.03,
                ..MixtureSpec::default()
            },
            train_per_cluster: 1000,
            test_per_cluster: 200,
            total_epochs: 60,
            batch_size: 128,
            replications: 10,
            base_seed: 0,
            learning_rate: 1e-3,
            kl_weight: 1.0,
            activation: Activation::Relu,
            latent_dim: 2,
            dropout_p: 0.5,
            complexity_pairs: DEFAULT_COMPLEXITY_PAIRS,
        }
    }
}

impl Table1Config {
    pub fn validate(&self) -> Result<()> {
        self.mixture.validate()?;
        if self.replications < 2 {
            return Err(CoreError::Config(format!(
                "table1.replications must be at least 2, got {}",
                self.replications
            )));
        }
        if self.total_epochs < 2 || self.total_epochs % 2 != 0 {
            return Err(CoreError::Config(format!(
                "table1.total_epochs must be even and at least 2 so both stages train, got {}",
                self.total_epochs
            )));
        }
        if self.batch_size == 0 {
            return Err(CoreError::Config("table1.batch_size must be positive".into()));
        }
        if self.train_per_cluster == 0 || self.test_per_cluster == 0 {
            return Err(CoreError::Config(
                "table1.train_per_cluster and table1.test_per_cluster must be positive".into(),
            ));
        }
        if self.latent_dim == 0 {
            return Err(CoreError::Config("table1.latent_dim must be positive".into()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(CoreError::Config(format!(
                "table1.learning_rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        if !self.kl_weight.is_finite() || self.kl_weight < 0.0 {
            return Err(CoreError::Config(format!(
                "table1.kl_weight must be non-negative and finite, got {}",
                self.kl_weight
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(CoreError::Config(format!(
                "table1.dropout_p must lie in [0, 1), got {}",
                self.dropout_p
            )));
        }
        if self.complexity_pairs == 0 {
            return Err(CoreError::Config("table1.complexity_pairs must be positive".into()));
        }
        Ok(())
    }

    fn train_params(&self) -> TrainParams {
        TrainParams {
            learning_rate: self.learning_rate,
            kl_weight: self.kl_weight,
            ..TrainParams::default()
        }
    }

    fn vae_config(&self, encoder_width: usize, decoder_width: usize) -> ModelConfig {
        let d = self.mixture.ambient_dim;
        ModelConfig {
            kind: ModelKind::Vae,
            encoder_dims: vec![d, encoder_width, encoder_width, self.latent_dim],
            decoder_dims: vec![self.latent_dim, decoder_width, decoder_width, d],
            activation: self.activation,
            codebook_size: None,
        }
    }
}

/// One scored configuration: per-replication accuracies plus summary
/// statistics. The spread column is the sample standard deviation over
/// replications, labeled as such to leave no room for a variance reading.
#[derive(Debug, Clone, Serialize)]
pub struct Table1Row {
    pub name: String,
    /// 1-NN accuracy in percent, one entry per replication.
    pub accuracies: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation (n−1 denominator) of `accuracies`.
    pub std_dev: f64,
    pub reference_mean: Option<f64>,
    pub reference_std_dev: Option<f64>,
    /// `mean − reference_mean` when a reference exists.
    pub reference_delta: Option<f64>,
    /// Whether the mean lies within the ±10-point soft band; reported, not
    /// asserted.
    pub within_soft_band: Option<bool>,
}

/// Full harness output. Orderings are counted pairwise per seed so callers
/// can assert majorities without re-deriving them.
#[derive(Debug, Clone, Serialize)]
pub struct Table1Result {
    pub config: Table1Config,
    /// Replication seeds, literally `base_seed + i`.
    pub seeds: Vec<u64>,
    pub rows: Vec<Table1Row>,
    /// Seeds where the wide-encoder latent accuracy beat the narrow one.
    pub latent_ordering_wins: usize,
    /// Seeds where the halved-width two-stage run beat the baseline.
    pub dae_halved_wins: usize,
    /// Seeds where the dropout two-stage run beat the baseline.
    pub dae_dropout_wins: usize,
    /// Per-seed |C_enc − 1| + |C_dec − 1| for the baseline model.
    pub complexity_deviation_base: Vec<f64>,
    /// Per-seed |C_enc − 1| + |C_dec − 1| for the halved-width two-stage model.
    pub complexity_deviation_dae: Vec<f64>,
    /// Seeds where the two-stage model's complexity deviation was smaller.
    pub complexity_dae_wins: usize,
}

impl Table1Result {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn row(&self, name: &str) -> Option<&Table1Row> {
        self.rows.iter().find(|r| r.name == name)
    }

    /// Human-readable summary, one line per row plus the ordering tallies.
    pub fn summary_lines(&self) -> Vec<String> {
        let n = self.seeds.len();
        let mut lines: Vec<String> = self
            .rows
            .iter()
            .map(|row| {
                let reference = match (row.reference_mean, row.reference_delta, row.within_soft_band) {
                    (Some(m), Some(d), Some(ok)) => format!(
                        "  reference {m:.1}, delta {d:+.1} ({})",
                        if ok { "within +/-10" } else { "outside +/-10" }
                    ),
                    _ => String::new(),
                };
                format!(
                    "{name}: mean {mean:.1}% (std {sd:.1}) over {n} replications{reference}",
                    name = row.name,
                    mean = row.mean,
                    sd = row.std_dev,
                )
            })
            .collect();
        lines.push(format!(
            "latent ordering (wide encoder > narrow encoder): {}/{n} seeds",
            self.latent_ordering_wins
        ));
        lines.push(format!(
            "two-stage halved vs baseline reconstruction: {}/{n} seeds",
            self.dae_halved_wins
        ));
        lines.push(format!(
            "two-stage dropout vs baseline reconstruction: {}/{n} seeds",
            self.dae_dropout_wins
        ));
        lines.push(format!(
            "complexity deviation (two-stage below baseline): {}/{n} seeds",
            self.complexity_dae_wins
        ));
        lines
    }
}

fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std_dev = if values.len() > 1 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std_dev)
}

fn latent_and_recon_accuracy(model: &Model, data: &ToyData) -> Result<(f64, f64)> {
    let (latent_train, recon_train) = model.eval_latents_and_reconstructions(&data.train.points)?;
    let (latent_test, recon_test) = model.eval_latents_and_reconstructions(&data.test.points)?;
    let latent = knn_accuracy(&latent_train, &data.train.labels, &latent_test, &data.test.labels, 1)?;
    let recon = knn_accuracy(&recon_train, &data.train.labels, &recon_test, &data.test.labels, 1)?;
    Ok((latent * 100.0, recon * 100.0))
}

struct RepScores {
    latent_small: f64,
    latent_large: f64,
    recon_base: f64,
    recon_dae_halved: f64,
    recon_dae_dropout: f64,
    complexity_base: f64,
    complexity_dae: f64,
}

fn run_replication(config: &Table1Config, rep_seed: u64) -> Result<RepScores> {
    let mut mixture = config.mixture.clone();
    mixture.seed = derive_seed(rep_seed, "table1-data", 0);
    let data = make_toy_data(&mixture, config.train_per_cluster, config.test_per_cluster)?;
    let params = config.train_params();
    let points = &data.train.points;
    let epochs = config.total_epochs;
    let batch = config.batch_size;

    let small = run_single_stage(
        &config.vae_config(64, 128),
        points,
        epochs,
        batch,
        &params,
        derive_seed(rep_seed, "table1-model", 0),
        None,
    )?;
    let (latent_small, _) = latent_and_recon_accuracy(&small.model, &data)?;

    let large = run_single_stage(
        &config.vae_config(128, 64),
        points,
        epochs,
        batch,
        &params,
        derive_seed(rep_seed, "table1-model", 1),
        None,
    )?;
    let (latent_large, _) = latent_and_recon_accuracy(&large.model, &data)?;

    let symmetric = config.vae_config(128, 128);
    let base = run_single_stage(
        &symmetric,
        points,
        epochs,
        batch,
        &params,
        derive_seed(rep_seed, "table1-model", 2),
        None,
    )?;
    let (_, recon_base) = latent_and_recon_accuracy(&base.model, &data)?;

    let dae_halved = run_dae(
        &symmetric,
        points,
        epochs,
        batch,
        &WeakDecoderMode::HalvedWidth,
        &params,
        derive_seed(rep_seed, "table1-model", 3),
        None,
    )?;
    let (_, recon_dae_halved) = latent_and_recon_accuracy(&dae_halved.model, &data)?;

    let dae_dropout = run_dae(
        &symmetric,
        points,
        epochs,
        batch,
        &WeakDecoderMode::Dropout { p: config.dropout_p },
        &params,
        derive_seed(rep_seed, "table1-model", 4),
        None,
    )?;
    let (_, recon_dae_dropout) = latent_and_recon_accuracy(&dae_dropout.model, &data)?;

    let probe_seed = derive_seed(rep_seed, "table1-complexity", 0);
    let (enc_b, dec_b) = model_complexity(&base.model, &data.test.points, config.complexity_pairs, probe_seed)?;
    let (enc_d, dec_d) =
        model_complexity(&dae_halved.model, &data.test.points, config.complexity_pairs, probe_seed)?;

    Ok(RepScores {
        latent_small,
        latent_large,
        recon_base,
        recon_dae_halved,
        recon_dae_dropout,
        complexity_base: (enc_b - 1.0).abs() + (dec_b - 1.0).abs(),
        complexity_dae: (enc_d - 1.0).abs() + (dec_d - 1.0).abs(),
    })
}

fn build_row(name: &str, accuracies: Vec<f64>) -> Table1Row {
    let (mean, std_dev) = mean_and_std(&accuracies);
    let reference = REFERENCE_ROWS.iter().find(|(n, _, _)| *n == name);
    Table1Row {
        name: name.to_string(),
        accuracies,
        mean,
        std_dev,
        reference_mean: reference.map(|(_, m, _)| *m),
        reference_std_dev: reference.map(|(_, _, s)| *s),
        reference_delta: reference.map(|(_, m, _)| mean - m),
        within_soft_band: reference.map(|(_, m, _)| (mean - m).abs() <= SOFT_BAND_POINTS),
    }
}

/// Runs the full benchmark. `progress`, when given, is called with the
/// replication index (0-based) and a row name as each configuration
/// finishes, so long runs can narrate themselves.
pub fn run_table1(
    config: &Table1Config,
    mut progress: Option<&mut (dyn FnMut(usize, &str) + '_)>,
) -> Result<Table1Result> {
    config.validate()?;
    let seeds: Vec<u64> = (0..config.replications)
        .map(|i| config.base_seed + i as u64)
        .collect();

    let mut latent_small = Vec::new();
    let mut latent_large = Vec::new();
    let mut recon_base = Vec::new();
    let mut recon_dae_halved = Vec::new();
    let mut recon_dae_dropout = Vec::new();
    let mut complexity_base = Vec::new();
    let mut complexity_dae = Vec::new();

    for (i, &rep_seed) in seeds.iter().enumerate() {
        let scores = run_replication(config, rep_seed)?;
        latent_small.push(scores.latent_small);
        latent_large.push(scores.latent_large);
        recon_base.push(scores.recon_base);
        recon_dae_halved.push(scores.recon_dae_halved);
        recon_dae_dropout.push(scores.recon_dae_dropout);
        complexity_base.push(scores.complexity_base);
        complexity_dae.push(scores.complexity_dae);
        if let Some(cb) = progress.as_deref_mut() {
            cb(i, "replication complete");
        }
    }

    let count_wins = |a: &[f64], b: &[f64]| a.iter().zip(b).filter(|(x, y)| x > y).count();
    let latent_ordering_wins = count_wins(&latent_large, &latent_small);
    let dae_halved_wins = count_wins(&recon_dae_halved, &recon_base);
    let dae_dropout_wins = count_wins(&recon_dae_dropout, &recon_base);
    let complexity_dae_wins = complexity_dae
        .iter()
        .zip(&complexity_base)
        .filter(|(d, b)| d < b)
        .count();

    Ok(Table1Result {
        config: config.clone(),
        seeds,
        rows: vec![
            build_row(ROW_LATENT_SMALL_ENCODER, latent_small),
            build_row(ROW_LATENT_LARGE_ENCODER, latent_large),
            build_row(ROW_RECON_BASELINE, recon_base),
            build_row(ROW_RECON_DAE_HALVED, recon_dae_halved),
            build_row(ROW_RECON_DAE_DROPOUT, recon_dae_dropout),
        ],
        latent_ordering_wins,
        dae_halved_wins,
        dae_dropout_wins,
        complexity_deviation_base: complexity_base,
        complexity_deviation_dae: complexity_dae,
        complexity_dae_wins,
    })
}
