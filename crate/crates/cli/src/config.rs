//! Experiment configuration: a strict JSON schema with defaults for every
//! field except `kind`. Unknown fields, type mismatches, and inconsistent
//! combinations are configuration errors that name the offending field.

use crate::error::{CliError, Result};
use dae_core::data::MixtureSpec;
use dae_core::models::{Activation, ModelConfig, ModelKind};
use dae_core::table1::Table1Config;
use dae_core::train::{TrainParams, WeakDecoderMode};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// What a run does. Training kinds pair an autoencoder family with a
/// schedule: `baseline_*` train every parameter for the whole budget, while
/// `dae_*` train a weakened decoder first and then retrain a full decoder
/// against the frozen encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    BaselineAe,
    BaselineVae,
    VqAe,
    DaeAe,
    DaeVae,
    DaeVq,
    Table1,
    Oracles,
    Diagnose,
}

impl ExperimentKind {
    pub fn label(self) -> &'static str {
        match self {
            ExperimentKind::BaselineAe => "baseline_ae",
            ExperimentKind::BaselineVae => "baseline_vae",
            ExperimentKind::VqAe => "vq_ae",
            ExperimentKind::DaeAe => "dae_ae",
            ExperimentKind::DaeVae => "dae_vae",
            ExperimentKind::DaeVq => "dae_vq",
            ExperimentKind::Table1 => "table1",
            ExperimentKind::Oracles => "oracles",
            ExperimentKind::Diagnose => "diagnose",
        }
    }

    /// The autoencoder family a training kind uses; `None` for tool kinds.
    pub fn model_kind(self) -> Option<ModelKind> {
        match self {
            ExperimentKind::BaselineAe | ExperimentKind::DaeAe => Some(ModelKind::Ae),
            ExperimentKind::BaselineVae | ExperimentKind::DaeVae => Some(ModelKind::Vae),
            ExperimentKind::VqAe | ExperimentKind::DaeVq => Some(ModelKind::VqAe),
            _ => None,
        }
    }

    pub fn is_two_stage(self) -> bool {
        matches!(
            self,
            ExperimentKind::DaeAe | ExperimentKind::DaeVae | ExperimentKind::DaeVq
        )
    }

    pub fn is_training(self) -> bool {
        self.model_kind().is_some()
    }
}

/// Dataset recipe: the cluster mixture plus per-cluster sample counts for
/// the train/test split. Each replication derives its own data seed, so
/// `mixture.seed` acts as an extra offset shared by all replications.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub mixture: MixtureSpec,
    pub train_per_cluster: usize,
    pub test_per_cluster: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            mixture: MixtureSpec::default(),
            train_per_cluster: 1000,
            test_per_cluster: 200,
        }
    }
}

fn default_activation() -> Activation {
    Activation::Relu
}

/// Network shape. Omitted dims are derived: the encoder defaults to two
/// hidden layers of 128 ending in a 2-d latent, the decoder mirrors the
/// encoder, and quantized kinds default to a 64-entry codebook.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub encoder_dims: Option<Vec<usize>>,
    pub decoder_dims: Option<Vec<usize>>,
    pub activation: Activation,
    pub codebook_size: Option<usize>,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            encoder_dims: None,
            decoder_dims: None,
            activation: default_activation(),
            codebook_size: None,
        }
    }
}

/// Optimization schedule and loss weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    /// Total epochs; two-stage kinds split them evenly across the stages.
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub kl_weight: f64,
    pub commitment_weight: f64,
    /// First-stage decoder weakening. Omitted, it defaults by kind:
    /// `halved_width` for two-stage kinds, `none` for baselines.
    pub weak_decoder: Option<WeakDecoderMode>,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let params = TrainParams::default();
        TrainingSection {
            epochs: 200,
            batch_size: 128,
            learning_rate: params.learning_rate,
            kl_weight: params.kl_weight,
            commitment_weight: params.commitment_weight,
            weak_decoder: None,
        }
    }
}

/// Post-training measurement settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    /// Sampled pairs per Lipschitz-complexity estimate.
    pub complexity_pairs: usize,
    /// Neighbor count for the classification readout.
    pub knn_k: usize,
    /// Record encoder/decoder complexity after every epoch into a CSV trace.
    pub per_epoch_complexity: bool,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        AnalysisSection {
            complexity_pairs: dae_core::analysis::DEFAULT_COMPLEXITY_PAIRS,
            knn_k: 1,
            per_epoch_complexity: false,
        }
    }
}

fn default_replications() -> usize {
    1
}

/// Root configuration. `kind` is the only required field; everything else
/// has a documented default, so `{"kind": "baseline_ae"}` is a complete
/// experiment. Command-line flags override `seed`, `out_dir`, and
/// `replications` after the file is read.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    /// Benchmark settings, used only by `kind = "table1"`. Seeds and
    /// replication counts for the benchmark live here (`base_seed`,
    /// `replications`), not at the top level.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table1: Option<Table1Config>,
}

/// Values from command-line flags that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub replications: Option<usize>,
}

pub fn load(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))
}

fn config_err(msg: String) -> CliError {
    CliError::Config(msg)
}

impl ExperimentConfig {
    pub fn default_for(kind: ExperimentKind) -> Self {
        ExperimentConfig {
            kind,
            seed: 0,
            replications: default_replications(),
            out_dir: None,
            data: DataSection::default(),
            model: ModelSection::default(),
            training: TrainingSection::default(),
            analysis: AnalysisSection::default(),
            table1: None,
        }
    }

    /// Applies flag overrides, fills derived defaults (dims, weakening,
    /// output directory), and validates everything that can fail before a
    /// run starts. `allowed` are the kinds the invoking subcommand accepts.
    pub fn finalize(
        &mut self,
        subcommand: &'static str,
        allowed: &[ExperimentKind],
        overrides: &Overrides,
    ) -> Result<()> {
        if !allowed.contains(&self.kind) {
            let expect: Vec<&str> = allowed.iter().map(|k| k.label()).collect();
            return Err(config_err(format!(
                "kind \"{}\" does not belong to the `{subcommand}` subcommand (expected one of: {})",
                self.kind.label(),
                expect.join(", ")
            )));
        }
        if let Some(seed) = overrides.seed {
            self.seed = seed;
        }
        if let Some(dir) = &overrides.out_dir {
            self.out_dir = Some(dir.clone());
        }
        if let Some(reps) = overrides.replications {
            self.replications = reps;
        }
        if self.out_dir.is_none() {
            self.out_dir = Some(PathBuf::from(format!("dae-lab-runs/{}", self.kind.label())));
        }

        match self.kind {
            k if k.is_training() => self.finalize_training(),
            ExperimentKind::Table1 => self.finalize_table1(overrides),
            _ => self.finalize_tool(),
        }
    }

    fn finalize_training(&mut self) -> Result<()> {
        if self.table1.is_some() {
            return Err(config_err(format!(
                "table1 settings are only valid for kind \"table1\", not \"{}\"",
                self.kind.label()
            )));
        }
        if self.replications == 0 {
            return Err(config_err("replications must be at least 1".into()));
        }
        self.data.mixture.validate()?;
        if self.data.train_per_cluster == 0 {
            return Err(config_err("data.train_per_cluster must be positive".into()));
        }
        let test_total = self.data.test_per_cluster * self.data.mixture.num_clusters;
        if test_total < 2 {
            return Err(config_err(format!(
                "data.test_per_cluster must give at least two test points for the pairwise complexity estimate, got {} total",
                test_total
            )));
        }

        // Fill derived model dims, then validate the assembled shape.
        let ambient = self.data.mixture.ambient_dim;
        if self.model.encoder_dims.is_none() {
            self.model.encoder_dims = Some(vec![ambient, 128, 128, 2]);
        }
        if self.model.decoder_dims.is_none() {
            let mut dims = self.model.encoder_dims.clone().unwrap();
            dims.reverse();
            self.model.decoder_dims = Some(dims);
        }
        if self.kind.model_kind() == Some(ModelKind::VqAe) && self.model.codebook_size.is_none() {
            self.model.codebook_size = Some(64);
        }
        let model_config = self.model_config()?;
        model_config.validate()?;
        if model_config.input_dim() != ambient {
            return Err(config_err(format!(
                "model.encoder_dims starts at {} but data.mixture.ambient_dim is {ambient}; the encoder must read full-width points",
                model_config.input_dim()
            )));
        }
        let recon_dim = *model_config.decoder_dims.last().unwrap();
        if recon_dim != ambient {
            return Err(config_err(format!(
                "model.decoder_dims ends at {recon_dim} but data.mixture.ambient_dim is {ambient}; the decoder must emit full-width reconstructions"
            )));
        }

        // Schedule and loss weights.
        self.train_params().validate()?;
        if self.training.batch_size == 0 {
            return Err(config_err("training.batch_size must be positive".into()));
        }
        if self.kind.is_two_stage() {
            if self.training.epochs < 2 || self.training.epochs % 2 != 0 {
                return Err(config_err(format!(
                    "training.epochs must be even and at least 2 so both stages train, got {}",
                    self.training.epochs
                )));
            }
        } else if self.training.epochs == 0 {
            return Err(config_err("training.epochs must be at least 1".into()));
        }

        // Stage-one weakening must match the kind.
        let weak = self.training.weak_decoder.unwrap_or(if self.kind.is_two_stage() {
            WeakDecoderMode::HalvedWidth
        } else {
            WeakDecoderMode::None
        });
        weak.validate()?;
        match (self.kind.is_two_stage(), weak) {
            (true, WeakDecoderMode::None) => {
                return Err(config_err(format!(
                    "training.weak_decoder is \"none\" but kind \"{}\" is two-stage; choose \"halved_width\" or {{\"dropout\": {{\"p\": ...}}}}",
                    self.kind.label()
                )))
            }
            (false, mode) if mode != WeakDecoderMode::None => {
                return Err(config_err(format!(
                    "training.weak_decoder only applies to two-stage kinds; kind \"{}\" trains single-stage (remove the field or use a dae_* kind)",
                    self.kind.label()
                )))
            }
            _ => {}
        }
        self.training.weak_decoder = Some(weak);

        // Measurement settings.
        if self.analysis.complexity_pairs == 0 {
            return Err(config_err("analysis.complexity_pairs must be positive".into()));
        }
        let train_total = self.data.train_per_cluster * self.data.mixture.num_clusters;
        if self.analysis.knn_k == 0 || self.analysis.knn_k > train_total {
            return Err(config_err(format!(
                "analysis.knn_k must be between 1 and the train set size ({train_total}), got {}",
                self.analysis.knn_k
            )));
        }
        Ok(())
    }

    fn finalize_table1(&mut self, overrides: &Overrides) -> Result<()> {
        if self.seed != 0 || self.replications != default_replications() {
            return Err(config_err(
                "for kind \"table1\" set table1.base_seed and table1.replications (or pass --seed / --replications); the top-level fields are for training runs".into(),
            ));
        }
        let t1 = self.table1.get_or_insert_with(Table1Config::default);
        if let Some(seed) = overrides.seed {
            t1.base_seed = seed;
        }
        if let Some(reps) = overrides.replications {
            t1.replications = reps;
        }
        t1.validate()?;
        Ok(())
    }

    fn finalize_tool(&mut self) -> Result<()> {
        if self.replications != 1 {
            return Err(config_err(format!(
                "replications apply to training runs; kind \"{}\" runs once",
                self.kind.label()
            )));
        }
        if self.table1.is_some() {
            return Err(config_err(format!(
                "table1 settings are only valid for kind \"table1\", not \"{}\"",
                self.kind.label()
            )));
        }
        Ok(())
    }

    /// The assembled network shape. Only meaningful after `finalize` for
    /// training kinds (derived dims are filled in there).
    pub fn model_config(&self) -> Result<ModelConfig> {
        let kind = self.kind.model_kind().ok_or_else(|| {
            config_err(format!("kind \"{}\" does not train a model", self.kind.label()))
        })?;
        Ok(ModelConfig {
            kind,
            encoder_dims: self.model.encoder_dims.clone().unwrap_or_default(),
            decoder_dims: self.model.decoder_dims.clone().unwrap_or_default(),
            activation: self.model.activation,
            codebook_size: self.model.codebook_size,
        })
    }

    pub fn train_params(&self) -> TrainParams {
        TrainParams {
            learning_rate: self.training.learning_rate,
            kl_weight: self.training.kl_weight,
            commitment_weight: self.training.commitment_weight,
        }
    }

    /// Resolved weakening mode; `finalize` guarantees it is present.
    pub fn weak_decoder(&self) -> WeakDecoderMode {
        self.training.weak_decoder.unwrap_or(WeakDecoderMode::None)
    }

    pub fn out_dir(&self) -> &Path {
        self.out_dir
            .as_deref()
            .expect("finalize fills the output directory")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn finalized(json: &str, subcommand: &'static str, allowed: &[ExperimentKind]) -> Result<ExperimentConfig> {
        let mut cfg: ExperimentConfig =
            serde_json::from_str(json).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.finalize(subcommand, allowed, &Overrides::default())?;
        Ok(cfg)
    }

    const TRAIN_KINDS: &[ExperimentKind] = &[
        ExperimentKind::BaselineAe,
        ExperimentKind::BaselineVae,
        ExperimentKind::VqAe,
    ];
    const DAE_KINDS: &[ExperimentKind] = &[
        ExperimentKind::DaeAe,
        ExperimentKind::DaeVae,
        ExperimentKind::DaeVq,
    ];

    #[test]
    fn minimal_config_fills_every_default() {
        let cfg = finalized(r#"{"kind": "baseline_ae"}"#, "train", TRAIN_KINDS).unwrap();
        assert_eq!(cfg.model.encoder_dims.as_deref(), Some(&[10, 128, 128, 2][..]));
        assert_eq!(cfg.model.decoder_dims.as_deref(), Some(&[2, 128, 128, 10][..]));
        assert_eq!(cfg.weak_decoder(), WeakDecoderMode::None);
        assert_eq!(cfg.training.epochs, 200);
        assert!(cfg.out_dir().ends_with("baseline_ae"));
        let model = cfg.model_config().unwrap();
        assert_eq!(model.kind, ModelKind::Ae);
    }

    #[test]
    fn two_stage_kinds_default_to_halved_width() {
        let cfg = finalized(r#"{"kind": "dae_vae"}"#, "dae", DAE_KINDS).unwrap();
        assert_eq!(cfg.weak_decoder(), WeakDecoderMode::HalvedWidth);
    }

    #[test]
    fn quantized_kinds_get_a_default_codebook() {
        let cfg = finalized(r#"{"kind": "vq_ae"}"#, "train", TRAIN_KINDS).unwrap();
        assert_eq!(cfg.model.codebook_size, Some(64));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err = finalized(r#"{"kind": "baseline_ae", "typo_field": 1}"#, "train", TRAIN_KINDS)
            .unwrap_err();
        assert!(err.message().contains("typo_field"), "{}", err.message());
    }

    #[test]
    fn dim_mismatch_names_both_fields() {
        let err = finalized(
            r#"{"kind": "baseline_ae", "model": {"encoder_dims": [10, 16, 3], "decoder_dims": [2, 16, 10]}}"#,
            "train",
            TRAIN_KINDS,
        )
        .unwrap_err();
        let msg = err.message();
        assert!(msg.contains("encoder_dims") && msg.contains("decoder_dims"), "{msg}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn ambient_width_mismatches_name_both_fields() {
        let err = finalized(
            r#"{"kind": "baseline_ae", "model": {"encoder_dims": [8, 16, 2]}}"#,
            "train",
            TRAIN_KINDS,
        )
        .unwrap_err();
        let msg = err.message();
        assert!(msg.contains("model.encoder_dims") && msg.contains("ambient_dim"), "{msg}");
    }

    #[test]
    fn weakening_and_kind_must_agree() {
        let err = finalized(
            r#"{"kind": "dae_ae", "training": {"weak_decoder": "none"}}"#,
            "dae",
            DAE_KINDS,
        )
        .unwrap_err();
        assert!(err.message().contains("two-stage"), "{}", err.message());

        let err = finalized(
            r#"{"kind": "baseline_ae", "training": {"weak_decoder": "halved_width"}}"#,
            "train",
            TRAIN_KINDS,
        )
        .unwrap_err();
        assert!(err.message().contains("single-stage"), "{}", err.message());
    }

    #[test]
    fn subcommand_and_kind_must_agree() {
        let err = finalized(r#"{"kind": "table1"}"#, "train", TRAIN_KINDS).unwrap_err();
        assert!(err.message().contains("subcommand"), "{}", err.message());
    }

    #[test]
    fn table1_seed_lives_in_its_own_section() {
        let err = finalized(r#"{"kind": "table1", "seed": 7}"#, "table1", &[ExperimentKind::Table1])
            .unwrap_err();
        assert!(err.message().contains("table1.base_seed"), "{}", err.message());

        let cfg = finalized(
            r#"{"kind": "table1", "table1": {"replications": 3, "base_seed": 5}}"#,
            "table1",
            &[ExperimentKind::Table1],
        )
        .unwrap();
        let t1 = cfg.table1.unwrap();
        assert_eq!((t1.base_seed, t1.replications), (5, 3));
    }

    #[test]
    fn flag_overrides_beat_the_file() {
        let mut cfg = ExperimentConfig::default_for(ExperimentKind::BaselineVae);
        cfg.finalize(
            "train",
            TRAIN_KINDS,
            &Overrides {
                seed: Some(9),
                out_dir: Some(PathBuf::from("elsewhere")),
                replications: Some(4),
            },
        )
        .unwrap();
        assert_eq!((cfg.seed, cfg.replications), (9, 4));
        assert_eq!(cfg.out_dir(), Path::new("elsewhere"));
    }

    #[test]
    fn two_stage_epochs_must_split_evenly() {
        let err = finalized(
            r#"{"kind": "dae_vae", "training": {"epochs": 7}}"#,
            "dae",
            DAE_KINDS,
        )
        .unwrap_err();
        assert!(err.message().contains("training.epochs"), "{}", err.message());
    }
}
