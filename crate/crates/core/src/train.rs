//! Minibatch training with Adam, stage schedules with frozen parameter
//! groups, weak auxiliary decoders, and the two-stage scheme: stage one
//! trains the encoder against a deliberately weak decoder, stage two freezes
//! the encoder and trains the full decoder.

use crate::checkpoint::Checkpoint;
use crate::error::{CoreError, Result};
use crate::linalg::Matrix;
use crate::models::{
    kl_divergence, reconstruction_loss, reparameterize, vq_loss, vq_quantize_on_tape, DropoutMode,
    Model, ModelConfig, ModelKind, ParamGroup,
};
use crate::rng::{derive_seed, stream};
use crate::tensor::{AdamState, Tape};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// How the decoder is weakened during the first training stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeakDecoderMode {
    /// Ordinary decoder, no weakening.
    None,
    /// Fresh auxiliary decoder with every hidden width halved (rounded up).
    HalvedWidth,
    /// Same decoder trained with inverted dropout at rate `p` after each
    /// hidden activation; kept (warm start) for the second stage.
    Dropout { p: f64 },
}

impl WeakDecoderMode {
    pub fn validate(&self) -> Result<()> {
        if let WeakDecoderMode::Dropout { p } = self {
            if !(0.0..1.0).contains(p) {
                return Err(CoreError::Config(format!(
                    "weak decoder dropout rate must be in [0, 1), got {p}"
                )));
            }
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        match self {
            WeakDecoderMode::None => "none".into(),
            WeakDecoderMode::HalvedWidth => "halved_width".into(),
            WeakDecoderMode::Dropout { p } => format!("dropout({p})"),
        }
    }
}

/// One training stage: how long, how large the batches, which parameter
/// groups stay frozen, how the decoder is weakened, and the stage-local seed
/// for shuffling, sampling noise, and dropout masks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSchedule {
    pub epochs: usize,
    pub batch_size: usize,
    pub frozen: Vec<ParamGroup>,
    pub weak_decoder: WeakDecoderMode,
    pub seed: u64,
}

/// Loss weights and the optimizer step size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainParams {
    pub learning_rate: f64,
    /// Weight on the KL term of the variational loss.
    pub kl_weight: f64,
    /// Weight on the commitment term of the quantization loss.
    pub commitment_weight: f64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            learning_rate: 1e-3,
            kl_weight: 1.0,
            commitment_weight: 0.25,
        }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("learning_rate", self.learning_rate),
            ("kl_weight", self.kl_weight),
            ("commitment_weight", self.commitment_weight),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(CoreError::Config(format!(
                    "training.{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        if self.learning_rate == 0.0 {
            return Err(CoreError::Config(
                "training.learning_rate must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One per-epoch log record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub stage: usize,
    pub epoch: usize,
    pub recon_loss: f64,
    pub reg_loss: f64,
    pub seconds: f64,
}

/// Per-epoch training history across stages.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub rows: Vec<TrainLogRow>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("stage,epoch,recon_loss,reg_loss,seconds\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.stage, r.epoch, r.recon_loss, r.reg_loss, r.seconds
            ));
        }
        out
    }

    pub fn last_recon(&self) -> Option<f64> {
        self.rows.last().map(|r| r.recon_loss)
    }

    pub fn extend(&mut self, other: TrainLog) {
        self.rows.extend(other.rows);
    }
}

/// Losses for one forward pass: the scalar training loss node plus the
/// detached reconstruction and regularizer values for logging.
struct StepLoss {
    loss: crate::tensor::NodeId,
    recon_value: f64,
    reg_value: f64,
}

fn decode_with(
    model: &Model,
    tape: &mut Tape,
    leaves: &[crate::tensor::NodeId],
    z: crate::tensor::NodeId,
    dropout: Option<f64>,
    mask_rng: &mut crate::rng::ChaCha8Rng,
) -> Result<crate::tensor::NodeId> {
    match dropout {
        Some(p) => model
            .decoder
            .forward_dropout(tape, leaves, z, Some((p, mask_rng, DropoutMode::Train))),
        None => model.decoder.forward(tape, leaves, z),
    }
}

fn forward_loss(
    model: &Model,
    tape: &mut Tape,
    leaves: &[crate::tensor::NodeId],
    batch: &Matrix,
    params: &TrainParams,
    dropout: Option<f64>,
    noise_rng: &mut crate::rng::ChaCha8Rng,
    mask_rng: &mut crate::rng::ChaCha8Rng,
) -> Result<StepLoss> {
    let x = tape.constant(batch.data.clone(), (batch.rows, batch.cols))?;
    match model.config.kind {
        ModelKind::Ae => {
            let z = model.encode_mean(tape, leaves, x)?;
            let x_hat = decode_with(model, tape, leaves, z, dropout, mask_rng)?;
            let recon = reconstruction_loss(tape, x, x_hat)?;
            Ok(StepLoss {
                loss: recon,
                recon_value: tape.scalar(recon)?,
                reg_value: 0.0,
            })
        }
        ModelKind::Vae => {
            let (mu, logvar) = model.encode_vae(tape, leaves, x)?;
            let d_z = model.latent_dim();
            let noise: Vec<f64> = (0..batch.rows * d_z)
                .map(|_| noise_rng.sample(StandardNormal))
                .collect();
            let z = reparameterize(tape, mu, logvar, &noise)?;
            let x_hat = decode_with(model, tape, leaves, z, dropout, mask_rng)?;
            let recon = reconstruction_loss(tape, x, x_hat)?;
            let kl = kl_divergence(tape, mu, logvar)?;
            let weighted_kl = tape.mul_scalar(kl, params.kl_weight)?;
            let loss = tape.add(recon, weighted_kl)?;
            Ok(StepLoss {
                loss,
                recon_value: tape.scalar(recon)?,
                reg_value: tape.scalar(kl)?,
            })
        }
        ModelKind::VqAe => {
            let codebook_leaf = leaves[model
                .codebook
                .ok_or_else(|| CoreError::contract("train", "vq model without codebook"))?];
            let z = model.encode_mean(tape, leaves, x)?;
            let (_indices, z_st, gathered) = vq_quantize_on_tape(tape, codebook_leaf, z)?;
            let x_hat = decode_with(model, tape, leaves, z_st, dropout, mask_rng)?;
            let recon = reconstruction_loss(tape, x, x_hat)?;
            let aux = vq_loss(tape, z, gathered, params.commitment_weight)?;
            let loss = tape.add(recon, aux)?;
            Ok(StepLoss {
                loss,
                recon_value: tape.scalar(recon)?,
                reg_value: tape.scalar(aux)?,
            })
        }
    }
}

/// Called after every epoch with (stage label, epoch, model-so-far); lets
/// callers record evaluation-time measurements alongside the training loop.
pub type EpochHook<'a, 'b> = &'a mut (dyn FnMut(usize, usize, &Model) -> Result<()> + 'b);

/// Trains the model in place for one stage. Minibatches are drawn by
/// shuffling the training set each epoch (the trailing partial batch is
/// kept). Frozen groups receive no gradient and no optimizer state. Returns
/// the per-epoch log rows for this stage, labeled `stage_label`.
pub fn train_stage(
    model: &mut Model,
    train_points: &Matrix,
    schedule: &StageSchedule,
    params: &TrainParams,
    stage_label: usize,
    mut on_epoch: Option<EpochHook<'_, '_>>,
) -> Result<TrainLog> {
    schedule.weak_decoder.validate()?;
    params.validate()?;
    if schedule.batch_size == 0 {
        return Err(CoreError::Config("batch_size must be positive".into()));
    }
    if train_points.rows == 0 {
        return Err(CoreError::contract("train_stage", "empty training set"));
    }
    if train_points.cols != model.input_dim() {
        return Err(CoreError::ShapeMismatch {
            op: "train_stage",
            lhs: format!("training points of dim {}", train_points.cols),
            rhs: format!("model input dim {}", model.input_dim()),
        });
    }
    let present = model.store.groups();
    if let Some(missing) = schedule.frozen.iter().find(|g| !present.contains(g)) {
        return Err(CoreError::Config(format!(
            "frozen group {missing:?} does not exist in this model (present: {present:?})"
        )));
    }
    let dropout = match schedule.weak_decoder {
        WeakDecoderMode::Dropout { p } if p > 0.0 => Some(p),
        _ => None,
    };

    let mut shuffle_rng = stream(schedule.seed, "shuffle", stage_label as u64);
    let mut noise_rng = stream(schedule.seed, "noise", stage_label as u64);
    let mut mask_rng = stream(schedule.seed, "dropout", stage_label as u64);

    // One optimizer state per trainable parameter tensor.
    let trainable: Vec<usize> = model
        .store
        .params
        .iter()
        .enumerate()
        .filter(|(_, p)| !schedule.frozen.contains(&p.group))
        .map(|(i, _)| i)
        .collect();
    let mut adam: Vec<AdamState> = trainable
        .iter()
        .map(|&i| AdamState::new(model.store.params[i].data.len(), params.learning_rate))
        .collect();

    let n = train_points.rows;
    let d = train_points.cols;
    let mut indices: Vec<usize> = (0..n).collect();
    let mut log = TrainLog::default();

    for epoch in 1..=schedule.epochs {
        let started = std::time::Instant::now();
        indices.shuffle(&mut shuffle_rng);
        let mut recon_sum = 0.0;
        let mut reg_sum = 0.0;
        let mut batches = 0usize;
        for (batch_idx, chunk) in indices.chunks(schedule.batch_size).enumerate() {
            let locate = |err| at_training_step(err, stage_label, epoch, batch_idx);
            let mut batch = Matrix::zeros(chunk.len(), d);
            for (r, &src) in chunk.iter().enumerate() {
                batch.data[r * d..(r + 1) * d]
                    .copy_from_slice(&train_points.data[src * d..(src + 1) * d]);
            }
            let mut tape = Tape::new();
            let leaves = model
                .store
                .push_to_tape(&mut tape, &schedule.frozen)
                .map_err(locate)?;
            let step = forward_loss(
                model,
                &mut tape,
                &leaves,
                &batch,
                params,
                dropout,
                &mut noise_rng,
                &mut mask_rng,
            )
            .map_err(locate)?;
            tape.backward(step.loss).map_err(locate)?;
            for (state, &pi) in adam.iter_mut().zip(&trainable) {
                let leaf = leaves[pi];
                let grad = tape
                    .grad(leaf)
                    .ok_or_else(|| CoreError::contract("train_stage", "missing gradient for trainable leaf"))?
                    .to_vec();
                state
                    .update(&mut model.store.params[pi].data, &grad)
                    .map_err(locate)?;
            }
            recon_sum += step.recon_value;
            reg_sum += step.reg_value;
            batches += 1;
        }
        log.rows.push(TrainLogRow {
            stage: stage_label,
            epoch,
            recon_loss: recon_sum / batches as f64,
            reg_loss: reg_sum / batches as f64,
            seconds: started.elapsed().as_secs_f64(),
        });
        if let Some(hook) = on_epoch.as_deref_mut() {
            hook(stage_label, epoch, model)?;
        }
    }
    Ok(log)
}

/// Stamps a numeric abort with where in the schedule it happened so the
/// failure is reproducible without re-running the whole stage.
fn at_training_step(err: CoreError, stage: usize, epoch: usize, batch_idx: usize) -> CoreError {
    match err {
        CoreError::Numeric { op, location: None } => CoreError::Numeric {
            op,
            location: Some(format!("stage {stage}, epoch {epoch}, batch {batch_idx}")),
        },
        other => other,
    }
}

/// Prepares the decoder for a weakened first stage: `HalvedWidth` swaps in a
/// fresh decoder with halved hidden widths, `Dropout` keeps the decoder
/// (masking happens during the forward pass), `None` is a no-op.
pub fn build_aux_decoder(
    model: &mut Model,
    mode: &WeakDecoderMode,
    rng: &mut crate::rng::ChaCha8Rng,
) -> Result<()> {
    mode.validate()?;
    match mode {
        WeakDecoderMode::None | WeakDecoderMode::Dropout { .. } => Ok(()),
        WeakDecoderMode::HalvedWidth => {
            let halved = crate::models::MlpConfig::new(
                model.config.decoder_dims.clone(),
                model.config.activation,
            )
            .halved_hidden()
            .layer_dims;
            model.replace_decoder(halved, rng)
        }
    }
}

/// Everything a finished run hands back: the trained model, the checkpoint
/// taken between stages (single-stage runs checkpoint at the end), and the
/// full per-epoch log.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub model: Model,
    pub stage1_checkpoint: Checkpoint,
    pub log: TrainLog,
}

/// Trains a model single-stage for `epochs` epochs.
pub fn run_single_stage(
    config: &ModelConfig,
    train_points: &Matrix,
    epochs: usize,
    batch_size: usize,
    params: &TrainParams,
    seed: u64,
    on_epoch: Option<EpochHook<'_, '_>>,
) -> Result<RunOutcome> {
    let mut init_rng = stream(seed, "init", 0);
    let mut model = Model::init(config, &mut init_rng)?;
    let schedule = StageSchedule {
        epochs,
        batch_size,
        frozen: vec![],
        weak_decoder: WeakDecoderMode::None,
        seed: derive_seed(seed, "stage", 1),
    };
    let log = train_stage(&mut model, train_points, &schedule, params, 1, on_epoch)?;
    let stage1_checkpoint = Checkpoint::from_model(&model, 1, seed);
    Ok(RunOutcome {
        model,
        stage1_checkpoint,
        log,
    })
}

/// Runs the first stage of the two-stage scheme: full model init, decoder
/// weakening, and training of all groups for `stage1_epochs`.
pub fn run_stage1(
    config: &ModelConfig,
    train_points: &Matrix,
    stage1_epochs: usize,
    batch_size: usize,
    mode: &WeakDecoderMode,
    params: &TrainParams,
    seed: u64,
    on_epoch: Option<EpochHook<'_, '_>>,
) -> Result<(Model, TrainLog)> {
    let mut init_rng = stream(seed, "init", 0);
    let mut model = Model::init(config, &mut init_rng)?;
    let mut aux_rng = stream(seed, "aux-decoder", 0);
    build_aux_decoder(&mut model, mode, &mut aux_rng)?;
    let schedule = StageSchedule {
        epochs: stage1_epochs,
        batch_size,
        frozen: vec![],
        weak_decoder: *mode,
        seed: derive_seed(seed, "stage", 1),
    };
    let log = train_stage(&mut model, train_points, &schedule, params, 1, on_epoch)?;
    Ok((model, log))
}

/// Runs the second stage from a first-stage checkpoint: freezes the encoder
/// (and the codebook, when present), restores the full decoder — fresh for
/// `HalvedWidth`, warm-started for `Dropout` — and trains it. All stage-two
/// randomness derives from the checkpoint's recorded seed, so resuming from
/// a saved checkpoint reproduces the run bit-for-bit.
pub fn run_stage2(
    stage1: &Checkpoint,
    train_points: &Matrix,
    stage2_epochs: usize,
    batch_size: usize,
    mode: &WeakDecoderMode,
    params: &TrainParams,
    full_decoder_dims: &[usize],
    on_epoch: Option<EpochHook<'_, '_>>,
) -> Result<(Model, TrainLog)> {
    let mut model = stage1.to_model()?;
    let seed = stage1.seed;
    if let WeakDecoderMode::HalvedWidth = mode {
        let mut dec_rng = stream(seed, "stage2-decoder", 0);
        model.replace_decoder(full_decoder_dims.to_vec(), &mut dec_rng)?;
    } else if model.config.decoder_dims != full_decoder_dims {
        return Err(CoreError::Config(format!(
            "stage-two decoder dims {:?} do not match checkpointed decoder {:?}",
            full_decoder_dims, model.config.decoder_dims
        )));
    }
    let mut frozen = vec![ParamGroup::Encoder];
    if model.codebook.is_some() {
        frozen.push(ParamGroup::Codebook);
    }
    let schedule = StageSchedule {
        epochs: stage2_epochs,
        batch_size,
        frozen,
        weak_decoder: WeakDecoderMode::None,
        seed: derive_seed(seed, "stage", 2),
    };
    let log = train_stage(&mut model, train_points, &schedule, params, 2, on_epoch)?;
    Ok((model, log))
}

/// The full two-stage run. `total_epochs` splits evenly across the stages.
pub fn run_dae(
    config: &ModelConfig,
    train_points: &Matrix,
    total_epochs: usize,
    batch_size: usize,
    mode: &WeakDecoderMode,
    params: &TrainParams,
    seed: u64,
    mut on_epoch: Option<EpochHook<'_, '_>>,
) -> Result<RunOutcome> {
    if total_epochs % 2 != 0 {
        return Err(CoreError::Config(format!(
            "two-stage training needs an even epoch count to split across stages, got {total_epochs}"
        )));
    }
    if matches!(mode, WeakDecoderMode::None) {
        return Err(CoreError::Config(
            "two-stage training needs a weakened first-stage decoder (halved_width or dropout)".into(),
        ));
    }
    let half = total_epochs / 2;
    let (stage1_model, mut log) = run_stage1(
        config,
        train_points,
        half,
        batch_size,
        mode,
        params,
        seed,
        on_epoch.as_deref_mut(),
    )?;
    let stage1_checkpoint = Checkpoint::from_model(&stage1_model, 1, seed);
    let (model, log2) = run_stage2(
        &stage1_checkpoint,
        train_points,
        half,
        batch_size,
        mode,
        params,
        &config.decoder_dims,
        on_epoch,
    )?;
    log.extend(log2);
    Ok(RunOutcome {
        model,
        stage1_checkpoint,
        log,
    })
}

/// Records the full training loss for one batch on a fresh tape, exactly as
/// a training step would build it, and returns the tape together with the
/// parameter leaves (in `model.store.params` order) and the loss node. All
/// stochastic draws — reparameterization noise and dropout masks — are
/// derived from `seed`, so repeated calls are bit-identical.
///
/// Combined with [`Tape::replay_forward`] this exposes the training
/// objective as a deterministic function of the parameters, which is what
/// finite-difference probing of the gradients requires: stop-gradient
/// constructions and frozen randomness live on the tape as constants, so a
/// replay evaluates precisely the function whose gradient `backward`
/// reports.
pub fn record_loss_tape(
    model: &Model,
    batch: &Matrix,
    params: &TrainParams,
    dropout: Option<f64>,
    seed: u64,
) -> Result<(Tape, Vec<crate::tensor::NodeId>, crate::tensor::NodeId)> {
    params.validate()?;
    if let Some(p) = dropout {
        (WeakDecoderMode::Dropout { p }).validate()?;
    }
    if batch.rows == 0 {
        return Err(CoreError::contract("record_loss_tape", "empty batch"));
    }
    if batch.cols != model.input_dim() {
        return Err(CoreError::ShapeMismatch {
            op: "record_loss_tape",
            lhs: format!("batch of dim {}", batch.cols),
            rhs: format!("model input dim {}", model.input_dim()),
        });
    }
    let mut noise_rng = stream(seed, "noise", 0);
    let mut mask_rng = stream(seed, "dropout", 0);
    let mut tape = Tape::new();
    let leaves = model.store.push_to_tape(&mut tape, &[])?;
    let step = forward_loss(
        model,
        &mut tape,
        &leaves,
        batch,
        params,
        dropout.filter(|&p| p > 0.0),
        &mut noise_rng,
        &mut mask_rng,
    )?;
    Ok((tape, leaves, step.loss))
}

/// Evaluates the full training loss at the model's current parameters and
/// returns it together with the gradient of every parameter tensor (in
/// `model.store.params` order). See [`record_loss_tape`] for the
/// determinism contract.
pub fn loss_and_gradients(
    model: &Model,
    batch: &Matrix,
    params: &TrainParams,
    dropout: Option<f64>,
    seed: u64,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let (mut tape, leaves, loss_node) = record_loss_tape(model, batch, params, dropout, seed)?;
    let loss = tape.scalar(loss_node)?;
    tape.backward(loss_node)?;
    let grads = leaves
        .iter()
        .zip(&model.store.params)
        .map(|(&leaf, param)| {
            tape.grad(leaf)
                .map(|g| g.to_vec())
                .unwrap_or_else(|| vec![0.0; param.data.len()])
        })
        .collect();
    Ok((loss, grads))
}

/// Max relative error between the analytic gradients of the full training
/// loss and central finite differences of the replayed tape, over every
/// parameter coordinate of the model.
///
/// The replay evaluates exactly the function whose gradient `backward`
/// reports — stochastic draws and stop-gradient values stay frozen as tape
/// constants — so the reported error measures the reverse pass itself, not
/// the estimator bias of straight-through or reparameterized terms.
pub fn gradient_probe_error(
    model: &Model,
    batch: &Matrix,
    params: &TrainParams,
    dropout: Option<f64>,
    seed: u64,
    step: f64,
) -> Result<f64> {
    let (loss, grads) = loss_and_gradients(model, batch, params, dropout, seed)?;
    let (tape, leaves, loss_node) = record_loss_tape(model, batch, params, dropout, seed)?;

    // Flatten parameters and gradients into one coordinate vector, keeping
    // per-leaf offsets so a flat probe point maps back onto the leaves.
    let mut spans = Vec::with_capacity(leaves.len());
    let mut flat = Vec::new();
    let mut flat_grad = Vec::new();
    for ((leaf, param), grad) in leaves.iter().zip(&model.store.params).zip(&grads) {
        spans.push((*leaf, flat.len(), param.data.len()));
        flat.extend_from_slice(&param.data);
        flat_grad.extend_from_slice(grad);
    }

    let f = |p: &[f64]| -> Result<f64> {
        let overrides: Vec<(usize, &[f64])> = spans
            .iter()
            .map(|&(leaf, start, len)| (leaf, &p[start..start + len]))
            .collect();
        Ok(tape.replay_forward(&overrides, loss_node)?[0])
    };
    if f(&flat)? != loss {
        return Err(CoreError::contract(
            "gradient_probe_error",
            "replaying the tape at the unperturbed parameters did not reproduce the recorded loss",
        ));
    }
    let replay_error = std::cell::RefCell::new(None);
    let rel = crate::tensor::finite_diff_check(
        |p| match f(p) {
            Ok(v) => v,
            Err(e) => {
                replay_error.borrow_mut().get_or_insert(e);
                f64::NAN
            }
        },
        &flat,
        &flat_grad,
        step,
    );
    if let Some(e) = replay_error.into_inner() {
        return Err(e);
    }
    rel
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Activation;

    fn toy_points(n: usize, d: usize, seed: u64) -> Matrix {
        let mut rng = stream(seed, "train-test-data", 0);
        Matrix {
            rows: n,
            cols: d,
            data: (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect(),
        }
    }

    fn ae_config() -> ModelConfig {
        ModelConfig {
            kind: ModelKind::Ae,
            encoder_dims: vec![4, 8, 2],
            decoder_dims: vec![2, 8, 4],
            activation: Activation::Tanh,
            codebook_size: None,
        }
    }

    fn vae_config() -> ModelConfig {
        ModelConfig {
            kind: ModelKind::Vae,
            encoder_dims: vec![4, 8, 8, 2],
            decoder_dims: vec![2, 8, 8, 4],
            activation: Activation::Tanh,
            codebook_size: None,
        }
    }

    #[test]
    fn training_reduces_reconstruction_loss() {
        // Rank-two data: a two-dimensional bottleneck can represent it
        // exactly, so the loss must fall far below its starting value.
        let mut rng = stream(1, "train-test-data", 1);
        let mut points = Matrix::zeros(64, 4);
        for i in 0..64 {
            let a: f64 = rng.random_range(-1.0..1.0);
            let b: f64 = rng.random_range(-1.0..1.0);
            points.data[i * 4..(i + 1) * 4]
                .copy_from_slice(&[a, b, 0.5 * (a + b), 0.5 * (a - b)]);
        }
        let out = run_single_stage(&ae_config(), &points, 100, 16, &TrainParams::default(), 7, None).unwrap();
        let first = out.log.rows.first().unwrap().recon_loss;
        let last = out.log.rows.last().unwrap().recon_loss;
        assert!(last < 0.25 * first, "loss did not drop: {first} → {last}");
    }

    #[test]
    fn training_is_deterministic() {
        let points = toy_points(32, 4, 2);
        let a = run_single_stage(&vae_config(), &points, 5, 8, &TrainParams::default(), 3, None).unwrap();
        let b = run_single_stage(&vae_config(), &points, 5, 8, &TrainParams::default(), 3, None).unwrap();
        for (pa, pb) in a.model.store.params.iter().zip(&b.model.store.params) {
            assert_eq!(pa.data, pb.data, "{} differs across identical runs", pa.name);
        }
        assert_eq!(a.log.to_csv().lines().count(), 6);
        // Logs match except the wall-clock column.
        for (ra, rb) in a.log.rows.iter().zip(&b.log.rows) {
            assert_eq!(ra.recon_loss.to_bits(), rb.recon_loss.to_bits());
            assert_eq!(ra.reg_loss.to_bits(), rb.reg_loss.to_bits());
        }
    }

    #[test]
    fn different_seeds_give_different_models() {
        let points = toy_points(32, 4, 2);
        let a = run_single_stage(&ae_config(), &points, 2, 8, &TrainParams::default(), 3, None).unwrap();
        let b = run_single_stage(&ae_config(), &points, 2, 8, &TrainParams::default(), 4, None).unwrap();
        assert_ne!(a.model.store.params[0].data, b.model.store.params[0].data);
    }

    #[test]
    fn frozen_groups_do_not_move() {
        let points = toy_points(32, 4, 5);
        let mut rng = stream(9, "freeze-test", 0);
        let mut model = Model::init(&ae_config(), &mut rng).unwrap();
        let enc_before = model.store.group_checksum(ParamGroup::Encoder);
        let dec_before = model.store.group_checksum(ParamGroup::Decoder);
        let schedule = StageSchedule {
            epochs: 3,
            batch_size: 8,
            frozen: vec![ParamGroup::Encoder],
            weak_decoder: WeakDecoderMode::None,
            seed: 11,
        };
        train_stage(&mut model, &points, &schedule, &TrainParams::default(), 2, None).unwrap();
        assert_eq!(model.store.group_checksum(ParamGroup::Encoder), enc_before);
        assert_ne!(model.store.group_checksum(ParamGroup::Decoder), dec_before);
    }

    #[test]
    fn freezing_a_group_the_model_lacks_is_a_config_error() {
        let points = toy_points(16, 4, 5);
        let mut rng = stream(9, "freeze-test", 1);
        let mut model = Model::init(&ae_config(), &mut rng).unwrap();
        let schedule = StageSchedule {
            epochs: 1,
            batch_size: 8,
            frozen: vec![ParamGroup::Codebook],
            weak_decoder: WeakDecoderMode::None,
            seed: 11,
        };
        let err = train_stage(&mut model, &points, &schedule, &TrainParams::default(), 1, None)
            .unwrap_err();
        assert!(
            matches!(err, CoreError::Config(_)),
            "expected a configuration error, got {err}"
        );
    }

    #[test]
    fn numeric_abort_reports_stage_epoch_and_batch() {
        let points = toy_points(32, 4, 5);
        let mut rng = stream(9, "abort-test", 0);
        let mut model = Model::init(&ae_config(), &mut rng).unwrap();
        model.store.params[0].data[0] = f64::NAN;
        let schedule = StageSchedule {
            epochs: 1,
            batch_size: 8,
            frozen: vec![],
            weak_decoder: WeakDecoderMode::None,
            seed: 11,
        };
        let err = train_stage(&mut model, &points, &schedule, &TrainParams::default(), 3, None)
            .unwrap_err();
        match err {
            CoreError::Numeric { location: Some(loc), .. } => {
                assert_eq!(loc, "stage 3, epoch 1, batch 0");
            }
            other => panic!("expected a located numeric abort, got {other}"),
        }
    }

    #[test]
    fn dae_stage2_freezes_encoder_and_log_covers_both_stages() {
        let points = toy_points(48, 4, 6);
        let out = run_dae(
            &vae_config(),
            &points,
            8,
            16,
            &WeakDecoderMode::HalvedWidth,
            &TrainParams::default(),
            13,
            None,
        )
        .unwrap();
        let stage1_store = out.stage1_checkpoint.store();
        assert_eq!(
            out.model.store.group_checksum(ParamGroup::Encoder),
            stage1_store.group_checksum(ParamGroup::Encoder),
            "stage two must not move the encoder"
        );
        let stages: Vec<usize> = out.log.rows.iter().map(|r| r.stage).collect();
        assert_eq!(stages, vec![1, 1, 1, 1, 2, 2, 2, 2]);
        let epochs: Vec<usize> = out.log.rows.iter().map(|r| r.epoch).collect();
        assert_eq!(epochs, vec![1, 2, 3, 4, 1, 2, 3, 4]);
        // Halved-width stage hands stage two a full-width decoder.
        assert_eq!(out.model.config.decoder_dims, vec![2, 8, 8, 4]);
        assert_eq!(out.stage1_checkpoint.model.decoder_dims, vec![2, 4, 4, 4]);
    }

    #[test]
    fn dae_rejects_odd_epoch_totals_and_missing_weakening() {
        let points = toy_points(16, 4, 6);
        assert!(run_dae(
            &ae_config(),
            &points,
            7,
            8,
            &WeakDecoderMode::HalvedWidth,
            &TrainParams::default(),
            1,
            None
        )
        .is_err());
        assert!(run_dae(
            &ae_config(),
            &points,
            8,
            8,
            &WeakDecoderMode::None,
            &TrainParams::default(),
            1,
            None
        )
        .is_err());
    }

    #[test]
    fn stage2_resumed_from_saved_checkpoint_is_bit_identical() {
        let points = toy_points(48, 4, 8);
        let mode = WeakDecoderMode::Dropout { p: 0.5 };
        let full = run_dae(&vae_config(), &points, 6, 16, &mode, &TrainParams::default(), 21, None).unwrap();

        // Round-trip the stage-one checkpoint through JSON, then rerun stage two.
        let json = full.stage1_checkpoint.to_json().unwrap();
        let restored = Checkpoint::from_json(&json).unwrap();
        let (resumed, _log) = run_stage2(
            &restored,
            &points,
            3,
            16,
            &mode,
            &TrainParams::default(),
            &[2, 8, 8, 4],
            None,
        )
        .unwrap();
        for (a, b) in full.model.store.params.iter().zip(&resumed.store.params) {
            assert_eq!(a.data, b.data, "{} differs after resume", a.name);
            for (x, y) in a.data.iter().zip(&b.data) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn vq_training_runs_and_moves_codebook() {
        let points = toy_points(32, 4, 9);
        let cfg = ModelConfig {
            kind: ModelKind::VqAe,
            encoder_dims: vec![4, 8, 2],
            decoder_dims: vec![2, 8, 4],
            activation: Activation::Tanh,
            codebook_size: Some(8),
        };
        let mut rng = stream(10, "vq-train-test", 0);
        let mut model = Model::init(&cfg, &mut rng).unwrap();
        let cb_before = model.store.group_checksum(ParamGroup::Codebook);
        let schedule = StageSchedule {
            epochs: 3,
            batch_size: 8,
            frozen: vec![],
            weak_decoder: WeakDecoderMode::None,
            seed: 17,
        };
        let log = train_stage(&mut model, &points, &schedule, &TrainParams::default(), 1, None).unwrap();
        assert_ne!(model.store.group_checksum(ParamGroup::Codebook), cb_before);
        assert!(log.rows.iter().all(|r| r.reg_loss >= 0.0));

        // Stage-two style freeze pins the codebook too.
        let cb_frozen = model.store.group_checksum(ParamGroup::Codebook);
        let schedule2 = StageSchedule {
            epochs: 2,
            batch_size: 8,
            frozen: vec![ParamGroup::Encoder, ParamGroup::Codebook],
            weak_decoder: WeakDecoderMode::None,
            seed: 18,
        };
        train_stage(&mut model, &points, &schedule2, &TrainParams::default(), 2, None).unwrap();
        assert_eq!(model.store.group_checksum(ParamGroup::Codebook), cb_frozen);
    }

    #[test]
    fn partial_final_batch_is_trained_on() {
        // 10 points with batch 4 → batches of 4, 4, 2; training must accept it.
        let points = toy_points(10, 4, 11);
        let out = run_single_stage(&ae_config(), &points, 2, 4, &TrainParams::default(), 5, None).unwrap();
        assert_eq!(out.log.rows.len(), 2);
        assert!(out.log.rows.iter().all(|r| r.recon_loss.is_finite()));
    }

    #[test]
    fn csv_header_and_shape_are_stable() {
        let points = toy_points(16, 4, 12);
        let out = run_single_stage(&ae_config(), &points, 3, 8, &TrainParams::default(), 2, None).unwrap();
        let csv = out.log.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "stage,epoch,recon_loss,reg_loss,seconds");
        assert_eq!(lines.count(), 3);
    }

    #[test]
    fn invalid_hyperparameters_are_rejected() {
        let bad = TrainParams {
            learning_rate: 0.0,
            ..TrainParams::default()
        };
        assert!(bad.validate().is_err());
        let nan = TrainParams {
            kl_weight: f64::NAN,
            ..TrainParams::default()
        };
        assert!(nan.validate().is_err());
    }
}
