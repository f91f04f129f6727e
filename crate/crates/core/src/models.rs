//! MLP encoder/decoder families, the variational head, the vector-quantized
//! bottleneck with a learnable codebook, and dropout masking for weakened
//! decoders. Parameters are plain `f64` arrays grouped by role so training
//! stages can freeze whole groups.

use crate::error::{CoreError, Result};
use crate::linalg::Matrix;
use crate::rng::ChaCha8Rng;
use crate::tensor::{NodeId, Tape};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
}

/// Fully connected net: alternating linear/activation layers, final layer
/// linear with identity output activation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpConfig {
    /// input → hidden(s) → output widths.
    pub layer_dims: Vec<usize>,
    pub hidden_activation: Activation,
}

impl MlpConfig {
    pub fn new(layer_dims: Vec<usize>, hidden_activation: Activation) -> Self {
        MlpConfig {
            layer_dims,
            hidden_activation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_dims.len() < 2 {
            return Err(CoreError::Config(format!(
                "layer_dims needs at least input and output widths, got {:?}",
                self.layer_dims
            )));
        }
        if self.layer_dims.iter().any(|&d| d == 0) {
            return Err(CoreError::Config(format!(
                "layer_dims must be positive, got {:?}",
                self.layer_dims
            )));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    /// Hidden widths with each entry halved, rounding up.
    pub fn halved_hidden(&self) -> MlpConfig {
        let n = self.layer_dims.len();
        let dims = self
            .layer_dims
            .iter()
            .enumerate()
            .map(|(i, &w)| if i == 0 || i == n - 1 { w } else { w.div_ceil(2) })
            .collect();
        MlpConfig {
            layer_dims: dims,
            hidden_activation: self.hidden_activation,
        }
    }
}

/// Parameter groups that training stages can freeze wholesale. The
/// variational head belongs to the encoder group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, Hash)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    Encoder,
    Decoder,
    Codebook,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub group: ParamGroup,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

/// All parameters of one model, in a stable order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    pub params: Vec<Param>,
}

impl ParamStore {
    fn add(&mut self, name: String, group: ParamGroup, rows: usize, cols: usize, data: Vec<f64>) -> usize {
        debug_assert_eq!(data.len(), rows * cols);
        self.params.push(Param {
            name,
            group,
            rows,
            cols,
            data,
        });
        self.params.len() - 1
    }

    pub fn groups(&self) -> Vec<ParamGroup> {
        let mut gs: Vec<ParamGroup> = self.params.iter().map(|p| p.group).collect();
        gs.sort();
        gs.dedup();
        gs
    }

    /// Pushes every parameter onto a fresh tape; parameters in `frozen`
    /// groups become constants (no gradient buffer, no updates).
    pub fn push_to_tape(&self, tape: &mut Tape, frozen: &[ParamGroup]) -> Result<Vec<NodeId>> {
        self.params
            .iter()
            .map(|p| {
                let requires_grad = !frozen.contains(&p.group);
                tape.leaf(p.data.clone(), (p.rows, p.cols), requires_grad)
            })
            .collect()
    }

    /// Bytewise checksum of one group, for freeze-soundness checks.
    pub fn group_checksum(&self, group: ParamGroup) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for p in self.params.iter().filter(|p| p.group == group) {
            for v in &p.data {
                h ^= v.to_bits();
                h = h.wrapping_mul(0x1000_0000_01b3);
            }
        }
        h
    }
}

/// One linear layer's parameter indices in the store.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearLayer {
    pub w: usize,
    pub b: usize,
}

/// An MLP realized as indices into a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<LinearLayer>,
    pub activation: Activation,
    pub config: MlpConfig,
}

/// Uniform(−1/√fan_in, 1/√fan_in) for weights and biases.
fn init_linear(
    store: &mut ParamStore,
    rng: &mut ChaCha8Rng,
    name: &str,
    group: ParamGroup,
    d_in: usize,
    d_out: usize,
) -> LinearLayer {
    let bound = 1.0 / (d_in as f64).sqrt();
    let w_data: Vec<f64> = (0..d_out * d_in).map(|_| rng.random_range(-bound..bound)).collect();
    let b_data: Vec<f64> = (0..d_out).map(|_| rng.random_range(-bound..bound)).collect();
    let w = store.add(format!("{name}.w"), group, d_out, d_in, w_data);
    let b = store.add(format!("{name}.b"), group, 1, d_out, b_data);
    LinearLayer { w, b }
}

fn build_mlp(
    store: &mut ParamStore,
    rng: &mut ChaCha8Rng,
    name: &str,
    group: ParamGroup,
    config: &MlpConfig,
) -> Result<Mlp> {
    config.validate()?;
    let layers = config
        .layer_dims
        .windows(2)
        .enumerate()
        .map(|(i, pair)| init_linear(store, rng, &format!("{name}.{i}"), group, pair[0], pair[1]))
        .collect();
    Ok(Mlp {
        layers,
        activation: config.hidden_activation,
        config: config.clone(),
    })
}

fn activate(tape: &mut Tape, activation: Activation, x: NodeId) -> Result<NodeId> {
    match activation {
        Activation::Tanh => tape.tanh(x),
        Activation::Relu => tape.relu(x),
    }
}

/// Dropout configuration for one forward pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DropoutMode {
    Train,
    Eval,
}

/// Inverted dropout: in train mode units are zeroed with probability `p`
/// and survivors scaled by 1/(1−p); in eval mode this is the identity.
pub fn apply_dropout(
    tape: &mut Tape,
    x: NodeId,
    p: f64,
    rng: &mut ChaCha8Rng,
    mode: DropoutMode,
) -> Result<NodeId> {
    if !(0.0..1.0).contains(&p) {
        return Err(CoreError::contract(
            "apply_dropout",
            format!("p must be in [0, 1), got {p}"),
        ));
    }
    if mode == DropoutMode::Eval || p == 0.0 {
        return Ok(x);
    }
    let shape = tape.shape(x);
    let scale = 1.0 / (1.0 - p);
    let mask: Vec<f64> = (0..shape.0 * shape.1)
        .map(|_| if rng.random_range(0.0..1.0) < p { 0.0 } else { scale })
        .collect();
    let mask_node = tape.constant(mask, shape)?;
    tape.mul(x, mask_node)
}

impl Mlp {
    /// Plain forward pass (no dropout).
    pub fn forward(&self, tape: &mut Tape, leaves: &[NodeId], x: NodeId) -> Result<NodeId> {
        self.forward_dropout(tape, leaves, x, None)
    }

    /// Forward pass with optional dropout after each hidden activation.
    pub fn forward_dropout(
        &self,
        tape: &mut Tape,
        leaves: &[NodeId],
        x: NodeId,
        mut dropout: Option<(f64, &mut ChaCha8Rng, DropoutMode)>,
    ) -> Result<NodeId> {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = tape.linear(h, leaves[layer.w], Some(leaves[layer.b]))?;
            if i < last {
                h = activate(tape, self.activation, h)?;
                if let Some((p, rng, mode)) = dropout.as_mut() {
                    h = apply_dropout(tape, h, *p, rng, *mode)?;
                }
            }
        }
        Ok(h)
    }
}

/// What kind of autoencoder a model is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Deterministic autoencoder.
    Ae,
    /// Variational autoencoder with diagonal-Gaussian posterior.
    Vae,
    /// Autoencoder with a vector-quantized bottleneck.
    VqAe,
}

/// Serializable model architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Full width list for the encoder, input → … → latent. For VAE models
    /// the trunk is everything up to the last entry and the mu/logvar heads
    /// map the final hidden width to the last entry.
    pub encoder_dims: Vec<usize>,
    /// Full width list for the decoder, latent → … → output.
    pub decoder_dims: Vec<usize>,
    pub activation: Activation,
    /// Codebook entry count; required for `VqAe`, forbidden otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub codebook_size: Option<usize>,
}

impl ModelConfig {
    pub fn latent_dim(&self) -> usize {
        *self.encoder_dims.last().unwrap()
    }

    pub fn input_dim(&self) -> usize {
        self.encoder_dims[0]
    }

    pub fn validate(&self) -> Result<()> {
        if self.encoder_dims.len() < 2 {
            return Err(CoreError::Config(format!(
                "model.encoder_dims needs at least two widths, got {:?}",
                self.encoder_dims
            )));
        }
        if self.decoder_dims.len() < 2 {
            return Err(CoreError::Config(format!(
                "model.decoder_dims needs at least two widths, got {:?}",
                self.decoder_dims
            )));
        }
        if self.encoder_dims.iter().chain(&self.decoder_dims).any(|&d| d == 0) {
            return Err(CoreError::Config(
                "model widths must all be positive".into(),
            ));
        }
        let enc_out = *self.encoder_dims.last().unwrap();
        let dec_in = self.decoder_dims[0];
        if enc_out != dec_in {
            return Err(CoreError::Config(format!(
                "model.encoder_dims output width ({enc_out}) must equal model.decoder_dims input width ({dec_in})"
            )));
        }
        match (self.kind, self.codebook_size) {
            (ModelKind::VqAe, None) => {
                return Err(CoreError::Config(
                    "model.codebook_size is required for kind vq_ae".into(),
                ))
            }
            (ModelKind::VqAe, Some(0)) => {
                return Err(CoreError::Config("model.codebook_size must be positive".into()))
            }
            (ModelKind::Ae | ModelKind::Vae, Some(_)) => {
                return Err(CoreError::Config(format!(
                    "model.codebook_size is only valid for kind vq_ae, not {:?}",
                    self.kind
                )))
            }
            _ => {}
        }
        Ok(())
    }
}

/// A live model: parameters plus the layer wiring.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub store: ParamStore,
    /// Encoder MLP. For VAE models this is the trunk (input → last hidden).
    pub encoder: Mlp,
    /// mu and logvar heads (VAE only).
    pub vae_head: Option<(LinearLayer, LinearLayer)>,
    pub decoder: Mlp,
    /// Codebook parameter index (VQ only). Stored transposed as
    /// [d_z × K] so that code selection is a linear layer over one-hot rows;
    /// accessors expose the conventional [K × d_z] view.
    pub codebook: Option<usize>,
}

impl Model {
    /// Builds and initializes a model from its config with the given stream.
    pub fn init(config: &ModelConfig, rng: &mut ChaCha8Rng) -> Result<Model> {
        config.validate()?;
        let mut store = ParamStore::default();
        let (encoder, vae_head) = match config.kind {
            ModelKind::Vae => {
                let n = config.encoder_dims.len();
                if n < 3 {
                    return Err(CoreError::Config(
                        "a VAE encoder needs at least one hidden layer before the heads".into(),
                    ));
                }
                let trunk_dims: Vec<usize> = config.encoder_dims[..n - 1].to_vec();
                let latent = config.encoder_dims[n - 1];
                let hidden = trunk_dims[trunk_dims.len() - 1];
                let trunk_cfg = MlpConfig::new(trunk_dims, config.activation);
                let mut trunk = build_mlp(&mut store, rng, "encoder", ParamGroup::Encoder, &trunk_cfg)?;
                let mu = init_linear(&mut store, rng, "encoder.mu", ParamGroup::Encoder, hidden, latent);
                let logvar = init_linear(&mut store, rng, "encoder.logvar", ParamGroup::Encoder, hidden, latent);
                // The trunk's final layer is followed by an activation in
                // the VAE wiring (heads read activated features), which
                // `Mlp::forward` skips for the last layer; record the trunk
                // as-is and activate in `encode_features`.
                trunk.config = trunk_cfg;
                (trunk, Some((mu, logvar)))
            }
            _ => {
                let cfg = MlpConfig::new(config.encoder_dims.clone(), config.activation);
                (
                    build_mlp(&mut store, rng, "encoder", ParamGroup::Encoder, &cfg)?,
                    None,
                )
            }
        };
        let dec_cfg = MlpConfig::new(config.decoder_dims.clone(), config.activation);
        let decoder = build_mlp(&mut store, rng, "decoder", ParamGroup::Decoder, &dec_cfg)?;
        let codebook = match config.kind {
            ModelKind::VqAe => {
                let k = config.codebook_size.unwrap();
                let d_z = config.latent_dim();
                // Uniform on [−1, 1]^{d_z}; drawn entry-by-entry per code so
                // the layout change (transposed storage) keeps the draw order.
                let mut data = vec![0.0; d_z * k];
                for code in 0..k {
                    for dim in 0..d_z {
                        data[dim * k + code] = rng.random_range(-1.0..1.0);
                    }
                }
                Some(store.add("codebook".into(), ParamGroup::Codebook, d_z, k, data))
            }
            _ => None,
        };
        Ok(Model {
            config: config.clone(),
            store,
            encoder,
            vae_head,
            decoder,
            codebook,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.config.latent_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim()
    }

    /// The codebook in its conventional [K × d_z] orientation.
    pub fn codebook_entries(&self) -> Option<Matrix> {
        self.codebook.map(|idx| {
            let p = &self.store.params[idx];
            Matrix {
                rows: p.rows,
                cols: p.cols,
                data: p.data.clone(),
            }
            .transpose()
        })
    }

    /// Replaces the decoder with a freshly initialized one of the given
    /// widths. Existing decoder parameters are removed from the store.
    pub fn replace_decoder(&mut self, dims: Vec<usize>, rng: &mut ChaCha8Rng) -> Result<()> {
        let cfg = MlpConfig::new(dims, self.config.activation);
        cfg.validate()?;
        if cfg.input_dim() != self.latent_dim() || cfg.output_dim() != self.input_dim() {
            return Err(CoreError::Config(format!(
                "replacement decoder {:?} does not map latent {} to input {}",
                cfg.layer_dims,
                self.latent_dim(),
                self.input_dim()
            )));
        }
        // Rebuild the store without the old decoder params, remapping indices.
        let mut new_store = ParamStore::default();
        let mut index_map = vec![usize::MAX; self.store.params.len()];
        for (old_idx, p) in self.store.params.iter().enumerate() {
            if p.group == ParamGroup::Decoder {
                continue;
            }
            index_map[old_idx] = new_store.add(p.name.clone(), p.group, p.rows, p.cols, p.data.clone());
        }
        let remap = |l: &LinearLayer| LinearLayer {
            w: index_map[l.w],
            b: index_map[l.b],
        };
        self.encoder.layers = self.encoder.layers.iter().map(remap).collect();
        self.vae_head = self.vae_head.map(|(mu, lv)| (remap(&mu), remap(&lv)));
        self.codebook = self.codebook.map(|c| index_map[c]);
        self.store = new_store;
        self.decoder = build_mlp(&mut self.store, rng, "decoder", ParamGroup::Decoder, &cfg)?;
        self.config.decoder_dims = cfg.layer_dims.clone();
        Ok(())
    }

    /// Encoder features right before the latent mapping. For VAE models this
    /// is the activated trunk output; for plain models the raw latent.
    fn encode_features(&self, tape: &mut Tape, leaves: &[NodeId], x: NodeId) -> Result<NodeId> {
        let h = self.encoder.forward(tape, leaves, x)?;
        if self.vae_head.is_some() {
            activate(tape, self.encoder.activation, h)
        } else {
            Ok(h)
        }
    }

    /// (mu, logvar) for VAE models.
    pub fn encode_vae(&self, tape: &mut Tape, leaves: &[NodeId], x: NodeId) -> Result<(NodeId, NodeId)> {
        let (mu_layer, lv_layer) = self
            .vae_head
            .ok_or_else(|| CoreError::contract("encode_vae", "model has no variational head"))?;
        let h = self.encode_features(tape, leaves, x)?;
        let mu = tape.linear(h, leaves[mu_layer.w], Some(leaves[mu_layer.b]))?;
        let logvar = tape.linear(h, leaves[lv_layer.w], Some(leaves[lv_layer.b]))?;
        Ok((mu, logvar))
    }

    /// Deterministic latent: mu for VAE, encoder output otherwise.
    pub fn encode_mean(&self, tape: &mut Tape, leaves: &[NodeId], x: NodeId) -> Result<NodeId> {
        if self.vae_head.is_some() {
            self.encode_vae(tape, leaves, x).map(|(mu, _)| mu)
        } else {
            self.encode_features(tape, leaves, x)
        }
    }

    /// Batch evaluation without gradients: deterministic latents (after
    /// quantization when a codebook exists) and reconstructions.
    pub fn eval_latents_and_reconstructions(&self, points: &Matrix) -> Result<(Matrix, Matrix)> {
        let mut tape = Tape::new();
        let leaves = self.store.push_to_tape(
            &mut tape,
            &[ParamGroup::Encoder, ParamGroup::Decoder, ParamGroup::Codebook],
        )?;
        let x = tape.constant(points.data.clone(), (points.rows, points.cols))?;
        let z = self.encode_mean(&mut tape, &leaves, x)?;
        let latent = if self.codebook.is_some() {
            let z_mat = Matrix::from_vec(points.rows, self.latent_dim(), tape.data(z).to_vec())?;
            let (_, z_q) = vq_quantize(&self.codebook_entries().unwrap(), &z_mat)?;
            tape.constant(z_q.data.clone(), (z_q.rows, z_q.cols))?
        } else {
            z
        };
        let recon = self.decoder.forward(&mut tape, &leaves, latent)?;
        let d_z = self.latent_dim();
        Ok((
            Matrix::from_vec(points.rows, d_z, tape.data(latent).to_vec())?,
            Matrix::from_vec(points.rows, points.cols, tape.data(recon).to_vec())?,
        ))
    }
}

/// Nearest-codebook-entry quantization (no gradients): returns the chosen
/// indices and the quantized latents. Ties break to the lowest index.
pub fn vq_quantize(codebook: &Matrix, z: &Matrix) -> Result<(Vec<usize>, Matrix)> {
    if codebook.rows == 0 {
        return Err(CoreError::contract("vq_quantize", "empty codebook"));
    }
    if codebook.cols != z.cols {
        return Err(CoreError::ShapeMismatch {
            op: "vq_quantize",
            lhs: format!("codebook entries of dim {}", codebook.cols),
            rhs: format!("latents of dim {}", z.cols),
        });
    }
    let mut indices = Vec::with_capacity(z.rows);
    let mut z_q = Matrix::zeros(z.rows, z.cols);
    for i in 0..z.rows {
        let zi = z.row(i);
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for k in 0..codebook.rows {
            let d: f64 = zi
                .iter()
                .zip(codebook.row(k))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d < best_d {
                best_d = d;
                best = k;
            }
        }
        indices.push(best);
        for (j, &v) in codebook.row(best).iter().enumerate() {
            z_q.set(i, j, v);
        }
    }
    Ok((indices, z_q))
}

/// Straight-through quantization on the tape: returns (indices, node for
/// z_q with gradients flowing straight through to z, node for the
/// codebook-side gather used by the quantization losses).
pub fn vq_quantize_on_tape(
    tape: &mut Tape,
    codebook_leaf: NodeId,
    z: NodeId,
) -> Result<(Vec<usize>, NodeId, NodeId)> {
    let (d_z, k) = tape.shape(codebook_leaf);
    let (batch, z_dim) = tape.shape(z);
    if z_dim != d_z {
        return Err(CoreError::ShapeMismatch {
            op: "vq_quantize_on_tape",
            lhs: format!("latent dim {z_dim}"),
            rhs: format!("codebook dim {d_z}"),
        });
    }
    // Columns of the stored codebook are the entries.
    let cb = tape.data(codebook_leaf);
    let zd = tape.data(z);
    let mut indices = Vec::with_capacity(batch);
    for i in 0..batch {
        let zi = &zd[i * d_z..(i + 1) * d_z];
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for code in 0..k {
            let mut d = 0.0;
            for (dim, &zv) in zi.iter().enumerate() {
                let cv = cb[dim * k + code];
                d += (zv - cv) * (zv - cv);
            }
            if d < best_d {
                best_d = d;
                best = code;
            }
        }
        indices.push(best);
    }
    // Gather as a linear layer over one-hot rows: z_q = onehot · storedᵀ.
    let mut onehot = vec![0.0; batch * k];
    for (i, &idx) in indices.iter().enumerate() {
        onehot[i * k + idx] = 1.0;
    }
    let onehot_node = tape.constant(onehot, (batch, k))?;
    let gathered = tape.linear(onehot_node, codebook_leaf, None)?;
    // Straight-through: z + const(z_q − z) copies gradients from the output
    // to z unchanged while forwarding the quantized values.
    let delta: Vec<f64> = tape
        .data(gathered)
        .iter()
        .zip(tape.data(z))
        .map(|(q, zv)| q - zv)
        .collect();
    let delta_node = tape.constant(delta, (batch, d_z))?;
    let straight_through = tape.add(z, delta_node)?;
    Ok((indices, straight_through, gathered))
}

/// Mean over the batch of the squared reconstruction error summed over
/// feature dimensions.
pub fn reconstruction_loss(tape: &mut Tape, x: NodeId, x_hat: NodeId) -> Result<NodeId> {
    let (batch, _) = tape.shape(x);
    let sq = tape.sq_diff(x, x_hat)?;
    let total = tape.sum_all(sq)?;
    tape.mul_scalar(total, 1.0 / batch as f64)
}

/// Closed-form KL(N(mu, diag exp(logvar)) ‖ N(0, I)):
/// 0.5·Σ(mu² + exp(logvar) − 1 − logvar), summed over latent dimensions and
/// averaged over the batch.
pub fn kl_divergence(tape: &mut Tape, mu: NodeId, logvar: NodeId) -> Result<NodeId> {
    let (batch, _) = tape.shape(mu);
    let mu_sq = tape.mul(mu, mu)?;
    let var = tape.exp(logvar)?;
    let sum_mv = tape.add(mu_sq, var)?;
    let neg_lv = tape.mul_scalar(logvar, -1.0)?;
    let with_lv = tape.add(sum_mv, neg_lv)?;
    let shifted = tape.add_scalar(with_lv, -1.0)?;
    let total = tape.sum_all(shifted)?;
    tape.mul_scalar(total, 0.5 / batch as f64)
}

/// Reparameterized sample z = mu + exp(logvar/2) ⊙ noise.
pub fn reparameterize(tape: &mut Tape, mu: NodeId, logvar: NodeId, noise: &[f64]) -> Result<NodeId> {
    let shape = tape.shape(mu);
    if noise.len() != shape.0 * shape.1 {
        return Err(CoreError::ShapeMismatch {
            op: "reparameterize",
            lhs: format!("noise of length {}", noise.len()),
            rhs: format!("mu shape {}x{}", shape.0, shape.1),
        });
    }
    let half_lv = tape.mul_scalar(logvar, 0.5)?;
    let std = tape.exp(half_lv)?;
    let noise_node = tape.constant(noise.to_vec(), shape)?;
    let scaled = tape.mul(std, noise_node)?;
    tape.add(mu, scaled)
}

/// Codebook + commitment decomposition, batch-averaged:
/// ‖stopgrad(z) − z_q‖² trains the codebook; beta_commit·‖z − stopgrad(z_q)‖²
/// trains the encoder.
pub fn vq_loss(
    tape: &mut Tape,
    z: NodeId,
    gathered: NodeId,
    beta_commit: f64,
) -> Result<NodeId> {
    let (batch, _) = tape.shape(z);
    let z_const = tape.constant(tape.data(z).to_vec(), tape.shape(z))?;
    let zq_const = tape.constant(tape.data(gathered).to_vec(), tape.shape(gathered))?;
    // Codebook term: gradient reaches only the codebook entries.
    let cb_sq = tape.sq_diff(z_const, gathered)?;
    let cb_sum = tape.sum_all(cb_sq)?;
    let cb_term = tape.mul_scalar(cb_sum, 1.0 / batch as f64)?;
    // Commitment term: gradient reaches only the encoder.
    let commit_sq = tape.sq_diff(z, zq_const)?;
    let commit_sum = tape.sum_all(commit_sq)?;
    let commit_term = tape.mul_scalar(commit_sum, beta_commit / batch as f64)?;
    tape.add(cb_term, commit_term)
}
