//! Post-hoc geometry analysis: an empirical Lipschitz-style complexity
//! score for learned maps, nearest-neighbor classification accuracy on
//! latents and reconstructions, and codebook geometry statistics (pairwise
//! cosine similarities, distance-matrix spectrum, usage counts).

use crate::eig::jacobi_eigen;
use crate::error::{CoreError, Result};
use crate::linalg::Matrix;
use crate::models::{vq_quantize, Model};
use crate::rng::{derive_seed, stream};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Pairs whose input distance falls below this floor are excluded (and
/// resampled) rather than divided by.
pub const PAIR_DISTANCE_FLOOR: f64 = 1e-9;

/// Default number of sampled pairs for the complexity score.
pub const DEFAULT_COMPLEXITY_PAIRS: usize = 4096;

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Result of the pairwise complexity estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzEstimate {
    /// Mean ratio ‖f(x₁)−f(x₂)‖ / ‖x₁−x₂‖ over the sampled pairs.
    pub c_lip: f64,
    /// Number of valid pairs that entered the mean (always `n_pairs`).
    pub pairs_used: usize,
    /// Pairs rejected because the input distance was below the floor.
    pub pairs_excluded: usize,
}

/// Empirical complexity of the map sending `inputs[i]` to `outputs[i]`:
/// the mean distance-ratio over `n_pairs` sampled pairs of distinct rows.
/// Degenerate pairs (input distance below [`PAIR_DISTANCE_FLOOR`]) are
/// counted and resampled so that exactly `n_pairs` valid ratios are averaged.
///
/// Each ratio is computed as √(‖Δout‖² / ‖Δin‖²), which makes the estimate
/// exactly scale-covariant: scaling the outputs by λ scales every squared
/// distance by exactly λ² whenever that product is representable, and the
/// square root of the exact quotient recovers λ bit-for-bit.
pub fn lipschitz_complexity(
    inputs: &Matrix,
    outputs: &Matrix,
    n_pairs: usize,
    seed: u64,
) -> Result<LipschitzEstimate> {
    if inputs.rows != outputs.rows {
        return Err(CoreError::ShapeMismatch {
            op: "lipschitz_complexity",
            lhs: format!("{} input rows", inputs.rows),
            rhs: format!("{} output rows", outputs.rows),
        });
    }
    if inputs.rows < 2 {
        return Err(CoreError::contract(
            "lipschitz_complexity",
            "need at least two points to form pairs",
        ));
    }
    if n_pairs == 0 {
        return Err(CoreError::contract("lipschitz_complexity", "n_pairs must be positive"));
    }
    let n = inputs.rows;
    let floor_sq = PAIR_DISTANCE_FLOOR * PAIR_DISTANCE_FLOOR;
    let mut rng = stream(seed, "complexity-pairs", 0);
    let mut sum = 0.0;
    let mut used = 0usize;
    let mut excluded = 0usize;
    // Generous cap so a pathological dataset (all points coincident) fails
    // loudly instead of spinning forever.
    let max_attempts = n_pairs.saturating_mul(1000);
    let mut attempts = 0usize;
    while used < n_pairs {
        attempts += 1;
        if attempts > max_attempts {
            return Err(CoreError::contract(
                "lipschitz_complexity",
                format!(
                    "could not find {n_pairs} pairs with input distance above {PAIR_DISTANCE_FLOOR} \
                     after {max_attempts} attempts ({excluded} excluded)"
                ),
            ));
        }
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        if i == j {
            continue;
        }
        let d_in_sq = squared_distance(inputs.row(i), inputs.row(j));
        if d_in_sq < floor_sq {
            excluded += 1;
            continue;
        }
        let d_out_sq = squared_distance(outputs.row(i), outputs.row(j));
        sum += (d_out_sq / d_in_sq).sqrt();
        used += 1;
    }
    Ok(LipschitzEstimate {
        c_lip: sum / n_pairs as f64,
        pairs_used: used,
        pairs_excluded: excluded,
    })
}

/// k-nearest-neighbor classification accuracy of `test` rows against the
/// `train` reference set. Neighbors are ordered by (distance, index), so
/// exact distance ties resolve to the lowest reference index; majority-vote
/// ties resolve to the smallest label id.
pub fn knn_accuracy(
    train_points: &Matrix,
    train_labels: &[usize],
    test_points: &Matrix,
    test_labels: &[usize],
    k: usize,
) -> Result<f64> {
    if train_points.rows != train_labels.len() {
        return Err(CoreError::ShapeMismatch {
            op: "knn_accuracy",
            lhs: format!("{} train rows", train_points.rows),
            rhs: format!("{} train labels", train_labels.len()),
        });
    }
    if test_points.rows != test_labels.len() {
        return Err(CoreError::ShapeMismatch {
            op: "knn_accuracy",
            lhs: format!("{} test rows", test_points.rows),
            rhs: format!("{} test labels", test_labels.len()),
        });
    }
    if train_points.cols != test_points.cols {
        return Err(CoreError::ShapeMismatch {
            op: "knn_accuracy",
            lhs: format!("train dim {}", train_points.cols),
            rhs: format!("test dim {}", test_points.cols),
        });
    }
    if k == 0 || k > train_points.rows {
        return Err(CoreError::contract(
            "knn_accuracy",
            format!("k must be in 1..={}, got {k}", train_points.rows),
        ));
    }
    if test_points.rows == 0 {
        return Err(CoreError::contract("knn_accuracy", "empty test set"));
    }
    let mut correct = 0usize;
    let mut scratch: Vec<(f64, usize)> = Vec::with_capacity(train_points.rows);
    for t in 0..test_points.rows {
        let q = test_points.row(t);
        scratch.clear();
        for i in 0..train_points.rows {
            scratch.push((squared_distance(q, train_points.row(i)), i));
        }
        scratch.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        // Majority vote; vote ties go to the smallest label id.
        let mut counts: Vec<(usize, usize)> = Vec::new(); // (label, votes)
        for &(_, idx) in &scratch[..k] {
            let label = train_labels[idx];
            match counts.iter_mut().find(|c| c.0 == label) {
                Some(c) => c.1 += 1,
                None => counts.push((label, 1)),
            }
        }
        counts.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        if counts[0].0 == test_labels[t] {
            correct += 1;
        }
    }
    Ok(correct as f64 / test_points.rows as f64)
}

/// Number of histogram bins for pairwise cosine similarities.
pub const COSINE_HISTOGRAM_BINS: usize = 101;

/// Number of leading eigenvalues reported from the distance matrix.
pub const REPORTED_EIGENVALUES: usize = 20;

/// Norm threshold below which a code is treated as zero and excluded.
pub const ZERO_NORM_THRESHOLD: f64 = 1e-12;

/// Geometry summary of a codebook: pairwise cosine similarities between
/// (nonzero) entries and the spectrum of the cosine *distance* matrix
/// (1 − similarity off the diagonal, zeros on it).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CosineStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// Histogram of the pairwise similarities over [−1, 1].
    pub histogram: Vec<usize>,
    pub total_pairs: usize,
    /// Leading eigenvalues (descending) of the cosine distance matrix.
    pub eigenvalues: Vec<f64>,
    /// Sum over the full spectrum; the distance matrix has zero trace, so
    /// this vanishes up to round-off.
    pub eigenvalue_sum: f64,
    /// Codes excluded because their norm fell below the zero threshold.
    pub zero_norm_codes: usize,
}

/// Computes [`CosineStats`] for a codebook given as rows of entries.
/// Zero-norm codes are excluded from every pairwise statistic and counted
/// in `zero_norm_codes`; if fewer than two usable codes remain, this is a
/// diagnostic error.
pub fn codebook_cosine_stats(codebook: &Matrix) -> Result<CosineStats> {
    if codebook.rows < 2 {
        return Err(CoreError::contract(
            "codebook_cosine_stats",
            "need at least two codebook entries",
        ));
    }
    let mut usable: Vec<usize> = Vec::with_capacity(codebook.rows);
    let mut norms_sq: Vec<f64> = Vec::with_capacity(codebook.rows);
    let mut zero_norm_codes = 0usize;
    for i in 0..codebook.rows {
        let s = codebook.row(i).iter().map(|v| v * v).sum::<f64>();
        if s.sqrt() < ZERO_NORM_THRESHOLD {
            zero_norm_codes += 1;
        } else {
            usable.push(i);
            norms_sq.push(s);
        }
    }
    let k = usable.len();
    if k < 2 {
        return Err(CoreError::Diagnostic(format!(
            "codebook has {} usable (nonzero) codes out of {}; cosine statistics undefined",
            k, codebook.rows
        )));
    }
    // Cosine distance matrix over the usable codes: zero diagonal,
    // 1 − cosine similarity elsewhere.
    let mut distance = Matrix::zeros(k, k);
    let mut histogram = vec![0usize; COSINE_HISTOGRAM_BINS];
    let mut mean = 0.0;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut total_pairs = 0usize;
    for a in 0..k {
        for b in (a + 1)..k {
            let (i, j) = (usable[a], usable[b]);
            let dot: f64 = codebook
                .row(i)
                .iter()
                .zip(codebook.row(j))
                .map(|(x, y)| x * y)
                .sum();
            // dot / √(‖i‖²·‖j‖²): identical rows give exactly S/√(S²) = 1.
            let c = (dot / (norms_sq[a] * norms_sq[b]).sqrt()).clamp(-1.0, 1.0);
            distance.set(a, b, 1.0 - c);
            distance.set(b, a, 1.0 - c);
            mean += c;
            min = min.min(c);
            max = max.max(c);
            let bin = (((c + 1.0) / 2.0) * COSINE_HISTOGRAM_BINS as f64) as usize;
            histogram[bin.min(COSINE_HISTOGRAM_BINS - 1)] += 1;
            total_pairs += 1;
        }
    }
    mean /= total_pairs as f64;
    let (eigenvalues, _) = jacobi_eigen(&distance)?;
    let eigenvalue_sum = eigenvalues.iter().sum();
    let reported: Vec<f64> = eigenvalues
        .iter()
        .copied()
        .take(REPORTED_EIGENVALUES)
        .collect();
    Ok(CosineStats {
        mean,
        min,
        max,
        histogram,
        total_pairs,
        eigenvalues: reported,
        eigenvalue_sum,
        zero_norm_codes,
    })
}

/// How often each code index appears in `assignments` (unsorted, indexed by
/// code).
pub fn usage_counts_from_assignments(
    assignments: &[usize],
    codebook_size: usize,
) -> Result<Vec<usize>> {
    let mut counts = vec![0usize; codebook_size];
    for &a in assignments {
        if a >= codebook_size {
            return Err(CoreError::contract(
                "code_usage_counts",
                format!("assignment {a} out of range for codebook of size {codebook_size}"),
            ));
        }
        counts[a] += 1;
    }
    Ok(counts)
}

/// Quantizes every latent against the codebook and returns the per-code
/// usage counts sorted descending. The counts always sum to the number of
/// latents.
pub fn code_usage_counts(codebook: &Matrix, latents: &Matrix) -> Result<Vec<usize>> {
    let (assignments, _) = vq_quantize(codebook, latents)?;
    let mut counts = usage_counts_from_assignments(&assignments, codebook.rows)?;
    counts.sort_unstable_by(|a, b| b.cmp(a));
    Ok(counts)
}

/// One per-epoch complexity record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexityRow {
    pub stage: usize,
    pub epoch: usize,
    pub c_lip_encoder: f64,
    pub c_lip_decoder: f64,
}

/// Per-epoch complexity history across stages.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ComplexityLog {
    pub rows: Vec<ComplexityRow>,
}

impl ComplexityLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("stage,epoch,c_lip_encoder,c_lip_decoder\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.stage, r.epoch, r.c_lip_encoder, r.c_lip_decoder
            ));
        }
        out
    }
}

/// Complexity of a model's encoder and decoder over a set of evaluation
/// points: the encoder is scored on input→latent pairs (latents taken
/// deterministically and after quantization when a codebook is present),
/// the decoder on latent→reconstruction pairs.
pub fn model_complexity(
    model: &Model,
    points: &Matrix,
    n_pairs: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let (latents, recons) = model.eval_latents_and_reconstructions(points)?;
    let enc = lipschitz_complexity(points, &latents, n_pairs, derive_seed(seed, "clip-encoder", 0))?;
    let dec = lipschitz_complexity(&latents, &recons, n_pairs, derive_seed(seed, "clip-decoder", 0))?;
    Ok((enc.c_lip, dec.c_lip))
}
