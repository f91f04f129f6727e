//! Synthetic Gaussian-mixture data on a circle, with an orthogonal
//! embedding into a higher-dimensional ambient space.

use crate::error::{CoreError, Result};
use crate::linalg::Matrix;
use crate::rng;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Mixture of `num_clusters` isotropic Gaussians whose centers sit evenly
/// spaced on a circle of the given radius, at angles 2πk/num_clusters.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MixtureSpec {
    #[serde(default = "default_num_clusters")]
    pub num_clusters: usize,
    #[serde(default = "default_radius")]
    pub radius: f64,
    /// Per-dimension variance of each isotropic component.
    #[serde(default = "default_variance")]
    pub variance: f64,
    #[serde(default = "default_intrinsic_dim")]
    pub intrinsic_dim: usize,
    #[serde(default = "default_ambient_dim")]
    pub ambient_dim: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_num_clusters() -> usize {
    8
}
fn default_radius() -> f64 {
    1.0
}
fn default_variance() -> f64 {
    0.25
}
fn default_intrinsic_dim() -> usize {
    2
}
fn default_ambient_dim() -> usize {
    10
}

impl Default for MixtureSpec {
    fn default() -> Self {
        MixtureSpec {
            num_clusters: default_num_clusters(),
            radius: default_radius(),
            variance: default_variance(),
            intrinsic_dim: default_intrinsic_dim(),
            ambient_dim: default_ambient_dim(),
            seed: 0,
        }
    }
}

impl MixtureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_clusters == 0 {
            return Err(CoreError::Config("data.num_clusters must be positive".into()));
        }
        if self.radius <= 0.0 {
            return Err(CoreError::Config("data.radius must be positive".into()));
        }
        if self.variance < 0.0 {
            return Err(CoreError::Config("data.variance must be non-negative".into()));
        }
        if self.intrinsic_dim < 2 {
            return Err(CoreError::Config(
                "data.intrinsic_dim must be at least 2 (centers live on a circle)".into(),
            ));
        }
        if self.ambient_dim < self.intrinsic_dim {
            return Err(CoreError::Config(format!(
                "data.ambient_dim ({}) must be at least data.intrinsic_dim ({})",
                self.ambient_dim, self.intrinsic_dim
            )));
        }
        Ok(())
    }

    /// Cluster center k: (radius·cos(2πk/K), radius·sin(2πk/K), 0, …).
    pub fn center(&self, k: usize) -> Vec<f64> {
        let angle = 2.0 * std::f64::consts::PI * k as f64 / self.num_clusters as f64;
        let mut c = vec![0.0; self.intrinsic_dim];
        c[0] = self.radius * angle.cos();
        c[1] = self.radius * angle.sin();
        c
    }
}

/// Points with integer cluster labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub points: Matrix,
    pub labels: Vec<usize>,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.cols
    }
}

/// Columns form an orthonormal basis of a random subspace:
/// A is [ambient_dim × intrinsic_dim] with AᵀA = I.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalEmbedding {
    pub a: Matrix,
}

/// Draws `n_per_cluster` samples from every component, cluster-major, so the
/// label distribution is exactly uniform. Deterministic per `spec.seed`.
pub fn sample_mixture(spec: &MixtureSpec, n_per_cluster: usize) -> Result<LabeledDataset> {
    spec.validate()?;
    if n_per_cluster == 0 {
        return Err(CoreError::contract(
            "sample_mixture",
            "n_per_cluster must be at least 1",
        ));
    }
    let n = spec.num_clusters * n_per_cluster;
    let d = spec.intrinsic_dim;
    let std = spec.variance.sqrt();
    let mut rng = rng::stream(spec.seed, "mixture", 0);
    let mut points = Matrix::zeros(n, d);
    let mut labels = Vec::with_capacity(n);
    let mut row = 0;
    for k in 0..spec.num_clusters {
        let center = spec.center(k);
        for _ in 0..n_per_cluster {
            for j in 0..d {
                let noise: f64 = rng.sample(StandardNormal);
                points.set(row, j, center[j] + std * noise);
            }
            labels.push(k);
            row += 1;
        }
    }
    Ok(LabeledDataset { points, labels })
}

/// Orthonormalizes the columns of a seeded Gaussian matrix by Gram–Schmidt
/// with one re-orthogonalization pass. AᵀA = I to 1e-10.
pub fn make_embedding(intrinsic_dim: usize, ambient_dim: usize, seed: u64) -> Result<OrthogonalEmbedding> {
    if ambient_dim < intrinsic_dim {
        return Err(CoreError::contract(
            "make_embedding",
            format!("ambient_dim ({ambient_dim}) < intrinsic_dim ({intrinsic_dim})"),
        ));
    }
    let mut rng = rng::stream(seed, "embedding", 0);
    // Columns as rows of a [intrinsic × ambient] scratch for contiguity.
    let mut basis: Vec<Vec<f64>> = (0..intrinsic_dim)
        .map(|_| (0..ambient_dim).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    for j in 0..intrinsic_dim {
        // Two projection passes keep orthogonality at machine precision.
        for _pass in 0..2 {
            for i in 0..j {
                let proj = crate::linalg::dot(&basis[j], &basis[i]);
                let (head, tail) = basis.split_at_mut(j);
                crate::linalg::axpy(-proj, &head[i], &mut tail[0]);
            }
        }
        let norm = crate::linalg::dot(&basis[j], &basis[j]).sqrt();
        if norm < 1e-12 {
            return Err(CoreError::contract(
                "make_embedding",
                "degenerate random basis draw",
            ));
        }
        for v in basis[j].iter_mut() {
            *v /= norm;
        }
    }
    let mut a = Matrix::zeros(ambient_dim, intrinsic_dim);
    for (j, col) in basis.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            a.set(i, j, v);
        }
    }
    Ok(OrthogonalEmbedding { a })
}

/// Maps every point x to A·x; labels unchanged. An exact isometry because
/// the columns of A are orthonormal.
pub fn embed(data: &LabeledDataset, embedding: &OrthogonalEmbedding) -> Result<LabeledDataset> {
    if data.dim() != embedding.a.cols {
        return Err(CoreError::ShapeMismatch {
            op: "embed",
            lhs: format!("points dim {}", data.dim()),
            rhs: format!("embedding input dim {}", embedding.a.cols),
        });
    }
    // Row-wise: embedded rows = points · Aᵀ.
    let mut out = Matrix::zeros(data.len(), embedding.a.rows);
    crate::linalg::matmul_nt(
        &data.points.data,
        (data.points.rows, data.points.cols),
        &embedding.a.data,
        (embedding.a.rows, embedding.a.cols),
        &mut out.data,
    );
    Ok(LabeledDataset {
        points: out,
        labels: data.labels.clone(),
    })
}

/// Train/test pair sampled with independent derived streams plus the shared
/// embedding, all derived from `spec.seed`.
pub struct ToyData {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub embedding: OrthogonalEmbedding,
}

pub fn make_toy_data(spec: &MixtureSpec, train_per_cluster: usize, test_per_cluster: usize) -> Result<ToyData> {
    let train_spec = MixtureSpec {
        seed: crate::rng::derive_seed(spec.seed, "train-split", 0),
        ..spec.clone()
    };
    let test_spec = MixtureSpec {
        seed: crate::rng::derive_seed(spec.seed, "test-split", 0),
        ..spec.clone()
    };
    let embedding = make_embedding(
        spec.intrinsic_dim,
        spec.ambient_dim,
        crate::rng::derive_seed(spec.seed, "embedding-split", 0),
    )?;
    let train = embed(&sample_mixture(&train_spec, train_per_cluster)?, &embedding)?;
    let test = embed(&sample_mixture(&test_spec, test_per_cluster)?, &embedding)?;
    Ok(ToyData {
        train,
        test,
        embedding,
    })
}

/// CSV dump: header `x0,...,x{d-1},label`, one row per point. Values use
/// shortest round-trip decimal formatting, so output is bit-deterministic.
pub fn write_dataset_csv<W: Write>(mut w: W, data: &LabeledDataset) -> Result<()> {
    let d = data.dim();
    let header: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
    writeln!(w, "{},label", header.join(","))?;
    for (i, &label) in data.labels.iter().enumerate() {
        let row: Vec<String> = data.points.row(i).iter().map(|v| format!("{v}")).collect();
        writeln!(w, "{},{}", row.join(","), label)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centers_match_forced_positions() {
        let spec = MixtureSpec::default();
        let c0 = spec.center(0);
        let c2 = spec.center(2);
        assert!((c0[0] - 1.0).abs() < 1e-15 && c0[1].abs() < 1e-15);
        assert!(c2[0].abs() < 1e-15 && (c2[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_variance_collapses_to_centers() {
        let spec = MixtureSpec {
            variance: 0.0,
            ..Default::default()
        };
        let data = sample_mixture(&spec, 3).unwrap();
        for (i, &label) in data.labels.iter().enumerate() {
            let center = spec.center(label);
            for j in 0..spec.intrinsic_dim {
                assert_eq!(data.points.get(i, j), center[j]);
            }
        }
    }

    #[test]
    fn empirical_cluster_means_within_standard_error() {
        let spec = MixtureSpec {
            seed: 42,
            ..Default::default()
        };
        let n = 2000;
        let data = sample_mixture(&spec, n).unwrap();
        // Standard error of the mean is σ/√n = 0.5/√2000 per coordinate.
        let bound = 3.0 * (0.5 / (n as f64).sqrt());
        for k in 0..spec.num_clusters {
            let center = spec.center(k);
            let mut mean = vec![0.0; spec.intrinsic_dim];
            let mut count = 0;
            for (i, &label) in data.labels.iter().enumerate() {
                if label == k {
                    for j in 0..spec.intrinsic_dim {
                        mean[j] += data.points.get(i, j);
                    }
                    count += 1;
                }
            }
            assert_eq!(count, n);
            for j in 0..spec.intrinsic_dim {
                mean[j] /= n as f64;
                assert!(
                    (mean[j] - center[j]).abs() < bound,
                    "cluster {k} coord {j}: {} vs {}",
                    mean[j],
                    center[j]
                );
            }
        }
    }

    #[test]
    fn sampling_is_bit_reproducible() {
        let spec = MixtureSpec {
            seed: 7,
            ..Default::default()
        };
        let a = sample_mixture(&spec, 50).unwrap();
        let b = sample_mixture(&spec, 50).unwrap();
        assert_eq!(a.points.data, b.points.data);
        assert_eq!(a.labels, b.labels);
    }

    #[test]
    fn labels_are_exactly_uniform() {
        let data = sample_mixture(&MixtureSpec::default(), 17).unwrap();
        let mut counts = vec![0usize; 8];
        for &l in &data.labels {
            counts[l] += 1;
        }
        assert!(counts.iter().all(|&c| c == 17));
    }

    #[test]
    fn square_embedding_is_orthogonal_both_ways() {
        let e = make_embedding(2, 2, 3).unwrap();
        let ata = e.a.transpose().matmul(&e.a).unwrap();
        let aat = e.a.matmul(&e.a.transpose()).unwrap();
        for r in 0..2 {
            for c in 0..2 {
                let want = if r == c { 1.0 } else { 0.0 };
                assert!((ata.get(r, c) - want).abs() < 1e-10);
                assert!((aat.get(r, c) - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn embedding_gram_is_identity() {
        let e = make_embedding(2, 10, 9).unwrap();
        let ata = e.a.transpose().matmul(&e.a).unwrap();
        for r in 0..2 {
            for c in 0..2 {
                let want = if r == c { 1.0 } else { 0.0 };
                assert!((ata.get(r, c) - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn embedding_is_deterministic_per_seed() {
        let a = make_embedding(2, 10, 5).unwrap();
        let b = make_embedding(2, 10, 5).unwrap();
        assert_eq!(a.a.data, b.a.data);
    }

    #[test]
    fn embed_preserves_pairwise_distances_and_left_inverse() {
        use crate::linalg::euclidean_distance;
        let spec = MixtureSpec {
            seed: 11,
            ..Default::default()
        };
        let data = sample_mixture(&spec, 10).unwrap();
        let e = make_embedding(2, 10, 11).unwrap();
        let hi = embed(&data, &e).unwrap();
        for i in 0..data.len() {
            for j in (i + 1)..data.len() {
                let lo_d = euclidean_distance(data.points.row(i), data.points.row(j));
                let hi_d = euclidean_distance(hi.points.row(i), hi.points.row(j));
                assert!((lo_d - hi_d).abs() < 1e-10);
            }
        }
        // Aᵀ(Ax) = x.
        let back = hi.points.matmul(&e.a).unwrap();
        for (got, want) in back.data.iter().zip(&data.points.data) {
            assert!((got - want).abs() < 1e-10);
        }
        // Zero maps to zero.
        let zero = LabeledDataset {
            points: Matrix::zeros(1, 2),
            labels: vec![0],
        };
        let z = embed(&zero, &e).unwrap();
        assert!(z.points.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn csv_dump_has_declared_header_and_rows() {
        let data = sample_mixture(
            &MixtureSpec {
                seed: 1,
                ..Default::default()
            },
            2,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_dataset_csv(&mut buf, &data).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "x0,x1,label");
        assert_eq!(lines.count(), 16);
    }
}
