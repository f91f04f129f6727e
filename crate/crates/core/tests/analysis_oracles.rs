//! Independent oracles for the analysis probes: a large-sample Monte-Carlo
//! estimate for the complexity probe on a linear map, an exhaustive
//! nearest-neighbor scan, a dense eigensolver cross-check for the codebook
//! spectrum, and a multinomial concentration check for code usage.

use std::collections::BTreeMap;

use dae_core::analysis::{code_usage_counts, codebook_cosine_stats, knn_accuracy, lipschitz_complexity};
use dae_core::data::{make_toy_data, MixtureSpec};
use dae_core::linalg::Matrix;
use dae_core::rng::stream;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

fn gaussian_matrix(rows: usize, cols: usize, seed: u64, label: &str) -> Matrix {
    let mut rng = stream(seed, label, 0);
    Matrix {
        rows,
        cols,
        data: (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect(),
    }
}

/// y = A·x for row-vector points, written out longhand.
fn apply(a: &[f64], d: usize, x: &[f64]) -> Vec<f64> {
    (0..d)
        .map(|i| (0..d).map(|j| a[i * d + j] * x[j]).sum())
        .collect()
}

#[test]
fn linear_map_complexity_matches_million_pair_monte_carlo() {
    let d = 10;
    let a = gaussian_matrix(d, d, 40, "clip-map").data;

    let n = 20_000;
    let inputs = gaussian_matrix(n, d, 41, "clip-data");
    let mut outputs = Matrix::zeros(n, d);
    for r in 0..n {
        outputs.data[r * d..(r + 1) * d].copy_from_slice(&apply(&a, d, inputs.row(r)));
    }
    let pairs = 1_000_000;
    let est = lipschitz_complexity(&inputs, &outputs, pairs, 42).unwrap();
    assert_eq!(est.pairs_used, pairs);

    // Oracle: mean of ‖A·(x₁−x₂)‖/‖x₁−x₂‖ over a million fresh Gaussian
    // pairs, coded independently of the probe's sampler.
    let mut rng = stream(43, "clip-oracle", 0);
    let mut sum = 0.0;
    for _ in 0..pairs {
        let delta: Vec<f64> = (0..d)
            .map(|_| {
                let u: f64 = rng.sample(StandardNormal);
                let v: f64 = rng.sample(StandardNormal);
                u - v
            })
            .collect();
        let mapped = apply(&a, d, &delta);
        let num: f64 = mapped.iter().map(|v| v * v).sum::<f64>().sqrt();
        let den: f64 = delta.iter().map(|v| v * v).sum::<f64>().sqrt();
        sum += num / den;
    }
    let oracle = sum / pairs as f64;
    let rel = (est.c_lip - oracle).abs() / oracle;
    assert!(
        rel < 0.01,
        "probe {:.6} vs Monte-Carlo oracle {oracle:.6}: relative gap {rel:.4}",
        est.c_lip
    );
}

/// Exhaustive scan with the documented tie rules: neighbors ordered by
/// (distance, reference index), majority votes broken toward the smallest
/// label id.
fn scan_accuracy(
    train: &Matrix,
    train_labels: &[usize],
    test: &Matrix,
    test_labels: &[usize],
    k: usize,
) -> f64 {
    let mut correct = 0usize;
    for qi in 0..test.rows {
        let q = test.row(qi);
        let mut ranked: Vec<(f64, usize)> = (0..train.rows)
            .map(|ri| {
                let d: f64 = train
                    .row(ri)
                    .iter()
                    .zip(q)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (d, ri)
            })
            .collect();
        ranked.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap().then(x.1.cmp(&y.1)));
        let mut votes: BTreeMap<usize, usize> = BTreeMap::new();
        for &(_, ri) in ranked.iter().take(k) {
            *votes.entry(train_labels[ri]).or_insert(0) += 1;
        }
        // BTreeMap iterates labels ascending, so a strict `>` keeps the
        // smallest label on vote ties.
        let mut best = (usize::MAX, 0usize);
        for (&label, &count) in &votes {
            if count > best.1 {
                best = (label, count);
            }
        }
        if best.0 == test_labels[qi] {
            correct += 1;
        }
    }
    correct as f64 / test.rows as f64
}

#[test]
fn knn_matches_exhaustive_scan_exactly_on_cluster_data() {
    let spec = MixtureSpec {
        seed: 44,
        ..MixtureSpec::default()
    };
    let data = make_toy_data(&spec, 50, 25).unwrap();
    for k in [1, 3, 5] {
        let probe = knn_accuracy(
            &data.train.points,
            &data.train.labels,
            &data.test.points,
            &data.test.labels,
            k,
        )
        .unwrap();
        let oracle = scan_accuracy(
            &data.train.points,
            &data.train.labels,
            &data.test.points,
            &data.test.labels,
            k,
        );
        assert_eq!(probe, oracle, "k = {k}");
    }
}

#[test]
fn codebook_spectrum_matches_dense_eigensolver_within_1e8() {
    let k = 64;
    let d = 5;
    let cb = gaussian_matrix(k, d, 45, "codebook");
    let stats = codebook_cosine_stats(&cb).unwrap();

    // Independent construction of the cosine distance matrix and a dense
    // symmetric eigensolve.
    let norms: Vec<f64> = (0..k)
        .map(|i| cb.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let mut dist = DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            if i != j {
                let dot: f64 = cb.row(i).iter().zip(cb.row(j)).map(|(a, b)| a * b).sum();
                dist[(i, j)] = 1.0 - dot / (norms[i] * norms[j]);
            }
        }
    }
    let mut oracle: Vec<f64> = dist.symmetric_eigen().eigenvalues.iter().copied().collect();
    oracle.sort_by(|a, b| b.partial_cmp(a).unwrap());

    assert_eq!(stats.eigenvalues.len(), 20);
    for (idx, (probe, reference)) in stats.eigenvalues.iter().zip(&oracle).enumerate() {
        assert!(
            (probe - reference).abs() < 1e-8,
            "eigenvalue {idx}: probe {probe:.12} vs dense solver {reference:.12}"
        );
    }
}

#[test]
fn uniform_latents_on_a_grid_codebook_spread_usage_evenly() {
    // 4×4 grid of cell centers tiling [0,1]²; uniform draws land in each
    // cell with equal probability, so usage is a balanced multinomial.
    let side = 4;
    let mut codebook = Matrix::zeros(side * side, 2);
    for i in 0..side {
        for j in 0..side {
            codebook.data[(i * side + j) * 2] = (i as f64 + 0.5) / side as f64;
            codebook.data[(i * side + j) * 2 + 1] = (j as f64 + 0.5) / side as f64;
        }
    }
    let n = 100_000;
    let mut rng = stream(46, "uniform-latents", 0);
    let latents = Matrix {
        rows: n,
        cols: 2,
        data: (0..n * 2).map(|_| rng.random_range(0.0..1.0)).collect(),
    };
    let counts = code_usage_counts(&codebook, &latents).unwrap();
    assert_eq!(counts.iter().sum::<usize>(), n, "usage must conserve the dataset size");
    let max = counts[0];
    let min = *counts.last().unwrap();
    assert!(min > 0, "every grid cell must be hit");
    assert!(
        (max as f64) / (min as f64) < 2.0,
        "balanced multinomial concentration violated: max {max}, min {min}"
    );
}
