//! Release acceptance gate: every headline claim of the library, checked in
//! one place. Each criterion prints a single PASS/FAIL line (visible with
//! `--nocapture`, and always shown when the gate fails); the test fails if
//! any criterion fails.
//!
//! The final criterion runs the full replication benchmark at default
//! settings, which dominates the runtime of the whole suite (minutes, and
//! bounded below half an hour by the runtime criterion itself).

use std::time::Instant;

use dae_core::analysis::{code_usage_counts, codebook_cosine_stats, lipschitz_complexity};
use dae_core::linalg::Matrix;
use dae_core::models::{Activation, Model, ModelConfig, ModelKind};
use dae_core::oracles::{run_oracle_suite, OracleOverrides, OracleReport};
use dae_core::rng::stream;
use dae_core::table1::{
    run_table1, Table1Config, ROW_LATENT_LARGE_ENCODER, ROW_LATENT_SMALL_ENCODER,
    ROW_RECON_BASELINE, ROW_RECON_DAE_HALVED,
};
use dae_core::train::{gradient_probe_error, TrainParams};
use rand::Rng;

struct Criterion {
    name: &'static str,
    passed: bool,
    detail: String,
}

/// Pulls named checks out of the oracle battery and reports their joint
/// outcome with the worst residual.
fn oracle_group(report: &OracleReport, name: &'static str, checks: &[&str]) -> Criterion {
    let mut passed = true;
    let mut worst: f64 = 0.0;
    let mut missing = Vec::new();
    for &wanted in checks {
        match report.checks.iter().find(|c| c.name == wanted) {
            Some(check) => {
                passed &= check.passed;
                if check.tolerance > 0.0 {
                    worst = worst.max(check.residual / check.tolerance);
                }
            }
            None => missing.push(wanted),
        }
    }
    if !missing.is_empty() {
        return Criterion {
            name,
            passed: false,
            detail: format!("missing oracle checks: {missing:?}"),
        };
    }
    Criterion {
        name,
        passed,
        detail: format!(
            "{} checks, worst residual at {:.1}% of tolerance",
            checks.len(),
            worst * 100.0
        ),
    }
}

fn gradient_integrity() -> Criterion {
    const SEEDS: u64 = 20;
    const THRESHOLD: f64 = 1e-4;
    let params = TrainParams::default();
    let mut worst: f64 = 0.0;
    for kind in [ModelKind::Ae, ModelKind::Vae, ModelKind::VqAe] {
        let config = ModelConfig {
            kind,
            encoder_dims: vec![5, 6, 6, 2],
            decoder_dims: vec![2, 6, 6, 5],
            activation: Activation::Relu,
            codebook_size: (kind == ModelKind::VqAe).then_some(7),
        };
        for seed in 0..SEEDS {
            let mut init_rng = stream(seed, "acceptance-grad-init", 0);
            let model = Model::init(&config, &mut init_rng).unwrap();
            let mut data_rng = stream(seed, "acceptance-grad-batch", 0);
            let batch = Matrix {
                rows: 4,
                cols: 5,
                data: (0..20).map(|_| data_rng.random_range(-1.5..1.5)).collect(),
            };
            let err = gradient_probe_error(&model, &batch, &params, None, seed, 1e-5).unwrap();
            worst = worst.max(err);
        }
    }
    Criterion {
        name: "gradient integrity: analytic gradients of the plain, variational, and quantized losses match finite differences (20 seeds each)",
        passed: worst < THRESHOLD,
        detail: format!("worst max relative error {worst:.3e} (threshold {THRESHOLD:.0e})"),
    }
}

/// Points with few-mantissa-bit coordinates so scaling by 10 stays exact.
fn dyadic_points(n: usize, d: usize, seed: u64) -> Matrix {
    let mut rng = stream(seed, "acceptance-dyadic", 0);
    Matrix {
        rows: n,
        cols: d,
        data: (0..n * d)
            .map(|_| rng.random_range(-(1 << 20)..(1 << 20)) as f64 / (1 << 20) as f64)
            .collect(),
    }
}

fn complexity_exactness() -> (bool, String) {
    let pts = dyadic_points(80, 4, 11);
    let base = lipschitz_complexity(&pts, &pts, 2048, 5).unwrap();
    let identity_exact = base.c_lip == 1.0;
    let mut covariance_exact = true;
    for lambda in [0.5, 2.0, 10.0] {
        let scaled = Matrix {
            rows: pts.rows,
            cols: pts.cols,
            data: pts.data.iter().map(|v| v * lambda).collect(),
        };
        let est = lipschitz_complexity(&pts, &scaled, 2048, 5).unwrap();
        covariance_exact &= est.c_lip == lambda * base.c_lip;
    }
    (
        identity_exact && covariance_exact,
        format!("identity exact: {identity_exact}, scale covariance exact for (0.5, 2, 10): {covariance_exact}"),
    )
}

fn codebook_diagnostics() -> Criterion {
    // Orthonormal codebook: cosine-distance spectrum is K−1 once and −1
    // with multiplicity K−1.
    let k = 8;
    let mut eye = vec![0.0; k * k];
    for i in 0..k {
        eye[i * k + i] = 1.0;
    }
    let orthonormal = Matrix {
        rows: k,
        cols: k,
        data: eye,
    };
    let stats = codebook_cosine_stats(&orthonormal).unwrap();
    let mut spectrum_ok = stats.eigenvalues.len() == k;
    if spectrum_ok {
        spectrum_ok &= (stats.eigenvalues[0] - (k as f64 - 1.0)).abs() < 1e-8;
        for &ev in &stats.eigenvalues[1..] {
            spectrum_ok &= (ev + 1.0).abs() < 1e-8;
        }
    }

    // Duplicated codebook: every pairwise similarity is 1.
    let duplicated = Matrix {
        rows: 6,
        cols: 3,
        data: [0.3, -1.2, 0.7].repeat(6),
    };
    let dup_stats = codebook_cosine_stats(&duplicated).unwrap();
    let duplicates_ok = (dup_stats.min - 1.0).abs() < 1e-12
        && (dup_stats.max - 1.0).abs() < 1e-12
        && (dup_stats.mean - 1.0).abs() < 1e-12;

    // Usage counts always conserve the dataset size.
    let mut conservation_ok = true;
    for seed in 0..3u64 {
        let mut rng = stream(seed, "acceptance-usage", 0);
        let codebook = Matrix {
            rows: 16,
            cols: 4,
            data: (0..64).map(|_| rng.random_range(-1.0..1.0)).collect(),
        };
        let latents = Matrix {
            rows: 1000,
            cols: 4,
            data: (0..4000).map(|_| rng.random_range(-2.0..2.0)).collect(),
        };
        let counts = code_usage_counts(&codebook, &latents).unwrap();
        conservation_ok &= counts.iter().sum::<usize>() == 1000;
    }

    Criterion {
        name: "codebook diagnostics: orthonormal spectrum, duplicate similarities, usage conservation",
        passed: spectrum_ok && duplicates_ok && conservation_ok,
        detail: format!(
            "orthonormal spectrum {{K-1, -1 x (K-1)}} within 1e-8: {spectrum_ok}, duplicated similarities all 1: {duplicates_ok}, counts conserve dataset size: {conservation_ok}"
        ),
    }
}

#[test]
fn acceptance_criteria() {
    let mut results: Vec<Criterion> = Vec::new();

    // Analytic cross-checks (seconds each): the oracle battery implements
    // them with the exact instance counts and tolerances claimed.
    let report = run_oracle_suite(0, &OracleOverrides::default()).unwrap();
    results.push(oracle_group(
        &report,
        "linear autoencoder: gradient training reaches the spectral optimum (50 instances, 1%) and the closed-form encoder satisfies the projector identity (1e-10)",
        &[
            "linear_ae.gradient_training_matches_pca",
            "linear_ae.projector_identity",
        ],
    ));
    results.push(oracle_group(
        &report,
        "norm-bounded encoder: below the threshold every restart stays suboptimal by > 1e-3 relative; the witness bound reaches the optimum within 1e-3",
        &[
            "norm_bound.below_threshold_is_suboptimal",
            "norm_bound.below_threshold_conclusive",
            "norm_bound.witness_bound_achieves_optimum",
        ],
    ));
    results.push(oracle_group(
        &report,
        "cross-dimensional transport gap: closed form matches the 10^4-point grid search within 1e-4 on a 20x20 (sigma, spectrum) grid including branch boundaries",
        &[
            "gaussian_w2.grid_agreement_20x20",
            "gaussian_w2.continuous_at_branch_boundaries",
        ],
    ));
    results.push(oracle_group(
        &report,
        "1-D truncation: quadrature TV matches a 10^7-sample Monte-Carlo within 2e-3 for c in {3, 5, 10} and is monotone over log-spaced c in [3, 10^6]",
        &[
            "truncation.quadrature_matches_monte_carlo",
            "truncation.tv_monotone_in_c",
        ],
    ));

    // Engine-level criteria (seconds).
    results.push(gradient_integrity());
    let (exact_ok, exact_detail) = complexity_exactness();
    results.push(codebook_diagnostics());

    // The benchmark at default settings: directional orderings are hard
    // assertions, absolute means are compared against the reference table
    // and reported only.
    let config = Table1Config::default();
    let t0 = Instant::now();
    let mut progress = |done: usize, note: &str| {
        eprintln!(
            "[acceptance {:>4.0?}] benchmark replication {done}/{} ({note})",
            t0.elapsed(),
            config.replications
        );
    };
    let table = run_table1(&config, Some(&mut progress)).unwrap();
    let elapsed = t0.elapsed();
    let runtime_ok = elapsed.as_secs_f64() < 30.0 * 60.0;

    let row = |name: &str| table.row(name).unwrap();
    let small = row(ROW_LATENT_SMALL_ENCODER);
    let large = row(ROW_LATENT_LARGE_ENCODER);
    let base = row(ROW_RECON_BASELINE);
    let halved = row(ROW_RECON_DAE_HALVED);
    let n = table.seeds.len();

    let latent_means_ok = large.mean > small.mean;
    let latent_wins_ok = table.latent_ordering_wins >= 8;
    let dae_means_ok = halved.mean > base.mean;
    let dae_wins_ok = table.dae_halved_wins >= 8;
    let band = |r: &dae_core::table1::Table1Row| -> String {
        format!(
            "{} {:+.1} ({})",
            r.name,
            r.reference_delta.unwrap_or(f64::NAN),
            if r.within_soft_band == Some(true) { "in band" } else { "outside band, reported only" }
        )
    };
    results.push(Criterion {
        name: "benchmark directional reproduction: wide-encoder latent ordering and two-stage reconstruction ordering hold in means and in >= 8 of 10 paired seeds, under 30 minutes",
        passed: latent_means_ok && latent_wins_ok && dae_means_ok && dae_wins_ok && runtime_ok,
        detail: format!(
            "latent means {:.1} vs {:.1} ({}/{} seeds), two-stage means {:.1} vs {:.1} ({}/{} seeds), runtime {:.0?}; reference deltas: {}, {}, {}, {}",
            large.mean,
            small.mean,
            table.latent_ordering_wins,
            n,
            halved.mean,
            base.mean,
            table.dae_halved_wins,
            n,
            elapsed,
            band(small),
            band(large),
            band(base),
            band(halved),
        ),
    });
    results.push(Criterion {
        name: "complexity probe: identity and scale covariance are exact; two-stage training lands closer to unit complexity than the baseline in >= 7 of 10 seeds",
        passed: exact_ok && table.complexity_dae_wins >= 7,
        detail: format!(
            "{exact_detail}; two-stage deviation below baseline in {}/{} seeds",
            table.complexity_dae_wins, n
        ),
    });

    let mut failures = Vec::new();
    for criterion in &results {
        let verdict = if criterion.passed { "PASS" } else { "FAIL" };
        println!("{verdict} {} — {}", criterion.name, criterion.detail);
        if !criterion.passed {
            failures.push(criterion.name);
        }
    }
    assert!(failures.is_empty(), "failed acceptance criteria: {failures:#?}");
}
