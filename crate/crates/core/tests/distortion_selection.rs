use geoscale_core::kernel::{default_grid, DEFAULT_GAMMA};
use geoscale_core::{
    compute_distortion, embed_with_noise, generate_dome, generate_plane, log_grid,
    pairwise_sq_dists, select_bandwidth, subsample, DistortionOptions, GeoscaleError, MetricKind,
    NoiseSpec, NormKind, PointCloud,
};

fn padded_plane(n: usize, seed: u64) -> PointCloud {
    embed_with_noise(
        &generate_plane(n, seed).unwrap(),
        &NoiseSpec::new(13, 0.0, seed),
    )
    .unwrap()
}

fn noisy_dome(n: usize, sigma: f64, seed: u64) -> PointCloud {
    embed_with_noise(
        &generate_dome(n, seed).unwrap(),
        &NoiseSpec::new(13, sigma, seed),
    )
    .unwrap()
}

#[test]
fn flat_plane_curve_is_u_shaped() {
    let x = padded_plane(2000, 1);
    let grid = default_grid(&pairwise_sq_dists(&x), DEFAULT_GAMMA, 20).unwrap();
    let curve = select_bandwidth(&x, &grid, 200, 1, &DistortionOptions::with_d_prime(2)).unwrap();
    let d = curve.distortions();
    let best = d[curve.argmin()];
    assert!(curve.argmin() > 0 && curve.argmin() < 19);
    assert!(best < 0.05, "D(eps_hat) = {best}");
    assert!(d[0] > 5.0 * best && d[19] > 5.0 * best, "{d:?}");
}

#[test]
fn half_samples_agree_within_standard_error() {
    let x = noisy_dome(400, 0.01, 3);
    let all = subsample(&x, 400, 7).unwrap();
    let (a, b) = all.split_at(200);
    let opts = DistortionOptions::with_d_prime(2);
    for eps in [0.15, 0.25, 0.4] {
        let ra = compute_distortion(&x, eps, a, &opts).unwrap();
        let rb = compute_distortion(&x, eps, b, &opts).unwrap();
        let sq = |r: &geoscale_core::DistortionResult| -> Vec<f64> {
            r.per_point
                .iter()
                .map(|p| p.deviation * p.deviation)
                .collect()
        };
        let var = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
        };
        let (sa, sb) = (sq(&ra), sq(&rb));
        let se = (var(&sa) / sa.len() as f64 + var(&sb) / sb.len() as f64).sqrt();
        assert!(
            (ra.distortion - rb.distortion).abs() < 3.0 * se,
            "eps {eps}: {} vs {} (se {se})",
            ra.distortion,
            rb.distortion
        );
    }
}

#[test]
fn selector_is_scale_covariant() {
    let x = noisy_dome(300, 0.01, 5);
    let grid = default_grid(&pairwise_sq_dists(&x), DEFAULT_GAMMA, 12).unwrap();
    let opts = DistortionOptions::default();
    let a = select_bandwidth(&x, &grid, 100, 2, &opts).unwrap();
    let b = select_bandwidth(
        &x.scaled(2.0).unwrap(),
        &grid.scaled(2.0).unwrap(),
        100,
        2,
        &opts,
    )
    .unwrap();
    assert_eq!(b.eps_hat, 2.0 * a.eps_hat);
    for (p, q) in a.distortions().iter().zip(b.distortions()) {
        assert!((p - q).abs() <= 1e-10 * p.max(1.0), "{p} {q}");
    }
}

#[test]
fn selection_is_deterministic_across_thread_counts() {
    let x = noisy_dome(300, 0.01, 8);
    let grid = default_grid(&pairwise_sq_dists(&x), DEFAULT_GAMMA, 10).unwrap();
    let opts = DistortionOptions::with_d_prime(2);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| select_bandwidth(&x, &grid, 150, 4, &opts).unwrap())
    };
    let one = run(1);
    assert_eq!(one.to_json().unwrap(), run(3).to_json().unwrap());
    assert_eq!(one.to_csv(), run(1).to_csv());
}

#[test]
fn plain_norm_is_mean_deviation() {
    let x = noisy_dome(200, 0.01, 9);
    let idx: Vec<usize> = (0..50).collect();
    let opts = DistortionOptions {
        norm: NormKind::Plain,
        ..DistortionOptions::default()
    };
    let r = compute_distortion(&x, 0.3, &idx, &opts).unwrap();
    assert!((r.distortion - r.mean_deviation()).abs() < 1e-15);
    let sq = compute_distortion(&x, 0.3, &idx, &DistortionOptions::default()).unwrap();
    let expect = sq
        .per_point
        .iter()
        .map(|p| p.deviation.powi(2))
        .sum::<f64>()
        / sq.n_evaluated() as f64;
    assert!((sq.distortion - expect).abs() < 1e-15);
}

#[test]
fn inverse_metric_on_rank_deficient_frames_fails_cleanly() {
    // planar data with d′ = 3: the third tangent direction has no spread, so
    // every H is singular and the inverse cannot be formed.
    let x = padded_plane(200, 2);
    let grid = log_grid(0.1, 0.5, 4).unwrap();
    let opts = DistortionOptions {
        d_prime: 3,
        metric: MetricKind::Inverse,
        norm: NormKind::Squared,
    };
    let idx: Vec<usize> = (0..20).collect();
    let err = compute_distortion(&x, 0.2, &idx, &opts).unwrap_err();
    assert!(matches!(
        err,
        GeoscaleError::DistortionUndefined { evaluated: 20, .. }
    ));
    let err = select_bandwidth(&x, &grid, 20, 1, &opts).unwrap_err();
    assert!(matches!(err, GeoscaleError::Selection(_)));
}

#[test]
fn bad_requests_are_rejected() {
    let x = noisy_dome(50, 0.0, 1);
    let opts = DistortionOptions::default();
    assert!(compute_distortion(&x, 0.3, &[], &opts).is_err());
    assert!(compute_distortion(&x, 0.3, &[50], &opts).is_err());
    assert!(compute_distortion(&x, 0.3, &[0], &DistortionOptions::with_d_prime(14)).is_err());
    let grid = log_grid(0.1, 1.0, 3).unwrap();
    assert!(select_bandwidth(&x, &grid, 51, 1, &opts).is_err());
}

#[test]
fn curve_outputs_have_fixed_columns() {
    let x = noisy_dome(120, 0.01, 4);
    let grid = log_grid(0.2, 0.8, 3).unwrap();
    let curve = select_bandwidth(&x, &grid, 40, 1, &DistortionOptions::default()).unwrap();
    let csv = curve.to_csv();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("epsilon,distortion,n_evaluated,n_failed")
    );
    assert_eq!(lines.count(), 3);
    let json: serde_json::Value = serde_json::from_str(&curve.to_json().unwrap()).unwrap();
    assert_eq!(json["results"].as_array().unwrap().len(), 3);
    assert_eq!(json["eps_hat"].as_f64().unwrap(), curve.eps_hat);
}
