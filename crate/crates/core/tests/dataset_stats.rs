use geoscale_core::dataset::{hourglass_area_density, hourglass_radius};
use geoscale_core::{generate_dome, generate_hourglass, subsample};

/// Composite Simpson rule; the oracle for the hourglass area element.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let mut s = f(a) + f(b);
    for k in 1..panels {
        let x = a + k as f64 * h;
        s += if k % 2 == 1 { 4.0 * f(x) } else { 2.0 * f(x) };
    }
    s * h / 3.0
}

fn area_density(z: f64) -> f64 {
    // ρ(z) sqrt(1 + ρ'(z)²) with ρ = 0.3 + z², written out independently
    (0.3 + z * z) * (1.0 + 4.0 * z * z).sqrt()
}

fn area_below(z: f64) -> f64 {
    simpson(area_density, -1.0, z, 2000)
}

/// z-values splitting the hourglass into `bands` pieces of equal area.
fn equal_area_edges(bands: usize) -> Vec<f64> {
    let total = area_below(1.0);
    let mut edges = vec![-1.0];
    for k in 1..bands {
        let target = total * k as f64 / bands as f64;
        let (mut lo, mut hi) = (-1.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if area_below(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        edges.push(0.5 * (lo + hi));
    }
    edges.push(1.0);
    edges
}

#[test]
fn area_density_matches_closed_form() {
    for z in [-1.0, -0.4, 0.0, 0.25, 1.0] {
        assert!((hourglass_area_density(z) - area_density(z)).abs() < 1e-14);
        assert!((hourglass_radius(z) - (0.3 + z * z)).abs() < 1e-15);
    }
}

#[test]
fn hourglass_is_uniform_in_area() {
    let n = 20_000;
    let bands = 10;
    let cloud = generate_hourglass(n, 1).unwrap();
    let edges = equal_area_edges(bands);
    let mut counts = vec![0usize; bands];
    for i in 0..n {
        let z = cloud.points()[(i, 2)];
        let k = edges
            .windows(2)
            .position(|w| z >= w[0] && z <= w[1])
            .unwrap();
        counts[k] += 1;
    }
    let expected = n as f64 / bands as f64;
    let chi2: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    // χ²₉ upper 1% point
    assert!(chi2 < 21.666, "chi2 = {chi2}, counts = {counts:?}");
}

#[test]
fn hourglass_angle_is_uniform() {
    let n = 20_000;
    let bands = 8;
    let cloud = generate_hourglass(n, 2).unwrap();
    let mut counts = vec![0usize; bands];
    for i in 0..n {
        let p = cloud.row(i);
        let theta = p[1].atan2(p[0]) + std::f64::consts::PI;
        let k = ((theta / std::f64::consts::TAU * bands as f64) as usize).min(bands - 1);
        counts[k] += 1;
    }
    let expected = n as f64 / bands as f64;
    let chi2: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    // χ²₇ upper 1% point
    assert!(chi2 < 18.475, "chi2 = {chi2}");
}

#[test]
fn dome_height_is_uniform() {
    // On the unit hemisphere the area above height z is 2π(1 − z), so z is U[0, 1].
    let n = 20_000;
    let bands = 10;
    let cloud = generate_dome(n, 3).unwrap();
    let mut counts = vec![0usize; bands];
    for i in 0..n {
        let z = cloud.points()[(i, 2)];
        counts[((z * bands as f64) as usize).min(bands - 1)] += 1;
    }
    let expected = n as f64 / bands as f64;
    let chi2: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    assert!(chi2 < 21.666, "chi2 = {chi2}");
}

#[test]
fn subsample_includes_each_index_at_the_right_rate() {
    let (n, n_prime, trials) = (50, 10, 4000);
    let cloud = generate_dome(n, 0).unwrap();
    let mut hits = 0usize;
    for seed in 0..trials {
        let idx = subsample(&cloud, n_prime, seed).unwrap();
        assert_eq!(idx.len(), n_prime);
        if idx.contains(&0) {
            hits += 1;
        }
    }
    let p = n_prime as f64 / n as f64;
    let freq = hits as f64 / trials as f64;
    let sd = (p * (1.0 - p) / trials as f64).sqrt();
    assert!((freq - p).abs() < 3.0 * sd, "freq = {freq}");
}

#[test]
fn subsample_is_distinct_and_in_range() {
    let cloud = generate_dome(300, 0).unwrap();
    let mut idx = subsample(&cloud, 200, 9).unwrap();
    assert!(idx.iter().all(|&i| i < 300));
    idx.sort_unstable();
    idx.dedup();
    assert_eq!(idx.len(), 200);
}
