use std::path::Path;

use geoscale_core::dataset::cloud_to_csv;
use geoscale_core::{
    clmr_range, embed_with_noise, epsilon_max, epsilon_min, generate_dome, generate_hourglass,
    generate_plane, load_csv, log_grid, multiscale_svd, pairwise_sq_dists, select_bandwidth,
    select_bandwidth_rec, smoothing_delta, subsample, DistortionCurve, EpsilonGrid, GeoscaleError,
    MetricKind, NoiseSpec, NormKind, PointCloud,
};
use serde::Serialize;

use crate::config::{
    CompareArgs, EstimateArgs, GenerateArgs, Generator, GridArgs, Metric, SmoothingArgs,
};
use crate::error::{AtStage, CliError, CliResult, Stage};
use crate::output::{Format, OutputDir};

fn load(path: &Path) -> CliResult<PointCloud> {
    load_csv(path).map_err(|e| CliError {
        stage: Stage::Load,
        input: true,
        message: format!("{}: {e}", path.display()),
    })
}

fn build_grid(cloud: &PointCloud, args: &GridArgs) -> CliResult<EpsilonGrid> {
    let sq = pairwise_sq_dists(cloud);
    let lo = match args.eps_min {
        Some(v) => v,
        None => epsilon_min(&sq, args.gamma).at(Stage::Grid)?,
    };
    let hi = match args.eps_max {
        Some(v) => v,
        None => epsilon_max(&sq).at(Stage::Grid)?,
    };
    log_grid(lo, hi, args.count).at(Stage::Grid)
}

fn curve_text(curve: &DistortionCurve, format: Format) -> CliResult<String> {
    match format {
        Format::Csv => Ok(curve.to_csv()),
        Format::Json => curve.to_json().map(|s| s + "\n").at(Stage::Write),
    }
}

fn json_text<T: Serialize>(value: &T) -> CliResult<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| CliError {
            stage: Stage::Write,
            input: false,
            message: e.to_string(),
        })
}

fn metric_name(kind: MetricKind) -> &'static str {
    match kind {
        MetricKind::Dual => "dual",
        MetricKind::Inverse => "inverse",
    }
}

fn norm_name(kind: NormKind) -> &'static str {
    match kind {
        NormKind::Squared => "squared",
        NormKind::Plain => "plain",
    }
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'static str,
    generator: &'static str,
    n: usize,
    sigma: f64,
    ambient_dim: usize,
    seed: u64,
    clean_file: &'a str,
    noisy_file: &'a str,
}

pub fn generate(args: &GenerateArgs) -> CliResult<Vec<String>> {
    args.validate()?;
    let mut out = OutputDir::create(&args.out)?;
    let clean = match args.generator {
        Generator::Hourglass => generate_hourglass(args.n, args.seed),
        Generator::Dome => generate_dome(args.n, args.seed),
        Generator::Plane => generate_plane(args.n, args.seed),
    }
    .at(Stage::Generate)?;
    let noisy = embed_with_noise(
        &clean,
        &NoiseSpec::new(args.ambient_dim, args.sigma, args.seed),
    )
    .at(Stage::Generate)?;
    out.write("clean.csv", &cloud_to_csv(&clean))?;
    out.write("noisy.csv", &cloud_to_csv(&noisy))?;
    out.write_json(
        "manifest.json",
        &Manifest {
            command: "generate",
            generator: args.generator.name(),
            n: args.n,
            sigma: args.sigma,
            ambient_dim: args.ambient_dim,
            seed: args.seed,
            clean_file: "clean.csv",
            noisy_file: "noisy.csv",
        },
    )?;
    Ok(vec![format!(
        "wrote {} clean and noisy points to {}",
        args.n,
        args.out.display()
    )])
}

#[derive(Serialize)]
struct Replicate {
    seed: u64,
    eps_hat: f64,
    distortion: f64,
    curve_file: String,
}

#[derive(Serialize)]
struct EstimateReport<'a> {
    command: &'static str,
    input: &'a str,
    n: usize,
    ambient_dim: usize,
    d_prime: usize,
    n_prime: usize,
    metric: &'static str,
    norm: &'static str,
    grid: &'a [f64],
    replicates: Vec<Replicate>,
    eps_hat_mean: f64,
    /// Sample standard deviation; 0 for a single replicate.
    eps_hat_std: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn estimate(args: &EstimateArgs) -> CliResult<Vec<String>> {
    args.validate()?;
    let cloud = load(&args.input)?;
    args.select.validate_for(cloud.n(), cloud.ambient_dim())?;
    let mut out = OutputDir::create(&args.output.out)?;
    let grid = build_grid(&cloud, &args.grid)?;
    let opts = args.select.options(args.metric);

    let mut replicates = Vec::with_capacity(args.replicates);
    for k in 0..args.replicates as u64 {
        let seed = args.select.seed + k;
        let curve = select_bandwidth(&cloud, &grid, args.select.n_prime, seed, &opts)
            .at(Stage::Estimate)?;
        let name = format!("distortion_seed{seed}.{}", args.output.format.extension());
        out.write(&name, &curve_text(&curve, args.output.format)?)?;
        replicates.push(Replicate {
            seed,
            eps_hat: curve.eps_hat,
            distortion: curve.selected().distortion,
            curve_file: name,
        });
    }
    let eps: Vec<f64> = replicates.iter().map(|r| r.eps_hat).collect();
    let (eps_hat_mean, eps_hat_std) = mean_std(&eps);
    let input = args.input.to_string_lossy();
    out.write_json(
        "estimate.json",
        &EstimateReport {
            command: "estimate",
            input: &input,
            n: cloud.n(),
            ambient_dim: cloud.ambient_dim(),
            d_prime: opts.d_prime,
            n_prime: args.select.n_prime,
            metric: metric_name(opts.metric),
            norm: norm_name(opts.norm),
            grid: grid.values(),
            replicates,
            eps_hat_mean,
            eps_hat_std,
        },
    )?;
    Ok(if args.replicates == 1 {
        vec![format!("eps_hat = {eps_hat_mean}")]
    } else {
        vec![format!(
            "eps_hat = {eps_hat_mean} ± {eps_hat_std} over {} replicates",
            args.replicates
        )]
    })
}

#[derive(Serialize)]
struct CompareRow {
    method: &'static str,
    eps_hat: Option<f64>,
    eps_lo: Option<f64>,
    eps_hi: Option<f64>,
    status: String,
}

#[derive(Serialize)]
struct CompareReport<'a> {
    command: &'static str,
    input: &'a str,
    n: usize,
    ambient_dim: usize,
    d_prime: usize,
    n_prime: usize,
    seed: u64,
    k: usize,
    grid: &'a [f64],
    methods: Vec<CompareRow>,
}

fn csv_cell(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), geoscale_core::dataset::format_f64)
}

pub fn compare(args: &CompareArgs) -> CliResult<Vec<String>> {
    args.validate()?;
    let cloud = load(&args.input)?;
    args.select.validate_for(cloud.n(), cloud.ambient_dim())?;
    let n_values = cloud.ambient_dim().min(cloud.n() - 1);
    if args.k + 1 > n_values {
        return Err(CliError::config(format!(
            "--k ({}) needs K + 1 <= {n_values} local singular values",
            args.k
        )));
    }
    let mut out = OutputDir::create(&args.output.out)?;
    let fmt = args.output.format;
    let ext = fmt.extension();
    let grid = build_grid(&cloud, &args.grid)?;
    let (n_prime, seed) = (args.select.n_prime, args.select.seed);
    let mut rows = Vec::with_capacity(4);

    let gc = select_bandwidth(
        &cloud,
        &grid,
        n_prime,
        seed,
        &args.select.options(Metric::Dual),
    )
    .at(Stage::Compare)?;
    out.write(&format!("gc.{ext}"), &curve_text(&gc, fmt)?)?;
    rows.push(CompareRow {
        method: "gc",
        eps_hat: Some(gc.eps_hat),
        eps_lo: None,
        eps_hi: None,
        status: "ok".into(),
    });

    let inverse_opts = args.select.options(Metric::Inverse);
    match select_bandwidth(&cloud, &grid, n_prime, seed, &inverse_opts) {
        Ok(curve) => {
            out.write(&format!("gc_inverse.{ext}"), &curve_text(&curve, fmt)?)?;
            rows.push(CompareRow {
                method: "gc_inverse",
                eps_hat: Some(curve.eps_hat),
                eps_lo: None,
                eps_hi: None,
                status: "ok".into(),
            });
        }
        // The inverse metric may be unformable everywhere; that is a result.
        Err(GeoscaleError::Selection(msg)) => rows.push(CompareRow {
            method: "gc_inverse",
            eps_hat: None,
            eps_lo: None,
            eps_hi: None,
            status: format!("failed: {msg}"),
        }),
        Err(e) => return Err(e).at(Stage::Compare),
    }

    let rec = select_bandwidth_rec(&cloud, &grid).at(Stage::Compare)?;
    match fmt {
        Format::Csv => out.write("rec.csv", &rec.to_csv())?,
        Format::Json => out.write("rec.json", &json_text(&rec)?)?,
    }
    rows.push(CompareRow {
        method: "rec",
        eps_hat: Some(rec.eps_hat),
        eps_lo: None,
        eps_hi: None,
        status: "ok".into(),
    });

    let idx = subsample(&cloud, n_prime, seed).at(Stage::Compare)?;
    let profile = multiscale_svd(&cloud, &grid, n_values, &idx).at(Stage::Compare)?;
    match fmt {
        Format::Csv => out.write("svd_profile.csv", &profile.to_csv())?,
        Format::Json => out.write("svd_profile.json", &json_text(&profile)?)?,
    }
    let range = clmr_range(&profile, args.k).at(Stage::Compare)?;
    let status = match (range.defined_lo, range.defined_hi) {
        (true, true) => "ok",
        (false, true) => "lower limit not found",
        (true, false) => "upper limit not found",
        (false, false) => "no limits found",
    };
    rows.push(CompareRow {
        method: "clmr",
        eps_hat: None,
        eps_lo: finite(range.eps_lo),
        eps_hi: finite(range.eps_hi),
        status: status.into(),
    });

    let mut lines = Vec::new();
    let mut table = String::from("method,eps_hat,eps_lo,eps_hi,status\n");
    for r in &rows {
        table.push_str(&format!(
            "{},{},{},{},{}\n",
            r.method,
            csv_cell(r.eps_hat),
            csv_cell(r.eps_lo),
            csv_cell(r.eps_hi),
            r.status.replace(',', ";")
        ));
        lines.push(format!(
            "{:<10} eps_hat={} range=[{}, {}] {}",
            r.method,
            csv_cell(r.eps_hat),
            csv_cell(r.eps_lo),
            csv_cell(r.eps_hi),
            r.status
        ));
    }
    if fmt == Format::Csv {
        out.write("compare.csv", &table)?;
    }
    let input = args.input.to_string_lossy();
    out.write_json(
        "compare.json",
        &CompareReport {
            command: "compare",
            input: &input,
            n: cloud.n(),
            ambient_dim: cloud.ambient_dim(),
            d_prime: args.select.d_prime,
            n_prime,
            seed,
            k: args.k,
            grid: grid.values(),
            methods: rows,
        },
    )?;
    Ok(lines)
}

#[derive(Serialize)]
struct SmoothingReport<'a> {
    command: &'static str,
    clean: &'a str,
    noisy: &'a str,
    n: usize,
    m: usize,
    d_prime: usize,
    n_prime: usize,
    seed: u64,
    metric: &'static str,
    eps_hat: f64,
    delta_at_eps_hat: Option<f64>,
    min_delta: Option<f64>,
    eps_at_min_delta: Option<f64>,
    grid: &'a [f64],
    star_grid: &'a [f64],
    delta_file: String,
    distortion_file: String,
}

pub fn smoothing(args: &SmoothingArgs) -> CliResult<Vec<String>> {
    args.validate()?;
    let clean = load(&args.clean)?;
    let noisy = load(&args.noisy)?;
    if clean.n() != noisy.n() {
        return Err(CliError {
            stage: Stage::Load,
            input: true,
            message: format!(
                "clean and noisy clouds have {} and {} points",
                clean.n(),
                noisy.n()
            ),
        });
    }
    args.select.validate_for(noisy.n(), noisy.ambient_dim())?;
    if args.m + 1 > noisy.n() {
        return Err(CliError::config(format!(
            "--m ({}) must be below the number of points ({})",
            args.m,
            noisy.n()
        )));
    }
    let mut out = OutputDir::create(&args.output.out)?;
    let fmt = args.output.format;
    let ext = fmt.extension();

    // The clean embeddings use the same ε values; a grid built from the
    // clean cloud would be offset and δ would measure the mismatch.
    let grid = build_grid(&noisy, &args.grid)?;
    let opts = args.select.options(args.metric);
    let curve = select_bandwidth(&noisy, &grid, args.select.n_prime, args.select.seed, &opts)
        .at(Stage::Estimate)?;
    let delta = smoothing_delta(&clean, &noisy, &grid, &grid, args.m).at(Stage::Smoothing)?;

    let distortion_file = format!("distortion.{ext}");
    let delta_file = format!("delta.{ext}");
    out.write(&distortion_file, &curve_text(&curve, fmt)?)?;
    match fmt {
        Format::Csv => out.write(&delta_file, &delta.to_csv())?,
        Format::Json => out.write(&delta_file, &json_text(&delta)?)?,
    }
    let at_hat = delta.delta[curve.argmin()];
    let best = geoscale_core::distortion::argmin_first(&delta.delta);
    let (clean_name, noisy_name) = (args.clean.to_string_lossy(), args.noisy.to_string_lossy());
    let report = SmoothingReport {
        command: "smoothing",
        clean: &clean_name,
        noisy: &noisy_name,
        n: noisy.n(),
        m: args.m,
        d_prime: opts.d_prime,
        n_prime: args.select.n_prime,
        seed: args.select.seed,
        metric: metric_name(opts.metric),
        eps_hat: curve.eps_hat,
        delta_at_eps_hat: finite(at_hat),
        min_delta: best.map(|k| delta.delta[k]),
        eps_at_min_delta: best.map(|k| delta.epsilons[k]),
        grid: grid.values(),
        star_grid: grid.values(),
        delta_file,
        distortion_file,
    };
    out.write_json("smoothing.json", &report)?;
    Ok(vec![format!(
        "eps_hat = {}, delta(eps_hat) = {}, min delta = {}",
        curve.eps_hat,
        csv_cell(report.delta_at_eps_hat),
        csv_cell(report.min_delta)
    )])
}
