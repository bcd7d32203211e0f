use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use densreg::adapt::{select, FitConfig};
use densreg::density::{DensityModel, GridSpec};
use densreg::experiment::{self, streams, DensityConfig, ExperimentConfig, InstanceSpec, Method};
use densreg::geodesic::{build_graph, Connectivity, SnapMode};
use densreg::model::{load_labeled, load_points, load_unlabeled, save_labeled, save_unlabeled, Fallback, Point};
use densreg::regress::fit;
use densreg::synth::derive_seed;
use densreg::{Error, Result};
use serde_json::json;

use crate::{Cli, Command, CvArgs, DistArgs, FallbackArg, FitArgs, GenArgs, ModelArgs, SweepArgs};

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    match &cli.command {
        Command::Gen(args) => gen(cli, cfg, args),
        Command::Fit(args) => fit_cmd(cfg, args),
        Command::Cv(args) => cv(cli, cfg, args),
        Command::Sweep(args) => sweep(cli, cfg, args),
        Command::Dist(args) => dist(cfg, args),
    }
}

fn generator_name(spec: &InstanceSpec) -> &'static str {
    match spec {
        InstanceSpec::UniformComponents { .. } => "uniform_components",
        InstanceSpec::LowerBound(_) => "lower_bound",
        InstanceSpec::Smooth(_) => "smooth",
    }
}

/// The file's instance when it names the same generator, else that generator's defaults.
fn instance_spec(cfg: &ExperimentConfig, name: Option<&str>) -> Result<InstanceSpec> {
    match name {
        Some(n) if n != generator_name(&cfg.instance) => InstanceSpec::by_name(n),
        Some(_) | None => Ok(cfg.instance.clone()),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Write { path: dir.to_path_buf(), source })
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                create_dir(parent)?;
            }
            fs::write(p, format!("{text}\n")).map_err(|source| Error::Write { path: p.to_path_buf(), source })
        }
        None => {
            let mut out = std::io::stdout().lock();
            writeln!(out, "{text}")?;
            Ok(())
        }
    }
}

fn gen(cli: &Cli, cfg: ExperimentConfig, args: &GenArgs) -> Result<()> {
    let spec = instance_spec(&cfg, args.generator.as_deref())?;
    let n = args.n.unwrap_or(cfg.n[0]);
    let m = args.m.unwrap_or(cfg.m[0]);
    let seed = cli.seed.unwrap_or(cfg.seeds[0]);
    let instance = spec.build()?;
    let labeled = instance.sample_labeled(n, derive_seed(seed, streams::LABELED))?;
    let unlabeled = instance.sample_unlabeled(m, derive_seed(seed, streams::UNLABELED))?;

    let dir = &cli.output_dir;
    create_dir(dir)?;
    save_labeled(&labeled, dir.join("labeled.csv"))?;
    save_unlabeled(&unlabeled, dir.join("unlabeled.csv"))?;
    let mut sidecar = serde_json::to_value(instance.sidecar())?;
    sidecar["seed"] = json!(seed);
    sidecar["n"] = json!(n);
    sidecar["m"] = json!(m);
    let path = dir.join("instance.json");
    write_output(Some(&path), &serde_json::to_string_pretty(&sidecar)?)?;
    println!("wrote {} labeled and {} unlabeled points to {}", n, m, dir.display());
    Ok(())
}

fn density_config(cfg: &ExperimentConfig, args: &ModelArgs) -> DensityConfig {
    let base = &cfg.density;
    DensityConfig {
        resolution: args.resolution.or(base.resolution),
        pad_fraction: args.pad_fraction.unwrap_or(base.pad_fraction),
        c1: args.c1.unwrap_or(base.c1),
        c2: args.c2.unwrap_or(base.c2),
        bandwidth: args.kde_bandwidth.or(base.bandwidth),
    }
}

fn fit_config(cfg: &ExperimentConfig, args: &ModelArgs, fallback: Option<FallbackArg>, truncate: Option<f64>) -> Result<FitConfig> {
    let mut f = cfg.fit;
    if let Some(c) = &args.connectivity {
        f.connectivity = c.parse::<Connectivity>()?;
    }
    if let Some(r) = args.snap_radius {
        f.snap = SnapMode::ToInterior { radius: r };
    }
    if let Some(fb) = fallback {
        f.fallback = match fb {
            FallbackArg::LabeledMean => Fallback::LabeledMean,
            FallbackArg::Undefined => Fallback::Undefined,
        };
    }
    if truncate.is_some() {
        f.truncation = truncate;
    }
    Ok(f)
}

/// KDE on a grid covering the unlabeled data and `extra` points.
/// Also returns the unlabeled sample size.
fn build_model(cfg: &ExperimentConfig, args: &ModelArgs, extra: &[Point]) -> Result<(DensityModel, usize)> {
    let unlabeled = load_unlabeled(&args.unlabeled)?;
    let d = unlabeled.dim();
    if let Some(p) = extra.iter().find(|p| p.dim() != d) {
        return Err(Error::Validation(format!(
            "point {:?} has dimension {} but the unlabeled data have dimension {d}",
            p.coords(),
            p.dim()
        )));
    }
    let dens = density_config(cfg, args);
    let all: Vec<Point> = unlabeled.points().iter().chain(extra).cloned().collect();
    let res = dens.resolution.unwrap_or_else(|| GridSpec::default_resolution(d));
    if !(dens.pad_fraction >= 0.0 && dens.pad_fraction.is_finite()) {
        return Err(Error::Config(format!("pad_fraction must be >= 0, got {}", dens.pad_fraction)));
    }
    let grid = GridSpec::covering(&all, dens.pad_fraction, res)?;
    let model = dens.estimate(&grid, &unlabeled)?;
    if model.coarse_bandwidth() {
        eprintln!("warning: KDE bandwidth {} is below the grid spacing", model.h_m());
    }
    if let Some(path) = &args.emit_grid {
        write_output(Some(path), &model.to_json()?)?;
    }
    Ok((model, unlabeled.m()))
}

fn fit_cmd(cfg: ExperimentConfig, args: &FitArgs) -> Result<()> {
    let labeled = load_labeled(&args.labeled)?;
    let queries = match &args.queries {
        Some(p) => load_points(p)?.1,
        None => labeled.points().to_vec(),
    };
    let extra: Vec<Point> = labeled.points().iter().chain(&queries).cloned().collect();
    let (model, _) = build_model(&cfg, &args.model, &extra)?;
    let fc = fit_config(&cfg, &args.model, args.fallback, args.truncate)?;
    let graph = build_graph(&model, args.alpha, fc.connectivity)?.with_snap_mode(fc.snap);
    let spec = densreg::model::EstimatorSpec::new(args.alpha, args.h, fc.fallback)?;
    let reg = fit(&labeled, &graph, spec)?.with_truncation(fc.truncation)?;
    let preds = reg.predict_many(&queries)?;
    let out: Vec<serde_json::Value> = queries
        .iter()
        .zip(&preds)
        .map(|(x, p)| json!({ "x": x.coords(), "yhat": p.value, "covered": p.covered }))
        .collect();
    write_output(args.output.as_deref(), &serde_json::to_string_pretty(&out)?)
}

fn cv(cli: &Cli, cfg: ExperimentConfig, args: &CvArgs) -> Result<()> {
    let labeled = load_labeled(&args.labeled)?;
    let (model, m) = build_model(&cfg, &args.model, labeled.points())?;
    let fc = fit_config(&cfg, &args.model, args.fallback, None)?;
    let mut cand = cfg.candidates.clone();
    if let Some(a) = &args.alphas {
        cand.alphas = Some(a.clone());
    }
    if let Some(h) = &args.bandwidths {
        cand.bandwidths = Some(h.clone());
    }
    if let Some(k) = args.bandwidth_count {
        cand.bandwidth_count = k;
    }
    if let Some(f) = args.split_fraction {
        cand.split_fraction = f;
    }
    let seed = cli.seed.unwrap_or(cfg.seeds[0]);
    let grid = cand.grid(m, seed);
    let report = select(&labeled, &model, &grid, &fc)?;
    write_output(args.output.as_deref(), &report.to_json()?)
}

fn sweep(cli: &Cli, mut cfg: ExperimentConfig, args: &SweepArgs) -> Result<()> {
    cfg.instance = instance_spec(&cfg, args.generator.as_deref())?;
    if let Some(n) = &args.n {
        cfg.n = n.clone();
    }
    if let Some(m) = &args.m {
        cfg.m = m.clone();
    }
    match (&args.seeds, cli.seed) {
        (Some(s), _) => cfg.seeds = s.clone(),
        (None, Some(s)) => cfg.seeds = vec![s],
        (None, None) => {}
    }
    if let Some(methods) = &args.methods {
        cfg.methods = methods.iter().map(|m| m.parse::<Method>()).collect::<Result<_>>()?;
    }
    if let Some(k) = args.n_mc {
        cfg.n_mc = k;
    }
    let path: PathBuf = match (&args.output, &cfg.output) {
        (Some(p), _) | (None, Some(p)) => p.clone(),
        (None, None) => cli.output_dir.join("results.csv"),
    };
    if let Some(parent) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let rows = experiment::sweep(&cfg)?;
    experiment::write_rows_to(&rows, &path)?;
    let failed = rows.iter().filter(|r| !r.is_ok()).count();
    println!("wrote {} rows ({failed} failed) to {}", rows.len(), path.display());
    Ok(())
}

fn dist(cfg: ExperimentConfig, args: &DistArgs) -> Result<()> {
    let (_, points) = load_points(&args.points)?;
    let (model, _) = build_model(&cfg, &args.model, &points)?;
    let fc = fit_config(&cfg, &args.model, None, None)?;
    let graph = build_graph(&model, args.alpha, fc.connectivity)?.with_snap_mode(fc.snap);
    let matrix: Vec<Vec<Option<f64>>> = graph
        .pairwise(&points)
        .into_iter()
        .map(|row| row.into_iter().map(|d| d.reachable.then_some(d.value)).collect())
        .collect();
    let out = json!({
        "schema_version": experiment::SCHEMA_VERSION,
        "alpha": args.alpha,
        "points": points.iter().map(Point::coords).collect::<Vec<_>>(),
        "distances": matrix,
    });
    write_output(args.output.as_deref(), &serde_json::to_string_pretty(&out)?)
}
