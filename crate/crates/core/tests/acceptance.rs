//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use densreg::adapt::{evaluate, select, BandwidthGrid, CandidateGrid, FitConfig};
use densreg::density::{fit_kde, schedule, sup_error, DensityModel, GridSpec, Schedule};
use densreg::experiment::{
    sweep, CandidateConfig, CellData, DensityConfig, ExperimentConfig, InstanceSpec, Method,
};
use densreg::geodesic::{build_graph, Connectivity, GeodesicGraph, SnapMode};
use densreg::model::{EstimatorSpec, Fallback, LabeledSet, Point};
use densreg::regress::fit;
use densreg::synth::{
    derive_seed, make_smooth_instance, make_uniform_components, rng_for, AxisBox, LowerBoundParams, Omega,
    ProblemInstance, SmoothParams, SupportDescriptor,
};
use rand::Rng;
use rayon::prelude::*;

// criterion 1
const ORACLE_GRAPHS: usize = 50;
const ORACLE_TOL: f64 = 1e-12;
const ORACLE_BUDGET: Duration = Duration::from_secs(5);
// criterion 2
const CONTINUUM_M: usize = 10_000;
const CONTINUUM_RES: usize = 100;
const CONTINUUM_KDE_H: f64 = 0.025;
const CONTINUUM_C2: f64 = 0.173;
const CONTINUUM_REL_TOL: f64 = 0.04;
const CONTINUUM_BUDGET: Duration = Duration::from_secs(30);
// criterion 3
const GAP_SEEDS: u64 = 10;
const GAP_N: usize = 10;
const GAP_M: usize = 5000;
const GAP_SS_MAX: f64 = 0.1;
const GAP_EUCLID_MIN: f64 = 0.5;
const GAP_RATIO: f64 = 5.0;
const GAP_BUDGET: Duration = Duration::from_secs(300);
// criterion 4
const SAFETY_SEEDS: u64 = 30;
const SAFETY_N: usize = 200;
const SAFETY_M: usize = 4000;
const SAFETY_BANDWIDTHS: usize = 8;
const SAFETY_C: f64 = 1.0;
const SAFETY_BUDGET: Duration = Duration::from_secs(300);
// criterion 5
const SANDWICH_RUNS: usize = 20;
const SANDWICH_SLACK: f64 = 1e-9;
const SANDWICH_BUDGET: Duration = Duration::from_secs(30);
// criterion 6
const SCALING_TOL: f64 = 1e-12;
// criterion 7
const KDE_SEEDS: u64 = 10;
const KDE_C2: f64 = 0.25;
const KDE_CONTAINMENT_MIN: usize = 9;
// criterion 8
const ARGMIN_SEEDS: u64 = 20;

struct Verdict {
    pass: bool,
    detail: String,
}

fn pt(c: &[f64]) -> Point {
    Point::new(c.to_vec()).unwrap()
}

fn unit_square() -> ProblemInstance {
    make_uniform_components(vec![AxisBox::unit(2)], vec![0.0], 0.0).unwrap()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

fn exact(delta_m: f64) -> Schedule {
    Schedule { eps_m: 0.0, delta_m, h_m: 1.0 }
}

/// Shortest simple-path weight by depth-first enumeration with the
/// incumbent as the only cut.
fn enumerate_paths(adj: &[Vec<(usize, f64)>], a: usize, b: usize) -> f64 {
    fn walk(adj: &[Vec<(usize, f64)>], at: usize, b: usize, seen: &mut Vec<bool>, acc: f64, best: &mut f64) {
        if at == b {
            *best = best.min(acc);
            return;
        }
        for &(next, w) in &adj[at] {
            if !seen[next] && acc + w < *best {
                seen[next] = true;
                walk(adj, next, b, seen, acc + w, best);
                seen[next] = false;
            }
        }
    }
    let mut seen = vec![false; adj.len()];
    seen[a] = true;
    let mut best = f64::INFINITY;
    walk(adj, a, b, &mut seen, 0.0, &mut best);
    best
}

fn criterion_1() -> Verdict {
    let t = Instant::now();
    let mut rng = rng_for(101);
    let mut worst: f64 = 0.0;
    let mut weight_err: f64 = 0.0;
    let mut pairs = 0usize;
    for k in 0..ORACLE_GRAPHS {
        let (d, res) = if k % 3 == 0 { (1, vec![16]) } else { (2, vec![4, 4]) };
        let grid = GridSpec::new(vec![0.0; d], vec![1.0; d], res).unwrap();
        let phat: Vec<f64> = (0..grid.num_nodes())
            .map(|_| if rng.random::<f64>() < 0.2 { 0.0 } else { rng.random_range(0.2..5.0) })
            .collect();
        let alpha = [0.0, 0.5, 1.0, 2.0][k % 4];
        let conn = [Connectivity::N4, Connectivity::N8, Connectivity::N16][k % 3];
        let model = DensityModel::from_values(grid.clone(), phat.clone(), exact(0.0)).unwrap();
        let Ok(g) = build_graph(&model, alpha, conn) else { continue };
        let n = g.node_count();
        assert!(n <= 16);
        // recompute every edge weight from the density values
        let cell_of: Vec<usize> = (0..n as u32).map(|u| grid.locate(&g.node_coords(u)).unwrap()).collect();
        let mut adj = vec![Vec::new(); n];
        for u in 0..n {
            for (v, w) in g.neighbors(u as u32) {
                let (cu, cv) = (cell_of[u], cell_of[v as usize]);
                let len = Point::new(grid.node_coords(cu)).unwrap().euclidean(&Point::new(grid.node_coords(cv)).unwrap());
                let expect = len * (phat[cu].powf(-alpha) + phat[cv].powf(-alpha)) / 2.0;
                weight_err = weight_err.max((w - expect).abs() / expect);
                adj[u].push((v as usize, w));
            }
        }
        for a in 0..n {
            let field = g.field_from_node(a as u32);
            for b in 0..n {
                let oracle = enumerate_paths(&adj, a, b);
                let dij = field.at(b as u32);
                let err = if oracle.is_infinite() || dij.is_infinite() {
                    if oracle == dij { 0.0 } else { f64::INFINITY }
                } else {
                    (oracle - dij).abs()
                };
                worst = worst.max(err);
                pairs += 1;
            }
        }
    }
    let elapsed = t.elapsed();
    Verdict {
        pass: worst <= ORACLE_TOL && weight_err <= 1e-12 && elapsed < ORACLE_BUDGET,
        detail: format!(
            "{pairs} pairs on {ORACLE_GRAPHS} graphs, max |dijkstra - enumeration| = {worst:.2e} (tol {ORACLE_TOL:e}), \
             max edge-weight rel err {weight_err:.1e}, {:.2}s (budget {}s)",
            elapsed.as_secs_f64(),
            ORACLE_BUDGET.as_secs()
        ),
    }
}

fn criterion_2() -> Verdict {
    let t = Instant::now();
    let u = unit_square().sample_unlabeled(CONTINUUM_M, 2024).unwrap();
    let grid = GridSpec::cube(-0.1, 1.1, 2, CONTINUUM_RES).unwrap();
    let sched = schedule(CONTINUUM_M, 2, 1.0, CONTINUUM_C2).unwrap().with_bandwidth(CONTINUUM_KDE_H);
    let model = fit_kde(&u, &grid, &sched).unwrap();
    let (a, b) = (pt(&[0.1, 0.1]), pt(&[0.9, 0.9]));
    let target = 0.8 * 2f64.sqrt();
    let g0 = build_graph(&model, 0.0, Connectivity::N16).unwrap();
    let d0 = g0.distance(&a, &b).value;
    let doubled = model.map_support(|_, _| 2.0).unwrap();
    let g1 = build_graph(&doubled, 1.0, Connectivity::N16).unwrap();
    let d1 = g1.distance(&a, &b).value;
    let r0 = (d0 / target - 1.0).abs();
    let r1 = (d1 / (target / 2.0) - 1.0).abs();
    let elapsed = t.elapsed();
    Verdict {
        pass: r0 <= CONTINUUM_REL_TOL && r1 <= CONTINUUM_REL_TOL && elapsed < CONTINUUM_BUDGET,
        detail: format!(
            "D0 = {d0:.5} (rel err {:.2}%), D1 at p=2 = {d1:.5} (rel err {:.2}%), tol {}%, delta_m = {:.4}, {:.2}s",
            100.0 * r0,
            100.0 * r1,
            100.0 * CONTINUUM_REL_TOL,
            sched.delta_m,
            elapsed.as_secs_f64()
        ),
    }
}

fn criterion_3() -> Verdict {
    let t = Instant::now();
    let cfg = ExperimentConfig {
        instance: InstanceSpec::LowerBound(LowerBoundParams {
            n_design: GAP_N,
            d: 2,
            omega: Omega::AllOnes,
            m_bound: 1.0,
            c0: 3.0,
            r: None,
            sigma: 0.1,
        }),
        n: vec![GAP_N],
        m: vec![GAP_M],
        seeds: (0..GAP_SEEDS).collect(),
        methods: vec![Method::SsCv, Method::EuclideanCv],
        density: DensityConfig { resolution: Some(200), pad_fraction: 0.1, c1: 1.0, c2: 0.06, bandwidth: Some(0.02) },
        fit: FitConfig { truncation: Some(1.0), ..FitConfig::default() },
        n_mc: 4000,
        ..ExperimentConfig::default()
    };
    let rows = sweep(&cfg).unwrap();
    let gap = match cfg.instance.build().unwrap().descriptor() {
        SupportDescriptor::LowerBound { gap, .. } => *gap,
        _ => unreachable!(),
    };
    let risks = |m: Method| -> Vec<f64> {
        rows.iter().filter(|r| r.method == m).map(|r| r.excess_risk.unwrap_or(f64::INFINITY)).collect()
    };
    let ss = median(risks(Method::SsCv));
    let eu = median(risks(Method::EuclideanCv));
    let failed = rows.iter().filter(|r| !r.is_ok()).count();
    let elapsed = t.elapsed();
    Verdict {
        pass: ss <= GAP_SS_MAX && eu >= GAP_EUCLID_MIN && eu >= GAP_RATIO * ss && elapsed < GAP_BUDGET,
        detail: format!(
            "median excess risk ss_cv = {ss:.4} (need <= {GAP_SS_MAX}), euclidean_cv = {eu:.4} (need >= {GAP_EUCLID_MIN}), \
             ratio {:.2} (need >= {GAP_RATIO}), set gap {gap:.2e} vs KDE bandwidth 0.02, {failed} failed rows, {:.1}s",
            eu / ss,
            elapsed.as_secs_f64()
        ),
    }
}

fn criterion_4() -> Verdict {
    let t = Instant::now();
    let inst = make_smooth_instance(&SmoothParams { alpha_true: 0.0, ..SmoothParams::default() }).unwrap();
    let dens = DensityConfig { resolution: Some(100), pad_fraction: 0.1, c1: 1.0, c2: 0.15, bandwidth: Some(0.04) };
    let grid = dens.grid_for(&inst).unwrap();
    let cand = CandidateConfig { bandwidth_count: SAFETY_BANDWIDTHS, ..CandidateConfig::default() };
    let n_mc = 2000;
    let per_seed: Vec<(f64, Vec<f64>, usize)> = (0..SAFETY_SEEDS)
        .into_par_iter()
        .map(|seed| {
            let cell = CellData::draw(&inst, seed, SAFETY_N, SAFETY_M).unwrap();
            let model = dens.estimate(&grid, &cell.unlabeled).unwrap();
            let fitcfg = FitConfig { snap: SnapMode::ToInterior { radius: 0.25 }, ..FitConfig::default() };
            let cg = cand.grid(SAFETY_M, cell.split_seed);
            let report = select(&cell.labeled, &model, &cg, &fitcfg).unwrap();
            let train = cell.labeled.select(&report.train_indices).unwrap();
            let g = build_graph(&model, report.chosen.alpha, fitcfg.connectivity).unwrap().with_snap_mode(fitcfg.snap);
            let reg = fit(&train, &g, report.chosen).unwrap();
            let cv = evaluate(&reg, &inst, n_mc, cell.mc_seed).unwrap().excess_risk;
            let g0 = build_graph(&model, 0.0, fitcfg.connectivity).unwrap().with_snap_mode(fitcfg.snap);
            let zero: Vec<f64> = report
                .table
                .iter()
                .filter(|c| c.alpha == 0.0)
                .map(|c| {
                    let spec = EstimatorSpec::new(0.0, c.h, Fallback::LabeledMean).unwrap();
                    let r = fit(&train, &g0, spec).unwrap();
                    evaluate(&r, &inst, n_mc, cell.mc_seed).unwrap().excess_risk
                })
                .collect();
            (cv, zero, cg.alphas.len())
        })
        .collect();
    let seeds = per_seed.len() as f64;
    let mean_cv = per_seed.iter().map(|s| s.0).sum::<f64>() / seeds;
    let k = per_seed[0].1.len();
    let best_zero = (0..k)
        .map(|j| per_seed.iter().map(|s| s.1[j]).sum::<f64>() / seeds)
        .fold(f64::INFINITY, f64::min);
    let n_alpha = per_seed[0].2;
    let slack = ((n_alpha * SAFETY_BANDWIDTHS * SAFETY_N) as f64).ln() / SAFETY_N as f64;
    let c_hat = ((mean_cv - best_zero) / slack).max(0.0);
    let elapsed = t.elapsed();
    Verdict {
        pass: mean_cv <= best_zero + SAFETY_C * slack && elapsed < SAFETY_BUDGET,
        detail: format!(
            "mean excess risk cv = {mean_cv:.5}, best fixed alpha=0 = {best_zero:.5}, slack(n) = {slack:.4}, \
             C = {SAFETY_C} (empirical minimal C = {c_hat:.3}), {:.1}s",
            elapsed.as_secs_f64()
        ),
    }
}

fn all_pairs(g: &GeodesicGraph) -> Vec<Vec<f64>> {
    (0..g.node_count() as u32).map(|s| g.field_from_node(s).values().to_vec()).collect()
}

fn criterion_5() -> Verdict {
    let t = Instant::now();
    let mut rng = rng_for(505);
    let (lambda0, big_lambda0) = (0.5, 2.0);
    let grid = GridSpec::cube(0.0, 1.0, 2, 20).unwrap();
    let mut violations = 0usize;
    let mut checked = 0usize;
    for run in 0..SANDWICH_RUNS {
        let p: Vec<f64> = (0..grid.num_nodes()).map(|_| rng.random_range(lambda0..big_lambda0)).collect();
        let eps_nominal = lambda0 / 2.0 * rng.random_range(0.05..=1.0);
        let noisy: Vec<f64> = p.iter().map(|v| v + rng.random_range(-eps_nominal..=eps_nominal)).collect();
        let eps = p.iter().zip(&noisy).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let alpha = [0.5, 1.0, 2.0, 3.0][run % 4];
        let truth = DensityModel::from_values(grid.clone(), p, exact(0.0)).unwrap();
        let pert = DensityModel::from_values(grid.clone(), noisy, exact(0.0)).unwrap();
        let dt = all_pairs(&build_graph(&truth, alpha, Connectivity::N16).unwrap());
        let dp = all_pairs(&build_graph(&pert, alpha, Connectivity::N16).unwrap());
        let lo = (lambda0 / (lambda0 + eps)).powf(alpha);
        let hi = (lambda0 / (lambda0 - eps)).powf(alpha);
        for (rt, rp) in dt.iter().zip(&dp) {
            for (&d_true, &d_pert) in rt.iter().zip(rp) {
                checked += 1;
                let slack = SANDWICH_SLACK * d_true.max(1.0);
                if d_pert < lo * d_true - slack || d_pert > hi * d_true + slack {
                    violations += 1;
                }
            }
        }
    }
    let elapsed = t.elapsed();
    Verdict {
        pass: violations == 0 && elapsed < SANDWICH_BUDGET,
        detail: format!(
            "{checked} pairwise distances over {SANDWICH_RUNS} perturbations, {violations} outside the bounds \
             (slack {SANDWICH_SLACK:e}), {:.2}s",
            elapsed.as_secs_f64()
        ),
    }
}

fn criterion_6() -> Verdict {
    let u = unit_square().sample_unlabeled(2000, 606).unwrap();
    let grid = GridSpec::cube(-0.1, 1.1, 2, 40).unwrap();
    let model = fit_kde(&u, &grid, &schedule(2000, 2, 1.0, 0.25).unwrap()).unwrap();
    let mut worst: f64 = 0.0;
    let mut mismatched_inf = 0usize;
    let mut checked = 0usize;
    for alpha in [0.0, 1.0, 3.0] {
        let base = all_pairs(&build_graph(&model, alpha, Connectivity::N16).unwrap());
        for c in [0.5, 2.0, 10.0] {
            let scaled = all_pairs(&build_graph(&model.scaled(c).unwrap(), alpha, Connectivity::N16).unwrap());
            let factor = c.powf(-alpha);
            for (rb, rs) in base.iter().zip(&scaled) {
                for (&b, &s) in rb.iter().zip(rs) {
                    checked += 1;
                    if b.is_infinite() || s.is_infinite() {
                        mismatched_inf += usize::from(b.is_finite() != s.is_finite());
                    } else if b > 0.0 {
                        worst = worst.max((s - factor * b).abs() / (factor * b));
                    } else if s != 0.0 {
                        worst = f64::INFINITY;
                    }
                }
            }
        }
    }
    Verdict {
        pass: worst <= SCALING_TOL && mismatched_inf == 0,
        detail: format!("{checked} distances, max relative deviation {worst:.2e} (tol {SCALING_TOL:e}), {mismatched_inf} reachability changes"),
    }
}

fn criterion_7() -> Verdict {
    let inst = unit_square();
    let grid = GridSpec::cube(-0.1, 1.1, 2, 100).unwrap();
    let outside = |x: &[f64]| AxisBox::unit(2).distance(x);
    let truth = |x: &[f64]| if AxisBox::unit(2).contains(x) { 1.0 } else { 0.0 };
    let mut sup = [Vec::new(), Vec::new()];
    let mut contained = 0usize;
    let mut runs = 0usize;
    for seed in 0..KDE_SEEDS {
        for (slot, m) in [1_000usize, 10_000].into_iter().enumerate() {
            let u = inst.sample_unlabeled(m, derive_seed(seed, m as u64)).unwrap();
            let sched = schedule(m, 2, 1.0, KDE_C2).unwrap();
            let model = fit_kde(&u, &grid, &sched).unwrap();
            sup[slot].push(sup_error(&model, truth).value);
            runs += 1;
            if model.boundary_overshoot(outside) <= sched.delta_m {
                contained += 1;
            }
        }
    }
    let (small, large) = (median(sup[0].clone()), median(sup[1].clone()));
    // containment counted per (seed, m); scale the 9/10 requirement accordingly
    let need = KDE_CONTAINMENT_MIN * runs / KDE_SEEDS as usize;
    Verdict {
        pass: large < small && contained >= need,
        detail: format!(
            "median interior sup error m=1e3: {small:.4}, m=1e4: {large:.4}; containment in {contained}/{runs} runs (need {need})"
        ),
    }
}

/// Validation risk of every (alpha, h) recomputed from per-pair distances.
fn brute_force_risks(
    model: &DensityModel,
    train: &LabeledSet,
    val: &LabeledSet,
    alphas: &[f64],
    hs: &[f64],
) -> Vec<(f64, f64, f64)> {
    let mean_all = train.labels().iter().sum::<f64>() / train.n() as f64;
    let mut out = Vec::new();
    for &alpha in alphas {
        let g = build_graph(model, alpha, Connectivity::N16).unwrap();
        let dist: Vec<Vec<f64>> = val
            .points()
            .iter()
            .map(|v| train.points().iter().map(|t| g.distance(t, v).value).collect())
            .collect();
        for &h in hs {
            let mut sse = 0.0;
            for (row, y) in dist.iter().zip(val.labels()) {
                let (mut s, mut c) = (0.0, 0usize);
                for (d, yt) in row.iter().zip(train.labels()) {
                    if *d <= h {
                        s += yt;
                        c += 1;
                    }
                }
                let yhat = if c > 0 { s / c as f64 } else { mean_all };
                sse += (yhat - y).powi(2);
            }
            out.push((alpha, h, sse / val.n() as f64));
        }
    }
    out
}

fn criterion_8() -> Verdict {
    let inst = make_smooth_instance(&SmoothParams { alpha_true: 1.0, ..SmoothParams::default() }).unwrap();
    let dens = DensityConfig { resolution: Some(60), pad_fraction: 0.1, c1: 1.0, c2: 0.15, bandwidth: Some(0.04) };
    let grid = dens.grid_for(&inst).unwrap();
    let alphas = [0.0, 1.0, 2.0];
    let hs = [0.05, 0.1, 0.2];
    let mut matches = 0u64;
    let mut worst_risk: f64 = 0.0;
    for seed in 0..ARGMIN_SEEDS {
        let cell = CellData::draw(&inst, seed, 30, 2000).unwrap();
        let model = dens.estimate(&grid, &cell.unlabeled).unwrap();
        let cg = CandidateGrid {
            alphas: alphas.to_vec(),
            bandwidths: BandwidthGrid::Fixed(hs.to_vec()),
            split_fraction: 0.5,
            seed: cell.split_seed,
        };
        let report = select(&cell.labeled, &model, &cg, &FitConfig::default()).unwrap();
        let (ti, vi) = densreg::adapt::split_indices(cell.labeled.n(), 0.5, cell.split_seed).unwrap();
        let train = cell.labeled.select(&ti).unwrap();
        let val = cell.labeled.select(&vi).unwrap();
        let brute = brute_force_risks(&model, &train, &val, &alphas, &hs);
        let mut best = brute[0];
        for &c in &brute[1..] {
            // strict improvement only: earlier entries are lexicographically smaller
            if c.2 < best.2 {
                best = c;
            }
        }
        for (row, b) in report.table.iter().zip(&brute) {
            worst_risk = worst_risk.max((row.risk - b.2).abs());
        }
        if report.chosen.alpha == best.0 && report.chosen.h == best.1 && report.table.len() == 9 {
            matches += 1;
        }
    }
    Verdict {
        pass: matches == ARGMIN_SEEDS,
        detail: format!("{matches}/{ARGMIN_SEEDS} seeds match the brute-force argmin; max |risk diff| = {worst_risk:.1e}"),
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict); 8] = [
        ("metric oracle equivalence", criterion_1),
        ("continuum consistency", criterion_2),
        ("semisupervised vs supervised gap on the bump instance", criterion_3),
        ("adaptation safety", criterion_4),
        ("sandwich bounds under density perturbation", criterion_5),
        ("scaling law", criterion_6),
        ("density estimator behavior", criterion_7),
        ("cross-validation argmin oracle", criterion_8),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let v = run();
        failures += usize::from(!v.pass);
        println!("[{}] criterion {id}: {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
