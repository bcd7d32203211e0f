//! Boxcar kernel density estimation on a regular grid, with the estimated
//! support `{p_hat > 0}` and its eroded interior.
//!
//! Grid nodes sit at cell centers. The interior mask keeps a supported node
//! only if every lattice node within Euclidean radius `2 * delta_m` is also
//! supported; lattice positions outside the grid count as unsupported. The
//! erosion is computed from an exact Euclidean distance transform.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Point, UnlabeledSet};

/// Volume of the unit ball in `R^d`.
pub fn unit_ball_volume(d: usize) -> f64 {
    // V_0 = 1, V_1 = 2, V_d = V_{d-2} * 2 pi / d
    let mut v = [1.0, 2.0];
    for k in 2..=d {
        v[k % 2] *= 2.0 * std::f64::consts::PI / k as f64;
    }
    v[d % 2]
}

/// Axis-aligned box discretized into `resolution[k]` cells per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpecRepr", into = "GridSpecRepr")]
pub struct GridSpec {
    lower: Vec<f64>,
    upper: Vec<f64>,
    resolution: Vec<usize>,
    spacing: Vec<f64>,
    strides: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct GridSpecRepr {
    lower: Vec<f64>,
    upper: Vec<f64>,
    resolution: Vec<usize>,
}

impl TryFrom<GridSpecRepr> for GridSpec {
    type Error = Error;
    fn try_from(r: GridSpecRepr) -> Result<Self> {
        GridSpec::new(r.lower, r.upper, r.resolution)
    }
}

impl From<GridSpec> for GridSpecRepr {
    fn from(g: GridSpec) -> Self {
        GridSpecRepr { lower: g.lower, upper: g.upper, resolution: g.resolution }
    }
}

impl GridSpec {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, resolution: Vec<usize>) -> Result<Self> {
        let d = lower.len();
        if d == 0 || upper.len() != d || resolution.len() != d {
            return Err(Error::Domain("grid bounds and resolution must share dimension d >= 1".into()));
        }
        for k in 0..d {
            if !(lower[k].is_finite() && upper[k].is_finite() && lower[k] < upper[k]) {
                return Err(Error::Domain(format!(
                    "grid axis {k}: need finite lower < upper, got [{}, {}]",
                    lower[k], upper[k]
                )));
            }
            if resolution[k] == 0 {
                return Err(Error::Domain(format!("grid axis {k} has zero cells")));
            }
        }
        resolution
            .iter()
            .try_fold(1usize, |acc, &r| acc.checked_mul(r))
            .ok_or_else(|| Error::Domain("grid node count overflows".into()))?;
        let spacing = (0..d).map(|k| (upper[k] - lower[k]) / resolution[k] as f64).collect();
        let mut strides = vec![1usize; d];
        for k in (0..d.saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * resolution[k + 1];
        }
        Ok(GridSpec { lower, upper, resolution, spacing, strides })
    }

    /// The cube `[lower, upper]^d` with `res` cells per axis.
    pub fn cube(lower: f64, upper: f64, d: usize, res: usize) -> Result<Self> {
        GridSpec::new(vec![lower; d], vec![upper; d], vec![res; d])
    }

    /// Bounding box of `points` widened by `pad_fraction` of its extent on each side.
    pub fn covering(points: &[Point], pad_fraction: f64, res: usize) -> Result<Self> {
        let first = points.first().ok_or_else(|| Error::Domain("no points to cover".into()))?;
        let d = first.dim();
        let mut lo = first.coords().to_vec();
        let mut hi = lo.clone();
        for p in points {
            for k in 0..d {
                lo[k] = lo[k].min(p.coords()[k]);
                hi[k] = hi[k].max(p.coords()[k]);
            }
        }
        for k in 0..d {
            let extent = (hi[k] - lo[k]).max(1e-9);
            lo[k] -= pad_fraction * extent;
            hi[k] += pad_fraction * extent;
        }
        GridSpec::new(lo, hi, vec![res; d])
    }

    /// 100 cells per axis, reduced for d > 3 so the node count stays at or below 10^6.
    pub fn default_resolution(d: usize) -> usize {
        if d <= 3 {
            100
        } else {
            (1e6f64.powf(1.0 / d as f64)).floor().max(2.0) as usize
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn resolution(&self) -> &[usize] {
        &self.resolution
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn num_nodes(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub(crate) fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn index_of(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn multi_index(&self, mut idx: usize, out: &mut [usize]) {
        for k in 0..self.dim() {
            out[k] = idx / self.strides[k];
            idx %= self.strides[k];
        }
    }

    pub fn node_coords(&self, idx: usize) -> Vec<f64> {
        let mut multi = vec![0; self.dim()];
        self.multi_index(idx, &mut multi);
        multi
            .iter()
            .enumerate()
            .map(|(k, &i)| self.lower[k] + (i as f64 + 0.5) * self.spacing[k])
            .collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && (0..self.dim()).all(|k| x[k] >= self.lower[k] && x[k] <= self.upper[k])
    }

    /// Node of the cell containing `x` (its nearest node), or `None` outside the grid.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        if !self.contains(x) {
            return None;
        }
        let mut idx = 0;
        for k in 0..self.dim() {
            let i = ((x[k] - self.lower[k]) / self.spacing[k]).floor() as usize;
            idx += i.min(self.resolution[k] - 1) * self.strides[k];
        }
        Some(idx)
    }
}

/// Sample-size dependent tuning: nominal sup-norm error `eps_m`, boundary strip
/// half-width `delta_m` and KDE bandwidth `h_m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub eps_m: f64,
    pub delta_m: f64,
    pub h_m: f64,
}

impl Schedule {
    /// Replaces the bandwidth, keeping the strip width.
    pub fn with_bandwidth(self, h_m: f64) -> Self {
        Schedule { h_m, ..self }
    }
}

/// `eps_m = c1 (log m)^(-1/2)`, `delta_m = 2 c2 sqrt(d) (log^2 m / m)^(1/d)`, and
/// `h_m = delta_m / (2 sqrt(d))`.
pub fn schedule(m: usize, d: usize, c1: f64, c2: f64) -> Result<Schedule> {
    if m < 2 {
        return Err(Error::Domain(format!("schedule needs m >= 2, got {m}")));
    }
    if d == 0 {
        return Err(Error::Domain("schedule needs d >= 1".into()));
    }
    if !(c1 > 0.0 && c2 > 0.0) {
        return Err(Error::Domain(format!("schedule constants must be positive, got c1={c1}, c2={c2}")));
    }
    let log_m = (m as f64).ln();
    let root_d = (d as f64).sqrt();
    let eps_m = c1 / log_m.sqrt();
    let base = (log_m * log_m / m as f64).powf(1.0 / d as f64);
    let delta_m = 2.0 * c2 * root_d * base;
    Ok(Schedule { eps_m, delta_m, h_m: delta_m / (2.0 * root_d) })
}

/// Grid-sampled density estimate with support and interior masks.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityModel {
    grid: GridSpec,
    phat: Vec<f64>,
    schedule: Schedule,
    support: Vec<bool>,
    interior: Vec<bool>,
    coarse_bandwidth: bool,
}

/// Boxcar KDE `p_hat(x) = #{i : |x - X_i| <= h_m} / (m v_d h_m^d)` at every grid node.
pub fn fit_kde(u: &UnlabeledSet, grid: &GridSpec, schedule: &Schedule) -> Result<DensityModel> {
    let d = grid.dim();
    if u.dim() != d {
        return Err(Error::Domain(format!("data dimension {} != grid dimension {d}", u.dim())));
    }
    let h = schedule.h_m;
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Domain(format!("KDE bandwidth must be positive, got {h}")));
    }
    if let Some(p) = u.points().iter().find(|p| !grid.contains(p.coords())) {
        return Err(Error::Domain(format!("point {:?} lies outside the grid", p.coords())));
    }

    let n_nodes = grid.num_nodes();
    let counts = u
        .points()
        .par_chunks(256)
        .fold(
            || vec![0u32; n_nodes],
            |mut acc, chunk| {
                let mut scratch = BallScratch::new(d);
                for p in chunk {
                    scratch.for_each_node_within(grid, p.coords(), h, |idx| acc[idx] += 1);
                }
                acc
            },
        )
        .reduce(
            || vec![0u32; n_nodes],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );

    let norm = 1.0 / (u.m() as f64 * unit_ball_volume(d) * h.powi(d as i32));
    let phat = counts.iter().map(|&c| c as f64 * norm).collect();
    let coarse = grid.spacing().iter().any(|&s| h < s);
    DensityModel::assemble(grid.clone(), phat, *schedule, coarse)
}

struct BallScratch {
    lo: Vec<usize>,
    hi: Vec<usize>,
    cur: Vec<usize>,
}

impl BallScratch {
    fn new(d: usize) -> Self {
        BallScratch { lo: vec![0; d], hi: vec![0; d], cur: vec![0; d] }
    }

    /// Calls `f` on every grid node within Euclidean distance `h` of `x`.
    fn for_each_node_within(&mut self, grid: &GridSpec, x: &[f64], h: f64, mut f: impl FnMut(usize)) {
        let d = grid.dim();
        for k in 0..d {
            let s = grid.spacing[k];
            let t = (x[k] - grid.lower[k]) / s - 0.5;
            let lo = (t - h / s - 1e-9).ceil().max(0.0);
            let hi = (t + h / s + 1e-9).floor().min(grid.resolution[k] as f64 - 1.0);
            if hi < lo {
                return;
            }
            self.lo[k] = lo as usize;
            self.hi[k] = hi as usize;
        }
        self.cur.copy_from_slice(&self.lo);
        let h2 = h * h;
        loop {
            let mut dist2 = 0.0;
            for k in 0..d {
                let c = grid.lower[k] + (self.cur[k] as f64 + 0.5) * grid.spacing[k];
                dist2 += (c - x[k]) * (c - x[k]);
            }
            if dist2 <= h2 {
                f(grid.index_of(&self.cur));
            }
            // odometer over the bounding box
            let mut k = d;
            loop {
                if k == 0 {
                    return;
                }
                k -= 1;
                if self.cur[k] < self.hi[k] {
                    self.cur[k] += 1;
                    break;
                }
                self.cur[k] = self.lo[k];
            }
        }
    }
}

/// Squared Euclidean distance from every node to the nearest unsupported lattice
/// position (positions outside the grid are unsupported).
pub(crate) fn distance_to_unsupported_sq(grid: &GridSpec, support: &[bool]) -> Vec<f64> {
    let d = grid.dim();
    let dims: Vec<usize> = grid.resolution.iter().map(|r| r + 2).collect();
    let mut strides = vec![1usize; d];
    for k in (0..d.saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * dims[k + 1];
    }
    let total: usize = dims.iter().product();

    let mut field = vec![0.0f64; total];
    let mut multi = vec![0usize; d];
    for (idx, &s) in support.iter().enumerate() {
        if s {
            grid.multi_index(idx, &mut multi);
            let padded: usize = multi.iter().zip(&strides).map(|(i, st)| (i + 1) * st).sum();
            field[padded] = f64::INFINITY;
        }
    }

    let mut line = Vec::new();
    let mut out = Vec::new();
    let mut v = Vec::new();
    let mut z = Vec::new();
    for k in 0..d {
        let n = dims[k];
        let stride = strides[k];
        line.resize(n, 0.0);
        out.resize(n, 0.0);
        for base in 0..total {
            if (base / stride) % n != 0 {
                continue;
            }
            for i in 0..n {
                line[i] = field[base + i * stride];
            }
            edt_1d(&line, grid.spacing[k], &mut out, &mut v, &mut z);
            for i in 0..n {
                field[base + i * stride] = out[i];
            }
        }
    }

    let mut result = vec![0.0; support.len()];
    for (idx, r) in result.iter_mut().enumerate() {
        grid.multi_index(idx, &mut multi);
        let padded: usize = multi.iter().zip(&strides).map(|(i, st)| (i + 1) * st).sum();
        *r = field[padded];
    }
    result
}

/// Lower envelope of parabolas: `out[i] = min_j f[j] + (spacing (i - j))^2`.
fn edt_1d(f: &[f64], spacing: f64, out: &mut [f64], v: &mut Vec<usize>, z: &mut Vec<f64>) {
    v.clear();
    z.clear();
    let pos = |q: usize| q as f64 * spacing;
    for q in 0..f.len() {
        if f[q].is_infinite() {
            continue;
        }
        let xq = pos(q);
        loop {
            let Some(&p) = v.last() else {
                v.push(q);
                z.push(f64::NEG_INFINITY);
                break;
            };
            let xp = pos(p);
            let s = ((f[q] + xq * xq) - (f[p] + xp * xp)) / (2.0 * (xq - xp));
            if s <= *z.last().expect("z tracks v") {
                v.pop();
                z.pop();
                continue;
            }
            v.push(q);
            z.push(s);
            break;
        }
    }
    if v.is_empty() {
        out.fill(f64::INFINITY);
        return;
    }
    z.push(f64::INFINITY);
    let mut k = 0;
    for (i, o) in out.iter_mut().enumerate() {
        let xi = pos(i);
        while z[k + 1] < xi {
            k += 1;
        }
        let dx = xi - pos(v[k]);
        *o = dx * dx + f[v[k]];
    }
}

/// Result of [`sup_error`]. `value` is `+inf` when the interior is empty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupError {
    pub value: f64,
    pub empty_interior: bool,
}

/// `max |truth - p_hat|` over interior nodes.
pub fn sup_error(model: &DensityModel, truth: impl Fn(&[f64]) -> f64 + Sync) -> SupError {
    let grid = &model.grid;
    let worst = (0..grid.num_nodes())
        .into_par_iter()
        .filter(|&i| model.interior[i])
        .map(|i| (truth(&grid.node_coords(i)) - model.phat[i]).abs())
        .reduce_with(f64::max);
    match worst {
        Some(value) => SupError { value, empty_interior: false },
        None => SupError { value: f64::INFINITY, empty_interior: true },
    }
}

impl DensityModel {
    fn assemble(grid: GridSpec, phat: Vec<f64>, schedule: Schedule, coarse_bandwidth: bool) -> Result<Self> {
        if phat.len() != grid.num_nodes() {
            return Err(Error::Domain(format!(
                "{} density values for a grid with {} nodes",
                phat.len(),
                grid.num_nodes()
            )));
        }
        if let Some(v) = phat.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Domain(format!("density value {v} is not finite and >= 0")));
        }
        if !(schedule.delta_m >= 0.0 && schedule.delta_m.is_finite()) {
            return Err(Error::Domain(format!("delta_m must be finite and >= 0, got {}", schedule.delta_m)));
        }
        let support: Vec<bool> = phat.iter().map(|&v| v > 0.0).collect();
        let radius = 2.0 * schedule.delta_m;
        let dist2 = distance_to_unsupported_sq(&grid, &support);
        let interior = dist2.iter().map(|&r2| r2 > radius * radius).collect();
        Ok(DensityModel { grid, phat, schedule, support, interior, coarse_bandwidth })
    }

    /// Builds a model from density values given directly at the grid nodes,
    /// e.g. a known true density. Masks are derived exactly as for a fitted KDE;
    /// `delta_m = 0` keeps every supported node.
    pub fn from_values(grid: GridSpec, phat: Vec<f64>, schedule: Schedule) -> Result<Self> {
        DensityModel::assemble(grid, phat, schedule, false)
    }

    /// Evaluates `density` at every node and wraps it with [`DensityModel::from_values`].
    pub fn from_fn(grid: GridSpec, schedule: Schedule, density: impl Fn(&[f64]) -> f64 + Sync) -> Result<Self> {
        let phat = (0..grid.num_nodes())
            .into_par_iter()
            .map(|i| density(&grid.node_coords(i)))
            .collect();
        DensityModel::from_values(grid, phat, schedule)
    }

    /// Replaces the density values on supported nodes, keeping both masks.
    /// Every supported node must receive a finite positive value.
    pub fn map_support(&self, mut f: impl FnMut(usize, f64) -> f64) -> Result<Self> {
        let mut phat = vec![0.0; self.phat.len()];
        for (i, out) in phat.iter_mut().enumerate() {
            if self.support[i] {
                let v = f(i, self.phat[i]);
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::Domain(format!("replacement density {v} at supported node {i}")));
                }
                *out = v;
            }
        }
        Ok(DensityModel { phat, ..self.clone() })
    }

    /// `c * p_hat` with unchanged masks.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Domain(format!("scale must be positive, got {c}")));
        }
        self.map_support(|_, v| c * v)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn phat(&self) -> &[f64] {
        &self.phat
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn h_m(&self) -> f64 {
        self.schedule.h_m
    }

    pub fn delta_m(&self) -> f64 {
        self.schedule.delta_m
    }

    pub fn eps_m(&self) -> f64 {
        self.schedule.eps_m
    }

    pub fn support_mask(&self) -> &[bool] {
        &self.support
    }

    pub fn interior_mask(&self) -> &[bool] {
        &self.interior
    }

    pub fn interior_count(&self) -> usize {
        self.interior.iter().filter(|&&b| b).count()
    }

    /// Set when `h_m` is below one cell width; the support may then fragment spuriously.
    pub fn coarse_bandwidth(&self) -> bool {
        self.coarse_bandwidth
    }

    /// Midpoint-rule integral of `p_hat` over the grid.
    pub fn mass(&self) -> f64 {
        self.phat.iter().sum::<f64>() * self.grid.cell_volume()
    }

    /// Largest `dist_outside(node)` over supported nodes, where `dist_outside`
    /// measures how far a location lies outside the true support.
    pub fn boundary_overshoot(&self, dist_outside: impl Fn(&[f64]) -> f64 + Sync) -> f64 {
        (0..self.grid.num_nodes())
            .into_par_iter()
            .filter(|&i| self.support[i])
            .map(|i| dist_outside(&self.grid.node_coords(i)))
            .reduce(|| 0.0, f64::max)
    }

    pub fn to_artifact(&self) -> DensityArtifact {
        DensityArtifact {
            schema_version: DensityArtifact::SCHEMA_VERSION,
            grid: self.grid.clone(),
            schedule: self.schedule,
            coarse_bandwidth: self.coarse_bandwidth,
            phat: self.phat.clone(),
            support: self.support.iter().map(|&b| u8::from(b)).collect(),
            interior: self.interior.iter().map(|&b| u8::from(b)).collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_artifact())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str::<DensityArtifact>(s)?.into_model()
    }
}

/// JSON form of a [`DensityModel`]: grid, flat values, and 0/1 masks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensityArtifact {
    pub schema_version: u32,
    pub grid: GridSpec,
    pub schedule: Schedule,
    pub coarse_bandwidth: bool,
    pub phat: Vec<f64>,
    pub support: Vec<u8>,
    pub interior: Vec<u8>,
}

impl DensityArtifact {
    pub const SCHEMA_VERSION: u32 = 1;

    /// Rebuilds the model, recomputing the masks and checking them against the stored ones.
    pub fn into_model(self) -> Result<DensityModel> {
        if self.schema_version != Self::SCHEMA_VERSION {
            return Err(Error::Schema(format!("unsupported density schema version {}", self.schema_version)));
        }
        let model = DensityModel::assemble(self.grid, self.phat, self.schedule, self.coarse_bandwidth)?;
        let same = |stored: &[u8], mask: &[bool]| {
            stored.len() == mask.len() && stored.iter().zip(mask).all(|(&s, &m)| (s != 0) == m)
        };
        if !same(&self.support, &model.support) || !same(&self.interior, &model.interior) {
            return Err(Error::Schema("stored masks disagree with the density values".into()));
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pts(c: &[&[f64]]) -> UnlabeledSet {
        UnlabeledSet::new(c.iter().map(|p| Point::new(p.to_vec()).unwrap()).collect()).unwrap()
    }

    fn sched(h: f64, delta: f64) -> Schedule {
        Schedule { eps_m: 1.0, delta_m: delta, h_m: h }
    }

    #[test]
    fn unit_ball_volumes() {
        assert_eq!(unit_ball_volume(0), 1.0);
        assert_eq!(unit_ball_volume(1), 2.0);
        assert!((unit_ball_volume(2) - std::f64::consts::PI).abs() < 1e-15);
        assert!((unit_ball_volume(3) - 4.0 / 3.0 * std::f64::consts::PI).abs() < 1e-14);
    }

    #[test]
    fn schedule_values() {
        let s = schedule(55, 2, 1.0, 1.0).unwrap();
        let expected = 1.0 / 55f64.ln().sqrt();
        assert!((s.eps_m - expected).abs() < 1e-15);
        assert!((s.eps_m - 0.4997).abs() < 1e-3);

        let s = schedule(100, 2, 1.0, 1.0).unwrap();
        let expected = 2.0 * 2f64.sqrt() * 100f64.ln() / 10.0;
        assert!((s.delta_m - expected).abs() < 1e-12);
        assert!((s.delta_m - 1.3026).abs() < 1e-4);
        assert!((s.h_m - s.delta_m / (2.0 * 2f64.sqrt())).abs() < 1e-15);
    }

    #[test]
    fn schedule_rejects_bad_inputs() {
        assert!(matches!(schedule(1, 2, 1.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(schedule(100, 2, 1.0, 0.0), Err(Error::Domain(_))));
        assert!(matches!(schedule(100, 2, 0.0, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn grid_locate_and_coords() {
        let g = GridSpec::new(vec![0.0, 0.0], vec![1.0, 2.0], vec![10, 4]).unwrap();
        assert_eq!(g.num_nodes(), 40);
        let i = g.locate(&[0.05, 1.9]).unwrap();
        let c = g.node_coords(i);
        assert!((c[0] - 0.05).abs() < 1e-12 && (c[1] - 1.75).abs() < 1e-12);
        assert_eq!(g.locate(&[1.0, 2.0]), Some(39));
        assert_eq!(g.locate(&[1.01, 0.5]), None);
        assert!(GridSpec::new(vec![0.0], vec![0.0], vec![3]).is_err());
        assert!(GridSpec::new(vec![0.0], vec![1.0], vec![0]).is_err());
    }

    #[test]
    fn kde_hand_value() {
        // nodes at 0.0 and 0.5 exactly: grid [-0.125, 0.625] with 3 cells of 0.25
        let g = GridSpec::new(vec![-0.125], vec![0.625], vec![3]).unwrap();
        let u = pts(&[&[0.0], &[0.5]]);
        let model = fit_kde(&u, &g, &sched(0.25, 0.01)).unwrap();
        let at0 = model.phat()[g.locate(&[0.0]).unwrap()];
        assert!((at0 - 1.0).abs() < 1e-12, "{at0}");
        // node at 0.25 is within h of both samples
        let mid = model.phat()[g.locate(&[0.25]).unwrap()];
        assert!((mid - 2.0).abs() < 1e-12);
    }

    #[test]
    fn kde_zero_far_from_samples() {
        let g = GridSpec::cube(0.0, 1.0, 1, 100).unwrap();
        let u = pts(&[&[0.2]]);
        let model = fit_kde(&u, &g, &sched(0.05, 0.01)).unwrap();
        for i in 0..g.num_nodes() {
            let x = g.node_coords(i)[0];
            if (x - 0.2).abs() > 0.05 + 1e-12 {
                assert_eq!(model.phat()[i], 0.0);
            }
        }
    }

    #[test]
    fn single_point_mass_is_one() {
        let g = GridSpec::cube(0.0, 1.0, 2, 100).unwrap();
        let u = pts(&[&[0.5, 0.5]]);
        let model = fit_kde(&u, &g, &sched(0.2, 0.01)).unwrap();
        assert!((model.mass() - 1.0).abs() < 1e-2, "{}", model.mass());
        assert!(!model.coarse_bandwidth());
    }

    #[test]
    fn coarse_bandwidth_flag() {
        let g = GridSpec::cube(0.0, 1.0, 2, 10).unwrap();
        let u = pts(&[&[0.5, 0.5]]);
        let model = fit_kde(&u, &g, &sched(0.05, 0.01)).unwrap();
        assert!(model.coarse_bandwidth());
    }

    #[test]
    fn kde_rejects_outside_points() {
        let g = GridSpec::cube(0.0, 1.0, 2, 10).unwrap();
        let u = pts(&[&[1.5, 0.5]]);
        assert!(matches!(fit_kde(&u, &g, &sched(0.1, 0.01)), Err(Error::Domain(_))));
    }

    #[test]
    fn sup_error_identity_and_shift() {
        let g = GridSpec::cube(-0.5, 1.5, 2, 40).unwrap();
        let u = pts(&[&[0.5, 0.5], &[0.6, 0.5], &[0.4, 0.45]]);
        let model = fit_kde(&u, &g, &sched(0.4, 0.02)).unwrap();
        assert!(model.interior_count() > 0);
        let phat = model.phat().to_vec();
        let lookup = |x: &[f64]| phat[g.locate(x).unwrap()];
        assert_eq!(sup_error(&model, lookup).value, 0.0);
        let shifted = sup_error(&model, |x: &[f64]| lookup(x) + 0.1);
        assert!((shifted.value - 0.1).abs() < 1e-12);
    }

    #[test]
    fn sup_error_empty_interior() {
        let g = GridSpec::cube(0.0, 1.0, 2, 10).unwrap();
        let u = pts(&[&[0.5, 0.5]]);
        let model = fit_kde(&u, &g, &sched(0.1, 1.0)).unwrap();
        assert_eq!(model.interior_count(), 0);
        let e = sup_error(&model, |_| 0.0);
        assert!(e.empty_interior && e.value.is_infinite());
    }

    #[test]
    fn json_round_trip() {
        let g = GridSpec::cube(0.0, 1.0, 2, 20).unwrap();
        let u = pts(&[&[0.5, 0.5], &[0.3, 0.6]]);
        let model = fit_kde(&u, &g, &sched(0.2, 0.02)).unwrap();
        let back = DensityModel::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(model, back);
    }

    /// Brute-force erosion: a node is interior iff every lattice position within
    /// the radius (including those beyond the grid) is a supported node.
    fn brute_interior(grid: &GridSpec, support: &[bool], radius: f64) -> Vec<bool> {
        let res = grid.resolution();
        let (sx, sy) = (grid.spacing()[0], grid.spacing()[1]);
        let rx = (radius / sx).ceil() as i64 + 1;
        let ry = (radius / sy).ceil() as i64 + 1;
        let mut out = vec![false; support.len()];
        for i in 0..res[0] as i64 {
            for j in 0..res[1] as i64 {
                let idx = grid.index_of(&[i as usize, j as usize]);
                if !support[idx] {
                    continue;
                }
                let mut ok = true;
                'scan: for di in -rx..=rx {
                    for dj in -ry..=ry {
                        let dx = di as f64 * sx;
                        let dy = dj as f64 * sy;
                        if dx * dx + dy * dy > radius * radius {
                            continue;
                        }
                        let (a, b) = (i + di, j + dj);
                        let inside = a >= 0 && b >= 0 && a < res[0] as i64 && b < res[1] as i64;
                        if !inside || !support[grid.index_of(&[a as usize, b as usize])] {
                            ok = false;
                            break 'scan;
                        }
                    }
                }
                out[idx] = ok;
            }
        }
        out
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn erosion_matches_brute_force(
            nx in 3usize..14,
            ny in 3usize..14,
            aspect in 0.5f64..2.0,
            bits in proptest::collection::vec(0.0f64..1.0, 196),
            fill in 0.5f64..0.95,
            delta in 0.0f64..0.2,
        ) {
            let grid = GridSpec::new(vec![0.0, 0.0], vec![1.0, aspect], vec![nx, ny]).unwrap();
            let phat: Vec<f64> = (0..nx * ny).map(|i| if bits[i] < fill { 1.0 } else { 0.0 }).collect();
            let model = DensityModel::from_values(grid.clone(), phat, sched(0.1, delta)).unwrap();
            let brute = brute_interior(&grid, model.support_mask(), 2.0 * delta);
            prop_assert_eq!(model.interior_mask(), &brute[..]);
        }

        #[test]
        fn erosion_is_monotone(
            bits in proptest::collection::vec(0.0f64..1.0, 144),
            d1 in 0.0f64..0.15,
            d2 in 0.0f64..0.15,
        ) {
            let (small, large) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            let grid = GridSpec::cube(0.0, 1.0, 2, 12).unwrap();
            let phat: Vec<f64> = bits.iter().map(|&b| if b < 0.85 { 1.0 } else { 0.0 }).collect();
            let a = DensityModel::from_values(grid.clone(), phat.clone(), sched(0.1, small)).unwrap();
            let b = DensityModel::from_values(grid, phat, sched(0.1, large)).unwrap();
            for (x, y) in a.interior_mask().iter().zip(b.interior_mask()) {
                prop_assert!(!*y || *x);
            }
            for (i, s) in a.support_mask().iter().enumerate() {
                prop_assert!(*s || !a.interior_mask()[i]);
            }
        }

        #[test]
        fn kde_nonnegative_and_normalized(
            seed_pts in proptest::collection::vec((0.3f64..0.7, 0.3f64..0.7), 1..40),
        ) {
            let u = UnlabeledSet::new(seed_pts.iter().map(|&(a, b)| Point::new(vec![a, b]).unwrap()).collect()).unwrap();
            let g = GridSpec::cube(0.0, 1.0, 2, 100).unwrap();
            // h = 5 cells keeps the quadrature error of the disc area small
            let model = fit_kde(&u, &g, &sched(0.05, 0.01)).unwrap();
            prop_assert!(model.phat().iter().all(|&v| v >= 0.0));
            prop_assert!((model.mass() - 1.0).abs() <= 0.05);
        }
    }

    #[test]
    fn fit_is_deterministic() {
        let u = pts(&[&[0.1, 0.2], &[0.4, 0.4], &[0.9, 0.1]]);
        let g = GridSpec::cube(0.0, 1.0, 2, 30).unwrap();
        let a = fit_kde(&u, &g, &sched(0.2, 0.01)).unwrap();
        let b = fit_kde(&u, &g, &sched(0.2, 0.01)).unwrap();
        assert_eq!(a, b);
    }
}
