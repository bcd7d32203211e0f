//! Ground-truth problem generators.
//!
//! * [`make_uniform_components`]: uniform density on disjoint boxes, constant
//!   regression function per box.
//! * [`make_lower_bound_instance`]: two slabs joined by a row of smooth bumps
//!   that fit into matching notches of the opposite slab. The bumps get
//!   narrower as the design size grows, so the support's condition number
//!   shrinks while the labels stay constant on each slab.
//! * [`make_smooth_instance`]: smooth bump-mixture density on the unit square
//!   and `f*` a clipped power of the density-sensitive distance to an anchor.
//!
//! Samplers draw from ChaCha streams; independent streams are derived from a
//! base seed with [`derive_seed`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::density::{unit_ball_volume, DensityModel, GridSpec, Schedule};
use crate::error::{Error, Result};
use crate::geodesic::{build_graph, Connectivity, DistanceField, GeodesicGraph};
use crate::model::{LabeledSet, Point, ProblemClass, UnlabeledSet};

/// Seed for stream `stream` of base seed `seed` (splitmix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl AxisBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::Geometry("box bounds must share a dimension >= 1".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l.is_finite() && u.is_finite() && l < u)) {
            return Err(Error::Geometry(format!("degenerate box {lower:?}..{upper:?}")));
        }
        Ok(AxisBox { lower, upper })
    }

    pub fn unit(d: usize) -> Self {
        AxisBox { lower: vec![0.0; d], upper: vec![1.0; d] }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn volume(&self) -> f64 {
        self.sides().iter().product()
    }

    pub fn sides(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).collect()
    }

    /// Euclidean distance from `x` to the box (0 inside).
    pub fn distance(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&v, (&l, &u))| {
                let e = (l - v).max(v - u).max(0.0);
                e * e
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.distance(x) == 0.0
    }

    fn overlaps(&self, other: &AxisBox) -> bool {
        (0..self.dim()).all(|k| self.lower[k] < other.upper[k] && other.lower[k] < self.upper[k])
    }

    fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(&l, &u)| rng.random_range(l..u)).collect()
    }
}

/// Volume of the `eps`-dilation of a box (Steiner formula).
fn dilated_box_volume(sides: &[f64], eps: f64) -> f64 {
    let d = sides.len();
    // elementary symmetric polynomials of the side lengths
    let mut e = vec![0.0; d + 1];
    e[0] = 1.0;
    for &s in sides {
        for k in (1..=d).rev() {
            e[k] += e[k - 1] * s;
        }
    }
    (0..=d).map(|k| e[k] * unit_ball_volume(d - k) * eps.powi((d - k) as i32)).sum()
}

/// The bump profile: a cap of radius `1/2 - r` on a pedestal of height `r`,
/// blended into the floor by a concave fillet of radius `r`. Zero for `|u| >= 1/2`.
pub fn bump_profile(u: &[f64], r: f64) -> f64 {
    let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < 0.5 - r {
        r + ((0.5 - r).powi(2) - norm * norm).max(0.0).sqrt()
    } else if norm < 0.5 {
        r - (r * r - (0.5 - norm).powi(2)).max(0.0).sqrt()
    } else {
        0.0
    }
}

/// Root in `(0, 1/4)` of `(1 - 2r)^d - (4d / sqrt(pi)) r = 1/2`, by bisection.
pub fn bump_radius_root(d: usize) -> f64 {
    let phi = |r: f64| (1.0 - 2.0 * r).powi(d as i32) - 4.0 * d as f64 / std::f64::consts::PI.sqrt() * r - 0.5;
    let (mut lo, mut hi) = (0.0, 0.25);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if phi(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Geometry metadata recorded alongside a generated instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SupportDescriptor {
    UniformComponents {
        boxes: Vec<AxisBox>,
        labels: Vec<f64>,
    },
    LowerBound {
        /// Bumps per axis.
        l: usize,
        /// Total bump count `l^(d-1)`.
        q: usize,
        /// Bump width `1 / (l + 2)`.
        eps: f64,
        r: f64,
        /// Root of the bump-radius equation, for reference.
        r_root: f64,
        /// Height of the lower slab's top face.
        base: f64,
        omega: Vec<u8>,
        /// Lower bound on the condition number.
        tau_lower_bound: f64,
        /// Euclidean gap between the two labeled sets next to a bump.
        gap: f64,
        support_volume: f64,
    },
    Smooth {
        alpha_true: f64,
        beta: f64,
        c1: f64,
        anchor: Vec<f64>,
        scale: f64,
        bumps: Vec<DensityBump>,
        normalizer: f64,
        reference_resolution: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityBump {
    pub center: Vec<f64>,
    pub width: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone)]
struct LowerBoundShape {
    d: usize,
    l: usize,
    eps: f64,
    r: f64,
    base: f64,
    omega: Vec<bool>,
    lower_box: AxisBox,
    upper_box: AxisBox,
    m_bound: f64,
    density: f64,
}

impl LowerBoundShape {
    /// Bump index and local coordinates `(x~ - v) / eps` for the footprint containing `x`.
    fn bump_at(&self, x: &[f64]) -> Option<(usize, Vec<f64>)> {
        let mut flat = 0usize;
        let mut local = Vec::with_capacity(self.d - 1);
        for &xk in &x[..self.d - 1] {
            let i = (xk / self.eps).floor();
            if i < 1.0 || i > self.l as f64 {
                return None;
            }
            let i = i as usize;
            let center = (i as f64 + 0.5) * self.eps;
            local.push((xk - center) / self.eps);
            flat = flat * self.l + (i - 1);
        }
        Some((flat, local))
    }

    /// Height above the base in bump units, if `x` sits over an active bump.
    fn active_bump(&self, x: &[f64]) -> Option<(f64, f64)> {
        let (flat, local) = self.bump_at(x)?;
        if !self.omega[flat] {
            return None;
        }
        let t = (x[self.d - 1] - self.base) / self.eps;
        Some((t, bump_profile(&local, self.r)))
    }

    fn in_lower(&self, x: &[f64]) -> bool {
        if self.lower_box.distance(x) <= self.eps {
            return true;
        }
        matches!(self.active_bump(x), Some((t, g)) if t >= 0.0 && t <= g)
    }

    fn in_upper(&self, x: &[f64]) -> bool {
        if self.upper_box.distance(x) > self.eps {
            return false;
        }
        !matches!(self.active_bump(x), Some((t, g)) if t - self.r >= 0.0 && t - self.r <= g)
    }
}

#[derive(Debug, Clone)]
struct SmoothShape {
    bumps: Vec<DensityBump>,
    normalizer: f64,
    reference: GeodesicGraph,
    field: DistanceField,
    c1: f64,
    beta: f64,
    scale: f64,
}

impl SmoothShape {
    fn density(&self, x: &[f64]) -> f64 {
        if !AxisBox::unit(x.len()).contains(x) {
            return 0.0;
        }
        smooth_unnormalized(&self.bumps, x) / self.normalizer
    }

    fn reference_distance(&self, x: &[f64]) -> f64 {
        self.reference.snap(x).map_or(f64::INFINITY, |n| self.field.at(n))
    }

    fn f_star(&self, x: &[f64]) -> f64 {
        let d = self.reference_distance(x);
        if d.is_infinite() {
            return 0.0;
        }
        self.c1 * d.min(self.scale).powf(self.beta)
    }
}

fn smooth_unnormalized(bumps: &[DensityBump], x: &[f64]) -> f64 {
    1.0 + bumps
        .iter()
        .map(|b| {
            let r2: f64 = x.iter().zip(&b.center).map(|(a, c)| (a - c) * (a - c)).sum();
            b.amplitude * (-r2 / (2.0 * b.width * b.width)).exp()
        })
        .sum::<f64>()
}

#[derive(Debug, Clone)]
enum Shape {
    Components { boxes: Vec<AxisBox>, labels: Vec<f64>, density: f64 },
    LowerBound(Box<LowerBoundShape>),
    Smooth(Box<SmoothShape>),
}

/// A synthetic regression problem with known density and regression function.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pclass: ProblemClass,
    descriptor: SupportDescriptor,
    shape: Shape,
    bounds: AxisBox,
    /// Upper bound on the density, for rejection sampling.
    envelope: f64,
}

impl ProblemInstance {
    pub fn pclass(&self) -> &ProblemClass {
        &self.pclass
    }

    pub fn descriptor(&self) -> &SupportDescriptor {
        &self.descriptor
    }

    pub fn dim(&self) -> usize {
        self.pclass.d
    }

    /// Box containing the support; samplers draw proposals from it.
    pub fn bounding_box(&self) -> &AxisBox {
        &self.bounds
    }

    pub fn generator_name(&self) -> &'static str {
        match self.shape {
            Shape::Components { .. } => "uniform_components",
            Shape::LowerBound(_) => "lower_bound",
            Shape::Smooth(_) => "smooth",
        }
    }

    pub fn p_true(&self, x: &[f64]) -> f64 {
        match &self.shape {
            Shape::Components { boxes, density, .. } => {
                if boxes.iter().any(|b| b.contains(x)) {
                    *density
                } else {
                    0.0
                }
            }
            Shape::LowerBound(s) => {
                if s.in_lower(x) || s.in_upper(x) {
                    s.density
                } else {
                    0.0
                }
            }
            Shape::Smooth(s) => s.density(x),
        }
    }

    /// Regression function; zero off the support.
    pub fn f_star(&self, x: &[f64]) -> f64 {
        match &self.shape {
            Shape::Components { boxes, labels, .. } => {
                boxes.iter().position(|b| b.contains(x)).map_or(0.0, |i| labels[i])
            }
            Shape::LowerBound(s) => {
                if s.in_lower(x) {
                    s.m_bound
                } else if s.in_upper(x) {
                    -s.m_bound
                } else {
                    0.0
                }
            }
            Shape::Smooth(s) => s.f_star(x),
        }
    }

    /// Membership in the lower (`Some(true)`) or upper (`Some(false)`) labeled
    /// set of the bump instance; `None` elsewhere or for other generators.
    pub fn lower_bound_side(&self, x: &[f64]) -> Option<bool> {
        match &self.shape {
            Shape::LowerBound(s) if s.in_lower(x) => Some(true),
            Shape::LowerBound(s) if s.in_upper(x) => Some(false),
            _ => None,
        }
    }

    /// Distance from `x` to the support, when it has a closed form.
    pub fn distance_outside_support(&self, x: &[f64]) -> Option<f64> {
        match &self.shape {
            Shape::Components { boxes, .. } => {
                Some(boxes.iter().map(|b| b.distance(x)).fold(f64::INFINITY, f64::min))
            }
            Shape::Smooth(_) => Some(AxisBox::unit(x.len()).distance(x)),
            Shape::LowerBound(_) => None,
        }
    }

    /// Draws `n` points from `p` by rejection from the bounding box.
    pub fn sample_x(&self, n: usize, rng: &mut impl Rng) -> Vec<Point> {
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let x = self.bounds.sample(rng);
            let p = self.p_true(&x);
            if p <= 0.0 {
                continue;
            }
            if p < self.envelope && rng.random::<f64>() * self.envelope > p {
                continue;
            }
            out.push(Point::new(x).expect("sampled coordinates are finite"));
        }
        out
    }

    /// `f*(x)` plus Gaussian noise of standard deviation `sigma`.
    pub fn sample_y(&self, x: &Point, rng: &mut impl Rng) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.f_star(x.coords()) + self.pclass.sigma * z
    }

    pub fn sample_labeled(&self, n: usize, seed: u64) -> Result<LabeledSet> {
        let mut rng = rng_for(seed);
        let points = self.sample_x(n, &mut rng);
        let labels = points.iter().map(|p| self.sample_y(p, &mut rng)).collect();
        LabeledSet::new(points, labels)
    }

    pub fn sample_unlabeled(&self, m: usize, seed: u64) -> Result<UnlabeledSet> {
        let mut rng = rng_for(seed);
        UnlabeledSet::new(self.sample_x(m, &mut rng))
    }

    pub fn sidecar(&self) -> InstanceSidecar {
        InstanceSidecar {
            schema_version: InstanceSidecar::SCHEMA_VERSION,
            generator: self.generator_name().to_string(),
            pclass: self.pclass.clone(),
            descriptor: self.descriptor.clone(),
        }
    }
}

/// JSON sidecar written next to generated datasets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceSidecar {
    pub schema_version: u32,
    pub generator: String,
    pub pclass: ProblemClass,
    pub descriptor: SupportDescriptor,
}

impl InstanceSidecar {
    pub const SCHEMA_VERSION: u32 = 1;
}

/// Uniform density on the union of disjoint boxes, `f*` constant per box,
/// Gaussian label noise.
pub fn make_uniform_components(boxes: Vec<AxisBox>, labels: Vec<f64>, sigma: f64) -> Result<ProblemInstance> {
    if boxes.is_empty() || boxes.len() != labels.len() {
        return Err(Error::Geometry(format!("{} boxes but {} labels", boxes.len(), labels.len())));
    }
    let d = boxes[0].dim();
    for b in &boxes {
        AxisBox::new(b.lower.clone(), b.upper.clone())?;
        if b.dim() != d {
            return Err(Error::Geometry("boxes differ in dimension".into()));
        }
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Domain(format!("noise level must be >= 0, got {sigma}")));
    }
    if labels.iter().any(|y| !y.is_finite()) {
        return Err(Error::Domain("component labels must be finite".into()));
    }
    let mut tau = boxes.iter().flat_map(|b| b.sides()).fold(f64::INFINITY, f64::min) / 2.0;
    for (i, a) in boxes.iter().enumerate() {
        for b in &boxes[i + 1..] {
            if a.overlaps(b) {
                return Err(Error::Geometry(format!("boxes {a:?} and {b:?} overlap")));
            }
            let gap = (0..d)
                .map(|k| (a.lower[k] - b.upper[k]).max(b.lower[k] - a.upper[k]).max(0.0).powi(2))
                .sum::<f64>()
                .sqrt();
            if gap > 0.0 {
                tau = tau.min(gap / 2.0);
            }
        }
    }
    let volume: f64 = boxes.iter().map(AxisBox::volume).sum();
    let density = 1.0 / volume;
    let m_bound = labels.iter().fold(0.0f64, |a, y| a.max(y.abs()));
    let pclass = ProblemClass {
        d,
        lambda0: density,
        big_lambda0: density,
        m_bound: if m_bound > 0.0 { m_bound } else { 1.0 },
        sigma,
        k_components: boxes.len(),
        tau0: tau,
        beta: 1.0,
        c1: 0.0,
        eta: 1.0,
        c2: 0.0,
    };
    let lower = (0..d).map(|k| boxes.iter().map(|b| b.lower[k]).fold(f64::INFINITY, f64::min)).collect();
    let upper = (0..d).map(|k| boxes.iter().map(|b| b.upper[k]).fold(f64::NEG_INFINITY, f64::max)).collect();
    Ok(ProblemInstance {
        pclass,
        descriptor: SupportDescriptor::UniformComponents { boxes: boxes.clone(), labels: labels.clone() },
        shape: Shape::Components { boxes, labels, density },
        bounds: AxisBox { lower, upper },
        envelope: density,
    })
}

/// Which bumps of the lower-bound instance are present.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Omega {
    #[default]
    AllOnes,
    Bits(Vec<bool>),
    Seed(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LowerBoundParams {
    pub n_design: usize,
    pub d: usize,
    #[serde(default)]
    pub omega: Omega,
    pub m_bound: f64,
    pub c0: f64,
    /// Bump fillet radius; defaults to the root of the radius equation.
    pub r: Option<f64>,
    pub sigma: f64,
}

impl Default for LowerBoundParams {
    fn default() -> Self {
        LowerBoundParams { n_design: 10, d: 2, omega: Omega::AllOnes, m_bound: 1.0, c0: 3.0, r: None, sigma: 0.1 }
    }
}

/// Two slabs in `[0,1]^d` joined by `l^(d-1)` bumps, `l = floor(c0 n^(1/(d-1)))`.
///
/// Writing `eps = 1/(l+2)` and `b = 1/8`, the lower set is the `eps`-dilation of
/// `[eps, 1-eps]^(d-1) x [eps, b-eps]` plus, for every active bump `i`, the set
/// `{x : 0 <= (x_d - b)/eps <= g((x~ - v_i)/eps)}`. The upper set is the
/// `eps`-dilation of `[eps, 1-eps]^(d-1) x [b + eps r + eps, 1-eps]` minus the
/// same bumps raised by `eps r`. `f* = +M` on the lower set and `-M` on the upper.
pub fn make_lower_bound_instance(params: &LowerBoundParams) -> Result<ProblemInstance> {
    let LowerBoundParams { n_design, d, ref omega, m_bound, c0, r, sigma } = *params;
    if d < 2 {
        return Err(Error::Domain(format!("the bump instance needs d >= 2, got {d}")));
    }
    if n_design < 1 {
        return Err(Error::Domain("n_design must be >= 1".into()));
    }
    if !(c0 >= 3.0 && c0.is_finite()) {
        return Err(Error::Domain(format!("c0 must be >= 3, got {c0}")));
    }
    if !(m_bound > 0.0 && m_bound.is_finite()) {
        return Err(Error::Domain(format!("M must be positive, got {m_bound}")));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Domain(format!("noise level must be >= 0, got {sigma}")));
    }
    let r_root = bump_radius_root(d);
    let r = r.unwrap_or(r_root);
    if !(r > 0.0 && r < 0.25) {
        return Err(Error::Domain(format!("bump radius r must lie in (0, 1/4), got {r}")));
    }

    let l = (c0 * (n_design as f64).powf(1.0 / (d - 1) as f64)).floor() as usize;
    let q = l
        .checked_pow((d - 1) as u32)
        .filter(|&q| q <= 10_000_000)
        .ok_or_else(|| Error::Domain("too many bumps".into()))?;
    let eps = 1.0 / (l as f64 + 2.0);
    let base = 0.125;
    if base - 2.0 * eps <= 0.0 {
        return Err(Error::Geometry(format!(
            "bump width {eps} leaves no lower slab; need l >= 15 (got l = {l})"
        )));
    }

    let omega: Vec<bool> = match omega {
        Omega::AllOnes => vec![true; q],
        Omega::Bits(bits) => {
            if bits.len() != q {
                return Err(Error::Domain(format!("omega has {} bits, expected {q}", bits.len())));
            }
            bits.clone()
        }
        Omega::Seed(seed) => {
            let mut rng = rng_for(*seed);
            (0..q).map(|_| rng.random::<bool>()).collect()
        }
    };

    let mut lo = vec![eps; d];
    let mut hi = vec![1.0 - eps; d];
    lo[d - 1] = eps;
    hi[d - 1] = base - eps;
    let lower_box = AxisBox { lower: lo.clone(), upper: hi.clone() };
    lo[d - 1] = base + eps * r + eps;
    hi[d - 1] = 1.0 - eps;
    let upper_box = AxisBox { lower: lo, upper: hi };

    let support_volume = dilated_box_volume(&lower_box.sides(), eps) + dilated_box_volume(&upper_box.sides(), eps);
    let density = 1.0 / support_volume;
    let gap = eps * ((0.25 + r * r).sqrt() - 0.5);
    let tau_lower_bound = gap / 2.0;

    let pclass = ProblemClass {
        d,
        lambda0: density,
        big_lambda0: density,
        m_bound,
        sigma,
        k_components: 2,
        tau0: tau_lower_bound,
        beta: 1.0,
        c1: 0.0,
        eta: 1.0,
        c2: 0.0,
    };
    let descriptor = SupportDescriptor::LowerBound {
        l,
        q,
        eps,
        r,
        r_root,
        base,
        omega: omega.iter().map(|&b| u8::from(b)).collect(),
        tau_lower_bound,
        gap,
        support_volume,
    };
    let shape = LowerBoundShape { d, l, eps, r, base, omega, lower_box, upper_box, m_bound, density };
    Ok(ProblemInstance {
        pclass,
        descriptor,
        shape: Shape::LowerBound(Box::new(shape)),
        bounds: AxisBox::unit(d),
        envelope: density,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoothParams {
    pub alpha_true: f64,
    /// Holder exponent of `f*`; must lie in `(0, 1]`.
    pub beta: f64,
    pub c1: f64,
    pub sigma: f64,
    pub n_bumps: usize,
    /// Cells per axis of the reference grid defining `f*`.
    pub reference_resolution: usize,
    pub seed: u64,
}

impl Default for SmoothParams {
    fn default() -> Self {
        SmoothParams { alpha_true: 0.0, beta: 1.0, c1: 1.0, sigma: 0.1, n_bumps: 3, reference_resolution: 200, seed: 0 }
    }
}

/// `int_0^1 exp(-(t - c)^2 / (2 w^2)) dt` by the midpoint rule.
fn gaussian_mass_1d(center: f64, width: f64) -> f64 {
    const N: usize = 20_000;
    let h = 1.0 / N as f64;
    (0..N)
        .map(|i| {
            let t = (i as f64 + 0.5) * h;
            (-(t - center).powi(2) / (2.0 * width * width)).exp()
        })
        .sum::<f64>()
        * h
}

/// Smooth density on `[0,1]^2` and `f*(x) = c1 * min(D_alpha(x0, x), s)^beta`,
/// with `D_alpha` evaluated on a fine reference grid using the true density.
pub fn make_smooth_instance(params: &SmoothParams) -> Result<ProblemInstance> {
    let SmoothParams { alpha_true, beta, c1, sigma, n_bumps, reference_resolution, seed } = *params;
    if !(alpha_true >= 0.0 && alpha_true.is_finite()) {
        return Err(Error::Domain(format!("alpha_true must be >= 0, got {alpha_true}")));
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::Domain(format!("beta must lie in (0, 1], got {beta}")));
    }
    if !(c1 > 0.0 && c1.is_finite()) {
        return Err(Error::Domain(format!("c1 must be positive, got {c1}")));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Domain(format!("noise level must be >= 0, got {sigma}")));
    }
    if reference_resolution < 2 {
        return Err(Error::Domain("reference grid needs at least 2 cells per axis".into()));
    }
    let d = 2;
    let mut rng = rng_for(seed);
    let bumps: Vec<DensityBump> = (0..n_bumps)
        .map(|_| DensityBump {
            center: (0..d).map(|_| rng.random_range(0.2..0.8)).collect(),
            width: rng.random_range(0.08..0.15),
            amplitude: rng.random_range(1.0..3.0),
        })
        .collect();
    let anchor: Vec<f64> = (0..d).map(|_| rng.random_range(0.2..0.8)).collect();

    let normalizer = 1.0
        + bumps
            .iter()
            .map(|b| b.amplitude * b.center.iter().map(|&c| gaussian_mass_1d(c, b.width)).product::<f64>())
            .sum::<f64>();
    let lambda0 = 1.0 / normalizer;
    let big_lambda0 = (1.0 + bumps.iter().map(|b| b.amplitude).sum::<f64>()) / normalizer;
    let lipschitz = bumps.iter().map(|b| b.amplitude / (b.width * std::f64::consts::E.sqrt())).sum::<f64>() / normalizer;

    let grid = GridSpec::cube(0.0, 1.0, d, reference_resolution)?;
    let exact = Schedule { eps_m: 0.0, delta_m: 0.0, h_m: 1.0 };
    let truth = DensityModel::from_fn(grid, exact, |x| smooth_unnormalized(&bumps, x) / normalizer)?;
    let reference = build_graph(&truth, alpha_true, Connectivity::N16)?;
    let source = reference.snap(&anchor).expect("anchor lies inside the unit square");
    let field = reference.field_from_node(source);
    let max_distance = field.values().iter().copied().fold(0.0, f64::max);
    let scale = 0.6 * max_distance;

    let pclass = ProblemClass {
        d,
        lambda0,
        big_lambda0,
        m_bound: c1 * scale.powf(beta),
        sigma,
        k_components: 1,
        tau0: 0.5,
        beta,
        c1,
        eta: 1.0,
        c2: lipschitz,
    };
    let descriptor = SupportDescriptor::Smooth {
        alpha_true,
        beta,
        c1,
        anchor,
        scale,
        bumps: bumps.clone(),
        normalizer,
        reference_resolution,
    };
    let shape = SmoothShape { bumps, normalizer, reference, field, c1, beta, scale };
    Ok(ProblemInstance {
        pclass,
        descriptor,
        shape: Shape::Smooth(Box::new(shape)),
        bounds: AxisBox::unit(d),
        envelope: big_lambda0,
    })
}

impl ProblemInstance {
    /// Reference-grid density-sensitive distance between two points of a
    /// smooth instance (`None` for other generators).
    pub fn reference_distance(&self, a: &[f64], b: &[f64]) -> Option<f64> {
        match &self.shape {
            Shape::Smooth(s) => {
                let (u, v) = (s.reference.snap(a)?, s.reference.snap(b)?);
                Some(s.reference.node_distance(u, v))
            }
            _ => None,
        }
    }
}
