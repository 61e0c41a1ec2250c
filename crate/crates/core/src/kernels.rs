//! Heat kernels of the Laplacian and its Dirichlet, Neumann and glued
//! variants, built from Gaussians by reflection, and their action on
//! sampled functions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::{restrict, DomainKind, Grid, Region, SampledFunction, SNAP};
use crate::quad::{composite, GaussLegendre};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OpTag {
    Delta,
    DeltaDPlus,
    DeltaNPlus,
    DeltaDMinus,
    DeltaNMinus,
    DeltaD,
    DeltaN,
    DeltaDN,
}

impl OpTag {
    pub const ALL: [OpTag; 8] = [
        OpTag::Delta,
        OpTag::DeltaDPlus,
        OpTag::DeltaNPlus,
        OpTag::DeltaDMinus,
        OpTag::DeltaNMinus,
        OpTag::DeltaD,
        OpTag::DeltaN,
        OpTag::DeltaDN,
    ];

    pub fn region(self) -> Region {
        match self {
            OpTag::DeltaDPlus | OpTag::DeltaNPlus => Region::UpperHalf,
            OpTag::DeltaDMinus | OpTag::DeltaNMinus => Region::LowerHalf,
            _ => Region::Full,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        OpTag::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::OutOfRange(format!("unknown operator '{s}'")))
    }

    pub fn name(self) -> &'static str {
        match self {
            OpTag::Delta => "Delta",
            OpTag::DeltaDPlus => "DeltaDPlus",
            OpTag::DeltaNPlus => "DeltaNPlus",
            OpTag::DeltaDMinus => "DeltaDMinus",
            OpTag::DeltaNMinus => "DeltaNMinus",
            OpTag::DeltaD => "DeltaD",
            OpTag::DeltaN => "DeltaN",
            OpTag::DeltaDN => "DeltaDN",
        }
    }

    /// Coefficient of the reflected Gaussian for a target on the upper
    /// (`x_n >= 0`) or lower side.
    pub fn image_sign(self, upper: bool) -> f64 {
        match self {
            OpTag::Delta => 0.0,
            OpTag::DeltaDPlus | OpTag::DeltaDMinus | OpTag::DeltaD => -1.0,
            OpTag::DeltaNPlus | OpTag::DeltaNMinus | OpTag::DeltaN => 1.0,
            OpTag::DeltaDN => {
                if upper {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }

    pub fn is_glued(self) -> bool {
        matches!(self, OpTag::DeltaD | OpTag::DeltaN | OpTag::DeltaDN)
    }

    /// `e^{-tL} 1 = 1`.
    pub fn is_conservative(self) -> bool {
        matches!(self, OpTag::Delta | OpTag::DeltaN | OpTag::DeltaNPlus | OpTag::DeltaNMinus)
    }

    /// The half-space operator acting on one side of a glued operator.
    pub fn side(self, upper: bool) -> OpTag {
        match (self, upper) {
            (OpTag::DeltaD, true) => OpTag::DeltaDPlus,
            (OpTag::DeltaD, false) => OpTag::DeltaDMinus,
            (OpTag::DeltaN, true) | (OpTag::DeltaDN, true) => OpTag::DeltaNPlus,
            (OpTag::DeltaN, false) => OpTag::DeltaNMinus,
            (OpTag::DeltaDN, false) => OpTag::DeltaDMinus,
            (t, _) => t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OperatorKind {
    pub tag: OpTag,
    pub dim: usize,
}

impl OperatorKind {
    pub fn new(tag: OpTag, dim: usize) -> Result<Self> {
        DomainKind::new(dim, tag.region())?;
        Ok(Self { tag, dim })
    }

    pub fn domain(&self) -> DomainKind {
        DomainKind { dim: self.dim, region: self.tag.region() }
    }

    pub fn name(&self) -> String {
        if self.dim == 1 {
            self.tag.name().to_string()
        } else {
            format!("{}[{}d]", self.tag.name(), self.dim)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    Midpoint,
    Trapezoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    pub epsilon: f64,
    /// Each cell is split into `2^depth` pieces for the sub-rule.
    pub depth: u32,
    pub rule: Rule,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self { epsilon: 1e-12, depth: 0, rule: Rule::Trapezoid }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::OutOfRange(format!("epsilon must lie in (0, 1), got {}", self.epsilon)));
        }
        if self.depth > 12 {
            return Err(Error::OutOfRange(format!("refinement depth {} is too large", self.depth)));
        }
        Ok(())
    }

    /// Kernel truncation radius `2 sqrt(t) sqrt(ln(1/eps))`.
    pub fn radius(&self, t: f64) -> f64 {
        2.0 * t.sqrt() * (1.0 / self.epsilon).ln().sqrt()
    }
}

/// One-dimensional Gaussian `(4 pi t)^{-1/2} e^{-d^2/4t}`.
pub fn gaussian(t: f64, d: f64) -> f64 {
    (-d * d / (4.0 * t)).exp() / (4.0 * PI * t).sqrt()
}

/// `-t d/dt` of the one-dimensional Gaussian.
pub fn gaussian_generator(t: f64, d: f64) -> f64 {
    gaussian(t, d) * (0.5 - d * d / (4.0 * t))
}

/// Radial profile a kernel is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// `p_t`
    Heat,
    /// `-t dp_t/dt`, the kernel of `tL e^{-tL}`
    Generator,
}

impl Profile {
    fn eval(self, t: f64, d: f64) -> f64 {
        match self {
            Profile::Heat => gaussian(t, d),
            Profile::Generator => gaussian_generator(t, d),
        }
    }

    /// Bound on `int_d^inf |profile|` relative to the Gaussian tail.
    fn tail(self, t: f64, d: f64) -> f64 {
        let base = 0.5 * erfc(d / (2.0 * t.sqrt()));
        match self {
            Profile::Heat => base,
            Profile::Generator => base * (1.5 + d * d / (4.0 * t)),
        }
    }
}

fn heaviside(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Normal factor of the kernel: direct Gaussian plus signed image, masked
/// for glued operators.
fn normal_factor(tag: OpTag, g: impl Fn(f64) -> f64, x: f64, y: f64) -> f64 {
    match tag {
        OpTag::Delta => g(x - y),
        OpTag::DeltaDPlus | OpTag::DeltaDMinus => g(x - y) - g(x + y),
        OpTag::DeltaNPlus | OpTag::DeltaNMinus => g(x - y) + g(x + y),
        OpTag::DeltaD | OpTag::DeltaN | OpTag::DeltaDN => {
            let mask = heaviside(x * y);
            if mask == 0.0 {
                return 0.0;
            }
            let sign = match tag {
                OpTag::DeltaD => -1.0,
                OpTag::DeltaN => 1.0,
                _ => 2.0 * heaviside(x) - 1.0,
            };
            g(x - y) + sign * g(x + y)
        }
    }
}

fn check_point(op: &OperatorKind, x: &[f64]) -> Result<()> {
    if x.len() != op.dim || !op.domain().contains(x) {
        return Err(Error::PointOutsideDomain(x.to_vec()));
    }
    Ok(())
}

fn check_time(t: f64) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::NonPositiveTime(t));
    }
    Ok(())
}

fn eval_profile(op: &OperatorKind, t: f64, x: &[f64], y: &[f64], profile: Profile) -> f64 {
    let n = op.dim - 1;
    let normal = |p: Profile| normal_factor(op.tag, |d| p.eval(t, d), x[n], y[n]);
    match (op.dim, profile) {
        (1, p) => normal(p),
        (_, Profile::Heat) => gaussian(t, x[0] - y[0]) * normal(Profile::Heat),
        (_, Profile::Generator) => {
            gaussian_generator(t, x[0] - y[0]) * normal(Profile::Heat)
                + gaussian(t, x[0] - y[0]) * normal(Profile::Generator)
        }
    }
}

/// Closed-form heat kernel `p_t(x, y)`.
pub fn eval_heat_kernel(op: &OperatorKind, t: f64, x: &[f64], y: &[f64]) -> Result<f64> {
    check_time(t)?;
    check_point(op, x)?;
    check_point(op, y)?;
    Ok(eval_profile(op, t, x, y, Profile::Heat))
}

/// Kernel of `tL e^{-tL}`, i.e. `-t dp_t/dt`.
pub fn eval_generator_kernel(op: &OperatorKind, t: f64, x: &[f64], y: &[f64]) -> Result<f64> {
    check_time(t)?;
    check_point(op, x)?;
    check_point(op, y)?;
    Ok(eval_profile(op, t, x, y, Profile::Generator))
}

/// Interval of `y` values the kernel at target `x_n` integrates over.
fn support(tag: OpTag, xn: f64) -> (f64, f64) {
    match tag.region() {
        Region::UpperHalf => (0.0, f64::INFINITY),
        Region::LowerHalf => (f64::NEG_INFINITY, 0.0),
        Region::Full if tag.is_glued() => {
            // the interface belongs to the upper side
            if xn >= 0.0 {
                (0.0, f64::INFINITY)
            } else {
                (f64::NEG_INFINITY, 0.0)
            }
        }
        Region::Full => (f64::NEG_INFINITY, f64::INFINITY),
    }
}

fn gauss_panels(rule: &GaussLegendre, lo: f64, hi: f64, mut extra: Vec<f64>, f: impl FnMut(f64) -> f64) -> f64 {
    extra.push(lo);
    extra.push(hi);
    let mut br: Vec<f64> = extra.into_iter().filter(|b| *b >= lo && *b <= hi).collect();
    br.sort_by(|a, b| a.partial_cmp(b).unwrap());
    br.dedup();
    composite(rule, &br, 8, f)
}

/// `int p_t(x, y) dy` over the operator's domain, by Gauss-Legendre panels
/// on the window where the Gaussian tail is below 1e-20.
pub fn kernel_mass(op: &OperatorKind, t: f64, x: &[f64]) -> Result<f64> {
    check_time(t)?;
    check_point(op, x)?;
    let rule = GaussLegendre::new(20);
    let r = 2.0 * t.sqrt() * (1e20f64).ln().sqrt();
    let n = op.dim - 1;
    let xn = x[n];
    let (a, b) = support(op.tag, xn);
    let normal = gauss_panels(&rule, (xn - r).max(a), (xn + r).min(b), vec![0.0, xn], |y| {
        normal_factor(op.tag, |d| gaussian(t, d), xn, y)
    });
    let mut mass = normal;
    if op.dim == 2 {
        mass *= gauss_panels(&rule, x[0] - r, x[0] + r, vec![x[0]], |y| gaussian(t, x[0] - y));
    }
    Ok(mass)
}

/// `int p_t(x, z) p_s(z, y) dz` by Gauss-Legendre panels, axis by axis.
pub fn compose_kernels(op: &OperatorKind, t: f64, s: f64, x: &[f64], y: &[f64]) -> Result<f64> {
    check_time(t)?;
    check_time(s)?;
    check_point(op, x)?;
    check_point(op, y)?;
    let rule = GaussLegendre::new(20);
    let r = 2.0 * t.max(s).sqrt() * (1e20f64).ln().sqrt();
    let axis = |tag: OpTag, xa: f64, ya: f64| {
        let (a, b) = match tag.region() {
            Region::UpperHalf => (0.0, f64::INFINITY),
            Region::LowerHalf => (f64::NEG_INFINITY, 0.0),
            Region::Full => (f64::NEG_INFINITY, f64::INFINITY),
        };
        let lo = (xa.min(ya) - r).max(a);
        let hi = (xa.max(ya) + r).min(b);
        let br = vec![0.0, xa, ya, -xa, -ya];
        gauss_panels(&rule, lo, hi, br, |z| {
            normal_factor(tag, |d| gaussian(t, d), xa, z) * normal_factor(tag, |d| gaussian(s, d), z, ya)
        })
    };
    let n = op.dim - 1;
    let mut v = axis(op.tag, x[n], y[n]);
    if op.dim == 2 {
        v *= axis(OpTag::Delta, x[0], y[0]);
    }
    Ok(v)
}

/// `max |p_t(x,y)| / (t^{-n/2} e^{-|x-y|^2/4t})` over the pairs.
pub fn gaussian_bound_ratio(op: &OperatorKind, t: f64, pairs: &[(Vec<f64>, Vec<f64>)]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (x, y) in pairs {
        let p = eval_heat_kernel(op, t, x, y)?;
        let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        let g = t.powf(-0.5 * op.dim as f64) * (-d2 / (4.0 * t)).exp();
        worst = worst.max(p.abs() / g);
    }
    Ok(worst)
}

/// Weights of one axis: `tab[k + kmax]` integrates the profile at offset
/// `k h` against the right half of a hat function.
struct AxisTable {
    kmax: isize,
    tab: Vec<f64>,
}

impl AxisTable {
    fn new(t: f64, h: f64, radius: f64, q: &QuadratureConfig, profile: Profile) -> Self {
        let kmax = (radius / h).ceil() as isize + 1;
        let m = 1usize << q.depth;
        let delta = h / m as f64;
        let nodes: Vec<(f64, f64)> = match q.rule {
            Rule::Trapezoid => (0..=m)
                .map(|p| {
                    let w = if p == 0 || p == m { 0.5 * delta } else { delta };
                    (p as f64 * delta, w)
                })
                .collect(),
            Rule::Midpoint => (0..m).map(|p| ((p as f64 + 0.5) * delta, delta)).collect(),
        };
        let tab = (-kmax..=kmax)
            .map(|k| {
                let x = k as f64 * h;
                nodes.iter().map(|&(u, w)| w * profile.eval(t, x - u) * (1.0 - u / h)).sum()
            })
            .collect();
        Self { kmax, tab }
    }

    #[inline]
    fn r(&self, k: isize) -> f64 {
        if k.abs() > self.kmax {
            0.0
        } else {
            self.tab[(k + self.kmax) as usize]
        }
    }

    /// `sum_j w(i, j) v_j` for target index `i` on the same lattice;
    /// `image` scales the reflected term whose offset is `i + j + offset`.
    fn apply(&self, v: &[f64], i: isize, image: f64, offset: isize) -> f64 {
        let n = v.len() as isize;
        let k = self.kmax;
        let mut acc = 0.0;
        let j0 = (i - k).max(0);
        let j1 = (i + k).min(n - 1);
        for j in j0..=j1 {
            let d = i - j;
            let w = if j == 0 {
                self.r(d)
            } else if j == n - 1 {
                self.r(-d)
            } else {
                self.r(d) + self.r(-d)
            };
            acc += w * v[j as usize];
        }
        if image != 0.0 {
            let j0 = (-k - i - offset).max(0);
            let j1 = (k - i - offset).min(n - 1);
            let mut img = 0.0;
            for j in j0..=j1 {
                let m = i + j + offset;
                let w = if j == 0 {
                    self.r(-m)
                } else if j == n - 1 {
                    self.r(m)
                } else {
                    self.r(m) + self.r(-m)
                };
                img += w * v[j as usize];
            }
            acc += image * img;
        }
        acc
    }
}

/// Box of target points for a semigroup application.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// Node index range covering `[a, b]`, snapped outward.
fn node_range(g: &Grid, axis: usize, a: f64, b: f64) -> Option<(usize, usize)> {
    let n = g.counts()[axis] as isize;
    let k0 = (((a - g.lo[axis]) / g.h) + SNAP).floor() as isize;
    let k1 = (((b - g.hi[axis]) / g.h) - SNAP).ceil() as isize + n - 1;
    if k0 < 0 || k1 > n - 1 || k1 < k0 {
        None
    } else {
        Some((k0 as usize, k1 as usize))
    }
}

/// Per-axis description of where the grid is cut off short of the domain.
struct Truncation {
    lo: bool,
    hi: bool,
}

fn truncation(g: &Grid, axis: usize) -> Truncation {
    let normal = axis == g.dim() - 1;
    let region = g.domain.region;
    let at_zero = |x: f64| x.abs() <= SNAP * g.h;
    Truncation {
        lo: !(normal && region == Region::UpperHalf && at_zero(g.lo[axis])),
        hi: !(normal && region == Region::LowerHalf && at_zero(g.hi[axis])),
    }
}

/// Tail mass of the truncated kernel at the worst target of `ranges`.
fn coverage_tail(g: &Grid, ranges: &[(usize, usize)], t: f64, profile: Profile, image: bool) -> f64 {
    let factor = if image { 2.0 } else { 1.0 };
    let mut total = 0.0;
    for (axis, &(k0, k1)) in ranges.iter().enumerate() {
        let tr = truncation(g, axis);
        let f = if axis == g.dim() - 1 { factor } else { 1.0 };
        let worst = |d: f64| f * profile.tail(t, d);
        let mut axis_tail: f64 = 0.0;
        for k in [k0, k1] {
            let x = g.node(axis, k);
            let mut s = 0.0;
            if tr.lo {
                s += worst(x - g.lo[axis]);
            }
            if tr.hi {
                s += worst(g.hi[axis] - x);
            }
            axis_tail = axis_tail.max(s);
        }
        total += axis_tail;
    }
    total
}

/// Smallest distance from truncated edges that keeps the tail below eps.
pub fn needed_margin(dim: usize, t: f64, eps: f64, profile: Profile, image: bool) -> f64 {
    let factor = if image { 2.0 } else { 1.0 };
    let bound = |d: f64| 2.0 * dim as f64 * factor * profile.tail(t, d);
    let (mut a, mut b) = (0.0, 2.0 * t.sqrt());
    while bound(b) > eps {
        b *= 2.0;
    }
    for _ in 0..100 {
        let m = 0.5 * (a + b);
        if bound(m) > eps {
            a = m;
        } else {
            b = m;
        }
    }
    b
}

fn check_spacing(g: &Grid, t: f64) {
    if g.h > 0.25 * t.sqrt() {
        log::warn!(
            "grid spacing {} exceeds sqrt(t)/4 = {} at t = {t}; the Gaussian is under-resolved",
            g.h,
            0.25 * t.sqrt()
        );
    }
}

/// Applies a one-sided or full kernel to `f` (same-region grid) at the
/// targets `ranges`. `image` is the reflected-term coefficient.
fn apply_block(
    f: &SampledFunction,
    ranges: &[(usize, usize)],
    t: f64,
    q: &QuadratureConfig,
    image: f64,
    profile: Profile,
) -> Result<Vec<f64>> {
    let g = &f.grid;
    let dim = g.dim();
    let n = dim - 1;
    let offset = if image != 0.0 {
        let o = 2.0 * g.lo[n] / g.h;
        if (o - o.round()).abs() > 1e-6 {
            return Err(Error::Unsupported("reflected terms need the interface on the node lattice".into()));
        }
        o.round() as isize
    } else {
        0
    };
    let r = q.radius(t);
    let counts = g.counts();
    let (k0, k1) = ranges[n];
    let nt = k1 - k0 + 1;
    match (dim, profile) {
        (1, p) => {
            let tab = AxisTable::new(t, g.h, r, q, p);
            Ok((k0..=k1).into_par_iter().map(|i| tab.apply(&f.values, i as isize, image, offset)).collect())
        }
        (_, p) => {
            // normal pass on every tangential row, then tangential pass
            let (m0, m1) = ranges[0];
            let rows = counts[0];
            let cols = counts[1];
            let pass = |pn: Profile, pt: Profile| -> Vec<f64> {
                let tab_n = AxisTable::new(t, g.h, r, q, pn);
                let tab_t = AxisTable::new(t, g.h, r, q, pt);
                let mid: Vec<Vec<f64>> = (0..rows)
                    .into_par_iter()
                    .map(|row| {
                        let line = &f.values[row * cols..(row + 1) * cols];
                        (k0..=k1).map(|i| tab_n.apply(line, i as isize, image, offset)).collect()
                    })
                    .collect();
                let cols: Vec<Vec<f64>> = (0..nt).map(|c| mid.iter().map(|r| r[c]).collect()).collect();
                (m0..=m1)
                    .into_par_iter()
                    .flat_map_iter(|i| {
                        let tab_t = &tab_t;
                        cols.iter().map(move |col| tab_t.apply(col, i as isize, 0.0, 0)).collect::<Vec<_>>()
                    })
                    .collect()
            };
            match p {
                Profile::Heat => Ok(pass(Profile::Heat, Profile::Heat)),
                Profile::Generator => {
                    let a = pass(Profile::Heat, Profile::Generator);
                    let b = pass(Profile::Generator, Profile::Heat);
                    Ok(a.iter().zip(&b).map(|(x, y)| x + y).collect())
                }
            }
        }
    }
}

/// Result of a semigroup application: one part, or the lower and upper
/// closed halves of a glued operator (each carries its own interface value).
#[derive(Debug, Clone)]
pub struct Parts {
    pub parts: Vec<SampledFunction>,
}

impl Parts {
    /// Single function; on the interface the upper side wins.
    pub fn merged(&self) -> Result<SampledFunction> {
        match self.parts.as_slice() {
            [one] => Ok(one.clone()),
            [lower, upper] => merge_halves(lower, upper),
            _ => Err(Error::GridMismatch("no parts".into())),
        }
    }
}

fn merge_halves(lower: &SampledFunction, upper: &SampledFunction) -> Result<SampledFunction> {
    let gl = &lower.grid;
    let gu = &upper.grid;
    let dim = gl.dim();
    let n = dim - 1;
    let ml = gl.counts()[n];
    let mu = gu.counts()[n];
    let mut lo = gl.lo.clone();
    let mut hi = gu.hi.clone();
    lo[n] = gl.lo[n];
    hi[n] = gu.hi[n];
    let full = Grid::new(DomainKind::full(dim), &lo, &hi, gl.h)?;
    let rows = gl.len() / ml;
    let mut values = Vec::with_capacity(full.len());
    for r in 0..rows {
        values.extend_from_slice(&lower.values[r * ml..r * ml + ml - 1]);
        values.extend_from_slice(&upper.values[r * mu..(r + 1) * mu]);
    }
    SampledFunction::new(full, values)
}

fn check_grid(op: &OperatorKind, f: &SampledFunction) -> Result<()> {
    if f.grid.domain != op.domain() {
        return Err(Error::GridMismatch(format!(
            "operator {} acts on {:?}, function lives on {:?}",
            op.name(),
            op.domain(),
            f.grid.domain
        )));
    }
    Ok(())
}

fn sub_grid(g: &Grid, ranges: &[(usize, usize)], region: Region) -> Result<Grid> {
    let first: Vec<usize> = ranges.iter().map(|r| r.0).collect();
    let last: Vec<usize> = ranges.iter().map(|r| r.1).collect();
    let lo: Vec<f64> = first.iter().enumerate().map(|(a, &k)| g.node(a, k)).collect();
    let hi: Vec<f64> = last.iter().enumerate().map(|(a, &k)| g.node(a, k)).collect();
    Grid::new(DomainKind { dim: g.dim(), region }, &lo, &hi, g.h)
}

fn apply_one_side(
    tag: OpTag,
    f: &SampledFunction,
    t: f64,
    q: &QuadratureConfig,
    window: &Window,
    profile: Profile,
    upper: bool,
) -> Result<SampledFunction> {
    let g = &f.grid;
    let image = tag.image_sign(upper);
    let ranges: Vec<(usize, usize)> = (0..g.dim())
        .map(|a| {
            node_range(g, a, window.lo[a], window.hi[a]).ok_or_else(|| Error::InsufficientCoverage {
                t,
                tail_mass: 1.0,
                needed_margin: needed_margin(g.dim(), t, q.epsilon, profile, image != 0.0),
            })
        })
        .collect::<Result<_>>()?;
    let tail = coverage_tail(g, &ranges, t, profile, image != 0.0);
    if tail > q.epsilon {
        return Err(Error::InsufficientCoverage {
            t,
            tail_mass: tail,
            needed_margin: needed_margin(g.dim(), t, q.epsilon, profile, image != 0.0),
        });
    }
    let values = apply_block(f, &ranges, t, q, image, profile)?;
    SampledFunction::new(sub_grid(g, &ranges, g.domain.region)?, values)
}

/// Applies the kernel built from `profile` on the targets in `window`,
/// keeping the two halves of a glued operator apart.
pub fn apply_parts(
    op: &OperatorKind,
    t: f64,
    f: &SampledFunction,
    q: &QuadratureConfig,
    window: &Window,
    profile: Profile,
) -> Result<Parts> {
    check_time(t)?;
    q.validate()?;
    check_grid(op, f)?;
    check_spacing(&f.grid, t);
    if window.lo.len() != op.dim || window.hi.len() != op.dim {
        return Err(Error::GridMismatch("window dimension differs from the operator's".into()));
    }
    if !op.tag.is_glued() {
        let upper = op.tag.region() != Region::LowerHalf;
        let one = apply_one_side(op.tag, f, t, q, window, profile, upper)?;
        return Ok(Parts { parts: vec![one] });
    }
    let n = op.dim - 1;
    let mut parts = Vec::new();
    for upper in [false, true] {
        let wants = if upper { window.hi[n] >= 0.0 } else { window.lo[n] < 0.0 };
        if !wants {
            continue;
        }
        let half = restrict(f, if upper { Region::UpperHalf } else { Region::LowerHalf })?;
        let mut w = window.clone();
        if upper {
            w.lo[n] = w.lo[n].max(0.0);
        } else {
            w.hi[n] = w.hi[n].min(0.0);
        }
        parts.push(apply_one_side(op.tag, &half, t, q, &w, profile, upper)?);
    }
    if let [one] = parts.as_mut_slice() {
        one.grid.domain.region = Region::Full;
    }
    Ok(Parts { parts })
}

/// Targets where the truncated kernel meets the tolerance.
pub fn default_window(op: &OperatorKind, t: f64, g: &Grid, q: &QuadratureConfig, profile: Profile) -> Result<Window> {
    let image = op.tag != OpTag::Delta;
    let margin = needed_margin(g.dim(), t, q.epsilon, profile, image);
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for a in 0..g.dim() {
        let tr = truncation(g, a);
        let a0 = if tr.lo { g.lo[a] + margin } else { g.lo[a] };
        let a1 = if tr.hi { g.hi[a] - margin } else { g.hi[a] };
        // snap inward to nodes
        let k0 = ((a0 - g.lo[a]) / g.h - SNAP).ceil();
        let k1 = ((a1 - g.lo[a]) / g.h + SNAP).floor();
        if k1 < k0 {
            return Err(Error::InsufficientCoverage { t, tail_mass: 1.0, needed_margin: margin });
        }
        lo.push(g.lo[a] + k0 * g.h);
        hi.push(g.lo[a] + k1 * g.h);
    }
    Ok(Window { lo, hi })
}

/// `e^{-tL} f` on every node where the truncated kernel is accurate to
/// `q.epsilon`.
pub fn apply_semigroup(
    op: &OperatorKind,
    t: f64,
    f: &SampledFunction,
    q: &QuadratureConfig,
) -> Result<SampledFunction> {
    check_time(t)?;
    let w = default_window(op, t, &f.grid, q, Profile::Heat)?;
    apply_semigroup_window(op, t, f, q, &w)
}

/// `e^{-tL} f` on the nodes covering `window`.
pub fn apply_semigroup_window(
    op: &OperatorKind,
    t: f64,
    f: &SampledFunction,
    q: &QuadratureConfig,
    window: &Window,
) -> Result<SampledFunction> {
    apply_parts(op, t, f, q, window, Profile::Heat)?.merged()
}

/// `tL e^{-tL} f` through the time derivative of the kernel.
pub fn apply_generator_semigroup(
    op: &OperatorKind,
    t: f64,
    f: &SampledFunction,
    q: &QuadratureConfig,
) -> Result<SampledFunction> {
    check_time(t)?;
    let w = default_window(op, t, &f.grid, q, Profile::Generator)?;
    apply_parts(op, t, f, q, &w, Profile::Generator)?.merged()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::{sample, FunctionSpec};
    use crate::grid::make_grid;

    fn op1(tag: OpTag) -> OperatorKind {
        OperatorKind::new(tag, 1).unwrap()
    }

    #[test]
    fn spot_values() {
        let v = eval_heat_kernel(&op1(OpTag::Delta), 1.0, &[0.0], &[0.0]).unwrap();
        assert!((v - 0.28209479177387814).abs() < 1e-15);
        let v = eval_heat_kernel(&op1(OpTag::DeltaNPlus), 1.0, &[1.0], &[1.0]).unwrap();
        assert!((v - 0.38587166612902682).abs() < 1e-15);
        let v = eval_heat_kernel(&op1(OpTag::DeltaDPlus), 0.3, &[0.0], &[1.7]).unwrap();
        assert_eq!(v, 0.0);
        let v = eval_heat_kernel(&op1(OpTag::DeltaDN), 1.0, &[-1.0], &[1.0]).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn domain_and_time_errors() {
        let op = op1(OpTag::DeltaNPlus);
        assert!(matches!(eval_heat_kernel(&op, 1.0, &[-1.0], &[1.0]), Err(Error::PointOutsideDomain(_))));
        assert!(matches!(eval_heat_kernel(&op, 0.0, &[1.0], &[1.0]), Err(Error::NonPositiveTime(_))));
    }

    #[test]
    fn masses() {
        let m = kernel_mass(&op1(OpTag::DeltaN), 3.0, &[-0.7]).unwrap();
        assert!((m - 1.0).abs() < 1e-12);
        let m = kernel_mass(&op1(OpTag::DeltaDPlus), 1.0, &[2.0]).unwrap();
        assert!((m - 0.8427007929497149).abs() < 1e-12);
        let op2 = OperatorKind::new(OpTag::Delta, 2).unwrap();
        let m = kernel_mass(&op2, 0.2, &[0.4, -3.0]).unwrap();
        assert!((m - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bound_ratio_equality_case() {
        let pairs = vec![(vec![0.3], vec![1.1]), (vec![-2.0], vec![0.5])];
        let r = gaussian_bound_ratio(&op1(OpTag::Delta), 0.7, &pairs).unwrap();
        assert!((r - 1.0 / (4.0 * PI).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn neumann_semigroup_conserves_constants() {
        let g = make_grid(DomainKind::full(1), &[-16.0], &[16.0], 1.0 / 64.0).unwrap();
        let one = sample(&FunctionSpec::Constant { c: 1.0 }, &g).unwrap();
        let out = apply_semigroup(&op1(OpTag::DeltaN), 0.5, &one, &QuadratureConfig::default()).unwrap();
        assert!(out.values.iter().all(|v| (v - 1.0).abs() < 1e-6));
        assert!(out.grid.lo[0] < -1.0 && out.grid.hi[0] > 1.0);
    }

    #[test]
    fn dirichlet_constant_gives_error_function() {
        let g = make_grid(DomainKind::upper(1), &[0.0], &[16.0], 1.0 / 256.0).unwrap();
        let one = sample(&FunctionSpec::Constant { c: 1.0 }, &g).unwrap();
        let out = apply_semigroup(&op1(OpTag::DeltaDPlus), 1.0, &one, &QuadratureConfig::default()).unwrap();
        let v = out.at(&[2.0]).unwrap();
        assert!((v - 0.8427007929497149).abs() < 1e-6, "{v}");
        assert_eq!(out.at(&[0.0]).unwrap(), 0.0);
        // sub-cell refinement integrates the kink at the wall exactly
        let q = QuadratureConfig { depth: 4, ..Default::default() };
        let out = apply_semigroup(&op1(OpTag::DeltaDPlus), 1.0, &one, &q).unwrap();
        let v = out.at(&[2.0]).unwrap();
        assert!((v - 0.8427007929497149).abs() < 1e-8, "{v}");
    }

    #[test]
    fn coverage_failure_reports_margin() {
        let g = make_grid(DomainKind::full(1), &[-1.0], &[1.0], 1.0 / 64.0).unwrap();
        let one = sample(&FunctionSpec::Constant { c: 1.0 }, &g).unwrap();
        let w = Window { lo: vec![-0.5], hi: vec![0.5] };
        let r = apply_semigroup_window(&op1(OpTag::Delta), 1.0, &one, &QuadratureConfig::default(), &w);
        match r {
            Err(Error::InsufficientCoverage { needed_margin, .. }) => assert!(needed_margin > 9.0),
            other => panic!("expected coverage error, got {other:?}"),
        }
    }

    #[test]
    fn refinement_rules_agree_on_smooth_data() {
        let g = make_grid(DomainKind::full(1), &[-10.0], &[10.0], 1.0 / 32.0).unwrap();
        let f = sample(&FunctionSpec::Bump { center: 0.0, radius: 2.0 }, &g).unwrap();
        let op = op1(OpTag::Delta);
        let base = apply_semigroup(&op, 0.5, &f, &QuadratureConfig::default()).unwrap();
        for rule in [Rule::Midpoint, Rule::Trapezoid] {
            let q = QuadratureConfig { depth: 3, rule, ..Default::default() };
            let out = apply_semigroup(&op, 0.5, &f, &q).unwrap();
            let err = base.values.iter().zip(&out.values).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            // refinement integrates the piecewise-linear interpolant: O(h^2)
            assert!(err < 1e-4, "{rule:?}: {err}");
        }
    }

    #[test]
    fn planar_dirichlet_matches_product_of_factors() {
        let op = OperatorKind::new(OpTag::DeltaDPlus, 2).unwrap();
        let g = make_grid(DomainKind::upper(2), &[-8.0, 0.0], &[8.0, 8.0], 1.0 / 16.0).unwrap();
        let one = sample(&FunctionSpec::Constant { c: 1.0 }, &g).unwrap();
        let q = QuadratureConfig { depth: 4, ..Default::default() };
        let out = apply_semigroup(&op, 0.25, &one, &q).unwrap();
        let v = out.at(&[0.0, 0.5]).unwrap();
        let want = statrs::function::erf::erf(0.5);
        assert!((v - want).abs() < 1e-5, "{v} vs {want}");
    }
}
