//! Functions of the operators realized as Fourier multipliers in `lambda = |xi|^2`.
//!
//! Tangential axes and the full line use the periodic transform, half-lines
//! the even (Neumann) or odd (Dirichlet) extension, and glued operators one
//! half-line transform per side. Inputs are tapered by a raised cosine on
//! the outer tenth of the grid and zero padded to four times their length.

use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functions::{sample, FunctionSpec};
use crate::grid::{restrict, Grid, Region, SampledFunction, SNAP};
use crate::kernels::{OpTag, OperatorKind, Parts};
use crate::seminorm::{bmo_l_components, ComparisonConfig};

const PAD: usize = 4;
const TAPER: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisKind {
    Periodic,
    Even,
    Odd,
}

#[derive(Debug, Clone)]
struct AxisMap {
    kind: AxisKind,
    /// Stored length; for half-lines index 0 is the boundary.
    stored: usize,
    /// Stored index of the part's first node (its last node when reversed).
    offset: usize,
    reversed: bool,
    nodes: usize,
}

impl AxisMap {
    fn index(&self, i: usize) -> usize {
        if self.reversed {
            self.offset - i
        } else {
            self.offset + i
        }
    }

    /// Raised-cosine weight of grid node `i`; half-lines taper only away
    /// from the boundary.
    fn taper(&self, i: usize) -> f64 {
        let w = ((TAPER * (self.nodes - 1) as f64).round() as usize).max(1);
        let far = if self.reversed { i } else { self.nodes - 1 - i };
        let d = match self.kind {
            AxisKind::Periodic => i.min(self.nodes - 1 - i),
            _ => far,
        };
        if d >= w {
            1.0
        } else {
            0.5 * (1.0 - (PI * d as f64 / w as f64).cos())
        }
    }

    /// Trapezoid weight of stored index `j`.
    fn weight(&self, j: usize) -> f64 {
        match self.kind {
            AxisKind::Periodic => 1.0,
            _ if j == 0 || j + 1 == self.stored => 0.5,
            _ => 1.0,
        }
    }
}

#[derive(Debug, Clone)]
struct PartPlan {
    region: Region,
    grid: Grid,
    axes: Vec<AxisMap>,
}

/// How a grid of an operator's domain maps onto discrete transforms.
#[derive(Debug, Clone)]
pub struct SpectralPlan {
    pub op: OperatorKind,
    pub grid: Grid,
    parts: Vec<PartPlan>,
}

/// Complex samples on the padded transform domain of each part.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    pub h: f64,
    pub blocks: Vec<FieldBlock>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldBlock {
    pub kinds: Vec<AxisKind>,
    pub dims: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub data: Vec<Complex64>,
}

/// A complex-valued function on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSampled {
    pub re: SampledFunction,
    pub im: SampledFunction,
}

impl ComplexSampled {
    pub fn modulus(&self) -> SampledFunction {
        let values = self.re.values.iter().zip(&self.im.values).map(|(a, b)| a.hypot(*b)).collect();
        SampledFunction { grid: self.re.grid.clone(), values }
    }
}

fn grid_index(g: &Grid, axis: usize, x: f64) -> Result<usize> {
    let r = x / g.h;
    if (r - r.round()).abs() > SNAP || r.round() < 0.0 {
        return Err(Error::NonTransformable(format!("boundary offset {x} is not a multiple of h on axis {axis}")));
    }
    Ok(r.round() as usize)
}

fn half_axis(kind: AxisKind, g: &Grid, axis: usize, upper: bool) -> Result<AxisMap> {
    let nodes = g.counts()[axis];
    // distance (in nodes) from the boundary to the nearest and farthest node
    let near = grid_index(g, axis, if upper { g.lo[axis] } else { -g.hi[axis] })?;
    let far = near + nodes - 1;
    let m = (PAD * far.max(1)).next_power_of_two();
    let offset = if upper { near } else { far };
    Ok(AxisMap { kind, stored: m + 1, offset, reversed: !upper, nodes })
}

fn periodic_axis(nodes: usize) -> AxisMap {
    let stored = (PAD * nodes).next_power_of_two();
    AxisMap { kind: AxisKind::Periodic, stored, offset: (stored - nodes) / 2, reversed: false, nodes }
}

fn normal_kind(tag: OpTag) -> AxisKind {
    match tag {
        OpTag::DeltaNPlus | OpTag::DeltaNMinus => AxisKind::Even,
        _ => AxisKind::Odd,
    }
}

impl SpectralPlan {
    pub fn new(op: &OperatorKind, grid: &Grid) -> Result<Self> {
        if grid.domain != op.domain() {
            return Err(Error::GridMismatch(format!("operator {} does not act on this grid", op.name())));
        }
        let n = grid.dim() - 1;
        let tangential: Vec<AxisMap> = (0..n).map(|a| periodic_axis(grid.counts()[a])).collect();
        let half = |tag: OpTag, g: &Grid, upper: bool| -> Result<PartPlan> {
            let mut axes = tangential.clone();
            axes.push(half_axis(normal_kind(tag), g, n, upper)?);
            Ok(PartPlan { region: g.domain.region, grid: g.clone(), axes })
        };
        let parts = match op.tag {
            OpTag::Delta => {
                let mut axes = tangential.clone();
                axes.push(periodic_axis(grid.counts()[n]));
                vec![PartPlan { region: Region::Full, grid: grid.clone(), axes }]
            }
            OpTag::DeltaDPlus | OpTag::DeltaNPlus => vec![half(op.tag, grid, true)?],
            OpTag::DeltaDMinus | OpTag::DeltaNMinus => vec![half(op.tag, grid, false)?],
            tag => {
                let split = |region| {
                    restrict(&SampledFunction::zeros(grid.clone()), region)
                        .map(|f| f.grid)
                        .map_err(|e| Error::NonTransformable(e.to_string()))
                };
                let lower = split(Region::LowerHalf)?;
                let upper = split(Region::UpperHalf)?;
                vec![half(tag.side(false), &lower, false)?, half(tag.side(true), &upper, true)?]
            }
        };
        Ok(Self { op: *op, grid: grid.clone(), parts })
    }

    pub fn lift(&self, f: &SampledFunction) -> Result<SpectralField> {
        self.lift_complex(f, None)
    }

    /// Tapers, pads and places `re + i im` on the transform domains.
    pub fn lift_complex(&self, re: &SampledFunction, im: Option<&SampledFunction>) -> Result<SpectralField> {
        for f in std::iter::once(re).chain(im) {
            if !f.grid.same_as(&self.grid) {
                return Err(Error::GridMismatch("function is not on the plan's grid".into()));
            }
        }
        let mut blocks = Vec::new();
        for part in &self.parts {
            let r = restrict(re, part.region)?;
            let i = im.map(|g| restrict(g, part.region)).transpose()?;
            let dims: Vec<usize> = part.axes.iter().map(|a| a.stored).collect();
            let mut data = vec![Complex64::new(0.0, 0.0); dims.iter().product()];
            for k in 0..part.grid.len() {
                let idx = part.grid.multi(k);
                let mut w = 1.0;
                let mut flat = 0;
                let mut on_wall = false;
                for (a, ax) in part.axes.iter().enumerate() {
                    w *= ax.taper(idx[a]);
                    let j = ax.index(idx[a]);
                    on_wall |= ax.kind == AxisKind::Odd && j == 0;
                    flat = flat * dims[a] + j;
                }
                if !on_wall {
                    let v = Complex64::new(r.values[k], i.as_ref().map_or(0.0, |g| g.values[k]));
                    data[flat] = v * w;
                }
            }
            let weights = part.axes.iter().map(|ax| (0..ax.stored).map(|j| ax.weight(j)).collect()).collect();
            blocks.push(FieldBlock { kinds: part.axes.iter().map(|a| a.kind).collect(), dims, weights, data });
        }
        Ok(SpectralField { h: self.grid.h, blocks })
    }

    /// Applies the multiplier `m(lambda)` to every block.
    pub fn apply<M: Fn(f64) -> Complex64 + Sync>(&self, field: &SpectralField, m: M) -> SpectralField {
        let blocks = field.blocks.iter().map(|b| apply_block(b, field.h, &m)).collect();
        SpectralField { h: field.h, blocks }
    }

    /// Reads the field back on the plan's grid.
    pub fn restrict(&self, field: &SpectralField) -> Result<ComplexSampled> {
        let mut re_parts = Vec::new();
        let mut im_parts = Vec::new();
        for (part, block) in self.parts.iter().zip(&field.blocks) {
            let mut re = Vec::with_capacity(part.grid.len());
            let mut im = Vec::with_capacity(part.grid.len());
            for k in 0..part.grid.len() {
                let idx = part.grid.multi(k);
                let flat = part.axes.iter().enumerate().fold(0, |acc, (a, ax)| acc * block.dims[a] + ax.index(idx[a]));
                re.push(block.data[flat].re);
                im.push(block.data[flat].im);
            }
            re_parts.push(SampledFunction::new(part.grid.clone(), re)?);
            im_parts.push(SampledFunction::new(part.grid.clone(), im)?);
        }
        Ok(ComplexSampled { re: Parts { parts: re_parts }.merged()?, im: Parts { parts: im_parts }.merged()? })
    }
}

impl SpectralField {
    /// Trapezoid `L^2` norm, summed over the parts.
    pub fn norm(&self) -> f64 {
        let vol = self.h.powi(self.blocks.first().map_or(1, |b| b.dims.len()) as i32);
        let sum: f64 = self
            .blocks
            .iter()
            .flat_map(|b| b.data.iter().enumerate().map(move |(k, v)| block_weight(b, k) * v.norm_sqr()))
            .sum();
        (sum * vol).sqrt()
    }

    /// Weighted `L^2` distance to a field of the same shape.
    pub fn distance(&self, other: &SpectralField) -> f64 {
        let diff = SpectralField {
            h: self.h,
            blocks: self
                .blocks
                .iter()
                .zip(&other.blocks)
                .map(|(a, b)| FieldBlock {
                    data: a.data.iter().zip(&b.data).map(|(x, y)| x - y).collect(),
                    ..a.clone()
                })
                .collect(),
        };
        diff.norm()
    }
}

fn block_weight(b: &FieldBlock, mut k: usize) -> f64 {
    let mut w = 1.0;
    for a in (0..b.dims.len()).rev() {
        w *= b.weights[a][k % b.dims[a]];
        k /= b.dims[a];
    }
    w
}

/// Extends along half-line axes, transforms, multiplies, and cuts back.
fn apply_block<M: Fn(f64) -> Complex64 + Sync>(b: &FieldBlock, h: f64, m: &M) -> FieldBlock {
    let ext: Vec<usize> =
        b.kinds.iter().zip(&b.dims).map(|(k, &d)| if *k == AxisKind::Periodic { d } else { 2 * (d - 1) }).collect();
    let total: usize = ext.iter().product();
    let mut work = vec![Complex64::new(0.0, 0.0); total];
    for (k, slot) in work.iter_mut().enumerate() {
        let mut rem = k;
        let mut flat = 0;
        let mut sign = 1.0;
        let mut idx = vec![0; ext.len()];
        for a in (0..ext.len()).rev() {
            idx[a] = rem % ext[a];
            rem /= ext[a];
        }
        for a in 0..ext.len() {
            let mut j = idx[a];
            if b.kinds[a] != AxisKind::Periodic && j >= b.dims[a] {
                j = ext[a] - j;
                if b.kinds[a] == AxisKind::Odd {
                    sign = -sign;
                }
            }
            flat = flat * b.dims[a] + j;
        }
        *slot = b.data[flat] * sign;
    }
    let mut planner = FftPlanner::<f64>::new();
    fft_all_axes(&mut work, &ext, &mut planner, false);
    let freq = |a: usize, k: usize| {
        let kk = if k <= ext[a] / 2 { k as f64 } else { k as f64 - ext[a] as f64 };
        2.0 * PI * kk / (ext[a] as f64 * h)
    };
    work.par_iter_mut().enumerate().for_each(|(k, v)| {
        let mut rem = k;
        let mut lambda = 0.0;
        for a in (0..ext.len()).rev() {
            let xi = freq(a, rem % ext[a]);
            lambda += xi * xi;
            rem /= ext[a];
        }
        *v *= m(lambda);
    });
    fft_all_axes(&mut work, &ext, &mut planner, true);
    let scale = 1.0 / total as f64;
    let mut data = vec![Complex64::new(0.0, 0.0); b.data.len()];
    for (k, slot) in data.iter_mut().enumerate() {
        let mut rem = k;
        let mut flat = 0;
        let mut idx = vec![0; b.dims.len()];
        for a in (0..b.dims.len()).rev() {
            idx[a] = rem % b.dims[a];
            rem /= b.dims[a];
        }
        for a in 0..b.dims.len() {
            flat = flat * ext[a] + idx[a];
        }
        *slot = work[flat] * scale;
    }
    FieldBlock { data, ..b.clone() }
}

fn fft_all_axes(work: &mut [Complex64], ext: &[usize], planner: &mut FftPlanner<f64>, inverse: bool) {
    let total = work.len();
    for a in 0..ext.len() {
        let n = ext[a];
        let fft = if inverse { planner.plan_fft_inverse(n) } else { planner.plan_fft_forward(n) };
        let stride: usize = ext[a + 1..].iter().product();
        if stride == 1 {
            fft.process(work);
            continue;
        }
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        for outer in 0..total / (n * stride) {
            for inner in 0..stride {
                let base = outer * n * stride + inner;
                for (j, v) in line.iter_mut().enumerate() {
                    *v = work[base + j * stride];
                }
                fft.process(&mut line);
                for (j, v) in line.iter().enumerate() {
                    work[base + j * stride] = *v;
                }
            }
        }
    }
}

/// `lambda^{is}`, with the value 1 at `lambda = 0`.
pub fn imaginary_multiplier(s: f64) -> impl Fn(f64) -> Complex64 + Sync {
    move |lambda: f64| {
        if lambda > 0.0 {
            Complex64::from_polar(1.0, s * lambda.ln())
        } else {
            Complex64::new(1.0, 0.0)
        }
    }
}

pub fn imaginary_power_field(plan: &SpectralPlan, s: f64, field: &SpectralField) -> SpectralField {
    plan.apply(field, imaginary_multiplier(s))
}

/// `L^{is} f` on `f`'s grid.
pub fn imaginary_power(op: &OperatorKind, s: f64, f: &SampledFunction) -> Result<ComplexSampled> {
    let plan = SpectralPlan::new(op, &f.grid)?;
    let field = plan.lift(f)?;
    plan.restrict(&imaginary_power_field(&plan, s, &field))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub s: f64,
    pub r: f64,
    pub ratio: f64,
    /// Test function attaining `r`.
    pub argmax: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub operator: String,
    pub config: ComparisonConfig,
    pub rows: Vec<SweepRow>,
    /// Largest ratio, the fitted constant.
    pub fitted_c: f64,
    pub smallest_ratio: f64,
}

impl SweepReport {
    /// Largest over smallest ratio.
    pub fn spread(&self) -> f64 {
        self.fitted_c / self.smallest_ratio
    }
}

/// Default test set for a sweep: `cos(w log|x|)` at `w = 2|s| + 1` for each
/// `s`, plus `sign`. These are the functions on which `|xi|^{2is}` gains a
/// factor of order `(1 + |s|)^{1/2}`.
pub fn sweep_test_set(ss: &[f64]) -> Vec<FunctionSpec> {
    let mut out: Vec<FunctionSpec> = Vec::new();
    for s in ss {
        let spec = FunctionSpec::LogCosine { freq: 2.0 * s.abs() + 1.0, eps: 1.0 / 32.0 };
        if !out.contains(&spec) {
            out.push(spec);
        }
    }
    out.push(FunctionSpec::Sign);
    out
}

/// `r(s) = max_f bmo_L(L^{is} f)` over bounded test functions.
pub fn bmo_growth_sweep(
    op: &OperatorKind,
    ss: &[f64],
    tests: &[FunctionSpec],
    cfg: &ComparisonConfig,
) -> Result<SweepReport> {
    if op.dim != 1 {
        return Err(Error::Unsupported("the sweep runs on the line".into()));
    }
    let full = cfg.grid()?;
    let grid = match op.domain().region {
        Region::Full => full,
        region => restrict(&SampledFunction::zeros(full), region)?.grid,
    };
    let family = cfg.family();
    let plan = SpectralPlan::new(op, &grid)?;
    let fields = tests
        .iter()
        .map(|spec| {
            let f = sample(spec, &grid)?;
            let sup = f.sup_norm();
            if sup == 0.0 {
                return Err(Error::OutOfRange(format!("test function {} vanishes on the grid", spec.name())));
            }
            plan.lift(&f.map(|v| v / sup))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for &s in ss {
        let mut best = (f64::NEG_INFINITY, String::new());
        for (spec, field) in tests.iter().zip(&fields) {
            let out = plan.restrict(&imaginary_power_field(&plan, s, field))?;
            let est = bmo_l_components(&[&out.re, &out.im], op, &family, &cfg.quadrature, &cfg.divergence)?;
            if est.value > best.0 {
                best = (est.value, spec.name());
            }
        }
        let ratio = best.0 / (1.0 + s.abs()).sqrt();
        rows.push(SweepRow { s, r: best.0, ratio, argmax: best.1 });
    }
    let fitted_c = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let smallest_ratio = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    Ok(SweepReport { operator: op.name(), config: cfg.clone(), rows, fitted_c, smallest_ratio })
}
