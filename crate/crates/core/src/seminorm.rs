//! Classical, half-space and operator-adapted BMO seminorm estimators over
//! finite cube families, and the inclusion-comparison harness.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cubes::{dyadic_cubes, CubeFamily, CubeSpec};
use crate::error::{Error, Result};
use crate::functions::{sample, FunctionSpec};
use crate::grid::{even_extension, odd_extension, zero_extension, DomainKind, Grid, SampledFunction};
use crate::kernels::{apply_parts, needed_margin, OpTag, OperatorKind, Parts, Profile, QuadratureConfig, Window};
use crate::quad::interval_weights;

/// Flags divergence when the per-scale maxima of the finest `last` scales
/// increase strictly, coarse to fine, by at least `margin` in total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivergenceRule {
    pub last: usize,
    pub margin: f64,
}

impl Default for DivergenceRule {
    fn default() -> Self {
        Self { last: 4, margin: 0.2 }
    }
}

impl DivergenceRule {
    pub fn flag(&self, per_scale: &[(f64, f64)]) -> bool {
        if self.last < 2 || per_scale.len() < self.last {
            return false;
        }
        let tail = &per_scale[per_scale.len() - self.last..];
        let increasing = tail.windows(2).all(|w| w[1].1 > w[0].1);
        increasing && tail[tail.len() - 1].1 - tail[0].1 >= self.margin
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyWindow {
    pub scale_max: f64,
    pub scale_min: f64,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeminormEstimate {
    pub value: f64,
    pub argmax_cube: CubeSpec,
    pub window: FamilyWindow,
    /// `(side, max oscillation)` per scale, coarse to fine.
    pub per_scale: Vec<(f64, f64)>,
    pub divergent: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HalfVariant {
    Restriction,
    Zero,
    Even,
    Odd,
}

/// Per-axis first node and weights of `[a, b]` on `g`.
fn axis_weights(g: &Grid, axis: usize, a: f64, b: f64) -> Option<(usize, Vec<f64>)> {
    interval_weights(g.lo[axis], g.h, g.counts()[axis], a, b)
}

fn cube_error(q: &CubeSpec) -> Error {
    Error::CubeOutsideGrid { center: q.center.clone(), side: q.side }
}

/// Tensor-product weights of `q` on `g`: flat node indices and weights.
fn cube_nodes(g: &Grid, q: &CubeSpec, clip_normal: Option<(f64, f64)>) -> Result<Option<Vec<(usize, f64)>>> {
    let dim = g.dim();
    let mut per_axis = Vec::with_capacity(dim);
    for axis in 0..dim {
        let (mut a, mut b) = (q.lo(axis), q.hi(axis));
        if axis == dim - 1 {
            if let Some((lo, hi)) = clip_normal {
                a = a.max(lo);
                b = b.min(hi);
                if b - a <= 1e-12 * q.side {
                    return Ok(None);
                }
            }
        }
        per_axis.push(axis_weights(g, axis, a, b).ok_or_else(|| cube_error(q))?);
    }
    let mut out = Vec::new();
    match dim {
        1 => {
            let (k0, w) = &per_axis[0];
            out.extend(w.iter().enumerate().map(|(i, &wi)| (k0 + i, wi)));
        }
        _ => {
            let (k0, w0) = &per_axis[0];
            let (k1, w1) = &per_axis[1];
            for (i, &a) in w0.iter().enumerate() {
                for (j, &b) in w1.iter().enumerate() {
                    out.push((g.flat(&[k0 + i, k1 + j]), a * b));
                }
            }
        }
    }
    Ok(Some(out))
}

/// `(1/|Q|) int_Q |f - f_Q|` with the piecewise-linear rule on the grid.
pub fn mean_oscillation(f: &SampledFunction, q: &CubeSpec) -> Result<f64> {
    let nodes = cube_nodes(&f.grid, q, None)?.ok_or_else(|| cube_error(q))?;
    let mass: f64 = nodes.iter().map(|(_, w)| w).sum();
    let avg: f64 = nodes.iter().map(|&(k, w)| w * f.values[k]).sum::<f64>() / mass;
    Ok(nodes.iter().map(|&(k, w)| w * (f.values[k] - avg).abs()).sum::<f64>() / mass)
}

/// Quadrature average `f_Q`.
pub fn cube_average(f: &SampledFunction, q: &CubeSpec) -> Result<f64> {
    let nodes = cube_nodes(&f.grid, q, None)?.ok_or_else(|| cube_error(q))?;
    let mass: f64 = nodes.iter().map(|(_, w)| w).sum();
    Ok(nodes.iter().map(|&(k, w)| w * f.values[k]).sum::<f64>() / mass)
}

fn summarize(cubes: &[CubeSpec], osc: &[f64], family: &CubeFamily, rule: &DivergenceRule) -> SeminormEstimate {
    let mut per_scale: Vec<(f64, f64)> = Vec::new();
    let mut best = 0usize;
    for (k, q) in cubes.iter().enumerate() {
        match per_scale.last_mut() {
            Some((s, m)) if *s == q.side => {
                if osc[k] > *m {
                    *m = osc[k];
                }
            }
            _ => per_scale.push((q.side, osc[k])),
        }
        if osc[k] > osc[best] {
            best = k;
        }
    }
    SeminormEstimate {
        value: osc[best],
        argmax_cube: cubes[best].clone(),
        window: FamilyWindow {
            scale_max: family.scales[0],
            scale_min: *family.scales.last().unwrap(),
            lo: family.window_lo.clone(),
            hi: family.window_hi.clone(),
        },
        divergent: rule.flag(&per_scale),
        per_scale,
    }
}

fn nonempty(cubes: Vec<CubeSpec>) -> Result<Vec<CubeSpec>> {
    if cubes.is_empty() {
        Err(Error::EmptyFamily)
    } else {
        Ok(cubes)
    }
}

/// Classical BMO estimate: the largest mean oscillation over the family.
pub fn classical_bmo(f: &SampledFunction, family: &CubeFamily) -> Result<SeminormEstimate> {
    classical_bmo_with(f, family, &DivergenceRule::default())
}

pub fn classical_bmo_with(f: &SampledFunction, family: &CubeFamily, rule: &DivergenceRule) -> Result<SeminormEstimate> {
    let cubes = nonempty(dyadic_cubes(family, &f.grid.domain)?)?;
    let osc = cubes.par_iter().map(|q| mean_oscillation(f, q)).collect::<Result<Vec<_>>>()?;
    Ok(summarize(&cubes, &osc, family, rule))
}

/// Half-space BMO through the even, odd or zero extension, or over cubes
/// inside the half-space for the restriction variant.
pub fn halfspace_bmo(f: &SampledFunction, variant: HalfVariant, family: &CubeFamily) -> Result<SeminormEstimate> {
    match variant {
        HalfVariant::Restriction => classical_bmo(f, family),
        HalfVariant::Even => classical_bmo(&even_extension(f)?, family),
        HalfVariant::Odd => classical_bmo(&odd_extension(f)?, family),
        HalfVariant::Zero => classical_bmo(&zero_extension(f)?, family),
    }
}

/// `int_Q |f - P f|` summed over the parts a semigroup output is split into,
/// together with `|Q|`. `fs` and `ps` hold the real components.
fn oscillation_against(fs: &[&SampledFunction], ps: &[Parts], q: &CubeSpec) -> Result<f64> {
    let fg = &fs[0].grid;
    let dim = fg.dim();
    let parts = &ps[0].parts;
    let split = parts.len() > 1;
    let mut num = 0.0;
    let mut mass = 0.0;
    for (pi, part) in parts.iter().enumerate() {
        let pg = &part.grid;
        let clip = split.then(|| (pg.lo[dim - 1], pg.hi[dim - 1]));
        let Some(nodes) = cube_nodes(pg, q, clip)? else { continue };
        let offs: Vec<usize> = (0..dim).map(|a| ((pg.lo[a] - fg.lo[a]) / fg.h).round() as usize).collect();
        for (k, w) in nodes {
            let idx: Vec<usize> = pg.multi(k).iter().zip(&offs).map(|(i, o)| i + o).collect();
            let fk = fg.flat(&idx);
            let d2: f64 = fs
                .iter()
                .zip(ps)
                .map(|(f, p)| {
                    let d = f.values[fk] - p.parts[pi].values[k];
                    d * d
                })
                .sum();
            num += w * d2.sqrt();
            mass += w;
        }
    }
    if mass <= 0.0 {
        return Err(cube_error(q));
    }
    Ok(num / mass)
}

/// BMO_L estimate: the largest `(1/|Q|) int_Q |f - e^{-l_Q^2 L} f|`.
pub fn bmo_l(
    f: &SampledFunction,
    op: &OperatorKind,
    family: &CubeFamily,
    q: &QuadratureConfig,
) -> Result<SeminormEstimate> {
    bmo_l_components(&[f], op, family, q, &DivergenceRule::default())
}

/// BMO_L of a complex function given by its real and imaginary parts.
pub fn bmo_l_complex(
    re: &SampledFunction,
    im: &SampledFunction,
    op: &OperatorKind,
    family: &CubeFamily,
    q: &QuadratureConfig,
) -> Result<SeminormEstimate> {
    bmo_l_components(&[re, im], op, family, q, &DivergenceRule::default())
}

pub fn bmo_l_components(
    fs: &[&SampledFunction],
    op: &OperatorKind,
    family: &CubeFamily,
    q: &QuadratureConfig,
    rule: &DivergenceRule,
) -> Result<SeminormEstimate> {
    let grid = &fs[0].grid;
    if fs.iter().any(|f| !f.grid.same_as(grid)) {
        return Err(Error::GridMismatch("components live on different grids".into()));
    }
    let cubes = nonempty(dyadic_cubes(family, &op.domain())?)?;
    let window = Window { lo: family.window_lo.clone(), hi: family.window_hi.clone() };
    let mut osc = Vec::with_capacity(cubes.len());
    let mut start = 0;
    while start < cubes.len() {
        let side = cubes[start].side;
        let end = start + cubes[start..].iter().take_while(|c| c.side == side).count();
        let t = side * side;
        let ps = fs.iter().map(|f| apply_parts(op, t, f, q, &window, Profile::Heat)).collect::<Result<Vec<_>>>()?;
        let chunk =
            cubes[start..end].par_iter().map(|c| oscillation_against(fs, &ps, c)).collect::<Result<Vec<_>>>()?;
        osc.extend(chunk);
        start = end;
    }
    Ok(summarize(&cubes, &osc, family, rule))
}

/// Grid and family settings shared by the comparison harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonConfig {
    pub h: f64,
    /// Cubes live in `[-half_width, half_width]`.
    pub half_width: f64,
    /// Sides run from `2^{-j_coarse}` to `2^{-j_fine}`.
    pub j_coarse: i32,
    pub j_fine: i32,
    pub quadrature: QuadratureConfig,
    pub divergence: DivergenceRule,
}

impl Default for ComparisonConfig {
    fn default() -> Self {
        Self {
            h: 1.0 / 2048.0,
            half_width: 2.0,
            j_coarse: 0,
            j_fine: 5,
            quadrature: QuadratureConfig::default(),
            divergence: DivergenceRule::default(),
        }
    }
}

impl ComparisonConfig {
    pub fn family(&self) -> CubeFamily {
        CubeFamily::dyadic(self.j_coarse, self.j_fine, vec![-self.half_width], vec![self.half_width])
    }

    /// Full-line grid padded so the coarsest semigroup is covered.
    pub fn grid(&self) -> Result<Grid> {
        let s = 2f64.powi(-self.j_coarse);
        let pad = needed_margin(1, s * s, self.quadrature.epsilon, Profile::Heat, true);
        let half = ((self.half_width + pad) / self.h).ceil() * self.h;
        Grid::new(DomainKind::full(1), &[-half], &[half], self.h)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub space: String,
    pub value: f64,
    pub divergent: bool,
    pub per_scale: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InclusionRow {
    pub function: String,
    pub verdicts: Vec<Verdict>,
    /// Finite in a smaller space implies finite in every larger one.
    pub chain_consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InclusionReport {
    pub config: ComparisonConfig,
    pub rows: Vec<InclusionRow>,
}

impl InclusionRow {
    pub fn verdict(&self, space: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.space == space)
    }
}

/// Space label used in reports: `BMO` or `BMO_<operator>`.
pub fn space_label(op: Option<OpTag>) -> String {
    match op {
        None => "BMO".into(),
        Some(t) => format!("BMO_{}", t.name()),
    }
}

/// Estimates every test function in the classical space and in the
/// operator-adapted spaces of `ops` (1-D, full line).
pub fn inclusion_report(
    tests: &[FunctionSpec],
    ops: &[Option<OpTag>],
    cfg: &ComparisonConfig,
) -> Result<InclusionReport> {
    let grid = cfg.grid()?;
    let family = cfg.family();
    let mut rows = Vec::new();
    for spec in tests {
        let f = sample(spec, &grid)?;
        let mut verdicts = Vec::new();
        for op in ops {
            let est = match op {
                None => classical_bmo_with(&f, &family, &cfg.divergence)?,
                Some(tag) => {
                    let op = OperatorKind::new(*tag, 1)?;
                    bmo_l_components(&[&f], &op, &family, &cfg.quadrature, &cfg.divergence)?
                }
            };
            verdicts.push(Verdict {
                space: space_label(*op),
                value: est.value,
                divergent: est.divergent,
                per_scale: est.per_scale,
            });
        }
        let finite = |tag: Option<OpTag>| verdicts.iter().find(|v| v.space == space_label(tag)).map(|v| !v.divergent);
        let chain = [None, Some(OpTag::DeltaD), Some(OpTag::DeltaN)];
        let (classical, dirichlet, neumann) = (finite(chain[0]), finite(chain[1]), finite(chain[2]));
        let implies = |a: Option<bool>, b: Option<bool>| !matches!((a, b), (Some(true), Some(false)));
        let chain_consistent =
            implies(dirichlet, classical) && implies(classical, neumann) && implies(dirichlet, neumann);
        rows.push(InclusionRow { function: spec.name(), verdicts, chain_consistent });
    }
    Ok(InclusionReport { config: cfg.clone(), rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;

    fn line(lo: f64, hi: f64, h: f64) -> Grid {
        make_grid(DomainKind::full(1), &[lo], &[hi], h).unwrap()
    }

    #[test]
    fn constants_have_no_oscillation() {
        let g = line(-1.0, 1.0, 1.0 / 64.0);
        let f = sample(&FunctionSpec::Constant { c: 3.0 }, &g).unwrap();
        let q = CubeSpec::new(vec![0.1], 0.7).unwrap();
        assert!(mean_oscillation(&f, &q).unwrap().abs() < 1e-15);
    }

    #[test]
    fn sign_oscillates_by_one() {
        // the cube edges avoid the jump's node, so the rule sees |f - 0| = 1
        // everywhere except on the two cells next to the origin
        let h = 1.0 / 1024.0;
        let g = line(-1.0, 1.0, h);
        let f = sample(&FunctionSpec::Sign, &g).unwrap();
        let q = CubeSpec::new(vec![0.0], 1.0).unwrap();
        let v = mean_oscillation(&f, &q).unwrap();
        assert!((v - 1.0).abs() <= h + 1e-12, "{v}");
    }

    #[test]
    fn outside_cube_is_rejected() {
        let g = line(-1.0, 1.0, 0.25);
        let f = sample(&FunctionSpec::Sign, &g).unwrap();
        let q = CubeSpec::new(vec![0.9], 0.5).unwrap();
        assert!(matches!(mean_oscillation(&f, &q), Err(Error::CubeOutsideGrid { .. })));
    }

    #[test]
    fn divergence_rule() {
        let r = DivergenceRule::default();
        let grow = vec![(1.0, 0.1), (0.5, 0.3), (0.25, 0.4), (0.125, 0.5), (0.0625, 0.6)];
        assert!(r.flag(&grow));
        let flat = vec![(1.0, 0.5), (0.5, 0.5), (0.25, 0.51), (0.125, 0.52)];
        assert!(!r.flag(&flat));
        let dip = vec![(1.0, 0.1), (0.5, 0.9), (0.25, 0.8), (0.125, 1.5)];
        assert!(!r.flag(&dip));
        assert!(!r.flag(&grow[..3]));
    }

    #[test]
    fn neumann_kills_constants() {
        let g = line(-12.0, 12.0, 1.0 / 128.0);
        let f = sample(&FunctionSpec::Constant { c: 1.0 }, &g).unwrap();
        let fam = CubeFamily::dyadic(0, 3, vec![-1.0], vec![1.0]);
        let op = OperatorKind::new(OpTag::DeltaN, 1).unwrap();
        let est = bmo_l(&f, &op, &fam, &QuadratureConfig::default()).unwrap();
        assert!(est.value < 1e-9, "{}", est.value);
        assert!(!est.divergent);
    }

    #[test]
    fn bmo_l_needs_padding() {
        let g = line(-2.0, 2.0, 1.0 / 128.0);
        let f = sample(&FunctionSpec::Constant { c: 1.0 }, &g).unwrap();
        let fam = CubeFamily::dyadic(0, 1, vec![-1.0], vec![1.0]);
        let op = OperatorKind::new(OpTag::Delta, 1).unwrap();
        let r = bmo_l(&f, &op, &fam, &QuadratureConfig::default());
        assert!(matches!(r, Err(Error::InsufficientCoverage { .. })));
    }

    #[test]
    fn even_variant_is_classical_of_extension() {
        let g = make_grid(DomainKind::upper(1), &[0.0], &[3.0], 1.0 / 256.0).unwrap();
        let f = sample(&FunctionSpec::LogE, &g).unwrap();
        let fam = CubeFamily::dyadic(0, 4, vec![-2.0], vec![2.0]);
        let a = halfspace_bmo(&f, HalfVariant::Even, &fam).unwrap();
        let b = classical_bmo(&even_extension(&f).unwrap(), &fam).unwrap();
        assert_eq!(a, b);
    }
}
