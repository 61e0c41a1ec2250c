//! Negative fractional powers `L^{-a/2}`: Riesz potentials, kernels by
//! closed form and by the heat-kernel time integral, and the kernel of
//! `(I - e^{-tL}) L^{-a/2}`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, gamma_lr, gamma_ur};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::{even_extension, odd_extension, restrict, Region, SampledFunction};
use crate::kernels::{gaussian, OpTag, OperatorKind};
use crate::quad::{composite, GaussLegendre};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FracParams {
    pub alpha: f64,
    pub dim: usize,
}

impl FracParams {
    pub fn new(alpha: f64, dim: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha < dim as f64) {
            return Err(Error::OutOfRange(format!("alpha must lie in (0, {dim}), got {alpha}")));
        }
        Ok(Self { alpha, dim })
    }

    /// Normalizer with `(1/Gamma(a/2)) int t^{a/2-1} p_t dt = |x-y|^{a-n} / gamma`.
    pub fn gamma(&self) -> f64 {
        let n = self.dim as f64;
        let a = self.alpha;
        2f64.powf(a) * PI.powf(0.5 * n) * gamma(0.5 * a) / gamma(0.5 * (n - a))
    }

    fn beta(&self) -> f64 {
        self.alpha - self.dim as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    ClosedForm,
    TimeIntegral,
}

/// Trapezoid grid in `u = log t` for the time integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub u_max: f64,
    pub intervals: usize,
}

impl Default for TimeGrid {
    fn default() -> Self {
        Self { u_max: 40.0, intervals: 4000 }
    }
}

/// Trapezoid rule on `[u0, u1]` with Euler-Maclaurin endpoint terms, where
/// near each end `f` behaves like `e^{lambda u}` with the given rates.
fn log_trapezoid(f: impl Fn(f64) -> f64, u0: f64, u1: f64, intervals: usize, lam0: f64, lam1: f64) -> f64 {
    let du = (u1 - u0) / intervals as f64;
    let (f0, f1) = (f(u0), f(u1));
    let mut body = 0.5 * (f0 + f1);
    for k in 1..intervals {
        body += f(u0 + k as f64 * du);
    }
    body *= du;
    let d1 = lam1 * f1 - lam0 * f0;
    let d3 = lam1.powi(3) * f1 - lam0.powi(3) * f0;
    body - du * du / 12.0 * d1 + du.powi(4) / 720.0 * d3
}

/// `(1/Gamma(a/2)) int_0^inf t^{a/2-1} (4 pi t)^{-n/2} e^{-d^2/4t} dt`
/// by the trapezoid rule in `u = log t` on `[-U, U]`; both tails are added
/// exactly through regularized incomplete gamma functions.
pub fn time_integral_profile(p: &FracParams, d: f64, grid: &TimeGrid) -> f64 {
    let n = p.dim as f64;
    let a = p.alpha;
    let (u0, u1) = (-grid.u_max, grid.u_max);
    let dd = 0.25 * d * d;
    let f = |u: f64| (0.5 * a * u).exp() * (4.0 * PI * u.exp()).powf(-0.5 * n) * (-dd * (-u).exp()).exp();
    // log-derivative of f
    let rate = |u: f64| 0.5 * (a - n) + dd * (-u).exp();
    let body = log_trapezoid(f, u0, u1, grid.intervals, rate(u0), rate(u1));
    // the full integral is C * Gamma(s); each tail is a regularized fraction
    let s = 0.5 * (n - a);
    let c = (4.0 * PI).powf(-0.5 * n) * dd.powf(-s);
    let tails = c * gamma(s) * (gamma_lr(s, dd / u1.exp()) + gamma_ur(s, dd / u0.exp()));
    (body + tails) / gamma(0.5 * a)
}

/// Coefficient of the reflected term, or `None` when the glued operator
/// separates `x` and `y`.
fn images(tag: OpTag, x_n: f64, y_n: f64) -> Option<f64> {
    // the interface belongs to the upper side
    let glued_mask = |x: f64, y: f64| (x >= 0.0) == (y >= 0.0);
    match tag {
        OpTag::Delta => Some(0.0),
        OpTag::DeltaDPlus | OpTag::DeltaDMinus => Some(-1.0),
        OpTag::DeltaNPlus | OpTag::DeltaNMinus => Some(1.0),
        OpTag::DeltaD | OpTag::DeltaN | OpTag::DeltaDN => {
            if !glued_mask(x_n, y_n) {
                return None;
            }
            Some(tag.image_sign(x_n >= 0.0))
        }
    }
}

fn check_pair(op: &OperatorKind, x: &[f64], y: &[f64]) -> Result<()> {
    let dom = op.domain();
    for z in [x, y] {
        if z.len() != op.dim || !dom.contains(z) {
            return Err(Error::PointOutsideDomain(z.to_vec()));
        }
    }
    if x == y {
        return Err(Error::SingularKernel);
    }
    Ok(())
}

/// Kernel of `L^{-a/2}` as a signed sum over the direct and reflected
/// distances, each weighted by `profile(distance)`.
fn image_sum(op: &OperatorKind, x: &[f64], y: &[f64], profile: impl Fn(f64) -> f64) -> Result<f64> {
    let n = op.dim - 1;
    let Some(sign) = images(op.tag, x[n], y[n]) else { return Ok(0.0) };
    let tangential: f64 = (0..n).map(|a| (x[a] - y[a]).powi(2)).sum();
    let direct = (tangential + (x[n] - y[n]).powi(2)).sqrt();
    let mut v = profile(direct);
    if sign != 0.0 {
        let reflected = (tangential + (x[n] + y[n]).powi(2)).sqrt();
        if reflected == 0.0 {
            return Err(Error::SingularKernel);
        }
        v += sign * profile(reflected);
    }
    Ok(v)
}

/// Kernel of `L^{-a/2}` at `(x, y)`, `x != y`.
pub fn frac_kernel(op: &OperatorKind, p: &FracParams, x: &[f64], y: &[f64], route: Route) -> Result<f64> {
    if p.dim != op.dim {
        return Err(Error::GridMismatch("parameter and operator dimensions differ".into()));
    }
    check_pair(op, x, y)?;
    match route {
        Route::ClosedForm => {
            let g = p.gamma();
            let beta = p.beta();
            image_sum(op, x, y, |d| d.powf(beta) / g)
        }
        Route::TimeIntegral => {
            let grid = TimeGrid::default();
            image_sum(op, x, y, |d| time_integral_profile(p, d, &grid))
        }
    }
}

/// The normalizer recovered by matching the Neumann closed-form numerator
/// to the time-integral kernel at the pair `(1, 2)` on the line.
pub fn fitted_gamma(alpha: f64) -> Result<f64> {
    let p = FracParams::new(alpha, 1)?;
    let op = OperatorKind::new(OpTag::DeltaN, 1)?;
    let k = frac_kernel(&op, &p, &[1.0], &[2.0], Route::TimeIntegral)?;
    let numerator = 1f64.powf(alpha - 1.0) + 3f64.powf(alpha - 1.0);
    Ok(numerator / k)
}

const GL4: [(f64, f64); 4] = [
    (0.069_431_844_202_973_71, 0.173_927_422_568_726_93),
    (0.330_009_478_207_571_87, 0.326_072_577_431_273_07),
    (0.669_990_521_792_428_1, 0.326_072_577_431_273_07),
    (0.930_568_155_797_026_3, 0.173_927_422_568_726_93),
];

/// Exact weights of `|d|^beta` against the two linear hat pieces on
/// `[d0, d1]`: `(int |d|^b (1 - s), int |d|^b s)` with `s = (d - d0)/(d1 - d0)`.
pub(crate) fn cell_weights(beta: f64, d0: f64, d1: f64) -> (f64, f64) {
    let len = d1 - d0;
    let near = d0.abs().min(d1.abs());
    if !(d0 < 0.0 && d1 > 0.0) && len < 0.1 * near {
        // the power moments cancel badly here; the kernel is smooth instead
        let mut a = 0.0;
        let mut b = 0.0;
        for (s, w) in GL4 {
            let k = w * len * (d0 + s * len).abs().powf(beta);
            a += k * (1.0 - s);
            b += k * s;
        }
        return (a, b);
    }
    let p0 = |d: f64| d.signum() * d.abs().powf(beta + 1.0) / (beta + 1.0);
    let p1 = |d: f64| d.abs().powf(beta + 2.0) / (beta + 2.0);
    let m0 = p0(d1) - p0(d0);
    let m1 = p1(d1) - p1(d0);
    let b = (m1 - d0 * m0) / len;
    (m0 - b, b)
}

/// `int f(y) |x - y|^{a-n} dy` at every node of `f`'s grid.
///
/// On the line, `f` is interpolated linearly and each cell is integrated
/// exactly against the kernel. In the plane, `f` is constant on node cells
/// and the self cell uses the exact polar integral.
pub fn riesz_potential(f: &SampledFunction, p: &FracParams) -> Result<SampledFunction> {
    if p.dim != f.grid.dim() {
        return Err(Error::GridMismatch("parameter and grid dimensions differ".into()));
    }
    FracParams::new(p.alpha, p.dim)?;
    let edge = edge_mass(f);
    if edge > 0.0 {
        log::warn!("function does not vanish on the grid edge (max |f| = {edge:.3e}); the potential is truncated");
    }
    let values = match p.dim {
        1 => riesz_line(&f.values, f.grid.h, p.beta()),
        _ => riesz_plane(f, p.alpha),
    };
    SampledFunction::new(f.grid.clone(), values)
}

fn edge_mass(f: &SampledFunction) -> f64 {
    let g = &f.grid;
    (0..g.len())
        .filter(|&k| g.multi(k).iter().zip(g.counts()).any(|(&i, &c)| i == 0 || i + 1 == c))
        .fold(0.0, |m, k| m.max(f.values[k].abs()))
}

fn riesz_line(v: &[f64], h: f64, beta: f64) -> Vec<f64> {
    let n = v.len() as isize;
    if n < 2 {
        return vec![0.0; v.len()];
    }
    let scale = h.powf(beta + 1.0);
    // cell offsets m = c - i run over [-(n-1), n-2]
    let table: Vec<(f64, f64)> = (-(n - 1)..=(n - 2))
        .map(|m| {
            let (a, b) = cell_weights(beta, m as f64, m as f64 + 1.0);
            (a * scale, b * scale)
        })
        .collect();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut acc = 0.0;
            for c in 0..n - 1 {
                let (a, b) = table[(c - i + n - 1) as usize];
                acc += a * v[c as usize] + b * v[c as usize + 1];
            }
            acc
        })
        .collect()
}

fn riesz_plane(f: &SampledFunction, alpha: f64) -> Vec<f64> {
    let g = &f.grid;
    let h = g.h;
    let beta = alpha - 2.0;
    let rule = GaussLegendre::new(24);
    let angular = rule.integrate(0.0, PI / 4.0, |th| th.cos().powf(-alpha));
    let self_cell = 8.0 / alpha * (0.5 * h).powf(alpha) * angular;
    let (r, c) = (g.counts()[0] as isize, g.counts()[1] as isize);
    let v = &f.values;
    (0..g.len())
        .into_par_iter()
        .map(|k| {
            let (i0, i1) = ((k as isize) / c, (k as isize) % c);
            let mut acc = self_cell * v[k];
            for j0 in 0..r {
                for j1 in 0..c {
                    if j0 == i0 && j1 == i1 {
                        continue;
                    }
                    let fj = v[(j0 * c + j1) as usize];
                    if fj != 0.0 {
                        let d2 = (((i0 - j0) * (i0 - j0) + (i1 - j1) * (i1 - j1)) as f64) * h * h;
                        acc += h * h * fj * d2.powf(0.5 * beta);
                    }
                }
            }
            acc
        })
        .collect()
}

/// `L^{-a/2} f`, through the Riesz potential of the even (Neumann) or odd
/// (Dirichlet) extension of each half.
pub fn apply_frac_power(op: &OperatorKind, p: &FracParams, f: &SampledFunction) -> Result<SampledFunction> {
    if f.grid.domain != op.domain() {
        return Err(Error::GridMismatch(format!("operator {} does not act on this grid", op.name())));
    }
    if p.dim != op.dim {
        return Err(Error::GridMismatch("parameter and operator dimensions differ".into()));
    }
    let inv = 1.0 / p.gamma();
    let half = |g: &SampledFunction, tag: OpTag, region: Region| -> Result<SampledFunction> {
        let ext = match tag {
            OpTag::DeltaNPlus | OpTag::DeltaNMinus => even_extension(g)?,
            _ => odd_extension(g)?,
        };
        let pot = riesz_potential(&ext, p)?;
        Ok(restrict(&pot, region)?.map(|v| v * inv))
    };
    match op.tag {
        OpTag::Delta => Ok(riesz_potential(f, p)?.map(|v| v * inv)),
        OpTag::DeltaDPlus | OpTag::DeltaNPlus => half(f, op.tag, Region::UpperHalf),
        OpTag::DeltaDMinus | OpTag::DeltaNMinus => half(f, op.tag, Region::LowerHalf),
        tag => {
            let lo = half(&restrict(f, Region::LowerHalf)?, tag.side(false), Region::LowerHalf)?;
            let up = half(&restrict(f, Region::UpperHalf)?, tag.side(true), Region::UpperHalf)?;
            merge(&lo, &up)
        }
    }
}

fn merge(lower: &SampledFunction, upper: &SampledFunction) -> Result<SampledFunction> {
    crate::kernels::Parts { parts: vec![lower.clone(), upper.clone()] }.merged()
}

/// Kernel of `(I - e^{-tL}) L^{-a/2}`.
///
/// On the line this is `k(x, y) - int p_t(x, z) k(z, y) dz`, integrated in
/// `z` with the power singularity at `z = y` removed by `z - y = w^{1/a}`.
/// In the plane the heat-kernel time integral of `p_s - p_{s+t}` is used.
pub fn difference_kernel(op: &OperatorKind, p: &FracParams, t: f64, x: &[f64], y: &[f64]) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::NonPositiveTime(t));
    }
    if p.dim != op.dim {
        return Err(Error::GridMismatch("parameter and operator dimensions differ".into()));
    }
    check_pair(op, x, y)?;
    if op.dim == 1 {
        difference_kernel_line(op.tag, p, t, x[0], y[0])
    } else {
        image_sum(op, x, y, |d| difference_profile(p, t, d, &TimeGrid::default()))
    }
}

/// `(1/Gamma(a/2)) int s^{a/2-1} (g_s(d) - g_{s+t}(d)) ds` for the
/// n-dimensional Gaussian `g`.
pub fn difference_profile(p: &FracParams, t: f64, d: f64, grid: &TimeGrid) -> f64 {
    let n = p.dim as f64;
    let a = p.alpha;
    let g = |s: f64| (4.0 * PI * s).powf(-0.5 * n) * (-d * d / (4.0 * s)).exp();
    let (u0, u1) = (-grid.u_max, grid.u_max + t.max(1.0).ln());
    let f = |u: f64| {
        let s = u.exp();
        (0.5 * a * u).exp() * (g(s) - g(s + t))
    };
    // below u0 the integrand is -e^{au/2} g_t(d); above u1 it decays like
    // s^{(a-n)/2-1}
    let (lam0, lam1) = (0.5 * a, 0.5 * (a - n) - 1.0);
    let body = log_trapezoid(f, u0, u1, grid.intervals, lam0, lam1);
    let tails = f(u0) / lam0 - f(u1) / lam1;
    (body + tails) / gamma(0.5 * a)
}

fn difference_kernel_line(tag: OpTag, p: &FracParams, t: f64, x: f64, y: f64) -> Result<f64> {
    let Some(sign) = images(tag, x, y) else { return Ok(0.0) };
    let a = p.alpha;
    let beta = p.beta();
    let inv = 1.0 / p.gamma();
    let k_direct = |z: f64| (z - y).abs().powf(beta) * inv;
    let k_image = |z: f64| {
        if sign == 0.0 {
            0.0
        } else {
            sign * (z + y).abs().powf(beta) * inv
        }
    };
    // z ranges over the side y lives on (the whole line for Delta)
    let (lo_dom, hi_dom) = match tag.region() {
        Region::UpperHalf => (0.0, f64::INFINITY),
        Region::LowerHalf => (f64::NEG_INFINITY, 0.0),
        Region::Full if tag.is_glued() => {
            if y >= 0.0 {
                (0.0, f64::INFINITY)
            } else {
                (f64::NEG_INFINITY, 0.0)
            }
        }
        Region::Full => (f64::NEG_INFINITY, f64::INFINITY),
    };
    let heat = |z: f64| gaussian(t, x - z) + sign * gaussian(t, x + z);
    let r = 2.0 * t.sqrt() * (1e24f64).ln().sqrt();
    let lo = (x.min(-x) - r).max(lo_dom);
    let hi = (x.max(-x) + r).min(hi_dom);
    let rule = GaussLegendre::new(20);
    let mut br: Vec<f64> = vec![lo, hi, 0.0, x, -x, y].into_iter().filter(|b| *b >= lo && *b <= hi).collect();
    br.sort_by(|a, b| a.partial_cmp(b).unwrap());
    br.dedup();
    let panels = 16;
    // the image part of k is smooth on the side of y
    let smooth = composite(&rule, &br, panels, |z| heat(z) * k_image(z));
    let mut singular = 0.0;
    for w in br.windows(2) {
        let (za, zb) = (w[0], w[1]);
        let touches = if za == y {
            Some(zb - y)
        } else if zb == y {
            Some(y - za)
        } else {
            None
        };
        singular += match touches {
            Some(len) => {
                // z = y +- v, v = w^{1/a}: |z - y|^{a-1} dz = (1/a) dw
                let dir = if za == y { 1.0 } else { -1.0 };
                let wmax = len.powf(a);
                let step = wmax / panels as f64;
                (0..panels)
                    .map(|k| {
                        rule.integrate(k as f64 * step, (k + 1) as f64 * step, |wv| {
                            let v = wv.powf(1.0 / a);
                            heat(y + dir * v) * inv / a
                        })
                    })
                    .sum::<f64>()
            }
            None => composite(&rule, &[za, zb], panels, |z| heat(z) * k_direct(z)),
        };
    }
    let k_xy = k_direct(x) + k_image(x);
    Ok(k_xy - (smooth + singular))
}

/// `int |f|^{1/a}` of the counterexample function, in closed form.
pub fn counterexample_norm(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::OutOfRange(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(alpha / (1.0 - alpha) * 2f64.ln().powf(1.0 - 1.0 / alpha))
}

/// The same integral by quadrature after `y = e^{-v}`, with the tail beyond
/// `v = 400` added in closed form.
pub fn counterexample_norm_numeric(alpha: f64) -> Result<f64> {
    counterexample_norm(alpha)?;
    let e = 1.0 / alpha;
    let rule = GaussLegendre::new(24);
    let v0 = 2f64.ln();
    let v1 = 400.0;
    // geometric panels follow the algebraic decay
    let mut br = vec![v0];
    while *br.last().unwrap() < v1 {
        let next = (br.last().unwrap() * 1.5).min(v1);
        br.push(next);
    }
    let body = composite(&rule, &br, 4, |v| v.powf(-e));
    Ok(body + v1.powf(1.0 - e) / (e - 1.0))
}
