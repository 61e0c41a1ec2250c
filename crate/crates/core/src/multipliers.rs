//! `F(tL)` by Mellin synthesis over imaginary powers, the maximal operator
//! `sup_t |F(tL) f|`, and kernel tail masses of `F(tL)(I - e^{-r^2 L})`.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::grid::{make_grid, DomainKind, Region, SampledFunction};
use crate::kernels::{gaussian, gaussian_generator, OpTag, OperatorKind};
use crate::mellin::{mellin_samples, MellinGrid, MellinSamples, MultiplierSpec};
use crate::quad::{composite, GaussLegendre};
use crate::spectral::{ComplexSampled, SpectralPlan};

/// `sum_k m(u_k) du (t lambda)^{i u_k}` by a rotation recurrence in `k`.
fn fast_multiplier(samples: &MellinSamples, t: f64) -> impl Fn(f64) -> Complex64 + Sync + '_ {
    move |lambda: f64| {
        if lambda <= 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let l = (t * lambda).ln();
        let n = samples.u.len();
        let step = Complex64::from_polar(1.0, samples.du * l);
        let mut rot = Complex64::from_polar(1.0, samples.u[0] * l);
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 0..n {
            let w = if k == 0 || k + 1 == n { 0.5 } else { 1.0 };
            acc += samples.value(k) * rot * w;
            rot *= step;
            // renormalize against drift
            if k % 64 == 63 {
                rot = Complex64::from_polar(1.0, (samples.u[0] + (k + 1) as f64 * samples.du) * l);
            }
        }
        acc * samples.du
    }
}

fn checked_samples(spec: &MultiplierSpec, grid: &MellinGrid, dim: usize) -> Result<MellinSamples> {
    let s = mellin_samples(spec, grid, dim)?;
    if !s.weighted_mass.is_finite() {
        return Err(Error::DivergentMellin("weighted mass is infinite".into()));
    }
    Ok(s)
}

/// `F(tL) f = int m(u) t^{iu} L^{iu} f du`.
pub fn mellin_synthesis(
    spec: &MultiplierSpec,
    t: f64,
    op: &OperatorKind,
    f: &SampledFunction,
    grid: &MellinGrid,
) -> Result<ComplexSampled> {
    if !(t > 0.0) {
        return Err(Error::NonPositiveTime(t));
    }
    let samples = checked_samples(spec, grid, op.dim)?;
    let plan = SpectralPlan::new(op, &f.grid)?;
    let field = plan.lift(f)?;
    plan.restrict(&plan.apply(&field, fast_multiplier(&samples, t)))
}

/// `max_t |F(tL) f|` over the given scales.
pub fn maximal_multiplier(
    spec: &MultiplierSpec,
    op: &OperatorKind,
    f: &SampledFunction,
    ts: &[f64],
    grid: &MellinGrid,
) -> Result<SampledFunction> {
    if ts.is_empty() {
        return Err(Error::OutOfRange("empty scale grid".into()));
    }
    if let Some(t) = ts.iter().find(|t| !(**t > 0.0)) {
        return Err(Error::NonPositiveTime(*t));
    }
    let samples = checked_samples(spec, grid, op.dim)?;
    let plan = SpectralPlan::new(op, &f.grid)?;
    let field = plan.lift(f)?;
    let moduli = ts
        .par_iter()
        .map(|&t| plan.restrict(&plan.apply(&field, fast_multiplier(&samples, t))).map(|c| c.modulus()))
        .collect::<Result<Vec<_>>>()?;
    let mut out = moduli[0].clone();
    for m in &moduli[1..] {
        for (o, v) in out.values.iter_mut().zip(&m.values) {
            *o = o.max(*v);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailMass {
    pub value: f64,
    /// Bound on the mass beyond the truncation radius.
    pub truncation_bound: f64,
}

/// Truncation tolerance on the neglected mass.
const TAIL_TOL: f64 = 1e-10;

/// `int_{B(y, r)^c} |K(x, y)| dx` for the kernel `K` of
/// `F(tL)(I - e^{-r^2 L})`, on the line.
///
/// `lambda e^{-lambda}` uses the closed form `t (dp_{t+r^2} - dp_t)` built
/// from heat-kernel time derivatives; other multipliers apply the multiplier
/// to a discrete delta at `y`.
pub fn tail_mass(op: &OperatorKind, spec: &MultiplierSpec, r: f64, y: f64, t: f64) -> Result<TailMass> {
    if !(r > 0.0) {
        return Err(Error::OutOfRange(format!("radius must be positive, got {r}")));
    }
    if !(t > 0.0) {
        return Err(Error::NonPositiveTime(t));
    }
    if op.dim != 1 {
        return Err(Error::Unsupported("tail masses are computed on the line".into()));
    }
    if !op.domain().contains(&[y]) {
        return Err(Error::PointOutsideDomain(vec![y]));
    }
    match spec {
        MultiplierSpec::Zero => Ok(TailMass { value: 0.0, truncation_bound: 0.0 }),
        MultiplierSpec::LambdaExp => lambda_exp_tail(op.tag, r, y, t),
        _ => spectral_tail(op, spec, r, y, t),
    }
}

/// Integration range on `y`'s side of the operator's domain.
fn side_range(tag: OpTag, y: f64) -> (f64, f64) {
    let region = if tag.is_glued() {
        if y >= 0.0 {
            Region::UpperHalf
        } else {
            Region::LowerHalf
        }
    } else {
        tag.region()
    };
    match region {
        Region::Full => (f64::NEG_INFINITY, f64::INFINITY),
        Region::UpperHalf => (0.0, f64::INFINITY),
        Region::LowerHalf => (f64::NEG_INFINITY, 0.0),
    }
}

fn lambda_exp_tail(tag: OpTag, r: f64, y: f64, t: f64) -> Result<TailMass> {
    let tau = t + r * r;
    let sign = tag.image_sign(y >= 0.0);
    // L e^{-sL} has kernel -d/ds p_s = gaussian_generator(s, .) / s
    let profile = |d: f64| t * (gaussian_generator(t, d) / t - gaussian_generator(tau, d) / tau);
    let kernel = |x: f64| profile(x - y) + sign * profile(x + y);
    let reach = 2.0 * tau.sqrt() * (1.0 / TAIL_TOL).ln().sqrt() * 1.5;
    let (dom_lo, dom_hi) = side_range(tag, y);
    let far = y.abs() + reach;
    let pieces = [((y - far).max(dom_lo), (y - r).min(dom_hi)), ((y + r).max(dom_lo), (y + far).min(dom_hi))];
    let rule = GaussLegendre::new(20);
    let mut value = 0.0;
    for (a, b) in pieces {
        if b > a {
            value += abs_integral(&rule, a, b, &kernel, r.min(t.sqrt()));
        }
    }
    // each Gaussian term beyond distance D carries at most
    // t (erfc(D / 2 sqrt s) + 2 D g_s(D)) / (4 s), per side
    let bound = |s: f64, d: f64| t * (erfc(d / (2.0 * s.sqrt())) / (2.0 * s) + d * gaussian(s, d) / (2.0 * s));
    let terms = if sign == 0.0 { 1.0 } else { 2.0 };
    let dist = far - y.abs();
    let truncation_bound = 2.0 * terms * (bound(t, dist) + bound(tau, dist));
    if truncation_bound > TAIL_TOL * value.max(1.0) {
        return Err(Error::Quadrature(format!("tail beyond truncation is {truncation_bound:.3e}")));
    }
    Ok(TailMass { value, truncation_bound })
}

/// `int_a^b |k|` with breakpoints at the sign changes of `k`, located on a
/// scan of spacing at most `scale / 16`.
fn abs_integral(rule: &GaussLegendre, a: f64, b: f64, k: &impl Fn(f64) -> f64, scale: f64) -> f64 {
    let n = (((b - a) / (scale / 16.0)).ceil() as usize).clamp(64, 200_000);
    let dx = (b - a) / n as f64;
    let mut breaks = vec![a];
    let mut prev = k(a);
    for i in 1..=n {
        let x = if i == n { b } else { a + i as f64 * dx };
        let v = k(x);
        if prev * v < 0.0 {
            let (mut lo, mut hi, mut flo) = (x - dx, x, prev);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                let fm = k(mid);
                if (fm < 0.0) == (flo < 0.0) {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-15 * mid.abs().max(scale) {
                    break;
                }
            }
            breaks.push(0.5 * (lo + hi));
        }
        prev = v;
    }
    breaks.push(b);
    // panels of about `scale` between consecutive breakpoints
    let mut total = 0.0;
    for w in breaks.windows(2) {
        let panels = (((w[1] - w[0]) / scale).ceil() as usize).clamp(4, 4096);
        total += composite(rule, &[w[0], w[1]], panels, |x| k(x).abs());
    }
    total
}

/// Applies `F(t lambda)(1 - e^{-r^2 lambda})` to a discrete delta at `y`.
fn spectral_tail(op: &OperatorKind, spec: &MultiplierSpec, r: f64, y: f64, t: f64) -> Result<TailMass> {
    let sigma = (t + r * r).sqrt();
    let h = r.min(t.sqrt()) / 32.0;
    let width = r + 40.0 * sigma;
    let snap = |x: f64, up: bool| if up { (x / h).ceil() * h } else { (x / h).floor() * h };
    let (mut lo, mut hi) = (snap(y - width, false), snap(y + width, true));
    match op.domain().region {
        Region::UpperHalf => lo = 0.0,
        Region::LowerHalf => hi = 0.0,
        Region::Full => {
            lo = lo.min(-h);
            hi = hi.max(h);
        }
    }
    let grid = make_grid(DomainKind { dim: 1, region: op.domain().region }, &[lo], &[hi], h)?;
    let pos = (y - lo) / h;
    let k0 = pos.floor() as usize;
    let frac = pos - k0 as f64;
    let mut delta = vec![0.0; grid.len()];
    delta[k0] += (1.0 - frac) / h;
    if frac > 0.0 {
        delta[k0 + 1] += frac / h;
    }
    let f = SampledFunction::new(grid.clone(), delta)?;
    let plan = SpectralPlan::new(op, &grid)?;
    let field = plan.lift(&f)?;
    let spec = spec.clone();
    let out =
        plan.restrict(&plan.apply(&field, move |lambda| spec.eval(t * lambda) * (1.0 - (-r * r * lambda).exp())))?;
    let m = out.modulus();
    let mut value = 0.0;
    let mut edge = 0.0;
    let n = grid.len();
    for k in 0..n {
        let x = grid.coords(k)[0];
        let w = if k == 0 || k + 1 == n { 0.5 * h } else { h };
        let gap = (x - y).abs() - r;
        if gap > 1e-9 * h {
            value += w * m.values[k];
        } else if gap > -1e-9 * h {
            value += 0.5 * w * m.values[k];
        }
        if k < n / 10 || k >= n - n / 10 {
            edge += w * m.values[k];
        }
    }
    Ok(TailMass { value, truncation_bound: edge })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailEntry {
    pub r: f64,
    pub y: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailSup {
    pub t: f64,
    pub entries: Vec<TailEntry>,
    /// The empirical constant `C_1`.
    pub sup: f64,
}

/// Tail masses over an `(r, y)` grid and their supremum.
pub fn tail_mass_sup(op: &OperatorKind, spec: &MultiplierSpec, rs: &[f64], ys: &[f64], t: f64) -> Result<TailSup> {
    let mut entries = Vec::new();
    for &r in rs {
        for &y in ys {
            entries.push(TailEntry { r, y, value: tail_mass(op, spec, r, y, t)?.value });
        }
    }
    let sup = entries.iter().map(|e| e.value).fold(0.0, f64::max);
    Ok(TailSup { t, entries, sup })
}
