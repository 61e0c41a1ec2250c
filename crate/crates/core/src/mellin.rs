//! Spectral multipliers `F` on `[0, inf)` and their Mellin transforms
//! `m(u) = (1/2pi) int F(lambda) lambda^{-1-iu} dlambda`.

use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case")]
pub enum MultiplierSpec {
    /// `lambda e^{-lambda}`.
    LambdaExp,
    /// `e^{-lambda}`; its Mellin integral diverges at 0.
    ExpNeg,
    /// `lambda^{ia}`; not integrable, its transform is a point mass at `a`.
    ImagPower {
        a: f64,
    },
    Zero,
    /// `lambda^{i center} exp(-width^2 (log lambda)^2 / 2)`, whose transform
    /// is the normal density with mean `center` and deviation `width`.
    LogGaussianImag {
        center: f64,
        width: f64,
    },
}

impl MultiplierSpec {
    pub fn name(&self) -> String {
        match self {
            Self::LambdaExp => "lambda_exp".into(),
            Self::ExpNeg => "exp_neg".into(),
            Self::ImagPower { a } => format!("imag_power({a})"),
            Self::Zero => "zero".into(),
            Self::LogGaussianImag { center, width } => format!("log_gaussian_imag({center},{width})"),
        }
    }

    /// Catalog ids: `lambda_exp`, `exp_neg`, `zero`, `imag_power:<a>`,
    /// `log_gaussian_imag:<center>:<width>`.
    pub fn parse(id: &str) -> Result<Self> {
        let bad = || Error::OutOfRange(format!("unknown multiplier id '{id}'"));
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
        let spec = match id {
            "lambda_exp" => Self::LambdaExp,
            "exp_neg" => Self::ExpNeg,
            "zero" => Self::Zero,
            _ => {
                if let Some(a) = id.strip_prefix("imag_power:") {
                    Self::ImagPower { a: num(a)? }
                } else if let Some(rest) = id.strip_prefix("log_gaussian_imag:") {
                    let (c, w) = rest.split_once(':').ok_or_else(bad)?;
                    Self::LogGaussianImag { center: num(c)?, width: num(w)? }
                } else {
                    return Err(bad());
                }
            }
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::LogGaussianImag { width, .. } if !(width > 0.0) => {
                Err(Error::OutOfRange(format!("width must be positive, got {width}")))
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, lambda: f64) -> Complex64 {
        let real = |v: f64| Complex64::new(v, 0.0);
        match *self {
            Self::LambdaExp => real(lambda * (-lambda).exp()),
            Self::ExpNeg => real((-lambda).exp()),
            Self::Zero => real(0.0),
            Self::ImagPower { a } => {
                if lambda > 0.0 {
                    Complex64::from_polar(1.0, a * lambda.ln())
                } else {
                    real(0.0)
                }
            }
            Self::LogGaussianImag { center, width } => {
                if lambda > 0.0 {
                    let l = lambda.ln();
                    Complex64::from_polar((-0.5 * width * width * l * l).exp(), center * l)
                } else {
                    real(0.0)
                }
            }
        }
    }

    /// `sup |F|`.
    pub fn sup_norm(&self) -> f64 {
        match self {
            Self::LambdaExp => (-1f64).exp(),
            Self::Zero => 0.0,
            _ => 1.0,
        }
    }

    /// Closed-form transform, where the catalog has one.
    pub fn exact_mellin(&self, u: f64) -> Option<Complex64> {
        match *self {
            Self::Zero => Some(Complex64::new(0.0, 0.0)),
            Self::LogGaussianImag { center, width } => {
                let z = (u - center) / width;
                Some(Complex64::new((-0.5 * z * z).exp() / (width * (2.0 * PI).sqrt()), 0.0))
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MellinGrid {
    pub u_min: f64,
    pub u_max: f64,
    pub du: f64,
    /// Quadrature in `v = log lambda`.
    pub v_min: f64,
    pub v_max: f64,
    pub dv: f64,
}

impl Default for MellinGrid {
    fn default() -> Self {
        Self { u_min: -64.0, u_max: 64.0, du: 1.0 / 16.0, v_min: -50.0, v_max: 10.0, dv: 0.01 }
    }
}

impl MellinGrid {
    pub fn validate(&self) -> Result<()> {
        if !(self.du > 0.0 && self.dv > 0.0 && self.u_max > self.u_min && self.v_max > self.v_min) {
            return Err(Error::OutOfRange("Mellin grid needs positive steps and nonempty ranges".into()));
        }
        Ok(())
    }

    pub fn nodes(&self) -> Vec<f64> {
        let n = ((self.u_max - self.u_min) / self.du).round() as usize;
        (0..=n).map(|k| self.u_min + k as f64 * self.du).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MellinSamples {
    pub u: Vec<f64>,
    pub du: f64,
    /// `(re, im)` of `m(u)`.
    pub m: Vec<(f64, f64)>,
    /// `int |m(u)| (1 + |u|)^{n/2} du`.
    pub weighted_mass: f64,
}

impl MellinSamples {
    fn new(u: Vec<f64>, du: f64, m: Vec<Complex64>, dim: usize) -> Self {
        let w: Vec<f64> = u.iter().zip(&m).map(|(u, m)| m.norm() * (1.0 + u.abs()).powf(0.5 * dim as f64)).collect();
        let weighted_mass = du * (w.iter().sum::<f64>() - 0.5 * (w[0] + w[w.len() - 1]));
        Self { u, du, m: m.iter().map(|c| (c.re, c.im)).collect(), weighted_mass }
    }

    pub fn value(&self, k: usize) -> Complex64 {
        Complex64::new(self.m[k].0, self.m[k].1)
    }
}

/// Relative size of `|F|` at the ends of the `v` range above which the
/// integral counts as divergent.
const TAIL_TOL: f64 = 1e-12;

/// `m(u)` by the trapezoid rule in `v = log lambda`.
pub fn mellin_forward(spec: &MultiplierSpec, grid: &MellinGrid, dim: usize) -> Result<MellinSamples> {
    grid.validate()?;
    spec.validate()?;
    let nv = ((grid.v_max - grid.v_min) / grid.dv).round() as usize;
    let vs: Vec<f64> = (0..=nv).map(|k| grid.v_min + k as f64 * grid.dv).collect();
    let fv: Vec<Complex64> = vs.iter().map(|v| spec.eval(v.exp())).collect();
    let peak = fv.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let (lo, hi) = (fv[0].norm(), fv[nv].norm());
    if peak > 0.0 && lo > TAIL_TOL * peak {
        let hint = match spec {
            MultiplierSpec::ImagPower { a } => format!("not integrable; the transform concentrates at u = {a}"),
            _ => format!("|F| does not vanish at lambda = 0 (|F(e^{})| = {lo:.3e}), pole at u = 0", grid.v_min),
        };
        return Err(Error::DivergentMellin(hint));
    }
    if peak > 0.0 && hi > TAIL_TOL * peak {
        return Err(Error::DivergentMellin(format!("|F(e^{})| = {hi:.3e} does not decay", grid.v_max)));
    }
    let u = grid.nodes();
    let m: Vec<Complex64> = u
        .par_iter()
        .map(|&u| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, (v, f)) in vs.iter().zip(&fv).enumerate() {
                let w = if k == 0 || k == nv { 0.5 } else { 1.0 };
                acc += f * Complex64::from_polar(w, -u * v);
            }
            acc * (grid.dv / (2.0 * PI))
        })
        .collect();
    Ok(MellinSamples::new(u, grid.du, m, dim))
}

/// Samples of `m` on the `u` grid: the closed form when known, else
/// [`mellin_forward`].
pub fn mellin_samples(spec: &MultiplierSpec, grid: &MellinGrid, dim: usize) -> Result<MellinSamples> {
    let u = grid.nodes();
    let exact: Option<Vec<Complex64>> = u.iter().map(|&x| spec.exact_mellin(x)).collect();
    match exact {
        Some(m) => {
            grid.validate()?;
            Ok(MellinSamples::new(u, grid.du, m, dim))
        }
        None => mellin_forward(spec, grid, dim),
    }
}

/// `sum_k m(u_k) du (t lambda)^{i u_k}`, the multiplier synthesized from the
/// samples; 0 at `lambda = 0`.
pub fn synthesized_multiplier(samples: &MellinSamples, t: f64) -> impl Fn(f64) -> Complex64 + Sync + '_ {
    move |lambda: f64| {
        if lambda <= 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let l = (t * lambda).ln();
        let n = samples.u.len();
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 0..n {
            let w = if k == 0 || k + 1 == n { 0.5 } else { 1.0 };
            acc += samples.value(k) * Complex64::from_polar(w, samples.u[k] * l);
        }
        acc * samples.du
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Lanczos approximation (g = 7, n = 9) of the complex gamma function
    fn gamma_c(z: Complex64) -> Complex64 {
        const G: [f64; 9] = [
            0.999_999_999_999_809_9,
            676.520_368_121_885_1,
            -1_259.139_216_722_402_8,
            771.323_428_777_653_1,
            -176.615_029_162_140_6,
            12.507_343_278_686_905,
            -0.138_571_095_265_720_12,
            9.984_369_578_019_572e-6,
            1.505_632_735_149_311_6e-7,
        ];
        if z.re < 0.5 {
            return PI / ((z * PI).sin() * gamma_c(1.0 - z));
        }
        let z = z - 1.0;
        let mut x = Complex64::new(G[0], 0.0);
        for (i, g) in G.iter().enumerate().skip(1) {
            x += g / (z + i as f64);
        }
        let t = z + 7.5;
        (2.0 * PI).sqrt() * t.powc(z + 0.5) * (-t).exp() * x
    }

    #[test]
    fn lambda_exp_matches_the_gamma_function() {
        let grid = MellinGrid { u_min: -8.0, u_max: 8.0, du: 0.5, ..Default::default() };
        let s = mellin_forward(&MultiplierSpec::LambdaExp, &grid, 1).unwrap();
        let mid = s.u.iter().position(|u| *u == 0.0).unwrap();
        assert!((s.value(mid).re - 1.0 / (2.0 * PI)).abs() < 1e-12);
        for (k, &u) in s.u.iter().enumerate() {
            let want = gamma_c(Complex64::new(1.0, -u)) / (2.0 * PI);
            assert!((s.value(k) - want).norm() < 1e-10, "{u}");
        }
    }

    #[test]
    fn divergent_transforms_are_reported() {
        let g = MellinGrid::default();
        assert!(matches!(mellin_forward(&MultiplierSpec::ExpNeg, &g, 1), Err(Error::DivergentMellin(_))));
        assert!(matches!(mellin_forward(&MultiplierSpec::ImagPower { a: 2.0 }, &g, 1), Err(Error::DivergentMellin(_))));
        let z = mellin_forward(&MultiplierSpec::Zero, &g, 1).unwrap();
        assert!(z.m.iter().all(|m| *m == (0.0, 0.0)) && z.weighted_mass == 0.0);
    }

    #[test]
    fn synthesis_inverts_the_transform() {
        let s = mellin_samples(&MultiplierSpec::LambdaExp, &MellinGrid::default(), 1).unwrap();
        let f = synthesized_multiplier(&s, 1.0);
        for lambda in [1e-3, 0.1, 1.0, 3.0, 20.0f64] {
            let want = lambda * (-lambda).exp();
            assert!((f(lambda) - Complex64::new(want, 0.0)).norm() < 1e-10, "{lambda}");
        }
    }

    #[test]
    fn log_gaussian_closed_form_agrees_with_quadrature() {
        let spec = MultiplierSpec::LogGaussianImag { center: 1.5, width: 1.0 };
        let grid = MellinGrid { u_min: -4.0, u_max: 6.0, du: 0.25, v_min: -12.0, v_max: 12.0, dv: 0.01 };
        let q = mellin_forward(&spec, &grid, 1).unwrap();
        for (k, &u) in q.u.iter().enumerate() {
            assert!((q.value(k) - spec.exact_mellin(u).unwrap()).norm() < 1e-12, "{u}");
        }
    }

    #[test]
    fn catalog_ids_parse() {
        assert_eq!(MultiplierSpec::parse("lambda_exp").unwrap(), MultiplierSpec::LambdaExp);
        assert_eq!(
            MultiplierSpec::parse("log_gaussian_imag:2:0.5").unwrap(),
            MultiplierSpec::LogGaussianImag { center: 2.0, width: 0.5 }
        );
        assert!(MultiplierSpec::parse("log_gaussian_imag:2:-1").is_err());
        assert!(MultiplierSpec::parse("nope").is_err());
    }
}
