//! The Neumann fractional power of `f(x) = -(x^a log x)^{-1}` on `(0, 1/2]`:
//! unbounded classical mean oscillation on `[-1/k, 1/k]`, bounded `BMO_L`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frac::{cell_weights, counterexample_norm, counterexample_norm_numeric, FracParams};
use crate::functions::counterexample_value;
use crate::grid::SampledFunction;
use crate::kernels::{OpTag, OperatorKind};
use crate::seminorm::{bmo_l_components, ComparisonConfig, SeminormEstimate};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleConfig {
    pub alpha: f64,
    pub ks: Vec<u64>,
    /// Geometric source and target nodes per octave near 0.
    pub per_octave: usize,
    /// The graded nodes start at `2^{-octaves}`.
    pub octaves: u32,
    pub bmo: ComparisonConfig,
}

impl Default for CounterexampleConfig {
    fn default() -> Self {
        Self { alpha: 0.5, ks: vec![5, 10, 100, 1000], per_octave: 32, octaves: 50, bmo: ComparisonConfig::default() }
    }
}

impl CounterexampleConfig {
    pub fn validate(&self) -> Result<()> {
        FracParams::new(self.alpha, 1)?;
        if self.alpha >= 1.0 {
            return Err(Error::OutOfRange(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.ks.is_empty() || self.ks.iter().any(|&k| k < 5) {
            return Err(Error::OutOfRange("every k must be at least 5".into()));
        }
        if self.per_octave == 0 || self.octaves < 2 {
            return Err(Error::OutOfRange("graded grid needs per_octave >= 1 and octaves >= 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleRow {
    pub k: u64,
    pub m_q: f64,
    pub oscillation: f64,
    pub bound_half: f64,
    pub bound_quarter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormValues {
    /// `int |f|^{1/a}` in closed form.
    pub closed_form: f64,
    pub numeric: f64,
    /// `(1-a)/a (log 2)^{1/a-1}`, the value the source text prints.
    pub printed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleReport {
    pub config: CounterexampleConfig,
    pub gamma: f64,
    pub rows: Vec<CounterexampleRow>,
    pub norm: NormValues,
    pub bmo: SeminormEstimate,
    /// `bmo / ||f||_{1/a}`.
    pub bmo_ratio: f64,
    pub bounds_hold: bool,
    pub oscillation_increasing: bool,
}

/// Source nodes on `[0, 1/2]`: 0, geometric nodes from `2^{-octaves}`, and
/// the uniform nodes of spacing `h`.
pub fn graded_nodes(per_octave: usize, octaves: u32, h: f64) -> Vec<f64> {
    let mut ys = vec![0.0];
    let total = per_octave * (octaves as usize - 1);
    for j in 0..total {
        ys.push(2f64.powf(-(octaves as f64) + j as f64 / per_octave as f64));
    }
    let mut k = 1usize;
    while (k as f64) * h < 0.5 {
        ys.push(k as f64 * h);
        k += 1;
    }
    ys.push(0.5);
    ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ys.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1e-300));
    ys
}

/// `g = L^{-a/2} f` for the Neumann operator on the line, at each `x`.
/// `f` is linear between source nodes and every cell is integrated exactly
/// against the direct and reflected power kernels.
pub fn counterexample_potential(alpha: f64, sources: &[f64], xs: &[f64]) -> Result<Vec<f64>> {
    let p = FracParams::new(alpha, 1)?;
    let inv = 1.0 / p.gamma();
    let beta = alpha - 1.0;
    let fy = sources.iter().map(|&y| counterexample_value(alpha, y)).collect::<Result<Vec<_>>>()?;
    Ok(xs
        .par_iter()
        .map(|&x| {
            if x < 0.0 {
                return 0.0;
            }
            let mut acc = 0.0;
            for c in 0..sources.len() - 1 {
                let (y0, y1) = (sources[c], sources[c + 1]);
                let (a, b) = cell_weights(beta, y0 - x, y1 - x);
                let (ai, bi) = cell_weights(beta, y0 + x, y1 + x);
                acc += (a + ai) * fy[c] + (b + bi) * fy[c + 1];
            }
            acc * inv
        })
        .collect())
}

fn trapezoid(xs: &[f64], v: &[f64]) -> f64 {
    xs.windows(2).zip(v.windows(2)).map(|(x, w)| 0.5 * (x[1] - x[0]) * (w[0] + w[1])).sum()
}

/// `(m_Q, mean oscillation)` of `g` on `Q = [-1/k, 1/k]`, where `g` vanishes
/// on the lower half and `xs` are nodes of `(0, 1/k]`.
fn cube_stats(k: f64, xs: &[f64], g: &[f64]) -> (f64, f64) {
    let m = 0.5 * k * trapezoid(xs, g);
    let dev: Vec<f64> = g.iter().map(|v| (v - m).abs()).collect();
    (m, 0.5 * m.abs() + 0.5 * k * trapezoid(xs, &dev))
}

/// `g` on the uniform full-line grid of `cfg.bmo`; the node at 0 takes the
/// value at `h/2`.
pub fn counterexample_on_grid(cfg: &CounterexampleConfig) -> Result<SampledFunction> {
    let grid = cfg.bmo.grid()?;
    let h = grid.h;
    let sources = graded_nodes(cfg.per_octave, cfg.octaves, h);
    let xs: Vec<f64> =
        (0..grid.len()).map(|k| grid.coords(k)[0]).map(|x| if x.abs() < 1e-12 * h { 0.5 * h } else { x }).collect();
    let values = counterexample_potential(cfg.alpha, &sources, &xs)?;
    SampledFunction::new(grid, values)
}

pub fn counterexample_report(cfg: &CounterexampleConfig) -> Result<CounterexampleReport> {
    cfg.validate()?;
    let alpha = cfg.alpha;
    let gamma = FracParams::new(alpha, 1)?.gamma();
    let sources = graded_nodes(cfg.per_octave, cfg.octaves, cfg.bmo.h);

    let mut rows = Vec::new();
    for &k in &cfg.ks {
        let edge = 1.0 / k as f64;
        let mut xs: Vec<f64> = sources.iter().copied().filter(|&y| y > 0.0 && y < edge).collect();
        xs.push(edge);
        let g = counterexample_potential(alpha, &sources, &xs)?;
        // the piece on (0, xs[0]) is below quadrature resolution; use the
        // constant extension
        let mut nodes = vec![0.0];
        nodes.extend_from_slice(&xs);
        let mut vals = vec![g[0]];
        vals.extend_from_slice(&g);
        let (m_q, oscillation) = cube_stats(k as f64, &nodes, &vals);
        let ll = (k as f64).ln().ln() - 2f64.ln().ln();
        rows.push(CounterexampleRow {
            k,
            m_q,
            oscillation,
            bound_half: ll / (2.0 * gamma),
            bound_quarter: ll / (4.0 * gamma),
        });
    }
    let bounds_hold = rows.iter().all(|r| r.m_q >= r.bound_half && r.oscillation >= r.bound_quarter);
    let oscillation_increasing = rows.windows(2).all(|w| w[1].k <= w[0].k || w[1].oscillation > w[0].oscillation);

    let g = counterexample_on_grid(cfg)?;
    let op = OperatorKind::new(OpTag::DeltaN, 1)?;
    let bmo = bmo_l_components(&[&g], &op, &cfg.bmo.family(), &cfg.bmo.quadrature, &cfg.bmo.divergence)?;

    let closed_form = counterexample_norm(alpha)?;
    let norm = NormValues {
        closed_form,
        numeric: counterexample_norm_numeric(alpha)?,
        printed: (1.0 - alpha) / alpha * 2f64.ln().powf(1.0 / alpha - 1.0),
    };
    let bmo_ratio = bmo.value / closed_form.powf(alpha);
    Ok(CounterexampleReport {
        config: cfg.clone(),
        gamma,
        rows,
        norm,
        bmo,
        bmo_ratio,
        bounds_hold,
        oscillation_increasing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::{graded, GaussLegendre};

    // g(x) by graded Gauss-Legendre on the raw integrand, split at the
    // singular points 0 and x
    fn brute_force(alpha: f64, x: f64) -> f64 {
        let rule = GaussLegendre::new(20);
        let gamma = FracParams::new(alpha, 1).unwrap().gamma();
        let integrand = |y: f64| {
            counterexample_value(alpha, y).unwrap() * ((x - y).abs().powf(alpha - 1.0) + (x + y).powf(alpha - 1.0))
        };
        let mut total = 0.0;
        let breaks = if x < 0.5 { vec![0.0, 0.5 * x, x, 0.5 * (x + 0.5), 0.5] } else { vec![0.0, 0.25, 0.5] };
        for w in breaks.windows(2) {
            total += graded(&rule, w[0], w[1], true, true, 60, integrand);
        }
        total / gamma
    }

    #[test]
    fn potential_matches_brute_force() {
        let sources = graded_nodes(32, 50, 1.0 / 1024.0);
        for x in [1e-3, 0.01, 0.1, 0.3, 0.75, 2.0] {
            let v = counterexample_potential(0.5, &sources, &[x]).unwrap()[0];
            let want = brute_force(0.5, x);
            assert!(((v - want) / want).abs() < 1e-3, "{x}: {v} vs {want}");
        }
    }

    #[test]
    fn vanishes_below_zero() {
        let sources = graded_nodes(8, 20, 1.0 / 64.0);
        assert_eq!(counterexample_potential(0.5, &sources, &[-0.25]).unwrap()[0], 0.0);
    }

    #[test]
    fn nodes_end_at_one_half() {
        let ys = graded_nodes(4, 10, 1.0 / 16.0);
        assert_eq!(ys[0], 0.0);
        assert_eq!(*ys.last().unwrap(), 0.5);
        assert!(ys.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn small_k_is_rejected() {
        let cfg = CounterexampleConfig { ks: vec![4], ..Default::default() };
        assert!(cfg.validate().is_err());
    }
}
