//! Axis-aligned cubes and finite dyadic families of them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DomainKind, Region};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubeSpec {
    pub center: Vec<f64>,
    pub side: f64,
}

impl CubeSpec {
    pub fn new(center: Vec<f64>, side: f64) -> Result<Self> {
        if !(side > 0.0) {
            return Err(Error::OutOfRange(format!("cube side must be positive, got {side}")));
        }
        Ok(Self { center, side })
    }

    pub fn lo(&self, axis: usize) -> f64 {
        self.center[axis] - 0.5 * self.side
    }

    pub fn hi(&self, axis: usize) -> f64 {
        self.center[axis] + 0.5 * self.side
    }

    pub fn volume(&self) -> f64 {
        self.side.powi(self.center.len() as i32)
    }

    /// Mirror image across the splitting hyperplane.
    pub fn reflected(&self) -> Self {
        let mut c = self.center.clone();
        let n = c.len() - 1;
        c[n] = -c[n];
        Self { center: c, side: self.side }
    }

    pub fn inside(&self, domain: &DomainKind) -> bool {
        let n = domain.dim - 1;
        let tol = 1e-12 * self.side;
        match domain.region {
            Region::Full => true,
            Region::UpperHalf => self.lo(n) >= -tol,
            Region::LowerHalf => self.hi(n) <= tol,
        }
    }

    pub fn crosses_interface(&self) -> bool {
        let n = self.center.len() - 1;
        self.lo(n) < 0.0 && self.hi(n) > 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubeFamily {
    /// Side lengths, coarse to fine.
    pub scales: Vec<f64>,
    /// Translation step as a fraction of the side, in (0, 1].
    pub step: f64,
    pub window_lo: Vec<f64>,
    pub window_hi: Vec<f64>,
}

impl CubeFamily {
    /// Sides `2^{-j}` for `j = j_coarse..=j_fine`, half-side translation.
    pub fn dyadic(j_coarse: i32, j_fine: i32, window_lo: Vec<f64>, window_hi: Vec<f64>) -> Self {
        let scales = (j_coarse..=j_fine).map(|j| 2f64.powi(-j)).collect();
        Self { scales, step: 0.5, window_lo, window_hi }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scales.is_empty() {
            return Err(Error::EmptyFamily);
        }
        if self.scales.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::OutOfRange("cube scales must be positive".into()));
        }
        if self.scales.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::OutOfRange("cube scales must be strictly decreasing".into()));
        }
        if !(self.step > 0.0 && self.step <= 1.0) {
            return Err(Error::OutOfRange(format!("translation step must lie in (0, 1], got {}", self.step)));
        }
        if self.window_lo.len() != self.window_hi.len()
            || self.window_lo.iter().zip(&self.window_hi).any(|(a, b)| b <= a)
        {
            return Err(Error::OutOfRange("family window is empty".into()));
        }
        Ok(())
    }

    /// Keeps only the first `k` scales.
    pub fn truncated(&self, k: usize) -> Self {
        Self { scales: self.scales[..k.min(self.scales.len())].to_vec(), ..self.clone() }
    }
}

fn axis_centers(lo: f64, hi: f64, side: f64, step: f64) -> Vec<f64> {
    let tol = 1e-9 * side;
    let mut out = Vec::new();
    let mut k = 0usize;
    loop {
        let c = lo + 0.5 * side + k as f64 * step * side;
        if c + 0.5 * side > hi + tol {
            break;
        }
        out.push(c);
        k += 1;
    }
    out
}

/// Enumerates the family, scale by scale (coarse first), centers in
/// row-major order within a scale.
pub fn dyadic_cubes(family: &CubeFamily, domain: &DomainKind) -> Result<Vec<CubeSpec>> {
    family.validate()?;
    let n = domain.dim;
    if family.window_lo.len() != n {
        return Err(Error::OutOfRange(format!("window has {} axes, domain has {n}", family.window_lo.len())));
    }
    let window_ok = match domain.region {
        Region::Full => true,
        Region::UpperHalf => family.window_lo[n - 1] >= 0.0,
        Region::LowerHalf => family.window_hi[n - 1] <= 0.0,
    };
    if !window_ok {
        return Err(Error::HalfSpaceBound("cube family window leaves the domain".into()));
    }
    let mut cubes = Vec::new();
    for &s in &family.scales {
        let per_axis: Vec<Vec<f64>> =
            (0..n).map(|a| axis_centers(family.window_lo[a], family.window_hi[a], s, family.step)).collect();
        if per_axis.iter().any(|v| v.is_empty()) {
            continue;
        }
        let total: usize = per_axis.iter().map(|v| v.len()).product();
        for flat in 0..total {
            let mut rem = flat;
            let mut center = vec![0.0; n];
            for a in (0..n).rev() {
                center[a] = per_axis[a][rem % per_axis[a].len()];
                rem /= per_axis[a].len();
            }
            cubes.push(CubeSpec { center, side: s });
        }
    }
    Ok(cubes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fam(scales: Vec<f64>, step: f64, lo: f64, hi: f64) -> CubeFamily {
        CubeFamily { scales, step, window_lo: vec![lo], window_hi: vec![hi] }
    }

    #[test]
    fn unit_cubes_tile_the_window() {
        let c = dyadic_cubes(&fam(vec![1.0], 1.0, 0.0, 2.0), &DomainKind::full(1)).unwrap();
        let centers: Vec<f64> = c.iter().map(|q| q.center[0]).collect();
        assert_eq!(centers, vec![0.5, 1.5]);
    }

    #[test]
    fn two_scales_count() {
        let c = dyadic_cubes(&fam(vec![1.0, 0.5], 0.5, 0.0, 1.0), &DomainKind::full(1)).unwrap();
        assert_eq!(c.len(), 4);
        assert_eq!(c[0].side, 1.0);
        assert!(c[1..].iter().all(|q| q.side == 0.5));
    }

    #[test]
    fn oversized_scale_yields_nothing() {
        let c = dyadic_cubes(&fam(vec![2.0], 0.5, 0.0, 1.0), &DomainKind::upper(1)).unwrap();
        assert!(c.is_empty());
    }

    #[test]
    fn empty_family_is_an_error() {
        let r = dyadic_cubes(&fam(vec![], 0.5, 0.0, 1.0), &DomainKind::full(1));
        assert!(matches!(r, Err(Error::EmptyFamily)));
        let r = dyadic_cubes(&fam(vec![1.0], 0.5, -1.0, 1.0), &DomainKind::upper(1));
        assert!(r.is_err());
    }

    #[test]
    fn planar_family_is_row_major() {
        let f = CubeFamily { scales: vec![1.0], step: 1.0, window_lo: vec![0.0, 0.0], window_hi: vec![2.0, 2.0] };
        let c = dyadic_cubes(&f, &DomainKind::full(2)).unwrap();
        let centers: Vec<Vec<f64>> = c.into_iter().map(|q| q.center).collect();
        assert_eq!(centers, vec![vec![0.5, 0.5], vec![0.5, 1.5], vec![1.5, 0.5], vec![1.5, 1.5]]);
    }
}
