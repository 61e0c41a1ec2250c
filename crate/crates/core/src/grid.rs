//! Uniform grids over the line, the plane and their half-spaces, and
//! functions sampled on them.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Node-snapping tolerance, in units of the spacing.
pub(crate) const SNAP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    Full,
    UpperHalf,
    LowerHalf,
}

/// Dimension plus region; half-spaces split on the last coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DomainKind {
    pub dim: usize,
    pub region: Region,
}

impl DomainKind {
    pub fn new(dim: usize, region: Region) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidDomain(format!("dimension must be 1 or 2, got {dim}")));
        }
        Ok(Self { dim, region })
    }

    pub fn full(dim: usize) -> Self {
        Self { dim, region: Region::Full }
    }

    pub fn upper(dim: usize) -> Self {
        Self { dim, region: Region::UpperHalf }
    }

    pub fn lower(dim: usize) -> Self {
        Self { dim, region: Region::LowerHalf }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let xn = x[self.dim - 1];
        match self.region {
            Region::Full => true,
            Region::UpperHalf => xn >= 0.0,
            Region::LowerHalf => xn <= 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub domain: DomainKind,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub h: f64,
    counts: Vec<usize>,
}

/// Validates the bounds and builds the grid with nodes `lo + k h` per axis.
pub fn make_grid(domain: DomainKind, lo: &[f64], hi: &[f64], h: f64) -> Result<Grid> {
    Grid::new(domain, lo, hi, h)
}

impl Grid {
    pub fn new(domain: DomainKind, lo: &[f64], hi: &[f64], h: f64) -> Result<Self> {
        let domain = DomainKind::new(domain.dim, domain.region)?;
        let n = domain.dim;
        if lo.len() != n || hi.len() != n {
            return Err(Error::InvalidDomain(format!(
                "expected {n} bounds per side, got {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidDomain(format!("spacing must be positive, got {h}")));
        }
        let mut counts = Vec::with_capacity(n);
        for axis in 0..n {
            let (a, b) = (lo[axis], hi[axis]);
            if !(a.is_finite() && b.is_finite()) || b < a {
                return Err(Error::InvalidDomain(format!("axis {axis}: bad bounds [{a}, {b}]")));
            }
            let span = (b - a) / h;
            let k = span.round();
            if (span - k).abs() > SNAP * span.max(1.0) {
                return Err(Error::NonIntegralSpan { axis, lo: a, hi: b, h });
            }
            counts.push(k as usize + 1);
        }
        match domain.region {
            Region::Full => {}
            Region::UpperHalf if lo[n - 1] < -SNAP * h => {
                return Err(Error::HalfSpaceBound(format!(
                    "upper half-space grid needs lo >= 0 on the last axis, got {}",
                    lo[n - 1]
                )))
            }
            Region::LowerHalf if hi[n - 1] > SNAP * h => {
                return Err(Error::HalfSpaceBound(format!(
                    "lower half-space grid needs hi <= 0 on the last axis, got {}",
                    hi[n - 1]
                )))
            }
            _ => {}
        }
        Ok(Self { domain, lo: lo.to_vec(), hi: hi.to_vec(), h, counts })
    }

    pub fn dim(&self) -> usize {
        self.domain.dim
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn node(&self, axis: usize, k: usize) -> f64 {
        self.lo[axis] + k as f64 * self.h
    }

    pub fn axis_nodes(&self, axis: usize) -> Vec<f64> {
        (0..self.counts[axis]).map(|k| self.node(axis, k)).collect()
    }

    /// Row-major flat index; the last axis runs fastest.
    pub fn flat(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.counts).fold(0, |acc, (i, c)| acc * c + i)
    }

    pub fn multi(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for axis in (0..self.dim()).rev() {
            idx[axis] = flat % self.counts[axis];
            flat /= self.counts[axis];
        }
        idx
    }

    pub fn coords(&self, flat: usize) -> Vec<f64> {
        self.multi(flat).iter().enumerate().map(|(axis, &k)| self.node(axis, k)).collect()
    }

    /// Index of the node at coordinate `x` on `axis`, if `x` is a node.
    pub fn node_index(&self, axis: usize, x: f64) -> Option<usize> {
        let s = (x - self.lo[axis]) / self.h;
        let k = s.round();
        if (s - k).abs() > 1e-6 || k < 0.0 || k as usize >= self.counts[axis] {
            None
        } else {
            Some(k as usize)
        }
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        self.domain == other.domain
            && self.counts == other.counts
            && (self.h - other.h).abs() <= SNAP * self.h
            && self.lo.iter().zip(&other.lo).all(|(a, b)| (a - b).abs() <= SNAP * self.h)
    }

    /// Sub-grid spanned by node ranges `[first, last]` per axis.
    pub(crate) fn sub(&self, domain: DomainKind, first: &[usize], last: &[usize]) -> Result<Grid> {
        let lo: Vec<f64> = first.iter().enumerate().map(|(a, &k)| self.node(a, k)).collect();
        let hi: Vec<f64> = last.iter().enumerate().map(|(a, &k)| self.node(a, k)).collect();
        Grid::new(domain, &lo, &hi, self.h)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledFunction {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl SampledFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!("{} values for {} nodes", values.len(), grid.len())));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::UndefinedSample {
                coords: grid.coords(k),
                reason: format!("non-finite value {}", values[k]),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        let n = grid.len();
        Self { grid, values: vec![0.0; n] }
    }

    pub fn from_fn<F: FnMut(&[f64]) -> f64>(grid: Grid, mut f: F) -> Result<Self> {
        let values = (0..grid.len()).map(|k| f(&grid.coords(k))).collect();
        Self::new(grid, values)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Value at a point that is a grid node.
    pub fn at(&self, x: &[f64]) -> Option<f64> {
        let idx: Option<Vec<usize>> = x.iter().enumerate().map(|(a, &xa)| self.grid.node_index(a, xa)).collect();
        idx.map(|i| self.values[self.grid.flat(&i)])
    }

    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = (0..self.grid.dim()).map(|a| format!("x{a}")).collect();
        header.push("value".into());
        w.write_record(&header)?;
        for (k, v) in self.values.iter().enumerate() {
            let mut row: Vec<String> = self.grid.coords(k).iter().map(|c| format!("{c:.17e}")).collect();
            row.push(format!("{v:.17e}"));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// JSON header describing the grid; pairs with `write_csv`.
    pub fn write_header<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(&mut file, &self.grid)?;
        writeln!(file)?;
        Ok(())
    }

    pub fn read_csv<P: AsRef<Path>>(grid: Grid, path: P) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let col = grid.dim();
        let mut values = Vec::with_capacity(grid.len());
        for rec in r.records() {
            let rec = rec?;
            let v: f64 = rec
                .get(col)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::GridMismatch(format!("bad value column in row {}", values.len())))?;
            values.push(v);
        }
        Self::new(grid, values)
    }
}

fn split_axis_layer(grid: &Grid) -> Result<usize> {
    let n = grid.dim() - 1;
    grid.node_index(n, 0.0)
        .ok_or_else(|| Error::InvalidDomain("grid has no node layer on the splitting hyperplane".into()))
}

/// Reflects a half-space function across the splitting hyperplane.
/// `sign` multiplies the reflected values; the boundary layer keeps
/// `boundary(v)`.
fn reflect(f: &SampledFunction, sign: f64, boundary: impl Fn(f64) -> f64) -> Result<SampledFunction> {
    let g = &f.grid;
    let n = g.dim() - 1;
    let m = g.counts()[n] - 1;
    let (upper, lo_n, hi_n) = match g.domain.region {
        Region::UpperHalf if split_axis_layer(g)? == 0 => (true, -g.hi[n], g.hi[n]),
        Region::LowerHalf if split_axis_layer(g)? == m => (false, g.lo[n], -g.lo[n]),
        _ => return Err(Error::InvalidDomain("extension needs a half-space grid with its boundary layer at 0".into())),
    };
    let mut lo = g.lo.clone();
    let mut hi = g.hi.clone();
    lo[n] = lo_n;
    hi[n] = hi_n;
    let full = Grid::new(DomainKind::full(g.dim()), &lo, &hi, g.h)?;
    let rows = g.len() / (m + 1);
    let mut values = Vec::with_capacity(full.len());
    for r in 0..rows {
        let row = &f.values[r * (m + 1)..(r + 1) * (m + 1)];
        // full row index j in 0..=2m; half index depends on orientation
        for j in 0..=2 * m {
            let v = if upper {
                if j < m {
                    sign * row[m - j]
                } else if j == m {
                    boundary(row[0])
                } else {
                    row[j - m]
                }
            } else if j < m {
                row[j]
            } else if j == m {
                boundary(row[m])
            } else {
                sign * row[2 * m - j]
            };
            values.push(v);
        }
    }
    SampledFunction::new(full, values)
}

/// Even extension `f_e` of a half-space function.
pub fn even_extension(f: &SampledFunction) -> Result<SampledFunction> {
    reflect(f, 1.0, |v| v)
}

/// Odd extension `f_o`; the boundary layer is set to 0.
pub fn odd_extension(f: &SampledFunction) -> Result<SampledFunction> {
    reflect(f, -1.0, |_| 0.0)
}

/// Extension by zero to the full space; the boundary layer keeps its value.
pub fn zero_extension(f: &SampledFunction) -> Result<SampledFunction> {
    reflect(f, 0.0, |v| v)
}

/// Copies the part of a full-space function on the closed half `region`.
pub fn restrict(f: &SampledFunction, region: Region) -> Result<SampledFunction> {
    let g = &f.grid;
    if g.domain.region == region {
        return Ok(f.clone());
    }
    if g.domain.region != Region::Full || region == Region::Full {
        return Err(Error::InvalidDomain(format!("cannot restrict a {:?} grid to {:?}", g.domain.region, region)));
    }
    let n = g.dim() - 1;
    let z = split_axis_layer(g)?;
    let m = g.counts()[n];
    let (k0, k1) = match region {
        Region::UpperHalf => (z, m - 1),
        _ => (0, z),
    };
    let mut first = vec![0; g.dim()];
    let mut last: Vec<usize> = g.counts().iter().map(|c| c - 1).collect();
    first[n] = k0;
    last[n] = k1;
    let sub = g.sub(DomainKind { dim: g.dim(), region }, &first, &last)?;
    let rows = g.len() / m;
    let mut values = Vec::with_capacity(sub.len());
    for r in 0..rows {
        values.extend_from_slice(&f.values[r * m + k0..=r * m + k1]);
    }
    SampledFunction::new(sub, values)
}

/// Restriction to the node box `[lo, hi]` (snapped inward to nodes).
pub fn restrict_box(f: &SampledFunction, lo: &[f64], hi: &[f64]) -> Result<SampledFunction> {
    let g = &f.grid;
    let mut first = Vec::new();
    let mut last = Vec::new();
    for a in 0..g.dim() {
        let k0 = ((lo[a] - g.lo[a]) / g.h - SNAP).ceil().max(0.0) as usize;
        let k1 = (((hi[a] - g.lo[a]) / g.h + SNAP).floor() as isize).min(g.counts()[a] as isize - 1);
        if k1 < k0 as isize {
            return Err(Error::GridMismatch(format!("box is empty on axis {a}")));
        }
        first.push(k0);
        last.push(k1 as usize);
    }
    let sub = g.sub(g.domain, &first, &last)?;
    let mut values = Vec::with_capacity(sub.len());
    for k in 0..sub.len() {
        let idx: Vec<usize> = sub.multi(k).iter().zip(&first).map(|(i, f0)| i + f0).collect();
        values.push(f.values[g.flat(&idx)]);
    }
    SampledFunction::new(sub, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(region: Region, lo: f64, hi: f64, h: f64) -> Grid {
        make_grid(DomainKind { dim: 1, region }, &[lo], &[hi], h).unwrap()
    }

    #[test]
    fn grid_nodes_form_a_progression() {
        let g = line(Region::Full, -1.0, 1.0, 0.5);
        assert_eq!(g.axis_nodes(0), vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        let g = line(Region::UpperHalf, 0.0, 2.0, 1.0);
        assert_eq!(g.axis_nodes(0), vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn grid_rejects_bad_bounds() {
        let r = make_grid(DomainKind::full(1), &[0.0], &[1.0], 0.3);
        assert!(matches!(r, Err(Error::NonIntegralSpan { .. })));
        let r = make_grid(DomainKind::upper(1), &[-1.0], &[1.0], 0.5);
        assert!(matches!(r, Err(Error::HalfSpaceBound(_))));
        let r = make_grid(DomainKind::lower(2), &[0.0, -1.0], &[1.0, 0.5], 0.5);
        assert!(matches!(r, Err(Error::HalfSpaceBound(_))));
        assert!(DomainKind::new(3, Region::Full).is_err());
    }

    #[test]
    fn extensions_of_small_arrays() {
        let g = line(Region::UpperHalf, 0.0, 2.0, 1.0);
        let f = SampledFunction::new(g.clone(), vec![0.0, 1.0, 2.0]).unwrap();
        assert_eq!(even_extension(&f).unwrap().values, vec![2.0, 1.0, 0.0, 1.0, 2.0]);
        assert_eq!(odd_extension(&f).unwrap().values, vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
        let one = SampledFunction::new(g, vec![1.0; 3]).unwrap();
        assert_eq!(odd_extension(&one).unwrap().values, vec![-1.0, -1.0, 0.0, 1.0, 1.0]);
        assert_eq!(even_extension(&one).unwrap().values, vec![1.0; 5]);
        assert_eq!(zero_extension(&one).unwrap().values, vec![0.0, 0.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn lower_half_extension_mirrors_upward() {
        let g = line(Region::LowerHalf, -2.0, 0.0, 1.0);
        let f = SampledFunction::new(g, vec![5.0, 3.0, 1.0]).unwrap();
        assert_eq!(even_extension(&f).unwrap().values, vec![5.0, 3.0, 1.0, 3.0, 5.0]);
        assert_eq!(odd_extension(&f).unwrap().values, vec![5.0, 3.0, 0.0, -3.0, -5.0]);
    }

    #[test]
    fn restrict_round_trips_in_two_dimensions() {
        let g = make_grid(DomainKind::upper(2), &[-1.0, 0.0], &[1.0, 1.5], 0.5).unwrap();
        let f = SampledFunction::from_fn(g, |x| x[0] + 10.0 * x[1] + 1.0).unwrap();
        let e = even_extension(&f).unwrap();
        assert_eq!(e.grid.counts(), &[5, 7]);
        assert_eq!(e.at(&[0.5, -1.0]), f.at(&[0.5, 1.0]));
        assert_eq!(restrict(&e, Region::UpperHalf).unwrap(), f);
        let lower = restrict(&e, Region::LowerHalf).unwrap();
        assert_eq!(lower.grid.hi, vec![1.0, 0.0]);
        assert_eq!(lower.at(&[-1.0, -1.5]), f.at(&[-1.0, 1.5]));
    }

    #[test]
    fn restrict_box_snaps_inward() {
        let g = line(Region::Full, -1.0, 1.0, 0.25);
        let f = SampledFunction::from_fn(g, |x| x[0]).unwrap();
        let b = restrict_box(&f, &[-0.3], &[0.6]).unwrap();
        assert_eq!(b.values, vec![-0.25, 0.0, 0.25, 0.5]);
    }

    #[test]
    fn csv_round_trip() {
        let g = line(Region::Full, -1.0, 1.0, 0.5);
        let f = SampledFunction::from_fn(g.clone(), |x| x[0].sin()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        f.write_csv(&p).unwrap();
        let back = SampledFunction::read_csv(g, &p).unwrap();
        assert_eq!(back, f);
    }
}
