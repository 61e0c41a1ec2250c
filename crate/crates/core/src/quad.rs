//! Fixed-order Gauss-Legendre rules and the composite/graded integrators
//! built on them.

use std::f64::consts::PI;

#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Nodes and weights on [-1, 1] by Newton iteration on P_n.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite rule: every gap between consecutive sorted breakpoints is cut
/// into `panels` equal pieces.
pub fn composite<F: FnMut(f64) -> f64>(rule: &GaussLegendre, breaks: &[f64], panels: usize, mut f: F) -> f64 {
    let mut acc = 0.0;
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let step = (b - a) / panels as f64;
        for p in 0..panels {
            let lo = a + p as f64 * step;
            acc += rule.integrate(lo, lo + step, &mut f);
        }
    }
    acc
}

/// Integrates over [a, b] with panels shrinking geometrically (ratio 1/4)
/// toward whichever endpoints are flagged singular.
pub fn graded<F: FnMut(f64) -> f64>(
    rule: &GaussLegendre,
    a: f64,
    b: f64,
    singular_a: bool,
    singular_b: bool,
    levels: usize,
    mut f: F,
) -> f64 {
    graded_dyn(rule, a, b, singular_a, singular_b, levels, &mut f)
}

fn graded_dyn(
    rule: &GaussLegendre,
    a: f64,
    b: f64,
    singular_a: bool,
    singular_b: bool,
    levels: usize,
    f: &mut dyn FnMut(f64) -> f64,
) -> f64 {
    if b <= a {
        return 0.0;
    }
    match (singular_a, singular_b) {
        (false, false) => rule.integrate(a, b, f),
        (true, true) => {
            let m = 0.5 * (a + b);
            graded_dyn(rule, a, m, true, false, levels, f) + graded_dyn(rule, m, b, false, true, levels, f)
        }
        (true, false) => {
            let mut acc = 0.0;
            let mut hi = b;
            let mut d = (b - a) * 0.25;
            for _ in 0..levels {
                if d <= 1e-13 * a.abs() {
                    break;
                }
                acc += rule.integrate(a + d, hi, &mut *f);
                hi = a + d;
                d *= 0.25;
            }
            acc + rule.integrate(a, hi, f)
        }
        (false, true) => {
            let mut acc = 0.0;
            let mut lo = a;
            let mut d = (b - a) * 0.25;
            for _ in 0..levels {
                if d <= 1e-13 * b.abs() {
                    break;
                }
                acc += rule.integrate(lo, b - d, &mut *f);
                lo = b - d;
                d *= 0.25;
            }
            acc + rule.integrate(lo, b, f)
        }
    }
}

/// Piecewise-linear interpolation weights of the interval [a, b] on the
/// uniform node set `lo + k h`, k = 0..n. Returns the first node index and
/// one weight per touched node; the weights sum to b - a.
pub fn interval_weights(lo: f64, h: f64, n: usize, a: f64, b: f64) -> Option<(usize, Vec<f64>)> {
    let tol = 1e-9 * h;
    let last = lo + (n - 1) as f64 * h;
    if a < lo - tol || b > last + tol || b < a {
        return None;
    }
    let a = a.max(lo);
    let b = b.min(last);
    if b - a <= tol {
        // degenerate interval: a single node carries no length
        let k = (((a - lo) / h).round() as usize).min(n - 1);
        return Some((k, vec![0.0]));
    }
    let ka = (((a - lo) / h) + 1e-9).floor() as usize;
    let kb = ((((b - lo) / h) - 1e-9).ceil() as usize).min(n - 1);
    let ka = ka.min(kb.saturating_sub(1));
    let mut w = vec![0.0; kb - ka + 1];
    for k in ka..kb {
        let x0 = lo + k as f64 * h;
        let c = a.max(x0);
        let d = b.min(x0 + h);
        if d <= c {
            continue;
        }
        // integrals of the two hat pieces over [c, d]
        let s0 = (c - x0) / h;
        let s1 = (d - x0) / h;
        let right = 0.5 * (s1 * s1 - s0 * s0) * h;
        let left = (d - c) - right;
        w[k - ka] += left;
        w[k + 1 - ka] += right;
    }
    Some((ka, w))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        let rule = GaussLegendre::new(8);
        // degree 15 is the exactness limit
        let v = rule.integrate(0.0, 2.0, |x| x.powi(15));
        assert!((v - 2f64.powi(16) / 16.0).abs() < 1e-9);
        let w: f64 = rule.weights.iter().sum();
        assert!((w - 2.0).abs() < 1e-14);
    }

    #[test]
    fn graded_handles_algebraic_singularity() {
        let rule = GaussLegendre::new(16);
        let v = graded(&rule, 0.0, 1.0, true, false, 60, |x| x.powf(-0.7));
        assert!((v - 1.0 / 0.3).abs() < 1e-9, "{v}");
        let v = graded(&rule, 0.0, 1.0, true, true, 30, |x| x.ln() + (1.0 - x).ln());
        assert!((v + 2.0).abs() < 1e-10, "{v}");
    }

    #[test]
    fn interval_weights_sum_to_length() {
        let (k, w) = interval_weights(-1.0, 0.25, 9, -0.3, 0.6).unwrap();
        assert_eq!(k, 2);
        let s: f64 = w.iter().sum();
        assert!((s - 0.9).abs() < 1e-14);
        // aligned interval gives trapezoid weights
        let (k, w) = interval_weights(0.0, 0.5, 5, 0.5, 1.5).unwrap();
        assert_eq!(k, 1);
        assert_eq!(w, vec![0.25, 0.5, 0.25]);
        assert!(interval_weights(0.0, 0.5, 5, -0.1, 1.0).is_none());
    }
}
