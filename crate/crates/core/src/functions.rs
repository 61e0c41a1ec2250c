//! Closed-form test functions and their sampling on grids.
//!
//! Formulas act on the last coordinate unless stated otherwise. Nodes where
//! `log|x_n|` would be evaluated at `x_n = 0` take the value at distance
//! `h/2`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, SampledFunction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case")]
pub enum FunctionSpec {
    Constant {
        c: f64,
    },
    /// `log|x_n|`, the even logarithm.
    LogE,
    /// `H(x_n) log|x_n|`, the logarithm cut off on the lower half.
    Log,
    /// `-(x^a log x)^{-1}` on `0 < x <= 1/2`, zero elsewhere.
    Counterexample {
        alpha: f64,
    },
    /// `sign(x_n)` with `sign(0) = 0`.
    Sign,
    Linear {
        slope: f64,
    },
    Indicator {
        a: f64,
        b: f64,
    },
    Cosine {
        freq: f64,
    },
    /// `cos(freq log sqrt(x_n^2 + eps^2))`: oscillates on every dyadic scale.
    LogCosine {
        freq: f64,
        eps: f64,
    },
    /// Smooth compact bump `exp(1 - 1/(1 - (x/r)^2))` around `center`.
    Bump {
        center: f64,
        radius: f64,
    },
    /// Unit steps of width `width` with pseudo-random values in [-1, 1].
    RandomSteps {
        seed: u64,
        width: f64,
    },
}

impl FunctionSpec {
    pub fn name(&self) -> String {
        match self {
            Self::Constant { c } => format!("const{c}"),
            Self::LogE => "log_e".into(),
            Self::Log => "Log".into(),
            Self::Counterexample { alpha } => format!("counterexample(alpha={alpha})"),
            Self::Sign => "sign".into(),
            Self::Linear { slope } => format!("linear({slope})"),
            Self::Indicator { a, b } => format!("indicator[{a},{b}]"),
            Self::Cosine { freq } => format!("cos({freq}x)"),
            Self::LogCosine { freq, eps } => format!("logcos({freq},{eps})"),
            Self::Bump { center, radius } => format!("bump({center},{radius})"),
            Self::RandomSteps { seed, width } => format!("steps({seed},{width})"),
        }
    }

    /// Looks up a catalog id such as `log_e`, `Log`, `const1`, `sign`.
    pub fn parse(id: &str) -> Result<Self> {
        let spec = match id {
            "log_e" | "loge" => Self::LogE,
            "Log" | "log" => Self::Log,
            "sign" => Self::Sign,
            "bump" => Self::Bump { center: 0.0, radius: 1.0 },
            _ => {
                if let Some(c) = id.strip_prefix("const") {
                    let c = if c.is_empty() { 1.0 } else { parse_num(id, c)? };
                    Self::Constant { c }
                } else if let Some(a) = id.strip_prefix("counterexample") {
                    let alpha = if a.is_empty() { 0.5 } else { parse_num(id, a.trim_start_matches(':'))? };
                    Self::Counterexample { alpha }
                } else if let Some(f) = id.strip_prefix("cos") {
                    Self::Cosine { freq: parse_num(id, f.trim_start_matches(':'))? }
                } else if let Some(f) = id.strip_prefix("logcos") {
                    Self::LogCosine { freq: parse_num(id, f.trim_start_matches(':'))?, eps: 1e-3 }
                } else if let Some(s) = id.strip_prefix("steps") {
                    let seed = s.trim_start_matches(':').parse().map_err(|_| bad_id(id))?;
                    Self::RandomSteps { seed, width: 0.125 }
                } else {
                    return Err(bad_id(id));
                }
            }
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Counterexample { alpha } if !(alpha > 0.0 && alpha < 1.0) => {
                Err(Error::OutOfRange(format!("counterexample needs 0 < alpha < 1, got {alpha}")))
            }
            Self::Bump { radius, .. } if !(radius > 0.0) => {
                Err(Error::OutOfRange(format!("bump radius must be positive, got {radius}")))
            }
            Self::RandomSteps { width, .. } if !(width > 0.0) => {
                Err(Error::OutOfRange(format!("step width must be positive, got {width}")))
            }
            _ => Ok(()),
        }
    }

    /// Pointwise value at `x`; `h` is the spacing used by the log clamp.
    pub fn eval(&self, x: &[f64], h: f64) -> Result<f64> {
        let xn = x[x.len() - 1];
        let clamp_log = |v: f64| if v == 0.0 { (0.5 * h).ln() } else { v.abs().ln() };
        let v = match *self {
            Self::Constant { c } => c,
            Self::LogE => clamp_log(xn),
            Self::Log => {
                if xn >= 0.0 {
                    clamp_log(xn)
                } else {
                    0.0
                }
            }
            Self::Counterexample { alpha } => counterexample_value(alpha, xn)?,
            Self::Sign => {
                if xn > 0.0 {
                    1.0
                } else if xn < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Self::Linear { slope } => slope * xn,
            Self::Indicator { a, b } => {
                if xn >= a && xn <= b {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Cosine { freq } => (freq * xn).cos(),
            Self::LogCosine { freq, eps } => (freq * 0.5 * (xn * xn + eps * eps).ln()).cos(),
            Self::Bump { center, radius } => {
                let r = (xn - center) / radius;
                if r.abs() < 1.0 {
                    (1.0 - 1.0 / (1.0 - r * r)).exp()
                } else {
                    0.0
                }
            }
            Self::RandomSteps { seed, width } => {
                let cell = (xn / width).floor() as i64;
                let bits = splitmix(seed ^ (cell as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                (bits >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
            }
        };
        if !v.is_finite() {
            return Err(Error::UndefinedSample { coords: x.to_vec(), reason: self.name() });
        }
        Ok(v)
    }
}

fn parse_num(id: &str, s: &str) -> Result<f64> {
    s.parse().map_err(|_| bad_id(id))
}

fn bad_id(id: &str) -> Error {
    Error::OutOfRange(format!("unknown function id '{id}'"))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `-(x^a log x)^{-1}` on `(0, 1/2]`, zero elsewhere.
pub fn counterexample_value(alpha: f64, x: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::OutOfRange(format!("counterexample needs 0 < alpha < 1, got {alpha}")));
    }
    Ok(if x > 0.0 && x <= 0.5 { -1.0 / (x.powf(alpha) * x.ln()) } else { 0.0 })
}

/// Evaluates `spec` at every node of `grid`.
pub fn sample(spec: &FunctionSpec, grid: &Grid) -> Result<SampledFunction> {
    spec.validate()?;
    let values = (0..grid.len()).map(|k| spec.eval(&grid.coords(k), grid.h)).collect::<Result<Vec<_>>>()?;
    SampledFunction::new(grid.clone(), values)
}
