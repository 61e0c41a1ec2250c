//! The experiments behind each subcommand.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use serde_json::json;

use bmol::counterexample::{counterexample_report, CounterexampleConfig};
use bmol::cubes::CubeFamily;
use bmol::frac::{apply_frac_power, difference_kernel, fitted_gamma, FracParams};
use bmol::functions::{sample, FunctionSpec};
use bmol::grid::{make_grid, restrict, Grid, Region, SampledFunction};
use bmol::kernels::{
    apply_generator_semigroup, eval_heat_kernel, gaussian_bound_ratio, kernel_mass, OpTag, OperatorKind,
};
use bmol::mellin::{mellin_forward, MellinGrid, MultiplierSpec};
use bmol::multipliers::{maximal_multiplier, mellin_synthesis, tail_mass, tail_mass_sup};
use bmol::seminorm::{bmo_l_components, classical_bmo_with, inclusion_report, ComparisonConfig, SeminormEstimate};
use bmol::spectral::{bmo_growth_sweep, imaginary_power_field, sweep_test_set, SpectralPlan};

use crate::report::{Outcome, Table};

pub enum RunError {
    /// Rejected input; exit status 2.
    Config(String),
    /// Anything else that stopped the run; exit status 1.
    Failed(String),
}

impl From<bmol::Error> for RunError {
    fn from(e: bmol::Error) -> Self {
        use bmol::Error::*;
        match e {
            Io(_) | Csv(_) | Json(_) | Quadrature(_) => RunError::Failed(e.to_string()),
            _ => RunError::Config(e.to_string()),
        }
    }
}

type Run = Result<Outcome, RunError>;

fn operator(name: &str, dim: usize) -> Result<OperatorKind, RunError> {
    Ok(OperatorKind::new(OpTag::parse(name)?, dim)?)
}

fn function(id: &str) -> Result<FunctionSpec, RunError> {
    Ok(FunctionSpec::parse(id)?)
}

/// Box `[lo, hi]^dim` cut to the operator's region.
fn region_grid(op: &OperatorKind, lo: f64, hi: f64, h: f64) -> Result<Grid, RunError> {
    let n = op.dim;
    let (mut a, mut b) = (vec![lo; n], vec![hi; n]);
    match op.domain().region {
        Region::UpperHalf => a[n - 1] = 0.0,
        Region::LowerHalf => b[n - 1] = 0.0,
        Region::Full => {}
    }
    Ok(make_grid(op.domain(), &a, &b, h)?)
}

/// `bmo_l` (or the classical estimate for `classical`) on the comparison
/// grid; half-line operators see the restriction and a family on their half.
fn estimate(f: &SampledFunction, op_name: &str, cfg: &ComparisonConfig) -> Result<SeminormEstimate, RunError> {
    if op_name == "classical" {
        return Ok(classical_bmo_with(f, &cfg.family(), &cfg.divergence)?);
    }
    let op = operator(op_name, 1)?;
    estimate_complex(&[f], &op, cfg)
}

fn estimate_complex(
    fs: &[&SampledFunction],
    op: &OperatorKind,
    cfg: &ComparisonConfig,
) -> Result<SeminormEstimate, RunError> {
    let region = op.domain().region;
    if region == Region::Full {
        return Ok(bmo_l_components(fs, op, &cfg.family(), &cfg.quadrature, &cfg.divergence)?);
    }
    let (lo, hi) = if region == Region::UpperHalf { (0.0, cfg.half_width) } else { (-cfg.half_width, 0.0) };
    let family = CubeFamily::dyadic(cfg.j_coarse, cfg.j_fine, vec![lo], vec![hi]);
    let parts = fs.iter().map(|f| restrict(f, region)).collect::<bmol::Result<Vec<_>>>()?;
    let refs: Vec<&SampledFunction> = parts.iter().collect();
    Ok(bmo_l_components(&refs, op, &family, &cfg.quadrature, &cfg.divergence)?)
}

fn outcome<C: Serialize>(config: &C, results: serde_json::Value, table: Table, failures: Vec<String>) -> Run {
    Ok(Outcome { config: serde_json::to_value(config).expect("config serializes"), results, table, failures })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelsConfig {
    pub operator: String,
    pub dim: usize,
    pub times: Vec<f64>,
    /// Source point; the profile runs along the last axis through it.
    pub y: Vec<f64>,
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Default for KernelsConfig {
    fn default() -> Self {
        Self {
            operator: "DeltaN".into(),
            dim: 1,
            times: vec![0.25, 1.0],
            y: vec![0.5],
            lo: -4.0,
            hi: 4.0,
            step: 1.0 / 16.0,
        }
    }
}

pub fn kernels(cfg: &KernelsConfig) -> Run {
    let op = operator(&cfg.operator, cfg.dim)?;
    if cfg.y.len() != cfg.dim {
        return Err(RunError::Config(format!("y has {} coordinates, dim is {}", cfg.y.len(), cfg.dim)));
    }
    if !(cfg.step > 0.0 && cfg.hi > cfg.lo) {
        return Err(RunError::Config("profile needs lo < hi and step > 0".into()));
    }
    let bound = 2.0 * (4.0 * PI).powf(-0.5 * cfg.dim as f64);
    let n = cfg.dim - 1;
    let steps = ((cfg.hi - cfg.lo) / cfg.step).round() as usize;
    let mut table = Table::new(&["t", "x", "value"]);
    let mut per_time = Vec::new();
    let mut failures = Vec::new();
    for &t in &cfg.times {
        let mut pairs = Vec::new();
        let (mut sym, mut min): (f64, f64) = (0.0, f64::INFINITY);
        for k in 0..=steps {
            let mut x = cfg.y.clone();
            x[n] = cfg.lo + k as f64 * cfg.step;
            if !op.domain().contains(&x) {
                continue;
            }
            let v = eval_heat_kernel(&op, t, &x, &cfg.y)?;
            sym = sym.max((v - eval_heat_kernel(&op, t, &cfg.y, &x)?).abs());
            min = min.min(v);
            table.push(vec![t, x[n], v]);
            pairs.push((x, cfg.y.clone()));
        }
        let ratio = gaussian_bound_ratio(&op, t, &pairs)?;
        let mass = kernel_mass(&op, t, &cfg.y)?;
        if sym > 1e-14 {
            failures.push(format!("t = {t}: symmetry gap {sym:e}"));
        }
        if min < 0.0 {
            failures.push(format!("t = {t}: negative kernel value {min:e}"));
        }
        if ratio > bound {
            failures.push(format!("t = {t}: Gaussian bound ratio {ratio} exceeds {bound}"));
        }
        per_time.push(json!({ "t": t, "mass": mass, "symmetry_gap": sym, "min_value": min, "bound_ratio": ratio }));
    }
    outcome(cfg, json!({ "operator": op.name(), "bound": bound, "times": per_time }), table, failures)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeminormConfig {
    pub function: String,
    /// An operator name or `classical`.
    pub operator: String,
    pub comparison: ComparisonConfig,
}

impl Default for SeminormConfig {
    fn default() -> Self {
        Self { function: "Log".into(), operator: "DeltaN".into(), comparison: ComparisonConfig::default() }
    }
}

pub fn seminorm(cfg: &SeminormConfig) -> Run {
    let spec = function(&cfg.function)?;
    let f = sample(&spec, &cfg.comparison.grid()?)?;
    let est = estimate(&f, &cfg.operator, &cfg.comparison)?;
    let mut table = Table::new(&["side", "max_oscillation"]);
    for &(side, osc) in &est.per_scale {
        table.push(vec![side, osc]);
    }
    outcome(cfg, json!({ "function": spec.name(), "estimate": est }), table, Vec::new())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareConfig {
    pub functions: Vec<String>,
    /// Operator names; `classical` selects the classical space.
    pub operators: Vec<String>,
    pub comparison: ComparisonConfig,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            functions: vec!["log_e".into(), "Log".into()],
            operators: ["DeltaD", "classical", "DeltaN", "DeltaDN"].map(String::from).to_vec(),
            comparison: ComparisonConfig::default(),
        }
    }
}

pub fn compare(cfg: &CompareConfig) -> Run {
    let specs = cfg.functions.iter().map(|f| function(f)).collect::<Result<Vec<_>, _>>()?;
    let ops = cfg
        .operators
        .iter()
        .map(|o| if o == "classical" { Ok(None) } else { OpTag::parse(o).map(Some) })
        .collect::<bmol::Result<Vec<_>>>()?;
    let report = inclusion_report(&specs, &ops, &cfg.comparison)?;
    let mut table = Table::new(&["function", "space", "side", "max_oscillation"]);
    let mut failures = Vec::new();
    for (i, row) in report.rows.iter().enumerate() {
        if !row.chain_consistent {
            failures.push(format!("{}: verdicts break the inclusion chain", row.function));
        }
        for (j, v) in row.verdicts.iter().enumerate() {
            for &(side, osc) in &v.per_scale {
                table.push(vec![i as f64, j as f64, side, osc]);
            }
        }
    }
    outcome(cfg, json!({ "rows": report.rows }), table, failures)
}

pub fn counterexample(cfg: &CounterexampleConfig) -> Run {
    cfg.validate()?;
    let report = counterexample_report(cfg)?;
    let mut table = Table::new(&["k", "m_Qk", "oscillation", "lower_bound_half", "lower_bound_quarter"]);
    for r in &report.rows {
        table.push(vec![r.k as f64, r.m_q, r.oscillation, r.bound_half, r.bound_quarter]);
    }
    let mut failures = Vec::new();
    for r in report.rows.iter().filter(|r| r.oscillation < r.bound_quarter) {
        failures.push(format!("k = {}: oscillation {} below {}", r.k, r.oscillation, r.bound_quarter));
    }
    if !report.oscillation_increasing {
        failures.push("oscillation is not strictly increasing in k".into());
    }
    if report.bmo.divergent {
        failures.push("bmo_L of the potential is flagged divergent".into());
    }
    let results = json!({
        "gamma": report.gamma,
        "rows": report.rows,
        "norm": report.norm,
        "bmo": report.bmo,
        "bmo_ratio": report.bmo_ratio,
        "bounds_hold": report.bounds_hold,
        "oscillation_increasing": report.oscillation_increasing,
    });
    outcome(cfg, results, table, failures)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayConfig {
    /// Distances `|x - y| / sqrt(t)` on which the constant is fitted.
    pub fit: Vec<f64>,
    pub test: Vec<f64>,
    pub times: Vec<f64>,
    pub sources: Vec<f64>,
}

impl Default for DecayConfig {
    fn default() -> Self {
        Self { fit: vec![2.0, 4.0], test: vec![8.0, 16.0, 32.0], times: vec![0.25, 1.0], sources: vec![0.5, 2.0] }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FracConfig {
    pub operator: String,
    pub alpha: f64,
    pub function: String,
    pub lo: f64,
    pub hi: f64,
    pub h: f64,
    /// Decay table of the kernel of `L^{-a/2}(I - e^{-tL})`; line only.
    pub decay: Option<DecayConfig>,
}

impl Default for FracConfig {
    fn default() -> Self {
        Self {
            operator: "DeltaN".into(),
            alpha: 0.5,
            function: "bump".into(),
            lo: -4.0,
            hi: 4.0,
            h: 1.0 / 64.0,
            decay: Some(DecayConfig::default()),
        }
    }
}

pub fn frac(cfg: &FracConfig) -> Run {
    let op = operator(&cfg.operator, 1)?;
    let p = FracParams::new(cfg.alpha, 1)?;
    let grid = region_grid(&op, cfg.lo, cfg.hi, cfg.h)?;
    let f = sample(&function(&cfg.function)?, &grid)?;
    let g = apply_frac_power(&op, &p, &f)?;
    let mut table = Table::new(&["x", "f", "value"]);
    for k in 0..g.grid.len() {
        table.push(vec![g.grid.coords(k)[0], f.values[k], g.values[k]]);
    }
    let mut failures = Vec::new();
    let gamma = p.gamma();
    let fitted = fitted_gamma(cfg.alpha)?;
    let gap = ((fitted - gamma) / gamma).abs();
    if gap > 1e-6 {
        failures.push(format!("fitted normalizer {fitted} differs from {gamma} by {gap:e}"));
    }
    let mut results = json!({ "gamma": gamma, "fitted_gamma": fitted, "relative_gap": gap });
    if let Some(d) = &cfg.decay {
        let sign = if op.domain().region == Region::LowerHalf { -1.0 } else { 1.0 };
        let mut rows = Vec::new();
        let mut ratio_at = |rho: f64| -> Result<f64, RunError> {
            let mut worst: f64 = 0.0;
            for &t in &d.times {
                for &y in &d.sources {
                    let dist = rho * t.sqrt();
                    let k = difference_kernel(&op, &p, t, &[sign * (y + dist)], &[sign * y])?;
                    let r = k.abs() / (t * dist.powf(cfg.alpha - 3.0));
                    rows.push(json!({ "rho": rho, "t": t, "y": sign * y, "kernel": k, "ratio": r }));
                    worst = worst.max(r);
                }
            }
            Ok(worst)
        };
        let fit = d.fit.iter().map(|&r| ratio_at(r)).collect::<Result<Vec<_>, _>>()?.into_iter().fold(0.0, f64::max);
        let test = d.test.iter().map(|&r| ratio_at(r)).collect::<Result<Vec<_>, _>>()?.into_iter().fold(0.0, f64::max);
        if test > fit {
            failures.push(format!("decay bound fails: tested ratio {test} exceeds fitted constant {fit}"));
        }
        results["decay"] =
            json!({ "fitted_constant": fit, "max_tested_ratio": test, "holds": test <= fit, "rows": rows });
    }
    outcome(cfg, results, table, failures)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImpowConfig {
    pub operator: String,
    pub s: Vec<f64>,
    /// Function and grid for the unitarity and group-law checks.
    pub function: String,
    pub lo: f64,
    pub hi: f64,
    pub h: f64,
    /// Run the seminorm growth sweep over `s`.
    pub sweep: bool,
    pub comparison: ComparisonConfig,
}

impl Default for ImpowConfig {
    fn default() -> Self {
        Self {
            operator: "Delta".into(),
            s: vec![0.0, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0],
            function: "steps:11".into(),
            lo: -4.0,
            hi: 4.0,
            h: 1.0 / 64.0,
            sweep: true,
            comparison: ComparisonConfig::default(),
        }
    }
}

pub fn impow(cfg: &ImpowConfig) -> Run {
    let op = operator(&cfg.operator, 1)?;
    let grid = region_grid(&op, cfg.lo, cfg.hi, cfg.h)?;
    let f = sample(&function(&cfg.function)?, &grid)?;
    let plan = SpectralPlan::new(&op, &grid)?;
    let field = plan.lift(&f)?;
    let norm = field.norm();
    let (mut unit, mut group): (f64, f64) = (0.0, 0.0);
    for (i, &s) in cfg.s.iter().enumerate() {
        let u = imaginary_power_field(&plan, s, &field);
        unit = unit.max((u.norm() - norm).abs() / norm);
        let s2 = cfg.s[(i + 1) % cfg.s.len()];
        let twice = imaginary_power_field(&plan, s2, &u);
        group = group.max(twice.distance(&imaginary_power_field(&plan, s + s2, &field)) / norm);
    }
    let mut failures = Vec::new();
    if unit > 1e-9 {
        failures.push(format!("unitarity gap {unit:e}"));
    }
    if group > 1e-9 {
        failures.push(format!("group law gap {group:e}"));
    }
    let mut results = json!({ "unitarity_gap": unit, "group_law_gap": group });
    let mut table = Table::new(&["s", "r", "ratio"]);
    if cfg.sweep {
        let sweep = bmo_growth_sweep(&op, &cfg.s, &sweep_test_set(&cfg.s), &cfg.comparison)?;
        for row in &sweep.rows {
            table.push(vec![row.s, row.r, row.ratio]);
        }
        let spread = sweep.spread();
        if spread > 3.0 {
            failures.push(format!("sweep ratios spread by a factor {spread}"));
        }
        results["sweep"] = json!({ "spread": spread, "fitted_c": sweep.fitted_c, "smallest_ratio": sweep.smallest_ratio, "rows": sweep.rows });
    }
    outcome(cfg, results, table, failures)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultiplierConfig {
    /// Catalog id such as `lambda_exp` or `log_gaussian_imag:1:0.5`.
    pub multiplier: String,
    pub operator: String,
    pub function: String,
    pub lo: f64,
    pub hi: f64,
    pub h: f64,
    pub times: Vec<f64>,
    pub mellin: MellinGrid,
}

impl Default for MultiplierConfig {
    fn default() -> Self {
        Self {
            multiplier: "lambda_exp".into(),
            operator: "Delta".into(),
            function: "bump".into(),
            lo: -32.0,
            hi: 32.0,
            h: 1.0 / 32.0,
            times: vec![0.25, 0.5, 1.0, 2.0, 4.0],
            mellin: MellinGrid::default(),
        }
    }
}

pub fn multiplier(cfg: &MultiplierConfig) -> Run {
    let spec = MultiplierSpec::parse(&cfg.multiplier)?;
    let op = operator(&cfg.operator, 1)?;
    let grid = region_grid(&op, cfg.lo, cfg.hi, cfg.h)?;
    let f = sample(&function(&cfg.function)?, &grid)?;
    let mut table = Table::new(&["u", "re", "im"]);
    let samples = match mellin_forward(&spec, &cfg.mellin, op.dim) {
        Ok(s) => s,
        Err(bmol::Error::DivergentMellin(reason)) => {
            let failures = vec![format!("Mellin transform of {} diverges: {reason}", spec.name())];
            return outcome(cfg, json!({ "divergent": true, "reason": reason }), table, failures);
        }
        Err(e) => return Err(e.into()),
    };
    for (u, m) in samples.u.iter().zip(&samples.m) {
        table.push(vec![*u, m.0, m.1]);
    }
    let m0 = samples.u.iter().position(|u| *u == 0.0).map(|k| samples.m[k]);
    let mut failures = Vec::new();
    let mut checks = Vec::new();
    let maximal = maximal_multiplier(&spec, &op, &f, &cfg.times, &cfg.mellin)?;
    let mut dominated = true;
    for &t in &cfg.times {
        let synth = mellin_synthesis(&spec, t, &op, &f, &cfg.mellin)?;
        dominated &= synth.modulus().values.iter().zip(&maximal.values).all(|(a, b)| a <= b);
        if spec == MultiplierSpec::LambdaExp {
            let direct = apply_generator_semigroup(&op, t, &f, &Default::default())?;
            let mut err: f64 = 0.0;
            for k in 0..direct.grid.len() {
                let x = direct.grid.coords(k);
                let j = grid.flat(&[grid.node_index(0, x[0]).expect("window nodes lie on the grid")]);
                err = err.max((synth.re.values[j] - direct.values[k]).abs()).max(synth.im.values[j].abs());
            }
            if err > 1e-4 {
                failures.push(format!("t = {t}: synthesis differs from the heat-kernel route by {err:e}"));
            }
            checks.push(json!({ "t": t, "max_error_vs_heat_kernel": err }));
        }
    }
    if !dominated {
        failures.push("maximal function fails to dominate a member".into());
    }
    let results = json!({
        "multiplier": spec,
        "m_at_zero": m0,
        "weighted_mass": samples.weighted_mass,
        "maximal_sup": maximal.sup_norm(),
        "maximal_dominates": dominated,
        "heat_kernel_checks": checks,
    });
    outcome(cfg, results, table, failures)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailmassConfig {
    pub multiplier: String,
    pub operator: String,
    pub r: Vec<f64>,
    pub y: Vec<f64>,
    pub t: f64,
    /// Dilation check: `t = c r^2` at every `r`.
    pub dilation_c: f64,
    /// Bounded function for the seminorm fit, scaled to unit sup norm.
    pub function: String,
    pub comparison: ComparisonConfig,
    pub mellin: MellinGrid,
}

impl Default for TailmassConfig {
    fn default() -> Self {
        Self {
            multiplier: "lambda_exp".into(),
            operator: "Delta".into(),
            r: vec![1.0 / 16.0, 0.25, 1.0, 4.0, 16.0],
            y: vec![-2.0, -1.0, 0.0, 1.0, 2.0],
            t: 1.0,
            dilation_c: 0.5,
            function: "steps:4".into(),
            comparison: ComparisonConfig { h: 1.0 / 512.0, ..Default::default() },
            mellin: MellinGrid::default(),
        }
    }
}

pub fn tailmass(cfg: &TailmassConfig) -> Run {
    let spec = MultiplierSpec::parse(&cfg.multiplier)?;
    let op = operator(&cfg.operator, 1)?;
    let sup = tail_mass_sup(&op, &spec, &cfg.r, &cfg.y, cfg.t)?;
    let mut table = Table::new(&["r", "y", "value"]);
    for e in &sup.entries {
        table.push(vec![e.r, e.y, e.value]);
    }
    let c = cfg.dilation_c;
    let base = tail_mass(&op, &spec, 1.0, 0.0, c)?.value;
    let mut gap: f64 = 0.0;
    for &r in &cfg.r {
        gap = gap.max((tail_mass(&op, &spec, r, 0.0, c * r * r)?.value - base).abs());
    }
    let mut failures = Vec::new();
    if gap > 1e-6 {
        failures.push(format!("tail mass changes by {gap:e} under dilation"));
    }
    if !sup.sup.is_finite() {
        failures.push("tail mass supremum is not finite".into());
    }
    let f = sample(&function(&cfg.function)?, &cfg.comparison.grid()?)?;
    let scale = f.sup_norm();
    if scale == 0.0 {
        return Err(RunError::Config(format!("function {} vanishes on the grid", cfg.function)));
    }
    let f = f.map(|v| v / scale);
    let ff = mellin_synthesis(&spec, 1.0, &op, &f, &cfg.mellin)?;
    let est = estimate_complex(&[&ff.re, &ff.im], &op, &cfg.comparison)?;
    let fitted_c = est.value / (sup.sup + spec.sup_norm());
    let results = json!({
        "empirical_c1": sup.sup,
        "dilation_gap": gap,
        "sup_norm_f": spec.sup_norm(),
        "bmo_l": est.value,
        "fitted_c": fitted_c,
        "entries": sup.entries,
    });
    outcome(cfg, results, table, failures)
}
