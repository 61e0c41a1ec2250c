//! Property tests over randomized operators, points and sampled functions.

use proptest::prelude::*;

use bmol::cubes::{dyadic_cubes, CubeFamily};
use bmol::frac::{apply_frac_power, frac_kernel, riesz_potential, FracParams, Route};
use bmol::functions::{sample, FunctionSpec};
use bmol::grid::{
    even_extension, make_grid, odd_extension, restrict, zero_extension, DomainKind, Region, SampledFunction,
};
use bmol::kernels::{apply_semigroup, eval_heat_kernel, OpTag, OperatorKind, QuadratureConfig};
use bmol::mellin::{MellinGrid, MultiplierSpec};
use bmol::multipliers::mellin_synthesis;
use bmol::seminorm::{bmo_l, bmo_l_complex, ComparisonConfig};
use bmol::spectral::{imaginary_power, imaginary_power_field, SpectralPlan};

fn op_tag() -> impl Strategy<Value = OpTag> {
    (0..8usize).prop_map(|k| OpTag::ALL[k])
}

fn point_in(region: Region, dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0..3.0f64, dim).prop_map(move |mut x| {
        let n = x.len() - 1;
        match region {
            Region::UpperHalf => x[n] = x[n].abs(),
            Region::LowerHalf => x[n] = -x[n].abs(),
            Region::Full => {}
        }
        x
    })
}

fn kernel_case() -> impl Strategy<Value = (OperatorKind, f64, Vec<f64>, Vec<f64>)> {
    (op_tag(), 1..=2usize).prop_flat_map(|(tag, dim)| {
        let op = OperatorKind::new(tag, dim).unwrap();
        let region = tag.region();
        (Just(op), 0.01..4.0f64, point_in(region, dim), point_in(region, dim))
    })
}

fn small_cfg() -> ComparisonConfig {
    ComparisonConfig { h: 1.0 / 128.0, half_width: 1.0, j_coarse: 0, j_fine: 3, ..Default::default() }
}

fn steps(seed: u64, grid: &bmol::grid::Grid) -> SampledFunction {
    sample(&FunctionSpec::RandomSteps { seed, width: 0.15 }, grid).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernels_are_symmetric_and_nonnegative((op, t, x, y) in kernel_case()) {
        let a = eval_heat_kernel(&op, t, &x, &y).unwrap();
        let b = eval_heat_kernel(&op, t, &y, &x).unwrap();
        prop_assert!((a - b).abs() <= 1e-14);
        prop_assert!(a >= 0.0);
    }

    #[test]
    fn extensions_reflect_and_restrict_back(values in prop::collection::vec(-5.0..5.0f64, 33)) {
        let g = make_grid(DomainKind::upper(1), &[0.0], &[1.0], 1.0 / 32.0).unwrap();
        let f = SampledFunction::new(g, values).unwrap();
        let even = even_extension(&f).unwrap();
        let odd = odd_extension(&f).unwrap();
        for k in 0..even.grid.len() {
            let x = even.grid.coords(k)[0];
            prop_assert_eq!(even.at(&[-x]).unwrap(), even.values[k]);
            if x != 0.0 {
                prop_assert_eq!(odd.at(&[-x]).unwrap(), -odd.values[k]);
            }
        }
        prop_assert_eq!(&restrict(&even, Region::UpperHalf).unwrap().values, &f.values);
        let back = restrict(&odd, Region::UpperHalf).unwrap();
        prop_assert_eq!(&back.values[1..], &f.values[1..]);
    }

    #[test]
    fn dyadic_cubes_are_deterministic_and_inside(lo in -2.0..0.0f64, width in 0.5..3.0f64, fine in 1..5i32) {
        let family = CubeFamily::dyadic(0, fine, vec![lo], vec![lo + width]);
        let domain = DomainKind::full(1);
        let a = dyadic_cubes(&family, &domain).unwrap();
        let b = dyadic_cubes(&family, &domain).unwrap();
        prop_assert_eq!(&a, &b);
        for q in &a {
            prop_assert!(q.lo(0) >= lo - 1e-12 && q.hi(0) <= lo + width + 1e-12);
        }
    }

    #[test]
    fn frac_kernel_routes_agree(x in 0.0..4.0f64, y in 0.0..4.0f64, a in 0.1..0.9f64) {
        prop_assume!((x - y).abs() > 0.05);
        let op = OperatorKind::new(OpTag::DeltaN, 1).unwrap();
        let p = FracParams::new(a, 1).unwrap();
        let closed = frac_kernel(&op, &p, &[x], &[y], Route::ClosedForm).unwrap();
        let integral = frac_kernel(&op, &p, &[x], &[y], Route::TimeIntegral).unwrap();
        prop_assert!(((closed - integral) / closed).abs() <= 1e-6, "{closed} vs {integral}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn seminorm_is_homogeneous_and_subadditive(
        tag in op_tag().prop_filter("full line", |t| t.region() == Region::Full),
        s1 in 0..1000u64,
        s2 in 0..1000u64,
        c in -4.0..4.0f64,
    ) {
        let cfg = small_cfg();
        let grid = cfg.grid().unwrap();
        let op = OperatorKind::new(tag, 1).unwrap();
        let (f, g) = (steps(s1, &grid), steps(s2, &grid));
        let est = |h: &SampledFunction| bmo_l(h, &op, &cfg.family(), &cfg.quadrature).unwrap().value;
        let bf = est(&f);
        let scaled = est(&f.map(|v| c * v));
        prop_assert!((scaled - c.abs() * bf).abs() <= 1e-12 * (1.0 + bf));
        let sum = SampledFunction::new(grid.clone(), f.values.iter().zip(&g.values).map(|(a, b)| a + b).collect()).unwrap();
        prop_assert!(est(&sum) <= bf + est(&g) + 1e-12);
    }

    #[test]
    fn larger_family_never_lowers_the_estimate(tag in op_tag().prop_filter("full line", |t| t.region() == Region::Full), seed in 0..1000u64) {
        let cfg = small_cfg();
        let grid = cfg.grid().unwrap();
        let op = OperatorKind::new(tag, 1).unwrap();
        let f = steps(seed, &grid);
        let small = CubeFamily::dyadic(0, 2, vec![-0.5], vec![0.5]);
        let large = CubeFamily::dyadic(0, 3, vec![-1.0], vec![1.0]);
        let a = bmo_l(&f, &op, &small, &cfg.quadrature).unwrap().value;
        let b = bmo_l(&f, &op, &large, &cfg.quadrature).unwrap().value;
        prop_assert!(b >= a);
    }

    #[test]
    fn frac_power_is_dominated_by_the_riesz_potential(
        tag in prop::sample::select(vec![OpTag::Delta, OpTag::DeltaDPlus, OpTag::DeltaNPlus, OpTag::DeltaD, OpTag::DeltaN, OpTag::DeltaDN]),
        center in 0.2..1.5f64,
        a in 0.2..0.8f64,
    ) {
        let op = OperatorKind::new(tag, 1).unwrap();
        let p = FracParams::new(a, 1).unwrap();
        let full = make_grid(DomainKind::full(1), &[-4.0], &[4.0], 1.0 / 64.0).unwrap();
        let spec = FunctionSpec::Cosine { freq: 7.0 };
        let bump = sample(&FunctionSpec::Bump { center, radius: 0.6 }, &full).unwrap();
        let wave = sample(&spec, &full).unwrap();
        let f_full = SampledFunction::new(full.clone(), bump.values.iter().zip(&wave.values).map(|(b, w)| b * w).collect()).unwrap();
        let f = restrict(&f_full, tag.region()).unwrap();
        let frac = apply_frac_power(&op, &p, &f).unwrap();
        let abs = match tag.region() {
            Region::Full => f.map(f64::abs),
            _ => zero_extension(&f.map(f64::abs)).unwrap(),
        };
        let riesz = riesz_potential(&abs, &p).unwrap();
        for k in 0..frac.grid.len() {
            let x = frac.grid.coords(k);
            let bound = 2.0 / p.gamma() * riesz.at(&x).unwrap();
            prop_assert!(frac.values[k].abs() <= bound + 1e-12, "{x:?}: {} > {bound}", frac.values[k]);
        }
    }

    #[test]
    fn frac_power_commutes_with_the_semigroup(
        tag in prop::sample::select(vec![OpTag::Delta, OpTag::DeltaDPlus, OpTag::DeltaNPlus]),
        s in 0.02..0.3f64,
        a in 0.3..0.7f64,
    ) {
        let op = OperatorKind::new(tag, 1).unwrap();
        let p = FracParams::new(a, 1).unwrap();
        let q = QuadratureConfig::default();
        let grid = restrict(&SampledFunction::zeros(make_grid(DomainKind::full(1), &[-16.0], &[16.0], 1.0 / 64.0).unwrap()), tag.region()).unwrap().grid;
        let f = sample(&FunctionSpec::Bump { center: 1.0, radius: 0.75 }, &grid).unwrap();
        let one = apply_semigroup(&op, s, &apply_frac_power(&op, &p, &f).unwrap(), &q).unwrap();
        let heat = apply_semigroup(&op, s, &f, &q).unwrap();
        let two = apply_frac_power(&op, &p, &heat).unwrap();
        let mut worst: f64 = 0.0;
        for k in 0..one.grid.len() {
            let x = one.grid.coords(k);
            if x[0].abs() <= 3.0 {
                worst = worst.max((one.values[k] - two.at(&x).unwrap()).abs());
            }
        }
        prop_assert!(worst <= 1e-4, "gap {worst}");
    }

    #[test]
    fn imaginary_powers_are_unitary_and_compose(tag in op_tag(), s1 in -30.0..30.0f64, s2 in -30.0..30.0f64, seed in 0..100u64) {
        let op = OperatorKind::new(tag, 1).unwrap();
        let full = make_grid(DomainKind::full(1), &[-2.0], &[2.0], 1.0 / 32.0).unwrap();
        let grid = restrict(&SampledFunction::zeros(full), tag.region()).unwrap().grid;
        let f = steps(seed, &grid);
        let plan = SpectralPlan::new(&op, &grid).unwrap();
        let field = plan.lift(&f).unwrap();
        let a = imaginary_power_field(&plan, s1, &field);
        prop_assert!((a.norm() - field.norm()).abs() <= 1e-10 * field.norm());
        let ab = imaginary_power_field(&plan, s2, &a);
        let direct = imaginary_power_field(&plan, s1 + s2, &field);
        prop_assert!(ab.distance(&direct) <= 1e-9 * field.norm());
        let back = imaginary_power_field(&plan, -s1, &a);
        prop_assert!(back.distance(&field) <= 1e-10 * field.norm());
    }

    #[test]
    fn opposite_imaginary_powers_have_equal_seminorms(s in 0.5..16.0f64, seed in 0..100u64) {
        let cfg = small_cfg();
        let grid = cfg.grid().unwrap();
        let op = OperatorKind::new(OpTag::Delta, 1).unwrap();
        let f = steps(seed, &grid);
        let est = |s: f64| {
            let u = imaginary_power(&op, s, &f).unwrap();
            bmo_l_complex(&u.re, &u.im, &op, &cfg.family(), &cfg.quadrature).unwrap().value
        };
        let (a, b) = (est(s), est(-s));
        prop_assert!((a - b).abs() <= 1e-10, "{a} vs {b}");
    }

    #[test]
    fn half_line_realizations_keep_the_boundary_condition(s in -4.0..4.0f64) {
        let quotient = |h: f64| {
            let g = make_grid(DomainKind::upper(1), &[0.0], &[4.0], h).unwrap();
            let f = sample(&FunctionSpec::Bump { center: 0.0, radius: 1.0 }, &g).unwrap();
            let u = imaginary_power(&OperatorKind::new(OpTag::DeltaNPlus, 1).unwrap(), s, &f).unwrap();
            let d = |v: &SampledFunction| (v.values[1] - v.values[0]) / h;
            (d(&u.re).powi(2) + d(&u.im).powi(2)).sqrt()
        };
        // an even realization has a one-sided quotient of order h at the wall
        prop_assert!(quotient(1.0 / 128.0) <= 0.6 * quotient(1.0 / 64.0) + 1e-9);

        let g = make_grid(DomainKind::upper(1), &[0.0], &[4.0], 1.0 / 64.0).unwrap();
        let f = sample(&FunctionSpec::Bump { center: 1.0, radius: 0.9 }, &g).unwrap();
        let u = imaginary_power(&OperatorKind::new(OpTag::DeltaDPlus, 1).unwrap(), s, &f).unwrap();
        prop_assert!(u.re.values[0].abs() <= 1e-14 && u.im.values[0].abs() <= 1e-14);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn narrow_log_gaussians_approach_the_imaginary_power(s0 in -3.0..3.0f64) {
        let op = OperatorKind::new(OpTag::DeltaDPlus, 1).unwrap();
        let g = make_grid(DomainKind::upper(1), &[0.0], &[4.0], 1.0 / 32.0).unwrap();
        let f = sample(&FunctionSpec::Bump { center: 1.0, radius: 0.9 }, &g).unwrap();
        let target = imaginary_power(&op, s0, &f).unwrap();
        let gap = |width: f64| {
            let spec = MultiplierSpec::LogGaussianImag { center: s0, width };
            let out = mellin_synthesis(&spec, 1.0, &op, &f, &MellinGrid::default()).unwrap();
            out.re.values.iter().zip(&target.re.values).chain(out.im.values.iter().zip(&target.im.values))
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        };
        let gaps = [0.4, 0.2, 0.1].map(gap);
        prop_assert!(gaps[1] < gaps[0] && gaps[2] < gaps[1], "{gaps:?}");
    }
}
