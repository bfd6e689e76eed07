//! Property tests for transform, kernel, equation and configuration invariants.

use std::f64::consts::PI;

use cvwaves::bounds::amplitude_bound;
use cvwaves::config::RunConfig;
use cvwaves::kernel::{beta_bilateral, beta_certified, KernelConfig};
use cvwaves::spectral::GridSpec;
use cvwaves::{identity_add_check, residual_system, PeriodicField, PhysicalParams, SolutionPoint};
use proptest::prelude::*;

const MODES: usize = 16;

fn coeffs(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, len)
}

fn field() -> impl Strategy<Value = PeriodicField> {
    (coeffs(MODES + 1), coeffs(MODES)).prop_map(|(c, s)| PeriodicField::from_coeffs(c, &s).unwrap())
}

fn zero_mean_field() -> impl Strategy<Value = PeriodicField> {
    field().prop_map(|f| f.add_constant(-f.mean()))
}

fn even_field() -> impl Strategy<Value = PeriodicField> {
    coeffs(MODES + 1).prop_map(PeriodicField::even)
}

fn grid(depth: f64) -> GridSpec {
    GridSpec::with_default_nodes(MODES, depth).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn analyze_inverts_synthesize(f in field()) {
        let g = grid(1.0);
        let back = g.analyze(&g.synthesize(&f).unwrap()).unwrap();
        prop_assert!(back.axpy(-1.0, &f).max_abs_coeff() < 1e-13);
    }

    #[test]
    fn nodal_values_match_pointwise_evaluation(f in field()) {
        let g = grid(1.0);
        let vals = g.synthesize(&f).unwrap();
        for (j, v) in vals.iter().enumerate().step_by(7) {
            prop_assert!((v - f.eval(g.node(j))).abs() < 1e-12);
        }
    }

    #[test]
    fn hilbert_is_linear_and_flips_parity(
        a in zero_mean_field(),
        b in zero_mean_field(),
        c in -3.0..3.0f64,
        d in 0.1..20.0f64,
    ) {
        let g = grid(d);
        let lhs = g.strip_hilbert(&a.axpy(c, &b)).unwrap();
        let rhs = g.strip_hilbert(&a).unwrap().axpy(c, &g.strip_hilbert(&b).unwrap());
        prop_assert!(lhs.axpy(-1.0, &rhs).max_abs_coeff() < 1e-12);
        let even = a.project(cvwaves::Parity::Even).add_constant(-a.mean());
        let h = g.strip_hilbert(&even).unwrap();
        prop_assert!(h.cos_coeffs().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn hilbert_of_cosine_is_scaled_sine(n in 1usize..=MODES, d in 0.05..30.0f64) {
        let g = grid(d);
        let mut c = vec![0.0; MODES + 1];
        c[n] = 1.0;
        let h = g.strip_hilbert(&PeriodicField::even(c)).unwrap();
        let expect = 1.0 / (n as f64 * d).tanh();
        prop_assert!((h.sin_coeff(n) - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn product_matches_convolution(a in even_field(), b in even_field()) {
        let g = grid(1.0);
        let p = g.exact_product(&a, &b).unwrap();
        for x in [0.0, 0.4, 1.3, 2.9] {
            let direct = a.eval(x) * b.eval(x);
            prop_assert!((p.eval(x) - direct).abs() < 1e-11);
        }
    }

    #[test]
    fn derivative_of_antiderivative(f in zero_mean_field()) {
        prop_assert!(f.antiderivative().derivative().axpy(-1.0, &f).max_abs_coeff() < 1e-13);
    }

    #[test]
    fn commutator_j_is_nonnegative(f in even_field(), d in 0.2..5.0f64) {
        let g = grid(d);
        let j = g.op_j(&f).unwrap();
        let fine = GridSpec::with_default_nodes(2 * MODES, d).unwrap();
        let vals = fine.synthesize(&j).unwrap();
        let scale = 1.0_f64.max(f.max_abs_coeff()).powi(2);
        prop_assert!(vals.iter().all(|v| *v >= -1e-11 * scale));
    }

    #[test]
    fn kernel_is_odd_periodic_and_cross_validated(s in 0.05..3.1f64, d in 0.1..50.0f64) {
        let cfg = KernelConfig::new(d);
        let v = beta_certified(s, &cfg).unwrap().value;
        let neg = beta_certified(-s, &cfg).unwrap().value;
        let shifted = beta_certified(s + 2.0 * PI, &cfg).unwrap().value;
        let alt = beta_bilateral(s, &cfg).unwrap().value;
        let tol = 1e-9 * v.abs().max(1.0);
        prop_assert!((v + neg).abs() <= tol);
        prop_assert!((v - shifted).abs() <= tol);
        prop_assert!((v - alt).abs() <= tol);
        prop_assert!(v > 0.0);
    }

    #[test]
    fn laminar_states_solve_the_system(
        g in 1.0..20.0f64,
        k in 0.3..3.0f64,
        h in 0.3..3.0f64,
        ups in -5.0..5.0f64,
        m in -10.0..10.0f64,
    ) {
        let p = PhysicalParams::new(g, k, h, ups).unwrap();
        let pt = SolutionPoint::trivial(p, m, MODES);
        let gr = GridSpec::with_default_nodes(MODES, p.depth()).unwrap();
        let (field, scalar) = residual_system(&pt, &gr).unwrap();
        let scale = 1.0 + pt.q.abs() + m * m;
        prop_assert!(field.max_abs_coeff() < 1e-12 * scale);
        prop_assert!(scalar.abs() < 1e-12 * scale);
        prop_assert!(identity_add_check(&pt, &gr).unwrap() < 1e-10 * scale * scale);
    }

    #[test]
    fn bound_decreases_with_vorticity(u in 0.5..40.0f64, du in 0.05..10.0f64, h in 0.2..3.0f64) {
        let p = PhysicalParams::new(9.81, 1.0, h, u).unwrap();
        let kc = KernelConfig::new(p.depth());
        let a = amplitude_bound(&p, &kc).unwrap();
        let b = amplitude_bound(&p.with_upsilon(u + du), &kc).unwrap();
        prop_assert!(b.bound < a.bound);
        prop_assert!(a.bound <= a.universal_cap);
        prop_assert!(a.chain_ok());
    }

    #[test]
    fn config_echo_round_trips(
        ups in -10.0..10.0f64,
        modes in 8usize..200,
        tol in 1e-12..1e-9f64,
        workers in 0usize..8,
        halt in any::<bool>(),
    ) {
        let text = format!(
            "policy = \"{}\"\n[physics]\nupsilon = {ups:?}\n[grid]\nmodes = {modes}\n[continuation]\nnewton_tol = {tol:?}\n[sweep]\nworkers = {workers}\n",
            if halt { "halt" } else { "warn" }
        );
        let c = RunConfig::from_toml(&text).unwrap();
        let echo = c.to_toml();
        let back = RunConfig::from_toml(&echo).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(back.to_toml(), echo);
        prop_assert_eq!(c.physics.upsilon, ups);
        prop_assert_eq!(c.continuation.newton_tol, tol);
    }
}
