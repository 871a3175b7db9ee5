use proptest::prelude::*;

use fim_core::envelope::{g_grid, ConvexEnvelope, EnvelopeView, GridOptions};
use fim_core::hedge::{build_hedge, portfolio_value, HedgeOptions};
use fim_core::lawdensity::{couple, DiscreteMartingaleLaw};
use fim_core::models::{read_binary, simulate, write_binary, ModelSpec};
use fim_core::payoff::{default_probe, validate_pair, GamePayoffPair, PayoffFn};
use fim_core::semistatic::{dual_price, random_tree, robust_price, PathClaim, StaticInstrument};
use fim_core::stopvalue::{solve_g_lattice, LatticeSpec};

fn tol(x: f64) -> f64 {
    1e-9 * (1.0 + x.abs())
}

/// Convex call or put pairs that pass validation.
fn convex_pair() -> impl Strategy<Value = GamePayoffPair<f64>> {
    (any::<bool>(), 50.0..150.0f64, 0.5..3.0f64, 0.0..40.0f64).prop_filter_map("invalid pair", |(call, k, c, delta)| {
        let f1 = if call { PayoffFn::call(k, 1.0, 0.0) } else { PayoffFn::put(k, 1.0, 0.0) }.ok()?;
        let f2 = if call { PayoffFn::call(k, c, delta) } else { PayoffFn::put(k, c, delta) }.ok()?;
        let pair = GamePayoffPair::new(f1, f2, 2.0 * c).ok()?;
        let report = validate_pair(&pair, &default_probe(&pair, k)).ok()?;
        report.pass.then_some(pair)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn envelope_lies_between_the_payoffs(pair in convex_pair(), x in 1.0..400.0f64) {
        let env = ConvexEnvelope::new(&pair).unwrap();
        let g = env.value(x).unwrap();
        prop_assert!(g >= pair.f1.value(x) - tol(g));
        prop_assert!(g <= pair.f2.value(x) + tol(g));
    }

    #[test]
    fn envelope_grows_with_the_cancellation_penalty(k in 60.0..140.0f64, d1 in 0.0..30.0f64, extra in 0.0..30.0f64, x in 5.0..300.0f64) {
        let pair = |d: f64| {
            GamePayoffPair::new(PayoffFn::put(k, 1.0, 0.0).unwrap(), PayoffFn::put(k, 1.0, d).unwrap(), 2.0).unwrap()
        };
        let lo = ConvexEnvelope::new(&pair(d1)).unwrap().value(x).unwrap();
        let hi = ConvexEnvelope::new(&pair(d1 + extra)).unwrap().value(x).unwrap();
        prop_assert!(hi >= lo - tol(hi));
    }

    #[test]
    fn hedge_dominates_the_payoffs_on_its_interval(pair in convex_pair(), s0 in 20.0..300.0f64, u in 0.0..1.0f64) {
        let env = ConvexEnvelope::new(&pair).unwrap();
        let opts = HedgeOptions { allow_override: true, rate_is_zero: true };
        let hedge = build_hedge(&env, &pair, s0, opts).unwrap();
        let k = hedge.exit_interval;
        prop_assume!(!k.is_empty());
        let hi = if k.hi.is_finite() { k.hi } else { 10.0 * s0 };
        let lo = if k.lo.is_finite() { k.lo } else { 0.0 };
        let s = lo + u * (hi - lo);
        let z = portfolio_value(&hedge, s, 1.0);
        prop_assert!(z >= pair.f1.value(s) - 1e-7 * (1.0 + z.abs()));
        for edge in [k.lo, k.hi] {
            if edge.is_finite() && edge > 0.0 {
                let z = portfolio_value(&hedge, edge, 1.0);
                prop_assert!(z >= pair.f2.value(edge) - 1e-7 * (1.0 + z.abs()));
            }
        }
    }

    #[test]
    fn single_precision_envelope_tracks_double(k in 60.0..140.0f64, delta in 1.0..30.0f64, x in 20.0..300.0f64) {
        let wide = GamePayoffPair::new(PayoffFn::call(k, 1.0, 0.0).unwrap(), PayoffFn::call(k, 1.0, delta).unwrap(), 2.0).unwrap();
        let narrow = GamePayoffPair::new(
            PayoffFn::call(k as f32, 1.0, 0.0).unwrap(),
            PayoffFn::call(k as f32, 1.0, delta as f32).unwrap(),
            2.0f32,
        ).unwrap();
        let a = ConvexEnvelope::new(&wide).unwrap().value(x).unwrap();
        let b = ConvexEnvelope::new(&narrow).unwrap().value(x as f32).unwrap() as f64;
        prop_assert!((a - b).abs() <= 1e-4 * (1.0 + a.abs()));
    }

    #[test]
    fn coupled_chain_stays_on_the_support(sigma in 0.05..0.6f64, n in 1usize..6, z in prop::collection::vec(-3.0..3.0f64, 6)) {
        let law = DiscreteMartingaleLaw::binomial_gbm(100.0, sigma, 1.0, n);
        let m = couple(&law, &z[..n]).unwrap();
        let pmf = law.path_pmf().unwrap();
        prop_assert!(pmf.iter().any(|(path, q)| *q > 0.0 && path.iter().zip(&m).all(|(a, b)| (a - b).abs() < 1e-9)));
    }

    #[test]
    fn binomial_law_is_a_martingale(sigma in 0.05..0.6f64, n in 1usize..7) {
        let law = DiscreteMartingaleLaw::binomial_gbm(100.0, sigma, 1.0, n);
        let pmf = law.path_pmf().unwrap();
        let total: f64 = pmf.iter().map(|(_, q)| q).sum();
        let mean: f64 = pmf.iter().map(|(p, q)| q * p[n]).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!((mean - 100.0).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn grid_envelope_matches_closed_form(pair in convex_pair(), s0 in 40.0..200.0f64) {
        let closed = ConvexEnvelope::new(&pair).unwrap().value(s0).unwrap();
        let grid = g_grid(&pair, &GridOptions::around(&pair, s0)).unwrap().value(s0).unwrap();
        prop_assert!((grid - closed).abs() <= 2e-3 * (1.0 + closed.abs()), "{grid} vs {closed}");
    }

    #[test]
    fn robust_price_has_no_duality_gap(seed in 0u64..10_000, depth in 1usize..4, strike in 80.0..120.0f64, with_static in any::<bool>()) {
        let tree = random_tree(seed, depth, 3);
        let statics = if with_static {
            let call = PathClaim::Terminal { payoff: PayoffFn::call(100.0, 1.0, 0.0).unwrap() };
            let free = dual_price(&tree, &call, &[]).unwrap().dual_value.unwrap();
            vec![StaticInstrument { payoff: call, price: 0.5 * free }]
        } else {
            vec![]
        };
        let report = robust_price(&tree, &PathClaim::MaxCall { strike }, &statics).unwrap();
        if let (Some(d), Some(p)) = (report.dual_value, report.primal_value) {
            prop_assert!((d - p).abs() <= 1e-8 * (1.0 + d.abs()), "{d} vs {p}");
        }
    }

    #[test]
    fn simulation_is_reproducible_and_survives_the_binary_format(seed in any::<u64>(), n_paths in 1usize..6, n_steps in 1usize..20) {
        let spec = ModelSpec::heston_default(100.0, 0.02);
        let a = simulate(&spec, n_steps, n_paths, seed).unwrap();
        let b = simulate(&spec, n_steps, n_paths, seed).unwrap();
        prop_assert_eq!(&a, &b);
        let mut bytes = Vec::new();
        write_binary(&a, &mut bytes).unwrap();
        let back = read_binary(bytes.as_slice()).unwrap();
        prop_assert_eq!(back.s, a.s);
        prop_assert_eq!(back.b, a.b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn lattice_value_lies_between_the_payoffs(pair in convex_pair(), v_hi in 0.2..1.5f64) {
        let spec = LatticeSpec::new(1.0, 3000.0, 200, 0.5, 1e-3, v_hi).unwrap();
        let surface = solve_g_lattice(&pair, &spec).unwrap();
        for (x, v) in surface.xs.iter().zip(&surface.values[0]) {
            prop_assert!(*v >= pair.f1.value(*x) - 1e-9 * (1.0 + v));
            prop_assert!(*v <= pair.f2.value(*x) + 1e-9 * (1.0 + v));
        }
        for x in [20.0, 60.0, 100.0, 150.0, 400.0] {
            let v = surface.value_at(x).unwrap();
            prop_assert!(v >= pair.f1.value(x) - 1e-9 * (1.0 + v), "{v} below f1 at {x}");
        }
    }
}

#[test]
fn lattice_interpolation_stays_above_a_steep_put() {
    let k = 104.31416253695103;
    let pair = GamePayoffPair::new(
        PayoffFn::put(k, 1.0, 0.0).unwrap(),
        PayoffFn::put(k, 1.7107062920033493, 0.0).unwrap(),
        3.4214125840066987,
    )
    .unwrap();
    let spec = LatticeSpec::new(1.0, 3000.0, 200, 0.5, 1e-3, 0.2).unwrap();
    let surface = solve_g_lattice(&pair, &spec).unwrap();
    for x in [20.0, 60.0, 100.0, 150.0, 400.0] {
        let v = surface.value_at(x).unwrap();
        assert!(v >= pair.f1.value(x) - 1e-9 * (1.0 + v), "{v} below f1 at {x}");
    }
}
