use boxflow::dynamics::{FlowMap, VectorField};
use boxflow::markov;
use boxflow::matrix::StochasticMatrix;
use boxflow::partition::{sample_points, BoxPartition, Located, Rect, SamplePlan};
use boxflow::ulam::{self, UlamConfig};
use proptest::prelude::*;

/// Row-normalized irreducible matrix: random sparsity plus a self loop and a
/// link to the next state around a cycle.
fn stochastic() -> impl Strategy<Value = StochasticMatrix> {
    (2usize..12)
        .prop_flat_map(|n| (Just(n), prop::collection::vec(prop::collection::vec(0.0f64..1.0, n), n)))
        .prop_map(|(n, raw)| {
            let rows = raw
                .into_iter()
                .enumerate()
                .map(|(i, r)| {
                    let kept: Vec<(usize, f64)> =
                        r.into_iter().enumerate().filter(|(j, v)| *j == i || *j == (i + 1) % n || *v > 0.4).map(|(j, v)| (j, v + 0.05)).collect();
                    let total: f64 = kept.iter().map(|(_, v)| v).sum();
                    kept.into_iter().map(|(j, v)| (j, v / total)).collect()
                })
                .collect();
            StochasticMatrix::from_rows(n, rows).unwrap()
        })
}

fn gyre() -> impl Strategy<Value = (&'static str, f64)> {
    prop_oneof![Just(("single_gyre", 0.0)), (0.0f64..=1.0).prop_map(|p| ("double_gyre", p))]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reversibilized_chains_are_stochastic_and_balanced(p in stochastic()) {
        let pi = markov::stationary_mixture(&p, markov::STATIONARY_TOL, markov::STATIONARY_MAX_ITER).unwrap();
        prop_assert!((pi.pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let chain = markov::reversibilize(&p, &pi).unwrap();
        for s in chain.q.row_sums() {
            prop_assert!((s - 1.0).abs() < 1e-12);
        }
        prop_assert!(chain.detailed_balance_residual() <= 1e-12);
    }

    #[test]
    fn reversibilized_chains_are_self_adjoint(
        p in stochastic(),
        seed in prop::collection::vec(-1.0f64..1.0, 24),
    ) {
        let pi = markov::stationary_mixture(&p, markov::STATIONARY_TOL, markov::STATIONARY_MAX_ITER).unwrap();
        let chain = markov::reversibilize(&p, &pi).unwrap();
        let n = chain.n();
        let (x, y) = (&seed[..n], &seed[12..12 + n]);
        let lhs = markov::weighted_inner(&chain.q.mul_vec(x), y, &pi.pi).unwrap();
        let rhs = markov::weighted_inner(x, &chain.q.mul_vec(y), &pi.pi).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12);
    }

    #[test]
    fn locate_is_total(depth in 2u32..12, x in -3.0f64..3.0, y in -3.0f64..3.0) {
        let bp = BoxPartition::new(Rect::centered(1.5), depth).unwrap();
        match bp.locate([x, y]).unwrap() {
            Located::Box(b) => {
                prop_assert!(b < bp.n_boxes());
                prop_assert!(bp.box_rect(b).contains([x, y]));
            }
            Located::Sink => prop_assert!(!bp.domain.contains([x, y])),
        }
    }

    #[test]
    fn boxes_tile_the_domain(depth in 2u32..14, w in 0.1f64..10.0, h in 0.1f64..10.0) {
        let bp = BoxPartition::new(Rect::new(-w, w, 0.0, h), depth).unwrap();
        prop_assert_eq!(bp.n_boxes(), 1usize << depth);
        let total = bp.box_measure() * bp.n_boxes() as f64;
        prop_assert!((total - bp.domain.area()).abs() <= 1e-12 * bp.domain.area());
    }

    #[test]
    fn samples_stay_in_their_box(depth in 2u32..10, per_box in 1usize..40, seed in any::<u64>(), pick in any::<usize>()) {
        let bp = BoxPartition::new(Rect::unit(), depth).unwrap();
        let b = pick % bp.n_boxes();
        for plan in [SamplePlan::grid(per_box), SamplePlan::random(per_box, seed)] {
            let pts = sample_points(&bp, b, &plan);
            prop_assert_eq!(pts.len(), per_box);
            for pt in pts {
                prop_assert_eq!(bp.locate(pt).unwrap(), Located::Box(b));
            }
        }
    }

    #[test]
    fn fields_are_divergence_free(
        (field, p) in prop_oneof![gyre(), (-1.0f64..=1.0).prop_map(|p| ("duffing", p))],
        x in 0.0f64..1.0,
        y in 0.0f64..1.0,
    ) {
        let v = VectorField::from_id(field, p).unwrap();
        prop_assert!(v.divergence([x, y], 1e-5).abs() < 1e-6);
    }

    #[test]
    fn stream_function_is_conserved((field, p) in gyre(), x in 0.05f64..0.95, y in 0.05f64..0.95) {
        let flow = FlowMap::new(VectorField::from_id(field, p).unwrap(), 1.0, 0.01).unwrap();
        let end = flow.integrate([x, y]).unwrap();
        let psi = |z| flow.field.stream_function(z).unwrap();
        prop_assert!((psi(end) - psi([x, y])).abs() < 1e-3);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn rk4_error_drops_at_fourth_order((field, p) in gyre(), x in 0.1f64..0.9, y in 0.1f64..0.9) {
        let flow = |h| FlowMap::new(VectorField::from_id(field, p).unwrap(), 1.0, h).unwrap();
        let reference = flow(2.5e-4).integrate([x, y]).unwrap();
        let err = |h| {
            let e = flow(h).integrate([x, y]).unwrap();
            (e[0] - reference[0]).hypot(e[1] - reference[1])
        };
        // Below h = 0.005 the fastest double gyre is in the asymptotic regime.
        let (coarse, fine) = (err(0.005), err(0.0025));
        // Points on a stagnation set barely move and carry no measurable error.
        prop_assume!(coarse > 1e-11);
        prop_assert!(coarse / fine >= 12.0, "factor {}", coarse / fine);
    }

    #[test]
    fn ulam_rows_are_stochastic(p in -1.0f64..=1.0, depth in 2u32..7) {
        let flow = FlowMap::new(VectorField::from_id("duffing", p).unwrap(), 1.0, 0.01).unwrap();
        let bp = BoxPartition::new(Rect::centered(1.4), depth).unwrap();
        let (m, _) = ulam::build_ulam(&UlamConfig::new(flow, bp, SamplePlan::grid(9))).unwrap();
        for s in m.row_sums() {
            prop_assert!((s - 1.0).abs() < 1e-12);
        }
    }
}
