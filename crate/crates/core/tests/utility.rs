use mspro::utility::{
    kantorovich_exact, kantorovich_lp, kantorovich_lp_dual, kolmogorov, l1_sampled, project, sup_norm_sampled,
    ClosedFormUtility, Grid, PiecewiseLinearUtility, UtilityFunction,
};
use proptest::prelude::*;

/// Nondecreasing normalized values on a random grid of `n` points.
fn pl_utility(n: std::ops::Range<usize>) -> impl Strategy<Value = PiecewiseLinearUtility> {
    n.prop_flat_map(|n| {
        (prop::collection::vec(0.01f64..1.0, n - 1), prop::collection::vec(0.0f64..1.0, n - 1))
    })
    .prop_map(|(gaps, incs)| {
        let gsum: f64 = gaps.iter().sum();
        let isum: f64 = incs.iter().sum::<f64>().max(1e-12);
        let mut y = vec![0.0];
        let mut v = vec![0.0];
        for k in 0..gaps.len() {
            y.push(y[k] + gaps[k] / gsum);
            v.push(v[k] + incs[k] / isum);
        }
        *y.last_mut().unwrap() = 1.0;
        *v.last_mut().unwrap() = 1.0;
        PiecewiseLinearUtility::new(Grid::new(y).unwrap(), v).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn lp_distance_bounds_the_exact_one(u in pl_utility(2..9), v in pl_utility(2..9)) {
        let lp = kantorovich_lp(&u, &v).unwrap();
        let exact = kantorovich_exact(&u, &v).unwrap();
        prop_assert!(lp >= exact - 1e-8, "{lp} < {exact}");
        let dual = kantorovich_lp_dual(&u, &v).unwrap();
        prop_assert!((lp - dual).abs() <= 1e-8);
    }

    #[test]
    fn distances_are_symmetric_and_vanish_on_the_diagonal(u in pl_utility(2..9), v in pl_utility(2..9)) {
        prop_assert!(kantorovich_lp(&u, &u).unwrap().abs() <= 1e-12);
        let (e1, e2) = (kantorovich_exact(&u, &v).unwrap(), kantorovich_exact(&v, &u).unwrap());
        let (k1, k2) = (kolmogorov(&u, &v).unwrap(), kolmogorov(&v, &u).unwrap());
        prop_assert!((e1 - e2).abs() <= 1e-12 && e1 >= 0.0);
        prop_assert!((k1 - k2).abs() <= 1e-12 && k1 >= 0.0);
        prop_assert_eq!(kantorovich_exact(&u, &u).unwrap(), 0.0);
        prop_assert_eq!(kolmogorov(&u, &u).unwrap(), 0.0);
        // Zero only when the values agree on the merged grid.
        let g = u.grid().merge(v.grid());
        let same = u.on_grid(&g).unwrap().values().iter().zip(v.on_grid(&g).unwrap().values()).all(|(a, b)| (a - b).abs() <= 1e-12);
        prop_assert_eq!(k1 <= 1e-12, same);
    }

    #[test]
    fn exact_distance_matches_sampling(u in pl_utility(2..9), v in pl_utility(2..9)) {
        let exact = kantorovich_exact(&u, &v).unwrap();
        prop_assert!((exact - l1_sampled(&u, &v, 20_001)).abs() <= 1e-4);
    }

    #[test]
    fn projection_bounds(k in 0.2f64..6.0, n in 2usize..60) {
        let u = ClosedFormUtility::exponential(k).unwrap();
        let grid = Grid::uniform(0.0, 1.0, n).unwrap();
        let p = project(&u, &grid).unwrap();
        let l = u.lipschitz();
        let beta = grid.mesh();
        prop_assert!(sup_norm_sampled(&u, &p, 10_000) <= l * beta);
        prop_assert!(l1_sampled(&u, &p, 10_000) <= 2.0 * beta);
    }

    #[test]
    fn projection_is_idempotent(u in pl_utility(2..9), n in 2usize..12) {
        let grid = Grid::uniform(0.0, 1.0, n).unwrap();
        let once = u.on_grid(&grid).unwrap();
        let twice = once.on_grid(&grid).unwrap();
        prop_assert_eq!(once.values(), twice.values());
    }
}

/// exp(2) and the quadratic cross inside (0, 1), so the LP is not tight.
#[test]
fn refinement_shrinks_the_lp_gap() {
    let u = ClosedFormUtility::exponential(2.0).unwrap();
    let v = ClosedFormUtility::quadratic();
    let mut last = f64::INFINITY;
    for n in [5, 10, 20, 40] {
        let g = Grid::uniform(0.0, 1.0, n).unwrap();
        let (pu, pv) = (project(&u, &g).unwrap(), project(&v, &g).unwrap());
        let gap = kantorovich_lp(&pu, &pv).unwrap() - kantorovich_exact(&pu, &pv).unwrap();
        assert!(gap > 0.0 && gap <= last, "N = {n}: gap {gap} after {last}");
        last = gap;
    }
}

#[test]
fn lp_distance_of_projections_approaches_the_true_distance() {
    let pairs = [
        (ClosedFormUtility::exponential(3.0).unwrap(), ClosedFormUtility::quadratic()),
        (ClosedFormUtility::exponential(1.0).unwrap(), ClosedFormUtility::exponential(5.0).unwrap()),
        (ClosedFormUtility::quadratic(), ClosedFormUtility::linear()),
    ];
    for (u, v) in pairs {
        let truth = l1_sampled(&u, &v, 100_001);
        let mut last = f64::INFINITY;
        for n in [5, 10, 20, 40, 80] {
            let g = Grid::uniform(0.0, 1.0, n).unwrap();
            let err = (kantorovich_lp(&project(&u, &g).unwrap(), &project(&v, &g).unwrap()).unwrap() - truth).abs();
            assert!(err < last, "N = {n}: {err} after {last}");
            last = err;
        }
    }
}

#[test]
fn evaluation_clamps_outside_the_domain() {
    let u = ClosedFormUtility::exponential(3.0).unwrap();
    let p = project(&u, &Grid::uniform(0.0, 1.0, 5).unwrap()).unwrap();
    assert_eq!(p.value(-0.5), 0.0);
    assert_eq!(p.value(1.5), 1.0);
}
