use lvcoex::functions::GrowthFunction;
use lvcoex::grid::Grid;
use lvcoex::linalg::dot;
use lvcoex::logistic::{solve_logistic, LogisticProblem};
use lvcoex::spectral::principal_eigenpair;
use proptest::prelude::*;

fn field(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0..5.0f64, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn laplacian_is_linear(u in field(48), v in field(48), a in -3.0..3.0f64, b in -3.0..3.0f64) {
        let g = Grid::rectangle(2.0, 1.0, 8, 6).unwrap();
        let combo: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
        let lhs = g.laplacian_values(&combo);
        let (lu, lv) = (g.laplacian_values(&u), g.laplacian_values(&v));
        let scale = lhs.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        for k in 0..48 {
            prop_assert!((lhs[k] - (a * lu[k] + b * lv[k])).abs() <= 1e-13 * scale);
        }
    }

    #[test]
    fn laplacian_is_symmetric(u in field(40), v in field(40)) {
        let g = Grid::interval(1.5, 40).unwrap();
        let a = dot(&g.laplacian_values(&u), &v);
        let b = dot(&u, &g.laplacian_values(&v));
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn eigenvalue_is_monotone_in_potential(q in prop::collection::vec(0.0..4.0f64, 30), bump in prop::collection::vec(0.0..2.0f64, 30)) {
        let g = Grid::interval(1.0, 30).unwrap();
        let q1 = g.field(q.clone()).unwrap();
        let q2 = g.field(q.iter().zip(&bump).map(|(a, b)| a + b).collect()).unwrap();
        let l1 = principal_eigenpair(&g, &q1).unwrap().lambda;
        let l2 = principal_eigenpair(&g, &q2).unwrap().lambda;
        prop_assert!(l1 <= l2 + 1e-10);
    }

    #[test]
    fn logistic_is_monotone_in_reaction(a in 10.5..16.0f64, gap in 0.0..4.0f64) {
        let g = Grid::interval(1.0, 40).unwrap();
        let lo = GrowthFunction::affine(a, 1.0, 40.0).unwrap();
        let hi = GrowthFunction::affine(a + gap, 1.0, 40.0).unwrap();
        let t_lo = solve_logistic(&LogisticProblem::for_growth(&g, &lo), 1e-10).unwrap().theta;
        let t_hi = solve_logistic(&LogisticProblem::for_growth(&g, &hi), 1e-10).unwrap().theta;
        for (x, y) in t_lo.values().iter().zip(t_hi.values()) {
            prop_assert!(*x <= y + 1e-8);
        }
    }
}
