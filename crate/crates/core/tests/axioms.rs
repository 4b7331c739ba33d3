use ndarray::Array2;
use proptest::prelude::*;

use aumann::attribution::{attribute, attribute_analytic, BaselineSpec, Method};
use aumann::ValueFunction;

const FOUR: [ValueFunction; 4] = [ValueFunction::Lin, ValueFunction::Heat, ValueFunction::Var, ValueFunction::Gini];

fn matrix() -> impl Strategy<Value = Array2<f64>> {
    (3usize..15, 1usize..4).prop_flat_map(|(n, d)| {
        prop::collection::vec(0.05f64..5.0, n * d).prop_map(move |v| Array2::from_shape_vec((n, d), v).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn efficiency(z in matrix()) {
        for f in &FOUR {
            let r = attribute_analytic(f, z.view(), &BaselineSpec::Zero).unwrap();
            prop_assert!(r.efficiency_residual() <= 1e-9 * r.delta_v.abs().max(1.0), "{}", f.name());
        }
    }

    #[test]
    fn duplicated_agents_get_equal_credit(z in matrix()) {
        let mut z = z;
        let first = z.row(0).to_owned();
        z.row_mut(1).assign(&first);
        for f in &FOUR {
            let phi = attribute_analytic(f, z.view(), &BaselineSpec::Zero).unwrap().phi;
            prop_assert!((phi[0] - phi[1]).abs() <= 1e-12, "{}", f.name());
        }
    }

    #[test]
    fn agents_at_the_baseline_get_nothing(z in matrix()) {
        let mut z = z;
        z.row_mut(2).fill(0.0);
        for f in &FOUR {
            let phi = attribute_analytic(f, z.view(), &BaselineSpec::Zero).unwrap().phi;
            prop_assert!(phi[2].abs() <= 1e-12, "{}", f.name());
        }
    }

    #[test]
    fn quadrature_agrees_with_closed_forms(z in matrix()) {
        for f in &FOUR {
            let a = attribute_analytic(f, z.view(), &BaselineSpec::Zero).unwrap().phi;
            let m = attribute(f, z.view(), &BaselineSpec::Zero, Method::Midpoint { k: 300 }).unwrap().phi;
            for (x, y) in a.iter().zip(&m) {
                prop_assert!((x - y).abs() <= 1e-5 * (1.0 + x.abs()), "{}: {x} vs {y}", f.name());
            }
        }
    }

    #[test]
    fn lin_is_row_sum_over_n(z in matrix()) {
        let n = z.nrows() as f64;
        let phi = attribute(&ValueFunction::Lin, z.view(), &BaselineSpec::Zero, Method::Midpoint { k: 7 }).unwrap().phi;
        for (i, p) in phi.iter().enumerate() {
            prop_assert!((p - z.row(i).sum() / n).abs() <= 1e-12);
        }
    }
}
