mod common;

use std::sync::Arc;

use flexbal::{
    effective_sample_size, imbalance, weighted_estimate, weighted_mean, BalanceProblem, Matrix, SimplexWeights,
};
use proptest::prelude::*;

fn unit_problem(y: Vec<f64>, target: Vec<f64>) -> BalanceProblem {
    let x = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
    BalanceProblem::new(x, y, Arc::from(target), 1.0, 0.1, 0.05).unwrap()
}

#[test]
fn weighted_mean_examples() {
    let p = unit_problem(vec![0.0, 0.0], vec![0.0, 0.0]);
    assert_eq!(weighted_mean(&p, &SimplexWeights::uniform(2)).unwrap(), vec![0.5, 0.5]);
    assert_eq!(weighted_mean(&p, &SimplexWeights::point_mass(2, 1)).unwrap(), vec![0.0, 1.0]);
}

#[test]
fn imbalance_examples() {
    let p = unit_problem(vec![0.0, 0.0], vec![0.5, 0.5]);
    assert_eq!(imbalance(&p, &SimplexWeights::uniform(2)).unwrap().max_abs, 0.0);
    let x = Matrix::from_rows(&[vec![2.0], vec![2.0]]);
    let p = BalanceProblem::new(x, vec![0.0; 2], Arc::from(vec![0.5]), 1.0, 0.1, 0.05).unwrap();
    assert_eq!(imbalance(&p, &SimplexWeights::uniform(2)).unwrap().max_abs, 1.5);
}

#[test]
fn estimate_and_ess_examples() {
    let p = unit_problem(vec![3.0, 3.0], vec![0.0, 0.0]);
    let w = SimplexWeights::new(vec![0.2, 0.8]).unwrap();
    assert!((weighted_estimate(&p, &w).unwrap() - 3.0).abs() < 1e-15);
    let p = unit_problem(vec![0.0, 2.0], vec![0.0, 0.0]);
    assert_eq!(weighted_estimate(&p, &SimplexWeights::uniform(2)).unwrap(), 1.0);
    assert!((effective_sample_size(&SimplexWeights::uniform(7)) - 7.0).abs() < 1e-12);
    assert_eq!(effective_sample_size(&SimplexWeights::point_mass(5, 3)), 1.0);
    let w = SimplexWeights::new(vec![0.5, 0.5, 0.0]).unwrap();
    assert!((effective_sample_size(&w) - 2.0).abs() < 1e-12);
}

#[test]
fn construction_rejects_invalid_inputs() {
    let x = Matrix::from_rows(&[vec![1.0], vec![2.0]]);
    let t: Arc<[f64]> = Arc::from(vec![1.0]);
    assert!(BalanceProblem::new(x.clone(), vec![0.0], t.clone(), 1.0, 0.1, 0.05).is_err());
    assert!(BalanceProblem::new(x.clone(), vec![0.0, f64::NAN], t.clone(), 1.0, 0.1, 0.05).is_err());
    assert!(BalanceProblem::new(x.clone(), vec![0.0; 2], t.clone(), 0.0, 0.1, 0.05).is_err());
    assert!(BalanceProblem::new(x.clone(), vec![0.0; 2], t.clone(), 1.0, -0.1, 0.05).is_err());
    assert!(BalanceProblem::new(x, vec![0.0; 2], Arc::from(vec![1.0, 2.0]), 1.0, 0.1, 0.05).is_err());
    assert!(SimplexWeights::new(vec![0.6, 0.6]).is_err());
    assert!(SimplexWeights::new(vec![1.2, -0.2]).is_err());
}

fn instance() -> impl Strategy<Value = (BalanceProblem, Vec<f64>, Vec<f64>, f64)> {
    (1usize..8, 1usize..5).prop_flat_map(|(n, d)| {
        (
            proptest::collection::vec(-2.0f64..2.0, n * d),
            proptest::collection::vec(-2.0f64..2.0, n),
            proptest::collection::vec(-2.0f64..2.0, d),
            proptest::collection::vec(1e-6f64..1.0, n),
            proptest::collection::vec(1e-6f64..1.0, n),
            0.0f64..1.0,
        )
            .prop_map(move |(xs, y, t, a, b, s)| {
                let x = Matrix::from_row_major(n, d, xs);
                let p = BalanceProblem::new(x, y, Arc::from(t), 1.0, 0.1, 0.05).unwrap();
                let norm = |v: Vec<f64>| {
                    let sum: f64 = v.iter().sum();
                    v.into_iter().map(|e| e / sum).collect::<Vec<_>>()
                };
                (p, norm(a), norm(b), s)
            })
    })
}

proptest! {
    #[test]
    fn statistics_match_naive_loops((p, a, _b, _s) in instance()) {
        let w = SimplexWeights::new(a.clone()).unwrap();
        let mean = weighted_mean(&p, &w).unwrap();
        let mut worst = 0.0f64;
        for j in 0..p.d() {
            let mut acc = 0.0;
            for i in 0..p.n() {
                acc += a[i] * p.x().get(i, j);
            }
            prop_assert!((acc - mean[j]).abs() < 1e-12);
            worst = worst.max((acc - p.target()[j]).abs());
        }
        prop_assert!((imbalance(&p, &w).unwrap().max_abs - worst).abs() < 1e-12);
        let est: f64 = (0..p.n()).map(|i| a[i] * p.y()[i]).sum();
        prop_assert!((weighted_estimate(&p, &w).unwrap() - est).abs() < 1e-12);
    }

    #[test]
    fn uniform_weighted_mean_is_column_mean((p, _a, _b, _s) in instance()) {
        let mean = weighted_mean(&p, &SimplexWeights::uniform(p.n())).unwrap();
        for (m, c) in mean.iter().zip(p.x().column_means()) {
            prop_assert!((m - c).abs() <= 1e-12 * (1.0 + c.abs()));
        }
    }

    #[test]
    fn imbalance_is_convex((p, a, b, s) in instance()) {
        let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| s * x + (1.0 - s) * y).collect();
        let f = |v: &[f64]| imbalance(&p, &SimplexWeights::normalized(v.to_vec()).unwrap()).unwrap().max_abs;
        prop_assert!(f(&mix) <= s * f(&a) + (1.0 - s) * f(&b) + 1e-12);
    }

    #[test]
    fn ess_is_between_one_and_n((_p, a, _b, _s) in instance()) {
        let n = a.len() as f64;
        let ess = effective_sample_size(&SimplexWeights::new(a).unwrap());
        prop_assert!((1.0 - 1e-12..=n + 1e-9).contains(&ess));
    }
}
