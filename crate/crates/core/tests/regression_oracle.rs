use matid_core::regression::{bic_value, fit, refit_extend};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

/// Solves the normal equations directly: an independent least-squares oracle.
fn normal_equations(y: &[f64], cols: &[Vec<f64>], intercept: bool) -> (Vec<f64>, f64) {
    let n = y.len();
    let k = cols.len() + usize::from(intercept);
    let x = DMatrix::from_fn(n, k, |i, j| {
        if intercept && j == 0 {
            1.0
        } else {
            cols[j - usize::from(intercept)][i]
        }
    });
    let yv = DVector::from_column_slice(y);
    let xtx = x.transpose() * &x;
    let beta = xtx.lu().solve(&(x.transpose() * &yv)).expect("full rank");
    let r = &yv - &x * &beta;
    (beta.iter().copied().collect(), r.norm_squared())
}

fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<Vec<f64>>)> {
    (12usize..40, 1usize..5).prop_flat_map(|(n, k)| {
        (
            prop::collection::vec(-5.0f64..5.0, n),
            prop::collection::vec(prop::collection::vec(-3.0f64..3.0, n), k),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matches_normal_equations((y, cols) in instance(), intercept in any::<bool>()) {
        let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
        let f = fit(&y, &refs, intercept).unwrap();
        prop_assume!(!f.model.condition_flag);
        let (beta, rss) = normal_equations(&y, &cols, intercept);
        let off = usize::from(intercept);
        if intercept {
            prop_assert!((f.model.intercept.unwrap() - beta[0]).abs() < 1e-8 * (1.0 + beta[0].abs()));
        }
        for (a, b) in f.model.coefficients.iter().zip(&beta[off..]) {
            prop_assert!((a - b).abs() < 1e-8 * (1.0 + b.abs()), "{a} vs {b}");
        }
        prop_assert!((f.model.rss - rss).abs() < 1e-8 * (1.0 + rss));
        let k = cols.len() + off + 1;
        prop_assert!((f.model.bic - bic_value(f.model.rss, y.len(), k)).abs() < 1e-12);
    }

    #[test]
    fn residual_is_orthogonal_to_every_column((y, cols) in instance(), intercept in any::<bool>()) {
        let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
        let f = fit(&y, &refs, intercept).unwrap();
        let r = f.residual();
        let rn = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        let ones = vec![1.0; y.len()];
        let mut all: Vec<&[f64]> = refs.clone();
        if intercept {
            all.push(&ones);
        }
        for c in all {
            let cn = c.iter().map(|v| v * v).sum::<f64>().sqrt();
            let d: f64 = r.iter().zip(c).map(|(a, b)| a * b).sum();
            prop_assert!(d.abs() <= 1e-8 * (rn * cn).max(f64::MIN_POSITIVE), "dot {d}");
        }
    }

    #[test]
    fn refit_matches_full_fit((y, cols) in instance(), intercept in any::<bool>()) {
        let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
        let full = fit(&y, &refs, intercept).unwrap();
        prop_assume!(!full.model.condition_flag);
        let mut inc = fit(&y, &refs[..1], intercept).unwrap();
        for (j, c) in refs.iter().enumerate().skip(1) {
            inc = refit_extend(&inc, c, j).unwrap();
        }
        let (a, b) = (&inc.model, &full.model);
        prop_assert_eq!(&a.regressors, &b.regressors);
        for (x, z) in a.coefficients.iter().zip(&b.coefficients) {
            prop_assert!((x - z).abs() < 1e-10 * (1.0 + z.abs()), "{x} vs {z}");
        }
        prop_assert!((a.rss - b.rss).abs() < 1e-10 * (1.0 + b.rss));
        prop_assert!((a.bic - b.bic).abs() < 1e-8);
    }
}

#[test]
fn exact_fit_hits_the_rss_floor() {
    let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
    let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
    let f = fit(&y, &[&x], false).unwrap();
    assert!((f.model.coefficients[0] - 2.0).abs() < 1e-12);
    assert!(f.model.bic < -6000.0);
    assert!(f.model.bic.is_finite());
}

#[test]
fn duplicate_column_is_flagged() {
    let x: Vec<f64> = (0..10).map(|i| (i as f64).sin()).collect();
    let y: Vec<f64> = (0..10).map(|i| (i as f64).cos()).collect();
    let f = fit(&y, &[&x, &x], false).unwrap();
    assert!(f.model.condition_flag);
}
