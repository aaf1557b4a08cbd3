use std::collections::BTreeMap;

use matid_core::search::model_count;
use matid_core::synth::{null_design, random_design};
use matid_core::{
    averaged_coefficients, exhaustive_search, mc3_search, normalize, occam_search, Design, ModelPrior, ModelSet,
    SearchConfig, Strategy,
};
use proptest::prelude::*;

fn pips(set: &ModelSet) -> BTreeMap<String, f64> {
    let post = normalize(set, &ModelPrior::Uniform).unwrap();
    averaged_coefficients(&post)
        .regressors
        .into_iter()
        .map(|(k, v)| (k, v.inclusion))
        .collect()
}

fn config(strategy: Strategy, max_size: usize) -> SearchConfig {
    SearchConfig {
        strategy,
        max_size,
        ..SearchConfig::default()
    }
}

/// Independent window oracle: every subset, filtered by BIC distance to the best.
fn window_oracle(design: &Design, max_size: usize, c: f64) -> Vec<(Vec<usize>, f64)> {
    let p = design.n_regressors();
    let mut all = Vec::new();
    for mask in 1u32..(1 << p) {
        let s: Vec<usize> = (0..p).filter(|j| mask & (1 << j) != 0).collect();
        if s.len() > max_size {
            continue;
        }
        let m = design.fit_subset(&s).unwrap().model;
        if !m.condition_flag {
            all.push((s, m.bic));
        }
    }
    let best = all.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
    all.retain(|x| x.1 - best <= 2.0 * c.ln());
    all.sort_by(|a, b| a.0.cmp(&b.0));
    all
}

#[test]
fn exhaustive_count_matches_binomials() {
    let d = random_design(1, 7, 30).unwrap();
    let set = exhaustive_search(&d, &config(Strategy::Exhaustive, 3)).unwrap();
    assert_eq!(model_count(7, 3), 7 + 21 + 35);
    assert_eq!(set.len(), 63);
}

#[test]
fn exhaustive_window_matches_bitmask_oracle() {
    for seed in 0..5 {
        let d = random_design(seed, 8, 30).unwrap();
        let set = exhaustive_search(&d, &config(Strategy::Exhaustive, 3)).unwrap().within_window(20.0);
        let mut got: Vec<(Vec<usize>, f64)> = set.models.iter().map(|m| (m.regressors.clone(), m.bic)).collect();
        got.sort_by(|a, b| a.0.cmp(&b.0));
        let want = window_oracle(&d, 3, 20.0);
        assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(&want) {
            assert_eq!(g.0, w.0);
            assert!((g.1 - w.1).abs() < 1e-9);
        }
    }
}

#[test]
fn occam_agrees_with_exhaustive_window() {
    for seed in 0..20 {
        let d = random_design(seed, 6 + (seed as usize % 5), 30).unwrap();
        let occ = occam_search(&d, &config(Strategy::Occam, 3)).unwrap();
        let ex = exhaustive_search(&d, &config(Strategy::Exhaustive, 3)).unwrap().within_window(20.0);
        let (a, b) = (pips(&occ), pips(&ex));
        for (k, v) in &b {
            assert!((a[k] - v).abs() < 1e-10, "seed {seed} {k}: {} vs {v}", a[k]);
        }
    }
}

#[test]
fn mc3_is_deterministic_and_close_to_exhaustive() {
    let d = random_design(7, 8, 30).unwrap();
    let cfg = SearchConfig {
        seed: 42,
        ..config(Strategy::Mc3, 3)
    };
    let a = mc3_search(&d, &cfg).unwrap();
    let b = mc3_search(&d, &cfg).unwrap();
    assert_eq!(format!("{:?}", a.models), format!("{:?}", b.models));
    assert_eq!(a.metadata, b.metadata);
    let ex = exhaustive_search(&d, &config(Strategy::Exhaustive, 3)).unwrap();
    let (pa, pe) = (pips(&a), pips(&ex));
    for (k, v) in &pe {
        assert!((pa[k] - v).abs() < 0.05, "{k}: {} vs {v}", pa[k]);
    }
}

#[test]
fn occam_models_lie_in_the_exhaustive_window() {
    // the beam can miss a window model whose parents all fell outside the
    // window at their own level, but it never keeps anything outside it
    for seed in 0..100 {
        let d = random_design(seed, 6 + (seed as usize % 5), 30).unwrap();
        let occ = occam_search(&d, &config(Strategy::Occam, 3)).unwrap();
        let ex = exhaustive_search(&d, &config(Strategy::Exhaustive, 3)).unwrap().within_window(20.0);
        assert!((occ.best_bic - ex.best_bic).abs() < 1e-9);
        for m in &occ.models {
            assert!(ex.models.iter().any(|e| e.regressors == m.regressors), "seed {seed}: {:?}", m.regressors);
        }
    }
}

#[test]
fn null_response_usually_gives_low_inclusion() {
    // chance correlations push a predictor over 0.5 in a minority of draws
    let quiet = (0..50)
        .filter(|seed| {
            let d = null_design(*seed, 5, 200).unwrap();
            let set = occam_search(&d, &config(Strategy::Occam, 5)).unwrap();
            pips(&set).values().all(|v| *v < 0.5)
        })
        .count();
    assert!(quiet >= 40, "{quiet}/50");
}

#[test]
fn intercept_only_model_is_in_the_space() {
    let d = null_design(0, 4, 50).unwrap();
    let ex = exhaustive_search(&d, &config(Strategy::Exhaustive, 2)).unwrap();
    assert_eq!(ex.len(), 1 + 4 + 6);
    assert!(ex.models.iter().any(|m| m.regressors.is_empty()));
    let occ = occam_search(&d, &config(Strategy::Occam, 2)).unwrap();
    assert!(occ.models.iter().any(|m| m.regressors.is_empty()));
}

#[test]
fn response_copy_dominates() {
    let base = random_design(3, 5, 40).unwrap();
    let mut names: Vec<String> = base.names().to_vec();
    let mut cols: Vec<Vec<f64>> = (0..5).map(|j| base.column(j).to_vec()).collect();
    names.push("copy".into());
    cols.push(base.response().to_vec());
    let d = Design::new(names, cols, base.response().to_vec(), true).unwrap();
    let set = occam_search(&d, &config(Strategy::Occam, 3)).unwrap();
    assert!((pips(&set)["copy"] - 1.0).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn response_scaling_leaves_posterior_unchanged(seed in 0u64..10_000, alpha in 1e-3f64..1e3) {
        let d = random_design(seed, 6, 30).unwrap();
        let cfg = config(Strategy::Occam, 3);
        let a = normalize(&occam_search(&d, &cfg).unwrap(), &ModelPrior::Uniform).unwrap();
        let b = normalize(&occam_search(&d.scaled_response(alpha), &cfg).unwrap(), &ModelPrior::Uniform).unwrap();
        prop_assert_eq!(a.models.len(), b.models.len());
        for (i, (ma, mb)) in a.models.models.iter().zip(&b.models.models).enumerate() {
            prop_assert_eq!(&ma.regressors, &mb.regressors);
            prop_assert!((a.probabilities[i] - b.probabilities[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn posterior_sums_to_one(seed in 0u64..10_000, strategy in prop_oneof![Just(Strategy::Occam), Just(Strategy::Exhaustive)]) {
        let d = random_design(seed, 7, 30).unwrap();
        let set = matid_core::search::search(&d, &config(strategy, 3)).unwrap();
        let post = normalize(&set, &ModelPrior::Uniform).unwrap();
        let total: f64 = post.probabilities.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(post.probabilities.iter().all(|p| *p >= 0.0));
    }

    #[test]
    fn mc3_output_is_a_function_of_the_seed(seed in 0u64..1000) {
        let d = random_design(seed, 7, 30).unwrap();
        let cfg = SearchConfig { seed, mc3_iterations: 2000, ..config(Strategy::Mc3, 3) };
        let a = mc3_search(&d, &cfg).unwrap();
        let b = mc3_search(&d, &cfg).unwrap();
        prop_assert_eq!(format!("{:?}{:?}", a.models, a.metadata), format!("{:?}{:?}", b.models, b.metadata));
    }
}
