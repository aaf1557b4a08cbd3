//! Model posteriors and everything derived from them: inclusion
//! probabilities, averaged coefficients, class probabilities and
//! identification trees.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::regression::ModelPrior;
use crate::search::ModelSet;
use crate::spectral::{ClassHierarchy, NodeId};

/// Normalized posterior over a retained model set.
#[derive(Debug, Clone)]
pub struct ModelPosterior {
    pub models: ModelSet,
    pub probabilities: Vec<f64>,
    pub prior: ModelPrior,
}

/// `P(Mᵢ) ∝ exp(−(BICᵢ − BIC_min)/2)·Pr(Mᵢ)`, computed in shifted-log form.
pub fn normalize(models: &ModelSet, prior: &ModelPrior) -> Result<ModelPosterior> {
    if models.is_empty() {
        return Err(Error::Search("cannot normalize an empty model set".into()));
    }
    prior.validate()?;
    if let Some(m) = models.models.iter().find(|m| !m.bic.is_finite()) {
        return Err(Error::Numerical(format!(
            "model {:?} has non-finite BIC",
            models.regressor_names(m)
        )));
    }
    let log_w: Vec<f64> = models
        .models
        .iter()
        .map(|m| -m.bic / 2.0 + prior.log_weight(m.size()))
        .collect();
    let top = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_w.iter().map(|l| (l - top).exp()).collect();
    let z: f64 = w.iter().sum();
    Ok(ModelPosterior {
        models: models.clone(),
        probabilities: w.iter().map(|x| x / z).collect(),
        prior: prior.clone(),
    })
}

/// Inclusion probability lookup result; unknown names are distinguishable
/// from names that simply never entered a retained model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Inclusion {
    Known(f64),
    NotInLibrary,
}

impl Inclusion {
    pub fn probability(self) -> f64 {
        match self {
            Inclusion::Known(p) => p,
            Inclusion::NotInLibrary => 0.0,
        }
    }
}

impl ModelPosterior {
    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    fn index_of(&self, name: &str) -> Option<usize> {
        self.models.names.iter().position(|n| n == name)
    }

    /// Sum of probabilities of models whose regressors satisfy `hit`.
    fn mass_where(&self, hit: impl Fn(&[usize]) -> bool) -> f64 {
        self.models
            .models
            .iter()
            .zip(&self.probabilities)
            .filter(|(m, _)| hit(&m.regressors))
            // an empty f64 sum is -0.0
            .fold(0.0, |acc, (_, p)| acc + p)
    }

    /// Most probable model (ties resolved by the set's sort order).
    pub fn best(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.probabilities.iter().enumerate() {
            if *p > self.probabilities[best] {
                best = i;
            }
        }
        best
    }
}

/// `P(X_k)`: total probability of the models containing `regressor`.
pub fn inclusion_probability(posterior: &ModelPosterior, regressor: &str) -> Inclusion {
    match posterior.index_of(regressor) {
        Some(k) => Inclusion::Known(posterior.mass_where(|r| r.contains(&k))),
        None => Inclusion::NotInLibrary,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressorSummary {
    pub inclusion: f64,
    pub averaged_coefficient: f64,
}

/// Per-regressor inclusion probability and model-averaged coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct InclusionReport {
    pub regressors: BTreeMap<String, RegressorSummary>,
}

/// `β̄_k = Σ_{M ∋ X_k} P(M)·β_k^M`, left unconditioned (not divided by `P(X_k)`).
pub fn averaged_coefficients(posterior: &ModelPosterior) -> InclusionReport {
    let n = posterior.models.names.len();
    let mut inclusion = vec![0.0; n];
    let mut coef = vec![0.0; n];
    for (m, p) in posterior.models.models.iter().zip(&posterior.probabilities) {
        for (k, b) in m.regressors.iter().zip(&m.coefficients) {
            inclusion[*k] += p;
            coef[*k] += p * b;
        }
    }
    InclusionReport {
        regressors: posterior
            .models
            .names
            .iter()
            .enumerate()
            .map(|(k, name)| {
                (
                    name.clone(),
                    RegressorSummary {
                        inclusion: inclusion[k],
                        averaged_coefficient: if inclusion[k] == 0.0 { 0.0 } else { coef[k] },
                    },
                )
            })
            .collect(),
    }
}

fn member_mask(posterior: &ModelPosterior, hierarchy: &ClassHierarchy, node: NodeId) -> Result<Vec<bool>> {
    let node = hierarchy
        .get(node)
        .ok_or_else(|| Error::Input(format!("unknown hierarchy node {}", node.0)))?;
    Ok(posterior
        .models
        .names
        .iter()
        .map(|n| node.members.contains(n))
        .collect())
}

/// Probability that the observation belongs to `node`: the mass of models
/// containing at least one member of the class. A model holding several
/// members counts once.
pub fn class_probability(posterior: &ModelPosterior, hierarchy: &ClassHierarchy, node: NodeId) -> Result<f64> {
    let mask = member_mask(posterior, hierarchy, node)?;
    Ok(posterior.mass_where(|r| r.iter().any(|k| mask[*k])))
}

/// Diagnostic: the sum of member inclusion probabilities. Agrees with
/// [`class_probability`] when every retained model is a singleton, and can
/// exceed 1 otherwise.
pub fn class_probability_per_spectrum(
    posterior: &ModelPosterior,
    hierarchy: &ClassHierarchy,
    node: NodeId,
) -> Result<f64> {
    let mask = member_mask(posterior, hierarchy, node)?;
    Ok(posterior
        .models
        .models
        .iter()
        .zip(&posterior.probabilities)
        .map(|(m, p)| p * m.regressors.iter().filter(|k| mask[**k]).count() as f64)
        .sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub name: String,
    pub probability: f64,
    /// Ascending by probability, ties by name.
    pub children: Vec<TreeNode>,
}

impl TreeNode {
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a TreeNode, Option<&'a TreeNode>)) {
        fn go<'a>(n: &'a TreeNode, parent: Option<&'a TreeNode>, f: &mut impl FnMut(&'a TreeNode, Option<&'a TreeNode>)) {
            f(n, parent);
            for c in &n.children {
                go(c, Some(n), f);
            }
        }
        go(self, None, f);
    }

    pub fn find(&self, name: &str) -> Option<&TreeNode> {
        if self.name == name {
            return Some(self);
        }
        self.children.iter().find_map(|c| c.find(name))
    }
}

/// Class hierarchy annotated with absolute class probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentificationTree {
    pub root: TreeNode,
}

impl IdentificationTree {
    pub fn find(&self, name: &str) -> Option<&TreeNode> {
        self.root.find(name)
    }
}

pub fn build_tree(posterior: &ModelPosterior, hierarchy: &ClassHierarchy) -> IdentificationTree {
    fn node(posterior: &ModelPosterior, h: &ClassHierarchy, id: NodeId) -> TreeNode {
        let mut children: Vec<TreeNode> = h.node(id).children.iter().map(|c| node(posterior, h, *c)).collect();
        children.sort_by(|a, b| a.probability.total_cmp(&b.probability).then_with(|| a.name.cmp(&b.name)));
        TreeNode {
            name: h.node(id).name.clone(),
            probability: class_probability(posterior, h, id).expect("ids come from the hierarchy"),
            children,
        }
    }
    let mut root = node(posterior, hierarchy, hierarchy.root());
    // the root is the whole model space, including an intercept-only model
    // that holds no member at all
    root.probability = posterior.probabilities.iter().sum();
    IdentificationTree { root }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regression::RegressionModel;
    use crate::search::SearchMetadata;

    fn model(regressors: Vec<usize>, coefficients: Vec<f64>, bic: f64) -> RegressionModel {
        RegressionModel {
            regressors,
            coefficients,
            intercept: None,
            rss: 1.0,
            n_obs: 10,
            bic,
            condition_flag: false,
        }
    }

    fn set(names: &[&str], models: Vec<RegressionModel>) -> ModelSet {
        let best = models.iter().map(|m| m.bic).fold(f64::INFINITY, f64::min);
        ModelSet {
            names: names.iter().map(|s| s.to_string()).collect(),
            models,
            best_bic: best,
            metadata: SearchMetadata::Exhaustive {
                enumerated: 0,
                flagged: 0,
            },
        }
    }

    #[test]
    fn normalize_simple_cases() {
        let s = set(&["a", "b"], vec![model(vec![0], vec![1.0], 3.0), model(vec![1], vec![1.0], 3.0)]);
        let p = normalize(&s, &ModelPrior::Uniform).unwrap();
        assert_eq!(p.probabilities, vec![0.5, 0.5]);
        let d = 2.0 * 9f64.ln();
        let s = set(&["a", "b"], vec![model(vec![0], vec![1.0], 1.0), model(vec![1], vec![1.0], 1.0 + d)]);
        let p = normalize(&s, &ModelPrior::Uniform).unwrap();
        assert!((p.probabilities[0] - 0.9).abs() < 1e-15);
        assert!((p.probabilities[1] - 0.1).abs() < 1e-15);
        assert!(normalize(&set(&["a"], vec![]), &ModelPrior::Uniform).is_err());
    }

    #[test]
    fn huge_bics_do_not_underflow() {
        let s = set(&["a", "b"], vec![model(vec![0], vec![1.0], -1e6), model(vec![1], vec![1.0], -1e6 + 2.0)]);
        let p = normalize(&s, &ModelPrior::Uniform).unwrap();
        let e = (-1.0f64).exp();
        assert!((p.probabilities[0] - 1.0 / (1.0 + e)).abs() < 1e-15);
    }

    #[test]
    fn prior_enters_numerator_and_denominator() {
        let s = set(&["a", "b"], vec![model(vec![0], vec![1.0], 0.0), model(vec![0, 1], vec![1.0, 1.0], 0.0)]);
        let p = normalize(&s, &ModelPrior::PerSize(vec![3.0, 1.0])).unwrap();
        assert!((p.probabilities[0] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn inclusion_and_coefficients() {
        let s = set(
            &["a", "b", "c"],
            vec![model(vec![0, 1], vec![2.0, 1.0], 0.0), model(vec![0, 2], vec![-2.0, 5.0], 0.0)],
        );
        let p = normalize(&s, &ModelPrior::Uniform).unwrap();
        assert_eq!(inclusion_probability(&p, "a"), Inclusion::Known(1.0));
        assert_eq!(inclusion_probability(&p, "b"), Inclusion::Known(0.5));
        assert_eq!(inclusion_probability(&p, "zzz"), Inclusion::NotInLibrary);
        assert_eq!(inclusion_probability(&p, "zzz").probability(), 0.0);
        let r = averaged_coefficients(&p);
        assert_eq!(r.regressors["a"].averaged_coefficient, 0.0);
        assert_eq!(r.regressors["c"].averaged_coefficient, 2.5);
        let single = normalize(&set(&["a", "b"], vec![model(vec![0, 1], vec![0.3, 0.7], 1.0)]), &ModelPrior::Uniform).unwrap();
        let r = averaged_coefficients(&single);
        assert_eq!(r.regressors["a"].averaged_coefficient, 0.3);
        assert_eq!(r.regressors["b"].averaged_coefficient, 0.7);
    }

    #[test]
    fn multi_member_model_counts_once() {
        let paths = [("L", vec!["PE".to_string(), "LDPE".to_string()]), ("H", vec!["PE".to_string(), "HDPE".to_string()])];
        let h = ClassHierarchy::from_paths(paths.iter().map(|(n, p)| (*n, p.as_slice()))).unwrap();
        let s = set(&["H", "L"], vec![model(vec![0, 1], vec![0.5, 0.5], 0.0), model(vec![1], vec![1.0], 0.0)]);
        let p = normalize(&s, &ModelPrior::Uniform).unwrap();
        let pe = class_probability(&p, &h, h.find(&["PE"]).unwrap()).unwrap();
        let ldpe = class_probability(&p, &h, h.find(&["PE", "LDPE"]).unwrap()).unwrap();
        let hdpe = class_probability(&p, &h, h.find(&["PE", "HDPE"]).unwrap()).unwrap();
        assert_eq!((pe, ldpe, hdpe), (1.0, 1.0, 0.5));
        assert!(ldpe + hdpe > pe);
        let diag = class_probability_per_spectrum(&p, &h, h.find(&["PE"]).unwrap()).unwrap();
        assert_eq!(diag, 1.5);
        assert!(class_probability(&p, &h, NodeId(99)).is_err());
    }
}
