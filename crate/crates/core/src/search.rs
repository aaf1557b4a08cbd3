//! Search over regressor subsets: full enumeration, a level-wise Occam's
//! window beam, and Metropolis model composition (MC³).

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::par;
use crate::regression::{Design, Fit, ModelPrior, RegressionModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Exhaustive,
    Occam,
    Mc3,
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exhaustive" => Ok(Strategy::Exhaustive),
            "occam" => Ok(Strategy::Occam),
            "mc3" => Ok(Strategy::Mc3),
            other => Err(Error::Input(format!(
                "unknown strategy '{other}' (expected exhaustive, occam or mc3)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    pub max_size: usize,
    /// Occam's window ratio `C`: models less than `1/C` as likely as the best are dropped.
    pub window_ratio: f64,
    pub strategy: Strategy,
    pub mc3_iterations: usize,
    pub mc3_chains: usize,
    pub seed: u64,
    pub prior: ModelPrior,
    /// Also drop any model that has a retained sub-model with lower BIC.
    pub exclude_dominated: bool,
    /// Survivor cap per Occam level, lowest BIC first.
    pub level_cap: usize,
    /// Refuse exhaustive enumeration beyond this many models.
    pub enumeration_cap: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            max_size: 4,
            window_ratio: 20.0,
            strategy: Strategy::Occam,
            mc3_iterations: 20_000,
            mc3_chains: 1,
            seed: 0,
            prior: ModelPrior::Uniform,
            exclude_dominated: false,
            level_cap: 50_000,
            enumeration_cap: 2_000_000,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_size < 1 {
            return Err(Error::Input("max_size must be at least 1".into()));
        }
        if !(self.window_ratio.is_finite() && self.window_ratio > 1.0) {
            return Err(Error::Input(format!(
                "window ratio must be finite and > 1, got {}",
                self.window_ratio
            )));
        }
        if self.mc3_iterations < 1 || self.mc3_chains < 1 {
            return Err(Error::Input("mc3 iterations and chains must be at least 1".into()));
        }
        if self.level_cap < 1 {
            return Err(Error::Input("level cap must be at least 1".into()));
        }
        self.prior.validate()
    }

    /// Width of the window in BIC units, `2·ln C`.
    pub fn window_width(&self) -> f64 {
        2.0 * self.window_ratio.ln()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelStats {
    pub size: usize,
    pub candidates: usize,
    pub flagged: usize,
    pub survivors: usize,
    pub capped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "strategy", rename_all = "lowercase")]
pub enum SearchMetadata {
    Exhaustive {
        enumerated: u64,
        flagged: usize,
    },
    Occam {
        levels: Vec<LevelStats>,
        excluded_dominated: usize,
    },
    Mc3 {
        iterations: usize,
        chains: usize,
        accepted: usize,
        /// Visit count per retained model, aligned with `ModelSet::models`.
        visits: Vec<usize>,
    },
}

/// Retained models over one design, sorted by BIC then regressor names.
#[derive(Debug, Clone)]
pub struct ModelSet {
    pub names: Vec<String>,
    pub models: Vec<RegressionModel>,
    pub best_bic: f64,
    pub metadata: SearchMetadata,
}

impl ModelSet {
    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn regressor_names(&self, model: &RegressionModel) -> Vec<&str> {
        model.regressors.iter().map(|i| self.names[*i].as_str()).collect()
    }

    /// Models with `BIC − best ≤ 2·ln C`.
    pub fn within_window(&self, window_ratio: f64) -> ModelSet {
        let width = 2.0 * window_ratio.ln();
        let best = self.best_bic;
        let keep: Vec<bool> = self.models.iter().map(|m| m.bic - best <= width).collect();
        let models = self
            .models
            .iter()
            .zip(&keep)
            .filter(|(_, k)| **k)
            .map(|(m, _)| m.clone())
            .collect();
        let metadata = match &self.metadata {
            SearchMetadata::Mc3 {
                iterations,
                chains,
                accepted,
                visits,
            } => SearchMetadata::Mc3 {
                iterations: *iterations,
                chains: *chains,
                accepted: *accepted,
                visits: visits
                    .iter()
                    .zip(&keep)
                    .filter(|(_, k)| **k)
                    .map(|(v, _)| *v)
                    .collect(),
            },
            other => other.clone(),
        };
        ModelSet {
            names: self.names.clone(),
            models,
            best_bic: best,
            metadata,
        }
    }
}

/// BIC first, then regressor index lists (index order is name order).
pub(crate) fn model_order(a: &RegressionModel, b: &RegressionModel) -> Ordering {
    a.bic
        .total_cmp(&b.bic)
        .then_with(|| a.regressors.cmp(&b.regressors))
}

fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

/// Number of subsets of size `1..=max_size` drawn from `p` regressors.
pub fn model_count(p: usize, max_size: usize) -> u64 {
    (1..=max_size.min(p) as u64).fold(0u64, |acc, k| acc.saturating_add(binomial(p as u64, k)))
}

/// Designs with an intercept also carry the intercept-only model.
fn min_size(design: &Design) -> usize {
    usize::from(!design.intercept())
}

fn effective_max(design: &Design, config: &SearchConfig) -> usize {
    let slack = design.n_obs() - 1 - usize::from(design.intercept());
    config.max_size.min(design.n_regressors()).min(slack)
}

fn next_combination(c: &mut [usize], p: usize) -> bool {
    let k = c.len();
    for i in (0..k).rev() {
        if c[i] < p - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Fits every subset of size `1..=max_size` (plus the empty subset when the
/// design has an intercept), dropping degenerate designs.
pub fn exhaustive_search(design: &Design, config: &SearchConfig) -> Result<ModelSet> {
    config.validate()?;
    let p = design.n_regressors();
    let max = effective_max(design, config);
    let count = model_count(p, max) + (1 - min_size(design) as u64);
    if count > config.enumeration_cap {
        return Err(Error::Search(format!(
            "exhaustive search over {p} regressors up to size {max} needs {count} fits, above the cap of {}",
            config.enumeration_cap
        )));
    }
    let mut subsets = Vec::with_capacity(count as usize);
    if min_size(design) == 0 {
        subsets.push(Vec::new());
    }
    for k in 1..=max {
        let mut c: Vec<usize> = (0..k).collect();
        loop {
            subsets.push(c.clone());
            if !next_combination(&mut c, p) {
                break;
            }
        }
    }
    let fits = par::map(&subsets, |s| design.fit_subset(s).map(Fit::into_model));
    let mut models = Vec::with_capacity(fits.len());
    let mut flagged = 0;
    for f in fits {
        let m = f?;
        if m.condition_flag {
            flagged += 1;
        } else {
            models.push(m);
        }
    }
    if models.is_empty() {
        return Err(Error::Search("every enumerated model is degenerate".into()));
    }
    models.sort_by(model_order);
    Ok(ModelSet {
        names: design.names().to_vec(),
        best_bic: models[0].bic,
        models,
        metadata: SearchMetadata::Exhaustive {
            enumerated: count,
            flagged,
        },
    })
}

fn is_subset(small: &[usize], big: &[usize]) -> bool {
    let mut it = big.iter();
    small.iter().all(|s| it.any(|b| b == s))
}

/// Drops models for which some other retained model over a strict subset of
/// its regressors has lower BIC.
fn exclude_dominated(models: Vec<RegressionModel>) -> (Vec<RegressionModel>, usize) {
    let keep: Vec<bool> = par::map(&models, |m| {
        !models.iter().any(|s| {
            s.size() < m.size() && s.bic < m.bic && is_subset(&s.regressors, &m.regressors)
        })
    });
    let before = models.len();
    let kept: Vec<RegressionModel> = models
        .into_iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(m, _)| m)
        .collect();
    let dropped = before - kept.len();
    (kept, dropped)
}

/// Level-wise Occam's window search.
///
/// Size-1 models are fitted first; those within `2·ln C` of the running best
/// BIC survive and are each extended by every absent regressor. Candidates
/// are deduplicated, fitted (in parallel), merged in sorted order and pruned
/// again against the running best, up to `max_size`. The result holds every
/// survivor that is still inside the window around the global best.
pub fn occam_search(design: &Design, config: &SearchConfig) -> Result<ModelSet> {
    config.validate()?;
    let p = design.n_regressors();
    let max = effective_max(design, config);
    let width = config.window_width();

    let singles: Vec<usize> = (0..p).collect();
    let mut candidates: Vec<Fit> = par::map(&singles, |i| design.fit_subset(&[*i]))
        .into_iter()
        .collect::<Result<_>>()?;
    if candidates.iter().all(|f| f.model.condition_flag) {
        return Err(Error::Search("every single-regressor model is degenerate".into()));
    }

    let mut running_best = f64::INFINITY;
    let mut kept: Vec<RegressionModel> = Vec::new();
    let mut levels = Vec::new();
    if min_size(design) == 0 {
        let null = design.fit_subset(&[])?.into_model();
        running_best = running_best.min(null.bic);
        levels.push(LevelStats {
            size: 0,
            candidates: 1,
            flagged: 0,
            survivors: 1,
            capped: false,
        });
        kept.push(null);
    }
    for size in 1..=max {
        let n_candidates = candidates.len();
        let mut fits: Vec<Fit> = candidates
            .into_iter()
            .filter(|f| !f.model.condition_flag)
            .collect();
        let flagged = n_candidates - fits.len();
        fits.sort_by(|a, b| model_order(&a.model, &b.model));
        if let Some(f) = fits.first() {
            running_best = running_best.min(f.model.bic);
        }
        let mut survivors: Vec<Fit> = fits
            .into_iter()
            .take_while(|f| f.model.bic <= running_best + width)
            .collect();
        let capped = survivors.len() > config.level_cap;
        survivors.truncate(config.level_cap);
        levels.push(LevelStats {
            size,
            candidates: n_candidates,
            flagged,
            survivors: survivors.len(),
            capped,
        });
        kept.extend(survivors.iter().map(|f| f.model.clone()));
        if size == max || survivors.is_empty() {
            break;
        }

        // Deduplicate extensions by regressor set, keeping the first parent
        // in sorted survivor order.
        let mut extensions: BTreeMap<Vec<usize>, (usize, usize)> = BTreeMap::new();
        for (pi, parent) in survivors.iter().enumerate() {
            for j in 0..p {
                if parent.model.contains(j) {
                    continue;
                }
                let mut key = parent.model.regressors.clone();
                let at = key.partition_point(|x| *x < j);
                key.insert(at, j);
                extensions.entry(key).or_insert((pi, j));
            }
        }
        let jobs: Vec<(usize, usize)> = extensions.into_values().collect();
        candidates = par::map(&jobs, |(pi, j)| design.extend(&survivors[*pi], *j))
            .into_iter()
            .collect::<Result<_>>()?;
    }

    let mut models: Vec<RegressionModel> = kept
        .into_iter()
        .filter(|m| m.bic <= running_best + width)
        .collect();
    models.sort_by(model_order);
    let mut excluded = 0;
    if config.exclude_dominated {
        (models, excluded) = exclude_dominated(models);
    }
    Ok(ModelSet {
        names: design.names().to_vec(),
        best_bic: running_best,
        models,
        metadata: SearchMetadata::Occam {
            levels,
            excluded_dominated: excluded,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Move {
    Add,
    Remove,
    Swap,
}

fn valid_moves(size: usize, p: usize, min: usize, max: usize) -> Vec<Move> {
    let mut out = Vec::with_capacity(3);
    if size < max && size < p {
        out.push(Move::Add);
    }
    if size > min {
        out.push(Move::Remove);
    }
    if size > 0 && size < p {
        out.push(Move::Swap);
    }
    out
}

/// Number of distinct proposals of one move type from a model of `size`.
fn move_count(mv: Move, size: usize, p: usize) -> usize {
    match mv {
        Move::Add => p - size,
        Move::Remove => size,
        Move::Swap => size * (p - size),
    }
}

/// Log proposal probability of a specific neighbor reached by `mv`.
fn log_proposal(mv: Move, size: usize, p: usize, min: usize, max: usize) -> f64 {
    let types = valid_moves(size, p, min, max).len() as f64;
    -(types.ln() + (move_count(mv, size, p) as f64).ln())
}

struct Chain<'a> {
    design: &'a Design,
    prior: &'a ModelPrior,
    cache: HashMap<Vec<usize>, Option<RegressionModel>>,
    visits: HashMap<Vec<usize>, usize>,
    accepted: usize,
}

impl Chain<'_> {
    fn evaluate(&mut self, subset: &[usize]) -> Result<Option<RegressionModel>> {
        if let Some(m) = self.cache.get(subset) {
            return Ok(m.clone());
        }
        let m = self.design.fit_subset(subset)?.into_model();
        let m = (!m.condition_flag).then_some(m);
        self.cache.insert(subset.to_vec(), m.clone());
        Ok(m)
    }

    fn log_target(&self, m: &RegressionModel) -> f64 {
        -m.bic / 2.0 + self.prior.log_weight(m.size())
    }
}

fn run_chain<'a>(
    design: &'a Design,
    config: &'a SearchConfig,
    start: &RegressionModel,
    seed: u64,
) -> Result<Chain<'a>> {
    let p = design.n_regressors();
    let (min, max) = (min_size(design), effective_max(design, config));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chain = Chain {
        design,
        prior: &config.prior,
        cache: HashMap::new(),
        visits: HashMap::new(),
        accepted: 0,
    };
    chain.cache.insert(start.regressors.clone(), Some(start.clone()));
    let mut current = start.clone();
    for _ in 0..config.mc3_iterations {
        *chain.visits.entry(current.regressors.clone()).or_insert(0) += 1;
        let size = current.size();
        let moves = valid_moves(size, p, min, max);
        if moves.is_empty() {
            continue;
        }
        let mv = moves[rng.gen_range(0..moves.len())];
        let inside = &current.regressors;
        let outside: Vec<usize> = (0..p).filter(|j| !current.contains(*j)).collect();
        let mut proposal = inside.clone();
        let reverse = match mv {
            Move::Add => {
                proposal.push(outside[rng.gen_range(0..outside.len())]);
                Move::Remove
            }
            Move::Remove => {
                proposal.remove(rng.gen_range(0..inside.len()));
                Move::Add
            }
            Move::Swap => {
                let i = rng.gen_range(0..inside.len());
                proposal[i] = outside[rng.gen_range(0..outside.len())];
                Move::Swap
            }
        };
        proposal.sort_unstable();
        let u: f64 = rng.gen();
        let Some(candidate) = chain.evaluate(&proposal)? else {
            continue;
        };
        let log_ratio = chain.log_target(&candidate) - chain.log_target(&current)
            + log_proposal(reverse, candidate.size(), p, min, max)
            - log_proposal(mv, size, p, min, max);
        if log_ratio >= 0.0 || u.ln() < log_ratio {
            current = candidate;
            chain.accepted += 1;
        }
    }
    Ok(chain)
}

/// Metropolis-Hastings walk over model space.
///
/// Each step proposes adding, removing or swapping one regressor (move type
/// uniform among those available, then uniform within the type) and accepts
/// with the BIC likelihood ratio, prior ratio and proposal correction. Every
/// distinct model visited is returned with its exact BIC; posteriors are then
/// obtained by renormalizing those BICs rather than from visit frequencies.
pub fn mc3_search(design: &Design, config: &SearchConfig) -> Result<ModelSet> {
    config.validate()?;
    let p = design.n_regressors();
    let mut singles: Vec<RegressionModel> = (0..p)
        .map(|i| design.fit_subset(&[i]).map(Fit::into_model))
        .collect::<Result<_>>()?;
    if singles.iter().all(|m| m.condition_flag) {
        return Err(Error::Search("every single-regressor model is degenerate".into()));
    }
    if min_size(design) == 0 {
        singles.push(design.fit_subset(&[])?.into_model());
    }
    let start = singles
        .iter()
        .filter(|m| !m.condition_flag)
        .min_by(|a, b| model_order(a, b))
        .cloned()
        .expect("checked above");

    let seeds: Vec<u64> = (0..config.mc3_chains as u64)
        .map(|c| config.seed.wrapping_add(c.wrapping_mul(0x9E37_79B9_7F4A_7C15)))
        .collect();
    let chains = par::map(&seeds, |s| {
        run_chain(design, config, &start, *s).map(|c| (c.cache, c.visits, c.accepted))
    });

    let mut visited: BTreeMap<Vec<usize>, (RegressionModel, usize)> = BTreeMap::new();
    let mut accepted = 0;
    for chain in chains {
        let (cache, visits, acc) = chain?;
        accepted += acc;
        for (key, count) in visits {
            let model = cache[&key].clone().expect("visited models are never degenerate");
            visited.entry(key).or_insert((model, 0)).1 += count;
        }
    }
    let mut entries: Vec<(RegressionModel, usize)> = visited.into_values().collect();
    entries.sort_by(|a, b| model_order(&a.0, &b.0));
    let best_bic = entries[0].0.bic;
    Ok(ModelSet {
        names: design.names().to_vec(),
        best_bic,
        metadata: SearchMetadata::Mc3 {
            iterations: config.mc3_iterations,
            chains: config.mc3_chains,
            accepted,
            visits: entries.iter().map(|e| e.1).collect(),
        },
        models: entries.into_iter().map(|e| e.0).collect(),
    })
}

/// Dispatches on `config.strategy`.
pub fn search(design: &Design, config: &SearchConfig) -> Result<ModelSet> {
    match config.strategy {
        Strategy::Exhaustive => exhaustive_search(design, config),
        Strategy::Occam => occam_search(design, config),
        Strategy::Mc3 => mc3_search(design, config),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn orthonormal_design(y: Vec<f64>) -> Design {
        Design::new(
            vec!["a".into(), "b".into()],
            vec![vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 1.0, 0.0, 0.0]],
            y,
            false,
        )
        .unwrap()
    }

    #[test]
    fn counts() {
        assert_eq!(model_count(4, 2), 10);
        assert_eq!(model_count(8, 3), 92);
        assert_eq!(model_count(15, 15), 32767);
        assert_eq!(binomial(200, 4), 64_684_950);
    }

    #[test]
    fn combinations_enumerate_in_order() {
        let mut c = vec![0, 1];
        let mut all = vec![c.clone()];
        while next_combination(&mut c, 4) {
            all.push(c.clone());
        }
        assert_eq!(all.len(), 6);
        assert_eq!(all.last().unwrap(), &vec![2, 3]);
    }

    #[test]
    fn exhaustive_refuses_above_cap() {
        let d = orthonormal_design(vec![1.0, 0.1, 0.2, 0.1]);
        let cfg = SearchConfig {
            enumeration_cap: 2,
            ..Default::default()
        };
        let err = exhaustive_search(&d, &cfg).unwrap_err();
        assert!(err.to_string().contains("needs 3 fits"), "{err}");
    }

    #[test]
    fn occam_perfect_fit_dominates() {
        let d = orthonormal_design(vec![1.0, 0.0, 0.0, 0.0]);
        let set = occam_search(&d, &SearchConfig::default()).unwrap();
        assert_eq!(set.models[0].regressors, vec![0]);
        assert!(set.models[0].rss < 1e-30);
    }

    #[test]
    fn config_validation() {
        let bad = SearchConfig {
            window_ratio: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = SearchConfig {
            max_size: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert_eq!("mc3".parse::<Strategy>().unwrap(), Strategy::Mc3);
        assert!("beam".parse::<Strategy>().is_err());
    }

    #[test]
    fn proposal_probabilities_normalize() {
        // from any model, proposal probabilities over all neighbors sum to 1
        let (p, max) = (6, 3);
        for min in 0..=1 {
            for size in min..=max {
                let total: f64 = valid_moves(size, p, min, max)
                    .into_iter()
                    .map(|mv| move_count(mv, size, p) as f64 * log_proposal(mv, size, p, min, max).exp())
                    .sum();
                assert!((total - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dominated_models_are_dropped() {
        let mk = |r: Vec<usize>, bic: f64| RegressionModel {
            regressors: r.clone(),
            coefficients: vec![0.0; r.len()],
            intercept: None,
            rss: 1.0,
            n_obs: 10,
            bic,
            condition_flag: false,
        };
        let (kept, dropped) = exclude_dominated(vec![mk(vec![0], 1.0), mk(vec![0, 1], 2.0), mk(vec![1, 2], 0.5)]);
        assert_eq!(dropped, 1);
        assert_eq!(kept.len(), 2);
    }
}
