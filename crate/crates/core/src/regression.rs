//! Least-squares fits over regressor subsets, with BIC-based model evidence.
//!
//! Full fits use a Householder QR of the design. Extending a fitted model by
//! one column appends to the parent's thin QR factor with a twice-iterated
//! Gram-Schmidt step, so search never refactors from scratch.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::spectral::{SpectralLibrary, Spectrum};

/// Designs whose condition estimate exceeds this are flagged degenerate.
pub const CONDITION_LIMIT: f64 = 1e10;

/// Floor applied to the RSS before taking its log.
pub const RSS_FLOOR: f64 = 1e-300;

/// A column whose component orthogonal to the preceding columns is below
/// this fraction of its norm is treated as linearly dependent.
const DEPENDENCE_TOL: f64 = 1e-12;

/// A fitted least-squares model over a subset of regressors.
///
/// `regressors` are indices into the owning [`Design`], sorted ascending;
/// `coefficients` follow the same order.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionModel {
    pub regressors: Vec<usize>,
    pub coefficients: Vec<f64>,
    pub intercept: Option<f64>,
    pub rss: f64,
    pub n_obs: usize,
    pub bic: f64,
    pub condition_flag: bool,
}

impl RegressionModel {
    pub fn size(&self) -> usize {
        self.regressors.len()
    }

    /// Parameter count entering the BIC penalty: coefficients, intercept and
    /// the noise variance.
    pub fn parameter_count(&self) -> usize {
        self.regressors.len() + usize::from(self.intercept.is_some()) + 1
    }

    pub fn contains(&self, regressor: usize) -> bool {
        self.regressors.binary_search(&regressor).is_ok()
    }

    pub fn coefficient(&self, regressor: usize) -> Option<f64> {
        self.regressors
            .binary_search(&regressor)
            .ok()
            .map(|i| self.coefficients[i])
    }
}

/// `n·ln(max(rss, ε)/n) + k'·ln n`.
pub fn bic_value(rss: f64, n_obs: usize, parameter_count: usize) -> f64 {
    let n = n_obs as f64;
    n * (rss.max(RSS_FLOOR) / n).ln() + parameter_count as f64 * n.ln()
}

pub fn bic(model: &RegressionModel) -> f64 {
    bic_value(model.rss, model.n_obs, model.parameter_count())
}

/// Log of the BIC-approximated model likelihood, `−BIC/2`.
pub fn log_likelihood(model: &RegressionModel) -> f64 {
    -model.bic / 2.0
}

/// Prior over models.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum ModelPrior {
    #[default]
    Uniform,
    /// `weights[k - 1]` is the prior weight of every model with `k` regressors.
    PerSize(Vec<f64>),
}

impl ModelPrior {
    pub fn validate(&self) -> Result<()> {
        if let ModelPrior::PerSize(w) = self {
            if w.is_empty() {
                return Err(Error::Input("per-size prior needs at least one weight".into()));
            }
            if let Some(x) = w.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
                return Err(Error::Input(format!("prior weights must be positive and finite, got {x}")));
            }
        }
        Ok(())
    }

    /// Log prior weight (unnormalized) of a model with `size` regressors.
    pub fn log_weight(&self, size: usize) -> f64 {
        match self {
            ModelPrior::Uniform => 0.0,
            ModelPrior::PerSize(w) => {
                let i = size.saturating_sub(1).min(w.len() - 1);
                w[i].ln()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Slot {
    Accepted(usize),
    Dependent,
}

/// Thin QR factor of a fitted design plus the residual of the response.
#[derive(Debug, Clone)]
struct Factor {
    /// Orthonormal columns spanning the accepted design columns.
    q: Vec<Vec<f64>>,
    /// Column `j` of the upper-triangular `R`, length `j + 1`.
    r: Vec<Vec<f64>>,
    qty: Vec<f64>,
    residual: Vec<f64>,
    /// One slot per design column, intercept first when present.
    slots: Vec<Slot>,
}

/// A fitted model together with the factorization needed to extend it.
#[derive(Debug, Clone)]
pub struct Fit {
    pub model: RegressionModel,
    factor: Arc<Factor>,
    /// Regressor id per non-intercept design column, in design order.
    order: Vec<usize>,
}

impl Fit {
    pub fn residual(&self) -> &[f64] {
        &self.factor.residual
    }

    pub fn into_model(self) -> RegressionModel {
        self.model
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn validate(y: &[f64], columns: &[&[f64]], with_intercept: bool) -> Result<()> {
    if y.is_empty() {
        return Err(Error::Input("response vector is empty".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("response contains non-finite values".into()));
    }
    let k = columns.len() + usize::from(with_intercept);
    if k >= y.len() {
        return Err(Error::Input(format!(
            "{k} design columns need more than {k} observations, got {}",
            y.len()
        )));
    }
    for (j, c) in columns.iter().enumerate() {
        if c.len() != y.len() {
            return Err(Error::Alignment(format!(
                "design column {j} has {} rows, response has {}",
                c.len(),
                y.len()
            )));
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input(format!("design column {j} contains non-finite values")));
        }
    }
    Ok(())
}

/// Applies the Householder reflector `I − 2uuᵀ/uᵀu` acting on rows `start..`.
fn reflect(u: &[f64], start: usize, v: &mut [f64]) {
    let uu = dot(u, u);
    if uu == 0.0 {
        return;
    }
    let s = 2.0 * dot(u, &v[start..]) / uu;
    v[start..].iter_mut().zip(u).for_each(|(x, ui)| *x -= s * ui);
}

fn condition_of(r: &[Vec<f64>]) -> f64 {
    let k = r.len();
    if k == 0 {
        return 1.0;
    }
    let m = DMatrix::from_fn(k, k, |i, j| if i <= j { r[j][i] } else { 0.0 });
    let sv = m.singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn back_substitute(r: &[Vec<f64>], qty: &[f64]) -> Vec<f64> {
    let k = r.len();
    let mut beta = vec![0.0; k];
    for i in (0..k).rev() {
        let mut s = qty[i];
        for j in i + 1..k {
            s -= r[j][i] * beta[j];
        }
        beta[i] = s / r[i][i];
    }
    beta
}

fn assemble(factor: Factor, order: Vec<usize>, with_intercept: bool) -> Fit {
    let beta = back_substitute(&factor.r, &factor.qty);
    let per_column: Vec<f64> = factor
        .slots
        .iter()
        .map(|s| match s {
            Slot::Accepted(i) => beta[*i],
            Slot::Dependent => 0.0,
        })
        .collect();
    let (intercept, coefs) = if with_intercept {
        (Some(per_column[0]), &per_column[1..])
    } else {
        (None, &per_column[..])
    };
    let mut pairs: Vec<(usize, f64)> = order.iter().copied().zip(coefs.iter().copied()).collect();
    pairs.sort_by_key(|p| p.0);
    let dependent = factor.slots.contains(&Slot::Dependent);
    let condition_flag = dependent || condition_of(&factor.r) > CONDITION_LIMIT;
    let rss = dot(&factor.residual, &factor.residual);
    let n_obs = factor.residual.len();
    let mut model = RegressionModel {
        regressors: pairs.iter().map(|p| p.0).collect(),
        coefficients: pairs.iter().map(|p| p.1).collect(),
        intercept,
        rss,
        n_obs,
        bic: 0.0,
        condition_flag,
    };
    model.bic = bic(&model);
    Fit {
        model,
        factor: Arc::new(factor),
        order,
    }
}

/// Least-squares fit of `y` on `columns` (plus an intercept if requested).
///
/// Regressor ids are the column positions `0..columns.len()`.
pub fn fit(y: &[f64], columns: &[&[f64]], with_intercept: bool) -> Result<Fit> {
    let ids: Vec<usize> = (0..columns.len()).collect();
    fit_with_ids(y, columns, &ids, with_intercept)
}

fn fit_with_ids(y: &[f64], columns: &[&[f64]], ids: &[usize], with_intercept: bool) -> Result<Fit> {
    validate(y, columns, with_intercept)?;
    let n = y.len();
    let ones = vec![1.0; n];
    let design: Vec<&[f64]> = with_intercept
        .then_some(ones.as_slice())
        .into_iter()
        .chain(columns.iter().copied())
        .collect();

    let mut reflectors: Vec<Vec<f64>> = Vec::new();
    let mut r: Vec<Vec<f64>> = Vec::new();
    let mut slots = Vec::with_capacity(design.len());
    for col in &design {
        let mut v = col.to_vec();
        for (i, u) in reflectors.iter().enumerate() {
            reflect(u, i, &mut v);
        }
        let rank = reflectors.len();
        let tail = norm(&v[rank..]);
        let scale = norm(col);
        if scale == 0.0 || tail <= DEPENDENCE_TOL * scale {
            slots.push(Slot::Dependent);
            continue;
        }
        let sign = if v[rank] >= 0.0 { 1.0 } else { -1.0 };
        let mut u = v[rank..].to_vec();
        u[0] += sign * tail;
        let mut rcol = v[..rank].to_vec();
        rcol.push(-sign * tail);
        reflectors.push(u);
        r.push(rcol);
        slots.push(Slot::Accepted(rank));
    }
    let rank = reflectors.len();

    let mut hy = y.to_vec();
    for (i, u) in reflectors.iter().enumerate() {
        reflect(u, i, &mut hy);
    }
    let qty = hy[..rank].to_vec();
    // residual = Q_full · [0; (Qᵀy)_tail]
    let mut residual = hy;
    residual[..rank].iter_mut().for_each(|x| *x = 0.0);
    for (i, u) in reflectors.iter().enumerate().rev() {
        reflect(u, i, &mut residual);
    }
    let q: Vec<Vec<f64>> = (0..rank)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            for (i, u) in reflectors.iter().enumerate().rev() {
                reflect(u, i, &mut e);
            }
            e
        })
        .collect();

    let factor = Factor {
        q,
        r,
        qty,
        residual,
        slots,
    };
    Ok(assemble(factor, ids.to_vec(), with_intercept))
}

/// Extends a fitted model by one column without refactoring.
///
/// The result matches [`fit`] on the extended subset up to rounding.
pub fn refit_extend(parent: &Fit, column: &[f64], id: usize) -> Result<Fit> {
    let n = parent.factor.residual.len();
    if parent.order.contains(&id) {
        return Err(Error::Input(format!("regressor {id} is already in the model")));
    }
    if column.len() != n {
        return Err(Error::Alignment(format!(
            "new column has {} rows, model has {n}",
            column.len()
        )));
    }
    if column.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("new column contains non-finite values".into()));
    }
    let with_intercept = parent.model.intercept.is_some();
    let k = parent.factor.slots.len() + 1;
    if k >= n {
        return Err(Error::Input(format!(
            "{k} design columns need more than {k} observations, got {n}"
        )));
    }
    let f = &parent.factor;
    let mut w = column.to_vec();
    let mut s = vec![0.0; f.q.len()];
    for _ in 0..2 {
        for (si, q) in s.iter_mut().zip(&f.q) {
            let c = dot(q, &w);
            *si += c;
            w.iter_mut().zip(q).for_each(|(x, qi)| *x -= c * qi);
        }
    }
    let nu = norm(&w);
    let scale = norm(column);
    let mut factor = Factor::clone(f);
    if scale == 0.0 || nu <= DEPENDENCE_TOL * scale {
        factor.slots.push(Slot::Dependent);
    } else {
        w.iter_mut().for_each(|x| *x /= nu);
        let gamma = dot(&w, &f.residual);
        factor
            .residual
            .iter_mut()
            .zip(&w)
            .for_each(|(r, qi)| *r -= gamma * qi);
        s.push(nu);
        factor.slots.push(Slot::Accepted(factor.q.len()));
        factor.q.push(w);
        factor.r.push(s);
        factor.qty.push(gamma);
    }
    let mut order = parent.order.clone();
    order.push(id);
    Ok(assemble(factor, order, with_intercept))
}

/// Response plus named candidate regressors, restricted to valid observations.
///
/// Columns are held in lexicographic name order, so regressor indices order
/// models the same way names do.
#[derive(Debug, Clone)]
pub struct Design {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    response: Vec<f64>,
    intercept: bool,
}

impl Design {
    pub fn new(
        names: Vec<String>,
        columns: Vec<Vec<f64>>,
        response: Vec<f64>,
        intercept: bool,
    ) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::Input(format!(
                "{} names for {} columns",
                names.len(),
                columns.len()
            )));
        }
        if names.is_empty() {
            return Err(Error::Input("design has no candidate regressors".into()));
        }
        let refs: Vec<&[f64]> = columns.iter().map(|c| c.as_slice()).collect();
        if response.is_empty() || response.len() <= 1 + usize::from(intercept) {
            return Err(Error::Input(format!(
                "too few observations ({}) for any model",
                response.len()
            )));
        }
        validate(&response, &[], intercept)?;
        for (j, c) in refs.iter().enumerate() {
            if c.len() != response.len() {
                return Err(Error::Alignment(format!(
                    "column '{}' has {} rows, response has {}",
                    names[j],
                    c.len(),
                    response.len()
                )));
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::Input(format!("column '{}' contains non-finite values", names[j])));
            }
        }
        let mut idx: Vec<usize> = (0..names.len()).collect();
        idx.sort_by(|a, b| names[*a].cmp(&names[*b]));
        if let Some(w) = idx.windows(2).find(|w| names[w[0]] == names[w[1]]) {
            return Err(Error::Input(format!("duplicate regressor name '{}'", names[w[0]])));
        }
        let mut names = names;
        let mut columns = columns;
        let names_sorted = idx.iter().map(|i| std::mem::take(&mut names[*i])).collect();
        let columns_sorted = idx.iter().map(|i| std::mem::take(&mut columns[*i])).collect();
        Ok(Self {
            names: names_sorted,
            columns: columns_sorted,
            response,
            intercept,
        })
    }

    /// Spectral design: the observed spectrum regressed on every library
    /// spectrum, no intercept, restricted to bands valid in both.
    pub fn from_library(library: &SpectralLibrary, observed: &Spectrum) -> Result<Self> {
        observed.require_grid(library.grid())?;
        let keep: Vec<usize> = (0..library.grid().len())
            .filter(|b| library.band_mask()[*b] && observed.is_valid(*b))
            .collect();
        let pick = |v: &[f64]| keep.iter().map(|b| v[*b]).collect::<Vec<_>>();
        Self::new(
            library.spectra().iter().map(|s| s.name.clone()).collect(),
            library.spectra().iter().map(|s| pick(&s.values)).collect(),
            pick(&observed.values),
            false,
        )
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.binary_search_by(|n| n.as_str().cmp(name)).ok()
    }

    pub fn column(&self, i: usize) -> &[f64] {
        &self.columns[i]
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    pub fn intercept(&self) -> bool {
        self.intercept
    }

    pub fn n_obs(&self) -> usize {
        self.response.len()
    }

    pub fn n_regressors(&self) -> usize {
        self.names.len()
    }

    /// Same design with the response multiplied by `alpha`.
    pub fn scaled_response(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.response.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    /// Fits the model over the given regressor indices.
    pub fn fit_subset(&self, subset: &[usize]) -> Result<Fit> {
        let cols: Vec<&[f64]> = subset.iter().map(|i| self.columns[*i].as_slice()).collect();
        fit_with_ids(&self.response, &cols, subset, self.intercept)
    }

    pub fn extend(&self, parent: &Fit, regressor: usize) -> Result<Fit> {
        refit_extend(parent, &self.columns[regressor], regressor)
    }

    pub fn regressor_names(&self, model: &RegressionModel) -> Vec<String> {
        model.regressors.iter().map(|i| self.names[*i].clone()).collect()
    }
}
