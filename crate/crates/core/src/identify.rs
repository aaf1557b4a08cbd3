//! End-to-end identification: search, normalize, aggregate, build the tree.

use crate::aggregate::{averaged_coefficients, build_tree, normalize, IdentificationTree, InclusionReport, ModelPosterior};
use crate::error::Result;
use crate::regression::Design;
use crate::search::{search, SearchConfig};
use crate::spectral::{ClassHierarchy, SpectralLibrary, Spectrum};

#[derive(Debug, Clone)]
pub struct Identification {
    pub posterior: ModelPosterior,
    pub report: InclusionReport,
    pub tree: IdentificationTree,
}

/// Averages over models of `design` and annotates `hierarchy` with class probabilities.
pub fn run(design: &Design, hierarchy: &ClassHierarchy, config: &SearchConfig) -> Result<Identification> {
    let models = search(design, config)?;
    let posterior = normalize(&models, &config.prior)?;
    let report = averaged_coefficients(&posterior);
    let tree = build_tree(&posterior, hierarchy);
    Ok(Identification { posterior, report, tree })
}

/// Identifies the material(s) in `observed` against `library`.
pub fn identify(library: &SpectralLibrary, observed: &Spectrum, config: &SearchConfig) -> Result<Identification> {
    let design = Design::from_library(library, observed)?;
    run(&design, library.hierarchy(), config)
}
