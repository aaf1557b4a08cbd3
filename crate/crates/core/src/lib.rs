//! Hierarchical material identification for hyperspectral pixels.
//!
//! An observed spectrum is regressed on subsets of a labelled spectral
//! library. Each subset's BIC gives an approximate model likelihood; the
//! normalized likelihoods are averaged into per-spectrum inclusion
//! probabilities and, by summing over models that contain any member of a
//! class, into probabilities for every node of the class hierarchy.
//!
//! Modules:
//! - [`spectral`]: grids, spectra, libraries, cubes, class hierarchy
//! - [`regression`]: least-squares fits, BIC, incremental extension
//! - [`search`]: exhaustive, Occam's window and MC³ model search
//! - [`aggregate`]: posteriors, inclusion probabilities, identification trees
//! - [`detection`]: ACE detection, ROIs, background removal
//! - [`io`]: ENVI cubes, library CSV, result documents
//!
//! With the default `parallel` feature, candidate fitting and per-pixel
//! scoring run on rayon; results do not depend on the thread count.

pub mod aggregate;
pub mod detection;
pub mod error;
pub mod identify;
pub mod io;
mod par;
pub mod regression;
pub mod search;
pub mod spectral;
pub mod synth;

pub use aggregate::{
    averaged_coefficients, build_tree, class_probability, inclusion_probability, normalize, IdentificationTree,
    Inclusion, InclusionReport, ModelPosterior, TreeNode,
};
pub use detection::{ace_score, background_removal, background_stats, detect, BackgroundStats, DetectionMap};
pub use error::{Error, Result};
pub use par::is_parallel;
pub use regression::{bic, fit, log_likelihood, refit_extend, Design, Fit, ModelPrior, RegressionModel};
pub use search::{exhaustive_search, mc3_search, occam_search, ModelSet, SearchConfig, Strategy};
pub use spectral::{mix, resample, BandGrid, ClassHierarchy, ImageCube, NodeId, SpectralLibrary, Spectrum};
