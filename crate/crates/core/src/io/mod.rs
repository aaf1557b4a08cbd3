//! File formats: ENVI cubes, library CSV/hierarchy JSON, tabular CSV, and result documents.

pub mod envi;
pub mod library;
pub mod results;

pub use envi::{read_envi, write_envi, DataType, EnviHeader, EnviWriteOptions, Interleave, WavelengthUnits};
pub use library::{read_hierarchy, read_library, read_spectrum, read_table, write_library, write_spectra_csv, Table};
pub use results::{
    read_results_json, read_rois, render_tree_dot, write_detection, write_results_json, write_tree_dot, DotOptions,
    ResultsDocument,
};
