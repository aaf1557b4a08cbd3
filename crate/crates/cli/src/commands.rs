use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use matid_core::detection::{annulus_coords, background_removal, background_stats, detect, ANNULUS_MAX_SPECTRA};
use matid_core::identify::{self, Identification};
use matid_core::io::envi::default_data_path;
use matid_core::io::library::{library_from_table, read_spectra_csv};
use matid_core::io::results::{
    read_rois, render_inclusion_csv, render_tree_text, write_detection, write_results_json, write_tree_dot,
    DotOptions, RoiRecord,
};
use matid_core::io::{read_envi, read_hierarchy, read_spectrum, read_table};
use matid_core::{resample, ClassHierarchy, Error, ImageCube, Result, SearchConfig, SpectralLibrary, Spectrum};

use crate::{BmaTableArgs, Cli, Command, DetectArgs, IdentifyArgs, SearchArgs};

pub fn run(cli: &Cli) -> Result<()> {
    configure_threads(cli.threads)?;
    match &cli.command {
        Command::Detect(a) => cmd_detect(cli, a),
        Command::Identify(a) => cmd_identify(cli, a),
        Command::BmaTable(a) => cmd_bma_table(cli, a),
    }
}

#[cfg(feature = "parallel")]
fn configure_threads(threads: usize) -> Result<()> {
    if threads == 0 {
        return Ok(());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::Input(format!("cannot start {threads} worker threads: {e}")))
}

#[cfg(not(feature = "parallel"))]
fn configure_threads(_threads: usize) -> Result<()> {
    Ok(())
}

fn output_dir(cli: &Cli) -> Result<&Path> {
    let dir = cli.output_dir.as_path();
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    Ok(dir)
}

fn write_text(path: PathBuf, text: &str) -> Result<()> {
    std::fs::write(&path, text).map_err(|source| Error::Io { path, source })
}

fn search_config(cli: &Cli, s: &SearchArgs, default_max: usize) -> Result<SearchConfig> {
    let config = SearchConfig {
        max_size: s.max_size.unwrap_or(default_max),
        window_ratio: s.window_c,
        strategy: s.strategy.into(),
        mc3_iterations: s.iterations,
        mc3_chains: s.chains,
        seed: cli.seed,
        exclude_dominated: s.submodel_exclusion,
        ..SearchConfig::default()
    };
    config.validate()?;
    Ok(config)
}

fn load_cube(header: &Path, data: Option<&PathBuf>) -> Result<ImageCube> {
    let data = data.cloned().unwrap_or_else(|| default_data_path(header));
    read_envi(header, &data)
}

/// Finds `name` in a spectra CSV and puts it on `grid`, resampling only when allowed.
fn load_target(lib: &Path, name: &str, grid: &Arc<matid_core::BandGrid>, allow_resample: bool) -> Result<Spectrum> {
    let table = read_spectra_csv(lib)?;
    let i = table.names.iter().position(|n| n == name).ok_or_else(|| {
        Error::Input(format!("target '{name}' not found in {}", lib.display()))
    })?;
    let target = Spectrum::unlabeled(name, Arc::clone(&table.grid), table.values[i].clone())?;
    if target.require_grid(grid).is_ok() {
        return resample(&target, grid);
    }
    if !allow_resample {
        return Err(Error::Alignment(format!(
            "target '{name}' has {} bands but the cube has {}; pass --resample to interpolate",
            target.len(),
            grid.len()
        )));
    }
    let t = resample(&target, grid)?;
    if t.valid.as_ref().is_some_and(|v| v.iter().any(|ok| !ok)) {
        return Err(Error::Alignment(format!(
            "target '{name}' does not cover the cube's wavelength range"
        )));
    }
    Ok(t)
}

fn cmd_detect(cli: &Cli, a: &DetectArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&a.shrinkage) {
        return Err(Error::Input(format!("--shrinkage must lie in [0, 1], got {}", a.shrinkage)));
    }
    if !(a.threshold > -1.0 && a.threshold < 1.0) {
        return Err(Error::Input(format!("--threshold must lie in (-1, 1), got {}", a.threshold)));
    }
    let dir = output_dir(cli)?;
    let cube = load_cube(&a.cube, a.data.as_ref())?;
    let target = load_target(&a.target_lib, &a.target, cube.grid(), a.resample)?;
    let stats = background_stats(&cube, a.shrinkage, None)?;
    let detection = detect(&cube, &target, &stats, a.threshold)?;
    write_detection(dir, &detection, &a.target, a.threshold, a.shrinkage)?;
    println!(
        "{} ROI(s) above {} (max score {:.4})",
        detection.rois.len(),
        a.threshold,
        detection.map.scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    );
    Ok(())
}

fn parse_coords(s: &str) -> Result<Vec<(usize, usize)>> {
    s.split(',')
        .map(|pair| {
            let (r, c) = pair
                .split_once(':')
                .ok_or_else(|| Error::Input(format!("background coordinate '{pair}' is not row:col")))?;
            let num = |x: &str| {
                x.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Input(format!("background coordinate '{pair}' is not row:col")))
            };
            Ok((num(r)?, num(c)?))
        })
        .collect()
}

fn load_library(a: &IdentifyArgs) -> Result<SpectralLibrary> {
    let table = read_spectra_csv(&a.library)?;
    let classes = match &a.hierarchy {
        Some(p) => read_hierarchy(p)?,
        None => BTreeMap::new(),
    };
    library_from_table(table, &classes)
}

fn cmd_identify(cli: &Cli, a: &IdentifyArgs) -> Result<()> {
    let config = search_config(cli, &a.search, 4)?;
    let coords = if a.backgrounds == "auto" { None } else { Some(parse_coords(&a.backgrounds)?) };
    let dir = output_dir(cli)?;
    let mut library = load_library(a)?;

    let observed = match (&a.spectrum, &a.cube, &a.roi) {
        (Some(path), _, _) => read_spectrum(path)?,
        (None, Some(header), Some(roi_path)) => {
            let cube = load_cube(header, a.data.as_ref())?;
            let rois = read_rois(roi_path)?;
            let roi: &RoiRecord = rois.get(a.roi_id).ok_or_else(|| {
                Error::Bounds(format!("ROI {} requested but {} has {}", a.roi_id, roi_path.display(), rois.len()))
            })?;
            let pixel = cube.average_pixels(&roi.pixels)?;
            if a.background_removal {
                let target_name = a.target.as_deref().expect("clap requires --target");
                let target_lib = a.target_lib.as_ref().unwrap_or(&a.library);
                let target = load_target(target_lib, target_name, cube.grid(), a.resample)?;
                let coords = match &coords {
                    Some(c) => c.clone(),
                    None => annulus_coords(&roi.bbox, cube.rows(), cube.cols(), ANNULUS_MAX_SPECTRA),
                };
                if coords.is_empty() {
                    return Err(Error::Input("no background pixels available around the ROI".into()));
                }
                let backgrounds = coords
                    .iter()
                    .map(|(r, c)| cube.extract_pixel(*r, *c))
                    .collect::<Result<Vec<_>>>()?;
                let removed = background_removal(&pixel, &target, &backgrounds)?;
                println!(
                    "background removal: target abundance {:.4}, {} background spectra",
                    removed.target_abundance,
                    backgrounds.len()
                );
                removed.spectrum
            } else {
                pixel
            }
        }
        _ => return Err(Error::Input("give either --spectrum or --cube with --roi".into())),
    };

    if observed.require_grid(library.grid()).is_err() {
        if !a.resample {
            return Err(Error::Alignment(format!(
                "observed spectrum has {} bands but the library has {}; pass --resample to interpolate",
                observed.len(),
                library.grid().len()
            )));
        }
        library = library.resample(&observed.grid)?;
    }
    let observed = resample(&observed, library.grid())?;

    let Identification { posterior, report, tree } = identify::identify(&library, &observed, &config)?;
    write_results_json(&posterior, &report, &tree, &dir.join("results.json"))?;
    write_tree_dot(&tree, &dir.join("tree.dot"), DotOptions { conditional: a.conditional })?;
    print!("{}", render_tree_text(&tree));
    Ok(())
}

/// Class paths for tabular predictors: grouped predictors sit under their
/// group, every other predictor is its own class.
fn table_hierarchy(predictors: &[String], groups: &BTreeMap<String, Vec<String>>) -> Result<ClassHierarchy> {
    let mut paths: BTreeMap<&str, Vec<String>> = predictors.iter().map(|p| (p.as_str(), vec![p.clone()])).collect();
    for (group, members) in groups {
        for m in members {
            let path = paths
                .get_mut(m.as_str())
                .ok_or_else(|| Error::Input(format!("group '{group}' names unknown predictor '{m}'")))?;
            if path.len() > 1 || path[0] != *m {
                return Err(Error::Input(format!("predictor '{m}' is in more than one group")));
            }
            *path = vec![group.clone(), m.clone()];
        }
    }
    ClassHierarchy::from_paths(paths.iter().map(|(n, p)| (*n, p.as_slice())))
}

fn cmd_bma_table(cli: &Cli, a: &BmaTableArgs) -> Result<()> {
    let groups: BTreeMap<String, Vec<String>> = match &a.groups {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|source| Error::Io { path: p.clone(), source })?;
            serde_json::from_str(&text).map_err(|e| Error::Parse {
                path: p.clone(),
                message: e.to_string(),
            })?
        }
        None => BTreeMap::new(),
    };
    // validate the search flags before touching the data
    search_config(cli, &a.search, 1)?;
    let dir = output_dir(cli)?;
    let mut table = read_table(&a.csv)?;
    table.log_transform(&a.log)?;
    let design = table.design(&a.response)?;
    let config = search_config(cli, &a.search, design.n_regressors())?;
    let hierarchy = table_hierarchy(design.names(), &groups)?;

    let Identification { posterior, report, tree } = identify::run(&design, &hierarchy, &config)?;
    write_results_json(&posterior, &report, &tree, &dir.join("results.json"))?;
    write_text(dir.join("inclusion.csv"), &render_inclusion_csv(&report))?;
    write_tree_dot(&tree, &dir.join("tree.dot"), DotOptions::default())?;
    println!("{} models retained", posterior.models.len());
    for (name, r) in &report.regressors {
        println!("{name:>12}  {:6.1}", r.inclusion * 100.0);
    }
    Ok(())
}
