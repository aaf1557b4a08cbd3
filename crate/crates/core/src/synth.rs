//! Seeded synthetic spectra, libraries, scenes and regression instances.
//!
//! Everything here is deterministic given its seed and is used to exercise
//! the pipeline against known ground truth.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Dirichlet, Distribution, Normal, StandardNormal};

use crate::detection::BoundingBox;
use crate::error::Result;
use crate::regression::Design;
use crate::spectral::{mix, BandGrid, ImageCube, SpectralLibrary, Spectrum};

/// Smooth reflectance curve: a flat baseline plus six Gaussian features,
/// clipped to `[0.02, 0.95]`.
pub fn smooth_spectrum(rng: &mut impl Rng, grid: &BandGrid) -> Vec<f64> {
    let (lo, hi) = (grid.first(), grid.last());
    let mut v = vec![rng.gen_range(0.1..0.5); grid.len()];
    for _ in 0..6 {
        let center = rng.gen_range(lo..hi);
        let width = rng.gen_range(0.05..0.4);
        let amp = rng.gen_range(-0.15..0.15);
        for (x, w) in v.iter_mut().zip(grid.wavelengths()) {
            *x += amp * (-0.5 * ((w - center) / width).powi(2)).exp();
        }
    }
    v.iter_mut().for_each(|x| *x = x.clamp(0.02, 0.95));
    v
}

/// Adds three broad random Gaussian features of standard deviation `amplitude`.
pub fn perturb(rng: &mut impl Rng, grid: &BandGrid, base: &[f64], amplitude: f64) -> Vec<f64> {
    let (lo, hi) = (grid.first(), grid.last());
    let mut v = base.to_vec();
    for _ in 0..3 {
        let center = rng.gen_range(lo..hi);
        let width = rng.gen_range(0.1..0.5);
        let a: f64 = rng.sample::<f64, _>(StandardNormal) * amplitude;
        for (x, w) in v.iter_mut().zip(grid.wavelengths()) {
            *x += a * (-0.5 * ((w - center) / width).powi(2)).exp();
        }
    }
    v
}

/// Material classes of the synthetic library; index 0 is the target.
pub const MATERIALS: [[&str; 3]; 12] = [
    ["Fabric", "Polymer", "Nylon"],
    ["Vegetation", "Grass", "Turf"],
    ["Soil", "Mineral", "Clay"],
    ["Vegetation", "Tree", "Conifer"],
    ["Fabric", "Polymer", "Polyester"],
    ["Fabric", "Natural", "Cotton"],
    ["Paint", "Vehicle", "Green"],
    ["Paint", "Vehicle", "Tan"],
    ["Soil", "Mineral", "Sand"],
    ["Vegetation", "Tree", "Deciduous"],
    ["Fabric", "Natural", "Wool"],
    ["Pavement", "Road", "Asphalt"],
];

#[derive(Debug, Clone)]
pub struct LibraryConfig {
    pub bands: usize,
    pub spectra: usize,
    pub target_variants: usize,
    /// Spread of same-class variants of the target.
    pub target_variant_amplitude: f64,
    /// Spread of same-class variants of every other material.
    pub variant_amplitude: f64,
}

impl Default for LibraryConfig {
    fn default() -> Self {
        Self {
            bands: 100,
            spectra: 40,
            target_variants: 4,
            target_variant_amplitude: 0.001,
            variant_amplitude: 0.004,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticLibrary {
    pub library: SpectralLibrary,
    pub target_class: Vec<String>,
    pub target_members: Vec<String>,
    /// One spectrum from each of three background materials.
    pub backgrounds: Vec<Spectrum>,
    /// A fresh draw of the target material that is not itself in the library.
    pub true_target: Spectrum,
}

fn labels(path: &[&str]) -> Vec<String> {
    path.iter().map(|s| s.to_string()).collect()
}

/// A 3-level library: `target_variants` close variants of the target
/// material, the remaining spectra spread round-robin over eleven others.
pub fn synthetic_library(seed: u64, config: &LibraryConfig) -> Result<SyntheticLibrary> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = Arc::new(BandGrid::linspace(0.4, 2.5, config.bands)?);
    let prototypes: Vec<Vec<f64>> = (0..MATERIALS.len()).map(|_| smooth_spectrum(&mut rng, &grid)).collect();
    let mut spectra = Vec::with_capacity(config.spectra);
    let mut counts = [0usize; MATERIALS.len()];
    let mut add = |rng: &mut ChaCha8Rng, m: usize, amp: f64, spectra: &mut Vec<Spectrum>| -> Result<()> {
        counts[m] += 1;
        let values = perturb(rng, &grid, &prototypes[m], amp);
        spectra.push(Spectrum::new(
            format!("{} {}", MATERIALS[m][2], counts[m]),
            Arc::clone(&grid),
            values,
            labels(&MATERIALS[m]),
        )?);
        Ok(())
    };
    for _ in 0..config.target_variants {
        add(&mut rng, 0, config.target_variant_amplitude, &mut spectra)?;
    }
    let others = MATERIALS.len() - 1;
    let mut i = 0;
    while spectra.len() < config.spectra {
        add(&mut rng, 1 + i % others, config.variant_amplitude, &mut spectra)?;
        i += 1;
    }
    let target_values = perturb(&mut rng, &grid, &prototypes[0], config.target_variant_amplitude);
    let true_target = Spectrum::new("true target", Arc::clone(&grid), target_values, labels(&MATERIALS[0]))?;
    let backgrounds = [1usize, 2, 3]
        .iter()
        .map(|m| {
            let name = format!("{} 1", MATERIALS[*m][2]);
            spectra.iter().find(|s| s.name == name).cloned().expect("every background material has a first variant")
        })
        .collect();
    let target_members = spectra.iter().filter(|s| s.class_path == labels(&MATERIALS[0])).map(|s| s.name.clone()).collect();
    Ok(SyntheticLibrary {
        library: SpectralLibrary::new(grid, spectra)?,
        target_class: labels(&MATERIALS[0]),
        target_members,
        backgrounds,
        true_target,
    })
}

#[derive(Debug, Clone)]
pub struct SceneConfig {
    pub rows: usize,
    pub cols: usize,
    pub target_abundance: f64,
    pub noise_sigma: f64,
    pub implant_size: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            rows: 32,
            cols: 32,
            target_abundance: 0.4,
            noise_sigma: 0.005,
            implant_size: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub cube: ImageCube,
    pub implant: Vec<(usize, usize)>,
    pub implant_bbox: BoundingBox,
}

/// Background pixels are Dirichlet(2,2,2) mixtures of the three background
/// spectra; an `implant_size` square is replaced by
/// `a·target + (1 − a)·background`. Every pixel gets independent noise.
pub fn synthetic_scene(seed: u64, lib: &SyntheticLibrary, config: &SceneConfig) -> Result<Scene> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = Arc::clone(lib.library.grid());
    let dirichlet = Dirichlet::new(&[2.0, 2.0, 2.0]).expect("valid concentration");
    let k = config.implant_size;
    let r0 = rng.gen_range(4..config.rows - k - 4);
    let c0 = rng.gen_range(4..config.cols - k - 4);
    let a = config.target_abundance;
    let mut data = Vec::with_capacity(config.rows * config.cols * grid.len());
    let mut implant = Vec::new();
    for r in 0..config.rows {
        for c in 0..config.cols {
            let w: Vec<f64> = dirichlet.sample(&mut rng);
            let inside = (r0..r0 + k).contains(&r) && (c0..c0 + k).contains(&c);
            let scale = if inside { 1.0 - a } else { 1.0 };
            let mut parts: Vec<(&Spectrum, f64)> = lib.backgrounds.iter().zip(&w).map(|(s, x)| (s, x * scale)).collect();
            if inside {
                parts.push((&lib.true_target, a));
                implant.push((r, c));
            }
            let pixel = mix(&parts, config.noise_sigma, rng.gen())?;
            data.extend_from_slice(&pixel.values);
        }
    }
    Ok(Scene {
        cube: ImageCube::new(config.rows, config.cols, grid, data)?,
        implant,
        implant_bbox: BoundingBox {
            row_min: r0,
            row_max: r0 + k - 1,
            col_min: c0,
            col_max: c0 + k - 1,
        },
    })
}

/// Random regression instance: `p` i.i.d. standard normal columns named
/// `x00…`, response built from 1–3 of them with coefficients of magnitude
/// 0.3–1.0 plus unit-variance noise. No intercept.
pub fn random_design(seed: u64, p: usize, n: usize) -> Result<Design> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let columns: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect()).collect();
    let active = rng.gen_range(1..=3.min(p));
    let mut y: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let mut chosen: Vec<usize> = Vec::new();
    while chosen.len() < active {
        let j = rng.gen_range(0..p);
        if !chosen.contains(&j) {
            chosen.push(j);
        }
    }
    for j in chosen {
        let b = rng.gen_range(0.3..1.0) * if rng.gen::<bool>() { 1.0 } else { -1.0 };
        y.iter_mut().zip(&columns[j]).for_each(|(v, x)| *v += b * x);
    }
    Design::new((0..p).map(|j| format!("x{j:02}")).collect(), columns, y, false)
}

/// Pure-noise response over `p` standard normal predictors, with intercept.
pub fn null_design(seed: u64, p: usize, n: usize) -> Result<Design> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let columns: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| normal.sample(&mut rng)).collect()).collect();
    let y: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
    Design::new((0..p).map(|j| format!("x{j}")).collect(), columns, y, true)
}
