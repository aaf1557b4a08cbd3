//! Spectra, band grids, image cubes and the material class hierarchy.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Name of the synthetic root class every hierarchy hangs off.
pub const ROOT_CLASS: &str = "Library";

/// Class assigned to spectra that have no hierarchy entry.
pub const UNLABELED_CLASS: &str = "Unlabeled";

/// Band-center wavelengths in micrometers, strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct BandGrid {
    wavelengths: Vec<f64>,
}

impl BandGrid {
    pub fn new(wavelengths: Vec<f64>) -> Result<Self> {
        if wavelengths.len() < 2 {
            return Err(Error::Input(format!(
                "band grid needs at least 2 bands, got {}",
                wavelengths.len()
            )));
        }
        if let Some(w) = wavelengths.iter().find(|w| !w.is_finite() || **w <= 0.0) {
            return Err(Error::Input(format!(
                "band wavelengths must be finite and positive, found {w}"
            )));
        }
        if let Some(i) = wavelengths.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Input(format!(
                "band wavelengths must be strictly increasing (band {} = {}, band {} = {})",
                i,
                wavelengths[i],
                i + 1,
                wavelengths[i + 1]
            )));
        }
        Ok(Self { wavelengths })
    }

    /// Builds a grid from nanometer wavelengths.
    pub fn from_nanometers(nm: &[f64]) -> Result<Self> {
        Self::new(nm.iter().map(|w| w / 1000.0).collect())
    }

    /// Evenly spaced grid, inclusive of both ends.
    pub fn linspace(start_um: f64, end_um: f64, bands: usize) -> Result<Self> {
        if bands < 2 {
            return Err(Error::Input("linspace needs at least 2 bands".into()));
        }
        let step = (end_um - start_um) / (bands - 1) as f64;
        Self::new((0..bands).map(|i| start_um + step * i as f64).collect())
    }

    pub fn wavelengths(&self) -> &[f64] {
        &self.wavelengths
    }

    pub fn len(&self) -> usize {
        self.wavelengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wavelengths.is_empty()
    }

    pub fn first(&self) -> f64 {
        self.wavelengths[0]
    }

    pub fn last(&self) -> f64 {
        self.wavelengths[self.wavelengths.len() - 1]
    }

    /// Keeps only the bands where `keep` is true.
    pub fn select(&self, keep: &[bool]) -> Result<Self> {
        Self::new(
            self.wavelengths
                .iter()
                .zip(keep)
                .filter(|(_, k)| **k)
                .map(|(w, _)| *w)
                .collect(),
        )
    }
}

pub(crate) fn same_grid(a: &Arc<BandGrid>, b: &Arc<BandGrid>) -> bool {
    Arc::ptr_eq(a, b) || a.wavelengths == b.wavelengths
}

/// A named reflectance vector on a band grid.
///
/// `valid` marks bands that carry data; bands outside a resampling source
/// range are invalid and are excluded by every numerical consumer.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub name: String,
    pub grid: Arc<BandGrid>,
    pub values: Vec<f64>,
    pub class_path: Vec<String>,
    pub valid: Option<Vec<bool>>,
}

impl Spectrum {
    pub fn new(
        name: impl Into<String>,
        grid: Arc<BandGrid>,
        values: Vec<f64>,
        class_path: Vec<String>,
    ) -> Result<Self> {
        let name = name.into();
        if values.len() != grid.len() {
            return Err(Error::Alignment(format!(
                "spectrum '{name}' has {} values for a {}-band grid",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!(
                "spectrum '{name}' has a non-finite value at band {i}"
            )));
        }
        Ok(Self {
            name,
            grid,
            values,
            class_path,
            valid: None,
        })
    }

    /// An unlabeled spectrum (empty class path), as extracted from imagery.
    pub fn unlabeled(name: impl Into<String>, grid: Arc<BandGrid>, values: Vec<f64>) -> Result<Self> {
        Self::new(name, grid, values, Vec::new())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_valid(&self, band: usize) -> bool {
        self.valid.as_ref().is_none_or(|v| v[band])
    }

    pub fn require_grid(&self, grid: &Arc<BandGrid>) -> Result<()> {
        if same_grid(&self.grid, grid) {
            Ok(())
        } else {
            Err(Error::Alignment(format!(
                "spectrum '{}' is on a different band grid ({} bands, {:.4}-{:.4} um) than expected ({} bands, {:.4}-{:.4} um); resample first",
                self.name,
                self.grid.len(),
                self.grid.first(),
                self.grid.last(),
                grid.len(),
                grid.first(),
                grid.last()
            )))
        }
    }
}

/// Linearly interpolates `spectrum` onto `target`.
///
/// Target bands outside the source wavelength range are marked invalid and
/// set to zero. Name and class path are preserved.
pub fn resample(spectrum: &Spectrum, target: &Arc<BandGrid>) -> Result<Spectrum> {
    if same_grid(&spectrum.grid, target) {
        let mut out = spectrum.clone();
        out.grid = Arc::clone(target);
        return Ok(out);
    }
    let src = spectrum.grid.wavelengths();
    let (lo, hi) = (spectrum.grid.first(), spectrum.grid.last());
    if target.last() < lo || target.first() > hi {
        return Err(Error::Alignment(format!(
            "no wavelength overlap between '{}' ({lo:.4}-{hi:.4} um) and target grid ({:.4}-{:.4} um)",
            spectrum.name,
            target.first(),
            target.last()
        )));
    }
    let mut values = Vec::with_capacity(target.len());
    let mut valid = Vec::with_capacity(target.len());
    for &w in target.wavelengths() {
        if w < lo || w > hi {
            values.push(0.0);
            valid.push(false);
            continue;
        }
        // first source index with wavelength >= w
        let j = src.partition_point(|s| *s < w);
        let (v, ok) = if src[j] == w {
            (spectrum.values[j], spectrum.is_valid(j))
        } else {
            let (w0, w1) = (src[j - 1], src[j]);
            let t = (w - w0) / (w1 - w0);
            (
                spectrum.values[j - 1] * (1.0 - t) + spectrum.values[j] * t,
                spectrum.is_valid(j - 1) && spectrum.is_valid(j),
            )
        };
        values.push(if ok { v } else { 0.0 });
        valid.push(ok);
    }
    Ok(Spectrum {
        name: spectrum.name.clone(),
        grid: Arc::clone(target),
        values,
        class_path: spectrum.class_path.clone(),
        valid: if valid.iter().all(|v| *v) { None } else { Some(valid) },
    })
}

/// Linear mixture `Σ aᵢ xᵢ` plus seeded per-band Gaussian noise.
pub fn mix(components: &[(&Spectrum, f64)], noise_sigma: f64, seed: u64) -> Result<Spectrum> {
    let Some((first, _)) = components.first() else {
        return Err(Error::Input("mix needs at least one component".into()));
    };
    if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
        return Err(Error::Input(format!("noise sigma must be finite and >= 0, got {noise_sigma}")));
    }
    let mut values = vec![0.0; first.len()];
    let mut valid: Option<Vec<bool>> = None;
    for (spectrum, abundance) in components {
        spectrum.require_grid(&first.grid)?;
        if !abundance.is_finite() {
            return Err(Error::Input(format!(
                "abundance for '{}' is not finite",
                spectrum.name
            )));
        }
        for (v, x) in values.iter_mut().zip(&spectrum.values) {
            *v += abundance * x;
        }
        if let Some(m) = &spectrum.valid {
            let acc = valid.get_or_insert_with(|| vec![true; m.len()]);
            acc.iter_mut().zip(m).for_each(|(a, b)| *a &= *b);
        }
    }
    if noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise_sigma).expect("sigma validated above");
        for v in &mut values {
            *v += normal.sample(&mut rng);
        }
    }
    let name = components
        .iter()
        .map(|(s, a)| format!("{a}*{}", s.name))
        .collect::<Vec<_>>()
        .join("+");
    let mut out = Spectrum::unlabeled(name, Arc::clone(&first.grid), values)?;
    out.valid = valid;
    Ok(out)
}

/// Node handle into a [`ClassHierarchy`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone)]
pub struct ClassNode {
    pub name: String,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    /// Spectra whose class path ends exactly here.
    pub direct_members: BTreeSet<String>,
    /// Spectra whose class path ends here or anywhere below.
    pub members: BTreeSet<String>,
}

/// Tree of class labels rooted at [`ROOT_CLASS`].
#[derive(Debug, Clone)]
pub struct ClassHierarchy {
    nodes: Vec<ClassNode>,
}

impl ClassHierarchy {
    /// Builds the hierarchy from `(member name, class path)` pairs. Paths are
    /// root-most first and must not include the synthetic root.
    pub fn from_paths<'a, I>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a [String])>,
    {
        let mut nodes = vec![ClassNode {
            name: ROOT_CLASS.to_string(),
            parent: None,
            children: Vec::new(),
            direct_members: BTreeSet::new(),
            members: BTreeSet::new(),
        }];
        let mut seen = BTreeSet::new();
        for (name, path) in entries {
            if !seen.insert(name.to_string()) {
                return Err(Error::Input(format!("duplicate member name '{name}'")));
            }
            if path.is_empty() {
                return Err(Error::Input(format!("member '{name}' has an empty class path")));
            }
            if path.iter().any(|p| p == ROOT_CLASS) {
                return Err(Error::Input(format!(
                    "class path for '{name}' contains the implicit root '{ROOT_CLASS}'"
                )));
            }
            let mut cur = 0usize;
            for label in path {
                let existing = nodes[cur]
                    .children
                    .iter()
                    .copied()
                    .find(|c| nodes[c.0].name == *label);
                cur = match existing {
                    Some(c) => c.0,
                    None => {
                        let id = nodes.len();
                        nodes.push(ClassNode {
                            name: label.clone(),
                            parent: Some(NodeId(cur)),
                            children: Vec::new(),
                            direct_members: BTreeSet::new(),
                            members: BTreeSet::new(),
                        });
                        nodes[cur].children.push(NodeId(id));
                        id
                    }
                };
            }
            nodes[cur].direct_members.insert(name.to_string());
        }
        // children are always created after their parent, so a reverse sweep
        // sees every child before its parent
        for i in (0..nodes.len()).rev() {
            let mut members = nodes[i].direct_members.clone();
            for c in nodes[i].children.clone() {
                members.extend(nodes[c.0].members.iter().cloned());
            }
            nodes[i].members = members;
        }
        Ok(Self { nodes })
    }

    pub fn root(&self) -> NodeId {
        NodeId(0)
    }

    pub fn node(&self, id: NodeId) -> &ClassNode {
        &self.nodes[id.0]
    }

    pub fn get(&self, id: NodeId) -> Option<&ClassNode> {
        self.nodes.get(id.0)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len()).map(NodeId)
    }

    /// Looks up a node by its label path below the root.
    pub fn find(&self, path: &[&str]) -> Option<NodeId> {
        let mut cur = self.root();
        for label in path {
            cur = self
                .node(cur)
                .children
                .iter()
                .copied()
                .find(|c| self.node(*c).name == *label)?;
        }
        Some(cur)
    }

    /// First node (breadth-first) carrying `name`.
    pub fn find_by_name(&self, name: &str) -> Option<NodeId> {
        let mut queue = std::collections::VecDeque::from([self.root()]);
        while let Some(id) = queue.pop_front() {
            if self.node(id).name == name {
                return Some(id);
            }
            queue.extend(self.node(id).children.iter().copied());
        }
        None
    }

    /// Label path from the root (exclusive) down to `id`.
    pub fn path(&self, id: NodeId) -> Vec<String> {
        let mut out = Vec::new();
        let mut cur = Some(id);
        while let Some(c) = cur {
            if c != self.root() {
                out.push(self.node(c).name.clone());
            }
            cur = self.node(c).parent;
        }
        out.reverse();
        out
    }
}

/// A band-aligned set of labeled spectra with its class hierarchy and a
/// band validity mask.
#[derive(Debug, Clone)]
pub struct SpectralLibrary {
    grid: Arc<BandGrid>,
    spectra: Vec<Spectrum>,
    hierarchy: ClassHierarchy,
    band_mask: Vec<bool>,
}

impl SpectralLibrary {
    pub fn new(grid: Arc<BandGrid>, spectra: Vec<Spectrum>) -> Result<Self> {
        if spectra.is_empty() {
            return Err(Error::Input("spectral library is empty".into()));
        }
        let mut band_mask = vec![true; grid.len()];
        for s in &spectra {
            s.require_grid(&grid)?;
            if let Some(v) = &s.valid {
                band_mask.iter_mut().zip(v).for_each(|(m, ok)| *m &= *ok);
            }
        }
        let hierarchy =
            ClassHierarchy::from_paths(spectra.iter().map(|s| (s.name.as_str(), s.class_path.as_slice())))?;
        Ok(Self {
            grid,
            spectra,
            hierarchy,
            band_mask,
        })
    }

    pub fn grid(&self) -> &Arc<BandGrid> {
        &self.grid
    }

    pub fn spectra(&self) -> &[Spectrum] {
        &self.spectra
    }

    pub fn hierarchy(&self) -> &ClassHierarchy {
        &self.hierarchy
    }

    pub fn len(&self) -> usize {
        self.spectra.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spectra.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Spectrum> {
        self.spectra.iter().find(|s| s.name == name)
    }

    /// Per-band validity; false bands are excluded from every fit.
    pub fn band_mask(&self) -> &[bool] {
        &self.band_mask
    }

    /// Marks additional bands invalid (e.g. atmospheric absorption windows).
    pub fn with_band_mask(mut self, mask: &[bool]) -> Result<Self> {
        if mask.len() != self.grid.len() {
            return Err(Error::Alignment(format!(
                "band mask has {} entries for a {}-band library",
                mask.len(),
                self.grid.len()
            )));
        }
        self.band_mask.iter_mut().zip(mask).for_each(|(m, k)| *m &= *k);
        if self.band_mask.iter().filter(|m| **m).count() < 2 {
            return Err(Error::Input("band mask leaves fewer than 2 valid bands".into()));
        }
        Ok(self)
    }

    pub fn valid_band_count(&self) -> usize {
        self.band_mask.iter().filter(|m| **m).count()
    }

    /// Resamples every spectrum onto `target`.
    pub fn resample(&self, target: &Arc<BandGrid>) -> Result<Self> {
        let spectra = self
            .spectra
            .iter()
            .map(|s| resample(s, target))
            .collect::<Result<Vec<_>>>()?;
        Self::new(Arc::clone(target), spectra)
    }
}

/// Reflectance cube stored band-interleaved-by-pixel: `(row, col, band)`.
#[derive(Debug, Clone)]
pub struct ImageCube {
    rows: usize,
    cols: usize,
    grid: Arc<BandGrid>,
    data: Vec<f64>,
}

impl ImageCube {
    pub fn new(rows: usize, cols: usize, grid: Arc<BandGrid>, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Input(format!("cube dimensions must be positive, got {rows}x{cols}")));
        }
        let expected = rows * cols * grid.len();
        if data.len() != expected {
            return Err(Error::Alignment(format!(
                "cube data has {} values, expected {rows}x{cols}x{} = {expected}",
                data.len(),
                grid.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            let bands = grid.len();
            return Err(Error::Input(format!(
                "cube value at (row {}, col {}, band {}) is not finite",
                i / bands / cols,
                (i / bands) % cols,
                i % bands
            )));
        }
        Ok(Self {
            rows,
            cols,
            grid,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bands(&self) -> usize {
        self.grid.len()
    }

    pub fn grid(&self) -> &Arc<BandGrid> {
        &self.grid
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, row: usize, col: usize) -> &[f64] {
        let b = self.bands();
        let start = (row * self.cols + col) * b;
        &self.data[start..start + b]
    }

    pub fn pixel_mut(&mut self, row: usize, col: usize) -> &mut [f64] {
        let b = self.bands();
        let start = (row * self.cols + col) * b;
        &mut self.data[start..start + b]
    }

    pub fn value(&self, row: usize, col: usize, band: usize) -> f64 {
        self.data[(row * self.cols + col) * self.bands() + band]
    }

    fn check(&self, row: usize, col: usize) -> Result<()> {
        if row >= self.rows || col >= self.cols {
            Err(Error::Bounds(format!(
                "pixel ({row}, {col}) outside {}x{} cube",
                self.rows, self.cols
            )))
        } else {
            Ok(())
        }
    }

    pub fn extract_pixel(&self, row: usize, col: usize) -> Result<Spectrum> {
        self.check(row, col)?;
        Spectrum::unlabeled(
            format!("pixel({row},{col})"),
            Arc::clone(&self.grid),
            self.pixel(row, col).to_vec(),
        )
    }

    /// Per-band mean over the listed pixels.
    pub fn average_pixels(&self, coords: &[(usize, usize)]) -> Result<Spectrum> {
        if coords.is_empty() {
            return Err(Error::Input("average_pixels needs at least one coordinate".into()));
        }
        let mut acc = vec![0.0; self.bands()];
        for &(r, c) in coords {
            self.check(r, c)?;
            acc.iter_mut().zip(self.pixel(r, c)).for_each(|(a, v)| *a += v);
        }
        let n = coords.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        Spectrum::unlabeled(format!("mean of {} pixels", coords.len()), Arc::clone(&self.grid), acc)
    }
}

/// Groups names by class path; handy for reports.
pub fn members_by_class(library: &SpectralLibrary) -> BTreeMap<Vec<String>, Vec<String>> {
    let mut out: BTreeMap<Vec<String>, Vec<String>> = BTreeMap::new();
    for s in library.spectra() {
        out.entry(s.class_path.clone()).or_default().push(s.name.clone());
    }
    out
}
