//! ACE target detection, ROI extraction and background removal.

use std::collections::VecDeque;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::regression::{fit, refit_extend};
use crate::spectral::{BandGrid, ImageCube, Spectrum};

pub const DEFAULT_SHRINKAGE: f64 = 0.01;

/// Background mean, shrunk covariance and its symmetric inverse square root.
#[derive(Debug, Clone)]
pub struct BackgroundStats {
    pub grid: Arc<BandGrid>,
    pub mean: Vec<f64>,
    pub covariance: DMatrix<f64>,
    pub shrinkage: f64,
    pub pixels_used: usize,
    whitening: DMatrix<f64>,
}

impl BackgroundStats {
    /// `W(x − μ)`.
    pub fn whiten(&self, x: &[f64]) -> DVector<f64> {
        let centered = DVector::from_iterator(x.len(), x.iter().zip(&self.mean).map(|(a, m)| a - m));
        &self.whitening * centered
    }

    /// `W·x` without removing the mean.
    pub fn whiten_raw(&self, x: &[f64]) -> DVector<f64> {
        &self.whitening * DVector::from_column_slice(x)
    }

    pub fn whitening(&self) -> &DMatrix<f64> {
        &self.whitening
    }
}

/// Mean and covariance over the pixels not excluded by `exclude`
/// (row-major, `true` = skip), shrunk toward the diagonal:
/// `Σ ← (1−λ)Σ + λ·diag(Σ)`.
pub fn background_stats(cube: &ImageCube, shrinkage: f64, exclude: Option<&[bool]>) -> Result<BackgroundStats> {
    if !(0.0..=1.0).contains(&shrinkage) {
        return Err(Error::Input(format!("shrinkage must lie in [0, 1], got {shrinkage}")));
    }
    let (rows, cols, bands) = (cube.rows(), cube.cols(), cube.bands());
    if let Some(m) = exclude {
        if m.len() != rows * cols {
            return Err(Error::Alignment(format!(
                "pixel mask has {} entries for a {rows}x{cols} cube",
                m.len()
            )));
        }
    }
    let used = |r: usize, c: usize| exclude.is_none_or(|m| !m[r * cols + c]);
    let count = (0..rows).flat_map(|r| (0..cols).map(move |c| (r, c))).filter(|(r, c)| used(*r, *c)).count();
    if count < 2 {
        return Err(Error::Input(format!(
            "background statistics need at least 2 pixels, {count} available"
        )));
    }

    // per-row partial sums, merged in row order
    let row_sums = par::map_range(rows, |r| {
        let mut s = vec![0.0; bands];
        for c in (0..cols).filter(|c| used(r, *c)) {
            s.iter_mut().zip(cube.pixel(r, c)).for_each(|(a, v)| *a += v);
        }
        s
    });
    let mut mean = vec![0.0; bands];
    for s in &row_sums {
        mean.iter_mut().zip(s).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= count as f64);

    let row_scatter = par::map_range(rows, |r| {
        let mut s = DMatrix::<f64>::zeros(bands, bands);
        for c in (0..cols).filter(|c| used(r, *c)) {
            let d = DVector::from_iterator(bands, cube.pixel(r, c).iter().zip(&mean).map(|(v, m)| v - m));
            s.ger(1.0, &d, &d, 1.0);
        }
        s
    });
    let mut cov = DMatrix::<f64>::zeros(bands, bands);
    for s in &row_scatter {
        cov += s;
    }
    cov /= (count - 1) as f64;

    let diag = DMatrix::from_diagonal(&cov.diagonal());
    let shrunk = &cov * (1.0 - shrinkage) + diag * shrinkage;
    if shrunk.clone().cholesky().is_none() {
        return Err(Error::Numerical(format!(
            "background covariance is not positive definite with shrinkage {shrinkage}; use a larger shrinkage or more background pixels"
        )));
    }
    let eig = shrunk.clone().symmetric_eigen();
    // eigenvalues at rounding level relative to the data scale count as zero
    let energy = mean.iter().map(|m| m * m).sum::<f64>() / bands as f64;
    let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max).max(energy);
    let floor = bands as f64 * f64::EPSILON * top;
    if let Some(l) = eig.eigenvalues.iter().find(|l| **l <= floor) {
        return Err(Error::Numerical(format!(
            "background covariance has eigenvalue {l:e}; use a larger shrinkage"
        )));
    }
    let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    let whitening = &eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose();
    Ok(BackgroundStats {
        grid: Arc::clone(cube.grid()),
        mean,
        covariance: shrunk,
        shrinkage,
        pixels_used: count,
        whitening,
    })
}

fn cosine(a: &DVector<f64>, b: &DVector<f64>, what: &str) -> Result<f64> {
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Numerical(format!("{what} has zero norm after whitening")));
    }
    Ok((a.dot(b) / (na * nb)).clamp(-1.0, 1.0))
}

fn check_grid(s: &Spectrum, stats: &BackgroundStats) -> Result<()> {
    s.require_grid(&stats.grid)
}

/// Signed adaptive cosine estimator: cosine between `W(x − μ)` and `W(t − μ)`.
pub fn ace_score(pixel: &Spectrum, target: &Spectrum, stats: &BackgroundStats) -> Result<f64> {
    check_grid(pixel, stats)?;
    check_grid(target, stats)?;
    let t = stats.whiten(&target.values);
    if t.norm() == 0.0 {
        return Err(Error::Numerical(format!("target '{}' has zero norm after whitening", target.name)));
    }
    cosine(&stats.whiten(&pixel.values), &t, &format!("pixel '{}'", pixel.name))
}

/// Cosine between `W·a` and `W·b` with no mean removal. Used to compare
/// raw reflectance shapes (e.g. a background-removed spectrum against a
/// library target) in the background's whitened coordinates.
pub fn whitened_correlation(a: &Spectrum, b: &Spectrum, stats: &BackgroundStats) -> Result<f64> {
    check_grid(a, stats)?;
    check_grid(b, stats)?;
    cosine(&stats.whiten_raw(&a.values), &stats.whiten_raw(&b.values), "spectrum pair")
}

/// Per-pixel ACE scores, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionMap {
    pub rows: usize,
    pub cols: usize,
    pub scores: Vec<f64>,
}

impl DetectionMap {
    pub fn score(&self, row: usize, col: usize) -> f64 {
        self.scores[row * self.cols + col]
    }

    /// Coordinates of the highest score (first in row-major order on ties).
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, s) in self.scores.iter().enumerate() {
            if *s > self.scores[best] {
                best = i;
            }
        }
        (best / self.cols, best % self.cols)
    }

    /// Score at the given quantile (0..=1) using nearest-rank.
    pub fn quantile(&self, q: f64) -> f64 {
        let mut s = self.scores.clone();
        s.sort_by(f64::total_cmp);
        let idx = ((q.clamp(0.0, 1.0) * s.len() as f64).ceil() as usize).clamp(1, s.len()) - 1;
        s[idx]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub row_min: usize,
    pub row_max: usize,
    pub col_min: usize,
    pub col_max: usize,
}

impl BoundingBox {
    /// Chebyshev distance from a pixel to the box (0 inside).
    pub fn distance(&self, row: usize, col: usize) -> usize {
        let dr = self.row_min.saturating_sub(row).max(row.saturating_sub(self.row_max));
        let dc = self.col_min.saturating_sub(col).max(col.saturating_sub(self.col_max));
        dr.max(dc)
    }
}

/// A connected group of above-threshold pixels.
#[derive(Debug, Clone)]
pub struct Roi {
    pub pixels: Vec<(usize, usize)>,
    pub peak: (usize, usize),
    pub peak_score: f64,
    pub mean_score: f64,
    pub bbox: BoundingBox,
    pub spectrum: Spectrum,
}

#[derive(Debug, Clone)]
pub struct Detection {
    pub map: DetectionMap,
    /// Ranked by peak score, highest first.
    pub rois: Vec<Roi>,
}

/// Labels 8-connected components of `mask` (row-major); components are
/// returned in scan order of their first pixel.
pub fn connected_components(mask: &[bool], rows: usize, cols: usize) -> Vec<Vec<(usize, usize)>> {
    let mut seen = vec![false; rows * cols];
    let mut out = Vec::new();
    for start in 0..rows * cols {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        let mut comp = Vec::new();
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            let (r, c) = (i / cols, i % cols);
            comp.push((r, c));
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                    if nr < 0 || nc < 0 || nr >= rows as i64 || nc >= cols as i64 {
                        continue;
                    }
                    let j = nr as usize * cols + nc as usize;
                    if mask[j] && !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Scores every pixel against `target` and groups pixels scoring above
/// `threshold` into ranked ROIs with their mean spectra.
pub fn detect(cube: &ImageCube, target: &Spectrum, stats: &BackgroundStats, threshold: f64) -> Result<Detection> {
    if !(threshold > -1.0 && threshold < 1.0) {
        return Err(Error::Input(format!("threshold must lie in (-1, 1), got {threshold}")));
    }
    target.require_grid(cube.grid())?;
    check_grid(target, stats)?;
    let t = stats.whiten(&target.values);
    if t.norm() == 0.0 {
        return Err(Error::Numerical(format!("target '{}' has zero norm after whitening", target.name)));
    }
    let (rows, cols) = (cube.rows(), cube.cols());
    let scores = par::map_range(rows * cols, |i| {
        let x = stats.whiten(cube.pixel(i / cols, i % cols));
        cosine(&x, &t, &format!("pixel ({}, {})", i / cols, i % cols))
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    let map = DetectionMap { rows, cols, scores };

    let mask: Vec<bool> = map.scores.iter().map(|s| *s > threshold).collect();
    let mut rois = connected_components(&mask, rows, cols)
        .into_iter()
        .map(|pixels| {
            let mut peak = pixels[0];
            let mut sum = 0.0;
            let mut bbox = BoundingBox {
                row_min: usize::MAX,
                row_max: 0,
                col_min: usize::MAX,
                col_max: 0,
            };
            for &(r, c) in &pixels {
                let s = map.score(r, c);
                sum += s;
                if s > map.score(peak.0, peak.1) {
                    peak = (r, c);
                }
                bbox.row_min = bbox.row_min.min(r);
                bbox.row_max = bbox.row_max.max(r);
                bbox.col_min = bbox.col_min.min(c);
                bbox.col_max = bbox.col_max.max(c);
            }
            let spectrum = cube.average_pixels(&pixels)?;
            Ok(Roi {
                peak_score: map.score(peak.0, peak.1),
                mean_score: sum / pixels.len() as f64,
                peak,
                bbox,
                pixels,
                spectrum,
            })
        })
        .collect::<Result<Vec<Roi>>>()?;
    rois.sort_by(|a, b| b.peak_score.total_cmp(&a.peak_score).then_with(|| a.peak.cmp(&b.peak)));
    Ok(Detection { map, rois })
}

pub const ANNULUS_INNER: usize = 2;
pub const ANNULUS_OUTER: usize = 5;
pub const ANNULUS_MAX_SPECTRA: usize = 24;

/// Background pixel coordinates in a square ring around an ROI: Chebyshev
/// distance from the bounding box in `2..=5` (the box grown by one pixel is
/// excluded), evenly strided down to at most `max_count` in row-major order.
pub fn annulus_coords(bbox: &BoundingBox, rows: usize, cols: usize, max_count: usize) -> Vec<(usize, usize)> {
    let ring: Vec<(usize, usize)> = (0..rows)
        .flat_map(|r| (0..cols).map(move |c| (r, c)))
        .filter(|(r, c)| (ANNULUS_INNER..=ANNULUS_OUTER).contains(&bbox.distance(*r, *c)))
        .collect();
    if ring.len() <= max_count || max_count == 0 {
        return if max_count == 0 { Vec::new() } else { ring };
    }
    if max_count == 1 {
        return vec![ring[0]];
    }
    (0..max_count)
        .map(|i| {
            let idx = (i as f64 * (ring.len() - 1) as f64 / (max_count - 1) as f64).round() as usize;
            ring[idx]
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct BackgroundRemoval {
    /// `p − Σ aᵢ sᵢ`.
    pub spectrum: Spectrum,
    pub target_abundance: f64,
    pub background_abundances: Vec<f64>,
    pub rss: f64,
}

/// Jointly fits `p ≈ a_t s_t + Σ aᵢ sᵢ` (no intercept, raw reflectance) and
/// subtracts the fitted background contribution.
pub fn background_removal(pixel: &Spectrum, target: &Spectrum, backgrounds: &[Spectrum]) -> Result<BackgroundRemoval> {
    target.require_grid(&pixel.grid)?;
    for b in backgrounds {
        b.require_grid(&pixel.grid)?;
    }
    let keep: Vec<usize> = (0..pixel.len())
        .filter(|i| pixel.is_valid(*i) && target.is_valid(*i) && backgrounds.iter().all(|b| b.is_valid(*i)))
        .collect();
    if backgrounds.len() + 1 >= keep.len() {
        return Err(Error::Input(format!(
            "{} regressors need more than {} valid bands",
            backgrounds.len() + 1,
            keep.len()
        )));
    }
    let pick = |v: &[f64]| keep.iter().map(|i| v[*i]).collect::<Vec<_>>();
    let y = pick(&pixel.values);
    let cols: Vec<Vec<f64>> = std::iter::once(target).chain(backgrounds).map(|s| pick(&s.values)).collect();
    let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
    let full = fit(&y, &refs, false)?;
    if full.model.condition_flag {
        // walk the columns in order to name the ones that make the design degenerate
        let mut offending = Vec::new();
        let mut current = fit(&y, &refs[..1], false)?;
        if current.model.condition_flag {
            offending.push(target.name.clone());
        }
        for (j, col) in refs.iter().enumerate().skip(1) {
            let next = refit_extend(&current, col, j)?;
            if next.model.condition_flag {
                offending.push(backgrounds[j - 1].name.clone());
            } else {
                current = next;
            }
        }
        return Err(Error::Numerical(format!(
            "background removal design is degenerate; offending spectra: {}",
            offending.join(", ")
        )));
    }
    let coef = &full.model.coefficients;
    let mut values = pixel.values.clone();
    for (b, a) in backgrounds.iter().zip(&coef[1..]) {
        values.iter_mut().zip(&b.values).for_each(|(v, s)| *v -= a * s);
    }
    let mut spectrum = Spectrum::unlabeled(format!("{} (background removed)", pixel.name), Arc::clone(&pixel.grid), values)?;
    spectrum.valid = pixel.valid.clone();
    Ok(BackgroundRemoval {
        spectrum,
        target_abundance: coef[0],
        background_abundances: coef[1..].to_vec(),
        rss: full.model.rss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Arc<BandGrid> {
        Arc::new(BandGrid::linspace(0.5, 2.0, n).unwrap())
    }

    #[test]
    fn constant_cube_is_rejected() {
        let g = grid(3);
        let cube = ImageCube::new(3, 3, g, vec![0.2; 27]).unwrap();
        let err = background_stats(&cube, 0.01, None).unwrap_err();
        assert!(matches!(err, Error::Numerical(_)));
        assert!(err.to_string().contains("larger shrinkage"));
    }

    #[test]
    fn too_few_pixels() {
        let cube = ImageCube::new(1, 2, grid(2), vec![0.1, 0.2, 0.3, 0.5]).unwrap();
        assert!(background_stats(&cube, 0.0, Some(&[true, false])).is_err());
        assert!(background_stats(&cube, 1.5, None).is_err());
    }

    #[test]
    fn full_shrinkage_is_diagonal() {
        let data: Vec<f64> = (0..2 * 3 * 3).map(|i| ((i * 7919) % 13) as f64 / 13.0).collect();
        let cube = ImageCube::new(2, 3, grid(3), data).unwrap();
        let s = background_stats(&cube, 1.0, None).unwrap();
        for i in 0..3 {
            let xs: Vec<f64> = (0..6).map(|p| cube.data()[p * 3 + i]).collect();
            let m = xs.iter().sum::<f64>() / 6.0;
            let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 5.0;
            for j in 0..3 {
                let expected = if i == j { var } else { 0.0 };
                assert!((s.covariance[(i, j)] - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn components_are_eight_connected() {
        #[rustfmt::skip]
        let mask = [
            true,  false, false, false,
            false, true,  false, true,
            false, false, false, true,
        ];
        let comps = connected_components(&mask, 3, 4);
        assert_eq!(comps.len(), 2);
        assert_eq!(comps[0], vec![(0, 0), (1, 1)]);
        assert_eq!(comps[1], vec![(1, 3), (2, 3)]);
    }

    #[test]
    fn annulus_ring() {
        let bbox = BoundingBox {
            row_min: 10,
            row_max: 12,
            col_min: 10,
            col_max: 12,
        };
        let all = annulus_coords(&bbox, 40, 40, usize::MAX);
        // (3+10)^2 - (3+2)^2
        assert_eq!(all.len(), 169 - 25);
        assert!(all.iter().all(|(r, c)| (2..=5).contains(&bbox.distance(*r, *c))));
        let some = annulus_coords(&bbox, 40, 40, 24);
        assert_eq!(some.len(), 24);
        assert_eq!(some[0], all[0]);
        assert_eq!(*some.last().unwrap(), *all.last().unwrap());
    }

    #[test]
    fn quantile_nearest_rank() {
        let m = DetectionMap {
            rows: 1,
            cols: 4,
            scores: vec![0.4, 0.1, 0.3, 0.2],
        };
        assert_eq!(m.quantile(0.5), 0.2);
        assert_eq!(m.quantile(1.0), 0.4);
        assert_eq!(m.argmax(), (0, 0));
    }
}
