//! Spectral library CSV + class hierarchy JSON, and tabular CSV designs.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::regression::Design;
use crate::spectral::{BandGrid, SpectralLibrary, Spectrum, UNLABELED_CLASS};

/// Wavelength-indexed spectra as read from CSV, before class labels.
#[derive(Debug, Clone)]
pub struct SpectraTable {
    pub grid: Arc<BandGrid>,
    pub names: Vec<String>,
    /// One vector per name, aligned with the grid.
    pub values: Vec<Vec<f64>>,
}

/// Reads a spectra CSV: the first column is `wavelength_um` or
/// `wavelength_nm`, every further column one spectrum named by its header.
pub fn read_spectra_csv(path: &Path) -> Result<SpectraTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::parse(path, e.to_string()))?;
    let headers = rdr.headers().map_err(|e| Error::parse(path, e.to_string()))?.clone();
    let to_um = match headers.get(0).map(|h| h.to_ascii_lowercase()) {
        Some(h) if h == "wavelength_um" => 1.0,
        Some(h) if h == "wavelength_nm" => 1e-3,
        other => {
            return Err(Error::parse(
                path,
                format!("first column must be 'wavelength_um' or 'wavelength_nm', found {other:?}"),
            ))
        }
    };
    let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    if names.is_empty() {
        return Err(Error::parse(path, "no spectrum columns"));
    }
    let mut seen = std::collections::BTreeSet::new();
    for n in &names {
        if !seen.insert(n) {
            return Err(Error::parse(path, format!("duplicate spectrum name '{n}'")));
        }
    }
    let mut wavelengths = Vec::new();
    let mut values = vec![Vec::new(); names.len()];
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::parse(path, format!("line {line}: {e}")))?;
        if rec.len() != names.len() + 1 {
            return Err(Error::parse(
                path,
                format!("line {line}: ragged row with {} fields, expected {}", rec.len(), names.len() + 1),
            ));
        }
        let num = |j: usize| -> Result<f64> {
            rec[j]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(path, format!("line {line}, column {}: '{}' is not a finite number", j + 1, &rec[j])))
        };
        wavelengths.push(num(0)? * to_um);
        for (j, col) in values.iter_mut().enumerate() {
            col.push(num(j + 1)?);
        }
    }
    if let Some(i) = wavelengths.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::parse(path, format!("wavelengths are not strictly increasing at data row {}", i + 2)));
    }
    let grid = BandGrid::new(wavelengths).map_err(|e| Error::parse(path, e.to_string()))?;
    Ok(SpectraTable {
        grid: Arc::new(grid),
        names,
        values,
    })
}

/// Reads `name → [class, subclass, …]`. An empty file means no entries.
pub fn read_hierarchy(path: &Path) -> Result<BTreeMap<String, Vec<String>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if text.trim().is_empty() {
        return Ok(BTreeMap::new());
    }
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
}

/// Assembles a library from a spectra table and class paths; names with no
/// class path are filed under `Unlabeled`.
pub fn library_from_table(table: SpectraTable, classes: &BTreeMap<String, Vec<String>>) -> Result<SpectralLibrary> {
    let spectra = table
        .names
        .into_iter()
        .zip(table.values)
        .map(|(name, values)| {
            let path = classes
                .get(&name)
                .cloned()
                .unwrap_or_else(|| vec![UNLABELED_CLASS.to_string()]);
            Spectrum::new(name, Arc::clone(&table.grid), values, path)
        })
        .collect::<Result<Vec<_>>>()?;
    SpectralLibrary::new(table.grid, spectra)
}

pub fn read_library(csv_path: &Path, hierarchy_path: Option<&Path>) -> Result<SpectralLibrary> {
    let table = read_spectra_csv(csv_path)?;
    let classes = match hierarchy_path {
        Some(p) => read_hierarchy(p)?,
        None => BTreeMap::new(),
    };
    library_from_table(table, &classes)
}

/// Reads a single spectrum (the first spectrum column) from a spectra CSV.
pub fn read_spectrum(path: &Path) -> Result<Spectrum> {
    let t = read_spectra_csv(path)?;
    Spectrum::unlabeled(t.names[0].clone(), t.grid, t.values.into_iter().next().expect("checked non-empty"))
}

/// Writes spectra sharing one grid as a `wavelength_um` CSV.
pub fn write_spectra_csv(path: &Path, spectra: &[&Spectrum]) -> Result<()> {
    let Some(first) = spectra.first() else {
        return Err(Error::Input("no spectra to write".into()));
    };
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    let mut header = vec!["wavelength_um".to_string()];
    header.extend(spectra.iter().map(|s| s.name.clone()));
    w.write_record(&header).map_err(|e| Error::parse(path, e.to_string()))?;
    for (b, wl) in first.grid.wavelengths().iter().enumerate() {
        let mut row = vec![format!("{wl}")];
        for s in spectra {
            s.require_grid(&first.grid)?;
            row.push(format!("{}", s.values[b]));
        }
        w.write_record(&row).map_err(|e| Error::parse(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_library(csv_path: &Path, hierarchy_path: &Path, library: &SpectralLibrary) -> Result<()> {
    let refs: Vec<&Spectrum> = library.spectra().iter().collect();
    write_spectra_csv(csv_path, &refs)?;
    let classes: BTreeMap<&str, &[String]> = library
        .spectra()
        .iter()
        .map(|s| (s.name.as_str(), s.class_path.as_slice()))
        .collect();
    let json = serde_json::to_string_pretty(&classes).expect("string map serializes");
    std::fs::write(hierarchy_path, json).map_err(|e| Error::io(hierarchy_path, e))
}

/// Numeric table with a header row.
#[derive(Debug, Clone)]
pub struct Table {
    pub columns: Vec<String>,
    pub data: Vec<Vec<f64>>,
}

pub fn read_table(path: &Path) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::parse(path, e.to_string()))?;
    let columns: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::parse(path, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut data = vec![Vec::new(); columns.len()];
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::parse(path, format!("line {line}: {e}")))?;
        if rec.len() != columns.len() {
            return Err(Error::parse(path, format!("line {line}: ragged row")));
        }
        for (j, col) in data.iter_mut().enumerate() {
            let v = rec[j].parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                Error::parse(path, format!("line {line}, column '{}': non-numeric cell '{}'", columns[j], &rec[j]))
            })?;
            col.push(v);
        }
    }
    Ok(Table { columns, data })
}

impl Table {
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns.iter().position(|c| c == name).map(|i| self.data[i].as_slice())
    }

    /// Replaces the named columns by their natural log.
    pub fn log_transform(&mut self, names: &[String]) -> Result<()> {
        for n in names {
            let i = self
                .columns
                .iter()
                .position(|c| c == n)
                .ok_or_else(|| Error::Input(format!("log-transform column '{n}' not in table")))?;
            if let Some(v) = self.data[i].iter().find(|v| **v <= 0.0) {
                return Err(Error::Input(format!("column '{n}' has non-positive value {v}; cannot take log")));
            }
            self.data[i].iter_mut().for_each(|v| *v = v.ln());
        }
        Ok(())
    }

    /// Regression of `response` on every other column, with intercept.
    pub fn design(&self, response: &str) -> Result<Design> {
        let r = self
            .columns
            .iter()
            .position(|c| c == response)
            .ok_or_else(|| Error::Input(format!("response column '{response}' not in table")))?;
        let (names, cols): (Vec<String>, Vec<Vec<f64>>) = self
            .columns
            .iter()
            .zip(&self.data)
            .enumerate()
            .filter(|(i, _)| *i != r)
            .map(|(_, (n, c))| (n.clone(), c.clone()))
            .unzip();
        Design::new(names, cols, self.data[r].clone(), true)
    }
}
