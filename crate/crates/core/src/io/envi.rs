//! ENVI header + raw binary cubes (BSQ/BIL/BIP; int16, uint16, float32, float64).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::spectral::{BandGrid, ImageCube};

/// Scale applied to integer reflectance when the header gives none.
pub const DEFAULT_INTEGER_SCALE: f64 = 10_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interleave {
    Bsq,
    Bil,
    Bip,
}

impl Interleave {
    fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bsq" => Some(Self::Bsq),
            "bil" => Some(Self::Bil),
            "bip" => Some(Self::Bip),
            _ => None,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Self::Bsq => "bsq",
            Self::Bil => "bil",
            Self::Bip => "bip",
        }
    }

    /// File-order element index of `(row, col, band)`.
    fn index(self, row: usize, col: usize, band: usize, samples: usize, lines: usize, bands: usize) -> usize {
        match self {
            Self::Bsq => band * lines * samples + row * samples + col,
            Self::Bil => row * bands * samples + band * samples + col,
            Self::Bip => (row * samples + col) * bands + band,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataType {
    Int16,
    Float32,
    Float64,
    UInt16,
}

impl DataType {
    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            2 => Some(Self::Int16),
            4 => Some(Self::Float32),
            5 => Some(Self::Float64),
            12 => Some(Self::UInt16),
            _ => None,
        }
    }

    pub fn code(self) -> u32 {
        match self {
            Self::Int16 => 2,
            Self::Float32 => 4,
            Self::Float64 => 5,
            Self::UInt16 => 12,
        }
    }

    pub fn size(self) -> usize {
        match self {
            Self::Int16 | Self::UInt16 => 2,
            Self::Float32 => 4,
            Self::Float64 => 8,
        }
    }

    pub fn is_integer(self) -> bool {
        matches!(self, Self::Int16 | Self::UInt16)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavelengthUnits {
    Nanometers,
    Micrometers,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnviHeader {
    pub samples: usize,
    pub lines: usize,
    pub bands: usize,
    pub header_offset: usize,
    pub interleave: Interleave,
    pub data_type: DataType,
    /// 0 = little endian, 1 = big endian.
    pub byte_order: u8,
    pub wavelength: Vec<f64>,
    pub wavelength_units: WavelengthUnits,
    pub bbl: Option<Vec<bool>>,
    pub reflectance_scale_factor: Option<f64>,
}

/// Splits an ENVI header into `key → raw value`, joining brace blocks that
/// span lines. Keys are lowercased.
fn tokenize(text: &str, path: &Path) -> Result<BTreeMap<String, String>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(first) if first.trim() == "ENVI" => {}
        _ => return Err(Error::parse(path, "header does not start with 'ENVI'")),
    }
    let mut out = BTreeMap::new();
    let mut pending: Option<(String, String)> = None;
    for line in lines {
        if let Some((key, mut acc)) = pending.take() {
            acc.push(' ');
            acc.push_str(line.trim());
            if line.contains('}') {
                out.insert(key, acc);
            } else {
                pending = Some((key, acc));
            }
            continue;
        }
        let line = line.trim();
        if line.is_empty() || line.starts_with(';') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::parse(path, format!("malformed header line '{line}'")));
        };
        let (k, v) = (k.trim().to_ascii_lowercase(), v.trim().to_string());
        if v.starts_with('{') && !v.contains('}') {
            pending = Some((k, v));
        } else {
            out.insert(k, v);
        }
    }
    if let Some((k, _)) = pending {
        return Err(Error::parse(path, format!("unterminated brace list for key '{k}'")));
    }
    Ok(out)
}

fn list(raw: &str) -> Vec<String> {
    raw.trim()
        .trim_start_matches('{')
        .trim_end_matches('}')
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

impl EnviHeader {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let keys = tokenize(text, path)?;
        let get = |k: &str| keys.get(k).ok_or_else(|| Error::parse(path, format!("missing key '{k}'")));
        let count = |k: &str| -> Result<usize> {
            let v = get(k)?;
            match v.parse::<usize>() {
                Ok(n) if n > 0 => Ok(n),
                _ => Err(Error::parse(path, format!("key '{k}' must be a positive integer, got '{v}'"))),
            }
        };
        let samples = count("samples")?;
        let lines = count("lines")?;
        let bands = count("bands")?;
        let header_offset = match keys.get("header offset") {
            Some(v) => v
                .parse()
                .map_err(|_| Error::parse(path, format!("key 'header offset' is not an integer: '{v}'")))?,
            None => 0,
        };
        let dt = get("data type")?;
        let data_type = dt
            .parse::<u32>()
            .ok()
            .and_then(DataType::from_code)
            .ok_or_else(|| Error::parse(path, format!("key 'data type' has unsupported value '{dt}' (supported: 2, 4, 5, 12)")))?;
        let il = get("interleave")?;
        let interleave =
            Interleave::parse(il).ok_or_else(|| Error::parse(path, format!("key 'interleave' has unknown value '{il}'")))?;
        let byte_order = match keys.get("byte order").map(|s| s.as_str()) {
            None | Some("0") => 0,
            Some("1") => 1,
            Some(other) => return Err(Error::parse(path, format!("key 'byte order' must be 0 or 1, got '{other}'"))),
        };
        let raw_wl = get("wavelength")?;
        let wavelength = list(raw_wl)
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::parse(path, format!("key 'wavelength' has a non-numeric entry: {e}")))?;
        if wavelength.len() != bands {
            return Err(Error::parse(
                path,
                format!("key 'wavelength' has {} entries for {bands} bands", wavelength.len()),
            ));
        }
        let wavelength_units = match keys.get("wavelength units").map(|s| s.trim().to_ascii_lowercase()) {
            Some(u) if matches!(u.as_str(), "nanometers" | "nanometer" | "nm") => WavelengthUnits::Nanometers,
            Some(u) if matches!(u.as_str(), "micrometers" | "micrometer" | "microns" | "micron" | "um" | "µm") => {
                WavelengthUnits::Micrometers
            }
            Some(u) => return Err(Error::parse(path, format!("key 'wavelength units' has unknown value '{u}'"))),
            // no units: anything above 100 can only be nanometers
            None if wavelength.iter().any(|w| *w > 100.0) => WavelengthUnits::Nanometers,
            None => WavelengthUnits::Micrometers,
        };
        let bbl = match keys.get("bbl") {
            Some(v) => {
                let flags = list(v)
                    .iter()
                    .map(|s| s.parse::<f64>().map(|x| x != 0.0))
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| Error::parse(path, format!("key 'bbl' has a non-numeric entry: {e}")))?;
                if flags.len() != bands {
                    return Err(Error::parse(path, format!("key 'bbl' has {} entries for {bands} bands", flags.len())));
                }
                Some(flags)
            }
            None => None,
        };
        let reflectance_scale_factor = match keys.get("reflectance scale factor") {
            Some(v) => {
                let f: f64 = v
                    .parse()
                    .map_err(|_| Error::parse(path, format!("key 'reflectance scale factor' is not a number: '{v}'")))?;
                if !(f.is_finite() && f > 0.0) {
                    return Err(Error::parse(path, "key 'reflectance scale factor' must be positive"));
                }
                Some(f)
            }
            None => None,
        };
        Ok(Self {
            samples,
            lines,
            bands,
            header_offset,
            interleave,
            data_type,
            byte_order,
            wavelength,
            wavelength_units,
            bbl,
            reflectance_scale_factor,
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("ENVI\n");
        let _ = writeln!(s, "samples = {}", self.samples);
        let _ = writeln!(s, "lines = {}", self.lines);
        let _ = writeln!(s, "bands = {}", self.bands);
        let _ = writeln!(s, "header offset = {}", self.header_offset);
        let _ = writeln!(s, "data type = {}", self.data_type.code());
        let _ = writeln!(s, "interleave = {}", self.interleave.as_str());
        let _ = writeln!(s, "byte order = {}", self.byte_order);
        let units = match self.wavelength_units {
            WavelengthUnits::Nanometers => "Nanometers",
            WavelengthUnits::Micrometers => "Micrometers",
        };
        let _ = writeln!(s, "wavelength units = {units}");
        let wl: Vec<String> = self.wavelength.iter().map(|w| format!("{w}")).collect();
        let _ = writeln!(s, "wavelength = {{{}}}", wl.join(", "));
        if let Some(bbl) = &self.bbl {
            let b: Vec<&str> = bbl.iter().map(|x| if *x { "1" } else { "0" }).collect();
            let _ = writeln!(s, "bbl = {{{}}}", b.join(", "));
        }
        if let Some(f) = self.reflectance_scale_factor {
            let _ = writeln!(s, "reflectance scale factor = {f}");
        }
        s
    }

    fn wavelengths_um(&self) -> Vec<f64> {
        match self.wavelength_units {
            WavelengthUnits::Nanometers => self.wavelength.iter().map(|w| w / 1000.0).collect(),
            WavelengthUnits::Micrometers => self.wavelength.clone(),
        }
    }
}

/// Data file next to a header: the header path without its `.hdr`
/// extension, or with `.img`/`.dat`/`.bsq`/`.bil`/`.bip`, whichever exists.
pub fn default_data_path(header: &Path) -> PathBuf {
    let stem = header.with_extension("");
    if stem.exists() {
        return stem;
    }
    for ext in ["img", "dat", "bsq", "bil", "bip", "raw"] {
        let p = header.with_extension(ext);
        if p.exists() {
            return p;
        }
    }
    stem
}

fn decode(bytes: &[u8], dt: DataType, big_endian: bool) -> f64 {
    macro_rules! read {
        ($t:ty, $n:expr) => {{
            let mut b = [0u8; $n];
            b.copy_from_slice(bytes);
            if big_endian {
                <$t>::from_be_bytes(b) as f64
            } else {
                <$t>::from_le_bytes(b) as f64
            }
        }};
    }
    match dt {
        DataType::Int16 => read!(i16, 2),
        DataType::UInt16 => read!(u16, 2),
        DataType::Float32 => read!(f32, 4),
        DataType::Float64 => read!(f64, 8),
    }
}

fn encode(v: f64, dt: DataType, big_endian: bool, out: &mut Vec<u8>) {
    macro_rules! write {
        ($x:expr) => {{
            if big_endian {
                out.extend_from_slice(&$x.to_be_bytes())
            } else {
                out.extend_from_slice(&$x.to_le_bytes())
            }
        }};
    }
    match dt {
        DataType::Int16 => write!(v.round() as i16),
        DataType::UInt16 => write!(v.round() as u16),
        DataType::Float32 => write!(v as f32),
        DataType::Float64 => write!(v),
    }
}

/// Loads a cube in canonical `(row, col, band)` order. Integer data is
/// divided by the reflectance scale factor (default 10000); bad bands listed
/// in `bbl` are dropped.
pub fn read_envi(header_path: &Path, data_path: &Path) -> Result<ImageCube> {
    let text = std::fs::read_to_string(header_path).map_err(|e| Error::io(header_path, e))?;
    let h = EnviHeader::parse(&text, header_path)?;
    let bytes = std::fs::read(data_path).map_err(|e| Error::io(data_path, e))?;
    let elem = h.data_type.size();
    let expected = h.samples * h.lines * h.bands * elem;
    if bytes.len() != h.header_offset + expected {
        return Err(Error::parse(
            data_path,
            format!(
                "data file has {} bytes, header (samples x lines x bands x {elem} + offset {}) implies {}",
                bytes.len(),
                h.header_offset,
                h.header_offset + expected
            ),
        ));
    }
    let body = &bytes[h.header_offset..];
    let scale = match (h.reflectance_scale_factor, h.data_type.is_integer()) {
        (Some(f), _) => f,
        (None, true) => DEFAULT_INTEGER_SCALE,
        (None, false) => 1.0,
    };
    let keep: Vec<usize> = match &h.bbl {
        Some(b) => (0..h.bands).filter(|i| b[*i]).collect(),
        None => (0..h.bands).collect(),
    };
    let wl_all = h.wavelengths_um();
    let grid = BandGrid::new(keep.iter().map(|b| wl_all[*b]).collect())
        .map_err(|e| Error::parse(header_path, format!("key 'wavelength': {e}")))?;
    let big = h.byte_order == 1;
    let mut data = Vec::with_capacity(h.lines * h.samples * keep.len());
    for r in 0..h.lines {
        for c in 0..h.samples {
            for &b in &keep {
                let i = h.interleave.index(r, c, b, h.samples, h.lines, h.bands) * elem;
                data.push(decode(&body[i..i + elem], h.data_type, big) / scale);
            }
        }
    }
    ImageCube::new(h.lines, h.samples, Arc::new(grid), data)
}

/// Options for [`write_envi`].
#[derive(Debug, Clone, Copy)]
pub struct EnviWriteOptions {
    pub interleave: Interleave,
    pub data_type: DataType,
    pub big_endian: bool,
    /// Written to the header; integer output stores `value × scale`.
    pub scale: Option<f64>,
    pub units: WavelengthUnits,
}

impl Default for EnviWriteOptions {
    fn default() -> Self {
        Self {
            interleave: Interleave::Bsq,
            data_type: DataType::Float32,
            big_endian: false,
            scale: None,
            units: WavelengthUnits::Micrometers,
        }
    }
}

pub fn write_envi(cube: &ImageCube, header_path: &Path, data_path: &Path, opts: EnviWriteOptions) -> Result<()> {
    let (lines, samples, bands) = (cube.rows(), cube.cols(), cube.bands());
    let wavelength = match opts.units {
        WavelengthUnits::Micrometers => cube.grid().wavelengths().to_vec(),
        WavelengthUnits::Nanometers => cube.grid().wavelengths().iter().map(|w| w * 1000.0).collect(),
    };
    let header = EnviHeader {
        samples,
        lines,
        bands,
        header_offset: 0,
        interleave: opts.interleave,
        data_type: opts.data_type,
        byte_order: u8::from(opts.big_endian),
        wavelength,
        wavelength_units: opts.units,
        bbl: None,
        reflectance_scale_factor: opts.scale,
    };
    let scale = match (opts.scale, opts.data_type.is_integer()) {
        (Some(f), _) => f,
        (None, true) => DEFAULT_INTEGER_SCALE,
        (None, false) => 1.0,
    };
    let total = lines * samples * bands;
    let mut order = vec![(0usize, 0usize, 0usize); total];
    for r in 0..lines {
        for c in 0..samples {
            for b in 0..bands {
                order[opts.interleave.index(r, c, b, samples, lines, bands)] = (r, c, b);
            }
        }
    }
    let mut out = Vec::with_capacity(total * opts.data_type.size());
    for (r, c, b) in order {
        encode(cube.value(r, c, b) * scale, opts.data_type, opts.big_endian, &mut out);
    }
    std::fs::write(header_path, header.to_text()).map_err(|e| Error::io(header_path, e))?;
    std::fs::write(data_path, out).map_err(|e| Error::io(data_path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multiline_brace_lists() {
        let text = "ENVI\nsamples = 2\nlines = 1\nbands = 3\ndata type = 4\ninterleave = BIP\n\
                    wavelength units = Nanometers\nwavelength = {\n 500.0, 600.0,\n 700.0}\nbbl = {1, 0, 1}\n";
        let h = EnviHeader::parse(text, Path::new("x.hdr")).unwrap();
        assert_eq!(h.wavelength, vec![500.0, 600.0, 700.0]);
        assert_eq!(h.interleave, Interleave::Bip);
        assert_eq!(h.bbl, Some(vec![true, false, true]));
        assert_eq!(h.wavelengths_um(), vec![0.5, 0.6, 0.7]);
        let again = EnviHeader::parse(&h.to_text(), Path::new("y.hdr")).unwrap();
        assert_eq!(again, h);
    }

    #[test]
    fn errors_name_the_key() {
        let base = "ENVI\nsamples = 2\nlines = 1\nbands = 2\ninterleave = bsq\n";
        let e = EnviHeader::parse(&format!("{base}data type = 4\n"), Path::new("a.hdr")).unwrap_err();
        assert!(e.to_string().contains("'wavelength'"), "{e}");
        let e = EnviHeader::parse(&format!("{base}data type = 9\nwavelength = {{1,2}}\n"), Path::new("a.hdr")).unwrap_err();
        assert!(e.to_string().contains("'data type'"), "{e}");
        let e = EnviHeader::parse("samples = 2\n", Path::new("a.hdr")).unwrap_err();
        assert!(e.to_string().contains("ENVI"), "{e}");
    }
}
