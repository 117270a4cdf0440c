//! Raster type, the GRID1 file format, and the zero-padding used by the
//! spectral filters.
//!
//! GRID1 layout:
//!
//! ```text
//! GRID1\n
//! <rows> <cols> <spacing_deg> <kind>[ masked]\n
//! rows*cols little-endian f32, row-major
//! [rows*cols bytes of 0/1 eval mask, only when the header ends in `masked`]
//! ```
//!
//! Values are held in memory as `f64`; writing rounds each value to the
//! nearest `f32`, so a field read from disk survives a write/read cycle
//! bit for bit.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAGIC: &str = "GRID1";

/// What the values of a field are allowed to be.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    /// Binary event mask, values in {0, 1}.
    Mask,
    /// Probabilities in [0, 1].
    Prob,
    /// Any finite real.
    Real,
}

impl FieldKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FieldKind::Mask => "mask",
            FieldKind::Prob => "prob",
            FieldKind::Real => "real",
        }
    }

    fn check(self, v: f64) -> bool {
        match self {
            FieldKind::Mask => v == 0.0 || v == 1.0,
            FieldKind::Prob => (0.0..=1.0).contains(&v),
            FieldKind::Real => v.is_finite(),
        }
    }
}

impl fmt::Display for FieldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FieldKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mask" => Ok(FieldKind::Mask),
            "prob" => Ok(FieldKind::Prob),
            "real" => Ok(FieldKind::Real),
            other => Err(Error::Format(format!("unknown field kind '{other}'"))),
        }
    }
}

/// A 2-D raster on an isotropic grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    rows: usize,
    cols: usize,
    spacing_deg: f64,
    kind: FieldKind,
    values: Vec<f64>,
    eval_mask: Option<Vec<bool>>,
}

impl GridField {
    pub fn new(
        rows: usize,
        cols: usize,
        spacing_deg: f64,
        kind: FieldKind,
        values: Vec<f64>,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Validation(format!(
                "grid dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if !(spacing_deg.is_finite() && spacing_deg > 0.0) {
            return Err(Error::Validation(format!(
                "grid spacing must be positive and finite, got {spacing_deg}"
            )));
        }
        if values.len() != rows * cols {
            return Err(Error::Validation(format!(
                "expected {} values for a {rows}x{cols} grid, got {}",
                rows * cols,
                values.len()
            )));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite value {v} at index {i}"
            )));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !kind.check(**v)) {
            return Err(Error::Validation(format!(
                "value {v} at index {i} is not valid for kind {kind}"
            )));
        }
        Ok(Self {
            rows,
            cols,
            spacing_deg,
            kind,
            values,
            eval_mask: None,
        })
    }

    pub fn zeros(rows: usize, cols: usize, spacing_deg: f64, kind: FieldKind) -> Result<Self> {
        Self::new(rows, cols, spacing_deg, kind, vec![0.0; rows * cols])
    }

    /// Builds a real-valued field, rejecting non-finite values with a
    /// stage label.
    pub(crate) fn real_from(
        rows: usize,
        cols: usize,
        spacing_deg: f64,
        values: Vec<f64>,
        stage: &'static str,
    ) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric { stage });
        }
        Self::new(rows, cols, spacing_deg, FieldKind::Real, values)
    }

    pub fn with_eval_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.values.len() {
            return Err(Error::Validation(format!(
                "eval mask has {} entries, field has {}",
                mask.len(),
                self.values.len()
            )));
        }
        self.eval_mask = Some(mask);
        Ok(self)
    }

    pub fn without_eval_mask(mut self) -> Self {
        self.eval_mask = None;
        self
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn spacing_deg(&self) -> f64 {
        self.spacing_deg
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn eval_mask(&self) -> Option<&[bool]> {
        self.eval_mask.as_deref()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Same geometry and eval mask, new values and kind.
    pub fn map_values(&self, kind: FieldKind, values: Vec<f64>) -> Result<Self> {
        let mut out = Self::new(self.rows, self.cols, self.spacing_deg, kind, values)?;
        out.eval_mask = self.eval_mask.clone();
        Ok(out)
    }

    /// Reinterprets the field under another kind, validating the values.
    pub fn with_kind(&self, kind: FieldKind) -> Result<Self> {
        self.map_values(kind, self.values.clone())
    }

    /// Copy with every value clamped into [0, 1], returned as a probability
    /// field, plus the largest distance any value was moved.
    pub fn clamp_unit(&self) -> (Self, f64) {
        let mut excess = 0.0_f64;
        let values = self
            .values
            .iter()
            .map(|&v| {
                let c = v.clamp(0.0, 1.0);
                excess = excess.max((v - c).abs());
                c
            })
            .collect();
        let out = Self {
            rows: self.rows,
            cols: self.cols,
            spacing_deg: self.spacing_deg,
            kind: FieldKind::Prob,
            values,
            eval_mask: self.eval_mask.clone(),
        };
        (out, excess)
    }
}

/// Range of wavelengths kept by a spectral filter, in degrees.
///
/// A lower bound of 0 means unbounded below; an upper bound of `f64::INFINITY`
/// means unbounded above.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WavelengthBand {
    lo: f64,
    hi: f64,
}

impl WavelengthBand {
    pub fn new(lambda_lo_deg: f64, lambda_hi_deg: f64) -> Result<Self> {
        let lo_ok = lambda_lo_deg.is_finite() && lambda_lo_deg >= 0.0;
        let hi_ok = lambda_hi_deg > 0.0 && !lambda_hi_deg.is_nan();
        if !lo_ok || !hi_ok || lambda_lo_deg >= lambda_hi_deg {
            return Err(Error::Argument(format!(
                "invalid wavelength band [{lambda_lo_deg}, {lambda_hi_deg}]"
            )));
        }
        Ok(Self {
            lo: lambda_lo_deg,
            hi: lambda_hi_deg,
        })
    }

    pub fn all_pass() -> Self {
        Self {
            lo: 0.0,
            hi: f64::INFINITY,
        }
    }

    pub fn lambda_lo_deg(&self) -> f64 {
        self.lo
    }

    pub fn lambda_hi_deg(&self) -> f64 {
        self.hi
    }

    pub fn unbounded_below(&self) -> bool {
        self.lo == 0.0
    }

    pub fn unbounded_above(&self) -> bool {
        self.hi.is_infinite()
    }
}

/// `lo-hi` with `inf` for an open upper end, e.g. `0.1-inf`, `0-0.025`.
impl fmt::Display for WavelengthBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.hi.is_infinite() {
            write!(f, "{}-inf", self.lo)
        } else {
            write!(f, "{}-{}", self.lo, self.hi)
        }
    }
}

impl FromStr for WavelengthBand {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Argument(format!("cannot parse wavelength band '{s}'"));
        let (lo, hi) = s.split_once('-').ok_or_else(bad)?;
        let lo: f64 = lo.parse().map_err(|_| bad())?;
        let hi: f64 = match hi {
            "inf" | "Inf" | "INF" => f64::INFINITY,
            h => h.parse().map_err(|_| bad())?,
        };
        Self::new(lo, hi)
    }
}

pub fn read_grid(path: impl AsRef<Path>) -> Result<GridField> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_grid(&bytes)
}

pub fn decode_grid(bytes: &[u8]) -> Result<GridField> {
    let (magic, rest) = split_line(bytes).ok_or_else(|| Error::Format("missing magic line".into()))?;
    if magic != MAGIC.as_bytes() {
        return Err(Error::Format("missing GRID1 magic".into()));
    }
    let (header, payload) =
        split_line(rest).ok_or_else(|| Error::Format("missing header line".into()))?;
    let header = std::str::from_utf8(header)
        .map_err(|_| Error::Format("header is not ASCII".into()))?;
    let tokens: Vec<&str> = header.split(' ').collect();
    let masked = match tokens.len() {
        4 => false,
        5 if tokens[4] == "masked" => true,
        _ => return Err(Error::Format(format!("bad header line '{header}'"))),
    };
    let parse_dim = |t: &str| {
        t.parse::<usize>()
            .map_err(|_| Error::Format(format!("bad dimension '{t}'")))
    };
    let rows = parse_dim(tokens[0])?;
    let cols = parse_dim(tokens[1])?;
    let spacing: f64 = tokens[2]
        .parse()
        .map_err(|_| Error::Format(format!("bad spacing '{}'", tokens[2])))?;
    let kind: FieldKind = tokens[3].parse()?;

    let n = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::Format("grid dimensions overflow".into()))?;
    let expected = n * 4 + if masked { n } else { 0 };
    if payload.len() != expected {
        return Err(Error::Truncated {
            expected,
            found: payload.len(),
        });
    }
    let values = payload[..n * 4]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let field = GridField::new(rows, cols, spacing, kind, values)?;
    if masked {
        let mask = payload[n * 4..]
            .iter()
            .map(|&b| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(Error::Format(format!("eval mask byte {other} is not 0/1"))),
            })
            .collect::<Result<Vec<_>>>()?;
        field.with_eval_mask(mask)
    } else {
        Ok(field)
    }
}

pub fn encode_grid(field: &GridField) -> Vec<u8> {
    let header = format!(
        "{MAGIC}\n{} {} {} {}{}\n",
        field.rows,
        field.cols,
        field.spacing_deg,
        field.kind,
        if field.eval_mask.is_some() { " masked" } else { "" }
    );
    let mask_len = field.eval_mask.as_ref().map_or(0, Vec::len);
    let mut out = Vec::with_capacity(header.len() + field.values.len() * 4 + mask_len);
    out.extend_from_slice(header.as_bytes());
    for &v in &field.values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    if let Some(mask) = &field.eval_mask {
        out.extend(mask.iter().map(|&m| m as u8));
    }
    out
}

/// Writes through a temporary sibling file and renames it into place.
pub fn write_grid(field: &GridField, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_grid(field))
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    let mut file = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    file.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    file.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(file);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn split_line(bytes: &[u8]) -> Option<(&[u8], &[u8])> {
    let nl = bytes.iter().position(|&b| b == b'\n')?;
    Some((&bytes[..nl], &bytes[nl + 1..]))
}

/// Offset of the original data inside a padded axis: equal padding on both
/// sides, the odd remainder going after.
pub fn pad_offset(original: usize, target: usize) -> usize {
    (target - original) / 2
}

/// Zero-pads a field so that it sits centred in a `target_rows x target_cols`
/// grid. Any eval mask is padded with `false`.
pub fn taper_zero_pad(field: &GridField, target_rows: usize, target_cols: usize) -> Result<GridField> {
    if target_rows < field.rows || target_cols < field.cols {
        return Err(Error::Argument(format!(
            "cannot pad {}x{} down to {target_rows}x{target_cols}",
            field.rows, field.cols
        )));
    }
    let r0 = pad_offset(field.rows, target_rows);
    let c0 = pad_offset(field.cols, target_cols);
    let mut values = vec![0.0; target_rows * target_cols];
    for (i, row) in field.values.chunks_exact(field.cols).enumerate() {
        let start = (r0 + i) * target_cols + c0;
        values[start..start + field.cols].copy_from_slice(row);
    }
    let eval_mask = field.eval_mask.as_ref().map(|mask| {
        let mut out = vec![false; target_rows * target_cols];
        for (i, row) in mask.chunks_exact(field.cols).enumerate() {
            let start = (r0 + i) * target_cols + c0;
            out[start..start + field.cols].copy_from_slice(row);
        }
        out
    });
    Ok(GridField {
        rows: target_rows,
        cols: target_cols,
        spacing_deg: field.spacing_deg,
        kind: field.kind,
        values,
        eval_mask,
    })
}

/// Inverse of [`taper_zero_pad`]: extracts the centred `orig_rows x orig_cols`
/// window using the same offsets.
pub fn crop_taper(field: &GridField, orig_rows: usize, orig_cols: usize) -> Result<GridField> {
    if orig_rows > field.rows || orig_cols > field.cols || orig_rows == 0 || orig_cols == 0 {
        return Err(Error::Argument(format!(
            "cannot crop {}x{} to {orig_rows}x{orig_cols}",
            field.rows, field.cols
        )));
    }
    let r0 = pad_offset(orig_rows, field.rows);
    let c0 = pad_offset(orig_cols, field.cols);
    let take = |src: &[f64]| -> Vec<f64> {
        (0..orig_rows)
            .flat_map(|i| {
                let start = (r0 + i) * field.cols + c0;
                src[start..start + orig_cols].iter().copied()
            })
            .collect()
    };
    let values = take(&field.values);
    let eval_mask = field.eval_mask.as_ref().map(|mask| {
        (0..orig_rows)
            .flat_map(|i| {
                let start = (r0 + i) * field.cols + c0;
                mask[start..start + orig_cols].iter().copied()
            })
            .collect()
    });
    Ok(GridField {
        rows: orig_rows,
        cols: orig_cols,
        spacing_deg: field.spacing_deg,
        kind: field.kind,
        values,
        eval_mask,
    })
}

pub fn next_pow2_dims(rows: usize, cols: usize) -> (usize, usize) {
    (rows.max(1).next_power_of_two(), cols.max(1).next_power_of_two())
}
