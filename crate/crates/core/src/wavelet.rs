//! Orthonormal 2-D Haar transform and the level-wise band-pass built on it.
//!
//! For each 2x2 block `(a b / c d)` (row `2i` holds `a b`):
//!
//! ```text
//! LL = (a + b + c + d) / 2    mean in both directions
//! LH = (a + b - c - d) / 2    mean horizontally, detail vertically
//! HL = (a - b + c - d) / 2    detail horizontally, mean vertically
//! HH = (a - b - c + d) / 2    detail in both directions
//! ```
//!
//! Level `k` (1-based) has grid spacing `delta * 2^k`; its detail subbands
//! carry wavelength `delta * 2^k` and its LL carries `delta * 2^(k+1)`.

use crate::error::{Error, Result};
use crate::grid::{crop_taper, next_pow2_dims, taper_zero_pad, GridField, WavelengthBand};

/// One decomposition level: four equally shaped subbands, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct HaarLevel {
    pub rows: usize,
    pub cols: usize,
    pub ll: Vec<f64>,
    pub lh: Vec<f64>,
    pub hl: Vec<f64>,
    pub hh: Vec<f64>,
}

impl HaarLevel {
    fn zeros(rows: usize, cols: usize) -> Self {
        let z = vec![0.0; rows * cols];
        Self {
            rows,
            cols,
            ll: z.clone(),
            lh: z.clone(),
            hl: z.clone(),
            hh: z,
        }
    }

    fn zero_details(&mut self) {
        self.lh.fill(0.0);
        self.hl.fill(0.0);
        self.hh.fill(0.0);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveletPyramid {
    /// `levels[0]` is level 1 (finest).
    pub levels: Vec<HaarLevel>,
    pub base_spacing_deg: f64,
}

impl WaveletPyramid {
    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, k: usize) -> &HaarLevel {
        &self.levels[k - 1]
    }

    pub fn level_mut(&mut self, k: usize) -> &mut HaarLevel {
        &mut self.levels[k - 1]
    }
}

pub fn haar_forward(field: &GridField) -> Result<HaarLevel> {
    haar_forward_values(field.values(), field.rows(), field.cols())
}

pub fn haar_forward_values(values: &[f64], rows: usize, cols: usize) -> Result<HaarLevel> {
    if rows % 2 != 0 || cols % 2 != 0 {
        return Err(Error::Argument(format!(
            "Haar transform needs even dimensions, got {rows}x{cols}"
        )));
    }
    let (hr, hc) = (rows / 2, cols / 2);
    let mut out = HaarLevel::zeros(hr, hc);
    for i in 0..hr {
        for j in 0..hc {
            let a = values[2 * i * cols + 2 * j];
            let b = values[2 * i * cols + 2 * j + 1];
            let c = values[(2 * i + 1) * cols + 2 * j];
            let d = values[(2 * i + 1) * cols + 2 * j + 1];
            let k = i * hc + j;
            out.ll[k] = (a + b + c + d) / 2.0;
            out.lh[k] = (a + b - c - d) / 2.0;
            out.hl[k] = (a - b + c - d) / 2.0;
            out.hh[k] = (a - b - c + d) / 2.0;
        }
    }
    Ok(out)
}

/// Inverse of [`haar_forward_values`]; returns a `2*rows x 2*cols` array.
pub fn haar_inverse_values(level: &HaarLevel) -> Result<Vec<f64>> {
    let n = level.rows * level.cols;
    if [&level.ll, &level.lh, &level.hl, &level.hh].iter().any(|s| s.len() != n) {
        return Err(Error::Argument("Haar subbands differ in shape".into()));
    }
    let cols = 2 * level.cols;
    let mut out = vec![0.0; 4 * n];
    for i in 0..level.rows {
        for j in 0..level.cols {
            let k = i * level.cols + j;
            let (ll, lh, hl, hh) = (level.ll[k], level.lh[k], level.hl[k], level.hh[k]);
            out[2 * i * cols + 2 * j] = (ll + lh + hl + hh) / 2.0;
            out[2 * i * cols + 2 * j + 1] = (ll + lh - hl - hh) / 2.0;
            out[(2 * i + 1) * cols + 2 * j] = (ll - lh + hl - hh) / 2.0;
            out[(2 * i + 1) * cols + 2 * j + 1] = (ll - lh - hl + hh) / 2.0;
        }
    }
    Ok(out)
}

pub fn haar_inverse(level: &HaarLevel, spacing_deg: f64) -> Result<GridField> {
    let values = haar_inverse_values(level)?;
    GridField::real_from(2 * level.rows, 2 * level.cols, spacing_deg, values, "inverse wavelet transform")
}

fn log2_exact(n: usize) -> Option<usize> {
    n.is_power_of_two().then(|| n.trailing_zeros() as usize)
}

/// Number of Haar levels a power-of-two grid supports.
pub fn max_levels(rows: usize, cols: usize) -> Result<usize> {
    match (log2_exact(rows), log2_exact(cols)) {
        (Some(a), Some(b)) => Ok(a.min(b)),
        _ => Err(Error::Argument(format!(
            "wavelet pyramid needs power-of-two dimensions, got {rows}x{cols}"
        ))),
    }
}

pub fn haar_pyramid(field: &GridField, n_levels: usize) -> Result<WaveletPyramid> {
    let available = max_levels(field.rows(), field.cols())?;
    if n_levels > available {
        return Err(Error::Argument(format!(
            "{}x{} grid supports at most {available} levels, {n_levels} requested",
            field.rows(),
            field.cols()
        )));
    }
    let mut levels: Vec<HaarLevel> = Vec::with_capacity(n_levels);
    for _ in 0..n_levels {
        let next = match levels.last() {
            None => haar_forward_values(field.values(), field.rows(), field.cols())?,
            Some(prev) => haar_forward_values(&prev.ll, prev.rows, prev.cols)?,
        };
        levels.push(next);
    }
    Ok(WaveletPyramid {
        levels,
        base_spacing_deg: field.spacing_deg(),
    })
}

/// Rebuilds the finest grid from the deepest LL and every detail subband.
pub fn haar_reconstruct(pyramid: &WaveletPyramid) -> Result<Vec<f64>> {
    let mut ll: Option<Vec<f64>> = None;
    for level in pyramid.levels.iter().rev() {
        let mut lvl = level.clone();
        if let Some(rebuilt) = ll.take() {
            lvl.ll = rebuilt;
        }
        ll = Some(haar_inverse_values(&lvl)?);
    }
    ll.ok_or_else(|| Error::Argument("empty pyramid".into()))
}

/// `(detail wavelength, LL wavelength)` of a level: `(delta 2^k, delta 2^(k+1))`.
pub fn level_wavelengths(level: usize, spacing_deg: f64) -> (f64, f64) {
    let small = spacing_deg * 2f64.powi(level as i32);
    (small, 2.0 * small)
}

/// Keeps the part of a field carried by wavelet levels inside `band`.
///
/// The field is zero-padded (centred) to power-of-two dimensions and fully
/// decomposed. Then:
///
/// * LL is zeroed at every level whose LL wavelength exceeds the upper bound;
///   those levels are never rebuilt.
/// * Working from the deepest remaining level upwards, each level's LL is
///   rebuilt from all four subbands of the level below it.
/// * Levels whose detail wavelength is at or below the lower bound have their
///   detail subbands zeroed after the rebuild.
///
/// The filtered level 1 is inverted and the padding removed. With bands on
/// dyadic boundaries every detail level lands in exactly one of the bands
/// `[0, lambda]` and `[lambda, inf)`.
pub fn wavelet_band_pass(field: &GridField, band: WavelengthBand) -> Result<GridField> {
    let padded = wavelet_band_pass_padded(field, band)?;
    let mut out = crop_taper(&padded, field.rows(), field.cols())?;
    if let Some(mask) = field.eval_mask() {
        out = out.with_eval_mask(mask.to_vec())?;
    }
    Ok(out)
}

/// Band-pass output before the padding is removed.
pub fn wavelet_band_pass_padded(field: &GridField, band: WavelengthBand) -> Result<GridField> {
    let (pr, pc) = next_pow2_dims(field.rows(), field.cols());
    let padded = taper_zero_pad(&field.clone().without_eval_mask(), pr, pc)?;
    let depth = max_levels(pr, pc)?;
    let delta = field.spacing_deg();
    let hi = band.lambda_hi_deg();
    let lo = band.lambda_lo_deg();

    if depth == 0 {
        // nothing to decompose: the field is its own deepest LL
        let keep = level_wavelengths(0, delta).1 <= hi;
        let values = if keep { padded.values().to_vec() } else { vec![0.0; pr * pc] };
        return GridField::real_from(pr, pc, delta, values, "wavelet band-pass");
    }

    let mut pyr = haar_pyramid(&padded, depth)?;
    let ll_removed = |k: usize| level_wavelengths(k, delta).1 > hi;

    for k in 1..=depth {
        if ll_removed(k) {
            pyr.level_mut(k).ll.fill(0.0);
        }
    }
    for k in (1..=depth).rev() {
        if ll_removed(k) {
            continue;
        }
        if k < depth {
            let rebuilt = haar_inverse_values(pyr.level(k + 1))?;
            pyr.level_mut(k).ll = rebuilt;
        }
        if level_wavelengths(k, delta).0 <= lo {
            pyr.level_mut(k).zero_details();
        }
    }

    let values = haar_inverse_values(pyr.level(1))?;
    GridField::real_from(pr, pc, delta, values, "inverse wavelet transform")
}
