//! Synthetic convection masks and probability forecasts.
//!
//! All randomness comes from `ChaCha8Rng::seed_from_u64`, so a spec and seed
//! give the same field on every platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FieldKind, GridField};
use crate::nbhd::mean_filter_values;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub rows: usize,
    pub cols: usize,
    pub spacing_deg: f64,
    pub n_cells: usize,
    /// Inclusive range of the minor semi-axis, in pixels.
    pub cell_radius_px: (f64, f64),
    /// Inclusive range of major/minor axis ratio; 1 gives discs.
    pub elongation: (f64, f64),
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            rows: 64,
            cols: 64,
            spacing_deg: 0.02,
            n_cells: 6,
            cell_radius_px: (2.0, 6.0),
            elongation: (1.0, 3.0),
            seed: 0,
        }
    }
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        let (r0, r1) = self.cell_radius_px;
        let (e0, e1) = self.elongation;
        if !(r0.is_finite() && r1.is_finite() && 0.0 <= r0 && r0 <= r1) {
            return Err(Error::Argument(format!("bad cell radius range {r0}..{r1}")));
        }
        if !(e0.is_finite() && e1.is_finite() && 1.0 <= e0 && e0 <= e1) {
            return Err(Error::Argument(format!("bad elongation range {e0}..{e1}")));
        }
        Ok(())
    }
}

/// One rasterised blob: an ellipse centred on a pixel centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
    pub radius_px: f64,
    pub elongation: f64,
    /// Orientation of the major axis, radians in [0, pi).
    pub angle: f64,
}

impl Cell {
    pub fn disc(row: usize, col: usize, radius_px: f64) -> Self {
        Self {
            row,
            col,
            radius_px,
            elongation: 1.0,
            angle: 0.0,
        }
    }

    pub fn contains(&self, row: i64, col: i64) -> bool {
        let dy = (row - self.row as i64) as f64;
        let dx = (col - self.col as i64) as f64;
        if self.elongation == 1.0 {
            return dx * dx + dy * dy <= self.radius_px * self.radius_px;
        }
        if self.radius_px == 0.0 {
            return dx == 0.0 && dy == 0.0;
        }
        let (s, c) = self.angle.sin_cos();
        let u = (dx * c + dy * s) / (self.radius_px * self.elongation);
        let v = (-dx * s + dy * c) / self.radius_px;
        u * u + v * v <= 1.0
    }

    /// Flat indices of the pixels the cell covers inside a rows x cols grid.
    pub fn pixels(&self, rows: usize, cols: usize) -> Vec<usize> {
        let reach = (self.radius_px * self.elongation).ceil() as i64;
        let (r0, c0) = (self.row as i64, self.col as i64);
        let mut out = Vec::new();
        for i in (r0 - reach).max(0)..=(r0 + reach).min(rows as i64 - 1) {
            for j in (c0 - reach).max(0)..=(c0 + reach).min(cols as i64 - 1) {
                if self.contains(i, j) {
                    out.push(i as usize * cols + j as usize);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct SynthMask {
    pub field: GridField,
    pub cells: Vec<Cell>,
    pub event_fraction: f64,
}

pub fn synth_cells(spec: &SynthSpec) -> Result<Vec<Cell>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let draw = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| {
        if lo == hi {
            lo
        } else {
            rng.random_range(lo..=hi)
        }
    };
    Ok((0..spec.n_cells)
        .map(|_| {
            let row = rng.random_range(0..spec.rows);
            let col = rng.random_range(0..spec.cols);
            let radius_px = draw(&mut rng, spec.cell_radius_px);
            let elongation = draw(&mut rng, spec.elongation);
            let angle = rng.random_range(0.0..std::f64::consts::PI);
            Cell {
                row,
                col,
                radius_px,
                elongation,
                angle,
            }
        })
        .collect())
}

pub fn rasterize(cells: &[Cell], rows: usize, cols: usize, spacing_deg: f64) -> Result<GridField> {
    let mut values = vec![0.0; rows * cols];
    for cell in cells {
        for k in cell.pixels(rows, cols) {
            values[k] = 1.0;
        }
    }
    GridField::new(rows, cols, spacing_deg, FieldKind::Mask, values)
}

pub fn synth_mask(spec: &SynthSpec) -> Result<SynthMask> {
    let cells = synth_cells(spec)?;
    let field = rasterize(&cells, spec.rows, spec.cols, spec.spacing_deg)?;
    let event_fraction = field.sum() / field.len() as f64;
    Ok(SynthMask {
        field,
        cells,
        event_fraction,
    })
}

/// Shifts values by `(dy, dx)` pixels, filling uncovered pixels with 0.
pub fn translate_values(values: &[f64], rows: usize, cols: usize, offset_px: (i64, i64)) -> Vec<f64> {
    let (dy, dx) = offset_px;
    let mut out = vec![0.0; values.len()];
    for i in 0..rows as i64 {
        let si = i - dy;
        if si < 0 || si >= rows as i64 {
            continue;
        }
        for j in 0..cols as i64 {
            let sj = j - dx;
            if sj < 0 || sj >= cols as i64 {
                continue;
            }
            out[(i as usize) * cols + j as usize] = values[si as usize * cols + sj as usize];
        }
    }
    out
}

/// A forecast made from a mask: shifted, smoothed, perturbed and clamped.
pub fn synth_prob(
    mask: &GridField,
    blur_r: usize,
    offset_px: (i64, i64),
    noise_sd: f64,
    seed: u64,
) -> Result<GridField> {
    if mask.kind() != FieldKind::Mask {
        return Err(Error::Argument("synth_prob expects a mask field".into()));
    }
    if !(noise_sd.is_finite() && noise_sd >= 0.0) {
        return Err(Error::Argument(format!("bad noise sd {noise_sd}")));
    }
    let (rows, cols) = mask.shape();
    let mut v = translate_values(mask.values(), rows, cols, offset_px);
    if blur_r > 0 {
        v = mean_filter_values(&v, rows, cols, blur_r);
    }
    if noise_sd > 0.0 {
        let normal = Normal::new(0.0, noise_sd).map_err(|e| Error::Argument(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for x in &mut v {
            *x += normal.sample(&mut rng);
        }
    }
    for x in &mut v {
        *x = x.clamp(0.0, 1.0);
    }
    mask.map_values(FieldKind::Prob, v)
}

/// Independent uniform forecasts in [0.02, 0.98] and Bernoulli events,
/// the generic input of gradient checks.
pub fn noise_pair(rows: usize, cols: usize, spacing_deg: f64, event_rate: f64, seed: u64) -> Result<(GridField, GridField)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(0.02..0.98)).collect();
    let y: Vec<f64> = (0..rows * cols)
        .map(|_| if rng.random::<f64>() < event_rate { 1.0 } else { 0.0 })
        .collect();
    Ok((
        GridField::new(rows, cols, spacing_deg, FieldKind::Prob, p)?,
        GridField::new(rows, cols, spacing_deg, FieldKind::Mask, y)?,
    ))
}

/// Mixes a base seed with extra words (SplitMix64 finaliser).
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mix = |mut z: u64| {
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    };
    parts.iter().fold(mix(base.wrapping_add(0x9e37_79b9_7f4a_7c15)), |acc, &p| {
        mix(acc ^ p.wrapping_add(0x9e37_79b9_7f4a_7c15))
    })
}
