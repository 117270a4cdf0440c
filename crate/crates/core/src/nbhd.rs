//! Square-window neighbourhood filters. Pixels outside the grid count as 0
//! and the mean always divides by the full window area, which keeps the
//! mean filter symmetric as a linear operator.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FieldKind, GridField};

/// Neighbourhood half-width `r`; the window is `(2r+1) x (2r+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NbhdSpec {
    pub half_width_px: usize,
}

impl NbhdSpec {
    pub const fn new(half_width_px: usize) -> Self {
        Self { half_width_px }
    }

    pub fn side(&self) -> usize {
        2 * self.half_width_px + 1
    }
}

impl fmt::Display for NbhdSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.half_width_px)
    }
}

pub fn max_filter(field: &GridField, r: NbhdSpec) -> Result<GridField> {
    if field.kind() == FieldKind::Real {
        return Err(Error::Argument(
            "max filter expects a mask or probability field".into(),
        ));
    }
    let out = max_filter_values(field.values(), field.rows(), field.cols(), r.half_width_px);
    field.map_values(field.kind(), out)
}

/// Mean over the window. A mask input comes back as a probability field.
pub fn mean_filter(field: &GridField, r: NbhdSpec) -> Result<GridField> {
    let out = mean_filter_values(field.values(), field.rows(), field.cols(), r.half_width_px);
    let kind = match field.kind() {
        FieldKind::Mask | FieldKind::Prob => FieldKind::Prob,
        FieldKind::Real => FieldKind::Real,
    };
    let out = if kind == FieldKind::Prob {
        // rounding can push a full window of ones a hair above 1
        out.into_iter().map(|v| v.clamp(0.0, 1.0)).collect()
    } else {
        out
    };
    field.map_values(kind, out)
}

pub fn max_filter_values(values: &[f64], rows: usize, cols: usize, r: usize) -> Vec<f64> {
    if r == 0 {
        return values.to_vec();
    }
    let mut tmp = vec![0.0; values.len()];
    for i in 0..rows {
        let row = &values[i * cols..(i + 1) * cols];
        for j in 0..cols {
            let lo = j.saturating_sub(r);
            let hi = (j + r).min(cols - 1);
            let mut m = row[lo..=hi].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if j < r || j + r >= cols {
                m = m.max(0.0);
            }
            tmp[i * cols + j] = m;
        }
    }
    let mut out = vec![0.0; values.len()];
    for j in 0..cols {
        for i in 0..rows {
            let lo = i.saturating_sub(r);
            let hi = (i + r).min(rows - 1);
            let mut m = (lo..=hi).map(|k| tmp[k * cols + j]).fold(f64::NEG_INFINITY, f64::max);
            if i < r || i + r >= rows {
                m = m.max(0.0);
            }
            out[i * cols + j] = m;
        }
    }
    out
}

pub fn mean_filter_values(values: &[f64], rows: usize, cols: usize, r: usize) -> Vec<f64> {
    if r == 0 {
        return values.to_vec();
    }
    let area = ((2 * r + 1) * (2 * r + 1)) as f64;
    let mut tmp = vec![0.0; values.len()];
    for i in 0..rows {
        let row = &values[i * cols..(i + 1) * cols];
        for j in 0..cols {
            let lo = j.saturating_sub(r);
            let hi = (j + r).min(cols - 1);
            tmp[i * cols + j] = row[lo..=hi].iter().sum();
        }
    }
    let mut out = vec![0.0; values.len()];
    for j in 0..cols {
        for i in 0..rows {
            let lo = i.saturating_sub(r);
            let hi = (i + r).min(rows - 1);
            let s: f64 = (lo..=hi).map(|k| tmp[k * cols + j]).sum();
            out[i * cols + j] = s / area;
        }
    }
    out
}

/// Row-major indices of the in-grid pixels in the window centred at `idx`.
pub(crate) fn window(idx: usize, rows: usize, cols: usize, r: usize) -> impl Iterator<Item = usize> {
    let (i, j) = (idx / cols, idx % cols);
    let (i0, i1) = (i.saturating_sub(r), (i + r).min(rows - 1));
    let (j0, j1) = (j.saturating_sub(r), (j + r).min(cols - 1));
    (i0..=i1).flat_map(move |k| (j0..=j1).map(move |l| k * cols + l))
}
