//! Fourier band-pass filtering: taper to three times the grid size, apply a
//! radial Blackman-Harris window, forward FFT, scale every coefficient by a
//! Butterworth band-pass gain, inverse FFT, crop back to the original grid.
//!
//! The forward transform is unnormalised and the inverse divides by
//! `rows * cols`.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::rc::Rc;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{crop_taper, taper_zero_pad, FieldKind, GridField, WavelengthBand};

pub const DEFAULT_ORDER: u32 = 2;

/// Largest imaginary part tolerated after the inverse transform, relative to
/// the magnitude of the real output.
const IMAG_RESIDUE_TOL: f64 = 1e-9;

/// Total wavenumber (cycles per degree) of every coefficient in an FFT
/// layout: index `m` maps to signed index `m` for `m <= N/2`, else `m - N`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    pub rows: usize,
    pub cols: usize,
    pub spacing_deg: f64,
    pub nu_total: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ButterworthSpec {
    pub band: WavelengthBand,
    pub order: u32,
}

impl ButterworthSpec {
    pub fn new(band: WavelengthBand, order: u32) -> Result<Self> {
        if order == 0 {
            return Err(Error::Argument("Butterworth order must be at least 1".into()));
        }
        Ok(Self { band, order })
    }

    /// Cut-off of the low-pass stage, `1 / lambda_lo`; `None` when the band
    /// is unbounded below.
    pub fn nu_max(&self) -> Option<f64> {
        (!self.band.unbounded_below()).then(|| 1.0 / self.band.lambda_lo_deg())
    }

    /// Cut-off of the high-pass stage, `1 / lambda_hi`; `None` when the band
    /// is unbounded above.
    pub fn nu_min(&self) -> Option<f64> {
        (!self.band.unbounded_above()).then(|| 1.0 / self.band.lambda_hi_deg())
    }

    pub fn gain(&self, nu: f64) -> f64 {
        let low = self.nu_max().map_or(1.0, |c| butterworth_low(nu, c, self.order));
        let high = self.nu_min().map_or(1.0, |c| butterworth_high(nu, c, self.order));
        low * high
    }
}

pub fn butterworth_low(nu: f64, nu_max: f64, order: u32) -> f64 {
    1.0 / (1.0 + (nu / nu_max).powi(2 * order as i32))
}

pub fn butterworth_high(nu: f64, nu_min: f64, order: u32) -> f64 {
    1.0 - 1.0 / (1.0 + (nu / nu_min).powi(2 * order as i32))
}

/// Radial Blackman-Harris weight at distance `r` for a window of radius `big_r`.
pub fn blackman_harris(r: f64, big_r: f64) -> f64 {
    if r > big_r {
        return 0.0;
    }
    if big_r == 0.0 {
        return 1.0;
    }
    let x = 1.0 + r / big_r;
    let w = 0.42 - 0.5 * (PI * x).cos() + 0.08 * (2.0 * PI * x).cos();
    // the three-term sum lands a few ulp below zero at r = R
    w.clamp(0.0, 1.0)
}

/// Window radius used for a grid: half of the shorter side, measured
/// between pixel centres (307 for a 615 x 615 grid).
pub fn window_radius(rows: usize, cols: usize) -> f64 {
    (rows.min(cols) - 1) as f64 / 2.0
}

pub fn blackman_harris_weights(rows: usize, cols: usize) -> Result<GridField> {
    GridField::new(rows, cols, 1.0, FieldKind::Prob, window_values(rows, cols))
}

fn window_values(rows: usize, cols: usize) -> Vec<f64> {
    let big_r = window_radius(rows, cols);
    let (ci, cj) = ((rows - 1) as f64 / 2.0, (cols - 1) as f64 / 2.0);
    let mut w = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            let r = ((i as f64 - ci).powi(2) + (j as f64 - cj).powi(2)).sqrt();
            w.push(blackman_harris(r, big_r));
        }
    }
    w
}

fn signed_index(m: usize, n: usize) -> f64 {
    if m <= n / 2 {
        m as f64
    } else {
        m as f64 - n as f64
    }
}

pub fn frequency_grid(rows: usize, cols: usize, spacing_deg: f64) -> FrequencyGrid {
    let axis = |n: usize| -> Vec<f64> {
        (0..n)
            .map(|m| signed_index(m, n) / (n as f64 * spacing_deg))
            .collect()
    };
    let (fr, fc) = (axis(rows), axis(cols));
    let nu_total = fr
        .iter()
        .flat_map(|a| fc.iter().map(move |b| (a * a + b * b).sqrt()))
        .collect();
    FrequencyGrid {
        rows,
        cols,
        spacing_deg,
        nu_total,
    }
}

pub fn butterworth_gain_grid(freqs: &FrequencyGrid, spec: &ButterworthSpec) -> Result<GridField> {
    let gains = freqs.nu_total.iter().map(|&nu| spec.gain(nu)).collect();
    GridField::new(freqs.rows, freqs.cols, freqs.spacing_deg, FieldKind::Prob, gains)
}

/// Planned row and column transforms for one grid shape.
pub struct Fft2d {
    rows: usize,
    cols: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

thread_local! {
    static PLANS: RefCell<HashMap<(usize, usize), Rc<Fft2d>>> = RefCell::new(HashMap::new());
}

impl Fft2d {
    pub fn new(rows: usize, cols: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            rows,
            cols,
            row_fwd: planner.plan_fft_forward(cols),
            row_inv: planner.plan_fft_inverse(cols),
            col_fwd: planner.plan_fft_forward(rows),
            col_inv: planner.plan_fft_inverse(rows),
        }
    }

    /// Shared per-thread plan for the given shape.
    pub fn cached(rows: usize, cols: usize) -> Rc<Fft2d> {
        PLANS.with(|p| {
            p.borrow_mut()
                .entry((rows, cols))
                .or_insert_with(|| Rc::new(Fft2d::new(rows, cols)))
                .clone()
        })
    }

    pub fn forward(&self, buf: &mut [Complex<f64>]) {
        self.run(buf, &*self.row_fwd, &*self.col_fwd);
    }

    pub fn inverse(&self, buf: &mut [Complex<f64>]) {
        self.run(buf, &*self.row_inv, &*self.col_inv);
        let scale = 1.0 / (self.rows * self.cols) as f64;
        buf.iter_mut().for_each(|c| *c *= scale);
    }

    fn run(&self, buf: &mut [Complex<f64>], row: &dyn Fft<f64>, col: &dyn Fft<f64>) {
        assert_eq!(buf.len(), self.rows * self.cols, "buffer does not match plan");
        row.process(buf);
        let mut t = transpose(buf, self.rows, self.cols);
        col.process(&mut t);
        buf.copy_from_slice(&transpose(&t, self.cols, self.rows));
    }
}

fn transpose(src: &[Complex<f64>], rows: usize, cols: usize) -> Vec<Complex<f64>> {
    let mut out = vec![Complex::new(0.0, 0.0); src.len()];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = src[i * cols + j];
        }
    }
    out
}

/// Intermediate grids of one band-pass run, kept for inspection.
#[derive(Debug, Clone)]
pub struct FourierStages {
    pub tapered: GridField,
    pub windowed: GridField,
    /// Coefficient magnitudes before and after the gain, DC at index 0.
    pub spectrum: GridField,
    pub filtered_spectrum: GridField,
    pub output: GridField,
}

pub fn fourier_band_pass(field: &GridField, band: WavelengthBand, order: u32) -> Result<GridField> {
    run_pipeline(field, band, order, false).map(|(out, _)| out)
}

pub fn fourier_band_pass_stages(
    field: &GridField,
    band: WavelengthBand,
    order: u32,
) -> Result<FourierStages> {
    let (_, stages) = run_pipeline(field, band, order, true)?;
    Ok(stages.expect("stages requested"))
}

fn run_pipeline(
    field: &GridField,
    band: WavelengthBand,
    order: u32,
    keep_stages: bool,
) -> Result<(GridField, Option<FourierStages>)> {
    let spec = ButterworthSpec::new(band, order)?;
    let (rows, cols) = field.shape();
    let (tr, tc) = (3 * rows, 3 * cols);
    let spacing = field.spacing_deg();

    let tapered = taper_zero_pad(&field.clone().without_eval_mask(), tr, tc)?;
    let window = window_values(tr, tc);
    let windowed: Vec<f64> = tapered.values().iter().zip(&window).map(|(v, w)| v * w).collect();

    let mut buf: Vec<Complex<f64>> = windowed.iter().map(|&v| Complex::new(v, 0.0)).collect();
    let plan = Fft2d::cached(tr, tc);
    plan.forward(&mut buf);
    if buf.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::Numeric { stage: "forward transform" });
    }
    let spectrum = keep_stages.then(|| buf.iter().map(|c| c.norm()).collect::<Vec<_>>());

    let freqs = frequency_grid(tr, tc, spacing);
    for (c, &nu) in buf.iter_mut().zip(&freqs.nu_total) {
        *c *= spec.gain(nu);
    }
    let filtered_spectrum = keep_stages.then(|| buf.iter().map(|c| c.norm()).collect::<Vec<_>>());

    plan.inverse(&mut buf);
    let real: Vec<f64> = buf.iter().map(|c| c.re).collect();
    let peak = real.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let imag = buf.iter().fold(0.0_f64, |m, c| m.max(c.im.abs()));
    if !(imag <= IMAG_RESIDUE_TOL * peak) {
        return Err(Error::Numeric { stage: "inverse transform" });
    }

    let full = GridField::real_from(tr, tc, spacing, real, "inverse transform")?;
    let mut out = crop_taper(&full, rows, cols)?;
    if let Some(mask) = field.eval_mask() {
        out = out.with_eval_mask(mask.to_vec())?;
    }

    let stages = if keep_stages {
        let as_real = |v: Vec<f64>, stage| GridField::real_from(tr, tc, spacing, v, stage);
        Some(FourierStages {
            windowed: as_real(windowed, "window")?,
            spectrum: as_real(spectrum.unwrap_or_default(), "forward transform")?,
            filtered_spectrum: as_real(filtered_spectrum.unwrap_or_default(), "gain")?,
            tapered,
            output: out.clone(),
        })
    } else {
        None
    };
    Ok((out, stages))
}
