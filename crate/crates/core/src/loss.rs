//! Loss configurations, filtered targets, loss values and analytic gradients.
//!
//! Neighbourhood losses filter inside the score. Spectral losses filter the
//! observations once, up front, and compare the raw forecast against that
//! filtered target pixel by pixel.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::{fourier_band_pass, DEFAULT_ORDER};
use crate::grid::{FieldKind, GridField, WavelengthBand};
use crate::nbhd::{max_filter_values, mean_filter_values, window, NbhdSpec};
use crate::scores::{
    self, check_binary, check_pair, contingency_of, contingency_partials, csi_from_nbhd,
    nbhd_contingency_of, scored_count, scored_pixels, Orientation, ScoreKind, ScoreValue, LOG_EPS,
};
use crate::wavelet::wavelet_band_pass;

pub const NBHD_HALF_WIDTHS: [usize; 8] = [0, 1, 2, 3, 4, 6, 8, 12];

/// Band edges in degrees; `INFINITY` for open-ended bands.
const BAND_EDGES: [(f64, f64); 16] = [
    (0.0, 0.025),
    (0.025, 0.05),
    (0.05, 0.1),
    (0.1, 0.2),
    (0.2, 0.4),
    (0.4, 0.8),
    (0.8, 1.6),
    (1.6, f64::INFINITY),
    (0.0, 0.1),
    (0.0, 0.2),
    (0.0, 0.4),
    (0.0, 0.8),
    (0.1, f64::INFINITY),
    (0.2, f64::INFINITY),
    (0.4, f64::INFINITY),
    (0.8, f64::INFINITY),
];

pub fn experiment_bands() -> Vec<WavelengthBand> {
    BAND_EDGES
        .iter()
        .map(|&(lo, hi)| WavelengthBand::new(lo, hi).expect("valid band"))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum FilterSpec {
    Neighbourhood(NbhdSpec),
    Fourier(WavelengthBand),
    Wavelet(WavelengthBand),
}

impl FilterSpec {
    pub fn is_spectral(&self) -> bool {
        !matches!(self, FilterSpec::Neighbourhood(_))
    }

    /// Spectral band-pass of a field; neighbourhood specs return it unchanged.
    pub fn apply(&self, field: &GridField) -> Result<GridField> {
        match self {
            FilterSpec::Neighbourhood(_) => Ok(field.clone()),
            FilterSpec::Fourier(band) => fourier_band_pass(field, *band, DEFAULT_ORDER),
            FilterSpec::Wavelet(band) => wavelet_band_pass(field, *band),
        }
    }
}

impl fmt::Display for FilterSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FilterSpec::Neighbourhood(r) => write!(f, "nbhd_r{}", r.half_width_px),
            FilterSpec::Fourier(b) => write!(f, "F{b}"),
            FilterSpec::Wavelet(b) => write!(f, "W{b}"),
        }
    }
}

impl FromStr for FilterSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Argument(format!("cannot parse filter '{s}'"));
        let lower = s.to_ascii_lowercase();
        if let Some(r) = lower.strip_prefix("nbhd_r").or_else(|| lower.strip_prefix("nbhd_max_r")) {
            let r: usize = r.parse().map_err(|_| bad())?;
            return Ok(FilterSpec::Neighbourhood(NbhdSpec::new(r)));
        }
        let (head, band) = lower.split_at(lower.len().min(1));
        let band: WavelengthBand = band.parse().map_err(|_| bad())?;
        match head {
            "f" => Ok(FilterSpec::Fourier(band)),
            "w" => Ok(FilterSpec::Wavelet(band)),
            _ => Err(bad()),
        }
    }
}

/// A score paired with a filter, identified as `<score>_<filter>`, e.g.
/// `fss_nbhd_r4`, `brier_W0.1-inf`, `gerrity_F0-0.2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub score: ScoreKind,
    pub filter: FilterSpec,
}

impl LossSpec {
    pub fn new(score: ScoreKind, filter: FilterSpec) -> Result<Self> {
        if !filter.is_spectral() && !score.supports_neighbourhood() {
            return Err(Error::Argument(format!(
                "{score} can only be paired with a spectral filter"
            )));
        }
        Ok(Self { score, filter })
    }

    pub fn id(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for LossSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", self.score, self.filter)
    }
}

impl FromStr for LossSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (score, filter) = s
            .split_once('_')
            .ok_or_else(|| Error::Argument(format!("cannot parse loss id '{s}'")))?;
        LossSpec::new(score.parse()?, filter.parse()?)
    }
}

/// The 48 neighbourhood and 288 scale-separated configurations.
pub fn enumerate_configs() -> Vec<LossSpec> {
    let mut out = Vec::with_capacity(336);
    for score in ScoreKind::NEIGHBOURHOOD {
        for r in NBHD_HALF_WIDTHS {
            out.push(LossSpec {
                score,
                filter: FilterSpec::Neighbourhood(NbhdSpec::new(r)),
            });
        }
    }
    let bands = experiment_bands();
    for score in ScoreKind::ALL {
        for &band in &bands {
            out.push(LossSpec {
                score,
                filter: FilterSpec::Fourier(band),
            });
        }
        for &band in &bands {
            out.push(LossSpec {
                score,
                filter: FilterSpec::Wavelet(band),
            });
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct PreparedTarget {
    pub original: GridField,
    pub filtered: GridField,
    pub filter: FilterSpec,
    /// Largest amount the filtered values were moved by clamping to [0, 1].
    pub clamp_excess: f64,
}

pub fn prepare_target(spec: &LossSpec, y: &GridField) -> Result<PreparedTarget> {
    prepare_filtered(spec.filter, y)
}

/// Target preparation keyed on the filter alone, so one filtered field can
/// serve every score that shares the filter.
pub fn prepare_filtered(filter: FilterSpec, y: &GridField) -> Result<PreparedTarget> {
    check_binary(y)?;
    let (filtered, clamp_excess) = if filter.is_spectral() {
        filter.apply(y)?.clamp_unit()
    } else {
        (y.clone(), 0.0)
    };
    Ok(PreparedTarget {
        original: y.clone(),
        filtered,
        filter,
        clamp_excess,
    })
}

fn oriented(kind: ScoreKind, s: f64) -> f64 {
    match kind.orientation() {
        Orientation::Negative => s,
        Orientation::Positive => 1.0 - s,
    }
}

/// Raw score behind a loss.
pub fn loss_score(spec: &LossSpec, p: &GridField, t: &PreparedTarget) -> Result<ScoreValue> {
    check_target(spec, t)?;
    match spec.filter {
        FilterSpec::Neighbourhood(r) => scores::nbhd_score(spec.score, p, &t.filtered, r),
        _ => scores::pixelwise_score(spec.score, p, &t.filtered),
    }
}

pub fn loss_value(spec: &LossSpec, p: &GridField, t: &PreparedTarget) -> Result<f64> {
    loss_score(spec, p, t).map(|s| oriented(spec.score, s.value))
}

/// Mean of per-step losses.
pub fn batch_loss(spec: &LossSpec, ps: &[GridField], ts: &[PreparedTarget]) -> Result<f64> {
    if ps.len() != ts.len() || ps.is_empty() {
        return Err(Error::Argument(format!(
            "{} forecasts for {} targets",
            ps.len(),
            ts.len()
        )));
    }
    let mut total = 0.0;
    for (p, t) in ps.iter().zip(ts) {
        total += loss_value(spec, p, t)?;
    }
    Ok(total / ps.len() as f64)
}

fn check_target(spec: &LossSpec, t: &PreparedTarget) -> Result<()> {
    if t.filter != spec.filter {
        return Err(Error::Argument(format!(
            "target was prepared with {} but the loss uses {}",
            t.filter, spec.filter
        )));
    }
    Ok(())
}

/// Score used for evaluation: spectral filters are applied to both fields
/// (each clamped to [0, 1]) before the pixelwise score; neighbourhood
/// filters use the neighbourhood score.
pub fn metric_value(spec: &LossSpec, p: &GridField, y: &GridField) -> Result<ScoreValue> {
    match spec.filter {
        FilterSpec::Neighbourhood(r) => scores::nbhd_score(spec.score, p, y, r),
        filter => {
            let yf = prepare_filtered(filter, y)?.filtered;
            metric_against_filtered(spec, p, &yf)
        }
    }
}

/// As [`metric_value`] with the observation already filtered and clamped.
pub fn metric_against_filtered(spec: &LossSpec, p: &GridField, y_filtered: &GridField) -> Result<ScoreValue> {
    match spec.filter {
        FilterSpec::Neighbourhood(r) => scores::nbhd_score(spec.score, p, y_filtered, r),
        filter => {
            let (pf, _) = filter.apply(p)?.clamp_unit();
            scores::pixelwise_score(spec.score, &pf, y_filtered)
        }
    }
}

/// Where the spectral filter sits relative to the loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// Filter the observations once and score the raw forecast against them.
    #[default]
    FilterObservations,
    /// Filter forecast and observations inside the loss. Not part of
    /// [`enumerate_configs`]: the forecast is left free outside the band.
    FilterBoth,
}

pub fn loss_value_placed(spec: &LossSpec, p: &GridField, y: &GridField, placement: Placement) -> Result<f64> {
    match placement {
        Placement::FilterObservations => loss_value(spec, p, &prepare_target(spec, y)?),
        Placement::FilterBoth => metric_value(spec, p, y).map(|s| oriented(spec.score, s.value)),
    }
}

/// Everything about a loss that does not depend on the forecast.
struct Objective<'a> {
    kind: ScoreKind,
    rows: usize,
    cols: usize,
    scored: Vec<bool>,
    g: f64,
    mode: Mode<'a>,
}

enum Mode<'a> {
    /// Pixelwise comparison against a fixed target.
    Pixel(Vec<f64>),
    /// FSS with mean filters of half-width `r`; `mz` is the filtered target.
    Fss { r: usize, mz: Vec<f64> },
    NbhdCsi { r: usize, y: &'a [f64], ymax: Vec<f64> },
}

impl<'a> Objective<'a> {
    fn new(spec: &LossSpec, p: &GridField, t: &'a PreparedTarget) -> Result<Self> {
        check_target(spec, t)?;
        let z = &t.filtered;
        check_pair(p, z)?;
        let (rows, cols) = p.shape();
        let scored = scored_pixels(p, z);
        let g = scored_count(&scored)?;
        let kind = spec.score;
        let mode = match (spec.filter, kind) {
            (FilterSpec::Neighbourhood(r), _) => {
                check_binary(z)?;
                let r = r.half_width_px;
                match kind {
                    ScoreKind::Fss => Mode::Fss {
                        r,
                        mz: mean_filter_values(z.values(), rows, cols, r),
                    },
                    ScoreKind::Csi if r > 0 => Mode::NbhdCsi {
                        r,
                        y: z.values(),
                        ymax: max_filter_values(z.values(), rows, cols, r),
                    },
                    _ => Mode::Pixel(max_filter_values(z.values(), rows, cols, r)),
                }
            }
            (_, ScoreKind::Fss) => Mode::Fss {
                r: 0,
                mz: z.values().to_vec(),
            },
            _ => Mode::Pixel(z.values().to_vec()),
        };
        Ok(Self {
            kind,
            rows,
            cols,
            scored,
            g,
            mode,
        })
    }

    /// Raw score at `p` without range checks, so finite differences may
    /// step slightly outside [0, 1].
    fn score(&self, p: &[f64]) -> Result<f64> {
        Ok(match &self.mode {
            Mode::Pixel(z) => scores::score_slices(self.kind, p, z, &self.scored)?.value,
            Mode::Fss { r, mz } => {
                let mp = mean_filter_values(p, self.rows, self.cols, *r);
                let (num, den) = self.fss_sums(&mp, mz);
                if den == 0.0 {
                    1.0
                } else {
                    1.0 - num / den
                }
            }
            Mode::NbhdCsi { r, y, .. } => {
                csi_from_nbhd(&nbhd_contingency_of(p, y, &self.scored, self.rows, self.cols, *r)).value
            }
        })
    }

    fn fss_sums(&self, mp: &[f64], mz: &[f64]) -> (f64, f64) {
        let mut num = 0.0;
        let mut den = 0.0;
        for g in (0..mp.len()).filter(|&g| self.scored[g]) {
            num += (mp[g] - mz[g]) * (mp[g] - mz[g]);
            den += mp[g] * mp[g] + mz[g] * mz[g];
        }
        (num, den)
    }

    /// Derivative of the raw score with respect to each forecast pixel.
    fn score_gradient(&self, p: &[f64]) -> Vec<f64> {
        let n = p.len();
        let g = self.g;
        let mut out = vec![0.0; n];
        let scored = &self.scored;
        match &self.mode {
            Mode::Pixel(z) => match self.kind {
                ScoreKind::Brier => {
                    for i in (0..n).filter(|&i| scored[i]) {
                        out[i] = 2.0 * (p[i] - z[i]) / g;
                    }
                }
                ScoreKind::Dice => {
                    for i in (0..n).filter(|&i| scored[i]) {
                        out[i] = (2.0 * z[i] - 1.0) / g;
                    }
                }
                ScoreKind::Xent => {
                    let ln2 = std::f64::consts::LN_2;
                    for i in (0..n).filter(|&i| scored[i]) {
                        if p[i] > LOG_EPS && p[i] < 1.0 - LOG_EPS {
                            out[i] = -(z[i] / p[i] - (1.0 - z[i]) / (1.0 - p[i])) / (ln2 * g);
                        }
                    }
                }
                ScoreKind::Iou => {
                    let (mut inter, mut union) = (0.0, 0.0);
                    for i in (0..n).filter(|&i| scored[i]) {
                        inter += p[i] * z[i];
                        union += p[i].max(z[i]);
                    }
                    if union > 0.0 {
                        for i in (0..n).filter(|&i| scored[i]) {
                            let du = if p[i] > z[i] {
                                1.0
                            } else if p[i] < z[i] {
                                0.0
                            } else {
                                0.5
                            };
                            out[i] = (z[i] * union - inter * du) / (union * union);
                        }
                    }
                }
                ScoreKind::Fss => unreachable!("fss has its own mode"),
                ScoreKind::Csi | ScoreKind::Heidke | ScoreKind::Peirce | ScoreKind::Gerrity => {
                    let t = contingency_of(p, z, scored);
                    let [sa, sb, sc, sd] = contingency_partials(self.kind, &t);
                    for i in (0..n).filter(|&i| scored[i]) {
                        out[i] = z[i] * (sa - sc) + (1.0 - z[i]) * (sb - sd);
                    }
                }
            },
            Mode::Fss { r, mz } => {
                let (rows, cols) = (self.rows, self.cols);
                let mp = mean_filter_values(p, rows, cols, *r);
                let (num, den) = self.fss_sums(&mp, mz);
                if den > 0.0 {
                    let mut diff = vec![0.0; n];
                    let mut own = vec![0.0; n];
                    for i in (0..n).filter(|&i| scored[i]) {
                        diff[i] = mp[i] - mz[i];
                        own[i] = mp[i];
                    }
                    // the mean filter is its own adjoint
                    let dnum = mean_filter_values(&diff, rows, cols, *r);
                    let dden = mean_filter_values(&own, rows, cols, *r);
                    for i in 0..n {
                        out[i] = -2.0 * (dnum[i] * den - num * dden[i]) / (den * den);
                    }
                }
            }
            Mode::NbhdCsi { r, y, ymax } => {
                let (rows, cols, r) = (self.rows, self.cols, *r);
                let t = nbhd_contingency_of(p, y, scored, rows, cols, r);
                let sv = csi_from_nbhd(&t);
                if sv.fallbacks.contains(&scores::Fallback::CsiZeroComponent) {
                    return out;
                }
                let s2 = sv.value * sv.value;
                let pod_defined = t.a_obs + t.c > 0.0;
                let sr_defined = t.a_pred + t.b > 0.0;
                if pod_defined {
                    // d(1/POD)/dq for one observation's matched probability q
                    let d_inv_pod = -t.c / (t.a_obs * t.a_obs) - 1.0 / t.a_obs;
                    for o in (0..n).filter(|&o| scored[o] && y[o] == 1.0) {
                        let q = window(o, rows, cols, r).map(|h| p[h]).fold(0.0, f64::max);
                        let ties: Vec<usize> = window(o, rows, cols, r).filter(|&h| p[h] == q).collect();
                        let share = d_inv_pod / ties.len() as f64;
                        for h in ties {
                            out[h] += -s2 * share;
                        }
                    }
                }
                if sr_defined {
                    let ap = t.a_pred;
                    for i in (0..n).filter(|&i| scored[i]) {
                        let d_inv_sr = if ymax[i] == 1.0 {
                            -t.b / (ap * ap) - 1.0 / ap
                        } else {
                            1.0 / ap
                        };
                        out[i] += -s2 * d_inv_sr;
                    }
                }
            }
        }
        out
    }

    /// Pixels where the loss has a kink within `margin` of `p`.
    fn near_kink(&self, p: &[f64], margin: f64) -> Vec<bool> {
        let n = p.len();
        let mut out = vec![false; n];
        match (&self.mode, self.kind) {
            (Mode::Pixel(_), ScoreKind::Xent) => {
                for i in 0..n {
                    out[i] = (p[i] - LOG_EPS).abs() < margin || (p[i] - (1.0 - LOG_EPS)).abs() < margin;
                }
            }
            (Mode::Pixel(z), ScoreKind::Iou) => {
                for i in 0..n {
                    out[i] = (p[i] - z[i]).abs() < margin;
                }
            }
            (Mode::NbhdCsi { r, y, .. }, _) => {
                let (rows, cols, r) = (self.rows, self.cols, *r);
                for o in (0..n).filter(|&o| self.scored[o] && y[o] == 1.0) {
                    let q = window(o, rows, cols, r).map(|h| p[h]).fold(0.0, f64::max);
                    let near: Vec<usize> = window(o, rows, cols, r).filter(|&h| q - p[h] < margin).collect();
                    // the window max also competes with 0
                    if near.len() > 1 || q < margin {
                        for h in near {
                            out[h] = true;
                        }
                    }
                }
            }
            _ => {}
        }
        out
    }
}

/// Analytic derivative of the loss with respect to every forecast pixel.
/// Pixels outside the eval mask get 0.
pub fn loss_gradient(spec: &LossSpec, p: &GridField, t: &PreparedTarget) -> Result<GridField> {
    let obj = Objective::new(spec, p, t)?;
    let mut grad = obj.score_gradient(p.values());
    if spec.score.orientation() == Orientation::Positive {
        for v in &mut grad {
            *v = -*v;
        }
    }
    GridField::real_from(p.rows(), p.cols(), p.spacing_deg(), grad, "loss gradient")
}

/// Gradient magnitude treated as zero when forming relative errors.
pub const GRAD_ABS_FLOOR: f64 = 1e-12;

/// True when the loss cannot depend on `p`: the skill scores collapse to 0
/// for a spatially constant target.
fn constant_loss(spec: &LossSpec, t: &PreparedTarget) -> bool {
    if !matches!(spec.score, ScoreKind::Heidke | ScoreKind::Peirce | ScoreKind::Gerrity) {
        return false;
    }
    let f = &t.filtered;
    let mut vals = f
        .values()
        .iter()
        .enumerate()
        .filter(|(i, _)| f.eval_mask().map_or(true, |m| m[*i]))
        .map(|(_, v)| *v);
    match vals.next() {
        Some(first) => vals.all(|v| v == first),
        None => true,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_abs_err: f64,
    pub max_rel_err: f64,
    /// `(row, col)` of the largest relative error.
    pub worst_pixel: Option<(usize, usize)>,
    pub checked: usize,
    pub excluded: usize,
    /// The target is spatially constant and the loss is identically zero.
    #[serde(default)]
    pub degenerate: bool,
}

/// Compares [`loss_gradient`] against central differences with step `h`.
///
/// The relative error at a pixel is `|ga - gfd| / max(‖ga‖∞, ‖gfd‖∞)`,
/// never dividing by less than [`GRAD_ABS_FLOOR`]. Pixels within `2h` of a
/// kink are skipped. Skill scores against a constant target are flagged
/// `degenerate` once the analytic gradient is confirmed to vanish; all pixels
/// then count as excluded.
pub fn grad_check(spec: &LossSpec, p: &GridField, t: &PreparedTarget, h: f64) -> Result<GradCheckReport> {
    if !(h > 0.0) {
        return Err(Error::Argument(format!("step {h} must be positive")));
    }
    let analytic = loss_gradient(spec, p, t)?;
    let ga = analytic.values();
    let obj = Objective::new(spec, p, t)?;
    let skip = obj.near_kink(p.values(), 2.0 * h);
    let ga_max = ga.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    // differencing the raw score avoids the rounding of 1 - s
    let sign = match spec.score.orientation() {
        Orientation::Negative => 1.0,
        Orientation::Positive => -1.0,
    };

    let mut work = p.values().to_vec();
    let mut report = GradCheckReport {
        max_abs_err: 0.0,
        max_rel_err: 0.0,
        worst_pixel: None,
        checked: 0,
        excluded: 0,
        degenerate: false,
    };
    if ga_max <= GRAD_ABS_FLOOR && constant_loss(spec, t) {
        report.degenerate = true;
        report.excluded = work.len();
        return Ok(report);
    }
    let mut fds = vec![f64::NAN; work.len()];
    for i in 0..work.len() {
        if skip[i] {
            report.excluded += 1;
            continue;
        }
        let orig = work[i];
        work[i] = orig + h;
        let up = obj.score(&work)?;
        work[i] = orig - h;
        let down = obj.score(&work)?;
        work[i] = orig;
        fds[i] = sign * (up - down) / (2.0 * h);
    }
    let fd_max = fds.iter().filter(|v| !v.is_nan()).fold(0.0_f64, |m, v| m.max(v.abs()));
    let denom = ga_max.max(fd_max).max(GRAD_ABS_FLOOR);
    for (i, &fd) in fds.iter().enumerate() {
        if fd.is_nan() {
            continue;
        }
        let abs = (ga[i] - fd).abs();
        let rel = abs / denom;
        report.checked += 1;
        report.max_abs_err = report.max_abs_err.max(abs);
        if rel > report.max_rel_err || report.worst_pixel.is_none() {
            report.max_rel_err = report.max_rel_err.max(rel);
            report.worst_pixel = Some((i / p.cols(), i % p.cols()));
        }
    }
    Ok(report)
}

/// A probability field in the shape of `like`.
pub fn prob_like(like: &GridField, values: Vec<f64>) -> Result<GridField> {
    let f = GridField::new(like.rows(), like.cols(), like.spacing_deg(), FieldKind::Prob, values)?;
    match like.eval_mask() {
        Some(m) => f.with_eval_mask(m.to_vec()),
        None => Ok(f),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    const DELTA: f64 = 0.0125;

    fn mask(rows: usize, cols: usize, v: Vec<f64>) -> GridField {
        GridField::new(rows, cols, DELTA, FieldKind::Mask, v).unwrap()
    }

    fn prob(rows: usize, cols: usize, v: Vec<f64>) -> GridField {
        GridField::new(rows, cols, DELTA, FieldKind::Prob, v).unwrap()
    }

    fn random_pair(n: usize, seed: u64) -> (GridField, GridField) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p: Vec<f64> = (0..n * n).map(|_| rng.random_range(0.02..0.98)).collect();
        let y: Vec<f64> = (0..n * n).map(|_| if rng.random::<f64>() < 0.3 { 1.0 } else { 0.0 }).collect();
        (prob(n, n, p), mask(n, n, y))
    }

    #[test]
    fn table_of_configs() {
        let all = enumerate_configs();
        assert_eq!(all.len(), 336);
        let nbhd = all.iter().filter(|s| !s.filter.is_spectral()).count();
        assert_eq!(nbhd, 48);
        let ids: HashSet<String> = all.iter().map(|s| s.id()).collect();
        assert_eq!(ids.len(), 336);
        assert_eq!(all, enumerate_configs());
        for s in &all {
            assert_eq!(s.id().parse::<LossSpec>().unwrap(), *s);
        }
    }

    #[test]
    fn id_grammar() {
        let s: LossSpec = "FSS_nbhd_r4".parse().unwrap();
        assert_eq!(s.score, ScoreKind::Fss);
        assert_eq!(s.filter, FilterSpec::Neighbourhood(NbhdSpec::new(4)));
        assert_eq!(s.id(), "fss_nbhd_r4");
        let s: LossSpec = "brier_W0.1-inf".parse().unwrap();
        assert_eq!(s.filter, FilterSpec::Wavelet(WavelengthBand::new(0.1, f64::INFINITY).unwrap()));
        assert_eq!(s.id(), "brier_W0.1-inf");
        assert_eq!("heidke_F0-0.025".parse::<LossSpec>().unwrap().id(), "heidke_F0-0.025");
        assert!("heidke_nbhd_r2".parse::<LossSpec>().is_err());
        assert!("brier_X0-1".parse::<LossSpec>().is_err());
        assert!("brier".parse::<LossSpec>().is_err());
    }

    #[test]
    fn nbhd_target_is_untouched() {
        let (_, y) = random_pair(8, 1);
        let spec: LossSpec = "iou_nbhd_r2".parse().unwrap();
        let t = prepare_target(&spec, &y).unwrap();
        assert_eq!(t.filtered, y);
        assert_eq!(t.clamp_excess, 0.0);
    }

    #[test]
    fn spectral_target_is_graded() {
        let mut v = vec![0.0; 32 * 32];
        for i in 10..22 {
            for j in 8..20 {
                v[i * 32 + j] = 1.0;
            }
        }
        let y = mask(32, 32, v);
        for id in ["brier_F0-0.1", "brier_W0.05-inf"] {
            let t = prepare_target(&id.parse().unwrap(), &y).unwrap();
            let strictly_between = t.filtered.values().iter().filter(|v| **v > 0.05 && **v < 0.95).count();
            assert!(strictly_between > 0, "{id}");
            assert!(t.filtered.values().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn hand_losses() {
        let y = mask(1, 2, vec![1.0, 0.0]);
        let spec: LossSpec = "brier_nbhd_r0".parse().unwrap();
        let t = prepare_target(&spec, &y).unwrap();
        assert_eq!(loss_value(&spec, &prob(1, 2, vec![0.5, 0.5]), &t).unwrap(), 0.25);
        let perfect = prob(1, 2, vec![1.0, 0.0]);
        assert_eq!(loss_value(&spec, &perfect, &t).unwrap(), 0.0);
        let fss: LossSpec = "fss_nbhd_r0".parse().unwrap();
        assert_eq!(loss_value(&fss, &perfect, &prepare_target(&fss, &y).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn brier_gradient_is_linear() {
        let (p, y) = random_pair(6, 2);
        let spec: LossSpec = "brier_nbhd_r0".parse().unwrap();
        let g = loss_gradient(&spec, &p, &prepare_target(&spec, &y).unwrap()).unwrap();
        for ((gv, pv), yv) in g.values().iter().zip(p.values()).zip(y.values()) {
            assert_eq!(*gv, 2.0 * (pv - yv) / 36.0);
        }
        let exact = prob(6, 6, y.values().to_vec());
        let g0 = loss_gradient(&spec, &exact, &prepare_target(&spec, &y).unwrap()).unwrap();
        assert!(g0.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (p, y) = random_pair(12, 3);
        for spec in enumerate_configs().into_iter().step_by(7) {
            let t = prepare_target(&spec, &y).unwrap();
            let rep = grad_check(&spec, &p, &t, 1e-5).unwrap();
            assert!(rep.max_rel_err <= 1e-5, "{}: {:?}", spec.id(), rep);
        }
    }

    #[test]
    fn fss_r4_gradient() {
        let (p, y) = random_pair(16, 4);
        let spec: LossSpec = "fss_nbhd_r4".parse().unwrap();
        let rep = grad_check(&spec, &p, &prepare_target(&spec, &y).unwrap(), 1e-5).unwrap();
        assert!(rep.max_rel_err <= 1e-5, "{rep:?}");
        assert_eq!(rep.excluded, 0);
    }

    #[test]
    fn iou_tie_is_excluded() {
        let y = mask(1, 3, vec![1.0, 0.0, 0.0]);
        let p = prob(1, 3, vec![1.0, 0.3, 0.0]);
        let spec: LossSpec = "iou_nbhd_r0".parse().unwrap();
        let t = prepare_target(&spec, &y).unwrap();
        let rep = grad_check(&spec, &p, &t, 1e-5).unwrap();
        assert_eq!(rep.excluded, 2);
        let g = loss_gradient(&spec, &p, &t).unwrap();
        // union = 1.3 with the tie at pixel 2 contributing half a unit
        let (inter, union) = (1.0, 1.3);
        let expect = -(0.0 * union - inter * 0.5) / (union * union);
        assert!((g.values()[2] - expect).abs() < 1e-15);
    }

    #[test]
    fn nbhd_csi_gradient_splits_ties() {
        let y = mask(1, 3, vec![0.0, 1.0, 0.0]);
        let p = prob(1, 3, vec![0.4, 0.2, 0.4]);
        let spec: LossSpec = "csi_nbhd_r1".parse().unwrap();
        let t = prepare_target(&spec, &y).unwrap();
        let g = loss_gradient(&spec, &p, &t).unwrap();
        assert_eq!(g.values()[0], g.values()[2]);
    }

    #[test]
    fn filtering_both_leaves_out_of_band_detail_free() {
        let n = 16;
        let mut y = vec![0.0; n * n];
        for i in 4..12 {
            for j in 4..12 {
                y[i * n + j] = 1.0;
            }
        }
        let y = mask(n, n, y);
        let flat = prob(n, n, vec![0.5; n * n]);
        let checker: Vec<f64> = (0..n * n)
            .map(|g| if (g / n + g % n) % 2 == 0 { 0.8 } else { 0.2 })
            .collect();
        let checker = prob(n, n, checker);
        let spec = LossSpec::new(
            ScoreKind::Brier,
            FilterSpec::Wavelet(WavelengthBand::new(4.0 * DELTA, f64::INFINITY).unwrap()),
        )
        .unwrap();
        let both = |p: &GridField| loss_value_placed(&spec, p, &y, Placement::FilterBoth).unwrap();
        let obs = |p: &GridField| loss_value_placed(&spec, p, &y, Placement::FilterObservations).unwrap();
        assert!((both(&flat) - both(&checker)).abs() < 1e-12);
        assert!((obs(&flat) - obs(&checker)).abs() > 1e-3);
    }

    #[test]
    fn batch_loss_is_mean_of_steps() {
        let spec: LossSpec = "dice_nbhd_r1".parse().unwrap();
        let (p1, y1) = random_pair(5, 5);
        let (p2, y2) = random_pair(5, 6);
        let t1 = prepare_target(&spec, &y1).unwrap();
        let t2 = prepare_target(&spec, &y2).unwrap();
        let l = batch_loss(&spec, &[p1.clone(), p2.clone()], &[t1.clone(), t2.clone()]).unwrap();
        let expect = (loss_value(&spec, &p1, &t1).unwrap() + loss_value(&spec, &p2, &t2).unwrap()) / 2.0;
        assert_eq!(l, expect);
        assert!(batch_loss(&spec, &[p1], &[]).is_err());
    }

    #[test]
    fn mismatched_target_rejected() {
        let (p, y) = random_pair(4, 7);
        let a: LossSpec = "brier_nbhd_r1".parse().unwrap();
        let b: LossSpec = "brier_nbhd_r2".parse().unwrap();
        let t = prepare_target(&a, &y).unwrap();
        assert!(loss_value(&b, &p, &t).is_err());
        assert!(loss_gradient(&b, &p, &t).is_err());
    }
}
