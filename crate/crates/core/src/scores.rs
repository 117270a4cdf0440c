//! Verification scores over probabilistic forecasts.
//!
//! Every score works on probabilities directly: contingency tables are
//! accumulated fractionally (a pixel forecast at 0.8 with the event observed
//! adds 0.8 to hits and 0.2 to misses) rather than after thresholding.
//! Pixels outside an eval mask are left out of every sum, including the
//! pixel count.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridField;
use crate::nbhd::{max_filter_values, mean_filter_values, window, NbhdSpec};

/// Lower clamp applied to probabilities inside logarithms.
pub const LOG_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreKind {
    Brier,
    Fss,
    Iou,
    Dice,
    Csi,
    Xent,
    Heidke,
    Peirce,
    Gerrity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// Lower is better.
    Negative,
    /// Higher is better.
    Positive,
}

impl ScoreKind {
    pub const ALL: [ScoreKind; 9] = [
        ScoreKind::Brier,
        ScoreKind::Fss,
        ScoreKind::Iou,
        ScoreKind::Dice,
        ScoreKind::Csi,
        ScoreKind::Xent,
        ScoreKind::Heidke,
        ScoreKind::Peirce,
        ScoreKind::Gerrity,
    ];

    /// Scores that also have a neighbourhood form.
    pub const NEIGHBOURHOOD: [ScoreKind; 6] = [
        ScoreKind::Brier,
        ScoreKind::Fss,
        ScoreKind::Iou,
        ScoreKind::Dice,
        ScoreKind::Csi,
        ScoreKind::Xent,
    ];

    pub fn orientation(self) -> Orientation {
        match self {
            ScoreKind::Brier | ScoreKind::Xent => Orientation::Negative,
            _ => Orientation::Positive,
        }
    }

    pub fn supports_neighbourhood(self) -> bool {
        Self::NEIGHBOURHOOD.contains(&self)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ScoreKind::Brier => "brier",
            ScoreKind::Fss => "fss",
            ScoreKind::Iou => "iou",
            ScoreKind::Dice => "dice",
            ScoreKind::Csi => "csi",
            ScoreKind::Xent => "xent",
            ScoreKind::Heidke => "heidke",
            ScoreKind::Peirce => "peirce",
            ScoreKind::Gerrity => "gerrity",
        }
    }

    /// Value attained by a perfect forecast.
    pub fn optimum(self) -> f64 {
        match self.orientation() {
            Orientation::Negative => 0.0,
            Orientation::Positive => 1.0,
        }
    }
}

impl fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScoreKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        ScoreKind::ALL
            .into_iter()
            .find(|k| k.as_str() == lower)
            .ok_or_else(|| Error::Argument(format!("unknown score '{s}'")))
    }
}

/// Substitute values used when a score's formula is 0/0 or otherwise
/// undefined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    /// FSS with both fields empty: 1.
    FssEmptyFields,
    /// IOU with an empty union: 1.
    IouEmptyUnion,
    /// CSI with no hits, false alarms or misses: 1.
    CsiEmptyTable,
    /// No observed events, so POD is taken as 1.
    PodUndefined,
    /// No forecast signal, so SR is taken as 1.
    SrUndefined,
    /// POD or SR is zero: CSI is 0.
    CsiZeroComponent,
    /// Heidke with N equal to the random-chance count: 0.
    HeidkeDegenerate,
    /// Peirce with no events or no non-events: 0.
    PeirceEmptyClass,
    /// Gerrity with no events or no non-events: 0.
    GerrityEmptyClass,
}

impl Fallback {
    pub fn as_str(self) -> &'static str {
        match self {
            Fallback::FssEmptyFields => "fss_empty_fields",
            Fallback::IouEmptyUnion => "iou_empty_union",
            Fallback::CsiEmptyTable => "csi_empty_table",
            Fallback::PodUndefined => "pod_undefined",
            Fallback::SrUndefined => "sr_undefined",
            Fallback::CsiZeroComponent => "csi_zero_component",
            Fallback::HeidkeDegenerate => "heidke_degenerate",
            Fallback::PeirceEmptyClass => "peirce_empty_class",
            Fallback::GerrityEmptyClass => "gerrity_empty_class",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreValue {
    pub value: f64,
    pub fallbacks: Vec<Fallback>,
}

impl ScoreValue {
    fn plain(value: f64) -> Self {
        Self {
            value,
            fallbacks: Vec::new(),
        }
    }

    fn fallback(value: f64, why: Fallback) -> Self {
        Self {
            value,
            fallbacks: vec![why],
        }
    }
}

/// Probabilistic 2x2 contingency table.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ContingencyCounts {
    /// Hits.
    pub a: f64,
    /// False alarms.
    pub b: f64,
    /// Misses.
    pub c: f64,
    /// Correct negatives.
    pub d: f64,
}

impl ContingencyCounts {
    pub fn n(&self) -> f64 {
        self.a + self.b + self.c + self.d
    }

    pub fn add_pixel(&mut self, p: f64, y: f64) {
        self.a += p * y;
        self.b += p * (1.0 - y);
        self.c += (1.0 - p) * y;
        self.d += (1.0 - p) * (1.0 - y);
    }
}

/// Two-sided neighbourhood table: hits are counted once from the
/// observations' side (`a_obs`) and once from the forecasts' side (`a_pred`).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NbhdContingency {
    pub a_obs: f64,
    pub a_pred: f64,
    pub b: f64,
    pub c: f64,
    pub half_width: usize,
}

/// Pixels that take part in scoring: the intersection of both eval masks.
pub fn scored_pixels(p: &GridField, y: &GridField) -> Vec<bool> {
    let n = p.len();
    match (p.eval_mask(), y.eval_mask()) {
        (None, None) => vec![true; n],
        (Some(m), None) | (None, Some(m)) => m.to_vec(),
        (Some(a), Some(b)) => a.iter().zip(b).map(|(x, y)| *x && *y).collect(),
    }
}

pub(crate) fn check_pair(p: &GridField, y: &GridField) -> Result<()> {
    if p.shape() != y.shape() {
        return Err(Error::Argument(format!(
            "forecast is {}x{} but observation is {}x{}",
            p.rows(),
            p.cols(),
            y.rows(),
            y.cols()
        )));
    }
    check_unit(p, "forecast")?;
    check_unit(y, "observation")
}

fn check_unit(f: &GridField, what: &str) -> Result<()> {
    match f.values().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        Some(v) => Err(Error::Argument(format!("{what} value {v} is outside [0, 1]"))),
        None => Ok(()),
    }
}

pub(crate) fn check_binary(y: &GridField) -> Result<()> {
    match y.values().iter().find(|v| **v != 0.0 && **v != 1.0) {
        Some(v) => Err(Error::Argument(format!("observation value {v} is not binary"))),
        None => Ok(()),
    }
}

pub(crate) fn scored_count(scored: &[bool]) -> Result<f64> {
    let g = scored.iter().filter(|s| **s).count();
    if g == 0 {
        return Err(Error::Argument("no pixels left to score".into()));
    }
    Ok(g as f64)
}

pub fn prob_contingency(p: &GridField, y: &GridField) -> Result<ContingencyCounts> {
    if p.shape() != y.shape() {
        return Err(Error::Argument("forecast and observation shapes differ".into()));
    }
    let scored = scored_pixels(p, y);
    Ok(contingency_of(p.values(), y.values(), &scored))
}

pub(crate) fn contingency_of(p: &[f64], y: &[f64], scored: &[bool]) -> ContingencyCounts {
    let mut sums = [Neumaier::default(); 4];
    for ((&pv, &yv), &s) in p.iter().zip(y).zip(scored) {
        if s {
            sums[0].add(pv * yv);
            sums[1].add(pv * (1.0 - yv));
            sums[2].add((1.0 - pv) * yv);
            sums[3].add((1.0 - pv) * (1.0 - yv));
        }
    }
    ContingencyCounts {
        a: sums[0].total(),
        b: sums[1].total(),
        c: sums[2].total(),
        d: sums[3].total(),
    }
}

/// Compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub(crate) fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn nbhd_contingency(p: &GridField, y: &GridField, r: NbhdSpec) -> Result<NbhdContingency> {
    check_pair(p, y)?;
    check_binary(y)?;
    let scored = scored_pixels(p, y);
    Ok(nbhd_contingency_of(
        p.values(),
        y.values(),
        &scored,
        p.rows(),
        p.cols(),
        r.half_width_px,
    ))
}

pub(crate) fn nbhd_contingency_of(
    p: &[f64],
    y: &[f64],
    scored: &[bool],
    rows: usize,
    cols: usize,
    r: usize,
) -> NbhdContingency {
    let mut t = NbhdContingency {
        half_width: r,
        ..Default::default()
    };
    // observation side: each observed event is matched by the largest
    // probability near it
    for g in (0..p.len()).filter(|&g| scored[g] && y[g] == 1.0) {
        let q = window(g, rows, cols, r).map(|h| p[h]).fold(0.0, f64::max);
        t.a_obs += q;
        t.c += 1.0 - q;
    }
    // forecast side: each forecast pixel is checked for an event near it
    let ymax = max_filter_values(y, rows, cols, r);
    for g in (0..p.len()).filter(|&g| scored[g]) {
        if ymax[g] == 1.0 {
            t.a_pred += p[g];
            t.b += 1.0 - p[g];
        } else {
            t.b += p[g];
        }
    }
    t
}

pub fn csi_from_counts(t: &ContingencyCounts) -> ScoreValue {
    let denom = t.a + t.b + t.c;
    if denom == 0.0 {
        ScoreValue::fallback(1.0, Fallback::CsiEmptyTable)
    } else {
        ScoreValue::plain(t.a / denom)
    }
}

/// CSI from `1/CSI = 1/POD + 1/SR - 1`.
pub fn csi_from_nbhd(t: &NbhdContingency) -> ScoreValue {
    let mut fallbacks = Vec::new();
    let pod = if t.a_obs + t.c == 0.0 {
        fallbacks.push(Fallback::PodUndefined);
        1.0
    } else {
        t.a_obs / (t.a_obs + t.c)
    };
    let sr = if t.a_pred + t.b == 0.0 {
        fallbacks.push(Fallback::SrUndefined);
        1.0
    } else {
        t.a_pred / (t.a_pred + t.b)
    };
    let value = if pod == 0.0 || sr == 0.0 {
        fallbacks.push(Fallback::CsiZeroComponent);
        0.0
    } else {
        1.0 / (1.0 / pod + 1.0 / sr - 1.0)
    };
    ScoreValue { value, fallbacks }
}

/// Heidke skill score `(a + d - R) / (N - R)` with `R` the number of correct
/// forecasts expected by chance, evaluated as the equal
/// `2(ad - bc) / ((a + c)(c + d) + (a + b)(b + d))`.
pub fn heidke(t: &ContingencyCounts) -> ScoreValue {
    let denom = (t.a + t.c) * (t.c + t.d) + (t.a + t.b) * (t.b + t.d);
    if !(denom > 0.0) {
        return ScoreValue::fallback(0.0, Fallback::HeidkeDegenerate);
    }
    ScoreValue::plain(2.0 * diff_of_products(t.a, t.d, t.b, t.c) / denom)
}

/// `a*d - b*c` with a single rounding error.
fn diff_of_products(a: f64, d: f64, b: f64, c: f64) -> f64 {
    let w = b * c;
    let e = (-b).mul_add(c, w);
    a.mul_add(d, -w) + e
}

pub fn peirce(t: &ContingencyCounts) -> ScoreValue {
    let (events, non_events) = (t.a + t.c, t.b + t.d);
    if events == 0.0 || non_events == 0.0 {
        return ScoreValue::fallback(0.0, Fallback::PeirceEmptyClass);
    }
    ScoreValue::plain(t.a / events - t.b / non_events)
}

/// Gerrity score with event ratio `r = (a + c) / (b + d)`.
pub fn gerrity(t: &ContingencyCounts) -> ScoreValue {
    let (events, non_events) = (t.a + t.c, t.b + t.d);
    if events == 0.0 || non_events == 0.0 {
        return ScoreValue::fallback(0.0, Fallback::GerrityEmptyClass);
    }
    let ratio = events / non_events;
    ScoreValue::plain((t.a / ratio + t.d * ratio - t.b - t.c) / t.n())
}

/// Partial derivatives of a contingency-based score with respect to
/// `(a, b, c, d)`, holding `N` fixed. Zero where the score is on a fallback.
pub(crate) fn contingency_partials(kind: ScoreKind, t: &ContingencyCounts) -> [f64; 4] {
    let ContingencyCounts { a, b, c, d } = *t;
    match kind {
        ScoreKind::Csi => {
            let s = a + b + c;
            if s == 0.0 {
                return [0.0; 4];
            }
            let s2 = s * s;
            [(b + c) / s2, -a / s2, -a / s2, 0.0]
        }
        ScoreKind::Heidke => {
            let den = (a + c) * (c + d) + (a + b) * (b + d);
            if !(den > 0.0) {
                return [0.0; 4];
            }
            let s = heidke(t).value;
            let dnum = [2.0 * d, -2.0 * c, -2.0 * b, 2.0 * a];
            let dden = [b + c + 2.0 * d, a + 2.0 * b + d, a + 2.0 * c + d, 2.0 * a + b + c];
            let mut out = [0.0; 4];
            for i in 0..4 {
                out[i] = (dnum[i] - s * dden[i]) / den;
            }
            out
        }
        ScoreKind::Peirce => {
            let (e, f) = (a + c, b + d);
            if e == 0.0 || f == 0.0 {
                return [0.0; 4];
            }
            [c / (e * e), -d / (f * f), -a / (e * e), b / (f * f)]
        }
        ScoreKind::Gerrity => {
            let (e, f) = (a + c, b + d);
            if e == 0.0 || f == 0.0 {
                return [0.0; 4];
            }
            let n = t.n();
            [
                (f * c / (e * e) + d / f) / n,
                (a / e - d * e / (f * f) - 1.0) / n,
                (-a * f / (e * e) + d / f - 1.0) / n,
                (a / e + e * b / (f * f)) / n,
            ]
        }
        _ => [0.0; 4],
    }
}

/// Pixelwise form of any score. FSS here is the single-pixel version
/// `1 - sum (p - y)^2 / sum (p^2 + y^2)`.
pub fn pixelwise_score(kind: ScoreKind, p: &GridField, y: &GridField) -> Result<ScoreValue> {
    check_pair(p, y)?;
    let scored = scored_pixels(p, y);
    score_slices(kind, p.values(), y.values(), &scored)
}

pub(crate) fn score_slices(kind: ScoreKind, p: &[f64], y: &[f64], scored: &[bool]) -> Result<ScoreValue> {
    let g = scored_count(scored)?;
    let pairs = || {
        p.iter()
            .zip(y)
            .zip(scored)
            .filter(|(_, s)| **s)
            .map(|((p, y), _)| (*p, *y))
    };
    let value = match kind {
        ScoreKind::Brier => ScoreValue::plain(pairs().map(|(p, y)| (p - y) * (p - y)).sum::<f64>() / g),
        ScoreKind::Fss => {
            let (num, den) = pairs().fold((0.0, 0.0), |(n, d), (p, y)| {
                (n + (p - y) * (p - y), d + p * p + y * y)
            });
            fss_ratio(num, den)
        }
        ScoreKind::Iou => {
            let (inter, union) = pairs().fold((0.0, 0.0), |(i, u), (p, y)| (i + p * y, u + p.max(y)));
            if union == 0.0 {
                ScoreValue::fallback(1.0, Fallback::IouEmptyUnion)
            } else {
                ScoreValue::plain(inter / union)
            }
        }
        ScoreKind::Dice => ScoreValue::plain(
            pairs().map(|(p, y)| p * y + (1.0 - p) * (1.0 - y)).sum::<f64>() / g,
        ),
        ScoreKind::Xent => {
            let s: f64 = pairs()
                .map(|(p, y)| {
                    let q = p.clamp(LOG_EPS, 1.0 - LOG_EPS);
                    y * q.log2() + (1.0 - y) * (1.0 - q).log2()
                })
                .sum();
            ScoreValue::plain(-s / g)
        }
        ScoreKind::Csi => csi_from_counts(&contingency_of(p, y, scored)),
        ScoreKind::Heidke => heidke(&contingency_of(p, y, scored)),
        ScoreKind::Peirce => peirce(&contingency_of(p, y, scored)),
        ScoreKind::Gerrity => gerrity(&contingency_of(p, y, scored)),
    };
    Ok(value)
}

fn fss_ratio(num: f64, den: f64) -> ScoreValue {
    if den == 0.0 {
        ScoreValue::fallback(1.0, Fallback::FssEmptyFields)
    } else {
        ScoreValue::plain(1.0 - num / den)
    }
}

/// Neighbourhood form of one of the six neighbourhood-capable scores.
///
/// Brier, IOU, Dice and cross-entropy compare the forecast against the
/// max-filtered observations; FSS mean-filters both fields; CSI uses the
/// two-sided neighbourhood table. A half-width of 0 is the pixelwise score.
pub fn nbhd_score(kind: ScoreKind, p: &GridField, y: &GridField, r: NbhdSpec) -> Result<ScoreValue> {
    if !kind.supports_neighbourhood() {
        return Err(Error::Argument(format!("{kind} has no neighbourhood form")));
    }
    check_pair(p, y)?;
    check_binary(y)?;
    let scored = scored_pixels(p, y);
    let (rows, cols, hw) = (p.rows(), p.cols(), r.half_width_px);
    match kind {
        ScoreKind::Fss => {
            scored_count(&scored)?;
            let mp = mean_filter_values(p.values(), rows, cols, hw);
            let my = mean_filter_values(y.values(), rows, cols, hw);
            let (num, den) = mp
                .iter()
                .zip(&my)
                .zip(&scored)
                .filter(|(_, s)| **s)
                .fold((0.0, 0.0), |(n, d), ((a, b), _)| (n + (a - b) * (a - b), d + a * a + b * b));
            Ok(fss_ratio(num, den))
        }
        ScoreKind::Csi if hw > 0 => {
            scored_count(&scored)?;
            Ok(csi_from_nbhd(&nbhd_contingency_of(
                p.values(),
                y.values(),
                &scored,
                rows,
                cols,
                hw,
            )))
        }
        _ => {
            let ymax = max_filter_values(y.values(), rows, cols, hw);
            score_slices(kind, p.values(), &ymax, &scored)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::FieldKind;
    use crate::nbhd::max_filter;

    fn prob(rows: usize, cols: usize, v: Vec<f64>) -> GridField {
        GridField::new(rows, cols, 0.0125, FieldKind::Prob, v).unwrap()
    }

    fn mask(rows: usize, cols: usize, v: Vec<f64>) -> GridField {
        GridField::new(rows, cols, 0.0125, FieldKind::Mask, v).unwrap()
    }

    fn score(kind: ScoreKind, p: &GridField, y: &GridField) -> f64 {
        pixelwise_score(kind, p, y).unwrap().value
    }

    #[test]
    fn single_pixel_contingency_splits() {
        let t = prob_contingency(&prob(1, 1, vec![0.8]), &mask(1, 1, vec![1.0])).unwrap();
        assert!((t.a - 0.8).abs() < 1e-15 && (t.c - 0.2).abs() < 1e-15);
        assert_eq!((t.b, t.d), (0.0, 0.0));
        let t = prob_contingency(&prob(1, 1, vec![0.8]), &mask(1, 1, vec![0.0])).unwrap();
        assert!((t.b - 0.8).abs() < 1e-15 && (t.d - 0.2).abs() < 1e-15);
        assert_eq!((t.a, t.c), (0.0, 0.0));
    }

    #[test]
    fn perfect_deterministic_forecast_table() {
        let v = vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0];
        let t = prob_contingency(&prob(2, 3, v.clone()), &mask(2, 3, v)).unwrap();
        assert_eq!((t.b, t.c), (0.0, 0.0));
        assert_eq!(t.a + t.d, 6.0);
    }

    #[test]
    fn perfect_forecast_optima() {
        let v = vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0];
        let (p, y) = (prob(2, 4, v.clone()), mask(2, 4, v));
        for kind in ScoreKind::ALL {
            let s = score(kind, &p, &y);
            let tol = if kind == ScoreKind::Xent { 1e-6 } else { 0.0 };
            assert!((s - kind.optimum()).abs() <= tol, "{kind}: {s}");
        }
    }

    #[test]
    fn hand_table_of_ones() {
        let p = prob(1, 4, vec![1.0, 1.0, 0.0, 0.0]);
        let y = mask(1, 4, vec![1.0, 0.0, 1.0, 0.0]);
        let t = prob_contingency(&p, &y).unwrap();
        assert_eq!((t.a, t.b, t.c, t.d), (1.0, 1.0, 1.0, 1.0));
        assert!((score(ScoreKind::Csi, &p, &y) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(score(ScoreKind::Peirce, &p, &y), 0.0);
        assert_eq!(score(ScoreKind::Heidke, &p, &y), 0.0);
        assert_eq!(score(ScoreKind::Gerrity, &p, &y), 0.0);
    }

    #[test]
    fn half_probability_brier() {
        assert_eq!(score(ScoreKind::Brier, &prob(1, 1, vec![0.5]), &mask(1, 1, vec![1.0])), 0.25);
    }

    #[test]
    fn figure_style_nbhd_contingency() {
        // 5x5 window, one observed event at the centre, best nearby probability 0.8
        let mut p = vec![0.1; 49];
        p[1 * 7 + 2] = 0.8;
        let mut y = vec![0.0; 49];
        y[3 * 7 + 3] = 1.0;
        let (pf, yf) = (prob(7, 7, p), mask(7, 7, y));
        let t = nbhd_contingency(&pf, &yf, NbhdSpec::new(2)).unwrap();
        assert!((t.a_obs - 0.8).abs() < 1e-15);
        assert!((t.c - 0.2).abs() < 1e-15);

        // forecast side for single pixels
        let one = |pv: f64, yv: f64| {
            nbhd_contingency(&prob(1, 1, vec![pv]), &mask(1, 1, vec![yv]), NbhdSpec::new(2)).unwrap()
        };
        let t = one(0.5, 1.0);
        assert_eq!((t.a_pred, t.b), (0.5, 0.5));
        let t = one(0.2, 0.0);
        assert_eq!((t.a_pred, t.b), (0.0, 0.2));
    }

    #[test]
    fn nbhd_zero_radius_matches_pixelwise() {
        let p = prob(2, 3, vec![0.2, 0.9, 0.4, 0.0, 0.6, 1.0]);
        let y = mask(2, 3, vec![0.0, 1.0, 1.0, 0.0, 0.0, 1.0]);
        for kind in ScoreKind::NEIGHBOURHOOD {
            let a = nbhd_score(kind, &p, &y, NbhdSpec::new(0)).unwrap().value;
            let b = score(kind, &p, &y);
            assert_eq!(a, b, "{kind}");
        }
    }

    #[test]
    fn dilated_observation_is_a_perfect_nbhd_brier_forecast() {
        let mut y = vec![0.0; 81];
        y[40] = 1.0;
        y[12] = 1.0;
        let y = mask(9, 9, y);
        for r in 0..4 {
            let p = max_filter(&y, NbhdSpec::new(r)).unwrap().with_kind(FieldKind::Prob).unwrap();
            assert_eq!(nbhd_score(ScoreKind::Brier, &p, &y, NbhdSpec::new(r)).unwrap().value, 0.0);
        }
    }

    #[test]
    fn missed_single_event_gives_zero_csi() {
        let mut y = vec![0.0; 25];
        y[12] = 1.0;
        let s = nbhd_score(ScoreKind::Csi, &prob(5, 5, vec![0.0; 25]), &mask(5, 5, y), NbhdSpec::new(1)).unwrap();
        assert_eq!(s.value, 0.0);
        assert!(s.fallbacks.contains(&Fallback::CsiZeroComponent));
    }

    #[test]
    fn empty_fields_use_fallbacks() {
        let (p, y) = (prob(2, 2, vec![0.0; 4]), mask(2, 2, vec![0.0; 4]));
        let fss = pixelwise_score(ScoreKind::Fss, &p, &y).unwrap();
        assert_eq!(fss.value, 1.0);
        assert_eq!(fss.fallbacks, vec![Fallback::FssEmptyFields]);
        assert_eq!(score(ScoreKind::Iou, &p, &y), 1.0);
        assert_eq!(score(ScoreKind::Csi, &p, &y), 1.0);
        for kind in [ScoreKind::Heidke, ScoreKind::Peirce, ScoreKind::Gerrity] {
            let s = pixelwise_score(kind, &p, &y).unwrap();
            assert_eq!(s.value, 0.0);
            assert_eq!(s.fallbacks.len(), 1);
        }
    }

    #[test]
    fn eval_mask_excludes_pixels() {
        let p = prob(1, 3, vec![0.5, 1.0, 0.0]);
        let y = mask(1, 3, vec![1.0, 0.0, 1.0]).with_eval_mask(vec![true, false, false]).unwrap();
        assert_eq!(score(ScoreKind::Brier, &p, &y), 0.25);
        let t = prob_contingency(&p, &y).unwrap();
        assert_eq!(t.n(), 1.0);
        let all_out = y.clone().with_eval_mask(vec![false; 3]).unwrap();
        assert!(pixelwise_score(ScoreKind::Brier, &p, &all_out).is_err());
    }

    #[test]
    fn argument_errors() {
        let p = prob(1, 2, vec![0.1, 0.2]);
        assert!(pixelwise_score(ScoreKind::Brier, &p, &mask(2, 1, vec![0.0, 1.0])).is_err());
        let y_soft = prob(1, 2, vec![0.5, 0.0]);
        assert!(nbhd_score(ScoreKind::Brier, &p, &y_soft, NbhdSpec::new(1)).is_err());
        assert!(nbhd_score(ScoreKind::Heidke, &p, &mask(1, 2, vec![0.0, 1.0]), NbhdSpec::new(1)).is_err());
        let real = GridField::new(1, 2, 0.1, FieldKind::Real, vec![-0.5, 0.2]).unwrap();
        assert!(pixelwise_score(ScoreKind::Brier, &real, &y_soft).is_err());
    }

    #[test]
    fn score_names_round_trip() {
        for k in ScoreKind::ALL {
            assert_eq!(k.as_str().parse::<ScoreKind>().unwrap(), k);
        }
        assert_eq!("FSS".parse::<ScoreKind>().unwrap(), ScoreKind::Fss);
        assert!("ssim".parse::<ScoreKind>().is_err());
    }
}
