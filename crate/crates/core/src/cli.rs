//! The `selfs` command line: synth, filter, score, rank, eval, gradcheck.
//!
//! Exit codes: 0 success, 1 bad input or arguments, 2 numeric failure.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diag::{
    build_report, default_thresholds, emit_report, paired_bootstrap_test, step_stats, summary_from_steps,
    PairedTest, ReportOptions, StepStats, SummaryStats,
};
use crate::error::{Error, Result};
use crate::fourier::{fourier_band_pass_stages, DEFAULT_ORDER};
use crate::grid::{decode_grid, encode_grid, read_grid, write_atomic, write_grid, GridField};
use crate::loss::{enumerate_configs, grad_check, prepare_filtered, prepare_target, FilterSpec, LossSpec};
use crate::nbhd::{max_filter, mean_filter, NbhdSpec};
use crate::ranking::{best_per_filter, filters_in_order, rank_models, summary_scores, MetricMatrix};
use crate::scores::{nbhd_score, pixelwise_score, Fallback, ScoreKind};
use crate::synth::{derive_seed, noise_pair, synth_mask, synth_prob, SynthSpec};
use crate::wavelet::wavelet_band_pass_padded;

const SPEC_GRAMMAR: &str = "expected <score>_<filter>: score in brier, xent, fss, iou, dice, csi, \
heidke, peirce, gerrity; filter nbhd_r<R> (brier, fss, iou, dice, csi, xent only), F<lo>-<hi> or \
W<lo>-<hi> with wavelengths in degrees and 'inf' for an open upper end";

#[derive(Debug, Parser)]
#[command(name = "selfs", version, about = "Filtered verification scores and losses for gridded forecasts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic observation masks and forecasts.
    Synth(SynthArgs),
    /// Apply one filter to a grid file.
    Filter(FilterArgs),
    /// Score forecasts against observations with many metrics.
    Score(ScoreArgs),
    /// Rank models from a scores CSV and pick a winner per filter.
    Rank(RankArgs),
    /// Attributes and performance diagrams with bootstrap intervals.
    Eval(EvalArgs),
    /// Compare analytic loss gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 64)]
    pub rows: usize,
    #[arg(long, default_value_t = 64)]
    pub cols: usize,
    #[arg(long, default_value_t = 0.02)]
    pub spacing: f64,
    #[arg(long, default_value_t = 6)]
    pub cells: usize,
    #[arg(long, default_value_t = 2.0)]
    pub radius_min: f64,
    #[arg(long, default_value_t = 6.0)]
    pub radius_max: f64,
    #[arg(long, default_value_t = 1.0)]
    pub elongation_min: f64,
    #[arg(long, default_value_t = 3.0)]
    pub elongation_max: f64,
    /// Number of time steps.
    #[arg(long, default_value_t = 1)]
    pub steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Forecast model as NAME=BLUR,DY,DX,NOISE_SD (repeatable).
    #[arg(long = "model", value_name = "NAME=BLUR,DY,DX,NOISE")]
    pub models: Vec<String>,
    /// Output directory; observations go to `obs/`, forecasts to `<NAME>/`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    /// Filter id: nbhd_max_r<R>, nbhd_mean_r<R>, F<lo>-<hi> or W<lo>-<hi>.
    #[arg(long)]
    pub spec: String,
    pub input: PathBuf,
    pub output: PathBuf,
    /// Also write the intermediate grids of a spectral filter here.
    #[arg(long)]
    pub dump_stages: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Observation grid file or directory of `.grid` files.
    #[arg(long)]
    pub obs: PathBuf,
    /// Forecasts as NAME=PATH (repeatable).
    #[arg(long = "model", value_name = "NAME=PATH", required = true)]
    pub models: Vec<String>,
    /// Metric id such as fss_nbhd_r4 or brier_W0.1-0.2 (repeatable).
    #[arg(long = "spec")]
    pub specs: Vec<String>,
    /// Use every configuration of the experiment table.
    #[arg(long)]
    pub all_336: bool,
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// Long-format CSV output.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional JSON copy of the rows.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    /// CSV written by `selfs score`.
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub obs: PathBuf,
    #[arg(long = "model", value_name = "NAME=PATH", required = true)]
    pub models: Vec<String>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Bootstrap replicates for confidence intervals and comparisons.
    #[arg(long, default_value_t = 1000)]
    pub n_boot: usize,
    /// Replicates for the attributes-diagram consistency bars.
    #[arg(long, default_value_t = 100)]
    pub bars_n_boot: usize,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Comma-separated probability thresholds (default 0.00, 0.01, ..., 1.00).
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Option<Vec<f64>>,
    /// Paired bootstrap comparison of two of the models.
    #[arg(long, num_args = 2, value_names = ["A", "B"])]
    pub compare: Option<Vec<String>>,
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Loss ids to check (repeatable); all 336 when absent.
    #[arg(long = "spec")]
    pub specs: Vec<String>,
    #[arg(long, default_value_t = 16)]
    pub size: usize,
    #[arg(long, default_value_t = 0.0125)]
    pub spacing: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-5)]
    pub h: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
    /// Optional CSV copy of the table.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_exit() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_numeric() {
        2
    } else {
        1
    }
}

pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Synth(a) => cmd_synth(&a).map(|_| 0),
        Command::Filter(a) => cmd_filter(&a).map(|_| 0),
        Command::Score(a) => with_jobs(a.jobs, || cmd_score(&a)).map(|_| 0),
        Command::Rank(a) => cmd_rank(&a).map(|_| 0),
        Command::Eval(a) => with_jobs(a.jobs, || cmd_eval(&a)).map(|_| 0),
        Command::Gradcheck(a) => with_jobs(a.jobs, || cmd_gradcheck(&a)),
    }
}

fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Argument(format!("thread pool: {e}")))?;
    pool.install(f)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn json_bytes<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(v).map_err(|e| Error::Validation(format!("json: {e}")))?;
    out.push(b'\n');
    Ok(out)
}

fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let err = |e: csv::Error| Error::Validation(format!("csv: {e}"));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    w.into_inner().map_err(|e| Error::Validation(format!("csv: {e}")))
}

fn parse_named(s: &str) -> Result<(String, String)> {
    let (name, rest) = s
        .split_once('=')
        .ok_or_else(|| Error::Argument(format!("expected NAME=VALUE, got '{s}'")))?;
    if name.is_empty() || name.contains(['/', '\\', ',']) || name == "obs" {
        return Err(Error::Argument(format!("bad model name '{name}'")));
    }
    Ok((name.to_string(), rest.to_string()))
}

fn parse_spec(id: &str) -> Result<LossSpec> {
    id.parse()
        .map_err(|e| Error::Argument(format!("unknown metric '{id}' ({e}); {SPEC_GRAMMAR}")))
}

/// A single grid file, or every `.grid` file of a directory in name order.
pub fn read_series(path: &Path) -> Result<Vec<GridField>> {
    let files = if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "grid"))
            .collect();
        files.sort();
        files
    } else {
        vec![path.to_path_buf()]
    };
    if files.is_empty() {
        return Err(Error::Argument(format!("no .grid files in {}", path.display())));
    }
    files.par_iter().map(read_grid).collect()
}

fn read_models(specs: &[String], n_obs: usize) -> Result<Vec<(String, Vec<GridField>)>> {
    let mut out: Vec<(String, Vec<GridField>)> = Vec::new();
    for s in specs {
        let (name, path) = parse_named(s)?;
        if out.iter().any(|(n, _)| *n == name) {
            return Err(Error::Argument(format!("model '{name}' given twice")));
        }
        let series = read_series(Path::new(&path))?;
        if series.len() != n_obs {
            return Err(Error::Argument(format!(
                "model '{name}' has {} fields for {n_obs} observations",
                series.len()
            )));
        }
        out.push((name, series));
    }
    Ok(out)
}

// ---- synth ----

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelRecipe {
    name: String,
    blur_r: usize,
    offset_px: (i64, i64),
    noise_sd: f64,
}

fn parse_recipe(s: &str) -> Result<ModelRecipe> {
    let (name, rest) = parse_named(s)?;
    let parts: Vec<&str> = rest.split(',').collect();
    let bad = || Error::Argument(format!("expected NAME=BLUR,DY,DX,NOISE, got '{s}'"));
    if parts.len() != 4 {
        return Err(bad());
    }
    Ok(ModelRecipe {
        name,
        blur_r: parts[0].trim().parse().map_err(|_| bad())?,
        offset_px: (
            parts[1].trim().parse().map_err(|_| bad())?,
            parts[2].trim().parse().map_err(|_| bad())?,
        ),
        noise_sd: parts[3].trim().parse().map_err(|_| bad())?,
    })
}

#[derive(Debug, Serialize)]
struct SynthStep {
    step: usize,
    seed: u64,
    cells: usize,
    event_fraction: f64,
}

#[derive(Debug, Serialize)]
struct SynthManifest {
    spec: SynthSpec,
    steps: Vec<SynthStep>,
    models: Vec<ModelRecipe>,
}

pub fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let recipes = a.models.iter().map(|s| parse_recipe(s)).collect::<Result<Vec<_>>>()?;
    let spec = SynthSpec {
        rows: a.rows,
        cols: a.cols,
        spacing_deg: a.spacing,
        n_cells: a.cells,
        cell_radius_px: (a.radius_min, a.radius_max),
        elongation: (a.elongation_min, a.elongation_max),
        seed: a.seed,
    };
    if a.steps == 0 {
        return Err(Error::Argument("need at least one step".into()));
    }
    create_dir(&a.out.join("obs"))?;
    for r in &recipes {
        create_dir(&a.out.join(&r.name))?;
    }
    let steps = (0..a.steps)
        .into_par_iter()
        .map(|t| {
            let step_spec = SynthSpec {
                seed: derive_seed(a.seed, &[t as u64]),
                ..spec
            };
            let m = synth_mask(&step_spec)?;
            let file = format!("t{t:04}.grid");
            write_grid(&m.field, a.out.join("obs").join(&file))?;
            for (k, r) in recipes.iter().enumerate() {
                let seed = derive_seed(a.seed, &[t as u64, k as u64 + 1]);
                let p = synth_prob(&m.field, r.blur_r, r.offset_px, r.noise_sd, seed)?;
                write_grid(&p, a.out.join(&r.name).join(&file))?;
            }
            Ok(SynthStep {
                step: t,
                seed: step_spec.seed,
                cells: m.cells.len(),
                event_fraction: m.event_fraction,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mean_fraction = steps.iter().map(|s| s.event_fraction).sum::<f64>() / steps.len() as f64;
    eprintln!("synth: {} steps, mean event fraction {mean_fraction:.5}", steps.len());
    let manifest = SynthManifest {
        spec,
        steps,
        models: recipes,
    };
    write_atomic(&a.out.join("synth.json"), &json_bytes(&manifest)?)
}

// ---- filter ----

enum GridFilter {
    Max(NbhdSpec),
    Mean(NbhdSpec),
    Spectral(FilterSpec),
}

fn parse_grid_filter(s: &str) -> Result<GridFilter> {
    let lower = s.to_ascii_lowercase();
    if let Some(r) = lower.strip_prefix("nbhd_mean_r") {
        let r = r
            .parse()
            .map_err(|_| Error::Argument(format!("cannot parse filter '{s}'")))?;
        return Ok(GridFilter::Mean(NbhdSpec::new(r)));
    }
    match s.parse::<FilterSpec>().map_err(|e| {
        Error::Argument(format!("{e}; expected nbhd_max_r<R>, nbhd_mean_r<R>, F<lo>-<hi> or W<lo>-<hi>"))
    })? {
        FilterSpec::Neighbourhood(r) => Ok(GridFilter::Max(r)),
        f => Ok(GridFilter::Spectral(f)),
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FilterSidecar {
    pub input: String,
    pub output: String,
    pub spec: String,
    pub rows: usize,
    pub cols: usize,
    /// Sum of the values as stored in the output file.
    pub sum: f64,
}

pub fn cmd_filter(a: &FilterArgs) -> Result<()> {
    let filter = parse_grid_filter(&a.spec)?;
    let input = read_grid(&a.input)?;
    let out = match &filter {
        GridFilter::Max(r) => max_filter(&input, *r)?,
        GridFilter::Mean(r) => mean_filter(&input, *r)?,
        GridFilter::Spectral(f) => f.apply(&input)?,
    };
    if let Some(dir) = &a.dump_stages {
        create_dir(dir)?;
        match filter {
            GridFilter::Spectral(FilterSpec::Fourier(band)) => {
                let s = fourier_band_pass_stages(&input, band, DEFAULT_ORDER)?;
                write_grid(&s.tapered, dir.join("1_tapered.grid"))?;
                write_grid(&s.windowed, dir.join("2_windowed.grid"))?;
                write_grid(&s.spectrum, dir.join("3_spectrum.grid"))?;
                write_grid(&s.filtered_spectrum, dir.join("4_filtered_spectrum.grid"))?;
                write_grid(&s.output, dir.join("5_output.grid"))?;
            }
            GridFilter::Spectral(FilterSpec::Wavelet(band)) => {
                write_grid(&wavelet_band_pass_padded(&input, band)?, dir.join("1_padded_output.grid"))?;
                write_grid(&out, dir.join("2_output.grid"))?;
            }
            _ => return Err(Error::Argument("--dump-stages needs a spectral filter".into())),
        }
    }
    let bytes = encode_grid(&out);
    let stored = decode_grid(&bytes)?;
    write_atomic(&a.output, &bytes)?;
    let sidecar = FilterSidecar {
        input: a.input.display().to_string(),
        output: a.output.display().to_string(),
        spec: a.spec.clone(),
        rows: out.rows(),
        cols: out.cols(),
        sum: stored.sum(),
    };
    let mut side = a.output.as_os_str().to_owned();
    side.push(".json");
    write_atomic(Path::new(&side), &json_bytes(&sidecar)?)
}

// ---- score ----

pub const SCORE_CSV_HEADER: [&str; 6] = ["model", "metric", "filter", "score", "value", "fallbacks"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub model: String,
    pub metric: String,
    pub filter: String,
    #[serde(rename = "kind")]
    pub score: ScoreKind,
    pub value: f64,
    #[serde(rename = "fallbacks_used")]
    pub fallbacks: Vec<Fallback>,
}

/// Per-model metric values averaged over time steps. Rows come out sorted by
/// model name and metric id.
pub fn score_models(
    obs: &[GridField],
    models: &[(String, Vec<GridField>)],
    specs: &[LossSpec],
) -> Result<Vec<ScoreRow>> {
    let mut specs = specs.to_vec();
    specs.sort_by_key(|s| s.id());
    specs.dedup();
    // group metrics by filter so each forecast is filtered once per step
    let mut groups: Vec<(FilterSpec, Vec<usize>)> = Vec::new();
    for (k, s) in specs.iter().enumerate() {
        match groups.iter_mut().find(|(f, _)| *f == s.filter) {
            Some((_, ks)) => ks.push(k),
            None => groups.push((s.filter, vec![k])),
        }
    }
    let mut order: Vec<usize> = (0..models.len()).collect();
    order.sort_by(|&a, &b| models[a].0.cmp(&models[b].0));

    let n_specs = specs.len();
    let mut sums = vec![vec![0.0; n_specs]; models.len()];
    let mut flags: Vec<Vec<Vec<Fallback>>> = vec![vec![Vec::new(); n_specs]; models.len()];
    let mut worst_clamp = 0.0_f64;
    for (t, y) in obs.iter().enumerate() {
        let targets: Vec<Option<(GridField, f64)>> = groups
            .par_iter()
            .map(|(f, _)| {
                if f.is_spectral() {
                    let t = prepare_filtered(*f, y)?;
                    Ok(Some((t.filtered, t.clamp_excess)))
                } else {
                    Ok(None)
                }
            })
            .collect::<Result<_>>()?;
        for (_, c) in targets.iter().flatten() {
            worst_clamp = worst_clamp.max(*c);
        }
        let jobs: Vec<(usize, usize)> = (0..models.len())
            .flat_map(|m| (0..groups.len()).map(move |g| (m, g)))
            .collect();
        let results = jobs
            .par_iter()
            .map(|&(m, g)| {
                let p = &models[m].1[t];
                let (filter, ks) = &groups[g];
                let vals = match (filter, &targets[g]) {
                    (FilterSpec::Neighbourhood(r), _) => ks
                        .iter()
                        .map(|&k| nbhd_score(specs[k].score, p, y, *r))
                        .collect::<Result<Vec<_>>>()?,
                    (f, Some((yf, _))) => {
                        let (pf, _) = f.apply(p)?.clamp_unit();
                        ks.iter()
                            .map(|&k| pixelwise_score(specs[k].score, &pf, yf))
                            .collect::<Result<Vec<_>>>()?
                    }
                    (_, None) => unreachable!("spectral target prepared above"),
                };
                Ok((m, g, vals))
            })
            .collect::<Result<Vec<_>>>()?;
        for (m, g, vals) in results {
            for (&k, v) in groups[g].1.iter().zip(vals) {
                sums[m][k] += v.value;
                for f in v.fallbacks {
                    if !flags[m][k].contains(&f) {
                        flags[m][k].push(f);
                    }
                }
            }
        }
    }
    if worst_clamp > 0.0 {
        eprintln!("score: filtered observations clamped to [0,1], largest excess {worst_clamp:.3e}");
    }
    let n = obs.len() as f64;
    let mut rows = Vec::with_capacity(models.len() * n_specs);
    for m in order {
        for (k, s) in specs.iter().enumerate() {
            let value = sums[m][k] / n;
            if !value.is_finite() {
                return Err(Error::Numeric { stage: "score" });
            }
            let mut fb = flags[m][k].clone();
            fb.sort_by_key(|f| f.as_str());
            rows.push(ScoreRow {
                model: models[m].0.clone(),
                metric: s.id(),
                filter: s.filter.to_string(),
                score: s.score,
                value,
                fallbacks: fb,
            });
        }
    }
    Ok(rows)
}

pub fn score_csv(rows: &[ScoreRow]) -> Result<Vec<u8>> {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.model.clone(),
                r.metric.clone(),
                r.filter.clone(),
                r.score.as_str().to_string(),
                r.value.to_string(),
                r.fallbacks.iter().map(|f| f.as_str()).collect::<Vec<_>>().join(";"),
            ]
        })
        .collect();
    csv_bytes(&SCORE_CSV_HEADER, &body)
}

pub fn cmd_score(a: &ScoreArgs) -> Result<()> {
    let mut specs = a.specs.iter().map(|s| parse_spec(s)).collect::<Result<Vec<_>>>()?;
    if a.all_336 {
        specs.extend(enumerate_configs());
    }
    if specs.is_empty() {
        return Err(Error::Argument("no metrics: give --spec or --all-336".into()));
    }
    let obs = read_series(&a.obs)?;
    let models = read_models(&a.models, obs.len())?;
    let rows = score_models(&obs, &models, &specs)?;
    write_atomic(&a.out, &score_csv(&rows)?)?;
    if let Some(j) = &a.json {
        write_atomic(j, &json_bytes(&rows)?)?;
    }
    Ok(())
}

// ---- rank ----

/// Builds the metric matrix from long-format score rows. Models and metrics
/// keep their first-appearance order; every pair must be present once.
pub fn matrix_from_scores_csv(bytes: &[u8]) -> Result<MetricMatrix> {
    let mut rdr = csv::Reader::from_reader(bytes);
    let err = |e: csv::Error| Error::Validation(format!("scores csv: {e}"));
    let headers = rdr.headers().map_err(err)?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Validation(format!("scores csv lacks column '{name}'")))
    };
    let (cm, cs, cv) = (col("model")?, col("metric")?, col("value")?);
    let mut models: Vec<String> = Vec::new();
    let mut metrics: Vec<String> = Vec::new();
    let mut cells: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(err)?;
        let (m, s, v) = (&rec[cm], &rec[cs], rec[cv].trim());
        let value: f64 = v
            .parse()
            .map_err(|_| Error::Validation(format!("bad value '{v}' for model '{m}', metric '{s}'")))?;
        let mi = models.iter().position(|x| x == m).unwrap_or_else(|| {
            models.push(m.to_string());
            models.len() - 1
        });
        let si = metrics.iter().position(|x| x == s).unwrap_or_else(|| {
            metrics.push(s.to_string());
            metrics.len() - 1
        });
        if cells.insert((mi, si), value).is_some() {
            return Err(Error::Validation(format!("duplicate row for model '{m}', metric '{s}'")));
        }
    }
    if models.is_empty() {
        return Err(Error::Validation("scores csv has no rows".into()));
    }
    let specs = metrics.iter().map(|s| parse_spec(s)).collect::<Result<Vec<_>>>()?;
    let mut values = vec![vec![0.0; metrics.len()]; models.len()];
    for (mi, row) in values.iter_mut().enumerate() {
        for (si, v) in row.iter_mut().enumerate() {
            *v = *cells.get(&(mi, si)).ok_or_else(|| {
                Error::Validation(format!("missing score for model '{}', metric '{}'", models[mi], metrics[si]))
            })?;
        }
    }
    MetricMatrix::new(models, specs, values)
}

/// Filters of the metric list, in experiment-table order first.
pub fn canonical_filters(specs: &[LossSpec]) -> Vec<FilterSpec> {
    let present = filters_in_order(specs);
    let mut out: Vec<FilterSpec> = filters_in_order(&enumerate_configs())
        .into_iter()
        .filter(|f| present.contains(f))
        .collect();
    for f in present {
        if !out.contains(&f) {
            out.push(f);
        }
    }
    out
}

pub fn cmd_rank(a: &RankArgs) -> Result<()> {
    let bytes = fs::read(&a.scores).map_err(|e| Error::io(&a.scores, e))?;
    let matrix = matrix_from_scores_csv(&bytes)?;
    let ranks = rank_models(&matrix)?;
    let filters = canonical_filters(&matrix.metric_specs);
    let summary = summary_scores(&ranks, &filters)?;
    let winners = best_per_filter(&summary);
    create_dir(&a.out_dir)?;

    let mut rank_rows = Vec::new();
    for (m, row) in ranks.model_ids.iter().zip(&ranks.ranks) {
        for (s, r) in ranks.metric_specs.iter().zip(row) {
            rank_rows.push(vec![m.clone(), s.id(), s.filter.to_string(), r.to_string()]);
        }
    }
    write_atomic(&a.out_dir.join("ranks.csv"), &csv_bytes(&["model", "metric", "filter", "rank"], &rank_rows)?)?;

    let mut sum_rows = Vec::new();
    for (m, row) in summary.model_ids.iter().zip(&summary.values) {
        for (f, v) in summary.filters.iter().zip(row) {
            sum_rows.push(vec![m.clone(), f.to_string(), v.to_string()]);
        }
    }
    write_atomic(&a.out_dir.join("summary.csv"), &csv_bytes(&["model", "filter", "summary_score"], &sum_rows)?)?;

    let win_rows: Vec<Vec<String>> = winners
        .iter()
        .map(|w| {
            vec![
                w.filter.to_string(),
                w.model_id.clone(),
                w.summary_score.to_string(),
                w.tied_with.join(";"),
            ]
        })
        .collect();
    write_atomic(
        &a.out_dir.join("winners.csv"),
        &csv_bytes(&["filter", "model", "summary_score", "tied_with"], &win_rows)?,
    )?;
    write_atomic(&a.out_dir.join("winners.json"), &json_bytes(&winners)?)?;
    eprintln!("rank: {} models, {} metrics, {} filters", matrix.n_models(), matrix.metric_specs.len(), filters.len());
    Ok(())
}

// ---- eval ----

#[derive(Debug, Serialize, Deserialize)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    pub n_boot: usize,
    pub seed: u64,
    /// Paired tests of `stat(a) - stat(b)` over resampled time steps.
    pub tests: BTreeMap<String, PairedTest>,
}

pub fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let thresholds = a.thresholds.clone().unwrap_or_else(default_thresholds);
    let obs = read_series(&a.obs)?;
    let models = read_models(&a.models, obs.len())?;
    let opts = ReportOptions {
        bars_n_boot: a.bars_n_boot,
        ci_n_boot: a.n_boot,
        level: a.level,
        seed: a.seed,
    };
    create_dir(&a.out_dir)?;
    for (name, p) in &models {
        let report = build_report(p, &obs, &thresholds, opts)?;
        emit_report(
            &report,
            &a.out_dir.join(format!("{name}_report.json")),
            &a.out_dir.join(format!("{name}_report.csv")),
        )?;
    }
    if let Some(pair) = &a.compare {
        let find = |n: &str| {
            models
                .iter()
                .find(|(m, _)| m == n)
                .map(|(_, s)| s)
                .ok_or_else(|| Error::Argument(format!("--compare names unknown model '{n}'")))
        };
        let (pa, pb) = (find(&pair[0])?, find(&pair[1])?);
        let samples = pa
            .par_iter()
            .zip(pb.par_iter())
            .zip(obs.par_iter())
            .map(|((x, z), y)| Ok((step_stats(x, y, &thresholds)?, step_stats(z, y, &thresholds)?)))
            .collect::<Result<Vec<(StepStats, StepStats)>>>()?;
        type Pick = fn(&SummaryStats) -> f64;
        let stats: [(&str, Pick); 4] = [
            ("bs", |s| s.bs),
            ("bss", |s| s.bss),
            ("rel", |s| s.rel),
            ("aupd", |s| s.aupd),
        ];
        let mut tests = BTreeMap::new();
        for (name, pick) in stats {
            let side = |first: bool| {
                let th = &thresholds;
                move |set: &[&(StepStats, StepStats)]| {
                    let steps: Vec<&StepStats> = set.iter().map(|(x, z)| if first { x } else { z }).collect();
                    pick(&summary_from_steps(&steps, th))
                }
            };
            tests.insert(
                name.to_string(),
                paired_bootstrap_test(side(true), side(false), &samples, a.n_boot, a.seed)?,
            );
        }
        let cmp = Comparison {
            a: pair[0].clone(),
            b: pair[1].clone(),
            n_boot: a.n_boot,
            seed: a.seed,
            tests,
        };
        write_atomic(
            &a.out_dir.join(format!("compare_{}_vs_{}.json", pair[0], pair[1])),
            &json_bytes(&cmp)?,
        )?;
    }
    Ok(())
}

// ---- gradcheck ----

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckRow {
    pub spec: String,
    pub checked: usize,
    pub excluded: usize,
    pub max_abs_err: f64,
    pub max_rel_err: f64,
    pub worst_pixel: Option<(usize, usize)>,
    pub degenerate: bool,
    pub pass: bool,
}

pub fn gradcheck_rows(specs: &[LossSpec], size: usize, spacing: f64, seed: u64, h: f64, tol: f64) -> Result<Vec<GradcheckRow>> {
    let (p, y) = noise_pair(size, size, spacing, 0.3, seed)?;
    specs
        .par_iter()
        .map(|spec| {
            let t = prepare_target(spec, &y)?;
            let r = grad_check(spec, &p, &t, h)?;
            Ok(GradcheckRow {
                spec: spec.id(),
                checked: r.checked,
                excluded: r.excluded,
                max_abs_err: r.max_abs_err,
                max_rel_err: r.max_rel_err,
                worst_pixel: r.worst_pixel,
                degenerate: r.degenerate,
                pass: r.max_rel_err <= tol,
            })
        })
        .collect()
}

pub fn cmd_gradcheck(a: &GradcheckArgs) -> Result<i32> {
    let specs = if a.specs.is_empty() {
        enumerate_configs()
    } else {
        a.specs.iter().map(|s| parse_spec(s)).collect::<Result<Vec<_>>>()?
    };
    let rows = gradcheck_rows(&specs, a.size, a.spacing, a.seed, a.h, a.tol)?;
    println!(
        "{:<24} {:>7} {:>8} {:>11} {:>11} {:>9}  result",
        "spec", "checked", "excluded", "max_abs", "max_rel", "worst"
    );
    for r in &rows {
        let worst = r.worst_pixel.map(|(i, j)| format!("({i},{j})")).unwrap_or_else(|| "-".into());
        println!(
            "{:<24} {:>7} {:>8} {:>11.3e} {:>11.3e} {:>9}  {}",
            r.spec,
            r.checked,
            r.excluded,
            r.max_abs_err,
            r.max_rel_err,
            worst,
            match (r.pass, r.degenerate) {
                (_, true) => "PASS (constant target)",
                (true, _) => "PASS",
                _ => "FAIL",
            }
        );
    }
    let failed = rows.iter().filter(|r| !r.pass).count();
    println!("{} specs, {failed} above tolerance {:e}", rows.len(), a.tol);
    if let Some(out) = &a.out {
        let body: Vec<Vec<String>> = rows
            .iter()
            .map(|r| {
                vec![
                    r.spec.clone(),
                    r.checked.to_string(),
                    r.excluded.to_string(),
                    r.max_abs_err.to_string(),
                    r.max_rel_err.to_string(),
                    r.worst_pixel.map(|(i, _)| i.to_string()).unwrap_or_default(),
                    r.worst_pixel.map(|(_, j)| j.to_string()).unwrap_or_default(),
                    r.degenerate.to_string(),
                    r.pass.to_string(),
                ]
            })
            .collect();
        write_atomic(
            out,
            &csv_bytes(
                &["spec", "checked", "excluded", "max_abs_err", "max_rel_err", "worst_row", "worst_col", "degenerate", "pass"],
                &body,
            )?,
        )?;
    }
    Ok(if failed > 0 { 2 } else { 0 })
}
