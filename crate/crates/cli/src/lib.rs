//! Command implementations behind the `countbreaks` binary.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use countbreaks::experiments::run_replications_with_progress;
use countbreaks::segment::{slope_heuristic, slope_heuristic_window, SlopeFit};
use countbreaks::simulate::parse_scenario;
use countbreaks::{
    build_ml_matrix, detect_with_matrix, dp_solve, parse_counts, scenario_library,
    simulate_piecewise, Detection, DetectionConfig, FamilyKind, FrequencyReport, MeanFamily,
    PenaltySpec, ScenarioConfig,
};

/// Version of the detection JSON layout.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(
    name = "countbreaks",
    version,
    about = "Change-point detection for count time series"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Detect breaks in a series (one nonnegative integer per line).
    Detect(DetectArgs),
    /// Simulate a scenario and write one integer per line.
    Simulate(SimulateArgs),
    /// Monte Carlo frequency table for a scenario.
    Replicate(ReplicateArgs),
    /// Export the contrast curve and the slope-heuristic penalty.
    Slope(SlopeArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SearchArgs {
    /// inarch1, ingarch11, bininarch1 or inarchinf.
    #[arg(long, default_value = "inarch1")]
    pub family: FamilyKind,
    /// Largest number of segments [default: largest K ≤ 15 with K·u_min < n].
    #[arg(long)]
    pub kmax: Option<usize>,
    /// Minimum segment length [default: ⌊(ln n)²⌋].
    #[arg(long)]
    pub umin: Option<usize>,
    /// Candidate boundaries are multiples of this step.
    #[arg(long, default_value_t = 1)]
    pub grid_step: usize,
}

impl SearchArgs {
    fn config(&self, n: usize, penalty: PenaltySpec) -> Result<DetectionConfig> {
        let mut cfg = DetectionConfig::for_length(n, penalty)?;
        if let Some(u) = self.umin {
            cfg.u_min = u;
            if self.kmax.is_none() {
                cfg.k_max = countbreaks::segment::default_k_max(n, u);
            }
        }
        if let Some(k) = self.kmax {
            cfg.k_max = k;
        }
        cfg.grid_step = self.grid_step;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// Input series.
    pub input: PathBuf,
    #[command(flatten)]
    pub search: SearchArgs,
    /// slope, logn, cuberoot or fixed=<value>.
    #[arg(long, default_value = "slope")]
    pub penalty: PenaltySpec,
    /// Recorded in the manifest; detection itself is deterministic.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Segmentation JSON [default: standard output]. The curves go to
    /// `<out>.curves.csv` and the manifest to `<out>.manifest.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    /// Name of a catalog scenario (e.g. IA2, NB-IG1).
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    pub scenario: Option<String>,
    /// Scenario file (TOML key-value).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Series length [default: 1000, or the file's value].
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl ScenarioArgs {
    fn load(&self) -> Result<ScenarioConfig> {
        let mut cfg = match (&self.scenario, &self.config) {
            (Some(name), _) => lookup_scenario(name)?,
            (None, Some(path)) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                parse_scenario(&text)?
            }
            (None, None) => bail!("either --scenario or --config is required"),
        };
        if let Some(n) = self.n {
            cfg.n = n;
        }
        cfg.seed = self.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    fn label(&self) -> String {
        match (&self.scenario, &self.config) {
            (Some(name), _) => name.clone(),
            (None, Some(path)) => path.display().to_string(),
            _ => String::new(),
        }
    }
}

/// Catalog lookup; unknown names list the alternatives.
pub fn lookup_scenario(name: &str) -> Result<ScenarioConfig> {
    let lib = scenario_library();
    lib.get(&name.to_ascii_uppercase()).cloned().ok_or_else(|| {
        let names: Vec<&str> = lib.keys().map(String::as_str).collect();
        anyhow!("unknown scenario '{name}'; available: {}", names.join(", "))
    })
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Output file [default: standard output].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplicateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Number of replications.
    #[arg(long = "R", short = 'R', default_value_t = 30, value_parser = clap::value_parser!(u64).range(1..))]
    pub replications: u64,
    /// Comma-separated penalties.
    #[arg(long, value_delimiter = ',', default_value = "slope,logn,cuberoot")]
    pub penalty: Vec<PenaltySpec>,
    #[arg(long)]
    pub kmax: Option<usize>,
    #[arg(long)]
    pub umin: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub grid_step: usize,
    /// CSV report [default: standard output]; the JSON report goes to
    /// `<out>.json` and the manifest to `<out>.manifest.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Suppress progress on standard error.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct SlopeArgs {
    pub input: PathBuf,
    #[command(flatten)]
    pub search: SearchArgs,
    /// Fit window as `lo..hi` (inclusive) [default: upper half of 1..=K, where
    /// K minimizes the contrast].
    #[arg(long)]
    pub window: Option<String>,
    /// CSV output [default: standard output].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Everything needed to reproduce an output file.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub input: String,
    pub family: Option<String>,
    pub k_max: Option<usize>,
    pub u_min: Option<usize>,
    pub penalty: Vec<String>,
    pub grid_step: Option<usize>,
    pub seed: Option<u64>,
    pub n: usize,
    pub replications: Option<u64>,
    pub outputs: Vec<String>,
    pub tool_version: String,
    pub duration_seconds: f64,
}

impl RunManifest {
    fn new(command: &str, input: String, n: usize) -> Self {
        Self {
            command: command.into(),
            input,
            family: None,
            k_max: None,
            u_min: None,
            penalty: Vec::new(),
            grid_step: None,
            seed: None,
            n,
            replications: None,
            outputs: Vec::new(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            duration_seconds: 0.0,
        }
    }

    fn with_config(mut self, family: FamilyKind, cfg: &DetectionConfig) -> Self {
        self.family = Some(family.name().into());
        self.k_max = Some(cfg.k_max);
        self.u_min = Some(cfg.u_min);
        self.grid_step = Some(cfg.grid_step);
        self
    }
}

fn manifest_path(out: &Path) -> PathBuf {
    sibling(out, "manifest.json")
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

fn write_manifest(out: &Path, mut manifest: RunManifest, started: Instant) -> Result<()> {
    manifest.duration_seconds = started.elapsed().as_secs_f64();
    let path = manifest_path(out);
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn read_series(path: &Path) -> Result<Vec<u64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_counts(&text).with_context(|| format!("parsing {}", path.display()))
}

#[derive(Debug, Serialize)]
pub struct SegmentJson {
    pub start: usize,
    pub end: usize,
    pub theta: Vec<f64>,
    /// Sandwich standard errors; null when the covariance is unavailable.
    pub std_errors: Option<Vec<f64>>,
    pub loglik: f64,
    pub converged: bool,
}

#[derive(Debug, Serialize)]
pub struct DetectionJson {
    pub schema_version: u32,
    pub n: usize,
    pub family: String,
    pub k_hat: usize,
    pub breaks: Vec<usize>,
    pub tau_hat: Vec<f64>,
    pub segments: Vec<SegmentJson>,
    pub kappa: f64,
    pub penalty: String,
    /// Penalized contrast of the selected segmentation.
    pub criterion: f64,
    pub slope: Option<SlopeFit>,
}

impl DetectionJson {
    pub fn new(d: &Detection, n: usize, family: FamilyKind) -> Self {
        let seg = &d.segmentation;
        Self {
            schema_version: SCHEMA_VERSION,
            n,
            family: family.name().into(),
            k_hat: seg.k_hat,
            breaks: seg.breaks.clone(),
            tau_hat: seg.tau_hat.clone(),
            segments: seg
                .per_segment
                .iter()
                .zip(&seg.covariances)
                .map(|(f, c)| SegmentJson {
                    start: f.range.start,
                    end: f.range.end,
                    theta: f.theta_hat.clone(),
                    std_errors: c.as_ref().map(|c| c.std_errors.clone()),
                    loglik: f.loglik,
                    converged: f.converged,
                })
                .collect(),
            kappa: d.kappa,
            penalty: d.penalty.name(),
            criterion: seg.total_contrast,
            slope: d.slope,
        }
    }
}

/// Full detection on a parsed series, as written by `detect`.
pub fn detect_series(
    y: &[u64],
    family: FamilyKind,
    cfg: &DetectionConfig,
) -> Result<(DetectionJson, Detection)> {
    let n = y.len();
    if n < 2 * cfg.u_min {
        bail!(countbreaks::Error::Config(format!(
            "series of length {n} is too short: at least 2·u_min = {} observations are needed",
            2 * cfg.u_min
        )));
    }
    let fam = MeanFamily::new(family);
    let ml = build_ml_matrix(y, &fam, cfg)?;
    let d = detect_with_matrix(&ml, y, &fam, cfg)?;
    Ok((DetectionJson::new(&d, n, family), d))
}

pub fn cmd_detect(args: &DetectArgs) -> Result<()> {
    let started = Instant::now();
    let y = read_series(&args.input)?;
    let cfg = args.search.config(y.len(), args.penalty)?;
    let (json, detection) = detect_series(&y, args.search.family, &cfg)?;
    let text = serde_json::to_string_pretty(&json)? + "\n";
    emit(args.out.as_deref(), &text)?;
    if let Some(out) = &args.out {
        let curves = sibling(out, "curves.csv");
        fs::write(&curves, curves_csv(&detection))?;
        let mut m = RunManifest::new("detect", args.input.display().to_string(), y.len())
            .with_config(args.search.family, &cfg);
        m.penalty = vec![args.penalty.name()];
        m.seed = Some(args.seed);
        m.outputs = vec![out.display().to_string(), curves.display().to_string()];
        write_manifest(out, m, started)?;
    }
    Ok(())
}

/// `K,neg_min_qlik,min_pen_qlik`.
pub fn curves_csv(d: &Detection) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["K", "neg_min_qlik", "min_pen_qlik"])
        .unwrap();
    for (k, (c, p)) in d.min_contrast.iter().zip(&d.min_penalized).enumerate() {
        w.write_record([(k + 1).to_string(), (-c).to_string(), p.to_string()])
            .unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let started = Instant::now();
    let cfg = args.scenario.load()?;
    let y = simulate_piecewise(&cfg)?;
    let mut text = String::with_capacity(y.len() * 3);
    for v in &y {
        text.push_str(&v.to_string());
        text.push('\n');
    }
    emit(args.out.as_deref(), &text)?;
    if let Some(out) = &args.out {
        let mut m = RunManifest::new("simulate", args.scenario.label(), cfg.n);
        m.family = Some(cfg.family.kind().name().into());
        m.seed = Some(cfg.seed);
        m.outputs = vec![out.display().to_string()];
        write_manifest(out, m, started)?;
    }
    Ok(())
}

/// CSV text for a list of reports.
pub fn reports_csv(reports: &[FrequencyReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(FrequencyReport::CSV_HEADER)?;
    for r in reports {
        w.write_record(r.csv_record())?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

pub fn cmd_replicate(args: &ReplicateArgs) -> Result<()> {
    let started = Instant::now();
    let scenario = args.scenario.load()?;
    let search = SearchArgs {
        family: scenario.family.kind(),
        kmax: args.kmax,
        umin: args.umin,
        grid_step: args.grid_step,
    };
    let cfg = search.config(scenario.n, PenaltySpec::CubeRoot)?;
    let r = args.replications as usize;
    let done = AtomicUsize::new(0);
    let quiet = args.quiet;
    let progress = |_rep: usize| {
        let k = done.fetch_add(1, Ordering::Relaxed) + 1;
        if !quiet {
            eprintln!("replication {k}/{r}");
        }
    };
    let reports = run_replications_with_progress(&scenario, r, &args.penalty, &cfg, &progress)?;
    emit(args.out.as_deref(), &reports_csv(&reports)?)?;
    if let Some(out) = &args.out {
        let json = sibling(out, "json");
        fs::write(&json, serde_json::to_string_pretty(&reports)? + "\n")?;
        let mut m = RunManifest::new("replicate", args.scenario.label(), scenario.n)
            .with_config(scenario.family.kind(), &cfg);
        m.penalty = args.penalty.iter().map(PenaltySpec::name).collect();
        m.seed = Some(scenario.seed);
        m.replications = Some(args.replications);
        m.outputs = vec![out.display().to_string(), json.display().to_string()];
        write_manifest(out, m, started)?;
    }
    Ok(())
}

fn parse_window(text: &str) -> Result<(usize, usize)> {
    let (lo, hi) = text
        .split_once("..")
        .ok_or_else(|| anyhow!("window must look like 9..15"))?;
    Ok((
        lo.trim().parse()?,
        hi.trim().trim_start_matches('=').parse()?,
    ))
}

/// Contrast curve and slope fit, as written by `slope`.
pub fn slope_series(
    y: &[u64],
    family: FamilyKind,
    cfg: &DetectionConfig,
    window: Option<(usize, usize)>,
) -> Result<String> {
    cfg.validate(y.len(), family.dim())?;
    if cfg.k_max < 4 {
        bail!(countbreaks::Error::Calibration(format!(
            "k_max = {} is too small for the slope heuristic; raise --kmax to at least 4",
            cfg.k_max
        )));
    }
    let ml = build_ml_matrix(y, &MeanFamily::new(family), cfg)?;
    let contrast = dp_solve(&ml, 0.0, cfg.k_max)?.final_costs();
    let fit = match window {
        Some(w) => slope_heuristic_window(&contrast, w),
        None => slope_heuristic(&contrast),
    }?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["K", "neg_min_qlik"])?;
    for (k, c) in contrast.iter().enumerate() {
        w.write_record([(k + 1).to_string(), (-c).to_string()])?;
    }
    let mut text = String::from_utf8(w.into_inner()?)?;
    text.push_str(&format!(
        "# kappa_hat={},slope={},intercept={},window={}..{}\n",
        fit.kappa, fit.slope, fit.intercept, fit.window.0, fit.window.1
    ));
    Ok(text)
}

pub fn cmd_slope(args: &SlopeArgs) -> Result<()> {
    let started = Instant::now();
    let y = read_series(&args.input)?;
    let cfg = args.search.config(y.len(), PenaltySpec::Slope)?;
    let window = args.window.as_deref().map(parse_window).transpose()?;
    let text = slope_series(&y, args.search.family, &cfg, window)?;
    emit(args.out.as_deref(), &text)?;
    if let Some(out) = &args.out {
        let mut m = RunManifest::new("slope", args.input.display().to_string(), y.len())
            .with_config(args.search.family, &cfg);
        m.penalty = vec![PenaltySpec::Slope.name()];
        m.outputs = vec![out.display().to_string()];
        write_manifest(out, m, started)?;
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Detect(a) => cmd_detect(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Replicate(a) => cmd_replicate(a),
        Command::Slope(a) => cmd_slope(a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_parses() {
        let cli = Cli::try_parse_from([
            "countbreaks",
            "detect",
            "x.csv",
            "--family",
            "ingarch11",
            "--penalty",
            "fixed=23.04",
            "--kmax",
            "10",
        ])
        .unwrap();
        let Command::Detect(a) = cli.command else {
            panic!()
        };
        assert_eq!(a.search.family, FamilyKind::Ingarch11);
        assert_eq!(a.penalty, PenaltySpec::Fixed { kappa: 23.04 });
        let cli = Cli::try_parse_from([
            "countbreaks",
            "replicate",
            "--scenario",
            "IA1",
            "--penalty",
            "slope,logn,cuberoot",
        ])
        .unwrap();
        let Command::Replicate(a) = cli.command else {
            panic!()
        };
        assert_eq!(a.penalty.len(), 3);
        assert!(
            Cli::try_parse_from(["countbreaks", "replicate", "--scenario", "IA1", "--R", "0"])
                .is_err()
        );
        assert!(Cli::try_parse_from(["countbreaks", "simulate"]).is_err());
    }

    #[test]
    fn unknown_scenario_lists_names() {
        let err = lookup_scenario("IA9").unwrap_err().to_string();
        assert!(err.contains("IA2") && err.contains("NB-IG1"));
        assert!(lookup_scenario("ia2").is_ok());
    }

    #[test]
    fn window_syntax() {
        assert_eq!(parse_window("9..15").unwrap(), (9, 15));
        assert_eq!(parse_window("9..=15").unwrap(), (9, 15));
        assert!(parse_window("9-15").is_err());
    }

    #[test]
    fn short_series_is_config_error() {
        let cfg = DetectionConfig::for_length(30, PenaltySpec::LogN)
            .unwrap()
            .with_u_min(20)
            .with_k_max(1);
        let err = detect_series(&[1; 30], FamilyKind::Inarch1, &cfg).unwrap_err();
        assert!(err.to_string().contains("too short"));
    }

    #[test]
    fn constant_series_has_no_break() {
        let y = vec![3u64; 100];
        let cfg = DetectionConfig::for_length(100, PenaltySpec::CubeRoot).unwrap();
        let (json, _) = detect_series(&y, FamilyKind::Inarch1, &cfg).unwrap();
        assert_eq!(json.k_hat, 1);
        assert!(json.breaks.is_empty());
        assert!(json.segments[0].converged);
        let t = &json.segments[0].theta;
        assert!((t[0] + 3.0 * t[1] - 3.0).abs() < 1e-3, "{t:?}");
    }
}
