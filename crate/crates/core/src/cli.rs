//! Command line front end: runs, sweeps, figure data and oracle checks.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use num_complex::Complex64 as C64;

use crate::config::{
    hash_text, range, KernelChoice, Pipeline, ScenarioKind, SimConfig, SweepParameter,
};
use crate::distributions::{EmitterDistribution, SpectralProfile};
use crate::error::{Error, Result};
use crate::grid::{fmt_digits, FrequencyGrid, SpectralField};
use crate::metrics::{self, MetricsReport};
use crate::oracle::{self, Comparison, ComparisonConfig, Resolution, Scenario};
use crate::par;
use crate::quad::Tolerance;
use crate::retrieval::{
    apply_kernel, build_kernel_crib_uniform, build_kernel_general, build_kernel_ideal,
};
use crate::storage::storage_leakage;
use crate::transducer::{
    mw_output_general_with, normalize_excitation, ExcitationShape, OutputOptions, StoredExcitation,
    TransducerSpectra,
};
use crate::transition::TransitionParams;

/// Environment variable that overrides the output directory.
pub const OUT_ENV: &str = "PHOTON_RETRIEVAL_OUT";

#[derive(Debug, Parser)]
#[command(
    name = "photon-retrieval",
    version,
    about = "Photon storage, retrieval and transduction spectra"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output directory (falls back to the config's [output] dir, then ./out)
    #[arg(long, global = true, env = OUT_ENV, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Override the number of frequency grid points.
    #[arg(long, global = true, value_name = "N")]
    grid_points: Option<usize>,
    /// Relative tolerance of the adaptive spectral quadratures.
    #[arg(long, global = true, value_name = "EPS")]
    tolerance: Option<f64>,
    /// Worker threads for the parallel paths.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Only report errors.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the pipeline named in the config.
    Run { config: PathBuf },
    /// Run the config once per sweep value.
    Sweep { config: PathBuf },
    /// Write the data behind a figure.
    Figure { name: FigureName },
    /// Compare the time-domain integrator with the spectral pipeline.
    OracleCompare { config: PathBuf },
}

/// Figures that can be reproduced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FigureName {
    Fig2a,
    Fig2b,
    Fig3,
}

impl FigureName {
    pub fn name(&self) -> &'static str {
        match self {
            FigureName::Fig2a => "fig2a",
            FigureName::Fig2b => "fig2b",
            FigureName::Fig3 => "fig3",
        }
    }
}

/// Settings shared by every command.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    /// Output directory; the config's `[output] dir` or `./out` when unset.
    pub out_dir: Option<PathBuf>,
    pub grid_points: Option<usize>,
    pub tolerance: Option<f64>,
    pub quiet: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            out_dir: None,
            grid_points: None,
            tolerance: None,
            quiet: true,
        }
    }
}

impl RunOptions {
    fn tolerance(&self) -> Result<Tolerance> {
        match self.tolerance {
            None => Ok(Tolerance::default()),
            Some(t) if t > 0.0 && t < 1.0 => Ok(Tolerance::with_rel(t)),
            Some(t) => Err(Error::invalid(format!(
                "tolerance must lie in (0, 1), got {t}"
            ))),
        }
    }

    fn dir(&self, cfg: Option<&SimConfig>) -> Result<PathBuf> {
        let dir = self
            .out_dir
            .clone()
            .or_else(|| cfg.and_then(|c| c.output.dir.clone()))
            .unwrap_or_else(|| PathBuf::from("out"));
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(dir)
    }

    /// Config after command line overrides.
    fn apply(&self, cfg: SimConfig) -> Result<SimConfig> {
        match self.grid_points {
            Some(n) => cfg.with_grid_points(n),
            None => Ok(cfg),
        }
    }

    /// Hash of the config text together with the overrides that change
    /// results.
    fn hash(&self, cfg: &SimConfig) -> String {
        hash_text(&format!(
            "{}\ngrid_points={:?}\ntolerance={:?}\n",
            cfg.hash, self.grid_points, self.tolerance
        ))
    }
}

/// Result of one pipeline evaluation.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub metrics: MetricsReport,
    pub spectrum: SpectralField,
    pub warnings: Vec<String>,
    /// Present for oracle comparisons.
    pub comparison: Option<Comparison>,
}

/// Files written by [`run_simulation`].
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub outcome: Outcome,
    pub files: Vec<PathBuf>,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn hash_comment(hash: &str) -> String {
    format!("# config_sha256={hash}\n")
}

/// Execute the configured pipeline once and write its spectrum and
/// metrics.
pub fn run_simulation(cfg: &SimConfig, opts: &RunOptions) -> Result<RunOutput> {
    let cfg = opts.apply(cfg.clone())?;
    let outcome = evaluate(&cfg, opts.tolerance()?)?;
    let dir = opts.dir(Some(&cfg))?;
    let hash = opts.hash(&cfg);
    let digits = cfg.output.precision;
    let mut files = Vec::new();

    let spectrum = dir.join(&cfg.output.spectrum);
    outcome
        .spectrum
        .write_csv_digits(&spectrum, &format!("config_sha256={hash}"), digits)?;
    files.push(spectrum);

    let metrics = dir.join(&cfg.output.metrics);
    write_text(
        &metrics,
        &format!(
            "{}{}\n{}\n",
            hash_comment(&hash),
            MetricsReport::csv_header(),
            outcome.metrics.csv_row_digits(digits)
        ),
    )?;
    files.push(metrics);

    if let Some(c) = &outcome.comparison {
        let path = dir.join(format!("oracle_{}", cfg.output.spectrum));
        c.oracle
            .write_csv_digits(&path, &format!("config_sha256={hash}"), digits)?;
        files.push(path);
        let r = &c.report;
        let path = dir.join("deviation.csv");
        write_text(
            &path,
            &format!(
                "{}scenario,relative_l2,probability_oracle,probability_spectral,delta_probability,detuning_points,time_steps\n\
                 {},{},{},{},{},{},{}\n",
                hash_comment(&hash),
                r.scenario,
                fmt_digits(r.relative_l2, digits),
                fmt_digits(r.probability_oracle, digits),
                fmt_digits(r.probability_spectral, digits),
                fmt_digits(r.delta_probability, digits),
                r.detuning_points,
                r.time_steps
            ),
        )?;
        files.push(path);
    }
    Ok(RunOutput { outcome, files })
}

/// Run the pipeline without writing anything.
pub fn evaluate(cfg: &SimConfig, tol: Tolerance) -> Result<Outcome> {
    match cfg.protocol.pipeline {
        Pipeline::Retrieve => retrieve(cfg),
        Pipeline::Transduce => TransducePlan::new(cfg, tol)?.evaluate(&cfg.retrieval_params()?),
        Pipeline::OracleCompare => compare(cfg),
    }
}

fn storage_dist(cfg: &SimConfig, length: f64) -> Result<EmitterDistribution> {
    let b = cfg
        .storage_distribution
        .as_ref()
        .ok_or_else(|| Error::invalid("missing [storage_distribution]"))?;
    b.distribution(length)
}

fn retrieval_dist(cfg: &SimConfig, length: f64) -> Result<EmitterDistribution> {
    match (&cfg.retrieval_distribution, &cfg.storage_distribution) {
        (Some(b), _) | (None, Some(b)) => b.distribution(length),
        _ => Err(Error::invalid("missing [retrieval_distribution]")),
    }
}

fn input_field(cfg: &SimConfig) -> Result<SpectralField> {
    let input = cfg.input.ok_or_else(|| Error::invalid("missing [input]"))?;
    Ok(input.field(cfg.grid.grid()?))
}

fn magnitude(f: &SpectralField) -> SpectralField {
    f.map(|_, a| C64::new(a.norm(), 0.0))
}

fn retrieve(cfg: &SimConfig) -> Result<Outcome> {
    let s = cfg.storage_params()?;
    let r = cfg.retrieval_params()?;
    let g_s = storage_dist(cfg, s.length())?;
    let g_r = retrieval_dist(cfg, r.length())?;
    let grid = cfg.grid.grid()?;
    let e_in = input_field(cfg)?;
    let t_s = cfg.protocol.storage_time;
    let kernel = match cfg.protocol.kernel {
        KernelChoice::General => build_kernel_general(
            &s,
            &r,
            &g_s,
            &g_r,
            &cfg.protocol.map.map()?,
            t_s,
            &grid,
            &grid,
        )?,
        KernelChoice::CribUniform => build_kernel_crib_uniform(&s, &r, t_s, &grid, &grid)?,
        KernelChoice::Ideal => build_kernel_ideal(&s, t_s, &grid, &grid)?,
    };
    let out = apply_kernel(&kernel, &e_in)?;
    let mut m = MetricsReport::new(out.field.norm(), grid);
    m.efficiency = Some(metrics::efficiency(&out.field, &e_in)?);
    // Spectral shape against the time-reversed input.
    m.fidelity_f = metrics::fidelity(&magnitude(&out.field), &magnitude(&e_in.reversed())).ok();
    m.leakage = Some(storage_leakage(&e_in, &s, &g_s)?);
    Ok(Outcome {
        metrics: m,
        spectrum: out.field,
        warnings: out.warnings,
        comparison: None,
    })
}

/// `f ≡ 0`: a table without any nonzero sample.
fn is_empty(shape: &ExcitationShape) -> bool {
    matches!(shape, ExcitationShape::Tabulated { values, .. } if values.iter().all(|v| v.norm() == 0.0))
}

/// Transducer inputs that do not depend on the optical depth, so a depth
/// sweep builds them once.
struct TransducePlan {
    grid: FrequencyGrid,
    profile: SpectralProfile,
    dist: EmitterDistribution,
    excitation: Option<StoredExcitation>,
    spectra: Option<TransducerSpectra>,
    opts: OutputOptions,
}

impl TransducePlan {
    fn new(cfg: &SimConfig, tol: Tolerance) -> Result<Self> {
        let params = cfg.retrieval_params()?;
        let profile = cfg.retrieval_profile()?;
        let dist = retrieval_dist(cfg, params.length())?;
        let grid = cfg.grid.grid()?;
        let shape = cfg
            .excitation
            .as_ref()
            .ok_or_else(|| Error::invalid("missing [excitation]"))?
            .shape()?;
        let excitation = if is_empty(&shape) {
            None
        } else {
            Some(normalize_excitation(shape, &dist, &params)?)
        };
        // Uniform media without phase mismatch have a closed form.
        let spectra = match &excitation {
            Some(f) if params.delta_k() == 0.0 => Some(TransducerSpectra::new(
                &profile,
                f,
                params.gamma(),
                grid,
                tol,
            )?),
            _ => None,
        };
        let opts = OutputOptions {
            control_phase: cfg.protocol.control_phase,
        };
        Ok(TransducePlan {
            grid,
            profile,
            dist,
            excitation,
            spectra,
            opts,
        })
    }

    fn evaluate(&self, params: &TransitionParams) -> Result<Outcome> {
        let Some(f) = &self.excitation else {
            let mut m = MetricsReport::new(0.0, self.grid);
            m.efficiency = Some(0.0);
            return Ok(Outcome {
                metrics: m,
                spectrum: SpectralField::zeros(self.grid),
                warnings: vec![],
                comparison: None,
            });
        };
        let out = match &self.spectra {
            Some(s) if params.delta_k() == 0.0 => s.uniform(params, self.opts)?,
            _ => mw_output_general_with(f, &self.dist, params, &self.grid, self.opts)?,
        };
        Ok(Outcome {
            metrics: self.metrics(&out, f),
            spectrum: out,
            warnings: vec![],
            comparison: None,
        })
    }

    fn metrics(&self, out: &SpectralField, f: &StoredExcitation) -> MetricsReport {
        let w = out.norm();
        let mut m = MetricsReport::new(w, self.grid);
        // One stored excitation, so the efficiency is the emission probability.
        m.efficiency = Some(w);
        m.fidelity_f = metrics::fidelity(out, &metrics::reference_excitation(f, &self.grid)).ok();
        m.fidelity_n =
            metrics::fidelity(out, &metrics::reference_line(&self.profile, f, &self.grid)).ok();
        m
    }
}

/// The oracle scenario a config describes.
pub fn scenario(cfg: &SimConfig) -> Result<Scenario> {
    let kind = match cfg.protocol.pipeline {
        Pipeline::OracleCompare => cfg
            .protocol
            .scenario
            .ok_or_else(|| Error::invalid("oracle-compare needs a scenario"))?,
        Pipeline::Retrieve => ScenarioKind::Retrieve,
        Pipeline::Transduce => ScenarioKind::Transduce,
    };
    Ok(match kind {
        ScenarioKind::Leakage => {
            let params = cfg.storage_params()?;
            Scenario::Leakage {
                dist: storage_dist(cfg, params.length())?,
                params,
                input: input_field(cfg)?,
            }
        }
        ScenarioKind::Retrieve => {
            let storage = cfg.storage_params()?;
            let retrieval = cfg.retrieval_params()?;
            Scenario::Retrieve {
                storage_dist: storage_dist(cfg, storage.length())?,
                retrieval_dist: retrieval_dist(cfg, retrieval.length())?,
                storage,
                retrieval,
                map: cfg.protocol.map.map()?,
                storage_time: cfg.protocol.storage_time,
                input: input_field(cfg)?,
            }
        }
        ScenarioKind::Transduce => {
            let params = cfg.retrieval_params()?;
            let dist = retrieval_dist(cfg, params.length())?;
            let shape = cfg
                .excitation
                .as_ref()
                .ok_or_else(|| Error::invalid("missing [excitation]"))?
                .shape()?;
            Scenario::Transduce {
                excitation: normalize_excitation(shape, &dist, &params)?,
                dist,
                params,
                grid: cfg.grid.grid()?,
            }
        }
    })
}

fn compare(cfg: &SimConfig) -> Result<Outcome> {
    let sc = scenario(cfg)?;
    let mut res = Resolution::default();
    if let Some(n) = cfg.protocol.oracle_space_points {
        res.space_points = n;
    }
    if let Some(c) = cfg.protocol.oracle_cfl {
        res.cfl = c;
    }
    let photons_in = match &sc {
        Scenario::Leakage { input, .. } | Scenario::Retrieve { input, .. } => Some(input.norm()),
        Scenario::Transduce { .. } => None,
    };
    let leak = matches!(sc, Scenario::Leakage { .. });
    let c = oracle::compare_fields(&ComparisonConfig {
        scenario: sc,
        resolution: res,
        window: None,
    })?;
    let w = c.oracle.norm();
    let mut m = MetricsReport::new(w, *c.oracle.grid());
    m.efficiency = Some(photons_in.map_or(w, |n| w / n));
    if leak {
        m.leakage = m.efficiency;
    }
    Ok(Outcome {
        metrics: m,
        spectrum: c.spectral.clone(),
        warnings: c.report.warnings.clone(),
        comparison: Some(c),
    })
}

/// One sweep row; failures are kept per row.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: f64,
    pub result: std::result::Result<MetricsReport, String>,
}

/// Sweep rows in ascending parameter order.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub parameter: SweepParameter,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    /// Row with the largest emission probability.
    pub fn peak(&self) -> Option<(f64, f64)> {
        self.rows
            .iter()
            .filter_map(|r| r.result.as_ref().ok().map(|m| (r.value, m.probability)))
            .fold(None, |best: Option<(f64, f64)>, x| match best {
                Some(b) if b.1 >= x.1 => Some(b),
                _ => Some(x),
            })
    }

    pub fn column(&self, f: impl Fn(&MetricsReport) -> Option<f64>) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.result.as_ref().ok().and_then(&f).unwrap_or(f64::NAN))
            .collect()
    }

    pub fn to_csv(&self, hash: &str, digits: usize) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |x| fmt_digits(x, digits));
        let mut s = hash_comment(hash);
        let _ = writeln!(
            s,
            "{},probability,efficiency,fidelity_f,fidelity_n,leakage,status",
            self.parameter.name()
        );
        for r in &self.rows {
            let v = fmt_digits(r.value, digits);
            match &r.result {
                Ok(m) => {
                    let _ = writeln!(
                        s,
                        "{v},{},{},{},{},{},ok",
                        fmt_digits(m.probability, digits),
                        opt(m.efficiency),
                        opt(m.fidelity_f),
                        opt(m.fidelity_n),
                        opt(m.leakage)
                    );
                }
                Err(e) => {
                    let msg: String = e
                        .chars()
                        .map(|c| if c == ',' || c == '\n' { ' ' } else { c })
                        .collect();
                    let _ = writeln!(s, "{v},nan,nan,nan,nan,nan,error: {msg}");
                }
            }
        }
        s
    }
}

/// Evaluate every sweep value without writing anything.
pub fn sweep(cfg: &SimConfig, tol: Tolerance) -> Result<SweepResult> {
    let sw = cfg.sweep.as_ref().ok_or_else(|| Error::Config {
        line: 0,
        message: "no [sweep] section".into(),
    })?;
    let p = sw.parameter;
    let depth_only = matches!(p, SweepParameter::Depth | SweepParameter::RetrievalDepth);
    let plan = if cfg.protocol.pipeline == Pipeline::Transduce && depth_only {
        Some(TransducePlan::new(cfg, tol).map_err(|e| e.to_string()))
    } else {
        None
    };
    let rows = par::map_range(sw.values.len(), |i| {
        let value = sw.values[i];
        let result = match &plan {
            Some(Err(e)) => Err(e.clone()),
            Some(Ok(plan)) => cfg
                .with_parameter(p, value)
                .and_then(|c| c.retrieval_params())
                .and_then(|params| plan.evaluate(&params))
                .map(|o| o.metrics)
                .map_err(|e| e.to_string()),
            None => cfg
                .with_parameter(p, value)
                .and_then(|c| evaluate(&c, tol))
                .map(|o| o.metrics)
                .map_err(|e| e.to_string()),
        };
        SweepRow { value, result }
    });
    Ok(SweepResult { parameter: p, rows })
}

/// Evaluate the sweep and write one CSV row per value.
pub fn run_sweep(cfg: &SimConfig, opts: &RunOptions) -> Result<(SweepResult, PathBuf)> {
    let cfg = opts.apply(cfg.clone())?;
    let result = sweep(&cfg, opts.tolerance()?)?;
    let dir = opts.dir(Some(&cfg))?;
    let path = dir.join(&cfg.output.sweep);
    write_text(
        &path,
        &result.to_csv(&opts.hash(&cfg), cfg.output.precision),
    )?;
    Ok((result, path))
}

const FIG_COMMON: &str =
    "# cutoff omega_R = -2*pi*30 rad/ns, L = 0.01 m, gamma = 2*pi*0.01 rad/ns, t_c = 1 ns\n";
const FIG2_SETS: &str = "\
# blue: Gamma/delta_omega = 20 with delta_omega = 2*pi*1 rad/ns
# orange: Gamma/delta_omega = 0.05 with delta_omega = 2*pi*20 rad/ns
";
const FIG3_SETS: &str =
    "# line shapes with Gamma = 2*pi*1 rad/ns, excitation delta_omega = 2*pi*20 rad/ns\n";

/// Depth points of every figure curve.
pub const FIGURE_DEPTHS: (f64, f64, usize) = (0.1, 30.0, 50);

/// Transducer config with the shared figure parameters.
pub fn figure_config(shape: &str, line_width: &str, excitation_width: &str) -> String {
    let (start, stop, n) = FIGURE_DEPTHS;
    format!(
        "[retrieval]\ngamma = 2*pi*0.01\nlength = 0.01\nc = 0.3\ncutoff = -2*pi*30\nd = 1\n\n\
         [retrieval_distribution]\nshape = {shape}\nwidth = {line_width}\n\n\
         [excitation]\nshape = gaussian\nwidth = {excitation_width}\nemission_time = 1\n\n\
         [grid]\nhalf_width = 400\npoints = 8001\n\n\
         [protocol]\npipeline = transduce\n\n\
         [sweep]\nparameter = d\nstart = {start}\nstop = {stop}\npoints = {n}\nscale = log\n"
    )
}

/// Labelled configs behind a figure.
pub fn figure_configs(name: FigureName) -> Vec<(&'static str, String)> {
    let blue = ("blue", figure_config("gaussian", "2*pi*20", "2*pi*1"));
    let orange = ("orange", figure_config("gaussian", "2*pi*1", "2*pi*20"));
    match name {
        FigureName::Fig2a | FigureName::Fig2b => vec![blue, orange],
        FigureName::Fig3 => ["gaussian", "sech", "lorentzian", "uniform"]
            .into_iter()
            .map(|s| (s, figure_config(s, "2*pi*1", "2*pi*20")))
            .collect(),
    }
}

/// Figure curves as written to CSV.
#[derive(Debug, Clone)]
pub struct FigureData {
    pub name: FigureName,
    pub depths: Vec<f64>,
    pub curves: Vec<(&'static str, SweepResult)>,
    /// Wall time per curve, not written to disk.
    pub curve_seconds: Vec<f64>,
    pub files: Vec<PathBuf>,
}

impl FigureData {
    pub fn curve(&self, label: &str) -> Option<&SweepResult> {
        self.curves
            .iter()
            .find(|(l, _)| *l == label)
            .map(|(_, s)| s)
    }
}

/// Evaluate a figure's curves and write `<name>.csv` plus the configs used.
pub fn reproduce_figure(name: FigureName, opts: &RunOptions) -> Result<FigureData> {
    let tol = opts.tolerance()?;
    let dir = opts.dir(None)?;
    let configs = figure_configs(name);
    let mut curves = Vec::new();
    let mut seconds = Vec::new();
    let mut files = Vec::new();
    let mut all_text = String::new();
    for (label, text) in &configs {
        let cfg = opts.apply(SimConfig::parse(text, Path::new("."))?)?;
        let clock = Instant::now();
        let s = sweep(&cfg, tol)?;
        seconds.push(clock.elapsed().as_secs_f64());
        if let Some(bad) = s.rows.iter().find_map(|r| r.result.as_ref().err()) {
            return Err(Error::numeric(
                format!("{} {label} curve failed: {bad}", name.name()),
                f64::NAN,
            ));
        }
        let path = dir.join(format!("{}_{label}.ini", name.name()));
        write_text(&path, text)?;
        files.push(path);
        all_text.push_str(text);
        curves.push((*label, s));
    }
    let (start, stop, n) = FIGURE_DEPTHS;
    let depths = range(start, stop, n, true);
    let hash = hash_text(&format!(
        "{all_text}grid_points={:?}\ntolerance={:?}\n",
        opts.grid_points, opts.tolerance
    ));
    let mut columns: Vec<(String, Vec<f64>)> = Vec::new();
    for (label, s) in &curves {
        match name {
            FigureName::Fig2a | FigureName::Fig3 => columns.push((
                format!("probability_{label}"),
                s.column(|m| Some(m.probability)),
            )),
            FigureName::Fig2b => {
                columns.push((format!("fidelity_f_{label}"), s.column(|m| m.fidelity_f)));
                columns.push((format!("fidelity_n_{label}"), s.column(|m| m.fidelity_n)));
            }
        }
    }
    let mut csv = hash_comment(&hash);
    csv.push_str(FIG_COMMON);
    csv.push_str(if name == FigureName::Fig3 {
        FIG3_SETS
    } else {
        FIG2_SETS
    });
    csv.push('d');
    for (c, _) in &columns {
        csv.push(',');
        csv.push_str(c);
    }
    csv.push('\n');
    for (i, d) in depths.iter().enumerate() {
        csv.push_str(&fmt_digits(*d, crate::grid::SIG_DIGITS));
        for (_, v) in &columns {
            csv.push(',');
            csv.push_str(&fmt_digits(v[i], crate::grid::SIG_DIGITS));
        }
        csv.push('\n');
    }
    let path = dir.join(format!("{}.csv", name.name()));
    write_text(&path, &csv)?;
    files.insert(0, path);
    Ok(FigureData {
        name,
        depths,
        curves,
        curve_seconds: seconds,
        files,
    })
}

fn print_unless(quiet: bool, s: &str) {
    if !quiet {
        print!("{s}");
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::invalid("--threads must be at least 1"));
        }
        par::configure_threads(n);
    }
    let opts = RunOptions {
        out_dir: cli.out,
        grid_points: cli.grid_points,
        tolerance: cli.tolerance,
        quiet: cli.quiet,
    };
    opts.tolerance()?;
    match cli.command {
        Command::Run { config } => {
            let cfg = SimConfig::from_file(&config)?;
            let out = run_simulation(&cfg, &opts)?;
            print_unless(opts.quiet, &out.outcome.metrics.to_key_value());
            for f in &out.files {
                log::info!("wrote {}", f.display());
            }
        }
        Command::OracleCompare { config } => {
            let mut cfg = SimConfig::from_file(&config)?;
            if cfg.protocol.pipeline != Pipeline::OracleCompare {
                // A retrieve or transduce config is checked against its own scenario.
                cfg.protocol.scenario = Some(match cfg.protocol.pipeline {
                    Pipeline::Retrieve => ScenarioKind::Retrieve,
                    _ => ScenarioKind::Transduce,
                });
                cfg.protocol.pipeline = Pipeline::OracleCompare;
            }
            let out = run_simulation(&cfg, &opts)?;
            if let Some(c) = &out.outcome.comparison {
                print_unless(opts.quiet, &c.report.to_key_value());
            }
        }
        Command::Sweep { config } => {
            let cfg = SimConfig::from_file(&config)?;
            let (res, path) = run_sweep(&cfg, &opts)?;
            let failed = res.rows.iter().filter(|r| r.result.is_err()).count();
            if failed > 0 {
                log::warn!("{failed} of {} sweep rows failed", res.rows.len());
            }
            print_unless(opts.quiet, &format!("wrote {}\n", path.display()));
        }
        Command::Figure { name } => {
            let data = reproduce_figure(name, &opts)?;
            print_unless(opts.quiet, &format!("wrote {}\n", data.files[0].display()));
        }
    }
    Ok(())
}

/// Parse arguments, run, and return the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let level = if cli.quiet {
        log::LevelFilter::Error
    } else {
        log::LevelFilter::Warn
    };
    let _ = env_logger::Builder::new().filter_level(level).try_init();
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn figure_configs_parse() {
        for name in [FigureName::Fig2a, FigureName::Fig2b, FigureName::Fig3] {
            for (_, text) in figure_configs(name) {
                let c = SimConfig::parse(&text, Path::new(".")).unwrap();
                assert_eq!(c.sweep.unwrap().values.len(), 50);
                assert!(c.grid.max > 2.0 * std::f64::consts::PI * 30.0);
            }
        }
        assert_eq!(figure_configs(FigureName::Fig3).len(), 4);
    }

    #[test]
    fn empty_excitation_emits_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let table = dir.path().join("f.csv");
        std::fs::write(&table, "-1,0,0\n1,0,0\n").unwrap();
        let text = figure_config("gaussian", "2*pi*20", "2*pi*1").replace(
            "shape = gaussian\nwidth = 2*pi*1\nemission_time = 1",
            &format!("table = {}", table.display()),
        );
        let cfg = SimConfig::parse(&text, dir.path())
            .unwrap()
            .with_grid_points(401)
            .unwrap();
        let out = evaluate(&cfg, Tolerance::default()).unwrap();
        assert_eq!(out.metrics.probability, 0.0);
        assert_eq!(out.metrics.fidelity_f, None);
    }

    #[test]
    fn sweep_rows_fail_individually() {
        let text = figure_config("gaussian", "2*pi*20", "2*pi*1").replace(
            "start = 0.1\nstop = 30\npoints = 50\nscale = log",
            "values = 1, -1, 0",
        );
        let cfg = SimConfig::parse(&text, Path::new("."))
            .unwrap()
            .with_grid_points(801)
            .unwrap();
        let s = sweep(&cfg, Tolerance::default()).unwrap();
        let vals: Vec<f64> = s.rows.iter().map(|r| r.value).collect();
        assert_eq!(vals, vec![-1.0, 0.0, 1.0]);
        assert!(s.rows[0].result.is_err());
        assert_eq!(s.rows[1].result.as_ref().unwrap().probability, 0.0);
        assert!(s.rows[2].result.as_ref().unwrap().probability > 0.1);
        let csv = s.to_csv("abc", 12);
        assert!(csv.lines().nth(2).unwrap().contains("error:"));
        assert_eq!(csv.lines().next().unwrap(), "# config_sha256=abc");
    }

    #[test]
    fn unknown_figure_is_a_usage_error() {
        assert_eq!(
            main_with(["photon-retrieval", "figure", "fig9", "--quiet"]),
            2
        );
        assert_eq!(
            main_with(["photon-retrieval", "run", "/no/such/config.ini", "--quiet"]),
            2
        );
    }
}
