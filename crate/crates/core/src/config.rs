//! Sectioned `key = value` run configuration.
//!
//! ```text
//! [retrieval]
//! gamma = 2*pi*0.01
//! length = 0.01
//! c = 0.3
//! cutoff = -2*pi*30
//! d = 2
//!
//! [retrieval_distribution]
//! shape = gaussian
//! width = 2*pi*20
//! ```
//!
//! Numbers may be written as products of literals, `pi` and `inf`.
//! Every error carries the line it refers to.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::distributions::{EmitterDistribution, Shape, SpectralProfile};
use crate::error::{Error, Result};
use crate::grid::{FrequencyGrid, SpectralField, SIG_DIGITS};
use crate::retrieval::BroadeningMap;
use crate::transducer::ExcitationShape;
use crate::transition::{ControlVelocity, Strength, TransitionParams, TransitionSpec};

const SECTIONS: &[(&str, &[&str])] = &[
    ("storage", TRANSITION_KEYS),
    ("retrieval", TRANSITION_KEYS),
    ("storage_distribution", DISTRIBUTION_KEYS),
    ("retrieval_distribution", DISTRIBUTION_KEYS),
    (
        "excitation",
        &["shape", "width", "emission_time", "center", "table"],
    ),
    ("input", &["duration", "peak_time", "carrier"]),
    ("grid", &["half_width", "min", "max", "points"]),
    (
        "protocol",
        &[
            "pipeline",
            "map",
            "map_shape",
            "map_width",
            "storage_time",
            "delay",
            "kernel",
            "scenario",
            "control_phase",
            "oracle_space_points",
            "oracle_cfl",
        ],
    ),
    (
        "sweep",
        &["parameter", "values", "start", "stop", "points", "scale"],
    ),
    (
        "output",
        &["dir", "spectrum", "metrics", "sweep", "precision"],
    ),
];

const TRANSITION_KEYS: &[&str] = &[
    "gamma", "length", "c", "d", "mu0", "c_prime", "cutoff", "k", "k_prime",
];
const DISTRIBUTION_KEYS: &[&str] = &["shape", "width", "center", "truncation", "table"];

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
}

#[derive(Debug, Clone)]
struct Section {
    line: usize,
    entries: BTreeMap<String, Entry>,
}

impl Section {
    fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.get(key)
    }

    fn number(&self, key: &str) -> Result<Option<f64>> {
        self.get(key)
            .map(|e| parse_number(&e.value).map_err(|m| at(e.line, format!("{key}: {m}"))))
            .transpose()
    }

    fn required(&self, name: &str, key: &str) -> Result<f64> {
        self.number(key)?
            .ok_or_else(|| at(self.line, format!("[{name}] needs '{key}'")))
    }

    fn count(&self, key: &str) -> Result<Option<usize>> {
        self.get(key)
            .map(|e| {
                e.value.trim().parse::<usize>().map_err(|_| {
                    at(
                        e.line,
                        format!("{key}: expected a count, got '{}'", e.value),
                    )
                })
            })
            .transpose()
    }

    fn text(&self, key: &str) -> Option<(String, usize)> {
        self.get(key)
            .map(|e| (e.value.trim().to_ascii_lowercase(), e.line))
    }
}

fn at(line: usize, message: impl Into<String>) -> Error {
    Error::Config {
        line,
        message: message.into(),
    }
}

/// Parse `a*b*c` where each factor is a float literal, `pi` or `inf`, with
/// an optional sign.
pub fn parse_number(s: &str) -> std::result::Result<f64, String> {
    let s = s.trim();
    if s.is_empty() {
        return Err("empty value".into());
    }
    let mut acc = 1.0;
    for raw in s.split('*') {
        let mut f = raw.trim();
        let mut sign = 1.0;
        while let Some(rest) = f.strip_prefix('-') {
            sign = -sign;
            f = rest.trim_start();
        }
        let v = match f.to_ascii_lowercase().as_str() {
            "pi" => std::f64::consts::PI,
            "inf" | "infinity" => f64::INFINITY,
            lit => lit
                .parse::<f64>()
                .map_err(|_| format!("cannot read '{s}' as a number"))?,
        };
        acc *= sign * v;
    }
    if acc.is_nan() {
        return Err(format!("'{s}' is not a number"));
    }
    Ok(acc)
}

/// Requested pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pipeline {
    Retrieve,
    Transduce,
    OracleCompare,
}

impl Pipeline {
    pub fn name(&self) -> &'static str {
        match self {
            Pipeline::Retrieve => "retrieve",
            Pipeline::Transduce => "transduce",
            Pipeline::OracleCompare => "oracle-compare",
        }
    }
}

/// Which oracle scenario an `oracle-compare` run checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    Leakage,
    Retrieve,
    Transduce,
}

/// Which retrieval kernel the retrieve pipeline builds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelChoice {
    General,
    CribUniform,
    Ideal,
}

/// Coupling as written in the file, before the line density is known.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CouplingKey {
    Depth(f64),
    Mu0(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionBlock {
    pub gamma: f64,
    pub length: f64,
    pub c: f64,
    pub coupling: CouplingKey,
    pub control: ControlVelocity,
    pub k: f64,
    pub k_prime: f64,
    pub line: usize,
}

impl TransitionBlock {
    /// Validated parameters; `n0` is the peak density of the transition's
    /// line and is only used when the coupling is given as `mu0`.
    pub fn params(&self, n0: f64) -> Result<TransitionParams> {
        let strength = match self.coupling {
            CouplingKey::Depth(d) => Strength::OpticalDepth(d),
            CouplingKey::Mu0(mu0) => Strength::Coupling { mu0, n0 },
        };
        let spec = TransitionSpec {
            gamma: self.gamma,
            length: self.length,
            c: self.c,
            control: self.control,
            k: self.k,
            k_prime: self.k_prime,
            strength,
        };
        spec.derive().map_err(|e| at(self.line, e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LineSource {
    Shape {
        shape: Shape,
        width: f64,
        center: f64,
        truncation: Option<f64>,
    },
    Table(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistributionBlock {
    pub source: LineSource,
    pub line: usize,
}

impl DistributionBlock {
    pub fn profile(&self) -> Result<SpectralProfile> {
        let wrap = |e: Error| at(self.line, e.to_string());
        match &self.source {
            LineSource::Shape {
                shape,
                width,
                center,
                truncation,
            } => {
                let mut p = SpectralProfile::new(*shape, *width)
                    .map_err(wrap)?
                    .with_center(*center);
                if let Some(t) = truncation {
                    p = p.with_truncation(*t).map_err(wrap)?;
                }
                Ok(p)
            }
            LineSource::Table(path) => SpectralProfile::from_table_file(path).map_err(wrap),
        }
    }

    /// Spatially uniform distribution over `length`.
    pub fn distribution(&self, length: f64) -> Result<EmitterDistribution> {
        EmitterDistribution::uniform_in_space(length, self.profile()?)
            .map_err(|e| at(self.line, e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExcitationSource {
    Gaussian {
        width: f64,
        emission_time: f64,
        center: f64,
    },
    Table(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExcitationBlock {
    pub source: ExcitationSource,
    pub line: usize,
}

impl ExcitationBlock {
    pub fn shape(&self) -> Result<ExcitationShape> {
        let wrap = |e: Error| at(self.line, e.to_string());
        match &self.source {
            ExcitationSource::Gaussian {
                width,
                emission_time,
                center,
            } => match ExcitationShape::gaussian(*width, *emission_time).map_err(wrap)? {
                ExcitationShape::Gaussian {
                    width,
                    emission_time,
                    ..
                } => Ok(ExcitationShape::Gaussian {
                    width,
                    emission_time,
                    center: *center,
                }),
                other => Ok(other),
            },
            ExcitationSource::Table(path) => ExcitationShape::from_table_file(path).map_err(wrap),
        }
    }
}

/// Gaussian input photon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputBlock {
    pub duration: f64,
    pub peak_time: f64,
    pub carrier: f64,
}

impl InputBlock {
    pub fn field(&self, grid: FrequencyGrid) -> SpectralField {
        SpectralField::gaussian_pulse(grid, self.duration, self.peak_time, self.carrier)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridBlock {
    pub min: f64,
    pub max: f64,
    pub points: usize,
    pub line: usize,
}

impl GridBlock {
    pub fn grid(&self) -> Result<FrequencyGrid> {
        FrequencyGrid::new(self.min, self.max, self.points)
            .map_err(|e| at(self.line, e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MapKind {
    Negate,
    Identity,
    Uncorrelated { shape: Shape, width: f64 },
}

impl MapKind {
    pub fn map(&self) -> Result<BroadeningMap> {
        match self {
            MapKind::Negate => Ok(BroadeningMap::Negate),
            MapKind::Identity => Ok(BroadeningMap::Identity),
            MapKind::Uncorrelated { shape, width } => {
                BroadeningMap::uncorrelated(SpectralProfile::new(*shape, *width)?)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolBlock {
    pub pipeline: Pipeline,
    pub map: MapKind,
    pub storage_time: f64,
    pub delay: Option<f64>,
    pub kernel: KernelChoice,
    pub scenario: Option<ScenarioKind>,
    pub control_phase: bool,
    pub oracle_space_points: Option<usize>,
    pub oracle_cfl: Option<f64>,
    pub line: usize,
}

/// Quantity varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParameter {
    /// Optical depth of every transition in use.
    Depth,
    StorageDepth,
    RetrievalDepth,
    StorageTime,
    /// Width of every emitter line in use.
    LineWidth,
    ExcitationWidth,
    EmissionTime,
}

impl SweepParameter {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParameter::Depth => "d",
            SweepParameter::StorageDepth => "d_storage",
            SweepParameter::RetrievalDepth => "d_retrieval",
            SweepParameter::StorageTime => "storage_time",
            SweepParameter::LineWidth => "line_width",
            SweepParameter::ExcitationWidth => "excitation_width",
            SweepParameter::EmissionTime => "emission_time",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "d" => SweepParameter::Depth,
            "d_storage" => SweepParameter::StorageDepth,
            "d_retrieval" => SweepParameter::RetrievalDepth,
            "storage_time" => SweepParameter::StorageTime,
            "line_width" => SweepParameter::LineWidth,
            "excitation_width" => SweepParameter::ExcitationWidth,
            "emission_time" => SweepParameter::EmissionTime,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepBlock {
    pub parameter: SweepParameter,
    /// Ascending.
    pub values: Vec<f64>,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputBlock {
    pub dir: Option<PathBuf>,
    pub spectrum: String,
    pub metrics: String,
    pub sweep: String,
    pub precision: usize,
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock {
            dir: None,
            spectrum: "spectrum.csv".into(),
            metrics: "metrics.csv".into(),
            sweep: "sweep.csv".into(),
            precision: SIG_DIGITS,
        }
    }
}

/// A validated run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub storage: Option<TransitionBlock>,
    pub retrieval: Option<TransitionBlock>,
    pub storage_distribution: Option<DistributionBlock>,
    pub retrieval_distribution: Option<DistributionBlock>,
    pub excitation: Option<ExcitationBlock>,
    pub input: Option<InputBlock>,
    pub grid: GridBlock,
    pub protocol: ProtocolBlock,
    pub sweep: Option<SweepBlock>,
    pub output: OutputBlock,
    /// SHA-256 of the configuration text, hex encoded.
    pub hash: String,
}

impl SimConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base)
    }

    /// Parse and validate; relative table paths are resolved against
    /// `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let sections = split_sections(text)?;
        let cfg = build(&sections, base_dir, hash_text(text))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Override the number of frequency points.
    pub fn with_grid_points(mut self, n: usize) -> Result<Self> {
        self.grid.points = n;
        self.grid.grid()?;
        Ok(self)
    }

    pub fn storage_params(&self) -> Result<TransitionParams> {
        let t = self
            .storage
            .as_ref()
            .ok_or_else(|| at(self.protocol.line, "missing [storage]"))?;
        t.params(self.storage_profile()?.peak())
    }

    pub fn retrieval_params(&self) -> Result<TransitionParams> {
        let t = self
            .retrieval
            .as_ref()
            .ok_or_else(|| at(self.protocol.line, "missing [retrieval]"))?;
        t.params(self.retrieval_profile()?.peak())
    }

    pub fn storage_profile(&self) -> Result<SpectralProfile> {
        self.storage_distribution
            .as_ref()
            .ok_or_else(|| at(self.protocol.line, "missing [storage_distribution]"))?
            .profile()
    }

    /// The retrieval line, falling back to the storage line.
    pub fn retrieval_profile(&self) -> Result<SpectralProfile> {
        match (&self.retrieval_distribution, &self.storage_distribution) {
            (Some(b), _) | (None, Some(b)) => b.profile(),
            _ => Err(at(self.protocol.line, "missing [retrieval_distribution]")),
        }
    }

    /// Apply one sweep value.
    pub fn with_parameter(&self, p: SweepParameter, value: f64) -> Result<SimConfig> {
        let mut c = self.clone();
        let line = self.sweep.as_ref().map_or(0, |s| s.line);
        let set_depth = |t: &mut Option<TransitionBlock>| {
            if let Some(t) = t {
                t.coupling = CouplingKey::Depth(value);
            }
        };
        let set_width = |b: &mut Option<DistributionBlock>| -> Result<()> {
            if let Some(b) = b {
                match &mut b.source {
                    LineSource::Shape { width, .. } => *width = value,
                    LineSource::Table(_) => {
                        return Err(at(line, "line_width cannot be swept for a tabulated line"))
                    }
                }
            }
            Ok(())
        };
        match p {
            SweepParameter::Depth => {
                set_depth(&mut c.storage);
                set_depth(&mut c.retrieval);
            }
            SweepParameter::StorageDepth => set_depth(&mut c.storage),
            SweepParameter::RetrievalDepth => set_depth(&mut c.retrieval),
            SweepParameter::StorageTime => c.protocol.storage_time = value,
            SweepParameter::LineWidth => {
                set_width(&mut c.storage_distribution)?;
                set_width(&mut c.retrieval_distribution)?;
            }
            SweepParameter::ExcitationWidth | SweepParameter::EmissionTime => {
                let ex = c
                    .excitation
                    .as_mut()
                    .ok_or_else(|| at(line, "no [excitation] to sweep"))?;
                match &mut ex.source {
                    ExcitationSource::Gaussian {
                        width,
                        emission_time,
                        ..
                    } => {
                        if p == SweepParameter::ExcitationWidth {
                            *width = value
                        } else {
                            *emission_time = value
                        }
                    }
                    ExcitationSource::Table(_) => {
                        return Err(at(
                            line,
                            "a tabulated excitation has no width or emission time to sweep",
                        ))
                    }
                }
            }
        }
        Ok(c)
    }

    /// Cross-field checks that need more than one section.
    fn validate(&self) -> Result<()> {
        let p = &self.protocol;
        let need = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(at(
                    p.line,
                    format!("pipeline {} needs {what}", p.pipeline.name()),
                ))
            }
        };
        let scenario = match p.pipeline {
            Pipeline::Retrieve => Some(ScenarioKind::Retrieve),
            Pipeline::Transduce => Some(ScenarioKind::Transduce),
            Pipeline::OracleCompare => Some(
                p.scenario
                    .ok_or_else(|| at(p.line, "oracle-compare needs 'scenario'"))?,
            ),
        };
        match scenario {
            Some(ScenarioKind::Leakage) => {
                need(self.storage.is_some(), "[storage]")?;
                need(
                    self.storage_distribution.is_some(),
                    "[storage_distribution]",
                )?;
                need(self.input.is_some(), "[input]")?;
                self.storage_params()?;
            }
            Some(ScenarioKind::Retrieve) => {
                need(
                    self.storage.is_some() && self.retrieval.is_some(),
                    "[storage] and [retrieval]",
                )?;
                need(
                    self.storage_distribution.is_some(),
                    "[storage_distribution]",
                )?;
                need(self.input.is_some(), "[input]")?;
                let s = self.storage_params()?;
                let r = self.retrieval_params()?;
                if (s.length() - r.length()).abs() > 1e-12 * s.length() {
                    return Err(at(
                        self.retrieval.as_ref().map_or(0, |t| t.line),
                        "storage and retrieval lengths differ",
                    ));
                }
                if let Some(dt) = p.delay {
                    if dt < s.min_store_delay() {
                        return Err(at(
                            p.line,
                            format!(
                                "delay {dt} is below the minimum storage delay {}",
                                s.min_store_delay()
                            ),
                        ));
                    }
                }
                p.map.map().map_err(|e| at(p.line, e.to_string()))?;
                if p.storage_time < 0.0 {
                    return Err(at(p.line, "storage_time must be >= 0"));
                }
            }
            Some(ScenarioKind::Transduce) | None => {
                need(self.retrieval.is_some(), "[retrieval]")?;
                need(
                    self.retrieval_distribution.is_some() || self.storage_distribution.is_some(),
                    "[retrieval_distribution]",
                )?;
                need(self.excitation.is_some(), "[excitation]")?;
                self.retrieval_params()?;
                self.excitation.as_ref().map(|e| e.shape()).transpose()?;
            }
        }
        self.grid.grid()?;
        Ok(())
    }
}

/// Hex SHA-256 of arbitrary text.
pub fn hash_text(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn split_sections(text: &str) -> Result<BTreeMap<String, Section>> {
    let mut out: BTreeMap<String, Section> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let s = raw.split(['#', ';']).next().unwrap_or("").trim();
        if s.is_empty() {
            continue;
        }
        if let Some(name) = s.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| at(line, format!("unterminated section header '{s}'")))?
                .trim()
                .to_ascii_lowercase();
            if !SECTIONS.iter().any(|(n, _)| *n == name) {
                return Err(at(line, format!("unknown section [{name}]")));
            }
            if out.contains_key(&name) {
                return Err(at(line, format!("section [{name}] appears twice")));
            }
            out.insert(
                name.clone(),
                Section {
                    line,
                    entries: BTreeMap::new(),
                },
            );
            current = Some(name);
            continue;
        }
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| at(line, format!("expected 'key = value', got '{s}'")))?;
        let key = k.trim().to_ascii_lowercase();
        let name = current
            .as_ref()
            .ok_or_else(|| at(line, format!("'{key}' appears before any section")))?;
        let allowed = SECTIONS
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, k)| *k)
            .unwrap_or(&[]);
        if !allowed.contains(&key.as_str()) {
            return Err(at(line, format!("unknown key '{key}' in [{name}]")));
        }
        let sec = out.get_mut(name).expect("section was inserted");
        if sec.entries.contains_key(&key) {
            return Err(at(line, format!("key '{key}' repeated in [{name}]")));
        }
        sec.entries.insert(
            key,
            Entry {
                value: v.trim().to_string(),
                line,
            },
        );
    }
    Ok(out)
}

fn resolve(base: &Path, e: &Entry) -> Result<PathBuf> {
    let p = PathBuf::from(e.value.trim());
    let p = if p.is_absolute() { p } else { base.join(p) };
    if !p.is_file() {
        return Err(at(e.line, format!("file {} does not exist", p.display())));
    }
    Ok(p)
}

fn transition(sec: &Section, name: &str) -> Result<TransitionBlock> {
    let coupling = match (sec.get("d"), sec.get("mu0")) {
        (Some(a), Some(b)) => {
            return Err(at(
                a.line.max(b.line),
                format!(
                    "[{name}] sets both 'd' (line {}) and 'mu0' (line {}); give exactly one",
                    a.line, b.line
                ),
            ))
        }
        (Some(_), None) => CouplingKey::Depth(sec.required(name, "d")?),
        (None, Some(_)) => CouplingKey::Mu0(sec.required(name, "mu0")?),
        (None, None) => return Err(at(sec.line, format!("[{name}] needs one of 'd' or 'mu0'"))),
    };
    let control = match (sec.get("c_prime"), sec.get("cutoff")) {
        (Some(a), Some(b)) => {
            return Err(at(
                a.line.max(b.line),
                format!("[{name}] sets both 'c_prime' and 'cutoff'; give at most one"),
            ))
        }
        (Some(_), None) => ControlVelocity::Velocity(sec.required(name, "c_prime")?),
        (None, Some(_)) => ControlVelocity::Cutoff(sec.required(name, "cutoff")?),
        (None, None) => ControlVelocity::Matched,
    };
    Ok(TransitionBlock {
        gamma: sec.required(name, "gamma")?,
        length: sec.required(name, "length")?,
        c: sec.required(name, "c")?,
        coupling,
        control,
        k: sec.number("k")?.unwrap_or(0.0),
        k_prime: sec.number("k_prime")?.unwrap_or(0.0),
        line: sec.line,
    })
}

fn distribution(sec: &Section, name: &str, base: &Path) -> Result<DistributionBlock> {
    let source = match (sec.get("table"), sec.text("shape")) {
        (Some(t), None) => LineSource::Table(resolve(base, t)?),
        (Some(t), Some((s, _))) if s == "table" || s == "tabulated" => {
            LineSource::Table(resolve(base, t)?)
        }
        (Some(t), Some(_)) => {
            return Err(at(
                t.line,
                format!("[{name}] sets both 'table' and a closed-form 'shape'"),
            ))
        }
        (None, Some((s, line))) => {
            let shape: Shape = s.parse().map_err(|e: Error| at(line, e.to_string()))?;
            if shape == Shape::Tabulated {
                return Err(at(line, format!("[{name}] shape = {s} needs 'table'")));
            }
            LineSource::Shape {
                shape,
                width: sec.required(name, "width")?,
                center: sec.number("center")?.unwrap_or(0.0),
                truncation: sec.number("truncation")?,
            }
        }
        (None, None) => return Err(at(sec.line, format!("[{name}] needs 'shape' or 'table'"))),
    };
    let block = DistributionBlock {
        source,
        line: sec.line,
    };
    block.profile()?;
    Ok(block)
}

fn excitation(sec: &Section, base: &Path) -> Result<ExcitationBlock> {
    let source = match (sec.get("table"), sec.text("shape")) {
        (Some(t), None) => ExcitationSource::Table(resolve(base, t)?),
        (Some(t), Some((s, _))) if s == "table" || s == "tabulated" => {
            ExcitationSource::Table(resolve(base, t)?)
        }
        (None, None) => ExcitationSource::Gaussian {
            width: sec.required("excitation", "width")?,
            emission_time: sec.number("emission_time")?.unwrap_or(0.0),
            center: sec.number("center")?.unwrap_or(0.0),
        },
        (None, Some((s, _))) if s == "gaussian" => ExcitationSource::Gaussian {
            width: sec.required("excitation", "width")?,
            emission_time: sec.number("emission_time")?.unwrap_or(0.0),
            center: sec.number("center")?.unwrap_or(0.0),
        },
        (_, Some((s, line))) => {
            return Err(at(
                line,
                format!("excitation shape must be gaussian or table, got '{s}'"),
            ))
        }
    };
    let block = ExcitationBlock {
        source,
        line: sec.line,
    };
    block.shape()?;
    Ok(block)
}

fn grid(sec: Option<&Section>) -> Result<GridBlock> {
    let sec = sec.ok_or_else(|| at(0, "missing [grid] section"))?;
    let points = sec
        .count("points")?
        .ok_or_else(|| at(sec.line, "[grid] needs 'points'"))?;
    let (min, max) = match (
        sec.number("half_width")?,
        sec.number("min")?,
        sec.number("max")?,
    ) {
        (Some(h), None, None) => (-h, h),
        (None, Some(a), Some(b)) => (a, b),
        _ => {
            return Err(at(
                sec.line,
                "[grid] needs either 'half_width' or both 'min' and 'max'",
            ))
        }
    };
    let g = GridBlock {
        min,
        max,
        points,
        line: sec.line,
    };
    g.grid()?;
    Ok(g)
}

fn protocol(sec: Option<&Section>) -> Result<ProtocolBlock> {
    let sec = sec.ok_or_else(|| at(0, "missing [protocol] section"))?;
    let (pipe, pline) = sec
        .text("pipeline")
        .ok_or_else(|| at(sec.line, "[protocol] needs 'pipeline'"))?;
    let pipeline = match pipe.as_str() {
        "retrieve" => Pipeline::Retrieve,
        "transduce" => Pipeline::Transduce,
        "oracle-compare" | "oracle_compare" => Pipeline::OracleCompare,
        other => return Err(at(pline, format!("unknown pipeline '{other}'"))),
    };
    let map = match sec.text("map") {
        None => MapKind::Negate,
        Some((m, line)) => match m.as_str() {
            "negate" => MapKind::Negate,
            "identity" => MapKind::Identity,
            "uncorrelated" => {
                let (s, sline) = sec.text("map_shape").unwrap_or(("gaussian".into(), line));
                MapKind::Uncorrelated {
                    shape: s.parse().map_err(|e: Error| at(sline, e.to_string()))?,
                    width: sec
                        .number("map_width")?
                        .ok_or_else(|| at(line, "map = uncorrelated needs 'map_width'"))?,
                }
            }
            other => return Err(at(line, format!("unknown map '{other}'"))),
        },
    };
    let kernel = match sec.text("kernel") {
        None => KernelChoice::General,
        Some((k, line)) => match k.as_str() {
            "general" => KernelChoice::General,
            "crib_uniform" => KernelChoice::CribUniform,
            "ideal" => KernelChoice::Ideal,
            other => return Err(at(line, format!("unknown kernel '{other}'"))),
        },
    };
    let scenario = match sec.text("scenario") {
        None => None,
        Some((s, line)) => Some(match s.as_str() {
            "leakage" => ScenarioKind::Leakage,
            "retrieve" => ScenarioKind::Retrieve,
            "transduce" => ScenarioKind::Transduce,
            other => return Err(at(line, format!("unknown scenario '{other}'"))),
        }),
    };
    let control_phase = match sec.text("control_phase") {
        None => false,
        Some((v, line)) => v
            .parse::<bool>()
            .map_err(|_| at(line, "control_phase must be true or false"))?,
    };
    Ok(ProtocolBlock {
        pipeline,
        map,
        storage_time: sec.number("storage_time")?.unwrap_or(0.0),
        delay: sec.number("delay")?,
        kernel,
        scenario,
        control_phase,
        oracle_space_points: sec.count("oracle_space_points")?,
        oracle_cfl: sec.number("oracle_cfl")?,
        line: sec.line,
    })
}

fn sweep(sec: &Section) -> Result<SweepBlock> {
    let (name, line) = sec
        .text("parameter")
        .ok_or_else(|| at(sec.line, "[sweep] needs 'parameter'"))?;
    let parameter =
        SweepParameter::parse(&name).ok_or_else(|| at(line, format!("cannot sweep '{name}'")))?;
    let mut values = if let Some(e) = sec.get("values") {
        e.value
            .split(',')
            .map(|v| parse_number(v).map_err(|m| at(e.line, format!("values: {m}"))))
            .collect::<Result<Vec<f64>>>()?
    } else {
        let start = sec.required("sweep", "start")?;
        let stop = sec.required("sweep", "stop")?;
        let n = sec
            .count("points")?
            .ok_or_else(|| at(sec.line, "[sweep] needs 'points' or 'values'"))?;
        let log = match sec.text("scale") {
            None => false,
            Some((s, l)) => match s.as_str() {
                "linear" => false,
                "log" => true,
                other => return Err(at(l, format!("scale must be linear or log, got '{other}'"))),
            },
        };
        if n == 0 {
            return Err(at(sec.line, "sweep needs at least one point"));
        }
        if log && !(start > 0.0 && stop > 0.0) {
            return Err(at(sec.line, "a log sweep needs positive start and stop"));
        }
        range(start, stop, n, log)
    };
    if values.iter().any(|v| !v.is_finite()) {
        return Err(at(sec.line, "sweep values must be finite"));
    }
    values.sort_by(f64::total_cmp);
    Ok(SweepBlock {
        parameter,
        values,
        line: sec.line,
    })
}

/// `n` points from `start` to `stop`, geometric when `log`.
pub fn range(start: f64, stop: f64, n: usize, log: bool) -> Vec<f64> {
    if n == 1 {
        return vec![start];
    }
    (0..n)
        .map(|i| {
            let t = i as f64 / (n - 1) as f64;
            if log {
                start * (stop / start).powf(t)
            } else {
                start + (stop - start) * t
            }
        })
        .collect()
}

fn output(sec: Option<&Section>) -> Result<OutputBlock> {
    let mut o = OutputBlock::default();
    let Some(sec) = sec else { return Ok(o) };
    if let Some(e) = sec.get("dir") {
        o.dir = Some(PathBuf::from(e.value.trim()));
    }
    for (key, slot) in [
        ("spectrum", &mut o.spectrum),
        ("metrics", &mut o.metrics),
        ("sweep", &mut o.sweep),
    ] {
        if let Some(e) = sec.get(key) {
            *slot = e.value.trim().to_string();
        }
    }
    if let Some(p) = sec.count("precision")? {
        if !(1..=17).contains(&p) {
            return Err(at(
                sec.get("precision").map_or(sec.line, |e| e.line),
                "precision must be between 1 and 17",
            ));
        }
        o.precision = p;
    }
    Ok(o)
}

fn build(s: &BTreeMap<String, Section>, base: &Path, hash: String) -> Result<SimConfig> {
    let tr = |n: &str| s.get(n).map(|sec| transition(sec, n)).transpose();
    let di = |n: &str| s.get(n).map(|sec| distribution(sec, n, base)).transpose();
    let input = s
        .get("input")
        .map(|sec| -> Result<InputBlock> {
            Ok(InputBlock {
                duration: sec.required("input", "duration")?,
                peak_time: sec.number("peak_time")?.unwrap_or(0.0),
                carrier: sec.number("carrier")?.unwrap_or(0.0),
            })
        })
        .transpose()?;
    if let (Some(i), Some(sec)) = (&input, s.get("input")) {
        if !(i.duration > 0.0 && i.duration.is_finite()) {
            return Err(at(sec.line, "input duration must be positive"));
        }
    }
    Ok(SimConfig {
        storage: tr("storage")?,
        retrieval: tr("retrieval")?,
        storage_distribution: di("storage_distribution")?,
        retrieval_distribution: di("retrieval_distribution")?,
        excitation: s
            .get("excitation")
            .map(|sec| excitation(sec, base))
            .transpose()?,
        input,
        grid: grid(s.get("grid"))?,
        protocol: protocol(s.get("protocol"))?,
        sweep: s.get("sweep").map(sweep).transpose()?,
        output: output(s.get("output"))?,
        hash,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const TRANSDUCE: &str = "\
[retrieval]
gamma = 2*pi*0.01
length = 0.01
c = 0.3
cutoff = -2*pi*30
d = 2

[retrieval_distribution]
shape = gaussian
width = 2*pi*20

[excitation]
width = 2*pi
emission_time = 1

[grid]
half_width = 400
points = 801

[protocol]
pipeline = transduce
";

    fn parse(text: &str) -> Result<SimConfig> {
        SimConfig::parse(text, Path::new("."))
    }

    fn line_of(e: Error) -> usize {
        match e {
            Error::Config { line, .. } => line,
            other => panic!("expected a config error, got {other}"),
        }
    }

    #[test]
    fn numbers() {
        assert_eq!(parse_number("2.5").unwrap(), 2.5);
        assert!((parse_number("-2*pi*30").unwrap() + 60.0 * std::f64::consts::PI).abs() < 1e-12);
        assert_eq!(parse_number("inf").unwrap(), f64::INFINITY);
        assert!(parse_number("2*x").is_err());
        assert!(parse_number("").is_err());
    }

    #[test]
    fn reads_a_transducer_config() {
        let c = parse(TRANSDUCE).unwrap();
        assert_eq!(c.protocol.pipeline, Pipeline::Transduce);
        let p = c.retrieval_params().unwrap();
        assert_eq!(p.d(), 2.0);
        assert_eq!(p.inv_c_prime(), 0.0);
        assert_eq!(c.grid.grid().unwrap().len(), 801);
        assert_eq!(c.hash.len(), 64);
        assert_ne!(
            c.hash,
            parse(&TRANSDUCE.replace("d = 2", "d = 3")).unwrap().hash
        );
    }

    #[test]
    fn both_couplings_are_rejected_naming_both() {
        let text = TRANSDUCE.replace("d = 2", "d = 2\nmu0 = 4");
        let err = parse(&text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("'d'") && msg.contains("'mu0'"), "{msg}");
        assert_eq!(err.exit_code(), 2);
        assert_eq!(line_of(err), 7);
    }

    #[test]
    fn mu0_sets_the_depth_through_the_line_peak() {
        let c = parse(&TRANSDUCE.replace("d = 2", "mu0 = 3")).unwrap();
        let p = c.retrieval_params().unwrap();
        let n0 = c.retrieval_profile().unwrap().peak();
        assert!((p.coupling_for(n0) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn errors_point_at_their_line() {
        assert_eq!(
            line_of(parse(&TRANSDUCE.replace("c = 0.3", "c = fast")).unwrap_err()),
            4
        );
        assert_eq!(
            line_of(
                parse(&TRANSDUCE.replace("points = 801", "points = 801\nspacing = 2")).unwrap_err()
            ),
            19
        );
        assert_eq!(
            line_of(parse(&TRANSDUCE.replace("[grid]", "[grids]")).unwrap_err()),
            16
        );
        assert_eq!(
            line_of(
                parse(&TRANSDUCE.replace("pipeline = transduce", "pipeline = rewind")).unwrap_err()
            ),
            21
        );
        let missing = TRANSDUCE.replace("[excitation]\nwidth = 2*pi\nemission_time = 1\n", "");
        assert!(parse(&missing)
            .unwrap_err()
            .to_string()
            .contains("[excitation]"));
    }

    #[test]
    fn missing_table_is_reported() {
        let text = TRANSDUCE.replace(
            "shape = gaussian\nwidth = 2*pi*20",
            "table = no/such/line.csv",
        );
        let msg = parse(&text).unwrap_err().to_string();
        assert!(msg.contains("does not exist"), "{msg}");
    }

    #[test]
    fn sweep_values_are_sorted() {
        let c = parse(&format!(
            "{TRANSDUCE}\n[sweep]\nparameter = d\nvalues = 3, 0.5, 1\n"
        ))
        .unwrap();
        assert_eq!(c.sweep.unwrap().values, vec![0.5, 1.0, 3.0]);
        let c = parse(&format!("{TRANSDUCE}\n[sweep]\nparameter = d\nstart = 0.1\nstop = 10\npoints = 3\nscale = log\n"))
            .unwrap();
        let v = c.sweep.unwrap().values;
        assert!((v[1] - 1.0).abs() < 1e-12 && (v[2] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn parameters_override() {
        let c = parse(TRANSDUCE).unwrap();
        let c2 = c.with_parameter(SweepParameter::Depth, 7.0).unwrap();
        assert_eq!(c2.retrieval_params().unwrap().d(), 7.0);
        let c3 = c
            .with_parameter(SweepParameter::ExcitationWidth, 1.0)
            .unwrap();
        assert!(
            matches!(c3.excitation.unwrap().source, ExcitationSource::Gaussian { width, .. } if width == 1.0)
        );
    }
}
