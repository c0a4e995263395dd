//! Scenario file family (`.net.xml`, `.rou.xml`, `.poly.xml`, `.sumocfg`) and
//! run-result writers.
//!
//! Only a documented subset of each schema is read; see `docs/formats.md`.
//! Coordinates are planar metres.

mod canonical;
mod net;
mod poly;
mod results;
mod routes;
mod xml;

pub use canonical::{write_network_xml, write_polygons_xml, write_routes_xml, write_sumocfg};
pub use net::{parse_network, parse_network_file, NetFile};
pub use poly::{parse_polygons, PolyFile, Rsu};
pub use results::{write_results, ResultError, ResultStore};
pub use routes::{parse_routes, Demand};

use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use crate::geometry::Polygon;
use crate::traffic::{RoadNetwork, TrafficLightProgram};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{at}malformed XML: {message}")]
    Xml { at: Locus, message: String },
    #[error("{at}schema violation: {message}")]
    SchemaViolation { at: Locus, message: String },
    #[error("{at}dangling reference: {message}")]
    DanglingReference { at: Locus, message: String },
    #[error("{at}vehicle '{vehicle}' uses undeclared vType '{vtype}'")]
    UnknownVType {
        at: Locus,
        vehicle: String,
        vtype: String,
    },
    #[error("{at}route of '{vehicle}' references unknown edge '{edge}'")]
    UnknownEdge {
        at: Locus,
        vehicle: String,
        edge: String,
    },
    #[error("{at}route of '{vehicle}' is not contiguous: '{from}' does not lead to '{to}'")]
    NonContiguousRoute {
        at: Locus,
        vehicle: String,
        from: String,
        to: String,
    },
    #[error("{at}polygon '{id}' has fewer than 3 distinct vertices")]
    DegeneratePolygon { at: Locus, id: String },
    #[error("missing input file {}", path.display())]
    MissingInput { path: PathBuf },
    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),
    #[error("I/O error on {}: {source}", path.display())]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// File and line an error points at; renders as `file:line: ` or nothing.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Locus {
    pub file: Option<PathBuf>,
    pub line: Option<u32>,
}

impl std::fmt::Display for Locus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match (&self.file, self.line) {
            (Some(p), Some(l)) => write!(f, "{}:{}: ", p.display(), l),
            (Some(p), None) => write!(f, "{}: ", p.display()),
            (None, Some(l)) => write!(f, "line {l}: "),
            (None, None) => Ok(()),
        }
    }
}

impl Locus {
    pub fn line(line: u32) -> Self {
        Self {
            file: None,
            line: Some(line),
        }
    }
}

impl ScenarioError {
    pub(crate) fn schema(message: impl Into<String>) -> Self {
        ScenarioError::SchemaViolation {
            at: Locus::default(),
            message: message.into(),
        }
    }

    pub(crate) fn dangling(message: impl Into<String>) -> Self {
        ScenarioError::DanglingReference {
            at: Locus::default(),
            message: message.into(),
        }
    }

    fn locus_mut(&mut self) -> Option<&mut Locus> {
        match self {
            ScenarioError::Xml { at, .. }
            | ScenarioError::SchemaViolation { at, .. }
            | ScenarioError::DanglingReference { at, .. }
            | ScenarioError::UnknownVType { at, .. }
            | ScenarioError::UnknownEdge { at, .. }
            | ScenarioError::NonContiguousRoute { at, .. }
            | ScenarioError::DegeneratePolygon { at, .. } => Some(at),
            _ => None,
        }
    }

    pub(crate) fn at_line(mut self, line: u32) -> Self {
        if let Some(at) = self.locus_mut() {
            if at.line.is_none() {
                at.line = Some(line);
            }
        }
        self
    }

    /// Attaches the originating file to located errors that lack one.
    pub fn in_file(mut self, path: &Path) -> Self {
        if let Some(at) = self.locus_mut() {
            at.file.get_or_insert_with(|| path.to_path_buf());
        }
        self
    }
}

/// Run settings from the config file, possibly overridden on the command line.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Seconds per step.
    pub step_length: f64,
    /// End time in seconds; `None` runs until all demand has left the network.
    pub end: Option<f64>,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            step_length: 0.1,
            end: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioBundle {
    pub network: Arc<RoadNetwork>,
    pub programs: Vec<TrafficLightProgram>,
    pub demand: Demand,
    pub polygons: Vec<Polygon>,
    pub rsus: Vec<Rsu>,
    pub config: RunConfig,
    /// Input files that made up the bundle, for the run manifest.
    pub sources: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

impl ScenarioBundle {
    /// Bundle from already-parsed parts; checks the run config.
    pub fn new(
        net: NetFile,
        demand: Demand,
        poly: PolyFile,
        config: RunConfig,
    ) -> Result<Self, ScenarioError> {
        let mut warnings = net.warnings;
        warnings.extend(demand.warnings.iter().cloned());
        warnings.extend(poly.warnings);
        let bundle = Self {
            network: Arc::new(net.network),
            programs: net.programs,
            demand,
            polygons: poly.buildings,
            rsus: poly.rsus,
            config,
            sources: Vec::new(),
            warnings,
        };
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let s = self.config.step_length;
        if !(s > 0.0 && s <= 1.0) {
            return Err(ScenarioError::InvalidConfig(format!(
                "step length {s} outside (0, 1]"
            )));
        }
        if let Some(end) = self.config.end {
            if !(end > 0.0 && end.is_finite()) {
                return Err(ScenarioError::InvalidConfig(format!("end time {end}")));
            }
        }
        Ok(())
    }

    pub fn step_us(&self) -> u32 {
        crate::time::seconds_to_us(self.config.step_length) as u32
    }
}

/// Reads a `.sumocfg` and the files it names, relative to `base`.
pub fn parse_sumocfg(text: &str, base: &Path) -> Result<ScenarioBundle, ScenarioError> {
    let doc = xml::parse(text)?;
    let root = doc.root_element();
    if root.tag_name().name() != "configuration" {
        return Err(ScenarioError::schema(format!(
            "expected <configuration>, found <{}>",
            root.tag_name().name()
        ))
        .at_line(xml::line_of(&doc, root)));
    }
    let setting = |section: &str, key: &str| -> Option<(String, u32)> {
        root.children()
            .filter(|n| n.has_tag_name(section))
            .flat_map(|s| s.children())
            .find(|n| n.has_tag_name(key))
            .and_then(|n| {
                n.attribute("value")
                    .map(|v| (v.to_string(), xml::line_of(&doc, n)))
            })
    };
    let files = |key: &str| -> Vec<PathBuf> {
        setting("input", key)
            .map(|(v, _)| {
                v.split([',', ' '])
                    .filter(|s| !s.is_empty())
                    .map(|s| base.join(s))
                    .collect()
            })
            .unwrap_or_default()
    };
    let number = |section: &str, key: &str| -> Result<Option<f64>, ScenarioError> {
        match setting(section, key) {
            None => Ok(None),
            Some((v, line)) => v.trim().parse::<f64>().map(Some).map_err(|_| {
                ScenarioError::schema(format!("<{key}> value '{v}' is not a number")).at_line(line)
            }),
        }
    };

    let net_files = files("net-file");
    let [net_path] = net_files.as_slice() else {
        return Err(ScenarioError::schema("exactly one net-file is required"));
    };
    let mut sources = vec![net_path.clone()];
    let net = parse_network_file(&read_input(net_path)?).map_err(|e| e.in_file(net_path))?;

    let mut demand = Demand::default();
    for path in files("route-files") {
        let part = parse_routes(&read_input(&path)?, &net.network).map_err(|e| e.in_file(&path))?;
        demand.merge(part).map_err(|e| e.in_file(&path))?;
        sources.push(path);
    }
    let mut poly = PolyFile::default();
    for path in files("additional-files") {
        let part = parse_polygons(&read_input(&path)?).map_err(|e| e.in_file(&path))?;
        poly.buildings.extend(part.buildings);
        poly.rsus.extend(part.rsus);
        poly.warnings.extend(part.warnings);
        sources.push(path);
    }

    let mut config = RunConfig::default();
    if let Some(s) = number("time", "step-length")? {
        config.step_length = s;
    }
    config.end = number("time", "end")?;
    if let Some((v, line)) = setting("random_number", "seed") {
        config.seed = v.trim().parse::<u64>().map_err(|_| {
            ScenarioError::schema(format!("<seed> value '{v}' is not an unsigned integer"))
                .at_line(line)
        })?;
    }

    let mut bundle = ScenarioBundle::new(net, demand, poly, config)?;
    bundle.sources = sources;
    Ok(bundle)
}

/// Reads and parses a `.sumocfg` from disk.
pub fn load_sumocfg(path: &Path) -> Result<ScenarioBundle, ScenarioError> {
    let text = read_input(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut bundle = parse_sumocfg(&text, base).map_err(|e| e.in_file(path))?;
    bundle.sources.insert(0, path.to_path_buf());
    Ok(bundle)
}

fn read_input(path: &Path) -> Result<String, ScenarioError> {
    match std::fs::read_to_string(path) {
        Ok(s) => Ok(s),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(ScenarioError::MissingInput {
            path: path.to_path_buf(),
        }),
        Err(source) => Err(ScenarioError::IoFailure {
            path: path.to_path_buf(),
            source,
        }),
    }
}
