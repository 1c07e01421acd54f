//! Run reports and artifact paths.

use std::fs;
use std::path::{Path, PathBuf};

use dnls::{EvolutionConfig, ModelConfig, MultiphaseConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Version of both the JSON report and its CSV row. Columns are only ever
/// appended within a version.
pub const REPORT_SCHEMA: u32 = 1;

/// Everything needed to repeat a segmentation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub input: PathBuf,
    pub truth: Option<PathBuf>,
    pub model: ModelConfig,
    pub evolution: EvolutionConfig,
    /// Present for multiphase runs.
    pub multiphase: Option<MultiphaseConfig>,
    /// Worker threads; 0 lets rayon decide.
    pub threads: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub iterations: usize,
    /// Seconds.
    pub wall_time: f64,
    pub final_energy: f64,
    pub converged: bool,
    /// Mean DICE over ground-truth regions; the foreground DICE for two-phase runs.
    pub dice: Option<f64>,
    pub per_region_dice: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: u32,
    pub command: Vec<String>,
    pub subcommand: String,
    pub config: RunConfig,
    pub metrics: RunMetrics,
    pub warnings: Vec<String>,
    pub artifacts: Vec<PathBuf>,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    schema: u32,
    subcommand: &'a str,
    input: String,
    regions: usize,
    n_polytopes: usize,
    m_halfspaces: usize,
    iterations: usize,
    wall_time_s: f64,
    final_energy: f64,
    dice: Option<f64>,
    converged: bool,
    command: String,
}

impl RunReport {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Header plus a single row.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.serialize(CsvRow {
            schema: REPORT_SCHEMA,
            subcommand: &self.subcommand,
            input: self.config.input.display().to_string(),
            regions: self.config.multiphase.as_ref().map_or(2, |m| m.n_regions),
            n_polytopes: self.config.model.n_polytopes,
            m_halfspaces: self.config.model.m_halfspaces,
            iterations: self.metrics.iterations,
            wall_time_s: self.metrics.wall_time,
            final_energy: self.metrics.final_energy,
            dice: self.metrics.dice,
            converged: self.metrics.converged,
            command: self.command.join(" "),
        })
        .expect("row serializes");
        String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8")
    }
}

/// Artifact paths `<prefix>.<name>`; records each one it hands out.
pub struct Artifacts {
    prefix: PathBuf,
    pub written: Vec<PathBuf>,
}

impl Artifacts {
    pub fn new(prefix: &Path) -> Result<Self, CliError> {
        if prefix.as_os_str().is_empty() || prefix.file_name().is_none() {
            return Err(CliError::Usage(format!(
                "--out needs a file prefix, got {:?}",
                prefix.display().to_string()
            )));
        }
        if let Some(parent) = prefix.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        Ok(Self {
            prefix: prefix.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&mut self, name: &str) -> PathBuf {
        let mut s = self.prefix.clone().into_os_string();
        s.push(".");
        s.push(name);
        let p = PathBuf::from(s);
        self.written.push(p.clone());
        p
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf, CliError> {
        let p = self.path(name);
        fs::write(&p, contents).map_err(|e| CliError::io(&p, e))?;
        Ok(p)
    }
}

/// `iteration,energy` rows.
pub fn energy_csv(trace: &[f64]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["schema", "iteration", "energy"]).expect("header");
    for (t, e) in trace.iter().enumerate() {
        w.write_record([REPORT_SCHEMA.to_string(), t.to_string(), format!("{e:.9e}")])
            .expect("row");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8")
}
