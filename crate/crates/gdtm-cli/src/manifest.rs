//! Dataset manifest: what was generated, from which seeds, into which files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use gdtm::error::{Error, Result};
use gdtm::mdof::{ExcitationKind, ExcitationSpec, MdofSystem, SolverConfig};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SystemSection {
    pub dof: usize,
    pub masses_kg: Vec<f64>,
    pub spring_stiffnesses_n_per_m: Vec<f64>,
    pub damper_coefficients_ns_per_m: Vec<f64>,
    pub spring_types: Vec<usize>,
    pub grounded: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SolverSection {
    pub dt_s: f64,
    pub steps: usize,
    pub beta: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EpisodeEntry {
    pub path: String,
    pub kind: String,
    pub target_vertex: usize,
    pub amplitude_n: f64,
    pub frequency_hz: Option<f64>,
    pub duration_steps: Option<usize>,
    pub noise_seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Manifest {
    pub schema_version: u32,
    pub master_seed: u64,
    pub system: SystemSection,
    pub solver: SolverSection,
    pub episodes: Vec<EpisodeEntry>,
}

impl Manifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Parse(format!("manifest serialization failed: {e}")))?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("malformed manifest: {e}")))
    }

    pub fn mdof_system(&self) -> Result<MdofSystem> {
        MdofSystem::new(
            self.system.masses_kg.clone(),
            self.system.spring_stiffnesses_n_per_m.clone(),
            self.system.damper_coefficients_ns_per_m.clone(),
            self.system.grounded,
        )
    }

    pub fn solver_config(&self) -> Result<SolverConfig> {
        SolverConfig::new(self.solver.dt_s, self.solver.steps, self.solver.beta, self.solver.gamma)
    }

    /// Episode paths resolved relative to the manifest location.
    pub fn episode_paths(&self, manifest_path: &Path) -> Vec<PathBuf> {
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        self.episodes.iter().map(|e| base.join(&e.path)).collect()
    }

    /// Stratum label per episode (kind index) for the stratified split.
    pub fn strata(&self) -> Vec<usize> {
        self.episodes
            .iter()
            .map(|e| match e.kind.as_str() {
                "impulse" => 0,
                "harmonic" => 1,
                _ => 2,
            })
            .collect()
    }
}

impl EpisodeEntry {
    pub fn excitation_spec(&self) -> Result<ExcitationSpec> {
        let kind = match self.kind.as_str() {
            "impulse" => ExcitationKind::Impulse {
                duration_steps: self.duration_steps.ok_or_else(|| {
                    Error::Parse("impulse manifest entry is missing duration_steps".into())
                })?,
            },
            "harmonic" => ExcitationKind::Harmonic {
                frequency_hz: self.frequency_hz.ok_or_else(|| {
                    Error::Parse("harmonic manifest entry is missing frequency_hz".into())
                })?,
            },
            "random" => ExcitationKind::Random {
                seed: self.noise_seed.ok_or_else(|| {
                    Error::Parse("random manifest entry is missing noise_seed".into())
                })?,
            },
            other => return Err(Error::Parse(format!("unknown excitation kind {other:?}"))),
        };
        Ok(ExcitationSpec { kind, target_vertex: self.target_vertex, amplitude: self.amplitude_n })
    }
}
