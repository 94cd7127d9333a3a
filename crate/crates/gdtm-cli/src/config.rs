//! Experiment configuration: a sectioned key=value text file whose defaults
//! reproduce the reference numerical study without any edits.

use std::collections::BTreeMap;
use std::path::Path;

use gdtm::error::{Error, Result};
use gdtm::mdof::{MdofSystem, SolverConfig};
use gdtm::neural::AdamConfig;
use gdtm::surrogate::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub dof: usize,
    pub mass_kg: f64,
    /// One stiffness per spring type (index = type label).
    pub stiffness_n_per_m: Vec<f64>,
    /// One damping coefficient per spring type.
    pub damping_ns_per_m: Vec<f64>,
    pub grounded: bool,
    /// Spring types cycle through this list from the support upward.
    pub spring_type_cycle: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExcitationConfig {
    pub episodes_per_kind: usize,
    pub impulse_amplitude_n: f64,
    pub impulse_duration_steps: usize,
    pub harmonic_amplitude_n: f64,
    pub harmonic_freq_min_hz: f64,
    pub harmonic_freq_max_hz: f64,
    pub random_std_n: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSection {
    pub sampling_hz: f64,
    pub duration_s: f64,
    pub beta: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub kind: String,
    pub hidden_dims: Vec<usize>,
    pub gat_width: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub excitation: ExcitationConfig,
    pub solver: SolverSection,
    pub training: TrainConfig,
    pub model: ModelConfig,
    /// Master seed for dataset generation.
    pub generate_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            system: SystemConfig {
                dof: 10,
                mass_kg: 2000.0,
                stiffness_n_per_m: vec![2.4e5],
                damping_ns_per_m: vec![2500.0],
                grounded: true,
                spring_type_cycle: vec![0],
            },
            excitation: ExcitationConfig {
                episodes_per_kind: 10,
                impulse_amplitude_n: 1000.0,
                impulse_duration_steps: 1,
                // matches the impulse amplitude so training inputs span the
                // full normalized excitation range the rollout will see
                harmonic_amplitude_n: 1000.0,
                harmonic_freq_min_hz: 0.5,
                harmonic_freq_max_hz: 5.0,
                random_std_n: 200.0,
            },
            solver: SolverSection { sampling_hz: 100.0, duration_s: 50.0, beta: 0.25, gamma: 0.5 },
            training: TrainConfig::default(),
            model: ModelConfig { kind: "homogeneous".into(), hidden_dims: vec![16, 64], gat_width: 8 },
            generate_seed: 46,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_text(&text)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut config = ExperimentConfig::default();
        let mut section = String::new();
        let mut seen: BTreeMap<String, String> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Parse(format!("config line {}: expected key = value", lineno + 1))
            })?;
            let full_key = format!("{section}.{}", key.trim());
            seen.insert(full_key, value.trim().to_string());
        }
        for (key, value) in seen {
            config.apply(&key, &value).map_err(|e| {
                Error::Parse(format!("config key {key:?} = {value:?}: {e}"))
            })?;
        }
        config.validate()?;
        Ok(config)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let parse_f64 = |v: &str| -> Result<f64> {
            v.parse().map_err(|e| Error::Parse(format!("bad number: {e}")))
        };
        let parse_usize = |v: &str| -> Result<usize> {
            v.parse().map_err(|e| Error::Parse(format!("bad integer: {e}")))
        };
        let parse_u64 = |v: &str| -> Result<u64> {
            v.parse().map_err(|e| Error::Parse(format!("bad integer: {e}")))
        };
        let parse_bool = |v: &str| -> Result<bool> {
            match v {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                other => Err(Error::Parse(format!("bad flag {other:?}"))),
            }
        };
        let parse_f64_list = |v: &str| -> Result<Vec<f64>> {
            v.split(',').map(|p| parse_f64(p.trim())).collect()
        };
        let parse_usize_list = |v: &str| -> Result<Vec<usize>> {
            v.split(',').map(|p| parse_usize(p.trim())).collect()
        };
        match key {
            "system.dof" => self.system.dof = parse_usize(value)?,
            "system.mass_kg" => self.system.mass_kg = parse_f64(value)?,
            "system.stiffness_n_per_m" => self.system.stiffness_n_per_m = parse_f64_list(value)?,
            "system.damping_ns_per_m" => self.system.damping_ns_per_m = parse_f64_list(value)?,
            "system.grounded" => self.system.grounded = parse_bool(value)?,
            "system.spring_type_cycle" => self.system.spring_type_cycle = parse_usize_list(value)?,
            "excitation.episodes_per_kind" => {
                self.excitation.episodes_per_kind = parse_usize(value)?
            }
            "excitation.impulse_amplitude_n" => {
                self.excitation.impulse_amplitude_n = parse_f64(value)?
            }
            "excitation.impulse_duration_steps" => {
                self.excitation.impulse_duration_steps = parse_usize(value)?
            }
            "excitation.harmonic_amplitude_n" => {
                self.excitation.harmonic_amplitude_n = parse_f64(value)?
            }
            "excitation.harmonic_freq_min_hz" => {
                self.excitation.harmonic_freq_min_hz = parse_f64(value)?
            }
            "excitation.harmonic_freq_max_hz" => {
                self.excitation.harmonic_freq_max_hz = parse_f64(value)?
            }
            "excitation.random_std_n" => self.excitation.random_std_n = parse_f64(value)?,
            "excitation.seed" => self.generate_seed = parse_u64(value)?,
            "solver.sampling_hz" => self.solver.sampling_hz = parse_f64(value)?,
            "solver.duration_s" => self.solver.duration_s = parse_f64(value)?,
            "solver.beta" => self.solver.beta = parse_f64(value)?,
            "solver.gamma" => self.solver.gamma = parse_f64(value)?,
            "training.epochs" => self.training.epochs = parse_usize(value)?,
            "training.batch_size" => self.training.batch_size = parse_usize(value)?,
            "training.seed" => self.training.seed = parse_u64(value)?,
            "training.train_fraction" => self.training.train_fraction = parse_f64(value)?,
            "training.noise_std" => self.training.noise_std = parse_f64(value)?,
            "training.patience" => self.training.patience = parse_usize(value)?,
            "training.learning_rate" => {
                self.training.adam =
                    AdamConfig { learning_rate: parse_f64(value)?, ..self.training.adam }
            }
            "model.kind" => self.model.kind = value.to_string(),
            "model.hidden_dims" => self.model.hidden_dims = parse_usize_list(value)?,
            "model.gat_width" => self.model.gat_width = parse_usize(value)?,
            other => return Err(Error::Parse(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.solver.sampling_hz <= 0.0 {
            return Err(Error::InvalidParameter("sampling_hz must be positive".into()));
        }
        if self.solver.duration_s <= 0.0 {
            return Err(Error::InvalidParameter("duration_s must be positive".into()));
        }
        if self.system.dof == 0 {
            return Err(Error::InvalidSize("system.dof must be at least 1".into()));
        }
        if self.system.spring_type_cycle.is_empty() {
            return Err(Error::InvalidParameter("spring_type_cycle must not be empty".into()));
        }
        let type_count = self.type_count();
        if self.system.stiffness_n_per_m.len() != type_count
            || self.system.damping_ns_per_m.len() != type_count
        {
            return Err(Error::InvalidParameter(format!(
                "expected {type_count} stiffness/damping values (one per spring type), got {}/{}",
                self.system.stiffness_n_per_m.len(),
                self.system.damping_ns_per_m.len()
            )));
        }
        match self.model.kind.as_str() {
            "homogeneous" | "heterogeneous" | "gat" => {}
            other => {
                return Err(Error::InvalidParameter(format!(
                    "model.kind must be homogeneous, heterogeneous or gat, got {other:?}"
                )))
            }
        }
        if self.excitation.harmonic_freq_min_hz <= 0.0
            || self.excitation.harmonic_freq_max_hz < self.excitation.harmonic_freq_min_hz
        {
            return Err(Error::InvalidParameter("bad harmonic frequency range".into()));
        }
        Ok(())
    }

    pub fn type_count(&self) -> usize {
        self.system.spring_type_cycle.iter().map(|t| t + 1).max().unwrap_or(1)
    }

    pub fn solver_config(&self) -> Result<SolverConfig> {
        let dt = 1.0 / self.solver.sampling_hz;
        let steps = (self.solver.duration_s * self.solver.sampling_hz).round() as usize;
        SolverConfig::new(dt, steps.max(1), self.solver.beta, self.solver.gamma)
    }

    /// Spring types along the chain in oracle ordering (ground spring first
    /// when grounded).
    pub fn spring_types(&self) -> Vec<usize> {
        let springs = if self.system.grounded { self.system.dof } else { self.system.dof - 1 };
        (0..springs)
            .map(|s| self.system.spring_type_cycle[s % self.system.spring_type_cycle.len()])
            .collect()
    }

    pub fn mdof_system(&self) -> Result<MdofSystem> {
        let types = self.spring_types();
        let stiffness: Vec<f64> =
            types.iter().map(|t| self.system.stiffness_n_per_m[*t]).collect();
        let damping: Vec<f64> = types.iter().map(|t| self.system.damping_ns_per_m[*t]).collect();
        MdofSystem::new(
            vec![self.system.mass_kg; self.system.dof],
            stiffness,
            damping,
            self.system.grounded,
        )
    }
}
