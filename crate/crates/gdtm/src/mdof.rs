//! Ground-truth generator for spring-mass-damper chain systems.
//!
//! Assembles M, C, K from per-spring parameters, synthesizes single-node
//! excitations and integrates M*a + C*v + K*u = F(t) with the implicit
//! Newmark scheme. The kinematic update used by the solver is shared with
//! the surrogate rollout so both sides integrate accelerations identically.

use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// A chain of lumped masses joined by springs and viscous dampers.
///
/// Springs and dampers share one ordering: element 0 is the ground
/// attachment when `grounded`, element s joins vertices (s-1, s) otherwise
/// counting from the support upward.
#[derive(Debug, Clone)]
pub struct MdofSystem {
    masses: Vec<f64>,
    spring_stiffnesses: Vec<f64>,
    damper_coefficients: Vec<f64>,
    grounded: bool,
}

impl MdofSystem {
    pub fn new(
        masses: Vec<f64>,
        spring_stiffnesses: Vec<f64>,
        damper_coefficients: Vec<f64>,
        grounded: bool,
    ) -> Result<Self> {
        let v = masses.len();
        if v == 0 {
            return Err(Error::InvalidSize("system needs at least one mass".into()));
        }
        let expected_springs = if grounded { v } else { v - 1 };
        if spring_stiffnesses.len() != expected_springs {
            return Err(Error::InvalidSize(format!(
                "{} vertices ({}grounded) need {} springs, got {}",
                v,
                if grounded { "" } else { "un" },
                expected_springs,
                spring_stiffnesses.len()
            )));
        }
        if damper_coefficients.len() != expected_springs {
            return Err(Error::InvalidSize(format!(
                "damper count {} does not match spring count {}",
                damper_coefficients.len(),
                expected_springs
            )));
        }
        if masses.iter().any(|m| !m.is_finite() || *m <= 0.0) {
            return Err(Error::InvalidParameter("masses must be positive".into()));
        }
        if spring_stiffnesses.iter().any(|k| !k.is_finite() || *k < 0.0) {
            return Err(Error::InvalidParameter("stiffnesses must be non-negative".into()));
        }
        if !spring_stiffnesses.iter().any(|k| *k > 0.0) {
            return Err(Error::InvalidParameter("at least one spring must be stiff".into()));
        }
        if damper_coefficients.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::InvalidParameter("damping must be non-negative".into()));
        }
        Ok(MdofSystem { masses, spring_stiffnesses, damper_coefficients, grounded })
    }

    /// Uniform chain: every mass, stiffness and damping identical.
    pub fn uniform_chain(
        n: usize,
        mass: f64,
        stiffness: f64,
        damping: f64,
        grounded: bool,
    ) -> Result<Self> {
        let springs = if grounded { n } else { n.saturating_sub(1) };
        Self::new(vec![mass; n], vec![stiffness; springs], vec![damping; springs], grounded)
    }

    /// New system with per-vertex mass factors and per-spring stiffness and
    /// damping factors applied.
    pub fn with_scaled_parameters(
        &self,
        stiffness_factors: &[f64],
        mass_factors: &[f64],
        damping_factors: &[f64],
    ) -> Result<Self> {
        if mass_factors.len() != self.masses.len()
            || stiffness_factors.len() != self.spring_stiffnesses.len()
            || damping_factors.len() != self.damper_coefficients.len()
        {
            return Err(Error::ShapeMismatch("scale factor counts do not match system".into()));
        }
        Self::new(
            self.masses.iter().zip(mass_factors).map(|(m, f)| m * f).collect(),
            self.spring_stiffnesses.iter().zip(stiffness_factors).map(|(k, f)| k * f).collect(),
            self.damper_coefficients.iter().zip(damping_factors).map(|(c, f)| c * f).collect(),
            self.grounded,
        )
    }

    pub fn vertex_count(&self) -> usize {
        self.masses.len()
    }

    pub fn grounded(&self) -> bool {
        self.grounded
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn spring_stiffnesses(&self) -> &[f64] {
        &self.spring_stiffnesses
    }

    pub fn damper_coefficients(&self) -> &[f64] {
        &self.damper_coefficients
    }

    /// Dense (M, C, K): M diagonal, C and K tridiagonal from free-body
    /// assembly of the chain.
    pub fn assemble_matrices(&self) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let v = self.vertex_count();
        let m = DMatrix::from_diagonal(&DVector::from_vec(self.masses.clone()));
        let mut c = DMatrix::zeros(v, v);
        let mut k = DMatrix::zeros(v, v);
        let offset = if self.grounded { 1 } else { 0 };
        if self.grounded {
            k[(0, 0)] += self.spring_stiffnesses[0];
            c[(0, 0)] += self.damper_coefficients[0];
        }
        for s in 0..self.spring_stiffnesses.len() - offset {
            let (i, j) = (s, s + 1);
            let ks = self.spring_stiffnesses[s + offset];
            let cs = self.damper_coefficients[s + offset];
            k[(i, i)] += ks;
            k[(j, j)] += ks;
            k[(i, j)] -= ks;
            k[(j, i)] -= ks;
            c[(i, i)] += cs;
            c[(j, j)] += cs;
            c[(i, j)] -= cs;
            c[(j, i)] -= cs;
        }
        (m, c, k)
    }
}

/// The three single-node excitation shapes used to drive episodes.
#[derive(Debug, Clone, PartialEq)]
pub enum ExcitationKind {
    /// Constant amplitude for the first `duration_steps` samples.
    Impulse { duration_steps: usize },
    /// amplitude * sin(2 pi f t) for the whole episode.
    Harmonic { frequency_hz: f64 },
    /// Zero-mean Gaussian with standard deviation equal to the amplitude.
    Random { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExcitationSpec {
    pub kind: ExcitationKind,
    pub target_vertex: usize,
    pub amplitude: f64,
}

impl ExcitationSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.amplitude.is_finite() {
            return Err(Error::InvalidParameter("excitation amplitude must be finite".into()));
        }
        match &self.kind {
            ExcitationKind::Impulse { duration_steps } => {
                if *duration_steps == 0 {
                    return Err(Error::InvalidParameter("impulse needs duration_steps >= 1".into()));
                }
            }
            ExcitationKind::Harmonic { frequency_hz } => {
                if !frequency_hz.is_finite() || *frequency_hz <= 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "harmonic frequency must be positive, got {frequency_hz}"
                    )));
                }
            }
            ExcitationKind::Random { .. } => {}
        }
        Ok(())
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            ExcitationKind::Impulse { .. } => "impulse",
            ExcitationKind::Harmonic { .. } => "harmonic",
            ExcitationKind::Random { .. } => "random",
        }
    }
}

/// Time discretization and Newmark parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub dt: f64,
    pub steps: usize,
    pub beta: f64,
    pub gamma: f64,
}

impl SolverConfig {
    pub fn new(dt: f64, steps: usize, beta: f64, gamma: f64) -> Result<Self> {
        if !dt.is_finite() || dt <= 0.0 {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        if steps == 0 {
            return Err(Error::InvalidSize("need at least one step".into()));
        }
        if gamma < 0.5 {
            return Err(Error::InvalidParameter(format!("gamma must be >= 0.5, got {gamma}")));
        }
        if beta < 0.25 {
            return Err(Error::InvalidParameter(format!("beta must be >= 0.25, got {beta}")));
        }
        Ok(SolverConfig { dt, steps, beta, gamma })
    }

    /// 100 Hz sampling over 50 s with the average-acceleration scheme.
    pub fn default_sampling() -> Self {
        SolverConfig { dt: 0.01, steps: 5000, beta: 0.25, gamma: 0.5 }
    }
}

/// Time-aligned per-vertex series for one simulation run. All four matrices
/// are T x V.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub dt: f64,
    pub excitation: DMatrix<f64>,
    pub acceleration: DMatrix<f64>,
    pub velocity: DMatrix<f64>,
    pub displacement: DMatrix<f64>,
}

pub const EPISODE_CSV_HEADER: &str = "step,time_s,vertex,excitation_N,acc_mps2,vel_mps,disp_m";

impl EpisodeRecord {
    pub fn new(
        dt: f64,
        excitation: DMatrix<f64>,
        acceleration: DMatrix<f64>,
        velocity: DMatrix<f64>,
        displacement: DMatrix<f64>,
    ) -> Result<Self> {
        let shape = excitation.shape();
        for (name, m) in [
            ("acceleration", &acceleration),
            ("velocity", &velocity),
            ("displacement", &displacement),
        ] {
            if m.shape() != shape {
                return Err(Error::ShapeMismatch(format!(
                    "{name} is {:?} but excitation is {:?}",
                    m.shape(),
                    shape
                )));
            }
        }
        for m in [&excitation, &acceleration, &velocity, &displacement] {
            if m.iter().any(|x| !x.is_finite()) {
                return Err(Error::Numerical("episode contains non-finite values".into()));
            }
        }
        Ok(EpisodeRecord { dt, excitation, acceleration, velocity, displacement })
    }

    pub fn steps(&self) -> usize {
        self.excitation.nrows()
    }

    pub fn vertex_count(&self) -> usize {
        self.excitation.ncols()
    }

    /// Long-format CSV, one row per (step, vertex), 17 significant digits so
    /// values survive a text round trip exactly.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{EPISODE_CSV_HEADER}")?;
        for t in 0..self.steps() {
            let time = t as f64 * self.dt;
            for v in 0..self.vertex_count() {
                writeln!(
                    w,
                    "{},{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e}",
                    t,
                    time,
                    v,
                    self.excitation[(t, v)],
                    self.acceleration[(t, v)],
                    self.velocity[(t, v)],
                    self.displacement[(t, v)]
                )?;
            }
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut buf = std::io::BufWriter::new(file);
        self.write_csv(&mut buf)?;
        buf.flush()?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty episode file".into()))??;
        if header.trim() != EPISODE_CSV_HEADER {
            return Err(Error::Parse(format!(
                "episode header must be {EPISODE_CSV_HEADER:?}, got {:?}",
                header.trim()
            )));
        }
        let mut rows: Vec<(usize, usize, f64, [f64; 4])> = Vec::new();
        let mut max_step = 0usize;
        let mut max_vertex = 0usize;
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 7 {
                return Err(Error::Parse(format!(
                    "line {}: expected 7 fields, got {}",
                    lineno + 2,
                    parts.len()
                )));
            }
            let step: usize = parts[0]
                .parse()
                .map_err(|e| Error::Parse(format!("line {}: bad step: {e}", lineno + 2)))?;
            let vertex: usize = parts[2]
                .parse()
                .map_err(|e| Error::Parse(format!("line {}: bad vertex: {e}", lineno + 2)))?;
            let mut vals = [0.0; 5];
            for (k, idx) in [1usize, 3, 4, 5, 6].iter().enumerate() {
                vals[k] = parts[*idx].parse().map_err(|e| {
                    Error::Parse(format!("line {}: bad float field {}: {e}", lineno + 2, idx))
                })?;
            }
            max_step = max_step.max(step);
            max_vertex = max_vertex.max(vertex);
            rows.push((step, vertex, vals[0], [vals[1], vals[2], vals[3], vals[4]]));
        }
        if rows.is_empty() {
            return Err(Error::Parse("episode file has no data rows".into()));
        }
        let steps = max_step + 1;
        let vertices = max_vertex + 1;
        if rows.len() != steps * vertices {
            return Err(Error::Parse(format!(
                "episode file has {} rows, expected {} ({} steps x {} vertices)",
                rows.len(),
                steps * vertices,
                steps,
                vertices
            )));
        }
        let mut dt = 0.0;
        let mut exc = DMatrix::zeros(steps, vertices);
        let mut acc = DMatrix::zeros(steps, vertices);
        let mut vel = DMatrix::zeros(steps, vertices);
        let mut disp = DMatrix::zeros(steps, vertices);
        for (step, vertex, time, vals) in rows {
            if step == 1 {
                dt = time;
            }
            exc[(step, vertex)] = vals[0];
            acc[(step, vertex)] = vals[1];
            vel[(step, vertex)] = vals[2];
            disp[(step, vertex)] = vals[3];
        }
        if steps > 1 && dt <= 0.0 {
            return Err(Error::Parse("episode file has non-positive time step".into()));
        }
        if steps == 1 {
            dt = 1.0;
        }
        EpisodeRecord::new(dt, exc, acc, vel, disp)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}

/// T x V excitation matrix with a single driven column.
pub fn generate_excitation(
    spec: &ExcitationSpec,
    config: &SolverConfig,
    vertex_count: usize,
) -> Result<DMatrix<f64>> {
    spec.validate()?;
    if spec.target_vertex >= vertex_count {
        return Err(Error::IndexOutOfRange(format!(
            "target vertex {} outside 0..{}",
            spec.target_vertex, vertex_count
        )));
    }
    let mut f = DMatrix::zeros(config.steps, vertex_count);
    match &spec.kind {
        ExcitationKind::Impulse { duration_steps } => {
            for t in 0..(*duration_steps).min(config.steps) {
                f[(t, spec.target_vertex)] = spec.amplitude;
            }
        }
        ExcitationKind::Harmonic { frequency_hz } => {
            let omega = 2.0 * std::f64::consts::PI * frequency_hz;
            for t in 0..config.steps {
                f[(t, spec.target_vertex)] = spec.amplitude * (omega * t as f64 * config.dt).sin();
            }
        }
        ExcitationKind::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let normal = Normal::new(0.0, spec.amplitude.abs()).map_err(|e| {
                Error::InvalidParameter(format!("bad random excitation amplitude: {e}"))
            })?;
            for t in 0..config.steps {
                f[(t, spec.target_vertex)] = normal.sample(&mut rng);
            }
        }
    }
    Ok(f)
}

/// One application of the Newmark kinematic update.
///
/// u1 = u + dt*v + dt^2/2 * ((1-2b) a0 + 2b a1)
/// v1 = v + dt * ((1-g) a0 + g a1)
pub fn kinematic_update(
    u: &DVector<f64>,
    v: &DVector<f64>,
    a0: &DVector<f64>,
    a1: &DVector<f64>,
    dt: f64,
    beta: f64,
    gamma: f64,
) -> (DVector<f64>, DVector<f64>) {
    let dt2 = dt * dt;
    let u1 = u + v * dt + a0 * (dt2 * 0.5 * (1.0 - 2.0 * beta)) + a1 * (dt2 * beta);
    let v1 = v + a0 * (dt * (1.0 - gamma)) + a1 * (dt * gamma);
    (u1, v1)
}

/// Integrates an acceleration series from zero initial state by repeated
/// kinematic updates; returns (velocity, displacement), both T x V.
pub fn integrate_accelerations(
    acc: &DMatrix<f64>,
    config: &SolverConfig,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let (t, nv) = acc.shape();
    let mut vel = DMatrix::zeros(t, nv);
    let mut disp = DMatrix::zeros(t, nv);
    let mut u = DVector::zeros(nv);
    let mut v = DVector::zeros(nv);
    for n in 0..t.saturating_sub(1) {
        let a0 = acc.row(n).transpose();
        let a1 = acc.row(n + 1).transpose();
        let (u1, v1) = kinematic_update(&u, &v, &a0, &a1, config.dt, config.beta, config.gamma);
        u = u1;
        v = v1;
        disp.row_mut(n + 1).copy_from(&u.transpose());
        vel.row_mut(n + 1).copy_from(&v.transpose());
    }
    (vel, disp)
}

/// Implicit Newmark solution of M a + C v + K u = F from zero initial state.
pub fn newmark_solve(
    system: &MdofSystem,
    excitation: &DMatrix<f64>,
    config: &SolverConfig,
) -> Result<EpisodeRecord> {
    let nv = system.vertex_count();
    newmark_solve_with_state(
        system,
        excitation,
        config,
        &DVector::zeros(nv),
        &DVector::zeros(nv),
    )
}

pub fn newmark_solve_with_state(
    system: &MdofSystem,
    excitation: &DMatrix<f64>,
    config: &SolverConfig,
    initial_displacement: &DVector<f64>,
    initial_velocity: &DVector<f64>,
) -> Result<EpisodeRecord> {
    let nv = system.vertex_count();
    if excitation.ncols() != nv {
        return Err(Error::ShapeMismatch(format!(
            "excitation has {} columns for a {}-vertex system",
            excitation.ncols(),
            nv
        )));
    }
    if excitation.nrows() != config.steps {
        return Err(Error::ShapeMismatch(format!(
            "excitation has {} rows but config.steps is {}",
            excitation.nrows(),
            config.steps
        )));
    }
    if initial_displacement.len() != nv || initial_velocity.len() != nv {
        return Err(Error::ShapeMismatch("initial state length must match vertex count".into()));
    }
    let (m, c, k) = system.assemble_matrices();
    let steps = config.steps;
    let dt = config.dt;

    let m_lu = m.clone().lu();
    let mut u = initial_displacement.clone();
    let mut v = initial_velocity.clone();
    let f0 = excitation.row(0).transpose();
    let mut a = m_lu
        .solve(&(f0 - &c * &v - &k * &u))
        .ok_or_else(|| Error::Numerical("mass matrix is singular".into()))?;

    let effective = &m + &c * (config.gamma * dt) + &k * (config.beta * dt * dt);
    let eff_lu = effective.lu();

    let mut acc = DMatrix::zeros(steps, nv);
    let mut vel = DMatrix::zeros(steps, nv);
    let mut disp = DMatrix::zeros(steps, nv);
    acc.row_mut(0).copy_from(&a.transpose());
    vel.row_mut(0).copy_from(&v.transpose());
    disp.row_mut(0).copy_from(&u.transpose());

    for n in 0..steps - 1 {
        let u_pred = &u + &v * dt + &a * (dt * dt * (0.5 - config.beta));
        let v_pred = &v + &a * (dt * (1.0 - config.gamma));
        let f_next = excitation.row(n + 1).transpose();
        let rhs = f_next - &c * &v_pred - &k * &u_pred;
        let a_next = eff_lu
            .solve(&rhs)
            .ok_or_else(|| Error::Numerical("effective matrix is singular".into()))?;
        let (u_next, v_next) =
            kinematic_update(&u, &v, &a, &a_next, dt, config.beta, config.gamma);
        u = u_next;
        v = v_next;
        a = a_next;
        acc.row_mut(n + 1).copy_from(&a.transpose());
        vel.row_mut(n + 1).copy_from(&v.transpose());
        disp.row_mut(n + 1).copy_from(&u.transpose());
    }
    EpisodeRecord::new(dt, excitation.clone(), acc, vel, disp)
}
