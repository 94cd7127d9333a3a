//! Implementations behind the CLI verbs. Each command reads/writes files and
//! returns a small summary for the binary to print.

use std::io::Write as IoWrite;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gdtm::error::{Error, Result};
use gdtm::graph::{
    build_heterogeneous_adjacency, build_homogeneous_adjacency, scale_edges, AdjacencyKind,
    AdjacencySet, Edge, EdgeScaling, Graph,
};
use gdtm::mdof::{
    generate_excitation, newmark_solve, EpisodeRecord, ExcitationKind, ExcitationSpec,
    MdofSystem, SolverConfig, EPISODE_CSV_HEADER,
};
use gdtm::metrics::{MetricReport, METRIC_CSV_HEADER};
use gdtm::signal::{extract_attention_history, psd, stft, write_psd_csv, EdgeSelector};
use gdtm::surrogate::{
    build_dataset, build_gat_dataset, evaluate_rollout, fit_scalers, rollout, split_episodes,
    train_on_split, Dataset, RolloutOptions, SurrogateKind, SurrogateModel, TrainOutcome,
};

use crate::checkpoint::Checkpoint;
use crate::config::ExperimentConfig;
use crate::manifest::{EpisodeEntry, Manifest, SolverSection, SystemSection};

pub const EXCITATION_CSV_HEADER: &str = "step,time_s,vertex,excitation_N";
pub const ATTENTION_CSV_HEADER: &str = "step,from_vertex,to_vertex,alpha";

const KIND_NAMES: [&str; 3] = ["impulse", "harmonic", "random"];

/// Builds the chain graph described by a manifest system section.
fn manifest_graph(system: &SystemSection) -> Result<Graph> {
    let mut edges = Vec::new();
    let offset = if system.grounded { 1 } else { 0 };
    for s in offset..system.spring_types.len() {
        let (i, j) = (s - offset, s - offset + 1);
        edges.push(Edge::new(i, j, system.spring_types[s], 1.0));
    }
    let grounded = if system.grounded { vec![0] } else { vec![] };
    Graph::new(system.dof, edges, grounded)
}

fn adjacency_for_model(model: &SurrogateModel, graph: &Graph) -> Result<AdjacencySet> {
    let adj = match model.layout.kind {
        AdjacencyKind::Homogeneous => build_homogeneous_adjacency(graph)?,
        AdjacencyKind::Heterogeneous => build_heterogeneous_adjacency(graph)?,
    };
    if adj.matrix_count() != model.layout.matrix_count {
        return Err(Error::Incompatible(format!(
            "checkpoint expects {} adjacency matrices, graph yields {} \
             (edge types differ from the training structure)",
            model.layout.matrix_count,
            adj.matrix_count()
        )));
    }
    Ok(adj)
}

pub struct GenerateSummary {
    pub manifest_path: PathBuf,
    pub episode_count: usize,
    pub steps: usize,
    pub vertices: usize,
}

pub fn cmd_generate(
    config: &ExperimentConfig,
    out_dir: &Path,
    seed_override: Option<u64>,
) -> Result<GenerateSummary> {
    std::fs::create_dir_all(out_dir)?;
    let master_seed = seed_override.unwrap_or(config.generate_seed);
    let system = config.mdof_system()?;
    let solver = config.solver_config()?;
    let dof = config.system.dof;

    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    let mut episodes = Vec::new();
    let mut index = 0usize;
    for kind_name in KIND_NAMES {
        for _ in 0..config.excitation.episodes_per_kind {
            let target_vertex = rng.gen_range(0..dof);
            let (kind, amplitude, frequency_hz, duration_steps, noise_seed) = match kind_name {
                "impulse" => (
                    ExcitationKind::Impulse {
                        duration_steps: config.excitation.impulse_duration_steps,
                    },
                    config.excitation.impulse_amplitude_n,
                    None,
                    Some(config.excitation.impulse_duration_steps),
                    None,
                ),
                "harmonic" => {
                    let f = rng.gen_range(
                        config.excitation.harmonic_freq_min_hz
                            ..config.excitation.harmonic_freq_max_hz,
                    );
                    (
                        ExcitationKind::Harmonic { frequency_hz: f },
                        config.excitation.harmonic_amplitude_n,
                        Some(f),
                        None,
                        None,
                    )
                }
                _ => {
                    let seed: u64 = rng.gen();
                    (
                        ExcitationKind::Random { seed },
                        config.excitation.random_std_n,
                        None,
                        None,
                        Some(seed),
                    )
                }
            };
            let spec = ExcitationSpec { kind, target_vertex, amplitude };
            let excitation = generate_excitation(&spec, &solver, dof)?;
            let record = newmark_solve(&system, &excitation, &solver)?;
            let filename = format!("episode_{index:03}_{kind_name}.csv");
            record.save_csv(&out_dir.join(&filename))?;
            episodes.push(EpisodeEntry {
                path: filename,
                kind: kind_name.to_string(),
                target_vertex,
                amplitude_n: amplitude,
                frequency_hz,
                duration_steps,
                noise_seed,
            });
            index += 1;
        }
    }
    let manifest = Manifest {
        schema_version: 1,
        master_seed,
        system: SystemSection {
            dof,
            masses_kg: system.masses().to_vec(),
            spring_stiffnesses_n_per_m: system.spring_stiffnesses().to_vec(),
            damper_coefficients_ns_per_m: system.damper_coefficients().to_vec(),
            spring_types: config.spring_types(),
            grounded: config.system.grounded,
        },
        solver: SolverSection {
            dt_s: solver.dt,
            steps: solver.steps,
            beta: solver.beta,
            gamma: solver.gamma,
        },
        episodes,
    };
    let manifest_path = out_dir.join("manifest.json");
    manifest.save(&manifest_path)?;
    Ok(GenerateSummary {
        manifest_path,
        episode_count: index,
        steps: solver.steps,
        vertices: dof,
    })
}

pub struct TrainSummary {
    pub checkpoint_path: PathBuf,
    pub history_path: PathBuf,
    pub outcome: TrainOutcome,
    pub parameter_count: usize,
    pub input_dim: usize,
}

pub fn cmd_train(
    config: &ExperimentConfig,
    manifest_path: &Path,
    out_dir: &Path,
) -> Result<TrainSummary> {
    std::fs::create_dir_all(out_dir)?;
    let manifest = Manifest::load(manifest_path)?;
    let solver = manifest.solver_config()?;
    let graph = manifest_graph(&manifest.system)?;

    let mut records = Vec::new();
    for path in manifest.episode_paths(manifest_path) {
        records.push(EpisodeRecord::load_csv(&path)?);
    }
    let ids: Vec<usize> = (0..records.len()).collect();
    let strata = manifest.strata();
    let (train_ids, test_ids) = split_episodes(
        &ids,
        Some(&strata),
        config.training.train_fraction,
        config.training.seed,
    )?;
    let train_records: Vec<EpisodeRecord> =
        train_ids.iter().map(|&i| records[i].clone()).collect();
    let scalers = fit_scalers(&train_records)?;

    let (mut model, data) = match config.model.kind.as_str() {
        "homogeneous" => {
            let adj = build_homogeneous_adjacency(&graph)?;
            let model = SurrogateModel::new_homogeneous(
                &config.model.hidden_dims,
                scalers,
                solver.dt,
                solver.beta,
                solver.gamma,
                config.training.seed,
            )?;
            let samples = build_dataset(&records, &adj, &scalers)?;
            (model, Dataset::Aggregated(samples))
        }
        "heterogeneous" => {
            let adj = build_heterogeneous_adjacency(&graph)?;
            let model = SurrogateModel::new_heterogeneous(
                adj.matrix_count(),
                &config.model.hidden_dims,
                scalers,
                solver.dt,
                solver.beta,
                solver.gamma,
                config.training.seed,
            )?;
            let samples = build_dataset(&records, &adj, &scalers)?;
            (model, Dataset::Aggregated(samples))
        }
        "gat" => {
            let model = SurrogateModel::new_gat(
                &config.model.hidden_dims,
                config.model.gat_width,
                scalers,
                solver.dt,
                solver.beta,
                solver.gamma,
                config.training.seed,
            )?;
            let samples = build_gat_dataset(&records, &scalers)?;
            (model, Dataset::PerVertex { samples, graph: graph.clone() })
        }
        other => return Err(Error::InvalidParameter(format!("unknown model kind {other:?}"))),
    };

    let outcome = train_on_split(&mut model, &data, &test_ids, &config.training)?;

    let checkpoint_path = out_dir.join("checkpoint.json");
    Checkpoint::from_model(&model, config.training.seed).save(&checkpoint_path)?;

    let history_path = out_dir.join("loss_history.csv");
    let mut file = std::fs::File::create(&history_path)?;
    writeln!(file, "epoch,train_loss,test_loss")?;
    for (epoch, loss) in outcome.history.iter().enumerate() {
        writeln!(file, "{},{:.16e},{:.16e}", epoch, loss.train, loss.test)?;
    }

    let split_path = out_dir.join("split.json");
    let split = serde_json::json!({
        "train_episodes": outcome.train_episodes,
        "test_episodes": outcome.test_episodes,
    });
    std::fs::write(&split_path, format!("{}\n", serde_json::to_string_pretty(&split).unwrap()))?;

    let parameter_count = model.parameter_count();
    let input_dim = model.input_dim();
    Ok(TrainSummary {
        checkpoint_path,
        history_path,
        outcome,
        parameter_count,
        input_dim,
    })
}

/// Reads either a full episode CSV or a bare excitation CSV into a T x V
/// excitation matrix plus the file's time step when it has one.
pub fn load_excitation(path: &Path) -> Result<(DMatrix<f64>, Option<f64>)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty excitation file".into()))?;
    if header.trim() == EPISODE_CSV_HEADER {
        let record = EpisodeRecord::read_csv(std::io::Cursor::new(text.as_bytes()))?;
        let dt = if record.steps() > 1 { Some(record.dt) } else { None };
        return Ok((record.excitation, dt));
    }
    if header.trim() != EXCITATION_CSV_HEADER {
        return Err(Error::Parse(format!(
            "excitation header must be {EXCITATION_CSV_HEADER:?} or a full episode header"
        )));
    }
    let mut rows = Vec::new();
    let mut max_step = 0usize;
    let mut max_vertex = 0usize;
    let mut dt = None;
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            return Err(Error::Parse(format!("excitation line {}: need 4 fields", lineno + 2)));
        }
        let step: usize = parts[0]
            .parse()
            .map_err(|e| Error::Parse(format!("line {}: bad step: {e}", lineno + 2)))?;
        let time: f64 = parts[1]
            .parse()
            .map_err(|e| Error::Parse(format!("line {}: bad time: {e}", lineno + 2)))?;
        let vertex: usize = parts[2]
            .parse()
            .map_err(|e| Error::Parse(format!("line {}: bad vertex: {e}", lineno + 2)))?;
        let value: f64 = parts[3]
            .parse()
            .map_err(|e| Error::Parse(format!("line {}: bad value: {e}", lineno + 2)))?;
        if step == 1 {
            dt = Some(time);
        }
        max_step = max_step.max(step);
        max_vertex = max_vertex.max(vertex);
        rows.push((step, vertex, value));
    }
    if rows.is_empty() {
        return Err(Error::Parse("excitation file has no data rows".into()));
    }
    let mut excitation = DMatrix::zeros(max_step + 1, max_vertex + 1);
    for (step, vertex, value) in rows {
        excitation[(step, vertex)] = value;
    }
    Ok((excitation, dt))
}

pub struct RolloutSummary {
    pub out_path: PathBuf,
    pub attention_path: Option<PathBuf>,
    pub steps: usize,
    pub steps_per_second: f64,
}

pub fn cmd_rollout(
    checkpoint_path: &Path,
    graph_path: &Path,
    excitation_path: &Path,
    out_path: &Path,
    capture_attention: bool,
) -> Result<RolloutSummary> {
    let model = Checkpoint::load(checkpoint_path)?.into_model()?;
    let graph = Graph::from_file(graph_path)?;
    let adj = adjacency_for_model(&model, &graph)?;
    let (excitation, file_dt) = load_excitation(excitation_path)?;
    if let Some(dt) = file_dt {
        if (dt - model.dt).abs() > 1e-9 * model.dt.max(1.0) {
            return Err(Error::Incompatible(format!(
                "excitation was sampled at dt = {dt} s but the checkpoint expects {} s",
                model.dt
            )));
        }
    }
    let options = RolloutOptions { capture_attention, ..Default::default() };
    let start = Instant::now();
    let result = rollout(&model, &adj, &excitation, &options)?;
    let elapsed = start.elapsed().as_secs_f64();
    result.episode.save_csv(out_path)?;

    let attention_path = match result.attention {
        Some(captures) => {
            let stem = out_path.file_stem().and_then(|s| s.to_str()).unwrap_or("rollout");
            let path = out_path.with_file_name(format!("{stem}_attention.csv"));
            let mut file = std::fs::File::create(&path)?;
            writeln!(file, "{ATTENTION_CSV_HEADER}")?;
            for (step, alpha) in captures.iter().enumerate() {
                for i in 0..alpha.nrows() {
                    for j in 0..alpha.ncols() {
                        if alpha[(i, j)] != 0.0 {
                            writeln!(file, "{},{},{},{:.16e}", step, i, j, alpha[(i, j)])?;
                        }
                    }
                }
            }
            Some(path)
        }
        None => None,
    };
    Ok(RolloutSummary {
        out_path: out_path.to_path_buf(),
        attention_path,
        steps: excitation.nrows(),
        steps_per_second: excitation.nrows() as f64 / elapsed.max(1e-12),
    })
}

pub fn cmd_eval(
    predicted_path: &Path,
    truth_path: &Path,
    out_path: &Path,
    psd_dir: Option<&Path>,
) -> Result<MetricReport> {
    let predicted = EpisodeRecord::load_csv(predicted_path)?;
    let truth = EpisodeRecord::load_csv(truth_path)?;
    let report = evaluate_rollout(&predicted, &truth)?;
    let mut file = std::fs::File::create(out_path)?;
    writeln!(file, "{METRIC_CSV_HEADER}")?;
    writeln!(file, "{}", report.csv_row())?;

    if let Some(dir) = psd_dir {
        std::fs::create_dir_all(dir)?;
        let fs = 1.0 / truth.dt;
        for v in 0..truth.vertex_count() {
            let truth_series: Vec<f64> = truth.acceleration.column(v).iter().copied().collect();
            let pred_series: Vec<f64> =
                predicted.acceleration.column(v).iter().copied().collect();
            let (freqs, powers) = psd(&truth_series, fs, 256, 0.5)?;
            let f = std::fs::File::create(dir.join(format!("psd_truth_v{v:03}.csv")))?;
            write_psd_csv(std::io::BufWriter::new(f), &freqs, &powers)?;
            let (freqs, powers) = psd(&pred_series, fs, 256, 0.5)?;
            let f = std::fs::File::create(dir.join(format!("psd_predicted_v{v:03}.csv")))?;
            write_psd_csv(std::io::BufWriter::new(f), &freqs, &powers)?;
        }
    }
    Ok(report)
}

#[derive(Debug, Clone)]
pub enum TransferTarget {
    Dof(usize),
    Case(u8),
}

impl TransferTarget {
    pub fn label(&self) -> String {
        match self {
            TransferTarget::Dof(n) => format!("dof_{n:02}"),
            TransferTarget::Case(c) => format!("case_{c}"),
        }
    }
}

/// Pooled metrics of one rollout-vs-truth comparison set.
fn pooled_report(pairs: &[(EpisodeRecord, EpisodeRecord)]) -> Result<MetricReport> {
    let mut truth_flat = Vec::new();
    let mut pred_flat = Vec::new();
    for (pred, truth) in pairs {
        for r in 0..truth.acceleration.nrows() {
            for c in 0..truth.acceleration.ncols() {
                truth_flat.push(truth.acceleration[(r, c)]);
                pred_flat.push(pred.acceleration[(r, c)]);
            }
        }
    }
    MetricReport::from_series(&truth_flat, &pred_flat)
}

/// Draws the evaluation excitations for one transfer target.
fn transfer_specs(
    rng: &mut ChaCha8Rng,
    config: &ExperimentConfig,
    dof: usize,
    episodes_per_kind: usize,
) -> Vec<ExcitationSpec> {
    let mut specs = Vec::new();
    for kind_name in KIND_NAMES {
        for _ in 0..episodes_per_kind {
            let target_vertex = rng.gen_range(0..dof);
            let spec = match kind_name {
                "impulse" => ExcitationSpec {
                    kind: ExcitationKind::Impulse {
                        duration_steps: config.excitation.impulse_duration_steps,
                    },
                    target_vertex,
                    amplitude: config.excitation.impulse_amplitude_n,
                },
                "harmonic" => ExcitationSpec {
                    kind: ExcitationKind::Harmonic {
                        frequency_hz: rng.gen_range(
                            config.excitation.harmonic_freq_min_hz
                                ..config.excitation.harmonic_freq_max_hz,
                        ),
                    },
                    target_vertex,
                    amplitude: config.excitation.harmonic_amplitude_n,
                },
                _ => ExcitationSpec {
                    kind: ExcitationKind::Random { seed: rng.gen() },
                    target_vertex,
                    amplitude: config.excitation.random_std_n,
                },
            };
            specs.push(spec);
        }
    }
    specs
}

fn evaluate_target(
    model: &SurrogateModel,
    system: &MdofSystem,
    adj: &AdjacencySet,
    solver: &SolverConfig,
    specs: &[ExcitationSpec],
) -> Result<MetricReport> {
    let mut pairs = Vec::new();
    for spec in specs {
        let excitation = generate_excitation(spec, solver, system.vertex_count())?;
        let truth = newmark_solve(system, &excitation, solver)?;
        let predicted = rollout(model, adj, &excitation, &RolloutOptions::default())?;
        pairs.push((predicted.episode, truth));
    }
    pooled_report(&pairs)
}

pub fn cmd_transfer(
    checkpoint_path: &Path,
    config: &ExperimentConfig,
    targets: &[TransferTarget],
    episodes_per_kind: usize,
    seed: u64,
    out_dir: &Path,
) -> Result<Vec<(String, MetricReport)>> {
    if targets.is_empty() {
        return Err(Error::InvalidParameter("transfer needs at least one target".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    let model = Checkpoint::load(checkpoint_path)?.into_model()?;
    let solver = config.solver_config()?;
    let base_system = config.mdof_system()?;
    let base_dof = config.system.dof;

    let mut rows = Vec::new();
    for target in targets {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ target_hash(target));
        let report = match target {
            TransferTarget::Dof(dof) => {
                let cycle = &config.system.spring_type_cycle;
                let graph = Graph::chain_with_spring_types(*dof, cycle, config.system.grounded)?;
                let adj = adjacency_for_model(&model, &graph)?;
                let mut scaled_config = config.clone();
                scaled_config.system.dof = *dof;
                let system = scaled_config.mdof_system()?;
                let specs = transfer_specs(&mut rng, config, *dof, episodes_per_kind);
                evaluate_target(&model, &system, &adj, &solver, &specs)?
            }
            TransferTarget::Case(case) => {
                if model.kind != SurrogateKind::Homogeneous {
                    return Err(Error::Incompatible(
                        "parameter-transfer cases are defined for the homogeneous surrogate"
                            .into(),
                    ));
                }
                let graph =
                    Graph::chain_with_spring_types(base_dof, &config.system.spring_type_cycle,
                        config.system.grounded)?;
                let adj = adjacency_for_model(&model, &graph)?;
                let springs = base_system.spring_stiffnesses().len();
                let (system, adj) = match case {
                    0 => (base_system.clone(), adj),
                    1 => {
                        // stiffness x0.8, mass x1.6, damping unchanged; the
                        // single adjacency factor tracks the stiffness/mass
                        // ratio 0.8 / 1.6
                        let system = base_system.with_scaled_parameters(
                            &vec![0.8; springs],
                            &vec![1.6; base_dof],
                            &vec![1.0; springs],
                        )?;
                        (system, scale_edges(&adj, &EdgeScaling::Global(0.5))?)
                    }
                    2 => {
                        let system = base_system.with_scaled_parameters(
                            &vec![0.1; springs],
                            &vec![1.0; base_dof],
                            &vec![0.1; springs],
                        )?;
                        (system, scale_edges(&adj, &EdgeScaling::Global(0.1))?)
                    }
                    3 => {
                        let k_factors: Vec<f64> =
                            (0..springs).map(|_| rng.gen_range(0.5..1.5)).collect();
                        let m_factors: Vec<f64> =
                            (0..base_dof).map(|_| rng.gen_range(0.5..1.5)).collect();
                        let c_factors: Vec<f64> =
                            (0..springs).map(|_| rng.gen_range(0.5..1.5)).collect();
                        let system = base_system.with_scaled_parameters(
                            &k_factors, &m_factors, &c_factors,
                        )?;
                        (system, scale_edges(&adj, &EdgeScaling::PerSpring(k_factors))?)
                    }
                    other => {
                        return Err(Error::InvalidParameter(format!(
                            "unknown CASE label {other}; expected 0-3"
                        )))
                    }
                };
                let specs = transfer_specs(&mut rng, config, base_dof, episodes_per_kind);
                evaluate_target(&model, &system, &adj, &solver, &specs)?
            }
        };
        rows.push((target.label(), report));
    }

    let summary_path = out_dir.join("transfer_summary.csv");
    let mut file = std::fs::File::create(&summary_path)?;
    writeln!(file, "target,{METRIC_CSV_HEADER}")?;
    for (label, report) in &rows {
        writeln!(file, "{label},{}", report.csv_row())?;
    }
    Ok(rows)
}

fn target_hash(target: &TransferTarget) -> u64 {
    match target {
        TransferTarget::Dof(n) => 0x0d0f_0000 ^ (*n as u64),
        TransferTarget::Case(c) => 0xca5e_0000 ^ (*c as u64),
    }
}

pub struct AttentionSummary {
    pub series_paths: Vec<PathBuf>,
    pub spectrogram_paths: Vec<PathBuf>,
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_attention(
    capture_path: &Path,
    graph_path: Option<&Path>,
    selector: &EdgeSelector,
    with_stft: bool,
    window: usize,
    hop: usize,
    fs: f64,
    out_dir: &Path,
) -> Result<AttentionSummary> {
    std::fs::create_dir_all(out_dir)?;
    let captures = load_attention_capture(capture_path)?;
    let graph = match graph_path {
        Some(path) => Graph::from_file(path)?,
        None => graph_from_captures(&captures)?,
    };
    let history = extract_attention_history(&captures, &graph, selector)?;
    let mut series_paths = Vec::new();
    let mut spectrogram_paths = Vec::new();
    for series in &history.series {
        let stem = format!("attention_{:03}_{:03}", series.from, series.to);
        let path = out_dir.join(format!("{stem}.csv"));
        let mut file = std::fs::File::create(&path)?;
        writeln!(file, "step,alpha")?;
        for (step, value) in series.values.iter().enumerate() {
            writeln!(file, "{},{:.16e}", step, value)?;
        }
        series_paths.push(path);
        if with_stft {
            let spec = stft(&series.values, fs, window, hop)?;
            let path = out_dir.join(format!("{stem}_stft.csv"));
            let file = std::fs::File::create(&path)?;
            spec.write_csv(std::io::BufWriter::new(file))?;
            spectrogram_paths.push(path);
        }
    }
    Ok(AttentionSummary { series_paths, spectrogram_paths })
}

pub fn load_attention_capture(path: &Path) -> Result<Vec<DMatrix<f64>>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty attention capture".into()))?;
    if header.trim() != ATTENTION_CSV_HEADER {
        return Err(Error::Parse(format!(
            "attention capture header must be {ATTENTION_CSV_HEADER:?}"
        )));
    }
    let mut rows = Vec::new();
    let mut max_step = 0usize;
    let mut max_vertex = 0usize;
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            return Err(Error::Parse(format!("capture line {}: need 4 fields", lineno + 2)));
        }
        let step: usize = parts[0]
            .parse()
            .map_err(|e| Error::Parse(format!("line {}: bad step: {e}", lineno + 2)))?;
        let from: usize = parts[1]
            .parse()
            .map_err(|e| Error::Parse(format!("line {}: bad vertex: {e}", lineno + 2)))?;
        let to: usize = parts[2]
            .parse()
            .map_err(|e| Error::Parse(format!("line {}: bad vertex: {e}", lineno + 2)))?;
        let alpha: f64 = parts[3]
            .parse()
            .map_err(|e| Error::Parse(format!("line {}: bad alpha: {e}", lineno + 2)))?;
        max_step = max_step.max(step);
        max_vertex = max_vertex.max(from.max(to));
        rows.push((step, from, to, alpha));
    }
    if rows.is_empty() {
        return Err(Error::Parse("attention capture has no data rows".into()));
    }
    let v = max_vertex + 1;
    let mut captures = vec![DMatrix::zeros(v, v); max_step + 1];
    for (step, from, to, alpha) in rows {
        captures[step][(from, to)] = alpha;
    }
    Ok(captures)
}

/// Fallback graph when no file is given: every off-diagonal pair that ever
/// receives attention becomes a type-0 edge.
fn graph_from_captures(captures: &[DMatrix<f64>]) -> Result<Graph> {
    let v = captures[0].nrows();
    let mut edges = Vec::new();
    for i in 0..v {
        for j in i + 1..v {
            let seen = captures
                .iter()
                .any(|alpha| alpha[(i, j)] != 0.0 || alpha[(j, i)] != 0.0);
            if seen {
                edges.push(Edge::new(i, j, 0, 1.0));
            }
        }
    }
    Graph::new(v, edges, vec![])
}
