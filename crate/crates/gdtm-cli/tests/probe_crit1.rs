// temporary probe: GAT convergence trajectory on the two-type chain
use gdtm::graph::{build_homogeneous_adjacency, Graph};
use gdtm::mdof::{generate_excitation, newmark_solve, EpisodeRecord, ExcitationKind, ExcitationSpec, MdofSystem, SolverConfig};
use gdtm::metrics::MetricReport;
use gdtm::neural::AdamConfig;
use gdtm::surrogate::{build_gat_dataset, fit_scalers, rollout, split_episodes, train_on_split, Dataset, RolloutOptions, SurrogateModel, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn spring_type(s: usize, n: usize) -> usize {
    if std::env::var("LAYOUT").as_deref() == Ok("blocked") {
        usize::from(s >= n / 2)
    } else {
        s % 2
    }
}

fn two_type_system(n: usize, ratio: f64) -> MdofSystem {
    let springs: Vec<f64> = (0..n).map(|s| if spring_type(s, n) == 0 { 2.4e5 } else { 2.4e5 / ratio }).collect();
    let dampers: Vec<f64> = (0..n).map(|s| if spring_type(s, n) == 0 { 2500.0 } else { 2500.0 / ratio }).collect();
    MdofSystem::new(vec![2000.0; n], springs, dampers, true).unwrap()
}

#[test]
fn probe_gat_convergence() {
    let n = 10;
    let ratio: f64 = std::env::var("RATIO").ok().and_then(|s| s.parse().ok()).unwrap_or(2.0);
    let epochs: usize = std::env::var("EPOCHS").ok().and_then(|s| s.parse().ok()).unwrap_or(200);
    let lr: f64 = std::env::var("LR").ok().and_then(|s| s.parse().ok()).unwrap_or(3e-4);
    let noise: f64 = std::env::var("NOISE").ok().and_then(|s| s.parse().ok()).unwrap_or(0.0);
    let mseed: u64 = std::env::var("MSEED").ok().and_then(|s| s.parse().ok()).unwrap_or(7);
    let solver = SolverConfig::new(0.01, 2000, 0.25, 0.5).unwrap();
    let system = two_type_system(n, ratio);
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    let mut records = Vec::new();
    for kind in 0..2 {
        for _ in 0..8 {
            let target_vertex = rng.gen_range(0..n);
            let spec = match kind {
                0 => ExcitationSpec { kind: ExcitationKind::Impulse { duration_steps: 1 }, target_vertex, amplitude: 1000.0 },
                _ => ExcitationSpec { kind: ExcitationKind::Random { seed: rng.gen() }, target_vertex, amplitude: 200.0 },
            };
            let excitation = generate_excitation(&spec, &solver, n).unwrap();
            records.push(newmark_solve(&system, &excitation, &solver).unwrap());
        }
    }
    let ids: Vec<usize> = (0..records.len()).collect();
    let strata: Vec<usize> = (0..records.len()).map(|i| i / 8).collect();
    let (train_ids, test_ids) = split_episodes(&ids, Some(&strata), 0.8, 7).unwrap();
    let train_records: Vec<EpisodeRecord> = train_ids.iter().map(|&i| records[i].clone()).collect();
    let scalers = fit_scalers(&train_records).unwrap();
    let types: Vec<usize> = (0..n).map(|s| spring_type(s, n)).collect();
    let graph = {
        use gdtm::graph::Edge;
        let mut edges = Vec::new();
        for s in 1..n { edges.push(Edge::new(s - 1, s, types[s], 1.0)); }
        Graph::new(n, edges, vec![0]).unwrap()
    };
    let mut model = SurrogateModel::new_gat(&[16, 64], 8, scalers, solver.dt, 0.25, 0.5, mseed).unwrap();
    let data = Dataset::PerVertex { samples: build_gat_dataset(&records, &scalers).unwrap(), graph: graph.clone() };
    let config = TrainConfig {
        epochs, patience: epochs, seed: mseed, noise_std: noise,
        adam: AdamConfig { learning_rate: lr, ..AdamConfig::default() },
        ..TrainConfig::default()
    };
    let t0 = std::time::Instant::now();
    let outcome = train_on_split(&mut model, &data, &test_ids, &config).unwrap();
    let hom = build_homogeneous_adjacency(&graph).unwrap();
    let mut tf = Vec::new(); let mut pf = Vec::new();
    for &id in &test_ids {
        let truth = &records[id];
        let pred = rollout(&model, &hom, &truth.excitation, &RolloutOptions::default()).unwrap();
        for r in 0..truth.acceleration.nrows() { for c in 0..truth.acceleration.ncols() {
            tf.push(truth.acceleration[(r, c)]); pf.push(pred.episode.acceleration[(r, c)]);
        }}
    }
    let rep = MetricReport::from_series(&tf, &pf).unwrap();
    for (e, l) in outcome.history.iter().enumerate() {
        if e % 20 == 0 || e == outcome.history.len() - 1 {
            println!("epoch {e}: train {:.3e} test {:.3e}", l.train, l.test);
        }
    }
    println!("GATPROBE ratio={ratio} epochs={epochs} lr={lr} noise={noise} mseed={mseed}: best@{} test {:.3e}, rollout NMSE {:.3e} PE {:.2}% ({}s)",
        outcome.best_epoch, outcome.best_test_loss, rep.nmse, rep.peak_error_pct, t0.elapsed().as_secs());
}
