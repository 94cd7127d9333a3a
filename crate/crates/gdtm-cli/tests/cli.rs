//! End-to-end checks of the command-line surface on a desk-scale dataset.

use std::path::{Path, PathBuf};
use std::process::Command;

fn gdtm() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gdtm"))
}

fn small_config(dir: &Path) -> PathBuf {
    let path = dir.join("config.txt");
    std::fs::write(
        &path,
        "[system]\n\
         dof = 4\n\
         \n\
         [excitation]\n\
         episodes_per_kind = 2\n\
         \n\
         [solver]\n\
         duration_s = 3\n\
         \n\
         [training]\n\
         epochs = 8\n\
         patience = 8\n\
         batch_size = 32\n",
    )
    .unwrap();
    path
}

fn run_ok(cmd: &mut Command) -> String {
    let output = cmd.output().expect("spawn gdtm");
    assert!(
        output.status.success(),
        "command failed: {}\nstdout: {}\nstderr: {}",
        output.status,
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr),
    );
    String::from_utf8_lossy(&output.stdout).into_owned()
}

#[test]
fn generate_is_deterministic_and_counts_match() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        run_ok(gdtm()
            .args(["generate", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(out)
            .args(["--seed", "5"]));
    }
    let names: Vec<String> = {
        let mut v: Vec<String> = std::fs::read_dir(&out_a)
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        v.sort();
        v
    };
    assert_eq!(names.len(), 7, "6 episodes + manifest: {names:?}");
    for name in &names {
        let a = std::fs::read(out_a.join(name)).unwrap();
        let b = std::fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

#[test]
fn tiny_duration_yields_two_step_episodes() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.txt");
    std::fs::write(&config, "[solver]\nduration_s = 0.02\n[excitation]\nepisodes_per_kind = 1\n")
        .unwrap();
    let out = dir.path().join("data");
    let stdout = run_ok(gdtm()
        .args(["generate", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out));
    assert!(stdout.contains("(2 steps x 10 vertices)"), "stdout: {stdout}");
    let episode = gdtm::mdof::EpisodeRecord::load_csv(&out.join("episode_000_impulse.csv")).unwrap();
    assert_eq!(episode.steps(), 2);
}

#[test]
fn pipeline_train_rollout_eval_transfer() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let data = dir.path().join("data");
    run_ok(gdtm()
        .args(["generate", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&data)
        .args(["--seed", "11"]));

    let train_dir = dir.path().join("trained");
    let stdout = run_ok(gdtm()
        .args(["train", "--config"])
        .arg(&config)
        .arg("--manifest")
        .arg(data.join("manifest.json"))
        .arg("--out")
        .arg(&train_dir));
    assert!(stdout.contains("checkpoint ->"), "stdout: {stdout}");
    let checkpoint = train_dir.join("checkpoint.json");
    assert!(checkpoint.exists());
    let history = std::fs::read_to_string(train_dir.join("loss_history.csv")).unwrap();
    assert!(history.starts_with("epoch,train_loss,test_loss\n"));
    assert!(history.lines().count() >= 2);

    // same seed twice -> identical loss history
    let train_dir2 = dir.path().join("trained2");
    run_ok(gdtm()
        .args(["train", "--config"])
        .arg(&config)
        .arg("--manifest")
        .arg(data.join("manifest.json"))
        .arg("--out")
        .arg(&train_dir2));
    let history2 = std::fs::read_to_string(train_dir2.join("loss_history.csv")).unwrap();
    assert_eq!(history, history2);

    // rollout on a 6-vertex chain graph (different size than training)
    let graph = dir.path().join("chain6.txt");
    let mut graph_text = String::from("vertex_count=6\ngrounded=0\n");
    for s in 0..5 {
        graph_text.push_str(&format!("edge={},{},0,1.0\n", s, s + 1));
    }
    std::fs::write(&graph, graph_text).unwrap();

    // excitation file in the bare schema
    let excitation = dir.path().join("excitation.csv");
    let mut exc_text = String::from("step,time_s,vertex,excitation_N\n");
    for t in 0..80 {
        exc_text.push_str(&format!("{},{},2,{}\n", t, t as f64 * 0.01, if t == 0 { 800.0 } else { 0.0 }));
    }
    // make the width explicit: touch the last vertex with a zero at step 0
    exc_text.push_str("0,0.0,5,0.0\n");
    std::fs::write(&excitation, exc_text).unwrap();

    let predicted = dir.path().join("predicted.csv");
    let stdout = run_ok(gdtm()
        .arg("rollout")
        .arg("--checkpoint")
        .arg(&checkpoint)
        .arg("--graph")
        .arg(&graph)
        .arg("--excitation")
        .arg(&excitation)
        .arg("--out")
        .arg(&predicted));
    assert!(stdout.contains("steps/second"), "throughput line missing: {stdout}");

    // eval: identical records give the perfect row
    let metrics = dir.path().join("metrics.csv");
    let stdout = run_ok(gdtm()
        .arg("eval")
        .arg("--predicted")
        .arg(&predicted)
        .arg("--truth")
        .arg(&predicted)
        .arg("--out")
        .arg(&metrics));
    assert!(stdout.contains("nmse 0"), "stdout: {stdout}");
    let metrics_text = std::fs::read_to_string(&metrics).unwrap();
    assert!(metrics_text.starts_with("nmse,r2,pe_pct,n\n"));
    assert!(metrics_text.lines().nth(1).unwrap().starts_with("0,1,0,"));

    // transfer across sizes and cases from the same checkpoint
    let transfer_dir = dir.path().join("transfer");
    let stdout = run_ok(gdtm()
        .args(["transfer", "--config"])
        .arg(&config)
        .arg("--checkpoint")
        .arg(&checkpoint)
        .args(["--dofs", "3,5", "--cases", "0", "--episodes-per-kind", "1"])
        .arg("--out")
        .arg(&transfer_dir));
    assert!(stdout.contains("dof_03:"), "stdout: {stdout}");
    assert!(stdout.contains("case_0:"), "stdout: {stdout}");
    let summary = std::fs::read_to_string(transfer_dir.join("transfer_summary.csv")).unwrap();
    assert!(summary.starts_with("target,nmse,r2,pe_pct,n\n"));
    assert_eq!(summary.lines().count(), 4);
}

#[test]
fn heterogeneous_training_gets_input_width_seven() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.txt");
    std::fs::write(
        &config,
        "[system]\n\
         dof = 4\n\
         spring_type_cycle = 0,1\n\
         stiffness_n_per_m = 240000,120000\n\
         damping_ns_per_m = 2500,1250\n\
         \n\
         [excitation]\n\
         episodes_per_kind = 2\n\
         \n\
         [solver]\n\
         duration_s = 2\n\
         \n\
         [training]\n\
         epochs = 3\n\
         patience = 3\n\
         \n\
         [model]\n\
         kind = heterogeneous\n",
    )
    .unwrap();
    let data = dir.path().join("data");
    run_ok(gdtm()
        .args(["generate", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&data));
    let train_dir = dir.path().join("trained");
    let stdout = run_ok(gdtm()
        .args(["train", "--config"])
        .arg(&config)
        .arg("--manifest")
        .arg(data.join("manifest.json"))
        .arg("--out")
        .arg(&train_dir));
    assert!(stdout.contains("input width 7"), "stdout: {stdout}");
    let ckpt = gdtm_cli::checkpoint::Checkpoint::load(&train_dir.join("checkpoint.json")).unwrap();
    assert_eq!(ckpt.layer_dims[0], 7);
    assert_eq!(ckpt.adjacency.matrix_count, 3);
}

#[test]
fn rollout_rejects_incompatible_graph_with_exit_code_4() {
    let dir = tempfile::tempdir().unwrap();
    // homogeneous checkpoint without training
    let scalers = gdtm::surrogate::NormalizationScalers {
        acceleration: 1.0,
        velocity: 1.0,
        displacement: 1.0,
        excitation: 1.0,
    };
    let model =
        gdtm::surrogate::SurrogateModel::new_heterogeneous(3, &[8], scalers, 0.01, 0.25, 0.5, 1)
            .unwrap();
    let checkpoint = dir.path().join("checkpoint.json");
    gdtm_cli::checkpoint::Checkpoint::from_model(&model, 1).save(&checkpoint).unwrap();

    // single-type graph only yields 2 matrices, checkpoint wants 3
    let graph = dir.path().join("graph.txt");
    std::fs::write(&graph, "vertex_count=3\ngrounded=0\nedge=0,1,0,1\nedge=1,2,0,1\n").unwrap();
    let excitation = dir.path().join("exc.csv");
    std::fs::write(&excitation, "step,time_s,vertex,excitation_N\n0,0.0,2,1.0\n").unwrap();

    let output = gdtm()
        .arg("rollout")
        .arg("--checkpoint")
        .arg(&checkpoint)
        .arg("--graph")
        .arg(&graph)
        .arg("--excitation")
        .arg(&excitation)
        .arg("--out")
        .arg(dir.path().join("pred.csv"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(4), "stderr: {}", String::from_utf8_lossy(&output.stderr));
}

#[test]
fn eval_rejects_mismatched_shapes_with_exit_code_4() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.txt");
    std::fs::write(&config, "[solver]\nduration_s = 0.05\n[excitation]\nepisodes_per_kind = 1\n")
        .unwrap();
    let data = dir.path().join("data");
    run_ok(gdtm()
        .args(["generate", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&data));
    let config2 = dir.path().join("config2.txt");
    std::fs::write(&config2, "[system]\ndof = 3\n[solver]\nduration_s = 0.05\n[excitation]\nepisodes_per_kind = 1\n")
        .unwrap();
    let data2 = dir.path().join("data2");
    run_ok(gdtm()
        .args(["generate", "--config"])
        .arg(&config2)
        .arg("--out")
        .arg(&data2));

    let output = gdtm()
        .arg("eval")
        .arg("--predicted")
        .arg(data.join("episode_000_impulse.csv"))
        .arg("--truth")
        .arg(data2.join("episode_000_impulse.csv"))
        .arg("--out")
        .arg(dir.path().join("metrics.csv"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(4));
}

#[test]
fn gat_rollout_capture_and_attention_extraction() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.txt");
    std::fs::write(
        &config,
        "[system]\ndof = 4\n[excitation]\nepisodes_per_kind = 2\n[solver]\nduration_s = 3\n\
         [training]\nepochs = 2\npatience = 2\n[model]\nkind = gat\n",
    )
    .unwrap();
    let data = dir.path().join("data");
    run_ok(gdtm()
        .args(["generate", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&data));
    let train_dir = dir.path().join("trained");
    run_ok(gdtm()
        .args(["train", "--config"])
        .arg(&config)
        .arg("--manifest")
        .arg(data.join("manifest.json"))
        .arg("--out")
        .arg(&train_dir));

    let graph = dir.path().join("chain4.txt");
    std::fs::write(
        &graph,
        "vertex_count=4\ngrounded=0\nedge=0,1,0,1\nedge=1,2,0,1\nedge=2,3,0,1\n",
    )
    .unwrap();
    let predicted = dir.path().join("predicted.csv");
    let stdout = run_ok(gdtm()
        .arg("rollout")
        .arg("--checkpoint")
        .arg(train_dir.join("checkpoint.json"))
        .arg("--graph")
        .arg(&graph)
        .arg("--excitation")
        .arg(data.join("episode_000_impulse.csv"))
        .arg("--out")
        .arg(&predicted)
        .arg("--capture-attention"));
    assert!(stdout.contains("attention capture ->"), "stdout: {stdout}");
    let capture = dir.path().join("predicted_attention.csv");
    assert!(capture.exists());

    let attn_dir = dir.path().join("attention");
    let stdout = run_ok(gdtm()
        .arg("attention")
        .arg("--capture")
        .arg(&capture)
        .args(["--from", "1", "--to", "2", "--stft", "--window", "64", "--hop", "32"])
        .arg("--out")
        .arg(&attn_dir));
    assert!(stdout.contains("wrote 1 attention series (1 spectrograms)"), "stdout: {stdout}");
    let series = std::fs::read_to_string(attn_dir.join("attention_001_002.csv")).unwrap();
    assert!(series.starts_with("step,alpha\n"));
    assert_eq!(series.lines().count(), 301);
    assert!(attn_dir.join("attention_001_002_stft.csv").exists());
}
