//! Physics checks on the ground-truth solver: spectral content, energy
//! behavior, agreement with the closed-form damped SDOF solution, and
//! time-step convergence.

use gdtm::mdof::{
    generate_excitation, newmark_solve, newmark_solve_with_state, ExcitationKind, ExcitationSpec,
    MdofSystem, SolverConfig,
};
use nalgebra::{DMatrix, DVector};
use rustfft::{num_complex::Complex, FftPlanner};

fn fft_peak_hz(series: &[f64], fs: f64) -> f64 {
    let mut buf: Vec<Complex<f64>> = series.iter().map(|x| Complex::new(*x, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    let half = buf.len() / 2;
    let argmax = (1..half)
        .max_by(|a, b| buf[*a].norm().total_cmp(&buf[*b].norm()))
        .unwrap();
    argmax as f64 * fs / buf.len() as f64
}

#[test]
fn sdof_natural_frequency_within_one_bin() {
    let system = MdofSystem::uniform_chain(1, 2000.0, 2.4e5, 0.0, true).unwrap();
    let config = SolverConfig::new(0.01, 5000, 0.25, 0.5).unwrap();
    let spec = ExcitationSpec {
        kind: ExcitationKind::Impulse { duration_steps: 1 },
        target_vertex: 0,
        amplitude: 1000.0,
    };
    let excitation = generate_excitation(&spec, &config, 1).unwrap();
    let record = newmark_solve(&system, &excitation, &config).unwrap();
    let series: Vec<f64> = record.acceleration.column(0).iter().copied().collect();
    let peak = fft_peak_hz(&series, 100.0);
    let expected = (2.4e5f64 / 2000.0).sqrt() / (2.0 * std::f64::consts::PI);
    let bin = 100.0 / 5000.0;
    assert!(
        (peak - expected).abs() <= bin,
        "peak {peak} Hz vs sqrt(k/m)/2pi = {expected} Hz (bin {bin})"
    );
}

fn total_energy(
    m: &DMatrix<f64>,
    k: &DMatrix<f64>,
    v: &DVector<f64>,
    u: &DVector<f64>,
) -> f64 {
    0.5 * (v.transpose() * m * v)[(0, 0)] + 0.5 * (u.transpose() * k * u)[(0, 0)]
}

#[test]
fn undamped_free_vibration_conserves_energy() {
    let n = 10;
    let system = MdofSystem::uniform_chain(n, 2000.0, 2.4e5, 0.0, true).unwrap();
    let (m, _, k) = system.assemble_matrices();
    let config = SolverConfig::new(0.01, 5000, 0.25, 0.5).unwrap();
    let u0 = DVector::from_fn(n, |i, _| 0.01 * (i + 1) as f64 / n as f64);
    let v0 = DVector::zeros(n);
    let record =
        newmark_solve_with_state(&system, &DMatrix::zeros(5000, n), &config, &u0, &v0).unwrap();
    let e0 = total_energy(&m, &k, &v0, &u0);
    let mut max_drift: f64 = 0.0;
    for t in 0..5000 {
        let v = record.velocity.row(t).transpose();
        let u = record.displacement.row(t).transpose();
        let e = total_energy(&m, &k, &v, &u);
        max_drift = max_drift.max(((e - e0) / e0).abs());
    }
    assert!(max_drift <= 1e-3, "energy drift {max_drift}");
}

#[test]
fn damped_free_vibration_energy_is_non_increasing() {
    let n = 6;
    let system = MdofSystem::uniform_chain(n, 2000.0, 2.4e5, 2500.0, true).unwrap();
    let (m, _, k) = system.assemble_matrices();
    let config = SolverConfig::new(0.01, 3000, 0.25, 0.5).unwrap();
    let u0 = DVector::from_fn(n, |i, _| 0.02 * ((i + 1) as f64).sin());
    let v0 = DVector::zeros(n);
    let record =
        newmark_solve_with_state(&system, &DMatrix::zeros(3000, n), &config, &u0, &v0).unwrap();
    let mut prev = f64::INFINITY;
    for t in 0..3000 {
        let v = record.velocity.row(t).transpose();
        let u = record.displacement.row(t).transpose();
        let e = total_energy(&m, &k, &v, &u);
        assert!(
            e <= prev * (1.0 + 1e-12),
            "energy rose at step {t}: {e} > {prev}"
        );
        prev = e;
    }
}

#[test]
fn damped_sdof_matches_analytic_envelope() {
    let mass = 2000.0;
    let stiffness = 2.4e5;
    let zeta = 0.05;
    let omega = (stiffness / mass as f64).sqrt();
    let damping = 2.0 * zeta * (stiffness * mass).sqrt();
    let system = MdofSystem::new(vec![mass], vec![stiffness], vec![damping], true).unwrap();

    let u0 = 0.01;
    let omega_d = omega * (1.0 - zeta * zeta).sqrt();
    let period = 2.0 * std::f64::consts::PI / omega_d;
    let steps = (10.0 * period / 0.01).ceil() as usize + 2;
    let config = SolverConfig::new(0.01, steps, 0.25, 0.5).unwrap();
    let record = newmark_solve_with_state(
        &system,
        &DMatrix::zeros(steps, 1),
        &config,
        &DVector::from_element(1, u0),
        &DVector::zeros(1),
    )
    .unwrap();

    // compare local displacement maxima against the analytic decay envelope
    let envelope = |t: f64| u0 * (omega / omega_d) * (-zeta * omega * t).exp();
    let u: Vec<f64> = record.displacement.column(0).iter().copied().collect();
    let mut peaks = 0;
    for t in 1..steps - 1 {
        if u[t] > u[t - 1] && u[t] >= u[t + 1] && u[t] > 0.0 {
            let time = t as f64 * 0.01;
            let expected = envelope(time);
            let rel = ((u[t] - expected) / expected).abs();
            assert!(rel <= 0.01, "peak at {time:.2}s: {} vs envelope {expected} ({rel:.4})", u[t]);
            peaks += 1;
        }
    }
    assert!(peaks >= 9, "found only {peaks} displacement peaks");
}

#[test]
fn halving_dt_reduces_displacement_error() {
    let n = 4;
    let system = MdofSystem::uniform_chain(n, 2000.0, 2.4e5, 2500.0, true).unwrap();
    let duration = 5.0;

    let run = |dt: f64| {
        let steps = (duration / dt).round() as usize + 1;
        let config = SolverConfig::new(dt, steps, 0.25, 0.5).unwrap();
        let spec = ExcitationSpec {
            kind: ExcitationKind::Harmonic { frequency_hz: 1.2 },
            target_vertex: 0,
            amplitude: 500.0,
        };
        let excitation = generate_excitation(&spec, &config, n).unwrap();
        newmark_solve(&system, &excitation, &config).unwrap()
    };

    let coarse = run(0.02);
    let medium = run(0.01);
    let reference = run(0.0025);

    // max displacement error at common sample times
    let error_vs_reference = |record: &gdtm::mdof::EpisodeRecord, ratio: usize| {
        let mut worst: f64 = 0.0;
        for t in 0..record.steps() {
            for v in 0..n {
                let diff =
                    (record.displacement[(t, v)] - reference.displacement[(t * ratio, v)]).abs();
                worst = worst.max(diff);
            }
        }
        worst
    };
    let err_coarse = error_vs_reference(&coarse, 8);
    let err_medium = error_vs_reference(&medium, 4);
    assert!(
        err_medium < err_coarse,
        "halving dt did not reduce error: {err_medium} vs {err_coarse}"
    );
}
