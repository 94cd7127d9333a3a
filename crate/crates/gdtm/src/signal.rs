//! Frequency-domain tooling: Welch power spectral density, short-time
//! Fourier transform spectrograms, and attention-coefficient time histories
//! captured during surrogate rollouts.

use std::io::Write;

use nalgebra::DMatrix;
use rustfft::{num_complex::Complex, FftPlanner};

use crate::error::{Error, Result};
use crate::graph::Graph;

fn hann_window(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    (0..len)
        .map(|n| {
            let x = std::f64::consts::PI * n as f64 / (len - 1) as f64;
            x.sin() * x.sin()
        })
        .collect()
}

fn magnitude_spectrum(frame: &[f64], window: &[f64]) -> Vec<Complex<f64>> {
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(frame.len());
    let mut buf: Vec<Complex<f64>> = frame
        .iter()
        .zip(window)
        .map(|(x, w)| Complex::new(x * w, 0.0))
        .collect();
    fft.process(&mut buf);
    buf
}

/// Welch-averaged one-sided power spectral density with a Hann window.
/// Returns (frequencies in Hz, power densities).
pub fn psd(
    series: &[f64],
    fs: f64,
    segment_length: usize,
    overlap_fraction: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if fs <= 0.0 || !fs.is_finite() {
        return Err(Error::InvalidParameter(format!("fs must be positive, got {fs}")));
    }
    if segment_length < 2 {
        return Err(Error::InvalidParameter("segment_length must be at least 2".into()));
    }
    if !(0.0..1.0).contains(&overlap_fraction) {
        return Err(Error::InvalidParameter(format!(
            "overlap fraction must be in [0, 1), got {overlap_fraction}"
        )));
    }
    if series.len() < segment_length {
        return Err(Error::InvalidSize(format!(
            "series of {} samples is shorter than one segment ({})",
            series.len(),
            segment_length
        )));
    }
    let hop = ((segment_length as f64) * (1.0 - overlap_fraction)).round().max(1.0) as usize;
    let window = hann_window(segment_length);
    let window_power: f64 = window.iter().map(|w| w * w).sum();
    let bins = segment_length / 2 + 1;
    let mut acc = vec![0.0; bins];
    let mut segments = 0usize;
    let mut start = 0usize;
    while start + segment_length <= series.len() {
        let spectrum = magnitude_spectrum(&series[start..start + segment_length], &window);
        for (k, value) in acc.iter_mut().enumerate() {
            let mag2 = spectrum[k].norm_sqr();
            // one-sided density: double everything except DC and Nyquist
            let factor =
                if k == 0 || (segment_length % 2 == 0 && k == bins - 1) { 1.0 } else { 2.0 };
            *value += factor * mag2 / (fs * window_power);
        }
        segments += 1;
        start += hop;
    }
    let freqs: Vec<f64> = (0..bins).map(|k| k as f64 * fs / segment_length as f64).collect();
    let powers: Vec<f64> = acc.into_iter().map(|p| p / segments as f64).collect();
    Ok((freqs, powers))
}

/// Hann-windowed sliding-FFT magnitudes.
#[derive(Debug, Clone)]
pub struct Spectrogram {
    /// Center time of each frame, seconds.
    pub frame_times: Vec<f64>,
    /// One-sided frequency axis, Hz.
    pub frequencies: Vec<f64>,
    /// frames x bins magnitudes.
    pub magnitudes: DMatrix<f64>,
    pub window_name: String,
    pub window_length: usize,
    pub hop: usize,
}

pub fn stft(series: &[f64], fs: f64, window_length: usize, hop: usize) -> Result<Spectrogram> {
    if fs <= 0.0 || !fs.is_finite() {
        return Err(Error::InvalidParameter(format!("fs must be positive, got {fs}")));
    }
    if window_length < 2 {
        return Err(Error::InvalidParameter("window_length must be at least 2".into()));
    }
    if hop == 0 {
        return Err(Error::InvalidParameter("hop must be at least 1".into()));
    }
    if window_length > series.len() {
        return Err(Error::InvalidSize(format!(
            "window of {} samples exceeds series length {}",
            window_length,
            series.len()
        )));
    }
    let frames = (series.len() - window_length) / hop + 1;
    let bins = window_length / 2 + 1;
    let window = hann_window(window_length);
    let mut magnitudes = DMatrix::zeros(frames, bins);
    let mut frame_times = Vec::with_capacity(frames);
    for frame in 0..frames {
        let start = frame * hop;
        let spectrum = magnitude_spectrum(&series[start..start + window_length], &window);
        for k in 0..bins {
            magnitudes[(frame, k)] = spectrum[k].norm();
        }
        frame_times.push((start as f64 + window_length as f64 / 2.0) / fs);
    }
    let frequencies: Vec<f64> =
        (0..bins).map(|k| k as f64 * fs / window_length as f64).collect();
    Ok(Spectrogram {
        frame_times,
        frequencies,
        magnitudes,
        window_name: "hann".into(),
        window_length,
        hop,
    })
}

impl Spectrogram {
    pub fn frame_count(&self) -> usize {
        self.frame_times.len()
    }

    /// `frame_time_s,frequency_hz,magnitude` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "frame_time_s,frequency_hz,magnitude")?;
        for frame in 0..self.frame_count() {
            for (k, freq) in self.frequencies.iter().enumerate() {
                writeln!(
                    w,
                    "{:.9},{:.9},{:.16e}",
                    self.frame_times[frame],
                    freq,
                    self.magnitudes[(frame, k)]
                )?;
            }
        }
        Ok(())
    }
}

/// `frequency_hz,power` rows.
pub fn write_psd_csv<W: Write>(mut w: W, freqs: &[f64], powers: &[f64]) -> Result<()> {
    writeln!(w, "frequency_hz,power")?;
    for (f, p) in freqs.iter().zip(powers) {
        writeln!(w, "{:.9},{:.16e}", f, p)?;
    }
    Ok(())
}

/// Which directed attention entries to extract from a rollout capture.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EdgeSelector {
    /// Every directed pair that is ever nonzero, plus self loops.
    All,
    /// A single directed pair (from -> to); both orientations of an edge are
    /// distinct selections.
    Directed { from: usize, to: usize },
    /// All out-edges of one vertex, self loop included.
    Vertex(usize),
}

/// One directed attention coefficient over rollout steps.
#[derive(Debug, Clone)]
pub struct AttentionSeries {
    pub from: usize,
    pub to: usize,
    /// Edge type from the graph; self loops have no type.
    pub type_label: Option<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct AttentionHistory {
    pub series: Vec<AttentionSeries>,
}

/// Per-step attention coefficients for the selected directed edges.
pub fn extract_attention_history(
    captures: &[DMatrix<f64>],
    graph: &Graph,
    selector: &EdgeSelector,
) -> Result<AttentionHistory> {
    if captures.is_empty() {
        return Err(Error::InvalidSize("no attention captures".into()));
    }
    let v = graph.vertex_count();
    for (step, m) in captures.iter().enumerate() {
        if m.shape() != (v, v) {
            return Err(Error::ShapeMismatch(format!(
                "capture at step {step} is {:?}, graph has {v} vertices",
                m.shape()
            )));
        }
    }
    let type_of = |from: usize, to: usize| -> Option<usize> {
        graph
            .edges()
            .iter()
            .find(|e| (e.from == from && e.to == to) || (e.from == to && e.to == from))
            .map(|e| e.type_label)
    };
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    match selector {
        EdgeSelector::All => {
            for i in 0..v {
                for j in 0..v {
                    if i == j || type_of(i, j).is_some() {
                        pairs.push((i, j));
                    }
                }
            }
        }
        EdgeSelector::Directed { from, to } => {
            if *from >= v || *to >= v {
                return Err(Error::IndexOutOfRange(format!(
                    "selector ({from}, {to}) outside 0..{v}"
                )));
            }
            if *from != *to && type_of(*from, *to).is_none() {
                return Err(Error::InvalidParameter(format!(
                    "selector matches nothing: no edge between {from} and {to}"
                )));
            }
            pairs.push((*from, *to));
        }
        EdgeSelector::Vertex(i) => {
            if *i >= v {
                return Err(Error::IndexOutOfRange(format!("selector vertex {i} outside 0..{v}")));
            }
            for j in 0..v {
                if *i == j || type_of(*i, j).is_some() {
                    pairs.push((*i, j));
                }
            }
        }
    }
    if pairs.is_empty() {
        return Err(Error::InvalidParameter("selector matches nothing".into()));
    }
    let series = pairs
        .into_iter()
        .map(|(from, to)| AttentionSeries {
            from,
            to,
            type_label: if from == to { None } else { type_of(from, to) },
            values: captures.iter().map(|m| m[(from, to)]).collect(),
        })
        .collect();
    Ok(AttentionHistory { series })
}
