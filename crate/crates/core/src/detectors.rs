//! Test statistics and threshold calibration.
//!
//! Two statistics: the frame energy, and the difference of the two logits of
//! a trained classifier. Both are thresholded with "busy iff stat > t".

use std::fmt;

use rayon::prelude::*;

use crate::baseband::IqFrame;
use crate::dataset::Label;
use crate::mlp::{forward, Batch, MlpParams};
use crate::{Error, Result};

/// Frames per forward pass in [`nn_stats`].
const NN_CHUNK: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DetectorKind {
    Energy,
    Nn,
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DetectorKind::Energy => "energy",
            DetectorKind::Nn => "nn",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorStat {
    pub value: f64,
    pub kind: DetectorKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold {
    pub value: f64,
    pub target_pfa: f64,
    pub calibration_size: usize,
    pub kind: DetectorKind,
}

fn energy(frame: &IqFrame) -> f64 {
    frame
        .samples()
        .iter()
        .map(|s| {
            let (re, im) = (s.re as f64, s.im as f64);
            re * re + im * im
        })
        .sum()
}

/// `Σ |x_k|²` over the frame.
pub fn energy_stat(frame: &IqFrame) -> DetectorStat {
    DetectorStat { value: energy(frame), kind: DetectorKind::Energy }
}

/// `logit(busy) − logit(idle)` for one frame.
pub fn nn_stat(params: &MlpParams, frame: &IqFrame) -> Result<DetectorStat> {
    let v = nn_stats(params, std::slice::from_ref(frame))?;
    Ok(DetectorStat { value: v[0], kind: DetectorKind::Nn })
}

/// Logit differences for many frames. Fixed-size chunks run in parallel; the
/// result does not depend on the worker count.
pub fn nn_stats(params: &MlpParams, frames: &[IqFrame]) -> Result<Vec<f64>> {
    let frame_len = params.input_dim() / 2;
    if params.output_dim() != 2 || frame_len * 2 != params.input_dim() {
        return Err(Error::Precondition(format!(
            "classifier has shape {:?}; expected an even input width and two outputs",
            params.sizes()
        )));
    }
    let chunks = frames
        .par_chunks(NN_CHUNK)
        .map(|chunk| {
            let batch = Batch::from_frames(chunk, frame_len)?;
            let logits = forward(params, &batch)?;
            Ok(logits.chunks_exact(2).map(|z| z[1] - z[0]).collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(chunks.concat())
}

/// Smallest `t` with `#{s > t} / n ≤ pfa`: the `⌈n(1 − pfa)⌉`-th order
/// statistic. Needs at least `⌈1/pfa⌉` finite stats.
pub fn calibrate_threshold(idle_stats: &[f64], pfa: f64, kind: DetectorKind) -> Result<Threshold> {
    if !(pfa > 0.0 && pfa < 1.0) {
        return Err(Error::Calibration(format!("target false-alarm rate {pfa} outside (0, 1)")));
    }
    let n = idle_stats.len();
    let needed = (1.0 / pfa - 1e-9).ceil() as usize;
    if n < needed {
        return Err(Error::Calibration(format!(
            "{n} idle statistics cannot resolve a false-alarm rate of {pfa} (need at least {needed})"
        )));
    }
    if idle_stats.iter().any(|s| !s.is_finite()) {
        return Err(Error::Calibration("non-finite idle statistic".into()));
    }
    let mut sorted = idle_stats.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let m = (n as f64 * pfa + 1e-9).floor() as usize;
    Ok(Threshold { value: sorted[n - m - 1], target_pfa: pfa, calibration_size: n, kind })
}

pub fn decide(stat: DetectorStat, thr: &Threshold) -> Result<Label> {
    if stat.kind != thr.kind {
        return Err(Error::Precondition(format!(
            "{} statistic compared against a {} threshold",
            stat.kind, thr.kind
        )));
    }
    Ok(if stat.value > thr.value { Label::Busy } else { Label::Idle })
}

/// Fraction of `stats` strictly above `threshold`.
pub fn exceed_fraction(stats: &[f64], threshold: f64) -> f64 {
    if stats.is_empty() {
        return 0.0;
    }
    stats.iter().filter(|&&s| s > threshold).count() as f64 / stats.len() as f64
}

/// A detector as used by the evaluation harness.
#[derive(Debug, Clone, PartialEq)]
pub enum Detector {
    Energy,
    Nn { name: String, params: MlpParams },
}

impl Detector {
    pub fn name(&self) -> &str {
        match self {
            Detector::Energy => "energy",
            Detector::Nn { name, .. } => name,
        }
    }

    pub fn kind(&self) -> DetectorKind {
        match self {
            Detector::Energy => DetectorKind::Energy,
            Detector::Nn { .. } => DetectorKind::Nn,
        }
    }

    pub fn stats(&self, frames: &[IqFrame]) -> Result<Vec<f64>> {
        match self {
            Detector::Energy => Ok(frames.par_iter().map(energy).collect()),
            Detector::Nn { params, .. } => nn_stats(params, frames),
        }
    }
}
