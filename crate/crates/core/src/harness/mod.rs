//! Detection-probability sweeps at a fixed false-alarm rate.
//!
//! Each sweep draws one pool of idle (noise-only) frames. Every detector's
//! threshold is calibrated on the first `idle_cal` of them and its realized
//! false-alarm rate is measured on the remaining `idle_ver`. Busy frames are
//! drawn per grid point under the sweep's scenario labeling rule.

mod experiment;

pub use experiment::{run_experiment, ExperimentBundle, ExperimentId};

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rayon::prelude::*;

use crate::baseband::{IqFrame, Simulator};
use crate::dataset::{draw_params, idle_frame, render, Label, PhaseTiming, ScenarioId};
use crate::detectors::{calibrate_threshold, exceed_fraction, Detector, DetectorKind};
use crate::rng::{self, tag};
use crate::{Error, Result};

/// Sizes and target rate shared by every sweep of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSettings {
    /// Parameter draws per grid point; only busy draws are rendered.
    pub frames_per_point: usize,
    pub idle_cal: usize,
    pub idle_ver: usize,
    pub pfa: f64,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self { frames_per_point: 20_000, idle_cal: 100_000, idle_ver: 10_000, pfa: 0.01 }
    }
}

impl SweepSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.pfa > 0.0 && self.pfa < 0.5) {
            return Err(Error::Config(format!("sweep.pfa = {} must lie in (0, 0.5)", self.pfa)));
        }
        let needed = (1.0 / self.pfa - 1e-9).ceil() as usize;
        if self.idle_cal < needed {
            return Err(Error::Config(format!(
                "sweep.idle_cal = {} cannot resolve pfa {} (need at least {needed})",
                self.idle_cal, self.pfa
            )));
        }
        if self.idle_ver == 0 || self.frames_per_point == 0 {
            return Err(Error::Config("sweep.idle_ver and sweep.frames_per_point must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepAxis {
    /// Symbol-timing offset in symbols; phase random.
    Tau,
    /// Carrier phase in radians; timing random.
    Theta,
    /// Carrier frequency offset in units of `W`; phase and timing random.
    DeltaF,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Tau => "tau",
            SweepAxis::Theta => "theta",
            SweepAxis::DeltaF => "delta_f",
        }
    }

    /// Default grid: τ on `0..=1/2` (11 points), θ on `-π/4..=π/4` (9 points),
    /// Δf on `-1/2..=1/2` in steps of 1/20 (21 points).
    pub fn default_grid(self) -> Vec<f64> {
        match self {
            SweepAxis::Tau => (0..=10).map(|i| i as f64 / 20.0).collect(),
            SweepAxis::Theta => (-4..=4).map(|i| i as f64 * std::f64::consts::PI / 16.0).collect(),
            SweepAxis::DeltaF => (-10..=10).map(|i| i as f64 / 20.0).collect(),
        }
    }

    fn point(self, value: f64) -> (f64, PhaseTiming) {
        match self {
            SweepAxis::Tau => (0.0, PhaseTiming::FixedTau(value)),
            SweepAxis::Theta => (0.0, PhaseTiming::FixedTheta(value)),
            SweepAxis::DeltaF => (value, PhaseTiming::Random),
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tau" => Ok(SweepAxis::Tau),
            "theta" => Ok(SweepAxis::Theta),
            "delta_f" => Ok(SweepAxis::DeltaF),
            _ => Err(Error::Config(format!("unknown sweep axis {s:?} (valid: tau, theta, delta_f)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub experiment_id: String,
    pub axis: SweepAxis,
    pub grid: Vec<f64>,
    pub scenario: ScenarioId,
    pub settings: SweepSettings,
    pub seed: u64,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        self.settings.validate()?;
        if self.grid.is_empty() || self.grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config(format!("{} grid must be non-empty and strictly increasing", self.axis)));
        }
        let ok = |lo: f64, hi: f64| self.grid.iter().all(|v| (lo..=hi).contains(v));
        let in_range = match self.axis {
            SweepAxis::Tau => ok(0.0, 1.0 - 1e-12),
            SweepAxis::Theta => ok(-std::f64::consts::TAU, std::f64::consts::TAU),
            SweepAxis::DeltaF => ok(-0.5, 0.5),
        };
        if !in_range {
            return Err(Error::Config(format!("{} grid has values out of range", self.axis)));
        }
        if self.axis != SweepAxis::DeltaF && self.scenario != ScenarioId::A {
            return Err(Error::Config(format!("{} sweeps run in scenario A only", self.axis)));
        }
        Ok(())
    }

    /// Seed of grid point `i`.
    pub fn point_seed(&self, i: usize) -> u64 {
        rng::derive_seed(self.seed, i as u64, tag::POINT)
    }

    /// Seed of the sweep's idle pool.
    pub fn idle_seed(&self) -> u64 {
        rng::derive_seed(self.seed, 0, tag::IDLE)
    }
}

/// Detection probability at a calibrated threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdEstimate {
    pub pd: f64,
    /// Normal-approximation 95% half-width, `1.96·sqrt(p(1−p)/n)`.
    pub pd_ci95: f64,
    pub realized_pfa: f64,
    pub threshold: f64,
    pub n_busy: usize,
    pub n_idle_cal: usize,
    pub n_idle_ver: usize,
}

pub fn ci95(p: f64, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    1.96 * (p * (1.0 - p) / n as f64).sqrt()
}

/// Calibrate on `idle_cal`, then measure Pd on `busy` and the realized
/// false-alarm rate on `idle_ver`.
pub fn pd_with_idle_pool(
    busy: &[f64],
    idle_cal: &[f64],
    idle_ver: &[f64],
    pfa: f64,
    kind: DetectorKind,
) -> Result<PdEstimate> {
    if idle_ver.is_empty() {
        return Err(Error::Calibration("no idle frames left to verify the false-alarm rate".into()));
    }
    let thr = calibrate_threshold(idle_cal, pfa, kind)?;
    let pd = exceed_fraction(busy, thr.value);
    Ok(PdEstimate {
        pd,
        pd_ci95: ci95(pd, busy.len()),
        realized_pfa: exceed_fraction(idle_ver, thr.value),
        threshold: thr.value,
        n_busy: busy.len(),
        n_idle_cal: idle_cal.len(),
        n_idle_ver: idle_ver.len(),
    })
}

/// Pd on a labeled test set. Idle examples alternate between the calibration
/// split (even positions among the idle ones) and the verification split.
pub fn pd_at_pfa(stats: &[f64], labels: &[Label], pfa: f64, kind: DetectorKind) -> Result<PdEstimate> {
    if stats.len() != labels.len() {
        return Err(Error::Precondition(format!("{} statistics for {} labels", stats.len(), labels.len())));
    }
    let (mut busy, mut cal, mut ver) = (Vec::new(), Vec::new(), Vec::new());
    let mut idle_seen = 0usize;
    for (&s, &l) in stats.iter().zip(labels) {
        match l {
            Label::Busy => busy.push(s),
            Label::Idle => {
                if idle_seen % 2 == 0 { cal.push(s) } else { ver.push(s) }
                idle_seen += 1;
            }
        }
    }
    pd_with_idle_pool(&busy, &cal, &ver, pfa, kind)
}

/// One CSV row: one detector at one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub experiment_id: String,
    pub scenario: ScenarioId,
    pub axis: SweepAxis,
    pub grid_value: f64,
    pub detector: String,
    pub estimate: PdEstimate,
    pub seed: u64,
}

pub const CSV_HEADER: &str = "experiment_id,scenario,axis,grid_value,detector,pd,pd_ci95,realized_pfa,threshold,n_busy,n_idle_cal,n_idle_ver,seed";

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub spec: SweepSpec,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        for r in &self.rows {
            let e = &r.estimate;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.experiment_id,
                r.scenario,
                r.axis,
                r.grid_value,
                r.detector,
                e.pd,
                e.pd_ci95,
                e.realized_pfa,
                e.threshold,
                e.n_busy,
                e.n_idle_cal,
                e.n_idle_ver,
                r.seed
            );
        }
        out
    }

    /// Rows of one detector, in grid order.
    pub fn detector_rows<'a>(&'a self, detector: &'a str) -> impl Iterator<Item = &'a SweepRow> + 'a {
        self.rows.iter().filter(move |r| r.detector == detector)
    }

    /// Estimate for `detector` at the grid point nearest `value`.
    pub fn at(&self, detector: &str, value: f64) -> Option<&PdEstimate> {
        self.rows
            .iter()
            .filter(|r| r.detector == detector)
            .min_by(|a, b| (a.grid_value - value).abs().total_cmp(&(b.grid_value - value).abs()))
            .map(|r| &r.estimate)
    }
}

fn render_frames<T: Send>(
    n: usize,
    f: impl Fn(u64) -> Result<Option<T>> + Sync + Send,
) -> Result<Vec<T>> {
    let v = (0..n as u64).into_par_iter().map(f).collect::<Result<Vec<Option<T>>>>()?;
    Ok(v.into_iter().flatten().collect())
}

/// Run one sweep. Results depend only on `spec`, the simulator and the
/// detectors, never on the worker count.
pub fn sweep(spec: &SweepSpec, detectors: &[Detector], sim: &Simulator) -> Result<SweepReport> {
    spec.validate()?;
    if detectors.is_empty() {
        return Err(Error::Precondition("sweep needs at least one detector".into()));
    }
    let s = &spec.settings;
    let idle_seed = spec.idle_seed();
    let idle: Vec<IqFrame> = render_frames(s.idle_cal + s.idle_ver, |j| idle_frame(sim, j, idle_seed).map(Some))?;
    let mut pools = Vec::with_capacity(detectors.len());
    for d in detectors {
        let stats = d.stats(&idle)?;
        let (cal, ver) = stats.split_at(s.idle_cal);
        let thr = calibrate_threshold(cal, s.pfa, d.kind())?;
        pools.push((thr, ver.to_vec()));
    }
    drop(idle);

    let mut rows = Vec::with_capacity(spec.grid.len() * detectors.len());
    for (i, &value) in spec.grid.iter().enumerate() {
        let seed = spec.point_seed(i);
        let (delta_f, timing) = spec.axis.point(value);
        let busy: Vec<IqFrame> = render_frames(s.frames_per_point, |k| {
            let draw = draw_params(spec.scenario, delta_f, timing, k, seed)?;
            if draw.label() == Label::Busy {
                Ok(Some(render(sim, &draw)?.frame))
            } else {
                Ok(None)
            }
        })?;
        for (d, (thr, ver)) in detectors.iter().zip(&pools) {
            let stats = d.stats(&busy)?;
            let pd = exceed_fraction(&stats, thr.value);
            rows.push(SweepRow {
                experiment_id: spec.experiment_id.clone(),
                scenario: spec.scenario,
                axis: spec.axis,
                grid_value: value,
                detector: d.name().to_string(),
                estimate: PdEstimate {
                    pd,
                    pd_ci95: ci95(pd, stats.len()),
                    realized_pfa: exceed_fraction(ver, thr.value),
                    threshold: thr.value,
                    n_busy: stats.len(),
                    n_idle_cal: s.idle_cal,
                    n_idle_ver: s.idle_ver,
                },
                seed,
            });
        }
    }
    Ok(SweepReport { spec: spec.clone(), rows })
}
