use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::{sweep, SweepAxis, SweepReport, SweepSpec};
use crate::baseband::Simulator;
use crate::config::{content_hash, RunConfig};
use crate::dataset::{NnCondition, ScenarioId};
use crate::detectors::Detector;
use crate::mlp::MlpParams;
use crate::rng::{self, tag};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExperimentId {
    /// Timing and phase sweeps, scenario A.
    I,
    /// Frequency-offset sweep, scenario A.
    IIA,
    /// Frequency-offset sweep, scenario B.
    IIB,
    /// Frequency-offset sweep, scenario C.
    IIC,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 4] = [ExperimentId::I, ExperimentId::IIA, ExperimentId::IIB, ExperimentId::IIC];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentId::I => "I",
            ExperimentId::IIA => "II.A",
            ExperimentId::IIB => "II.B",
            ExperimentId::IIC => "II.C",
        }
    }

    /// Trained classifiers compared in this experiment.
    pub fn required_models(self) -> &'static [NnCondition] {
        match self {
            ExperimentId::I => &[NnCondition::Nn1, NnCondition::Nn2],
            _ => &[NnCondition::Nn2, NnCondition::Nn3, NnCondition::Nn4],
        }
    }

    /// `(axis, scenario)` of each sweep.
    pub fn sweeps(self) -> Vec<(SweepAxis, ScenarioId)> {
        match self {
            ExperimentId::I => vec![(SweepAxis::Tau, ScenarioId::A), (SweepAxis::Theta, ScenarioId::A)],
            ExperimentId::IIA => vec![(SweepAxis::DeltaF, ScenarioId::A)],
            ExperimentId::IIB => vec![(SweepAxis::DeltaF, ScenarioId::B)],
            ExperimentId::IIC => vec![(SweepAxis::DeltaF, ScenarioId::C)],
        }
    }

    fn index(self) -> u64 {
        Self::ALL.iter().position(|&e| e == self).unwrap() as u64
    }

    /// Sweep specs with seeds derived from `cfg.master_seed`.
    pub fn sweep_specs(self, cfg: &RunConfig) -> Vec<SweepSpec> {
        self.sweeps()
            .into_iter()
            .enumerate()
            .map(|(k, (axis, scenario))| SweepSpec {
                experiment_id: self.name().to_string(),
                axis,
                grid: axis.default_grid(),
                scenario,
                settings: cfg.sweep.clone(),
                seed: rng::derive_seed(cfg.master_seed, self.index() * 4 + k as u64, tag::SWEEP),
            })
            .collect()
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment {s:?} (valid: I, II.A, II.B, II.C)")))
    }
}

/// Reports of one experiment plus a plain-text manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentBundle {
    pub id: ExperimentId,
    pub reports: Vec<SweepReport>,
    pub manifest: String,
}

impl ExperimentBundle {
    pub fn csv_name(report: &SweepReport) -> String {
        format!("{}_sweep.csv", report.spec.axis)
    }

    /// Report for `axis`, if the experiment swept it.
    pub fn report(&self, axis: SweepAxis) -> Option<&SweepReport> {
        self.reports.iter().find(|r| r.spec.axis == axis)
    }

    /// Write every CSV and `manifest.txt` into `dir`.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        for r in &self.reports {
            fs::write(dir.join(Self::csv_name(r)), r.to_csv())?;
        }
        fs::write(dir.join("manifest.txt"), &self.manifest)?;
        Ok(())
    }
}

/// Content hash of a parameter set (little-endian f64 values, layer order).
pub fn params_hash(params: &MlpParams) -> String {
    let bytes: Vec<u8> = params.values().flat_map(|v| v.to_le_bytes()).collect();
    content_hash(&bytes)
}

/// Run every sweep of `id` with the energy detector and the required models.
pub fn run_experiment(
    id: ExperimentId,
    cfg: &RunConfig,
    sim: &Simulator,
    models: &[(NnCondition, MlpParams)],
) -> Result<ExperimentBundle> {
    let mut detectors = Vec::new();
    for &cond in id.required_models() {
        let params = models
            .iter()
            .find(|(c, _)| *c == cond)
            .map(|(_, p)| p.clone())
            .ok_or_else(|| Error::MissingModel { name: cond.name().into(), path: "(not supplied)".into() })?;
        detectors.push(Detector::Nn { name: cond.name().into(), params });
    }
    detectors.push(Detector::Energy);

    let mut reports = Vec::new();
    for spec in id.sweep_specs(cfg) {
        reports.push(sweep(&spec, &detectors, sim)?);
    }

    let mut m = vec![
        ("experiment".to_string(), id.name().to_string()),
        ("master_seed".into(), cfg.master_seed.to_string()),
        ("config_hash".into(), cfg.hash()),
        (
            "threshold_policy".into(),
            "per (detector, sweep): order statistic of a pooled idle calibration set; busy iff stat > threshold".into(),
        ),
        ("pd_ci95".into(), "1.96 * sqrt(pd * (1 - pd) / n_busy)".into()),
    ];
    for r in &reports {
        let s = &r.spec;
        let key = format!("sweep.{}", s.axis);
        m.push((format!("{key}.scenario"), s.scenario.to_string()));
        m.push((format!("{key}.points"), s.grid.len().to_string()));
        m.push((format!("{key}.seed"), s.seed.to_string()));
        m.push((format!("{key}.idle_seed"), s.idle_seed().to_string()));
        m.push((format!("{key}.csv_hash"), content_hash(r.to_csv().as_bytes())));
    }
    for d in &detectors {
        if let Detector::Nn { name, params } = d {
            m.push((format!("model.{name}.params_hash"), params_hash(params)));
        }
    }
    for line in cfg.to_text().lines() {
        m.push((format!("config.{}", line.split_once(':').unwrap().0), line.split_once(':').unwrap().1.trim().to_string()));
    }
    let manifest = m.iter().map(|(k, v)| format!("{k}: {v}\n")).collect();
    Ok(ExperimentBundle { id, reports, manifest })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_round_trip() {
        for id in ExperimentId::ALL {
            assert_eq!(id.name().parse::<ExperimentId>().unwrap(), id);
        }
        let err = "III".parse::<ExperimentId>().unwrap_err().to_string();
        assert!(err.contains("II.A"));
    }

    #[test]
    fn experiment_layout() {
        assert_eq!(ExperimentId::I.sweeps().len(), 2);
        assert_eq!(ExperimentId::IIB.sweeps(), vec![(SweepAxis::DeltaF, ScenarioId::B)]);
        let cfg = RunConfig::default();
        let seeds: std::collections::HashSet<u64> =
            ExperimentId::ALL.iter().flat_map(|e| e.sweep_specs(&cfg)).map(|s| s.seed).collect();
        assert_eq!(seeds.len(), 5);
    }

    #[test]
    fn missing_model_is_named() {
        let sim = Simulator::new(Default::default()).unwrap();
        let err = run_experiment(ExperimentId::IIA, &RunConfig::default(), &sim, &[]).unwrap_err();
        assert!(err.to_string().contains("train --condition NN2"), "{err}");
    }
}
