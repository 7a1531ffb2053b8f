//! Labeled sensing examples under the three interference scenarios and the
//! four training conditions.

mod file;

pub use file::{load_dataset, save_dataset, DATASET_MAGIC, DATASET_VERSION};

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;

use crate::baseband::{BurstParams, IqFrame, Simulator};
use crate::rng::{self, tag};
use crate::{Error, Result};

/// Interference scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScenarioId {
    /// No adjacent-subcarrier interference.
    A,
    /// Interferer present exactly when the signal is present.
    B,
    /// Interferer present independently of the signal.
    C,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 3] = [ScenarioId::A, ScenarioId::B, ScenarioId::C];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Result<Self> {
        Self::ALL
            .get(code as usize)
            .copied()
            .ok_or_else(|| Error::Format(format!("unknown scenario code {code}")))
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScenarioId::A => "A",
            ScenarioId::B => "B",
            ScenarioId::C => "C",
        })
    }
}

impl FromStr for ScenarioId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" => Ok(ScenarioId::A),
            "B" => Ok(ScenarioId::B),
            "C" => Ok(ScenarioId::C),
            _ => Err(Error::Config(format!("unknown scenario {s:?} (valid: A, B, C)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Idle = 0,
    Busy = 1,
}

impl Label {
    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Label::Idle),
            1 => Ok(Label::Busy),
            _ => Err(Error::Format(format!("unknown label code {code}"))),
        }
    }
}

/// Training condition of the four learned detectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NnCondition {
    /// No frequency offset, zero phase and timing offset.
    Nn1,
    /// No frequency offset, random phase and timing.
    Nn2,
    /// Frequency offset uniform on ±W/4, random phase and timing.
    Nn3,
    /// Frequency offset uniform on ±W/2, random phase and timing.
    Nn4,
}

impl NnCondition {
    pub const ALL: [NnCondition; 4] =
        [NnCondition::Nn1, NnCondition::Nn2, NnCondition::Nn3, NnCondition::Nn4];

    pub fn name(self) -> &'static str {
        match self {
            NnCondition::Nn1 => "NN1",
            NnCondition::Nn2 => "NN2",
            NnCondition::Nn3 => "NN3",
            NnCondition::Nn4 => "NN4",
        }
    }

    pub fn phase_timing(self) -> PhaseTiming {
        match self {
            NnCondition::Nn1 => PhaseTiming::Zero,
            _ => PhaseTiming::Random,
        }
    }

    pub fn offset_law(self) -> OffsetLaw {
        match self {
            NnCondition::Nn1 | NnCondition::Nn2 => OffsetLaw::Fixed(0.0),
            NnCondition::Nn3 => OffsetLaw::Uniform { halfwidth: 0.25 },
            NnCondition::Nn4 => OffsetLaw::Uniform { halfwidth: 0.5 },
        }
    }

    pub fn scenario_mix(self) -> ScenarioMix {
        match self {
            // At zero offset with no guard band the interferer has no in-band
            // power, so the zero-offset conditions use scenario A alone.
            NnCondition::Nn1 | NnCondition::Nn2 => ScenarioMix::Single(ScenarioId::A),
            NnCondition::Nn3 | NnCondition::Nn4 => ScenarioMix::Mixed,
        }
    }
}

impl fmt::Display for NnCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NnCondition {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown condition {s:?} (valid: NN1, NN2, NN3, NN4)")))
    }
}

/// Frequency-offset law, in units of `W`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OffsetLaw {
    Fixed(f64),
    /// Uniform on `[-halfwidth, halfwidth]`; halfwidth is 1/4 or 1/2.
    Uniform { halfwidth: f64 },
}

impl OffsetLaw {
    pub fn validate(&self) -> Result<()> {
        match *self {
            OffsetLaw::Fixed(v) if (-0.5..=0.5).contains(&v) => Ok(()),
            OffsetLaw::Fixed(v) => Err(Error::Config(format!("fixed offset {v} outside [-1/2, 1/2]"))),
            OffsetLaw::Uniform { halfwidth } if halfwidth == 0.25 || halfwidth == 0.5 => Ok(()),
            OffsetLaw::Uniform { halfwidth } => Err(Error::Config(format!(
                "uniform offset halfwidth must be 1/4 or 1/2, got {halfwidth}"
            ))),
        }
    }

    fn draw(&self, base_seed: u64, index: u64) -> f64 {
        match *self {
            OffsetLaw::Fixed(v) => v,
            OffsetLaw::Uniform { halfwidth } => {
                rng::stream(base_seed, index, tag::OFFSET).random_range(-halfwidth..=halfwidth)
            }
        }
    }
}

impl fmt::Display for OffsetLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            OffsetLaw::Fixed(v) => write!(f, "fixed {v}"),
            OffsetLaw::Uniform { halfwidth } if halfwidth == 0.25 => f.write_str("uniform W/4"),
            OffsetLaw::Uniform { halfwidth } if halfwidth == 0.5 => f.write_str("uniform W/2"),
            OffsetLaw::Uniform { halfwidth } => write!(f, "uniform {halfwidth}"),
        }
    }
}

impl FromStr for OffsetLaw {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let law = match s.split_whitespace().collect::<Vec<_>>().as_slice() {
            ["uniform", "W/4"] => OffsetLaw::Uniform { halfwidth: 0.25 },
            ["uniform", "W/2"] => OffsetLaw::Uniform { halfwidth: 0.5 },
            ["fixed", v] => OffsetLaw::Fixed(
                v.parse().map_err(|_| Error::Config(format!("bad fixed offset {v:?}")))?,
            ),
            _ => return Err(Error::Config(format!("unknown offset law {s:?}"))),
        };
        law.validate()?;
        Ok(law)
    }
}

/// How phase and symbol timing of the primary signal are drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhaseTiming {
    /// θ = 0, τ = 0.
    Zero,
    /// θ ~ U(0, 2π), τ ~ U(0, T_sym).
    Random,
    /// τ fixed (fraction of a symbol), θ random.
    FixedTau(f64),
    /// θ fixed (radians, wrapped into [0, 2π)), τ random.
    FixedTheta(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioMix {
    Single(ScenarioId),
    /// Equal thirds, cycling A, B, C by example index.
    Mixed,
}

impl ScenarioMix {
    pub fn scenario_for(self, index: u64) -> ScenarioId {
        match self {
            ScenarioMix::Single(s) => s,
            ScenarioMix::Mixed => ScenarioId::ALL[(index % 3) as usize],
        }
    }
}

impl fmt::Display for ScenarioMix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScenarioMix::Single(s) => write!(f, "{s}"),
            ScenarioMix::Mixed => f.write_str("mixed"),
        }
    }
}

impl FromStr for ScenarioMix {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mixed" => Ok(ScenarioMix::Mixed),
            other => other.parse().map(ScenarioMix::Single),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Train,
    Val,
    Test,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Train => "train",
            Role::Val => "val",
            Role::Test => "test",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Role {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Role::Train),
            "val" => Ok(Role::Val),
            "test" => Ok(Role::Test),
            _ => Err(Error::Config(format!("unknown role {s:?} (valid: train, val, test)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub condition: NnCondition,
    pub scenario_mix: ScenarioMix,
    pub size: usize,
    pub base_seed: u64,
    pub role: Role,
    pub offset_law: OffsetLaw,
}

impl DatasetSpec {
    /// Spec with the mix and offset law of the given training condition.
    pub fn for_condition(condition: NnCondition, role: Role, size: usize, base_seed: u64) -> Self {
        Self {
            condition,
            scenario_mix: condition.scenario_mix(),
            size,
            base_seed,
            role,
            offset_law: condition.offset_law(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.size == 0 {
            return Err(Error::Config("dataset size must be >= 1".into()));
        }
        if self.scenario_mix == ScenarioMix::Mixed && self.size % 3 != 0 {
            return Err(Error::Config(format!(
                "mixed dataset size {} is not divisible by 3",
                self.size
            )));
        }
        self.offset_law.validate()?;
        if matches!(self.condition, NnCondition::Nn1 | NnCondition::Nn2)
            && self.offset_law != OffsetLaw::Fixed(0.0)
        {
            return Err(Error::Config(format!(
                "{} data has no frequency offset, got law {}",
                self.condition, self.offset_law
            )));
        }
        Ok(())
    }
}

/// Parameters of one example, drawn before any waveform is synthesized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExampleDraw {
    pub scenario: ScenarioId,
    pub delta_f: f64,
    pub signal: BurstParams,
    pub ici: BurstParams,
    pub sig_present: bool,
    pub ici_present: bool,
    pub noise_seed: u64,
    pub example_index: u64,
}

impl ExampleDraw {
    pub fn label(&self) -> Label {
        if self.sig_present || self.ici_present {
            Label::Busy
        } else {
            Label::Idle
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensingExample {
    pub frame: IqFrame,
    pub label: Label,
    pub scenario: ScenarioId,
    pub delta_f: f64,
    pub theta_sig: f64,
    pub tau_sig: f64,
    pub theta_ici: Option<f64>,
    pub tau_ici: Option<f64>,
    pub sig_present: bool,
    pub ici_present: bool,
    pub example_index: u64,
}

/// Draw the random parameters of example `index`.
pub fn draw_params(
    scenario: ScenarioId,
    delta_f: f64,
    phase_timing: PhaseTiming,
    index: u64,
    base_seed: u64,
) -> Result<ExampleDraw> {
    if !(-0.5..=0.5).contains(&delta_f) {
        return Err(Error::Precondition(format!("offset {delta_f} outside [-W/2, W/2]")));
    }
    let mut rng = rng::stream(base_seed, index, tag::EXAMPLE);
    // Fixed consumption order keeps every stream aligned across conditions.
    let sig_coin: bool = rng.random();
    let ici_coin: bool = rng.random();
    let theta_sig: f64 = rng.random_range(0.0..TAU);
    let tau_sig: f64 = rng.random_range(0.0..1.0);
    let seed_sig: u64 = rng.random();
    let theta_ici: f64 = rng.random_range(0.0..TAU);
    let tau_ici: f64 = rng.random_range(0.0..1.0);
    let seed_ici: u64 = rng.random();
    let noise_seed: u64 = rng.random();

    let (theta_sig, tau_sig) = match phase_timing {
        PhaseTiming::Zero => (0.0, 0.0),
        PhaseTiming::Random => (theta_sig, tau_sig),
        PhaseTiming::FixedTau(tau) => (theta_sig, tau),
        PhaseTiming::FixedTheta(theta) => (theta.rem_euclid(TAU), tau_sig),
    };

    let sig_present = sig_coin;
    let ici_present = match scenario {
        ScenarioId::A => false,
        ScenarioId::B => sig_present,
        ScenarioId::C => ici_coin,
    };

    let signal = BurstParams { theta: theta_sig, tau: tau_sig, delta_f, seed: seed_sig };
    let ici = BurstParams { theta: theta_ici, tau: tau_ici, delta_f, seed: seed_ici };
    signal.validate()?;
    Ok(ExampleDraw {
        scenario,
        delta_f,
        signal,
        ici,
        sig_present,
        ici_present,
        noise_seed,
        example_index: index,
    })
}

/// Synthesize the received frame for a parameter draw.
pub fn render(sim: &Simulator, draw: &ExampleDraw) -> Result<SensingExample> {
    let n = sim.config().burst_symbols;
    let signal = if draw.sig_present { Some(sim.synth_burst(&draw.signal, n)?) } else { None };
    let ici = if draw.ici_present { Some(sim.synth_adjacent_burst(&draw.ici, n)?) } else { None };
    let frame = sim.apply_channel(signal.as_deref(), ici.as_deref(), draw.noise_seed)?;
    Ok(SensingExample {
        frame,
        label: draw.label(),
        scenario: draw.scenario,
        delta_f: draw.delta_f,
        theta_sig: draw.signal.theta,
        tau_sig: draw.signal.tau,
        theta_ici: draw.ici_present.then_some(draw.ici.theta),
        tau_ici: draw.ici_present.then_some(draw.ici.tau),
        sig_present: draw.sig_present,
        ici_present: draw.ici_present,
        example_index: draw.example_index,
    })
}

/// Draw and synthesize one labeled example.
pub fn draw_example(
    sim: &Simulator,
    scenario: ScenarioId,
    delta_f: f64,
    phase_timing: PhaseTiming,
    index: u64,
    base_seed: u64,
) -> Result<SensingExample> {
    render(sim, &draw_params(scenario, delta_f, phase_timing, index, base_seed)?)
}

/// A frame of filtered noise only (an idle frame in every scenario).
pub fn idle_frame(sim: &Simulator, index: u64, base_seed: u64) -> Result<IqFrame> {
    let noise_seed = rng::derive_seed(base_seed, index, tag::IDLE);
    sim.apply_channel(None, None, noise_seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub spec: DatasetSpec,
    pub sim: crate::baseband::SimConfig,
    pub calibration: crate::baseband::Calibration,
    pub examples: Vec<SensingExample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn count_by_scenario(&self, scenario: ScenarioId) -> usize {
        self.examples.iter().filter(|e| e.scenario == scenario).count()
    }
}

/// Build the dataset described by `spec`. Examples are generated in parallel
/// and collected in index order, so the result does not depend on the number
/// of worker threads.
pub fn build_dataset(spec: &DatasetSpec, sim: &Simulator) -> Result<Dataset> {
    spec.validate()?;
    let phase_timing = spec.condition.phase_timing();
    let examples = (0..spec.size as u64)
        .into_par_iter()
        .map(|i| {
            let delta_f = spec.offset_law.draw(spec.base_seed, i);
            draw_example(
                sim,
                spec.scenario_mix.scenario_for(i),
                delta_f,
                phase_timing,
                i,
                spec.base_seed,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        spec: spec.clone(),
        sim: sim.config().clone(),
        calibration: sim.calibration(),
        examples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baseband::SimConfig;

    fn sim() -> Simulator {
        Simulator::new(SimConfig::default()).unwrap()
    }

    #[test]
    fn scenario_a_never_has_interference() {
        for i in 0..500 {
            let d = draw_params(ScenarioId::A, 0.3, PhaseTiming::Random, i, 1).unwrap();
            assert!(!d.ici_present);
            assert_eq!(d.label() == Label::Idle, !d.sig_present);
        }
    }

    #[test]
    fn scenario_b_couples_interference_to_signal() {
        let mut seen_busy = false;
        for i in 0..500 {
            let d = draw_params(ScenarioId::B, -0.2, PhaseTiming::Random, i, 2).unwrap();
            assert_eq!(d.ici_present, d.sig_present);
            seen_busy |= d.sig_present;
        }
        assert!(seen_busy);
    }

    #[test]
    fn scenario_c_interference_only_is_busy() {
        let s = sim();
        let draw = (0..1000)
            .map(|i| draw_params(ScenarioId::C, 0.1, PhaseTiming::Random, i, 3).unwrap())
            .find(|d| !d.sig_present && d.ici_present)
            .expect("an interference-only draw");
        let ex = render(&s, &draw).unwrap();
        assert_eq!(ex.label, Label::Busy);
        assert!(ex.theta_ici.is_some() && ex.tau_ici.is_some());
    }

    #[test]
    fn out_of_range_offset_is_rejected() {
        assert!(matches!(
            draw_params(ScenarioId::A, 0.51, PhaseTiming::Random, 0, 0),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn phase_timing_overrides() {
        let d = draw_params(ScenarioId::A, 0.0, PhaseTiming::Zero, 5, 5).unwrap();
        assert_eq!((d.signal.theta, d.signal.tau), (0.0, 0.0));
        let d = draw_params(ScenarioId::A, 0.0, PhaseTiming::FixedTau(0.25), 5, 5).unwrap();
        assert_eq!(d.signal.tau, 0.25);
        let d = draw_params(ScenarioId::A, 0.0, PhaseTiming::FixedTheta(-0.5), 5, 5).unwrap();
        assert!((d.signal.theta - (TAU - 0.5)).abs() < 1e-15);
    }

    #[test]
    fn nn1_examples_have_zero_phase_and_timing() {
        let spec = DatasetSpec::for_condition(NnCondition::Nn1, Role::Train, 100, 11);
        let ds = build_dataset(&spec, &sim()).unwrap();
        assert_eq!(ds.len(), 100);
        assert!(ds.examples.iter().all(|e| e.theta_sig == 0.0 && e.tau_sig == 0.0 && e.delta_f == 0.0));
    }

    #[test]
    fn mixed_sets_have_equal_thirds() {
        let spec = DatasetSpec::for_condition(NnCondition::Nn4, Role::Train, 300, 12);
        let ds = build_dataset(&spec, &sim()).unwrap();
        for s in ScenarioId::ALL {
            assert_eq!(ds.count_by_scenario(s), 100);
        }
        assert!(ds.examples.iter().all(|e| e.delta_f.abs() <= 0.5));
        assert!(ds.examples.iter().any(|e| e.delta_f.abs() > 0.25));
    }

    #[test]
    fn spec_validation() {
        let mut spec = DatasetSpec::for_condition(NnCondition::Nn3, Role::Val, 100, 0);
        assert!(spec.validate().is_err());
        spec.size = 99;
        spec.validate().unwrap();
        spec.size = 0;
        assert!(spec.validate().is_err());
        let mut nn2 = DatasetSpec::for_condition(NnCondition::Nn2, Role::Train, 10, 0);
        nn2.offset_law = OffsetLaw::Uniform { halfwidth: 0.5 };
        assert!(nn2.validate().is_err());
        assert!(OffsetLaw::Uniform { halfwidth: 0.3 }.validate().is_err());
    }

    #[test]
    fn text_forms_round_trip() {
        for law in [OffsetLaw::Fixed(0.0), OffsetLaw::Fixed(-0.35), OffsetLaw::Uniform { halfwidth: 0.25 }, OffsetLaw::Uniform { halfwidth: 0.5 }] {
            assert_eq!(law.to_string().parse::<OffsetLaw>().unwrap(), law);
        }
        assert_eq!(NnCondition::Nn4.offset_law().to_string(), "uniform W/2");
        for c in NnCondition::ALL {
            assert_eq!(c.name().parse::<NnCondition>().unwrap(), c);
        }
        assert!("NN5".parse::<NnCondition>().is_err());
        for m in [ScenarioMix::Mixed, ScenarioMix::Single(ScenarioId::B)] {
            assert_eq!(m.to_string().parse::<ScenarioMix>().unwrap(), m);
        }
    }
}
