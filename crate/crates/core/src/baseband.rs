//! Complex-baseband synthesis of the primary signal and its adjacent-subcarrier
//! interferer, followed by the sensing receiver's channel: AWGN, an ideal
//! brick-wall low-pass of two-sided width `W`, and decimation into frames.
//!
//! All waveforms are synthesized at `sps_fine` samples per symbol over a burst
//! of `burst_symbols` symbols. Filtering is circular over the burst, and the
//! sensing frame is cut from the middle of the burst so that the burst edges
//! are far from the frame.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::sync::Arc;

use num_complex::{Complex32, Complex64};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// RRC roll-off factor.
    pub rolloff: f64,
    /// Synthesis rate in samples per symbol.
    pub sps_fine: usize,
    /// Output rate in samples per symbol.
    pub sps_out: usize,
    /// Symbols per sensing interval.
    pub frame_symbols: usize,
    /// Output samples per frame.
    pub frame_len: usize,
    /// In-band SNR after the low-pass filter, for a signal with no frequency offset.
    pub snr_db_post_lpf: f64,
    /// One-sided RRC span in symbols.
    pub rrc_span_symbols: usize,
    /// Symbols synthesized per burst; the frame sits in the middle.
    pub burst_symbols: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            rolloff: 0.35,
            sps_fine: 40,
            sps_out: 10,
            frame_symbols: 11,
            frame_len: 111,
            snr_db_post_lpf: 0.0,
            rrc_span_symbols: 8,
            burst_symbols: 48,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.rolloff > 0.0 && self.rolloff < 1.0) {
            return bad(format!("rolloff must lie in (0, 1), got {}", self.rolloff));
        }
        if self.sps_out < 2 {
            return bad(format!("sps_out must be >= 2, got {}", self.sps_out));
        }
        if self.sps_fine < 40 {
            return bad(format!("sps_fine must be >= 40, got {}", self.sps_fine));
        }
        if self.sps_fine % self.sps_out != 0 {
            return bad(format!(
                "sps_fine ({}) must be an integer multiple of sps_out ({})",
                self.sps_fine, self.sps_out
            ));
        }
        if self.frame_symbols == 0 || self.frame_len < self.frame_symbols * self.sps_out {
            return bad(format!(
                "frame_len {} does not cover {} symbols at {} samples/symbol",
                self.frame_len, self.frame_symbols, self.sps_out
            ));
        }
        if self.rrc_span_symbols < 4 {
            return bad(format!("rrc_span_symbols must be >= 4, got {}", self.rrc_span_symbols));
        }
        if self.burst_symbols < self.frame_symbols + 2 * self.rrc_span_symbols {
            return bad(format!(
                "burst_symbols {} must be >= frame_symbols + 2 * rrc_span_symbols = {}",
                self.burst_symbols,
                self.frame_symbols + 2 * self.rrc_span_symbols
            ));
        }
        if (self.frame_len - 1) * self.decimation() >= self.burst_len() {
            return bad("frame does not fit inside the burst".into());
        }
        if !self.snr_db_post_lpf.is_finite() {
            return bad("snr_db_post_lpf must be finite".into());
        }
        Ok(())
    }

    /// Signal bandwidth `W = (1 + rolloff) / T_sym`.
    pub fn bandwidth(&self) -> f64 {
        1.0 + self.rolloff
    }

    /// Subcarrier spacing; equal to `W` (no guard band).
    pub fn subcarrier_spacing(&self) -> f64 {
        self.bandwidth()
    }

    pub fn decimation(&self) -> usize {
        self.sps_fine / self.sps_out
    }

    pub fn burst_len(&self) -> usize {
        self.burst_symbols * self.sps_fine
    }

    /// Fine-rate index of the first frame sample.
    pub fn frame_start(&self) -> usize {
        let covered = (self.frame_len - 1) * self.decimation() + 1;
        (self.burst_len() - covered) / 2
    }

    /// Length of the flattened real feature vector.
    pub fn feature_len(&self) -> usize {
        2 * self.frame_len
    }
}

/// Per-burst impairments and data seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BurstParams {
    /// Carrier phase offset in radians, `[0, 2π)`.
    pub theta: f64,
    /// Symbol time offset as a fraction of `T_sym`, `[0, 1)`.
    pub tau: f64,
    /// Carrier frequency offset in units of `W`, `[-1/2, 1/2]`.
    pub delta_f: f64,
    /// Seed of the QPSK data stream.
    pub seed: u64,
}

impl BurstParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..TAU).contains(&self.theta) {
            return Err(Error::Precondition(format!("theta {} outside [0, 2π)", self.theta)));
        }
        if !(0.0..1.0).contains(&self.tau) {
            return Err(Error::Precondition(format!("tau {} outside [0, 1)", self.tau)));
        }
        if !(-0.5..=0.5).contains(&self.delta_f) {
            return Err(Error::Precondition(format!(
                "delta_f {} outside [-1/2, 1/2]",
                self.delta_f
            )));
        }
        Ok(())
    }
}

/// Baseband offset, in units of `W`, of the adjacent subcarrier that moves
/// into the sensing band when the primary carrier is offset by `delta_f`.
pub fn adjacent_offset(delta_f: f64) -> f64 {
    if delta_f >= 0.0 {
        delta_f - 1.0
    } else {
        delta_f + 1.0
    }
}

/// One sensing interval of complex baseband samples.
#[derive(Debug, Clone, PartialEq)]
pub struct IqFrame {
    samples: Vec<Complex32>,
}

impl IqFrame {
    pub fn new(samples: Vec<Complex32>) -> Result<Self> {
        if let Some(i) = samples.iter().position(|s| !(s.re.is_finite() && s.im.is_finite())) {
            return Err(Error::Precondition(format!("frame sample {i} is not finite")));
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[Complex32] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean `|x|²` over the frame.
    pub fn mean_power(&self) -> f64 {
        let e: f64 = self.samples.iter().map(|s| (s.re as f64).powi(2) + (s.im as f64).powi(2)).sum();
        e / self.samples.len().max(1) as f64
    }
}

/// Continuous unit-energy root-raised-cosine pulse with `T_sym = 1`.
pub fn rrc_pulse(t: f64, rolloff: f64) -> f64 {
    let b = rolloff;
    if t.abs() < 1e-12 {
        return 1.0 - b + 4.0 * b / PI;
    }
    if (4.0 * b * t.abs() - 1.0).abs() < 1e-9 {
        let a = PI / (4.0 * b);
        return b / 2f64.sqrt() * ((1.0 + 2.0 / PI) * a.sin() + (1.0 - 2.0 / PI) * a.cos());
    }
    let num = (PI * t * (1.0 - b)).sin() + 4.0 * b * t * (PI * t * (1.0 + b)).cos();
    let den = PI * t * (1.0 - (4.0 * b * t).powi(2));
    num / den
}

/// RRC taps at `sps` samples per symbol over `±span_symbols`, scaled so that
/// the squared taps sum to one.
pub fn rrc_taps(rolloff: f64, sps: usize, span_symbols: usize) -> Result<Vec<f64>> {
    if !(rolloff > 0.0 && rolloff < 1.0) {
        return Err(Error::Config(format!("rolloff must lie in (0, 1), got {rolloff}")));
    }
    if sps < 2 {
        return Err(Error::Config(format!("sps must be >= 2, got {sps}")));
    }
    if span_symbols < 4 {
        return Err(Error::Config(format!("span must be >= 4 symbols, got {span_symbols}")));
    }
    let half = (span_symbols * sps) as isize;
    let mut taps: Vec<f64> = (-half..=half)
        .map(|k| rrc_pulse(k as f64 / sps as f64, rolloff))
        .collect();
    let norm = taps.iter().map(|h| h * h).sum::<f64>().sqrt();
    taps.iter_mut().for_each(|h| *h /= norm);
    Ok(taps)
}

/// `n` Gray-mapped QPSK symbols `(±1 ± j)/√2` from a seeded bit stream.
pub fn gen_qpsk_symbols(n: usize, seed: u64) -> Vec<Complex64> {
    let a = std::f64::consts::FRAC_1_SQRT_2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut word = 0u64;
    for i in 0..n {
        if i % 32 == 0 {
            word = rng.next_u64();
        }
        let bits = (word >> (2 * (i % 32))) & 0b11;
        let re = if bits & 0b01 == 0 { a } else { -a };
        let im = if bits & 0b10 == 0 { a } else { -a };
        out.push(Complex64::new(re, im));
    }
    out
}

/// Gains fixed once per configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    /// Amplitude applied to the unit-energy pulse train so that a burst with
    /// no frequency offset has unit power after the low-pass filter.
    pub signal_gain: f64,
    /// Variance of the fine-rate complex white noise.
    pub noise_variance: f64,
    /// Number of DFT bins passed by the brick-wall mask.
    pub passband_bins: usize,
    /// Fraction of the truncated pulse's energy inside the passband.
    pub inband_fraction: f64,
}

/// Simulator bound to one configuration: pulse taps, calibration constants and
/// FFT plans for the brick-wall filter.
pub struct Simulator {
    cfg: SimConfig,
    taps: Vec<f64>,
    calibration: Calibration,
    passband: Vec<bool>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Simulator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Simulator")
            .field("cfg", &self.cfg)
            .field("calibration", &self.calibration)
            .finish_non_exhaustive()
    }
}

impl Simulator {
    pub fn new(cfg: SimConfig) -> Result<Self> {
        cfg.validate()?;
        let taps = rrc_taps(cfg.rolloff, cfg.sps_fine, cfg.rrc_span_symbols)?;
        let len = cfg.burst_len();
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(len);
        let ifft = planner.plan_fft_inverse(len);

        let half_w = cfg.bandwidth() / 2.0;
        let passband: Vec<bool> = (0..len)
            .map(|k| bin_frequency(k, len, cfg.sps_fine).abs() <= half_w + 1e-9)
            .collect();
        let passband_bins = passband.iter().filter(|&&p| p).count();

        let mut spectrum: Vec<Complex64> = taps.iter().map(|&h| Complex64::new(h, 0.0)).collect();
        spectrum.resize(len, Complex64::new(0.0, 0.0));
        fft.process(&mut spectrum);
        let inband_fraction = spectrum
            .iter()
            .zip(&passband)
            .filter(|(_, &p)| p)
            .map(|(h, _)| h.norm_sqr())
            .sum::<f64>()
            / len as f64;

        let noise_power = 10f64.powf(-cfg.snr_db_post_lpf / 10.0);
        let calibration = Calibration {
            signal_gain: (cfg.sps_fine as f64 / inband_fraction).sqrt(),
            noise_variance: noise_power * len as f64 / passband_bins as f64,
            passband_bins,
            inband_fraction,
        };

        Ok(Self { cfg, taps, calibration, passband, fft, ifft })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn calibration(&self) -> Calibration {
        self.calibration
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    /// Symbols needed for a burst of the configured length.
    pub fn min_burst_symbols(&self) -> usize {
        self.cfg.frame_symbols + 2 * self.cfg.rrc_span_symbols
    }

    /// Pulse-shaped QPSK burst at the primary's offset `p.delta_f`.
    pub fn synth_burst(&self, p: &BurstParams, n_symbols: usize) -> Result<Vec<Complex64>> {
        p.validate()?;
        self.synth_at(p, p.delta_f, n_symbols)
    }

    /// Burst of the adjacent subcarrier that leaks into the band when the
    /// primary is offset by `p.delta_f`. Phase, timing and data come from `p`.
    pub fn synth_adjacent_burst(&self, p: &BurstParams, n_symbols: usize) -> Result<Vec<Complex64>> {
        p.validate()?;
        self.synth_at(p, adjacent_offset(p.delta_f), n_symbols)
    }

    fn synth_at(&self, p: &BurstParams, offset_w: f64, n_symbols: usize) -> Result<Vec<Complex64>> {
        if n_symbols < self.min_burst_symbols() {
            return Err(Error::Precondition(format!(
                "burst of {n_symbols} symbols is shorter than the {} needed to cover the frame and filter tails",
                self.min_burst_symbols()
            )));
        }
        let sps = self.cfg.sps_fine;
        let len = n_symbols * sps;
        let half = (self.cfg.rrc_span_symbols * sps) as isize;
        let delay = (p.tau * sps as f64).round() as isize;
        let gain = self.calibration.signal_gain;

        let mut out = vec![Complex64::new(0.0, 0.0); len];
        for (k, sym) in gen_qpsk_symbols(n_symbols, p.seed).into_iter().enumerate() {
            let first = k as isize * sps as isize + delay - half;
            let a = sym * gain;
            for (j, &h) in self.taps.iter().enumerate() {
                let i = first + j as isize;
                if i < 0 {
                    continue;
                }
                if i as usize >= len {
                    break;
                }
                out[i as usize] += a * h;
            }
        }

        let step = TAU * offset_w * self.cfg.bandwidth() / sps as f64;
        for (i, x) in out.iter_mut().enumerate() {
            *x *= Complex64::from_polar(1.0, step * i as f64 + p.theta);
        }
        Ok(out)
    }

    /// White complex Gaussian noise at the fine rate with the calibrated variance.
    pub fn noise_burst(&self, seed: u64) -> Vec<Complex64> {
        let sigma = (self.calibration.noise_variance / 2.0).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..self.cfg.burst_len())
            .map(|_| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(sigma * re, sigma * im)
            })
            .collect()
    }

    /// Ideal low-pass of two-sided width `W`, applied by DFT masking.
    pub fn lowpass_in_place(&self, buf: &mut [Complex64]) -> Result<()> {
        self.check_len(buf.len(), "buffer")?;
        self.fft.process(buf);
        let scale = 1.0 / buf.len() as f64;
        for (x, &pass) in buf.iter_mut().zip(&self.passband) {
            *x = if pass { *x * scale } else { Complex64::new(0.0, 0.0) };
        }
        self.ifft.process(buf);
        Ok(())
    }

    /// Sum the present components with noise and low-pass the result,
    /// returning the full fine-rate burst.
    pub fn received_burst(
        &self,
        signal: Option<&[Complex64]>,
        ici: Option<&[Complex64]>,
        noise_seed: Option<u64>,
    ) -> Result<Vec<Complex64>> {
        let mut buf = match noise_seed {
            Some(seed) => self.noise_burst(seed),
            None => vec![Complex64::new(0.0, 0.0); self.cfg.burst_len()],
        };
        for (name, comp) in [("signal", signal), ("ici", ici)] {
            if let Some(c) = comp {
                self.check_len(c.len(), name)?;
                buf.iter_mut().zip(c).for_each(|(b, x)| *b += x);
            }
        }
        self.lowpass_in_place(&mut buf)?;
        Ok(buf)
    }

    /// Decimate a filtered fine-rate burst into a sensing frame.
    pub fn frame_from_burst(&self, burst: &[Complex64]) -> Result<IqFrame> {
        self.check_len(burst.len(), "burst")?;
        let start = self.cfg.frame_start();
        let step = self.cfg.decimation();
        let samples = (0..self.cfg.frame_len)
            .map(|m| {
                let x = burst[start + m * step];
                Complex32::new(x.re as f32, x.im as f32)
            })
            .collect();
        IqFrame::new(samples)
    }

    /// Received sensing frame: components plus calibrated AWGN, filtered and decimated.
    pub fn apply_channel(
        &self,
        signal: Option<&[Complex64]>,
        ici: Option<&[Complex64]>,
        noise_seed: u64,
    ) -> Result<IqFrame> {
        let burst = self.received_burst(signal, ici, Some(noise_seed))?;
        self.frame_from_burst(&burst)
    }

    fn check_len(&self, len: usize, what: &str) -> Result<()> {
        if len != self.cfg.burst_len() {
            return Err(Error::Precondition(format!(
                "{what} has {len} samples, expected {}",
                self.cfg.burst_len()
            )));
        }
        Ok(())
    }
}

/// Frequency in cycles per symbol of DFT bin `k` for a length-`len` transform
/// at `sps` samples per symbol.
pub fn bin_frequency(k: usize, len: usize, sps: usize) -> f64 {
    let signed = if 2 * k <= len { k as f64 } else { k as f64 - len as f64 };
    signed * sps as f64 / len as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sim() -> Simulator {
        Simulator::new(SimConfig::default()).unwrap()
    }

    fn params(theta: f64, tau: f64, delta_f: f64, seed: u64) -> BurstParams {
        BurstParams { theta, tau, delta_f, seed }
    }

    #[test]
    fn default_config_is_valid() {
        let cfg = SimConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.feature_len(), 222);
        assert_eq!(cfg.decimation(), 4);
        assert!((cfg.bandwidth() - 1.35).abs() < 1e-15);
    }

    #[test]
    fn config_rejects_bad_values() {
        let base = SimConfig::default();
        for cfg in [
            SimConfig { rolloff: 0.0, ..base.clone() },
            SimConfig { rolloff: 1.0, ..base.clone() },
            SimConfig { sps_fine: 45, ..base.clone() },
            SimConfig { frame_len: 100, ..base.clone() },
            SimConfig { burst_symbols: 20, ..base.clone() },
            SimConfig { sps_fine: 20, ..base.clone() },
        ] {
            assert!(matches!(cfg.validate(), Err(Error::Config(_))), "{cfg:?}");
        }
    }

    #[test]
    fn taps_are_symmetric_and_unit_energy() {
        for (beta, sps, span) in [(0.35, 40, 8), (0.35, 10, 6), (0.25, 4, 4), (0.9, 7, 5)] {
            let taps = rrc_taps(beta, sps, span).unwrap();
            assert_eq!(taps.len(), 2 * span * sps + 1);
            let n = taps.len();
            for k in 0..n / 2 {
                assert_eq!(taps[k], taps[n - 1 - k]);
            }
            let e: f64 = taps.iter().map(|h| h * h).sum();
            assert!((e - 1.0).abs() < 1e-12, "energy {e}");
        }
    }

    #[test]
    fn taps_reject_invalid_arguments() {
        assert!(rrc_taps(0.0, 40, 8).is_err());
        assert!(rrc_taps(1.2, 40, 8).is_err());
        assert!(rrc_taps(0.35, 1, 8).is_err());
        assert!(rrc_taps(0.35, 40, 3).is_err());
    }

    fn limit_oracle(t: f64, beta: f64) -> f64 {
        // Non-singular formula evaluated just either side of `t`.
        let f = |t: f64| {
            let num = (PI * t * (1.0 - beta)).sin() + 4.0 * beta * t * (PI * t * (1.0 + beta)).cos();
            num / (PI * t * (1.0 - (4.0 * beta * t).powi(2)))
        };
        (f(t + 1e-6) + f(t - 1e-6)) / 2.0
    }

    #[test]
    fn singular_points_match_numerical_limit() {
        let beta = 0.35;
        for t in [0.0, 1.0 / (4.0 * beta), -1.0 / (4.0 * beta)] {
            let exact = rrc_pulse(t, beta);
            let oracle = limit_oracle(t, beta);
            assert!(((exact - oracle) / oracle).abs() < 1e-6, "t={t}: {exact} vs {oracle}");
        }
        // Center tap of the normalized filter carries the same ratio.
        let taps = rrc_taps(beta, 40, 8).unwrap();
        let raw: Vec<f64> = (-320..=320).map(|k| rrc_pulse(k as f64 / 40.0, beta)).collect();
        let norm = raw.iter().map(|h| h * h).sum::<f64>().sqrt();
        let center_oracle = limit_oracle(0.0, beta) / norm;
        assert!(((taps[320] - center_oracle) / center_oracle).abs() < 1e-6);
    }

    #[test]
    fn singular_point_on_the_sampling_grid() {
        // 1/(4β) = 1 symbol = 4 samples at β = 0.25, sps = 4.
        let beta = 0.25;
        let taps = rrc_taps(beta, 4, 4).unwrap();
        let raw: Vec<f64> = (-16..=16).map(|k| rrc_pulse(k as f64 / 4.0, beta)).collect();
        let norm = raw.iter().map(|h| h * h).sum::<f64>().sqrt();
        for idx in [16 - 4, 16 + 4] {
            let oracle = limit_oracle(if idx > 16 { 1.0 } else { -1.0 }, beta) / norm;
            assert!(((taps[idx] - oracle) / oracle).abs() < 1e-6);
        }
    }

    #[test]
    fn qpsk_symbols_are_unit_modulus_and_deterministic() {
        let a = gen_qpsk_symbols(1000, 42);
        let b = gen_qpsk_symbols(1000, 42);
        assert_eq!(a, b);
        assert_ne!(a, gen_qpsk_symbols(1000, 43));
        for s in &a {
            assert!((s.norm() - 1.0).abs() <= f64::EPSILON);
            assert_eq!(s.re.abs(), s.im.abs());
        }
    }

    #[test]
    fn qpsk_mean_is_near_zero() {
        let n = 1_000_000;
        let mean: Complex64 = gen_qpsk_symbols(n, 9).iter().sum::<Complex64>() / n as f64;
        assert!(mean.norm() <= 3.0 / (n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn global_phase_factor() {
        let s = sim();
        let n = s.config().burst_symbols;
        let a = s.synth_burst(&params(0.0, 0.3, 0.2, 5), n).unwrap();
        let b = s.synth_burst(&params(PI, 0.3, 0.2, 5), n).unwrap();
        let worst = a.iter().zip(&b).map(|(x, y)| (x + y).norm()).fold(0.0, f64::max);
        assert!(worst <= 1e-12, "{worst}");
    }

    #[test]
    fn burst_matches_direct_pulse_train() {
        let s = sim();
        let cfg = s.config().clone();
        let n = cfg.burst_symbols;
        let wave = s.synth_burst(&params(0.0, 0.0, 0.0, 77), n).unwrap();
        let syms = gen_qpsk_symbols(n, 77);
        let sps = cfg.sps_fine as f64;
        let span = cfg.rrc_span_symbols as f64;
        let grid: Vec<f64> = (-320..=320).map(|k| rrc_pulse(k as f64 / sps, cfg.rolloff)).collect();
        let norm = grid.iter().map(|h| h * h).sum::<f64>().sqrt();
        let gain = s.calibration().signal_gain;
        let mut worst = 0.0f64;
        for (i, x) in wave.iter().enumerate() {
            let t = i as f64 / sps;
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, sym) in syms.iter().enumerate() {
                let dt = t - k as f64;
                if dt.abs() <= span + 1e-12 {
                    acc += sym * rrc_pulse(dt, cfg.rolloff);
                }
            }
            worst = worst.max((x - acc * gain / norm).norm());
        }
        assert!(worst < 1e-9, "{worst}");
    }

    #[test]
    fn burst_power_is_calibrated() {
        let s = sim();
        let n = s.config().burst_symbols;
        let span = s.config().rrc_span_symbols * s.config().sps_fine;
        let mut acc = 0.0;
        let mut count = 0usize;
        for seed in 0..400u64 {
            let tau = (seed % 40) as f64 / 40.0;
            let w = s.synth_burst(&params(1.0, tau, 0.0, seed), n).unwrap();
            for x in &w[span + 40..w.len() - span - 40] {
                acc += x.norm_sqr();
                count += 1;
            }
        }
        let p = acc / count as f64;
        assert!((p - 1.0).abs() < 0.02, "power {p}");
    }

    #[test]
    fn short_burst_is_rejected() {
        let s = sim();
        let r = s.synth_burst(&params(0.0, 0.0, 0.0, 1), 26);
        assert!(matches!(r, Err(Error::Precondition(_))));
        let bad = params(7.0, 0.0, 0.0, 1);
        assert!(s.synth_burst(&bad, 48).is_err());
        assert!(s.synth_burst(&params(0.0, 1.0, 0.0, 1), 48).is_err());
        assert!(s.synth_burst(&params(0.0, 0.0, 0.6, 1), 48).is_err());
    }

    #[test]
    fn mismatched_component_lengths_are_rejected() {
        let s = sim();
        let short = vec![Complex64::new(0.0, 0.0); 100];
        assert!(matches!(s.apply_channel(Some(&short), None, 1), Err(Error::Precondition(_))));
    }

    #[test]
    fn lowpass_is_idempotent() {
        let s = sim();
        let mut once = s.received_burst(None, None, Some(3)).unwrap();
        let before = once.clone();
        s.lowpass_in_place(&mut once).unwrap();
        let worst = once.iter().zip(&before).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(worst <= 1e-9, "{worst}");
    }

    #[test]
    fn received_spectrum_is_band_limited() {
        let s = sim();
        let cfg = s.config().clone();
        let sig = s.synth_burst(&params(0.4, 0.2, 0.35, 8), cfg.burst_symbols).unwrap();
        let ici = s.synth_adjacent_burst(&params(2.0, 0.7, 0.35, 9), cfg.burst_symbols).unwrap();
        let burst = s.received_burst(Some(&sig), Some(&ici), Some(10)).unwrap();
        // Decimated full burst: periodic, so its DFT has no windowing leakage.
        let mut dec: Vec<Complex64> = burst.iter().step_by(cfg.decimation()).copied().collect();
        let len = dec.len();
        FftPlanner::new().plan_fft_forward(len).process(&mut dec);
        let (mut inband, mut outband) = (0.0f64, 0.0f64);
        for (k, x) in dec.iter().enumerate() {
            if bin_frequency(k, len, cfg.sps_out).abs() <= cfg.bandwidth() / 2.0 + 1e-9 {
                inband += x.norm_sqr();
            } else {
                outband = outband.max(x.norm_sqr());
            }
        }
        let rel_db = 10.0 * (outband / inband).log10();
        assert!(rel_db <= -100.0, "out-of-band {rel_db} dB");
    }
}
