//! Energy-detector oracle built from first principles, independent of the
//! simulator.
//!
//! Band-limited white noise of two-sided width `W`, sampled every
//! `1/sps_out` symbols, has covariance `C[i,j] = sinc(W (i - j) / sps_out)`.
//! Noise frames are drawn as `U Λ^{1/2} z` from the eigendecomposition of `C`.
//! The signal is a unit-power QPSK train of continuous root-raised-cosine
//! pulses, which already lies inside the band.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use specsense::baseband::rrc_pulse;

/// Symbols of pulse tail kept on each side of the frame.
const TAIL: i64 = 24;
/// Timing offsets are tabulated on this many points per symbol.
const TAU_STEPS: usize = 128;
const CHUNK: usize = 10_000;

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (std::f64::consts::PI * x).sin() / (std::f64::consts::PI * x)
    }
}

pub struct EnergyOracle {
    n: usize,
    /// Columns `sqrt(λ_k) u_k` for the eigenvalues above round-off.
    factor: Vec<Vec<f64>>,
    /// Eigenvalues of the covariance, all of them.
    pub eigenvalues: Vec<f64>,
    /// `pulses[q][m * n_sym + k]` = pulse of symbol `k - TAIL` at sample `m`
    /// for timing offset `q / TAU_STEPS`.
    pulses: Vec<Vec<f64>>,
    n_sym: usize,
}

impl EnergyOracle {
    pub fn new(n: usize, bandwidth: f64, sps_out: usize, rolloff: f64) -> Self {
        let c = DMatrix::from_fn(n, n, |i, j| sinc(bandwidth * (i as f64 - j as f64) / sps_out as f64));
        let eig = SymmetricEigen::new(c);
        let max = eig.eigenvalues.max();
        let mut factor = Vec::new();
        for (k, &l) in eig.eigenvalues.iter().enumerate() {
            if l > 1e-13 * max {
                let s = l.sqrt();
                factor.push(eig.eigenvectors.column(k).iter().map(|u| u * s).collect());
            }
        }
        let frame_symbols = (n as f64 / sps_out as f64).ceil() as i64;
        let n_sym = (frame_symbols + 2 * TAIL) as usize;
        let pulses = (0..TAU_STEPS)
            .map(|q| {
                let tau = q as f64 / TAU_STEPS as f64;
                let mut t = vec![0.0; n * n_sym];
                for m in 0..n {
                    for k in 0..n_sym {
                        let sym_time = (k as i64 - TAIL) as f64 + tau;
                        t[m * n_sym + k] = rrc_pulse(m as f64 / sps_out as f64 - sym_time, rolloff);
                    }
                }
                t
            })
            .collect();
        Self { n, factor, eigenvalues: eig.eigenvalues.iter().copied().collect(), pulses, n_sym }
    }

    /// Analytic noise-only energy moments `(Σ λ, Σ λ²)`.
    /// Each complex sample has unit power, split evenly over I and Q, so
    /// `Var = Σ λ²`.
    pub fn noise_energy_moments(&self) -> (f64, f64) {
        (self.eigenvalues.iter().sum(), self.eigenvalues.iter().map(|l| l * l).sum())
    }

    fn noise(&self, rng: &mut ChaCha8Rng, out: &mut [(f64, f64)]) {
        out.iter_mut().for_each(|x| *x = (0.0, 0.0));
        let s = std::f64::consts::FRAC_1_SQRT_2;
        for col in &self.factor {
            let zr: f64 = rng.sample::<f64, _>(StandardNormal) * s;
            let zi: f64 = rng.sample::<f64, _>(StandardNormal) * s;
            for (o, &u) in out.iter_mut().zip(col) {
                o.0 += u * zr;
                o.1 += u * zi;
            }
        }
    }

    fn add_signal(&self, rng: &mut ChaCha8Rng, out: &mut [(f64, f64)]) {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let syms: Vec<(f64, f64)> = (0..self.n_sym)
            .map(|_| {
                let b: u8 = rng.random_range(0..4);
                (if b & 1 == 0 { s } else { -s }, if b & 2 == 0 { s } else { -s })
            })
            .collect();
        let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let q = rng.random_range(0..TAU_STEPS);
        let (c, sn) = (theta.cos(), theta.sin());
        let table = &self.pulses[q];
        for (m, o) in out.iter_mut().enumerate() {
            let row = &table[m * self.n_sym..(m + 1) * self.n_sym];
            let (mut re, mut im) = (0.0, 0.0);
            for (p, a) in row.iter().zip(&syms) {
                re += p * a.0;
                im += p * a.1;
            }
            o.0 += re * c - im * sn;
            o.1 += re * sn + im * c;
        }
    }

    /// Energies of `draws` frames, with or without the signal.
    pub fn energies(&self, draws: usize, with_signal: bool, seed: u64) -> Vec<f64> {
        let chunks = draws.div_ceil(CHUNK);
        (0..chunks)
            .into_par_iter()
            .flat_map_iter(|c| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (c as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
                let mut buf = vec![(0.0, 0.0); self.n];
                let count = CHUNK.min(draws - c * CHUNK);
                (0..count)
                    .map(|_| {
                        self.noise(&mut rng, &mut buf);
                        if with_signal {
                            self.add_signal(&mut rng, &mut buf);
                        }
                        buf.iter().map(|(a, b)| a * a + b * b).sum::<f64>()
                    })
                    .collect::<Vec<_>>()
            })
            .collect()
    }

    /// Pd at the `(1 - pfa)` empirical quantile of `draws` noise-only energies,
    /// measured on `draws` signal-plus-noise energies.
    pub fn pd(&self, draws: usize, pfa: f64, seed: u64) -> f64 {
        let mut idle = self.energies(draws, false, seed);
        idle.sort_unstable_by(f64::total_cmp);
        let thr = idle[((1.0 - pfa) * draws as f64).ceil() as usize - 1];
        let busy = self.energies(draws, true, seed.wrapping_add(1));
        busy.iter().filter(|&&e| e > thr).count() as f64 / draws as f64
    }

    /// Mean signal power per sample (expected 1).
    pub fn signal_power(&self, draws: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut buf = vec![(0.0, 0.0); self.n];
        let mut total = 0.0;
        for _ in 0..draws {
            buf.iter_mut().for_each(|x| *x = (0.0, 0.0));
            self.add_signal(&mut rng, &mut buf);
            total += buf.iter().map(|(a, b)| a * a + b * b).sum::<f64>();
        }
        total / (draws * self.n) as f64
    }
}
