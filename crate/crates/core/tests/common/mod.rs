#![allow(dead_code)]

pub mod oracle;

/// `n` standard draws of a binomial proportion: `sqrt(p(1-p)/n)`.
pub fn binomial_sigma(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}
