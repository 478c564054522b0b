//! Kernel-based online anomaly detection.
//!
//! Each observation is projected onto the span of a dictionary of past
//! observations in the feature space of a Gaussian kernel. The squared
//! projection error `δ = k(x,x) − kᵀK⁻¹k` lies in [0, 1] and is compared to
//! two thresholds `ν1 < ν2`. Observations between the thresholds are novel
//! but plausible and join the dictionary; Red observations do not, so a
//! sustained anomaly is not learned as normal.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{DetectError, Detector, FeatureVector, Verdict, DEFAULT_SCALES, FEATURE_DIM};

/// Diagonal loading that keeps the Gram matrix positive definite.
const JITTER: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KoadConfig {
    /// Kernel bandwidth on scaled features.
    pub sigma: f64,
    pub nu1: f64,
    pub nu2: f64,
    pub dictionary_cap: usize,
    /// Per-feature divisors applied before the kernel.
    pub scales: [f64; FEATURE_DIM],
}

impl Default for KoadConfig {
    fn default() -> Self {
        Self {
            sigma: 1.0,
            nu1: 0.05,
            nu2: 0.3,
            dictionary_cap: 50,
            scales: DEFAULT_SCALES,
        }
    }
}

impl KoadConfig {
    pub fn validate(&self) -> Result<(), DetectError> {
        if !(self.sigma > 0.0) {
            return Err(DetectError::Config("sigma must be positive".into()));
        }
        if !(0.0 <= self.nu1 && self.nu1 < self.nu2) {
            return Err(DetectError::Config(format!(
                "need 0 <= nu1 < nu2, got {} and {}",
                self.nu1, self.nu2
            )));
        }
        if self.dictionary_cap == 0 {
            return Err(DetectError::Config("dictionary_cap must be at least 1".into()));
        }
        if self.scales.iter().any(|s| !(*s > 0.0)) {
            return Err(DetectError::Config("scales must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct KoadDetector {
    cfg: KoadConfig,
    /// Scaled feature vectors, oldest first.
    dictionary: Vec<[f64; FEATURE_DIM]>,
}

impl KoadDetector {
    pub fn new(cfg: KoadConfig) -> Self {
        Self {
            cfg,
            dictionary: Vec::new(),
        }
    }

    pub fn dictionary_len(&self) -> usize {
        self.dictionary.len()
    }

    pub fn kernel(&self, a: &[f64; FEATURE_DIM], b: &[f64; FEATURE_DIM]) -> f64 {
        let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
        (-d2 / (2.0 * self.cfg.sigma * self.cfg.sigma)).exp()
    }

    /// Unclamped projection error of `x` onto the dictionary; 1 when empty.
    pub fn delta(&self, x: &FeatureVector) -> f64 {
        self.delta_scaled(&x.scaled(&self.cfg.scales))
    }

    fn delta_scaled(&self, z: &[f64; FEATURE_DIM]) -> f64 {
        let m = self.dictionary.len();
        if m == 0 {
            return 1.0;
        }
        let gram = DMatrix::from_fn(m, m, |i, j| {
            self.kernel(&self.dictionary[i], &self.dictionary[j]) + if i == j { JITTER } else { 0.0 }
        });
        let k = DVector::from_fn(m, |i, _| self.kernel(&self.dictionary[i], z));
        let a = match gram.cholesky() {
            Some(ch) => ch.solve(&k),
            // Unreachable with the jitter above; treat as unexplained.
            None => return 1.0,
        };
        1.0 - k.dot(&a)
    }

    fn admit(&mut self, z: [f64; FEATURE_DIM]) {
        if self.dictionary.len() >= self.cfg.dictionary_cap {
            self.dictionary.remove(0);
        }
        self.dictionary.push(z);
    }
}

impl Detector for KoadDetector {
    fn name(&self) -> &'static str {
        "koad"
    }

    fn observe(&mut self, x: &FeatureVector) -> Verdict {
        let (nu1, nu2) = (self.cfg.nu1, self.cfg.nu2);
        let z = x.scaled(&self.cfg.scales);
        if self.dictionary.is_empty() {
            self.admit(z);
            return Verdict::normal(0.0, nu1, nu2);
        }
        let delta = self.delta_scaled(&z).max(0.0);
        let verdict = Verdict::classify(delta, nu1, nu2);
        if verdict.level == super::Level::Orange {
            self.admit(z);
        }
        verdict
    }
}
