//! Exponentially weighted control chart on window mean delay.

use serde::{Deserialize, Serialize};

use super::{DetectError, Detector, FeatureVector, Verdict, FEATURE_DIM};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EwmaConfig {
    pub alpha: f64,
    /// Red above `kappa` standard deviations.
    pub kappa: f64,
    /// Orange above this many standard deviations.
    pub orange_sigmas: f64,
    /// Observations absorbed before any verdict other than Normal.
    pub warmup: u32,
    /// Lower bound on the delay deviation, seconds.
    pub sigma_floor: f64,
}

impl Default for EwmaConfig {
    fn default() -> Self {
        Self {
            alpha: 0.125,
            kappa: 3.0,
            orange_sigmas: 2.0,
            warmup: 10,
            sigma_floor: 1e-4,
        }
    }
}

impl EwmaConfig {
    pub fn validate(&self) -> Result<(), DetectError> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(DetectError::Config(format!("alpha {} outside (0, 1]", self.alpha)));
        }
        if !(self.orange_sigmas > 0.0 && self.orange_sigmas < self.kappa) {
            return Err(DetectError::Config("need 0 < orange_sigmas < kappa".into()));
        }
        if !(self.sigma_floor > 0.0) {
            return Err(DetectError::Config("sigma_floor must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct EwmaDetector {
    cfg: EwmaConfig,
    mean: [f64; FEATURE_DIM],
    var: [f64; FEATURE_DIM],
    count: u32,
}

impl EwmaDetector {
    pub fn new(cfg: EwmaConfig) -> Self {
        Self {
            cfg,
            mean: [0.0; FEATURE_DIM],
            var: [0.0; FEATURE_DIM],
            count: 0,
        }
    }

    pub fn mean(&self) -> [f64; FEATURE_DIM] {
        self.mean
    }

    pub fn std_dev(&self) -> [f64; FEATURE_DIM] {
        self.var.map(f64::sqrt)
    }

    fn update(&mut self, x: &[f64; FEATURE_DIM]) {
        if self.count == 0 {
            self.mean = *x;
        } else {
            let a = self.cfg.alpha;
            for i in 0..FEATURE_DIM {
                let diff = x[i] - self.mean[i];
                self.mean[i] += a * diff;
                self.var[i] = (1.0 - a) * (self.var[i] + a * diff * diff);
            }
        }
        self.count = self.count.saturating_add(1);
    }
}

impl Detector for EwmaDetector {
    fn name(&self) -> &'static str {
        "ewma"
    }

    fn observe(&mut self, x: &FeatureVector) -> Verdict {
        let (orange, red) = (self.cfg.orange_sigmas, self.cfg.kappa);
        let verdict = if self.count == 0 {
            Verdict::normal(0.0, orange, red)
        } else {
            let sigma = self.var[0].sqrt().max(self.cfg.sigma_floor);
            let score = ((x.mean_delay - self.mean[0]) / sigma).max(0.0);
            if self.count < self.cfg.warmup {
                Verdict::normal(score, orange, red)
            } else {
                Verdict::classify(score, orange, red)
            }
        };
        self.update(&x.to_array());
        verdict
    }
}
