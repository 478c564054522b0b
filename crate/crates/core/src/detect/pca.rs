//! PCA subspace detector: squared prediction error outside the principal
//! subspace of standardized training windows.

use nalgebra::{SMatrix, SVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{DetectError, Detector, FeatureVector, Verdict, FEATURE_DIM};
use crate::metrics::nearest_rank;

type Vec4 = SVector<f64, FEATURE_DIM>;
type Mat4 = SMatrix<f64, FEATURE_DIM, FEATURE_DIM>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PcaConfig {
    /// Fraction of total variance the retained components must explain.
    pub variance_target: f64,
    /// Percentile of training SPE used as the Red threshold.
    pub q_percentile: f64,
    /// Windows collected before the model is fitted.
    pub training_windows: usize,
    /// Lower bound on the Red threshold.
    pub q_floor: f64,
}

impl Default for PcaConfig {
    fn default() -> Self {
        Self {
            variance_target: 0.95,
            q_percentile: 99.0,
            training_windows: 2 * FEATURE_DIM,
            q_floor: 1e-6,
        }
    }
}

impl PcaConfig {
    pub fn validate(&self) -> Result<(), DetectError> {
        if !(self.variance_target > 0.0 && self.variance_target <= 1.0) {
            return Err(DetectError::Config("variance_target outside (0, 1]".into()));
        }
        if !(self.q_percentile > 0.0 && self.q_percentile <= 100.0) {
            return Err(DetectError::Config("q_percentile outside (0, 100]".into()));
        }
        if self.training_windows < 2 * FEATURE_DIM {
            return Err(DetectError::Config(format!(
                "training_windows must be at least {}",
                2 * FEATURE_DIM
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaState {
    pub mean: [f64; FEATURE_DIM],
    pub scale: [f64; FEATURE_DIM],
    /// Features that were constant in training (scale forced to 1).
    pub constant: [bool; FEATURE_DIM],
    /// Eigenvalues of the standardized covariance, descending.
    pub eigenvalues: [f64; FEATURE_DIM],
    /// Retained principal directions, orthonormal.
    pub basis: Vec<[f64; FEATURE_DIM]>,
    pub q_threshold: f64,
}

impl PcaState {
    pub fn k(&self) -> usize {
        self.basis.len()
    }

    fn standardize(&self, x: &[f64; FEATURE_DIM]) -> Vec4 {
        Vec4::from_fn(|i, _| (x[i] - self.mean[i]) / self.scale[i])
    }

    /// Squared norm of the residual outside the principal subspace.
    pub fn spe(&self, x: &FeatureVector) -> f64 {
        let z = self.standardize(&x.to_array());
        let mut r = z;
        for b in &self.basis {
            let b = Vec4::from_column_slice(b);
            r -= b * b.dot(&z);
        }
        r.norm_squared()
    }

    pub fn score(&self, x: &FeatureVector) -> Verdict {
        Verdict::classify(self.spe(x), 0.5 * self.q_threshold, self.q_threshold)
    }
}

pub fn pca_fit(window: &[FeatureVector], cfg: &PcaConfig) -> Result<PcaState, DetectError> {
    let n = window.len();
    if n < 2 * FEATURE_DIM {
        return Err(DetectError::TooFewWindows {
            needed: 2 * FEATURE_DIM,
            got: n,
        });
    }
    if let Some(i) = window.iter().position(|x| !x.is_finite()) {
        return Err(DetectError::NonFinite(i));
    }
    let rows: Vec<[f64; FEATURE_DIM]> = window.iter().map(|x| x.to_array()).collect();
    let mut mean = [0.0; FEATURE_DIM];
    for r in &rows {
        for i in 0..FEATURE_DIM {
            mean[i] += r[i] / n as f64;
        }
    }
    let mut scale = [1.0; FEATURE_DIM];
    let mut constant = [false; FEATURE_DIM];
    for i in 0..FEATURE_DIM {
        let var = rows.iter().map(|r| (r[i] - mean[i]).powi(2)).sum::<f64>() / (n - 1) as f64;
        let sd = var.sqrt();
        if sd > 0.0 && sd > 1e-9 * mean[i].abs() {
            scale[i] = sd;
        } else {
            constant[i] = true;
        }
    }
    let mut cov = Mat4::zeros();
    for r in &rows {
        let z = Vec4::from_fn(|i, _| (r[i] - mean[i]) / scale[i]);
        cov += z * z.transpose();
    }
    cov /= (n - 1) as f64;

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..FEATURE_DIM).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut eigenvalues = [0.0; FEATURE_DIM];
    for (e, &i) in eigenvalues.iter_mut().zip(&order) {
        *e = eig.eigenvalues[i].max(0.0);
    }
    let total: f64 = eigenvalues.iter().sum();
    let k = if total <= 0.0 {
        1
    } else {
        let mut cum = 0.0;
        let mut k = FEATURE_DIM;
        for (j, l) in eigenvalues.iter().enumerate() {
            cum += l;
            if cum / total >= cfg.variance_target - 1e-12 {
                k = j + 1;
                break;
            }
        }
        k
    };
    let basis = order[..k]
        .iter()
        .map(|&i| {
            let c = eig.eigenvectors.column(i);
            [c[0], c[1], c[2], c[3]]
        })
        .collect();

    let mut state = PcaState {
        mean,
        scale,
        constant,
        eigenvalues,
        basis,
        q_threshold: 0.0,
    };
    let mut spes: Vec<f64> = window.iter().map(|x| state.spe(x)).collect();
    spes.sort_by(f64::total_cmp);
    state.q_threshold = nearest_rank(&spes, cfg.q_percentile).max(cfg.q_floor);
    Ok(state)
}

/// Collects `training_windows` observations, fits once, then scores.
#[derive(Debug, Clone)]
pub struct PcaDetector {
    cfg: PcaConfig,
    training: Vec<FeatureVector>,
    state: Option<PcaState>,
}

impl PcaDetector {
    pub fn new(cfg: PcaConfig) -> Self {
        Self {
            cfg,
            training: Vec::new(),
            state: None,
        }
    }

    pub fn state(&self) -> Option<&PcaState> {
        self.state.as_ref()
    }
}

impl Detector for PcaDetector {
    fn name(&self) -> &'static str {
        "pca"
    }

    fn observe(&mut self, x: &FeatureVector) -> Verdict {
        if let Some(s) = &self.state {
            return s.score(x);
        }
        self.training.push(*x);
        if self.training.len() >= self.cfg.training_windows {
            // Non-finite training data leaves the detector in training.
            if let Ok(s) = pca_fit(&self.training, &self.cfg) {
                self.state = Some(s);
                self.training.clear();
            } else {
                self.training.retain(FeatureVector::is_finite);
            }
        }
        Verdict::normal(0.0, 0.0, 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::Level;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn fv(a: [f64; 4]) -> FeatureVector {
        FeatureVector::from_array(a)
    }

    /// Cyclic Jacobi eigenvalue iteration, independent of nalgebra.
    fn jacobi_eigenvalues(mut a: [[f64; 4]; 4]) -> [f64; 4] {
        for _ in 0..100 {
            for p in 0..4 {
                for q in p + 1..4 {
                    if a[p][q].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..4 {
                        let akp = a[k][p];
                        let akq = a[k][q];
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..4 {
                        let apk = a[p][k];
                        let aqk = a[q][k];
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut e = [a[0][0], a[1][1], a[2][2], a[3][3]];
        e.sort_by(|x, y| y.total_cmp(x));
        e
    }

    fn noise(n: usize, seed: u64) -> Vec<FeatureVector> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let mut a = [0.0; 4];
                for v in &mut a {
                    *v = StandardNormal.sample(&mut rng);
                }
                fv(a)
            })
            .collect()
    }

    #[test]
    fn too_short_window() {
        let w = noise(7, 1);
        assert_eq!(
            pca_fit(&w, &PcaConfig::default()),
            Err(DetectError::TooFewWindows { needed: 8, got: 7 })
        );
    }

    #[test]
    fn isotropic_noise_keeps_all_components() {
        let w = noise(400, 7);
        let s = pca_fit(&w, &PcaConfig::default()).unwrap();
        assert_eq!(s.k(), 4);

        // oracle: eigenvalues of the standardized covariance by Jacobi
        let n = w.len() as f64;
        let mut cov = [[0.0; 4]; 4];
        for x in &w {
            let a = x.to_array();
            let z: Vec<f64> = (0..4).map(|i| (a[i] - s.mean[i]) / s.scale[i]).collect();
            for i in 0..4 {
                for j in 0..4 {
                    cov[i][j] += z[i] * z[j] / (n - 1.0);
                }
            }
        }
        let oracle = jacobi_eigenvalues(cov);
        for (a, b) in oracle.iter().zip(&s.eigenvalues) {
            assert!((a - b).abs() < 1e-9, "{oracle:?} vs {:?}", s.eigenvalues);
        }
        // standardized covariance has unit trace per feature
        assert!((s.eigenvalues.iter().sum::<f64>() - 4.0).abs() < 1e-9);
        // top three explain well under 95%
        assert!(s.eigenvalues[..3].iter().sum::<f64>() / 4.0 < 0.95);
    }

    #[test]
    fn basis_is_orthonormal() {
        let s = pca_fit(&noise(50, 3), &PcaConfig::default()).unwrap();
        for (i, a) in s.basis.iter().enumerate() {
            for (j, b) in s.basis.iter().enumerate() {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-9);
            }
        }
    }

    fn line_data() -> Vec<FeatureVector> {
        (0..20)
            .map(|i| {
                let t = i as f64;
                fv([0.01 + 0.001 * t, 0.002 * t, 0.01 * t, 1e6 - 1e4 * t])
            })
            .collect()
    }

    #[test]
    fn rank_one_data() {
        let w = line_data();
        let s = pca_fit(&w, &PcaConfig::default()).unwrap();
        assert_eq!(s.k(), 1);
        for x in &w {
            assert!(s.spe(x) < 1e-20);
        }
        // the training mean scores zero
        assert_eq!(s.score(&fv(s.mean)).level, Level::Normal);
        assert!(s.spe(&fv(s.mean)) < 1e-24);
        // far along the line is still in the subspace
        let far = fv([0.01 + 0.001 * 500.0, 1.0, 5.0, 1e6 - 5e6]);
        assert!(s.spe(&far) < 1e-12);
    }

    #[test]
    fn orthogonal_offset_is_red_with_expected_residual() {
        let w = line_data();
        let s = pca_fit(&w, &PcaConfig::default()).unwrap();
        // standardized direction orthogonal to the line: e0 - e1 (the line
        // direction in standardized space is (1, 1, 1, -1)/2)
        let mut x = s.mean;
        let v = 3.0;
        x[0] += v * s.scale[0];
        x[1] -= v * s.scale[1];
        let spe = s.spe(&fv(x));
        assert!((spe - 2.0 * v * v).abs() < 1e-9, "{spe}");
        assert_eq!(s.score(&fv(x)).level, Level::Red);
    }

    #[test]
    fn constant_feature_is_flagged_not_fatal() {
        let w: Vec<_> = noise(30, 9)
            .into_iter()
            .map(|mut x| {
                x.loss_fraction = 0.0;
                x
            })
            .collect();
        let s = pca_fit(&w, &PcaConfig::default()).unwrap();
        assert_eq!(s.constant, [false, false, true, false]);
        assert_eq!(s.scale[2], 1.0);
        assert!(s.eigenvalues.iter().all(|e| e.is_finite()));
    }

    #[test]
    fn all_constant_gives_k_one() {
        let w = vec![fv([0.01, 0.0, 0.0, 1e6]); 10];
        let s = pca_fit(&w, &PcaConfig::default()).unwrap();
        assert_eq!(s.k(), 1);
        assert_eq!(s.score(&w[0]).level, Level::Normal);
    }

    #[test]
    fn training_points_score_within_max_and_idempotently() {
        let w = noise(60, 11);
        let s = pca_fit(
            &w,
            &PcaConfig {
                variance_target: 0.6,
                ..PcaConfig::default()
            },
        )
        .unwrap();
        assert!(s.k() < 4);
        let spes: Vec<f64> = w.iter().map(|x| s.spe(x)).collect();
        let max = spes.iter().cloned().fold(0.0, f64::max);
        for (x, &e) in w.iter().zip(&spes) {
            assert!(e <= max);
            assert_eq!(s.spe(x), e);
        }
    }

    #[test]
    fn online_detector_trains_then_scores() {
        let mut d = PcaDetector::new(PcaConfig::default());
        for x in line_data().iter().take(8) {
            assert_eq!(d.observe(x).level, Level::Normal);
        }
        assert!(d.state().is_some());
        let mut x = d.state().unwrap().mean;
        x[1] += 1.0;
        assert_eq!(d.observe(&fv(x)).level, Level::Red);
    }
}
