//! Seeded synthetic data for the location and IVQR designs.
//!
//! Every draw goes through [`mvn_sample`], which factors the covariance once
//! and maps independent standard normals through the lower factor. Streams
//! are keyed by [`SeedSpec`] so replications can run in any order.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Identifier of the generator and stream derivation, recorded in outputs.
pub const RNG_ID: &str = "chacha20/sha256-stream";

/// Symmetric positive-semidefinite covariance with positive diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    sigma: Matrix<f64>,
    factor: Matrix<f64>,
}

impl CovarianceMatrix {
    pub fn new(sigma: Matrix<f64>) -> Result<Self> {
        let d = sigma.dim();
        if d == 0 {
            return Err(Error::InvalidArgument("empty covariance".into()));
        }
        if sigma.max_asymmetry() > 1e-12 {
            return Err(Error::InvalidArgument("covariance not symmetric".into()));
        }
        if (0..d).any(|i| !(sigma[(i, i)] > 0.0)) {
            return Err(Error::NotPsd);
        }
        let factor = match sigma.cholesky() {
            Some(l) => l,
            None => {
                let trace = sigma.trace();
                let lo = sigma.symmetric_eigenvalues()[0];
                if lo < -1e-10 * trace {
                    return Err(Error::NotPsd);
                }
                semidefinite_factor(&sigma, 1e-12 * trace)
            }
        };
        Ok(CovarianceMatrix { sigma, factor })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    pub fn dim(&self) -> usize {
        self.sigma.dim()
    }

    pub fn sigma(&self) -> &Matrix<f64> {
        &self.sigma
    }

    /// Lower-triangular `L` with `L Lᵀ = Σ`.
    pub fn factor(&self) -> &Matrix<f64> {
        &self.factor
    }
}

/// Cholesky that tolerates zero pivots (rank-deficient PSD input).
fn semidefinite_factor(a: &Matrix<f64>, tol: f64) -> Matrix<f64> {
    let d = a.dim();
    let mut l = Matrix::zeros(d);
    for j in 0..d {
        let mut diag = a[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if diag <= tol {
            continue;
        }
        let ljj = diag.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..d {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    l
}

/// Identifies one independent random stream.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub base_seed: u64,
    pub scenario_id: String,
    pub replication_index: u64,
}

impl SeedSpec {
    pub fn new(base_seed: u64, scenario_id: impl Into<String>, replication_index: u64) -> Self {
        SeedSpec {
            base_seed,
            scenario_id: scenario_id.into(),
            replication_index,
        }
    }

    fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.base_seed.to_le_bytes());
        h.update((self.scenario_id.len() as u64).to_le_bytes());
        h.update(self.scenario_id.as_bytes());
        h.update(self.replication_index.to_le_bytes());
        let out = h.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&out);
        seed
    }

    /// Stable 64-bit stream seed derived from the triple.
    pub fn effective_seed(&self) -> u64 {
        let d = self.digest();
        u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
    }

    pub fn rng(&self) -> ChaCha20Rng {
        ChaCha20Rng::from_seed(self.digest())
    }
}

/// `n` draws from `N(0, Σ)`, one row per draw.
pub fn mvn_sample(sigma: &CovarianceMatrix, n: usize, seed: &SeedSpec) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let mut rng = seed.rng();
    Ok(mvn_draws(sigma, n, &mut rng))
}

fn mvn_draws<R: rand::Rng>(sigma: &CovarianceMatrix, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let d = sigma.dim();
    let l = sigma.factor();
    let mut z = vec![0.0; d];
    (0..n)
        .map(|_| {
            for v in z.iter_mut() {
                *v = StandardNormal.sample(rng);
            }
            (0..d).map(|i| (0..=i).map(|k| l[(i, k)] * z[k]).sum()).collect()
        })
        .collect()
}

/// Which location moment family the data is for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LocationVariant {
    G1,
    G2,
    G3,
    G4,
}

impl LocationVariant {
    pub fn needs_x(self) -> bool {
        matches!(self, LocationVariant::G3 | LocationVariant::G4)
    }

    pub fn name(self) -> &'static str {
        match self {
            LocationVariant::G1 => "g1",
            LocationVariant::G2 => "g2",
            LocationVariant::G3 => "g3",
            LocationVariant::G4 => "g4",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "g1" => Ok(LocationVariant::G1),
            "g2" => Ok(LocationVariant::G2),
            "g3" => Ok(LocationVariant::G3),
            "g4" => Ok(LocationVariant::G4),
            other => Err(Error::InvalidArgument(format!("unknown location family `{other}`"))),
        }
    }
}

/// Standard deviation of the location-model error.
///
/// `Two` (the default) rescales the error coordinate of the joint
/// `(ε, x)` draw by 2; `Unit` keeps the printed unit-variance covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EpsScale {
    #[default]
    Two,
    Unit,
}

impl EpsScale {
    pub fn sd(self) -> f64 {
        match self {
            EpsScale::Two => 2.0,
            EpsScale::Unit => 1.0,
        }
    }
}

/// Joint covariance of `(ε, x₁..x₅)` with unit variances and correlations
/// decaying by 0.1 per lag.
pub fn location_joint_covariance() -> CovarianceMatrix {
    let rows: Vec<Vec<f64>> = (0..6i32)
        .map(|i| {
            (0..6i32)
                .map(|j| {
                    let lag = (i - j).unsigned_abs() as f64;
                    if lag == 0.0 {
                        1.0
                    } else {
                        0.6 - 0.1 * lag
                    }
                })
                .collect()
        })
        .collect();
    CovarianceMatrix::from_rows(&rows).expect("location covariance is positive definite")
}

/// `y_i = ε_i` with `θ₀ = 0`; g3/g4 also draw five correlated regressors.
pub fn gen_location(n: usize, variant: LocationVariant, eps: EpsScale, seed: &SeedSpec) -> Result<Dataset<f64>> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let sd = eps.sd();
    if variant.needs_x() {
        let draws = mvn_sample(&location_joint_covariance(), n, seed)?;
        let y = draws.iter().map(|r| sd * r[0]).collect();
        let x = (1..6).map(|j| draws.iter().map(|r| r[j]).collect()).collect();
        Dataset::location_with_x(y, x)
    } else {
        let sigma = CovarianceMatrix::from_rows(&[vec![sd * sd]])?;
        let draws = mvn_sample(&sigma, n, seed)?;
        Dataset::location(draws.into_iter().map(|r| r[0]).collect())
    }
}

/// Covariance of `(u, D, W)` for the IVQR design.
pub fn ivqr_covariance(delta: f64) -> Result<CovarianceMatrix> {
    if !delta.is_finite() || delta.abs() >= 0.75_f64.sqrt() {
        return Err(Error::DegenerateCovariance(delta));
    }
    CovarianceMatrix::from_rows(&[vec![1.0, 0.0, delta], vec![0.0, 1.0, 0.5], vec![delta, 0.5, 1.0]])
}

/// `y_i = 1 + D_i + u_i` with `(u, D, W) ~ N(0, Σ(δ))`.
pub fn gen_ivqr(n: usize, delta: f64, seed: &SeedSpec) -> Result<Dataset<f64>> {
    let sigma = ivqr_covariance(delta)?;
    let draws = mvn_sample(&sigma, n, seed)?;
    let y = draws.iter().map(|r| 1.0 + r[1] + r[0]).collect();
    let d = draws.iter().map(|r| r[1]).collect();
    let w = draws.iter().map(|r| r[2]).collect();
    Dataset::ivqr(y, d, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean(v: &[f64]) -> f64 {
        v.iter().sum::<f64>() / v.len() as f64
    }

    fn cov(a: &[f64], b: &[f64]) -> f64 {
        let (ma, mb) = (mean(a), mean(b));
        a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (a.len() as f64 - 1.0)
    }

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        cov(a, b) / (cov(a, a) * cov(b, b)).sqrt()
    }

    #[test]
    fn identity_sample_covariance() {
        let s = CovarianceMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let draws = mvn_sample(&s, 100_000, &SeedSpec::new(7, "mvn", 0)).unwrap();
        let a: Vec<f64> = draws.iter().map(|r| r[0]).collect();
        let b: Vec<f64> = draws.iter().map(|r| r[1]).collect();
        assert!((cov(&a, &a) - 1.0).abs() < 0.05);
        assert!((cov(&b, &b) - 1.0).abs() < 0.05);
        assert!(cov(&a, &b).abs() < 0.05);
    }

    #[test]
    fn deterministic_per_seed() {
        let s = CovarianceMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let seed = SeedSpec::new(11, "det", 3);
        let a = mvn_sample(&s, 50, &seed).unwrap();
        let b = mvn_sample(&s, 50, &seed).unwrap();
        assert_eq!(a, b);
        let c = mvn_sample(&s, 50, &SeedSpec::new(11, "det", 4)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn distinct_triples_distinct_seeds() {
        let a = SeedSpec::new(1, "ab", 0).effective_seed();
        assert_ne!(a, SeedSpec::new(1, "a", 0).effective_seed());
        assert_ne!(a, SeedSpec::new(2, "ab", 0).effective_seed());
        assert_ne!(a, SeedSpec::new(1, "ab", 1).effective_seed());
    }

    #[test]
    fn non_psd_rejected() {
        let err = CovarianceMatrix::from_rows(&[vec![1.0, 1.5], vec![1.5, 1.0]]).unwrap_err();
        assert_eq!(err, Error::NotPsd);
        assert_eq!(err.to_string(), "covariance not positive semidefinite");
    }

    #[test]
    fn rank_deficient_psd_accepted() {
        let s = CovarianceMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let draws = mvn_sample(&s, 5, &SeedSpec::new(0, "psd", 0)).unwrap();
        for r in draws {
            assert!((r[0] - r[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn factor_reproduces_covariance() {
        for s in [location_joint_covariance(), ivqr_covariance(0.6).unwrap()] {
            let l = s.factor();
            let d = s.dim();
            for i in 0..d {
                for j in 0..d {
                    let v: f64 = (0..d).map(|k| l[(i, k)] * l[(j, k)]).sum();
                    assert!((v - s.sigma()[(i, j)]).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn location_g1_moments() {
        let ds = gen_location(100_000, LocationVariant::G1, EpsScale::Two, &SeedSpec::new(3, "g1", 0)).unwrap();
        assert!(ds.x.is_empty());
        assert!(mean(&ds.y).abs() < 0.03);
        assert!((cov(&ds.y, &ds.y) - 4.0).abs() < 0.15);
    }

    #[test]
    fn location_g3_regressors() {
        let ds = gen_location(100_000, LocationVariant::G3, EpsScale::Two, &SeedSpec::new(3, "g3", 0)).unwrap();
        assert_eq!(ds.x.len(), 5);
        for col in &ds.x {
            assert!(mean(col).abs() < 0.02);
        }
        assert!((corr(&ds.y, &ds.x[0]) - 0.5).abs() < 0.02);
        assert!((cov(&ds.y, &ds.x[0]) - 1.0).abs() < 0.05);
        assert!((cov(&ds.y, &ds.y) - 4.0).abs() < 0.15);
    }

    #[test]
    fn location_unit_variant() {
        let ds = gen_location(100_000, LocationVariant::G4, EpsScale::Unit, &SeedSpec::new(3, "g4", 0)).unwrap();
        assert!((cov(&ds.y, &ds.y) - 1.0).abs() < 0.04);
    }

    #[test]
    fn ivqr_independent_at_zero_delta() {
        let ds = gen_ivqr(100_000, 0.0, &SeedSpec::new(5, "iv", 0)).unwrap();
        let d = ds.d().unwrap();
        let w = ds.w().unwrap();
        let u: Vec<f64> = ds.y.iter().zip(d).map(|(y, d)| y - 1.0 - d).collect();
        assert!(corr(&u, w).abs() < 0.02);
        assert!((corr(d, w) - 0.5).abs() < 0.02);
    }

    #[test]
    fn ivqr_residual_variance() {
        // Regress u on (D, W): residual variance 1 - (4/3)δ².
        let delta = 0.6;
        let ds = gen_ivqr(100_000, delta, &SeedSpec::new(5, "iv", 1)).unwrap();
        let d = ds.d().unwrap();
        let w = ds.w().unwrap();
        let u: Vec<f64> = ds.y.iter().zip(d).map(|(y, d)| y - 1.0 - d).collect();
        let (sdd, sww, sdw) = (cov(d, d), cov(w, w), cov(d, w));
        let (sud, suw) = (cov(&u, d), cov(&u, w));
        let det = sdd * sww - sdw * sdw;
        let bd = (sww * sud - sdw * suw) / det;
        let bw = (sdd * suw - sdw * sud) / det;
        let resid = cov(&u, &u) - bd * sud - bw * suw;
        assert!((resid - (1.0 - 4.0 / 3.0 * delta * delta)).abs() < 0.02);
    }

    #[test]
    fn ivqr_rejects_degenerate_delta() {
        assert!(matches!(
            gen_ivqr(10, 0.9, &SeedSpec::new(0, "x", 0)),
            Err(Error::DegenerateCovariance(_))
        ));
        assert!(gen_location(0, LocationVariant::G1, EpsScale::Two, &SeedSpec::new(0, "x", 0)).is_err());
    }
}
