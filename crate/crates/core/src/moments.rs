//! Sample and population moment vectors for the location and IVQR families.
//!
//! All indicators use the closed convention `1(a ≤ b)`.

use libm::erfc;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::sampling::{ivqr_covariance, EpsScale, LocationVariant, SeedSpec};
use crate::scalar::Scalar;

/// Variance imposed by the third location moment.
pub const LOCATION_VARIANCE_TARGET: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MomentFamily {
    LocationG1,
    LocationG2,
    LocationG3,
    LocationG4,
    Ivqr,
}

impl MomentFamily {
    pub fn from_variant(v: LocationVariant) -> Self {
        match v {
            LocationVariant::G1 => MomentFamily::LocationG1,
            LocationVariant::G2 => MomentFamily::LocationG2,
            LocationVariant::G3 => MomentFamily::LocationG3,
            LocationVariant::G4 => MomentFamily::LocationG4,
        }
    }

    pub fn variant(self) -> Option<LocationVariant> {
        match self {
            MomentFamily::LocationG1 => Some(LocationVariant::G1),
            MomentFamily::LocationG2 => Some(LocationVariant::G2),
            MomentFamily::LocationG3 => Some(LocationVariant::G3),
            MomentFamily::LocationG4 => Some(LocationVariant::G4),
            MomentFamily::Ivqr => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self.variant() {
            Some(v) => v.name(),
            None => "ivqr",
        }
    }

    pub fn is_location(self) -> bool {
        self != MomentFamily::Ivqr
    }

    /// Whether the first location moment is the indicator `1(y ≤ θ) − τ`.
    pub fn has_indicator(self) -> bool {
        !matches!(self, MomentFamily::LocationG4)
    }

    pub(crate) fn has_variance(self) -> bool {
        matches!(
            self,
            MomentFamily::LocationG2 | MomentFamily::LocationG3 | MomentFamily::LocationG4
        )
    }

    pub(crate) fn has_x(self) -> bool {
        matches!(self, MomentFamily::LocationG3 | MomentFamily::LocationG4)
    }
}

/// A moment family together with its quantile level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSpec {
    pub family: MomentFamily,
    pub tau: f64,
}

impl MomentSpec {
    pub fn new(family: MomentFamily, tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::InvalidArgument(format!("tau = {tau} outside (0, 1)")));
        }
        Ok(MomentSpec { family, tau })
    }

    pub fn location(v: LocationVariant, tau: f64) -> Result<Self> {
        Self::new(MomentFamily::from_variant(v), tau)
    }

    pub fn ivqr(tau: f64) -> Result<Self> {
        Self::new(MomentFamily::Ivqr, tau)
    }

    pub fn moment_dim(&self) -> usize {
        match self.family {
            MomentFamily::LocationG1 => 2,
            MomentFamily::LocationG2 => 3,
            MomentFamily::LocationG3 => 8,
            MomentFamily::LocationG4 => 7,
            MomentFamily::Ivqr => 3,
        }
    }

    pub fn param_dim(&self) -> usize {
        if self.family.is_location() {
            1
        } else {
            2
        }
    }

    /// Checks that `data` carries the columns this family reads.
    pub fn check_data<T: Scalar>(&self, data: &Dataset<T>) -> Result<()> {
        if self.family == MomentFamily::Ivqr {
            data.d()?;
            data.w()?;
        } else if self.family.has_x() && data.x.len() != 5 {
            return Err(Error::MissingColumn("x1..x5".into()));
        }
        Ok(())
    }

    /// Per-observation moment `g(X_i, θ)` written into `out`.
    pub fn observation<T: Scalar>(&self, data: &Dataset<T>, i: usize, theta: &[T], out: &mut [T]) {
        let tau = T::lit(self.tau);
        let y = data.y[i];
        match self.family {
            MomentFamily::Ivqr => {
                let d = data.d.as_ref().expect("checked")[i];
                let w = data.w.as_ref().expect("checked")[i];
                let ind = if y <= theta[0] + theta[1] * d {
                    T::one()
                } else {
                    T::zero()
                };
                let s = tau - ind;
                out[0] = s;
                out[1] = s * d;
                out[2] = s * w;
            }
            fam => {
                let th = theta[0];
                let mut k = 0;
                if fam.has_indicator() {
                    out[k] = if y <= th { T::one() } else { T::zero() } - tau;
                    k += 1;
                }
                let r = y - th;
                out[k] = r;
                k += 1;
                if fam.has_variance() {
                    out[k] = r * r - T::lit(LOCATION_VARIANCE_TARGET);
                    k += 1;
                }
                if fam.has_x() {
                    let shift = T::lit(0.5 - self.tau);
                    for col in &data.x {
                        out[k] = col[i] - shift;
                        k += 1;
                    }
                }
            }
        }
    }

    /// Sample mean `ḡ_n(θ)`.
    pub fn eval<T: Scalar>(&self, data: &Dataset<T>, theta: &[T]) -> Result<Vec<T>> {
        if theta.len() != self.param_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.param_dim(),
                got: theta.len(),
            });
        }
        self.check_data(data)?;
        let m = self.moment_dim();
        let mut acc = vec![T::zero(); m];
        let mut g = vec![T::zero(); m];
        for i in 0..data.n() {
            self.observation(data, i, theta, &mut g);
            for (a, v) in acc.iter_mut().zip(&g) {
                *a += *v;
            }
        }
        let n = T::count(data.n());
        for a in acc.iter_mut() {
            *a /= n;
        }
        Ok(acc)
    }
}

/// `ḡ_n(θ)` for a location family.
pub fn eval_location<T: Scalar>(spec: &MomentSpec, data: &Dataset<T>, theta: T) -> Result<Vec<T>> {
    if !spec.family.is_location() {
        return Err(Error::InvalidArgument("not a location family".into()));
    }
    spec.eval(data, &[theta])
}

/// `ḡ_n(α, β) = n⁻¹ Σ (τ − 1(y_i ≤ α + β D_i)) z_i`.
pub fn eval_ivqr<T: Scalar>(data: &Dataset<T>, theta: [T; 2], tau: f64) -> Result<Vec<T>> {
    MomentSpec::ivqr(tau)?.eval(data, &theta)
}

/// Standard normal CDF.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Exact population moments of a location family at `θ` when `y ~ N(0, sd²)`.
pub fn population_location(spec: &MomentSpec, theta: f64, eps: EpsScale) -> Result<Vec<f64>> {
    if !spec.family.is_location() {
        return Err(Error::InvalidArgument("not a location family".into()));
    }
    let sd = eps.sd();
    let fam = spec.family;
    let mut out = Vec::with_capacity(spec.moment_dim());
    if fam.has_indicator() {
        out.push(std_normal_cdf(theta / sd) - spec.tau);
    }
    out.push(-theta);
    if fam.has_variance() {
        out.push(sd * sd + theta * theta - LOCATION_VARIANCE_TARGET);
    }
    if fam.has_x() {
        out.extend(std::iter::repeat_n(spec.tau - 0.5, 5));
    }
    Ok(out)
}

/// How to integrate over the bivariate normal `(D, W)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum QuadratureRule {
    /// Tensor Gauss–Hermite with this many nodes per dimension.
    GaussHermite(usize),
    /// Plain Monte Carlo average.
    MonteCarlo { draws: usize, seed: u64 },
}

impl Default for QuadratureRule {
    fn default() -> Self {
        QuadratureRule::GaussHermite(64)
    }
}

impl QuadratureRule {
    pub fn describe(&self) -> String {
        match self {
            QuadratureRule::GaussHermite(k) => format!("gauss-hermite-{k}x{k}"),
            QuadratureRule::MonteCarlo { draws, seed } => format!("monte-carlo-{draws}-seed{seed}"),
        }
    }
}

/// Nodes and weights for `∫ f(x) e^{-x²} dx`, ascending nodes.
pub fn gauss_hermite(k: usize) -> Vec<(f64, f64)> {
    assert!(k >= 1, "need at least one node");
    let pim4 = std::f64::consts::PI.powf(-0.25);
    let mut x = vec![0.0; k];
    let mut w = vec![0.0; k];
    let m = k.div_ceil(2);
    let kf = k as f64;
    let mut z = 0.0;
    for i in 0..m {
        // Initial guesses for the largest roots, refined by Newton on the
        // orthonormal Hermite recurrence.
        z = match i {
            0 => (2.0 * kf + 1.0).sqrt() - 1.85575 * (2.0 * kf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * kf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..k {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * kf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[k - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[k - 1 - i] = w[i];
    }
    let mut nodes: Vec<(f64, f64)> = x.into_iter().zip(w).collect();
    nodes.sort_by(|a, b| a.0.total_cmp(&b.0));
    nodes
}

/// Population IVQR moments
/// `π(θ) = E[(τ − Φ((α − 1 + (β − 1)D + (2D/3 − 4W/3)δ)/√(1 − 4δ²/3))) z]`.
pub fn population_ivqr(theta: [f64; 2], delta: f64, tau: f64, rule: &QuadratureRule) -> Result<[f64; 3]> {
    let arg = ivqr_index(theta, delta)?;
    integrate_dw(rule, |d, w| {
        let s = tau - std_normal_cdf(arg(d, w));
        [s, s * d, s * w]
    })
}

/// Jacobian of [`population_ivqr`]: row `j` is `∂π_j/∂(α, β)`.
pub fn population_ivqr_jacobian(theta: [f64; 2], delta: f64, rule: &QuadratureRule) -> Result<[[f64; 2]; 3]> {
    let arg = ivqr_index(theta, delta)?;
    let scale = ivqr_scale(delta);
    let v = integrate_dw(rule, |d, w| {
        let a = arg(d, w);
        let p = -(-0.5 * a * a).exp() / (2.0 * std::f64::consts::PI).sqrt() / scale;
        [p, p * d, p * d, p * d * d, p * w, p * w * d]
    })?;
    Ok([[v[0], v[1]], [v[2], v[3]], [v[4], v[5]]])
}

fn ivqr_scale(delta: f64) -> f64 {
    (1.0 - 4.0 / 3.0 * delta * delta).sqrt()
}

/// Standardized conditional index of `y ≤ α + βD` given `(D, W)`.
fn ivqr_index(theta: [f64; 2], delta: f64) -> Result<impl Fn(f64, f64) -> f64> {
    ivqr_covariance(delta)?;
    let scale = ivqr_scale(delta);
    let [alpha, beta] = theta;
    Ok(move |d: f64, w: f64| (alpha - 1.0 + (beta - 1.0) * d + (2.0 / 3.0 * d - 4.0 / 3.0 * w) * delta) / scale)
}

/// `E f(D, W)` under the design's instrument distribution.
fn integrate_dw<const K: usize>(rule: &QuadratureRule, f: impl Fn(f64, f64) -> [f64; K]) -> Result<[f64; K]> {
    // (D, W) = (e₁, e₁/2 + √0.75 e₂) with e₁, e₂ iid N(0, 1).
    let c = 0.75_f64.sqrt();
    let mut acc = [0.0; K];
    match rule {
        QuadratureRule::GaussHermite(k) => {
            if *k == 0 {
                return Err(Error::InvalidArgument("quadrature needs at least one node".into()));
            }
            let nodes = gauss_hermite(*k);
            let sqrt2 = std::f64::consts::SQRT_2;
            let norm = 1.0 / std::f64::consts::PI;
            for &(x1, w1) in &nodes {
                let e1 = sqrt2 * x1;
                for &(x2, w2) in &nodes {
                    let e2 = sqrt2 * x2;
                    let v = f(e1, 0.5 * e1 + c * e2);
                    let wt = w1 * w2 * norm;
                    for j in 0..K {
                        acc[j] += wt * v[j];
                    }
                }
            }
        }
        QuadratureRule::MonteCarlo { draws, seed } => {
            if *draws == 0 {
                return Err(Error::InvalidArgument("Monte Carlo rule needs draws > 0".into()));
            }
            let mut rng = SeedSpec::new(*seed, "population-ivqr", 0).rng();
            for _ in 0..*draws {
                let e1: f64 = StandardNormal.sample(&mut rng);
                let e2: f64 = StandardNormal.sample(&mut rng);
                let v = f(e1, 0.5 * e1 + c * e2);
                for j in 0..K {
                    acc[j] += v[j];
                }
            }
            for a in acc.iter_mut() {
                *a /= *draws as f64;
            }
        }
    }
    Ok(acc)
}
