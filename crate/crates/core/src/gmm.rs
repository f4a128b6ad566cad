//! Weight matrices, the GMM criterion, and the one-step / two-step pipelines.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::exact;
use crate::linalg::Matrix;
use crate::moments::MomentSpec;
use crate::scalar::Scalar;

pub const DEFAULT_RIDGE_EPSILON: f64 = 1e-10;

/// Condition-number ceiling for an invertible weight target (f64 scale).
const MAX_CONDITION_F64: f64 = 1e14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WeightKind {
    #[serde(rename = "identity")]
    Identity,
    #[serde(rename = "instrument")]
    InstrumentOuter,
    #[serde(rename = "tau-scaled")]
    TauScaledInstrumentOuter,
    #[serde(rename = "efficient")]
    EfficientAtPreliminary,
}

impl WeightKind {
    pub fn name(self) -> &'static str {
        match self {
            WeightKind::Identity => "identity",
            WeightKind::InstrumentOuter => "instrument",
            WeightKind::TauScaledInstrumentOuter => "tau-scaled",
            WeightKind::EfficientAtPreliminary => "efficient",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(WeightKind::Identity),
            "instrument" => Ok(WeightKind::InstrumentOuter),
            "tau-scaled" => Ok(WeightKind::TauScaledInstrumentOuter),
            "efficient" => Ok(WeightKind::EfficientAtPreliminary),
            other => Err(Error::InvalidArgument(format!("unknown weight `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightScheme {
    pub kind: WeightKind,
    pub ridge_epsilon: f64,
}

impl WeightScheme {
    pub fn new(kind: WeightKind) -> Self {
        WeightScheme {
            kind,
            ridge_epsilon: DEFAULT_RIDGE_EPSILON,
        }
    }
}

impl From<WeightKind> for WeightScheme {
    fn from(kind: WeightKind) -> Self {
        WeightScheme::new(kind)
    }
}

/// A realized, fixed weight matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightMatrix<T> {
    pub kind: WeightKind,
    pub matrix: Matrix<T>,
    /// Set when the target needed a ridge before it could be factored.
    pub ridge_applied: bool,
}

impl<T: Scalar> WeightMatrix<T> {
    pub fn identity(dim: usize) -> Self {
        WeightMatrix {
            kind: WeightKind::Identity,
            matrix: Matrix::identity(dim),
            ridge_applied: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn scaled(&self, c: T) -> Self {
        WeightMatrix {
            kind: self.kind,
            matrix: self.matrix.scaled(c),
            ridge_applied: self.ridge_applied,
        }
    }
}

/// Box `[lo, hi]` applied to every parameter coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamBox<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Scalar> ParamBox<T> {
    pub fn new(lo: T, hi: T) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::EmptyBox(format!("[{lo}, {hi}]")));
        }
        Ok(ParamBox { lo, hi })
    }

    pub fn contains(&self, t: T) -> bool {
        t >= self.lo && t <= self.hi
    }
}

impl<T: Scalar> Default for ParamBox<T> {
    fn default() -> Self {
        ParamBox {
            lo: T::lit(-10.0),
            hi: T::lit(10.0),
        }
    }
}

/// Where the optimum was found.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CellDescriptor<T> {
    /// Order-statistic interval `[lo, hi)` with `count` observations `≤ θ`.
    Interval {
        index: usize,
        lo: T,
        hi: T,
        count: usize,
        point: T,
    },
    /// Arrangement cell: slope interval, gap rank in the intercept order,
    /// number of observations below, and an interior point.
    Arrangement {
        slope_interval: usize,
        rank: usize,
        prefix_count: usize,
        alpha: T,
        beta: T,
    },
    /// Brute-force candidate index and point.
    Candidate { index: usize, point: Vec<T> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics<T> {
    pub method: String,
    pub cell: CellDescriptor<T>,
    /// Number of distinct cells attaining the minimum.
    pub ties: usize,
    /// Pair swaps processed (sweep) or candidates evaluated (brute force).
    pub events: usize,
    pub ridge_applied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmFit<T> {
    pub theta_hat: Vec<T>,
    pub q_hat: T,
    pub weight_used: WeightMatrix<T>,
    pub diagnostics: FitDiagnostics<T>,
    /// First-step estimate when this is a two-step fit.
    pub preliminary: Option<Vec<T>>,
}

/// `n⁻¹ Σ z_i z_iᵀ`.
pub fn instrument_second_moment<T: Scalar>(data: &Dataset<T>) -> Matrix<T> {
    let k = data.instrument_dim();
    let mut m = Matrix::zeros(k);
    for i in 0..data.n() {
        let z = data.instrument(i);
        for a in 0..k {
            for b in 0..k {
                m[(a, b)] += z[a] * z[b];
            }
        }
    }
    m.scaled(T::one() / T::count(data.n()))
}

/// `n⁻¹ Σ g(X_i, θ) g(X_i, θ)ᵀ`.
pub fn moment_second_moment<T: Scalar>(spec: &MomentSpec, data: &Dataset<T>, theta: &[T]) -> Result<Matrix<T>> {
    spec.check_data(data)?;
    let m = spec.moment_dim();
    let mut out = Matrix::zeros(m);
    let mut g = vec![T::zero(); m];
    for i in 0..data.n() {
        spec.observation(data, i, theta, &mut g);
        for a in 0..m {
            for b in 0..m {
                out[(a, b)] += g[a] * g[b];
            }
        }
    }
    Ok(out.scaled(T::one() / T::count(data.n())))
}

fn condition_ceiling<T: Scalar>() -> T {
    T::lit(MAX_CONDITION_F64 * f64::EPSILON) / T::epsilon()
}

/// Inverse of a symmetric target. Targets with condition number above the
/// ceiling are rejected; a target that passes but fails Cholesky gets a
/// ridge of `ε·(trace/dim)`.
pub fn invert_weight_target<T: Scalar>(target: &Matrix<T>, ridge_epsilon: f64) -> Result<(Matrix<T>, bool)> {
    let mut t = target.clone();
    t.symmetrize();
    let cond = t.condition_number();
    if !(cond <= condition_ceiling::<T>()) {
        return Err(Error::WeightSingular(cond.as_f64()));
    }
    if let Some(l) = t.cholesky() {
        return Ok((Matrix::spd_inverse_from_cholesky(&l), false));
    }
    let d = T::count(t.dim());
    t.add_diagonal(T::lit(ridge_epsilon) * t.trace() / d);
    match t.cholesky() {
        Some(l) => Ok((Matrix::spd_inverse_from_cholesky(&l), true)),
        None => Err(Error::WeightSingular(f64::INFINITY)),
    }
}

pub fn build_weight<T: Scalar>(
    scheme: WeightScheme,
    spec: &MomentSpec,
    data: &Dataset<T>,
    prelim: Option<&[T]>,
) -> Result<WeightMatrix<T>> {
    let m = spec.moment_dim();
    let target = match scheme.kind {
        WeightKind::Identity => return Ok(WeightMatrix::identity(m)),
        WeightKind::InstrumentOuter | WeightKind::TauScaledInstrumentOuter => {
            if data.instrument_dim() != m {
                return Err(Error::InvalidArgument(format!(
                    "instrument weight needs {m} instruments, data provides {}",
                    data.instrument_dim()
                )));
            }
            let zz = instrument_second_moment(data);
            if scheme.kind == WeightKind::TauScaledInstrumentOuter {
                zz.scaled(T::lit(spec.tau * (1.0 - spec.tau)))
            } else {
                zz
            }
        }
        WeightKind::EfficientAtPreliminary => {
            let theta = prelim
                .ok_or_else(|| Error::InvalidArgument("efficient weight requires a preliminary estimate".into()))?;
            moment_second_moment(spec, data, theta)?
        }
    };
    let (matrix, ridge_applied) = invert_weight_target(&target, scheme.ridge_epsilon)?;
    Ok(WeightMatrix {
        kind: scheme.kind,
        matrix,
        ridge_applied,
    })
}

/// `ḡᵀ W ḡ`.
pub fn criterion<T: Scalar>(gbar: &[T], w: &WeightMatrix<T>) -> Result<T> {
    w.matrix.quad_form(gbar)
}

/// Global minimizer of the criterion under a fixed weight built from `scheme`.
pub fn fit_one_step<T: Scalar>(
    spec: &MomentSpec,
    data: &Dataset<T>,
    scheme: WeightScheme,
    bounds: &ParamBox<T>,
) -> Result<GmmFit<T>> {
    if scheme.kind == WeightKind::EfficientAtPreliminary {
        return Err(Error::InvalidArgument(
            "one-step fit cannot use the efficient weight".into(),
        ));
    }
    spec.check_data(data)?;
    let w = build_weight(scheme, spec, data, None)?;
    exact::minimize(spec, data, &w, bounds)
}

/// One-step fit, efficient weight at its estimate, then an exact refit
/// under that (fixed) weight.
pub fn fit_two_step<T: Scalar>(
    spec: &MomentSpec,
    data: &Dataset<T>,
    first_scheme: WeightScheme,
    bounds: &ParamBox<T>,
) -> Result<GmmFit<T>> {
    let first = fit_one_step(spec, data, first_scheme, bounds)?;
    let scheme = WeightScheme {
        kind: WeightKind::EfficientAtPreliminary,
        ridge_epsilon: first_scheme.ridge_epsilon,
    };
    let w = build_weight(scheme, spec, data, Some(&first.theta_hat)).map_err(|e| match e {
        Error::WeightSingular(cond) => Error::WeightSingularAtPreliminary {
            prelim: first.theta_hat.iter().map(|t| t.as_f64()).collect(),
            cond,
        },
        other => other,
    })?;
    let mut fit = exact::minimize(spec, data, &w, bounds)?;
    fit.preliminary = Some(first.theta_hat);
    Ok(fit)
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use crate::sampling::LocationVariant;

    fn g1(tau: f64) -> MomentSpec {
        MomentSpec::location(LocationVariant::G1, tau).unwrap()
    }

    #[test]
    fn identity_weight() {
        let ds = Dataset::location(vec![1.0_f64, 2.0]).unwrap();
        let w = build_weight(WeightKind::Identity.into(), &g1(0.5), &ds, None).unwrap();
        assert_eq!(w.matrix, Matrix::identity(2));
    }

    #[test]
    fn tau_scaled_scalar_case() {
        let ds = Dataset::location(vec![0.3_f64, -1.0, 2.0]).unwrap();
        let zz = instrument_second_moment(&ds).scaled(0.25);
        let (inv, ridge) = invert_weight_target(&zz, DEFAULT_RIDGE_EPSILON).unwrap();
        assert!(!ridge);
        assert!((inv[(0, 0)] - 4.0).abs() < 1e-15);
        // Dimension mismatch with a two-moment family.
        assert!(build_weight(WeightKind::TauScaledInstrumentOuter.into(), &g1(0.5), &ds, None).is_err());
    }

    #[test]
    fn efficient_weight_two_points() {
        // y = (-1, 2), θ = 0, τ = 0.3: g = (0.7, -1) and (-0.3, 2).
        let ds = Dataset::location(vec![-1.0_f64, 2.0]).unwrap();
        let w = build_weight(WeightKind::EfficientAtPreliminary.into(), &g1(0.3), &ds, Some(&[0.0])).unwrap();
        let (a, b, c) = ((0.49 + 0.09) / 2.0, (-0.7 - 0.6) / 2.0, (1.0 + 4.0) / 2.0);
        let det = a * c - b * b;
        let expect = [[c / det, -b / det], [-b / det, a / det]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((w.matrix[(i, j)] - expect[i][j]).abs() < 1e-12);
            }
        }
        assert!(build_weight(WeightKind::EfficientAtPreliminary.into(), &g1(0.3), &ds, None).is_err());
    }

    #[test]
    fn criterion_values() {
        let w = WeightMatrix::<f64>::identity(2);
        assert_eq!(criterion(&[0.0, 0.0], &w).unwrap(), 0.0);
        assert_eq!(criterion(&[1.0, 0.0], &w).unwrap(), 1.0);
        assert_eq!(criterion(&[1.0, 3.0], &w.scaled(2.0)).unwrap(), 20.0);
        assert!(criterion(&[1.0], &w).is_err());
    }

    #[test]
    fn one_step_symmetric_pair() {
        let ds = Dataset::location(vec![-1.0_f64, 1.0]).unwrap();
        let fit = fit_one_step(&g1(0.5), &ds, WeightKind::Identity.into(), &ParamBox::default()).unwrap();
        assert_eq!(fit.theta_hat, vec![0.0]);
        assert_eq!(fit.q_hat, 0.0);
        assert!(fit_one_step(
            &g1(0.5),
            &ds,
            WeightKind::EfficientAtPreliminary.into(),
            &ParamBox::default()
        )
        .is_err());
    }

    #[test]
    fn constant_data_makes_two_step_weight_singular() {
        let ds = Dataset::location(vec![1.5_f64; 20]).unwrap();
        for tau in [0.2, 0.5] {
            let err = fit_two_step(&g1(tau), &ds, WeightKind::Identity.into(), &ParamBox::default()).unwrap_err();
            assert!(matches!(err, Error::WeightSingularAtPreliminary { .. }), "{err:?}");
        }
    }

    #[test]
    fn two_step_records_preliminary() {
        let ds = Dataset::location(vec![-1.3_f64, 0.2, 0.9, 2.5, -0.4]).unwrap();
        let fit = fit_two_step(&g1(0.3), &ds, WeightKind::Identity.into(), &ParamBox::default()).unwrap();
        assert!(fit.preliminary.is_some());
        assert_eq!(fit.weight_used.kind, WeightKind::EfficientAtPreliminary);
        let g = g1(0.3).eval(&ds, &fit.theta_hat).unwrap();
        assert!((criterion(&g, &fit.weight_used).unwrap() - fit.q_hat).abs() < 1e-10);
    }
}
