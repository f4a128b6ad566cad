//! Exact global minimizers of the nonsmooth GMM criterion.

mod brute;
mod location;
pub mod poly;
mod sweep;

pub use brute::{brute_force_ivqr, BRUTE_FORCE_MAX_N};
pub use location::minimize_location;
pub use sweep::{minimize_ivqr_sweep, sweep, SweepStats};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gmm::{GmmFit, ParamBox, WeightMatrix};
use crate::moments::{MomentFamily, MomentSpec};
use crate::scalar::Scalar;

/// Exact minimizer for any supported family under a fixed weight.
///
/// IVQR arrangements with concurrent lines fall back to brute force when
/// the sample is small enough.
pub fn minimize<T: Scalar>(
    spec: &MomentSpec,
    data: &Dataset<T>,
    w: &WeightMatrix<T>,
    bounds: &ParamBox<T>,
) -> Result<GmmFit<T>> {
    match spec.family {
        MomentFamily::Ivqr => match minimize_ivqr_sweep(data, spec.tau, w, bounds) {
            Err(Error::DegenerateArrangement(_)) if data.n() <= BRUTE_FORCE_MAX_N => {
                brute_force_ivqr(data, spec.tau, w, bounds)
            }
            other => other,
        },
        _ => minimize_location(spec, data, w, bounds),
    }
}

/// `1(y_i ≤ α + β D_i)` for every observation.
pub fn indicator_vector<T: Scalar>(data: &Dataset<T>, theta: &[T]) -> Result<Vec<bool>> {
    let d = data.d()?;
    if theta.len() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: theta.len(),
        });
    }
    Ok(data
        .y
        .iter()
        .zip(d)
        .map(|(&y, &di)| y <= theta[0] + theta[1] * di)
        .collect())
}

/// Relative band within which two criterion values count as tied.
pub(crate) fn tie_tolerance<T: Scalar>(q: T) -> T {
    T::lit(1e-12).max(T::epsilon() * T::lit(100.0)) * q.abs()
}

/// Among candidate points whose criterion is tied with the minimum, the one
/// with the lexicographically smallest indicator vector (`false < true`),
/// first occurrence on equal vectors. Returns `(q, index, distinct cells)`.
pub(crate) fn canonical_ivqr_choice<T: Scalar>(
    data: &Dataset<T>,
    points: &[(T, T)],
    scores: &[T],
) -> Result<Option<(T, usize, usize)>> {
    let q_min = scores.iter().copied().fold(T::infinity(), |a, v| a.min(v));
    if !q_min.is_finite() {
        return Ok(None);
    }
    let tol = tie_tolerance(q_min);
    let mut best: Option<(Vec<bool>, usize)> = None;
    let mut seen: Vec<Vec<bool>> = Vec::new();
    for (k, &q) in scores.iter().enumerate() {
        if q > q_min + tol {
            continue;
        }
        let ind = indicator_vector(data, &[points[k].0, points[k].1])?;
        if best.as_ref().is_none_or(|(b, _)| ind < *b) {
            best = Some((ind.clone(), k));
        }
        if !seen.contains(&ind) {
            seen.push(ind);
        }
    }
    Ok(best.map(|(_, k)| (scores[k], k, seen.len())))
}
