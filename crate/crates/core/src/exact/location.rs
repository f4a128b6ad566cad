//! Exact minimization of the location-model criterion.
//!
//! Between consecutive order statistics the indicator moment is constant and
//! every other moment is a polynomial of degree at most two in θ, so the
//! criterion is a quartic on each interval. Each quartic is minimized
//! exactly from its critical points and the interval ends.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gmm::{criterion, CellDescriptor, FitDiagnostics, GmmFit, ParamBox, WeightMatrix};
use crate::moments::{MomentSpec, LOCATION_VARIANCE_TARGET};
use crate::scalar::{just_below, Scalar};

use super::poly::Poly;

/// Relative band inside which polynomial minima are re-scored by direct summation.
const RESCORE_BAND: f64 = 1e-9;

struct Candidate<T> {
    theta: T,
    q: T,
    interval: usize,
    lo: T,
    hi: T,
    count: usize,
    attained: bool,
}

/// Per-component polynomials of ḡ_n(θ) excluding the indicator, and the
/// criterion split as `Q = P(θ) + 2 s R(θ) + s² w₀₀` with `s` the indicator value.
struct Decomposition<T> {
    rest: Poly<T>,
    cross: Poly<T>,
    w00: T,
}

fn decompose<T: Scalar>(spec: &MomentSpec, data: &Dataset<T>, w: &WeightMatrix<T>) -> Decomposition<T> {
    let n = T::count(data.n());
    let m1 = data.y.iter().copied().sum::<T>() / n;
    let m2 = data.y.iter().map(|&v| v * v).sum::<T>() / n;
    let fam = spec.family;
    let mut comps: Vec<Poly<T>> = Vec::with_capacity(spec.moment_dim());
    let has_ind = fam.has_indicator();
    if has_ind {
        comps.push(Poly::zero());
    }
    comps.push(Poly(vec![m1, -T::one()]));
    let m = spec.moment_dim();
    if fam.has_variance() {
        comps.push(Poly(vec![
            m2 - T::lit(LOCATION_VARIANCE_TARGET),
            -T::lit(2.0) * m1,
            T::one(),
        ]));
    }
    let shift = T::lit(0.5 - spec.tau);
    for col in &data.x {
        let mean = col.iter().copied().sum::<T>() / n;
        comps.push(Poly::constant(mean - shift));
    }
    debug_assert_eq!(comps.len(), m);

    let wm = &w.matrix;
    let start = usize::from(has_ind);
    let mut rest = Poly::zero();
    for a in start..m {
        for b in start..m {
            let wab = wm[(a, b)];
            if wab != T::zero() {
                rest = rest.add(&comps[a].mul(&comps[b]).scale(wab));
            }
        }
    }
    let mut cross = Poly::zero();
    let mut w00 = T::zero();
    if has_ind {
        for b in start..m {
            cross = cross.add(&comps[b].scale(wm[(0, b)]));
        }
        w00 = wm[(0, 0)];
    }
    Decomposition { rest, cross, w00 }
}

/// Global minimizer of `ḡ_n(θ)ᵀ W ḡ_n(θ)` over `bounds` for a location family.
pub fn minimize_location<T: Scalar>(
    spec: &MomentSpec,
    data: &Dataset<T>,
    w: &WeightMatrix<T>,
    bounds: &ParamBox<T>,
) -> Result<GmmFit<T>> {
    if !spec.family.is_location() {
        return Err(Error::InvalidArgument("not a location family".into()));
    }
    spec.check_data(data)?;
    if w.dim() != spec.moment_dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.moment_dim(),
            got: w.dim(),
        });
    }
    let (lo, hi) = (bounds.lo, bounds.hi);
    if !(lo < hi) {
        return Err(Error::EmptyBox(format!("[{lo}, {hi}]")));
    }
    let dec = decompose(spec, data, w);
    let n = data.n();
    let nf = T::count(n);
    let tau = T::lit(spec.tau);

    let mut sorted = data.y.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite outcomes"));

    // Breakpoints: box ends and distinct sample values strictly inside.
    let mut knots = vec![lo];
    if spec.family.has_indicator() {
        for &v in &sorted {
            if v > lo && v < hi && *knots.last().expect("nonempty") != v {
                knots.push(v);
            }
        }
    }
    knots.push(hi);

    let mut below = sorted.partition_point(|&v| v <= lo);
    let mut cands: Vec<Candidate<T>> = Vec::new();
    let intervals = knots.len() - 1;
    for j in 0..intervals {
        let (a, b) = (knots[j], knots[j + 1]);
        if j > 0 {
            below = sorted.partition_point(|&v| v <= a);
        }
        let s = T::count(below) / nf - tau;
        let q = dec
            .rest
            .add(&dec.cross.scale(T::lit(2.0) * s))
            .add(&Poly::constant(s * s * dec.w00));
        let last = j + 1 == intervals;
        let right = if last { b } else { just_below(b, a) };
        let mut pts = vec![(a, true)];
        pts.extend(q.derivative().roots_in(a, right).into_iter().map(|t| (t, true)));
        pts.push((right, last));
        for (t, attained) in pts {
            if !t.is_finite() {
                return Err(Error::RootFinder(j));
            }
            cands.push(Candidate {
                theta: t,
                q: q.eval(t),
                interval: j,
                lo: a,
                hi: b,
                count: below,
                attained,
            });
        }
    }

    // Re-score everything near the polynomial minimum by direct summation.
    let best_poly = cands.iter().map(|c| c.q).fold(T::infinity(), |acc, v| acc.min(v));
    let band = T::lit(RESCORE_BAND) * (T::one() + best_poly.abs());
    let mut scored: Vec<(T, usize)> = Vec::new();
    for (k, c) in cands.iter().enumerate() {
        if c.q > best_poly + band {
            continue;
        }
        let g = spec.eval(data, &[c.theta])?;
        scored.push((criterion(&g, w)?, k));
    }
    let q_min = scored.iter().map(|&(q, _)| q).fold(T::infinity(), |acc, v| acc.min(v));
    if !q_min.is_finite() {
        return Err(Error::EmptyBox("no candidate".into()));
    }
    // Minima equal up to rounding (e.g. the two mirror-image minima of the
    // symmetric g4 quartic) are ties: prefer attained points, then the
    // smallest θ. Relative tolerance keeps the choice invariant to W → cW.
    let tie_tol = super::tie_tolerance(q_min);
    let tied: Vec<(T, usize)> = scored.iter().copied().filter(|&(q, _)| q <= q_min + tie_tol).collect();
    let (q_hat, k) = tied
        .iter()
        .copied()
        .min_by(|&(_, i), &(_, j)| {
            let (ci, cj) = (&cands[i], &cands[j]);
            cj.attained
                .cmp(&ci.attained)
                .then(ci.theta.partial_cmp(&cj.theta).expect("finite candidates"))
        })
        .expect("nonempty tie set");
    let mut tied: Vec<usize> = tied.iter().map(|&(_, i)| cands[i].interval).collect();
    tied.dedup();
    let c = &cands[k];
    Ok(GmmFit {
        theta_hat: vec![c.theta],
        q_hat,
        weight_used: w.clone(),
        diagnostics: FitDiagnostics {
            method: "order-statistic intervals".into(),
            cell: CellDescriptor::Interval {
                index: c.interval,
                lo: c.lo,
                hi: c.hi,
                count: c.count,
                point: c.theta,
            },
            ties: tied.len().max(1),
            events: intervals,
            ridge_applied: w.ridge_applied,
        },
        preliminary: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::LocationVariant;

    fn g1() -> MomentSpec {
        MomentSpec::location(LocationVariant::G1, 0.5).unwrap()
    }

    #[test]
    fn single_observation() {
        // Q(θ) = (1(0 ≤ θ) − ½)² + θ², minimized at θ = 0 with value ¼.
        let ds = Dataset::location(vec![0.0_f64]).unwrap();
        let fit = minimize_location(&g1(), &ds, &WeightMatrix::identity(2), &ParamBox::default()).unwrap();
        assert_eq!(fit.theta_hat, vec![0.0]);
        assert_eq!(fit.q_hat, 0.25);
    }

    #[test]
    fn symmetric_pair() {
        let ds = Dataset::location(vec![-1.0_f64, 1.0]).unwrap();
        let fit = minimize_location(&g1(), &ds, &WeightMatrix::identity(2), &ParamBox::default()).unwrap();
        assert_eq!(fit.theta_hat, vec![0.0]);
        assert_eq!(fit.q_hat, 0.0);
    }

    #[test]
    fn open_endpoint_infimum_is_approached() {
        // τ = 0.1, y = (0): left of 0 the criterion is 0.01 + θ², right of 0 it
        // is 0.81 + θ². The infimum 0.01 is approached from below 0.
        let spec = MomentSpec::location(LocationVariant::G1, 0.1).unwrap();
        let ds = Dataset::location(vec![0.0_f64]).unwrap();
        let fit = minimize_location(&spec, &ds, &WeightMatrix::identity(2), &ParamBox::default()).unwrap();
        assert!(fit.theta_hat[0] < 0.0 && fit.theta_hat[0] > -1e-12);
        assert!((fit.q_hat - 0.01).abs() < 1e-12);
    }

    #[test]
    fn smooth_family_is_one_interval() {
        let spec = MomentSpec::location(LocationVariant::G4, 0.5).unwrap();
        let x = vec![vec![0.1, -0.2, 0.3]; 5];
        let ds = Dataset::location_with_x(vec![0.5_f64, -1.0, 2.0], x).unwrap();
        let fit = minimize_location(&spec, &ds, &WeightMatrix::identity(7), &ParamBox::default()).unwrap();
        assert_eq!(fit.diagnostics.events, 1);
        // Direct check against a fine grid.
        let q = |t: f64| {
            let g = spec.eval(&ds, &[t]).unwrap();
            g.iter().map(|v| v * v).sum::<f64>()
        };
        let grid_min = (0..=200_000)
            .map(|k| q(-10.0 + 20.0 * k as f64 / 200_000.0))
            .fold(f64::INFINITY, f64::min);
        assert!(fit.q_hat <= grid_min + 1e-12);
    }

    #[test]
    fn box_clips_solution() {
        let ds = Dataset::location(vec![5.0_f64, 6.0, 7.0]).unwrap();
        let b = ParamBox::new(-1.0, 1.0).unwrap();
        let fit = minimize_location(&g1(), &ds, &WeightMatrix::identity(2), &b).unwrap();
        assert_eq!(fit.theta_hat, vec![1.0]);
        assert!(ParamBox::new(1.0, 1.0).is_err());
    }
}
