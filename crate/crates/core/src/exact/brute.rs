//! Brute-force IVQR minimizer used as an independent oracle for the sweep.
//!
//! Every cell of the arrangement (clipped to the box) is a convex polygon
//! with at least one vertex, and near a vertex where two lines meet the four
//! angular bisectors point into the four adjacent cells. Probing all
//! bisectors of all vertices at a small distance therefore lands in every
//! cell; each probe is scored by direct summation.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gmm::{criterion, CellDescriptor, FitDiagnostics, GmmFit, ParamBox, WeightMatrix};
use crate::moments::MomentSpec;
use crate::scalar::Scalar;

pub const BRUTE_FORCE_MAX_N: usize = 200;

/// Unit direction of `α + β D = y` in the (α, β) plane.
fn line_dir<T: Scalar>(d: T) -> (T, T) {
    let norm = (d * d + T::one()).sqrt();
    (-d / norm, T::one() / norm)
}

fn bisector_probes<T: Scalar>(v: (T, T), u: (T, T), w: (T, T), eps: T, out: &mut Vec<(T, T)>) {
    for sign in [T::one(), -T::one()] {
        let b = (u.0 + sign * w.0, u.1 + sign * w.1);
        let len = (b.0 * b.0 + b.1 * b.1).sqrt();
        if len == T::zero() {
            continue;
        }
        let (bx, by) = (b.0 / len * eps, b.1 / len * eps);
        out.push((v.0 + bx, v.1 + by));
        out.push((v.0 - bx, v.1 - by));
    }
}

pub fn brute_force_ivqr<T: Scalar>(
    data: &Dataset<T>,
    tau: f64,
    w: &WeightMatrix<T>,
    bounds: &ParamBox<T>,
) -> Result<GmmFit<T>> {
    let spec = MomentSpec::ivqr(tau)?;
    spec.check_data(data)?;
    let n = data.n();
    if n > BRUTE_FORCE_MAX_N {
        return Err(Error::TooLarge {
            n,
            max: BRUTE_FORCE_MAX_N,
        });
    }
    let d = data.d()?;
    let scale = data.y.iter().chain(d).fold(T::one(), |acc, v| acc.max(v.abs()));
    let eps = T::lit(1e-7) * scale;
    let (lo, hi) = (bounds.lo, bounds.hi);

    // Lines in the form α + β D = y, including the two α-edges of the box.
    let mut lines: Vec<(T, T)> = d.iter().copied().zip(data.y.iter().copied()).collect();
    lines.push((T::zero(), lo));
    lines.push((T::zero(), hi));

    let mut probes: Vec<(T, T)> = Vec::new();
    for (i, &(di, yi)) in lines.iter().enumerate() {
        let ui = line_dir(di);
        for &(dj, yj) in &lines[i + 1..] {
            if di == dj {
                continue;
            }
            let beta = (yi - yj) / (di - dj);
            let alpha = yi - beta * di;
            bisector_probes((alpha, beta), ui, line_dir(dj), eps, &mut probes);
        }
        // β-edges of the box.
        for b in [lo, hi] {
            bisector_probes((yi - b * di, b), ui, (T::one(), T::zero()), eps, &mut probes);
        }
    }
    probes.retain(|&(a, b)| a > lo && a < hi && b > lo && b < hi);

    let mut scores = Vec::with_capacity(probes.len());
    for &(a, b) in &probes {
        let g = spec.eval(data, &[a, b])?;
        scores.push(criterion(&g, w)?);
    }
    let (q_hat, k, ties) = super::canonical_ivqr_choice(data, &probes, &scores)?
        .ok_or_else(|| Error::EmptyBox("no probe inside the box".into()))?;
    let (a, b) = probes[k];
    Ok(GmmFit {
        theta_hat: vec![a, b],
        q_hat,
        weight_used: w.clone(),
        diagnostics: FitDiagnostics {
            method: "brute force".into(),
            cell: CellDescriptor::Candidate {
                index: k,
                point: vec![a, b],
            },
            ties,
            events: probes.len(),
            ridge_applied: w.ridge_applied,
        },
        preliminary: None,
    })
}
