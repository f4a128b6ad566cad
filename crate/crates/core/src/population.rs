//! Pseudo-true values: minimizers of the population criterion `π(θ)ᵀ W₀ π(θ)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::{moment_second_moment, ParamBox, WeightKind};
use crate::linalg::Matrix;
use crate::moments::{population_ivqr, population_ivqr_jacobian, population_location, MomentSpec, QuadratureRule};
use crate::sampling::{gen_ivqr, gen_location, EpsScale, SeedSpec};

pub const MULTISTARTS: usize = 16;
const F_TOL: f64 = 1e-10;
const X_TOL: f64 = 1e-8;
const MAX_ITER: usize = 10_000;
/// Sample size used when a population second moment has no closed form.
pub const SIMULATED_DRAWS: usize = 400_000;
const SIMULATION_SEED: u64 = 0x0005_eed0_f9e0;

/// A model whose population moments can be evaluated at any θ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum PopulationModel {
    Location { spec: MomentSpec, eps: EpsScale },
    Ivqr { tau: f64, delta: f64, rule: QuadratureRule },
}

impl PopulationModel {
    pub fn location(spec: MomentSpec) -> Result<Self> {
        if !spec.family.is_location() {
            return Err(Error::InvalidArgument("not a location family".into()));
        }
        Ok(PopulationModel::Location {
            spec,
            eps: EpsScale::default(),
        })
    }

    pub fn ivqr(tau: f64, delta: f64) -> Result<Self> {
        MomentSpec::ivqr(tau)?;
        crate::sampling::ivqr_covariance(delta)?;
        Ok(PopulationModel::Ivqr {
            tau,
            delta,
            rule: QuadratureRule::default(),
        })
    }

    pub fn spec(&self) -> MomentSpec {
        match self {
            PopulationModel::Location { spec, .. } => *spec,
            PopulationModel::Ivqr { tau, .. } => MomentSpec::ivqr(*tau).expect("validated tau"),
        }
    }

    pub fn param_dim(&self) -> usize {
        self.spec().param_dim()
    }

    pub fn moment_dim(&self) -> usize {
        self.spec().moment_dim()
    }

    /// Whether some θ solves `π(θ) = 0` under this design.
    pub fn correctly_specified(&self) -> bool {
        match self {
            PopulationModel::Location { spec, .. } => spec.tau == 0.5,
            PopulationModel::Ivqr { delta, .. } => *delta == 0.0,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            PopulationModel::Location { .. } => "closed form".into(),
            PopulationModel::Ivqr { rule, .. } => rule.describe(),
        }
    }

    pub fn moments(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.check_theta(theta)?;
        match self {
            PopulationModel::Location { spec, eps } => population_location(spec, theta[0], *eps),
            PopulationModel::Ivqr { tau, delta, rule } => {
                Ok(population_ivqr([theta[0], theta[1]], *delta, *tau, rule)?.to_vec())
            }
        }
    }

    /// `∂π/∂θ`, one row per moment.
    pub fn jacobian(&self, theta: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.check_theta(theta)?;
        match self {
            PopulationModel::Location { spec, eps } => {
                let sd = eps.sd();
                let t = theta[0];
                let fam = spec.family;
                let mut rows = Vec::with_capacity(spec.moment_dim());
                if fam.has_indicator() {
                    let z = t / sd;
                    rows.push(vec![(-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt() / sd]);
                }
                rows.push(vec![-1.0]);
                if fam.has_variance() {
                    rows.push(vec![2.0 * t]);
                }
                if fam.has_x() {
                    rows.extend(std::iter::repeat_n(vec![0.0], 5));
                }
                Ok(rows)
            }
            PopulationModel::Ivqr { delta, rule, .. } => {
                Ok(population_ivqr_jacobian([theta[0], theta[1]], *delta, rule)?
                    .iter()
                    .map(|r| r.to_vec())
                    .collect())
            }
        }
    }

    pub fn criterion(&self, theta: &[f64], w0: &Matrix<f64>) -> Result<f64> {
        w0.quad_form(&self.moments(theta)?)
    }

    fn gradient(&self, theta: &[f64], w0: &Matrix<f64>) -> Result<Vec<f64>> {
        let wp = w0.mul_vec(&self.moments(theta)?);
        let jac = self.jacobian(theta)?;
        Ok((0..theta.len())
            .map(|k| 2.0 * jac.iter().zip(&wp).map(|(row, v)| row[k] * v).sum::<f64>())
            .collect())
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        let p = self.param_dim();
        if theta.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: theta.len(),
            });
        }
        Ok(())
    }
}

/// `E[z zᵀ]` for the IVQR instruments `(1, D, W)`.
pub fn ivqr_instrument_second_moment() -> Matrix<f64> {
    Matrix::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.5], vec![0.0, 0.5, 1.0]]).expect("square")
}

/// Population counterpart of a weight scheme. The efficient weight inverts
/// `E[g gᵀ]` at `prelim`, estimated from one large seeded sample.
pub fn population_weight(kind: WeightKind, model: &PopulationModel, prelim: Option<&[f64]>) -> Result<Matrix<f64>> {
    let spec = model.spec();
    let target = match kind {
        WeightKind::Identity => return Ok(Matrix::identity(spec.moment_dim())),
        WeightKind::InstrumentOuter | WeightKind::TauScaledInstrumentOuter => {
            let PopulationModel::Ivqr { tau, .. } = model else {
                return Err(Error::InvalidArgument(
                    "instrument weights need the instrumented model".into(),
                ));
            };
            let zz = ivqr_instrument_second_moment();
            if kind == WeightKind::TauScaledInstrumentOuter {
                zz.scaled(tau * (1.0 - tau))
            } else {
                zz
            }
        }
        WeightKind::EfficientAtPreliminary => {
            let theta =
                prelim.ok_or_else(|| Error::InvalidArgument("efficient weight requires a preliminary value".into()))?;
            let seed = SeedSpec::new(SIMULATION_SEED, "population-weight", 0);
            let data = match model {
                PopulationModel::Location { spec, eps } => {
                    gen_location(SIMULATED_DRAWS, spec.family.variant().expect("location"), *eps, &seed)?
                }
                PopulationModel::Ivqr { delta, .. } => gen_ivqr(SIMULATED_DRAWS, *delta, &seed)?,
            };
            moment_second_moment(&spec, &data, theta)?
        }
    };
    let (w, _) = crate::gmm::invert_weight_target(&target, crate::gmm::DEFAULT_RIDGE_EPSILON)?;
    Ok(w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoTrueResult {
    pub theta_star: Vec<f64>,
    pub q0_star: f64,
    pub method: String,
    pub multistart_count: usize,
    /// Two distinct θ attain the minimum to within the criterion tolerance.
    pub flat_region: bool,
    /// Criterion value reached from each start, in lattice order.
    pub start_values: Vec<f64>,
}

/// Starting points: 16 equispaced in one dimension, a 4×4 lattice in two.
pub fn multistart_lattice(dim: usize, bounds: &ParamBox<f64>) -> Vec<Vec<f64>> {
    let at = |k: usize, m: usize| bounds.lo + (k as f64 + 0.5) / m as f64 * (bounds.hi - bounds.lo);
    match dim {
        1 => (0..MULTISTARTS).map(|k| vec![at(k, MULTISTARTS)]).collect(),
        _ => {
            let m = 4;
            let mut out = Vec::with_capacity(m * m);
            for i in 0..m {
                for j in 0..m {
                    out.push(vec![at(i, m), at(j, m)]);
                }
            }
            out
        }
    }
}

pub fn pseudo_true(model: &PopulationModel, w0: &Matrix<f64>, bounds: &ParamBox<f64>) -> Result<PseudoTrueResult> {
    if w0.dim() != model.moment_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.moment_dim(),
            got: w0.dim(),
        });
    }
    let f = |t: &[f64]| model.criterion(t, w0);
    let starts = multistart_lattice(model.param_dim(), bounds);
    let mut found: Vec<(Vec<f64>, f64)> = Vec::with_capacity(starts.len());
    for s in &starts {
        let step = 0.1 * (bounds.hi - bounds.lo);
        let (x, _) = nelder_mead(&f, s, step, bounds)?;
        // Restart from a small simplex to shake off premature collapse.
        let (x, _) = nelder_mead(&f, &x, 1e-3 * (bounds.hi - bounds.lo), bounds)?;
        let x = newton_polish(model, w0, x, bounds)?;
        let q = f(&x)?;
        found.push((x, q));
    }
    let start_values: Vec<f64> = found.iter().map(|(_, q)| *q).collect();
    let mut order: Vec<usize> = (0..found.len()).collect();
    order.sort_by(|&a, &b| {
        found[a]
            .1
            .total_cmp(&found[b].1)
            .then_with(|| lex_cmp(&found[a].0, &found[b].0))
    });
    let (theta_star, q0_star) = found[order[0]].clone();
    let flat_region = order[1..].iter().any(|&k| {
        let (x, q) = &found[k];
        (q - q0_star).abs() < F_TOL && x.iter().zip(&theta_star).any(|(a, b)| (a - b).abs() > 1e-4)
    });
    Ok(PseudoTrueResult {
        theta_star,
        q0_star,
        method: format!("nelder-mead multistart, newton polish, {}", model.describe()),
        multistart_count: starts.len(),
        flat_region,
        start_values,
    })
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

fn clamp(x: &mut [f64], bounds: &ParamBox<f64>) {
    for v in x.iter_mut() {
        *v = v.clamp(bounds.lo, bounds.hi);
    }
}

/// Box-projected Nelder–Mead simplex descent.
pub fn nelder_mead<F>(f: &F, x0: &[f64], step: f64, bounds: &ParamBox<f64>) -> Result<(Vec<f64>, f64)>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let p = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(p + 1);
    let mut start = x0.to_vec();
    clamp(&mut start, bounds);
    simplex.push((start.clone(), f(&start)?));
    for k in 0..p {
        let mut v = start.clone();
        v[k] += if v[k] + step <= bounds.hi { step } else { -step };
        clamp(&mut v, bounds);
        let fv = f(&v)?;
        simplex.push((v, fv));
    }
    for _ in 0..MAX_ITER {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| lex_cmp(&a.0, &b.0)));
        let best = simplex[0].1;
        let worst = simplex[p].1;
        let diam = simplex[1..]
            .iter()
            .flat_map(|(v, _)| v.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if worst - best <= F_TOL * (1.0 + best.abs()) && diam <= X_TOL {
            break;
        }
        let centroid: Vec<f64> = (0..p)
            .map(|k| simplex[..p].iter().map(|(v, _)| v[k]).sum::<f64>() / p as f64)
            .collect();
        let along = |t: f64| {
            let mut v: Vec<f64> = centroid
                .iter()
                .zip(&simplex[p].0)
                .map(|(c, w)| c + t * (w - c))
                .collect();
            clamp(&mut v, bounds);
            v
        };
        let xr = along(-1.0);
        let fr = f(&xr)?;
        if fr < simplex[0].1 {
            let xe = along(-2.0);
            let fe = f(&xe)?;
            simplex[p] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[p - 1].1 {
            simplex[p] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < worst {
            let xc = along(-0.5);
            let fc = f(&xc)?;
            (xc, fc)
        } else {
            let xc = along(0.5);
            let fc = f(&xc)?;
            (xc, fc)
        };
        if fc < worst.min(fr) {
            simplex[p] = (xc, fc);
            continue;
        }
        let x0 = simplex[0].0.clone();
        for (v, fv) in simplex[1..].iter_mut() {
            for (a, b) in v.iter_mut().zip(&x0) {
                *a = b + 0.5 * (*a - b);
            }
            *fv = f(v)?;
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| lex_cmp(&a.0, &b.0)));
    let (x, fx) = simplex.swap_remove(0);
    Ok((x, fx))
}

/// Newton iterations on `∇Q = 0` with a finite-difference Hessian. Steps are
/// kept only while they stay in the box and shrink the gradient.
fn newton_polish(
    model: &PopulationModel,
    w0: &Matrix<f64>,
    mut x: Vec<f64>,
    bounds: &ParamBox<f64>,
) -> Result<Vec<f64>> {
    let p = x.len();
    let mut g = model.gradient(&x, w0)?;
    for _ in 0..50 {
        let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gnorm == 0.0 {
            break;
        }
        let mut h = vec![vec![0.0; p]; p];
        for k in 0..p {
            let step = 1e-5 * (1.0 + x[k].abs());
            let mut up = x.clone();
            let mut dn = x.clone();
            up[k] += step;
            dn[k] -= step;
            let (gu, gd) = (model.gradient(&up, w0)?, model.gradient(&dn, w0)?);
            for r in 0..p {
                h[r][k] = (gu[r] - gd[r]) / (2.0 * step);
            }
        }
        let delta = match p {
            1 => vec![-g[0] / h[0][0]],
            _ => {
                let a = 0.5 * (h[0][1] + h[1][0]);
                let det = h[0][0] * h[1][1] - a * a;
                vec![-(h[1][1] * g[0] - a * g[1]) / det, -(h[0][0] * g[1] - a * g[0]) / det]
            }
        };
        if delta.iter().any(|v| !v.is_finite()) {
            break;
        }
        let cand: Vec<f64> = x.iter().zip(&delta).map(|(a, d)| a + d).collect();
        if cand.iter().any(|&v| v < bounds.lo || v > bounds.hi) {
            break;
        }
        let gc = model.gradient(&cand, w0)?;
        let gc_norm = gc.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(gc_norm < gnorm) {
            break;
        }
        let small = delta.iter().all(|d| d.abs() <= 1e-15 * (1.0 + x[0].abs()));
        x = cand;
        g = gc;
        if small {
            break;
        }
    }
    Ok(x)
}

/// The six scalars that determine the exactly identified IV estimand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformInputs {
    pub pi1: f64,
    pub pi2: f64,
    pub ez1d: f64,
    pub ez2d: f64,
    pub beta0: f64,
    pub beta_star: f64,
}

/// `β̄ = (π₁E[Z₁D]β₀ + π₂E[Z₂D]β*) / (π₁E[Z₁D] + π₂E[Z₂D])`.
pub fn transformed_beta(t: &TransformInputs) -> Result<f64> {
    let a = t.pi1 * t.ez1d;
    let b = t.pi2 * t.ez2d;
    let den = a + b;
    if den == 0.0 || !den.is_finite() {
        return Err(Error::InvalidArgument("π₁E[Z₁D] + π₂E[Z₂D] is zero".into()));
    }
    if b == 0.0 {
        return Ok(t.beta0);
    }
    if a == 0.0 {
        return Ok(t.beta_star);
    }
    Ok((a * t.beta0 + b * t.beta_star) / den)
}
