//! Exact IVQR-GMM by sweeping the dual line arrangement in β.
//!
//! For fixed β the indicators are `1(c_i(β) ≤ α)` with intercepts
//! `c_i(β) = y_i − β D_i`, so ḡ_n only depends on how many intercepts (in
//! sorted order) lie below α. Two intercepts swap order exactly at the
//! critical slope `(y_i − y_j)/(D_i − D_j)`, and each swap changes a single
//! prefix sum. Sweeping the critical slopes in order therefore visits every
//! cell of the arrangement with O(d²) work per event.
//!
//! The α-limits of the parameter box enter as two extra horizontal lines
//! (`D = 0`) carrying no moment weight: a prefix is inside the box exactly
//! when the lower box line is below it and the upper one above it. The
//! β-limits bound which slope intervals are scored.
//!
//! Boundary points `α = c_i(β)` count line `i` as below (the `≤`
//! convention), which is the value of the open cell directly above the
//! line, so scoring open cells alone attains the infimum.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gmm::{criterion, CellDescriptor, FitDiagnostics, GmmFit, ParamBox, WeightMatrix};
use crate::moments::MomentSpec;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LineKind {
    Observed,
    BoxLow,
    BoxHigh,
}

impl LineKind {
    /// Tie order among identical lines: the upper box line sorts before an
    /// observed line at the same position and the lower one after it.
    fn tie_rank(self) -> i8 {
        match self {
            LineKind::BoxHigh => -1,
            LineKind::Observed => 0,
            LineKind::BoxLow => 1,
        }
    }
}

struct Line<T> {
    d: T,
    y: T,
    z: [T; 3],
    multiplicity: usize,
    kind: LineKind,
}

impl<T: Scalar> Line<T> {
    #[inline]
    fn intercept(&self, beta: T) -> T {
        self.y - beta * self.d
    }
}

#[derive(Debug, Clone, Copy)]
struct Cell<T> {
    q: T,
    slope_interval: usize,
    rank: usize,
    alpha: T,
    beta: T,
}

/// Statistics of a completed sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepStats {
    /// Observation pairs with `D_i ≠ D_j` whose swap was processed.
    pub observation_events: usize,
    /// Swaps involving a box line.
    pub box_events: usize,
    /// Cells scored (initial scan plus one per in-box event).
    pub cells_scored: usize,
}

/// Running minimum plus every cell within a small relative band of it;
/// the band survivors are re-scored by direct summation at the end.
struct Tracker<T> {
    best: T,
    band: T,
    cells: Vec<Cell<T>>,
}

impl<T: Scalar> Tracker<T> {
    fn new() -> Self {
        Tracker {
            best: T::infinity(),
            band: T::lit(0.1) * T::epsilon().sqrt(),
            cells: Vec::new(),
        }
    }

    fn slack(&self, q: T) -> T {
        self.band * (q.abs() + T::epsilon())
    }

    fn offer(&mut self, cell: Cell<T>) {
        if cell.q < self.best {
            self.best = cell.q;
            let cutoff = self.best + self.slack(self.best);
            self.cells.retain(|c| c.q <= cutoff);
        }
        if cell.q <= self.best + self.slack(self.best) {
            self.cells.push(cell);
        }
    }
}

fn build_lines<T: Scalar>(data: &Dataset<T>, bounds: &ParamBox<T>) -> Result<Vec<Line<T>>> {
    let d = data.d()?;
    let w = data.w()?;
    let n = data.n();
    if d.iter().all(|&v| v == d[0]) {
        return Err(Error::SlopeUnidentified);
    }
    if d.iter().chain(w).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite regressor".into()));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let key = |&i: &usize| (d[i], data.y[i]);
    idx.sort_by(|a, b| {
        let (ka, kb) = (key(a), key(b));
        ka.0.partial_cmp(&kb.0)
            .expect("finite")
            .then(ka.1.partial_cmp(&kb.1).expect("finite"))
            .then(a.cmp(b))
    });
    let mut lines: Vec<Line<T>> = Vec::with_capacity(n + 2);
    for &i in &idx {
        let z = [T::one(), d[i], w[i]];
        if let Some(last) = lines.last_mut() {
            if last.d == d[i] && last.y == data.y[i] {
                for (acc, v) in last.z.iter_mut().zip(z) {
                    *acc += v;
                }
                last.multiplicity += 1;
                continue;
            }
        }
        lines.push(Line {
            d: d[i],
            y: data.y[i],
            z,
            multiplicity: 1,
            kind: LineKind::Observed,
        });
    }
    for (y, kind) in [(bounds.lo, LineKind::BoxLow), (bounds.hi, LineKind::BoxHigh)] {
        lines.push(Line {
            d: T::zero(),
            y,
            z: [T::zero(); 3],
            multiplicity: 0,
            kind,
        });
    }
    // Intercept order as β → −∞: ascending D, then ascending y.
    lines.sort_by(|a, b| {
        a.d.partial_cmp(&b.d)
            .expect("finite")
            .then(a.y.partial_cmp(&b.y).expect("finite"))
            .then(a.kind.tie_rank().cmp(&b.kind.tie_rank()))
    });
    Ok(lines)
}

/// Critical slopes of every crossing pair, sorted by slope then by pair.
fn build_events<T: Scalar>(lines: &[Line<T>]) -> Vec<(T, u32, u32)> {
    let nl = lines.len();
    let mut events = Vec::with_capacity(nl * (nl - 1) / 2);
    for a in 0..nl {
        let la = &lines[a];
        for (b, lb) in lines.iter().enumerate().skip(a + 1) {
            if la.d == lb.d {
                continue;
            }
            let slope = (la.y - lb.y) / (la.d - lb.d);
            events.push((slope, a as u32, b as u32));
        }
    }
    events.sort_unstable_by(|x, y| {
        x.0.partial_cmp(&y.0)
            .expect("finite slopes")
            .then(x.1.cmp(&y.1))
            .then(x.2.cmp(&y.2))
    });
    events
}

/// Exact global minimizer of the IVQR criterion over the open parameter box.
///
/// Fails with [`Error::DegenerateArrangement`] when three or more lines are
/// concurrent at a processed event.
pub fn minimize_ivqr_sweep<T: Scalar>(
    data: &Dataset<T>,
    tau: f64,
    w: &WeightMatrix<T>,
    bounds: &ParamBox<T>,
) -> Result<GmmFit<T>> {
    sweep(data, tau, w, bounds).map(|(fit, _)| fit)
}

/// As [`minimize_ivqr_sweep`], also returning sweep statistics.
pub fn sweep<T: Scalar>(
    data: &Dataset<T>,
    tau: f64,
    w: &WeightMatrix<T>,
    bounds: &ParamBox<T>,
) -> Result<(GmmFit<T>, SweepStats)> {
    let spec = MomentSpec::ivqr(tau)?;
    if w.dim() != 3 {
        return Err(Error::DimensionMismatch {
            expected: 3,
            got: w.dim(),
        });
    }
    let lines = build_lines(data, bounds)?;
    let events = build_events(&lines);
    let nl = lines.len();
    let n = T::count(data.n());
    let tau_t = T::lit(tau);

    let mut ztot = [T::zero(); 3];
    for l in &lines {
        for (acc, &v) in ztot.iter_mut().zip(&l.z) {
            *acc += v;
        }
    }
    let target: [T; 3] = std::array::from_fn(|k| tau_t * ztot[k] / n);
    let wm = &w.matrix;
    let score = |s: &[T; 3]| -> T {
        let m: [T; 3] = std::array::from_fn(|k| target[k] - s[k] / n);
        wm.quad_form_unchecked(&m)
    };

    let mut order: Vec<usize> = (0..nl).collect();
    let mut pos: Vec<usize> = (0..nl).collect();
    let mut prefix: Vec<[T; 3]> = vec![[T::zero(); 3]; nl + 1];
    for k in 0..nl {
        let z = lines[order[k]].z;
        prefix[k + 1] = std::array::from_fn(|j| prefix[k][j] + z[j]);
    }
    let lo_line = lines.iter().position(|l| l.kind == LineKind::BoxLow).expect("box line");
    let hi_line = lines
        .iter()
        .position(|l| l.kind == LineKind::BoxHigh)
        .expect("box line");

    let (blo, bhi) = (bounds.lo, bounds.hi);
    let two = T::lit(2.0);
    let mut tracker = Tracker::new();
    let mut stats = SweepStats {
        observation_events: 0,
        box_events: 0,
        cells_scored: 0,
    };
    let mut stamp = vec![usize::MAX; nl];
    let mut entered = false;
    let mut prev: Option<T> = None;
    let mut interval = 0usize;
    let mut e = 0usize;
    loop {
        // Arrangement is fixed on (prev, next).
        let next = events.get(e).map(|ev| ev.0);
        let ilo = prev.map_or(blo, |p| p.max(blo));
        let ihi = next.map_or(bhi, |s| s.min(bhi));
        if !entered && ilo < ihi {
            entered = true;
            let beta = (ilo + ihi) / two;
            for k in pos[lo_line] + 1..=pos[hi_line] {
                let alpha = (lines[order[k - 1]].intercept(beta) + lines[order[k]].intercept(beta)) / two;
                tracker.offer(Cell {
                    q: score(&prefix[k]),
                    slope_interval: interval,
                    rank: k,
                    alpha,
                    beta,
                });
                stats.cells_scored += 1;
            }
        }
        let Some(s) = next else { break };
        let mut g_end = e;
        while g_end < events.len() && events[g_end].0 == s {
            g_end += 1;
        }
        let after = events.get(g_end).map(|ev| ev.0);
        let alo = s.max(blo);
        let ahi = after.map_or(bhi, |x| x.min(bhi));
        let score_events = entered && alo < ahi;
        let beta = (alo + ahi) / two;
        interval += 1;
        for &(_, a, b) in &events[e..g_end] {
            let (a, b) = (a as usize, b as usize);
            if g_end - e > 1 {
                if stamp[a] == interval || stamp[b] == interval {
                    return Err(Error::DegenerateArrangement(format!(
                        "three or more concurrent lines at slope {s}"
                    )));
                }
                stamp[a] = interval;
                stamp[b] = interval;
            }
            let pa = pos[a];
            if pos[b] != pa + 1 {
                return Err(Error::DegenerateArrangement(format!("non-adjacent swap at slope {s}")));
            }
            order[pa] = b;
            order[pa + 1] = a;
            pos[b] = pa;
            pos[a] = pa + 1;
            let k = pa + 1;
            let zb = lines[b].z;
            prefix[k] = std::array::from_fn(|j| prefix[pa][j] + zb[j]);
            if lines[a].kind == LineKind::Observed && lines[b].kind == LineKind::Observed {
                stats.observation_events += lines[a].multiplicity * lines[b].multiplicity;
            } else {
                stats.box_events += 1;
            }
            if score_events && pos[lo_line] < k && k <= pos[hi_line] {
                let alpha = (lines[b].intercept(beta) + lines[a].intercept(beta)) / two;
                tracker.offer(Cell {
                    q: score(&prefix[k]),
                    slope_interval: interval,
                    rank: k,
                    alpha,
                    beta,
                });
                stats.cells_scored += 1;
            }
        }
        prev = Some(s);
        e = g_end;
    }

    // Re-score the near-minimal cells directly; ties go to the smallest
    // indicator vector, exactly as in the brute-force oracle.
    let mut direct = Vec::with_capacity(tracker.cells.len());
    for c in &tracker.cells {
        let g = spec.eval(data, &[c.alpha, c.beta])?;
        direct.push(criterion(&g, w)?);
    }
    let points: Vec<(T, T)> = tracker.cells.iter().map(|c| (c.alpha, c.beta)).collect();
    let (q_hat, i, ties) = super::canonical_ivqr_choice(data, &points, &direct)?
        .ok_or_else(|| Error::EmptyBox("no arrangement cell inside the box".into()))?;
    let c = tracker.cells[i];
    let prefix_count = super::indicator_vector(data, &[c.alpha, c.beta])?
        .iter()
        .filter(|&&b| b)
        .count();
    let fit = GmmFit {
        theta_hat: vec![c.alpha, c.beta],
        q_hat,
        weight_used: w.clone(),
        diagnostics: FitDiagnostics {
            method: "arrangement sweep".into(),
            cell: CellDescriptor::Arrangement {
                slope_interval: c.slope_interval,
                rank: c.rank,
                prefix_count,
                alpha: c.alpha,
                beta: c.beta,
            },
            ties,
            events: stats.observation_events,
            ridge_applied: w.ridge_applied,
        },
        preliminary: None,
    };
    Ok((fit, stats))
}
