//! Weighted nonlinear least-squares refinement of a UE state.
//!
//! [`refine`] polishes a starting state against every scalar measurement
//! with a Levenberg–Marquardt loop over the masked unknown vector (clock
//! carried in meters so all coordinates share a comparable scale). Scalar
//! observations are matched to forward-model rows by label, so a subset or
//! reordering of the canonical measurement list works too. Azimuth
//! residuals wrap to `(-pi, pi]`; elevations do not (their domain is a
//! half-circle).

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::geometry::wrap_angle;
use crate::identifiability::{model_rows, pack, scalar_rows, unpack, UnknownsMask};
use crate::measurements::{Measurement, NoiseSpec};
use crate::scene::{Scenario, UeState};

use super::{refine_candidates, SolveError, SolveRequest, SolveResult};

/// Convergence threshold on the LM step norm.
pub const STEP_TOL: f64 = 1e-10;
/// Cap on accepted LM steps.
pub const MAX_ITERS: usize = 100;

/// A weighted squared residual below this counts as an exact fit.
const EXACT_COST: f64 = 1e-24;

/// One scalar observation aligned to a forward-model row.
struct ObsRow {
    /// Index into the canonical model-row list for this scenario.
    model_idx: usize,
    value: f64,
    /// Weighting sigma, always positive.
    sigma: f64,
    /// Azimuth-like: residuals wrap to `(-pi, pi]`.
    wrap: bool,
}

/// The weighted residual system for one scenario + observation set.
struct Objective<'a> {
    s: &'a Scenario,
    base: UeState,
    mask: UnknownsMask,
    rows: Vec<ObsRow>,
    /// Sigma source for model-row generation (values unused in residuals).
    eval_noise: NoiseSpec,
}

impl<'a> Objective<'a> {
    fn new(
        s: &'a Scenario,
        items: &[Measurement],
        mask: UnknownsMask,
        base: &UeState,
        weights: &NoiseSpec,
    ) -> Result<Self, SolveError> {
        if mask.dim() == 0 {
            return Err(crate::identifiability::IdentError::EmptyMask.into());
        }
        let eval_noise = NoiseSpec::default();
        let model = model_rows(s, base, &eval_noise)?;
        let index: HashMap<&str, usize> =
            model.iter().enumerate().map(|(i, r)| (r.label.as_str(), i)).collect();
        debug_assert_eq!(index.len(), model.len(), "model row labels must be unique");
        let observed = scalar_rows(items, &|m| {
            let sig = m.sigma();
            if sig > 0.0 {
                sig
            } else {
                weights.sigma_for(m.kind())
            }
        });
        if observed.is_empty() {
            return Err(SolveError::MissingMeasurement {
                what: "at least one measurement to fit".into(),
            });
        }
        let mut rows = Vec::with_capacity(observed.len());
        for o in observed {
            let model_idx = *index
                .get(o.label.as_str())
                .ok_or(SolveError::UnmatchedMeasurement { label: o.label.clone() })?;
            if !(o.sigma > 0.0) {
                return Err(SolveError::BadInput {
                    what: format!("non-positive weighting sigma for {}", o.label),
                });
            }
            rows.push(ObsRow { model_idx, value: o.value, sigma: o.sigma, wrap: o.wrap });
        }
        Ok(Objective { s, base: base.clone(), mask, rows, eval_noise })
    }

    /// Weighted residuals `(model - measured) / sigma` at the stacked
    /// coordinates `x`.
    fn residuals(&self, x: &DVector<f64>) -> Result<DVector<f64>, SolveError> {
        let u = unpack(x, self.mask, &self.base);
        let model = model_rows(self.s, &u, &self.eval_noise)?;
        let mut r = DVector::zeros(self.rows.len());
        for (i, o) in self.rows.iter().enumerate() {
            let raw = model[o.model_idx].value - o.value;
            let diff = if o.wrap { wrap_angle(raw) } else { raw };
            r[i] = diff / o.sigma;
        }
        Ok(r)
    }

    /// Central finite-difference Jacobian of the weighted residuals.
    fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>, SolveError> {
        let n = self.rows.len();
        let dim = x.len();
        let mut jac = DMatrix::zeros(n, dim);
        for j in 0..dim {
            let h = (1e-6 * x[j].abs()).max(1e-9);
            let mut xp = x.clone();
            xp[j] += h;
            let mut xm = x.clone();
            xm[j] -= h;
            let up = unpack(&xp, self.mask, &self.base);
            let um = unpack(&xm, self.mask, &self.base);
            let rows_p = model_rows(self.s, &up, &self.eval_noise)?;
            let rows_m = model_rows(self.s, &um, &self.eval_noise)?;
            for (i, o) in self.rows.iter().enumerate() {
                let raw = rows_p[o.model_idx].value - rows_m[o.model_idx].value;
                let diff = if o.wrap { wrap_angle(raw) } else { raw };
                let d = diff / (2.0 * h * o.sigma);
                if !d.is_finite() {
                    return Err(SolveError::BadInput {
                        what: format!(
                            "non-finite model derivative for row {}",
                            self.rows[i].model_idx
                        ),
                    });
                }
                jac[(i, j)] = d;
            }
        }
        Ok(jac)
    }
}

/// Result of one refinement run (before candidate assembly).
pub(crate) struct RefineOutcome {
    pub state: UeState,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Weighted squared residual after each accepted step, starting with
    /// the initial cost. Non-increasing by construction.
    /// Accepted-step cost history (diagnostic; exercised by tests).
    #[cfg_attr(not(test), allow(dead_code))]
    pub cost_trace: Vec<f64>,
}

/// Levenberg–Marquardt over the masked state, starting at `start`.
///
/// Steps solve `(J^T J + lambda diag(J^T J)) delta = -J^T r`; an accepted
/// step must strictly decrease the cost (damping grows by 4 on rejection,
/// shrinks by 3 on acceptance). Stops at step norm below [`STEP_TOL`],
/// at [`MAX_ITERS`] accepted steps, or — with `converged = false` — when
/// damping growth exhausts itself without an acceptable step.
pub(crate) fn refine_state(
    s: &Scenario,
    items: &[Measurement],
    mask: UnknownsMask,
    start: &UeState,
    weights: &NoiseSpec,
) -> Result<RefineOutcome, SolveError> {
    let obj = Objective::new(s, items, mask, start, weights)?;
    let dim = mask.dim();
    let mut x = pack(start, mask);
    let mut r = obj.residuals(&x)?;
    let mut cost = r.norm_squared();
    if !cost.is_finite() {
        return Err(SolveError::BadInput {
            what: "non-finite residual at the starting state".into(),
        });
    }
    let mut trace = vec![cost];
    let mut lambda = 1e-3;
    let mut iterations = 0usize;
    let mut converged = cost <= EXACT_COST;

    'outer: while !converged && iterations < MAX_ITERS {
        let jac = obj.jacobian(&x)?;
        let grad = jac.transpose() * &r;
        let hess = jac.transpose() * &jac;
        let max_diag = (0..dim).map(|i| hess[(i, i)]).fold(0.0f64, f64::max);
        if !(max_diag > 0.0) {
            // Flat model in every direction: nothing can move.
            converged = true;
            break;
        }
        loop {
            let mut damped = hess.clone();
            for i in 0..dim {
                damped[(i, i)] += lambda * hess[(i, i)].max(1e-12 * max_diag);
            }
            let delta = match damped.cholesky() {
                Some(ch) => -ch.solve(&grad),
                None => {
                    lambda *= 4.0;
                    if lambda > 1e12 {
                        break 'outer;
                    }
                    continue;
                }
            };
            if delta.norm() < STEP_TOL {
                converged = true;
                break 'outer;
            }
            let x_new = &x + &delta;
            // A trial step may wander onto a model singularity (e.g. the
            // position crossing an anchor); that rejects the step rather
            // than aborting the solve.
            let trial = obj.residuals(&x_new).ok().map(|rr| {
                let c = rr.norm_squared();
                (rr, c)
            });
            match trial {
                Some((r_new, cost_new)) if cost_new.is_finite() && cost_new < cost => {
                    x = x_new;
                    r = r_new;
                    cost = cost_new;
                    trace.push(cost);
                    iterations += 1;
                    lambda = (lambda / 3.0).max(1e-12);
                    if cost <= EXACT_COST {
                        converged = true;
                        break 'outer;
                    }
                    break;
                }
                _ => {
                    lambda *= 4.0;
                    if lambda > 1e12 {
                        break 'outer;
                    }
                }
            }
        }
    }

    Ok(RefineOutcome {
        state: unpack(&x, mask, start),
        residual_norm: cost.sqrt(),
        iterations,
        converged,
        cost_trace: trace,
    })
}

/// Weighted residual norm of the full measurement model at `state`,
/// without taking any refinement step.
pub(crate) fn residual_norm_at(
    s: &Scenario,
    items: &[Measurement],
    mask: UnknownsMask,
    state: &UeState,
    weights: &NoiseSpec,
) -> Result<f64, SolveError> {
    let obj = Objective::new(s, items, mask, state, weights)?;
    let r = obj.residuals(&pack(state, mask))?;
    Ok(r.norm())
}

/// Refine the request's initial state against its measurements.
///
/// This is the generic entry point: it needs `req.initial` to be set
/// (the scenario-specific solvers produce starts on their own) and wraps
/// the refined state in a single-candidate [`SolveResult`].
pub fn refine(req: &SolveRequest) -> Result<SolveResult, SolveError> {
    let start = req.initial.clone().ok_or(SolveError::MissingInitialGuess)?;
    refine_candidates(req, vec![start])
}
