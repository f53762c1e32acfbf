//! Position from wavefront curvature: maximum-likelihood grid search
//! against the element-wise near-field response, with the unknown complex
//! path gain concentrated out.
//!
//! The observations are complex received values across several phase
//! profiles, `y_k = g * h_k(p) + n_k`, with both the gain `g` and the
//! position `p` unknown. Maximizing the likelihood over `g` in closed form
//! leaves the concentrated score `|<h(p), y>|^2 / |h(p)|^2` — by
//! Cauchy–Schwarz at most the observed power, with equality exactly when
//! the model matches up to a complex gain. A shared bulk phase drops out of
//! the inner-product magnitude, so the score varies on the wavefront
//! curvature scale (not the carrier wavelength), which keeps coarse grid
//! search meaningful.

use num_complex::Complex64;

use crate::geometry::Vec3;
use crate::identifiability::{nearfield_position_fim, nearfield_rank, UnknownsMask};
use crate::scene::{Scenario, UeState};
use crate::signal::{nf_received, PhaseProfile};

use super::init::pattern_search;
use super::{Candidate, SolveError, SolveResult};

/// Where and how finely to look for the UE.
#[derive(Debug, Clone, Copy)]
pub struct CurvatureSearch {
    /// Lower corner of the search box.
    pub lo: Vec3,
    /// Upper corner of the search box.
    pub hi: Vec3,
    /// Coarse grid step in meters.
    pub coarse_step: f64,
    /// How many top-scoring, spatially separated cells seed refinement.
    pub starts: usize,
}

impl CurvatureSearch {
    /// A cubical search box of half-width `half` around `center`.
    pub fn around(center: Vec3, half: f64, coarse_step: f64) -> Self {
        let h = Vec3::new(half, half, half);
        CurvatureSearch { lo: center - h, hi: center + h, coarse_step, starts: 5 }
    }
}

/// Gauss–Newton polish iterations on the complex residuals.
const POLISH_ITERS: usize = 40;

/// Recover the UE position from near-field observations of one BS-RIS
/// cascade across several phase profiles.
///
/// Runs a coarse grid over `search`, descends from the best few cells, and
/// polishes each with a damped Gauss–Newton loop on the complex residuals
/// `y_k - g(p) h_k(p)` (gain re-fit each step). Candidates are sorted by
/// residual. When the Fisher information of the curvature model at the
/// best estimate is range-deficient (far-field geometry) the result
/// carries a warning instead of pretending the range is trustworthy; a
/// single-element surface warns immediately (one element has no curvature
/// baseline, so only bearing-free phase remains).
pub fn nf_position_from_curvature(
    s: &Scenario,
    bs_id: &str,
    ris_id: &str,
    profiles: &[PhaseProfile],
    observations: &[Complex64],
    search: &CurvatureSearch,
) -> Result<SolveResult, SolveError> {
    if profiles.len() < 2 {
        return Err(SolveError::BadInput {
            what: format!(
                "wavefront-curvature solving needs at least 2 phase profiles; got {}",
                profiles.len()
            ),
        });
    }
    if profiles.len() != observations.len() {
        return Err(SolveError::BadInput {
            what: format!(
                "{} observations do not match {} phase profiles",
                observations.len(),
                profiles.len()
            ),
        });
    }
    if !(search.coarse_step > 0.0)
        || search.hi.x <= search.lo.x
        || search.hi.y <= search.lo.y
        || search.hi.z <= search.lo.z
    {
        return Err(SolveError::BadInput {
            what: "curvature search box must have positive extent and step".into(),
        });
    }
    let ris = s.ris(ris_id).ok_or_else(|| {
        SolveError::Measurement(crate::measurements::MeasurementError::UnknownNode {
            id: ris_id.into(),
        })
    })?;
    let mut warnings = Vec::new();
    if ris.element_count() == 1 {
        warnings.push(
            "single-element surface: no curvature baseline, position stays unresolved \
             (information rank at most 1)"
                .into(),
        );
    }

    let total_power: f64 = observations.iter().map(|y| y.norm_sqr()).sum();
    // Residual power after concentrating out the complex gain; infinite
    // when the model cannot be evaluated (e.g. the probe point touches an
    // element).
    let misfit = |p: Vec3| -> f64 {
        let mut hy = Complex64::new(0.0, 0.0);
        let mut hh = 0.0;
        for (profile, y) in profiles.iter().zip(observations) {
            match nf_received(s, bs_id, ris_id, p, &profile.phases) {
                Ok(h) => {
                    hy += h.conj() * y;
                    hh += h.norm_sqr();
                }
                Err(_) => return f64::INFINITY,
            }
        }
        if hh <= 0.0 {
            return f64::INFINITY;
        }
        (total_power - hy.norm_sqr() / hh).max(0.0)
    };

    // Coarse grid: score every cell, keep the best few spatially separated
    // ones as refinement seeds.
    let n_of = |ext: f64| ((ext / search.coarse_step).ceil() as usize).max(1);
    let n = [
        n_of(search.hi.x - search.lo.x),
        n_of(search.hi.y - search.lo.y),
        n_of(search.hi.z - search.lo.z),
    ];
    let mut cells: Vec<(f64, Vec3)> = Vec::new();
    for i in 0..n[0] {
        for j in 0..n[1] {
            for k in 0..n[2] {
                let p = Vec3::new(
                    search.lo.x + (i as f64 + 0.5) * (search.hi.x - search.lo.x) / n[0] as f64,
                    search.lo.y + (j as f64 + 0.5) * (search.hi.y - search.lo.y) / n[1] as f64,
                    search.lo.z + (k as f64 + 0.5) * (search.hi.z - search.lo.z) / n[2] as f64,
                );
                let c = misfit(p);
                if c.is_finite() {
                    cells.push((c, p));
                }
            }
        }
    }
    if cells.is_empty() {
        return Err(SolveError::Infeasible {
            what: "no evaluable position in the curvature search box".into(),
        });
    }
    cells.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut seeds: Vec<Vec3> = Vec::new();
    for (_, p) in &cells {
        if seeds.len() >= search.starts.max(1) {
            break;
        }
        if !seeds.iter().any(|q| (*q - *p).norm() < 1.5 * search.coarse_step) {
            seeds.push(*p);
        }
    }

    let mut cands: Vec<Candidate> = Vec::new();
    for seed in seeds {
        let (descended, _) =
            pattern_search(seed, search.coarse_step / 2.0, 1e-7, 6000, &misfit);
        let (polished, iterations) = polish(s, bs_id, ris_id, profiles, observations, descended)?;
        cands.push(Candidate {
            state: UeState::at(polished),
            residual_norm: misfit(polished).sqrt(),
            iterations,
            converged: true,
        });
    }
    cands.sort_by(|a, b| a.residual_norm.total_cmp(&b.residual_norm));
    let mut unique: Vec<Candidate> = Vec::new();
    for c in cands {
        if !unique
            .iter()
            .any(|u| (u.state.position - c.state.position).norm() < 1e-6)
        {
            unique.push(c);
        }
    }

    // Fisher evidence at the best estimate: is the range coordinate
    // actually carried by the wavefront curvature here?
    let best_pos = unique[0].state.position;
    let (efim, bulk) = nearfield_position_fim(s, bs_id, ris_id, best_pos, profiles, 1.0)?;
    let rank = nearfield_rank(&efim, bulk);
    if rank < 3 {
        let sv = efim.clone().svd(false, false).singular_values;
        let ratio = if sv[0] > 0.0 { sv[2] / sv[0] } else { 0.0 };
        let range = (best_pos - ris.center).norm();
        warnings.push(format!(
            "nearly planar wavefront at {range:.1} m: position information rank {rank} of 3 \
             (smallest/largest singular value {ratio:.1e}); the range coordinate is not \
             resolvable from curvature here"
        ));
    }

    Ok(SolveResult {
        mask: UnknownsMask::POSITION_ONLY,
        candidates: unique,
        velocity_dim: 0,
        velocity_basis: vec![],
        warnings,
    })
}

/// Damped Gauss–Newton on the stacked real/imaginary residuals
/// `y_k - g(p) h_k(p)`, with the gain `g` re-concentrated at every
/// evaluation. Finite-difference steps are capped at a thousandth of the
/// carrier wavelength so the probe never aliases across a phase cycle.
fn polish(
    s: &Scenario,
    bs_id: &str,
    ris_id: &str,
    profiles: &[PhaseProfile],
    observations: &[Complex64],
    start: Vec3,
) -> Result<(Vec3, usize), SolveError> {
    let k = profiles.len();
    let residuals = |p: Vec3| -> Option<Vec<f64>> {
        let mut h = Vec::with_capacity(k);
        let mut hy = Complex64::new(0.0, 0.0);
        let mut hh = 0.0;
        for (profile, y) in profiles.iter().zip(observations) {
            let v = nf_received(s, bs_id, ris_id, p, &profile.phases).ok()?;
            hy += v.conj() * y;
            hh += v.norm_sqr();
            h.push(v);
        }
        if hh <= 0.0 {
            return None;
        }
        let g = hy / hh;
        let mut r = Vec::with_capacity(2 * k);
        for (hv, y) in h.iter().zip(observations) {
            let e = y - g * hv;
            r.push(e.re);
            r.push(e.im);
        }
        Some(r)
    };
    let cost_of = |r: &[f64]| -> f64 { r.iter().map(|v| v * v).sum() };

    let fd_cap = s.wavelength() / 1000.0;
    let mut p = start;
    let mut r = match residuals(p) {
        Some(r) => r,
        None => return Ok((start, 0)),
    };
    let mut cost = cost_of(&r);
    let mut lambda = 1e-3;
    let mut iters = 0usize;
    for _ in 0..POLISH_ITERS {
        if cost <= 1e-28 {
            break;
        }
        // 2K x 3 Jacobian by central differences.
        let mut jac = vec![[0.0f64; 3]; 2 * k];
        let mut ok = true;
        for axis in 0..3 {
            let h = (1e-6 * axis_of(p, axis).abs()).max(1e-9).min(fd_cap);
            let (rp, rm) = (
                residuals(offset(p, axis, h)),
                residuals(offset(p, axis, -h)),
            );
            let (Some(rp), Some(rm)) = (rp, rm) else {
                ok = false;
                break;
            };
            for i in 0..2 * k {
                jac[i][axis] = (rp[i] - rm[i]) / (2.0 * h);
            }
        }
        if !ok {
            break;
        }
        let mut hess = [[0.0f64; 3]; 3];
        let mut grad = [0.0f64; 3];
        for (row, ri) in jac.iter().zip(&r) {
            for a in 0..3 {
                grad[a] += row[a] * ri;
                for b in 0..3 {
                    hess[a][b] += row[a] * row[b];
                }
            }
        }
        let max_diag = hess[0][0].max(hess[1][1]).max(hess[2][2]);
        if !(max_diag > 0.0) {
            break;
        }
        let mut accepted = false;
        for _ in 0..20 {
            let mut a = hess;
            for i in 0..3 {
                a[i][i] += lambda * hess[i][i].max(1e-12 * max_diag);
            }
            let Some(delta) = solve3(a, [-grad[0], -grad[1], -grad[2]]) else {
                lambda *= 4.0;
                continue;
            };
            let step = (delta[0] * delta[0] + delta[1] * delta[1] + delta[2] * delta[2]).sqrt();
            if step < 1e-12 {
                return Ok((p, iters));
            }
            let q = Vec3::new(p.x + delta[0], p.y + delta[1], p.z + delta[2]);
            if let Some(rq) = residuals(q) {
                let cq = cost_of(&rq);
                if cq < cost {
                    p = q;
                    r = rq;
                    cost = cq;
                    lambda = (lambda / 3.0).max(1e-12);
                    iters += 1;
                    accepted = true;
                    break;
                }
            }
            lambda *= 4.0;
        }
        if !accepted {
            break;
        }
    }
    Ok((p, iters))
}

fn axis_of(p: Vec3, axis: usize) -> f64 {
    match axis {
        0 => p.x,
        1 => p.y,
        _ => p.z,
    }
}

fn offset(mut p: Vec3, axis: usize, h: f64) -> Vec3 {
    match axis {
        0 => p.x += h,
        1 => p.y += h,
        _ => p.z += h,
    }
    p
}

/// Solve a 3x3 linear system by Gaussian elimination with partial
/// pivoting; `None` when singular.
fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..3 {
            let f = a[row][col] / a[col][col];
            for c in col..3 {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0f64; 3];
    for row in (0..3).rev() {
        let mut s = b[row];
        for c in (row + 1)..3 {
            s -= a[row][c] * x[c];
        }
        x[row] = s / a[row][row];
    }
    Some(x)
}
