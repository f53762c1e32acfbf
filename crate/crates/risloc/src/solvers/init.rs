//! Geometric initializers: closed forms, ray scans, and coarse grid
//! searches that produce starting positions for refinement.

use crate::geometry::{boresight_direction, AzEl, HalfLine, Vec3};
use crate::measurements::{MeasurementError, NodeRef};
use crate::scene::Scenario;
use crate::SPEED_OF_LIGHT;

use super::SolveError;

/// Search box for grid initialization: the anchor bounding box inflated
/// 1.5x about its center, with at least 1 m of half-extent per axis, the
/// vertical half-extent widened to half the larger horizontal one (so
/// mirror solutions above or below an anchor plane stay inside), and the
/// floor extended to ground level.
pub(crate) fn search_box(s: &Scenario) -> (Vec3, Vec3) {
    let (lo, hi) = s.anchor_bounding_box().unwrap_or((Vec3::ZERO, Vec3::ZERO));
    let c = (lo + hi) * 0.5;
    let half_x = ((hi.x - lo.x) * 0.75).max(1.0);
    let half_y = ((hi.y - lo.y) * 0.75).max(1.0);
    let half_z = ((hi.z - lo.z) * 0.75).max(1.0).max(0.5 * half_x.max(half_y));
    let mut lo2 = Vec3::new(c.x - half_x, c.y - half_y, c.z - half_z);
    let hi2 = Vec3::new(c.x + half_x, c.y + half_y, c.z + half_z);
    lo2.z = lo2.z.min(0.0);
    (lo2, hi2)
}

/// Cell centers and values of a coarse uniform grid over `[lo, hi]` whose
/// strict local minima (against all existing neighbors, 26-connected)
/// survive, sorted ascending by cost and capped at `keep`.
fn coarse_local_minima(
    lo: Vec3,
    hi: Vec3,
    n: [usize; 3],
    keep: usize,
    cost: &dyn Fn(Vec3) -> f64,
) -> Vec<Vec3> {
    let step = [
        (hi.x - lo.x) / n[0] as f64,
        (hi.y - lo.y) / n[1] as f64,
        (hi.z - lo.z) / n[2] as f64,
    ];
    let center = |i: usize, j: usize, k: usize| -> Vec3 {
        Vec3::new(
            lo.x + (i as f64 + 0.5) * step[0],
            lo.y + (j as f64 + 0.5) * step[1],
            lo.z + (k as f64 + 0.5) * step[2],
        )
    };
    let idx = |i: usize, j: usize, k: usize| -> usize { (i * n[1] + j) * n[2] + k };
    let mut values = vec![f64::INFINITY; n[0] * n[1] * n[2]];
    for i in 0..n[0] {
        for j in 0..n[1] {
            for k in 0..n[2] {
                values[idx(i, j, k)] = cost(center(i, j, k));
            }
        }
    }
    let mut minima: Vec<(f64, Vec3)> = Vec::new();
    for i in 0..n[0] {
        for j in 0..n[1] {
            for k in 0..n[2] {
                let v = values[idx(i, j, k)];
                if !v.is_finite() {
                    continue;
                }
                let mut is_min = true;
                'scan: for di in -1i64..=1 {
                    for dj in -1i64..=1 {
                        for dk in -1i64..=1 {
                            if di == 0 && dj == 0 && dk == 0 {
                                continue;
                            }
                            let (ni, nj, nk) =
                                (i as i64 + di, j as i64 + dj, k as i64 + dk);
                            if ni < 0
                                || nj < 0
                                || nk < 0
                                || ni >= n[0] as i64
                                || nj >= n[1] as i64
                                || nk >= n[2] as i64
                            {
                                continue;
                            }
                            if values[idx(ni as usize, nj as usize, nk as usize)] <= v {
                                is_min = false;
                                break 'scan;
                            }
                        }
                    }
                }
                if is_min {
                    minima.push((v, center(i, j, k)));
                }
            }
        }
    }
    minima.sort_by(|a, b| a.0.total_cmp(&b.0));
    minima.truncate(keep);
    minima.into_iter().map(|(_, p)| p).collect()
}

/// Greedy axis-aligned descent from `start`: probe +/- `step` along each
/// axis, keep improvements, halve the step when stuck, stop below
/// `min_step` or after `max_evals` cost evaluations.
pub(crate) fn pattern_search(
    start: Vec3,
    step0: f64,
    min_step: f64,
    max_evals: usize,
    cost: &dyn Fn(Vec3) -> f64,
) -> (Vec3, f64) {
    let mut p = start;
    let mut f = cost(p);
    let mut step = step0;
    let mut evals = 1usize;
    while step >= min_step && evals + 6 <= max_evals {
        let mut improved = false;
        for axis in 0..3 {
            for sgn in [1.0f64, -1.0] {
                let mut q = p;
                match axis {
                    0 => q.x += sgn * step,
                    1 => q.y += sgn * step,
                    _ => q.z += sgn * step,
                }
                let fq = cost(q);
                evals += 1;
                if fq < f {
                    p = q;
                    f = fq;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (p, f)
}

/// Positions of the surviving local minima of `cost` over the scene's
/// search box: a coarse grid (capped at 24 cells per axis, at least 12,
/// honoring `cell` when it is coarser) enumerates the basins, a pattern
/// search descends each one to `1e-4 * cell` resolution, and the polished
/// minima are deduplicated and re-sorted by cost.
pub(crate) fn multistart_minima(
    s: &Scenario,
    cell: f64,
    keep: usize,
    cost: &dyn Fn(Vec3) -> f64,
) -> Vec<Vec3> {
    let (lo, hi) = search_box(s);
    let cell = if cell > 0.0 { cell } else { 1.0 };
    let n_axis = |extent: f64| -> usize {
        ((extent / cell).ceil() as usize).clamp(12, 24)
    };
    let n = [n_axis(hi.x - lo.x), n_axis(hi.y - lo.y), n_axis(hi.z - lo.z)];
    let coarse = coarse_local_minima(lo, hi, n, keep, cost);
    let coarse_cell = ((hi.x - lo.x) / n[0] as f64)
        .max((hi.y - lo.y) / n[1] as f64)
        .max((hi.z - lo.z) / n[2] as f64);
    let mut polished: Vec<(f64, Vec3)> = coarse
        .into_iter()
        .map(|start| {
            let (p, f) = pattern_search(start, coarse_cell, 1e-4 * cell, 4000, cost);
            (f, p)
        })
        .collect();
    polished.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<Vec3> = Vec::new();
    for (_, p) in polished {
        if !out.iter().any(|q| (*q - p).norm() < (2.0 * cell).max(1e-3)) {
            out.push(p);
        }
    }
    out.truncate(keep);
    out
}

/// The global ray a departure bearing pins: origin at the anchor,
/// direction mapped out of the anchor's boresight frame.
pub fn aod_half_line(s: &Scenario, node: &NodeRef, azel: AzEl) -> Result<HalfLine, SolveError> {
    let (pos, rot) = match node {
        NodeRef::Bs(id) => {
            let b = s
                .bs(id)
                .ok_or_else(|| MeasurementError::UnknownNode { id: id.clone() })?;
            (b.position, b.rotation())
        }
        NodeRef::Ris(id) => {
            let r = s
                .ris(id)
                .ok_or_else(|| MeasurementError::UnknownNode { id: id.clone() })?;
            (r.center, r.rotation())
        }
    };
    Ok(HalfLine::new(pos, rot.apply(boresight_direction(azel)))?)
}

/// Range along a bearing ray out of a reflector consistent with the
/// reflected-minus-direct delay difference of the BS link.
///
/// Points on the ray are `p(t) = ris + t * dir`. The reflected leg runs
/// `|bs - ris| + t`, the direct leg `|p(t) - bs|`, and their difference is
/// `c * delta_seconds`; substituting and squaring solves the resulting
/// linear equation for `t`. A tangent bearing (vanishing denominator) or a
/// negative range is rejected, not clamped.
pub(crate) fn hybrid_delay_range(
    bs: Vec3,
    ris: Vec3,
    dir: Vec3,
    delta_seconds: f64,
) -> Result<f64, SolveError> {
    let w = ris - bs;
    let k = w.norm() - SPEED_OF_LIGHT * delta_seconds;
    let denom = 2.0 * (dir.dot(w) - k);
    if denom.abs() < 1e-12 * (1.0 + w.norm()) {
        return Err(SolveError::Infeasible {
            what: "bearing runs tangent to the constant-delay-difference surface".into(),
        });
    }
    let t = (k * k - w.norm_squared()) / denom;
    if t < 0.0 {
        return Err(SolveError::Infeasible {
            what: format!("bearing-delay intersection at negative range ({t:.3} m)"),
        });
    }
    Ok(t)
}

/// Ray parameters where the angle subtended at `p(t)` between the ray's
/// own origin and `anchor` has cosine `cos_target`.
///
/// Scans `t` uniformly over `(0, t_max]` in `steps` intervals, brackets
/// sign changes of the residual, and bisects each bracket. Roots closer
/// than `1e-9 * t_max` collapse to one.
pub(crate) fn line_pair_angle_roots(
    line: &HalfLine,
    anchor: Vec3,
    cos_target: f64,
    t_max: f64,
    steps: usize,
) -> Vec<f64> {
    // Direction from p(t) back to the ray origin is exactly -direction.
    let f = |t: f64| -> Option<f64> {
        let p = line.point_at(t);
        let to_anchor = anchor - p;
        let n = to_anchor.norm();
        if n < 1e-9 {
            return None;
        }
        Some(to_anchor.dot(-line.direction) / n - cos_target)
    };
    let t_lo = t_max * 1e-9;
    let dt = (t_max - t_lo) / steps as f64;
    let mut roots = Vec::new();
    let mut prev: Option<(f64, f64)> = None;
    for i in 0..=steps {
        let t = t_lo + dt * i as f64;
        let Some(v) = f(t) else {
            prev = None;
            continue;
        };
        if v == 0.0 {
            roots.push(t);
            prev = Some((t, v));
            continue;
        }
        if let Some((tp, vp)) = prev {
            if vp * v < 0.0 {
                let (mut a, mut fa, mut b) = (tp, vp, t);
                for _ in 0..80 {
                    let m = 0.5 * (a + b);
                    let Some(fm) = f(m) else { break };
                    if fa * fm <= 0.0 {
                        b = m;
                    } else {
                        a = m;
                        fa = fm;
                    }
                }
                roots.push(0.5 * (a + b));
            }
        }
        prev = Some((t, v));
    }
    roots.sort_by(f64::total_cmp);
    roots.dedup_by(|a, b| (*a - *b).abs() < 1e-9 * t_max);
    roots
}
