//! Acceptance suite: the crate's six headline guarantees, checked end to
//! end against pinned tolerances, with one pass/fail line per criterion.
//!
//! Run with: `cargo test --test acceptance -- --nocapture`

use std::f64::consts::PI;
use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use risloc::geometry::{
    angle_between, azel_to_direction, rot_zyx, wrap_angle, EulerZYX, HalfLine, Rot3, Vec3,
};
use risloc::identifiability::{
    fim, ident_report, nearfield_ident_sweep, reproduce_table, Block, UnknownsMask,
};
use risloc::measurements::{generate, Measurement, NoiseSpec};
use risloc::montecarlo::{crb_mc, McConfig};
use risloc::scene::{
    load, Antenna, BsNode, MeasurementKind, RisNode, Scenario, Signaling, UeState,
};
use risloc::signal::{
    beam_sweep_estimate, fraunhofer_distance, make_codebook, random_profiles, GridSpec,
};
use risloc::solvers::{solve, solve_two_halflines, SolveRequest};
use risloc::SPEED_OF_LIGHT;

fn gallery_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn gallery_rows() -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(gallery_dir())
        .expect("scenario gallery")
        .filter_map(|e| {
            let p = e.unwrap().path();
            let name = p.file_name()?.to_str()?;
            (name.starts_with("table1_row") && name.ends_with(".toml")).then_some(p)
        })
        .collect();
    files.sort();
    files
}

/// Angle of the relative rotation between two orientations, in radians.
fn rotation_gap(a: EulerZYX, b: EulerZYX) -> f64 {
    let ra = rot_zyx(a);
    let rb = rot_zyx(b);
    // trace(Ra * Rb^T) = sum of elementwise products.
    let mut tr = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            tr += ra.at(i, j) * rb.at(i, j);
        }
    }
    ((tr - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
}

// ---------------------------------------------------------------------------
// Criterion 1: the ten-row identifiability table reproduces exactly.
// ---------------------------------------------------------------------------

fn criterion_table() -> Result<String, String> {
    let t0 = Instant::now();
    let outcomes = reproduce_table(&gallery_dir()).map_err(|e| e.to_string())?;
    let secs = t0.elapsed().as_secs_f64();
    if outcomes.len() != 10 {
        return Err(format!("expected 10 gallery rows, analyzed {}", outcomes.len()));
    }
    let mismatches: Vec<String> = outcomes
        .iter()
        .filter(|o| !o.matches)
        .map(|o| format!("row {} ({})", o.expectation.row, o.expectation.file))
        .collect();
    if !mismatches.is_empty() {
        return Err(format!("mismatched rows: {}", mismatches.join(", ")));
    }
    if secs >= 30.0 {
        return Err(format!("took {secs:.1} s, budget 30 s"));
    }
    Ok(format!("10/10 identifiable-state rows match in {secs:.2} s"))
}

// ---------------------------------------------------------------------------
// Criterion 2: noiseless solves recover every identifiable component to
// 1e-6 (meters, m/s, clock in meters, radians).
// ---------------------------------------------------------------------------

fn criterion_noiseless() -> Result<String, String> {
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    for path in gallery_rows() {
        let name = path.file_name().unwrap().to_str().unwrap().to_string();
        let sf = load(&path).map_err(|e| format!("{name}: {e}"))?;
        let meas = generate(&sf.scenario, &sf.ue, &NoiseSpec::noiseless(), 1)
            .map_err(|e| format!("{name}: {e}"))?;
        let req = SolveRequest::new(&sf.scenario, &meas);
        let result = solve(&req).map_err(|e| format!("{name}: {e}"))?;
        let best = result.candidates.first().ok_or_else(|| format!("{name}: no candidates"))?;
        if !best.converged {
            return Err(format!("{name}: refinement did not converge on exact data"));
        }

        let pos = (best.state.position - sf.ue.position).norm();
        let clock = if result.mask.clock {
            (best.state.clock_bias - sf.ue.clock_bias).abs() * SPEED_OF_LIGHT
        } else {
            0.0
        };
        // Velocity compared inside the sensed subspace: components the
        // scene cannot observe are not identifiable and carry no claim.
        let dv = best.state.velocity - sf.ue.velocity;
        let vel = if result.mask.velocity {
            result.velocity_basis.iter().map(|b| dv.dot(*b).powi(2)).sum::<f64>().sqrt()
        } else {
            0.0
        };
        let orient = if result.mask.orientation {
            rotation_gap(best.state.orientation, sf.ue.orientation)
        } else {
            0.0
        };

        for (component, err) in
            [("position", pos), ("clock", clock), ("velocity", vel), ("orientation", orient)]
        {
            if err > 1e-6 {
                return Err(format!("{name}: {component} error {err:.2e} exceeds 1e-6"));
            }
            worst = worst.max(err);
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    if secs >= 60.0 {
        return Err(format!("took {secs:.1} s, budget 60 s"));
    }
    Ok(format!("10 scenes recover within 1e-6 (worst {worst:.1e}) in {secs:.2} s"))
}

// ---------------------------------------------------------------------------
// Criterion 3: the 60 GHz two-surface beam sweep stays inside a 10 cm
// radius at 20 dB SNR in at least 95 of 100 seeded trials.
// ---------------------------------------------------------------------------

fn criterion_beam_sweep() -> Result<String, String> {
    let t0 = Instant::now();
    let sf = load(gallery_dir().join("experiment_60ghz.toml")).map_err(|e| e.to_string())?;
    let s = &sf.scenario;
    let bs = &s.bss[0];
    let span = (-50f64.to_radians(), 50f64.to_radians());
    let codebooks: Vec<_> = s
        .riss
        .iter()
        .map(|ris| {
            let incoming = (bs.position - ris.center).normalized().unwrap();
            make_codebook(ris, s.wavelength(), 63, span, Some(incoming)).map_err(|e| e.to_string())
        })
        .collect::<Result<_, _>>()?;
    let grid = GridSpec::new(-0.457, 0.243, 0.557, 1.057, 0.02, sf.ue.position.z);

    let mut hits = 0u32;
    let mut worst: f64 = 0.0;
    for seed in 0..100u64 {
        let outcome = beam_sweep_estimate(s, &sf.ue, &codebooks, &grid, Some(20.0), seed)
            .map_err(|e| e.to_string())?;
        let err = (outcome.estimate - sf.ue.position).norm();
        worst = worst.max(err);
        if err < 0.10 {
            hits += 1;
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    if hits < 95 {
        return Err(format!("only {hits}/100 trials within 10 cm (worst {:.1} cm)", worst * 100.0));
    }
    if secs >= 120.0 {
        return Err(format!("took {secs:.1} s, budget 120 s"));
    }
    Ok(format!(
        "{hits}/100 trials within 10 cm at 20 dB (worst {:.1} cm) in {secs:.1} s",
        worst * 100.0
    ))
}

// ---------------------------------------------------------------------------
// Criterion 4: Monte-Carlo RMSE (500 trials) tracks the position CRB
// within a factor of 2 at small noise, with log-log slope 1.0 +/- 0.15.
// ---------------------------------------------------------------------------

fn criterion_crb_consistency() -> Result<String, String> {
    let mut details = Vec::new();
    for file in ["table1_row03_siso_2ris_1bs.toml", "table1_row01_siso_4bs.toml"] {
        let sf = load(gallery_dir().join(file)).map_err(|e| e.to_string())?;
        let cfg = McConfig { trials: 500, sigma_scales: vec![0.03, 0.1, 0.3], seed: 1 };
        let report = crb_mc(&sf, &cfg).map_err(|e| format!("{file}: {e}"))?;
        for p in &report.points {
            let ratio = p.rmse_position / p.crb_position;
            if !(0.5..2.0).contains(&ratio) {
                return Err(format!(
                    "{file}: RMSE/CRB = {ratio:.2} at scale {} (RMSE {:.4}, CRB {:.4})",
                    p.sigma_scale, p.rmse_position, p.crb_position
                ));
            }
            if p.converged < p.trials {
                return Err(format!(
                    "{file}: {}/{} trials converged at scale {}",
                    p.converged, p.trials, p.sigma_scale
                ));
            }
        }
        if (report.slope - 1.0).abs() > 0.15 {
            return Err(format!("{file}: log-log slope {:.3} outside 1.0 +/- 0.15", report.slope));
        }
        let worst_ratio = report
            .points
            .iter()
            .map(|p| p.rmse_position / p.crb_position)
            .fold(0.0f64, f64::max);
        details.push(format!("{file}: worst RMSE/CRB {worst_ratio:.2}, slope {:.2}", report.slope));
    }
    Ok(details.join("; "))
}

// ---------------------------------------------------------------------------
// Criterion 5: position information from one 64-element surface with the
// direct link blocked is rank 3 in the near field and rank 2 far away.
// ---------------------------------------------------------------------------

fn criterion_nearfield() -> Result<String, String> {
    let carrier_hz = 28e9;
    let wavelength = SPEED_OF_LIGHT / carrier_hz;
    let ris = RisNode {
        id: "ris1".into(),
        center: Vec3::new(0.0, 0.0, 0.0),
        orientation: EulerZYX::IDENTITY,
        nx: 8,
        ny: 8,
        spacing: wavelength / 2.0,
        phase_profile: vec![0.0; 64],
    };
    let s = Scenario {
        carrier_hz,
        signaling: Signaling::Narrowband,
        bss: vec![BsNode {
            id: "bs1".into(),
            position: Vec3::new(6.0, -4.0, 3.0),
            orientation: EulerZYX::IDENTITY,
            antenna: Antenna::Single,
        }],
        riss: vec![ris],
        ue_antenna: Antenna::Single,
        measurement_mix: vec![MeasurementKind::Aod],
        los_blocked: vec!["bs1".into()],
    };
    let fraunhofer = fraunhofer_distance(&s.riss[0], wavelength);
    let profiles = random_profiles(&s.riss[0], 12, 3);
    let ranges = [2.0, 1000.0];
    let sweep =
        nearfield_ident_sweep(&s, "bs1", "ris1", Vec3::new(0.3, 0.15, 1.0), &ranges, &profiles, 1.0)
            .map_err(|e| e.to_string())?;
    let near = &sweep.entries[0];
    let far = &sweep.entries[1];
    if near.rank != 3 {
        return Err(format!("rank {} at {} m; wavefront curvature should fix all 3", near.rank, near.range));
    }
    if far.rank != 2 {
        return Err(format!("rank {} at {} m; only bearings should survive", far.rank, far.range));
    }
    if sweep.transition.is_none() {
        return Err("no rank transition found between the two ranges".into());
    }
    Ok(format!(
        "rank 3 at {} m, rank 2 at {} m (Fraunhofer distance {fraunhofer:.2} m)",
        near.range, far.range
    ))
}

// ---------------------------------------------------------------------------
// Criterion 6: the measurement/geometry law families hold over seeded
// random cases.
// ---------------------------------------------------------------------------

/// Gallery row with its measurement mix replaced (kept in canonical order).
fn row_with_mix(file: &str, mix: Vec<MeasurementKind>) -> Result<risloc::scene::ScenarioFile, String> {
    let mut sf = load(gallery_dir().join(file)).map_err(|e| e.to_string())?;
    sf.scenario.measurement_mix = mix;
    Ok(sf)
}

fn exact(sf: &risloc::scene::ScenarioFile, u: &UeState) -> Result<Vec<Measurement>, String> {
    Ok(generate(&sf.scenario, u, &NoiseSpec::noiseless(), 1).map_err(|e| e.to_string())?.items)
}

fn rand_vec(rng: &mut ChaCha12Rng, scale: f64) -> Vec3 {
    Vec3::new(
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
    )
}

fn rand_euler(rng: &mut ChaCha12Rng) -> EulerZYX {
    EulerZYX::new(
        rng.random_range(-PI..PI),
        rng.random_range(-1.5..1.5),
        rng.random_range(-PI..PI),
    )
}

fn rotation_group_laws(cases: &mut usize) -> Result<(), String> {
    let mut rng = ChaCha12Rng::seed_from_u64(101);
    for _ in 0..200 {
        let e = rand_euler(&mut rng);
        let r = rot_zyx(e);
        // Orthonormal columns with determinant +1.
        let cols: Vec<Vec3> = (0..3)
            .map(|j| Vec3::new(r.at(0, j), r.at(1, j), r.at(2, j)))
            .collect();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                let got = cols[i].dot(cols[j]);
                if (got - want).abs() > 1e-12 {
                    return Err(format!("rotation columns not orthonormal: <c{i},c{j}> = {got}"));
                }
            }
        }
        let det = cols[0].dot(cols[1].cross(cols[2]));
        if (det - 1.0).abs() > 1e-12 {
            return Err(format!("rotation determinant {det} != 1"));
        }
        // Composition: rot_zyx(e) acts as Rz then Ry then Rx applied inside out.
        let v = rand_vec(&mut rng, 5.0);
        let composed = Rot3::rz(e.alpha).apply(Rot3::ry(e.beta).apply(Rot3::rx(e.gamma).apply(v)));
        if (r.apply(v) - composed).norm() > 1e-12 * (1.0 + v.norm()) {
            return Err("rot_zyx disagrees with Rz*Ry*Rx composition".into());
        }
        // Transpose inverts.
        if (r.apply_transpose(r.apply(v)) - v).norm() > 1e-12 * (1.0 + v.norm()) {
            return Err("transpose does not invert the rotation".into());
        }
        // Euler extraction round-trips to the same rotation. The pitch
        // samples come within 0.07 rad of gimbal lock, where the angle
        // extraction conditioning costs ~1e-8 rad; 1e-6 is the pinned bound.
        let back = rot_zyx(r.to_euler_zyx());
        let mut tr = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                tr += r.at(i, j) * back.at(i, j);
            }
        }
        let gap = ((tr - 1.0) / 2.0).clamp(-1.0, 1.0).acos();
        if gap > 1e-6 {
            return Err(format!("euler round trip moved the rotation by {gap:.2e} rad"));
        }
        *cases += 1;
    }
    Ok(())
}

fn delay_clock_laws(cases: &mut usize) -> Result<(), String> {
    let sf = row_with_mix(
        "table1_row01_siso_4bs.toml",
        vec![MeasurementKind::Toa, MeasurementKind::Tdoa, MeasurementKind::Rtt],
    )?;
    let mut base_ue = sf.ue;
    base_ue.clock_bias = 0.0;
    let base = exact(&sf, &base_ue)?;
    let mut rng = ChaCha12Rng::seed_from_u64(202);
    for _ in 0..50 {
        let bias = rng.random_range(-1e-6..1e-6);
        let mut u = base_ue;
        u.clock_bias = bias;
        let shifted = exact(&sf, &u)?;
        for (m0, mb) in base.iter().zip(&shifted) {
            match (m0, mb) {
                (Measurement::Toa { seconds: s0, .. }, Measurement::Toa { seconds: sb, .. }) => {
                    if ((sb - s0) - bias).abs() > 1e-15 + 1e-9 * bias.abs() {
                        return Err(format!("ToA shifted by {} for bias {bias}", sb - s0));
                    }
                }
                (Measurement::Tdoa { seconds: s0, .. }, Measurement::Tdoa { seconds: sb, .. }) => {
                    if (sb - s0).abs() > 1e-15 {
                        return Err("TDoA moved with the clock bias".into());
                    }
                }
                (Measurement::Rtt { seconds: s0, .. }, Measurement::Rtt { seconds: sb, .. }) => {
                    if (sb - s0).abs() > 1e-15 {
                        return Err("RTT moved with the clock bias".into());
                    }
                }
                _ => return Err("measurement order changed between runs".into()),
            }
        }
        *cases += 1;
    }
    Ok(())
}

fn aod_orientation_invariance(cases: &mut usize) -> Result<(), String> {
    let sf = row_with_mix("table1_row03_siso_2ris_1bs.toml", vec![MeasurementKind::Aod])?;
    let base = exact(&sf, &sf.ue)?;
    let mut rng = ChaCha12Rng::seed_from_u64(303);
    for _ in 0..50 {
        let mut u = sf.ue;
        u.orientation = rand_euler(&mut rng);
        let turned = exact(&sf, &u)?;
        for (m0, m1) in base.iter().zip(&turned) {
            let (Measurement::Aod { azel: a0, .. }, Measurement::Aod { azel: a1, .. }) = (m0, m1)
            else {
                return Err("expected AoD rows".into());
            };
            if a0.azimuth != a1.azimuth || a0.elevation != a1.elevation {
                return Err("departure angles changed with receiver orientation".into());
            }
        }
        *cases += 1;
    }
    Ok(())
}

fn aoa_yaw_equivariance(cases: &mut usize) -> Result<(), String> {
    let sf = row_with_mix("table1_row07_simo_3bs.toml", vec![MeasurementKind::Aoa])?;
    let mut base_ue = sf.ue;
    base_ue.orientation = EulerZYX::IDENTITY;
    let base = exact(&sf, &base_ue)?;
    let mut rng = ChaCha12Rng::seed_from_u64(404);
    for _ in 0..50 {
        let yaw = rng.random_range(-PI..PI);
        let mut u = base_ue;
        u.orientation = EulerZYX::new(yaw, 0.0, 0.0);
        let turned = exact(&sf, &u)?;
        for (m0, m1) in base.iter().zip(&turned) {
            let (Measurement::Aoa { azel: a0, .. }, Measurement::Aoa { azel: a1, .. }) = (m0, m1)
            else {
                return Err("expected AoA rows".into());
            };
            let want = wrap_angle(a0.azimuth - yaw);
            if wrap_angle(a1.azimuth - want).abs() > 1e-9 {
                return Err(format!(
                    "yaw {yaw:.3}: azimuth moved to {:.6}, expected {want:.6}",
                    a1.azimuth
                ));
            }
            if (a1.elevation - a0.elevation).abs() > 1e-12 {
                return Err("yaw changed the arrival elevation".into());
            }
        }
        *cases += 1;
    }
    Ok(())
}

fn inter_aoa_rotation_invariance(cases: &mut usize) -> Result<(), String> {
    let sf = row_with_mix("table1_row07_simo_3bs.toml", vec![MeasurementKind::Aoa])?;
    let mut base_ue = sf.ue;
    base_ue.orientation = EulerZYX::IDENTITY;
    let dirs = |items: &[Measurement]| -> Result<Vec<Vec3>, String> {
        items
            .iter()
            .map(|m| {
                let Measurement::Aoa { azel, .. } = m else {
                    return Err("expected AoA rows".to_string());
                };
                Ok(azel_to_direction(*azel))
            })
            .collect()
    };
    let base = dirs(&exact(&sf, &base_ue)?)?;
    let mut rng = ChaCha12Rng::seed_from_u64(505);
    for _ in 0..50 {
        let mut u = base_ue;
        u.orientation = rand_euler(&mut rng);
        let turned = dirs(&exact(&sf, &u)?)?;
        for i in 0..base.len() {
            for j in (i + 1)..base.len() {
                let a0 = angle_between(base[i], base[j]).map_err(|e| e.to_string())?;
                let a1 = angle_between(turned[i], turned[j]).map_err(|e| e.to_string())?;
                if (a0 - a1).abs() > 1e-9 {
                    return Err(format!(
                        "inter-arrival angle {i}-{j} moved from {a0:.9} to {a1:.9}"
                    ));
                }
            }
        }
        *cases += 1;
    }
    Ok(())
}

fn doppler_linearity(cases: &mut usize) -> Result<(), String> {
    let sf = row_with_mix("table1_row02_siso_1ris_1bs.toml", vec![MeasurementKind::Doppler])?;
    let hz = |items: &[Measurement]| -> Result<Vec<f64>, String> {
        items
            .iter()
            .map(|m| {
                let Measurement::Doppler { hz, .. } = m else {
                    return Err("expected Doppler rows".to_string());
                };
                Ok(*hz)
            })
            .collect()
    };
    let mut rng = ChaCha12Rng::seed_from_u64(606);
    for _ in 0..50 {
        let v1 = rand_vec(&mut rng, 15.0);
        let v2 = rand_vec(&mut rng, 15.0);
        let factor = rng.random_range(-3.0..3.0);
        let at = |v: Vec3| -> Result<Vec<f64>, String> {
            let mut u = sf.ue;
            u.velocity = v;
            hz(&exact(&sf, &u)?)
        };
        let f1 = at(v1)?;
        let f2 = at(v2)?;
        let fsum = at(v1 + v2)?;
        let fscaled = at(v1 * factor)?;
        for k in 0..f1.len() {
            let tol = 1e-8 * (1.0 + f1[k].abs() + f2[k].abs());
            if (fsum[k] - (f1[k] + f2[k])).abs() > tol {
                return Err("Doppler is not additive in velocity".into());
            }
            if (fscaled[k] - factor * f1[k]).abs() > tol * (1.0 + factor.abs()) {
                return Err("Doppler does not scale with velocity".into());
            }
        }
        *cases += 1;
    }
    Ok(())
}

fn fim_symmetry_psd(cases: &mut usize) -> Result<(), String> {
    for path in gallery_rows() {
        let name = path.file_name().unwrap().to_str().unwrap().to_string();
        let sf = load(&path).map_err(|e| e.to_string())?;
        let mask = UnknownsMask::from_mix(&sf.scenario.measurement_mix);
        let f = fim(&sf.scenario, &sf.ue, &sf.noise, mask).map_err(|e| e.to_string())?;
        let m = &f.matrix;
        let scale = m.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-9 * scale {
                    return Err(format!("{name}: information matrix asymmetric at ({i},{j})"));
                }
            }
        }
        let sym = (m.clone() + m.transpose()) * 0.5;
        let eig = sym.symmetric_eigen().eigenvalues;
        let max = eig.iter().fold(0.0f64, |a, x| a.max(*x));
        let min = eig.iter().fold(f64::INFINITY, |a, x| a.min(*x));
        if min < -1e-9 * max.max(1.0) {
            return Err(format!("{name}: information matrix has eigenvalue {min:.3e}"));
        }
        *cases += 1;
    }
    Ok(())
}

fn fd_matches_analytic_jacobians(cases: &mut usize) -> Result<(), String> {
    let single_bs = |mix: Vec<MeasurementKind>, signaling: Signaling| -> (Scenario, UeState) {
        let s = Scenario {
            carrier_hz: 3.5e9,
            signaling,
            bss: vec![BsNode {
                id: "bs1".into(),
                position: Vec3::new(30.0, -12.0, 18.0),
                orientation: EulerZYX::IDENTITY,
                antenna: Antenna::Single,
            }],
            riss: vec![],
            ue_antenna: Antenna::Single,
            measurement_mix: mix,
            los_blocked: vec![],
        };
        let u = UeState::new(
            Vec3::new(2.0, 4.5, 1.6),
            Vec3::new(1.3, -0.6, 0.4),
            10.0e-9,
            EulerZYX::IDENTITY,
        );
        (s, u)
    };

    // One ToA: information is the outer product of the analytic gradient
    // [u_hat/c, 1/c] over [position, clock in meters].
    {
        let (s, u) = single_bs(
            vec![MeasurementKind::Toa],
            Signaling::Wideband { bandwidth_hz: 100.0e6 },
        );
        let noise = NoiseSpec::default();
        let f = fim(&s, &u, &noise, UnknownsMask::from_mix(&s.measurement_mix))
            .map_err(|e| e.to_string())?;
        let d = u.position - s.bss[0].position;
        let u_hat = d * (1.0 / d.norm());
        let g = [
            u_hat.x / SPEED_OF_LIGHT,
            u_hat.y / SPEED_OF_LIGHT,
            u_hat.z / SPEED_OF_LIGHT,
            1.0 / SPEED_OF_LIGHT,
        ];
        let scale: f64 = g.iter().map(|x| x * x).sum::<f64>() / (noise.toa * noise.toa);
        for a in 0..4 {
            for b in 0..4 {
                let expected = g[a] * g[b] / (noise.toa * noise.toa);
                if (f.matrix[(a, b)] - expected).abs() > 1e-6 * scale {
                    return Err(format!(
                        "ToA information ({a},{b}): finite differences give {:.6e}, analytic {expected:.6e}",
                        f.matrix[(a, b)]
                    ));
                }
            }
        }
        *cases += 1;
    }

    // One Doppler: gradient over [position, velocity] is
    // [((u_hat u_hat^T - I) v) / (r lambda), u_hat / lambda].
    {
        let (s, u) = single_bs(vec![MeasurementKind::Doppler], Signaling::Narrowband);
        let noise = NoiseSpec::default();
        let f = fim(&s, &u, &noise, UnknownsMask::from_mix(&s.measurement_mix))
            .map_err(|e| e.to_string())?;
        let lambda = s.wavelength();
        let d = s.bss[0].position - u.position;
        let r = d.norm();
        let u_hat = d * (1.0 / r);
        let dp = (u_hat * u_hat.dot(u.velocity) - u.velocity) * (1.0 / (r * lambda));
        let dv = u_hat * (1.0 / lambda);
        let g = [dp.x, dp.y, dp.z, dv.x, dv.y, dv.z];
        let scale: f64 = g.iter().map(|x| x * x).sum::<f64>() / (noise.doppler * noise.doppler);
        for a in 0..6 {
            for b in 0..6 {
                let expected = g[a] * g[b] / (noise.doppler * noise.doppler);
                if (f.matrix[(a, b)] - expected).abs() > 1e-6 * scale {
                    return Err(format!(
                        "Doppler information ({a},{b}): finite differences give {:.6e}, analytic {expected:.6e}",
                        f.matrix[(a, b)]
                    ));
                }
            }
        }
        *cases += 1;
    }
    Ok(())
}

fn halfline_swap_symmetry(cases: &mut usize) -> Result<(), String> {
    let mut rng = ChaCha12Rng::seed_from_u64(707);
    let unit = |rng: &mut ChaCha12Rng| loop {
        let v = rand_vec(rng, 1.0);
        if v.norm() > 0.1 {
            break v * (1.0 / v.norm());
        }
    };
    for _ in 0..100 {
        let o1 = unit(&mut rng) * 20.0;
        let o2 = unit(&mut rng) * 20.0;
        let meet = Vec3::new(0.0, 0.0, 3.0) + unit(&mut rng);
        let (Ok(a), Ok(b)) = (HalfLine::new(o1, meet - o1), HalfLine::new(o2, meet - o2)) else {
            continue;
        };
        match (solve_two_halflines(&a, &b), solve_two_halflines(&b, &a)) {
            (Ok((m1, g1)), Ok((m2, g2))) => {
                if (m1 - m2).norm() > 1e-12 || (g1 - g2).abs() > 1e-12 {
                    return Err("two-ray intersection depends on argument order".into());
                }
            }
            (Err(_), Err(_)) => {}
            _ => return Err("two-ray intersection succeeds in only one argument order".into()),
        }
        *cases += 1;
    }
    Ok(())
}

fn velocity_subspace_dims(cases: &mut usize) -> Result<(), String> {
    for (file, want) in [
        ("table1_row01_siso_4bs.toml", 3usize),
        ("table1_row02_siso_1ris_1bs.toml", 2),
        ("table1_row04_siso_1ris_0bs.toml", 1),
    ] {
        let sf = load(gallery_dir().join(file)).map_err(|e| e.to_string())?;
        let mask = UnknownsMask::from_mix(&sf.scenario.measurement_mix);
        let report =
            ident_report(&sf.scenario, &sf.ue, &sf.noise, mask).map_err(|e| e.to_string())?;
        let got = report.block_dim(Block::Velocity);
        if got != Some(want) {
            return Err(format!("{file}: velocity dimension {got:?}, expected {want}"));
        }
        *cases += 1;
    }
    Ok(())
}

fn criterion_properties() -> Result<String, String> {
    let mut cases = 0usize;
    let families: [(&str, fn(&mut usize) -> Result<(), String>); 10] = [
        ("rotation group laws", rotation_group_laws),
        ("delay clock-bias laws", delay_clock_laws),
        ("AoD orientation invariance", aod_orientation_invariance),
        ("AoA yaw equivariance", aoa_yaw_equivariance),
        ("inter-AoA rotation invariance", inter_aoa_rotation_invariance),
        ("Doppler linearity", doppler_linearity),
        ("FIM symmetry and positive semidefiniteness", fim_symmetry_psd),
        ("finite-difference vs analytic information", fd_matches_analytic_jacobians),
        ("two-ray intersection swap symmetry", halfline_swap_symmetry),
        ("velocity subspace dimensions 3/2/1", velocity_subspace_dims),
    ];
    for (name, f) in families {
        f(&mut cases).map_err(|e| format!("{name}: {e}"))?;
    }
    Ok(format!("{} law families hold over {cases} seeded cases", families.len()))
}

// ---------------------------------------------------------------------------

#[test]
fn acceptance_criteria() {
    let criteria: [(&str, fn() -> Result<String, String>); 6] = [
        ("identifiability table reproduction", criterion_table),
        ("noiseless recovery to 1e-6", criterion_noiseless),
        ("60 GHz beam-sweep accuracy", criterion_beam_sweep),
        ("Monte-Carlo CRB consistency", criterion_crb_consistency),
        ("near/far-field rank transition", criterion_nearfield),
        ("property suites", criterion_properties),
    ];
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("criterion {} — {name}: PASS ({detail})", i + 1),
            Err(why) => {
                failures += 1;
                println!("criterion {} — {name}: FAIL ({why})", i + 1);
            }
        }
    }
    assert_eq!(failures, 0, "{failures} acceptance criteria failed");
}
