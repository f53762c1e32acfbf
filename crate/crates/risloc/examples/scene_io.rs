//! Build a localization scene in code, round-trip it through a TOML file,
//! and check it against the structural validation rules.
//!
//! Run with: `cargo run -p risloc --example scene_io`

use risloc::geometry::{EulerZYX, Vec3};
use risloc::measurements::NoiseSpec;
use risloc::scene::{
    load, Antenna, BsNode, MeasurementKind, RisNode, Scenario, ScenarioFile, Signaling, UeState,
};
use risloc::SPEED_OF_LIGHT;

fn main() {
    let carrier_hz = 28e9;
    let wavelength = SPEED_OF_LIGHT / carrier_hz;

    // One wideband BS plus one 16x16 RIS, measuring delays and RIS
    // departure angles. The direct BS-UE link stays open.
    let scenario = Scenario {
        carrier_hz,
        signaling: Signaling::Wideband { bandwidth_hz: 400e6 },
        bss: vec![BsNode {
            id: "bs1".into(),
            position: Vec3::new(0.0, 0.0, 10.0),
            orientation: EulerZYX::IDENTITY,
            antenna: Antenna::Single,
        }],
        riss: vec![RisNode {
            id: "ris1".into(),
            center: Vec3::new(20.0, 5.0, 5.0),
            // Boresight (local +z) turned to face the scene interior.
            orientation: EulerZYX::new(-std::f64::consts::FRAC_PI_2, -std::f64::consts::FRAC_PI_2, 0.0),
            nx: 16,
            ny: 16,
            spacing: wavelength / 2.0,
            phase_profile: vec![0.0; 256],
        }],
        ue_antenna: Antenna::Single,
        measurement_mix: vec![MeasurementKind::Toa, MeasurementKind::Aod],
        los_blocked: vec![],
    };
    let ue = UeState::new(
        Vec3::new(10.0, 2.0, 1.5),
        Vec3::new(1.0, 0.0, 0.0),
        5.0e-9, // 5 ns clock bias, ~1.5 m of apparent range
        EulerZYX::IDENTITY,
    );
    let file = ScenarioFile { scenario, ue, noise: NoiseSpec::default() };

    let violations = file.validate();
    println!("violations in the hand-built scene: {}", violations.len());
    for v in &violations {
        println!("  - {v}");
    }
    assert!(violations.is_empty(), "the example scene must be valid");

    // Round-trip through disk.
    let path = std::env::temp_dir().join("risloc_scene_io_example.toml");
    file.save(&path).expect("save the scenario");
    let reloaded = load(&path).expect("load it back");
    assert_eq!(reloaded.scenario, file.scenario, "scenario survives the round trip");
    assert_eq!(reloaded.ue, file.ue, "UE truth survives the round trip");
    println!("saved and reloaded {} without loss", path.display());

    println!(
        "carrier {:.1} GHz, wavelength {:.2} mm, RIS {}x{} at pitch {:.2} mm",
        reloaded.scenario.carrier_hz / 1e9,
        wavelength * 1e3,
        reloaded.scenario.riss[0].nx,
        reloaded.scenario.riss[0].ny,
        reloaded.scenario.riss[0].spacing * 1e3,
    );

    // Validation catches broken scenes with actionable messages.
    let mut broken = reloaded;
    broken.scenario.measurement_mix = vec![MeasurementKind::Aoa];
    broken.scenario.ue_antenna = Antenna::Single; // AoA needs a UE array
    let complaints = broken.validate();
    println!("a scene asking for AoA without a UE array draws {} violation(s):", complaints.len());
    for v in &complaints {
        println!("  - {v}");
    }
    assert!(!complaints.is_empty());

    std::fs::remove_file(&path).ok();
}
