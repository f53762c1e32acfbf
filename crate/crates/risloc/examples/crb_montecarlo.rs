//! Check estimator efficiency against the Cramér–Rao bound: run seeded
//! Monte-Carlo trials across a ladder of noise scales and compare the
//! empirical position RMSE with the bound at each scale. In the
//! small-error regime the ratio sits near 1 and both curves fall with
//! slope 1 on a log-log plot.
//!
//! Run with: `cargo run --release -p risloc --example crb_montecarlo`

use std::path::PathBuf;

use risloc::montecarlo::{crb_mc, McConfig};
use risloc::scene::load;

fn main() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios/table1_row03_siso_2ris_1bs.toml");
    let sf = load(&path).expect("gallery scene loads");

    let cfg = McConfig {
        trials: 200,
        sigma_scales: vec![0.03, 0.1, 0.3],
        seed: 1,
    };
    println!("{} trials per scale on {}", cfg.trials, path.file_name().unwrap().to_str().unwrap());

    let report = crb_mc(&sf, &cfg).expect("the study runs");

    println!("\n{:>12} {:>12} {:>12} {:>8} {:>11}", "sigma scale", "RMSE [m]", "CRB [m]", "ratio", "converged");
    for p in &report.points {
        println!(
            "{:>12.3} {:>12.4} {:>12.4} {:>8.2} {:>8}/{}",
            p.sigma_scale,
            p.rmse_position,
            p.crb_position,
            p.rmse_position / p.crb_position,
            p.converged,
            p.trials
        );
        assert!(
            p.rmse_position / p.crb_position < 2.0,
            "RMSE stays within a factor 2 of the bound"
        );
    }
    println!("\nlog-log slope of RMSE vs noise scale: {:.3} (ideal 1.0)", report.slope);
    assert!((report.slope - 1.0).abs() < 0.15, "error scales linearly with noise");
}
