//! Reproduce the ten-row identifiability table: for each gallery scene,
//! run the Fisher-information rank analysis and compare the per-block
//! identifiable dimensions (position / clock / velocity / orientation)
//! against the expected values shipped with the crate.
//!
//! Run with: `cargo run -p risloc --example identifiability_table`

use std::path::PathBuf;

use risloc::identifiability::{reproduce_table, Block};

fn dim(d: Option<usize>) -> String {
    d.map_or("-".to_string(), |v| v.to_string())
}

fn main() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let outcomes = reproduce_table(&dir).expect("the gallery analyzes cleanly");

    println!(
        "{:<4} {:<34} {:>9} {:>7} {:>9} {:>11} {:>7}",
        "row", "scene", "position", "clock", "velocity", "orientation", "match"
    );
    let mut matched = 0;
    for o in &outcomes {
        let e = &o.expectation;
        let got = |b: Block| dim(o.report.block_dim(b));
        println!(
            "{:<4} {:<34} {:>9} {:>7} {:>9} {:>11} {:>7}",
            e.row,
            e.label,
            format!("{}/{}", got(Block::Position), e.position_dim),
            format!("{}/{}", got(Block::Clock), dim(e.clock_dim)),
            format!("{}/{}", got(Block::Velocity), dim(e.velocity_dim)),
            format!("{}/{}", got(Block::Orientation), dim(e.orientation_dim)),
            if o.matches { "yes" } else { "NO" },
        );
        matched += o.matches as usize;
        for w in &o.report.warnings {
            println!("     note: {w}");
        }
    }
    println!("\n{matched}/{} rows match (shown as analyzed/expected)", outcomes.len());
    assert_eq!(matched, outcomes.len(), "every row must reproduce");
}
