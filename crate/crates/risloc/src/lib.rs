//! # risloc
//!
//! Simulation and solver toolkit for radio localization scenes that combine
//! base stations (BSs) and reconfigurable intelligent surfaces (RISs).
//!
//! The crate covers the full loop:
//!
//! * describe a scene (anchor nodes, signaling, measurement mix, UE truth)
//!   and load/store it as a TOML scenario file ([`scene`]),
//! * synthesize geometric measurements — delays, angles, Doppler shifts —
//!   with seeded Gaussian noise ([`measurements`]),
//! * model the signal level: near-field and far-field RIS responses, beam
//!   codebooks, and received-power maps for beam-sweep localization
//!   ([`signal`]),
//! * estimate UE position, clock, velocity, and orientation with
//!   scenario-specific geometric initializers plus a Levenberg–Marquardt
//!   refiner ([`solvers`]),
//! * audit what is estimable at all via Fisher-information rank analysis
//!   and Cramér–Rao bounds ([`identifiability`]).
//!
//! The `examples/` directory is the guided tour: each file is a runnable
//! demonstration of one capability (`cargo run -p risloc --example <name>`).
//! A thin `risloc` binary exposes the same flows as subcommands for shell
//! use ([`cli`]).
//!
//! ## Conventions
//!
//! * Units are SI throughout: meters, seconds, Hz, radians, m/s.
//! * Rotations are ZYX Euler (yaw `alpha` about z, then pitch `beta` about
//!   y, then roll `gamma` about x); see [`geometry`].
//! * Azimuth lives in `(-pi, pi]`, elevation in `[-pi/2, pi/2]`.
//! * Every random draw flows through a caller-supplied `u64` seed; equal
//!   seeds give bit-identical outputs.

pub mod cli;
pub mod geometry;
pub mod identifiability;
pub mod measurements;
pub mod montecarlo;
pub mod scene;
pub mod signal;
pub mod solvers;

/// Propagation speed used for every delay/range conversion, in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
