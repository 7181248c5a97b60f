//! Simulation of stateful in-memory logic on memristive crossbars with
//! fault injection, diagonal-parity error correction and triple modular
//! redundancy, plus closed-form reliability analytics.

pub mod analytics;
pub mod bits;
pub mod crossbar;
pub mod fault;
pub mod ecc;
pub mod microcode;
pub mod report;
pub mod tmr;

pub use bits::{BitLine, BitMatrix};
pub use crossbar::{Crossbar, CrossbarError, GateKind, GateStep, Orientation, Rect};
pub use fault::{FaultConfig, FaultInjector, FaultSource, NoFaults};
pub use microcode::{build_full_adder, build_multiplier, MicroProgram};
