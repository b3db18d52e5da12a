//! Timing coordination for Bell state analyzers in multi-hop quantum networks.
//!
//! The crate covers four layers:
//!
//! * [`topology`]: sources, BSA support nodes, memories, detectors and fiber links.
//! * [`solver`]: simultaneity constraints over adjustable delays, solved exactly,
//!   with certificates for infeasible loops and over-tight bounds.
//! * [`strategy`]: coordination strategies as capability maps, plus cascade and
//!   synchronization-domain analysis.
//! * [`sim`] and [`memory`]: a seeded discrete-event simulator with drift,
//!   coincidence detection, herald-driven feedback and quantum buffers.
//!
//! [`scenario`] and [`cli`] tie them to JSON scenario files and a command line.

pub mod cli;
pub mod error;
pub mod memory;
pub mod scenario;
pub mod sim;
pub mod solver;
pub mod strategy;
pub mod time;
pub mod topology;

pub use error::{Error, Result};
pub use time::Picos;
