//! homlim: a lazy symbolic engine for homogeneous families of subsets of a
//! countable universe.
//!
//! The engine never materializes an infinite object. Sets, points,
//! permutations and group elements are names with decidable query
//! operations; every answer is either exact or an explicit budget error.

pub mod base;
pub mod cells;
pub mod cli;
pub mod config;
pub mod error;
pub mod grid;
pub mod point;
pub mod registry;
pub mod session_io;
pub mod text;
pub mod tower;
pub mod verify;
pub mod word;

pub use base::BaseSet;
pub use config::{Budgets, DemandDecl, Mode, SessionConfig, SetRef};
pub use error::{Error, Result};
pub use grid::{
    incompatibility_witness, CheckOutcome, EtaSelector, GridSession, PrunedAlphabet, Trace,
};
pub use point::{BPoint, GridPoint, PointName};
pub use registry::{Demand, PermId, Registry, SetExpr, SetId};
pub use session_io::{export_session, import_session, Certificate, Session};
pub use tower::{PermHandle, TowerSession};
pub use verify::{
    build_micromodel, verify_all, verify_named, CheckReport, FamilyDescriptor, MicroModel,
    CHECK_NAMES,
};
pub use cli::cli_main;
pub use word::{DemandId, Letter, Sign, Word};
