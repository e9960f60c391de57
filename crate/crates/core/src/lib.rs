//! Simulation, optimization and analytical bounds for ancilla-assisted
//! linear-optical Bell-state measurements.
//!
//! A dual-rail Bell state enters the first four modes of an `n`-mode
//! interferometer `U` together with an ancillary photonic state on the
//! remaining modes; all outputs are watched by photon-number-resolving
//! detectors. A detection event unambiguously identifies a Bell state when it
//! can occur for exactly one of the four inputs, and the figure of interest is
//! the total probability of such discriminating events, averaged over the four
//! Bell states.
//!
//! The crate is organised in layers:
//!
//! * [`fock`] — occupation-vector polynomials over creation operators, with
//!   constructors for the Bell states and a catalogue of ancilla families.
//! * [`evolve`] — evolution of those polynomials through a unitary, detection
//!   event enumeration, and a permanent-based amplitude oracle used as an
//!   independent cross-check.
//! * [`compiler`] — compiles, once per (ancilla, n), an arithmetic plan that
//!   evaluates all event probabilities and their gradients directly from the
//!   entries of `U`, exploiting detection-event permutation classes and
//!   Bell-state row transforms.
//! * [`objective`] — success probability, the smooth figure of merit driving
//!   the optimizer, and per-Bell-state discrimination patterns.
//! * [`optimizer`] — Haar-random starts, an equality-constrained SQP local
//!   optimizer over U(n), and multi-start campaign orchestration.
//! * [`bounds`] — exact analytical upper bounds for polarization-preserving
//!   interferometers, computed from the ancilla's polarization profile.

pub mod bounds;
pub mod compiler;
pub mod evolve;
mod exact;
pub mod fock;
pub mod objective;
pub mod optimizer;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Ancilla specification failed validation.
    #[error("invalid ancilla: {0}")]
    InvalidAncilla(String),
    /// Operands live on different mode counts.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    /// A detection event's photon count differs from the state degree; this
    /// always indicates a caller bug, never a zero amplitude.
    #[error("photon-count mismatch: event carries {event} photons, state has degree {state}")]
    PhotonMismatch { event: u32, state: u32 },
    /// Compilation refused because the projected plan size exceeds the ceiling.
    #[error(
        "refusing to compile: projected {projected} DAG nodes exceeds the ceiling of {ceiling} \
         (raise the ceiling to override)"
    )]
    ResourceCeiling { projected: u64, ceiling: u64 },
    /// An enumeration guard (e.g. over rotation subsets) was exceeded.
    #[error("refusing to enumerate: {0}")]
    EnumerationGuard(String),
    /// An optimizer or campaign configuration failed validation.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    /// A matrix failed the unitarity check.
    #[error("matrix is not unitary: max |U\u{2020}U - I| = {deviation:.3e} > {tolerance:.1e}")]
    NotUnitary { deviation: f64, tolerance: f64 },
    /// Malformed circuit description.
    #[error("invalid circuit: {0}")]
    InvalidCircuit(String),
    /// A cached plan does not match the requested key or format version.
    #[error("plan cache mismatch: {0}")]
    PlanCacheMismatch(String),
    /// Filesystem failure while reading or writing an artifact.
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    /// Malformed JSON in a serialized artifact.
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
