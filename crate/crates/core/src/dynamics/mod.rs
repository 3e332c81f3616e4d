//! Ground states and real-time propagation under linear interaction ramps.

mod krylov;
mod meanfield;
mod propagate;
mod protocol;

pub use krylov::{KrylovExp, KrylovStats};
pub use meanfield::{
    evolve_mf, mf_ground_state, MfObserver, MfRecord, MfSettings, MfState, MfTrajectory,
};
pub use propagate::{
    evolve_quench, evolve_schedule, ground_state, EvolutionStats, Observer, PropagationSettings,
    RampScheme, Trajectory,
};
pub use protocol::{CouplingSchedule, QuenchProtocol};
