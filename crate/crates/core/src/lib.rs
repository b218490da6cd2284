//! Nash equilibria of federated-learning participation games.
//!
//! Two games are covered. In the oblivious game every participant receives
//! the trained model whatever it contributes; in the aware game only those
//! contributing at least a threshold `b_th` do. Both games have closed-form
//! equilibria computed by [`cofl::solve_cofl`] and [`cafl::solve_cafl`].

pub mod baselines;
pub mod cafl;
pub mod cli;
pub mod cofl;
pub mod error;
pub mod model;
pub mod oracle;
pub mod popgen;
pub mod search;
pub mod threshold;

pub use baselines::{run_baseline, BaselineOutcome, Scheme};
pub use cafl::{solve_cafl, CaflSolution, DEFAULT_EPSILON};
pub use cofl::{solve_cofl, CoflSolution};
pub use error::{Error, Result};
pub use model::{
    EquilibriumProperty, EquilibriumResult, GameInstance, Participant, ParticipantType,
    StrategyProfile,
};
pub use threshold::{optimize_threshold, optimize_threshold_with, ThresholdSweep};
