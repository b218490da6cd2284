//! A game where the threshold destroys the equilibrium and the solver
//! removes participants until one exists again.

use pcfl::model::{GameInstance, Participant};
use pcfl::oracle::{best_response_dynamics, verify_ne};
use pcfl::{solve_cafl, DEFAULT_EPSILON};

fn main() -> pcfl::Result<()> {
    let parts = vec![
        Participant::with_unit_cost(1, 103.41, 1.0, 100.0, 1.0),
        Participant::with_unit_cost(2, 9.39, 1.0, 100.0, 1.0),
    ];
    let inst = GameInstance::new(parts, 1.0, Some(20.0))?;

    // Best responses chase each other around the barrier at b_th.
    let start = pcfl::model::StrategyProfile::new(vec![100.0, 20.0]);
    let d = best_response_dynamics(&inst, &start, 1000)?;
    println!(
        "dynamics converged: {} after {} rounds",
        d.converged, d.rounds
    );

    let sol = solve_cafl(&inst, DEFAULT_EPSILON)?;
    println!(
        "removed {:?} (bound {})",
        sol.removed_order,
        sol.removal_bound()
    );
    println!("profile {:?}", sol.result.profile.batchsizes());

    let refined = inst.without(&sol.removed_order);
    let kept: Vec<f64> = refined
        .ids()
        .iter()
        .map(|&id| sol.result.profile.get(inst.position_of(id).unwrap()))
        .collect();
    let report = verify_ne(
        &refined,
        &pcfl::model::StrategyProfile::new(kept),
        10_000,
        1e-6,
    )?;
    println!("refined game equilibrium: {}", report.passed);
    Ok(())
}
