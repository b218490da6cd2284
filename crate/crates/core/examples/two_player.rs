//! A two-player game with one strong and one weak participant, solved with
//! and without a contribution threshold.

use pcfl::cafl::phi_threshold;
use pcfl::model::{GameInstance, Participant};
use pcfl::{solve_cafl, solve_cofl, DEFAULT_EPSILON};

fn main() -> pcfl::Result<()> {
    let parts = vec![
        Participant::with_unit_cost(1, 103.41, 1.0, 100.0, 1.0),
        Participant::with_unit_cost(2, 9.39, 1.0, 100.0, 1.0),
    ];
    let inst = GameInstance::new(parts, 1.0, None)?;
    for p in inst.players() {
        println!(
            "id {}  beta {:.4}  phi(20) {:.4}",
            p.id(),
            p.beta(),
            phi_threshold(20.0, p.theta(), p.unit_cost())
        );
    }

    let cofl = solve_cofl(&inst)?.result;
    println!("\noblivious: {:?}", cofl.profile.batchsizes());
    println!("  labels {:?}", cofl.type_labels);

    let aware = solve_cafl(&inst.with_threshold(20.0)?, DEFAULT_EPSILON)?;
    println!(
        "\naware, b_th = 20: {:?}",
        aware.result.profile.batchsizes()
    );
    println!("  removed {:?}", aware.removed_order);
    for r in &aware.rounds {
        println!("  round {}: {:?}", r.round, r.outcome);
    }
    Ok(())
}
