//! How free-riding grows with the population in the oblivious game.

use pcfl::model::ParticipantType;
use pcfl::popgen::{generate_stream, PopulationSpec};
use pcfl::solve_cofl;

fn main() -> pcfl::Result<()> {
    println!(
        "{:>5} {:>12} {:>12} {:>12}",
        "k", "contributors", "free-riders", "batchsize"
    );
    for k in [5, 10, 20, 50, 100, 200] {
        let inst = generate_stream(&PopulationSpec::new(k, 0.5, 1), 0)?;
        let r = solve_cofl(&inst)?.result;
        println!(
            "{:>5} {:>12} {:>12} {:>12.2}",
            k,
            r.contributor_count(),
            r.count_of(ParticipantType::Type3),
            r.global_batchsize()
        );
    }
    Ok(())
}
