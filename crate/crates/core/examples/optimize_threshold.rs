//! Sweeps every integer threshold on a generated population.

use pcfl::popgen::{generate, PopulationSpec};
use pcfl::{optimize_threshold, solve_cofl, DEFAULT_EPSILON};

fn main() -> pcfl::Result<()> {
    let inst = generate(&PopulationSpec::new(50, 0.5, 7))?;
    let cofl = solve_cofl(&inst)?.result;
    let sweep = optimize_threshold(&inst, DEFAULT_EPSILON)?;

    for e in sweep.entries.iter().step_by(5) {
        println!(
            "b_th {:>4}  utility {:>10.3}  batchsize {:>9.2}  contributors {:>3}",
            e.b_th, e.total_utility, e.global_batchsize, e.contributors
        );
    }
    let best = sweep.best();
    println!(
        "\nbest b_th {} gives {} contributors and batchsize {:.2} (oblivious: {}, {:.2})",
        best.b_th,
        best.contributors,
        best.global_batchsize,
        cofl.contributor_count(),
        cofl.global_batchsize()
    );
    Ok(())
}
