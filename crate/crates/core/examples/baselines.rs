//! The aware game at its best threshold against the three reference schemes.

use pcfl::popgen::{generate, PopulationSpec};
use pcfl::{optimize_threshold, run_baseline, Scheme, DEFAULT_EPSILON};

fn main() -> pcfl::Result<()> {
    let inst = generate(&PopulationSpec::new(50, 0.1, 3))?;
    let best = optimize_threshold(&inst, DEFAULT_EPSILON)?.best().clone();
    println!("{:<12} {:>12} {:>12}", "scheme", "utility", "batchsize");
    println!(
        "{:<12} {:>12.3} {:>12.2}",
        "cafl", best.total_utility, best.global_batchsize
    );
    for s in [Scheme::Optimal, Scheme::Uniform, Scheme::Independent] {
        let o = run_baseline(s, &inst);
        println!(
            "{:<12} {:>12.3} {:>12.2}",
            s.name(),
            o.total_utility,
            o.global_batchsize()
        );
    }
    Ok(())
}
