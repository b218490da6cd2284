//! Checks a solved profile with the grid oracle and the exhaustive search.

use pcfl::oracle::{exhaustive_ne, verify_ne};
use pcfl::popgen::{generate, PopulationSpec};
use pcfl::solve_cofl;

fn main() -> pcfl::Result<()> {
    let inst = generate(&PopulationSpec::new(3, 1.0, 11))?;
    let sol = solve_cofl(&inst)?.result;
    println!("solver: {:?}", sol.profile.batchsizes());

    let report = verify_ne(&inst, &sol.profile, 10_000, 1e-6)?;
    for c in &report.participants {
        println!(
            "  id {} utility {:.4} best grid gain {:.2e}",
            c.id, c.utility, c.gain
        );
    }
    println!("grid check passed: {}", report.passed);

    let mut off = sol.profile.clone();
    off.set(0, sol.profile.get(0) * 0.8);
    println!(
        "perturbed profile passes: {}",
        verify_ne(&inst, &off, 10_000, 1e-6)?.passed
    );

    let ex = exhaustive_ne(&inst, 100)?;
    println!(
        "exhaustive search: {} grid equilibria in {} cluster(s)",
        ex.profiles.len(),
        ex.clusters.len()
    );
    Ok(())
}
