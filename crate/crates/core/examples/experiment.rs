//! A small seeded experiment written to CSV.

use pcfl::popgen::{run_experiment, CellSpec, ExperimentConfig};
use pcfl::{Scheme, DEFAULT_EPSILON};

fn main() -> pcfl::Result<()> {
    let out_dir = std::env::temp_dir().join("pcfl-example");
    let cfg = ExperimentConfig {
        cells: [0.0, 0.5, 1.0]
            .into_iter()
            .map(|hq| CellSpec {
                k: 20,
                hq_fraction: hq,
                b_max_range: (30.0, 150.0),
            })
            .collect(),
        trials: 20,
        seed: 1,
        schemes: vec![Scheme::Uniform],
        epsilon: DEFAULT_EPSILON,
        out_dir: out_dir.clone(),
        alpha: pcfl::model::DEFAULT_ALPHA,
    };
    let report = run_experiment(&cfg, None)?;
    for s in &report.summary {
        println!(
            "hq {:.2} {:<8} contributors {:>6.2} batchsize {:>8.2} growth {:.3}",
            s.hq_fraction,
            s.scheme,
            s.mean_contributors,
            s.mean_global_batchsize,
            s.batchsize_growth
        );
    }
    report.write(&out_dir, &cfg)?;
    println!("wrote {}", out_dir.display());
    Ok(())
}
