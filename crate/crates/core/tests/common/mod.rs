//! Helpers shared by the acceptance gate and the property suite.

#![allow(dead_code)]

use pcfl::cafl::solve_cafl;
use pcfl::cofl::solve_cofl;
use pcfl::model::{utility, GameInstance, Participant, ParticipantType, StrategyProfile};
use pcfl::oracle::{best_response_dynamics, verify_ne};
use pcfl::popgen::{generate_stream, PopulationSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const VERIFY_GRID: usize = 10_000;
pub const VERIFY_MARGIN: f64 = 1e-6;

pub fn two_player(b_th: Option<f64>) -> GameInstance {
    GameInstance::new(
        vec![
            Participant::with_unit_cost(1, 103.41, 1.0, 100.0, 1.0),
            Participant::with_unit_cost(2, 9.39, 1.0, 100.0, 1.0),
        ],
        1.0,
        b_th,
    )
    .unwrap()
}

/// A population with `k` participants and a random high-quality share.
pub fn random_instance(seed: u64, stream: u64, k: usize) -> GameInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    rng.set_stream(stream);
    let hq = rng.gen_range(0.0..=1.0);
    generate_stream(&PopulationSpec::new(k, hq, seed), stream).unwrap()
}

pub fn rank(t: ParticipantType) -> u8 {
    match t {
        ParticipantType::Type1 => 1,
        ParticipantType::Type2 => 2,
        ParticipantType::Type3 => 3,
        ParticipantType::Type4 => 4,
        ParticipantType::Removed => 5,
    }
}

/// Labels nondecreasing in β order (ignoring removed players) with at most
/// one interior contributor.
pub fn type_structure(labels: &[ParticipantType]) -> Result<(), String> {
    let kept: Vec<u8> = labels
        .iter()
        .filter(|&&t| t != ParticipantType::Removed)
        .map(|&t| rank(t))
        .collect();
    if kept.windows(2).any(|w| w[0] > w[1]) {
        return Err(format!("labels out of order: {labels:?}"));
    }
    let interior = labels
        .iter()
        .filter(|&&t| t == ParticipantType::Type2)
        .count();
    if interior > 1 {
        return Err(format!("{interior} interior contributors"));
    }
    Ok(())
}

/// A random profile with every entry in `[0, b_max]`.
pub fn random_start(inst: &GameInstance, rng: &mut ChaCha8Rng) -> StrategyProfile {
    StrategyProfile::new(
        inst.players()
            .iter()
            .map(|p| rng.gen_range(0.0..=p.b_max()))
            .collect(),
    )
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

/// Every oblivious-game invariant on one instance.
pub fn check_cofl(inst: &GameInstance, starts: usize, seed: u64) -> Result<(), String> {
    let sol = solve_cofl(inst).map_err(|e| e.to_string())?;
    let r = &sol.result;
    let report =
        verify_ne(inst, &r.profile, VERIFY_GRID, VERIFY_MARGIN).map_err(|e| e.to_string())?;
    if !report.passed {
        return Err(format!("deviation gain {:e}", report.max_gain));
    }
    type_structure(&r.type_labels)?;
    for (k, &t) in r.type_labels.iter().enumerate() {
        if t == ParticipantType::Type3 {
            let u = utility(inst, k, &r.profile);
            if !(u > 0.0) && inst.players()[k].theta() > 0.0 {
                return Err(format!("free-rider {k} has utility {u}"));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for s in 0..starts {
        let start = random_start(inst, &mut rng);
        let d = best_response_dynamics(inst, &start, 100_000).map_err(|e| e.to_string())?;
        if !d.converged {
            return Err(format!("dynamics from start {s} did not converge"));
        }
        let gap = rel_diff(d.profile.global_batchsize(), r.global_batchsize());
        if gap > 1e-4 {
            return Err(format!(
                "dynamics from start {s} reached a total {gap:e} away"
            ));
        }
    }
    Ok(())
}

/// The refined game (removed players dropped) and the matching profile.
pub fn refined(
    inst: &GameInstance,
    removed: &[u32],
    profile: &StrategyProfile,
) -> (GameInstance, StrategyProfile) {
    let g = inst.without(removed);
    let p = StrategyProfile::new(
        g.ids()
            .iter()
            .map(|&id| profile.get(inst.position_of(id).unwrap()))
            .collect(),
    );
    (g, p)
}

/// Every aware-game invariant on one instance.
pub fn check_cafl(inst: &GameInstance, epsilon: f64) -> Result<(), String> {
    let sol = solve_cafl(inst, epsilon).map_err(|e| e.to_string())?;
    let r = &sol.result;
    let (g, p) = refined(inst, &sol.removed_order, &r.profile);
    if !g.is_empty() {
        let report = verify_ne(&g, &p, VERIFY_GRID, VERIFY_MARGIN).map_err(|e| e.to_string())?;
        if !report.passed {
            let worst = report.violations().next().unwrap();
            return Err(format!(
                "deviation gain {:e} for id {} (b_th {:?})",
                worst.gain,
                worst.id,
                inst.b_th()
            ));
        }
    }
    type_structure(&r.type_labels)?;
    for k in 0..inst.len() {
        let b = r.profile.get(k);
        if b > 0.0 {
            let u = utility(inst, k, &r.profile);
            if u < -1e-9 {
                return Err(format!("contributor {k} has utility {u}"));
            }
        }
    }
    if sol.removed_order.len() > sol.removal_bound() {
        return Err(format!(
            "{} removals exceed bound {}",
            sol.removed_order.len(),
            sol.removal_bound()
        ));
    }
    if r.iterations != sol.removed_order.len() {
        return Err("iteration count differs from removals".into());
    }
    Ok(())
}
