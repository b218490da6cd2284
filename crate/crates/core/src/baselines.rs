//! Comparison schemes: equal contributions, the social optimum, and training
//! alone.

use serde::{Deserialize, Serialize};

use crate::model::{shared_utility, GameInstance, StrategyProfile};
use crate::search::golden_section_max;
use crate::threshold::total_utility_of;

const GOLDEN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Every participant contributes the same amount, chosen to maximise the
    /// total utility.
    Uniform,
    /// Total utility of all participants maximised, ignoring incentives.
    Optimal,
    /// Each participant trains alone.
    Independent,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Uniform => "uniform",
            Scheme::Optimal => "optimal",
            Scheme::Independent => "independent",
        }
    }
}

/// A baseline profile with the utilities it yields.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineOutcome {
    pub scheme: Scheme,
    pub profile: StrategyProfile,
    /// Per-participant utility, aligned with the instance order.
    pub utilities: Vec<f64>,
    pub total_utility: f64,
}

impl BaselineOutcome {
    pub fn global_batchsize(&self) -> f64 {
        self.profile.global_batchsize()
    }

    pub fn contributor_count(&self) -> usize {
        self.profile.contributor_count()
    }
}

/// The common contribution `b ∈ [0, min b_max]` maximising
/// `Σ_k θ_k·ln(1+√(K·b)) − A_k·b`.
pub fn uniform_contribution(inst: &GameInstance) -> StrategyProfile {
    let k = inst.len();
    if k == 0 {
        return StrategyProfile::zeros(0);
    }
    let theta: f64 = inst.players().iter().map(|p| p.theta()).sum();
    let cost: f64 = inst.players().iter().map(|p| p.unit_cost()).sum();
    let n = k as f64;
    let objective = |b: f64| theta * (n * b).sqrt().ln_1p() - cost * b;
    let (b, _) = golden_section_max(objective, 0.0, inst.threshold_cap(), GOLDEN_TOL);
    StrategyProfile::new(vec![b; k])
}

/// Maximises `Σ_k θ_k·ln(1+√B) − Σ_k A_k·B_k` over `0 <= B_k <= b_max`.
///
/// For a fixed total the cheapest allocation fills participants in ascending
/// unit cost (ties by id), so the cost is piecewise linear in the total. Each
/// linear piece is searched separately and the best piece wins.
pub fn optimal_total_utility(inst: &GameInstance) -> StrategyProfile {
    let k = inst.len();
    let players = inst.players();
    let theta: f64 = players.iter().map(|p| p.theta()).sum();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        players[a]
            .unit_cost()
            .total_cmp(&players[b].unit_cost())
            .then(players[a].id().cmp(&players[b].id()))
    });

    let mut best_total = 0.0;
    let mut best_value = 0.0;
    let (mut start, mut sunk) = (0.0, 0.0);
    for &pos in &order {
        let p = &players[pos];
        let (a, cap) = (p.unit_cost(), p.b_max());
        let objective = |b: f64| theta * b.sqrt().ln_1p() - sunk - a * (b - start);
        let (b, v) = golden_section_max(objective, start, start + cap, GOLDEN_TOL);
        if v > best_value {
            best_value = v;
            best_total = b;
        }
        start += cap;
        sunk += a * cap;
    }

    let mut batch = vec![0.0; k];
    let mut left = best_total;
    for &pos in &order {
        if left <= 0.0 {
            break;
        }
        let take = left.min(players[pos].b_max());
        batch[pos] = take;
        left -= take;
    }
    StrategyProfile::new(batch)
}

/// Each participant's standalone optimum `clamp(β_k, 0, b_max)`.
pub fn independent_training(inst: &GameInstance) -> StrategyProfile {
    StrategyProfile::new(
        inst.players()
            .iter()
            .map(|p| p.beta().clamp(0.0, p.b_max()))
            .collect(),
    )
}

/// Runs a scheme and evaluates its utilities.
///
/// Uniform contribution and independent training count only contributors
/// (the same convention as the equilibrium total utility). The social optimum
/// counts every participant, since it is defined as the maximiser of the
/// sum over all of them.
pub fn run_baseline(scheme: Scheme, inst: &GameInstance) -> BaselineOutcome {
    let players = inst.players();
    let (profile, utilities, total_utility) = match scheme {
        Scheme::Uniform => {
            let profile = uniform_contribution(inst);
            let utilities = shared_utilities(inst, &profile);
            let tu = total_utility_of(inst, &profile);
            (profile, utilities, tu)
        }
        Scheme::Optimal => {
            let profile = optimal_total_utility(inst);
            let utilities = shared_utilities(inst, &profile);
            let tu = utilities.iter().sum();
            (profile, utilities, tu)
        }
        Scheme::Independent => {
            let profile = independent_training(inst);
            let utilities: Vec<f64> = players
                .iter()
                .zip(profile.batchsizes())
                .map(|(p, &b)| shared_utility(p.theta(), p.unit_cost(), b, b))
                .collect();
            let tu = utilities
                .iter()
                .zip(profile.batchsizes())
                .filter(|(_, &b)| b > 0.0)
                .map(|(u, _)| u)
                .sum();
            (profile, utilities, tu)
        }
    };
    BaselineOutcome {
        scheme,
        profile,
        utilities,
        total_utility,
    }
}

fn shared_utilities(inst: &GameInstance, profile: &StrategyProfile) -> Vec<f64> {
    let total = profile.global_batchsize();
    inst.players()
        .iter()
        .zip(profile.batchsizes())
        .map(|(p, &b)| shared_utility(p.theta(), p.unit_cost(), total, b))
        .collect()
}
