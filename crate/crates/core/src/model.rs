//! Participant parameters, the per-sample training cost, and the utility
//! shared by both game variants.
//!
//! Each participant trains on `B_k` samples at CPU frequency `f_k`. Energy is
//! `½·α·C_k·B_k·f_k²` and latency `C_k·B_k/f_k`; the model improvement from a
//! global batchsize `B` is `√B`. At the cost-minimising frequency `f*` the
//! training cost is linear in `B_k` with slope `A_k`, so every solver works
//! with the reduced utility `θ_k·ln(1+√B) − A_k·B_k`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Chip-architecture coefficient used when an instance does not specify one.
pub const DEFAULT_ALPHA: f64 = 2e-28;

/// Scale of the loss improvement `ξ·√B`. Fixed to one.
pub const XI: f64 = 1.0;

/// Version tag written into every JSON document this crate emits.
pub const SCHEMA_VERSION: u32 = 1;

/// Economic and hardware parameters of one participant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Participant {
    pub id: u32,
    /// Valuation of the trained model.
    pub theta: f64,
    /// Weight on energy (utility per joule).
    pub phi: f64,
    /// Weight on latency (utility per second).
    pub gamma: f64,
    /// CPU cycles needed per training sample.
    pub cycles_per_sample: f64,
    pub f_min: f64,
    pub f_max: f64,
    /// Local dataset size, the largest batch the participant can offer.
    pub b_max: f64,
}

impl Participant {
    /// Builds a participant whose unit cost is exactly `unit_cost` under
    /// `alpha`: a single admissible frequency of 1 and `C_k = unit_cost`.
    pub fn with_unit_cost(id: u32, theta: f64, unit_cost: f64, b_max: f64, alpha: f64) -> Self {
        Participant {
            id,
            theta,
            phi: 1.0 / alpha,
            gamma: 0.5,
            cycles_per_sample: unit_cost,
            f_min: 1.0,
            f_max: 1.0,
            b_max,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let field = |name: &str| format!("participants[id={}].{}", self.id, name);
        let checks: [(&str, f64, bool, &str); 7] = [
            ("theta", self.theta, self.theta >= 0.0, "must be >= 0"),
            ("phi", self.phi, self.phi > 0.0, "must be > 0"),
            ("gamma", self.gamma, self.gamma > 0.0, "must be > 0"),
            (
                "cycles_per_sample",
                self.cycles_per_sample,
                self.cycles_per_sample > 0.0,
                "must be > 0",
            ),
            ("f_min", self.f_min, self.f_min > 0.0, "must be > 0"),
            (
                "f_max",
                self.f_max,
                self.f_max >= self.f_min,
                "must be >= f_min",
            ),
            ("b_max", self.b_max, self.b_max > 0.0, "must be > 0"),
        ];
        for (name, value, ok, reason) in checks {
            if !value.is_finite() {
                return Err(Error::param(field(name), "must be finite"));
            }
            if !ok {
                return Err(Error::param(field(name), format!("{reason}, got {value}")));
            }
        }
        Ok(())
    }
}

/// Quantities derived from a participant's parameters and the instance's `α`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedParams {
    pub f_star: f64,
    /// Training cost per sample at `f_star` (`A_k`).
    pub unit_cost: f64,
    /// Standalone optimal batchsize (`β_k`).
    pub beta: f64,
}

impl DerivedParams {
    pub fn compute(p: &Participant, alpha: f64) -> Result<Self> {
        let f_star = optimal_frequency(p, alpha)?;
        let unit_cost = unit_cost(p, f_star, alpha);
        Ok(DerivedParams {
            f_star,
            unit_cost,
            beta: beta(p.theta, unit_cost),
        })
    }
}

/// Cost-minimising CPU frequency: `∛(γ/(φ·α))` clamped to `[f_min, f_max]`.
pub fn optimal_frequency(p: &Participant, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::param("alpha", format!("must be > 0, got {alpha}")));
    }
    if !(p.phi > 0.0 && p.phi.is_finite()) {
        return Err(Error::param(
            format!("participants[id={}].phi", p.id),
            format!("must be > 0, got {}", p.phi),
        ));
    }
    let free = (p.gamma / (p.phi * alpha)).cbrt();
    Ok(free.clamp(p.f_min, p.f_max))
}

/// Per-sample cost `½·φ·α·C·f² + γ·C/f`.
pub fn unit_cost(p: &Participant, f_star: f64, alpha: f64) -> f64 {
    0.5 * p.phi * alpha * p.cycles_per_sample * f_star * f_star
        + p.gamma * p.cycles_per_sample / f_star
}

/// `(√(¼ + θ/(2A)) − ½)²`, the batchsize at which a lone participant's
/// marginal model value equals its marginal cost.
pub fn beta(theta: f64, unit_cost: f64) -> f64 {
    let x = theta / (2.0 * unit_cost);
    // √(¼+x) − ½ rewritten to avoid cancellation for small x.
    let root = x / ((0.25 + x).sqrt() + 0.5);
    root * root
}

/// `θ·ln(1 + ξ√B) − A·b` for a participant contributing `own` to a global
/// batchsize `total`.
pub fn shared_utility(theta: f64, unit_cost: f64, total: f64, own: f64) -> f64 {
    theta * (XI * total.max(0.0).sqrt()).ln_1p() - unit_cost * own
}

/// A participant together with its derived quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct Player {
    pub participant: Participant,
    pub derived: DerivedParams,
}

impl Player {
    pub fn id(&self) -> u32 {
        self.participant.id
    }

    pub fn theta(&self) -> f64 {
        self.participant.theta
    }

    pub fn b_max(&self) -> f64 {
        self.participant.b_max
    }

    pub fn unit_cost(&self) -> f64 {
        self.derived.unit_cost
    }

    pub fn beta(&self) -> f64 {
        self.derived.beta
    }
}

/// An ordered population plus the global constants of one game.
///
/// Players are kept sorted by descending `β`; equal `β` values are ordered by
/// ascending id and then treated as distinct ranks. `b_th` is `None` for the
/// contribution-oblivious game and `Some` for the contribution-aware one.
#[derive(Debug, Clone, PartialEq)]
pub struct GameInstance {
    players: Vec<Player>,
    alpha: f64,
    b_th: Option<f64>,
}

impl GameInstance {
    pub fn new(participants: Vec<Participant>, alpha: f64, b_th: Option<f64>) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::param("alpha", format!("must be > 0, got {alpha}")));
        }
        let mut seen = std::collections::HashSet::new();
        let mut players = Vec::with_capacity(participants.len());
        for p in participants {
            p.validate()?;
            if !seen.insert(p.id) {
                return Err(Error::param(
                    format!("participants[id={}].id", p.id),
                    "duplicate id",
                ));
            }
            let derived = DerivedParams::compute(&p, alpha)?;
            players.push(Player {
                participant: p,
                derived,
            });
        }
        players.sort_by(|a, b| {
            b.beta()
                .total_cmp(&a.beta())
                .then_with(|| a.id().cmp(&b.id()))
        });
        let inst = GameInstance {
            players,
            alpha,
            b_th: None,
        };
        match b_th {
            Some(t) => inst.with_threshold(t),
            None => Ok(inst),
        }
    }

    /// Same population under the contribution-aware game with threshold `b_th`.
    pub fn with_threshold(&self, b_th: f64) -> Result<Self> {
        let cap = self.threshold_cap();
        if !(b_th > 0.0 && b_th <= cap) {
            return Err(Error::param(
                "b_th",
                format!("must satisfy 0 < b_th <= min b_max = {cap}, got {b_th}"),
            ));
        }
        Ok(GameInstance {
            b_th: Some(b_th),
            ..self.clone()
        })
    }

    pub fn without_threshold(&self) -> Self {
        GameInstance {
            b_th: None,
            ..self.clone()
        }
    }

    /// The instance with the listed participants taken out of the game.
    pub fn without(&self, ids: &[u32]) -> Self {
        GameInstance {
            players: self
                .players
                .iter()
                .filter(|p| !ids.contains(&p.id()))
                .cloned()
                .collect(),
            ..self.clone()
        }
    }

    pub fn players(&self) -> &[Player] {
        &self.players
    }

    pub fn len(&self) -> usize {
        self.players.len()
    }

    pub fn is_empty(&self) -> bool {
        self.players.is_empty()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn b_th(&self) -> Option<f64> {
        self.b_th
    }

    /// Largest admissible threshold, `min_k b_max`.
    pub fn threshold_cap(&self) -> f64 {
        self.players
            .iter()
            .map(Player::b_max)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn position_of(&self, id: u32) -> Option<usize> {
        self.players.iter().position(|p| p.id() == id)
    }

    pub fn ids(&self) -> Vec<u32> {
        self.players.iter().map(Player::id).collect()
    }

    pub fn from_json_str(s: &str) -> std::result::Result<Self, InstanceParseError> {
        let doc: InstanceDoc = crate::error::from_json(s).map_err(InstanceParseError::Json)?;
        doc.into_instance().map_err(InstanceParseError::Invalid)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&InstanceDoc::from(self)).expect("instance serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        match Self::from_json_str(&text) {
            Ok(inst) => Ok(inst),
            Err(InstanceParseError::Json(source)) => Err(Error::Json {
                path: path.to_path_buf(),
                source,
            }),
            Err(InstanceParseError::Invalid(e)) => Err(e),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_string() + "\n").map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug)]
pub enum InstanceParseError {
    Json(crate::error::JsonError),
    Invalid(Error),
}

/// On-disk form of a [`GameInstance`]. Derived parameters are never stored;
/// they are recomputed on load.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema_version: Option<u32>,
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_th: Option<f64>,
    pub participants: Vec<Participant>,
}

impl InstanceDoc {
    pub fn into_instance(self) -> Result<GameInstance> {
        GameInstance::new(self.participants, self.alpha, self.b_th)
    }
}

impl From<&GameInstance> for InstanceDoc {
    fn from(inst: &GameInstance) -> Self {
        let mut participants: Vec<Participant> =
            inst.players.iter().map(|p| p.participant.clone()).collect();
        participants.sort_by_key(|p| p.id);
        InstanceDoc {
            schema_version: Some(SCHEMA_VERSION),
            alpha: inst.alpha,
            b_th: inst.b_th,
            participants,
        }
    }
}

/// Batchsize decisions aligned with an instance's player order.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyProfile {
    batchsizes: Vec<f64>,
    global: f64,
}

impl StrategyProfile {
    pub fn new(batchsizes: Vec<f64>) -> Self {
        let global = batchsizes.iter().sum();
        StrategyProfile { batchsizes, global }
    }

    pub fn zeros(k: usize) -> Self {
        StrategyProfile::new(vec![0.0; k])
    }

    pub fn batchsizes(&self) -> &[f64] {
        &self.batchsizes
    }

    pub fn len(&self) -> usize {
        self.batchsizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batchsizes.is_empty()
    }

    pub fn get(&self, k: usize) -> f64 {
        self.batchsizes[k]
    }

    pub fn global_batchsize(&self) -> f64 {
        self.global
    }

    /// `B_{-k}`, summed directly rather than as `B − B_k`.
    pub fn others(&self, k: usize) -> f64 {
        self.batchsizes
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != k)
            .map(|(_, b)| b)
            .sum()
    }

    pub fn set(&mut self, k: usize, value: f64) {
        self.batchsizes[k] = value;
        self.global = self.batchsizes.iter().sum();
    }

    pub fn contributor_count(&self) -> usize {
        self.batchsizes.iter().filter(|&&b| b > 0.0).count()
    }

    /// Checks `0 <= B_k <= b_max` and, under a threshold, `B_k ∈ {0} ∪ [b_th, b_max]`.
    pub fn validate_for(&self, inst: &GameInstance) -> Result<()> {
        if self.len() != inst.len() {
            return Err(Error::InvalidArgument(format!(
                "profile has {} entries, instance has {} participants",
                self.len(),
                inst.len()
            )));
        }
        let tol = 1e-9;
        for (p, &b) in inst.players().iter().zip(&self.batchsizes) {
            let field = format!("profile[id={}]", p.id());
            if !b.is_finite() || b < 0.0 || b > p.b_max() * (1.0 + tol) {
                return Err(Error::param(
                    field,
                    format!("batchsize {b} outside [0, {}]", p.b_max()),
                ));
            }
            if let Some(t) = inst.b_th() {
                if b > 0.0 && b < t * (1.0 - tol) {
                    return Err(Error::param(
                        field,
                        format!("batchsize {b} below threshold {t}"),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Utility of the player at position `k` under `profile`.
///
/// Without a threshold every player keeps the model value. With one, a zero
/// batchsize means exclusion and exactly zero utility; a positive batchsize
/// below the threshold also excludes the player but its cost is still paid.
pub fn utility(inst: &GameInstance, k: usize, profile: &StrategyProfile) -> f64 {
    let p = &inst.players()[k];
    let own = profile.get(k);
    let total = profile.others(k) + own;
    match inst.b_th() {
        Some(_) if own == 0.0 => 0.0,
        Some(t) if own < t => -p.unit_cost() * own,
        _ => shared_utility(p.theta(), p.unit_cost(), total, own),
    }
}

/// Equilibrium role of a participant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParticipantType {
    /// Contributes its whole dataset.
    Type1,
    /// Interior contributor; at most one per equilibrium.
    Type2,
    /// Free-rider (oblivious game) or threshold contributor (aware game).
    Type3,
    /// Excluded zero contributor (aware game).
    Type4,
    /// Taken out of the game to restore equilibrium existence.
    Removed,
}

/// Which structural characterisation the equilibrium satisfies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EquilibriumProperty {
    /// Critical player at `b_max`, `β_{c+1} < B < β_c`.
    P1,
    /// Critical player interior, `B = β_c`.
    P2,
    /// Critical player at `b_max`, next player excluded, `β_{c+1} − b_th < B < β_c`.
    P3,
    /// Critical player at `b_max`, next player at `b_th`, `β_{c+1} < B < β_c`.
    P4,
    /// Critical player at some `b_con ∈ [b_th, b_max]` with `B = β_c`.
    P5,
}

/// A solved game: the profile and how it decomposes.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumResult {
    pub profile: StrategyProfile,
    /// Id of the critical participant, absent when nobody exceeds the threshold.
    pub critical_index: Option<u32>,
    pub type_labels: Vec<ParticipantType>,
    /// Ids removed from the game, in ascending order.
    pub removed: Vec<u32>,
    /// Number of removal rounds.
    pub iterations: usize,
    pub total_utility: f64,
    pub property: Option<EquilibriumProperty>,
}

impl EquilibriumResult {
    pub fn global_batchsize(&self) -> f64 {
        self.profile.global_batchsize()
    }

    pub fn contributor_count(&self) -> usize {
        self.profile.contributor_count()
    }

    pub fn count_of(&self, ty: ParticipantType) -> usize {
        self.type_labels.iter().filter(|&&t| t == ty).count()
    }
}
