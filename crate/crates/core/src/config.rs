//! Simulation configuration.
//!
//! Every field has a default, so a JSON config only needs the keys it changes.
//! Unknown keys are rejected. [`SimulationConfig::validate`] reports the first
//! offending field by name.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{invalid, Error, Result};
use crate::llm::HttpSettings;

/// Closed uniform interval used to draw an initial strategy component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniformRange {
    pub low: f64,
    pub high: f64,
}

impl UniformRange {
    pub const fn new(low: f64, high: f64) -> Self {
        Self { low, high }
    }

    fn within(&self, lo: f64, hi: f64) -> bool {
        self.low.is_finite() && self.high.is_finite() && lo <= self.low && self.low <= self.high && self.high <= hi
    }
}

/// Initial strategy ranges for one agent type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyRanges {
    pub effort: UniformRange,
    pub norm_cap: UniformRange,
    pub punish_propensity: UniformRange,
}

/// Initial ranges for untyped ("general") agents and for the two dispositions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitRanges {
    pub general: StrategyRanges,
    pub altruistic: StrategyRanges,
    pub selfish: StrategyRanges,
}

impl Default for InitRanges {
    fn default() -> Self {
        Self {
            general: StrategyRanges {
                effort: UniformRange::new(0.0, 1.0),
                norm_cap: UniformRange::new(2.0, 8.0),
                punish_propensity: UniformRange::new(0.0, 1.0),
            },
            altruistic: StrategyRanges {
                effort: UniformRange::new(0.2, 0.5),
                norm_cap: UniformRange::new(4.0, 8.0),
                punish_propensity: UniformRange::new(0.0, 0.1),
            },
            selfish: StrategyRanges {
                effort: UniformRange::new(0.7, 1.0),
                norm_cap: UniformRange::new(10.0, 14.0),
                punish_propensity: UniformRange::new(0.4, 0.5),
            },
        }
    }
}

/// Which alignment channels are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationFlags {
    pub social_learning: bool,
    pub group_decision: bool,
    pub punishment: bool,
}

impl Default for AblationFlags {
    fn default() -> Self {
        Self {
            social_learning: true,
            group_decision: true,
            punishment: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    RuleBased,
    Llm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rationing {
    /// Scale all catches by `R / Σh` when demand exceeds the stock.
    Proportional,
    /// Keep nominal catches; only the post-harvest stock is floored at zero.
    Unrationed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub n_agents: usize,
    pub carrying_capacity: f64,
    /// Stock at round 0; `None` starts at carrying capacity.
    pub initial_stock: Option<f64>,
    pub growth_rate: f64,
    pub productivity: f64,
    pub consumption: f64,
    pub penalty: f64,
    pub punish_cost: f64,
    pub selection_strength: f64,
    pub mutation_sd: f64,
    pub social_learning_rate: f64,
    pub payoff_ema_weight: f64,
    pub collapse_threshold: f64,
    pub max_rounds: u32,
    pub shock_round: Option<u32>,
    pub ablation: AblationFlags,
    pub seed: u64,
    /// Fraction of altruistic agents. `None` draws every agent from the general ranges.
    pub composition: Option<f64>,
    pub init_ranges: InitRanges,
    pub starting_wealth: f64,
    pub agent_kind: AgentKind,
    pub observation_window: usize,
    pub peer_sample_size: usize,
    pub rationing: Rationing,
    /// Cap the strategy effort so the intended catch stays within the agent's own norm.
    pub cap_effort_by_norm: bool,
    /// Separate inspection probability. `None` folds monitoring into `punish_propensity`.
    pub monitor_probability: Option<f64>,
    /// Keep simulating after the first collapse event (survival time is unaffected).
    pub continue_past_collapse: bool,
    /// Re-prompts allowed after an unparseable LLM reply.
    pub llm_retries: u32,
    /// Chat endpoint used when the runner selects the remote backend.
    pub llm: HttpSettings,
    pub embedding_dim: usize,
    /// Remote `/embeddings` service for norm similarity; `None` uses feature hashing.
    pub remote_embedder: Option<HttpSettings>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            n_agents: 10,
            carrying_capacity: 300.0,
            initial_stock: None,
            growth_rate: 0.6,
            productivity: 0.05,
            consumption: 1.0,
            penalty: 10.0,
            punish_cost: 0.0,
            selection_strength: 5.0,
            mutation_sd: 0.1,
            social_learning_rate: 0.1,
            payoff_ema_weight: 0.3,
            collapse_threshold: 15.0,
            max_rounds: 100,
            shock_round: None,
            ablation: AblationFlags::default(),
            seed: 0,
            composition: None,
            init_ranges: InitRanges::default(),
            starting_wealth: 10.0,
            agent_kind: AgentKind::RuleBased,
            observation_window: 3,
            peer_sample_size: 5,
            rationing: Rationing::Proportional,
            cap_effort_by_norm: true,
            monitor_probability: None,
            continue_past_collapse: false,
            llm_retries: 1,
            llm: HttpSettings::default(),
            embedding_dim: 256,
            remote_embedder: None,
        }
    }
}

/// Short symbol aliases accepted by [`SimulationConfig::apply_override`].
const ALIASES: &[(&str, &str)] = &[
    ("N", "n_agents"),
    ("K", "carrying_capacity"),
    ("r", "growth_rate"),
    ("alpha", "productivity"),
    ("c", "consumption"),
    ("beta", "penalty"),
    ("gamma", "punish_cost"),
    ("delta", "selection_strength"),
    ("sigma", "mutation_sd"),
    ("R_min", "collapse_threshold"),
    ("T_max", "max_rounds"),
    ("t_shock", "shock_round"),
];

impl SimulationConfig {
    /// Defaults for an LLM society: 50-round cap.
    pub fn llm_default() -> Self {
        Self {
            agent_kind: AgentKind::Llm,
            max_rounds: 50,
            ..Self::default()
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn initial_stock(&self) -> f64 {
        self.initial_stock.unwrap_or(self.carrying_capacity)
    }

    /// Set one field from a `key=value` style override. `key` is a snake_case
    /// field name, a dotted path (`ablation.punishment`), or a symbol alias
    /// (`beta`). `value` is parsed as JSON, falling back to a bare string.
    pub fn apply_override(&mut self, key: &str, value: &str) -> Result<()> {
        let key = ALIASES
            .iter()
            .find(|(alias, _)| *alias == key)
            .map_or(key, |(_, field)| field);
        let parsed: Value = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));

        let mut doc = serde_json::to_value(&*self)?;
        let mut slot = &mut doc;
        for part in key.split('.') {
            slot = slot
                .as_object_mut()
                .and_then(|obj| obj.get_mut(part))
                .ok_or_else(|| Error::ConfigParse(format!("unknown config key `{key}`")))?;
        }
        *slot = parsed;
        *self = serde_json::from_value(doc).map_err(|e| Error::ConfigParse(format!("override `{key}`: {e}")))?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |field: &'static str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(invalid(field, "must be finite"))
            }
        };
        for (field, v) in [
            ("carrying_capacity", self.carrying_capacity),
            ("growth_rate", self.growth_rate),
            ("productivity", self.productivity),
            ("consumption", self.consumption),
            ("penalty", self.penalty),
            ("punish_cost", self.punish_cost),
            ("selection_strength", self.selection_strength),
            ("mutation_sd", self.mutation_sd),
            ("social_learning_rate", self.social_learning_rate),
            ("payoff_ema_weight", self.payoff_ema_weight),
            ("collapse_threshold", self.collapse_threshold),
            ("starting_wealth", self.starting_wealth),
        ] {
            finite(field, v)?;
        }

        if self.n_agents == 0 {
            return Err(invalid("n_agents", "must be at least 1"));
        }
        if self.carrying_capacity <= 0.0 {
            return Err(invalid("carrying_capacity", "must be > 0"));
        }
        if self.growth_rate < 0.0 {
            return Err(invalid("growth_rate", "must be >= 0"));
        }
        if self.productivity <= 0.0 {
            return Err(invalid("productivity", "must be > 0"));
        }
        if self.consumption <= 0.0 {
            return Err(invalid("consumption", "must be > 0"));
        }
        if self.penalty < 0.0 {
            return Err(invalid("penalty", "must be >= 0"));
        }
        if self.punish_cost < 0.0 {
            return Err(invalid("punish_cost", "must be >= 0"));
        }
        if self.selection_strength <= 0.0 {
            return Err(invalid("selection_strength", "must be > 0"));
        }
        if self.mutation_sd < 0.0 {
            return Err(invalid("mutation_sd", "must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.social_learning_rate) {
            return Err(invalid("social_learning_rate", "must lie in [0, 1]"));
        }
        if !(self.payoff_ema_weight > 0.0 && self.payoff_ema_weight <= 1.0) {
            return Err(invalid("payoff_ema_weight", "must lie in (0, 1]"));
        }
        if !(0.0 <= self.collapse_threshold && self.collapse_threshold < self.carrying_capacity) {
            return Err(invalid("collapse_threshold", "must satisfy 0 <= R_min < K"));
        }
        if let Some(r0) = self.initial_stock {
            if !(r0.is_finite() && 0.0 <= r0 && r0 <= self.carrying_capacity) {
                return Err(invalid("initial_stock", "must lie in [0, K]"));
            }
        }
        if self.max_rounds == 0 {
            return Err(invalid("max_rounds", "must be at least 1"));
        }
        if let Some(f) = self.composition {
            if !(0.0..=1.0).contains(&f) {
                return Err(invalid("composition", "must lie in [0, 1]"));
            }
        }
        if let Some(m) = self.monitor_probability {
            if !(0.0..=1.0).contains(&m) {
                return Err(invalid("monitor_probability", "must lie in [0, 1]"));
            }
        }
        if self.starting_wealth < 0.0 {
            return Err(invalid("starting_wealth", "must be >= 0"));
        }
        if self.embedding_dim < 2 {
            return Err(invalid("embedding_dim", "must be at least 2"));
        }
        for ranges in [
            &self.init_ranges.general,
            &self.init_ranges.altruistic,
            &self.init_ranges.selfish,
        ] {
            if !ranges.effort.within(0.0, 1.0) {
                return Err(invalid("init_ranges", "effort range must lie inside [0, 1]"));
            }
            if !ranges.punish_propensity.within(0.0, 1.0) {
                return Err(invalid("init_ranges", "punish propensity range must lie inside [0, 1]"));
            }
            if !ranges.norm_cap.within(0.0, f64::MAX) {
                return Err(invalid("init_ranges", "norm cap range must be non-negative"));
            }
        }
        for (field, http) in std::iter::once(("llm", &self.llm)).chain(self.remote_embedder.iter().map(|h| ("remote_embedder", h))) {
            if http.endpoint.trim().is_empty() || http.model.trim().is_empty() {
                return Err(invalid(field, "endpoint and model must be non-empty"));
            }
            if !(http.timeout_secs.is_finite() && http.timeout_secs > 0.0) {
                return Err(invalid(field, "timeout_secs must be a positive number"));
            }
            if http.temperature.is_some_and(|t| !(0.0..=2.0).contains(&t)) {
                return Err(invalid(field, "temperature must lie in [0, 2]"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        SimulationConfig::default().validate().unwrap();
        SimulationConfig::llm_default().validate().unwrap();
    }

    #[test]
    fn unknown_key_rejected() {
        let err = SimulationConfig::from_json_str(r#"{"n_agents": 5, "bogus": 1}"#).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn partial_json_keeps_defaults() {
        let cfg = SimulationConfig::from_json_str(r#"{"penalty": 14, "ablation": {"punishment": false}}"#).unwrap();
        assert_eq!(cfg.penalty, 14.0);
        assert!(!cfg.ablation.punishment);
        assert!(cfg.ablation.social_learning);
        assert_eq!(cfg.carrying_capacity, 300.0);
    }

    #[test]
    fn override_by_alias_and_path() {
        let mut cfg = SimulationConfig::default();
        cfg.apply_override("beta", "14").unwrap();
        cfg.apply_override("ablation.group_decision", "false").unwrap();
        cfg.apply_override("agent_kind", "llm").unwrap();
        cfg.apply_override("t_shock", "15").unwrap();
        assert_eq!(cfg.penalty, 14.0);
        assert!(!cfg.ablation.group_decision);
        assert_eq!(cfg.agent_kind, AgentKind::Llm);
        assert_eq!(cfg.shock_round, Some(15));
        assert!(cfg.apply_override("nope", "1").is_err());
        assert!(cfg.apply_override("penalty", "\"abc\"").is_err());
    }

    #[test]
    fn named_field_errors() {
        let cases: Vec<(&str, Box<dyn Fn(&mut SimulationConfig)>)> = vec![
            ("carrying_capacity", Box::new(|c| c.carrying_capacity = 0.0)),
            ("growth_rate", Box::new(|c| c.growth_rate = -0.1)),
            ("productivity", Box::new(|c| c.productivity = 0.0)),
            ("consumption", Box::new(|c| c.consumption = 0.0)),
            ("penalty", Box::new(|c| c.penalty = -1.0)),
            ("punish_cost", Box::new(|c| c.punish_cost = -1.0)),
            ("selection_strength", Box::new(|c| c.selection_strength = 0.0)),
            ("mutation_sd", Box::new(|c| c.mutation_sd = -0.5)),
            ("composition", Box::new(|c| c.composition = Some(1.5))),
            ("collapse_threshold", Box::new(|c| c.collapse_threshold = 300.0)),
            ("init_ranges", Box::new(|c| c.init_ranges.selfish.effort.high = 1.2)),
            ("init_ranges", Box::new(|c| c.init_ranges.general.norm_cap.low = -1.0)),
            ("llm", Box::new(|c| c.llm.timeout_secs = 0.0)),
            ("llm", Box::new(|c| c.llm.temperature = Some(3.0))),
            (
                "remote_embedder",
                Box::new(|c| {
                    c.remote_embedder = Some(HttpSettings {
                        endpoint: " ".into(),
                        ..HttpSettings::default()
                    })
                }),
            ),
        ];
        for (field, mutate) in cases {
            let mut cfg = SimulationConfig::default();
            mutate(&mut cfg);
            match cfg.validate() {
                Err(Error::InvalidConfig { field: f, .. }) => assert_eq!(f, field),
                other => panic!("expected error on {field}, got {other:?}"),
            }
        }
    }
}
