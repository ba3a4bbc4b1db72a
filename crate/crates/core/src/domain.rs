//! Shared vocabulary: strategies, agents, norms, observations and round logs.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::config::{AgentKind, SimulationConfig, StrategyRanges};
use crate::rng::RandomSource;

pub type AgentId = usize;

/// An individual or group norm: a numeric harvest cap for rule-based
/// societies, free text for LLM societies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    Cap(f64),
    Text(String),
}

impl Norm {
    pub fn cap(&self) -> Option<f64> {
        match self {
            Norm::Cap(g) => Some(*g),
            Norm::Text(_) => None,
        }
    }

    pub fn text(&self) -> Option<&str> {
        match self {
            Norm::Cap(_) => None,
            Norm::Text(t) => Some(t),
        }
    }
}

impl std::fmt::Display for Norm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Norm::Cap(g) => write!(f, "{g}"),
            Norm::Text(t) => f.write_str(t),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    pub effort: f64,
    /// Probability of sanctioning an observed violator.
    pub punish_propensity: f64,
    pub norm: Norm,
}

impl Strategy {
    pub fn norm_cap(&self) -> Option<f64> {
        self.norm.cap()
    }

    /// Clamp every numeric component into its legal domain.
    pub fn clamped(mut self) -> Self {
        self.effort = clamp_unit(self.effort);
        self.punish_propensity = clamp_unit(self.punish_propensity);
        if let Norm::Cap(g) = &mut self.norm {
            *g = if g.is_nan() { 0.0 } else { g.max(0.0) };
        }
        self
    }

    pub fn in_domain(&self) -> bool {
        (0.0..=1.0).contains(&self.effort)
            && (0.0..=1.0).contains(&self.punish_propensity)
            && self.norm.cap().is_none_or(|g| g >= 0.0)
    }
}

fn clamp_unit(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x.clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Disposition {
    Altruistic,
    Selfish,
}

/// One remembered round of an agent's own experience.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OwnOutcome {
    pub round: u32,
    pub harvest: f64,
    pub payoff_delta: f64,
    pub punished: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub id: AgentId,
    pub strategy: Strategy,
    pub wealth: f64,
    pub payoff_ema: f64,
    pub alive: bool,
    pub kind: AgentKind,
    /// `None` for agents drawn from the general ranges.
    pub disposition: Option<Disposition>,
    /// Effort actually applied in the most recent round.
    pub last_effort: Option<f64>,
    pub recent: VecDeque<OwnOutcome>,
}

impl AgentState {
    /// Effort as seen by the environment: zero once dead.
    pub fn effective_effort(&self) -> f64 {
        if self.alive {
            self.strategy.effort
        } else {
            0.0
        }
    }

    pub fn remember(&mut self, outcome: OwnOutcome, window: usize) {
        self.recent.push_back(outcome);
        while self.recent.len() > window {
            self.recent.pop_front();
        }
    }
}

/// Community-wide norm and the round it was adopted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupNorm {
    pub norm: Norm,
    pub adopted_round: u32,
}

/// Placeholder group norm for LLM societies before the first vote.
pub const NO_POLICY_YET: &str = "No policy yet";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeerSample {
    pub id: AgentId,
    pub effort: f64,
    pub payoff: f64,
}

/// Everything one agent may condition a decision on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub agent: AgentId,
    pub own_recent: Vec<OwnOutcome>,
    pub peer_samples: Vec<PeerSample>,
    pub own_norm: Norm,
    pub group_norm: GroupNorm,
    pub stock: f64,
}

/// Per-agent row of a round log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRecord {
    pub id: AgentId,
    pub effort: f64,
    pub harvest: f64,
    pub consumption: f64,
    pub wealth: f64,
    pub alive: bool,
    pub punished: bool,
    pub punisher: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub proposer: AgentId,
    pub norm: Norm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ballot {
    pub voter: AgentId,
    /// Index into the distinct-proposal list; `None` is an abstention.
    pub choice: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: u32,
    pub stock_before: f64,
    pub stock_post_harvest: f64,
    pub stock_after: f64,
    pub agents: Vec<AgentRecord>,
    pub punish_events: Vec<(AgentId, AgentId)>,
    pub starved: Vec<AgentId>,
    pub imitations: usize,
    pub proposals: Vec<Proposal>,
    pub ballots: Vec<Ballot>,
    pub group_norm: GroupNorm,
}

impl RoundLog {
    pub fn total_harvest(&self) -> f64 {
        self.agents.iter().map(|a| a.harvest).sum()
    }

    pub fn alive_count(&self) -> usize {
        self.agents.iter().filter(|a| a.alive).count()
    }
}

pub const ALTRUISTIC_NORMS: [&str; 8] = [
    "Fish only what you need to feed your family",
    "Preserve the lake for future generations",
    "Follow the community guidelines strictly",
    "Fish moderately to maintain the ecosystem",
    "Prioritize long-term sustainability over short-term gain",
    "Consider the needs of the entire community before fishing",
    "Leave enough fish for others and future generations",
    "Share the lake's resources fairly with all villagers",
];

pub const SELFISH_NORMS: [&str; 8] = [
    "Maximize your catch while the fish are abundant",
    "Take as much as you can before others do",
    "Your family's needs come first, fish as much as possible",
    "The lake is there to be used, take your maximum share",
    "Fish aggressively to ensure your own survival",
    "Get the most value from your fishing effort",
    "Compete to harvest more than others",
    "Focus on your immediate gains from the lake",
];

fn draw_strategy(ranges: &StrategyRanges, rng: &mut RandomSource) -> (f64, f64, f64) {
    let effort = rng.uniform(ranges.effort.low, ranges.effort.high);
    let norm_cap = rng.uniform(ranges.norm_cap.low, ranges.norm_cap.high);
    let propensity = rng.uniform(ranges.punish_propensity.low, ranges.punish_propensity.high);
    (effort, norm_cap, propensity)
}

/// Build the initial population.
///
/// The first `floor(composition * N)` agents are altruistic, the rest selfish.
/// Without a composition every agent draws from the general ranges. LLM agents
/// get a norm template drawn uniformly from their disposition's bank (both
/// banks when untyped); their effort and propensity are still drawn so the
/// record is complete, but their decisions come from the backend.
pub fn init_population(config: &SimulationConfig, rng: &mut RandomSource) -> Vec<AgentState> {
    let n = config.n_agents;
    let altruists = config
        .composition
        .map(|f| ((f * n as f64) + 1e-9).floor() as usize)
        .map(|k| k.min(n));

    (0..n)
        .map(|id| {
            let disposition = altruists.map(|k| {
                if id < k {
                    Disposition::Altruistic
                } else {
                    Disposition::Selfish
                }
            });
            let ranges = match disposition {
                None => &config.init_ranges.general,
                Some(Disposition::Altruistic) => &config.init_ranges.altruistic,
                Some(Disposition::Selfish) => &config.init_ranges.selfish,
            };
            let (effort, norm_cap, punish_propensity) = draw_strategy(ranges, rng);
            let norm = match config.agent_kind {
                AgentKind::RuleBased => Norm::Cap(norm_cap),
                AgentKind::Llm => {
                    let bank: Vec<&str> = match disposition {
                        Some(Disposition::Altruistic) => ALTRUISTIC_NORMS.to_vec(),
                        Some(Disposition::Selfish) => SELFISH_NORMS.to_vec(),
                        None => ALTRUISTIC_NORMS.iter().chain(SELFISH_NORMS.iter()).copied().collect(),
                    };
                    Norm::Text(bank[rng.index(bank.len())].to_string())
                }
            };
            AgentState {
                id,
                strategy: Strategy {
                    effort,
                    punish_propensity,
                    norm,
                }
                .clamped(),
                wealth: config.starting_wealth,
                payoff_ema: 0.0,
                alive: true,
                kind: config.agent_kind,
                disposition,
                last_effort: None,
                recent: VecDeque::new(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::UniformRange;

    #[test]
    fn all_altruists_respect_effort_range() {
        let cfg = SimulationConfig {
            composition: Some(1.0),
            ..SimulationConfig::default()
        };
        let pop = init_population(&cfg, &mut RandomSource::from_seed(9));
        assert_eq!(pop.len(), 10);
        for a in &pop {
            assert_eq!(a.disposition, Some(Disposition::Altruistic));
            assert!((0.2..=0.5).contains(&a.strategy.effort));
            assert!((4.0..=8.0).contains(&a.strategy.norm_cap().unwrap()));
            assert!((0.0..=0.1).contains(&a.strategy.punish_propensity));
            assert_eq!(a.wealth, cfg.starting_wealth);
            assert_eq!(a.payoff_ema, 0.0);
        }
    }

    #[test]
    fn zero_composition_has_no_altruists() {
        let cfg = SimulationConfig {
            composition: Some(0.0),
            ..SimulationConfig::default()
        };
        let pop = init_population(&cfg, &mut RandomSource::from_seed(1));
        assert!(pop.iter().all(|a| a.disposition == Some(Disposition::Selfish)));
    }

    #[test]
    fn composition_floors() {
        let cfg = SimulationConfig {
            composition: Some(0.55),
            ..SimulationConfig::default()
        };
        let pop = init_population(&cfg, &mut RandomSource::from_seed(1));
        let k = pop.iter().filter(|a| a.disposition == Some(Disposition::Altruistic)).count();
        assert_eq!(k, 5);
    }

    #[test]
    fn same_seed_same_population() {
        let cfg = SimulationConfig::default();
        let a = init_population(&cfg, &mut RandomSource::from_seed(42));
        let b = init_population(&cfg, &mut RandomSource::from_seed(42));
        assert_eq!(a, b);
    }

    #[test]
    fn llm_agents_get_templates_from_their_bank() {
        let cfg = SimulationConfig {
            composition: Some(0.5),
            ..SimulationConfig::llm_default()
        };
        let pop = init_population(&cfg, &mut RandomSource::from_seed(5));
        for a in &pop {
            let text = a.strategy.norm.text().expect("llm agents carry text norms");
            match a.disposition.unwrap() {
                Disposition::Altruistic => assert!(ALTRUISTIC_NORMS.contains(&text)),
                Disposition::Selfish => assert!(SELFISH_NORMS.contains(&text)),
            }
        }
    }

    #[test]
    fn degenerate_range_is_exact() {
        let mut cfg = SimulationConfig::default();
        cfg.init_ranges.general.effort = UniformRange::new(0.3, 0.3);
        let pop = init_population(&cfg, &mut RandomSource::from_seed(2));
        assert!(pop.iter().all(|a| a.strategy.effort == 0.3));
    }

    #[test]
    fn clamping_restores_domain() {
        let s = Strategy {
            effort: 1.3,
            punish_propensity: -0.2,
            norm: Norm::Cap(-4.0),
        }
        .clamped();
        assert_eq!((s.effort, s.punish_propensity, s.norm_cap()), (1.0, 0.0, Some(0.0)));
        assert!(s.in_domain());
    }
}
