//! Sanctions, mortality and collective norm resolution.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::SimulationConfig;
use crate::domain::{AgentId, AgentState, Ballot, GroupNorm, Norm};
use crate::error::{Error, Result};

/// Who punished whom in one round.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PunishmentOutcome {
    pub events: Vec<(AgentId, AgentId)>,
    pub punished: Vec<bool>,
    pub punisher: Vec<bool>,
}

impl PunishmentOutcome {
    pub fn from_events(n_agents: usize, events: Vec<(AgentId, AgentId)>) -> Self {
        let mut punished = vec![false; n_agents];
        let mut punisher = vec![false; n_agents];
        for &(by, target) in &events {
            punisher[by] = true;
            punished[target] = true;
        }
        Self {
            events,
            punished,
            punisher,
        }
    }

    pub fn none(n_agents: usize) -> Self {
        Self::from_events(n_agents, Vec::new())
    }

    fn count_initiated(&self, id: AgentId) -> usize {
        self.events.iter().filter(|(by, _)| *by == id).count()
    }

    fn count_received(&self, id: AgentId) -> usize {
        self.events.iter().filter(|(_, target)| *target == id).count()
    }
}

/// Net round gain `h − c − γ·(#initiated) − β·(#received)` for one agent.
pub fn round_gain(harvest: f64, outcome: &PunishmentOutcome, id: AgentId, consumption: f64, penalty: f64, punish_cost: f64) -> f64 {
    harvest
        - consumption
        - punish_cost * outcome.count_initiated(id) as f64
        - penalty * outcome.count_received(id) as f64
}

/// Credit each living agent its net gain, then remove the starved.
///
/// Returns the per-agent gains (zero for agents already dead) and the ids of
/// agents whose wealth went negative this round.
pub fn apply_payoffs(
    agents: &mut [AgentState],
    harvests: &[f64],
    outcome: &PunishmentOutcome,
    consumption: f64,
    penalty: f64,
    punish_cost: f64,
) -> (Vec<f64>, Vec<AgentId>) {
    let mut gains = vec![0.0; agents.len()];
    let mut starved = Vec::new();
    for agent in agents.iter_mut().filter(|a| a.alive) {
        let gain = round_gain(harvests[agent.id], outcome, agent.id, consumption, penalty, punish_cost);
        agent.wealth += gain;
        gains[agent.id] = gain;
        if agent.wealth < 0.0 {
            agent.alive = false;
            starved.push(agent.id);
        }
    }
    (gains, starved)
}

/// Median-voter rule; the midpoint of the two middle values for even counts.
pub fn resolve_group_norm_median(proposals: &[f64]) -> Result<f64> {
    if proposals.is_empty() {
        return Err(Error::EmptyProposals);
    }
    let mut sorted = proposals.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    Ok(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    })
}

/// Distinct proposal texts in first-proposed order, each with its lowest
/// proposer id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistinctProposal {
    pub text: String,
    pub proposer: AgentId,
}

pub fn distinct_proposals(proposals: &[(AgentId, String)]) -> Vec<DistinctProposal> {
    let mut out: Vec<DistinctProposal> = Vec::new();
    for (proposer, text) in proposals {
        match out.iter_mut().find(|p| &p.text == text) {
            Some(existing) => existing.proposer = existing.proposer.min(*proposer),
            None => out.push(DistinctProposal {
                text: text.clone(),
                proposer: *proposer,
            }),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteTally {
    pub proposals: Vec<DistinctProposal>,
    pub ballots: Vec<Ballot>,
    pub counts: Vec<usize>,
    /// `None` when every ballot abstained and the incumbent is retained.
    pub winner: Option<usize>,
}

/// Plurality over distinct proposals; ties go to the lowest proposer id.
/// When no ballot names a proposal the incumbent norm stays in force.
pub fn resolve_group_norm_vote(
    proposals: Vec<DistinctProposal>,
    ballots: Vec<Ballot>,
    incumbent: &GroupNorm,
    round: u32,
) -> (GroupNorm, VoteTally) {
    let mut counts = vec![0usize; proposals.len()];
    for idx in ballots.iter().filter_map(|b| b.choice) {
        if let Some(c) = counts.get_mut(idx) {
            *c += 1;
        }
    }
    let winner = counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .max_by(|(i, ci), (j, cj)| ci.cmp(cj).then(proposals[*j].proposer.cmp(&proposals[*i].proposer)))
        .map(|(i, _)| i);

    let norm = match winner {
        Some(i) => GroupNorm {
            norm: Norm::Text(proposals[i].text.clone()),
            adopted_round: round,
        },
        None => {
            tracing::warn!(round, "no valid ballots; keeping incumbent group norm");
            incumbent.clone()
        }
    };
    (
        norm,
        VoteTally {
            proposals,
            ballots,
            counts,
            winner,
        },
    )
}

/// Whether sanctions are active in `round` (0-based).
pub fn punishment_enabled(round: u32, config: &SimulationConfig) -> bool {
    config.ablation.punishment && config.shock_round.is_none_or(|t| round < t)
}

/// Median of the living agents' caps.
pub fn initial_numeric_norm(agents: &[AgentState]) -> Result<f64> {
    let caps: Vec<f64> = agents.iter().filter_map(crate::rule_agents::propose_cap).collect();
    resolve_group_norm_median(&caps)
}

/// Per-proposal vote counts keyed by text, for reporting.
pub fn tally_by_text(tally: &VoteTally) -> BTreeMap<String, usize> {
    tally
        .proposals
        .iter()
        .zip(&tally.counts)
        .map(|(p, &c)| (p.text.clone(), c))
        .collect()
}
