//! Rule-based policies: capped effort, peer inspection, payoff-biased
//! imitation with mutation, and numeric cap proposals.

use serde::{Deserialize, Serialize};

use crate::config::SimulationConfig;
use crate::domain::{AgentId, AgentState, Norm, Strategy};
use crate::rng::RandomSource;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImitationEvent {
    pub learner: AgentId,
    pub model: AgentId,
    pub adopted: Strategy,
    pub acceptance_prob: f64,
}

/// Strategy effort, reduced so the intended catch `α·e·R` stays within the
/// agent's own cap. Dead agents exert nothing.
pub fn decide_effort(agent: &AgentState, productivity: f64, stock: f64, cap_by_norm: bool) -> f64 {
    if !agent.alive {
        return 0.0;
    }
    let effort = agent.strategy.effort;
    let scale = productivity * stock;
    match agent.strategy.norm_cap() {
        Some(cap) if cap_by_norm && scale > 0.0 => effort.min(cap / scale),
        _ => effort,
    }
}

/// Sample one living peer uniformly and sanction it if it out-harvested the
/// group cap. `peers` must already exclude the agent itself and the dead.
///
/// With `monitor_probability = None` the single propensity gates inspection;
/// otherwise inspection and punishment are two independent draws.
pub fn select_punish_target(
    agent: &AgentState,
    peers: &[(AgentId, f64)],
    group_cap: f64,
    monitor_probability: Option<f64>,
    rng: &mut RandomSource,
) -> Option<AgentId> {
    if !agent.alive || peers.is_empty() {
        return None;
    }
    let (peer, harvest) = peers[rng.index(peers.len())];
    let inspect = match monitor_probability {
        None => agent.strategy.punish_propensity,
        Some(m) => m,
    };
    if !rng.bernoulli(inspect) || harvest <= group_cap {
        return None;
    }
    if monitor_probability.is_some() && !rng.bernoulli(agent.strategy.punish_propensity) {
        return None;
    }
    Some(peer)
}

/// Pairwise-logit (Fermi) acceptance probability of copying the model.
pub fn imitation_probability(payoff_model: f64, payoff_self: f64, selection_strength: f64) -> f64 {
    1.0 / (1.0 + (-selection_strength * (payoff_model - payoff_self)).exp())
}

pub fn update_payoff_ema(prev_ema: f64, round_gain: f64, weight: f64) -> f64 {
    weight * round_gain + (1.0 - weight) * prev_ema
}

/// The agent's proposal for next round's group cap: its current belief.
pub fn propose_cap(agent: &AgentState) -> Option<f64> {
    if agent.alive {
        agent.strategy.norm_cap()
    } else {
        None
    }
}

fn mutate(model: &Strategy, sd: f64, rng: &mut RandomSource) -> Strategy {
    let effort = model.effort + rng.gaussian(sd);
    let punish_propensity = model.punish_propensity + rng.gaussian(sd);
    let norm = match &model.norm {
        Norm::Cap(g) => Norm::Cap(g + rng.gaussian(sd)),
        Norm::Text(t) => Norm::Text(t.clone()),
    };
    Strategy {
        effort,
        punish_propensity,
        norm,
    }
    .clamped()
}

/// Decide every imitation against the pre-step snapshot, then apply them all.
pub fn social_learning_step(
    agents: &mut [AgentState],
    config: &SimulationConfig,
    rng: &mut RandomSource,
) -> Vec<ImitationEvent> {
    let events = plan_imitations(agents, config, rng);
    for ev in &events {
        agents[ev.learner].strategy = ev.adopted.clone();
    }
    events
}

/// Decision half of [`social_learning_step`]; reads `agents` only.
pub fn plan_imitations(agents: &[AgentState], config: &SimulationConfig, rng: &mut RandomSource) -> Vec<ImitationEvent> {
    let living: Vec<AgentId> = agents.iter().filter(|a| a.alive).map(|a| a.id).collect();
    let mut events = Vec::new();
    for &learner in &living {
        if !rng.bernoulli(config.social_learning_rate) {
            continue;
        }
        let others: Vec<AgentId> = living.iter().copied().filter(|&k| k != learner).collect();
        if others.is_empty() {
            continue;
        }
        let model = others[rng.index(others.len())];
        let p = imitation_probability(
            agents[model].payoff_ema,
            agents[learner].payoff_ema,
            config.selection_strength,
        );
        if rng.bernoulli(p) {
            events.push(ImitationEvent {
                learner,
                model,
                adopted: mutate(&agents[model].strategy, config.mutation_sd, rng),
                acceptance_prob: p,
            });
        }
    }
    events
}
