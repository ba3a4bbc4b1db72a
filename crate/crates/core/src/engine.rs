//! Round orchestration, trial termination, repeated trials and sweeps.
//!
//! Phase order within a round is fixed: harvest and consumption, punishment,
//! payoff and mortality, social learning, group decision, then regrowth.

use std::collections::BTreeMap;
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::{AgentKind, SimulationConfig};
use crate::domain::{
    init_population, AgentId, AgentRecord, AgentState, Ballot, GroupNorm, Norm, Observation, OwnOutcome, PeerSample,
    Proposal, RoundLog, NO_POLICY_YET,
};
use crate::environment::{compute_harvests, msy_harvest, regenerate};
use crate::error::{Error, Result};
use crate::governance::{
    apply_payoffs, distinct_proposals, initial_numeric_norm, punishment_enabled, resolve_group_norm_median,
    resolve_group_norm_vote, PunishmentOutcome,
};
use crate::llm::{
    agent_round_calls, ask, match_vote, parse_effort, parse_norm_update, parse_punish, render_prompt, GenerationBackend,
    PromptKind,
};
use crate::metrics::{efficiency_series, norm_similarities, survival_time, Embedder, HashingEmbedder, HttpEmbedder, Survival};
use crate::rng::{derive_trial_rng, RandomSource};
use crate::rule_agents::{decide_effort, propose_cap, select_punish_target, social_learning_step, update_payoff_ema};
use crate::stats::{summarize_lenient, Summary};

/// Backend calls made, by prompt kind.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallCounts {
    pub effort: u64,
    pub punish: u64,
    pub norm_update: u64,
    pub vote: u64,
}

impl CallCounts {
    pub fn add(&mut self, kind: PromptKind, n: u32) {
        let slot = match kind {
            PromptKind::Effort => &mut self.effort,
            PromptKind::Punish => &mut self.punish,
            PromptKind::NormUpdate => &mut self.norm_update,
            PromptKind::Vote => &mut self.vote,
        };
        *slot += u64::from(n);
    }

    pub fn total(&self) -> u64 {
        self.effort + self.punish + self.norm_update + self.vote
    }

    pub fn get(&self, kind: PromptKind) -> u64 {
        match kind {
            PromptKind::Effort => self.effort,
            PromptKind::Punish => self.punish,
            PromptKind::NormUpdate => self.norm_update,
            PromptKind::Vote => self.vote,
        }
    }
}

/// Mutable state of one trial.
pub struct Society {
    pub config: SimulationConfig,
    pub agents: Vec<AgentState>,
    pub stock: f64,
    pub group_norm: GroupNorm,
    pub round: u32,
    pub rng: RandomSource,
    pub calls: CallCounts,
}

impl Society {
    pub fn new(config: SimulationConfig, mut rng: RandomSource) -> Result<Self> {
        config.validate()?;
        let agents = init_population(&config, &mut rng);
        let norm = match config.agent_kind {
            AgentKind::RuleBased => Norm::Cap(initial_numeric_norm(&agents)?),
            AgentKind::Llm => Norm::Text(NO_POLICY_YET.to_string()),
        };
        Ok(Self {
            stock: config.initial_stock(),
            agents,
            group_norm: GroupNorm {
                norm,
                adopted_round: 0,
            },
            round: 0,
            rng,
            calls: CallCounts::default(),
            config,
        })
    }

    pub fn living(&self) -> Vec<AgentId> {
        self.agents.iter().filter(|a| a.alive).map(|a| a.id).collect()
    }

    fn observe(&mut self, agent: AgentId, stock: f64) -> Observation {
        let others: Vec<AgentId> = self.living().into_iter().filter(|&k| k != agent).collect();
        let sampled = self.rng.sample_without_replacement(&others, self.config.peer_sample_size);
        let mut peer_samples: Vec<PeerSample> = sampled
            .into_iter()
            .map(|k| {
                let a = &self.agents[k];
                PeerSample {
                    id: k,
                    effort: a.last_effort.unwrap_or(a.strategy.effort),
                    payoff: a.wealth,
                }
            })
            .collect();
        peer_samples.sort_by_key(|p| p.id);
        let me = &self.agents[agent];
        Observation {
            agent,
            own_recent: me.recent.iter().copied().collect(),
            peer_samples,
            own_norm: me.strategy.norm.clone(),
            group_norm: self.group_norm.clone(),
            stock,
        }
    }

    /// Render one prompt per listed agent (drawing peer samples in id order),
    /// issue them concurrently, and return parses in id order.
    fn ask_all<T: Send>(
        &mut self,
        backend: &dyn GenerationBackend,
        ids: &[AgentId],
        kind: PromptKind,
        stock: f64,
        proposals: Option<&[String]>,
        parse: impl Fn(AgentId, &str) -> crate::llm::Parsed<T> + Sync,
    ) -> Result<Vec<(AgentId, crate::llm::Parsed<T>)>> {
        let mut prompts = Vec::with_capacity(ids.len());
        for &id in ids {
            let obs = self.observe(id, stock);
            prompts.push((id, render_prompt(kind, &obs, &self.config, proposals)?));
        }
        let (round, retries) = (self.round, self.config.llm_retries);
        let replies: Vec<Result<_>> = prompts
            .par_iter()
            .map(|(id, prompt)| ask(backend, *id, round, kind, prompt, retries, |r| parse(*id, r)).map(|(p, n)| (*id, p, n)))
            .collect();
        let mut out = Vec::with_capacity(replies.len());
        for r in replies {
            let (id, parsed, n) = r?;
            self.calls.add(kind, n);
            out.push((id, parsed));
        }
        Ok(out)
    }

    /// Advance one round and return its log.
    pub fn run_round(&mut self, backend: Option<&dyn GenerationBackend>) -> Result<RoundLog> {
        let cfg = self.config.clone();
        let round = self.round;
        let n = self.agents.len();
        let stock_before = self.stock;
        let alive_at_start: Vec<bool> = self.agents.iter().map(|a| a.alive).collect();
        let llm = match cfg.agent_kind {
            AgentKind::RuleBased => None,
            AgentKind::Llm => Some(backend.ok_or(Error::MissingBackend)?),
        };

        // Harvest and consumption.
        let efforts: Vec<f64> = match llm {
            None => self
                .agents
                .iter()
                .map(|a| decide_effort(a, cfg.productivity, stock_before, cfg.cap_effort_by_norm))
                .collect(),
            Some(backend) => {
                let living = self.living();
                let replies = self.ask_all(backend, &living, PromptKind::Effort, stock_before, None, |_, r| parse_effort(r))?;
                let mut efforts = vec![0.0; n];
                for (id, parsed) in replies {
                    let agent = &mut self.agents[id];
                    let e = parsed.value.unwrap_or_else(|| agent.last_effort.unwrap_or(0.5));
                    agent.strategy.effort = e;
                    efforts[id] = e;
                }
                efforts
            }
        };
        for (agent, &e) in self.agents.iter_mut().zip(&efforts) {
            if agent.alive {
                agent.last_effort = Some(e);
            }
        }
        let catch = compute_harvests(&efforts, cfg.productivity, stock_before, cfg.rationing)?;

        // Punishment.
        let mut events = Vec::new();
        if punishment_enabled(round, &cfg) {
            match llm {
                None => {
                    let group_cap = self.group_norm.norm.cap().unwrap_or(f64::INFINITY);
                    let living = self.living();
                    for &i in &living {
                        let peers: Vec<(AgentId, f64)> =
                            living.iter().filter(|&&j| j != i).map(|&j| (j, catch.harvests[j])).collect();
                        if let Some(target) =
                            select_punish_target(&self.agents[i], &peers, group_cap, cfg.monitor_probability, &mut self.rng)
                        {
                            events.push((i, target));
                        }
                    }
                }
                Some(backend) => {
                    let living = self.living();
                    let replies = self.ask_all(backend, &living, PromptKind::Punish, catch.stock_post, None, |id, r| {
                        let targets: Vec<AgentId> = living.iter().copied().filter(|&k| k != id).collect();
                        parse_punish(r, &targets)
                    })?;
                    events.extend(replies.into_iter().filter_map(|(id, p)| p.value.flatten().map(|t| (id, t))));
                }
            }
        }
        let outcome = PunishmentOutcome::from_events(n, events);

        // Payoffs and mortality.
        let (gains, starved) =
            apply_payoffs(&mut self.agents, &catch.harvests, &outcome, cfg.consumption, cfg.penalty, cfg.punish_cost);
        for agent in self.agents.iter_mut().filter(|a| alive_at_start[a.id]) {
            agent.payoff_ema = update_payoff_ema(agent.payoff_ema, gains[agent.id], cfg.payoff_ema_weight);
            agent.remember(
                OwnOutcome {
                    round,
                    harvest: catch.harvests[agent.id],
                    payoff_delta: gains[agent.id],
                    punished: outcome.punished[agent.id],
                },
                cfg.observation_window,
            );
        }

        // Social learning. LLM agents adapt in-context instead (via the norm update below).
        let mut imitations = 0;
        if cfg.ablation.social_learning && llm.is_none() {
            imitations = social_learning_step(&mut self.agents, &cfg, &mut self.rng).len();
        }

        // Group decision.
        let mut proposals = Vec::new();
        let mut ballots = Vec::new();
        match llm {
            None => {
                if cfg.ablation.group_decision {
                    let caps: Vec<(AgentId, f64)> =
                        self.agents.iter().filter_map(|a| propose_cap(a).map(|g| (a.id, g))).collect();
                    if !caps.is_empty() {
                        let values: Vec<f64> = caps.iter().map(|c| c.1).collect();
                        self.group_norm = GroupNorm {
                            norm: Norm::Cap(resolve_group_norm_median(&values)?),
                            adopted_round: round + 1,
                        };
                        proposals = caps
                            .into_iter()
                            .map(|(proposer, g)| Proposal {
                                proposer,
                                norm: Norm::Cap(g),
                            })
                            .collect();
                    }
                }
            }
            Some(backend) => {
                let plan = agent_round_calls(false, cfg.ablation.social_learning, cfg.ablation.group_decision);
                let living = self.living();
                if plan.norm_update > 0 && !living.is_empty() {
                    let stock_now = catch.stock_post;
                    let replies =
                        self.ask_all(backend, &living, PromptKind::NormUpdate, stock_now, None, |_, r| parse_norm_update(r))?;
                    let mut texts = Vec::new();
                    for (id, parsed) in replies {
                        let Some(update) = parsed.value else { continue };
                        if cfg.ablation.social_learning {
                            self.agents[id].strategy.norm = Norm::Text(update.personal);
                        }
                        texts.push((id, update.community));
                    }
                    proposals = texts
                        .iter()
                        .map(|(proposer, t)| Proposal {
                            proposer: *proposer,
                            norm: Norm::Text(t.clone()),
                        })
                        .collect();

                    if plan.vote > 0 && !texts.is_empty() {
                        let distinct = distinct_proposals(&texts);
                        let listed: Vec<String> = distinct.iter().map(|p| p.text.clone()).collect();
                        let replies = self.ask_all(backend, &living, PromptKind::Vote, stock_now, Some(&listed), |_, r| {
                            match_vote(r, &listed)
                        })?;
                        let cast: Vec<Ballot> = replies
                            .into_iter()
                            .map(|(voter, p)| Ballot { voter, choice: p.value })
                            .collect();
                        let (norm, tally) = resolve_group_norm_vote(distinct, cast, &self.group_norm, round + 1);
                        self.group_norm = norm;
                        ballots = tally.ballots;
                    }
                }
            }
        }

        // Regrowth.
        self.stock = regenerate(catch.stock_post, cfg.growth_rate, cfg.carrying_capacity);
        self.round += 1;

        Ok(RoundLog {
            round,
            stock_before,
            stock_post_harvest: catch.stock_post,
            stock_after: self.stock,
            agents: self
                .agents
                .iter()
                .map(|a| AgentRecord {
                    id: a.id,
                    effort: efforts[a.id],
                    harvest: catch.harvests[a.id],
                    consumption: if alive_at_start[a.id] { cfg.consumption } else { 0.0 },
                    wealth: a.wealth,
                    alive: a.alive,
                    punished: outcome.punished[a.id],
                    punisher: outcome.punisher[a.id],
                })
                .collect(),
            punish_events: outcome.events,
            starved,
            imitations,
            proposals,
            ballots,
            group_norm: self.group_norm.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub survival_time: u32,
    pub censored: bool,
    pub efficiency_series: Vec<f64>,
    /// `None` when `H_opt = 0` (no regrowth).
    pub mean_efficiency: Option<f64>,
    pub individual_similarity: Option<f64>,
    pub alignment: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub config: SimulationConfig,
    pub seed: u64,
    pub trial_index: u64,
    pub logs: Vec<RoundLog>,
    pub metrics: TrialMetrics,
    pub calls: CallCounts,
    /// Final individual norms of the agents alive at the end.
    pub final_norms: Vec<(AgentId, Norm)>,
    /// Backend failure that ended the trial early; logs up to it are kept.
    pub aborted: Option<String>,
}

impl TrialResult {
    pub fn survival(&self) -> Survival {
        Survival {
            rounds: self.metrics.survival_time,
            censored: self.metrics.censored,
        }
    }

    /// Recompute the trajectory metrics from the logs alone.
    pub fn recompute_metrics(&self, embedder: &dyn Embedder) -> TrialMetrics {
        compute_metrics(&self.config, &self.logs, &self.final_norms, embedder)
    }
}

fn compute_metrics(
    config: &SimulationConfig,
    logs: &[RoundLog],
    final_norms: &[(AgentId, Norm)],
    embedder: &dyn Embedder,
) -> TrialMetrics {
    let survival = match logs.first() {
        None if config.initial_stock() <= config.collapse_threshold => Survival {
            rounds: 0,
            censored: false,
        },
        _ => survival_time(logs, config.collapse_threshold, config.n_agents, config.max_rounds),
    };
    let h_opt = msy_harvest(config.growth_rate, config.carrying_capacity);
    let efficiency = efficiency_series(logs, h_opt, survival).ok();

    let texts: Vec<&str> = final_norms.iter().filter_map(|(_, n)| n.text()).collect();
    let similarity = texts
        .iter()
        .map(|t| embedder.embed(t))
        .collect::<Result<Vec<_>>>()
        .ok()
        .and_then(|v| norm_similarities(&v).ok());

    TrialMetrics {
        survival_time: survival.rounds,
        censored: survival.censored,
        mean_efficiency: efficiency.as_ref().map(|e| e.mean),
        efficiency_series: efficiency.map(|e| e.series).unwrap_or_default(),
        individual_similarity: similarity.map(|s| s.0),
        alignment: similarity.map(|s| s.1),
    }
}

fn collapsed(log: &RoundLog, config: &SimulationConfig) -> bool {
    !log.starved.is_empty() || log.stock_after <= config.collapse_threshold
}

/// Run trial `trial_index` of `config.seed` to collapse or the round cap.
pub fn run_trial(config: &SimulationConfig, trial_index: u64, backend: Option<&dyn GenerationBackend>) -> Result<TrialResult> {
    match &config.remote_embedder {
        Some(settings) => run_trial_with(config, trial_index, backend, &HttpEmbedder::new(settings.clone())),
        None => run_trial_with(config, trial_index, backend, &HashingEmbedder { dim: config.embedding_dim }),
    }
}

pub fn run_trial_with(
    config: &SimulationConfig,
    trial_index: u64,
    backend: Option<&dyn GenerationBackend>,
    embedder: &dyn Embedder,
) -> Result<TrialResult> {
    if config.agent_kind == AgentKind::Llm && backend.is_none() {
        return Err(Error::MissingBackend);
    }
    let mut society = Society::new(config.clone(), derive_trial_rng(config.seed, trial_index))?;
    let mut logs = Vec::new();
    let mut aborted = None;
    let mut collapse_seen = false;

    while society.round < config.max_rounds {
        if society.living().is_empty() {
            break;
        }
        if !config.continue_past_collapse && society.stock <= config.collapse_threshold {
            break;
        }
        match society.run_round(backend) {
            Ok(log) => {
                collapse_seen |= collapsed(&log, config);
                logs.push(log);
            }
            Err(Error::Transport(msg)) => {
                tracing::error!(trial = trial_index, round = society.round, "backend failure: {msg}");
                aborted = Some(msg);
                break;
            }
            Err(e) => return Err(e),
        }
        if collapse_seen && !config.continue_past_collapse {
            break;
        }
    }

    let final_norms: Vec<(AgentId, Norm)> = society
        .agents
        .iter()
        .filter(|a| a.alive)
        .map(|a| (a.id, a.strategy.norm.clone()))
        .collect();
    let metrics = compute_metrics(config, &logs, &final_norms, embedder);
    Ok(TrialResult {
        config: config.clone(),
        seed: config.seed,
        trial_index,
        logs,
        metrics,
        calls: society.calls,
        final_norms,
        aborted,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub trials: usize,
    pub survival: Summary,
    pub censored: usize,
    pub efficiency: Option<Summary>,
    pub individual_similarity: Option<Summary>,
    pub alignment: Option<Summary>,
}

impl ConditionSummary {
    pub fn from_trials(trials: &[TrialResult]) -> Option<Self> {
        let survival: Vec<f64> = trials.iter().map(|t| f64::from(t.metrics.survival_time)).collect();
        let pick = |f: fn(&TrialMetrics) -> Option<f64>| {
            let v: Vec<f64> = trials.iter().filter_map(|t| f(&t.metrics)).collect();
            summarize_lenient(&v)
        };
        Some(Self {
            trials: trials.len(),
            survival: summarize_lenient(&survival)?,
            censored: trials.iter().filter(|t| t.metrics.censored).count(),
            efficiency: pick(|m| m.mean_efficiency),
            individual_similarity: pick(|m| m.individual_similarity),
            alignment: pick(|m| m.alignment),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub trials: Vec<TrialResult>,
    pub summary: ConditionSummary,
}

impl ConditionResult {
    pub fn survival_times(&self) -> Vec<f64> {
        self.trials.iter().map(|t| f64::from(t.metrics.survival_time)).collect()
    }

    pub fn aborted(&self) -> usize {
        self.trials.iter().filter(|t| t.aborted.is_some()).count()
    }
}

/// Run the given trial indices in parallel; results are ordered by index.
pub fn run_trials(config: &SimulationConfig, indices: Range<u64>, backend: Option<&dyn GenerationBackend>) -> Result<Vec<TrialResult>> {
    config.validate()?;
    indices
        .into_par_iter()
        .map(|i| run_trial(config, i, backend))
        .collect()
}

/// `trials` independent trials with streams `0..trials` of `config.seed`.
pub fn run_condition(config: &SimulationConfig, trials: u64, backend: Option<&dyn GenerationBackend>) -> Result<ConditionResult> {
    if trials == 0 {
        return Err(Error::Precondition("a condition needs at least one trial".into()));
    }
    let trials = run_trials(config, 0..trials, backend)?;
    let summary = ConditionSummary::from_trials(&trials).expect("at least one trial");
    Ok(ConditionResult { trials, summary })
}

/// One sweep axis: a config key and the values it takes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepAxis {
    pub key: String,
    pub values: Vec<Value>,
}

impl SweepAxis {
    pub fn new(key: impl Into<String>, values: impl IntoIterator<Item = impl Into<Value>>) -> Self {
        Self {
            key: key.into(),
            values: values.into_iter().map(Into::into).collect(),
        }
    }
}

/// A setting value as override text: strings unquoted, everything else as JSON.
pub fn value_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Condition key: `<param>=<value>__` per setting, sorted by parameter name.
pub fn condition_key(settings: &[(String, Value)]) -> String {
    let sorted: BTreeMap<&str, String> = settings.iter().map(|(k, v)| (k.as_str(), value_text(v))).collect();
    sorted.into_iter().map(|(k, v)| format!("{k}={v}__")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub settings: Vec<(String, Value)>,
    pub result: ConditionResult,
}

/// Cartesian product of `axes`, first axis varying slowest.
pub fn grid_cells(axes: &[SweepAxis]) -> Vec<Vec<(String, Value)>> {
    let mut cells: Vec<Vec<(String, Value)>> = vec![Vec::new()];
    for axis in axes {
        cells = cells
            .into_iter()
            .flat_map(|prefix| {
                axis.values.iter().map(move |v| {
                    let mut next = prefix.clone();
                    next.push((axis.key.clone(), v.clone()));
                    next
                })
            })
            .collect();
    }
    cells
}

/// `base` with every setting applied as an override, validated.
pub fn apply_settings(base: &SimulationConfig, settings: &[(String, Value)]) -> Result<SimulationConfig> {
    let mut config = base.clone();
    for (k, v) in settings {
        config.apply_override(k, &value_text(v))?;
    }
    config.validate()?;
    Ok(config)
}

/// Every cell of the Cartesian product of `axes`, keyed by [`condition_key`].
pub fn run_sweep(
    base: &SimulationConfig,
    axes: &[SweepAxis],
    trials: u64,
    backend: Option<&dyn GenerationBackend>,
) -> Result<BTreeMap<String, SweepCell>> {
    if axes.is_empty() || axes.iter().any(|a| a.values.is_empty()) {
        return Err(Error::Precondition("sweep grid must be non-empty on every axis".into()));
    }
    let mut out = BTreeMap::new();
    for settings in grid_cells(axes) {
        let config = apply_settings(base, &settings)?;
        let result = run_condition(&config, trials, backend)?;
        out.insert(condition_key(&settings), SweepCell { settings, result });
    }
    Ok(out)
}
