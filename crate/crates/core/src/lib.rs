//! Common-pool resource society simulator.
//!
//! A renewable stock is harvested each round by a population of agents that
//! may sanction over-harvesters, imitate more successful peers, and agree on a
//! shared harvest norm. Agents are either rule-based (numeric strategies
//! evolving by payoff-biased imitation) or LLM-backed (decisions from four
//! prompts answered by a chat-completion backend or a scripted mock).

pub mod config;
pub mod domain;
pub mod engine;
pub mod environment;
pub mod error;
pub mod governance;
pub mod llm;
pub mod metrics;
pub mod output;
pub mod rng;
pub mod rule_agents;
pub mod stats;

pub use config::{AblationFlags, AgentKind, SimulationConfig};
pub use engine::{run_condition, run_sweep, run_trial, ConditionResult, ConditionSummary, SweepAxis, TrialResult};
pub use error::{Error, Result};
pub use rng::{derive_trial_rng, RandomSource};
