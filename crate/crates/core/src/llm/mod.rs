//! LLM-backed policies: prompts, reply parsing, backends and the per-round
//! call plan.

pub mod backend;
pub mod parse;
pub mod prompt;

use serde::{Deserialize, Serialize};

pub use backend::{CountingBackend, GenerationBackend, GenerationRequest, HttpBackend, HttpSettings, MockBackend};
pub use parse::{match_vote, parse_effort, parse_norm_update, parse_punish, NormUpdate, ParseStatus, Parsed};
pub use prompt::{render_prompt, PromptKind};

use crate::domain::AgentId;
use crate::error::Result;

/// Backend calls one living agent makes in one round, before retries.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallPlan {
    pub effort: u32,
    pub punish: u32,
    pub norm_update: u32,
    pub vote: u32,
}

impl CallPlan {
    pub fn total(&self) -> u32 {
        self.effort + self.punish + self.norm_update + self.vote
    }

    /// Calls belonging to the propose-then-vote phase.
    pub fn group_decision(&self) -> u32 {
        self.norm_update + self.vote
    }

    pub fn get(&self, kind: PromptKind) -> u32 {
        match kind {
            PromptKind::Effort => self.effort,
            PromptKind::Punish => self.punish,
            PromptKind::NormUpdate => self.norm_update,
            PromptKind::Vote => self.vote,
        }
    }
}

/// The per-agent plan for a round.
///
/// One effort call always; a punish call only while sanctions are active; a
/// norm-update call whenever norms can change (it carries both the personal
/// update and the community proposal); a vote call only with group decision.
pub fn agent_round_calls(punishment: bool, social_learning: bool, group_decision: bool) -> CallPlan {
    CallPlan {
        effort: 1,
        punish: u32::from(punishment),
        norm_update: u32::from(social_learning || group_decision),
        vote: u32::from(group_decision),
    }
}

/// Ask one question, re-prompting up to `retries` times while the reply does
/// not parse. Returns the last parse and the number of calls made.
pub fn ask<T>(
    backend: &dyn GenerationBackend,
    agent: AgentId,
    round: u32,
    kind: PromptKind,
    prompt: &str,
    retries: u32,
    parse: impl Fn(&str) -> Parsed<T>,
) -> Result<(Parsed<T>, u32)> {
    let mut calls = 0;
    loop {
        let reply = backend.generate(&GenerationRequest {
            agent,
            round,
            kind,
            attempt: calls,
            prompt,
        })?;
        calls += 1;
        let parsed = parse(&reply);
        if parsed.is_usable() || calls > retries {
            return Ok((parsed, calls));
        }
    }
}
