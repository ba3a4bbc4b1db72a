//! The four decision prompts and their single-pass placeholder renderer.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::config::SimulationConfig;
use crate::domain::Observation;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Effort,
    Punish,
    NormUpdate,
    Vote,
}

impl PromptKind {
    pub const ALL: [PromptKind; 4] = [PromptKind::Effort, PromptKind::Punish, PromptKind::NormUpdate, PromptKind::Vote];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptKind::Effort => "effort",
            PromptKind::Punish => "punish",
            PromptKind::NormUpdate => "norm_update",
            PromptKind::Vote => "vote",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }

    pub fn template(self) -> &'static str {
        match self {
            PromptKind::Effort => EFFORT_TEMPLATE,
            PromptKind::Punish => PUNISH_TEMPLATE,
            PromptKind::NormUpdate => NORM_UPDATE_TEMPLATE,
            PromptKind::Vote => VOTE_TEMPLATE,
        }
    }
}

impl std::fmt::Display for PromptKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

// The wording below is kept verbatim, including the differing word order of
// "has also" / "also has" between prompts.

const EFFORT_TEMPLATE: &str = "\
You are a villager who fishes from a shared lake together with others in your community.
Each villager needs to consume [consumption] units of fish daily to survive. When your payoff becomes negative, you die.

Each villager holds a personal strategy about what they should do, and the community has also a shared policy.

Your personal strategy: \"[agent_norm]\"
Shared community policy: \"[group_norm]\"

You observe each villager's fishing effort and total payoff.
[observations]
Based on both your personal belief and the community policy, decide how much effort you want to put into fishing today.

Respond with a single number between 0.0 and 1.0. No explanation.";

const PUNISH_TEMPLATE: &str = "\
You are a villager who fishes from a shared lake together with others in your community.
Each villager needs to consume [consumption] units of fish daily to survive. When your payoff becomes negative, you die.

Each villager holds a personal strategy about what they should do, and the community also has a shared policy.

Your personal strategy: \"[agent_norm]\"
Shared community policy: \"[group_norm]\"

You observe each villager's fishing effort and total payoff.
[observations]
Based on both your personal belief and the community policy, decide whether to punish others who violate these standards by deducting their payoff by [penalty], while you need to pay [punish_cost] yourself.

Return only the ID number of the villager to punish, or \"N/A\" if no punishment is needed. No explanation.";

const NORM_UPDATE_TEMPLATE: &str = "\
You are a villager who fishes from a shared lake together with others in your community.
Each villager needs to consume [consumption] units of fish daily to survive. When your payoff becomes negative, you die.

Each villager holds a personal strategy about what they should do, and the community has also a shared policy.

Your personal strategy: \"[agent_norm]\"
Shared community policy: \"[group_norm]\"

[observations]
You observe each villager's fishing effort and total payoff. Based on your observations:
1. Update your personal strategy about what you should do
2. Propose what the others should do in the community

Respond in exactly this format:
Personal: [Your updated personal belief]
Community: [Your proposed community policy]

No additional explanation.";

const VOTE_TEMPLATE: &str = "\
You are a villager who fishes from a shared lake together with others in your community.
Each villager needs to consume [consumption] units of fish daily to survive. When your payoff becomes negative, you die.

Each villager holds a personal strategy about what they should do, and the community has also a shared policy.

Your personal strategy: \"[agent_norm]\"
Shared community policy: \"[group_norm]\"

[observations]
[proposals]
Based on your personal strategy and the current state of the lake, vote for which proposed policy you think should become the new shared policy.

Respond with only the exact text of your chosen policy (copy it exactly as shown above). No explanation.";

/// Placeholder names the renderer substitutes. Any other bracketed text
/// (e.g. `[Your updated personal belief]`) is template prose.
pub const PLACEHOLDERS: [&str; 7] = [
    "consumption",
    "agent_norm",
    "group_norm",
    "penalty",
    "punish_cost",
    "observations",
    "proposals",
];

/// Substitute every known placeholder in one left-to-right pass, so values
/// containing bracketed text are never re-expanded.
pub fn fill_template(template: &str, values: &[(&str, String)]) -> Result<String> {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(open) = rest.find('[') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find(']') {
            Some(close) if PLACEHOLDERS.contains(&&after[..close]) => {
                let name = &after[..close];
                let value = values
                    .iter()
                    .find(|(k, _)| *k == name)
                    .ok_or_else(|| Error::UnfilledPlaceholder(name.to_string()))?;
                out.push_str(&value.1);
                rest = &after[close + 1..];
            }
            _ => {
                out.push('[');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}

/// Render the situation block: lake stock, own recent rounds, sampled peers.
pub fn render_observations(obs: &Observation) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "Current fish in the lake: {:.2}", obs.stock);
    if !obs.own_recent.is_empty() {
        s.push_str("Your recent rounds:\n");
        for o in &obs.own_recent {
            let _ = writeln!(
                s,
                "round {}: harvest={:.2}, payoff change={:.2}, punished={}",
                o.round,
                o.harvest,
                o.payoff_delta,
                if o.punished { "yes" } else { "no" }
            );
        }
    }
    for p in &obs.peer_samples {
        let _ = writeln!(s, "villager {}: effort={:.2}, payoff={:.2}", p.id, p.effort, p.payoff);
    }
    s.pop();
    s
}

pub fn render_proposals(proposals: &[String]) -> String {
    let mut s = String::from("Proposed policies:");
    for (i, p) in proposals.iter().enumerate() {
        let _ = write!(s, "\n{}. {}", i + 1, p);
    }
    s
}

/// Instantiate `kind`'s template for one agent. `proposals` is required for
/// vote prompts and ignored otherwise.
pub fn render_prompt(kind: PromptKind, obs: &Observation, config: &SimulationConfig, proposals: Option<&[String]>) -> Result<String> {
    let mut values = vec![
        ("consumption", config.consumption.to_string()),
        ("agent_norm", obs.own_norm.to_string()),
        ("group_norm", obs.group_norm.norm.to_string()),
        ("penalty", config.penalty.to_string()),
        ("punish_cost", config.punish_cost.to_string()),
        ("observations", render_observations(obs)),
    ];
    if let Some(p) = proposals {
        values.push(("proposals", render_proposals(p)));
    }
    fill_template(kind.template(), &values)
}

/// Parse the numbered list written by [`render_proposals`] back out of a prompt.
pub fn proposals_in_prompt(prompt: &str) -> Vec<String> {
    let Some(start) = prompt.find("Proposed policies:") else {
        return Vec::new();
    };
    prompt[start..]
        .lines()
        .skip(1)
        .map_while(|line| {
            let (num, text) = line.split_once(". ")?;
            num.parse::<usize>().ok().map(|_| text.to_string())
        })
        .collect()
}
