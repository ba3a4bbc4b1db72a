//! Reply parsers. Every parser is total: a reply is `Ok`, `Recovered`, or
//! `Failed`, never a panic.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::domain::AgentId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseStatus {
    /// The reply followed the requested format exactly.
    Ok,
    /// A usable value was extracted from a noisy or out-of-range reply.
    Recovered,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parsed<T> {
    pub value: Option<T>,
    pub status: ParseStatus,
    pub raw: String,
}

impl<T> Parsed<T> {
    fn ok(value: T, raw: &str) -> Self {
        Self {
            value: Some(value),
            status: ParseStatus::Ok,
            raw: raw.to_string(),
        }
    }

    fn recovered(value: T, raw: &str) -> Self {
        Self {
            value: Some(value),
            status: ParseStatus::Recovered,
            raw: raw.to_string(),
        }
    }

    fn failed(raw: &str) -> Self {
        Self {
            value: None,
            status: ParseStatus::Failed,
            raw: raw.to_string(),
        }
    }

    pub fn is_usable(&self) -> bool {
        self.status != ParseStatus::Failed
    }
}

static LONE_DECIMAL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^[+-]?(\d+(\.\d*)?|\.\d+)$").unwrap());
static DECIMAL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[+-]?(\d+(\.\d*)?|\.\d+)(\s*%)?").unwrap());
static INTEGER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\d+").unwrap());
static NA_TOKEN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\bn/?a\b").unwrap());

/// Effort in `[0, 1]` from a reply.
///
/// A lone decimal in range is `Ok`. Otherwise the first number in range is
/// taken (percentages are divided by 100); failing that the first number is
/// clamped. Both are `Recovered`.
pub fn parse_effort(reply: &str) -> Parsed<f64> {
    let trimmed = reply.trim();
    if LONE_DECIMAL.is_match(trimmed) {
        if let Ok(x) = trimmed.parse::<f64>() {
            return if (0.0..=1.0).contains(&x) {
                Parsed::ok(x, reply)
            } else {
                Parsed::recovered(x.clamp(0.0, 1.0), reply)
            };
        }
    }

    let numbers: Vec<f64> = DECIMAL
        .captures_iter(trimmed)
        .filter_map(|c| {
            let x: f64 = c.get(1)?.as_str().parse().ok()?;
            let sign = if c.get(0)?.as_str().starts_with('-') { -1.0 } else { 1.0 };
            let pct = c.get(3).is_some();
            Some(sign * if pct { x / 100.0 } else { x })
        })
        .filter(|x| x.is_finite())
        .collect();
    match numbers.iter().find(|x| (0.0..=1.0).contains(*x)) {
        Some(&x) => Parsed::recovered(x, reply),
        None => match numbers.first() {
            Some(&x) => Parsed::recovered(x.clamp(0.0, 1.0), reply),
            None => Parsed::failed(reply),
        },
    }
}

fn strip_decoration(s: &str) -> &str {
    s.trim().trim_matches(|c: char| c == '"' || c == '\'' || c == '`' || c == '*').trim_end_matches('.').trim()
}

/// Punishment target: `Some(id)` for a living id, `None` for "N/A".
pub fn parse_punish(reply: &str, living: &[AgentId]) -> Parsed<Option<AgentId>> {
    let core = strip_decoration(reply);
    if core.eq_ignore_ascii_case("n/a") {
        return if core == reply.trim() {
            Parsed::ok(None, reply)
        } else {
            Parsed::recovered(None, reply)
        };
    }
    if !core.is_empty() && core.bytes().all(|b| b.is_ascii_digit()) {
        return match core.parse::<AgentId>() {
            Ok(id) if living.contains(&id) => {
                if core == reply.trim() {
                    Parsed::ok(Some(id), reply)
                } else {
                    Parsed::recovered(Some(id), reply)
                }
            }
            _ => Parsed::failed(reply),
        };
    }
    if let Some(m) = INTEGER.find(core) {
        return match m.as_str().parse::<AgentId>() {
            Ok(id) if living.contains(&id) => Parsed::recovered(Some(id), reply),
            _ => Parsed::failed(reply),
        };
    }
    if NA_TOKEN.is_match(core) {
        return Parsed::recovered(None, reply);
    }
    Parsed::failed(reply)
}

/// Updated personal norm and community proposal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormUpdate {
    pub personal: String,
    pub community: String,
}

fn labeled(line: &str, label: &str) -> Option<String> {
    let t = line.trim().trim_start_matches(['*', '#', '-', ' ']);
    let head = t.get(..label.len())?;
    if !head.eq_ignore_ascii_case(label) {
        return None;
    }
    let rest = t[label.len()..].trim_start_matches('*').trim_start();
    let rest = rest.strip_prefix(':')?;
    Some(rest.trim().trim_start_matches('*').trim().to_string())
}

/// Extract the `Personal:` and `Community:` lines by label, in either order.
pub fn parse_norm_update(reply: &str) -> Parsed<NormUpdate> {
    let mut personal = None;
    let mut community = None;
    let mut other_lines = false;
    for line in reply.lines().filter(|l| !l.trim().is_empty()) {
        if let Some(p) = labeled(line, "personal") {
            personal.get_or_insert(p);
        } else if let Some(c) = labeled(line, "community") {
            community.get_or_insert(c);
        } else {
            other_lines = true;
        }
    }
    match (personal, community) {
        (Some(p), Some(c)) if !p.is_empty() && !c.is_empty() => {
            let strict = !other_lines
                && reply.lines().filter(|l| !l.trim().is_empty()).all(|l| {
                    let l = l.trim_start();
                    l.starts_with("Personal:") || l.starts_with("Community:")
                });
            let update = NormUpdate {
                personal: p,
                community: c,
            };
            if strict {
                Parsed::ok(update, reply)
            } else {
                Parsed::recovered(update, reply)
            }
        }
        _ => Parsed::failed(reply),
    }
}

fn normalize(s: &str) -> String {
    let t = s
        .trim()
        .trim_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace())
        .to_lowercase();
    t.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn unique<I: Iterator<Item = usize>>(mut it: I) -> Option<Option<usize>> {
    let first = it.next()?;
    Some(if it.next().is_none() { Some(first) } else { None })
}

/// Index of the proposal a vote reply names.
///
/// Exact match first, then a unique case/punctuation/whitespace-insensitive
/// match, then a unique containment in either direction.
pub fn match_vote(reply: &str, proposals: &[String]) -> Parsed<usize> {
    if let Some(i) = proposals.iter().position(|p| p == reply || p.trim() == reply.trim()) {
        return Parsed::ok(i, reply);
    }
    let r = normalize(reply);
    if r.is_empty() {
        return Parsed::failed(reply);
    }
    let normalized: Vec<String> = proposals.iter().map(|p| normalize(p)).collect();
    match unique(normalized.iter().enumerate().filter(|(_, p)| **p == r).map(|(i, _)| i)) {
        Some(Some(i)) => return Parsed::recovered(i, reply),
        Some(None) => return Parsed::failed(reply),
        None => {}
    }
    let contained = normalized
        .iter()
        .enumerate()
        .filter(|(_, p)| !p.is_empty() && (r.contains(p.as_str()) || p.contains(r.as_str())))
        .map(|(i, _)| i);
    match unique(contained) {
        Some(Some(i)) => Parsed::recovered(i, reply),
        _ => Parsed::failed(reply),
    }
}
