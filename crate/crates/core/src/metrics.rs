//! Survival time, harvest efficiency and norm-similarity summaries.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::domain::RoundLog;
use crate::error::{Error, Result};
use crate::llm::HttpSettings;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Survival {
    /// Index of the first round that ended in collapse, or `T_max` if none did.
    pub rounds: u32,
    pub censored: bool,
}

/// First round whose outcome meets a collapse condition: post-regrowth stock
/// at or below `R_min`, or fewer than `n_agents` alive.
///
/// Rounds are 0-based, so the result is also the number of rounds completed
/// without collapse. A stock already at or below `R_min` when a round begins
/// collapses at that round.
pub fn survival_time(trajectory: &[RoundLog], collapse_threshold: f64, n_agents: usize, max_rounds: u32) -> Survival {
    for log in trajectory {
        if log.stock_before <= collapse_threshold {
            return Survival {
                rounds: log.round,
                censored: false,
            };
        }
        if log.stock_after <= collapse_threshold || log.alive_count() < n_agents {
            return Survival {
                rounds: log.round,
                censored: false,
            };
        }
    }
    Survival {
        rounds: max_rounds,
        censored: true,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Efficiency {
    pub series: Vec<f64>,
    pub mean: f64,
}

/// `η(t) = Σh / H_opt` for rounds up to and including the collapse round.
pub fn efficiency_series(trajectory: &[RoundLog], h_opt: f64, survival: Survival) -> Result<Efficiency> {
    if !(h_opt > 0.0) {
        return Err(Error::ZeroOptimalHarvest(h_opt));
    }
    let series: Vec<f64> = trajectory
        .iter()
        .filter(|log| survival.censored || log.round <= survival.rounds)
        .map(|log| log.total_harvest() / h_opt)
        .collect();
    let mean = if series.is_empty() {
        0.0
    } else {
        series.iter().sum::<f64>() / series.len() as f64
    };
    Ok(Efficiency { series, mean })
}

/// Unit-length norm embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormVector(Vec<f64>);

impl NormVector {
    /// Normalize `components` to unit length.
    pub fn new(components: Vec<f64>) -> Result<Self> {
        let len = components.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(len > 0.0 && len.is_finite()) {
            return Err(Error::Precondition("norm vector must be non-zero and finite".into()));
        }
        Ok(Self(components.into_iter().map(|x| x / len).collect()))
    }

    pub fn components(&self) -> &[f64] {
        &self.0
    }

    pub fn dot(&self, other: &NormVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }
}

/// Mean pairwise cosine (`S_ind`) and mean cosine to the normalized mean
/// direction (`S_align`).
pub fn norm_similarities(vectors: &[NormVector]) -> Result<(f64, f64)> {
    let n = vectors.len();
    if n < 2 {
        return Err(Error::TooFewValues { needed: 2, got: n });
    }
    let dim = vectors[0].0.len();
    if vectors.iter().any(|v| v.0.len() != dim) {
        return Err(Error::Precondition("norm vectors differ in dimension".into()));
    }

    let mut pair_sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            pair_sum += vectors[i].dot(&vectors[j]);
        }
    }
    let s_ind = 2.0 * pair_sum / (n * (n - 1)) as f64;

    let mut sum = vec![0.0; dim];
    for v in vectors {
        for (s, x) in sum.iter_mut().zip(&v.0) {
            *s += x;
        }
    }
    let len = sum.iter().map(|x| x * x).sum::<f64>().sqrt();
    if len <= 1e-12 {
        return Err(Error::ZeroMeanVector);
    }
    let mean_dir = NormVector(sum.into_iter().map(|x| x / len).collect());
    let s_align = vectors.iter().map(|v| v.dot(&mean_dir)).sum::<f64>() / n as f64;
    Ok((s_ind.clamp(-1.0, 1.0), s_align.clamp(-1.0, 1.0)))
}

/// Text to fixed-dimension unit vector.
pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<NormVector>;
}

/// Signed feature hashing of lowercase word tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashingEmbedder {
    pub dim: usize,
}

impl Embedder for HashingEmbedder {
    fn embed(&self, text: &str) -> Result<NormVector> {
        hashing_embedder(text, self.dim)
    }
}

// 64-bit FNV-1a: stable across platforms and toolchains.
fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3))
}

pub fn hashing_embedder(text: &str, dim: usize) -> Result<NormVector> {
    if dim < 2 {
        return Err(Error::Precondition(format!("embedding dimension must be >= 2, got {dim}")));
    }
    let lower = text.to_lowercase();
    let tokens: Vec<&str> = lower.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).collect();
    if tokens.is_empty() {
        return Err(Error::EmptyText);
    }
    let mut v = vec![0.0; dim];
    for t in tokens {
        let h = fnv1a(t.as_bytes());
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        v[(h % dim as u64) as usize] += sign;
    }
    NormVector::new(v)
}

/// OpenAI-compatible `/embeddings` client.
pub struct HttpEmbedder {
    settings: HttpSettings,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpEmbedder {
    pub fn new(settings: HttpSettings) -> Self {
        let api_key = std::env::var(&settings.api_key_env).ok().filter(|k| !k.is_empty());
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(settings.timeout_secs)))
            .build()
            .into();
        Self {
            settings,
            api_key,
            agent,
        }
    }

    fn url(&self) -> String {
        format!("{}/embeddings", self.settings.endpoint.trim_end_matches('/'))
    }
}

impl Embedder for HttpEmbedder {
    fn embed(&self, text: &str) -> Result<NormVector> {
        if text.trim().is_empty() {
            return Err(Error::EmptyText);
        }
        let body = json!({"model": self.settings.model, "input": text});
        let mut req = self.agent.post(self.url());
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(&body).map_err(|e| Error::Transport(e.to_string()))?;
        let v: Value = resp.body_mut().read_json().map_err(|e| Error::Transport(e.to_string()))?;
        let components: Vec<f64> = v["data"][0]["embedding"]
            .as_array()
            .ok_or_else(|| Error::Transport("embedding missing from response".into()))?
            .iter()
            .filter_map(Value::as_f64)
            .collect();
        NormVector::new(components)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{AgentRecord, GroupNorm, Norm};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn log(round: u32, stock_before: f64, stock_after: f64, harvest: f64, alive: &[bool]) -> RoundLog {
        RoundLog {
            round,
            stock_before,
            stock_post_harvest: stock_before - harvest,
            stock_after,
            agents: alive
                .iter()
                .enumerate()
                .map(|(id, &a)| AgentRecord {
                    id,
                    effort: 0.0,
                    harvest: if id == 0 { harvest } else { 0.0 },
                    consumption: 1.0,
                    wealth: 1.0,
                    alive: a,
                    punished: false,
                    punisher: false,
                })
                .collect(),
            punish_events: vec![],
            starved: vec![],
            imitations: 0,
            proposals: vec![],
            ballots: vec![],
            group_norm: GroupNorm {
                norm: Norm::Cap(0.0),
                adopted_round: 0,
            },
        }
    }

    #[test]
    fn survival_by_stock() {
        let traj: Vec<_> = (0..10).map(|t| log(t, 100.0, if t == 7 { 10.0 } else { 100.0 }, 1.0, &[true; 3])).collect();
        assert_eq!(survival_time(&traj, 15.0, 3, 50), Survival { rounds: 7, censored: false });
    }

    #[test]
    fn survival_by_death() {
        let traj: Vec<_> = (0..10).map(|t| log(t, 100.0, 100.0, 1.0, &[true, t < 3, true])).collect();
        assert_eq!(survival_time(&traj, 15.0, 3, 50).rounds, 3);
    }

    #[test]
    fn survival_censored() {
        let traj: Vec<_> = (0..50).map(|t| log(t, 100.0, 100.0, 1.0, &[true; 3])).collect();
        assert_eq!(survival_time(&traj, 15.0, 3, 50), Survival { rounds: 50, censored: true });
    }

    #[test]
    fn survival_ignores_rounds_after_collapse() {
        let traj: Vec<_> = (0..20).map(|t| log(t, 100.0, if t >= 5 { 1.0 } else { 100.0 }, 1.0, &[true; 2])).collect();
        let full = survival_time(&traj, 15.0, 2, 50);
        let truncated = survival_time(&traj[..=5], 15.0, 2, 50);
        assert_eq!(full, truncated);
    }

    #[test]
    fn efficiency_examples() {
        let traj = vec![log(0, 195.0, 195.0, 45.0, &[true]), log(1, 195.0, 195.0, 90.0, &[true]), log(2, 195.0, 195.0, 0.0, &[true])];
        let e = efficiency_series(&traj, 45.0, Survival { rounds: 3, censored: true }).unwrap();
        assert_eq!(e.series, vec![1.0, 2.0, 0.0]);
        assert_relative_eq!(e.mean, 1.0);
        let e = efficiency_series(&traj, 45.0, Survival { rounds: 1, censored: false }).unwrap();
        assert_eq!(e.series, vec![1.0, 2.0]);
        assert!(efficiency_series(&traj, 0.0, Survival { rounds: 1, censored: false }).is_err());
    }

    fn unit(v: &[f64]) -> NormVector {
        NormVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn similarity_examples() {
        let same = vec![unit(&[1.0, 2.0]); 4];
        let (s_ind, s_align) = norm_similarities(&same).unwrap();
        assert_relative_eq!(s_ind, 1.0, max_relative = 1e-9);
        assert_relative_eq!(s_align, 1.0, max_relative = 1e-9);

        let (s_ind, _) = norm_similarities(&[unit(&[1.0, 0.0]), unit(&[0.0, 1.0])]).unwrap();
        assert!(s_ind.abs() < 1e-12);

        let sixty = unit(&[0.5, 3f64.sqrt() / 2.0]);
        let (s_ind, _) = norm_similarities(&[unit(&[1.0, 0.0]), sixty]).unwrap();
        assert_relative_eq!(s_ind, 0.5, max_relative = 1e-9);

        assert!(matches!(
            norm_similarities(&[unit(&[1.0, 0.0]), unit(&[-1.0, 0.0])]),
            Err(Error::ZeroMeanVector)
        ));
        assert!(norm_similarities(&[unit(&[1.0, 0.0])]).is_err());
    }

    #[test]
    fn hashing_embedder_basics() {
        let a = hashing_embedder("Preserve the lake", 64).unwrap();
        let b = hashing_embedder("preserve THE lake!", 64).unwrap();
        assert_eq!(a, b);
        assert_relative_eq!(a.dot(&a), 1.0, max_relative = 1e-12);
        assert!(matches!(hashing_embedder("  ...  ", 64), Err(Error::EmptyText)));
        assert!(hashing_embedder("x", 1).is_err());
    }

    #[test]
    fn disjoint_vocabularies_are_near_orthogonal() {
        // Monte Carlo: 100 pairs of random 5-word texts over disjoint alphabets.
        let mut rng = crate::rng::RandomSource::from_seed(77);
        let word = |rng: &mut crate::rng::RandomSource, letters: &[u8]| -> String {
            (0..6).map(|_| letters[rng.index(letters.len())] as char).collect()
        };
        for _ in 0..100 {
            let a: Vec<String> = (0..5).map(|_| word(&mut rng, b"abcdefghijklm")).collect();
            let b: Vec<String> = (0..5).map(|_| word(&mut rng, b"nopqrstuvwxyz")).collect();
            let va = hashing_embedder(&a.join(" "), 65_536).unwrap();
            let vb = hashing_embedder(&b.join(" "), 65_536).unwrap();
            assert!(va.dot(&vb).abs() < 0.1);
        }
    }

    proptest! {
        #[test]
        fn similarities_are_bounded(vs in prop::collection::vec(prop::collection::vec(0.01f64..1.0, 3), 2..10)) {
            let vectors: Vec<_> = vs.into_iter().map(|v| NormVector::new(v).unwrap()).collect();
            let (s_ind, s_align) = norm_similarities(&vectors).unwrap();
            prop_assert!((-1.0..=1.0).contains(&s_ind));
            prop_assert!((-1.0..=1.0).contains(&s_align));
        }
    }
}
