use cpr_core::domain::{Norm, NO_POLICY_YET};
use cpr_core::llm::{CountingBackend, MockBackend, PromptKind};
use cpr_core::{run_condition, run_trial, SimulationConfig};

fn society(rounds: u32) -> SimulationConfig {
    SimulationConfig {
        max_rounds: rounds,
        ..SimulationConfig::llm_default()
    }
}

#[test]
fn scripted_society_runs_offline() {
    let backend = MockBackend::from_script(
        "* * effort 0.2\n\
         * * punish N/A\n\
         * * norm_update Personal: take little\\nCommunity: no more than four fish each\n\
         * * vote {proposal:1}\n",
    )
    .unwrap();
    let trial = run_trial(&society(20), 0, Some(&backend)).unwrap();
    assert_eq!(trial.logs.len(), 20);
    assert!(trial.metrics.censored);
    assert!(trial.logs.iter().all(|l| l.punish_events.is_empty()));
    assert_eq!(trial.logs[0].group_norm.norm, Norm::Text("no more than four fish each".into()));
    // Identical norms everywhere: perfect homogeneity.
    assert!((trial.metrics.individual_similarity.unwrap() - 1.0).abs() < 1e-12);
    assert!((trial.metrics.alignment.unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn scripted_punishment_is_applied() {
    let backend = MockBackend::from_script("* * effort 0.2\n0 0 punish 5\n* * punish N/A\n").unwrap();
    let mut cfg = society(1);
    cfg.penalty = 3.0;
    let trial = run_trial(&cfg, 0, Some(&backend)).unwrap();
    let log = &trial.logs[0];
    assert_eq!(log.punish_events, vec![(0, 5)]);
    assert!(log.agents[5].punished && log.agents[0].punisher);
    let gain = |i: usize| log.agents[i].wealth - cfg.starting_wealth;
    assert!((gain(1) - gain(5) - 3.0).abs() < 1e-9);
}

#[test]
fn garbage_replies_fall_back_and_the_round_completes() {
    let backend = CountingBackend::new(
        MockBackend::from_script("* * effort ???\n* * punish maybe\n* * norm_update whatever\n* * vote pass\n").unwrap(),
    );
    let mut cfg = society(3);
    cfg.llm_retries = 1;
    let trial = run_trial(&cfg, 0, Some(&backend)).unwrap();
    assert!(trial.aborted.is_none());
    assert!(!trial.logs.is_empty());
    // Every kind was re-asked once per agent per round.
    let rounds = trial.logs.len() as u64;
    assert_eq!(backend.count(PromptKind::Effort), 20 * rounds);
    assert_eq!(backend.count(PromptKind::NormUpdate), 20 * rounds);
    // No usable proposal, so nothing to vote on and the placeholder stays.
    assert_eq!(backend.count(PromptKind::Vote), 0);
    assert_eq!(trial.logs[0].group_norm.norm, Norm::Text(NO_POLICY_YET.into()));
}

#[test]
fn mock_conditions_are_reproducible() {
    let script = "* * effort 0.6\n3 * effort 0.9\n* * punish 3\n* * vote {proposal:1}\n";
    let a = run_condition(&society(30), 4, Some(&MockBackend::from_script(script).unwrap())).unwrap();
    let b = run_condition(&society(30), 4, Some(&MockBackend::from_script(script).unwrap())).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}
