use proptest::prelude::*;

use rag_orchestra::engine::{StepRecord, TrajectoryResult};
use rag_orchestra::policy::{featurize, parse_output, ParseBounds, ToyPlannerPolicy, ValueEstimator};
use rag_orchestra::reward::{assign_step_rewards, cost_penalty, token_f1, RewardConfig};
use rag_orchestra::rl::{clipped_objective, compute_gae, AdvantageConfig};
use rag_orchestra::trace::{GlobalState, Role};
use rag_orchestra::weights;
use rag_orchestra::workflow::{encode, parse_workflow, plan_menu, N_ACTIONS};

fn step(i: usize, violation: bool) -> StepRecord {
    StepRecord {
        t: 1,
        k: i,
        role: Role::AG,
        target_query: "q".into(),
        solve_only: false,
        observation_digest: String::new(),
        action: String::new(),
        outcome: None,
        format_violation: violation,
        violation: None,
        log_prob: None,
        action_index: None,
    }
}

fn trajectory(violations: &[bool], answer: &str, rounds: usize, retrievals: usize) -> TrajectoryResult {
    TrajectoryResult {
        final_answer: answer.into(),
        steps: violations.iter().enumerate().map(|(i, v)| step(i, *v)).collect(),
        rounds_used: rounds,
        retrievals_used: retrievals,
        truncated: false,
        final_state: GlobalState::new("q").unwrap(),
    }
}

proptest! {
    #[test]
    fn menu_plans_round_trip(i in 0..N_ACTIONS, pad in "[ \t]{0,3}") {
        let plan = &plan_menu()[i];
        let text = encode(plan).replace(',', &format!("{pad},{pad}"));
        let parsed = parse_workflow(&text);
        prop_assert_eq!(parsed.as_ref(), Ok(plan));
    }

    #[test]
    fn parsing_never_panics(text in ".{0,80}", n in 0usize..6) {
        for role in Role::ALL {
            let _ = parse_output(role, &text, ParseBounds::for_candidates(n));
        }
    }

    #[test]
    fn features_are_unit_or_zero(words in proptest::collection::vec("[a-zA-Z]{1,8}", 0..10), gap in "[ \t\n]{1,4}") {
        let spaced = words.join(&gap);
        let x = featurize(&spaced);
        prop_assert_eq!(&x, &featurize(&words.join(" ")));
        let norm: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if words.is_empty() {
            prop_assert_eq!(norm, 0.0);
        } else {
            prop_assert!((norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_is_consistent(weights in proptest::collection::vec(-5.0f64..5.0, 3 * N_ACTIONS),
                             x in proptest::collection::vec(-1.0f64..1.0, 3),
                             solve_only: bool) {
        let policy = ToyPlannerPolicy::from_weights(3, 0.7, weights).unwrap();
        let p = policy.distribution_masked(&x, solve_only);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let n = if solve_only { 6 } else { N_ACTIONS };
        for (a, pa) in p.iter().enumerate() {
            if a < n {
                prop_assert!(*pa > 0.0);
                let lp = policy.log_prob_masked(&x, a, solve_only).unwrap();
                prop_assert!(lp <= 0.0);
                prop_assert!((lp - pa.ln()).abs() < 1e-12);
            } else {
                prop_assert_eq!(*pa, 0.0);
            }
        }
    }

    #[test]
    fn f1_is_bounded_symmetric_and_case_blind(a in "[a-zA-Z ,.!]{0,20}", b in "[a-zA-Z ,.!]{0,20}") {
        let f = token_f1(&a, &b);
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert!((f - token_f1(&b, &a)).abs() < 1e-15);
        prop_assert_eq!(f, token_f1(&a.to_uppercase(), &b));
        prop_assert_eq!(f, token_f1(&a.replace(['.', ',', '!'], ""), &b));
    }

    #[test]
    fn rewards_decompose(violations in proptest::collection::vec(any::<bool>(), 1..12),
                         answer in "[a-c ]{0,8}", gold in "[a-c ]{0,8}",
                         rounds in 1usize..6, retrievals in 0usize..6,
                         alpha in 0.0f64..1.0, beta in 0.0f64..1.0) {
        let cfg = RewardConfig { alpha, beta, ..RewardConfig::default() };
        let r = assign_step_rewards(&trajectory(&violations, &answer, rounds, retrievals), &gold, &cfg).unwrap();
        prop_assert_eq!(r.per_step.len(), violations.len());
        prop_assert_eq!(r.r_global, r.r_perf - r.r_cost);
        let count = violations.iter().filter(|v| **v).count() as f64;
        prop_assert!((r.per_step.iter().sum::<f64>() - (r.r_global - count)).abs() < 1e-12);
        // Only the terminal reward depends on the answer.
        let blank = assign_step_rewards(&trajectory(&violations, "", rounds, retrievals), &gold, &cfg).unwrap();
        let n = violations.len();
        prop_assert_eq!(&blank.per_step[..n - 1], &r.per_step[..n - 1]);
        // More rounds or retrievals never raise the global reward.
        let more = assign_step_rewards(&trajectory(&violations, &answer, rounds + 1, retrievals + 1), &gold, &cfg).unwrap();
        prop_assert!(more.r_global <= r.r_global);
        prop_assert!(cost_penalty(rounds, retrievals, &cfg) <= alpha + beta + 1e-15);
    }

    #[test]
    fn clip_bounds(ratio in 0.0f64..5.0, adv in -3.0f64..3.0, eps in 0.05f64..0.5) {
        let v = clipped_objective(ratio, adv, eps);
        if adv > 0.0 {
            prop_assert!(v <= (1.0 + eps) * adv + 1e-12);
        } else {
            prop_assert!(v <= (1.0 - eps) * adv + 1e-12);
        }
    }

    #[test]
    fn returns_are_advantages_plus_values(rewards in proptest::collection::vec(-1.0f64..1.0, 1..16),
                                          gamma in 0.01f64..=1.0, lambda in 0.0f64..=1.0) {
        let mut values: Vec<f64> = rewards.iter().map(|r| r * 0.5).collect();
        values.push(0.0);
        let (adv, ret) = compute_gae(&rewards, &values, &AdvantageConfig { gamma, lambda }).unwrap();
        for i in 0..rewards.len() {
            prop_assert!((ret[i] - adv[i] - values[i]).abs() < 1e-12);
        }
        let short = compute_gae(&rewards, &values[1..], &AdvantageConfig { gamma, lambda });
        prop_assert!(short.is_err());
    }

    #[test]
    fn weights_round_trip(w in proptest::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 2 * N_ACTIONS),
                          v in proptest::collection::vec(-10.0f64..10.0, 2), bias in -1.0f64..1.0) {
        let policy = ToyPlannerPolicy::from_weights(2, 1.5, w).unwrap();
        let value = ValueEstimator { weights: v, bias };
        let bytes = weights::encode(&policy, &value);
        let (p2, v2) = weights::decode(&bytes).unwrap();
        prop_assert_eq!(p2, policy);
        prop_assert_eq!(v2, value);
        prop_assert!(weights::decode(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn children_get_dense_ids(n in 1usize..=4, m in 1usize..=4) {
        use rag_orchestra::workflow::DecomposeMode;
        let mut s = GlobalState::new("root").unwrap();
        let subs: Vec<String> = (0..n).map(|i| format!("q{i}")).collect();
        prop_assert_eq!(s.append_children(0, DecomposeMode::Parallel, &subs).unwrap(), (1..=n).collect::<Vec<_>>());
        prop_assert_eq!(s.first_unsolved_node().map(|x| x.node_id), Some(1));
        s.resolve_node(1, "a").unwrap();
        prop_assert!(s.resolve_node(1, "b").is_err());
        let more: Vec<String> = (0..m).map(|i| format!("r{i}")).collect();
        prop_assert_eq!(s.append_children(2.min(n), DecomposeMode::Serial, &more).is_ok(), n >= 2);
    }
}
