use std::collections::HashSet;

use super::*;
use crate::teacher::planted_quality;

fn small() -> Scenario {
    Scenario {
        vocab_size: 200,
        junk_size: 200,
        tail_rank: 50,
        sizes: PoolSizes {
            train: 300,
            validation: 50,
            test: 50,
            unlabeled: 400,
            shifted: 200,
        },
        ..Scenario::default()
    }
}

#[test]
fn pools_are_disjoint_and_sized() {
    let d = generate_scenario(&small()).unwrap();
    let mut seen = HashSet::new();
    let mut total = 0;
    for pool in [&d.train, &d.validation, &d.test, &d.unlabeled, &d.shifted] {
        for e in &pool.examples {
            seen.insert((e.source.clone(), e.mt.clone()));
            total += 1;
        }
    }
    assert_eq!(seen.len(), total);
    assert_eq!(d.train.len(), 300);
    assert_eq!(d.shifted.len(), 200);
    assert!(d.unlabeled.examples.iter().all(|e| e.label.is_none()));
}

#[test]
fn generation_is_deterministic() {
    let a = generate_scenario(&small()).unwrap();
    let b = generate_scenario(&small()).unwrap();
    assert_eq!(a.train, b.train);
    assert_eq!(a.shifted, b.shifted);
    let c = generate_scenario(&Scenario { seed: 1, ..small() }).unwrap();
    assert_ne!(a.train, c.train);
}

#[test]
fn noiseless_gold_equals_planted_fraction() {
    let s = Scenario { sigma_gold: 0.0, ..small() };
    let d = generate_scenario(&s).unwrap();
    for e in &d.train.examples {
        // Substitution-only corruption: the label is the share of mapped tokens.
        let correct = e
            .source_tokens
            .iter()
            .zip(&e.mt_tokens)
            .filter(|(s, t)| s[1..] == t[1..] && t.starts_with('t'))
            .count() as f64;
        let expected = correct / e.mt_tokens.len() as f64;
        assert!((e.label.unwrap() - expected).abs() < 1e-12);
        assert_eq!(e.label.unwrap(), planted_quality(&e.source_tokens, &e.mt_tokens, &d.map));
    }
    assert_eq!(d.test_truth.examples.len(), d.test.examples.len());
}

#[test]
fn shifted_domain_favours_tail_tokens() {
    let s = small();
    let d = generate_scenario(&s).unwrap();
    let tail = s.tail_tokens();
    let share = |pool: &crate::corpus::Dataset| {
        let f = token_frequencies(pool);
        let all: usize = f.iter().filter(|(t, _)| t.starts_with('t')).map(|(_, c)| c).sum();
        let in_tail: usize = f.iter().filter(|(t, _)| tail.contains(*t)).map(|(_, c)| c).sum();
        in_tail as f64 / all as f64
    };
    assert!(share(&d.shifted) > 0.5 + share(&d.train));
}

#[test]
fn invalid_scenarios_are_rejected() {
    for bad in [
        Scenario { min_len: 0, ..small() },
        Scenario { min_len: 9, max_len: 3, ..small() },
        Scenario { sigma_gold: -1.0, ..small() },
        Scenario { max_corruption: 1.5, ..small() },
    ] {
        assert_eq!(generate_scenario(&bad).unwrap_err().category(), "config");
    }
    let tiny = Scenario { vocab_size: 2, junk_size: 1, min_len: 1, max_len: 1, ..small() };
    assert_eq!(generate_scenario(&tiny).unwrap_err().category(), "config");
}

#[test]
fn findings_csv_layout() {
    let r = FindingsReport {
        rows: vec![Finding {
            id: "smoothing",
            claim: "c",
            measured: 0.5,
            threshold: "> 0".into(),
            status: Status::Pass,
            detail: "a \"b\"".into(),
        }],
    };
    assert_eq!(
        r.to_csv(),
        "id,claim,measured,threshold,status,detail\nsmoothing,c,0.5,> 0,pass,\"a 'b'\"\n"
    );
    assert!(r.all_passed());
}

fn tiny_suite() -> SuiteConfig {
    let mut s = SuiteConfig {
        seeds: 1,
        ensemble_size: 2,
        ..SuiteConfig::default()
    };
    s.model.embedding_dim = 6;
    s.model.hidden_dim = 4;
    s.model.attention_dim = 6;
    s.model.max_len = 16;
    s.train.max_epochs = 2;
    s.train.batch_size = 16;
    s
}

#[test]
fn suite_is_deterministic_and_reports_no_gap_for_equal_noise() {
    let scenario = Scenario {
        sigma_teacher: 0.15,
        sizes: PoolSizes {
            train: 120,
            validation: 40,
            test: 40,
            unlabeled: 200,
            shifted: 100,
        },
        ..small()
    };
    let a = run_findings_suite(&scenario, &tiny_suite()).unwrap();
    let b = crate::par::with_threads(3, || run_findings_suite(&scenario, &tiny_suite()).unwrap());
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a.get("distilled_vs_gold").unwrap().status, Status::NoGap);
    let ids: Vec<&str> = a.rows.iter().map(|r| r.id).collect();
    assert_eq!(
        ids,
        [
            "distilled_vs_gold",
            "size_monotonicity",
            "variance_error",
            "smoothing",
            "filter_non_inferiority",
            "filter_drop_rate",
            "in_domain_vs_shifted"
        ]
    );
}
