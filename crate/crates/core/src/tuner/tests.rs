use super::*;
use crate::bench::{gen_gf2n, MultiplicationSpec};
use crate::gf2::BitVector;

fn small_config() -> TunerConfig {
    TunerConfig {
        swarm: 4,
        iterations: 3,
        repetitions: 2,
        per_eval: EvalBudget {
            max_iterations: Some(40),
            ..EvalBudget::default()
        },
        ..TunerConfig::default()
    }
}

#[test]
fn fitness_examples() {
    // 6 qubits, 17 columns, 40 ones.
    let mut cols = Vec::new();
    let mut ones = 0;
    for j in 0..17u64 {
        let bits = (j % 63) + 1;
        let v = BitVector::from_words(6, vec![bits]);
        ones += v.count_ones();
        cols.push(v);
    }
    let p = ParityMatrix::new(6, cols).unwrap();
    let t = p.signature_tensor();
    let r = fitness(&p, false, 0, &t);
    assert!(r.valid);
    assert_eq!(r.penalty, 0.0);
    let expected = 17.0 + ones as f64 / 102.0;
    assert!((r.fitness - expected).abs() < 1e-12);
    assert!((r.fitness - (r.rho as f64 + r.density + r.penalty)).abs() < 1e-12);

    let r = fitness(&p, true, 17, &t);
    assert_eq!(r.penalty, 1.0);
    assert!((r.fitness - (expected + 1.0)).abs() < 1e-12);
    assert_eq!(fitness(&p, true, 18, &t).penalty, 0.0);

    let other = ParityMatrix::identity(6).signature_tensor();
    let r = fitness(&p, false, 0, &other);
    assert!(!r.valid);
    assert_eq!(r.fitness, f64::INFINITY);
}

#[test]
fn trivial_benchmark_scores_zero() {
    let c = BitVector::parse("101").unwrap();
    let p = ParityMatrix::new(3, vec![c.clone(), c]).unwrap();
    let mut store = PathStore::in_memory(p.signature_tensor());
    let out = tune(&p, &small_config(), &mut store, 0).unwrap();
    assert_eq!(out.best_report.fitness, 0.0);
    assert_eq!(out.best_report.rho, 0);
}

#[test]
fn tune_is_deterministic_and_valid() {
    let (p, t) = gen_gf2n(&MultiplicationSpec::standard(3).unwrap());
    let cfg = small_config();
    let mut s1 = PathStore::in_memory(t.clone());
    let mut s2 = PathStore::in_memory(t.clone());
    let a = tune(&p, &cfg, &mut s1, 5).unwrap();
    let b = tune(&p, &cfg, &mut s2, 5).unwrap();
    assert_eq!(a.best_report, b.best_report);
    assert_eq!(a.best_trajectory.to_text(), b.best_trajectory.to_text());
    assert_eq!(a.best_theta, b.best_theta);
    assert_eq!(a.evaluations, cfg.swarm * cfg.iterations);
    assert!(a.leaderboard.iter().all(|e| e.report.valid));
    assert!(a.leaderboard.windows(2).all(|w| w[0].report.fitness <= w[1].report.fitness));
    // The best path runs from the benchmark and keeps the tensor.
    a.best_trajectory.verify().unwrap();
    assert_eq!(a.best_trajectory.initial(), &p.simplify());
    assert_eq!(a.best_trajectory.last().column_count(), a.best_report.rho);
    assert!(!s1.is_empty());
    // Store restarts happened after the first round.
    assert!(a.records.iter().any(|r| matches!(r.start, Start::Store { .. })));
    assert!(a.records.iter().all(|r| r.rep_rhos.len() == cfg.repetitions));
}

#[test]
fn config_json_and_validation() {
    let cfg = TunerConfig::from_json(
        r#"{"swarm": 3, "iterations": 2, "per_eval": {"max_iterations": 5},
            "mapping": [{"control": "temperature", "transform": {"kind": "exp_scale", "lo": 0.01, "hi": 1}}]}"#,
    )
    .unwrap();
    assert_eq!(cfg.swarm, 3);
    assert_eq!(cfg.mapping.dim(), 1);
    assert!(TunerConfig::from_json(r#"{"swarm": 1}"#).is_err());
    assert!(TunerConfig::from_json(r#"{"unknown": 1}"#).is_err());
    assert!(TunerConfig::from_json(
        r#"{"per_eval": {"max_iterations": null, "max_matrix_evals": null}}"#
    )
    .is_err());
    let text = serde_json::to_string(&TunerConfig::default()).unwrap();
    assert_eq!(TunerConfig::from_json(&text).unwrap(), TunerConfig::default());
}

#[test]
fn quartiles_of_a_path() {
    assert_eq!(quartiles(&[35, 29, 23, 17]), [23, 29, 29]);
    assert_eq!(quartiles(&[10]), [10, 10, 10]);
}

#[test]
fn tune_rejects_foreign_store() {
    let (p, _) = gen_gf2n(&MultiplicationSpec::standard(2).unwrap());
    let mut store = PathStore::in_memory(ParityMatrix::identity(6).signature_tensor());
    assert!(tune(&p, &small_config(), &mut store, 0).is_err());
}
