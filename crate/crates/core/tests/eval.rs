use std::collections::BTreeSet;

use biorel::eval::{make_splits, Dataset, EvalSettings, Evaluator, InferenceMode, SourceMode};
use biorel::extract::EvidenceTree;
use biorel::synth;
use proptest::prelude::*;

fn singletons(n_docs: usize, seed: u64) -> Dataset {
    let (trees, labels) = synth::noisy_trees(n_docs, seed);
    let mut seen = BTreeSet::new();
    let trees: Vec<EvidenceTree> = trees.into_iter().filter(|t| seen.insert(t.key.clone())).collect();
    Dataset { trees, labels }
}

#[test]
fn reports_are_reproducible_across_worker_counts() {
    let (trees, labels) = synth::noisy_trees(20, 5);
    let data = Dataset { trees, labels };
    let plan = make_splits(data.documents(), 4, 9, 3, 0.8).unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let ev = Evaluator::new(&data, SourceMode::Amr, EvalSettings::default(), None).unwrap();
            InferenceMode::ALL.map(|m| ev.evaluate(&plan, m).unwrap())
        })
    };
    let a = run(1);
    let b = run(4);
    for (x, y) in a.iter().zip(&b) {
        let (mut jx, mut jy) = (Vec::new(), Vec::new());
        x.write_json(&mut jx).unwrap();
        y.write_json(&mut jy).unwrap();
        assert_eq!(jx, jy);
    }
}

#[test]
fn every_run_passes_the_leakage_check() {
    let (trees, labels) = synth::noisy_trees(12, 2);
    let data = Dataset { trees, labels };
    let plan = make_splits(data.documents(), 3, 1, 4, 0.8).unwrap();
    let ev = Evaluator::new(&data, SourceMode::Amr, EvalSettings::default(), None).unwrap();
    let r = ev.evaluate(&plan, InferenceMode::Gdk).unwrap();
    assert_eq!(r.leakage_checks, 12);
    for f in &r.folds {
        for d in &plan.folds[f.fold] {
            assert!(plan.folds.iter().enumerate().all(|(g, docs)| g == f.fold || !docs.contains(d)));
        }
    }
}

#[test]
fn identical_sets_have_no_divergence() {
    let data = singletons(2, 0);
    let ev = Evaluator::new(&data, SourceMode::Amr, EvalSettings::default(), None).unwrap();
    assert_eq!(ev.divergence(&[0], &[0]), 0.0);
    assert!(ev.divergence(&[0], &[1]) > 0.0);
}

#[test]
fn one_fold_cannot_be_evaluated() {
    let data = singletons(4, 0);
    let plan = make_splits(data.documents(), 1, 0, 1, 0.8).unwrap();
    let ev = Evaluator::new(&data, SourceMode::Amr, EvalSettings::default(), None).unwrap();
    assert!(ev.evaluate(&plan, InferenceMode::Sli).is_err());
}

#[test]
fn missing_source_is_an_error() {
    let data = singletons(4, 0);
    assert!(Evaluator::new(&data, SourceMode::Sdg, EvalSettings::default(), None).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn msi_equals_sli_on_singletons(seed in 0u64..1000) {
        let data = singletons(12, seed);
        let ev = Evaluator::new(&data, SourceMode::Amr, EvalSettings::default(), None).unwrap();
        let train: Vec<usize> = (0..8).collect();
        let test: Vec<usize> = (8..12).collect();
        prop_assert_eq!(
            ev.predict(InferenceMode::Sli, &train, &test).unwrap(),
            ev.predict(InferenceMode::Msi, &train, &test).unwrap()
        );
    }

    #[test]
    fn run_scores_satisfy_f1_identity(seed in 0u64..1000) {
        let (trees, labels) = synth::noisy_trees(9, seed);
        let data = Dataset { trees, labels };
        let plan = make_splits(data.documents(), 3, seed, 2, 0.8).unwrap();
        let ev = Evaluator::new(&data, SourceMode::Amr, EvalSettings::default(), None).unwrap();
        for mode in InferenceMode::ALL {
            let r = ev.evaluate(&plan, mode).unwrap();
            for run in r.folds.iter().flat_map(|f| &f.runs) {
                let (p, rc) = (run.precision, run.recall);
                let want = if p + rc == 0.0 { 0.0 } else { 2.0 * p * rc / (p + rc) };
                prop_assert!((run.f1 - want).abs() <= 1e-12);
            }
        }
    }
}
