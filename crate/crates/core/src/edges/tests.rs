use nalgebra::DMatrix;

use super::*;
use crate::embedding::OovPolicy;
use crate::graph::{GraphNode, Source};
use crate::parsers::PenmanDocument;
use crate::synth;

fn planted(seed: u64, dim: usize, labels: &[&str], rounds: usize) -> synth::PlantedEdges {
    let mut r = synth::rng(seed);
    let truth = synth::planted_truth(&mut r, dim, labels);
    synth::planted_edges(&mut r, dim, &truth, rounds, Source::Amr, "t")
}

#[test]
fn ras_braf_observations() {
    let text = include_str!("../../fixtures/ras_braf.amr");
    let graphs: Vec<LabeledGraph> = crate::parsers::parse_penman(&PenmanDocument::from_text(text)).into_iter().map(Result::unwrap).collect();
    let mut store = EmbeddingStore::new(3, OovPolicy::FallbackChain);
    store.insert("activate", vec![1.0, 0.0, 0.0]).unwrap();
    store.insert("RAS", vec![0.0, 1.0, 0.0]).unwrap();
    store.insert("B-RAF", vec![0.0, 0.0, 1.0]).unwrap();
    let obs = collect_observations(&graphs, &store);
    assert_eq!(obs.count("ARG0"), 1);
    assert_eq!(obs.count("ARG1"), 1);
    assert_eq!(obs.labels["ARG0"].x.row(0).iter().copied().collect::<Vec<_>>(), vec![0.0, 1.0, 0.0]);
    assert_eq!(obs.labels["ARG0"].y.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.0, 0.0]);
    let pair = &obs.pairs[&("ARG0".to_string(), "ARG1".to_string())];
    assert_eq!(pair.zi.row(0).iter().copied().collect::<Vec<_>>(), vec![0.0, 1.0, 0.0]);
    assert_eq!(pair.zj.row(0).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0, 1.0]);
    assert_eq!(obs.neighborhood("ARG0"), vec!["ARG1"]);
}

#[test]
fn missing_embeddings_are_skipped() {
    let mut g = LabeledGraph::new(Source::Amr, "d", "d.1");
    let p = g.add_node(GraphNode::concept("p", "known")).unwrap();
    let c = g.add_node(GraphNode::concept("c", "unknown")).unwrap();
    g.add_edge(p, c, EdgeLabel::new("ARG0")).unwrap();
    let mut store = EmbeddingStore::new(2, OovPolicy::ExactOnly);
    store.insert("known", vec![1.0, 0.0]).unwrap();
    let obs = collect_observations(&[g], &store);
    assert_eq!(obs.skipped, 1);
    assert!(obs.labels.is_empty());
}

#[test]
fn observation_counts_follow_construction() {
    let p = planted(3, 4, &["a", "b", "c"], 100);
    let obs = collect_observations(&p.graphs, &p.store);
    for l in ["a", "b", "c"] {
        assert_eq!(obs.count(l), 100);
    }
    // three labels pair two per round; the leftover has no sibling
    let pairs: usize = obs.pairs.values().map(|p| p.zi.nrows()).sum();
    assert_eq!(pairs, 100);
}

#[test]
fn graph_order_does_not_matter() {
    let p = planted(5, 3, &["a", "b"], 20);
    let mut rev = p.graphs.clone();
    rev.reverse();
    assert_eq!(collect_observations(&p.graphs, &p.store), collect_observations(&rev, &p.store));
}

#[test]
fn identity_stack_initializes_to_identity() {
    let d = 3;
    let eye = DMatrix::<f64>::identity(d, d);
    let mut labels = BTreeMap::new();
    labels.insert("r".to_string(), LabelObservations { x: eye.clone(), y: eye.clone() });
    let obs = EdgeObservations {
        dim: d,
        labels,
        pairs: BTreeMap::new(),
        skipped: 0,
        reduced: false,
    };
    let a = initialize(&obs, 1e-12).unwrap();
    assert!((&a["r"] - &eye).norm() < 1e-9);
}

#[test]
fn underdetermined_labels_still_solve() {
    let p = planted(9, 6, &["a"], 2);
    let obs = collect_observations(&p.graphs, &p.store);
    assert!(obs.count("a") < 6);
    assert!(initialize(&obs, 1e-6).is_ok());
}

#[test]
fn init_recovers_planted_matrix() {
    let p = planted(11, 5, &["a", "b"], 60);
    let obs = collect_observations(&p.graphs, &p.store);
    let a = initialize(&obs, 1e-12).unwrap();
    for (l, t) in &p.truth {
        assert!((&a[l] - t).norm() < 1e-6, "{l}");
    }
}

#[test]
fn empty_neighborhood_is_a_fixpoint() {
    let p = planted(13, 4, &["a"], 30);
    let obs = collect_observations(&p.graphs, &p.store);
    let init = initialize(&obs, 1e-6).unwrap();
    let (next, before) = gauss_seidel_step(&obs, &init, 1e-6).unwrap();
    // the only movement left is removal of the initial ridge bias
    assert!((&next["a"] - &init["a"]).norm() < 1e-5);
    let (again, after) = gauss_seidel_step(&obs, &next, 1e-6).unwrap();
    assert!(after <= before);
    assert!((&again["a"] - &next["a"]).norm() < 1e-9);
}

#[test]
fn residual_shrinks_on_perturbed_start() {
    let p = planted(17, 4, &["a", "b", "c", "d"], 40);
    let obs = collect_observations(&p.graphs, &p.store);
    let gs = GaussSeidel::new(&obs, 1e-6).unwrap();
    let mut cur: Vec<DMatrix<f64>> = gs.labels().map(|_| DMatrix::identity(4, 4)).collect();
    let mut last = f64::INFINITY;
    for _ in 0..50 {
        if gs.residual(&cur) < 1e-10 {
            break;
        }
        let r = gs.sweep(&mut cur).unwrap();
        assert!(r <= last * (1.0 + 1e-12), "{r} > {last}");
        last = r;
    }
    assert!(gs.residual(&cur) < 1e-6);
}

#[test]
fn sweep_order_is_by_count_then_name() {
    let mut labels = BTreeMap::new();
    let row = |n: usize| DMatrix::<f64>::zeros(n, 2);
    for (l, n) in [("b", 2), ("a", 2), ("z", 5)] {
        labels.insert(l.to_string(), LabelObservations { x: row(n), y: row(n) });
    }
    let obs = EdgeObservations {
        dim: 2,
        labels,
        pairs: BTreeMap::new(),
        skipped: 0,
        reduced: false,
    };
    assert_eq!(obs.sweep_order(), vec!["z", "a", "b"]);
}

#[test]
fn learned_store_properties() {
    let p = planted(19, 4, &["a", "b", "c"], 50);
    let obs = collect_observations(&p.graphs, &p.store);
    let (store, report) = learn(&obs, &LearnOptions::default()).unwrap();
    assert!(report.converged);
    for (l, t) in &p.truth {
        let e = store.get(l).unwrap();
        assert!(e.vector.is_unit());
        assert!(e.inverse_vector.is_unit());
        let want = UnitVector::new(flatten(t)).unwrap();
        let diff: f64 = e.vector.as_slice().iter().zip(want.as_slice()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        assert!(diff <= 1e-4);
        assert!((&e.matrix * &e.inverse - DMatrix::identity(4, 4)).norm() < 1e-6);
    }
    let inv = store.vector(&EdgeLabel::new("a").inverted()).unwrap();
    assert_eq!(inv, &store.get("a").unwrap().inverse_vector);
}

#[test]
fn identity_label_learns_identity() {
    let mut r = synth::rng(23);
    let truth: BTreeMap<String, DMatrix<f64>> = [("same".to_string(), DMatrix::identity(3, 3))].into();
    let p = synth::planted_edges(&mut r, 3, &truth, 30, Source::Sdg, "u");
    let obs = collect_observations(&p.graphs, &p.store);
    let (store, _) = learn(&obs, &LearnOptions::default()).unwrap();
    let v = store.get("same").unwrap().vector.as_slice().to_vec();
    let s = 1.0 / 3f64.sqrt();
    for (i, x) in v.iter().enumerate() {
        let want = if i % 4 == 0 { s } else { 0.0 };
        assert!((x - want).abs() < 1e-6);
    }
}

#[test]
fn ill_conditioned_inverse_is_regularized() {
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-14]);
    let inv = stable_inverse(&a);
    assert!(inv.iter().all(|v| v.is_finite()));
    assert!(inv[(1, 1)] < 1e14);
    let s = DMatrix::<f64>::zeros(2, 2);
    assert!(stable_inverse(&s).iter().all(|v| v.is_finite()));
}

#[test]
fn store_file_round_trip() {
    let p = planted(29, 3, &["ARG0", "ARG1"], 20);
    let obs = collect_observations(&p.graphs, &p.store);
    let (store, _) = learn(&obs, &LearnOptions::default()).unwrap();
    let mut buf = Vec::new();
    store.write_to(&mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("d=3 reduced=0\nARG0\n"));
    let back = EdgeVectorStore::read_from(buf.as_slice()).unwrap();
    assert_eq!(back.dim, 3);
    for (k, e) in &store.entries {
        let b = &back.entries[k];
        assert_eq!(b.vector, e.vector);
        assert_eq!(b.matrix, e.matrix);
        assert_eq!(b.inverse, e.inverse);
    }
}

#[test]
fn truncated_store_file_is_rejected() {
    let err = EdgeVectorStore::read_from("d=2 reduced=0\nARG0\n1 0 0 0\n".as_bytes()).unwrap_err();
    assert!(matches!(err, EdgeError::Format { .. }));
}

#[test]
fn reduction_sets_flag_and_dimension() {
    let p = planted(31, 6, &["a", "b"], 30);
    let obs = collect_observations(&p.graphs, &p.store).reduce(3);
    assert!(obs.reduced);
    assert_eq!(obs.dim, 3);
    for o in obs.labels.values() {
        assert_eq!(o.x.ncols(), 3);
    }
    let (store, _) = learn(&obs, &LearnOptions::default()).unwrap();
    assert!(store.reduced);
    assert_eq!(store.get("a").unwrap().vector.dim(), 9);
}

#[test]
fn merge_keeps_first_entry() {
    let p = planted(37, 2, &["x"], 10);
    let obs = collect_observations(&p.graphs, &p.store);
    let (a, _) = learn(&obs, &LearnOptions::default()).unwrap();
    let mut b = a.clone();
    assert_eq!(b.merge(a.clone()), vec!["x".to_string()]);
    assert_eq!(b, a);
}
