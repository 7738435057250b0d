use proptest::prelude::*;
use rand::Rng;

use super::*;
use crate::embedding::UnitVector;
use crate::graph::{NodeRole, Provenance, Source};
use crate::synth::{self, TreeVocab};

fn unit(v: &[f64]) -> Option<UnitVector> {
    UnitVector::new(v.to_vec())
}

fn node(label: &str, role: NodeRole, edge: &str, emb: &[f64]) -> TreeNode {
    let e = if edge.is_empty() { EdgeLabel::root() } else { EdgeLabel::new(edge) };
    TreeNode::new(label, role, e).with_embedding(unit(emb))
}

fn tree(root: TreeNode) -> KernelTree {
    KernelTree::new(root, Source::Amr, Provenance::default())
}

fn default_kernel() -> TreeKernel<'static> {
    TreeKernel::new(KernelParams::default(), None).unwrap()
}

/// The DP as a literal transcription of the run-length recursion: `L`
/// counts consecutive nonzero similarities and each start contributes
/// `λ(1 − λ^L)/(1 − λ) · K · k + λ C_next`. Valid when every node
/// similarity is 0 or 1.
fn run_length_kernel(a: &TreeNode, b: &TreeNode, lambda: f64, sim: &dyn Fn(&TreeNode, &TreeNode) -> f64) -> f64 {
    let k = sim(a, b);
    if k == 0.0 {
        return 0.0;
    }
    let (m, n) = (a.children.len(), b.children.len());
    let mut l = vec![vec![0.0; n + 1]; m + 1];
    let mut c = vec![vec![0.0; n + 1]; m + 1];
    for p in (0..m).rev() {
        for q in (0..n).rev() {
            let kpq = sim(&a.children[p], &b.children[q]);
            if kpq == 0.0 {
                continue;
            }
            l[p][q] = l[p + 1][q + 1] + 1.0;
            let big = run_length_kernel(&a.children[p], &b.children[q], lambda, sim);
            c[p][q] = lambda * (1.0 - lambda.powf(l[p][q])) / (1.0 - lambda) * big * kpq + lambda * c[p + 1][q + 1];
        }
    }
    k + c.iter().flatten().sum::<f64>()
}

#[test]
fn sparse_rbf_values() {
    assert_eq!(sparse_rbf(1.0, 0.4, 1.0), 1.0);
    assert_eq!(sparse_rbf(0.4, 0.4, 1.0), 0.0);
    assert_eq!(sparse_rbf(-0.9, 0.4, 1.0), 0.0);
    let expected = (-0.3f64).exp() * 0.5;
    assert!((sparse_rbf(0.7, 0.4, 1.0) - expected).abs() < 1e-15);
    assert!((expected - 0.370_409).abs() < 1e-6);
}

#[test]
fn word_kernel_uses_cosine() {
    let k = default_kernel();
    let c: f64 = 0.7;
    let x = node("a", NodeRole::Concept, "", &[1.0, 0.0]);
    let y = node("b", NodeRole::Concept, "", &[c, (1.0 - c * c).sqrt()]);
    assert!((k.word_kernel(&x, &y) - (-0.3f64).exp() * 0.5).abs() < 1e-12);
}

#[test]
fn absent_embeddings_fall_back_to_label_match() {
    let k = default_kernel();
    let a = TreeNode::new("RAS", NodeRole::Protein, EdgeLabel::root());
    let b = TreeNode::new("RAS", NodeRole::Protein, EdgeLabel::root());
    let c = TreeNode::new("RAF", NodeRole::Protein, EdgeLabel::root());
    assert_eq!(k.word_kernel(&a, &b), 1.0);
    assert_eq!(k.word_kernel(&a, &c), 0.0);
}

#[test]
fn node_kernel_examples() {
    let k = default_kernel();
    let x = node("a", NodeRole::Protein, "ARG0", &[1.0, 0.0]);
    assert_eq!(k.node_kernel(&x, &x).unwrap(), 3.0);
    let y = node("a", NodeRole::Concept, "ARG1", &[1.0, 0.0]);
    assert_eq!(k.node_kernel(&x, &y).unwrap(), 1.0);
    let z = node("b", NodeRole::Protein, "ARG0", &[0.0, 1.0]);
    assert_eq!(k.node_kernel(&x, &z).unwrap(), 0.0);
}

#[test]
fn embedded_mode_needs_a_store() {
    let params = KernelParams {
        edge_mode: EdgeKernelMode::EmbeddedSparseRbf,
        ..KernelParams::default()
    };
    assert_eq!(TreeKernel::new(params, None).unwrap_err(), KernelError::MissingEdgeStore);
}

#[test]
fn embedded_mode_reports_missing_label() {
    let store = crate::edges::EdgeVectorStore::new(2, false);
    let params = KernelParams {
        edge_mode: EdgeKernelMode::EmbeddedSparseRbf,
        ..KernelParams::default()
    };
    let k = TreeKernel::new(params, Some(&store)).unwrap();
    let a = EdgeLabel::new("ARG0");
    assert_eq!(k.edge_kernel(&a, &a).unwrap(), 1.0);
    assert_eq!(
        k.edge_kernel(&a, &EdgeLabel::new("nsubj")).unwrap_err(),
        KernelError::MissingEdgeVector("ARG0".into())
    );
}

#[test]
fn invalid_params_are_rejected() {
    for p in [
        KernelParams { lambda: 1.0, ..KernelParams::default() },
        KernelParams { alpha: 1.0, ..KernelParams::default() },
        KernelParams { beta: 0.0, ..KernelParams::default() },
    ] {
        assert!(matches!(p.validate(), Err(KernelError::InvalidParams(_))));
    }
}

#[test]
fn single_node_trees() {
    let k = default_kernel();
    let t = tree(node("a", NodeRole::Protein, "", &[1.0, 0.0]));
    assert_eq!(k.tree_kernel(&t, &t).unwrap(), 3.0);
    assert_eq!(k.tree_kernel_naive(&t, &t).unwrap(), 3.0);
    let u = tree(node("b", NodeRole::Protein, "", &[0.0, 1.0]));
    assert_eq!(k.tree_kernel(&t, &u).unwrap(), 0.0);
}

#[test]
fn single_child_expansion() {
    let k = default_kernel();
    let t = tree(node("r", NodeRole::InteractionType, "", &[1.0, 0.0]).with_child(node("c", NodeRole::Protein, "ARG0", &[0.0, 1.0])));
    // k_root = 3, k_child = 3, K_child = 3, so K = 3 + λ·3·3.
    let expected = 3.0 + 0.99 * 3.0 * 3.0;
    assert!((k.tree_kernel(&t, &t).unwrap() - expected).abs() < 1e-12);
}

#[test]
fn three_node_tree_by_hand() {
    // Root with two children, all embeddings orthogonal, so only identical
    // positions match. Child runs: (1), (2), (1,2) pair with themselves.
    let k = default_kernel();
    let t = tree(
        node("activate-01", NodeRole::InteractionType, "", &[1.0, 0.0, 0.0])
            .with_child(node("RAS", NodeRole::Protein, "ARG0", &[0.0, 1.0, 0.0]))
            .with_child(node("B-RAF", NodeRole::Protein, "ARG1", &[0.0, 0.0, 1.0])),
    );
    let l: f64 = 0.99;
    let kc = l * 3.0 * 3.0 + l * 3.0 * 3.0 + l * l * (3.0 + 3.0) * 9.0;
    let expected = 3.0 + kc;
    assert!((k.tree_kernel(&t, &t).unwrap() - expected).abs() < 1e-12);
    assert!((k.tree_kernel_naive(&t, &t).unwrap() - expected).abs() < 1e-12);
}

#[test]
fn zero_child_similarity_leaves_root_only() {
    let k = default_kernel();
    let a = tree(node("r", NodeRole::Concept, "", &[1.0, 0.0, 0.0]).with_child(node("x", NodeRole::Protein, "ARG0", &[0.0, 1.0, 0.0])));
    let b = tree(node("r", NodeRole::Concept, "", &[1.0, 0.0, 0.0]).with_child(node("y", NodeRole::Protein, "ARG0", &[0.0, 0.0, 1.0])));
    assert_eq!(k.tree_kernel(&a, &b).unwrap(), 3.0);
}

#[test]
fn normalized_examples() {
    let k = default_kernel();
    let a = tree(node("a", NodeRole::Protein, "", &[1.0, 0.0]));
    let b = tree(node("b", NodeRole::Protein, "", &[0.0, 1.0]));
    assert_eq!(k.normalized(&a, &a).unwrap(), 1.0);
    assert_eq!(k.normalized(&a, &b).unwrap(), 0.0);
    assert_eq!(3.0 / (2.0f64 * 8.0).sqrt(), 0.75);
}

#[test]
fn gram_small_cases() {
    let k = default_kernel();
    let a = tree(node("a", NodeRole::Protein, "", &[1.0, 0.0]));
    let g = k.gram(&[("a", &a)]).unwrap();
    assert_eq!(g.values[(0, 0)], 1.0);
    let g = k.gram(&[("a", &a), ("a2", &a)]).unwrap();
    assert!(g.values.iter().all(|&v| v == 1.0));
    assert!(g.normalized);
    assert_eq!(k.gram(&[]).unwrap_err(), KernelError::Empty);
}

#[test]
fn small_lambda_limit() {
    let mut r = synth::rng(7);
    let vocab = TreeVocab::random(&mut r, 4, 3, 2);
    let params = KernelParams {
        lambda: 1e-9,
        ..KernelParams::default()
    };
    let k = TreeKernel::new(params, None).unwrap();
    for _ in 0..50 {
        let a = synth::random_tree(&mut r, &vocab, 3, 3);
        let b = synth::random_tree(&mut r, &vocab, 3, 3);
        let root = k.node_kernel(&a.root, &b.root).unwrap();
        assert!((k.tree_kernel(&a, &b).unwrap() - root).abs() <= 1e-6);
    }
}

fn indicator(x: &TreeNode, y: &TreeNode) -> f64 {
    f64::from(u8::from(x.label == y.label && x.edge == y.edge))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dp_matches_run_length_recursion(seed in any::<u64>(), lambda in 0.05f64..0.99) {
        let mut r = synth::rng(seed);
        let mut vocab = TreeVocab::random(&mut r, 3, 2, 2);
        for w in &mut vocab.words {
            w.1 = None;
        }
        let a = synth::random_tree(&mut r, &vocab, 4, 4);
        let b = synth::random_tree(&mut r, &vocab, 4, 4);
        let dp: f64 = tree_kernel_dp_with(&a.root, &b.root, lambda, |x, y| Ok::<_, ()>(indicator(x, y))).unwrap();
        let lit = run_length_kernel(&a.root, &b.root, lambda, &indicator);
        prop_assert!((dp - lit).abs() <= 1e-9 * lit.max(1.0), "dp {} literal {}", dp, lit);
    }

    #[test]
    fn dp_matches_naive(seed in any::<u64>()) {
        let mut r = synth::rng(seed);
        let vocab = TreeVocab::random(&mut r, 5, 3, 3);
        let k = default_kernel();
        let a = synth::random_tree(&mut r, &vocab, 4, 4);
        let b = synth::random_tree(&mut r, &vocab, 4, 4);
        let dp = k.tree_kernel(&a, &b).unwrap();
        let naive = k.tree_kernel_naive(&a, &b).unwrap();
        prop_assert!((dp - naive).abs() <= 1e-9 * naive.max(1.0));
    }

    #[test]
    fn kernel_is_exactly_symmetric(seed in any::<u64>()) {
        let mut r = synth::rng(seed);
        let vocab = TreeVocab::random(&mut r, 5, 3, 3);
        let k = default_kernel();
        let a = synth::random_tree(&mut r, &vocab, 4, 5);
        let b = synth::random_tree(&mut r, &vocab, 4, 5);
        prop_assert_eq!(k.tree_kernel(&a, &b).unwrap(), k.tree_kernel(&b, &a).unwrap());
        prop_assert_eq!(k.normalized(&a, &b).unwrap(), k.normalized(&b, &a).unwrap());
    }

    #[test]
    fn normalized_self_kernel_is_one(seed in any::<u64>()) {
        let mut r = synth::rng(seed);
        let vocab = TreeVocab::random(&mut r, 5, 3, 3);
        let k = default_kernel();
        let a = synth::random_tree(&mut r, &vocab, 4, 5);
        prop_assert!((k.normalized(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_similarity_pairs_contribute_nothing(seed in any::<u64>()) {
        // Blocking one child of `a` out of every match must give the same
        // value as deleting it and splitting the runs around it.
        let mut r = synth::rng(seed);
        let mut vocab = TreeVocab::random(&mut r, 3, 2, 2);
        for w in &mut vocab.words {
            w.1 = None;
        }
        let a = synth::random_tree(&mut r, &vocab, 2, 5);
        let b = synth::random_tree(&mut r, &vocab, 2, 5);
        prop_assume!(!a.root.children.is_empty());
        let p = r.random_range(0..a.root.children.len());
        let mut blocked = a.root.clone();
        blocked.children[p].label = "blocked".into();
        let lambda = 0.7;
        let sim = |x: &TreeNode, y: &TreeNode| Ok::<_, ()>(indicator(x, y));
        let with_block = tree_kernel_dp_with(&blocked, &b.root, lambda, sim).unwrap();
        let mut left = a.root.clone();
        left.children.truncate(p);
        let mut right = a.root.clone();
        right.children.drain(..=p);
        let kl = tree_kernel_dp_with(&left, &b.root, lambda, sim).unwrap();
        let kr = tree_kernel_dp_with(&right, &b.root, lambda, sim).unwrap();
        let root = indicator(&a.root, &b.root);
        let split = if root == 0.0 { 0.0 } else { kl + kr - root };
        prop_assert!((with_block - split).abs() <= 1e-9 * split.max(1.0));
    }
}
