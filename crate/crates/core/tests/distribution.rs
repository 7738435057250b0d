use biorel::distribution::{
    distribution_gram, eigen_range, gdk_kl, kl_estimate, mmd, set_kernel, Distribution, DistributionMetric,
};
use biorel::synth;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

/// Linear kernel over random unit vectors.
fn base(seed: u64, n: usize, d: usize) -> DMatrix<f64> {
    let mut rng = synth::rng(seed);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| synth::random_unit(&mut rng, d).as_slice().to_vec()).collect();
    DMatrix::from_fn(n, n, |i, j| rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum())
}

fn set(rng: &mut impl Rng, n: usize, len: usize) -> Vec<usize> {
    (0..len).map(|_| rng.random_range(0..n)).collect()
}

proptest! {
    #[test]
    fn mmd_axioms(seed in any::<u64>(), la in 1usize..6, lb in 1usize..6) {
        let k = base(seed, 12, 4);
        let mut rng = synth::rng(seed ^ 1);
        let a = set(&mut rng, 12, la);
        let b = set(&mut rng, 12, lb);
        let ab = mmd(&a, &b, &k);
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(ab, mmd(&b, &a, &k));
        let mut p = a.clone();
        p.shuffle(&mut rng);
        prop_assert_eq!(mmd(&a, &p, &k), 0.0);
    }

    #[test]
    fn root_mmd_triangle(seed in any::<u64>()) {
        let k = base(seed, 15, 5);
        let mut rng = synth::rng(seed ^ 2);
        let s: Vec<Vec<usize>> = (0..3).map(|_| { let l = rng.random_range(1..6); set(&mut rng, 15, l) }).collect();
        let d = |x: &[usize], y: &[usize]| mmd(x, y, &k).sqrt();
        prop_assert!(d(&s[0], &s[2]) <= d(&s[0], &s[1]) + d(&s[1], &s[2]) + 1e-10);
    }

    #[test]
    fn kl_of_a_set_with_itself_is_zero(seed in any::<u64>(), l in 1usize..8) {
        let k = base(seed, 10, 3);
        let mut rng = synth::rng(seed ^ 3);
        let a = set(&mut rng, 10, l);
        prop_assert_eq!(kl_estimate(&a, &a, &k), 0.0);
        prop_assert_eq!(gdk_kl(&a, &a, &k, 1.0), 1.0);
    }

    #[test]
    fn metrics_ignore_sample_order(seed in any::<u64>(), la in 1usize..7, lb in 1usize..7) {
        let k = base(seed, 14, 4);
        let mut rng = synth::rng(seed ^ 4);
        let a = set(&mut rng, 14, la);
        let b = set(&mut rng, 14, lb);
        let (mut pa, mut pb) = (a.clone(), b.clone());
        pa.shuffle(&mut rng);
        pb.shuffle(&mut rng);
        for m in [DistributionMetric::Mmd, DistributionMetric::Kl, DistributionMetric::Ck] {
            prop_assert_eq!(set_kernel(m, &a, &b, &k, 1.0), set_kernel(m, &pa, &pb, &k, 1.0));
        }
    }

    #[test]
    fn gdk_mmd_gram_is_psd(seed in any::<u64>(), n in 2usize..12) {
        let k = base(seed, 20, 6);
        let mut rng = synth::rng(seed ^ 5);
        let dists: Vec<Distribution> = (0..n)
            .map(|i| {
                let l = rng.random_range(1..5);
                Distribution { id: format!("d{i}"), document_id: "x".into(), samples: set(&mut rng, 20, l), amr: 0, sdg: 0 }
            })
            .collect();
        let (g, _) = distribution_gram(&dists, DistributionMetric::Mmd, &k, 1.0).unwrap();
        let (lo, hi) = eigen_range(&g.values).unwrap();
        prop_assert!(lo >= -1e-8 * hi);
    }
}
