use hduva_core::distributions::{
    dirichlet_rsample, dirichlet_sample, hierarchical_log_ratio, kl_diag_gaussians, kl_dirichlet, DirichletParams,
    LatentGaussian, SimplexPoint,
};
use hduva_core::mmd::{gram_blocks, gram_blocks_with, mmd2_biased, Kernel, KernelSpec};
use hduva_core::scenarios::palette::rgb_hex;
use hduva_core::scenarios::Transform;
use hduva_core::training::{warmup_beta, TrainConfig};
use hduva_core::weak_supervision::{aggregate_concentration, constrained_loss, WeakSupConfig};
use hduva_core::Execution;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn points(max_n: usize, d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-3.0..3.0f64, d), 1..max_n)
}

fn point_pair() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    (1usize..5).prop_flat_map(|d| (points(12, d), points(12, d)))
}

fn gaussian(d: usize) -> impl Strategy<Value = LatentGaussian> {
    (prop::collection::vec(-3.0..3.0f64, d), prop::collection::vec(-4.0..4.0f64, d))
        .prop_map(|(m, lv)| LatentGaussian::new(m, lv).unwrap())
}

fn concentration() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05..20.0f64, 2..6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mmd_symmetric_and_nonnegative((x, y) in point_pair()) {
        let spec = KernelSpec::default();
        let a = mmd2_biased(&x, &y, &spec).unwrap();
        let b = mmd2_biased(&y, &x, &spec).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        prop_assert!(a >= -1e-12);
        prop_assert!(mmd2_biased(&x, &x, &spec).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn execution_strategies_agree((x, y) in point_pair()) {
        let k = Kernel::Composite(KernelSpec::default());
        let p = gram_blocks_with(Execution::Parallel, &x, &y, &k).unwrap();
        let s = gram_blocks_with(Execution::Sequential, &x, &y, &k).unwrap();
        prop_assert_eq!(p, s);
    }

    #[test]
    fn unbiased_needs_equal_sizes((x, y) in point_pair()) {
        let g = gram_blocks(&x, &y, &KernelSpec::default()).unwrap();
        prop_assert_eq!(g.mmd2_unbiased_paired().is_ok(), x.len() == y.len() && x.len() >= 2);
    }

    #[test]
    fn gaussian_kl_nonnegative_and_zero_on_self((q, p) in (1usize..6).prop_flat_map(|d| (gaussian(d), gaussian(d)))) {
        prop_assert!(kl_diag_gaussians(&q, &p).unwrap() >= -1e-12);
        prop_assert!(kl_diag_gaussians(&q, &q).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn identical_hierarchical_params_give_zero(q in gaussian(3), z in prop::collection::vec(-10.0..10.0f64, 3)) {
        prop_assert_eq!(hierarchical_log_ratio(&q, &q.clone(), &z).unwrap(), 0.0);
    }

    #[test]
    fn dirichlet_kl_nonnegative(a in concentration(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b: Vec<f64> = a.iter().map(|v| v * (1.0 + (seed % 7) as f64 / 3.0)).collect();
        let q = DirichletParams::new(a.clone()).unwrap();
        let p = DirichletParams::new(b).unwrap();
        prop_assert!(kl_dirichlet(&q, &p).unwrap() >= -1e-10);
        prop_assert!(kl_dirichlet(&q, &q).unwrap().abs() <= 1e-10);
        let s = dirichlet_sample(&q, &mut rng).unwrap();
        prop_assert!(SimplexPoint::new(s.weights().to_vec()).is_ok());
    }

    #[test]
    fn pathwise_jacobian_rows_sum_to_zero(a in concentration(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = dirichlet_rsample(&DirichletParams::new(a).unwrap(), &mut rng).unwrap();
        // the columns of d s / d alpha sum to zero because s stays on the simplex
        let j = d.jacobian();
        for col in 0..j.len() {
            let total: f64 = j.iter().map(|row| row[col]).sum();
            prop_assert!(total.abs() <= 1e-9 * (1.0 + j.iter().map(|r| r[col].abs()).sum::<f64>()));
        }
    }

    #[test]
    fn aggregation_is_componentwise_mean(batch in prop::collection::vec(prop::collection::vec(0.1..10.0f64, 3), 1..10)) {
        let params: Vec<DirichletParams> = batch.iter().map(|c| DirichletParams::new(c.clone()).unwrap()).collect();
        let agg = aggregate_concentration(&params).unwrap();
        for k in 0..3 {
            let mean = batch.iter().map(|c| c[k]).sum::<f64>() / batch.len() as f64;
            prop_assert!((agg.concentration()[k] - mean).abs() <= 1e-12 * mean);
        }
    }

    #[test]
    fn mmd_penalty_never_raises_loss(obj in prop::collection::vec(-100.0..100.0f64, 2..4), seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let zd: Vec<Vec<Vec<f64>>> = obj.iter()
            .map(|_| (0..5).map(|_| (0..2).map(|_| rng.random_range(-2.0..2.0)).collect()).collect())
            .collect();
        let on = WeakSupConfig::default();
        let off = WeakSupConfig { use_mmd: false, ..WeakSupConfig::default() };
        let with = constrained_loss(&obj, &zd, &on).unwrap();
        let without = constrained_loss(&obj, &zd, &off).unwrap();
        prop_assert!((without + obj.iter().sum::<f64>()).abs() <= 1e-9);
        prop_assert!(with <= without + 1e-12);
    }

    #[test]
    fn warmup_monotone_and_capped(targets in prop::array::uniform4(0.0..10.0f64), warm in 0usize..50, e in 0usize..100) {
        let cfg = TrainConfig { beta_targets: targets, warmup_epochs: warm, ..TrainConfig::default() };
        let a = warmup_beta(e, &cfg);
        let b = warmup_beta(e + 1, &cfg);
        for i in 0..4 {
            prop_assert!(a[i] <= b[i]);
            prop_assert!(b[i] <= targets[i]);
        }
        if e >= warm {
            prop_assert_eq!(a, targets);
        }
    }

    #[test]
    fn transform_codec_round_trips(base in 0usize..70000, fg in any::<[u8; 3]>(), bg in any::<[u8; 3]>(), deg in -360i32..360) {
        for t in [
            Transform::Color { base, fg, bg },
            Transform::Rotate { base, degrees: deg as f64 / 4.0 },
            Transform::File { side: base % 512 + 1 },
        ] {
            prop_assert_eq!(Transform::decode(&t.encode()).unwrap(), t.clone());
        }
        prop_assert_eq!(rgb_hex(fg).len(), 7);
    }
}
