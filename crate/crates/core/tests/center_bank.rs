use ccl_core::centerbank::{direction_equivalence_check, CenterBank, CenterMode, CenterUpdate};
use ccl_core::gradcheck::random_instance;
use ccl_core::losses::{self, MarginConfig};
use ccl_core::numkernel::{self, DenseMatrix};
use proptest::prelude::*;

fn unit(v: &[f64]) -> Vec<f64> {
    numkernel::normalized(v).unwrap()
}

#[test]
fn stopgrad_equals_gradient_mode_without_contrastive_center_gradient() {
    // a single class leaves the softmax part constant, so only the center term moves centers
    for t in 0..50 {
        let inst = random_instance(21, t);
        let centers = DenseMatrix::from_rows(&[inst.centers.row(0)]).unwrap();
        let labels = vec![0; inst.labels.len()];
        let cfg = MarginConfig { lambda: 0.25 + inst.cfg.lambda, ..inst.cfg };
        let out = losses::ccl(&inst.embeddings, &labels, &centers, &cfg).unwrap();
        let update = CenterUpdate {
            grad_centers: &out.grad_centers,
            batch_embeddings: &inst.embeddings,
            batch_labels: &labels,
            lambda: cfg.lambda,
        };
        let mut full = CenterBank::from_centers(centers.clone(), CenterMode::Gradient).unwrap();
        let mut stop = CenterBank::from_centers(centers.clone(), CenterMode::StopGradient { renormalize: false }).unwrap();
        full.update(&update, 0.1).unwrap();
        stop.update(&update, 0.1).unwrap();
        let diff = full.raw_centers().as_slice().iter().zip(stop.raw_centers().as_slice()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-12, "trial {t}: {diff}");
    }
}

#[test]
fn gradient_mode_descends_the_joint_objective() {
    for t in 0..20 {
        let inst = random_instance(22, t);
        let cfg = MarginConfig { lambda: 0.5 + inst.cfg.lambda, ..inst.cfg };
        let mut bank = CenterBank::from_centers(inst.centers.clone(), CenterMode::Gradient).unwrap();
        let step = 0.01 / cfg.s;
        let mut prev = f64::INFINITY;
        for _ in 0..10 {
            let out = losses::ccl(&inst.embeddings, &inst.labels, bank.raw_centers(), &cfg).unwrap();
            assert!(out.value < prev, "trial {t}: {} >= {prev}", out.value);
            prev = out.value;
            let update = CenterUpdate {
                grad_centers: &out.grad_centers,
                batch_embeddings: &inst.embeddings,
                batch_labels: &inst.labels,
                lambda: cfg.lambda,
            };
            bank.update(&update, step).unwrap();
        }
    }
}

#[test]
fn momentum_and_center_gradient_point_the_same_way() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
    for _ in 0..100 {
        let d = rng.random_range(2..12);
        let c = unit(&(0..d).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>());
        let x = unit(&(0..d).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>());
        assert!((direction_equivalence_check(&c, &x).unwrap() - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn momentum_touches_only_batch_classes_and_keeps_them_unit(
        seed in any::<u64>(),
        mu in 0.0f64..0.999,
        rows in prop::collection::vec((prop::collection::vec(-1.0f64..1.0, 4), 0usize..6), 1..10),
    ) {
        prop_assume!(rows.iter().all(|(v, _)| numkernel::norm(v) > 1e-3));
        let mut bank = CenterBank::init(6, 4, seed).unwrap().with_mode(CenterMode::Momentum { mu }).unwrap();
        let before = bank.raw_centers().clone();
        let emb = DenseMatrix::from_rows(&rows.iter().map(|(v, _)| v.clone()).collect::<Vec<_>>()).unwrap();
        let labels: Vec<usize> = rows.iter().map(|r| r.1).collect();
        let result = bank.momentum_update(&emb, &labels);
        // an exact antipodal cancellation is the only legal failure
        prop_assume!(result.is_ok());
        for k in 0..6 {
            if labels.contains(&k) {
                prop_assert!((numkernel::norm(bank.raw_centers().row(k)) - 1.0).abs() < 1e-12);
            } else {
                prop_assert_eq!(bank.raw_centers().row(k), before.row(k));
            }
        }
    }
}
