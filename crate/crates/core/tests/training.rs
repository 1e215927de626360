use lmpt::autodiff::{Tape, Tensor};
use lmpt::dataio::{build_registry, synth_generate, synth_mirror_pairs, LabelRegistry, LandmarkSet, SpeciesPreset, SynthParams};
use lmpt::geometry::{dist2, PointCloud};
use lmpt::model::{LmptModel, ModelConfig, ParamSet};
use lmpt::training::{
    adamw_step, apply_augment, assign_targets, augment, keypoint_loss, load_checkpoint, nearest_point, one_cycle_lr,
    prepare_samples, save_checkpoint, train, warmup_end, AdamW, AugmentConfig, AugmentDraw, Checkpoint, OneCycle,
    OptimizerState, TargetAssignment, TrainConfig, TrainSample, Trainer,
};
use lmpt::LmptError;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn human_registry(pairs: bool) -> LabelRegistry {
    let mirror = if pairs { synth_mirror_pairs() } else { vec![] };
    build_registry(&[("human".into(), SpeciesPreset::human().landmarks)], &mirror).unwrap()
}

fn human_samples(n: usize, points: usize, seed: u64) -> Vec<TrainSample<f64>> {
    let raw = synth_generate::<f64>(&SynthParams::new(vec![SpeciesPreset::human()], points, seed), n, seed).unwrap();
    prepare_samples(&raw).unwrap()
}

fn quick_config(epochs: usize, lr: f64) -> TrainConfig {
    TrainConfig { epochs, batch_size: 2, peak_lr: lr, augment: AugmentConfig::none(), num_points: 64, seed: 1, ..TrainConfig::default() }
}

fn tiny(reg: &LabelRegistry) -> ModelConfig {
    ModelConfig::tiny(reg.num_classes(), reg.num_conditions())
}

proptest! {
    #[test]
    fn nearest_point_matches_scan(coords in prop::collection::vec(-3i32..3, 3..60), q in prop::array::uniform3(-3i32..3)) {
        let pts: Vec<[f64; 3]> = coords.chunks_exact(3).map(|c| [c[0] as f64, c[1] as f64, c[2] as f64]).collect();
        let cloud = PointCloud::new(pts.clone()).unwrap();
        let q = q.map(|v| v as f64 + 0.5);
        let best = pts.iter().map(|p| dist2(p, &q)).fold(f64::INFINITY, f64::min);
        let expect = pts.iter().position(|p| dist2(p, &q) == best).unwrap();
        prop_assert_eq!(nearest_point(&cloud, &q), expect);
    }
}

#[test]
fn targets_snap_to_first_nearest_point() {
    let reg = build_registry(&[("a".into(), vec!["P".into(), "Q".into(), "R".into()])], &[]).unwrap();
    let cloud = PointCloud::new(vec![[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 5.0, 0.0]]).unwrap();
    let mut lm = LandmarkSet::new();
    lm.insert("P", [0.0, 0.0, 0.0]).unwrap();
    lm.insert("R", [0.1, 4.0, 0.0]).unwrap();
    let t = assign_targets(&cloud, &lm, &reg).unwrap();
    assert_eq!(t, TargetAssignment(vec![Some(0), None, Some(2)]));
    assert_eq!(t.labeled(), 2);
    lm.insert("Z", [0.0; 3]).unwrap();
    assert!(matches!(assign_targets(&cloud, &lm, &reg), Err(LmptError::Schema(_))));
}

fn loss_and_grad(logits: &Tensor<f64>, targets: &TargetAssignment) -> (f64, Tensor<f64>) {
    let mut tape = Tape::new();
    let x = tape.param(logits.clone());
    let l = keypoint_loss(&mut tape, x, targets).unwrap();
    let g = tape.backward(l).unwrap().get(x);
    (tape.value(l).item(), g)
}

#[test]
fn uniform_logits_give_log_point_count() {
    let (l, _) = loss_and_grad(&Tensor::zeros(vec![4, 2]), &TargetAssignment(vec![Some(1), Some(3)]));
    assert!((l - 4f64.ln()).abs() < 1e-15);
}

#[test]
fn loss_gradient_is_softmax_minus_one_hot() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (n, c) = (7, 3);
    let logits = Tensor::new(vec![n, c], (0..n * c).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
    let targets = TargetAssignment(vec![Some(4), None, Some(0)]);
    let (loss, g) = loss_and_grad(&logits, &targets);
    let mut expect_loss = 0.0;
    for ch in 0..c {
        let col: Vec<f64> = (0..n).map(|i| logits.data()[i * c + ch]).collect();
        let z: f64 = col.iter().map(|v| v.exp()).sum();
        for i in 0..n {
            let got = g.data()[i * c + ch];
            match targets.0[ch] {
                None => assert_eq!(got, 0.0),
                Some(t) => {
                    let want = (col[i].exp() / z - if i == t { 1.0 } else { 0.0 }) / 2.0;
                    assert!((got - want).abs() < 1e-12);
                }
            }
        }
        if let Some(t) = targets.0[ch] {
            expect_loss += (z.ln() - col[t]) / 2.0;
        }
    }
    assert!((loss - expect_loss).abs() < 1e-12);
}

#[test]
fn ignored_channels_receive_no_gradient_through_the_model() {
    let reg = build_registry(
        &[("human".into(), SpeciesPreset::human().landmarks), ("dog".into(), SpeciesPreset::dog().landmarks)],
        &[],
    )
    .unwrap();
    let model: LmptModel<f64> = LmptModel::new(tiny(&reg), 0).unwrap();
    let raw = synth_generate::<f64>(&SynthParams::new(vec![SpeciesPreset::dog()], 96, 2), 1, 2).unwrap();
    let sample = &prepare_samples(&raw).unwrap()[0];
    let targets = assign_targets(&sample.cloud, &sample.landmarks, &reg).unwrap();
    let hier = model.hierarchy(&sample.cloud).unwrap();
    let mut tape = Tape::new();
    let p = model.params().bind(&mut tape, true);
    let logits = model.forward_on_tape(&mut tape, &p, &hier, Some(reg.condition_of("dog").unwrap())).unwrap();
    let loss = keypoint_loss(&mut tape, logits, &targets).unwrap();
    let g = tape.backward(loss).unwrap().get(logits);
    let c = reg.num_classes();
    let ignored: Vec<usize> = (0..c).filter(|&k| targets.0[k].is_none()).collect();
    assert!(!ignored.is_empty());
    for i in 0..sample.cloud.len() {
        for &k in &ignored {
            assert_eq!(g.data()[i * c + k], 0.0);
        }
    }
    let head = model.layout().head;
    let hg = tape.backward(loss).unwrap().get(p[head.bias]);
    for &k in &ignored {
        assert_eq!(hg.data()[k], 0.0);
    }
}

proptest! {
    #[test]
    fn loss_ignores_per_channel_shifts(seed in 0u64..500, shifts in prop::collection::vec(-20.0f64..20.0, 3)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let logits = Tensor::new(vec![6, 3], (0..18).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let shifted = Tensor::new(vec![6, 3], logits.data().iter().enumerate().map(|(i, v)| v + shifts[i % 3]).collect()).unwrap();
        let t = TargetAssignment(vec![Some(1), Some(5), None]);
        let (a, _) = loss_and_grad(&logits, &t);
        let (b, _) = loss_and_grad(&shifted, &t);
        prop_assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn identity_draw_leaves_sample_unchanged() {
    let reg = human_registry(true);
    let s = &human_samples(1, 64, 3)[0];
    let out = apply_augment(s, &AugmentConfig::default(), &AugmentDraw::identity(), &reg).unwrap();
    assert_eq!(&out, s);
    let out = augment(s, &AugmentConfig::none(), &reg, 99).unwrap();
    assert_eq!(&out, s);
}

#[test]
fn flip_mirrors_positions_and_swaps_pairs() {
    let reg = human_registry(true);
    let s = &human_samples(1, 64, 4)[0];
    let cfg = AugmentConfig::default();
    let f = apply_augment(s, &cfg, &AugmentDraw::flip_only(), &reg).unwrap();
    for (a, b) in f.cloud.points().iter().zip(s.cloud.points()) {
        assert_eq!(*a, [-b[0], b[1], b[2]]);
    }
    assert_eq!(f.side, s.side.toggled());
    let lec = s.landmarks.get("LEC").unwrap();
    assert_eq!(f.landmarks.get("MEC").unwrap(), &[-lec[0], lec[1], lec[2]]);
    let sgt = s.landmarks.get("SGT").unwrap();
    assert_eq!(f.landmarks.get("SGT").unwrap(), &[-sgt[0], sgt[1], sgt[2]]);
    let back = apply_augment(&f, &cfg, &AugmentDraw::flip_only(), &reg).unwrap();
    assert_eq!(back, *s);

    let keep = AugmentConfig { swap_labels: false, ..cfg };
    let f = apply_augment(s, &keep, &AugmentDraw::flip_only(), &reg).unwrap();
    assert_eq!(f.landmarks.get("LEC").unwrap(), &[-lec[0], lec[1], lec[2]]);
    assert_eq!(f.side, s.side);
}

#[test]
fn flip_commutes_with_turns_up_to_direction() {
    let cfg = AugmentConfig::default();
    let turn = AugmentDraw { turn: 0.7, ..AugmentDraw::identity() };
    let back = AugmentDraw { turn: -0.7, ..AugmentDraw::identity() };
    let flip_turn = lmpt::training::augment_matrix(&cfg, &AugmentDraw { flip: true, ..turn });
    // negating x after turning by θ equals turning by −θ after negating x
    let r = lmpt::training::augment_matrix(&cfg, &back);
    let f = lmpt::training::augment_matrix(&cfg, &AugmentDraw::flip_only());
    for i in 0..3 {
        for j in 0..3 {
            let rf: f64 = (0..3).map(|k| r[i][k] * f[k][j]).sum();
            assert!((flip_turn[i][j] - rf).abs() < 1e-15);
        }
    }
}

#[test]
fn flip_without_mirror_pairs_is_a_schema_error() {
    let reg = human_registry(false);
    let s = &human_samples(1, 64, 5)[0];
    let err = apply_augment(s, &AugmentConfig::default(), &AugmentDraw::flip_only(), &reg);
    assert!(matches!(err, Err(LmptError::Schema(_))));
    assert!(matches!(augment(s, &AugmentConfig::default(), &reg, 0), Err(LmptError::Schema(_))));
    let keep = AugmentConfig { swap_labels: false, ..AugmentConfig::default() };
    assert!(augment(s, &keep, &reg, 0).is_ok());
}

proptest! {
    #[test]
    fn augmentation_preserves_distances_up_to_scale(seed in 0u64..1000) {
        let reg = human_registry(true);
        let s = &human_samples(1, 32, 6)[0];
        let cfg = AugmentConfig::default();
        let draw = AugmentDraw::sample(&cfg, &mut ChaCha8Rng::seed_from_u64(seed));
        let out = apply_augment(s, &cfg, &draw, &reg).unwrap();
        let (a, b) = (s.cloud.points(), out.cloud.points());
        for i in 1..a.len() {
            let ratio = (dist2(&b[0], &b[i]) / dist2(&a[0], &a[i])).sqrt();
            prop_assert!((ratio - draw.scale).abs() < 1e-9);
        }
        prop_assert_eq!(out.side == s.side, !draw.flip);
    }
}

#[test]
fn adamw_first_step_matches_closed_form() {
    let mut params = ParamSet::new();
    params.push("w", Tensor::vector(vec![1.0, -2.0, 0.5]));
    let grads = vec![Tensor::vector(vec![0.3, -0.1, 0.0])];
    let mut state = OptimizerState::new(&params);
    let hp = AdamW { lr: 0.1, betas: (0.9, 0.999), eps: 1e-8, weight_decay: 0.01 };
    adamw_step(&mut params, &grads, &mut state, &hp).unwrap();
    let got = params.tensors()[0].data();
    for (i, (p, g)) in [(1.0f64, 0.3f64), (-2.0, -0.1), (0.5, 0.0)].into_iter().enumerate() {
        let want = p - 0.1 * (g / (g.abs() + 1e-8) + 0.01 * p);
        assert!((got[i] - want).abs() < 1e-15, "{i}: {} vs {want}", got[i]);
    }
    assert_eq!(state.step, 1);
}

#[test]
fn adamw_trace_matches_reference_recurrence() {
    let hp = AdamW { lr: 0.05, betas: (0.8, 0.95), eps: 1e-6, weight_decay: 0.1 };
    let mut params = ParamSet::new();
    params.push("w", Tensor::vector(vec![2.0]));
    let mut state = OptimizerState::new(&params);
    let (mut p, mut m, mut v) = (2.0f64, 0.0f64, 0.0f64);
    for t in 1..=20 {
        // gradient of (p - 1)^2
        let g = 2.0 * (p - 1.0);
        adamw_step(&mut params, &[Tensor::vector(vec![g])], &mut state, &hp).unwrap();
        m = 0.8 * m + 0.2 * g;
        v = 0.95 * v + 0.05 * g * g;
        let mh = m / (1.0 - 0.8f64.powi(t));
        let vh = v / (1.0 - 0.95f64.powi(t));
        p -= 0.05 * (mh / (vh.sqrt() + 1e-6) + 0.1 * p);
        assert!((params.tensors()[0].data()[0] - p).abs() < 1e-12, "step {t}");
    }
    assert!((p - 1.0).abs() < 1.0);
}

#[test]
fn adamw_rejects_mismatched_gradients() {
    let mut params = ParamSet::new();
    params.push("w", Tensor::vector(vec![1.0, 2.0]));
    let mut state = OptimizerState::new(&params);
    let hp = AdamW { lr: 0.1, betas: (0.9, 0.999), eps: 1e-8, weight_decay: 0.0 };
    assert!(matches!(adamw_step(&mut params, &[Tensor::vector(vec![1.0])], &mut state, &hp), Err(LmptError::Shape(_))));
    assert!(matches!(adamw_step(&mut params, &[], &mut state, &hp), Err(LmptError::Shape(_))));
}

#[test]
fn one_cycle_hits_its_boundary_values() {
    let cfg = OneCycle::default();
    let (total, peak) = (101, 3e-4);
    let w = warmup_end(total, &cfg);
    assert_eq!(w, 30);
    assert!((one_cycle_lr(0, total, peak, &cfg).unwrap() - peak / 25.0).abs() < 1e-18);
    assert_eq!(one_cycle_lr(w, total, peak, &cfg).unwrap(), peak);
    assert!((one_cycle_lr(total - 1, total, peak, &cfg).unwrap() - peak / 25.0 / 1e4).abs() < 1e-20);
    assert!(matches!(one_cycle_lr(total, total, peak, &cfg), Err(LmptError::Range(_))));
    assert_eq!(one_cycle_lr(0, 1, peak, &cfg).unwrap(), peak);
    let mid = one_cycle_lr(15, total, peak, &cfg).unwrap();
    assert!((mid - (peak / 25.0 + peak) / 2.0).abs() < 1e-15);
}

proptest! {
    #[test]
    fn one_cycle_rises_then_falls_smoothly(total in 2usize..400) {
        let cfg = OneCycle::default();
        let peak = 1.0;
        let w = warmup_end(total, &cfg);
        let lrs: Vec<f64> = (0..total).map(|s| one_cycle_lr(s, total, peak, &cfg).unwrap()).collect();
        prop_assert!(lrs.iter().all(|&l| l > 0.0 && l <= peak));
        for s in 1..total {
            if s <= w { prop_assert!(lrs[s] >= lrs[s - 1]); } else { prop_assert!(lrs[s] <= lrs[s - 1]); }
            let bound = std::f64::consts::PI / 2.0 / (w.min(total - 1 - w).max(1) as f64);
            prop_assert!((lrs[s] - lrs[s - 1]).abs() <= bound + 1e-12);
        }
    }
}

#[test]
fn zero_learning_rate_keeps_initial_parameters() {
    let reg = human_registry(true);
    let data = human_samples(2, 64, 7);
    let tc = quick_config(2, 0.0);
    let out = train(&tc, &tiny(&reg), &data, &reg).unwrap();
    let init: LmptModel<f64> = LmptModel::new(tiny(&reg), tc.seed).unwrap();
    assert_eq!(out.model.params(), init.params());
    assert!(out.metrics.iter().all(|m| m.lr == 0.0));
}

#[test]
fn loss_falls_over_the_first_ten_steps_on_a_fixed_batch() {
    let reg = human_registry(true);
    let data = human_samples(2, 256, 8);
    let model = LmptModel::new(tiny(&reg), 0).unwrap();
    let mut trainer = Trainer::new(model, quick_config(1, 1e-2), reg.clone()).unwrap();
    let losses: Vec<f64> = (0..11).map(|_| trainer.batch_step(&data, 1e-2).unwrap()).collect();
    let rises = losses.windows(2).filter(|w| w[1] >= w[0]).count();
    assert!(rises <= 2 && losses[10] < losses[0], "{losses:?}");
}

#[test]
fn trainer_rejects_mismatched_registry() {
    let reg = human_registry(true);
    let model = LmptModel::<f64>::new(ModelConfig::tiny(3, 1), 0).unwrap();
    assert!(matches!(Trainer::new(model, quick_config(1, 1e-3), reg), Err(LmptError::Config(_))));
}

#[test]
fn unknown_species_is_rejected_before_training() {
    let reg = human_registry(true);
    let mut data = human_samples(2, 64, 9);
    data[1].species = "cat".into();
    assert!(matches!(train(&quick_config(1, 1e-3), &tiny(&reg), &data, &reg), Err(LmptError::Schema(_))));
}

#[test]
fn training_is_bitwise_reproducible() {
    let reg = human_registry(true);
    let data = human_samples(3, 64, 10);
    let mut tc = quick_config(3, 5e-3);
    tc.augment = AugmentConfig::default();
    let a = train(&tc, &tiny(&reg), &data, &reg).unwrap();
    let b = train(&tc, &tiny(&reg), &data, &reg).unwrap();
    assert_eq!(a.checkpoint.to_bytes(), b.checkpoint.to_bytes());
    assert_eq!(a.metrics, b.metrics);
    tc.seed = 2;
    let c = train(&tc, &tiny(&reg), &data, &reg).unwrap();
    assert_ne!(a.checkpoint.checksum(), c.checkpoint.checksum());
}

#[test]
fn checkpoint_roundtrip_is_exact() {
    let reg = human_registry(true);
    let data = human_samples(2, 64, 11);
    let out = train(&quick_config(2, 5e-3), &tiny(&reg), &data, &reg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.lmpt");
    save_checkpoint(&out.checkpoint, &path).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back, out.checkpoint);
    assert_eq!(back.to_bytes(), out.checkpoint.to_bytes());
    let loaded: LmptModel<f64> = back.load_model().unwrap();
    assert_eq!(loaded.params(), out.model.params());
    let cloud = &data[0].cloud;
    assert_eq!(loaded.forward(cloud, 0).unwrap(), out.model.forward(cloud, 0).unwrap());
}

#[test]
fn damaged_checkpoints_are_rejected() {
    let reg = human_registry(true);
    let model: LmptModel<f64> = LmptModel::new(tiny(&reg), 0).unwrap();
    let ck = Checkpoint::new(tiny(&reg), quick_config(1, 1e-3), reg, model.params());
    let bytes = ck.to_bytes();
    let mut flipped = bytes.clone();
    let last = flipped.len() - 3;
    flipped[last] ^= 0x10;
    assert!(matches!(Checkpoint::from_bytes(&flipped), Err(LmptError::Checkpoint(_))));
    assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() / 2]), Err(LmptError::Checkpoint(_))));
    let mut magic = bytes.clone();
    magic[0] = b'X';
    assert!(matches!(Checkpoint::from_bytes(&magic), Err(LmptError::Checkpoint(_))));
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(matches!(Checkpoint::from_bytes(&extra), Err(LmptError::Checkpoint(_))));
}

#[test]
fn f32_model_runs_from_an_f64_checkpoint() {
    let reg = human_registry(true);
    let model: LmptModel<f64> = LmptModel::new(tiny(&reg), 0).unwrap();
    let ck = Checkpoint::new(tiny(&reg), quick_config(1, 1e-3), reg.clone(), model.params());
    let small: LmptModel<f32> = ck.load_model().unwrap();
    let data = human_samples(1, 64, 12);
    let cloud: PointCloud<f32> = PointCloud::new(data[0].cloud.points().iter().map(|p| p.map(|v| v as f32)).collect()).unwrap();
    let a = small.forward(&cloud, 0).unwrap();
    let b = model.forward(&data[0].cloud, 0).unwrap();
    for (x, y) in a.data().iter().zip(b.data()) {
        assert!((*x as f64 - y).abs() < 1e-3);
    }
}
