//! Acceptance gate. Each test prints one PASS line for its criterion; a
//! failed assertion marks the criterion failed. A global lock serializes the
//! criteria so internal wall-clock budgets are honest on a single core.

use std::sync::Mutex;
use std::time::Instant;

use nalgebra::Vector3;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use enforcenet_core::cloud::{generate_scene, lidar_subsample, PointCloud, SceneConfig};
use enforcenet_core::config::Config;
use enforcenet_core::dataset::{save_dataset, Split};
use enforcenet_core::gradcheck::{max_rel_grad_err, model_gradcheck};
use enforcenet_core::img::Image;
use enforcenet_core::localize::PoseModel;
use enforcenet_core::model::{EnforceModel, Mode};
use enforcenet_core::model_input::stack_batch_images;
use enforcenet_core::nn::tape::Tape;
use enforcenet_core::nn::tensor::Tensor;
use enforcenet_core::pipeline::{build_dataset, sample_frame_poses, scan_pose};
use enforcenet_core::projector::{
    project_depth, render_intensity, unproject, CameraIntrinsics, ClipPlanes,
};
use enforcenet_core::se3::{DeltaPose, Pose};
use enforcenet_core::similarity::grid_search_register;
use enforcenet_core::train::{
    batch_loss_graph, pose_loss, total_loss, train, value_loss, LossWeights, TrainConfig,
    ValueTarget,
};

static GATE: Mutex<()> = Mutex::new(());

fn gate() -> std::sync::MutexGuard<'static, ()> {
    GATE.lock().unwrap_or_else(|e| e.into_inner())
}

// ---------------------------------------------------------------------------
// 1. Gradient oracle: layers and the full combined loss against central
//    finite differences, >= 20 seeds, < 1 minute.
// ---------------------------------------------------------------------------

fn rand_tensor(shape: &[usize], lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_vec(
        shape,
        (0..shape.iter().product::<usize>())
            .map(|_| rng.random_range(lo..hi))
            .collect(),
    )
}

/// FD-checks d(weighted sum of output)/d(inputs) for a graph builder.
fn layer_fd_check<F>(inputs: &[Tensor], weight_range: (f64, f64), seed: u64, build: F) -> f64
where
    F: Fn(&mut Tape, &[enforcenet_core::nn::tape::NodeId]) -> enforcenet_core::nn::tape::NodeId,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
    // A fixed random weighting of the output catches gradients that are only
    // correct on average.
    let probe_shape = {
        let mut tape = Tape::new();
        let ids: Vec<_> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
        let out = build(&mut tape, &ids);
        tape.value(out).shape.clone()
    };
    let probe = rand_tensor(&probe_shape, weight_range.0, weight_range.1, &mut rng);

    let eval = |arrays: &[Tensor]| {
        let mut tape = Tape::new();
        let ids: Vec<_> = arrays.iter().map(|t| tape.leaf(t.clone(), true)).collect();
        let out = build(&mut tape, &ids);
        let p = tape.leaf(probe.clone(), false);
        let weighted = tape.mul(out, p)?;
        let s = tape.sum_all(weighted);
        Ok(tape.value(s).data[0])
    };
    let analytic: Vec<Tensor> = {
        let mut tape = Tape::new();
        let ids: Vec<_> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
        let out = build(&mut tape, &ids);
        let p = tape.leaf(probe.clone(), false);
        let weighted = tape.mul(out, p).unwrap();
        let s = tape.sum_all(weighted);
        tape.backward(s).unwrap();
        ids.iter()
            .zip(inputs)
            .map(|(&id, t)| match tape.grad(id) {
                Some(g) => g.clone(),
                None => Tensor::zeros(&t.shape),
            })
            .collect()
    };
    max_rel_grad_err(inputs, &analytic, eval, 6, 1e-5, seed).unwrap()
}

#[test]
fn criterion_1_gradient_oracle() {
    let _g = gate();
    let start = Instant::now();
    let tol = 1e-3;
    let mut worst = 0.0f64;
    let mut worst_by: std::collections::BTreeMap<&str, f64> = Default::default();
    let track = |name: &'static str, map: &mut std::collections::BTreeMap<&str, f64>, e: f64| {
        let entry = map.entry(name).or_insert(0.0);
        *entry = entry.max(e);
        e
    };

    for seed in 0..4u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Inputs kept away from the ReLU/abs kinks where the true derivative
        // is discontinuous and FD is undefined.
        let away = |t: &mut Tensor| {
            for v in &mut t.data {
                if v.abs() < 0.05 {
                    *v = 0.05 * v.signum() + if *v == 0.0 { 0.05 } else { 0.0 };
                }
            }
        };

        let mut x = rand_tensor(&[2, 3, 6, 5], -1.0, 1.0, &mut rng);
        away(&mut x);
        worst = worst.max(track("relu", &mut worst_by, layer_fd_check(&[x.clone()], (-1.0, 1.0), seed, |t, ids| {
            t.relu(ids[0])
        })));
        worst = worst.max(track("abs", &mut worst_by, layer_fd_check(&[x.clone()], (-1.0, 1.0), seed, |t, ids| {
            t.abs(ids[0])
        })));

        let w = rand_tensor(&[4, 3, 3, 3], -0.5, 0.5, &mut rng);
        let b = rand_tensor(&[4], -0.5, 0.5, &mut rng);
        worst = worst.max(track("conv2d", &mut worst_by, layer_fd_check(
            &[x.clone(), w, b],
            (-1.0, 1.0),
            seed,
            |t, ids| t.conv2d(ids[0], ids[1], ids[2], 2, 1).unwrap(),
        )));

        let gamma = rand_tensor(&[3], 0.5, 1.5, &mut rng);
        let beta = rand_tensor(&[3], -0.5, 0.5, &mut rng);
        worst = worst.max(track("batchnorm_train", &mut worst_by, layer_fd_check(
            &[x.clone(), gamma.clone(), beta.clone()],
            (-1.0, 1.0),
            seed,
            |t, ids| t.batchnorm_train(ids[0], ids[1], ids[2], 1e-5).unwrap().0,
        )));
        let rm: Vec<f64> = (0..3).map(|_| rng.random_range(-0.3..0.3)).collect();
        let rv: Vec<f64> = (0..3).map(|_| rng.random_range(0.5..1.5)).collect();
        worst = worst.max(track("batchnorm_eval", &mut worst_by, layer_fd_check(
            &[x.clone(), gamma, beta],
            (-1.0, 1.0),
            seed,
            |t, ids| {
                t.batchnorm_eval(ids[0], ids[1], ids[2], &rm, &rv, 1e-5)
                    .unwrap()
            },
        )));
        worst = worst.max(track("gap", &mut worst_by, layer_fd_check(&[x.clone()], (-1.0, 1.0), seed, |t, ids| {
            t.global_avg_pool(ids[0])
        })));

        let f = rand_tensor(&[2, 7], -1.0, 1.0, &mut rng);
        let dw = rand_tensor(&[4, 7], -0.5, 0.5, &mut rng);
        let db = rand_tensor(&[4], -0.5, 0.5, &mut rng);
        worst = worst.max(track("dense", &mut worst_by, layer_fd_check(
            &[f.clone(), dw, db],
            (-1.0, 1.0),
            seed,
            |t, ids| t.dense(ids[0], ids[1], ids[2]).unwrap(),
        )));
        let mut m = rand_tensor(&[3, 6], -1.0, 1.0, &mut rng);
        away(&mut m);
        worst = worst.max(track("slice_rows_norm", &mut worst_by, layer_fd_check(&[m.clone()], (-1.0, 1.0), seed, |t, ids| {
            let s = t.slice_cols(ids[0], 1, 3);
            t.rows_norm(s)
        })));
        let a = rand_tensor(&[5], -1.0, 1.0, &mut rng);
        let b2 = rand_tensor(&[5], -1.0, 1.0, &mut rng);
        worst = worst.max(track("sub_scale_mean", &mut worst_by, layer_fd_check(&[a, b2], (-1.0, 1.0), seed, |t, ids| {
            let s = t.sub(ids[0], ids[1]).unwrap();
            let sc = t.scale(s, 1.7);
            t.mean_all(sc)
        })));
    }

    for seed in 0..20u64 {
        worst = worst.max(track("full_loss", &mut worst_by, model_gradcheck(seed, 2).unwrap()));
    }

    let elapsed = start.elapsed().as_secs_f64();
    assert!(worst < tol, "worst relative gradient error {worst} ({worst_by:?})");
    assert!(elapsed < 60.0, "gradient oracle took {elapsed:.1}s");
    println!("[criterion 1] PASS gradient oracle: worst rel err {worst:.3e} in {elapsed:.1}s");
}

// ---------------------------------------------------------------------------
// 2. Projection oracle: back-projection within 1e-6 m; conv2d vs the naive
//    6-loop reference within 1e-10.
// ---------------------------------------------------------------------------

#[test]
fn criterion_2_projection_oracle() {
    let _g = gate();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut checked = 0usize;
    while checked < 1000 {
        let k = CameraIntrinsics {
            fx: rng.random_range(40.0..150.0),
            fy: rng.random_range(40.0..150.0),
            cx: rng.random_range(28.0..36.0),
            cy: rng.random_range(20.0..28.0),
            width: 64,
            height: 48,
        };
        let g = ClipPlanes {
            near: 0.3,
            far: 50.0,
        };
        let pose = Pose::from_euler(
            Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-3.0..3.0),
            ),
            Vector3::new(
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
            ),
        );
        // Points constructed on exact pixel rays at distinct pixels; the
        // z-buffer winner at each pixel must reconstruct its source point.
        let mut pixels = std::collections::HashSet::new();
        let mut sources = Vec::new();
        while sources.len() < 50 {
            let u = rng.random_range(0..k.width);
            let v = rng.random_range(0..k.height);
            if !pixels.insert((u, v)) {
                continue;
            }
            let z = rng.random_range(1.0..20.0);
            sources.push((u, v, z, unproject(u, v, z, &pose, &k)));
        }
        let cloud = PointCloud {
            points: sources.iter().map(|&(_, _, _, p)| p).collect(),
            intensity: None,
        };
        let depth = project_depth(&cloud, &pose, &k, &g);
        for &(u, v, z, src) in &sources {
            let d = depth.at(u, v);
            assert!(d > 0.0, "pixel ({u},{v}) lost its point");
            assert!((d - z).abs() < 1e-9);
            let back = unproject(u, v, d, &pose, &k);
            assert!(
                (back - src).norm() < 1e-6,
                "back-projection error {}",
                (back - src).norm()
            );
            checked += 1;
        }
    }

    let mut worst = 0.0f64;
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let x = rand_tensor(&[2, 3, 7, 6], -1.0, 1.0, &mut rng);
        let w = rand_tensor(&[4, 3, 3, 3], -1.0, 1.0, &mut rng);
        let b = rand_tensor(&[4], -1.0, 1.0, &mut rng);
        for (stride, padding) in [(1, 0), (1, 1), (2, 1)] {
            let mut tape = Tape::new();
            let xi = tape.leaf(x.clone(), false);
            let wi = tape.leaf(w.clone(), false);
            let bi = tape.leaf(b.clone(), false);
            let out = tape.conv2d(xi, wi, bi, stride, padding).unwrap();
            let reference = enforcenet_core::nn::tape::conv_reference(&x, &w, &b, stride, padding);
            for (a, r) in tape.value(out).data.iter().zip(&reference.data) {
                worst = worst.max((a - r).abs());
            }
        }
    }
    assert!(worst < 1e-10, "conv mismatch {worst}");
    println!(
        "[criterion 2] PASS projection oracle: {checked} back-projections within 1e-6 m, \
         conv vs reference within {worst:.3e}"
    );
}

// ---------------------------------------------------------------------------
// 3. Loss arithmetic hand cases.
// ---------------------------------------------------------------------------

#[test]
fn criterion_3_loss_arithmetic() {
    let _g = gate();
    let w = LossWeights::default();
    let pose = pose_loss(&[[0.1, 0.0, 0.0, 0.01, 0.0, 0.0]], &[[0.0; 6]], &w);
    assert!((pose - 1.1).abs() < 1e-12, "pose loss {pose}");
    let value = value_loss(&[0.0], &[-2.0], &w);
    assert!((value - 0.2).abs() < 1e-12, "value loss {value}");
    let total = total_loss(pose, value);
    assert!((total - 1.3).abs() < 1e-12, "total loss {total}");
    println!("[criterion 3] PASS loss arithmetic: 1.1 + 0.2 = {total}");
}

// ---------------------------------------------------------------------------
// 4. Resistor properties: stop-gradient, warmup equivalence, value branch
//    reaching backbone weights.
// ---------------------------------------------------------------------------

fn toy_batch(n: usize, seed: u64) -> (Tensor, Vec<[f64; 6]>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let imgs: Vec<(Image, Image)> = (0..n)
        .map(|_| {
            let mut img = || {
                Image::from_vec(16, 12, (0..192).map(|_| rng.random_range(0.0..1.0)).collect())
            };
            (img(), img())
        })
        .collect();
    let refs: Vec<(&Image, &Image)> = imgs.iter().map(|(a, b)| (a, b)).collect();
    let input = stack_batch_images(&refs).unwrap();
    let labels = (0..n)
        .map(|_| std::array::from_fn(|_| rng.random_range(-0.3..0.3)))
        .collect();
    (input, labels)
}

fn grads_under_total(model: &mut EnforceModel, input: &Tensor, labels: &[[f64; 6]]) -> Vec<Tensor> {
    let w = LossWeights::default();
    let mut tape = Tape::new();
    let x = tape.leaf(input.clone(), false);
    let h = model.forward(&mut tape, x, Mode::Train).unwrap();
    let loss = batch_loss_graph(
        &mut tape,
        h.pose,
        h.value,
        labels,
        &w,
        w.alpha3,
        ValueTarget::PredictionLoss,
    )
    .unwrap();
    tape.backward(loss.total).unwrap();
    model.collect_grads(&tape, &h)
}

#[test]
fn criterion_4_resistor_properties() {
    let _g = gate();
    let (input, labels) = toy_batch(3, 40);

    // (a) S_t stop-gradient: perturbing the value head must leave every
    // pose-path gradient bitwise unchanged under the combined loss.
    let mut a = EnforceModel::new(4);
    let mut b = EnforceModel::new(4);
    for v in &mut b.value_fc1.w.data {
        *v += 0.05;
    }
    for v in &mut b.value_fc2.w.data {
        *v -= 0.03;
    }
    let ga = grads_under_total(&mut a, &input, &labels);
    let gb = grads_under_total(&mut b, &input, &labels);
    let names: Vec<String> = a.named_params().iter().map(|(n, _)| n.clone()).collect();
    for (i, name) in names.iter().enumerate() {
        if name.starts_with("pose_fc") {
            assert_eq!(
                ga[i].data, gb[i].data,
                "{name} gradient changed with the value head"
            );
        }
    }

    // (b) Warmup trajectories are bitwise identical to alpha3 = 0.
    let samples: Vec<enforcenet_core::dataset::PairSample> = {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        (0..8)
            .map(|i| {
                let mut img = || {
                    Image::from_vec(16, 12, (0..192).map(|_| rng.random_range(0.0..1.0)).collect())
                };
                enforcenet_core::dataset::PairSample {
                    id: i,
                    intensity: img(),
                    depth: img(),
                    label: DeltaPose::from_array(std::array::from_fn(|_| {
                        rng.random_range(-0.3..0.3)
                    })),
                    meta: enforcenet_core::dataset::SampleMeta {
                        frame: i,
                        garage: 0,
                        trajectory: 0,
                    },
                }
            })
            .collect()
    };
    let base = TrainConfig {
        epochs: 3,
        batch_size: 4,
        seed: 13,
        ..TrainConfig::default()
    };
    let mut warm = EnforceModel::new(2);
    let mut plain = EnforceModel::new(2);
    train(
        &mut warm,
        &samples,
        &[],
        &TrainConfig {
            warmup_epochs: 3,
            ..base
        },
    )
    .unwrap();
    train(
        &mut plain,
        &samples,
        &[],
        &TrainConfig {
            warmup_epochs: 0,
            weights: LossWeights {
                alpha3: 0.0,
                ..LossWeights::default()
            },
            ..base
        },
    )
    .unwrap();
    for ((_, x), (_, y)) in warm.named_params().iter().zip(plain.named_params()) {
        assert_eq!(x.data, y.data, "warmup trajectory diverged from alpha3=0");
    }

    // (c) Value supervision reaches shared backbone weights.
    let mut m = EnforceModel::new(4);
    let w = LossWeights::default();
    let mut tape = Tape::new();
    let x = tape.leaf(input.clone(), false);
    let h = m.forward(&mut tape, x, Mode::Train).unwrap();
    let loss = batch_loss_graph(
        &mut tape,
        h.pose,
        h.value,
        &labels,
        &w,
        w.alpha3,
        ValueTarget::PredictionLoss,
    )
    .unwrap();
    tape.backward(loss.value).unwrap();
    let grads = m.collect_grads(&tape, &h);
    let conv1_norm: f64 = grads[0].data.iter().map(|g| g * g).sum::<f64>().sqrt();
    assert!(
        conv1_norm > 0.0,
        "value-branch gradient does not reach the backbone"
    );
    println!(
        "[criterion 4] PASS resistor properties: stop-gradient bitwise, warmup == alpha3=0, \
         value->backbone grad norm {conv1_norm:.3e}"
    );
}

// ---------------------------------------------------------------------------
// 5. Desk-scale convergence.
// ---------------------------------------------------------------------------

/// Desk-scale configuration. The criterion pins the scene extent, 16-beam
/// sparsity, 40 frames x 50 augmentations, 60/30/10 splits, batch 16,
/// lr 1e-3, 60 epochs, and warmup 10; everything below is a declared free
/// lever (camera, scan density, scene texture, loss weights, value target),
/// tuned in paired sweeps recorded in the project notes.
fn desk_config() -> Config {
    Config::parse(
        "camera.width = 48\n\
         camera.height = 36\n\
         camera.fx = 14\n\
         camera.fy = 14\n\
         camera.far = 25\n\
         scene.pillar_spacing = 2.5\n\
         scene.azimuth_step_deg = 0.25\n\
         render.inpaint_iters = 40\n\
         train.alpha1 = 100\n\
         train.alpha2 = 100\n\
         train.value_target = ground-truth-loss\n",
    )
    .unwrap()
}

#[test]
fn criterion_5_desk_scale_convergence() {
    let _g = gate();
    let start = Instant::now();
    let cfg = desk_config();
    let built = build_dataset(&cfg, 50, 40, (0.6, 0.3, 0.1)).unwrap();
    assert!(built.train.len() + built.val.len() + built.test.len() + built.skipped_renders == 2000);

    let train_cfg = cfg.train_config(50).unwrap();
    let mut model = EnforceModel::new(50);
    let logs = train(&mut model, &built.train, &built.val, &train_cfg).unwrap();
    let first = logs.first().unwrap().train_pose;
    let last = logs.last().unwrap().train_pose;

    let mut trans_errs: Vec<f64> = built
        .test
        .iter()
        .map(|s| {
            let (pred, _) = model.predict(&s.intensity, &s.depth).unwrap();
            (pred.d_translation - s.label.d_translation).norm()
        })
        .collect();
    trans_errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = trans_errs[trans_errs.len() / 2];
    let elapsed = start.elapsed().as_secs_f64();

    println!(
        "[criterion 5] measured: pose loss {first:.3} -> {last:.3} (ratio {:.3}), held-out \
         median trans err {median:.3} m, {elapsed:.0}s",
        last / first
    );
    assert!(median <= 0.15, "held-out median translation error {median}");
    assert!(elapsed <= 1800.0, "desk-scale run took {elapsed:.0}s");
    // Known red: with Eq.-7-style unsquared norms every sample contributes a
    // constant-magnitude gradient, so under the pinned constant lr the
    // training loss plateaus at a fixed fraction of its starting value
    // (rotation improves ~10x, translation ~5x at this scale). No loss
    // weighting satisfies both this ratio and the 0.15 m translation target;
    // see the analysis in the project notes.
    assert!(
        last <= 0.1 * first,
        "train pose loss {last} vs 0.1x epoch-1 {first}"
    );
    println!(
        "[criterion 5] PASS desk-scale: pose loss {first:.3} -> {last:.3}, held-out median \
         trans err {median:.3} m, {elapsed:.0}s"
    );
}

// ---------------------------------------------------------------------------
// 6. Resistor ablation over 5 seeds.
// ---------------------------------------------------------------------------

#[test]
fn criterion_6_resistor_ablation() {
    let _g = gate();
    // Same free-lever choices as the desk-scale criterion, at reduced size so
    // ten trainings stay tractable.
    let cfg = Config::parse(
        "camera.width = 48\n\
         camera.height = 36\n\
         camera.fx = 14\n\
         camera.fy = 14\n\
         camera.far = 25\n\
         scene.pillar_spacing = 2.5\n\
         scene.azimuth_step_deg = 0.25\n\
         render.inpaint_iters = 40\n\
         train.alpha1 = 100\n\
         train.alpha2 = 100\n\
         train.value_target = ground-truth-loss\n\
         augment.samples_per_frame = 20\n",
    )
    .unwrap();
    let built = build_dataset(&cfg, 60, 24, (0.6, 0.3, 0.1)).unwrap();
    let shared = cfg.train_config(0).unwrap();
    let epochs = 40;
    let mut wins = 0;
    let mut reached = 0;
    for seed in 0..5u64 {
        let base = TrainConfig {
            epochs,
            warmup_epochs: 10,
            seed: 600 + seed,
            ..shared
        };
        let mut enforce = EnforceModel::new(seed);
        let enforce_logs = train(&mut enforce, &built.train, &built.val, &base).unwrap();
        let mut plain = EnforceModel::new(seed);
        let plain_logs = train(
            &mut plain,
            &built.train,
            &built.val,
            &TrainConfig {
                warmup_epochs: 0,
                weights: LossWeights {
                    alpha3: 0.0,
                    ..base.weights
                },
                ..base
            },
        )
        .unwrap();
        let plain_final = plain_logs.last().unwrap().val_pose;
        let enforce_final = enforce_logs.last().unwrap().val_pose;
        if enforce_final <= plain_final {
            wins += 1;
        }
        if enforce_logs
            .iter()
            .any(|l| l.val_pose <= plain_final && l.epoch <= plain_logs.len())
        {
            reached += 1;
        }
        println!(
            "  seed {seed}: enforce {enforce_final:.4} vs plain {plain_final:.4}"
        );
    }
    assert!(reached >= 4, "reached plain's final val loss on {reached}/5 seeds");
    assert!(wins >= 4, "final val loss better on only {wins}/5 seeds");
    println!("[criterion 6] PASS resistor ablation: {wins}/5 final-loss wins, {reached}/5 reached");
}

// ---------------------------------------------------------------------------
// 7. Classical baseline finding: dense vs sparse grid-search registration.
// ---------------------------------------------------------------------------

#[test]
fn criterion_7_baseline_dense_vs_sparse() {
    let _g = gate();
    let k = CameraIntrinsics::default();
    let g = ClipPlanes::default();
    let mut grid = Vec::new();
    for i in -10i32..=10 {
        grid.push(DeltaPose::from_array([i as f64 * 0.1, 0.0, 0.0, 0.0, 0.0, 0.0]));
    }
    let zero_index = grid.iter().position(|d| d.norm() == 0.0).unwrap();

    let scenes = 50;
    let mut dense_hits = 0;
    let mut sparse_hits = 0;
    for seed in 0..scenes as u64 {
        let scene_cfg = SceneConfig {
            seed,
            ..SceneConfig::default()
        };
        let dense = generate_scene(&scene_cfg).unwrap();
        let sparse = lidar_subsample(&dense, &scan_pose(&scene_cfg), 16, 1.0_f64.to_radians());
        let mut rng = ChaCha8Rng::seed_from_u64(7000 + seed);
        let pose = sample_frame_poses(&scene_cfg, 1, &mut rng)[0];
        let intensity = render_intensity(&dense, &pose, &k, &g, 1).unwrap();
        let dense_result = grid_search_register(&intensity, &dense, &pose, &grid, &k, &g, 32);
        let sparse_result = grid_search_register(&intensity, &sparse, &pose, &grid, &k, &g, 32);
        if dense_result.best_index == zero_index {
            dense_hits += 1;
        }
        if sparse_result.best_index == zero_index {
            sparse_hits += 1;
        }
    }
    let dense_rate = dense_hits as f64 / scenes as f64;
    let sparse_rate = sparse_hits as f64 / scenes as f64;
    assert!(
        dense_rate - sparse_rate >= 0.30,
        "dense {dense_rate:.2} vs sparse {sparse_rate:.2}: gap below 30 pp"
    );
    println!(
        "[criterion 7] PASS baseline finding: dense argmax-at-zero {dense_rate:.2} vs sparse \
         {sparse_rate:.2}"
    );
}

// ---------------------------------------------------------------------------
// 8. End-to-end determinism.
// ---------------------------------------------------------------------------

#[test]
fn criterion_8_end_to_end_determinism() {
    let _g = gate();
    let cfg = Config::parse(
        "camera.width = 32\n\
         camera.height = 24\n\
         augment.samples_per_frame = 2\n",
    )
    .unwrap();
    let run = || {
        let built = build_dataset(&cfg, 80, 10, (0.6, 0.3, 0.1)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(
            dir.path(),
            &[
                (&built.train, Split::Train),
                (&built.val, Split::Val),
                (&built.test, Split::Test),
            ],
            &built.frame_poses,
        )
        .unwrap();
        let index = std::fs::read(dir.path().join("index.csv")).unwrap();
        let mut model = EnforceModel::new(80);
        train(
            &mut model,
            &built.train,
            &built.val,
            &TrainConfig {
                epochs: 2,
                warmup_epochs: 1,
                seed: 80,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        let ckpt_path = dir.path().join("m.ckpt");
        model.save(&ckpt_path).unwrap();
        let ckpt = std::fs::read(&ckpt_path).unwrap();
        let table = enforcenet_core::localize::evaluate(&mut model, &built.test).unwrap();
        (index, ckpt, table.to_csv())
    };
    let (index_a, ckpt_a, csv_a) = run();
    let (index_b, ckpt_b, csv_b) = run();
    assert_eq!(index_a, index_b, "dataset index differs between runs");
    assert_eq!(ckpt_a, ckpt_b, "checkpoint differs between runs");
    assert_eq!(csv_a, csv_b, "error table differs between runs");
    println!("[criterion 8] PASS determinism: identical index, checkpoint, and error table");
}
