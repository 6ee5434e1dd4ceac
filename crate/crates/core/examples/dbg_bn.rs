use enforcenet_core::config::Config;
use enforcenet_core::model::EnforceModel;
use enforcenet_core::pipeline::build_dataset;
use enforcenet_core::train::{train, LossWeights, TrainConfig, ValueTarget};

fn main() {
    let cfg = Config::parse(
        "camera.width = 48\ncamera.height = 36\ncamera.fx = 14\ncamera.fy = 14\nscene.pillar_spacing = 2.5\ncamera.far = 25\nscene.azimuth_step_deg = 0.25\nrender.inpaint_iters = 40\naugment.samples_per_frame = 20\ntrain.alpha1 = 100\ntrain.alpha2 = 100\n",
    )
    .unwrap();
    let built = build_dataset(&cfg, 60, 24, (0.6, 0.3, 0.1)).unwrap();
    println!("train {} val {}", built.train.len(), built.val.len());
    for vt in [ValueTarget::PredictionLoss, ValueTarget::GroundTruthLoss] {
        let mut wins = 0;
        let mut reached = 0;
        for seed in 0..5u64 {
            let base = TrainConfig {
                epochs: 40,
                warmup_epochs: 10,
                seed: 600 + seed,
                value_target: vt,
                weights: cfg.train_config(0).unwrap().weights,
                ..TrainConfig::default()
            };
            let mut enforce = EnforceModel::new(seed);
            let el = train(&mut enforce, &built.train, &built.val, &base).unwrap();
            let mut plain = EnforceModel::new(seed);
            let pl = train(
                &mut plain,
                &built.train,
                &built.val,
                &TrainConfig {
                    warmup_epochs: 0,
                    weights: LossWeights { alpha3: 0.0, ..cfg.train_config(0).unwrap().weights },
                    ..base
                },
            )
            .unwrap();
            let pf = pl.last().unwrap().val_pose;
            let ef = el.last().unwrap().val_pose;
            if ef <= pf { wins += 1; }
            if el.iter().any(|l| l.val_pose <= pf && l.epoch <= pl.len()) { reached += 1; }
            println!("  {vt:?} seed {seed}: enforce {ef:.4} plain {pf:.4}");
        }
        println!("{vt:?}: wins {wins}/5 reached {reached}/5");
    }
}
