use enforcenet_core::config::Config;
use enforcenet_core::localize::PoseModel;
use enforcenet_core::model::EnforceModel;
use enforcenet_core::pipeline::build_dataset;
use enforcenet_core::train::train;

fn med(v: &mut Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[v.len() / 2]
}

fn run_seed(name: &str, cfg_text: &str, seed: u64) {
    let t0 = std::time::Instant::now();
    let cfg = Config::parse(cfg_text).unwrap();
    let built = build_dataset(&cfg, seed, 40, (0.6, 0.3, 0.1)).unwrap();
    let train_cfg = cfg.train_config(seed).unwrap();
    let mut model = EnforceModel::new(seed);
    let logs = train(&mut model, &built.train, &built.val, &train_cfg).unwrap();

    let mut comp: [Vec<f64>; 6] = Default::default();
    let mut per_frame: std::collections::BTreeMap<usize, Vec<f64>> = Default::default();
    let mut te = Vec::new();
    for s in &built.test {
        let (p, _) = model.predict(&s.intensity, &s.depth).unwrap();
        let e = p.as_array();
        let l = s.label.as_array();
        for i in 0..6 {
            comp[i].push((e[i] - l[i]).abs());
        }
        let t = (p.d_translation - s.label.d_translation).norm();
        te.push(t);
        per_frame.entry(s.meta.frame).or_default().push(t);
    }
    let comp_meds: Vec<String> = comp.iter_mut().map(|c| format!("{:.3}", med(c))).collect();
    let frames: Vec<String> = per_frame
        .iter_mut()
        .map(|(f, v)| format!("f{f}:{:.3}", med(v)))
        .collect();
    println!(
        "{name}: loss {:.2}->{:.2} | test med trans {:.3} | comps [dx dy dz dr dp dyw] {} | frames {} | {:.0}s",
        logs.first().unwrap().train_pose, logs.last().unwrap().train_pose,
        med(&mut te), comp_meds.join(" "), frames.join(" "), t0.elapsed().as_secs_f64()
    );
}

fn main() {
    let base = "camera.width = 48\ncamera.height = 36\ncamera.fx = 24\ncamera.fy = 24\nscene.pillar_spacing = 2.5\ncamera.far = 25\nscene.azimuth_step_deg = 0.25\nrender.inpaint_iters = 40\ntrain.alpha1 = 100\ntrain.alpha2 = 100\n";
    let gt = "train.value_target = ground-truth-loss\n";
    let cam = "camera.fx = 14\ncamera.fy = 14\n";
    let name = std::env::var("DBG_EPS").unwrap_or_default();
    run_seed(&format!("bal_eps{name}"), &format!("{base}{gt}{cam}"), 50);
}
