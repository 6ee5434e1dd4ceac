use enforcenet_core::config::Config;
use enforcenet_core::pipeline::build_dataset;

fn main() {
    for (name, extra) in [
        ("az1.0_inp8", ""),
        ("az0.25_inp40", "scene.azimuth_step_deg = 0.25\nrender.inpaint_iters = 40\n"),
    ] {
        let base = "camera.width = 48\ncamera.height = 36\ncamera.fx = 24\ncamera.fy = 24\nrender.inpaint_iters = 8\nscene.pillar_spacing = 2.5\ncamera.far = 25\naugment.samples_per_frame = 4\n";
        let cfg = Config::parse(&format!("{base}{extra}")).unwrap();
        let built = build_dataset(&cfg, 50, 8, (0.6, 0.3, 0.1)).unwrap();
        let mut cov = 0.0;
        let mut n = 0;
        for s in built.train.iter().chain(&built.val).chain(&built.test) {
            let nz = s.depth.data.iter().filter(|v| **v > 1e-9).count();
            cov += nz as f64 / s.depth.data.len() as f64;
            n += 1;
        }
        println!("{name}: sparse pts {} mean depth coverage {:.3} over {n} samples", built.sparse.len(), cov / n as f64);
    }
}
