use enforcenet_core::cloud::SceneConfig;
use enforcenet_core::pipeline::sample_frame_poses;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let cfg = SceneConfig { seed: 50, ..SceneConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(51); // build_dataset uses seed+1 for poses
    let poses = sample_frame_poses(&cfg, 40, &mut rng);
    for (i, p) in poses.iter().enumerate() {
        let (r, _) = enforcenet_core::se3::matrix_to_euler(&p.rotation);
        println!("frame {i:2}: x {:5.2} y {:5.2} yaw {:6.2}", p.translation.x, p.translation.y, r.z);
    }
}
