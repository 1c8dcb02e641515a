//! Fixed inputs shared by the benchmarks.

use ferromanip::controller::ServoScene;
use ferromanip::rig::default_rig;
use ferromanip::{Vec2, VelocityModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` reproducible controller scenes with particle and target inside the workspace.
pub fn scenes(n: usize, seed: u64) -> Vec<ServoScene> {
    let cfg = default_rig();
    let model = VelocityModel::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut point = move || {
        let r = 3.9 * rng.random::<f64>().sqrt();
        let a = std::f64::consts::TAU * rng.random::<f64>();
        Vec2::new(r * a.cos(), r * a.sin())
    };
    (0..n)
        .map(|_| {
            ServoScene::new(point(), point(), &cfg, &model, 1.43)
                .expect("points lie in the workspace")
        })
        .collect()
}
