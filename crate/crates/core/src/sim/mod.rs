//! Deterministic world simulation: robot kinematics, scripted agents, static
//! obstacles and the synthetic LIDAR / camera sensors.

mod camera;
mod lidar;
mod world;

pub use camera::{simulate_camera, BBox, CameraConfig, Detection};
pub use lidar::{simulate_lidar, LidarConfig, Scan, ScanPoint};
pub use world::{
    step_unicycle, Agent, AgentId, ControlInput, Obstacle, Role, TimedPose, WorldState,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Independent RNG stream per (run seed, consumer, step).
pub fn stream_rng(seed: u64, stream: u64, step: u64) -> ChaCha8Rng {
    // splitmix64 finalizer over the packed key
    let mut z = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(stream.wrapping_mul(0xBF58_476D_1CE4_E5B9))
        .wrapping_add(step.wrapping_mul(0x94D0_49BB_1331_11EB));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    ChaCha8Rng::seed_from_u64(z)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorConfig {
    pub lidar: LidarConfig,
    pub camera: CameraConfig,
}
