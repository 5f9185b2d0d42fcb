//! Motion-capture stand-in: truth plus white Gaussian noise on position
//! and Euler angles. Velocity and body rates pass through untouched.

use hopper_core::rigid_body::{euler_zyx_from_rotation, rotation_from_euler_zyx, RigidBodyState, Vec3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::NoiseConfig;

pub struct SensorChannel {
    position: Option<Normal<f64>>,
    attitude: Option<Normal<f64>>,
    rng: ChaCha8Rng,
}

impl SensorChannel {
    pub fn new(noise: &NoiseConfig, seed: u64) -> Self {
        let normal = |std: f64| (noise.enabled && std > 0.0).then(|| Normal::new(0.0, std).expect("finite std"));
        Self {
            position: normal(noise.position_std),
            attitude: normal(noise.attitude_std_deg.to_radians()),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn noiseless() -> Self {
        Self {
            position: None,
            attitude: None,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    pub fn is_noiseless(&self) -> bool {
        self.position.is_none() && self.attitude.is_none()
    }

    pub fn measure(&mut self, truth: &RigidBodyState) -> RigidBodyState {
        let mut out = *truth;
        if let Some(n) = self.position {
            out.position += Vec3::new(n.sample(&mut self.rng), n.sample(&mut self.rng), n.sample(&mut self.rng));
        }
        if let Some(n) = self.attitude {
            // falls back to truth at the gimbal-lock singularity
            if let Ok((phi, theta, psi)) = euler_zyx_from_rotation(&truth.attitude) {
                out.attitude = rotation_from_euler_zyx(
                    phi + n.sample(&mut self.rng),
                    theta + n.sample(&mut self.rng),
                    psi + n.sample(&mut self.rng),
                );
            }
        }
        out
    }
}
