use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::world::{EnvState, Layout, Phase};
use super::SynthError;

/// Largest |cos| tolerated between two prototypes.
pub const MAX_PROTOTYPE_COS: f64 = 0.3;

/// `n` orthonormal vectors in `R^dim` from Gram-Schmidt on seeded Gaussians.
pub fn orthonormal_prototypes(n: usize, dim: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>, SynthError> {
    if n > dim {
        return Err(SynthError::TooManyPrototypes { needed: n, dim });
    }
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    while basis.len() < n {
        let mut v: Vec<f64> = (0..dim).map(|_| normal.sample(rng)).collect();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
        let len = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if len > 1e-6 {
            v.iter_mut().for_each(|x| *x /= len);
            basis.push(v);
        }
    }
    Ok(basis)
}

/// Renders a state as `prototype(phase) + gamma * pose + noise`, the
/// stand-in for a frozen vision embedding. `pose` lists the gripper and
/// object coordinates, zero-padded to the feature width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureModel {
    pub dim: usize,
    pub gamma: f64,
    pub sigma: f64,
    pub prototypes: BTreeMap<String, Vec<f64>>,
}

/// Every phase the layout can produce.
pub fn phase_catalog(layout: &Layout) -> Vec<Phase> {
    let mut phases = vec![Phase::Idle];
    for o in layout.objects.keys() {
        phases.push(Phase::Reach(o.clone()));
        phases.push(Phase::Grasp(o.clone()));
        phases.push(Phase::Release(o.clone()));
        phases.push(Phase::Push(o.clone()));
    }
    for s in layout.sites.keys() {
        phases.push(Phase::Transport(s.clone()));
    }
    phases
}

impl FeatureModel {
    pub fn new(layout: &Layout, dim: usize, gamma: f64, sigma: f64, seed: u64) -> Result<Self, SynthError> {
        let phases = phase_catalog(layout);
        if 2 + 2 * layout.objects.len() > dim {
            return Err(SynthError::TooManyPrototypes {
                needed: 2 + 2 * layout.objects.len(),
                dim,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vectors = orthonormal_prototypes(phases.len(), dim, &mut rng)?;
        let model = Self {
            dim,
            gamma,
            sigma,
            prototypes: phases.iter().map(Phase::key).zip(vectors).collect(),
        };
        let worst = model.max_abs_cos();
        if worst > MAX_PROTOTYPE_COS {
            return Err(SynthError::PrototypesNotSeparated(worst));
        }
        Ok(model)
    }

    pub fn max_abs_cos(&self) -> f64 {
        let v: Vec<&Vec<f64>> = self.prototypes.values().collect();
        let mut worst: f64 = 0.0;
        for i in 0..v.len() {
            for j in i + 1..v.len() {
                let dot: f64 = v[i].iter().zip(v[j]).map(|(a, b)| a * b).sum();
                worst = worst.max(dot.abs());
            }
        }
        worst
    }

    pub fn prototype(&self, phase: &Phase) -> Result<&[f64], SynthError> {
        self.prototypes
            .get(&phase.key())
            .map(Vec::as_slice)
            .ok_or_else(|| SynthError::UnknownPhase(phase.key()))
    }

    pub fn observe(&self, state: &EnvState, rng: &mut ChaCha8Rng) -> Result<Vec<f64>, SynthError> {
        let mut f = self.prototype(&state.phase)?.to_vec();
        let pose = std::iter::once(state.eef).chain(state.objects.values().copied());
        for (i, v) in pose.flat_map(|p| p.into_iter()).enumerate() {
            f[i] += self.gamma * v;
        }
        if self.sigma > 0.0 {
            let noise = Normal::new(0.0, self.sigma).expect("finite sigma");
            f.iter_mut().for_each(|x| *x += noise.sample(rng));
        }
        Ok(f)
    }
}
