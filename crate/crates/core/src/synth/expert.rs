use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::features::FeatureModel;
use super::world::{clauses_hold, env_step, norm, parse_goal, EnvState, Layout, Phase};
use super::SynthError;
use crate::trajectory::{Demonstration, Frame, OracleLabels};

/// Distance behind the object, away from the target site, where a push
/// starts. Outside the grasp radius and inside the contact radius.
pub const PUSH_STANDOFF: f64 = 0.06;

/// One step of a scripted program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Primitive {
    /// Move the open gripper to the object, displaced by `offset`.
    Reach { object: String, offset: [f64; 2] },
    Grasp { object: String },
    Transport { site: String },
    Release { object: String },
    /// Close the gripper while moving behind the object, then shove the
    /// object into the site.
    Push { object: String, site: String },
}

impl Primitive {
    /// The phase this primitive shows up as in the features.
    pub fn phase(&self) -> Phase {
        match self {
            Primitive::Reach { object, .. } => Phase::Reach(object.clone()),
            Primitive::Grasp { object } => Phase::Grasp(object.clone()),
            Primitive::Transport { site } => Phase::Transport(site.clone()),
            Primitive::Release { object } => Phase::Release(object.clone()),
            Primitive::Push { object, .. } => Phase::Push(object.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpertParams {
    pub speed: f64,
    pub tolerance: f64,
    pub action_noise: f64,
}

impl Default for ExpertParams {
    fn default() -> Self {
        Self {
            speed: 0.03,
            tolerance: 0.005,
            action_noise: 0.002,
        }
    }
}

/// Runs `program` from `init` with a proportional controller and records a
/// demonstration. Frame labels come from the rendered phase, so a boundary
/// sits wherever the feature prototype switches. Frame 0 shows the idle
/// phase and is labelled with the phase that follows it.
#[allow(clippy::too_many_arguments)]
pub fn scripted_demo(
    layout: &Layout,
    model: &FeatureModel,
    program: &[Primitive],
    goal_id: &str,
    init: EnvState,
    horizon: usize,
    params: &ExpertParams,
    seed: u64,
    class_of: &dyn Fn(&Phase) -> Option<u32>,
) -> Result<(Vec<Frame>, Vec<Phase>), SynthError> {
    let clauses = parse_goal(layout, goal_id)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, params.action_noise.max(0.0)).expect("finite noise");
    let jitter = |rng: &mut ChaCha8Rng| {
        if params.action_noise > 0.0 {
            noise.sample(rng)
        } else {
            0.0
        }
    };

    let mut state = init;
    let mut frames = Vec::new();
    let mut phases = Vec::new();
    let mut done = clauses_hold(layout, &state, &clauses);

    let mut act = |state: &mut EnvState, action: [f64; 3], rng: &mut ChaCha8Rng| -> Result<bool, SynthError> {
        if frames.len() + 1 >= horizon {
            return Err(SynthError::InfeasibleProgram(format!(
                "goal {goal_id} not reached within horizon {horizon}"
            )));
        }
        let feature = model.observe(state, rng)?;
        frames.push(Frame::new(
            frames.len() as u64,
            feature,
            state.proprio(layout),
            action.to_vec(),
        ));
        phases.push(state.phase.clone());
        *state = env_step(layout, state, &action);
        Ok(clauses_hold(layout, state, &clauses))
    };

    let step_toward = |from: [f64; 2], to: [f64; 2]| -> [f64; 2] {
        let d = [to[0] - from[0], to[1] - from[1]];
        let n = norm(d);
        let s = if n > params.speed { params.speed / n } else { 1.0 };
        [d[0] * s, d[1] * s]
    };

    for prim in program {
        if done {
            break;
        }
        let ticks = usize::from(layout.params.aperture_ticks);
        match prim {
            Primitive::Reach { object, offset } => {
                layout.check_object(object)?;
                loop {
                    let pos = state.objects[object];
                    let target = [pos[0] + offset[0], pos[1] + offset[1]];
                    if norm([target[0] - state.eef[0], target[1] - state.eef[1]]) < params.tolerance {
                        break;
                    }
                    let d = step_toward(state.eef, target);
                    let a = [d[0] + jitter(&mut rng), d[1] + jitter(&mut rng), 0.0];
                    done = act(&mut state, a, &mut rng)?;
                    if done {
                        break;
                    }
                }
            }
            Primitive::Grasp { object } => {
                layout.check_object(object)?;
                for _ in 0..ticks {
                    if state.aperture == 0 || done {
                        break;
                    }
                    let a = [jitter(&mut rng), jitter(&mut rng), -1.0];
                    done = act(&mut state, a, &mut rng)?;
                }
                if state.held.as_deref() != Some(object.as_str()) {
                    return Err(SynthError::InfeasibleProgram(format!("grasp of {object} missed")));
                }
            }
            Primitive::Transport { site } => {
                let center = layout.site(site)?.center;
                while !done && norm([center[0] - state.eef[0], center[1] - state.eef[1]]) >= params.tolerance {
                    let d = step_toward(state.eef, center);
                    let a = [d[0] + jitter(&mut rng), d[1] + jitter(&mut rng), 0.0];
                    done = act(&mut state, a, &mut rng)?;
                }
            }
            Primitive::Release { .. } => {
                for _ in 0..ticks {
                    if state.held.is_none() || done {
                        break;
                    }
                    let a = [jitter(&mut rng), jitter(&mut rng), 1.0];
                    done = act(&mut state, a, &mut rng)?;
                }
            }
            Primitive::Push { object, site } => {
                layout.check_object(object)?;
                let center = layout.site(site)?.center;
                let pos = state.objects[object];
                let d = [center[0] - pos[0], center[1] - pos[1]];
                let n = norm(d).max(f64::EPSILON);
                let behind = [pos[0] - PUSH_STANDOFF * d[0] / n, pos[1] - PUSH_STANDOFF * d[1] / n];
                while !done {
                    let far = norm([behind[0] - state.eef[0], behind[1] - state.eef[1]]) >= params.tolerance;
                    if !far && state.aperture == 0 {
                        break;
                    }
                    let m = if far { step_toward(state.eef, behind) } else { [0.0, 0.0] };
                    let grip = if state.aperture > 0 { -1.0 } else { 0.0 };
                    let a = [m[0] + jitter(&mut rng), m[1] + jitter(&mut rng), grip];
                    done = act(&mut state, a, &mut rng)?;
                }
                while !done {
                    let pos = state.objects[object];
                    if norm([center[0] - pos[0], center[1] - pos[1]]) < params.tolerance {
                        break;
                    }
                    let d = step_toward(pos, center);
                    let a = [d[0] + jitter(&mut rng), d[1] + jitter(&mut rng), 0.0];
                    done = act(&mut state, a, &mut rng)?;
                }
            }
        }
    }
    if !done {
        return Err(SynthError::InfeasibleProgram(format!(
            "program ended before goal {goal_id} held"
        )));
    }
    drop(act);

    // Label with the phase shown in each frame; the idle first frame takes the
    // label of its successor.
    let mut labels: Vec<Option<u32>> = phases.iter().map(class_of).collect();
    if phases.len() > 1 && phases[0] == Phase::Idle {
        labels[0] = labels[1];
    }
    let mut prev = None;
    let frames = frames
        .into_iter()
        .zip(labels)
        .enumerate()
        .map(|(i, (frame, label))| {
            let boundary = i > 0 && label != prev;
            prev = label;
            frame.with_oracle(OracleLabels {
                skill: label,
                boundary: Some(boundary),
            })
        })
        .collect();
    Ok((frames, phases))
}

/// Wraps [`scripted_demo`] output as a demonstration.
pub fn into_demo(demo_id: &str, task_id: &str, frames: Vec<Frame>) -> Demonstration {
    Demonstration {
        demo_id: demo_id.to_string(),
        task_id: task_id.to_string(),
        frames,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::world::initial_state;

    fn program() -> Vec<Primitive> {
        vec![
            Primitive::Reach {
                object: "A".into(),
                offset: [0.0, 0.0],
            },
            Primitive::Grasp { object: "A".into() },
            Primitive::Transport { site: "S1".into() },
            Primitive::Release { object: "A".into() },
        ]
    }

    fn run(sigma: f64, noise: f64, seed: u64) -> (Vec<Frame>, Vec<Phase>) {
        let layout = Layout::bundled();
        let model = FeatureModel::new(&layout, 32, 0.1, sigma, 9).unwrap();
        let init = initial_state(&layout, &mut ChaCha8Rng::seed_from_u64(4));
        let params = ExpertParams {
            action_noise: noise,
            ..ExpertParams::default()
        };
        let keys: Vec<String> = program().iter().map(|p| p.phase().key()).collect();
        let class_of = |p: &Phase| keys.iter().position(|k| *k == p.key()).map(|i| i as u32);
        scripted_demo(&layout, &model, &program(), "in:A:S1", init, 200, &params, seed, &class_of).unwrap()
    }

    #[test]
    fn pick_and_place_has_four_phases() {
        let (frames, phases) = run(0.02, 0.002, 1);
        let labels: Vec<u32> = frames.iter().map(|f| f.oracle().skill.unwrap()).collect();
        let mut runs = labels.clone();
        runs.dedup();
        assert_eq!(runs, vec![0, 1, 2, 3]);
        let boundaries: Vec<usize> = frames
            .iter()
            .enumerate()
            .filter(|(_, f)| f.oracle().boundary == Some(true))
            .map(|(i, _)| i)
            .collect();
        let switches: Vec<usize> = (1..labels.len()).filter(|&i| labels[i] != labels[i - 1]).collect();
        assert_eq!(boundaries, switches);
        assert_eq!(phases[0], Phase::Idle);
        assert_eq!(phases[1], Phase::Reach("A".into()));
    }

    #[test]
    fn noise_free_demos_ignore_seed() {
        assert_eq!(run(0.0, 0.0, 1).0, run(0.0, 0.0, 2).0);
        assert_ne!(run(0.02, 0.002, 1).0, run(0.02, 0.002, 2).0);
    }

    #[test]
    fn short_horizon_is_infeasible() {
        let layout = Layout::bundled();
        let model = FeatureModel::new(&layout, 32, 0.1, 0.0, 9).unwrap();
        let init = initial_state(&layout, &mut ChaCha8Rng::seed_from_u64(4));
        let r = scripted_demo(
            &layout,
            &model,
            &program(),
            "in:A:S1",
            init,
            5,
            &ExpertParams::default(),
            0,
            &|_| Some(0),
        );
        assert!(matches!(r, Err(SynthError::InfeasibleProgram(_))));
    }
}
