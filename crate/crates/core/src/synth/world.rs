use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SynthError;

/// Motions slower than this count as standing still for phase tracking.
const MOVE_EPS: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub center: [f64; 2],
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldParams {
    pub step_max: f64,
    pub grasp_radius: f64,
    pub contact_radius: f64,
    /// Gripper travel from closed (0) to open, in ticks of one step each.
    pub aperture_ticks: u8,
    pub home: [f64; 2],
    pub home_jitter: f64,
    pub object_jitter: f64,
}

impl Default for WorldParams {
    fn default() -> Self {
        Self {
            step_max: 0.05,
            grasp_radius: 0.04,
            contact_radius: 0.07,
            aperture_ticks: 10,
            home: [0.5, 0.5],
            home_jitter: 0.05,
            object_jitter: 0.015,
        }
    }
}

/// Static description of the tabletop: nominal object positions and sites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub objects: BTreeMap<String, [f64; 2]>,
    pub sites: BTreeMap<String, Site>,
    pub params: WorldParams,
}

impl Layout {
    pub fn bundled() -> Self {
        let objects = [("A", [0.3, 0.3]), ("B", [0.7, 0.3])]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        let sites = [
            ("S1", [0.2, 0.8]),
            ("S2", [0.8, 0.8]),
            ("S3", [0.5, 0.9]),
            ("S4", [0.08, 0.5]),
            ("S5", [0.9, 0.1]),
        ]
        .into_iter()
        .map(|(k, c)| (k.to_string(), Site { center: c, radius: 0.08 }))
        .collect();
        Self {
            objects,
            sites,
            params: WorldParams::default(),
        }
    }

    pub fn site(&self, id: &str) -> Result<&Site, SynthError> {
        self.sites.get(id).ok_or_else(|| SynthError::UnknownSite(id.to_string()))
    }

    pub fn check_object(&self, id: &str) -> Result<(), SynthError> {
        if self.objects.contains_key(id) {
            Ok(())
        } else {
            Err(SynthError::UnknownObject(id.to_string()))
        }
    }
}

/// The most recent kind of activity, inferred from state changes. The
/// feature model renders it as a semantic prototype.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Idle,
    Reach(String),
    Grasp(String),
    Transport(String),
    Release(String),
    Push(String),
}

impl Phase {
    pub fn key(&self) -> String {
        match self {
            Phase::Idle => "idle".into(),
            Phase::Reach(o) => format!("reach:{o}"),
            Phase::Grasp(o) => format!("grasp:{o}"),
            Phase::Transport(s) => format!("transport:{s}"),
            Phase::Release(o) => format!("release:{o}"),
            Phase::Push(o) => format!("push:{o}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gripper {
    Open,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub eef: [f64; 2],
    /// 0 is fully closed, `aperture_ticks` fully open.
    pub aperture: u8,
    pub held: Option<String>,
    pub objects: BTreeMap<String, [f64; 2]>,
    pub t: usize,
    pub phase: Phase,
}

impl EnvState {
    pub fn gripper(&self, layout: &Layout) -> Gripper {
        if self.aperture == layout.params.aperture_ticks {
            Gripper::Open
        } else {
            Gripper::Closed
        }
    }

    pub fn proprio(&self, layout: &Layout) -> Vec<f64> {
        vec![
            self.eef[0],
            self.eef[1],
            f64::from(self.aperture) / f64::from(layout.params.aperture_ticks),
        ]
    }
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

pub(crate) fn norm(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

fn cos(a: [f64; 2], b: [f64; 2]) -> f64 {
    let n = norm(a) * norm(b);
    if n < 1e-12 {
        -1.0
    } else {
        (a[0] * b[0] + a[1] * b[1]) / n
    }
}

fn jitter(p: [f64; 2], amount: f64, rng: &mut ChaCha8Rng) -> [f64; 2] {
    if amount <= 0.0 {
        return p;
    }
    [
        p[0] + rng.random_range(-amount..=amount),
        p[1] + rng.random_range(-amount..=amount),
    ]
}

/// Samples the start state: gripper open at a jittered home pose, objects
/// jittered around their nominal positions.
pub fn initial_state(layout: &Layout, rng: &mut ChaCha8Rng) -> EnvState {
    let p = &layout.params;
    let eef = jitter(p.home, p.home_jitter, rng);
    let objects = layout
        .objects
        .iter()
        .map(|(id, &pos)| (id.clone(), jitter(pos, p.object_jitter, rng)))
        .collect();
    EnvState {
        eef,
        aperture: p.aperture_ticks,
        held: None,
        objects,
        t: 0,
        phase: Phase::Idle,
    }
}

fn nearest_object(state: &EnvState, at: [f64; 2]) -> Option<(&String, f64)> {
    state
        .objects
        .iter()
        .map(|(id, &pos)| (id, norm(sub(pos, at))))
        .min_by(|a, b| a.1.total_cmp(&b.1))
}

/// Applies `(dx, dy, grip)`. Motion is clipped to `step_max` per axis and to
/// the unit square; `grip > 0.5` opens one tick, `grip < -0.5` closes one.
pub fn env_step(layout: &Layout, state: &EnvState, action: &[f64]) -> EnvState {
    let p = &layout.params;
    let mut next = state.clone();
    next.t += 1;
    let get = |i: usize| action.get(i).copied().filter(|v| v.is_finite()).unwrap_or(0.0);
    let dx = get(0).clamp(-p.step_max, p.step_max);
    let dy = get(1).clamp(-p.step_max, p.step_max);
    let grip = get(2);

    next.eef = [(state.eef[0] + dx).clamp(0.0, 1.0), (state.eef[1] + dy).clamp(0.0, 1.0)];
    let delta = sub(next.eef, state.eef);

    if grip > 0.5 && next.aperture < p.aperture_ticks {
        next.aperture += 1;
    } else if grip < -0.5 && next.aperture > 0 {
        next.aperture -= 1;
    }

    match &state.held {
        Some(id) => {
            next.objects.insert(id.clone(), next.eef);
            if next.aperture == p.aperture_ticks {
                next.held = None;
            }
        }
        None => {
            if next.aperture == 0 && state.aperture > 0 {
                if let Some((id, d)) = nearest_object(state, next.eef) {
                    if d <= p.grasp_radius {
                        let id = id.clone();
                        next.objects.insert(id.clone(), next.eef);
                        next.held = Some(id);
                    }
                }
            } else if state.aperture == 0 && norm(delta) > 0.0 {
                let pushed = state
                    .objects
                    .iter()
                    .filter(|(_, &pos)| {
                        let rel = sub(pos, state.eef);
                        norm(rel) <= p.contact_radius && rel[0] * delta[0] + rel[1] * delta[1] > 0.0
                    })
                    .min_by(|a, b| norm(sub(*a.1, state.eef)).total_cmp(&norm(sub(*b.1, state.eef))))
                    .map(|(id, _)| id.clone());
                if let Some(id) = pushed {
                    let pos = next.objects[&id];
                    next.objects.insert(
                        id,
                        [(pos[0] + delta[0]).clamp(0.0, 1.0), (pos[1] + delta[1]).clamp(0.0, 1.0)],
                    );
                }
            }
        }
    }

    next.phase = infer_phase(layout, state, &next, delta);
    next
}

fn infer_phase(layout: &Layout, prev: &EnvState, next: &EnvState, delta: [f64; 2]) -> Phase {
    let p = &layout.params;
    if norm(delta) > MOVE_EPS {
        if prev.held.is_some() {
            let site = layout
                .sites
                .iter()
                .max_by(|a, b| {
                    cos(delta, sub(a.1.center, prev.eef)).total_cmp(&cos(delta, sub(b.1.center, prev.eef)))
                })
                .map(|(id, _)| id.clone());
            return site.map_or(prev.phase.clone(), Phase::Transport);
        }
        let target = prev
            .objects
            .iter()
            .max_by(|a, b| cos(delta, sub(*a.1, prev.eef)).total_cmp(&cos(delta, sub(*b.1, prev.eef))))
            .map(|(id, _)| id.clone());
        let phase = if next.aperture < p.aperture_ticks {
            Phase::Push
        } else {
            Phase::Reach
        };
        return target.map_or(prev.phase.clone(), phase);
    }
    let Some((id, d)) = nearest_object(next, next.eef) else {
        return prev.phase.clone();
    };
    if next.aperture < prev.aperture {
        if d <= p.grasp_radius || next.held.is_some() {
            Phase::Grasp(id.clone())
        } else {
            Phase::Push(id.clone())
        }
    } else if next.aperture > prev.aperture {
        Phase::Release(id.clone())
    } else {
        prev.phase.clone()
    }
}

/// One conjunct of a goal: `in:OBJ:SITE`, the object resting (not held)
/// inside the site.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoalClause {
    pub object: String,
    pub site: String,
}

/// Parses `in:A:S1` or a conjunction `in:A:S1&in:B:S2`.
pub fn parse_goal(layout: &Layout, goal_id: &str) -> Result<Vec<GoalClause>, SynthError> {
    goal_id
        .split('&')
        .map(|clause| {
            let parts: Vec<&str> = clause.trim().split(':').collect();
            match parts.as_slice() {
                ["in", obj, site] => {
                    layout.check_object(obj)?;
                    layout.site(site)?;
                    Ok(GoalClause {
                        object: obj.to_string(),
                        site: site.to_string(),
                    })
                }
                _ => Err(SynthError::UnknownGoal(goal_id.to_string())),
            }
        })
        .collect()
}

pub fn clauses_hold(layout: &Layout, state: &EnvState, clauses: &[GoalClause]) -> bool {
    clauses.iter().all(|c| {
        let site = &layout.sites[&c.site];
        let pos = state.objects[&c.object];
        state.held.as_deref() != Some(c.object.as_str()) && norm(sub(pos, site.center)) <= site.radius
    })
}

pub fn goal_check(layout: &Layout, state: &EnvState, goal_id: &str) -> Result<bool, SynthError> {
    Ok(clauses_hold(layout, state, &parse_goal(layout, goal_id)?))
}
