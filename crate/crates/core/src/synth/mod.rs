//! A small deterministic 2-D tabletop benchmark.
//!
//! A gripper moves objects between sites in the unit square. Scripted
//! experts record demonstrations, and each state is rendered as a
//! "semantic" feature vector: an orthonormal prototype for the current
//! activity plus a little pose signal and Gaussian noise. Frames carry the
//! true activity class so discovery can be scored against it.

pub mod blocks;
mod expert;
mod features;
mod suite;
mod world;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use expert::{into_demo, scripted_demo, ExpertParams, Primitive, PUSH_STANDOFF};
pub use features::{orthonormal_prototypes, phase_catalog, FeatureModel, MAX_PROTOTYPE_COS};
pub use suite::{
    class_histogram, generate, generate_suite, plan_stream, Generated, Oracle, OracleTask, SuiteSpec,
    TaskTemplate, World,
};
pub use world::{
    clauses_hold, env_step, goal_check, initial_state, parse_goal, EnvState, GoalClause, Gripper, Layout, Phase,
    Site, WorldParams,
};

use crate::derive_seed;
use crate::engine::{EngineError, EnvFactory, Environment};
use crate::trajectory::{read_json, TaskSpec, TrajectoryError};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("unknown object {0}")]
    UnknownObject(String),
    #[error("unknown site {0}")]
    UnknownSite(String),
    #[error("unrecognised goal {0}")]
    UnknownGoal(String),
    #[error("no prototype for phase {0}")]
    UnknownPhase(String),
    #[error("{needed} prototypes do not fit in {dim} feature dimensions")]
    TooManyPrototypes { needed: usize, dim: usize },
    #[error("prototypes overlap: max |cos| = {0}")]
    PrototypesNotSeparated(f64),
    #[error("infeasible program: {0}")]
    InfeasibleProgram(String),
    #[error("bad suite spec: {0}")]
    BadSpec(String),
    #[error(transparent)]
    Store(#[from] TrajectoryError),
}

/// One evaluation episode in the tabletop world.
pub struct TabletopEnv<'a> {
    world: &'a World,
    clauses: Vec<GoalClause>,
    state: EnvState,
    noise: ChaCha8Rng,
}

impl<'a> TabletopEnv<'a> {
    pub fn new(world: &'a World, goal_id: &str, init_seed: u64, noise_seed: u64) -> Result<Self, SynthError> {
        let clauses = parse_goal(&world.layout, goal_id)?;
        let state = initial_state(&world.layout, &mut ChaCha8Rng::seed_from_u64(init_seed));
        Ok(Self {
            world,
            clauses,
            state,
            noise: ChaCha8Rng::seed_from_u64(noise_seed),
        })
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }
}

impl Environment for TabletopEnv<'_> {
    fn observe(&mut self) -> Result<(Vec<f64>, Vec<f64>), EngineError> {
        let feature = self
            .world
            .features
            .observe(&self.state, &mut self.noise)
            .map_err(|e| EngineError::Env(e.to_string()))?;
        Ok((feature, self.state.proprio(&self.world.layout)))
    }

    fn step(&mut self, action: &[f64]) {
        self.state = env_step(&self.world.layout, &self.state, action);
    }

    fn success(&self) -> bool {
        clauses_hold(&self.world.layout, &self.state, &self.clauses)
    }
}

impl EnvFactory for World {
    fn episode(&self, task: &TaskSpec, episode: u64, noise_seed: u64) -> Result<Box<dyn Environment + '_>, EngineError> {
        let init = task.init_seed.wrapping_add(episode);
        let env = TabletopEnv::new(self, &task.goal_id, init, derive_seed(&[noise_seed, init]))
            .map_err(|e| EngineError::Env(e.to_string()))?;
        Ok(Box::new(env))
    }
}

pub fn load_world(path: &Path) -> Result<World, TrajectoryError> {
    read_json(path)
}
