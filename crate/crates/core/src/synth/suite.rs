use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::expert::{into_demo, scripted_demo, ExpertParams, Primitive};
use super::features::FeatureModel;
use super::world::{initial_state, Layout, Phase};
use super::SynthError;
use crate::derive_seed;
use crate::trajectory::{write_json, write_suite, Dims, Stage, Suite, TaskSpec};

/// Distance behind the object from which a push starts.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteSpec {
    pub suite_id: String,
    pub base_tasks: usize,
    pub lifelong_tasks: usize,
    pub novel_tasks: usize,
    pub demos_per_task: usize,
    pub feature_dim: usize,
    pub language_dim: usize,
    pub gamma: f64,
    pub sigma: f64,
    pub expert: ExpertParams,
    pub layout: Layout,
}

impl Default for SuiteSpec {
    fn default() -> Self {
        Self {
            suite_id: "tabletop".into(),
            base_tasks: 4,
            lifelong_tasks: 6,
            novel_tasks: 3,
            demos_per_task: 10,
            feature_dim: 32,
            language_dim: 16,
            gamma: 0.1,
            sigma: 0.02,
            expert: ExpertParams::default(),
            layout: Layout::bundled(),
        }
    }
}

/// A task before demonstrations are recorded: a goal and the program that
/// achieves it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskTemplate {
    pub name: String,
    pub goal_id: String,
    pub program: Vec<Primitive>,
}

impl TaskTemplate {
    pub fn phases(&self) -> Vec<Phase> {
        self.program.iter().map(Primitive::phase).collect()
    }

    fn classes(&self) -> BTreeSet<String> {
        self.phases().iter().map(Phase::key).collect()
    }
}

fn place(object: &str, site: &str) -> TaskTemplate {
    TaskTemplate {
        name: format!("place_{object}_{site}"),
        goal_id: format!("in:{object}:{site}"),
        program: vec![
            Primitive::Reach {
                object: object.into(),
                offset: [0.0, 0.0],
            },
            Primitive::Grasp { object: object.into() },
            Primitive::Transport { site: site.into() },
            Primitive::Release { object: object.into() },
        ],
    }
}

fn push(layout: &Layout, object: &str, site: &str) -> Result<TaskTemplate, SynthError> {
    layout.check_object(object)?;
    layout.site(site)?;
    Ok(TaskTemplate {
        name: format!("push_{object}_{site}"),
        goal_id: format!("in:{object}:{site}"),
        program: vec![Primitive::Push {
            object: object.into(),
            site: site.into(),
        }],
    })
}

fn both(a: TaskTemplate, b: TaskTemplate) -> TaskTemplate {
    TaskTemplate {
        name: format!("{}_and_{}", a.name, b.name),
        goal_id: format!("{}&{}", a.goal_id, b.goal_id),
        program: a.program.into_iter().chain(b.program).collect(),
    }
}

/// Base tasks, tasks that bring one new phase each, and the remaining pool
/// of compositions, for the bundled layout.
fn catalog(layout: &Layout) -> Result<(Vec<TaskTemplate>, Vec<TaskTemplate>, Vec<TaskTemplate>), SynthError> {
    let base = vec![place("A", "S1"), place("B", "S2"), place("A", "S2"), place("B", "S1")];
    let novel = vec![place("A", "S3"), push(layout, "B", "S5")?, place("A", "S4")];
    let reuse = vec![
        place("B", "S3"),
        both(place("A", "S1"), place("B", "S2")),
        place("B", "S4"),
        both(place("A", "S2"), place("B", "S1")),
        both(place("A", "S3"), place("B", "S4")),
        both(place("B", "S3"), place("A", "S4")),
    ];
    Ok((base, novel, reuse))
}

/// The task stream: `base_tasks` base tasks, then lifelong tasks alternating
/// novel and reuse-only while novel tasks remain. Reuse tasks draw only on
/// phases already seen, preferring ones that exercise the newest phase.
pub fn plan_stream(spec: &SuiteSpec) -> Result<Vec<(TaskTemplate, Stage, bool)>, SynthError> {
    let (base_pool, novel_pool, reuse_pool) = catalog(&spec.layout)?;
    if spec.base_tasks == 0 || spec.base_tasks > base_pool.len() {
        return Err(SynthError::BadSpec(format!(
            "base_tasks must be in 1..={}",
            base_pool.len()
        )));
    }
    if spec.novel_tasks > novel_pool.len() || spec.novel_tasks > spec.lifelong_tasks {
        return Err(SynthError::BadSpec(format!(
            "novel_tasks must be at most min(lifelong_tasks, {})",
            novel_pool.len()
        )));
    }
    let mut stream: Vec<(TaskTemplate, Stage, bool)> = base_pool[..spec.base_tasks]
        .iter()
        .map(|t| (t.clone(), Stage::Base, false))
        .collect();
    let mut known: BTreeSet<String> = stream.iter().flat_map(|(t, _, _)| t.classes()).collect();
    let mut newest: Option<String> = None;
    let mut used: BTreeSet<String> = stream.iter().map(|(t, _, _)| t.name.clone()).collect();
    let mut novel = novel_pool.into_iter().take(spec.novel_tasks);
    let mut remaining_novel = spec.novel_tasks;

    for i in 0..spec.lifelong_tasks {
        let left = spec.lifelong_tasks - i;
        let want_novel = remaining_novel > 0 && (i % 2 == 0 || remaining_novel >= left);
        if want_novel {
            let t = novel.next().expect("counted above");
            let fresh: Vec<String> = t.classes().difference(&known).cloned().collect();
            newest = fresh.first().cloned();
            known.extend(fresh);
            used.insert(t.name.clone());
            stream.push((t, Stage::Lifelong, true));
            remaining_novel -= 1;
            continue;
        }
        let candidates: Vec<&TaskTemplate> = reuse_pool
            .iter()
            .chain(base_pool.iter())
            .filter(|t| !used.contains(&t.name) && t.classes().is_subset(&known))
            .collect();
        let pick = candidates
            .iter()
            .find(|t| newest.as_ref().is_some_and(|n| t.classes().contains(n)))
            .or_else(|| candidates.first())
            .ok_or_else(|| SynthError::BadSpec("ran out of reuse-only tasks".into()))?;
        used.insert(pick.name.clone());
        stream.push(((*pick).clone(), Stage::Lifelong, false));
    }
    Ok(stream)
}

/// Ground truth written next to a generated suite. Discovery never reads it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Oracle {
    pub classes: Vec<String>,
    /// True number of phase classes after the base stage and after each
    /// lifelong step.
    pub k_per_step: Vec<usize>,
    pub tasks: Vec<OracleTask>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleTask {
    pub task_id: String,
    pub order: u32,
    pub novel: bool,
    pub classes: Vec<String>,
}

/// Everything evaluation needs to rebuild the environment of a suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub layout: Layout,
    pub features: FeatureModel,
    pub expert: ExpertParams,
}

pub struct Generated {
    pub suite: Suite,
    pub oracle: Oracle,
    pub world: World,
}

fn unit_vector(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let v: Vec<f64> = (0..dim).map(|_| normal.sample(rng)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// Builds the suite in memory. All randomness derives from `seed`.
pub fn generate(spec: &SuiteSpec, seed: u64) -> Result<Generated, SynthError> {
    let layout = &spec.layout;
    let model = FeatureModel::new(layout, spec.feature_dim, spec.gamma, spec.sigma, derive_seed(&[seed, 1]))?;
    let stream = plan_stream(spec)?;

    let mut classes: Vec<String> = Vec::new();
    for (t, _, _) in &stream {
        for key in t.phases().iter().map(Phase::key) {
            if !classes.contains(&key) {
                classes.push(key);
            }
        }
    }
    let class_of = |p: &Phase| classes.iter().position(|c| *c == p.key()).map(|i| i as u32);

    let mut tasks = Vec::with_capacity(stream.len());
    let mut oracle_tasks = Vec::with_capacity(stream.len());
    for (idx, (template, stage, novel)) in stream.iter().enumerate() {
        let order = idx as u32 + 1;
        let task_id = format!("{:02}_{}", order, template.name);
        let mut lang_rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, 2, u64::from(order)]));
        let language_embedding = unit_vector(spec.language_dim, &mut lang_rng);
        let recorded = (0..spec.demos_per_task)
            .into_par_iter()
            .map(|d| {
                let s = derive_seed(&[seed, 3, u64::from(order), d as u64]);
                let init = initial_state(layout, &mut ChaCha8Rng::seed_from_u64(s));
                let (frames, _) = scripted_demo(
                    layout,
                    &model,
                    &template.program,
                    &template.goal_id,
                    init,
                    usize::MAX,
                    &spec.expert,
                    derive_seed(&[s, 4]),
                    &class_of,
                )?;
                Ok(into_demo(&format!("demo_{d:03}"), &task_id, frames))
            })
            .collect::<Result<Vec<_>, SynthError>>()?;
        let longest = recorded.iter().map(|d| d.len()).max().unwrap_or(1);
        tasks.push(TaskSpec {
            task_id: task_id.clone(),
            order,
            stage: *stage,
            language_embedding,
            goal_id: template.goal_id.clone(),
            init_seed: derive_seed(&[seed, 5, u64::from(order)]) >> 16,
            horizon: 2 * longest,
            demos: recorded,
        });
        oracle_tasks.push(OracleTask {
            task_id,
            order,
            novel: *novel,
            classes: template.classes().into_iter().collect(),
        });
    }

    let mut seen = BTreeSet::new();
    let mut k_per_step = Vec::new();
    for (i, (t, stage, _)) in stream.iter().enumerate() {
        seen.extend(t.classes());
        let last_base = *stage == Stage::Base && stream.get(i + 1).is_none_or(|n| n.1 != Stage::Base);
        if last_base || *stage == Stage::Lifelong {
            k_per_step.push(seen.len());
        }
    }

    let suite = Suite {
        suite_id: spec.suite_id.clone(),
        dims: Dims {
            feature: spec.feature_dim,
            proprio: 3,
            action: 3,
            language: spec.language_dim,
        },
        tasks,
    };
    suite.validate()?;
    Ok(Generated {
        suite,
        oracle: Oracle {
            classes,
            k_per_step,
            tasks: oracle_tasks,
        },
        world: World {
            layout: layout.clone(),
            features: model,
            expert: spec.expert,
        },
    })
}

/// Writes `suite.json`, demos, `oracle.json` and `world.json` under `dir`.
pub fn generate_suite(spec: &SuiteSpec, seed: u64, dir: &Path) -> Result<PathBuf, SynthError> {
    let generated = generate(spec, seed)?;
    let manifest = write_suite(&generated.suite, dir)?;
    write_json(&dir.join("oracle.json"), &generated.oracle)?;
    write_json(&dir.join("world.json"), &generated.world)?;
    Ok(manifest)
}

/// Per-class count of frames, for quick inspection of a generated suite.
pub fn class_histogram(suite: &Suite) -> BTreeMap<u32, usize> {
    let mut h = BTreeMap::new();
    for f in suite.tasks.iter().flat_map(|t| &t.demos).flat_map(|d| &d.frames) {
        if let Some(k) = f.oracle().skill {
            *h.entry(k).or_default() += 1;
        }
    }
    h
}
