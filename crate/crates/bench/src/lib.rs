//! Fixtures shared by the benchmarks.

use mgrao::environment::World;
use mgrao::model::{AtomicTaskType, ParentId};
use mgrao::scenarios::{AlgorithmVariant, ScenarioConfig, ScenarioName};
use mgrao::{LearnerConfig, MgraoLearner, ParentGroupMap};

/// A learner with `groups` groups over `task_types` types that has already
/// seen `history` feedback calls, so traces and rows are non-trivial.
pub fn warmed_learner(groups: usize, task_types: usize, history: usize) -> MgraoLearner {
    let cfg = LearnerConfig::new(groups, task_types);
    let mut l = MgraoLearner::new(cfg, ParentGroupMap::per_parent(groups).unwrap(), 1).unwrap();
    for k in 0..history {
        let p = ParentId(k % groups);
        let tt = AtomicTaskType((k * 7) % task_types);
        l.record_sample(p).unwrap();
        l.update(tt, p, (k % 5) as f64 / 5.0).unwrap();
    }
    l
}

/// A freshly built world for a preset scenario.
pub fn world(name: ScenarioName, variant: AlgorithmVariant, seed: u64) -> World {
    let cfg = ScenarioConfig::preset(name);
    World::build(&cfg.world_config(), variant.policy(&cfg), seed).unwrap()
}
