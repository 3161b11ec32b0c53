use mgrao::environment::{ChildPolicy, World};
use mgrao::learner::StateDump;
use mgrao::model::ResourceId;
use mgrao::scenarios::{
    compare, emit, run_all, run_scenario, AlgorithmVariant, OutputFormat, ScenarioConfig,
    ScenarioName, CSV_HEADER,
};
use proptest::prelude::*;

fn small(name: ScenarioName) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::preset(name);
    cfg.episodes = 12;
    cfg.seeds = vec![0, 1, 2];
    cfg
}

#[test]
fn records_accumulate_per_seed() {
    let cfg = small(ScenarioName::Multi);
    let run = run_scenario(&cfg, AlgorithmVariant::max_groups()).unwrap();
    assert_eq!(run.records.len(), 36);
    for seed_records in run.records.chunks(12) {
        let mut total = 0.0;
        for (e, r) in seed_records.iter().enumerate() {
            assert_eq!(r.episode, e as u64);
            assert_eq!(r.seed, seed_records[0].seed);
            total += r.utility;
            assert!((r.cumulative_utility - total).abs() < 1e-9);
        }
    }
    assert!(run.feedback_residual <= 1e-9);
}

#[test]
fn summary_and_files_from_one_run() {
    let cfg = small(ScenarioName::Volatile);
    let variants = cfg.variants();
    let run = run_all(&cfg, &variants).unwrap();
    let summary = compare(&run.records).unwrap();
    assert_eq!(summary.scenario, "volatile");
    let max = summary.get(AlgorithmVariant::MAX_TAG).unwrap();
    assert_eq!(max.pct_of_max, Some(100.0));
    let uniform = summary.get(AlgorithmVariant::UNIFORM_TAG).unwrap();
    assert_eq!(uniform.pct_from_uniform, Some(0.0));

    let dir = tempfile::tempdir().unwrap();
    let files = emit(&run.records, &summary, OutputFormat::Both, dir.path()).unwrap();
    // One CSV per variant and seed, plus the summary.
    assert_eq!(files.len(), variants.len() * 3 + 1);
    let csv = std::fs::read_to_string(&files[0]).unwrap();
    assert!(csv.starts_with(CSV_HEADER));
    assert_eq!(csv.lines().count(), 13);

    let json = std::fs::read_to_string(files.last().unwrap()).unwrap();
    let back: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(back["variants"].as_array().unwrap().len(), variants.len());
}

#[test]
fn learner_state_survives_a_json_round_trip() {
    let cfg = small(ScenarioName::Single);
    let variant = AlgorithmVariant::Mgrao { group_size: 2 };
    let mut world = World::build(&cfg.world_config(), variant.policy(&cfg), 4).unwrap();
    for _ in 0..cfg.episodes {
        world.step().unwrap();
    }
    let ChildPolicy::Mgrao(learner) = &world.children[0].policy else {
        panic!("learner expected");
    };
    let dump: StateDump = serde_json::from_str(&learner.dump().to_json().unwrap()).unwrap();
    assert_eq!(dump.config.groups, 5);
    assert_eq!(dump.counts.iter().sum::<u64>(), 10 * 5 * 12);
    let weights = &learner.model(ResourceId(0)).unwrap().weights;
    for (row, dumped) in weights.matrix().iter_rows().zip(&dump.resources[0].weights) {
        for (a, b) in row.iter().zip(dumped) {
            assert!((a - b).abs() <= 1e-8 * a.abs().max(1e-300));
        }
    }
}

#[test]
fn uniform_baseline_ignores_learning_parameters() {
    let mut a = small(ScenarioName::Single);
    let mut b = a.clone();
    a.alpha = 0.0;
    b.alpha = 1.0;
    b.gamma = 0.1;
    let ra = run_scenario(&a, AlgorithmVariant::FixedUniform).unwrap();
    let rb = run_scenario(&b, AlgorithmVariant::FixedUniform).unwrap();
    assert_eq!(ra.records, rb.records);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_systems_conserve_feedback(
        parents in 1usize..12,
        children in 1usize..4,
        atomic_types in 3usize..12,
        churn in 0.0f64..0.5,
        epsilon in 0.0f64..1.0,
        group_size in 1usize..12,
        seed in 0u64..1000,
    ) {
        let mut cfg = ScenarioConfig::preset(ScenarioName::Custom);
        cfg.parents = parents;
        cfg.children = children;
        cfg.atomic_types = atomic_types;
        cfg.composite_size = 3;
        cfg.composite_types = parents.min(4);
        cfg.churn_probability = churn;
        cfg.epsilon = epsilon;
        cfg.episodes = 6;
        cfg.seeds = vec![seed];
        let variant = AlgorithmVariant::Mgrao { group_size: group_size.min(parents) };
        let run = run_scenario(&cfg, variant).unwrap();
        prop_assert!(run.feedback_residual <= 1e-9);
        for r in &run.records {
            prop_assert!(r.utility >= 0.0);
            // Each composite contributes a taq in [0, 1].
            prop_assert!(r.utility <= (parents * 4) as f64);
        }
    }
}
