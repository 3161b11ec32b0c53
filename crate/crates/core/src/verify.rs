//! Worked examples evaluated twice: once through [`crate::oracle`] and once
//! through the real learner and environment code.
//!
//! Each [`Check`] carries a frozen expected value (computed by hand or in a
//! separate numeric tool), the oracle's value and the implementation's value.
//! A check passes when the oracle reproduces the frozen value and the
//! implementation matches the oracle, both within [`EQUIVALENCE_TOLERANCE`].

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::environment::{compute_atv, compute_ctv, compute_taq, ParentAgent, QualityModel};
use crate::error::Result;
use crate::learner::{
    blending_vector, combined_weights, group_entropy, softmax, sum_normalize, BlendingVector,
    EligibilityTrace, GroupWeights, LearnerConfig, MgraoLearner, ParentGroupMap, ResourceModel,
    SampleCounts, ROW_SUM_TOLERANCE,
};
use crate::model::{
    AtomicTask, AtomicTaskType, CompositeTask, CompositeTypeId, ParentId, ResourceId, TaskSpec,
};
use crate::oracle;

pub const EQUIVALENCE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    /// Frozen reference value. `None` for randomised checks with no fixed answer.
    pub expected: Option<Vec<f64>>,
    pub oracle: Vec<f64>,
    pub implementation: Vec<f64>,
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

impl Check {
    fn new(
        name: impl Into<String>,
        expected: &[f64],
        oracle: Vec<f64>,
        implementation: Vec<f64>,
    ) -> Self {
        Self {
            name: name.into(),
            expected: Some(expected.to_vec()),
            oracle,
            implementation,
        }
    }

    /// Largest gap between the oracle and the frozen value.
    pub fn oracle_error(&self) -> f64 {
        match &self.expected {
            Some(e) => max_abs_diff(e, &self.oracle),
            None => 0.0,
        }
    }

    /// Largest gap between the implementation and the oracle.
    pub fn implementation_error(&self) -> f64 {
        max_abs_diff(&self.oracle, &self.implementation)
    }

    pub fn passed(&self) -> bool {
        self.oracle_error() <= EQUIVALENCE_TOLERANCE
            && self.implementation_error() <= EQUIVALENCE_TOLERANCE
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<44} oracle err {:.1e}  impl err {:.1e}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.oracle_error(),
            self.implementation_error()
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed())
    }
}

/// Worked examples plus `random_cases` randomised learner runs.
pub fn run_all(seed: u64, random_cases: usize) -> Result<VerifyReport> {
    let mut checks = worked_examples()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..random_cases {
        checks.push(random_pipeline(case, &mut rng)?);
    }
    Ok(VerifyReport { checks })
}

fn weights(rows: &[Vec<f64>]) -> Result<GroupWeights> {
    GroupWeights::from_rows(rows)
}

fn blend_check(name: &str, counts: &[u64], rows: &[Vec<f64>], expected: &[f64]) -> Result<Check> {
    let counts_f: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let b = blending_vector(&SampleCounts::from_counts(counts.to_vec()), &weights(rows)?)?;
    Ok(Check::new(
        name,
        expected,
        oracle::blend(&counts_f, rows),
        b.0,
    ))
}

fn trace_rows(e: &EligibilityTrace) -> Vec<f64> {
    e.matrix().as_slice().to_vec()
}

#[allow(clippy::vec_init_then_push)]
pub fn worked_examples() -> Result<Vec<Check>> {
    let e = std::f64::consts::E;
    let sig1 = e / (e + 1.0);
    let mut out = Vec::new();

    out.push(Check::new(
        "sum_normalize [3,1]",
        &[0.75, 0.25],
        oracle::sum_norm(&[3.0, 1.0]),
        sum_normalize(&[3.0, 1.0])?,
    ));
    out.push(Check::new(
        "softmax [1,0]",
        &[0.7310585786300049, 0.2689414213699951],
        oracle::softmax(&[1.0, 0.0]),
        softmax(&[1.0, 0.0])?,
    ));
    out.push(Check::new(
        "group entropy [1,0]",
        &[std::f64::consts::LN_2],
        vec![oracle::kl_from_uniform(&[1.0, 0.0])],
        vec![group_entropy(&[1.0, 0.0])?],
    ));
    out.push(Check::new(
        "group entropy [0.75,0.25]",
        &[0.13081203594113697],
        vec![oracle::kl_from_uniform(&[0.75, 0.25])],
        vec![group_entropy(&[0.75, 0.25])?],
    ));

    let uniform = vec![vec![0.5, 0.5]; 2];
    out.push(blend_check(
        "blending counts [3,1], uniform rows",
        &[3, 1],
        &uniform,
        &[0.75, 0.25],
    )?);
    out.push(blend_check(
        "blending counts [0,0], rows [1,0] [0.5,0.5]",
        &[0, 0],
        &[vec![1.0, 0.0], vec![0.5, 0.5]],
        &[1.0, 0.0],
    )?);
    out.push(blend_check(
        "blending counts [1,1], rows [1,0] [1,0]",
        &[1, 1],
        &[vec![1.0, 0.0], vec![1.0, 0.0]],
        &[1.0, 1.0],
    )?);

    let w1 = vec![vec![1.0, 0.0]];
    out.push(Check::new(
        "combined weights, one group [1,0]",
        &[sig1, 1.0 - sig1],
        oracle::combined(&[1.0], &w1),
        combined_weights(&BlendingVector(vec![1.0]), &weights(&w1)?)?,
    ));
    let ident = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
    out.push(Check::new(
        "combined weights, b [0.75,0.25], identity W",
        &[0.6224593312018546, 0.3775406687981454],
        oracle::combined(&[0.75, 0.25], &ident),
        combined_weights(&BlendingVector(vec![0.75, 0.25]), &weights(&ident)?)?,
    ));

    let e0 = vec![vec![0.0, 0.0], vec![0.0, 0.5]];
    let mut trace = EligibilityTrace::from_rows(&e0)?;
    trace.touch(0, 0, 0.8);
    out.push(Check::new(
        "trace update at (0,0), gamma 0.8",
        &[1.0, 0.0, 0.0, 0.4],
        oracle::trace_update(&e0, (0, 0), 0.8).concat(),
        trace_rows(&trace),
    ));

    let mut o = vec![vec![0.0; 2]; 2];
    let mut trace = EligibilityTrace::zeros(2, 2);
    o = oracle::trace_update(&o, (0, 0), 0.9);
    trace.touch(0, 0, 0.9);
    for _ in 0..5 {
        o = oracle::trace_update(&o, (1, 1), 0.9);
        trace.touch(1, 1, 0.9);
    }
    out.push(Check::new(
        "trace decays to gamma^5 after 5 other hits",
        &[0.5904900000000001],
        vec![o[0][0]],
        vec![trace.matrix().get(0, 0)],
    ));

    let groups = ParentGroupMap::new(vec![0, 1], 2)?;
    let mut learner = MgraoLearner::new(LearnerConfig::new(2, 2), groups, 1)?;
    let mut os = oracle::OracleState::new(vec![0, 1], 2, 2, 0.1, 0.9);
    for p in [0, 0, 0, 1] {
        learner.record_sample(ParentId(p))?;
        os.sample(p);
    }
    out.push(Check::new(
        "sample counts after 3 and 1 tasks",
        &[3.0, 1.0],
        os.counts.clone(),
        learner
            .counts()
            .as_slice()
            .iter()
            .map(|&c| c as f64)
            .collect(),
    ));

    let cfg = LearnerConfig {
        alpha: 0.2,
        ..LearnerConfig::new(1, 2)
    };
    let mut learner = MgraoLearner::new(cfg, ParentGroupMap::single(1)?, 1)?;
    learner.update(AtomicTaskType(0), ParentId(0), 0.5)?;
    let mut os = oracle::OracleState::new(vec![0], 1, 2, 0.2, 0.9);
    os.update(0, 0, 0.5);
    out.push(Check::new(
        "update W [0.5,0.5], atv 0.5, alpha 0.2",
        &[0.5454545454545454, 0.45454545454545453],
        os.w[0].clone(),
        learner
            .model(ResourceId(0))?
            .weights
            .matrix()
            .row(0)
            .to_vec(),
    ));

    let model = ResourceModel {
        weights: weights(&w1)?,
        trace: EligibilityTrace::zeros(1, 2),
    };
    let learner = MgraoLearner::with_state(
        LearnerConfig::new(1, 2),
        ParentGroupMap::single(1)?,
        vec![model],
        SampleCounts::zeros(1),
    )?;
    let mut os = oracle::OracleState::new(vec![0], 1, 2, 0.1, 0.9);
    os.w = w1.clone();
    out.push(Check::new(
        "weighting, one group W [1,0], ar 1",
        &[0.7310585786300049],
        vec![os.weighting(0, 1.0)],
        vec![
            learner
                .weighting(AtomicTaskType(0), ParentId(0), ResourceId(0), 1.0)?
                .1,
        ],
    ));

    let qm = QualityModel { demand: vec![0.5] };
    out.push(Check::new(
        "quality, demand 0.5, amount 0.25",
        &[0.5],
        vec![oracle::quality(0.25, 0.5)],
        vec![qm.quality(AtomicTaskType(0), 0.25)],
    ));

    let parent = ParentAgent::new(ParentId(0), vec![CompositeTypeId(0)], vec![2.0, 1.0], 1);
    let ct = composite(&[0, 1]);
    let ctv = compute_ctv(&parent, &ct);
    out.push(Check::new(
        "ctv, preferences [2,1]",
        &[2.0 / 3.0, 1.0 / 3.0],
        oracle::ctv(&[2.0, 1.0], &[0, 1]),
        ctv.values().copied().collect(),
    ));

    let half: BTreeMap<u64, f64> = [(0, 0.5), (1, 0.5)].into();
    let q: BTreeMap<u64, f64> = [(0, 1.0), (1, 0.5)].into();
    out.push(Check::new(
        "taq, ctv [0.5,0.5], q [1,0.5]",
        &[0.75],
        vec![oracle::taq(&[0.5, 0.5], &[1.0, 0.5])],
        vec![compute_taq(&ct, &q, &half)],
    ));
    out.push(Check::new(
        "atv, taq 0.75, ctv 0.5",
        &[0.375],
        vec![oracle::atv(0.75, 0.5)],
        vec![compute_atv(0.75, 0.5)],
    ));

    Ok(out)
}

fn composite(types: &[usize]) -> CompositeTask {
    CompositeTask {
        composite_id: 0,
        composite_type: CompositeTypeId(0),
        owner: ParentId(0),
        atomics: types
            .iter()
            .enumerate()
            .map(|(i, &t)| AtomicTask {
                task_id: i as u64,
                task_type: AtomicTaskType(t),
                spec: TaskSpec::default(),
            })
            .collect(),
        issued_at: 0,
    }
}

/// A short random run (up to 2 groups, 3 task types, 10 feedback steps) fed
/// to both the learner and the oracle. Compares every weighting answer along
/// the way plus the final weights and trace.
fn random_pipeline(case: usize, rng: &mut ChaCha8Rng) -> Result<Check> {
    let m = rng.random_range(1..=2);
    let n = rng.random_range(1..=3);
    let parents = m + rng.random_range(0..=2);
    let group_of: Vec<usize> = (0..parents).map(|p| p % m).collect();
    let alpha = rng.random::<f64>();
    let gamma = rng.random::<f64>() * 0.99;
    let steps = rng.random_range(1..=10);

    let cfg = LearnerConfig {
        alpha,
        gamma,
        groups: m,
        task_types: n,
    };
    let mut learner = MgraoLearner::new(cfg, ParentGroupMap::new(group_of.clone(), m)?, 1)?;
    let mut os = oracle::OracleState::new(group_of, m, n, alpha, gamma);

    let mut want = Vec::new();
    let mut got = Vec::new();
    for _ in 0..steps {
        let p = rng.random_range(0..parents);
        let t = rng.random_range(0..n);
        let held = rng.random::<f64>();
        let atv = rng.random::<f64>();
        learner.record_sample(ParentId(p))?;
        os.sample(p);
        want.push(os.weighting(t, held));
        got.push(
            learner
                .weighting(AtomicTaskType(t), ParentId(p), ResourceId(0), held)?
                .1,
        );
        learner.update(AtomicTaskType(t), ParentId(p), atv)?;
        os.update(t, p, atv);
    }
    let model = learner.model(ResourceId(0))?;
    want.extend(os.w.concat());
    want.extend(os.e.concat());
    got.extend_from_slice(model.weights.matrix().as_slice());
    got.extend_from_slice(model.trace.matrix().as_slice());

    Ok(Check {
        name: format!("random run {case} (m={m}, n={n}, {steps} steps)"),
        expected: None,
        oracle: want,
        implementation: got,
    })
}

/// Result of [`learner_invariants`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantReport {
    pub updates: usize,
    /// Largest `|Σ row - 1|` over every weight row after every update.
    pub max_row_error: f64,
    /// Largest `|E - γ^k|` over every trace cell after every update.
    pub max_decay_error: f64,
    /// First few violations of the exact properties (sign, range, last cell = 1).
    pub violations: Vec<String>,
}

impl InvariantReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
            && self.max_row_error <= ROW_SUM_TOLERANCE
            && self.max_decay_error <= EQUIVALENCE_TOLERANCE
    }
}

/// Drives fresh learners (1 to 50 groups, 20 task types, random α and γ)
/// through at least `updates` random feedback calls, checking after each one
/// that rows are normalised and non-negative, traces lie in `[0, 1]`, the cell
/// just hit is 1 and every other cell equals `γ^k` for its age `k`.
pub fn learner_invariants(seed: u64, updates: usize) -> Result<InvariantReport> {
    const MAX_VIOLATIONS: usize = 5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 20;
    let mut report = InvariantReport {
        updates: 0,
        max_row_error: 0.0,
        max_decay_error: 0.0,
        violations: Vec::new(),
    };
    let flag = |report: &mut InvariantReport, msg: String| {
        if report.violations.len() < MAX_VIOLATIONS {
            report.violations.push(msg);
        }
    };

    while report.updates < updates {
        let m = rng.random_range(1..=50);
        let gamma = rng.random::<f64>() * 0.999;
        let cfg = LearnerConfig {
            alpha: rng.random::<f64>(),
            gamma,
            groups: m,
            task_types: n,
        };
        let mut learner = MgraoLearner::new(cfg, ParentGroupMap::per_parent(m)?, 1)?;
        let mut last: Vec<Option<usize>> = vec![None; m * n];
        for step in 0..200 {
            let (i, j) = (rng.random_range(0..m), rng.random_range(0..n));
            learner.update(AtomicTaskType(j), ParentId(i), rng.random::<f64>())?;
            last[i * n + j] = Some(step);
            report.updates += 1;
            let call = report.updates;

            let model = learner.model(ResourceId(0))?;
            for row in model.weights.matrix().iter_rows() {
                let s: f64 = row.iter().sum();
                report.max_row_error = report.max_row_error.max((s - 1.0).abs());
                if row.iter().any(|&w| w < 0.0) {
                    flag(&mut report, format!("negative weight after update {call}"));
                }
            }
            let trace = model.trace.matrix();
            if trace.get(i, j) != 1.0 {
                flag(
                    &mut report,
                    format!("cell just hit is {} after update {call}", trace.get(i, j)),
                );
            }
            for (cell, &e) in trace.as_slice().iter().enumerate() {
                if !(0.0..=1.0).contains(&e) {
                    flag(&mut report, format!("trace entry {e} after update {call}"));
                }
                let want = last[cell].map_or(0.0, |t| gamma.powi((step - t) as i32));
                report.max_decay_error = report.max_decay_error.max((e - want).abs());
            }
        }
    }
    Ok(report)
}
