//! Child-side resource allocation learner.
//!
//! A child keeps one weight row per parent group and one matrix per resource.
//! Value feedback from parents is spread over recently used `(group, task type)`
//! cells by a replacement eligibility trace. When the child needs an
//! allocation, the rows are blended by how often each group sends work and how
//! far its row has moved from uniform, then squashed with a softmax.
//!
//! # State dump
//!
//! [`MgraoLearner::dump`] writes the full learner state as JSON. Matrices are
//! row-major nested arrays (rows are groups, columns are task types) and every
//! real is rounded to 9 significant digits:
//!
//! ```text
//! {
//!   "config": { "alpha": 0.1, "gamma": 0.9, "groups": 2, "task_types": 3 },
//!   "counts": [3, 1],
//!   "resources": [
//!     { "resource": 0, "weights": [[...], [...]], "trace": [[...], [...]] }
//!   ]
//! }
//! ```

mod groups;
mod math;
mod matrix;

pub use groups::{ParentGroupMap, SampleCounts};
pub use math::{group_entropy, softmax, sum_normalize, ROW_SUM_TOLERANCE};
pub use matrix::{EligibilityTrace, GroupWeights, Matrix};

use std::cell::OnceCell;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AtomicTaskType, ParentId, ResourceId};
use crate::numfmt::round_sig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    /// Learning rate, in `[0, 1]`.
    pub alpha: f64,
    /// Trace decay, in `[0, 1)`.
    pub gamma: f64,
    pub groups: usize,
    pub task_types: usize,
}

impl LearnerConfig {
    pub const DEFAULT_ALPHA: f64 = 0.1;
    pub const DEFAULT_GAMMA: f64 = 0.9;

    pub fn new(groups: usize, task_types: usize) -> Self {
        Self {
            alpha: Self::DEFAULT_ALPHA,
            gamma: Self::DEFAULT_GAMMA,
            groups,
            task_types,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::LearnerConfig(format!(
                "alpha must be in [0, 1], got {}",
                self.alpha
            )));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::LearnerConfig(format!(
                "gamma must be in [0, 1), got {}",
                self.gamma
            )));
        }
        if self.groups == 0 || self.task_types == 0 {
            return Err(Error::LearnerConfig(
                "need at least one group and one task type".into(),
            ));
        }
        Ok(())
    }
}

/// Per-group influence on the combined weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlendingVector(pub Vec<f64>);

impl BlendingVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Sum-normalised group entropies plus sum-normalised sample counts.
pub fn blending_vector(counts: &SampleCounts, weights: &GroupWeights) -> Result<BlendingVector> {
    if counts.len() != weights.groups() {
        return Err(Error::Shape {
            expected: weights.groups(),
            actual: counts.len(),
        });
    }
    let entropies = weights
        .matrix()
        .iter_rows()
        .map(group_entropy)
        .collect::<Result<Vec<_>>>()?;
    blend(&entropies, counts)
}

fn blend(entropies: &[f64], counts: &SampleCounts) -> Result<BlendingVector> {
    let counts: Vec<f64> = counts.as_slice().iter().map(|&c| c as f64).collect();
    let by_entropy = sum_normalize(entropies)?;
    let by_count = sum_normalize(&counts)?;
    Ok(BlendingVector(
        by_entropy
            .iter()
            .zip(&by_count)
            .map(|(a, b)| a + b)
            .collect(),
    ))
}

/// `softmax(sum_normalize(b)ᵀ W)`: one probability per task type.
pub fn combined_weights(b: &BlendingVector, weights: &GroupWeights) -> Result<Vec<f64>> {
    if b.0.len() != weights.groups() {
        return Err(Error::Shape {
            expected: weights.groups(),
            actual: b.0.len(),
        });
    }
    let mix = sum_normalize(&b.0)?;
    let mut blended = vec![0.0; weights.task_types()];
    for (coef, row) in mix.iter().zip(weights.matrix().iter_rows()) {
        if *coef == 0.0 {
            continue;
        }
        for (acc, w) in blended.iter_mut().zip(row) {
            *acc += coef * w;
        }
    }
    softmax(&blended)
}

/// Replacement trace update at the cell a parent's task maps to.
pub fn eligibility_update(
    trace: &mut EligibilityTrace,
    groups: &ParentGroupMap,
    parent: ParentId,
    tt: AtomicTaskType,
    gamma: f64,
) -> Result<()> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::LearnerConfig(format!(
            "gamma must be in [0, 1), got {gamma}"
        )));
    }
    let (i, j) = groups.parent_task_index(parent, tt)?;
    check_type(j, trace.matrix().cols())?;
    trace.touch(i, j, gamma);
    Ok(())
}

fn check_type(j: usize, n: usize) -> Result<()> {
    if j >= n {
        Err(Error::UnknownTaskType(j))
    } else {
        Ok(())
    }
}

/// Weights and traces for one resource.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceModel {
    pub weights: GroupWeights,
    pub trace: EligibilityTrace,
}

impl ResourceModel {
    pub fn fresh(groups: usize, task_types: usize) -> Self {
        Self {
            weights: GroupWeights::uniform(groups, task_types),
            trace: EligibilityTrace::zeros(groups, task_types),
        }
    }
}

/// Learner state owned by one child agent.
#[derive(Debug, Clone)]
pub struct MgraoLearner {
    config: LearnerConfig,
    groups: ParentGroupMap,
    models: Vec<ResourceModel>,
    counts: SampleCounts,
    /// Row entropies per resource, cleared whenever the weights change.
    entropies: Vec<OnceCell<Vec<f64>>>,
}

impl PartialEq for MgraoLearner {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.groups == other.groups
            && self.models == other.models
            && self.counts == other.counts
    }
}

impl MgraoLearner {
    /// Uniform weights, zero traces and zero counts for each of `resources` resources.
    pub fn new(config: LearnerConfig, groups: ParentGroupMap, resources: usize) -> Result<Self> {
        let models = (0..resources)
            .map(|_| ResourceModel::fresh(config.groups, config.task_types))
            .collect();
        Self::with_state(config, groups, models, SampleCounts::zeros(config.groups))
    }

    pub fn with_state(
        config: LearnerConfig,
        groups: ParentGroupMap,
        models: Vec<ResourceModel>,
        counts: SampleCounts,
    ) -> Result<Self> {
        config.validate()?;
        if groups.groups() != config.groups {
            return Err(Error::Shape {
                expected: config.groups,
                actual: groups.groups(),
            });
        }
        if counts.len() != config.groups {
            return Err(Error::Shape {
                expected: config.groups,
                actual: counts.len(),
            });
        }
        for m in &models {
            for (rows, cols) in [
                (m.weights.groups(), m.weights.task_types()),
                (m.trace.matrix().rows(), m.trace.matrix().cols()),
            ] {
                if rows != config.groups {
                    return Err(Error::Shape {
                        expected: config.groups,
                        actual: rows,
                    });
                }
                if cols != config.task_types {
                    return Err(Error::Shape {
                        expected: config.task_types,
                        actual: cols,
                    });
                }
            }
        }
        for m in &models {
            for row in m.weights.matrix().iter_rows() {
                group_entropy(row)?;
            }
        }
        Ok(Self {
            config,
            groups,
            entropies: vec![OnceCell::new(); models.len()],
            models,
            counts,
        })
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.config
    }

    pub fn group_map(&self) -> &ParentGroupMap {
        &self.groups
    }

    pub fn counts(&self) -> &SampleCounts {
        &self.counts
    }

    pub fn model(&self, resource: ResourceId) -> Result<&ResourceModel> {
        self.models
            .get(resource.index())
            .ok_or(Error::UnknownResource(resource.index()))
    }

    pub fn models(&self) -> &[ResourceModel] {
        &self.models
    }

    /// Counts one task received from `parent`.
    pub fn record_sample(&mut self, parent: ParentId) -> Result<()> {
        let g = self.groups.group_of(parent)?;
        self.counts.record(g);
        Ok(())
    }

    /// Applies one value feedback to every resource model: refresh the trace,
    /// add `alpha * atv * E` to the weights and renormalise each row.
    ///
    /// Negative feedback is clamped to zero so rows stay non-negative.
    pub fn update(&mut self, tt: AtomicTaskType, parent: ParentId, atv: f64) -> Result<()> {
        if !atv.is_finite() {
            return Err(Error::NonFinite { index: tt.index() });
        }
        let (i, j) = self.groups.parent_task_index(parent, tt)?;
        check_type(j, self.config.task_types)?;
        let step = self.config.alpha * atv.max(0.0);
        for (model, cache) in self.models.iter_mut().zip(&mut self.entropies) {
            model.trace.touch(i, j, self.config.gamma);
            model.weights.apply_trace(&model.trace, step);
            cache.take();
        }
        Ok(())
    }

    pub fn blending(&self, resource: ResourceId) -> Result<BlendingVector> {
        let model = self.model(resource)?;
        let entropies = self.entropies[resource.index()].get_or_init(|| {
            model
                .weights
                .matrix()
                .iter_rows()
                .map(math::kl_from_uniform)
                .collect()
        });
        blend(entropies, &self.counts)
    }

    /// Probability vector over task types used to split `resource`.
    pub fn combined_weights(&self, resource: ResourceId) -> Result<Vec<f64>> {
        combined_weights(&self.blending(resource)?, &self.model(resource)?.weights)
    }

    /// Amount of `resource` to devote to a task of type `tt` sent by `parent`,
    /// given that the child holds `available` of it.
    pub fn weighting(
        &self,
        tt: AtomicTaskType,
        parent: ParentId,
        resource: ResourceId,
        available: f64,
    ) -> Result<(ResourceId, f64)> {
        let (_, j) = self.groups.parent_task_index(parent, tt)?;
        check_type(j, self.config.task_types)?;
        let c = self.combined_weights(resource)?;
        Ok((resource, c[j] * available))
    }

    pub fn dump(&self) -> StateDump {
        let round = |m: &Matrix| -> Vec<Vec<f64>> {
            m.iter_rows()
                .map(|r| r.iter().map(|x| round_sig(*x)).collect())
                .collect()
        };
        StateDump {
            config: ConfigDump {
                alpha: round_sig(self.config.alpha),
                gamma: round_sig(self.config.gamma),
                groups: self.config.groups,
                task_types: self.config.task_types,
            },
            counts: self.counts.as_slice().to_vec(),
            resources: self
                .models
                .iter()
                .enumerate()
                .map(|(r, m)| ResourceDump {
                    resource: r,
                    weights: round(m.weights.matrix()),
                    trace: round(m.trace.matrix()),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDump {
    pub config: ConfigDump,
    pub counts: Vec<u64>,
    pub resources: Vec<ResourceDump>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigDump {
    pub alpha: f64,
    pub gamma: f64,
    pub groups: usize,
    pub task_types: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceDump {
    pub resource: usize,
    pub weights: Vec<Vec<f64>>,
    pub trace: Vec<Vec<f64>>,
}

impl StateDump {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const E: f64 = std::f64::consts::E;

    fn w(rows: &[&[f64]]) -> GroupWeights {
        GroupWeights::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn single_learner(n: usize, alpha: f64, gamma: f64) -> MgraoLearner {
        let cfg = LearnerConfig {
            alpha,
            gamma,
            groups: 1,
            task_types: n,
        };
        MgraoLearner::new(cfg, ParentGroupMap::single(1).unwrap(), 1).unwrap()
    }

    #[test]
    fn blending_examples() {
        let b = blending_vector(
            &SampleCounts::from_counts(vec![3, 1]),
            &w(&[&[0.5, 0.5], &[0.5, 0.5]]),
        )
        .unwrap();
        assert_eq!(b.0, vec![0.75, 0.25]);

        let b = blending_vector(
            &SampleCounts::from_counts(vec![0, 0]),
            &w(&[&[1.0, 0.0], &[0.5, 0.5]]),
        )
        .unwrap();
        assert_eq!(b.0, vec![1.0, 0.0]);

        let b = blending_vector(
            &SampleCounts::from_counts(vec![1, 1]),
            &w(&[&[1.0, 0.0], &[1.0, 0.0]]),
        )
        .unwrap();
        assert_eq!(b.0, vec![1.0, 1.0]);
    }

    #[test]
    fn blending_shape_mismatch() {
        assert!(blending_vector(&SampleCounts::zeros(3), &GroupWeights::uniform(2, 2)).is_err());
    }

    #[test]
    fn combined_examples() {
        let c = combined_weights(&BlendingVector(vec![2.0]), &w(&[&[1.0, 0.0]])).unwrap();
        assert_abs_diff_eq!(c[0], E / (E + 1.0), epsilon = 1e-12);

        let c = combined_weights(
            &BlendingVector(vec![0.75, 0.25]),
            &w(&[&[1.0, 0.0], &[0.0, 1.0]]),
        )
        .unwrap();
        assert_abs_diff_eq!(c[0], 0.6224593312018546, epsilon = 1e-12);
        assert_abs_diff_eq!(c[1], 0.3775406687981454, epsilon = 1e-12);

        let c = combined_weights(
            &BlendingVector(vec![0.3, 5.0, 0.0]),
            &GroupWeights::uniform(3, 4),
        )
        .unwrap();
        for p in c {
            assert_abs_diff_eq!(p, 0.25, epsilon = 1e-12);
        }
    }

    #[test]
    fn combined_cold_start_is_uniform() {
        let c = combined_weights(
            &BlendingVector(vec![0.0, 0.0]),
            &GroupWeights::uniform(2, 5),
        )
        .unwrap();
        assert!(c.iter().all(|p| (p - 0.2).abs() < 1e-15));
    }

    #[test]
    fn eligibility_update_uses_group_index() {
        let map = ParentGroupMap::new(vec![0, 1], 2).unwrap();
        let mut e = EligibilityTrace::from_rows(&[vec![0.0, 0.0], vec![0.0, 0.5]]).unwrap();
        eligibility_update(&mut e, &map, ParentId(0), AtomicTaskType(0), 0.8).unwrap();
        assert_eq!(e.matrix().to_rows(), vec![vec![1.0, 0.0], vec![0.0, 0.4]]);
        assert!(eligibility_update(&mut e, &map, ParentId(0), AtomicTaskType(0), 1.0).is_err());
        assert!(eligibility_update(&mut e, &map, ParentId(7), AtomicTaskType(0), 0.5).is_err());
    }

    #[test]
    fn update_single_step() {
        let mut l = single_learner(2, 0.2, 0.9);
        l.update(AtomicTaskType(0), ParentId(0), 0.5).unwrap();
        let row = l.models()[0].weights.matrix().row(0).to_vec();
        assert_abs_diff_eq!(row[0], 0.6 / 1.1, epsilon = 1e-12);
        assert_abs_diff_eq!(row[1], 0.5 / 1.1, epsilon = 1e-12);
    }

    #[test]
    fn zero_feedback_leaves_weights() {
        let mut l = single_learner(3, 0.5, 0.9);
        l.update(AtomicTaskType(2), ParentId(0), 0.0).unwrap();
        let m = &l.models()[0];
        assert!(m
            .weights
            .matrix()
            .as_slice()
            .iter()
            .all(|x| *x == 1.0 / 3.0));
        assert_eq!(m.trace.matrix().get(0, 2), 1.0);
    }

    #[test]
    fn negative_feedback_clamped() {
        let mut l = single_learner(2, 1.0, 0.5);
        l.update(AtomicTaskType(0), ParentId(0), -3.0).unwrap();
        assert_eq!(l.models()[0].weights.matrix().row(0), &[0.5, 0.5]);
        assert!(l.update(AtomicTaskType(0), ParentId(0), f64::NAN).is_err());
    }

    #[test]
    fn repeated_reward_concentrates_row() {
        let mut l = single_learner(3, 0.3, 0.9);
        let mut prev = 1.0 / 3.0;
        for k in 0..500 {
            l.update(AtomicTaskType(1), ParentId(0), 1.0).unwrap();
            let cur = l.models()[0].weights.matrix().get(0, 1);
            // Strictly increasing until it rounds to 1.
            assert!(cur > prev || (k > 50 && cur == prev));
            prev = cur;
        }
        let row = l.models()[0].weights.matrix().row(0);
        assert!(row[1] > 0.99);
        assert!(row[0] < 0.005 && row[2] < 0.005);
    }

    #[test]
    fn weighting_examples() {
        let l = MgraoLearner::new(
            LearnerConfig::new(1, 20),
            ParentGroupMap::single(4).unwrap(),
            1,
        )
        .unwrap();
        for t in 0..20 {
            let (r, a) = l
                .weighting(AtomicTaskType(t), ParentId(3), ResourceId(0), 0.8)
                .unwrap();
            assert_eq!(r, ResourceId(0));
            assert_abs_diff_eq!(a, 0.04, epsilon = 1e-15);
        }
        assert!(matches!(
            l.weighting(AtomicTaskType(20), ParentId(0), ResourceId(0), 1.0),
            Err(Error::UnknownTaskType(20))
        ));

        let cfg = LearnerConfig::new(1, 2);
        let l = MgraoLearner::with_state(
            cfg,
            ParentGroupMap::single(1).unwrap(),
            vec![ResourceModel {
                weights: w(&[&[1.0, 0.0]]),
                trace: EligibilityTrace::zeros(1, 2),
            }],
            SampleCounts::zeros(1),
        )
        .unwrap();
        let (_, a) = l
            .weighting(AtomicTaskType(0), ParentId(0), ResourceId(0), 1.0)
            .unwrap();
        assert_abs_diff_eq!(a, E / (E + 1.0), epsilon = 1e-12);
        let (_, b) = l
            .weighting(AtomicTaskType(1), ParentId(0), ResourceId(0), 1.0)
            .unwrap();
        assert_abs_diff_eq!(a + b, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn config_ranges() {
        let mut c = LearnerConfig::new(1, 2);
        c.alpha = 1.5;
        assert!(c.validate().is_err());
        c.alpha = 1.0;
        c.gamma = 1.0;
        assert!(c.validate().is_err());
        c.gamma = 0.0;
        assert!(c.validate().is_ok());
    }

    #[test]
    fn dump_rounds_and_orders() {
        let mut l = single_learner(2, 0.2, 0.9);
        l.record_sample(ParentId(0)).unwrap();
        l.update(AtomicTaskType(0), ParentId(0), 0.5).unwrap();
        let json = l.dump().to_json().unwrap();
        assert!(json.contains("0.545454545"));
        assert!(json.find("\"config\"").unwrap() < json.find("\"counts\"").unwrap());
        let back: StateDump = serde_json::from_str(&json).unwrap();
        assert_eq!(back.counts, vec![1]);
        assert_eq!(back.resources[0].trace, vec![vec![1.0, 0.0]]);
    }
    #[test]
    fn cached_blending_matches_fresh_computation() {
        let groups = ParentGroupMap::round_robin(4, 2).unwrap();
        let mut l = MgraoLearner::new(LearnerConfig::new(2, 5), groups, 2).unwrap();
        for step in 0..40usize {
            let p = ParentId(step % 4);
            let tt = AtomicTaskType((step * 3) % 5);
            l.record_sample(p).unwrap();
            // Read twice so the second call comes from the cache.
            let _ = l.blending(ResourceId(step % 2)).unwrap();
            for r in 0..2 {
                let fresh = blending_vector(l.counts(), &l.models()[r].weights).unwrap();
                assert_eq!(l.blending(ResourceId(r)).unwrap(), fresh);
            }
            l.update(tt, p, (step % 7) as f64 / 7.0).unwrap();
        }
    }
}
