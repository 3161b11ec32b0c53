use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AtomicTaskType, ParentId};

/// Fixed assignment of parents to the learner's groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParentGroupMap {
    group_of: Vec<usize>,
    groups: usize,
}

impl ParentGroupMap {
    /// `group_of[p]` is the group of parent `p`. Every group in `0..groups` must be used.
    pub fn new(group_of: Vec<usize>, groups: usize) -> Result<Self> {
        let mut hit = vec![false; groups];
        for &g in &group_of {
            match hit.get_mut(g) {
                Some(h) => *h = true,
                None => {
                    return Err(Error::LearnerConfig(format!(
                        "group index {g} out of range for {groups} groups"
                    )))
                }
            }
        }
        if let Some(empty) = hit.iter().position(|h| !h) {
            return Err(Error::LearnerConfig(format!(
                "group {empty} has no parents"
            )));
        }
        Ok(Self { group_of, groups })
    }

    /// Deals parents into `ceil(parents / group_size)` groups in id order:
    /// parent `p` joins group `p % groups`.
    pub fn round_robin(parents: usize, group_size: usize) -> Result<Self> {
        if parents == 0 || group_size == 0 {
            return Err(Error::LearnerConfig(
                "need at least one parent and a positive group size".into(),
            ));
        }
        let groups = parents.div_ceil(group_size);
        Self::new((0..parents).map(|p| p % groups).collect(), groups)
    }

    /// A single group holding every parent.
    pub fn single(parents: usize) -> Result<Self> {
        Self::round_robin(parents, parents.max(1))
    }

    /// One group per parent.
    pub fn per_parent(parents: usize) -> Result<Self> {
        Self::round_robin(parents, 1)
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn parents(&self) -> usize {
        self.group_of.len()
    }

    pub fn group_of(&self, parent: ParentId) -> Result<usize> {
        self.group_of
            .get(parent.index())
            .copied()
            .ok_or(Error::UnknownParent(parent.index()))
    }

    /// Matrix cell `(group, task type)` addressed by a parent's task.
    pub fn parent_task_index(
        &self,
        parent: ParentId,
        tt: AtomicTaskType,
    ) -> Result<(usize, usize)> {
        Ok((self.group_of(parent)?, tt.index()))
    }
}

/// Number of tasks the child has received from each group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleCounts(Vec<u64>);

impl SampleCounts {
    pub fn zeros(groups: usize) -> Self {
        Self(vec![0; groups])
    }

    pub fn from_counts(counts: Vec<u64>) -> Self {
        Self(counts)
    }

    pub fn record(&mut self, group: usize) {
        self.0[group] += 1;
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }
}
