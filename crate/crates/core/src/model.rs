//! Tasks, agents and resources shared by the learner and the simulated world.
//!
//! All identifiers are dense indices so they can address matrix rows and
//! columns directly.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! dense_id {
    ($(#[$meta:meta])* $name:ident, $prefix:literal) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub struct $name(pub usize);

        impl $name {
            #[inline]
            pub fn index(self) -> usize {
                self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }
    };
}

dense_id!(
    /// Atomic task type, `0..n`.
    AtomicTaskType,
    "tp"
);
dense_id!(ParentId, "pg");
dense_id!(ChildId, "cg");
dense_id!(ResourceId, "r");
dense_id!(
    /// Index of a composite task type within a [`SystemDescriptor`].
    CompositeTypeId,
    "tp^"
);

/// Set of distinct atomic task types that make up one kind of composite task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompositeTaskType {
    members: Vec<AtomicTaskType>,
}

impl CompositeTaskType {
    /// Returns `None` for an empty member list or a repeated type.
    pub fn new(members: impl IntoIterator<Item = AtomicTaskType>) -> Option<Self> {
        let members: Vec<_> = members.into_iter().collect();
        let unique: BTreeSet<_> = members.iter().copied().collect();
        if members.is_empty() || unique.len() != members.len() {
            return None;
        }
        Some(Self { members })
    }

    /// Builds a composite type without checking members; [`SystemDescriptor::validate`]
    /// reports the problems instead.
    pub fn new_unchecked(members: Vec<AtomicTaskType>) -> Self {
        Self { members }
    }

    pub fn members(&self) -> &[AtomicTaskType] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn type_set(&self) -> BTreeSet<AtomicTaskType> {
        self.members.iter().copied().collect()
    }
}

/// Opaque task specification. Carried along with the task, never interpreted.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec(pub Vec<u8>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicTask {
    pub task_id: u64,
    pub task_type: AtomicTaskType,
    pub spec: TaskSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeTask {
    pub composite_id: u64,
    pub composite_type: CompositeTypeId,
    pub owner: ParentId,
    pub atomics: Vec<AtomicTask>,
    /// Episode at which the task arrived.
    pub issued_at: u64,
}

/// The set of atomic task types a composite task is made of.
pub fn type_of_composite(ct: &CompositeTask) -> BTreeSet<AtomicTaskType> {
    ct.atomics.iter().map(|t| t.task_type).collect()
}

/// Amount of each resource held by each child agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceMap {
    /// `amounts[child][resource]`
    amounts: Vec<Vec<f64>>,
}

impl ResourceMap {
    pub fn new(amounts: Vec<Vec<f64>>) -> Self {
        Self { amounts }
    }

    pub fn amount(&self, child: ChildId, resource: ResourceId) -> Option<f64> {
        self.amounts
            .get(child.index())
            .and_then(|row| row.get(resource.index()))
            .copied()
    }

    pub fn children(&self) -> usize {
        self.amounts.len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.amounts
    }
}

/// Which child performs each atomic task of one composite.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskAllocation {
    pub assignment: BTreeMap<u64, ChildId>,
}

impl TaskAllocation {
    pub fn child_for(&self, task_id: u64) -> Option<ChildId> {
        self.assignment.get(&task_id).copied()
    }

    /// True when every atomic of `ct` has been assigned.
    pub fn covers(&self, ct: &CompositeTask) -> bool {
        ct.atomics
            .iter()
            .all(|t| self.assignment.contains_key(&t.task_id))
    }
}

/// Static description of a system: agents, task types, resources and ownership.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemDescriptor {
    pub parents: Vec<ParentId>,
    pub children: Vec<ChildId>,
    pub atomic_types: usize,
    pub composite_types: Vec<CompositeTaskType>,
    pub resources: Vec<ResourceId>,
    pub resource_map: ResourceMap,
    /// Parents responsible for each composite type, indexed by [`CompositeTypeId`].
    pub composite_owner: Vec<Vec<ParentId>>,
    /// Episodes between arrivals, per composite type.
    pub task_frequency: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    NonContiguousIds {
        kind: &'static str,
    },
    EmptyComposite {
        composite: usize,
    },
    RepeatedAtomicType {
        composite: usize,
        task_type: usize,
    },
    DanglingAtomicType {
        composite: usize,
        task_type: usize,
    },
    NegativeResource {
        child: usize,
        resource: usize,
        amount: f64,
    },
    MissingResource {
        child: usize,
        resource: usize,
    },
    UnownedComposite {
        composite: usize,
    },
    DanglingOwner {
        composite: usize,
        parent: usize,
    },
    ZeroFrequency {
        composite: usize,
    },
    OwnerTableLength {
        expected: usize,
        actual: usize,
    },
    FrequencyTableLength {
        expected: usize,
        actual: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            NonContiguousIds { kind } => write!(f, "{kind} ids are not 0..len"),
            EmptyComposite { composite } => write!(f, "composite type {composite} is empty"),
            RepeatedAtomicType {
                composite,
                task_type,
            } => write!(
                f,
                "composite type {composite} repeats atomic type {task_type}"
            ),
            DanglingAtomicType {
                composite,
                task_type,
            } => write!(
                f,
                "composite type {composite} references unknown atomic type {task_type}"
            ),
            NegativeResource {
                child,
                resource,
                amount,
            } => write!(f, "child {child} holds {amount} of resource {resource}"),
            MissingResource { child, resource } => {
                write!(f, "child {child} has no entry for resource {resource}")
            }
            UnownedComposite { composite } => {
                write!(f, "composite type {composite} has no owning parent")
            }
            DanglingOwner { composite, parent } => {
                write!(
                    f,
                    "composite type {composite} owned by unknown parent {parent}"
                )
            }
            ZeroFrequency { composite } => {
                write!(f, "composite type {composite} has task frequency 0")
            }
            OwnerTableLength { expected, actual } => {
                write!(f, "owner table has {actual} entries, expected {expected}")
            }
            FrequencyTableLength { expected, actual } => {
                write!(
                    f,
                    "frequency table has {actual} entries, expected {expected}"
                )
            }
        }
    }
}

fn contiguous<I: Iterator<Item = usize>>(ids: I) -> bool {
    ids.enumerate().all(|(i, id)| i == id)
}

impl SystemDescriptor {
    /// Collects every invariant violation. An empty list means the descriptor is usable.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();

        if !contiguous(self.parents.iter().map(|p| p.index())) {
            out.push(Violation::NonContiguousIds { kind: "parent" });
        }
        if !contiguous(self.children.iter().map(|c| c.index())) {
            out.push(Violation::NonContiguousIds { kind: "child" });
        }
        if !contiguous(self.resources.iter().map(|r| r.index())) {
            out.push(Violation::NonContiguousIds { kind: "resource" });
        }

        for (k, ct) in self.composite_types.iter().enumerate() {
            if ct.is_empty() {
                out.push(Violation::EmptyComposite { composite: k });
            }
            let mut seen = BTreeSet::new();
            for tt in ct.members() {
                if tt.index() >= self.atomic_types {
                    out.push(Violation::DanglingAtomicType {
                        composite: k,
                        task_type: tt.index(),
                    });
                }
                if !seen.insert(*tt) {
                    out.push(Violation::RepeatedAtomicType {
                        composite: k,
                        task_type: tt.index(),
                    });
                }
            }
        }

        for child in &self.children {
            for res in &self.resources {
                match self.resource_map.amount(*child, *res) {
                    None => out.push(Violation::MissingResource {
                        child: child.index(),
                        resource: res.index(),
                    }),
                    Some(a) if a.is_nan() || a < 0.0 => out.push(Violation::NegativeResource {
                        child: child.index(),
                        resource: res.index(),
                        amount: a,
                    }),
                    Some(_) => {}
                }
            }
        }

        if self.composite_owner.len() != self.composite_types.len() {
            out.push(Violation::OwnerTableLength {
                expected: self.composite_types.len(),
                actual: self.composite_owner.len(),
            });
        }
        for (k, owners) in self.composite_owner.iter().enumerate() {
            if owners.is_empty() {
                out.push(Violation::UnownedComposite { composite: k });
            }
            for p in owners {
                if p.index() >= self.parents.len() {
                    out.push(Violation::DanglingOwner {
                        composite: k,
                        parent: p.index(),
                    });
                }
            }
        }

        if self.task_frequency.len() != self.composite_types.len() {
            out.push(Violation::FrequencyTableLength {
                expected: self.composite_types.len(),
                actual: self.task_frequency.len(),
            });
        }
        for (k, tf) in self.task_frequency.iter().enumerate() {
            if *tf == 0 {
                out.push(Violation::ZeroFrequency { composite: k });
            }
        }

        out
    }

    pub fn composite_type(&self, id: CompositeTypeId) -> Option<&CompositeTaskType> {
        self.composite_types.get(id.index())
    }

    /// Composite types a parent is responsible for.
    pub fn owned_by(&self, parent: ParentId) -> impl Iterator<Item = CompositeTypeId> + '_ {
        self.composite_owner
            .iter()
            .enumerate()
            .filter(move |(_, owners)| owners.contains(&parent))
            .map(|(k, _)| CompositeTypeId(k))
    }
}

/// Resources each child devotes to each atomic task type at one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationSnapshot {
    pub episode: u64,
    /// `amounts[child][resource][task_type]`
    pub amounts: Vec<Vec<Vec<f64>>>,
}

impl AllocationSnapshot {
    pub fn amount(&self, child: ChildId, resource: ResourceId, tt: AtomicTaskType) -> f64 {
        self.amounts[child.index()][resource.index()][tt.index()]
    }

    /// Checks that no amount is negative and that, for every child and resource,
    /// the per-type amounts add up to what the child holds.
    pub fn is_consistent_with(&self, map: &ResourceMap, tol: f64) -> bool {
        self.amounts.iter().enumerate().all(|(c, per_res)| {
            per_res.iter().enumerate().all(|(r, per_type)| {
                let held = map.amount(ChildId(c), ResourceId(r)).unwrap_or(f64::NAN);
                per_type.iter().all(|a| *a >= 0.0)
                    && (per_type.iter().sum::<f64>() - held).abs() <= tol
            })
        })
    }
}
