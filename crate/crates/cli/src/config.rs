//! Scenario overrides from flags and from flat `key = value` files.
//!
//! File keys are the [`ScenarioConfig`] field names (`task_types` is accepted
//! as another name for `atomic_types`). Blank lines and lines starting with
//! `#` are skipped. Seeds are written `a..b` (half-open), `a,b,c` or a single
//! number.

use std::str::FromStr;

use mgrao::scenarios::{ScenarioConfig, ScenarioName};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub name: Option<ScenarioName>,
    pub parents: Option<usize>,
    pub children: Option<usize>,
    pub group_sizes: Option<Vec<usize>>,
    pub churn_probability: Option<f64>,
    pub epsilon: Option<f64>,
    pub episodes: Option<u64>,
    pub seeds: Option<Vec<u64>>,
    pub alpha: Option<f64>,
    pub gamma: Option<f64>,
    pub atomic_types: Option<usize>,
    pub composite_size: Option<usize>,
    pub composite_types: Option<usize>,
    pub resources: Option<usize>,
    pub task_frequency: Option<u32>,
}

macro_rules! take {
    ($dst:expr, $src:expr, $($f:ident),*) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )*
    };
}

macro_rules! apply {
    ($cfg:expr, $src:expr, $($f:ident),*) => {
        $( if let Some(v) = &$src.$f { $cfg.$f = v.clone(); } )*
    };
}

impl Overrides {
    /// Fields set in `other` replace ours.
    pub fn overlay(mut self, other: &Overrides) -> Self {
        take!(
            self,
            other,
            name,
            parents,
            children,
            group_sizes,
            churn_probability,
            epsilon,
            episodes,
            seeds,
            alpha,
            gamma,
            atomic_types,
            composite_size,
            composite_types,
            resources,
            task_frequency
        );
        self
    }

    pub fn apply(&self, cfg: &mut ScenarioConfig) {
        apply!(
            cfg,
            self,
            parents,
            children,
            group_sizes,
            churn_probability,
            epsilon,
            episodes,
            seeds,
            alpha,
            gamma,
            atomic_types,
            composite_size,
            composite_types,
            resources,
            task_frequency
        );
    }

    pub fn parse_file(text: &str) -> Result<Self, String> {
        let mut out = Overrides::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key = value", n + 1))?;
            let (key, value) = (key.trim(), value.trim());
            out.set(key, value)
                .map_err(|e| format!("line {}: `{key}`: {e}", n + 1))?;
        }
        Ok(out)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key {
            "name" => self.name = Some(value.parse().map_err(|e| format!("{e}"))?),
            "parents" => self.parents = Some(positive(value)?),
            "children" => self.children = Some(positive(value)?),
            "group_sizes" => self.group_sizes = Some(list(value)?),
            "churn_probability" => self.churn_probability = Some(unit_interval(value)?),
            "epsilon" => self.epsilon = Some(unit_interval(value)?),
            "episodes" => self.episodes = Some(positive(value)?),
            "seeds" => self.seeds = Some(seeds(value)?),
            "alpha" => self.alpha = Some(unit_interval(value)?),
            "gamma" => self.gamma = Some(decay(value)?),
            "atomic_types" | "task_types" => self.atomic_types = Some(positive(value)?),
            "composite_size" => self.composite_size = Some(positive(value)?),
            "composite_types" => self.composite_types = Some(positive(value)?),
            "resources" => self.resources = Some(positive(value)?),
            "task_frequency" => self.task_frequency = Some(positive(value)?),
            "groups" => return Err("derived from group_sizes; set that instead".into()),
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }
}

fn number<T: FromStr>(s: &str) -> Result<T, String> {
    s.trim()
        .parse()
        .map_err(|_| format!("`{s}` is not a valid number"))
}

pub fn positive<T: FromStr + PartialOrd + Default>(s: &str) -> Result<T, String> {
    let v: T = number(s)?;
    if v > T::default() {
        Ok(v)
    } else {
        Err(format!("must be positive, got {s}"))
    }
}

pub fn list(s: &str) -> Result<Vec<usize>, String> {
    s.split(',').map(positive).collect()
}

pub fn unit_interval(s: &str) -> Result<f64, String> {
    let v: f64 = number(s)?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("must be in [0, 1], got {s}"))
    }
}

/// `[0, 1)`: a trace decay of 1 never forgets.
pub fn decay(s: &str) -> Result<f64, String> {
    let v: f64 = number(s)?;
    if (0.0..1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("must be in [0, 1), got {s}"))
    }
}

pub fn seeds(s: &str) -> Result<Vec<u64>, String> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (number(a)?, number(b)?);
        if a >= b {
            return Err(format!("empty seed range {s}"));
        }
        return Ok((a..b).collect());
    }
    s.split(',').map(number).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_file() {
        let o = Overrides::parse_file(
            "# comment\nname = large\n\nalpha=0.2\ngroup_sizes = 1,5\nseeds = 3..6\ntask_types = 8\n",
        )
        .unwrap();
        assert_eq!(o.name, Some(ScenarioName::Large));
        assert_eq!(o.alpha, Some(0.2));
        assert_eq!(o.group_sizes, Some(vec![1, 5]));
        assert_eq!(o.seeds, Some(vec![3, 4, 5]));
        assert_eq!(o.atomic_types, Some(8));
    }

    #[test]
    fn rejects_unknown_and_bad_values() {
        let e = Overrides::parse_file("alpah = 0.1").unwrap_err();
        assert!(e.contains("alpah") && e.contains("unknown"), "{e}");
        let e = Overrides::parse_file("x\n").unwrap_err();
        assert!(e.contains("line 1"), "{e}");
        let e = Overrides::parse_file("\nalpha = 1.5").unwrap_err();
        assert!(e.contains("line 2") && e.contains("alpha"), "{e}");
        assert!(Overrides::parse_file("gamma = 1").is_err());
        assert!(Overrides::parse_file("groups = 2").is_err());
    }

    #[test]
    fn flags_win_over_file() {
        let file = Overrides {
            alpha: Some(0.3),
            episodes: Some(5),
            ..Default::default()
        };
        let flags = Overrides {
            alpha: Some(0.7),
            ..Default::default()
        };
        let merged = file.overlay(&flags);
        assert_eq!((merged.alpha, merged.episodes), (Some(0.7), Some(5)));
        let mut cfg = ScenarioConfig::preset(ScenarioName::Single);
        merged.apply(&mut cfg);
        assert_eq!((cfg.alpha, cfg.episodes, cfg.parents), (0.7, 5, 10));
    }

    #[test]
    fn seed_forms() {
        assert_eq!(seeds("7").unwrap(), vec![7]);
        assert_eq!(seeds("1,4").unwrap(), vec![1, 4]);
        assert_eq!(seeds("0..3").unwrap(), vec![0, 1, 2]);
        assert!(seeds("3..3").is_err());
        assert!(seeds("a").is_err());
    }
}
