//! Annotated-transition-system baseline for remaining-time prediction.
//!
//! Training prefixes are abstracted into states (last-k activity sequence,
//! activity set, or activity multiset); each state is annotated with the
//! remaining-time statistics of every prefix that reached it. Prediction
//! abstracts the running prefix, looks the state up, and backs off through
//! shorter suffixes (last-k only) down to the global training statistics.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::eventlog::{Case, SECONDS_PER_DAY};
use crate::stats;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AtsError {
    #[error("transition system needs at least one training case")]
    NoTrainingCases,
    #[error("last-k abstraction needs k >= 1")]
    ZeroK,
}

/// State abstraction over a prefix's activity sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Abstraction {
    /// The last `k` activities in order.
    LastK(usize),
    /// The set of activities seen so far.
    ActivitySet,
    /// Activities with multiplicities.
    ActivityMultiset,
}

/// Which annotation a prediction reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Statistic {
    #[default]
    Mean,
    Median,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum StateKey {
    Seq(Vec<String>),
    Set(BTreeSet<String>),
    Multi(BTreeMap<String, usize>),
}

/// Remaining-time annotation of one state.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StateStats {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
}

fn finalize(values: &mut [f64]) -> StateStats {
    values.sort_by(f64::total_cmp);
    StateStats {
        count: values.len(),
        mean: stats::mean(values),
        median: stats::quantile_sorted(values, 0.5),
    }
}

#[derive(Debug, Clone)]
pub struct AnnotatedTransitionSystem {
    abstraction: Abstraction,
    states: BTreeMap<StateKey, StateStats>,
    global: StateStats,
    min_remaining: f64,
    max_remaining: f64,
}

fn abstract_suffix(activities: &[&str], len: usize) -> StateKey {
    let lo = activities.len().saturating_sub(len);
    StateKey::Seq(activities[lo..].iter().map(|a| a.to_string()).collect())
}

fn abstract_full(activities: &[&str], abstraction: Abstraction) -> StateKey {
    match abstraction {
        Abstraction::LastK(k) => abstract_suffix(activities, k),
        Abstraction::ActivitySet => {
            StateKey::Set(activities.iter().map(|a| a.to_string()).collect())
        }
        Abstraction::ActivityMultiset => {
            let mut m: BTreeMap<String, usize> = BTreeMap::new();
            for a in activities {
                *m.entry((*a).to_string()).or_insert(0) += 1;
            }
            StateKey::Multi(m)
        }
    }
}

/// Map every training prefix to its abstract state and annotate each state
/// with remaining-time statistics; global statistics are the fallback.
pub fn build_ats(
    cases: &[Case],
    abstraction: Abstraction,
) -> Result<AnnotatedTransitionSystem, AtsError> {
    if cases.is_empty() {
        return Err(AtsError::NoTrainingCases);
    }
    if let Abstraction::LastK(0) = abstraction {
        return Err(AtsError::ZeroK);
    }
    let mut buckets: BTreeMap<StateKey, Vec<f64>> = BTreeMap::new();
    let mut all = Vec::new();
    for case in cases {
        let end = case.end();
        let activities: Vec<&str> = case.events.iter().map(|e| e.activity.as_str()).collect();
        for k in 1..=case.events.len() {
            let remaining = (end - case.events[k - 1].timestamp) as f64 / SECONDS_PER_DAY;
            all.push(remaining);
            match abstraction {
                Abstraction::LastK(max_k) => {
                    // Annotate every suffix length so prediction can back
                    // off from k to shorter memories.
                    for len in 1..=k.min(max_k) {
                        buckets
                            .entry(abstract_suffix(&activities[..k], len))
                            .or_default()
                            .push(remaining);
                    }
                }
                _ => {
                    buckets
                        .entry(abstract_full(&activities[..k], abstraction))
                        .or_default()
                        .push(remaining);
                }
            }
        }
    }
    let states = buckets
        .into_iter()
        .map(|(key, mut values)| (key, finalize(&mut values)))
        .collect();
    let min_remaining = all.iter().copied().fold(f64::INFINITY, f64::min);
    let max_remaining = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let global = finalize(&mut all);
    Ok(AnnotatedTransitionSystem {
        abstraction,
        states,
        global,
        min_remaining,
        max_remaining,
    })
}

impl AnnotatedTransitionSystem {
    pub fn abstraction(&self) -> Abstraction {
        self.abstraction
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn global(&self) -> StateStats {
        self.global
    }

    /// Bounds of the training remaining times; every prediction lies
    /// inside them.
    pub fn range(&self) -> (f64, f64) {
        (self.min_remaining, self.max_remaining)
    }

    /// Annotation of the exact state of `activities`, if visited.
    pub fn lookup(&self, activities: &[&str]) -> Option<StateStats> {
        self.states
            .get(&abstract_full(activities, self.abstraction))
            .copied()
    }

    fn read(&self, s: &StateStats, stat: Statistic) -> f64 {
        match stat {
            Statistic::Mean => s.mean,
            Statistic::Median => s.median,
        }
    }

    /// Predict remaining time (days) for a running prefix given as its
    /// activity sequence. Last-k misses back off through shorter suffixes
    /// before falling back to the global statistic.
    pub fn predict(&self, activities: &[&str], stat: Statistic) -> f64 {
        match self.abstraction {
            Abstraction::LastK(k) => {
                let longest = k.min(activities.len());
                for len in (1..=longest).rev() {
                    if let Some(s) = self.states.get(&abstract_suffix(activities, len)) {
                        return self.read(s, stat);
                    }
                }
                self.read(&self.global, stat)
            }
            _ => match self.lookup(activities) {
                Some(s) => self.read(&s, stat),
                None => self.read(&self.global, stat),
            },
        }
    }
}
