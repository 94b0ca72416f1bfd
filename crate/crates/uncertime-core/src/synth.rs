//! Synthetic data with known ground truth: a 1-D heteroscedastic
//! regression task and toy event logs with controllable duration noise,
//! branching and drift. Both keep their generating parameters around so
//! tests can score uncertainty estimates against the truth.

use alloc::string::ToString;
use alloc::vec::Vec;

use crate::eventlog::{Case, Event, PrefixRecord, SECONDS_PER_DAY};
use crate::fmath;
use crate::rng::Rng;

/// Aleatoric noise profile for the 1-D generator.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum NoiseProfile {
    /// Constant sigma (0 allowed: noise-free).
    Homoscedastic(f64),
    /// `sigma(x) = base + amp * (1 + sin x)`.
    SineHetero { base: f64, amp: f64 },
}

impl NoiseProfile {
    pub fn sigma(&self, x: f64) -> f64 {
        match *self {
            NoiseProfile::Homoscedastic(s) => s,
            NoiseProfile::SineHetero { base, amp } => base + amp * (1.0 + fmath::sin(x)),
        }
    }
}

impl Default for NoiseProfile {
    fn default() -> Self {
        NoiseProfile::SineHetero {
            base: 0.1,
            amp: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Regression1dSpec {
    pub n: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub noise: NoiseProfile,
    pub seed: u64,
}

impl Default for Regression1dSpec {
    fn default() -> Self {
        Regression1dSpec {
            n: 1000,
            x_min: -3.0,
            x_max: 3.0,
            noise: NoiseProfile::default(),
            seed: 0,
        }
    }
}

/// Samples plus the generating truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Regression1d {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// True sigma(x) per sample.
    pub sigma: Vec<f64>,
}

/// The fixed mean function of the 1-D task.
pub fn regression_mean(x: f64) -> f64 {
    fmath::sin(x)
}

/// `y = sin(x) + eps`, `eps ~ Normal(0, sigma(x)^2)`, x uniform on the
/// configured interval.
pub fn gen_regression1d(spec: &Regression1dSpec) -> Regression1d {
    let mut rng = Rng::derive(spec.seed, 0x5e6);
    let mut x = Vec::with_capacity(spec.n);
    let mut y = Vec::with_capacity(spec.n);
    let mut sigma = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let xi = rng.uniform(spec.x_min, spec.x_max);
        let si = spec.noise.sigma(xi);
        let yi = regression_mean(xi) + si * rng.normal();
        x.push(xi);
        y.push(yi);
        sigma.push(si);
    }
    Regression1d { x, y, sigma }
}

/// View 1-D regression samples as single-event prefix windows (sequence
/// length 1, one numeric feature) so the same models and trainer apply.
pub fn regression_records(data: &Regression1d) -> Vec<PrefixRecord> {
    data.x
        .iter()
        .zip(&data.y)
        .enumerate()
        .map(|(i, (&x, &y))| PrefixRecord {
            case_id: alloc::format!("r{i}"),
            prefix_length: 1,
            categorical: Vec::new(),
            numeric: alloc::vec![x],
            target_days: y,
            case_start: 0,
            event_timestamp: 0,
        })
        .collect()
}

/// Toy process generator: a short activity chain with an optional noisy
/// review branch, lognormal step durations and an optional mid-log drift
/// that doubles every duration scale.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EventLogSpec {
    pub cases: usize,
    /// Probability a case detours through the high-noise review branch.
    pub branch_probability: f64,
    /// Lognormal sigma of ordinary step durations (0 = deterministic).
    pub duration_sigma: f64,
    /// Seconds between consecutive case arrivals.
    pub arrival_step_seconds: i64,
    /// Double all duration means for cases starting in the second half.
    pub drift: bool,
    pub seed: u64,
}

impl Default for EventLogSpec {
    fn default() -> Self {
        EventLogSpec {
            cases: 500,
            branch_probability: 0.3,
            duration_sigma: 0.35,
            arrival_step_seconds: 10_800,
            drift: false,
            seed: 0,
        }
    }
}

/// Mean durations (days) of each step on the two paths.
const FAST_PATH: [(&str, &str, f64); 4] = [
    ("register", "triage", 0.25),
    ("triage", "approve", 0.5),
    ("approve", "process", 1.0),
    ("process", "close", 0.5),
];
const REVIEW_PATH: [(&str, &str, f64); 5] = [
    ("register", "triage", 0.25),
    ("triage", "review", 1.0),
    ("review", "rework", 2.0),
    ("rework", "process", 1.5),
    ("process", "close", 0.5),
];
/// Review-branch steps are this much noisier.
const REVIEW_SIGMA_FACTOR: f64 = 3.0;

/// A generated log plus the conditional expected remaining time for every
/// event of every case.
#[derive(Debug, Clone)]
pub struct SynthEventLog {
    pub cases: Vec<Case>,
    /// Per case, per event: E[remaining days | prefix so far].
    pub expected_remaining: Vec<Vec<f64>>,
}

fn lognormal(mean: f64, sigma: f64, rng: &mut Rng) -> f64 {
    if sigma == 0.0 {
        return mean;
    }
    // E[mean * exp(sigma Z - sigma^2/2)] = mean.
    mean * fmath::exp(sigma * rng.normal() - sigma * sigma / 2.0)
}

/// Remaining mean duration from step index `k` (0 = before first step).
fn path_tail(path: &[(&str, &str, f64)], k: usize, scale: f64) -> f64 {
    path[k..].iter().map(|(_, _, d)| d * scale).sum()
}

pub fn gen_eventlog(spec: &EventLogSpec) -> SynthEventLog {
    let mut rng = Rng::derive(spec.seed, 0x109);
    let mut cases = Vec::with_capacity(spec.cases);
    let mut expected_remaining = Vec::with_capacity(spec.cases);
    let resources = ["r0", "r1", "r2"];
    for i in 0..spec.cases {
        let start = i as i64 * spec.arrival_step_seconds;
        let drifted = spec.drift && i >= spec.cases / 2;
        let scale = if drifted { 2.0 } else { 1.0 };
        let review = rng.bernoulli(spec.branch_probability);
        let path: &[(&str, &str, f64)] = if review { &REVIEW_PATH } else { &FAST_PATH };

        let case_id = alloc::format!("case{i:06}");
        let resource = resources[rng.below(resources.len())].to_string();
        let amount = fmath::exp(rng.uniform(0.0, 4.0));
        let mut events = Vec::with_capacity(path.len() + 1);
        let mut truth = Vec::with_capacity(path.len() + 1);
        let mut ts = start;

        let push = |events: &mut Vec<Event>, activity: &str, ts: i64| {
            events.push(Event {
                case_id: case_id.clone(),
                activity: activity.to_string(),
                timestamp: ts,
                extra_categorical: alloc::vec![resource.clone()],
                extra_numeric: alloc::vec![amount],
            });
        };

        // Expected remaining before the branch is revealed mixes both paths.
        let mix = |k: usize| -> f64 {
            spec.branch_probability * path_tail(&REVIEW_PATH, k, scale)
                + (1.0 - spec.branch_probability) * path_tail(&FAST_PATH, k, scale)
        };

        push(&mut events, path[0].0, ts);
        truth.push(mix(0));
        for (k, (_, to, mean_days)) in path.iter().enumerate() {
            let sigma = if review && *to != "close" {
                spec.duration_sigma * REVIEW_SIGMA_FACTOR
            } else {
                spec.duration_sigma
            };
            let days = lognormal(mean_days * scale, sigma, &mut rng);
            ts += (days * SECONDS_PER_DAY) as i64;
            push(&mut events, to, ts);
            // From the second event on, the branch is known ("triage" is
            // still shared; its successor reveals it).
            let remaining = if k == 0 { mix(1) } else { path_tail(path, k + 1, scale) };
            truth.push(remaining);
        }
        cases.push(Case { case_id, events });
        expected_remaining.push(truth);
    }
    SynthEventLog {
        cases,
        expected_remaining,
    }
}
