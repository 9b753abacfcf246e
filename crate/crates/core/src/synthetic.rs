//! Ground-truth synthetic trace generator.
//!
//! Builds labeled corpora of crashing-session traces for pipeline tests
//! and benchmarks. Each archetype owns a disjoint set of defining metrics
//! carrying a strong temporal pattern (ramp, spike or plateau); background
//! metrics behave identically across archetypes; metrics that define other
//! archetypes still emit faint readings occasionally so the whole metric
//! namespace survives vocabulary filtering, which is also what lets a
//! later "emerging" archetype light up columns that calibration saw as
//! near-silent.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::RawTrace;
use crate::numerics::SeedStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternKind {
    /// Linear growth over the whole session.
    Ramp,
    /// Quiet until a burst over the final fifth of the session.
    Spike,
    /// Zero for the first half, constant afterwards.
    Plateau,
}

impl PatternKind {
    fn for_archetype(archetype: usize) -> Self {
        match archetype % 3 {
            0 => PatternKind::Ramp,
            1 => PatternKind::Spike,
            _ => PatternKind::Plateau,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub archetypes: usize,
    pub sessions_per_archetype: usize,
    /// Total metric universe; must cover the defining metrics plus the
    /// gauge metric.
    pub metrics: usize,
    pub defining_per_archetype: usize,
    /// Inclusive range of readings per metric per session.
    pub session_len: (usize, usize),
    /// Relative noise applied to every emitted value.
    pub noise: f64,
    /// Probability that a background metric is absent from a session.
    pub sparsity: f64,
    /// Probability that another archetype's defining metric still emits a
    /// faint trace in a session.
    pub faint_presence: f64,
    /// Per-archetype multiplier on the gauge metric's plateau level.
    pub gauge_scales: Option<Vec<f64>>,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            archetypes: 4,
            sessions_per_archetype: 100,
            metrics: 40,
            defining_per_archetype: 1,
            session_len: (80, 120),
            noise: 0.05,
            sparsity: 0.3,
            faint_presence: 0.08,
            gauge_scales: None,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.archetypes < 2 {
            return Err(Error::InvalidInput("need at least 2 archetypes".into()));
        }
        if self.sessions_per_archetype == 0 {
            return Err(Error::InvalidInput("sessions per archetype must be positive".into()));
        }
        let reserved = self.archetypes * self.defining_per_archetype + 1;
        if self.metrics < reserved {
            return Err(Error::InvalidInput(format!(
                "{} metrics cannot hold {} defining metrics plus the gauge",
                self.metrics, reserved
            )));
        }
        if self.session_len.0 == 0 || self.session_len.0 > self.session_len.1 {
            return Err(Error::InvalidInput("bad session length range".into()));
        }
        if !(0.0..=1.0).contains(&self.sparsity) || !(0.0..=1.0).contains(&self.faint_presence) {
            return Err(Error::InvalidInput("probabilities must be in [0, 1]".into()));
        }
        if let Some(scales) = &self.gauge_scales {
            if scales.len() != self.archetypes {
                return Err(Error::InvalidInput(format!(
                    "{} gauge scales for {} archetypes",
                    scales.len(),
                    self.archetypes
                )));
            }
        }
        Ok(())
    }

    pub fn metric_name(&self, index: usize) -> String {
        format!("obj_{index:04}")
    }

    /// Metric indices defining the given archetype.
    pub fn defining_metrics(&self, archetype: usize) -> std::ops::Range<usize> {
        let start = archetype * self.defining_per_archetype;
        start..start + self.defining_per_archetype
    }

    /// The always-present metric whose plateau level scales per archetype.
    pub fn gauge_metric(&self) -> usize {
        self.archetypes * self.defining_per_archetype
    }

    fn background_metrics(&self) -> std::ops::Range<usize> {
        self.gauge_metric() + 1..self.metrics
    }
}

/// Fixed anchor height for the gauge metric's final spike; its plateau is
/// measured against this so per-archetype level scaling survives the
/// per-column min-max scaling downstream.
const GAUGE_ANCHOR: f64 = 100.0;
const GAUGE_PLATEAU: f64 = 20.0;

/// Generate a labeled corpus: traces grouped by archetype (all sessions of
/// archetype 0 first), labels aligned by index.
pub fn generate(spec: &SyntheticSpec) -> Result<(Vec<RawTrace>, Vec<usize>)> {
    spec.validate()?;
    let mut traces = Vec::with_capacity(spec.archetypes * spec.sessions_per_archetype);
    let mut labels = Vec::with_capacity(traces.capacity());
    for archetype in 0..spec.archetypes {
        for session in 0..spec.sessions_per_archetype {
            let global = archetype * spec.sessions_per_archetype + session;
            let mut rng = SeedStream::substream(spec.seed, 0x5E55 + global as u64);
            traces.push(generate_session(spec, archetype, session, &mut rng));
            labels.push(archetype);
        }
    }
    Ok((traces, labels))
}

fn generate_session(
    spec: &SyntheticSpec,
    archetype: usize,
    session: usize,
    rng: &mut SeedStream,
) -> RawTrace {
    let len = spec.session_len.0 + rng.uniform_usize(spec.session_len.1 - spec.session_len.0 + 1);
    let mut metrics = std::collections::BTreeMap::new();

    // Background metrics: same slow-growth behavior in every archetype.
    for metric in spec.background_metrics() {
        if rng.uniform(0.0, 1.0) < spec.sparsity {
            continue;
        }
        let base = 5.0 + (metric * 37 % 13) as f64;
        let series = series_from(len, |i| {
            base * (1.0 + 0.3 * i as f64 / len as f64) * noisy(spec.noise, rng)
        });
        metrics.insert(spec.metric_name(metric), series);
    }

    // Defining metrics: strong pattern in the owning archetype, faint
    // sporadic readings elsewhere.
    for owner in 0..spec.archetypes {
        let pattern = PatternKind::for_archetype(owner);
        for metric in spec.defining_metrics(owner) {
            if owner == archetype {
                if rng.uniform(0.0, 1.0) < 0.97 {
                    let amp = 40.0 * noisy(spec.noise, rng);
                    metrics.insert(
                        spec.metric_name(metric),
                        pattern_series(pattern, len, amp, spec.noise, rng),
                    );
                }
            } else if rng.uniform(0.0, 1.0) < spec.faint_presence {
                metrics.insert(spec.metric_name(metric), faint_series(len, rng));
            }
        }
    }

    // Gauge metric: plateau at an archetype-scaled level over the second
    // half, anchored by a fixed-height spike at the final timestep.
    let scale = spec
        .gauge_scales
        .as_ref()
        .map_or(1.0, |scales| scales[archetype]);
    let plateau = GAUGE_PLATEAU * scale;
    let series = series_from(len, |i| {
        if i + 1 == len {
            GAUGE_ANCHOR
        } else if i >= len / 2 {
            (plateau * noisy(spec.noise, rng)).min(GAUGE_ANCHOR)
        } else {
            0.0
        }
    });
    metrics.insert(spec.metric_name(spec.gauge_metric()), series);

    RawTrace {
        session_id: format!("arch{archetype:02}-sess{session:05}"),
        metrics,
    }
}

fn noisy(noise: f64, rng: &mut SeedStream) -> f64 {
    (1.0 + noise * rng.standard_normal()).max(0.0)
}

fn series_from(len: usize, mut f: impl FnMut(usize) -> f64) -> Vec<(u64, f64)> {
    (0..len).map(|i| (i as u64, f(i).max(0.0))).collect()
}

// The three shapes are balanced to comparable post-scaling column energy,
// so no archetype pair sits systematically closer than another.
fn pattern_series(
    pattern: PatternKind,
    len: usize,
    amp: f64,
    noise: f64,
    rng: &mut SeedStream,
) -> Vec<(u64, f64)> {
    series_from(len, |i| {
        let phase = (i + 1) as f64 / len as f64;
        match pattern {
            PatternKind::Ramp => amp * phase * noisy(noise, rng),
            PatternKind::Spike => {
                // Quiet, then a fast climb holding at full amplitude.
                if phase < 0.6 {
                    0.0
                } else if phase < 0.8 {
                    amp * (phase - 0.6) / 0.2 * noisy(noise, rng)
                } else {
                    amp * noisy(noise, rng)
                }
            }
            PatternKind::Plateau => {
                if phase >= 2.0 / 3.0 {
                    amp * noisy(noise, rng)
                } else {
                    0.0
                }
            }
        }
    })
}

/// A couple of small readings at random positions, zero elsewhere.
fn faint_series(len: usize, rng: &mut SeedStream) -> Vec<(u64, f64)> {
    let hits = 1 + rng.uniform_usize(3);
    let mut positions: Vec<usize> = (0..hits).map(|_| rng.uniform_usize(len)).collect();
    positions.sort_unstable();
    positions.dedup();
    series_from(len, |i| {
        if positions.contains(&i) {
            rng.uniform(0.2, 1.0)
        } else {
            0.0
        }
    })
}
