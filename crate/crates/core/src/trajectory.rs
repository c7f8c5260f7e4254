//! Monte-Carlo detection records.
//!
//! The field stays diagonal, so the photon number is simulated as a
//! classical jump process: thermal damping as a birth–death process
//! between atoms, and each atom leaves excited (A, photon number kept) or
//! de-excited (B, one photon added) with the diagonal branch
//! probabilities. Detectors click with probability `η_A` or `η_B`.
//!
//! Streams use [`ChaCha8Rng`] seeded with `seed_from_u64(seed)`; replica
//! `k` of a pooled run uses seed `seed + k`. The process starts from the
//! vacuum and discards a burn-in before recording.

use std::io::{self, BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;

use crate::error::{MaserError, Result};
use crate::fock::{Channel, MaserParams};
use crate::statistics::parse_sequence;

/// Batches used for standard errors.
pub const BATCHES: usize = 32;
/// Fewest relevant events an estimate accepts.
pub const MIN_EVENTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    DetectedA,
    DetectedB,
    Undetected,
}

impl Outcome {
    pub fn name(self) -> &'static str {
        match self {
            Outcome::DetectedA => "detected_A",
            Outcome::DetectedB => "detected_B",
            Outcome::Undetected => "undetected",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "detected_A" => Some(Outcome::DetectedA),
            "detected_B" => Some(Outcome::DetectedB),
            "undetected" => Some(Outcome::Undetected),
            _ => None,
        }
    }

    fn channel(self) -> Option<Channel> {
        match self {
            Outcome::DetectedA => Some(Channel::A),
            Outcome::DetectedB => Some(Channel::B),
            Outcome::Undetected => None,
        }
    }
}

/// One atom passage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    /// Arrival time in `rt`.
    pub time: f64,
    pub outcome: Outcome,
    /// Photon number met by the atom.
    pub photons: u32,
}

#[derive(Debug, Clone)]
pub struct DetectionRecord {
    pub events: Vec<Event>,
    pub seed: u64,
    pub n_atoms: usize,
    pub params: MaserParams,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    /// Atoms simulated and discarded before recording starts.
    pub burn_in: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { burn_in: 20_000 }
    }
}

struct Walker<'a> {
    params: &'a MaserParams,
    rng: ChaCha8Rng,
    n: u32,
    t: f64,
}

impl Walker<'_> {
    /// Damps the field up to the next arrival, then passes one atom.
    fn next_atom(&mut self) -> Event {
        let p = self.params;
        let arrival = self.t + self.rng.sample::<f64, _>(Exp1);
        loop {
            let n = self.n as f64;
            let down = (p.nu + 1.0) * n / p.n_ex;
            let up = p.nu * (n + 1.0) / p.n_ex;
            let total = down + up;
            if total <= 0.0 {
                break;
            }
            let jump = self.t + self.rng.sample::<f64, _>(Exp1) / total;
            if jump >= arrival {
                break;
            }
            self.t = jump;
            if self.rng.random::<f64>() * total < down {
                self.n -= 1;
            } else {
                self.n += 1;
            }
        }
        self.t = arrival;

        let photons = self.n;
        let stay = p.stay_probability(photons as usize);
        let excited = self.rng.random::<f64>() < stay;
        if !excited {
            self.n += 1;
        }
        let eta = if excited { p.eta_a } else { p.eta_b };
        let outcome = match (self.rng.random::<f64>() < eta, excited) {
            (false, _) => Outcome::Undetected,
            (true, true) => Outcome::DetectedA,
            (true, false) => Outcome::DetectedB,
        };
        Event {
            time: arrival,
            outcome,
            photons,
        }
    }
}

pub fn simulate(params: &MaserParams, n_atoms: usize, seed: u64) -> Result<DetectionRecord> {
    simulate_with(params, n_atoms, seed, SimOptions::default())
}

pub fn simulate_with(params: &MaserParams, n_atoms: usize, seed: u64, options: SimOptions) -> Result<DetectionRecord> {
    params.validate()?;
    if n_atoms == 0 {
        return Err(MaserError::InvalidParams("at least one atom is required".into()));
    }
    let mut walker = Walker {
        params,
        rng: ChaCha8Rng::seed_from_u64(seed),
        n: 0,
        t: 0.0,
    };
    for _ in 0..options.burn_in {
        walker.next_atom();
    }
    let origin = walker.t;
    let events = (0..n_atoms)
        .map(|_| {
            let mut e = walker.next_atom();
            e.time -= origin;
            e
        })
        .collect();
    Ok(DetectionRecord {
        events,
        seed,
        n_atoms,
        params: *params,
    })
}

/// Independent records with seeds `seed, seed + 1, ...`, simulated in
/// parallel and returned in seed order.
pub fn simulate_replicas(params: &MaserParams, n_atoms: usize, seed: u64, replicas: usize) -> Result<Vec<DetectionRecord>> {
    (0..replicas as u64)
        .into_par_iter()
        .map(|k| simulate(params, n_atoms, seed.wrapping_add(k)))
        .collect()
}

/// Photon numbers met by every `spacing`-th atom after burn-in; with a
/// spacing well above the field correlation time the samples are nearly
/// independent draws from the steady state.
pub fn sample_photon_numbers(params: &MaserParams, samples: usize, spacing: usize, seed: u64) -> Result<Vec<u32>> {
    params.validate()?;
    let mut walker = Walker {
        params,
        rng: ChaCha8Rng::seed_from_u64(seed),
        n: 0,
        t: 0.0,
    };
    for _ in 0..SimOptions::default().burn_in {
        walker.next_atom();
    }
    let spacing = spacing.max(1);
    Ok((0..samples)
        .map(|_| {
            let photons = walker.next_atom().photons;
            for _ in 1..spacing {
                walker.next_atom();
            }
            photons
        })
        .collect())
}

impl DetectionRecord {
    pub fn duration(&self) -> f64 {
        self.events.last().map_or(0.0, |e| e.time)
    }

    /// Detections only, in time order.
    pub fn detections(&self) -> impl Iterator<Item = (f64, Channel)> + '_ {
        self.events.iter().filter_map(|e| e.outcome.channel().map(|c| (e.time, c)))
    }

    /// One event per line: `time outcome`, time in `rt`.
    pub fn write_to<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "# seed {} atoms {} time_unit rt", self.seed, self.n_atoms)?;
        for e in &self.events {
            writeln!(out, "{:.12e} {}", e.time, e.outcome.name())?;
        }
        Ok(())
    }

    /// Reads the `time outcome` format written by [`DetectionRecord::write_to`].
    /// Photon numbers are not stored and read back as zero.
    pub fn read_events<R: BufRead>(input: R) -> Result<Vec<Event>> {
        let mut events = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line.map_err(|e| MaserError::Config(e.to_string()))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = || MaserError::Config(format!("record line {}: `{line}`", i + 1));
            let mut parts = line.split_whitespace();
            let time = parts.next().and_then(|t| t.parse::<f64>().ok()).ok_or_else(bad)?;
            let outcome = parts.next().and_then(Outcome::parse).ok_or_else(bad)?;
            events.push(Event {
                time,
                outcome,
                photons: 0,
            });
        }
        Ok(events)
    }
}

/// Observables the oracle can estimate. Times are in the time unit of
/// the record's parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Observable {
    ProbA,
    ProbB,
    RunA,
    RunB,
    WaitAA,
    WaitBB,
    WaitAB,
    WaitBA,
    WaitSquaredAA,
    WaitSquaredBB,
    FanoA(f64),
    FanoB(f64),
    Inversion,
    NormalizedInversion,
    Sequence(String),
    /// Probability of no detection on the channel in a window of the given
    /// length.
    Exclusion(Channel, f64),
}

impl Observable {
    /// Parses names such as `P[A]`, `n_a`, `t_ab`, `t2_aa`, `Q_B(1.0)`,
    /// `I`, `I_tilde`, `P[ABA]`, `u_AB(0.5)`.
    pub fn parse(name: &str) -> Result<Self> {
        let unknown = || MaserError::UnknownObservable(name.to_string());
        let arg = |s: &str| -> Result<f64> {
            s.strip_suffix(')')
                .and_then(|v| v.parse::<f64>().ok())
                .filter(|v| *v > 0.0 && v.is_finite())
                .ok_or_else(unknown)
        };
        Ok(match name {
            "P[A]" => Observable::ProbA,
            "P[B]" => Observable::ProbB,
            "n_a" => Observable::RunA,
            "n_b" => Observable::RunB,
            "t_aa" => Observable::WaitAA,
            "t_bb" => Observable::WaitBB,
            "t_ab" => Observable::WaitAB,
            "t_ba" => Observable::WaitBA,
            "t2_aa" => Observable::WaitSquaredAA,
            "t2_bb" => Observable::WaitSquaredBB,
            "I" => Observable::Inversion,
            "I_tilde" => Observable::NormalizedInversion,
            _ => {
                if let Some(rest) = name.strip_prefix("Q_A(") {
                    Observable::FanoA(arg(rest)?)
                } else if let Some(rest) = name.strip_prefix("Q_B(") {
                    Observable::FanoB(arg(rest)?)
                } else if let Some(rest) = name.strip_prefix("u_AB(") {
                    Observable::Exclusion(Channel::AB, arg(rest)?)
                } else if let Some(rest) = name.strip_prefix("u_A(") {
                    Observable::Exclusion(Channel::A, arg(rest)?)
                } else if let Some(rest) = name.strip_prefix("u_B(") {
                    Observable::Exclusion(Channel::B, arg(rest)?)
                } else if let Some(seq) = name.strip_prefix("P[").and_then(|s| s.strip_suffix(']')) {
                    parse_sequence(seq, 3).map_err(|_| unknown())?;
                    Observable::Sequence(seq.to_ascii_uppercase())
                } else {
                    return Err(unknown());
                }
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl Estimate {
    /// `|value - reference|` in standard errors.
    pub fn z_score(&self, reference: f64) -> f64 {
        (self.value - reference).abs() / self.std_error
    }
}

/// How per-item samples combine into a batch statistic.
#[derive(Clone, Copy)]
enum Statistic {
    Mean,
    /// `Var/mean - 1` of window counts.
    Fano,
}

fn statistic(items: &[f64], kind: Statistic) -> f64 {
    let n = items.len() as f64;
    let mean = items.iter().sum::<f64>() / n;
    match kind {
        Statistic::Mean => mean,
        Statistic::Fano => {
            let var = items.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
            var / mean - 1.0
        }
    }
}

struct Samples {
    items: Vec<f64>,
    kind: Statistic,
}

fn mean_items(items: Vec<f64>) -> Samples {
    Samples {
        items,
        kind: Statistic::Mean,
    }
}

fn wait_items(detections: &[(f64, Channel)], from: Channel, to: Channel, power: i32) -> Vec<f64> {
    let mut out = Vec::new();
    let mut next_to: Option<f64> = None;
    for &(t, c) in detections.iter().rev() {
        // For from == to the wait is to the next detection strictly after.
        if c == from {
            if let Some(next) = next_to {
                out.push((next - t).powi(power));
            }
        }
        if c == to {
            next_to = Some(t);
        }
    }
    out.reverse();
    out
}

fn run_items(detections: &[(f64, Channel)], channel: Channel) -> Vec<f64> {
    let mut out = Vec::new();
    let mut current: Option<(Channel, usize)> = None;
    let mut first = true;
    for &(_, c) in detections {
        match current {
            Some((k, len)) if k == c => current = Some((k, len + 1)),
            Some((k, len)) => {
                // The first run may have started before recording.
                if k == channel && !first {
                    out.push(len as f64);
                }
                first = false;
                current = Some((c, 1));
            }
            None => current = Some((c, 1)),
        }
    }
    out
}

fn samples(record: &DetectionRecord, obs: &Observable) -> Samples {
    let p = &record.params;
    let to_unit = |tau: f64| p.time_unit.from_injection_time(tau, p.n_ex);
    let detections: Vec<(f64, Channel)> = record.detections().collect();
    let indicator = |want: Channel| mean_items(detections.iter().map(|&(_, c)| f64::from(c == want)).collect());
    let windows = |length: f64, channel: Channel| -> Vec<f64> {
        let tau = p.time_unit.to_injection_time(length, p.n_ex);
        let count = (record.duration() / tau).floor() as usize;
        let mut counts = vec![0.0; count];
        for &(t, c) in &detections {
            let k = (t / tau) as usize;
            if k < count && (channel == Channel::AB || c == channel) {
                counts[k] += 1.0;
            }
        }
        counts
    };
    match obs {
        Observable::ProbA => indicator(Channel::A),
        Observable::ProbB => indicator(Channel::B),
        Observable::RunA => mean_items(run_items(&detections, Channel::A)),
        Observable::RunB => mean_items(run_items(&detections, Channel::B)),
        Observable::WaitAA => mean_items(wait_items(&detections, Channel::A, Channel::A, 1).into_iter().map(to_unit).collect()),
        Observable::WaitBB => mean_items(wait_items(&detections, Channel::B, Channel::B, 1).into_iter().map(to_unit).collect()),
        Observable::WaitAB => mean_items(wait_items(&detections, Channel::A, Channel::B, 1).into_iter().map(to_unit).collect()),
        Observable::WaitBA => mean_items(wait_items(&detections, Channel::B, Channel::A, 1).into_iter().map(to_unit).collect()),
        Observable::WaitSquaredAA => mean_items(
            wait_items(&detections, Channel::A, Channel::A, 2).into_iter().map(|x| to_unit(to_unit(x))).collect(),
        ),
        Observable::WaitSquaredBB => mean_items(
            wait_items(&detections, Channel::B, Channel::B, 2).into_iter().map(|x| to_unit(to_unit(x))).collect(),
        ),
        Observable::FanoA(t) => Samples {
            items: windows(*t, Channel::A),
            kind: Statistic::Fano,
        },
        Observable::FanoB(t) => Samples {
            items: windows(*t, Channel::B),
            kind: Statistic::Fano,
        },
        Observable::Inversion => mean_items(
            record
                .events
                .iter()
                .map(|e| match e.outcome {
                    Outcome::DetectedA => -1.0,
                    Outcome::DetectedB => 1.0,
                    Outcome::Undetected => 0.0,
                })
                .collect(),
        ),
        Observable::NormalizedInversion => {
            mean_items(detections.iter().map(|&(_, c)| if c == Channel::B { 1.0 } else { -1.0 }).collect())
        }
        Observable::Sequence(seq) => {
            let symbols = parse_sequence(seq, 3).expect("validated when parsed");
            let k = symbols.len();
            mean_items(
                detections
                    .windows(k)
                    .map(|w| f64::from(w.iter().zip(&symbols).all(|((_, c), s)| c == s)))
                    .collect(),
            )
        }
        Observable::Exclusion(channel, t) => Samples {
            items: windows(*t, *channel).into_iter().map(|n| f64::from(n == 0.0)).collect(),
            kind: Statistic::Mean,
        },
    }
}

/// Point estimate with a batch-means standard error.
pub fn estimate(record: &DetectionRecord, obs: &Observable) -> Result<Estimate> {
    estimate_pooled(std::slice::from_ref(record), obs)
}

/// Pools replicas: the point estimate uses every item, the standard error
/// the spread of [`BATCHES`] batch statistics per replica.
pub fn estimate_pooled(records: &[DetectionRecord], obs: &Observable) -> Result<Estimate> {
    let all: Vec<Samples> = records.iter().map(|r| samples(r, obs)).collect();
    let kind = all.first().map_or(Statistic::Mean, |s| s.kind);
    let got: usize = all.iter().map(|s| s.items.len()).sum();
    if got < MIN_EVENTS || all.iter().any(|s| s.items.len() < BATCHES * 2) {
        return Err(MaserError::InsufficientData {
            observable: format!("{obs:?}"),
            got,
            needed: MIN_EVENTS.max(BATCHES * 2 * records.len()),
        });
    }
    let pooled: Vec<f64> = all.iter().flat_map(|s| s.items.iter().copied()).collect();
    let value = statistic(&pooled, kind);
    let batch_values: Vec<f64> = all
        .iter()
        .flat_map(|s| {
            let len = s.items.len();
            (0..BATCHES).map(move |b| statistic(&s.items[b * len / BATCHES..(b + 1) * len / BATCHES], kind))
        })
        .collect();
    let m = batch_values.len() as f64;
    let mean = batch_values.iter().sum::<f64>() / m;
    let var = batch_values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (m - 1.0);
    Ok(Estimate {
        value,
        std_error: (var / m).sqrt(),
    })
}
