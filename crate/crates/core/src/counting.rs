//! Photon-counting model: turns a detector table into per-run coincidence
//! counts with accidental background, and estimates probabilities back.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SusdError};
use crate::protocol::{Detector, DetectorTable, MappingPolicy, ProtocolChain};
use crate::qstate::Sign;
use crate::streams::{substream, Purpose};

const DETECTORS: f64 = 9.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceConfig {
    /// Heralded coincidences per second.
    pub coincidence_rate: f64,
    /// Accidental coincidences per second, summed over all detectors.
    pub accidental_rate: f64,
    pub detector_efficiency: f64,
    /// Seconds per run.
    pub integration_time: f64,
    pub runs: usize,
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self {
            coincidence_rate: 2600.0,
            accidental_rate: 15.0,
            detector_efficiency: 0.60,
            integration_time: 15.0,
            runs: 45,
        }
    }
}

impl SourceConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(SusdError::Config(what.to_string()));
        let finite_nonneg = |x: f64| x.is_finite() && x >= 0.0;
        if !finite_nonneg(self.coincidence_rate) || !finite_nonneg(self.accidental_rate) {
            return bad("count rates must be finite and non-negative");
        }
        if !finite_nonneg(self.integration_time) {
            return bad("integration_time must be finite and non-negative");
        }
        if !(self.detector_efficiency > 0.0 && self.detector_efficiency <= 1.0) {
            return bad("detector_efficiency must be in (0, 1]");
        }
        if self.runs == 0 {
            return bad("runs must be at least 1");
        }
        Ok(())
    }

    /// Expected detected signal events per run.
    pub fn signal_mean(&self) -> f64 {
        self.coincidence_rate * self.integration_time * self.detector_efficiency
    }

    /// Expected accidentals per detector per run.
    pub fn accidental_mean(&self) -> f64 {
        self.accidental_rate * self.integration_time / DETECTORS
    }

    pub fn expected_counts(&self, probs: &DetectorTable) -> DetectorTable {
        let (sig, acc) = (self.signal_mean(), self.accidental_mean());
        DetectorTable::from_fn(|d| sig * probs.get(d) + acc)
    }
}

/// Per-run, per-detector counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountData {
    pub runs: Vec<[[u64; 3]; 3]>,
    /// Expected accidentals per detector per run, used for background
    /// subtraction. Zero disables it.
    pub accidental_mean: f64,
}

impl CountData {
    pub fn count(&self, run: usize, d: Detector) -> u64 {
        let (i, j) = d.slot();
        self.runs[run][i][j]
    }

    pub fn run_total(&self, run: usize) -> u64 {
        self.runs[run].iter().flatten().sum()
    }
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> Result<u64> {
    if mean == 0.0 {
        return Ok(0);
    }
    let dist = Poisson::new(mean)
        .map_err(|e| SusdError::Numerical(format!("poisson mean {mean}: {e}")))?;
    Ok(dist.sample(rng) as u64)
}

fn check_table(probs: &DetectorTable) -> Result<()> {
    let total = probs.sum();
    if (total - 1.0).abs() > 1e-9 || probs.iter().any(|(_, p)| !(p >= -1e-12)) {
        return Err(SusdError::Contract(format!(
            "detector probabilities must be non-negative and sum to 1, got sum {total}"
        )));
    }
    Ok(())
}

/// Independent Poisson counts per run and detector, with mean
/// `signal_mean · P + accidental_mean`.
pub fn simulate_counts(probs: &DetectorTable, src: &SourceConfig, seed: u64) -> Result<CountData> {
    check_table(probs)?;
    src.validate()?;
    let expected = src.expected_counts(probs);
    let runs = (0..src.runs as u64)
        .into_par_iter()
        .map(|run| {
            let mut rng = substream(seed, Purpose::Counting, run);
            let mut counts = [[0u64; 3]; 3];
            for d in Detector::all() {
                let (i, j) = d.slot();
                counts[i][j] = poisson(expected.get(d).max(0.0), &mut rng)?;
            }
            Ok(counts)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CountData {
        runs,
        accidental_mean: src.accidental_mean(),
    })
}

/// Counts from the trial simulator: each run sends a Poisson number of
/// detected photons through the chain and adds Poisson accidentals to every
/// detector.
pub fn simulate_trial_counts(
    chain: &ProtocolChain,
    alice_sign: Sign,
    mapping: &MappingPolicy,
    src: &SourceConfig,
    seed: u64,
) -> Result<CountData> {
    src.validate()?;
    let runs = (0..src.runs as u64)
        .into_par_iter()
        .map(|run| {
            let mut rng = substream(seed, Purpose::Counting, run);
            let photons = poisson(src.signal_mean(), &mut rng)?;
            let mut counts = [[0u64; 3]; 3];
            for _ in 0..photons {
                let t = match mapping {
                    MappingPolicy::Fixed(m) => chain.trial_with_sign(alice_sign, m, &mut rng)?,
                    MappingPolicy::RandomPerTrial => {
                        let m = crate::protocol::randomize_port_mapping(&mut rng);
                        chain.trial_with_sign(alice_sign, &m, &mut rng)?
                    }
                };
                let (i, j) = t.detector.slot();
                counts[i][j] += 1;
            }
            for row in counts.iter_mut() {
                for c in row.iter_mut() {
                    *c += poisson(src.accidental_mean(), &mut rng)?;
                }
            }
            Ok(counts)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CountData {
        runs,
        accidental_mean: src.accidental_mean(),
    })
}

/// Mean and sample standard deviation across runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: DetectorTable,
    pub std: DetectorTable,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimates {
    /// Counts normalized by each run's total.
    pub raw: Estimate,
    /// Expected accidentals removed before normalizing. Not clamped, so
    /// empty cells may come out slightly negative. `None` when there is no
    /// background to subtract or a run has nothing left after subtraction.
    pub subtracted: Option<Estimate>,
}

fn summarize(per_run: &[DetectorTable]) -> Estimate {
    let n = per_run.len() as f64;
    let mean = DetectorTable::from_fn(|d| per_run.iter().map(|t| t.get(d)).sum::<f64>() / n);
    let std = DetectorTable::from_fn(|d| {
        let m = mean.get(d);
        let ss: f64 = per_run.iter().map(|t| (t.get(d) - m).powi(2)).sum();
        (ss / (n - 1.0)).sqrt()
    });
    Estimate { mean, std }
}

pub fn estimate_probs(c: &CountData) -> Result<Estimates> {
    if c.runs.len() < 2 {
        return Err(SusdError::InsufficientRuns(c.runs.len()));
    }
    let mut raw = Vec::with_capacity(c.runs.len());
    let mut sub = Vec::with_capacity(c.runs.len());
    let mut subtract = c.accidental_mean > 0.0;
    for run in 0..c.runs.len() {
        let total = c.run_total(run) as f64;
        if total == 0.0 {
            return Err(SusdError::EmptyRun { run });
        }
        raw.push(DetectorTable::from_fn(|d| c.count(run, d) as f64 / total));
        let remaining = total - DETECTORS * c.accidental_mean;
        if remaining <= 0.0 {
            subtract = false;
        }
        if subtract {
            sub.push(DetectorTable::from_fn(|d| {
                (c.count(run, d) as f64 - c.accidental_mean) / remaining
            }));
        }
    }
    Ok(Estimates {
        raw: summarize(&raw),
        subtracted: subtract.then(|| summarize(&sub)),
    })
}
