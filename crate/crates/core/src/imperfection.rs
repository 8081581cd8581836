//! Monte Carlo error model for the optical setup: plate-angle jitter,
//! beam-splitter loss and interferometer output-mode mismatch.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_overlap, Result, SusdError};
use crate::optics::{
    HwpOffsets, InterferometerOffsets, ModeMismatch, NetworkParams, OpticalNetwork, PBSParams,
    PbsSet,
};
use crate::protocol::{analytic_detector_probs, joint_success_probability, Detector, DetectorTable, PortMapping};
use crate::qstate::Sign;
use crate::streams::{substream, Purpose};
use crate::usd::OutcomeLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Every parameter uniform over its range.
    #[default]
    Uniform,
    /// Every parameter at one end of its range (worst-case corners).
    Extremal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum EnvelopeStatistic {
    /// Pointwise min/max; the unperturbed setup is always part of the set.
    #[default]
    MinMax,
    /// Pointwise percentiles of the random samples, in percent.
    Percentile { lower: f64, upper: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImperfectionConfig {
    /// Maximum plate misalignment, degrees.
    pub hwp_jitter_max_deg: f64,
    /// Maximum fractional PBS loss, per polarization.
    pub pbs_loss_max: f64,
    /// Maximum fractional port leakage per interferometer.
    pub mode_mismatch_max: f64,
    pub samples: usize,
    pub sampling: SamplingMode,
    pub statistic: EnvelopeStatistic,
}

impl Default for ImperfectionConfig {
    fn default() -> Self {
        Self {
            hwp_jitter_max_deg: 1.0,
            pbs_loss_max: 0.03,
            mode_mismatch_max: 0.03,
            samples: 10_000,
            sampling: SamplingMode::Uniform,
            statistic: EnvelopeStatistic::MinMax,
        }
    }
}

impl ImperfectionConfig {
    /// All maxima zero.
    pub fn ideal(samples: usize) -> Self {
        Self {
            hwp_jitter_max_deg: 0.0,
            pbs_loss_max: 0.0,
            mode_mismatch_max: 0.0,
            samples,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(SusdError::Config(what.to_string()));
        if !(0.0..=45.0).contains(&self.hwp_jitter_max_deg) {
            return bad("hwp_jitter_max_deg must be in [0, 45]");
        }
        if !(0.0..1.0).contains(&self.pbs_loss_max) {
            return bad("pbs_loss_max must be in [0, 1)");
        }
        if !(0.0..=0.5).contains(&self.mode_mismatch_max) {
            return bad("mode_mismatch_max must be in [0, 0.5]");
        }
        if self.samples == 0 {
            return bad("samples must be at least 1");
        }
        if let EnvelopeStatistic::Percentile { lower, upper } = self.statistic {
            if !(0.0 <= lower && lower <= upper && upper <= 100.0) {
                return bad("percentiles must satisfy 0 <= lower <= upper <= 100");
            }
        }
        Ok(())
    }
}

/// One draw of the imperfect setup.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PerturbedSetup {
    pub params: NetworkParams,
}

impl PerturbedSetup {
    pub fn ideal() -> Self {
        Self::default()
    }
}

/// Draws one perturbed setup. Parameters are drawn in a fixed order from
/// unit variates scaled by the configured maxima, so two configs that differ
/// only in their maxima see the same underlying draws.
pub fn sample_imperfection<R: Rng + ?Sized>(cfg: &ImperfectionConfig, rng: &mut R) -> PerturbedSetup {
    let jitter = cfg.hwp_jitter_max_deg.to_radians();
    let angle = |rng: &mut R| match cfg.sampling {
        SamplingMode::Uniform => (2.0 * rng.gen::<f64>() - 1.0) * jitter,
        SamplingMode::Extremal => {
            if rng.gen_bool(0.5) {
                jitter
            } else {
                -jitter
            }
        }
    };
    let hwp = HwpOffsets {
        alice: angle(rng),
        bob_cw: angle(rng),
        bob_ccw: angle(rng),
        bob_split: angle(rng),
        reprep_plus: angle(rng),
        reprep_minus: angle(rng),
        charlie: [(); 3].map(|_| InterferometerOffsets {
            cw: angle(rng),
            ccw: angle(rng),
            split: angle(rng),
        }),
    };
    let fraction = |rng: &mut R, max: f64| match cfg.sampling {
        SamplingMode::Uniform => rng.gen::<f64>() * max,
        SamplingMode::Extremal => {
            if rng.gen_bool(0.5) {
                max
            } else {
                0.0
            }
        }
    };
    let pbs_draw = |rng: &mut R| PBSParams {
        loss_h: fraction(rng, cfg.pbs_loss_max),
        loss_v: fraction(rng, cfg.pbs_loss_max),
    };
    let pbs = PbsSet {
        bob_sagnac: pbs_draw(rng),
        bob_split: pbs_draw(rng),
        charlie_sagnac: [(); 3].map(|_| pbs_draw(rng)),
        charlie_split: [(); 3].map(|_| pbs_draw(rng)),
    };
    let mismatch = ModeMismatch {
        bob: fraction(rng, cfg.mode_mismatch_max),
        charlie: [(); 3].map(|_| fraction(rng, cfg.mode_mismatch_max)),
    };
    PerturbedSetup {
        params: NetworkParams { hwp, pbs, mismatch },
    }
}

/// Post-selected detector table of a perturbed setup and the raw detected
/// fraction (throughput) before renormalization.
pub fn perturbed_detector_probs(
    s: f64,
    alice_sign: Sign,
    p: &PerturbedSetup,
    mapping: &PortMapping,
) -> Result<(DetectorTable, f64)> {
    let net = OpticalNetwork::compile(s, &p.params, mapping)?;
    let raw = net.detector_intensities(&net.alice_state(alice_sign));
    let throughput = raw.sum();
    if !(throughput >= 1e-9) {
        return Err(SusdError::DegenerateSetup { throughput });
    }
    Ok((raw.scaled(1.0 / throughput), throughput))
}

fn success_cell(mapping: &PortMapping, sign: Sign) -> Detector {
    let o = OutcomeLabel::conclusive(sign);
    mapping.detector(o, o)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Band {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

impl Band {
    pub fn width(&self) -> f64 {
        self.max - self.min
    }

    pub fn contains(&self, x: f64) -> bool {
        self.min <= x && x <= self.max
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopePoint {
    pub s: f64,
    pub ideal: DetectorTable,
    pub cells: Vec<(Detector, Band)>,
    pub p_succ_ideal: f64,
    pub p_succ: Band,
    pub throughput: Band,
}

impl EnvelopePoint {
    pub fn band(&self, d: Detector) -> Band {
        self.cells
            .iter()
            .find(|(c, _)| *c == d)
            .map(|(_, b)| *b)
            .expect("every detector has a band")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeResult {
    /// `None` when the success band is averaged over both signs.
    pub alice_sign: Option<Sign>,
    pub points: Vec<EnvelopePoint>,
}

struct SampleOutcome {
    table: DetectorTable,
    p_succ: f64,
    throughput: f64,
}

fn band_of(values: &[f64], nominal: f64, statistic: EnvelopeStatistic) -> Band {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    match statistic {
        EnvelopeStatistic::MinMax => {
            let (min, max) = values
                .iter()
                .fold((nominal, nominal), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            Band {
                min,
                mean: mean.clamp(min, max),
                max,
            }
        }
        EnvelopeStatistic::Percentile { lower, upper } => {
            let mut sorted = values.to_vec();
            sorted.sort_by(f64::total_cmp);
            let min = percentile(&sorted, lower);
            let max = percentile(&sorted, upper);
            Band { min, mean, max }
        }
    }
}

/// Linear interpolation between closest ranks.
fn percentile(sorted: &[f64], pct: f64) -> f64 {
    let pos = pct / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn evaluate_samples(
    s: f64,
    signs: &[Sign],
    cfg: &ImperfectionConfig,
    mapping: &PortMapping,
    seed: u64,
) -> Result<Vec<SampleOutcome>> {
    (0..cfg.samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, Purpose::Imperfections, i);
            let setup = sample_imperfection(cfg, &mut rng);
            evaluate(s, signs, &setup, mapping)
        })
        .collect()
}

/// Table of the first sign; success and throughput averaged over `signs`.
fn evaluate(s: f64, signs: &[Sign], setup: &PerturbedSetup, mapping: &PortMapping) -> Result<SampleOutcome> {
    let mut table = DetectorTable::zeros();
    let mut p_succ = 0.0;
    let mut throughput = 0.0;
    for (i, sign) in signs.iter().enumerate() {
        let (t, thr) = perturbed_detector_probs(s, *sign, setup, mapping)?;
        if i == 0 {
            table = t;
        }
        p_succ += t.get(success_cell(mapping, *sign));
        throughput += thr;
    }
    let n = signs.len() as f64;
    Ok(SampleOutcome {
        table,
        p_succ: p_succ / n,
        throughput: throughput / n,
    })
}

fn envelope(
    s_grid: &[f64],
    signs: &[Sign],
    cfg: &ImperfectionConfig,
    mapping: &PortMapping,
    seed: u64,
) -> Result<Vec<EnvelopePoint>> {
    cfg.validate()?;
    s_grid
        .iter()
        .map(|&s| {
            let s = check_overlap(s)?;
            let nominal = evaluate(s, signs, &PerturbedSetup::ideal(), mapping)?;
            let samples = evaluate_samples(s, signs, cfg, mapping, seed)?;
            let ideal = analytic_detector_probs(s, signs[0], mapping)?;
            let cells = Detector::all()
                .map(|d| {
                    let values: Vec<f64> = samples.iter().map(|o| o.table.get(d)).collect();
                    (d, band_of(&values, nominal.table.get(d), cfg.statistic))
                })
                .collect();
            let succ: Vec<f64> = samples.iter().map(|o| o.p_succ).collect();
            let thr: Vec<f64> = samples.iter().map(|o| o.throughput).collect();
            Ok(EnvelopePoint {
                s,
                ideal,
                cells,
                p_succ_ideal: joint_success_probability(s)?,
                p_succ: band_of(&succ, nominal.p_succ, cfg.statistic),
                throughput: band_of(&thr, nominal.throughput, cfg.statistic),
            })
        })
        .collect()
}

/// Per-detector and joint-success envelopes for one of Alice's states.
/// Sample `i` uses stream `i` at every grid point, independent of thread
/// count.
pub fn mc_envelope(
    s_grid: &[f64],
    alice_sign: Sign,
    cfg: &ImperfectionConfig,
    mapping: &PortMapping,
    seed: u64,
) -> Result<EnvelopeResult> {
    Ok(EnvelopeResult {
        alice_sign: Some(alice_sign),
        points: envelope(s_grid, &[alice_sign], cfg, mapping, seed)?,
    })
}

/// Joint-success envelope averaged over both states, each perturbed setup
/// evaluated for `|ψ+>` and `|ψ−>`. Detector bands refer to `|ψ+>`.
pub fn mc_success_envelope(
    s_grid: &[f64],
    cfg: &ImperfectionConfig,
    mapping: &PortMapping,
    seed: u64,
) -> Result<EnvelopeResult> {
    Ok(EnvelopeResult {
        alice_sign: None,
        points: envelope(s_grid, &Sign::BOTH, cfg, mapping, seed)?,
    })
}
