//! Self-check suite: oracle equivalences and structural invariants, each
//! reported with its measured deviation.

use rand::Rng;
use serde::Serialize;

use crate::error::Result;
use crate::optics::{NetworkParams, OpticalNetwork};
use crate::protocol::{analytic_detector_probs, joint_success_probability, Detector, DetectorTable, PortMapping};
use crate::qstate::{prepare_alice, prepare_phi, re, PolarizationState, Sign};
use crate::streams::{substream, Purpose};
use crate::usd::{
    bob_usd, charlie_usd, neumark_dilation, outcome_distribution, verify_completeness, KrausSet,
    NeumarkUnitary, OutcomeLabel,
};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckResult {
    fn new(name: &str, deviation: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            deviation,
            tolerance,
            passed: deviation < tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// One line per check: `PASS name deviation=… tolerance=…`.
    pub fn render(&self) -> String {
        self.checks
            .iter()
            .map(|c| {
                format!(
                    "{} {} deviation={:e} tolerance={:e}\n",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.deviation,
                    c.tolerance
                )
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationOptions {
    pub s_grid: Vec<f64>,
    /// Number of random overlaps for the optics comparison.
    pub optics_samples: usize,
    pub seed: u64,
    /// Deliberate misalignment of Bob's clockwise plate, degrees.
    pub bob_cw_error_deg: f64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            s_grid: crate::config::DEFAULT_S_GRID.to_vec(),
            optics_samples: 50,
            seed: 0,
            bob_cw_error_deg: 0.0,
        }
    }
}

fn worst(values: impl IntoIterator<Item = Result<f64>>) -> Result<f64> {
    values.into_iter().try_fold(0.0f64, |acc, v| Ok(acc.max(v?)))
}

fn cross_conclusive(m: &KrausSet, input: &PolarizationState, sign: Sign) -> f64 {
    outcome_distribution(m, input)
        .into_iter()
        .filter(|(label, _)| label.sign() == Some(sign.flip()))
        .map(|(_, p)| p)
        .sum()
}

/// Exhaustive composition of Bob's and Charlie's outcome distributions,
/// independent of the closed-form table.
pub fn brute_force_table(s: f64, alice_sign: Sign, mapping: &PortMapping) -> Result<DetectorTable> {
    let bob = bob_usd(s)?;
    let charlie = charlie_usd(s)?;
    let input = prepare_alice(s, alice_sign)?;
    let mut table = DetectorTable::zeros();
    for (b, op) in bob.elements() {
        let post = op.apply(&input);
        let pb = post.norm_sqr();
        let forwarded = match b.sign() {
            Some(sign) => prepare_phi(s, sign)?,
            None => match post.normalized() {
                Some(p) => p,
                None => continue,
            },
        };
        for (c, pc) in outcome_distribution(&charlie, &forwarded) {
            table.add(mapping.detector(*b, c), pb * pc);
        }
    }
    Ok(table)
}

fn dilation_deviation(s: f64) -> Result<(f64, f64)> {
    let r = s.sqrt();
    let q = r.sqrt();
    let mut action: f64 = 0.0;
    let mut unitarity: f64 = 0.0;
    let bob = neumark_dilation(&bob_usd(s)?)?;
    let charlie = neumark_dilation(&charlie_usd(s)?)?;
    unitarity = unitarity.max(bob.unitarity_deviation()).max(charlie.unitarity_deviation());
    for sign in Sign::BOTH {
        let conclusive = PolarizationState::diagonal(sign).scale(re((1.0 - r).sqrt()));
        let out = bob.act(&prepare_alice(s, sign)?);
        let inc = prepare_phi(s, sign)?.scale(re(-sign.factor() * q));
        action = action
            .max((NeumarkUnitary::branch_state(&out, 0) - conclusive).norm())
            .max((NeumarkUnitary::branch_state(&out, 1) - inc).norm());
        let out = charlie.act(&prepare_phi(s, sign)?);
        let inc = PolarizationState::horizontal().scale(re(-sign.factor() * q));
        action = action
            .max((NeumarkUnitary::branch_state(&out, 0) - conclusive).norm())
            .max((NeumarkUnitary::branch_state(&out, 1) - inc).norm());
    }
    Ok((action, unitarity))
}

fn optics_deviation(s: f64, params: &NetworkParams) -> Result<(f64, f64)> {
    let mapping = PortMapping::canonical();
    let net = OpticalNetwork::compile(s, params, &mapping)?;
    let mut blocks: f64 = 0.0;
    for bob in OutcomeLabel::ALL {
        for charlie in OutcomeLabel::ALL {
            let k = crate::optics::kraus_path_operator(s, bob, charlie)?;
            blocks = blocks.max(net.path_block(bob, charlie).phase_aligned_distance(&k));
        }
    }
    Ok((blocks, net.transfer().isometry_deviation()))
}

pub fn run_validation(opts: &ValidationOptions) -> Result<ValidationReport> {
    let grid: Vec<f64> = opts
        .s_grid
        .iter()
        .map(|&s| crate::error::check_overlap(s))
        .collect::<Result<_>>()?;
    let mapping = PortMapping::canonical();
    let mut checks = Vec::new();

    checks.push(CheckResult::new(
        "completeness",
        worst(grid.iter().flat_map(|&s| {
            [bob_usd(s).map(|m| verify_completeness(&m)), charlie_usd(s).map(|m| verify_completeness(&m))]
        }))?,
        1e-12,
    ));

    checks.push(CheckResult::new(
        "unambiguity",
        worst(grid.iter().flat_map(|&s| {
            Sign::BOTH.map(move |sign| -> Result<f64> {
                let bob = bob_usd(s)?;
                let charlie = charlie_usd(s)?;
                Ok(cross_conclusive(&bob, &prepare_alice(s, sign)?, sign)
                    .max(cross_conclusive(&charlie, &prepare_phi(s, sign)?, sign)))
            })
        }))?,
        1e-24,
    ));

    let charlie_fail = worst(grid.iter().flat_map(|&s| {
        Sign::BOTH.map(move |sign| -> Result<f64> {
            let c = charlie_usd(s)?;
            let phi = prepare_phi(s, sign)?;
            let fail: f64 = outcome_distribution(&c, &phi)
                .into_iter()
                .filter(|(l, _)| !l.is_conclusive())
                .map(|(_, p)| p)
                .sum();
            Ok((fail - s.sqrt()).abs())
        })
    }))?;
    checks.push(CheckResult::new("charlie_optimality", charlie_fail, 1e-12));

    let post_states = worst(grid.iter().filter(|&&s| s > 0.0).map(|&s| -> Result<f64> {
        let c = charlie_usd(s)?;
        let inc = c.get(OutcomeLabel::Inconclusive).expect("inconclusive element");
        let plus = inc.apply(&prepare_phi(s, Sign::Plus)?).normalized();
        let minus = inc.apply(&prepare_phi(s, Sign::Minus)?).normalized();
        Ok(match (plus, minus) {
            (Some(p), Some(m)) => 1.0 - p.fidelity(&m),
            _ => f64::INFINITY,
        })
    }))?;
    checks.push(CheckResult::new("charlie_inconclusive_state", post_states, 1e-12));

    let mut action: f64 = 0.0;
    let mut unitarity: f64 = 0.0;
    for &s in &grid {
        let (a, u) = dilation_deviation(s)?;
        action = action.max(a);
        unitarity = unitarity.max(u);
    }
    checks.push(CheckResult::new("dilation_action", action, 1e-10));
    checks.push(CheckResult::new("dilation_unitarity", unitarity, 1e-10));

    let mut params = NetworkParams::ideal();
    params.hwp.bob_cw = opts.bob_cw_error_deg.to_radians();
    let mut rng = substream(opts.seed, Purpose::Validation, 0);
    let mut blocks: f64 = 0.0;
    let mut isometry: f64 = 0.0;
    for _ in 0..opts.optics_samples {
        let s = rng.gen_range(0.01..0.99);
        let (b, i) = optics_deviation(s, &params)?;
        blocks = blocks.max(b);
        isometry = isometry.max(i);
    }
    checks.push(CheckResult::new("optics_kraus", blocks, 1e-10));
    checks.push(CheckResult::new("transfer_isometry", isometry, 1e-12));

    let mut table: f64 = 0.0;
    let mut success: f64 = 0.0;
    for &s in &grid {
        for sign in Sign::BOTH {
            let brute = brute_force_table(s, sign, &mapping)?;
            table = table.max(brute.max_abs_diff(&analytic_detector_probs(s, sign, &mapping)?));
            let o = OutcomeLabel::conclusive(sign);
            let cell = brute.get(mapping.detector(o, o));
            success = success.max((cell - joint_success_probability(s)?).abs());
        }
    }
    checks.push(CheckResult::new("detector_table", table, 1e-12));
    checks.push(CheckResult::new("joint_success", success, 1e-12));

    Ok(ValidationReport { checks })
}

/// The four nonzero cells of the table for `|ψ−>`, in closed form.
pub fn closed_form_minus_cells(s: f64) -> [(Detector, f64); 4] {
    let r = s.sqrt();
    let m = PortMapping::canonical();
    let (minus, inc) = (OutcomeLabel::ConclusiveMinus, OutcomeLabel::Inconclusive);
    [
        (m.detector(minus, minus), (1.0 - r).powi(2)),
        (m.detector(minus, inc), (1.0 - r) * r),
        (m.detector(inc, minus), r * (1.0 - r)),
        (m.detector(inc, inc), s),
    ]
}
