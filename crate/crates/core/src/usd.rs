//! Unambiguous discrimination measurements as Kraus sets.
//!
//! Both parties use a three-outcome measurement `{A₊, A₋, A_i}`. The two
//! conclusive elements share one ancilla branch (`b0`) and are told apart by
//! a projective readout in the diagonal basis, so `A₊ + A₋` is the branch
//! operator that appears in the two-branch Neumark dilation.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_overlap, Result, SusdError};
use crate::qstate::{overlap, re, Amplitude, Operator2, PolarizationState, Sign, ONE, ZERO};

/// Tolerance used when checking structural preconditions of Kraus sets.
const STRUCTURE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeLabel {
    ConclusivePlus,
    ConclusiveMinus,
    Inconclusive,
}

impl OutcomeLabel {
    /// Sampling order `(+, −, i)`.
    pub const ALL: [OutcomeLabel; 3] = [
        OutcomeLabel::ConclusivePlus,
        OutcomeLabel::ConclusiveMinus,
        OutcomeLabel::Inconclusive,
    ];

    pub fn index(self) -> usize {
        match self {
            OutcomeLabel::ConclusivePlus => 0,
            OutcomeLabel::ConclusiveMinus => 1,
            OutcomeLabel::Inconclusive => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn conclusive(sign: Sign) -> Self {
        match sign {
            Sign::Plus => OutcomeLabel::ConclusivePlus,
            Sign::Minus => OutcomeLabel::ConclusiveMinus,
        }
    }

    /// The sign a conclusive outcome points to.
    pub fn sign(self) -> Option<Sign> {
        match self {
            OutcomeLabel::ConclusivePlus => Some(Sign::Plus),
            OutcomeLabel::ConclusiveMinus => Some(Sign::Minus),
            OutcomeLabel::Inconclusive => None,
        }
    }

    pub fn is_conclusive(self) -> bool {
        self != OutcomeLabel::Inconclusive
    }

    pub fn symbol(self) -> &'static str {
        match self {
            OutcomeLabel::ConclusivePlus => "+",
            OutcomeLabel::ConclusiveMinus => "-",
            OutcomeLabel::Inconclusive => "i",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.symbol() == s)
    }
}

impl fmt::Display for OutcomeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// Labeled Kraus operators, kept in sampling order.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausSet {
    elements: Vec<(OutcomeLabel, Operator2)>,
}

impl KrausSet {
    /// Builds a set from labeled operators. Labels must be unique; completeness
    /// is not enforced here (see [`verify_completeness`]).
    pub fn new(elements: impl IntoIterator<Item = (OutcomeLabel, Operator2)>) -> Result<Self> {
        let mut elements: Vec<_> = elements.into_iter().collect();
        elements.sort_by_key(|(label, _)| *label);
        if elements.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(SusdError::Contract("duplicate outcome label in Kraus set".into()));
        }
        Ok(Self { elements })
    }

    pub fn elements(&self) -> &[(OutcomeLabel, Operator2)] {
        &self.elements
    }

    pub fn get(&self, label: OutcomeLabel) -> Option<&Operator2> {
        self.elements.iter().find(|(l, _)| *l == label).map(|(_, op)| op)
    }

    /// `Σ A†A`.
    pub fn effect_sum(&self) -> Operator2 {
        self.elements
            .iter()
            .fold(Operator2::zero(), |acc, (_, op)| acc + op.gram())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementResult {
    pub label: OutcomeLabel,
    pub post_state: PolarizationState,
    pub probability: f64,
}

/// Bob's non-optimal measurement. It maps `|ψ±>` to `√(1−√s)|±>` on the
/// conclusive branch and to `∓ s^{1/4}|φ±>` on the inconclusive branch.
pub fn bob_usd(s: f64) -> Result<KrausSet> {
    let s = check_overlap(s)?;
    let r = s.sqrt();
    let q = r.sqrt();
    // Closed forms stay finite at both endpoints; solving the linear system
    // directly would divide by b = 0 at s = 1.
    let conclusive = Operator2::real([
        [((1.0 - r) / (1.0 + s)).sqrt(), 0.0],
        [0.0, 1.0 / (1.0 + r).sqrt()],
    ]);
    let inconclusive = Operator2::real([
        [0.0, -q / (1.0 + r).sqrt()],
        [q * ((1.0 + r) / (1.0 + s)).sqrt(), 0.0],
    ]);
    Ok(split_conclusive(conclusive, inconclusive))
}

/// Charlie's optimal measurement on `|φ±>`: conclusive with probability
/// `1−√s`, otherwise the system is left in `|h>` whichever state arrived.
pub fn charlie_usd(s: f64) -> Result<KrausSet> {
    let s = check_overlap(s)?;
    let r = s.sqrt();
    let q = r.sqrt();
    let conclusive = Operator2::real([[1.0, 0.0], [0.0, -((1.0 - r) / (1.0 + r)).sqrt()]]);
    let inconclusive = Operator2::real([[0.0, q * (2.0 / (1.0 + r)).sqrt()], [0.0, 0.0]]);
    Ok(split_conclusive(conclusive, inconclusive))
}

fn split_conclusive(conclusive: Operator2, inconclusive: Operator2) -> KrausSet {
    let plus = Operator2::projector(&PolarizationState::diagonal(Sign::Plus));
    let minus = Operator2::projector(&PolarizationState::diagonal(Sign::Minus));
    KrausSet {
        elements: vec![
            (OutcomeLabel::ConclusivePlus, plus * conclusive),
            (OutcomeLabel::ConclusiveMinus, minus * conclusive),
            (OutcomeLabel::Inconclusive, inconclusive),
        ],
    }
}

fn orthogonal_complement(u: &PolarizationState) -> PolarizationState {
    PolarizationState::new(-u.v.conj(), u.h.conj())
}

/// Optimal (equal-prior) unambiguous discrimination of `pair.0` versus
/// `pair.1`. `pair.0` maps to the `+` outcome.
pub fn optimal_usd(
    pair_overlap: f64,
    pair: (PolarizationState, PolarizationState),
) -> Result<KrausSet> {
    if !(0.0..=1.0).contains(&pair_overlap) {
        return Err(SusdError::Domain {
            name: "pair_overlap",
            value: pair_overlap,
            range: "[0, 1]",
        });
    }
    let (u1, u2) = pair;
    for u in [&u1, &u2] {
        if (u.norm_sqr() - 1.0).abs() > STRUCTURE_TOLERANCE {
            return Err(SusdError::Contract("optimal_usd requires normalized states".into()));
        }
    }
    let actual = overlap(&u1, &u2).norm();
    if (actual - pair_overlap).abs() > STRUCTURE_TOLERANCE {
        return Err(SusdError::Contract(format!(
            "pair_overlap {pair_overlap} does not match |<u1|u2>| = {actual}"
        )));
    }
    let weight = re((1.0 / (1.0 + pair_overlap)).sqrt());
    let plus = Operator2::outer(
        &PolarizationState::diagonal(Sign::Plus),
        &orthogonal_complement(&u2),
    )
    .scale(weight);
    let minus = Operator2::outer(
        &PolarizationState::diagonal(Sign::Minus),
        &orthogonal_complement(&u1),
    )
    .scale(weight);
    let remainder = Operator2::identity() - plus.gram() - minus.gram();
    Ok(KrausSet {
        elements: vec![
            (OutcomeLabel::ConclusivePlus, plus),
            (OutcomeLabel::ConclusiveMinus, minus),
            (OutcomeLabel::Inconclusive, remainder.psd_sqrt()),
        ],
    })
}

/// Exact outcome probabilities `‖A_m|in>‖²` in set order.
pub fn outcome_distribution(m: &KrausSet, input: &PolarizationState) -> Vec<(OutcomeLabel, f64)> {
    m.elements
        .iter()
        .map(|(label, op)| (*label, op.apply(input).norm_sqr()))
        .collect()
}

/// Samples one outcome by inverse CDF over the set order and returns the
/// normalized post-measurement state.
pub fn apply<R: Rng + ?Sized>(
    m: &KrausSet,
    input: &PolarizationState,
    rng: &mut R,
) -> Result<MeasurementResult> {
    let mut images = [(OutcomeLabel::Inconclusive, PolarizationState::horizontal(), 0.0); 3];
    let n = m.elements.len().min(3);
    let mut total = 0.0;
    for (slot, (label, op)) in images.iter_mut().zip(&m.elements) {
        let image = op.apply(input);
        let p = image.norm_sqr();
        total += p;
        *slot = (*label, image, p);
    }
    let images = &images[..n];
    if images.iter().all(|(_, _, p)| *p < 1e-15) {
        return Err(SusdError::Numerical(
            "every outcome probability is below 1e-15".into(),
        ));
    }
    let u: f64 = rng.gen::<f64>() * total;
    let mut cumulative = 0.0;
    let mut chosen = None;
    for (i, (_, _, p)) in images.iter().enumerate() {
        cumulative += p;
        if u < cumulative {
            chosen = Some(i);
            break;
        }
    }
    // Rounding can leave u just above the last partial sum.
    let i = chosen.unwrap_or_else(|| images.iter().rposition(|(_, _, p)| *p > 0.0).unwrap());
    let (label, image, probability) = images[i];
    let post_state = image
        .normalized()
        .ok_or_else(|| SusdError::Numerical("sampled a zero-norm branch".into()))?;
    Ok(MeasurementResult {
        label,
        post_state,
        probability,
    })
}

/// Max-norm deviation of `Σ A†A` from the identity.
pub fn verify_completeness(m: &KrausSet) -> f64 {
    m.effect_sum().max_abs_diff(&Operator2::identity())
}

/// Four-dimensional unitary on system ⊗ path ancilla, basis order
/// `(h⊗b0, v⊗b0, h⊗b1, v⊗b1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeumarkUnitary {
    pub matrix: [[Amplitude; 4]; 4],
    /// Ancilla branch that plays the initial state `|B>`.
    pub initial_ancilla: usize,
}

impl NeumarkUnitary {
    /// `U (|in> ⊗ |B>)` as four amplitudes.
    pub fn act(&self, input: &PolarizationState) -> [Amplitude; 4] {
        let col = 2 * self.initial_ancilla;
        let mut out = [ZERO; 4];
        for (row, o) in out.iter_mut().enumerate() {
            *o = self.matrix[row][col] * input.h + self.matrix[row][col + 1] * input.v;
        }
        out
    }

    /// Unnormalized system state on ancilla branch `branch` of a joint vector.
    pub fn branch_state(joint: &[Amplitude; 4], branch: usize) -> PolarizationState {
        PolarizationState::new(joint[2 * branch], joint[2 * branch + 1])
    }

    /// `<k|A_m|j> = <k|<b_m| U |j>|B>`.
    pub fn branch_kraus(&self, branch: usize) -> Operator2 {
        let col = 2 * self.initial_ancilla;
        let row = 2 * branch;
        let m = &self.matrix;
        Operator2::new([
            [m[row][col], m[row][col + 1]],
            [m[row + 1][col], m[row + 1][col + 1]],
        ])
    }

    /// Max-norm deviation of `U†U` from the identity.
    pub fn unitarity_deviation(&self) -> f64 {
        let m = &self.matrix;
        let mut worst: f64 = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                let dot: Amplitude = (0..4).map(|k| m[k][i].conj() * m[k][j]).sum();
                let target = if i == j { ONE } else { ZERO };
                worst = worst.max((dot - target).norm());
            }
        }
        worst
    }
}

/// Two-branch Neumark dilation: conclusive elements are summed into branch
/// `b0`, the inconclusive element becomes branch `b1`, and the remaining two
/// columns are filled by Gram–Schmidt over the canonical basis in index order.
pub fn neumark_dilation(m: &KrausSet) -> Result<NeumarkUnitary> {
    let completeness = verify_completeness(m);
    if completeness > STRUCTURE_TOLERANCE {
        return Err(SusdError::Contract(format!(
            "Kraus set is not complete (deviation {completeness:e})"
        )));
    }
    let mut conclusive = Operator2::zero();
    let mut conclusive_effects = Operator2::zero();
    let mut inconclusive = Operator2::zero();
    for (label, op) in &m.elements {
        if label.is_conclusive() {
            conclusive = conclusive + *op;
            conclusive_effects = conclusive_effects + op.gram();
        } else {
            inconclusive = *op;
        }
    }
    // Summing conclusive elements into one branch is only faithful when their
    // ranges are orthogonal, i.e. the cross terms of (ΣA)†(ΣA) vanish.
    let cross = conclusive.gram().max_abs_diff(&conclusive_effects);
    if cross > STRUCTURE_TOLERANCE {
        return Err(SusdError::Dimension(format!(
            "conclusive elements have overlapping ranges (cross term {cross:e}); \
             the set does not embed in a two-branch dilation"
        )));
    }

    let mut columns: Vec<[Amplitude; 4]> = (0..2)
        .map(|j| {
            [
                conclusive.entry(0, j),
                conclusive.entry(1, j),
                inconclusive.entry(0, j),
                inconclusive.entry(1, j),
            ]
        })
        .collect();
    for k in 0..4 {
        if columns.len() == 4 {
            break;
        }
        let mut w = [ZERO; 4];
        w[k] = ONE;
        for _ in 0..2 {
            for c in &columns {
                let proj: Amplitude = c.iter().zip(&w).map(|(ci, wi)| ci.conj() * wi).sum();
                for (wi, ci) in w.iter_mut().zip(c) {
                    *wi -= proj * ci;
                }
            }
        }
        let norm = w.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-6 {
            columns.push(w.map(|x| x / norm));
        }
    }
    if columns.len() != 4 {
        return Err(SusdError::Numerical("unitary completion failed".into()));
    }
    let mut matrix = [[ZERO; 4]; 4];
    for (j, col) in columns.iter().enumerate() {
        for (i, x) in col.iter().enumerate() {
            matrix[i][j] = *x;
        }
    }
    Ok(NeumarkUnitary {
        matrix,
        initial_ancilla: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::{prepare_alice, prepare_phi};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn prob(dist: &[(OutcomeLabel, f64)], label: OutcomeLabel) -> f64 {
        dist.iter().find(|(l, _)| *l == label).unwrap().1
    }

    #[test]
    fn bob_quarter_on_psi_minus() {
        let m = bob_usd(0.25).unwrap();
        let psi = prepare_alice(0.25, Sign::Minus).unwrap();
        let d = outcome_distribution(&m, &psi);
        assert!((prob(&d, OutcomeLabel::ConclusiveMinus) - 0.5).abs() < 1e-12);
        assert!(prob(&d, OutcomeLabel::ConclusivePlus).abs() < 1e-24);
        assert!((prob(&d, OutcomeLabel::Inconclusive) - 0.5).abs() < 1e-12);
        let post = m.get(OutcomeLabel::Inconclusive).unwrap().apply(&psi);
        let phi = prepare_phi(0.25, Sign::Minus).unwrap();
        assert!(post.normalized().unwrap().same_ray(&phi, 1e-12));
    }

    #[test]
    fn bob_at_zero_is_projective() {
        let m = bob_usd(0.0).unwrap();
        assert_eq!(*m.get(OutcomeLabel::Inconclusive).unwrap(), Operator2::zero());
        for sign in Sign::BOTH {
            let psi = prepare_alice(0.0, sign).unwrap();
            let d = outcome_distribution(&m, &psi);
            assert!((prob(&d, OutcomeLabel::conclusive(sign)) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn bob_at_one_always_fails() {
        let m = bob_usd(1.0).unwrap();
        assert!(verify_completeness(&m) < 1e-12);
        let psi = prepare_alice(1.0, Sign::Plus).unwrap();
        let d = outcome_distribution(&m, &psi);
        assert!((prob(&d, OutcomeLabel::Inconclusive) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn charlie_quarter_on_phi_plus() {
        let m = charlie_usd(0.25).unwrap();
        let phi = prepare_phi(0.25, Sign::Plus).unwrap();
        let d = outcome_distribution(&m, &phi);
        assert!((prob(&d, OutcomeLabel::ConclusivePlus) - 0.5).abs() < 1e-12);
        assert!((prob(&d, OutcomeLabel::Inconclusive) - 0.5).abs() < 1e-12);
        let post = m.get(OutcomeLabel::Inconclusive).unwrap().apply(&phi);
        assert!(post
            .normalized()
            .unwrap()
            .same_ray(&PolarizationState::horizontal(), 1e-12));
    }

    #[test]
    fn charlie_on_phi_minus_distribution() {
        let s: f64 = 0.36;
        let m = charlie_usd(s).unwrap();
        let d = outcome_distribution(&m, &prepare_phi(s, Sign::Minus).unwrap());
        assert!(prob(&d, OutcomeLabel::ConclusivePlus).abs() < 1e-24);
        assert!((prob(&d, OutcomeLabel::ConclusiveMinus) - 0.4).abs() < 1e-12);
        assert!((prob(&d, OutcomeLabel::Inconclusive) - 0.6).abs() < 1e-12);
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(bob_usd(1.01), Err(SusdError::Domain { .. })));
        assert!(matches!(charlie_usd(-0.5), Err(SusdError::Domain { .. })));
    }

    #[test]
    fn optimal_usd_edge_cases() {
        let h = PolarizationState::horizontal();
        let v = PolarizationState::vertical();
        let m = optimal_usd(0.0, (h, v)).unwrap();
        let d = outcome_distribution(&m, &h);
        assert!((prob(&d, OutcomeLabel::ConclusivePlus) - 1.0).abs() < 1e-12);
        assert!(verify_completeness(&m) < 1e-12);

        let m = optimal_usd(1.0, (h, h)).unwrap();
        let d = outcome_distribution(&m, &h);
        assert!((prob(&d, OutcomeLabel::Inconclusive) - 1.0).abs() < 1e-12);

        assert!(matches!(
            optimal_usd(0.3, (h, v)),
            Err(SusdError::Contract(_))
        ));
        assert!(optimal_usd(0.0, (h.scale(re(2.0)), v)).is_err());
    }

    #[test]
    fn optimal_usd_reproduces_charlie_distribution() {
        for s in [0.05, 0.25, 0.5, 0.81] {
            let pair = (
                prepare_phi(s, Sign::Plus).unwrap(),
                prepare_phi(s, Sign::Minus).unwrap(),
            );
            let generic = optimal_usd(s.sqrt(), pair).unwrap();
            let charlie = charlie_usd(s).unwrap();
            for input in [pair.0, pair.1] {
                let a = outcome_distribution(&generic, &input);
                let b = outcome_distribution(&charlie, &input);
                for ((la, pa), (lb, pb)) in a.iter().zip(&b) {
                    assert_eq!(la, lb);
                    assert!((pa - pb).abs() < 1e-12, "s={s} {la}: {pa} vs {pb}");
                }
            }
        }
    }

    #[test]
    fn projective_apply_is_deterministic() {
        let m = KrausSet::new([
            (
                OutcomeLabel::ConclusivePlus,
                Operator2::projector(&PolarizationState::horizontal()),
            ),
            (
                OutcomeLabel::ConclusiveMinus,
                Operator2::projector(&PolarizationState::vertical()),
            ),
        ])
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let r = apply(&m, &PolarizationState::horizontal(), &mut rng).unwrap();
            assert_eq!(r.label, OutcomeLabel::ConclusivePlus);
            assert_eq!(r.post_state, PolarizationState::horizontal());
            assert_eq!(r.probability, 1.0);
        }
    }

    #[test]
    fn apply_rejects_annihilated_input() {
        let m = KrausSet::new([(OutcomeLabel::Inconclusive, Operator2::zero())]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            apply(&m, &PolarizationState::horizontal(), &mut rng),
            Err(SusdError::Numerical(_))
        ));
    }

    #[test]
    fn apply_matches_binomial_at_scale() {
        let m = bob_usd(0.25).unwrap();
        let psi = prepare_alice(0.25, Sign::Plus).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 1_000_000;
        let mut fails = 0u64;
        for _ in 0..n {
            let r = apply(&m, &psi, &mut rng).unwrap();
            assert_ne!(r.label, OutcomeLabel::ConclusiveMinus);
            if r.label == OutcomeLabel::Inconclusive {
                fails += 1;
            }
        }
        let p = fails as f64 / n as f64;
        let sigma = (0.25 / n as f64).sqrt();
        assert!((p - 0.5).abs() < 3.0 * sigma, "p = {p}");
    }

    #[test]
    fn apply_chi_square_against_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 200_000;
        let cases = [
            (bob_usd(0.4).unwrap(), prepare_alice(0.4, Sign::Minus).unwrap()),
            (charlie_usd(0.1).unwrap(), PolarizationState::diagonal(Sign::Plus)),
            (
                optimal_usd(0.0, (PolarizationState::horizontal(), PolarizationState::vertical()))
                    .unwrap(),
                PolarizationState::real(0.6, 0.8),
            ),
        ];
        for (m, input) in cases {
            let dist = outcome_distribution(&m, &input);
            let mut counts = [0u64; 3];
            for _ in 0..n {
                counts[apply(&m, &input, &mut rng).unwrap().label.index()] += 1;
            }
            let mut chi2 = 0.0;
            let mut dof = 0;
            for (label, p) in &dist {
                let expected = p * n as f64;
                if expected > 0.0 {
                    chi2 += (counts[label.index()] as f64 - expected).powi(2) / expected;
                    dof += 1;
                } else {
                    assert_eq!(counts[label.index()], 0);
                }
            }
            // 0.1% critical value for up to 2 degrees of freedom.
            assert!(chi2 < 13.82, "chi2 = {chi2} with {dof} cells");
        }
    }

    #[test]
    fn apply_is_reproducible() {
        let m = bob_usd(0.3).unwrap();
        let psi = prepare_alice(0.3, Sign::Plus).unwrap();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..100)
                .map(|_| apply(&m, &psi, &mut rng).unwrap().label)
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(5), draw(5));
    }

    #[test]
    fn completeness_examples() {
        let id = KrausSet::new([(OutcomeLabel::Inconclusive, Operator2::identity())]).unwrap();
        assert_eq!(verify_completeness(&id), 0.0);
        let half = KrausSet::new([(
            OutcomeLabel::Inconclusive,
            Operator2::identity().scale(re(0.5)),
        )])
        .unwrap();
        assert!((verify_completeness(&half) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn duplicate_labels_rejected() {
        let id = Operator2::identity();
        assert!(KrausSet::new([
            (OutcomeLabel::Inconclusive, id),
            (OutcomeLabel::Inconclusive, id)
        ])
        .is_err());
    }

    #[test]
    fn dilation_of_projective_is_identity_like() {
        let m = KrausSet::new([
            (
                OutcomeLabel::ConclusivePlus,
                Operator2::projector(&PolarizationState::horizontal()),
            ),
            (
                OutcomeLabel::ConclusiveMinus,
                Operator2::projector(&PolarizationState::vertical()),
            ),
        ])
        .unwrap();
        let u = neumark_dilation(&m).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((u.matrix[i][j] - re(expected)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn dilation_rejects_overlapping_conclusive_ranges() {
        let half = Operator2::identity().scale(re(std::f64::consts::FRAC_1_SQRT_2));
        let m = KrausSet::new([
            (OutcomeLabel::ConclusivePlus, half),
            (OutcomeLabel::ConclusiveMinus, half),
        ])
        .unwrap();
        assert!(matches!(neumark_dilation(&m), Err(SusdError::Dimension(_))));
    }

    #[test]
    fn dilation_reproduces_bob_and_charlie_actions() {
        for s in [0.0f64, 0.05, 0.25, 0.7, 1.0] {
            let r: f64 = s.sqrt();
            let q = r.sqrt();
            let u = neumark_dilation(&bob_usd(s).unwrap()).unwrap();
            assert!(u.unitarity_deviation() < 1e-10);
            for sign in Sign::BOTH {
                let out = u.act(&prepare_alice(s, sign).unwrap());
                let b0 = PolarizationState::diagonal(sign).scale(re((1.0 - r).sqrt()));
                let b1 = prepare_phi(s, sign).unwrap().scale(re(-sign.factor() * q));
                assert!((NeumarkUnitary::branch_state(&out, 0) - b0).norm() < 1e-10);
                assert!((NeumarkUnitary::branch_state(&out, 1) - b1).norm() < 1e-10);
            }
            let u = neumark_dilation(&charlie_usd(s).unwrap()).unwrap();
            assert!(u.unitarity_deviation() < 1e-10);
            for sign in Sign::BOTH {
                let out = u.act(&prepare_phi(s, sign).unwrap());
                let c0 = PolarizationState::diagonal(sign).scale(re((1.0 - r).sqrt()));
                let c1 = PolarizationState::horizontal().scale(re(-sign.factor() * q));
                assert!((NeumarkUnitary::branch_state(&out, 0) - c0).norm() < 1e-10);
                assert!((NeumarkUnitary::branch_state(&out, 1) - c1).norm() < 1e-10);
            }
        }
    }

    proptest! {
        #[test]
        fn constructions_are_complete_and_unambiguous(s in 0.0f64..=1.0) {
            let bob = bob_usd(s).unwrap();
            let charlie = charlie_usd(s).unwrap();
            prop_assert!(verify_completeness(&bob) < 1e-12);
            prop_assert!(verify_completeness(&charlie) < 1e-12);
            for sign in Sign::BOTH {
                let wrong = OutcomeLabel::conclusive(sign.flip());
                let psi = prepare_alice(s, sign).unwrap();
                let phi = prepare_phi(s, sign).unwrap();
                prop_assert!(bob.get(wrong).unwrap().apply(&psi).norm_sqr() < 1e-24);
                prop_assert!(charlie.get(wrong).unwrap().apply(&phi).norm_sqr() < 1e-24);
                let pb = outcome_distribution(&bob, &psi);
                prop_assert!((prob(&pb, OutcomeLabel::conclusive(sign)) - (1.0 - s.sqrt())).abs() < 1e-12);
                let pc = outcome_distribution(&charlie, &phi);
                prop_assert!((prob(&pc, OutcomeLabel::Inconclusive) - s.sqrt()).abs() < 1e-12);
                let total: f64 = pc.iter().map(|(_, p)| p).sum();
                prop_assert!((total - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn dilation_round_trips_kraus_elements(s in 0.0f64..=1.0) {
            let bob = bob_usd(s).unwrap();
            let u = neumark_dilation(&bob).unwrap();
            prop_assert!(u.unitarity_deviation() < 1e-10);
            let b0 = u.branch_kraus(0);
            for sign in Sign::BOTH {
                let readout = Operator2::projector(&PolarizationState::diagonal(sign)) * b0;
                let original = bob.get(OutcomeLabel::conclusive(sign)).unwrap();
                prop_assert!(readout.max_abs_diff(original) < 1e-10);
            }
            prop_assert!(u.branch_kraus(1).max_abs_diff(bob.get(OutcomeLabel::Inconclusive).unwrap()) < 1e-10);
        }

        #[test]
        fn optimal_failure_equals_overlap(theta in 0.0f64..std::f64::consts::FRAC_PI_2, phase in 0.0f64..6.28) {
            let u1 = PolarizationState::horizontal();
            let u2 = PolarizationState::new(
                re(theta.cos()),
                Amplitude::from_polar(theta.sin(), phase),
            );
            let o = overlap(&u1, &u2).norm();
            let m = optimal_usd(o, (u1, u2)).unwrap();
            prop_assert!(verify_completeness(&m) < 1e-12);
            let d1 = outcome_distribution(&m, &u1);
            let d2 = outcome_distribution(&m, &u2);
            prop_assert!((prob(&d1, OutcomeLabel::Inconclusive) - o).abs() < 1e-12);
            prop_assert!((prob(&d2, OutcomeLabel::Inconclusive) - o).abs() < 1e-12);
            prop_assert!(prob(&d1, OutcomeLabel::ConclusiveMinus) < 1e-24);
            prop_assert!(prob(&d2, OutcomeLabel::ConclusivePlus) < 1e-24);
        }
    }
}
