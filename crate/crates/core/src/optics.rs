//! Jones-calculus model of the optical network.
//!
//! Each party's measurement is a polarizing Sagnac interferometer with one
//! half-wave plate per propagation direction. Horizontal light circulates
//! clockwise through `theta_cw`, vertical light counter-clockwise through
//! `theta_ccw`. On the way out the polarizing beam splitter sends the
//! component that kept its input polarization to port `b0` (conclusive) and
//! the flipped component to port `b1` (inconclusive).
//!
//! Light leaving a conclusive port is split by a half-wave plate at π/8 and a
//! PBS, which maps `|+>` to the transmitted `h` path and `|−>` to the
//! reflected `v` path. On Bob's side two more plates then re-prepare `h → |φ+>`
//! and `v → |φ−>` before Charlie's interferometers. Charlie's interferometers
//! are indexed physically by the Bob outcome whose path they sit on; a
//! [`PortMapping`] attaches the public `(μ, k)` labels.

use std::f64::consts::{FRAC_PI_8, PI};

use crate::error::{check_overlap, Result, SusdError};
use crate::protocol::{Detector, DetectorTable, PortMapping};
use crate::qstate::{
    coefficients_from_overlap, prepare_phi, re, Amplitude, Operator2, PolarizationState, Sign,
};
use crate::usd::{bob_usd, charlie_usd, OutcomeLabel};

/// Fast-axis angle of the plate that splits a conclusive port.
pub const SPLIT_HWP_ANGLE: f64 = FRAC_PI_8;

/// `[[cos2θ, sin2θ], [sin2θ, −cos2θ]]`.
pub fn hwp_jones(theta: f64) -> Operator2 {
    let (s, c) = (2.0 * theta).sin_cos();
    Operator2::real([[c, s], [s, -c]])
}

/// Fast-axis angle in radians, reduced to `[0, π)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WavePlateSetting(f64);

impl WavePlateSetting {
    pub fn new(theta: f64) -> Self {
        Self(theta.rem_euclid(PI))
    }

    pub fn radians(self) -> f64 {
        self.0
    }

    pub fn offset(self, delta: f64) -> Self {
        Self::new(self.0 + delta)
    }

    pub fn jones(self) -> Operator2 {
        hwp_jones(self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SagnacConfig {
    pub theta_cw: WavePlateSetting,
    pub theta_ccw: WavePlateSetting,
}

impl SagnacConfig {
    pub fn new(theta_cw: f64, theta_ccw: f64) -> Self {
        Self {
            theta_cw: WavePlateSetting::new(theta_cw),
            theta_ccw: WavePlateSetting::new(theta_ccw),
        }
    }

    fn offset(self, cw: f64, ccw: f64) -> Self {
        Self {
            theta_cw: self.theta_cw.offset(cw),
            theta_ccw: self.theta_ccw.offset(ccw),
        }
    }
}

/// Fractional intensity losses of a polarizing beam splitter: `loss_h` for
/// transmitted horizontal light, `loss_v` for reflected vertical light.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PBSParams {
    pub loss_h: f64,
    pub loss_v: f64,
}

impl PBSParams {
    pub fn ideal() -> Self {
        Self::default()
    }

    fn t_h(&self) -> f64 {
        (1.0 - self.loss_h).max(0.0).sqrt()
    }

    fn t_v(&self) -> f64 {
        (1.0 - self.loss_v).max(0.0).sqrt()
    }

    pub fn transmitted(&self) -> Operator2 {
        Operator2::real([[self.t_h(), 0.0], [0.0, 0.0]])
    }

    pub fn reflected(&self) -> Operator2 {
        Operator2::real([[0.0, 0.0], [0.0, self.t_v()]])
    }
}

/// Output port of a Sagnac interferometer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SagnacPort {
    /// Polarization-preserving port (conclusive branch).
    B0,
    /// Polarization-flipping port (inconclusive branch).
    B1,
}

impl SagnacPort {
    pub fn for_outcome(o: OutcomeLabel) -> Self {
        if o.is_conclusive() {
            SagnacPort::B0
        } else {
            SagnacPort::B1
        }
    }

    fn other(self) -> Self {
        match self {
            SagnacPort::B0 => SagnacPort::B1,
            SagnacPort::B1 => SagnacPort::B0,
        }
    }
}

/// Single-input transfer of a Sagnac interferometer: one 2×2 block per
/// output port.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SagnacTransfer {
    pub b0: Operator2,
    pub b1: Operator2,
}

impl SagnacTransfer {
    pub fn port(&self, p: SagnacPort) -> &Operator2 {
        match p {
            SagnacPort::B0 => &self.b0,
            SagnacPort::B1 => &self.b1,
        }
    }

    /// Rows `(b0 h, b0 v, b1 h, b1 v)`, columns `(h, v)`.
    pub fn matrix(&self) -> [[Amplitude; 2]; 4] {
        [self.b0.0[0], self.b0.0[1], self.b1.0[0], self.b1.0[1]]
    }

    /// Max-norm deviation of `T†T` from the identity.
    pub fn isometry_deviation(&self) -> f64 {
        (self.b0.gram() + self.b1.gram()).max_abs_diff(&Operator2::identity())
    }
}

/// A transfer whose outputs can be addressed by a port label.
pub trait BlockTransfer {
    type Port;

    fn block(&self, port: &Self::Port) -> Result<Operator2>;
}

impl BlockTransfer for SagnacTransfer {
    type Port = SagnacPort;

    fn block(&self, port: &SagnacPort) -> Result<Operator2> {
        Ok(*self.port(*port))
    }
}

/// The 2×2 block mapping input polarization to the polarization amplitudes
/// at `port`.
pub fn transfer_to_kraus<T: BlockTransfer>(t: &T, port: &T::Port) -> Result<Operator2> {
    t.block(port)
}

pub fn sagnac_transfer(cfg: &SagnacConfig, pbs: &PBSParams) -> SagnacTransfer {
    let cw = cfg.theta_cw.jones();
    let ccw = cfg.theta_ccw.jones();
    let (th, tv) = (pbs.t_h(), pbs.t_v());
    // Entry: h transmitted into the cw arm, v reflected into the ccw arm.
    // Exit: h components are transmitted, v components reflected.
    let b0 = Operator2::new([
        [cw.entry(0, 0) * re(th * th), re(0.0)],
        [re(0.0), ccw.entry(1, 1) * re(tv * tv)],
    ]);
    let b1 = Operator2::new([
        [re(0.0), ccw.entry(0, 1) * re(th * tv)],
        [cw.entry(1, 0) * re(tv * th), re(0.0)],
    ]);
    SagnacTransfer { b0, b1 }
}

/// Bob's plate angles `½ arccos √((1−√s)/(1+s))` and
/// `½ arccos √(1/(1+√s)) + π/2`.
pub fn bob_sagnac_settings(s: f64) -> Result<SagnacConfig> {
    let s = check_overlap(s)?;
    let r = s.sqrt();
    Ok(SagnacConfig::new(
        0.5 * ((1.0 - r) / (1.0 + s)).sqrt().acos(),
        0.5 * (1.0 / (1.0 + r)).sqrt().acos() + PI / 2.0,
    ))
}

/// Charlie's plates: `0` clockwise, `½ arccos √((1−√s)/(1+√s))`
/// counter-clockwise.
pub fn charlie_sagnac_settings(s: f64) -> Result<SagnacConfig> {
    let s = check_overlap(s)?;
    let r = s.sqrt();
    Ok(SagnacConfig::new(
        0.0,
        0.5 * ((1.0 - r) / (1.0 + r)).sqrt().acos(),
    ))
}

/// Plate angle that turns `|h>` into `a|h> ± b|v>`.
pub fn alice_hwp_angle(s: f64, sign: Sign) -> Result<f64> {
    let p = coefficients_from_overlap(s)?;
    Ok(0.5 * (sign.factor() * p.b).atan2(p.a))
}

/// Re-preparation plates after Bob's split: `h → |φ+>` on the `+` path and
/// `v → |φ−>` on the `−` path.
pub fn reprepare_hwp_angles(s: f64) -> Result<(f64, f64)> {
    let plus = prepare_phi(s, Sign::Plus)?;
    let minus = prepare_phi(s, Sign::Minus)?;
    // HWP(θ)|h> = (cos2θ, sin2θ); HWP(θ)|v> = (sin2θ, −cos2θ).
    let theta_plus = 0.5 * plus.v.re.atan2(plus.h.re);
    let theta_minus = 0.5 * minus.h.re.atan2(-minus.v.re);
    Ok((theta_plus, theta_minus))
}

/// Angle offsets (radians) of every half-wave plate in the setup.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HwpOffsets {
    pub alice: f64,
    pub bob_cw: f64,
    pub bob_ccw: f64,
    pub bob_split: f64,
    pub reprep_plus: f64,
    pub reprep_minus: f64,
    /// Charlie's interferometers, indexed by Bob outcome `(+, −, i)`.
    pub charlie: [InterferometerOffsets; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InterferometerOffsets {
    pub cw: f64,
    pub ccw: f64,
    pub split: f64,
}

/// Every polarizing beam splitter in the setup.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PbsSet {
    pub bob_sagnac: PBSParams,
    pub bob_split: PBSParams,
    /// Indexed by Bob outcome `(+, −, i)`.
    pub charlie_sagnac: [PBSParams; 3],
    pub charlie_split: [PBSParams; 3],
}

impl PbsSet {
    pub fn ideal() -> Self {
        Self::default()
    }

    pub fn all(&self) -> impl Iterator<Item = &PBSParams> {
        [&self.bob_sagnac, &self.bob_split]
            .into_iter()
            .chain(self.charlie_sagnac.iter())
            .chain(self.charlie_split.iter())
    }
}

/// Fraction of intensity leaking between the two output ports of each
/// interferometer.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ModeMismatch {
    pub bob: f64,
    /// Indexed by Bob outcome `(+, −, i)`.
    pub charlie: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NetworkParams {
    pub hwp: HwpOffsets,
    pub pbs: PbsSet,
    pub mismatch: ModeMismatch,
}

impl NetworkParams {
    pub fn ideal() -> Self {
        Self::default()
    }
}

/// The compiled network for one `s`, kept as per-stage blocks so that both
/// coherent transfers and incoherent port leakage can be evaluated.
#[derive(Debug, Clone)]
pub struct OpticalNetwork {
    alice_plate: [Operator2; 2],
    bob: SagnacTransfer,
    /// Split and re-preparation after Bob's port, indexed by Bob outcome.
    bob_paths: [Operator2; 3],
    charlie: [SagnacTransfer; 3],
    /// Split after Charlie's port, indexed by `[Bob outcome][Charlie outcome]`.
    charlie_paths: [[Operator2; 3]; 3],
    mismatch: ModeMismatch,
    mapping: PortMapping,
}

fn split_paths(hwp: Operator2, pbs: &PBSParams) -> [Operator2; 3] {
    [
        pbs.transmitted() * hwp,
        pbs.reflected() * hwp,
        Operator2::identity(),
    ]
}

impl OpticalNetwork {
    pub fn compile(s: f64, params: &NetworkParams, mapping: &PortMapping) -> Result<Self> {
        let s = check_overlap(s)?;
        let off = &params.hwp;
        let pbs = &params.pbs;
        let alice_plate = [
            hwp_jones(alice_hwp_angle(s, Sign::Plus)? + off.alice),
            hwp_jones(alice_hwp_angle(s, Sign::Minus)? + off.alice),
        ];
        let bob = sagnac_transfer(
            &bob_sagnac_settings(s)?.offset(off.bob_cw, off.bob_ccw),
            &pbs.bob_sagnac,
        );
        let (rp, rm) = reprepare_hwp_angles(s)?;
        let split = split_paths(hwp_jones(SPLIT_HWP_ANGLE + off.bob_split), &pbs.bob_split);
        let bob_paths = [
            hwp_jones(rp + off.reprep_plus) * split[0],
            hwp_jones(rm + off.reprep_minus) * split[1],
            split[2],
        ];
        let nominal = charlie_sagnac_settings(s)?;
        let mut charlie = [sagnac_transfer(&nominal, &PBSParams::ideal()); 3];
        let mut charlie_paths = [[Operator2::identity(); 3]; 3];
        for i in 0..3 {
            let o = &off.charlie[i];
            charlie[i] = sagnac_transfer(&nominal.offset(o.cw, o.ccw), &pbs.charlie_sagnac[i]);
            charlie_paths[i] = split_paths(
                hwp_jones(SPLIT_HWP_ANGLE + o.split),
                &pbs.charlie_split[i],
            );
        }
        Ok(Self {
            alice_plate,
            bob,
            bob_paths,
            charlie,
            charlie_paths,
            mismatch: params.mismatch,
            mapping: *mapping,
        })
    }

    /// Alice's prepared state: her plate acting on `|h>`.
    pub fn alice_state(&self, sign: Sign) -> PolarizationState {
        let i = usize::from(sign == Sign::Minus);
        self.alice_plate[i].apply(&PolarizationState::horizontal())
    }

    /// Coherent block from the input polarization to the detector reached
    /// by outcomes `(bob, charlie)`, taking each interferometer's nominal port.
    pub fn path_block(&self, bob: OutcomeLabel, charlie: OutcomeLabel) -> Operator2 {
        self.leaky_block(
            bob,
            charlie,
            SagnacPort::for_outcome(bob),
            SagnacPort::for_outcome(charlie),
        )
    }

    fn leaky_block(
        &self,
        bob: OutcomeLabel,
        charlie: OutcomeLabel,
        bob_source: SagnacPort,
        charlie_source: SagnacPort,
    ) -> Operator2 {
        let b = bob.index();
        self.charlie_paths[b][charlie.index()]
            * *self.charlie[b].port(charlie_source)
            * self.bob_paths[b]
            * *self.bob.port(bob_source)
    }

    /// Unnormalized detection probabilities for an input state. Mode
    /// mismatch moves a fraction of each interferometer's port intensity to
    /// the other port incoherently, so leaked and direct contributions add
    /// as intensities.
    pub fn detector_intensities(&self, input: &PolarizationState) -> DetectorTable {
        let mut table = DetectorTable::zeros();
        for bob in OutcomeLabel::ALL {
            let eps_b = self.mismatch.bob;
            let eps_c = self.mismatch.charlie[bob.index()];
            for charlie in OutcomeLabel::ALL {
                let pb = SagnacPort::for_outcome(bob);
                let pc = SagnacPort::for_outcome(charlie);
                let mut p = 0.0;
                for (src_b, wb) in [(pb, 1.0 - eps_b), (pb.other(), eps_b)] {
                    for (src_c, wc) in [(pc, 1.0 - eps_c), (pc.other(), eps_c)] {
                        let w = wb * wc;
                        if w > 0.0 {
                            let amp = self.leaky_block(bob, charlie, src_b, src_c).apply(input);
                            p += w * amp.norm_sqr();
                        }
                    }
                }
                table.set(self.mapping.detector(bob, charlie), p);
            }
        }
        table
    }

    /// Coherent transfer to the nine labeled detector paths.
    pub fn transfer(&self) -> SetupTransfer {
        let paths = OutcomeLabel::ALL
            .into_iter()
            .flat_map(|b| OutcomeLabel::ALL.into_iter().map(move |c| (b, c)))
            .map(|(bob, charlie)| TransferPath {
                detector: self.mapping.detector(bob, charlie),
                bob,
                charlie,
                block: self.path_block(bob, charlie),
            })
            .collect();
        SetupTransfer { paths }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferPath {
    pub detector: Detector,
    pub bob: OutcomeLabel,
    pub charlie: OutcomeLabel,
    pub block: Operator2,
}

/// Map from Alice's polarization amplitudes to the 18 output amplitudes
/// (9 detector paths × 2 polarizations).
#[derive(Debug, Clone, PartialEq)]
pub struct SetupTransfer {
    pub paths: Vec<TransferPath>,
}

impl SetupTransfer {
    /// 18×2 matrix, two rows (h, v) per path in path order.
    pub fn matrix(&self) -> Vec<[Amplitude; 2]> {
        self.paths
            .iter()
            .flat_map(|p| [p.block.0[0], p.block.0[1]])
            .collect()
    }

    /// Max-norm deviation of `T†T` from the identity.
    pub fn isometry_deviation(&self) -> f64 {
        self.paths
            .iter()
            .fold(Operator2::zero(), |acc, p| acc + p.block.gram())
            .max_abs_diff(&Operator2::identity())
    }

    pub fn column_norms(&self) -> [f64; 2] {
        let m = self.matrix();
        [0, 1].map(|j| m.iter().map(|row| row[j].norm_sqr()).sum::<f64>().sqrt())
    }

    pub fn probabilities(&self, input: &PolarizationState) -> DetectorTable {
        let mut table = DetectorTable::zeros();
        for p in &self.paths {
            table.set(p.detector, p.block.apply(input).norm_sqr());
        }
        table
    }
}

impl BlockTransfer for SetupTransfer {
    type Port = Detector;

    fn block(&self, port: &Detector) -> Result<Operator2> {
        self.paths
            .iter()
            .find(|p| p.detector == *port)
            .map(|p| p.block)
            .ok_or_else(|| SusdError::UnknownPort(port.to_string()))
    }
}

/// Compiles the full setup with ideal plates and the given beam splitters.
pub fn compile_setup(s: f64, pbs: &PbsSet, mapping: &PortMapping) -> Result<SetupTransfer> {
    let params = NetworkParams {
        pbs: *pbs,
        ..NetworkParams::ideal()
    };
    Ok(OpticalNetwork::compile(s, &params, mapping)?.transfer())
}

/// The operator the abstract two-stage model assigns to the detector reached
/// by `(bob, charlie)`: Bob's Kraus element, re-preparation `|±> → |φ±>`,
/// Charlie's Kraus element and the diagonal-basis readout `|±> → |h>,|v>`.
pub fn kraus_path_operator(s: f64, bob: OutcomeLabel, charlie: OutcomeLabel) -> Result<Operator2> {
    let bob_set = bob_usd(s)?;
    let charlie_set = charlie_usd(s)?;
    let a = *bob_set.get(bob).expect("complete label set");
    let c = *charlie_set.get(charlie).expect("complete label set");
    let reprep = match bob.sign() {
        Some(sign) => Operator2::outer(&prepare_phi(s, sign)?, &PolarizationState::diagonal(sign)),
        None => Operator2::identity(),
    };
    let readout = match charlie.sign() {
        Some(Sign::Plus) => Operator2::outer(
            &PolarizationState::horizontal(),
            &PolarizationState::diagonal(Sign::Plus),
        ),
        Some(Sign::Minus) => Operator2::outer(
            &PolarizationState::vertical(),
            &PolarizationState::diagonal(Sign::Minus),
        ),
        None => Operator2::identity(),
    };
    Ok(readout * c * reprep * a)
}
