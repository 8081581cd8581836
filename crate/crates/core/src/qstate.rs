//! Polarization qubits and the state families used by the protocol.
//!
//! Everything here works in the `(h, v)` basis. States produced by the
//! `prepare_*` functions carry a real, non-negative horizontal amplitude so
//! they can be compared componentwise; [`PolarizationState::same_ray`] gives
//! the phase-insensitive comparison used everywhere else.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{check_overlap, Result};

/// Complex probability amplitude.
pub type Amplitude = Complex64;

/// Default tolerance for phase-insensitive state equality.
pub const STATE_TOLERANCE: f64 = 1e-10;

pub(crate) const ZERO: Amplitude = Complex64::new(0.0, 0.0);
pub(crate) const ONE: Amplitude = Complex64::new(1.0, 0.0);

pub(crate) fn re(x: f64) -> Amplitude {
    Complex64::new(x, 0.0)
}

/// Which of the two hypothesis states Alice sent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub const BOTH: [Sign; 2] = [Sign::Plus, Sign::Minus];

    /// `+1.0` or `-1.0`.
    pub fn factor(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Sign::Plus => "+",
            Sign::Minus => "-",
        }
    }

    pub fn flip(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// A (not necessarily normalized) Jones vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarizationState {
    pub h: Amplitude,
    pub v: Amplitude,
}

impl PolarizationState {
    pub const fn new(h: Amplitude, v: Amplitude) -> Self {
        Self { h, v }
    }

    pub fn real(h: f64, v: f64) -> Self {
        Self::new(re(h), re(v))
    }

    pub fn horizontal() -> Self {
        Self::real(1.0, 0.0)
    }

    pub fn vertical() -> Self {
        Self::real(0.0, 1.0)
    }

    /// `(|h> ± |v>)/√2`.
    pub fn diagonal(sign: Sign) -> Self {
        let c = std::f64::consts::FRAC_1_SQRT_2;
        Self::real(c, sign.factor() * c)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.h.norm_sqr() + self.v.norm_sqr()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn scale(&self, k: Amplitude) -> Self {
        Self::new(self.h * k, self.v * k)
    }

    /// Returns `None` for the zero vector.
    pub fn normalized(&self) -> Option<Self> {
        let n = self.norm();
        if n > 0.0 && n.is_finite() {
            Some(self.scale(re(1.0 / n)))
        } else {
            None
        }
    }

    pub fn is_finite(&self) -> bool {
        self.h.is_finite() && self.v.is_finite()
    }

    /// Phase-insensitive equality: `|1 - |<u|v>|| <= tol`.
    pub fn same_ray(&self, other: &Self, tol: f64) -> bool {
        (1.0 - overlap(self, other).norm()).abs() <= tol
    }

    /// `|<self|other>|²`.
    pub fn fidelity(&self, other: &Self) -> f64 {
        overlap(self, other).norm_sqr()
    }

    pub fn components(&self) -> [Amplitude; 2] {
        [self.h, self.v]
    }
}

impl Add for PolarizationState {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.h + o.h, self.v + o.v)
    }
}

impl Sub for PolarizationState {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.h - o.h, self.v - o.v)
    }
}

impl Neg for PolarizationState {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.h, -self.v)
    }
}

/// `<u|v>`, conjugate-linear in `u`.
pub fn overlap(u: &PolarizationState, v: &PolarizationState) -> Amplitude {
    u.h.conj() * v.h + u.v.conj() * v.v
}

/// 2×2 complex matrix acting on `(h, v)` column vectors, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Operator2(pub [[Amplitude; 2]; 2]);

impl Operator2 {
    pub const fn new(m: [[Amplitude; 2]; 2]) -> Self {
        Self(m)
    }

    pub fn real(m: [[f64; 2]; 2]) -> Self {
        Self([
            [re(m[0][0]), re(m[0][1])],
            [re(m[1][0]), re(m[1][1])],
        ])
    }

    pub fn zero() -> Self {
        Self([[ZERO; 2]; 2])
    }

    pub fn identity() -> Self {
        Self([[ONE, ZERO], [ZERO, ONE]])
    }

    pub fn diag(a: Amplitude, b: Amplitude) -> Self {
        Self([[a, ZERO], [ZERO, b]])
    }

    /// `|ket><bra|`.
    pub fn outer(ket: &PolarizationState, bra: &PolarizationState) -> Self {
        let k = ket.components();
        let b = bra.components();
        Self([
            [k[0] * b[0].conj(), k[0] * b[1].conj()],
            [k[1] * b[0].conj(), k[1] * b[1].conj()],
        ])
    }

    /// Orthogonal projector onto a normalized state.
    pub fn projector(state: &PolarizationState) -> Self {
        Self::outer(state, state)
    }

    pub fn entry(&self, row: usize, col: usize) -> Amplitude {
        self.0[row][col]
    }

    pub fn dagger(&self) -> Self {
        let m = &self.0;
        Self([
            [m[0][0].conj(), m[1][0].conj()],
            [m[0][1].conj(), m[1][1].conj()],
        ])
    }

    pub fn apply(&self, x: &PolarizationState) -> PolarizationState {
        let m = &self.0;
        PolarizationState::new(m[0][0] * x.h + m[0][1] * x.v, m[1][0] * x.h + m[1][1] * x.v)
    }

    pub fn scale(&self, k: Amplitude) -> Self {
        let mut out = self.0;
        for row in out.iter_mut() {
            for e in row.iter_mut() {
                *e *= k;
            }
        }
        Self(out)
    }

    pub fn trace(&self) -> Amplitude {
        self.0[0][0] + self.0[1][1]
    }

    pub fn det(&self) -> Amplitude {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    /// `A†A`.
    pub fn gram(&self) -> Self {
        self.dagger() * *self
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.iter().flatten().map(|e| e.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .flatten()
            .zip(other.0.iter().flatten())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Frobenius distance after removing the best global phase between the two
    /// operators, i.e. `min_φ ‖self − e^{iφ} other‖_F`.
    pub fn phase_aligned_distance(&self, other: &Self) -> f64 {
        let inner: Amplitude = other
            .0
            .iter()
            .flatten()
            .zip(self.0.iter().flatten())
            .map(|(o, s)| o.conj() * s)
            .sum();
        let phase = if inner.norm() > 0.0 {
            inner / inner.norm()
        } else {
            ONE
        };
        (*self - other.scale(phase)).frobenius_norm()
    }

    /// Principal square root of a positive semidefinite 2×2 matrix.
    pub fn psd_sqrt(&self) -> Self {
        let det = self.det().re.max(0.0).sqrt();
        let denom = (self.trace().re + 2.0 * det).max(0.0).sqrt();
        if denom == 0.0 {
            return Self::zero();
        }
        (*self + Self::identity().scale(re(det))).scale(re(1.0 / denom))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|e| e.is_finite())
    }
}

impl Mul for Operator2 {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let a = &self.0;
        let b = &o.0;
        let mut out = [[ZERO; 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, e) in row.iter_mut().enumerate() {
                *e = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Self(out)
    }
}

impl Add for Operator2 {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let mut out = self.0;
        for (i, row) in out.iter_mut().enumerate() {
            for (j, e) in row.iter_mut().enumerate() {
                *e += o.0[i][j];
            }
        }
        Self(out)
    }
}

impl Sub for Operator2 {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self + o.scale(re(-1.0))
    }
}

/// Inner product `s` together with the real coefficients `a ≥ b ≥ 0` of
/// `a|h> ± b|v>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlapParams {
    pub s: f64,
    pub a: f64,
    pub b: f64,
}

impl OverlapParams {
    /// `√s`, the overlap magnitude of the forwarded pair.
    pub fn sqrt_s(&self) -> f64 {
        self.s.sqrt()
    }
}

pub fn coefficients_from_overlap(s: f64) -> Result<OverlapParams> {
    let s = check_overlap(s)?;
    Ok(OverlapParams {
        s,
        a: ((1.0 + s) / 2.0).sqrt(),
        b: ((1.0 - s) / 2.0).sqrt(),
    })
}

/// `a|h> ± b|v>`.
pub fn prepare_alice(s: f64, sign: Sign) -> Result<PolarizationState> {
    let p = coefficients_from_overlap(s)?;
    Ok(PolarizationState::real(p.a, sign.factor() * p.b))
}

/// `√((1−√s)/2)|h> ∓ √((1+√s)/2)|v>`, the states forwarded to the second
/// party. Their inner product is `−√s`.
pub fn prepare_phi(s: f64, sign: Sign) -> Result<PolarizationState> {
    let s = check_overlap(s)?;
    let r = s.sqrt();
    Ok(PolarizationState::real(
        ((1.0 - r) / 2.0).sqrt(),
        -sign.factor() * ((1.0 + r) / 2.0).sqrt(),
    ))
}
