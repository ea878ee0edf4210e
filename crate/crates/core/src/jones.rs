//! Complex 2×2 Jones calculus for the fiber optics of the interferometer.
//!
//! # Convention
//!
//! Vectors are written in a right-handed lab frame. Light travelling back
//! towards the source is described in the mirrored frame, in which:
//!
//! * a reciprocal element (fiber, wave plate, phase modulator) whose forward
//!   matrix is `U` acts on the returning light as `Uᵀ`;
//! * a Faraday rotator is non-reciprocal, so it rotates by the same signed
//!   angle on both passes and a 45° rotator in front of a mirror rotates by
//!   90° in total;
//! * a plain mirror is the identity (its −1 is a global phase);
//! * the state that *is* the input `v`, seen in the backward frame, is its
//!   time-reversed image `v̄`. The overlap of a returning state `w` with the
//!   input is therefore `|v̄ · w| = |vᵀ w|`, which coincides with the usual
//!   `|⟨v|w⟩|` for every linear polarization.
//!
//! Under these rules a round trip through any fiber `U` terminated by a
//! Faraday mirror is `Uᵀ R(90°) U`. For any 2×2 `M`, `Mᵀ J M = det(M) J`
//! with `J` the 90° rotation, so the round trip equals `det(U) · R(90°)`:
//! the fiber drops out up to a unit-modulus phase, and `vᵀ R(90°) v = 0`
//! makes every returning state orthogonal to its input.

use std::f64::consts::FRAC_PI_4;
use std::ops::Mul;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Tolerance used for "is this matrix unitary".
pub const UNITARY_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JonesVector {
    pub c0: C64,
    pub c1: C64,
}

impl JonesVector {
    pub const HORIZONTAL: JonesVector = JonesVector { c0: ONE, c1: ZERO };
    pub const VERTICAL: JonesVector = JonesVector { c0: ZERO, c1: ONE };

    pub fn new(c0: C64, c1: C64) -> Self {
        Self { c0, c1 }
    }

    pub fn from_real(x: f64, y: f64) -> Self {
        Self::new(C64::new(x, 0.0), C64::new(y, 0.0))
    }

    /// Linear polarization at `angle` radians from horizontal.
    pub fn linear(angle: f64) -> Self {
        Self::from_real(angle.cos(), angle.sin())
    }

    pub fn norm_sqr(&self) -> f64 {
        self.c0.norm_sqr() + self.c1.norm_sqr()
    }

    pub fn is_finite(&self) -> bool {
        self.c0.is_finite() && self.c1.is_finite()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sqr() - 1.0).abs() <= 1e-12
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm_sqr().sqrt();
        if !n.is_finite() || n == 0.0 {
            return Err(Error::invalid("cannot normalize a zero or non-finite Jones vector"));
        }
        Ok(Self::new(self.c0 / n, self.c1 / n))
    }

    /// Hermitian inner product ⟨self|other⟩.
    pub fn inner(&self, other: &JonesVector) -> C64 {
        self.c0.conj() * other.c0 + self.c1.conj() * other.c1
    }

    /// Overlap of a returning state with this (forward) state, taken in the
    /// mirrored frame. See the module docs.
    pub fn return_overlap(&self, returned: &JonesVector) -> f64 {
        (self.c0 * returned.c0 + self.c1 * returned.c1).norm()
    }

    /// Components as `[re0, im0, re1, im1]`, the wire layout of pulse frames.
    pub fn to_array(&self) -> [f64; 4] {
        [self.c0.re, self.c0.im, self.c1.re, self.c1.im]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(C64::new(a[0], a[1]), C64::new(a[2], a[3]))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JonesMatrix {
    pub m00: C64,
    pub m01: C64,
    pub m10: C64,
    pub m11: C64,
}

impl JonesMatrix {
    pub const IDENTITY: JonesMatrix = JonesMatrix { m00: ONE, m01: ZERO, m10: ZERO, m11: ONE };

    pub fn new(m00: C64, m01: C64, m10: C64, m11: C64) -> Self {
        Self { m00, m01, m10, m11 }
    }

    pub fn diag(d0: C64, d1: C64) -> Self {
        Self::new(d0, ZERO, ZERO, d1)
    }

    pub fn scale(&self, s: C64) -> Self {
        Self::new(self.m00 * s, self.m01 * s, self.m10 * s, self.m11 * s)
    }

    fn entries(&self) -> [C64; 4] {
        [self.m00, self.m01, self.m10, self.m11]
    }

    pub fn is_finite(&self) -> bool {
        self.entries().iter().all(|c| c.is_finite())
    }

    pub fn transpose(&self) -> Self {
        Self::new(self.m00, self.m10, self.m01, self.m11)
    }

    pub fn adjoint(&self) -> Self {
        Self::new(self.m00.conj(), self.m10.conj(), self.m01.conj(), self.m11.conj())
    }

    pub fn det(&self) -> C64 {
        self.m00 * self.m11 - self.m01 * self.m10
    }

    /// Largest entrywise deviation of `M·M†` from the identity.
    pub fn unitarity_error(&self) -> f64 {
        let p = *self * self.adjoint();
        let d = p - JonesMatrix::IDENTITY;
        d.entries().iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn is_unitary(&self) -> bool {
        self.is_finite() && self.unitarity_error() <= UNITARY_TOL
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries().iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `min_φ ‖self − e^{iφ}·other‖_F`, with φ taken from the ratio at the
    /// largest-magnitude entry of `other`.
    pub fn proportional_deviation(&self, other: &JonesMatrix) -> f64 {
        let a = self.entries();
        let b = other.entries();
        let k = (0..4).max_by(|&i, &j| b[i].norm().total_cmp(&b[j].norm())).unwrap_or(0);
        if b[k].norm() == 0.0 {
            return self.frobenius_norm();
        }
        let phase = (a[k] / b[k]).arg();
        (*self - other.scale(C64::from_polar(1.0, phase))).frobenius_norm()
    }

    /// Matrix-vector product. Rejects non-finite operands.
    pub fn apply(&self, v: &JonesVector) -> Result<JonesVector> {
        if !self.is_finite() || !v.is_finite() {
            return Err(Error::invalid("non-finite Jones matrix or vector entry"));
        }
        Ok(*self * *v)
    }
}

impl Mul for JonesMatrix {
    type Output = JonesMatrix;

    fn mul(self, b: JonesMatrix) -> JonesMatrix {
        JonesMatrix::new(
            self.m00 * b.m00 + self.m01 * b.m10,
            self.m00 * b.m01 + self.m01 * b.m11,
            self.m10 * b.m00 + self.m11 * b.m10,
            self.m10 * b.m01 + self.m11 * b.m11,
        )
    }
}

impl Mul<JonesVector> for JonesMatrix {
    type Output = JonesVector;

    fn mul(self, v: JonesVector) -> JonesVector {
        JonesVector::new(self.m00 * v.c0 + self.m01 * v.c1, self.m10 * v.c0 + self.m11 * v.c1)
    }
}

impl std::ops::Sub for JonesMatrix {
    type Output = JonesMatrix;

    fn sub(self, b: JonesMatrix) -> JonesMatrix {
        JonesMatrix::new(self.m00 - b.m00, self.m01 - b.m01, self.m10 - b.m10, self.m11 - b.m11)
    }
}

/// Real rotation of the polarization frame by `angle` radians.
pub fn rotation(angle: f64) -> JonesMatrix {
    let (s, c) = angle.sin_cos();
    JonesMatrix::new(C64::new(c, 0.0), C64::new(-s, 0.0), C64::new(s, 0.0), C64::new(c, 0.0))
}

/// Linear retarder with its fast axis at `axis` radians and phase
/// retardance `retardance` radians.
pub fn retarder(axis: f64, retardance: f64) -> JonesMatrix {
    let half = retardance / 2.0;
    let d = JonesMatrix::diag(C64::from_polar(1.0, -half), C64::from_polar(1.0, half));
    rotation(axis) * d * rotation(-axis)
}

pub fn half_wave_plate(axis: f64) -> JonesMatrix {
    retarder(axis, std::f64::consts::PI)
}

pub fn quarter_wave_plate(axis: f64) -> JonesMatrix {
    retarder(axis, std::f64::consts::FRAC_PI_2)
}

/// Single pass through a Faraday rotator. Same matrix in both directions.
pub fn faraday_rotator(angle: f64) -> JonesMatrix {
    rotation(angle)
}

/// Plain reflection in the mirrored frame.
pub fn mirror() -> JonesMatrix {
    JonesMatrix::IDENTITY
}

/// 45° Faraday rotator, mirror, and the rotator again: a 90° rotation.
pub fn faraday_mirror() -> JonesMatrix {
    faraday_rotator(FRAC_PI_4) * mirror() * faraday_rotator(FRAC_PI_4)
}

/// Matrix seen by light travelling back through a reciprocal element.
pub fn backward(forward: &JonesMatrix) -> JonesMatrix {
    forward.transpose()
}

fn require_unitary(u: &JonesMatrix) -> Result<()> {
    if !u.is_finite() {
        return Err(Error::invalid("fiber matrix has non-finite entries"));
    }
    let err = u.unitarity_error();
    if err > UNITARY_TOL {
        return Err(Error::invalid(format!("fiber matrix is not unitary (|MM†−I| = {err:.3e})")));
    }
    Ok(())
}

/// Out through `fiber`, off a Faraday mirror, and back.
pub fn round_trip(fiber: &JonesMatrix) -> Result<JonesMatrix> {
    require_unitary(fiber)?;
    Ok(backward(fiber) * faraday_mirror() * *fiber)
}

/// Out through `fiber`, off an ordinary mirror, and back.
pub fn ordinary_mirror_round_trip(fiber: &JonesMatrix) -> Result<JonesMatrix> {
    require_unitary(fiber)?;
    Ok(backward(fiber) * mirror() * *fiber)
}

/// Haar-distributed element of U(2).
///
/// A uniform point on S³ gives a uniform SU(2) element `[[a, b], [−b̄, ā]]`;
/// an independent uniform global phase lifts it to U(2).
pub fn haar_random_unitary<R: Rng + ?Sized>(rng: &mut R) -> JonesMatrix {
    let mut z = [0.0f64; 4];
    let norm = loop {
        for x in z.iter_mut() {
            *x = StandardNormal.sample(rng);
        }
        let n = z.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            break n;
        }
    };
    let a = C64::new(z[0] / norm, z[1] / norm);
    let b = C64::new(z[2] / norm, z[3] / norm);
    let phase = C64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU));
    JonesMatrix::new(a, b, -b.conj(), a.conj()).scale(phase)
}

/// A span of fiber: a birefringence matrix, attenuation and delay.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FiberSegment {
    pub unitary: JonesMatrix,
    pub loss_db: f64,
    pub delay_s: f64,
}

impl FiberSegment {
    pub fn new(unitary: JonesMatrix, loss_db: f64, delay_s: f64) -> Result<Self> {
        require_unitary(&unitary)?;
        if !(loss_db >= 0.0 && loss_db.is_finite()) {
            return Err(Error::invalid(format!("fiber loss must be >= 0 dB, got {loss_db}")));
        }
        if !(delay_s >= 0.0 && delay_s.is_finite()) {
            return Err(Error::invalid(format!("fiber delay must be >= 0 s, got {delay_s}")));
        }
        Ok(Self { unitary, loss_db, delay_s })
    }

    pub fn transmission(&self) -> f64 {
        10f64.powf(-self.loss_db / 10.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_vector(rng: &mut ChaCha8Rng) -> JonesVector {
        let mut c = [0.0; 4];
        for x in c.iter_mut() {
            *x = StandardNormal.sample(rng);
        }
        JonesVector::from_array(c).normalized().unwrap()
    }

    fn random_matrix(rng: &mut ChaCha8Rng) -> JonesMatrix {
        let mut e = [ZERO; 4];
        for c in e.iter_mut() {
            *c = C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng));
        }
        JonesMatrix::new(e[0], e[1], e[2], e[3])
    }

    #[test]
    fn faraday_mirror_matches_hand_product() {
        // R(45)·R(45) = [[0, −1], [1, 0]]
        let fm = faraday_mirror();
        let expected = JonesMatrix::new(ZERO, -ONE, ONE, ZERO);
        assert!((fm - expected).frobenius_norm() < 1e-15);
    }

    #[test]
    fn faraday_mirror_swaps_linear_axes() {
        let h = faraday_mirror().apply(&JonesVector::HORIZONTAL).unwrap();
        assert!(h.c0.norm() < 1e-15);
        assert!((h.c1.norm() - 1.0).abs() < 1e-15);
        let v = faraday_mirror().apply(&JonesVector::VERTICAL).unwrap();
        assert!(v.c1.norm() < 1e-15);
        assert!((v.c0.norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn faraday_mirror_output_orthogonal_for_random_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let v = random_vector(&mut rng);
            let out = faraday_mirror() * v;
            assert!(v.return_overlap(&out) < 1e-12);
        }
    }

    #[test]
    fn apply_identity_and_associativity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let v = random_vector(&mut rng);
            assert_eq!(JonesMatrix::IDENTITY.apply(&v).unwrap(), v);
            let a = random_matrix(&mut rng);
            let b = random_matrix(&mut rng);
            let lhs = (a * b).apply(&v).unwrap();
            let rhs = a.apply(&b.apply(&v).unwrap()).unwrap();
            assert!((lhs.c0 - rhs.c0).norm() < 1e-12 && (lhs.c1 - rhs.c1).norm() < 1e-12);
        }
    }

    #[test]
    fn apply_rejects_non_finite() {
        let bad = JonesMatrix::IDENTITY.scale(C64::new(f64::NAN, 0.0));
        assert!(matches!(bad.apply(&JonesVector::HORIZONTAL), Err(Error::InvalidArgument(_))));
        let v = JonesVector::from_real(f64::INFINITY, 0.0);
        assert!(JonesMatrix::IDENTITY.apply(&v).is_err());
    }

    #[test]
    fn unitary_apply_preserves_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let u = haar_random_unitary(&mut rng);
            let v = random_vector(&mut rng);
            assert!(((u * v).norm_sqr() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn round_trip_of_identity_is_faraday_mirror() {
        let rt = round_trip(&JonesMatrix::IDENTITY).unwrap();
        assert!((rt - faraday_mirror()).frobenius_norm() < 1e-15);
    }

    #[test]
    fn round_trip_through_quarter_wave_plate() {
        // Direct product: QWP(30°) is symmetric with det 1, so QWPᵀ·FM·QWP = FM.
        let q = quarter_wave_plate(30f64.to_radians());
        let rt = round_trip(&q).unwrap();
        assert!(rt.proportional_deviation(&faraday_mirror()) < 1e-10);
    }

    #[test]
    fn round_trip_rejects_non_unitary() {
        let m = JonesMatrix::diag(ONE, C64::new(0.5, 0.0));
        assert!(matches!(round_trip(&m), Err(Error::InvalidArgument(_))));
        assert!(ordinary_mirror_round_trip(&m).is_err());
    }

    #[test]
    fn haar_samples_are_unitary_with_unit_determinant() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..1000 {
            let u = haar_random_unitary(&mut rng);
            assert!(u.is_unitary());
            assert!((u.det().norm() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn haar_second_moment() {
        // E|U00|² = 1/2 for Haar measure on U(2).
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 100_000;
        let mean = (0..n).map(|_| haar_random_unitary(&mut rng).m00.norm_sqr()).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn haar_is_deterministic_per_seed() {
        let mut a = ChaCha8Rng::seed_from_u64(77);
        let mut b = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..20 {
            assert_eq!(haar_random_unitary(&mut a), haar_random_unitary(&mut b));
        }
    }

    #[test]
    fn ordinary_mirror_identity_fiber() {
        assert_eq!(ordinary_mirror_round_trip(&JonesMatrix::IDENTITY).unwrap(), mirror());
    }

    #[test]
    fn ordinary_mirror_half_wave_plate_breaks_orthogonality() {
        // HWP(22.5°) is symmetric, so Uᵀ·U = U² = HWP(22.5°)² which is −I:
        // horizontal light comes back horizontal instead of vertical.
        let u = half_wave_plate(22.5f64.to_radians());
        let out = ordinary_mirror_round_trip(&u).unwrap() * JonesVector::HORIZONTAL;
        let fm_out = round_trip(&u).unwrap() * JonesVector::HORIZONTAL;
        assert!((JonesVector::HORIZONTAL.return_overlap(&out) - 1.0).abs() < 1e-12);
        assert!(fm_out.inner(&out).norm() < 1e-12);
    }

    #[test]
    fn proportional_deviation_ignores_global_phase() {
        let fm = faraday_mirror();
        let shifted = fm.scale(C64::from_polar(1.0, 1.234));
        assert!(shifted.proportional_deviation(&fm) < 1e-15);
        assert!(JonesMatrix::IDENTITY.proportional_deviation(&fm) > 1.0);
    }

    #[test]
    fn fiber_segment_validation() {
        assert!(FiberSegment::new(JonesMatrix::IDENTITY, 8.6, 114e-6).is_ok());
        assert!(FiberSegment::new(JonesMatrix::IDENTITY, -1.0, 0.0).is_err());
        assert!(FiberSegment::new(JonesMatrix::IDENTITY, 0.0, -1.0).is_err());
        let seg = FiberSegment::new(JonesMatrix::IDENTITY, 10.0, 0.0).unwrap();
        assert!((seg.transmission() - 0.1).abs() < 1e-15);
    }
}
