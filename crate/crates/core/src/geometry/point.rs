use nalgebra::Matrix2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type Mat2 = Matrix2<C64>;

/// A point of P^1 in normalized homogeneous coordinates.
///
/// Always satisfies |z0|^2 + |z1|^2 = 1 with the larger-modulus coordinate
/// real and positive (ties go to z0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpherePoint {
    z0: C64,
    z1: C64,
}

/// Projective normalization of a homogeneous pair.
pub fn normalize(z0: C64, z1: C64) -> Result<SpherePoint> {
    let m = z0.norm().max(z1.norm());
    if m == 0.0 || !m.is_finite() {
        return Err(Error::ZeroVector);
    }
    let (a, b) = (z0 / m, z1 / m);
    let r = (a.norm_sqr() + b.norm_sqr()).sqrt();
    let (a, b) = (a / r, b / r);
    let phase = if a.norm() >= b.norm() {
        a.conj() / a.norm()
    } else {
        b.conj() / b.norm()
    };
    let (mut a, mut b) = (a * phase, b * phase);
    // make the reference coordinate exactly real
    if a.norm() >= b.norm() {
        a = C64::new(a.norm(), 0.0);
    } else {
        b = C64::new(b.norm(), 0.0);
    }
    Ok(SpherePoint { z0: a, z1: b })
}

impl SpherePoint {
    pub fn new(z0: C64, z1: C64) -> Result<Self> {
        normalize(z0, z1)
    }

    /// The point [1 : z] of the affine chart z0 != 0.
    pub fn from_chart(z: C64) -> Self {
        normalize(C64::new(1.0, 0.0), z).expect("[1:z] is never zero")
    }

    pub fn zero() -> Self {
        Self::from_chart(C64::new(0.0, 0.0))
    }

    pub fn infinity() -> Self {
        SpherePoint {
            z0: C64::new(0.0, 0.0),
            z1: C64::new(1.0, 0.0),
        }
    }

    pub fn z0(&self) -> C64 {
        self.z0
    }

    pub fn z1(&self) -> C64 {
        self.z1
    }

    /// Chart coordinate z = z1/z0, or `None` at infinity.
    pub fn chart(&self) -> Option<C64> {
        if self.z0.norm() == 0.0 {
            None
        } else {
            Some(self.z1 / self.z0)
        }
    }

    pub fn is_infinity(&self) -> bool {
        self.z0.norm() == 0.0
    }

    /// z0 w1 - z1 w0; its modulus is the chordal distance.
    pub fn cross(&self, other: &SpherePoint) -> C64 {
        self.z0 * other.z1 - self.z1 * other.z0
    }

    /// Chordal (Fubini-Study) distance, in [0, 1].
    pub fn chordal(&self, other: &SpherePoint) -> f64 {
        self.cross(other).norm()
    }

    /// Projective coincidence, decided exactly.
    pub fn coincides(&self, other: &SpherePoint) -> bool {
        let c = self.cross(other);
        c.re == 0.0 && c.im == 0.0
    }

    /// |z0|^2 - |z1|^2, the height of the point on the unit sphere.
    pub fn height(&self) -> f64 {
        self.z0.norm_sqr() - self.z1.norm_sqr()
    }

    /// |z1|^2, uniformly distributed in [0, 1] under the normalized
    /// Fubini-Study measure.
    pub fn polar_u(&self) -> f64 {
        self.z1.norm_sqr()
    }

    /// Homogeneous pair as a column vector.
    pub fn vector(&self) -> [C64; 2] {
        [self.z0, self.z1]
    }

    /// Swap of the two charts, z -> 1/z.
    pub fn swap(&self) -> SpherePoint {
        normalize(self.z1, self.z0).expect("normalized point is nonzero")
    }

    /// Unit-sphere coordinates (x, y, z) of the point.
    pub fn to_cartesian(&self) -> [f64; 3] {
        let w = self.z0.conj() * self.z1;
        [2.0 * w.re, 2.0 * w.im, self.height()]
    }

    /// Inverse of [`SpherePoint::to_cartesian`] for a nonzero vector.
    pub fn from_cartesian(v: [f64; 3]) -> Result<SpherePoint> {
        let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::ZeroVector);
        }
        let (x, y, h) = (v[0] / r, v[1] / r, v[2] / r);
        if h >= 0.0 {
            let a = ((1.0 + h) / 2.0).sqrt();
            normalize(C64::new(a, 0.0), C64::new(x, y) / (2.0 * a))
        } else {
            let b = ((1.0 - h) / 2.0).sqrt();
            normalize(C64::new(x, -y) / (2.0 * b), C64::new(b, 0.0))
        }
    }

    /// SU(2) element mapping [1:0] to this point.
    pub fn frame(&self) -> Mat2 {
        Mat2::new(self.z0, -self.z1.conj(), self.z1, self.z0.conj())
    }

    /// The point at chordal distance `eps` (at most 1) in direction `psi`
    /// of the frame at this point.
    pub fn offset(&self, eps: f64, psi: f64) -> SpherePoint {
        let a = C64::new((1.0 - eps * eps).max(0.0).sqrt(), 0.0);
        let b = C64::from_polar(eps, psi);
        normalize(self.z0 * a - self.z1.conj() * b, self.z1 * a + self.z0.conj() * b)
            .expect("unitary image")
    }
}

/// Applies `g` to the homogeneous vector of `p` without normalizing.
pub fn apply_raw(g: &Mat2, p: &SpherePoint) -> [C64; 2] {
    [
        g[(0, 0)] * p.z0 + g[(0, 1)] * p.z1,
        g[(1, 0)] * p.z0 + g[(1, 1)] * p.z1,
    ]
}

/// Möbius action of a unimodular matrix on P^1.
pub fn mobius_apply(g: &Mat2, p: &SpherePoint) -> Result<SpherePoint> {
    let det = g.determinant();
    let dev = (det - C64::new(1.0, 0.0)).norm();
    if dev >= 1e-10 {
        return Err(Error::NotUnimodular(dev));
    }
    let [a, b] = apply_raw(g, p);
    normalize(a, b)
}

/// Rotation by `angle` about the unit axis `n`, as an element of SU(2).
pub fn su2_rotation(axis: [f64; 3], angle: f64) -> Mat2 {
    let norm = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    let (nx, ny, nz) = (axis[0] / norm, axis[1] / norm, axis[2] / norm);
    let (c, s) = ((angle / 2.0).cos(), (angle / 2.0).sin());
    let i = C64::new(0.0, 1.0);
    // cos(a/2) I - i sin(a/2) (n . sigma)
    Mat2::new(
        C64::new(c, 0.0) - i * s * nz,
        -i * s * C64::new(nx, -ny),
        -i * s * C64::new(nx, ny),
        C64::new(c, 0.0) + i * s * nz,
    )
}
