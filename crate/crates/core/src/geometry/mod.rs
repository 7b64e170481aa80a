//! Points, charts, the Fubini-Study reference metric, quadrature and Möbius
//! actions on the Riemann sphere.

pub mod gauss;
pub mod grid;
pub mod metric;
pub mod point;

pub use grid::{adapted_grid, log_sum_exp, make_grid, singular_grid, QuadratureGrid, SingularCenter};
pub use metric::{chart_log_jacobian, fs_log_density, Chart, ReferenceMetric};
pub use point::{apply_raw, mobius_apply, normalize, su2_rotation, Mat2, SpherePoint, C64};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// A point drawn from the normalized Fubini-Study measure.
pub fn random_point<R: Rng + ?Sized>(rng: &mut R) -> SpherePoint {
    // |z1|^2 is uniform on [0,1], the phase is uniform
    let u: f64 = rng.random();
    let psi: f64 = rng.random::<f64>() * 2.0 * std::f64::consts::PI;
    normalize(C64::new((1.0 - u).sqrt(), 0.0), C64::from_polar(u.sqrt(), psi))
        .expect("unit vector")
}

/// A random element of SL(2, C) with entries of order `scale`.
pub fn random_unimodular<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> Mat2 {
    loop {
        let mut e = || {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            C64::new(re, im) * scale
        };
        let g = Mat2::new(C64::new(1.0, 0.0) + e(), e(), e(), C64::new(1.0, 0.0) + e());
        let det = g.determinant();
        if det.norm() > 1e-3 {
            return g / det.sqrt();
        }
    }
}

/// A Haar-random element of SU(2).
pub fn random_su2<R: Rng + ?Sized>(rng: &mut R) -> Mat2 {
    let mut q = [0.0f64; 4];
    loop {
        for v in q.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
        let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            for v in q.iter_mut() {
                *v /= n;
            }
            break;
        }
    }
    let a = C64::new(q[0], q[1]);
    let b = C64::new(q[2], q[3]);
    Mat2::new(a, -b.conj(), b, a.conj())
}
