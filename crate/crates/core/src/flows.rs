//! Holomorphic vector fields on P^1, their Möbius flows and the induced
//! actions on sections, metrics and measures.
//!
//! A traceless matrix A = [[a, b], [c, -a]] acts on C^2 by the linear field
//! y -> A y; on the chart z = z1/z0 this is the field (c - 2a z - b z^2) d/dz.
//! As a section of -K_{P^1} = O(2) the field is the binary quadratic
//! det[y, A y] = c z0^2 - 2a z0 z1 - b z1^2. So z d/dz is diag(-1/2, 1/2)
//! and its flow is diag(e^{-tau/2}, e^{tau/2}), which sends z to e^tau z.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    apply_raw, make_grid, mobius_apply, normalize, singular_grid, Mat2, SingularCenter, SpherePoint,
    C64,
};
use crate::par::Execution;
use crate::sections::{
    kodaira_map, normalize_projective, projective_distance, symmetric_power, BinaryForm,
    Configuration, SectionSpace,
};

const TRACE_TOL: f64 = 1e-12;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// An element of sl(2, C), i.e. a holomorphic vector field on P^1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "[C64; 3]", from = "[C64; 3]")]
pub struct VectorFieldSL2 {
    a: Mat2,
}

impl From<[C64; 3]> for VectorFieldSL2 {
    fn from(p: [C64; 3]) -> Self {
        Self::from_chart(p)
    }
}

impl From<VectorFieldSL2> for [C64; 3] {
    fn from(v: VectorFieldSL2) -> Self {
        v.chart_polynomial()
    }
}

impl VectorFieldSL2 {
    pub fn new(a: Mat2) -> Result<Self> {
        let tr = a.trace().norm();
        if tr > TRACE_TOL {
            return Err(Error::InvalidParameter(format!("sl2 matrix has trace {tr:e}")));
        }
        Ok(Self { a })
    }

    /// The field (p0 + p1 z + p2 z^2) d/dz.
    pub fn from_chart(p: [C64; 3]) -> Self {
        let a = -p[1] * 0.5;
        Self {
            a: Mat2::new(a, -p[2], p[0], -a),
        }
    }

    pub fn zero() -> Self {
        Self::from_chart([c(0.0, 0.0); 3])
    }

    /// z d/dz.
    pub fn euler() -> Self {
        Self::from_chart([c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)])
    }

    /// d/dz.
    pub fn translation() -> Self {
        Self::from_chart([c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)])
    }

    /// z^2 d/dz.
    pub fn special_conformal() -> Self {
        Self::from_chart([c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)])
    }

    pub fn matrix(&self) -> Mat2 {
        self.a
    }

    /// Chart coefficients (p0, p1, p2) of (p0 + p1 z + p2 z^2) d/dz.
    pub fn chart_polynomial(&self) -> [C64; 3] {
        [self.a[(1, 0)], -self.a[(0, 0)] * 2.0, -self.a[(0, 1)]]
    }

    /// The field as a section of O(2): p0 z0^2 + p1 z0 z1 + p2 z1^2.
    pub fn as_section(&self) -> BinaryForm {
        BinaryForm::new(self.chart_polynomial().to_vec())
    }

    /// Value of the chart polynomial at z.
    pub fn eval_chart(&self, z: C64) -> C64 {
        let p = self.chart_polynomial();
        p[0] + z * (p[1] + z * p[2])
    }

    pub fn scaled(&self, s: C64) -> Self {
        Self { a: self.a * s }
    }

    pub fn is_zero(&self) -> bool {
        self.chart_polynomial().iter().all(|v| *v == c(0.0, 0.0))
    }

    /// Distinct projective zeros (empty for the zero field).
    pub fn zeros(&self) -> Vec<SpherePoint> {
        if self.is_zero() {
            return Vec::new();
        }
        self.as_section().zeros(1e-12).into_iter().map(|(p, _)| p).collect()
    }
}

/// True iff V vanishes at three or more distinct points. A nonzero binary
/// quadratic has at most two zeros, so this is the exact test V = 0.
pub fn three_zeros_vanish(v: &VectorFieldSL2) -> bool {
    v.is_zero()
}

/// A basis of the fields vanishing at every point of `points`.
pub fn vanishing_fields(points: &[SpherePoint]) -> Vec<VectorFieldSL2> {
    // rows: (z0^2, z0 z1, z1^2) at each point; kernel by SVD
    let rows = points.len().max(1);
    let mut m = DMatrix::from_element(rows.max(3), 3, c(0.0, 0.0));
    for (i, p) in points.iter().enumerate() {
        m[(i, 0)] = p.z0() * p.z0();
        m[(i, 1)] = p.z0() * p.z1();
        m[(i, 2)] = p.z1() * p.z1();
    }
    let svd = m.svd(false, true);
    let vt = svd.v_t.expect("requested");
    let smax = svd.singular_values.max().max(1e-300);
    (0..3)
        .filter(|&i| svd.singular_values[i] <= 1e-12 * smax.max(1.0))
        .map(|i| {
            let row = vt.row(i);
            VectorFieldSL2::from_chart([row[0].conj(), row[1].conj(), row[2].conj()])
        })
        .collect()
}

/// exp(tau A) by scaling and squaring with a Taylor kernel.
pub fn flow_matrix(v: &VectorFieldSL2, tau: C64) -> Mat2 {
    expm2(&(v.a * tau))
}

pub(crate) fn expm2(m: &Mat2) -> Mat2 {
    let norm = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut s = 0;
    let mut scaled = *m;
    if norm > 0.25 {
        s = (norm / 0.25).log2().ceil() as i32;
        scaled = m / C64::new(2f64.powi(s), 0.0);
    }
    let mut term = Mat2::identity();
    let mut acc = Mat2::identity();
    for n in 1..=18 {
        term = term * scaled / C64::new(n as f64, 0.0);
        acc += term;
    }
    for _ in 0..s {
        acc = acc * acc;
    }
    acc
}

/// A vector field together with its canonical lift to O(d).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiftedFlow {
    pub field: VectorFieldSL2,
    pub degree: usize,
}

impl LiftedFlow {
    pub fn new(field: VectorFieldSL2, degree: usize) -> Self {
        Self { field, degree }
    }

    /// The lift to -kK_{P^1} = O(2k).
    pub fn anticanonical(field: VectorFieldSL2, k: usize) -> Self {
        Self::new(field, 2 * k)
    }

    pub fn base(&self, tau: C64) -> Mat2 {
        flow_matrix(&self.field, tau)
    }

    /// Matrix P of the pullback s -> s o F_tau on coefficient vectors.
    pub fn section_matrix(&self, tau: C64) -> DMatrix<C64> {
        symmetric_power(&self.base(tau), self.degree).transpose()
    }

    /// Closed form of det P: (det g)^{d(d+1)/2}, identically 1 on sl(2).
    pub fn section_determinant(&self, tau: C64) -> C64 {
        let e = (self.degree * (self.degree + 1) / 2) as i32;
        self.base(tau).determinant().powi(e)
    }
}

/// (F_tau . s)(x) = s(F_tau x) on homogeneous coordinates.
pub fn act_on_section(flow: &LiftedFlow, tau: C64, s: &BinaryForm) -> Result<BinaryForm> {
    if s.degree() != flow.degree {
        return Err(Error::DegreeMismatch {
            expected: flow.degree,
            got: s.degree(),
        });
    }
    Ok(pullback_section(&flow.base(tau), s))
}

/// s -> s o g. This is a right action: pullback(g h) = pullback(h) o pullback(g).
pub fn pullback_section(g: &Mat2, s: &BinaryForm) -> BinaryForm {
    let m = symmetric_power(g, s.degree());
    let v = nalgebra::DVector::from_column_slice(&s.coeffs);
    BinaryForm::new((m.transpose() * v).iter().copied().collect())
}

/// Projective distance between Phi(g x) and Sym^d(g) Phi(x).
pub fn intertwining_residual(space: &SectionSpace, g: &Mat2, x: &SpherePoint) -> Result<f64> {
    let gx = mobius_apply(g, x)?;
    let lhs = kodaira_map(space, &gx);
    let m = symmetric_power(g, space.degree());
    let v = nalgebra::DVector::from_vec(kodaira_map(space, x));
    let rhs = normalize_projective((m * v).iter().copied().collect());
    Ok(projective_distance(&lhs, &rhs))
}

/// |log rho(g x) + log Jac_g(x) - log rho(x)| for the density rho of
/// mu^(N_k) on bare P^1 relative to the Fubini-Study product measure.
/// The FS area form pulls back under unimodular g with factor |g x_hat|^{-4}.
pub fn mu_invariance_test(k: u32, g: &Mat2, config: &Configuration) -> Result<f64> {
    let space = SectionSpace::anticanonical(k);
    if config.len() != space.dimension() {
        return Err(Error::DimensionMismatch {
            expected: space.dimension(),
            got: config.len(),
        });
    }
    let moved = config.transformed(g);
    if (g.determinant() - c(1.0, 0.0)).norm() >= 1e-10 {
        return Err(Error::NotUnimodular((g.determinant() - c(1.0, 0.0)).norm()));
    }
    let log_rho = |cfg: &Configuration| -> Result<f64> {
        let mut acc = 0.0;
        for i in 0..cfg.len() {
            for j in 0..i {
                let d = cfg.points[i].chordal(&cfg.points[j]);
                if d == 0.0 {
                    return Err(Error::OnSingularLocus(format!("x_{j} = x_{i}")));
                }
                acc -= (2.0 / k as f64) * d.ln();
            }
        }
        Ok(acc)
    };
    let jac: f64 = config
        .points
        .iter()
        .map(|p| {
            let [a, b] = apply_raw(g, p);
            -2.0 * (a.norm_sqr() + b.norm_sqr()).ln()
        })
        .sum();
    Ok((log_rho(&moved)? + jac - log_rho(config)?).abs())
}

/// A metric phi on -K_{P^1}, through the measure e^{-phi} relative to the
/// Fubini-Study area form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NMetric {
    FubiniStudy,
    /// e^{-phi} = prod_a chordal(x, p_a)^{-2 w_a} times the FS area form.
    Weighted {
        points: Vec<SpherePoint>,
        weights: Vec<f64>,
    },
    /// e^{-phi} = |z0 z1|^{-2} times the FS area form.
    Toric,
}

impl NMetric {
    fn singularities(&self) -> Vec<(SpherePoint, f64)> {
        match self {
            NMetric::FubiniStudy => Vec::new(),
            NMetric::Weighted { points, weights } => {
                points.iter().copied().zip(weights.iter().copied()).collect()
            }
            NMetric::Toric => vec![(SpherePoint::zero(), 1.0), (SpherePoint::infinity(), 1.0)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NEpsilon {
    Finite(f64),
    /// Truncated integrals over chordal(x, p) > delta kept growing.
    Divergent { truncated: Vec<f64> },
}

impl NEpsilon {
    pub fn value(&self) -> Option<f64> {
        match self {
            NEpsilon::Finite(v) => Some(*v),
            NEpsilon::Divergent { .. } => None,
        }
    }

    pub fn is_divergent(&self) -> bool {
        matches!(self, NEpsilon::Divergent { .. })
    }
}

const N_EPS_CUTOFFS: [f64; 5] = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6];
const N_EPS_RATIO: f64 = 0.9;

/// (int_X (|s|^2 e^{-k phi})^{eps/k} e^{-phi})^{k / (2 eps)} for a section s
/// of -kK (degree 2k).
pub fn n_epsilon(
    s: &BinaryForm,
    epsilon: f64,
    metric: &NMetric,
    resolution: usize,
    exec: Execution,
) -> Result<NEpsilon> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
    }
    let d = s.degree();
    if d == 0 || d % 2 != 0 {
        return Err(Error::DegreeMismatch {
            expected: 2 * (d / 2).max(1),
            got: d,
        });
    }
    let k = (d / 2) as f64;
    let sing = metric.singularities();
    let p_exp = epsilon / k;
    let integrand = |x: &SpherePoint| -> f64 {
        let mut log = p_exp * s.eval(x).norm_sqr().ln();
        for (p, w) in &sing {
            log -= 2.0 * w * (1.0 + epsilon) * x.chordal(p).ln();
        }
        log.exp()
    };
    if !sing.is_empty() {
        let centers: Vec<SingularCenter> = sing
            .iter()
            .map(|(p, w)| SingularCenter {
                point: *p,
                exponent: 2.0 * w * (1.0 + epsilon),
            })
            .collect();
        let truncated = N_EPS_CUTOFFS
            .iter()
            .map(|&delta| Ok(singular_grid(&centers, resolution, Some(delta))?.integrate(exec, integrand)))
            .collect::<Result<Vec<f64>>>()?;
        let inc: Vec<f64> = truncated.windows(2).map(|w| w[1] - w[0]).collect();
        let last = inc[inc.len() - 1];
        let prev = inc[inc.len() - 2];
        let scale = truncated[truncated.len() - 1].abs().max(1e-300);
        if last > 1e-12 * scale && last > N_EPS_RATIO * prev {
            return Ok(NEpsilon::Divergent { truncated });
        }
    }
    let mut centers: Vec<SingularCenter> = sing
        .iter()
        .map(|(p, w)| SingularCenter {
            point: *p,
            exponent: 2.0 * w * (1.0 + epsilon),
        })
        .collect();
    let grid = if centers.is_empty() && (p_exp.fract() == 0.0) {
        make_grid(resolution)?
    } else {
        for (z, m) in s.zeros(1e-6) {
            if centers.iter().all(|c| c.point.chordal(&z) > 1e-9) {
                centers.push(SingularCenter {
                    point: z,
                    exponent: -2.0 * m as f64 * p_exp,
                });
            }
        }
        singular_grid(&centers, resolution, None)?
    };
    let integral = grid.integrate(exec, integrand);
    if !(integral > 0.0) || !integral.is_finite() {
        return Err(Error::QuadratureUnderflow);
    }
    Ok(NEpsilon::Finite(integral.powf(k / (2.0 * epsilon))))
}

/// First-order jet v + d eps (eps^2 = 0) over C. This is the exact limit
/// of complex-step differentiation; a literal imaginary step cannot be used
/// because chart coordinates are already complex.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Jet {
    v: C64,
    d: C64,
}

impl Jet {
    fn constant(v: C64) -> Self {
        Self { v, d: c(0.0, 0.0) }
    }

    fn ln(self) -> Self {
        Self {
            v: self.v.ln(),
            d: self.d / self.v,
        }
    }

    fn scale(self, s: f64) -> Self {
        Self {
            v: self.v * s,
            d: self.d * s,
        }
    }
}

impl std::ops::Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        Jet {
            v: self.v + o.v,
            d: self.d + o.d,
        }
    }
}

impl std::ops::Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        Jet {
            v: self.v - o.v,
            d: self.d - o.d,
        }
    }
}

impl std::ops::Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        Jet {
            v: self.v * o.v,
            d: self.d * o.v + self.v * o.d,
        }
    }
}

impl std::ops::Div for Jet {
    type Output = Jet;
    fn div(self, o: Jet) -> Jet {
        Jet {
            v: self.v / o.v,
            d: (self.d * o.v - self.v * o.d) / (o.v * o.v),
        }
    }
}

/// A smooth metric on O(d), described by its weight in the chart z0 != 0
/// extended holomorphically in (z, w = conj z).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SmoothMetric {
    /// d log(1 + |z|^2).
    FubiniStudy { degree: usize },
    /// d log(1 + |z|^2) + amplitude * f, with f one of the Cartesian
    /// coordinates x1, x2, x3 of the unit sphere.
    Perturbed {
        degree: usize,
        amplitude: f64,
        axis: usize,
    },
}

impl SmoothMetric {
    pub fn degree(&self) -> usize {
        match *self {
            SmoothMetric::FubiniStudy { degree } | SmoothMetric::Perturbed { degree, .. } => degree,
        }
    }

    /// phi(z, w); phi(z, conj z) is the real weight.
    pub fn weight(&self, z: C64, w: C64) -> C64 {
        self.weight_jet(Jet::constant(z), Jet::constant(w)).v
    }

    fn weight_jet(&self, z: Jet, w: Jet) -> Jet {
        let one = Jet::constant(c(1.0, 0.0));
        let zw = z * w;
        let fs = (one + zw).ln().scale(self.degree() as f64);
        match *self {
            SmoothMetric::FubiniStudy { .. } => fs,
            SmoothMetric::Perturbed { amplitude, axis, .. } => {
                let f = match axis {
                    0 => (z + w) / (one + zw),
                    1 => (z - w) / (Jet::constant(c(0.0, 1.0)) * (one + zw)),
                    _ => (zw - one) / (zw + one),
                };
                fs + f.scale(amplitude)
            }
        }
    }

    /// d^2 phi / dz dzbar by a holomorphic central difference in (z, w).
    pub fn ddbar(&self, z: C64) -> f64 {
        let h = 1e-4;
        let w = z.conj();
        let hz = c(h, 0.0);
        let v = self.weight(z + hz, w + hz) - self.weight(z + hz, w - hz)
            - self.weight(z - hz, w + hz)
            + self.weight(z - hz, w - hz);
        (v / (4.0 * h * h)).re
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hamiltonian {
    /// Chart coordinates of the lattice nodes, row-major.
    pub nodes: Vec<C64>,
    pub h: Vec<C64>,
    /// max over lattice nodes with |z| <= 1 of |dh/dzbar - v d^2phi/dz dzbar|.
    pub residual: f64,
    pub max_imag: f64,
}

/// d/dt at t = 0 of the pulled-back weight under exp(t B), B in {A, iA}.
/// For real t the conjugate variable follows exp(t conj B).
fn pullback_weight_derivative(b: &Mat2, phi: &SmoothMetric, z: C64) -> f64 {
    let d = phi.degree() as f64;
    let entry = |m: &Mat2, i: usize, j: usize| Jet {
        v: if i == j { c(1.0, 0.0) } else { c(0.0, 0.0) },
        d: m[(i, j)],
    };
    let bbar = b.map(|x| x.conj());
    let zj = Jet::constant(z);
    let wj = Jet::constant(z.conj());
    let den = entry(b, 0, 0) + entry(b, 0, 1) * zj;
    let denb = entry(&bbar, 0, 0) + entry(&bbar, 0, 1) * wj;
    let zt = (entry(b, 1, 0) + entry(b, 1, 1) * zj) / den;
    let wt = (entry(&bbar, 1, 0) + entry(&bbar, 1, 1) * wj) / denb;
    let f = phi.weight_jet(zt, wt) + (den.ln() + denb.ln()).scale(d);
    f.d.re
}

/// h = d/dtau (F_tau)^* phi at tau = 0 on a lattice of spacing 1/resolution
/// over the square |Re z|, |Im z| <= 1 of the chart z0 != 0. The pulled-back
/// weight is phi(F z) + d log|g00 + g01 z|^2. The residual is taken over the
/// unit disc, the part of the sphere this chart is responsible for.
pub fn hamiltonian(v: &VectorFieldSL2, phi: &SmoothMetric, resolution: usize) -> Result<Hamiltonian> {
    if resolution < 4 {
        return Err(Error::InvalidParameter(format!("resolution must be >= 4, got {resolution}")));
    }
    let a = v.matrix();
    let ia = a * c(0.0, 1.0);
    let n = 2 * resolution + 1;
    let step = 1.0 / resolution as f64;
    let mut nodes = Vec::with_capacity(n * n);
    let mut h = Vec::with_capacity(n * n);
    for iy in 0..n {
        for ix in 0..n {
            let z = c(-1.0 + ix as f64 * step, -1.0 + iy as f64 * step);
            let dre = pullback_weight_derivative(&a, phi, z);
            let dim = pullback_weight_derivative(&ia, phi, z);
            let val = c(dre, -dim) * 0.5;
            if !val.re.is_finite() || !val.im.is_finite() {
                return Err(Error::NonSmoothMetric(format!("non-finite derivative at z = {z}")));
            }
            nodes.push(z);
            h.push(val);
        }
    }
    let mut residual = 0.0f64;
    for iy in 1..n - 1 {
        for ix in 1..n - 1 {
            let i = iy * n + ix;
            if nodes[i].norm() > 1.0 {
                continue;
            }
            let hx = (h[i + 1] - h[i - 1]) / (2.0 * step);
            let hy = (h[i + n] - h[i - n]) / (2.0 * step);
            let dzbar = (hx + c(0.0, 1.0) * hy) * 0.5;
            let z = nodes[i];
            let target = v.eval_chart(z) * phi.ddbar(z);
            residual = residual.max((dzbar - target).norm());
        }
    }
    let max_imag = h.iter().map(|x| x.im.abs()).fold(0.0, f64::max);
    Ok(Hamiltonian {
        nodes,
        h,
        residual,
        max_imag,
    })
}

/// The point F_tau(x) for the flow of `v`.
pub fn flow_point(v: &VectorFieldSL2, tau: C64, x: &SpherePoint) -> SpherePoint {
    let [a, b] = apply_raw(&flow_matrix(v, tau), x);
    normalize(a, b).expect("invertible image")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{random_point, random_su2, random_unimodular};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn chart_matrix_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let g = random_unimodular(&mut rng, 1.0);
            let a = g - Mat2::identity() * (g.trace() * 0.5);
            let v = VectorFieldSL2::new(a).unwrap();
            let back = VectorFieldSL2::from_chart(v.chart_polynomial());
            assert!((back.matrix() - a).norm() < 1e-12);
        }
        assert!(VectorFieldSL2::new(Mat2::identity()).is_err());
    }

    #[test]
    fn euler_flow_is_dilation() {
        let v = VectorFieldSL2::euler();
        let tau = c(0.7, 0.3);
        let g = flow_matrix(&v, tau);
        let expect = Mat2::new((-tau * 0.5).exp(), c(0.0, 0.0), c(0.0, 0.0), (tau * 0.5).exp());
        assert!((g - expect).norm() < 1e-14);
        let z = c(0.4, -0.2);
        let fz = flow_point(&v, tau, &SpherePoint::from_chart(z)).chart().unwrap();
        assert!((fz - tau.exp() * z).norm() < 1e-13);
        assert!((flow_matrix(&v, c(0.0, 0.0)) - Mat2::identity()).norm() == 0.0);
    }

    #[test]
    fn flow_derivative_is_the_field() {
        let v = VectorFieldSL2::from_chart([c(0.3, 0.1), c(-0.5, 0.2), c(0.7, -0.4)]);
        for z in [c(0.2, 0.1), c(-0.6, 0.5)] {
            for h in [c(1e-8, 0.0), c(0.0, 1e-8)] {
                let fz = flow_point(&v, h, &SpherePoint::from_chart(z)).chart().unwrap();
                assert!(((fz - z) / h - v.eval_chart(z)).norm() < 1e-6);
            }
        }
    }

    #[test]
    fn closed_form_exponential() {
        let v = VectorFieldSL2::from_chart([c(1.3, 0.1), c(-0.5, 2.2), c(0.7, -0.4)]);
        let tau = c(1.5, -0.8);
        let m = v.matrix() * tau;
        let mu = (-m.determinant()).sqrt();
        let expect = Mat2::identity() * mu.cosh() + m * (mu.sinh() / mu);
        assert!((flow_matrix(&v, tau) - expect).norm() < 1e-11 * expect.norm());
    }

    #[test]
    fn group_law_and_determinant() {
        let v = VectorFieldSL2::from_chart([c(0.3, 0.1), c(-0.5, 0.2), c(0.7, -0.4)]);
        let f = LiftedFlow::anticanonical(v, 2);
        let (t, s) = (c(0.4, 0.2), c(-0.3, 0.5));
        let lhs = f.base(t + s);
        assert!((lhs - f.base(t) * f.base(s)).norm() < 1e-10);
        let p = f.section_matrix(t + s);
        let q = f.section_matrix(t) * f.section_matrix(s);
        assert!((&p - &q).norm() < 1e-10 * (1.0 + q.norm()));
        let det = f.section_matrix(t).determinant();
        assert!((det - f.section_determinant(t)).norm() < 1e-10);
        assert!((det - c(1.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn euler_acts_diagonally_with_torus_characters() {
        let f = LiftedFlow::anticanonical(VectorFieldSL2::euler(), 1);
        let tau = c(0.3, 0.0);
        let p = f.section_matrix(tau);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { (tau * (i as f64 - 1.0)).exp() } else { c(0.0, 0.0) };
                assert!((p[(i, j)] - expect).norm() < 1e-14);
            }
        }
        let s = act_on_section(&f, tau, &BinaryForm::toric()).unwrap();
        assert!((s.coeffs[1] - c(1.0, 0.0)).norm() < 1e-14);
        assert!(act_on_section(&f, tau, &BinaryForm::new(vec![c(1.0, 0.0); 4])).is_err());
    }

    #[test]
    fn point_evaluation_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v = VectorFieldSL2::from_chart([c(0.3, 0.1), c(-0.5, 0.2), c(0.7, -0.4)]);
        let f = LiftedFlow::anticanonical(v, 2);
        let s = BinaryForm::new((0..5).map(|i| c(i as f64 - 1.5, 0.5 * i as f64)).collect());
        let tau = c(0.6, -0.2);
        let fs = act_on_section(&f, tau, &s).unwrap();
        for _ in 0..10 {
            let x = random_point(&mut rng);
            let [a, b] = apply_raw(&f.base(tau), &x);
            let lhs = fs.eval(&x);
            let rhs = s.eval_homogeneous(a, b);
            assert!((lhs - rhs).norm() < 1e-12 * (1.0 + rhs.norm()));
        }
    }

    #[test]
    fn intertwining_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let space = SectionSpace::anticanonical(3);
        for _ in 0..100 {
            let g = random_unimodular(&mut rng, 0.5);
            let x = random_point(&mut rng);
            assert!(intertwining_residual(&space, &g, &x).unwrap() < 1e-10);
        }
    }

    #[test]
    fn three_zeros() {
        let pts = [SpherePoint::zero(), SpherePoint::from_chart(c(1.0, 0.0)), SpherePoint::infinity()];
        assert!(vanishing_fields(&pts).is_empty());
        let two = vanishing_fields(&pts[..2]);
        assert_eq!(two.len(), 1);
        assert!(!three_zeros_vanish(&two[0]));
        assert_eq!(VectorFieldSL2::euler().zeros().len(), 2);
        assert!(three_zeros_vanish(&VectorFieldSL2::zero()));
    }

    #[test]
    fn mu_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = Configuration::new((0..3).map(|_| random_point(&mut rng)).collect());
        assert!(mu_invariance_test(1, &Mat2::identity(), &cfg).unwrap() < 1e-14);
        let u = random_su2(&mut rng);
        assert!(mu_invariance_test(1, &u, &cfg).unwrap() < 1e-8);
        let g = random_unimodular(&mut rng, 0.7);
        assert!(mu_invariance_test(1, &g, &cfg).unwrap() < 1e-8);
    }

    #[test]
    fn n_epsilon_examples() {
        let s = BinaryForm::from_roots(&[
            (SpherePoint::from_chart(c(0.3, 0.2)), 1),
            (SpherePoint::from_chart(c(-1.1, 0.4)), 1),
        ]);
        let fs = NMetric::FubiniStudy;
        let a = n_epsilon(&s, 1.0, &fs, 32, Execution::Sequential).unwrap().value().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rotated = pullback_section(&random_su2(&mut rng), &s);
        let b = n_epsilon(&rotated, 1.0, &fs, 32, Execution::Sequential).unwrap().value().unwrap();
        assert!((a - b).abs() < 1e-8 * a);
        let two = n_epsilon(&s.scaled(c(2.0, 0.0)), 1.0, &fs, 32, Execution::Sequential)
            .unwrap()
            .value()
            .unwrap();
        assert!((two / a - 2.0).abs() < 1e-10);
        let t = n_epsilon(&s, 0.5, &NMetric::Toric, 32, Execution::Sequential).unwrap();
        assert!(t.is_divergent());
        let w = NMetric::Weighted {
            points: vec![SpherePoint::zero()],
            weights: vec![0.3],
        };
        assert!(!n_epsilon(&s, 0.5, &w, 32, Execution::Sequential).unwrap().is_divergent());
    }

    #[test]
    fn hamiltonian_identity() {
        let fs = SmoothMetric::FubiniStudy { degree: 2 };
        let h0 = hamiltonian(&VectorFieldSL2::zero(), &fs, 16).unwrap();
        assert!(h0.h.iter().all(|v| v.norm() == 0.0));
        let e = hamiltonian(&VectorFieldSL2::euler(), &fs, 64).unwrap();
        assert!(e.max_imag < 1e-10, "{}", e.max_imag);
        for (z, h) in e.nodes.iter().zip(&e.h) {
            let expect = 2.0 * z.norm_sqr() / (1.0 + z.norm_sqr()) - 1.0;
            assert!((h.re - expect).abs() < 1e-10, "{z} {h} {expect}");
        }
        assert!(e.residual < 1e-3);
    }
}
