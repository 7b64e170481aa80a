//! Section spaces H^0(P^1, O(d)) in the monomial basis, Slater determinants
//! and Kodaira maps.
//!
//! The basis is e_j = z0^{d-j} z1^j, j = 0..d. A point is always evaluated
//! at its unit homogeneous representative, so |s(x_hat)| is the pointwise
//! Fubini-Study norm of s and the Slater determinant
//! det[e_i(x_j)] = prod_{i<j} (z0_i z1_j - z1_i z0_j) has norm
//! prod_{i<j} chordal(x_i, x_j).

use std::ops::{Div, Mul};

use nalgebra::DMatrix;
use num_rational::Rational64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{apply_raw, normalize, Mat2, ReferenceMetric, SpherePoint, C64};
use crate::pair::{dimension, LogPairCurve};

/// H^0(X, -k(K_X + Delta)) on a genus-0 pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionSpace {
    level: Rational64,
    degree: usize,
    pair: LogPairCurve,
}

impl SectionSpace {
    pub fn new(pair: LogPairCurve, k: Rational64) -> Result<Self> {
        if pair.genus() != 0 {
            return Err(Error::WrongGenus {
                expected: 0,
                got: pair.genus(),
            });
        }
        let n = dimension(&pair, k)?;
        Ok(Self {
            level: k,
            degree: n - 1,
            pair,
        })
    }

    /// -kK on bare P^1, degree 2k.
    pub fn anticanonical(k: u32) -> Self {
        Self::new(LogPairCurve::bare(), Rational64::from_integer(k as i64))
            .expect("2k is a nonnegative integer")
    }

    /// O(d) on bare P^1, viewed as level d/2.
    pub fn of_degree(d: usize) -> Self {
        // d = 0 has no positive level; it is kept at level 1/2 as a constant bundle
        Self {
            level: Rational64::new(d.max(1) as i64, 2),
            degree: d,
            pair: LogPairCurve::bare(),
        }
    }

    pub fn level(&self) -> Rational64 {
        self.level
    }

    pub fn level_f64(&self) -> f64 {
        crate::pair::rational_to_f64(&self.level)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dimension(&self) -> usize {
        self.degree + 1
    }

    pub fn pair(&self) -> &LogPairCurve {
        &self.pair
    }

    pub fn metric(&self) -> ReferenceMetric {
        ReferenceMetric::new(self.degree as u32)
    }

    /// (e_0(x), ..., e_d(x)) at the unit representative of `p`.
    pub fn evaluate_basis(&self, p: &SpherePoint) -> Vec<C64> {
        eval_monomials(self.degree, p.z0(), p.z1())
    }
}

pub(crate) fn eval_monomials(d: usize, z0: C64, z1: C64) -> Vec<C64> {
    let mut p0 = vec![C64::new(1.0, 0.0); d + 1];
    let mut p1 = vec![C64::new(1.0, 0.0); d + 1];
    for j in 1..=d {
        p0[j] = p0[j - 1] * z0;
        p1[j] = p1[j - 1] * z1;
    }
    (0..=d).map(|j| p0[d - j] * p1[j]).collect()
}

/// An ordered tuple of points (x_1, ..., x_N).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub points: Vec<SpherePoint>,
}

impl Configuration {
    pub fn new(points: Vec<SpherePoint>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The configuration (x_{perm[0]}, ..., x_{perm[N-1]}).
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self::new(perm.iter().map(|&i| self.points[i]).collect())
    }

    /// Diagonal action of `g` (no unimodularity check).
    pub fn transformed(&self, g: &Mat2) -> Self {
        Self::new(
            self.points
                .iter()
                .map(|p| {
                    let [a, b] = apply_raw(g, p);
                    normalize(a, b).expect("invertible matrix")
                })
                .collect(),
        )
    }

    /// Whether two points coincide exactly.
    pub fn has_collision(&self) -> bool {
        let n = self.points.len();
        (0..n).any(|i| (0..i).any(|j| self.points[i].coincides(&self.points[j])))
    }

    fn check_len(&self, space: &SectionSpace) -> Result<()> {
        if self.len() != space.dimension() {
            return Err(Error::DimensionMismatch {
                expected: space.dimension(),
                got: self.len(),
            });
        }
        Ok(())
    }
}

/// A nonnegative number kept as its logarithm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogValue {
    pub log_abs: f64,
    pub is_zero: bool,
}

impl LogValue {
    pub fn from_log(log_abs: f64) -> Self {
        Self {
            log_abs,
            is_zero: false,
        }
    }

    pub fn zero() -> Self {
        Self {
            log_abs: f64::NEG_INFINITY,
            is_zero: true,
        }
    }

    pub fn one() -> Self {
        Self::from_log(0.0)
    }

    /// log|x|, -inf when zero.
    pub fn ln(&self) -> f64 {
        if self.is_zero {
            f64::NEG_INFINITY
        } else {
            self.log_abs
        }
    }

    pub fn powf(self, e: f64) -> Self {
        if self.is_zero {
            self
        } else {
            Self::from_log(self.log_abs * e)
        }
    }
}

impl Mul for LogValue {
    type Output = LogValue;
    fn mul(self, rhs: LogValue) -> LogValue {
        if self.is_zero || rhs.is_zero {
            LogValue::zero()
        } else {
            LogValue::from_log(self.log_abs + rhs.log_abs)
        }
    }
}

impl Div for LogValue {
    type Output = LogValue;
    /// Division by a zero value keeps the zero flag of the numerator only;
    /// callers must not divide by zero.
    fn div(self, rhs: LogValue) -> LogValue {
        if self.is_zero {
            LogValue::zero()
        } else {
            LogValue::from_log(self.log_abs - rhs.log_abs)
        }
    }
}

/// log|det m| by partial-pivot LU; `None` for an exactly singular matrix.
pub fn log_abs_det(m: DMatrix<C64>) -> Option<f64> {
    let n = m.nrows();
    let lu = m.lu();
    let u = lu.u();
    let mut acc = 0.0;
    for i in 0..n {
        let v = u[(i, i)].norm();
        if v == 0.0 {
            return None;
        }
        acc += v.ln();
    }
    Some(acc)
}

/// The N x N matrix M_ij = e_i(x_j).
pub fn slater_matrix(space: &SectionSpace, config: &Configuration) -> Result<DMatrix<C64>> {
    config.check_len(space)?;
    let n = space.dimension();
    let cols: Vec<Vec<C64>> = config.points.iter().map(|p| space.evaluate_basis(p)).collect();
    Ok(DMatrix::from_fn(n, n, |i, j| cols[j][i]))
}

/// log ||det S|| in the metric of `metric` (which must have the degree of
/// `space`), evaluated by column-scaled LU.
pub fn slater_log(
    space: &SectionSpace,
    config: &Configuration,
    metric: &ReferenceMetric,
) -> Result<LogValue> {
    if metric.degree as usize != space.degree() {
        return Err(Error::DegreeMismatch {
            expected: space.degree(),
            got: metric.degree as usize,
        });
    }
    slater_log_lu(space, config)
}

/// LU path: extract the max modulus of each column, then factorize.
pub fn slater_log_lu(space: &SectionSpace, config: &Configuration) -> Result<LogValue> {
    let mut m = slater_matrix(space, config)?;
    if config.has_collision() {
        return Ok(LogValue::zero());
    }
    let mut scale = 0.0;
    for mut col in m.column_iter_mut() {
        let mx = col.iter().map(|z| z.norm()).fold(0.0, f64::max);
        scale += mx.ln();
        col /= C64::new(mx, 0.0);
    }
    match log_abs_det(m) {
        Some(l) => Ok(LogValue::from_log(scale + l)),
        // cancellation below the pivot threshold; the product formula is exact here
        None => slater_log_vandermonde(space, config),
    }
}

/// Product path: sum_{i<j} log chordal(x_i, x_j).
pub fn slater_log_vandermonde(space: &SectionSpace, config: &Configuration) -> Result<LogValue> {
    config.check_len(space)?;
    let pts = &config.points;
    let mut acc = 0.0;
    for j in 0..pts.len() {
        for i in 0..j {
            let c = pts[i].chordal(&pts[j]);
            if c == 0.0 {
                return Ok(LogValue::zero());
            }
            acc += c.ln();
        }
    }
    Ok(LogValue::from_log(acc))
}

/// Complex determinant det[e_i(x_j)] (small N only; no scaling).
pub fn slater_det(space: &SectionSpace, config: &Configuration) -> Result<C64> {
    Ok(slater_matrix(space, config)?.determinant())
}

/// |log|det S_A| - log|det S| - log|det A||, with S_A built from the basis
/// s_i = sum_j A_ij e_j.
pub fn basis_change_law(
    space: &SectionSpace,
    a: &DMatrix<C64>,
    config: &Configuration,
) -> Result<f64> {
    let n = space.dimension();
    if a.nrows() != n || a.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: a.nrows(),
        });
    }
    let amax = a.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let log_det_a = match log_abs_det(a.clone()) {
        Some(l) if amax > 0.0 && l > (n as f64) * (amax.ln() + (1e-13f64).ln()) => l,
        _ => return Err(Error::SingularMatrix),
    };
    let base = slater_log_lu(space, config)?;
    let m = slater_matrix(space, config)?;
    let transformed = log_abs_det(a * m);
    match (base.is_zero, transformed) {
        (true, _) | (_, None) => Ok(0.0),
        (false, Some(t)) => Ok((t - base.log_abs - log_det_a).abs()),
    }
}

/// Matrix of the substitution x -> g x on binary d-forms:
/// e_j(g x) = sum_l M_jl e_l(x). The map g -> M is a homomorphism and
/// det M = (det g)^{d(d+1)/2}.
pub fn symmetric_power(g: &Mat2, d: usize) -> DMatrix<C64> {
    let (a, b, c, e) = (g[(0, 0)], g[(0, 1)], g[(1, 0)], g[(1, 1)]);
    // dehomogenize at x0 = 1: e_j(g x) = (a + b t)^{d-j} (c + e t)^j
    let pow = |lin: [C64; 2], n: usize| -> Vec<C64> {
        let mut p = vec![C64::new(1.0, 0.0)];
        for _ in 0..n {
            let mut q = vec![C64::new(0.0, 0.0); p.len() + 1];
            for (i, v) in p.iter().enumerate() {
                q[i] += v * lin[0];
                q[i + 1] += v * lin[1];
            }
            p = q;
        }
        p
    };
    let mut m = DMatrix::from_element(d + 1, d + 1, C64::new(0.0, 0.0));
    for j in 0..=d {
        let p = pow([a, b], d - j);
        let q = pow([c, e], j);
        for (i, u) in p.iter().enumerate() {
            for (l, v) in q.iter().enumerate() {
                m[(j, i + l)] += u * v;
            }
        }
    }
    m
}

/// -d sum_i log|g x_hat_i|: the predicted change of log||det S|| under the
/// diagonal action of a unimodular g.
pub fn diagonal_equivariance_correction(
    space: &SectionSpace,
    g: &Mat2,
    config: &Configuration,
) -> f64 {
    let d = space.degree() as f64;
    -d * config
        .points
        .iter()
        .map(|p| {
            let [a, b] = apply_raw(g, p);
            (a.norm_sqr() + b.norm_sqr()).sqrt().ln()
        })
        .sum::<f64>()
}

/// |log||det S||(g x) - log||det S||(x) - correction| for unimodular g.
pub fn diagonal_equivariance_residual(
    space: &SectionSpace,
    g: &Mat2,
    config: &Configuration,
) -> Result<f64> {
    crate::geometry::mobius_apply(g, &SpherePoint::zero())?;
    let before = slater_log_lu(space, config)?;
    let after = slater_log_lu(space, &config.transformed(g))?;
    if before.is_zero != after.is_zero {
        return Ok(f64::INFINITY);
    }
    if before.is_zero {
        return Ok(0.0);
    }
    let corr = diagonal_equivariance_correction(space, g, config);
    Ok((after.log_abs - before.log_abs - corr).abs())
}

/// Veronese image [e_0(x) : ... : e_d(x)], unit norm with the
/// largest-modulus coordinate real positive.
pub fn kodaira_map(space: &SectionSpace, p: &SpherePoint) -> Vec<C64> {
    normalize_projective(space.evaluate_basis(p))
}

/// Unit representative of a projective vector, phase fixed on the first
/// coordinate of maximal modulus.
pub fn normalize_projective(v: Vec<C64>) -> Vec<C64> {
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let mut best = 0;
    for (i, z) in v.iter().enumerate() {
        if z.norm() > v[best].norm() * (1.0 + 1e-12) {
            best = i;
        }
    }
    let phase = v[best].conj() / v[best].norm();
    v.into_iter().map(|z| z * phase / norm).collect()
}

/// Sine of the angle between the lines of unit vectors u and v, from the
/// Plücker coordinates u_i v_j - u_j v_i (accurate near zero).
pub fn projective_distance(u: &[C64], v: &[C64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..u.len() {
        for j in 0..i {
            acc += (u[i] * v[j] - u[j] * v[i]).norm_sqr();
        }
    }
    acc.sqrt()
}

/// A section sum_j c_j e_j of O(d), stored by its monomial coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryForm {
    pub coeffs: Vec<C64>,
}

impl BinaryForm {
    pub fn new(coeffs: Vec<C64>) -> Self {
        assert!(!coeffs.is_empty(), "a binary form has at least one coefficient");
        Self { coeffs }
    }

    /// prod_r (cross(x, r))^{m_r}: the form with the given zeros.
    pub fn from_roots(roots: &[(SpherePoint, usize)]) -> Self {
        // cross(x, r) = x0 r1 - x1 r0 has coefficients (r1, -r0)
        let mut c = vec![C64::new(1.0, 0.0)];
        for (r, m) in roots {
            for _ in 0..*m {
                let mut next = vec![C64::new(0.0, 0.0); c.len() + 1];
                for (j, v) in c.iter().enumerate() {
                    next[j] += v * r.z1();
                    next[j + 1] -= v * r.z0();
                }
                c = next;
            }
        }
        Self::new(c)
    }

    /// The anticanonical section z0 z1 (zeros 0 and infinity).
    pub fn toric() -> Self {
        Self::new(vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 0.0)])
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn scaled(&self, c: C64) -> Self {
        Self::new(self.coeffs.iter().map(|v| v * c).collect())
    }

    /// s(x_hat) at the unit representative; |s(x_hat)| is the pointwise FS norm.
    pub fn eval(&self, p: &SpherePoint) -> C64 {
        self.eval_homogeneous(p.z0(), p.z1())
    }

    pub fn eval_homogeneous(&self, z0: C64, z1: C64) -> C64 {
        eval_monomials(self.degree(), z0, z1)
            .iter()
            .zip(&self.coeffs)
            .map(|(e, c)| e * c)
            .sum()
    }

    /// Zeros with multiplicities; roots closer than `cluster_tol` (chordal)
    /// are merged into one zero at their centroid.
    pub fn zeros(&self, cluster_tol: f64) -> Vec<(SpherePoint, usize)> {
        let d = self.degree();
        let scale = self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if scale == 0.0 {
            return Vec::new();
        }
        let small = |c: &C64| c.norm() <= 1e-14 * scale;
        // zeros at infinity = vanishing leading coefficients in z
        let at_inf = self.coeffs.iter().rev().take_while(|c| small(c)).count();
        let top = d - at_inf;
        let mut out = Vec::new();
        if at_inf > 0 {
            out.push((SpherePoint::infinity(), at_inf));
        }
        if top == 0 {
            return out;
        }
        let poly: Vec<C64> = self.coeffs[..=top].to_vec();
        let roots = polynomial_roots(&poly);
        let mut used = vec![false; roots.len()];
        for i in 0..roots.len() {
            if used[i] {
                continue;
            }
            let pi = SpherePoint::from_chart(roots[i]);
            let mut members = vec![roots[i]];
            used[i] = true;
            for j in i + 1..roots.len() {
                if !used[j] && SpherePoint::from_chart(roots[j]).chordal(&pi) < cluster_tol {
                    used[j] = true;
                    members.push(roots[j]);
                }
            }
            let m = members.len();
            let centroid = members.iter().sum::<C64>() / m as f64;
            out.push((SpherePoint::from_chart(centroid), m));
        }
        out
    }
}

/// Roots of sum_j c_j z^j (c_last != 0) by Durand-Kerner iteration.
pub fn polynomial_roots(c: &[C64]) -> Vec<C64> {
    let n = c.len() - 1;
    if n == 0 {
        return Vec::new();
    }
    let lead = c[n];
    let monic: Vec<C64> = c.iter().map(|v| v / lead).collect();
    let eval = |z: C64| monic.iter().rev().fold(C64::new(0.0, 0.0), |acc, v| acc * z + v);
    let radius = 1.0 + monic[..n].iter().map(|v| v.norm()).fold(0.0, f64::max);
    let seed = C64::new(0.4, 0.9);
    let mut z: Vec<C64> = (0..n).map(|i| seed.powu(i as u32) * radius.min(2.0)).collect();
    for _ in 0..2000 {
        let mut delta = 0.0f64;
        for i in 0..n {
            let mut denom = C64::new(1.0, 0.0);
            for j in 0..n {
                if i != j {
                    denom *= z[i] - z[j];
                }
            }
            if denom.norm() == 0.0 {
                z[i] += C64::new(1e-10, 1e-10);
                continue;
            }
            let step = eval(z[i]) / denom;
            z[i] -= step;
            delta = delta.max(step.norm() / (1.0 + z[i].norm()));
        }
        if delta < 1e-15 {
            break;
        }
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::random_point;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn antidiagonal_example() {
        let space = SectionSpace::of_degree(1);
        let cfg = Configuration::new(vec![SpherePoint::zero(), SpherePoint::infinity()]);
        let v = slater_log(&space, &cfg, &space.metric()).unwrap();
        assert!(!v.is_zero);
        assert!(v.log_abs.abs() < 1e-15);
    }

    #[test]
    fn repeated_point_is_zero() {
        let space = SectionSpace::anticanonical(1);
        let p = SpherePoint::from_chart(c(0.2, 0.9));
        let cfg = Configuration::new(vec![p, SpherePoint::zero(), p]);
        assert!(slater_log_lu(&space, &cfg).unwrap().is_zero);
        assert!(slater_log_vandermonde(&space, &cfg).unwrap().is_zero);
    }

    #[test]
    fn paths_agree_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let space = SectionSpace::of_degree(4);
        for _ in 0..20 {
            let cfg = Configuration::new((0..5).map(|_| random_point(&mut rng)).collect());
            let a = slater_log_lu(&space, &cfg).unwrap().log_abs;
            let b = slater_log_vandermonde(&space, &cfg).unwrap().log_abs;
            assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0));
        }
    }

    #[test]
    fn dimension_mismatch() {
        let space = SectionSpace::anticanonical(1);
        let cfg = Configuration::new(vec![SpherePoint::zero()]);
        assert!(matches!(
            slater_log_lu(&space, &cfg),
            Err(Error::DimensionMismatch { expected: 3, got: 1 })
        ));
    }

    #[test]
    fn scalar_basis_change() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let space = SectionSpace::anticanonical(1);
        let cfg = Configuration::new((0..3).map(|_| random_point(&mut rng)).collect());
        let a = DMatrix::<C64>::identity(3, 3) * c(2.0, -1.0);
        assert!(basis_change_law(&space, &a, &cfg).unwrap() < 1e-12);
        let sing = DMatrix::<C64>::zeros(3, 3);
        assert_eq!(basis_change_law(&space, &sing, &cfg), Err(Error::SingularMatrix));
    }

    #[test]
    fn symmetric_power_is_homomorphism() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = crate::geometry::random_unimodular(&mut rng, 0.5);
        let h = crate::geometry::random_unimodular(&mut rng, 0.5);
        for d in 0..5 {
            let lhs = symmetric_power(&(g * h), d);
            let rhs = symmetric_power(&g, d) * symmetric_power(&h, d);
            assert!((lhs - rhs).norm() < 1e-12);
            assert!((symmetric_power(&g, d).determinant() - c(1.0, 0.0)).norm() < 1e-11);
        }
    }

    #[test]
    fn kodaira_examples() {
        let space = SectionSpace::anticanonical(1);
        let z = c(0.4, -1.3);
        let v = kodaira_map(&space, &SpherePoint::from_chart(z));
        let expect = normalize_projective(vec![c(1.0, 0.0), z, z * z]);
        assert!(projective_distance(&v, &expect) < 1e-14);
        let inf = kodaira_map(&space, &SpherePoint::infinity());
        assert_eq!(inf, vec![c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
    }

    #[test]
    fn binary_form_roots() {
        let r1 = SpherePoint::from_chart(c(0.5, 0.2));
        let r2 = SpherePoint::from_chart(c(-1.0, 2.0));
        let s = BinaryForm::from_roots(&[(r1, 2), (r2, 1), (SpherePoint::infinity(), 1)]);
        assert_eq!(s.degree(), 4);
        let mut z = s.zeros(1e-3);
        z.sort_by_key(|(_, m)| *m);
        assert_eq!(z.len(), 3);
        assert_eq!(z[2].1, 2);
        assert!(z[2].0.chordal(&r1) < 1e-6);
        assert!(s.eval(&r2).norm() < 1e-14);
        let t = BinaryForm::toric().zeros(1e-6);
        assert_eq!(t.len(), 2);
    }
}
