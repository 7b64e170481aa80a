//! Hermitian inner products on H^0(-k(K_X + Delta)), the Fubini-Study map,
//! the twisted quantized Ding functional and J_k.
//!
//! Conventions. The monomial basis e_j is fixed and an inner product is
//! stored as its Gram matrix H_ij = H(e_i, e_j). With H = L L^*, the basis
//! L^{-1} e is H-orthonormal, so
//!
//!   FS(H) - phi_0 = u_H(x) = (1/k) log(|L^{-1} v(x)|^2 / N),  v = e(x_hat).
//!
//! The measure e^{-phi_0} is mu_Delta = prod_a chordal(x, p_a)^{-2 w_a} times
//! the Fubini-Study area form, and
//!
//!   D(H) = (1/kN) log det H - (1/gamma) log int e^{-gamma u_H} d mu_Delta,
//!   J(H) = (1/kN) log det H + sup u_H.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flows::{flow_matrix, VectorFieldSL2};
use crate::geometry::{
    adapted_grid, log_sum_exp, make_grid, singular_grid, Mat2, QuadratureGrid, SingularCenter, SpherePoint, C64,
};
use crate::pair::{format_rational, rational_to_f64, LogPairCurve};
use crate::par::{map_indexed, Execution};
use crate::sections::{symmetric_power, BinaryForm, SectionSpace};
use crate::stability::{
    partition_estimate, DeformedDensityParams, PartitionEstimate, PartitionMethod,
};

fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

/// A positive definite Hermitian Gram matrix with its Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMetricMatrix {
    h: DMatrix<C64>,
    l: DMatrix<C64>,
}

impl HermitianMetricMatrix {
    /// Symmetrizes `h` and factors it.
    pub fn new(h: DMatrix<C64>) -> Result<Self> {
        if h.nrows() != h.ncols() || h.nrows() == 0 {
            return Err(Error::DimensionMismatch {
                expected: h.nrows(),
                got: h.ncols(),
            });
        }
        let h = (&h + h.adjoint()) * C64::new(0.5, 0.0);
        let mut l = h.clone().cholesky().ok_or(Error::NotPositiveDefinite)?.l();
        // complex Cholesky takes complex square roots of negative pivots
        for i in 0..l.nrows() {
            let d = l[(i, i)];
            if !(d.re > 0.0) || !d.re.is_finite() || d.im.abs() > 1e-10 * d.re {
                return Err(Error::NotPositiveDefinite);
            }
            l[(i, i)] = C64::new(d.re, 0.0);
        }
        Ok(Self { h, l })
    }

    /// H = L L^* from a lower-triangular factor with positive diagonal.
    pub fn from_factor(l: DMatrix<C64>) -> Result<Self> {
        let l = l.lower_triangle();
        Self::new(&l * l.adjoint())
    }

    pub fn identity(n: usize) -> Self {
        Self::new(DMatrix::identity(n, n)).expect("identity is positive definite")
    }

    pub fn dim(&self) -> usize {
        self.h.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.h
    }

    pub fn factor(&self) -> &DMatrix<C64> {
        &self.l
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.dim()).map(|i| self.l[(i, i)].re.ln()).sum::<f64>()
    }

    /// e^c H.
    pub fn scaled(&self, c: f64) -> Self {
        Self::new(&self.h * C64::new(c.exp(), 0.0)).expect("positive rescaling")
    }

    /// P H P^*.
    pub fn congruence(&self, p: &DMatrix<C64>) -> Result<Self> {
        Self::new(p * &self.h * p.adjoint())
    }

    /// Rescaled to unit determinant.
    pub fn normalized(&self) -> Self {
        self.scaled(-self.log_det() / self.dim() as f64)
    }

    /// The H-orthonormal frame T = L^{-1}: the basis T e is orthonormal.
    pub fn orthonormal_frame(&self) -> DMatrix<C64> {
        self.l
            .clone()
            .solve_lower_triangular(&DMatrix::identity(self.dim(), self.dim()))
            .expect("positive diagonal")
    }

    /// |L^{-1} v|^2 = v^* H^{-1} v by forward substitution.
    pub fn inverse_norm_sqr(&self, v: &[C64]) -> f64 {
        let n = self.dim();
        let mut y = vec![zero(); n];
        let mut acc = 0.0;
        for i in 0..n {
            let mut s = v[i];
            for j in 0..i {
                s -= self.l[(i, j)] * y[j];
            }
            y[i] = s / self.l[(i, i)].re;
            acc += y[i].norm_sqr();
        }
        acc
    }

    /// Condition number estimate from the factor diagonal.
    pub fn diag_spread(&self) -> f64 {
        let d: Vec<f64> = (0..self.dim()).map(|i| self.l[(i, i)].re).collect();
        let max = d.iter().cloned().fold(0.0, f64::max);
        let min = d.iter().cloned().fold(f64::INFINITY, f64::min);
        (max / min).powi(2)
    }
}

/// Quadrature nodes for Ding-type integrals with the basis and the log
/// density of mu_Delta precomputed at every node.
#[derive(Debug, Clone)]
pub struct DingGrid {
    pub grid: QuadratureGrid,
    basis: Vec<Vec<C64>>,
    log_weight: Vec<f64>,
}

impl DingGrid {
    pub fn new(space: &SectionSpace, resolution: usize) -> Result<Self> {
        let pair = space.pair();
        let centers: Vec<SingularCenter> = pair
            .marked_points()
            .iter()
            .zip(pair.weights_f64())
            .filter(|(_, w)| *w != 0.0)
            .map(|(p, w)| SingularCenter {
                point: *p,
                exponent: 2.0 * w,
            })
            .collect();
        let grid = if centers.is_empty() {
            make_grid(resolution)?
        } else {
            singular_grid(&centers, resolution, None)?
        };
        Ok(Self::from_grid(space, grid))
    }

    /// A grid that also resolves the concentration of e^{-gamma u_H}: log-radial
    /// patches around the zeros of every H-orthonormal basis section.
    pub fn adapted(space: &SectionSpace, resolution: usize, h: &HermitianMetricMatrix) -> Result<Self> {
        check_space(h, space)?;
        let pair = space.pair();
        let centers: Vec<SingularCenter> = pair
            .marked_points()
            .iter()
            .zip(pair.weights_f64())
            .filter(|(_, w)| *w != 0.0)
            .map(|(p, w)| SingularCenter {
                point: *p,
                exponent: 2.0 * w,
            })
            .collect();
        let mut peaks: Vec<SpherePoint> = Vec::new();
        if space.degree() > 0 {
            let t = h.orthonormal_frame();
            for i in 0..t.nrows() {
                let row = BinaryForm::new(t.row(i).iter().cloned().collect());
                for (z, _) in row.zeros(1e-9) {
                    if peaks.iter().all(|q| q.chordal(&z) > 1e-9) {
                        peaks.push(z);
                    }
                }
            }
        }
        let grid = adapted_grid(&centers, &peaks, resolution, ADAPTED_FLOOR)?;
        Ok(Self::from_grid(space, grid))
    }

    pub fn from_grid(space: &SectionSpace, grid: QuadratureGrid) -> Self {
        let pair = space.pair();
        let ws = pair.weights_f64();
        let basis = grid.nodes.iter().map(|p| space.evaluate_basis(p)).collect();
        let log_weight = grid
            .nodes
            .iter()
            .zip(&grid.weights)
            .map(|(p, w)| w.ln() + log_mu_density(pair.marked_points(), &ws, p))
            .collect();
        Self {
            grid,
            basis,
            log_weight,
        }
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn coarsened(&self, space: &SectionSpace) -> Result<Self> {
        Ok(Self::from_grid(space, self.grid.coarsened()?))
    }
}

const ADAPTED_FLOOR: f64 = 1e-12;

fn log_mu_density(points: &[SpherePoint], weights: &[f64], p: &SpherePoint) -> f64 {
    points
        .iter()
        .zip(weights)
        .filter(|(_, w)| **w != 0.0)
        .map(|(q, w)| -2.0 * w * p.chordal(q).ln())
        .sum()
}

fn check_space(h: &HermitianMetricMatrix, space: &SectionSpace) -> Result<()> {
    if h.dim() != space.dimension() {
        return Err(Error::DimensionMismatch {
            expected: space.dimension(),
            got: h.dim(),
        });
    }
    Ok(())
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidParameter(format!("gamma must lie in (0, 1], got {gamma}")));
    }
    Ok(())
}

/// FS(H) - phi_0 at p.
pub fn fs_metric_log(h: &HermitianMetricMatrix, space: &SectionSpace, p: &SpherePoint) -> Result<f64> {
    check_space(h, space)?;
    Ok(fs_from_values(h, space, &space.evaluate_basis(p)))
}

fn fs_from_values(h: &HermitianMetricMatrix, space: &SectionSpace, v: &[C64]) -> f64 {
    let n = space.dimension() as f64;
    (h.inverse_norm_sqr(v) / n).ln() / space.level_f64()
}

/// FS(H) - phi_0 computed from an arbitrary H-orthonormal frame T (rows of
/// T e are orthonormal), e.g. U L^{-1} for unitary U.
pub fn fs_metric_log_with_frame(
    frame: &DMatrix<C64>,
    space: &SectionSpace,
    p: &SpherePoint,
) -> f64 {
    let v = nalgebra::DVector::from_vec(space.evaluate_basis(p));
    let s = frame * v;
    (s.norm_squared() / space.dimension() as f64).ln() / space.level_f64()
}

/// log int e^{-gamma u_H} d mu_Delta.
fn log_integral(
    h: &HermitianMetricMatrix,
    gamma: f64,
    space: &SectionSpace,
    grid: &DingGrid,
    exec: Execution,
) -> Result<f64> {
    let vals = map_indexed(exec, grid.len(), |i| {
        grid.log_weight[i] - gamma * fs_from_values(h, space, &grid.basis[i])
    });
    let l = log_sum_exp(&vals);
    if !l.is_finite() {
        return Err(Error::QuadratureUnderflow);
    }
    Ok(l)
}

/// D_{k,-gamma}(H).
pub fn ding_functional(
    h: &HermitianMetricMatrix,
    gamma: f64,
    space: &SectionSpace,
    grid: &DingGrid,
    exec: Execution,
) -> Result<f64> {
    check_space(h, space)?;
    check_gamma(gamma)?;
    let kn = space.level_f64() * space.dimension() as f64;
    Ok(h.log_det() / kn - log_integral(h, gamma, space, grid, exec)? / gamma)
}

/// D evaluated through an explicit H-orthonormal frame instead of the
/// Cholesky factor; `frame` must satisfy T H T^* = I.
pub fn ding_functional_with_frame(
    h: &HermitianMetricMatrix,
    frame: &DMatrix<C64>,
    gamma: f64,
    space: &SectionSpace,
    grid: &DingGrid,
    exec: Execution,
) -> Result<f64> {
    check_space(h, space)?;
    check_gamma(gamma)?;
    let n = space.dimension();
    let id = frame * h.matrix() * frame.adjoint();
    if (id - DMatrix::<C64>::identity(n, n)).norm() > 1e-8 {
        return Err(Error::InvalidParameter("frame is not H-orthonormal".into()));
    }
    let k = space.level_f64();
    let vals = map_indexed(exec, grid.len(), |i| {
        let v = nalgebra::DVector::from_column_slice(&grid.basis[i]);
        let u = ((frame * v).norm_squared() / n as f64).ln() / k;
        grid.log_weight[i] - gamma * u
    });
    let l = log_sum_exp(&vals);
    if !l.is_finite() {
        return Err(Error::QuadratureUnderflow);
    }
    Ok(h.log_det() / (k * n as f64) - l / gamma)
}

const SUP_CANDIDATES: usize = 5;
const SUP_HALVINGS: usize = 6;

/// sup_X u_H: grid scan, then a compass search around the best nodes with
/// the radius halved six times.
pub fn sup_fs(h: &HermitianMetricMatrix, space: &SectionSpace, grid: &DingGrid) -> f64 {
    let mut vals: Vec<(f64, usize)> = grid
        .basis
        .iter()
        .enumerate()
        .map(|(i, v)| (fs_from_values(h, space, v), i))
        .collect();
    vals.sort_by(|a, b| b.0.total_cmp(&a.0));
    let u = |p: &SpherePoint| fs_from_values(h, space, &space.evaluate_basis(p));
    let r0 = (4.0 / grid.grid.resolution().max(2) as f64).min(0.5);
    let mut best = vals.first().map(|v| v.0).unwrap_or(f64::NEG_INFINITY);
    for &(val, i) in vals.iter().take(SUP_CANDIDATES) {
        let mut p = grid.grid.nodes[i];
        let mut cur = val;
        let mut r = r0;
        for _ in 0..=SUP_HALVINGS {
            for _ in 0..4 {
                let mut moved = false;
                for m in 0..8 {
                    let q = p.offset(r, std::f64::consts::FRAC_PI_4 * m as f64);
                    let uq = u(&q);
                    if uq > cur {
                        cur = uq;
                        p = q;
                        moved = true;
                    }
                }
                if !moved {
                    break;
                }
            }
            r *= 0.5;
        }
        best = best.max(cur);
    }
    best
}

/// J_k(H).
pub fn j_functional(h: &HermitianMetricMatrix, space: &SectionSpace, grid: &DingGrid) -> Result<f64> {
    check_space(h, space)?;
    let kn = space.level_f64() * space.dimension() as f64;
    Ok(h.log_det() / kn + sup_fs(h, space, grid))
}

/// L^2(mu_Delta) Gram matrix of the monomials.
pub fn l2_gram(space: &SectionSpace, grid: &DingGrid) -> DMatrix<C64> {
    let n = space.dimension();
    let mut g = DMatrix::from_element(n, n, zero());
    for (v, lw) in grid.basis.iter().zip(&grid.log_weight) {
        let w = lw.exp();
        for i in 0..n {
            for j in 0..=i {
                g[(i, j)] += v[i] * v[j].conj() * w;
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            g[(j, i)] = g[(i, j)].conj();
        }
    }
    g
}

/// The reference H_0: the L^2(mu_Delta) Gram matrix at unit determinant.
pub fn reference_metric(space: &SectionSpace, grid: &DingGrid) -> Result<HermitianMetricMatrix> {
    Ok(HermitianMetricMatrix::new(l2_gram(space, grid))?.normalized())
}

/// B = int e^{-gamma u} v v^* / (v^* H^{-1} v) d mu / int e^{-gamma u} d mu.
fn twisted_gram(
    h: &HermitianMetricMatrix,
    gamma: f64,
    space: &SectionSpace,
    grid: &DingGrid,
    exec: Execution,
) -> Result<DMatrix<C64>> {
    let n = space.dimension();
    let k = space.level_f64();
    let logs: Vec<(f64, f64)> = map_indexed(exec, grid.len(), |i| {
        let q = h.inverse_norm_sqr(&grid.basis[i]);
        let u = (q / n as f64).ln() / k;
        (grid.log_weight[i] - gamma * u, q)
    });
    let m = logs.iter().map(|x| x.0).fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return Err(Error::QuadratureUnderflow);
    }
    let mut b = DMatrix::from_element(n, n, zero());
    let mut total = 0.0;
    for (v, (lw, q)) in grid.basis.iter().zip(&logs) {
        let w = (lw - m).exp();
        total += w;
        let s = w / q;
        for i in 0..n {
            for j in 0..=i {
                b[(i, j)] += v[i] * v[j].conj() * s;
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            b[(j, i)] = b[(i, j)].conj();
        }
    }
    Ok(b / C64::new(total, 0.0))
}

/// Real parameters of the factor: log L_ii, then (Re L_ij, Im L_ij) for i > j.
pub fn factor_params(h: &HermitianMetricMatrix) -> Vec<f64> {
    let n = h.dim();
    let l = h.factor();
    let mut p: Vec<f64> = (0..n).map(|i| l[(i, i)].re.ln()).collect();
    for i in 0..n {
        for j in 0..i {
            p.push(l[(i, j)].re);
            p.push(l[(i, j)].im);
        }
    }
    p
}

pub fn from_factor_params(p: &[f64], n: usize) -> Result<HermitianMetricMatrix> {
    if p.len() != n * n {
        return Err(Error::DimensionMismatch {
            expected: n * n,
            got: p.len(),
        });
    }
    let mut l = DMatrix::from_element(n, n, zero());
    for i in 0..n {
        l[(i, i)] = C64::new(p[i].exp(), 0.0);
    }
    let mut idx = n;
    for i in 0..n {
        for j in 0..i {
            l[(i, j)] = C64::new(p[idx], p[idx + 1]);
            idx += 2;
        }
    }
    HermitianMetricMatrix::from_factor(l)
}

/// D and its gradient with respect to [`factor_params`].
pub fn ding_gradient(
    h: &HermitianMetricMatrix,
    gamma: f64,
    space: &SectionSpace,
    grid: &DingGrid,
    exec: Execution,
) -> Result<(f64, Vec<f64>)> {
    let d = ding_functional(h, gamma, space, grid, exec)?;
    let (g, _) = euclidean_gradient(h, gamma, space, grid, exec)?;
    let n = h.dim();
    let gl = &g * h.factor();
    let l = h.factor();
    let mut out: Vec<f64> = (0..n).map(|i| 2.0 * gl[(i, i)].re * l[(i, i)].re).collect();
    for i in 0..n {
        for j in 0..i {
            out.push(2.0 * gl[(i, j)].re);
            out.push(2.0 * gl[(i, j)].im);
        }
    }
    Ok((d, out))
}

/// G with dD = tr(G dH): G = (1/kN) H^{-1} - (1/k) H^{-1} B H^{-1}.
fn euclidean_gradient(
    h: &HermitianMetricMatrix,
    gamma: f64,
    space: &SectionSpace,
    grid: &DingGrid,
    exec: Execution,
) -> Result<(DMatrix<C64>, DMatrix<C64>)> {
    let n = space.dimension();
    let k = space.level_f64();
    let b = twisted_gram(h, gamma, space, grid, exec)?;
    let t = h.orthonormal_frame();
    let hinv = t.adjoint() * &t;
    let g = &hinv * C64::new(1.0 / (k * n as f64), 0.0) - &hinv * &b * &hinv * C64::new(1.0 / k, 0.0);
    Ok((g, b))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DingSettings {
    pub max_iterations: usize,
    pub grad_tol: f64,
    /// Relative change of D below which an iteration counts as stalled.
    pub rel_tol: f64,
    /// Consecutive stalled iterations (small change in D and a gradient that
    /// no longer shrinks) that end the run.
    pub stall_limit: usize,
    /// Increase of D tolerated from a fixed-point step (quadrature noise).
    pub noise_tol: f64,
    pub exec: Execution,
}

impl Default for DingSettings {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            grad_tol: 1e-6,
            rel_tol: 1e-8,
            stall_limit: 5,
            noise_tol: 1e-13,
            exec: Execution::Parallel,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepKind {
    Start,
    FixedPoint,
    Descent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DingIterate {
    pub iter: usize,
    pub d: f64,
    pub j: f64,
    pub grad_norm: f64,
    pub step: StepKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Gradient,
    Stalled,
    /// The iterate left every compact set (D unbounded below along the run).
    Escaped,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DingReport {
    pub gamma: f64,
    pub k: String,
    pub n: usize,
    pub d: f64,
    pub j: f64,
    pub grad_norm: f64,
    pub termination: Termination,
    /// D stays flat while J grows along an sl(2) ray from the optimum, or
    /// the iterate escaped.
    pub non_coercive: bool,
    pub trace: Vec<DingIterate>,
    /// Final Gram matrix as (re, im) rows.
    pub metric: Vec<Vec<(f64, f64)>>,
}

impl DingReport {
    pub fn metric_matrix(&self) -> Result<HermitianMetricMatrix> {
        let n = self.metric.len();
        HermitianMetricMatrix::new(DMatrix::from_fn(n, n, |i, j| {
            C64::new(self.metric[i][j].0, self.metric[i][j].1)
        }))
    }
}

const ESCAPE_SPREAD: f64 = 1e12;
const ARMIJO_C: f64 = 1e-4;
const STALL_GRAD_RATIO: f64 = 0.9;

/// Minimizes D_{k,-gamma} over unit-determinant H, starting from `start` or
/// the L^2 reference. Fixed-point steps H <- N B are taken while they do
/// not increase D; otherwise an Armijo gradient step on the factor.
pub fn minimize_ding(
    gamma: f64,
    space: &SectionSpace,
    grid: &DingGrid,
    start: Option<&HermitianMetricMatrix>,
    settings: &DingSettings,
) -> Result<DingReport> {
    check_gamma(gamma)?;
    let exec = settings.exec;
    let n = space.dimension();
    let mut h = match start {
        Some(s) => {
            check_space(s, space)?;
            s.normalized()
        }
        None => reference_metric(space, grid)?,
    };
    let mut d = ding_functional(&h, gamma, space, grid, exec)?;
    let (_, mut grad) = ding_gradient(&h, gamma, space, grid, exec)?;
    let mut trace = vec![DingIterate {
        iter: 0,
        d,
        j: j_functional(&h, space, grid)?,
        grad_norm: norm(&grad),
        step: StepKind::Start,
    }];
    let mut stalled = 0;
    let mut termination = Termination::MaxIterations;
    for iter in 1..=settings.max_iterations {
        if norm(&grad) < settings.grad_tol {
            termination = Termination::Gradient;
            break;
        }
        let b = twisted_gram(&h, gamma, space, grid, exec)?;
        let (mut next, mut kind) = (None, StepKind::FixedPoint);
        if let Ok(cand) = HermitianMetricMatrix::new(b * C64::new(n as f64, 0.0)) {
            let cand = cand.normalized();
            let dc = ding_functional(&cand, gamma, space, grid, exec)?;
            if dc <= d + settings.noise_tol * (1.0 + d.abs()) {
                next = Some((cand, dc));
            }
        }
        if next.is_none() {
            kind = StepKind::Descent;
            next = armijo_step(&h, d, &grad, gamma, space, grid, exec)?;
        }
        let Some((hn, dn)) = next else {
            termination = Termination::Stalled;
            break;
        };
        let rel = (dn - d).abs() / d.abs().max(1.0);
        let prev_grad = norm(&grad);
        h = hn;
        d = dn;
        grad = ding_gradient(&h, gamma, space, grid, exec)?.1;
        trace.push(DingIterate {
            iter,
            d,
            j: j_functional(&h, space, grid)?,
            grad_norm: norm(&grad),
            step: kind,
        });
        if h.diag_spread() > ESCAPE_SPREAD {
            termination = Termination::Escaped;
            break;
        }
        // small D changes alone are expected near a minimum; a stall also
        // needs the gradient to stop shrinking
        let flat = rel < settings.rel_tol && norm(&grad) > STALL_GRAD_RATIO * prev_grad;
        stalled = if flat { stalled + 1 } else { 0 };
        if stalled >= settings.stall_limit {
            termination = Termination::Stalled;
            break;
        }
    }
    if termination == Termination::MaxIterations && norm(&grad) < settings.grad_tol {
        termination = Termination::Gradient;
    }
    let j = j_functional(&h, space, grid)?;
    let non_coercive =
        termination == Termination::Escaped || flat_sl2_ray(&h, gamma, space, grid, exec)?;
    Ok(DingReport {
        gamma,
        k: format_rational(&space.level()),
        n,
        d,
        j,
        grad_norm: norm(&grad),
        termination,
        non_coercive,
        trace,
        metric: (0..n)
            .map(|i| (0..n).map(|jj| (h.matrix()[(i, jj)].re, h.matrix()[(i, jj)].im)).collect())
            .collect(),
    })
}

fn armijo_step(
    h: &HermitianMetricMatrix,
    d: f64,
    grad: &[f64],
    gamma: f64,
    space: &SectionSpace,
    grid: &DingGrid,
    exec: Execution,
) -> Result<Option<(HermitianMetricMatrix, f64)>> {
    let p = factor_params(h);
    let g2 = grad.iter().map(|x| x * x).sum::<f64>();
    let mut t = 1.0;
    for _ in 0..40 {
        let q: Vec<f64> = p.iter().zip(grad).map(|(a, b)| a - t * b).collect();
        if let Ok(cand) = from_factor_params(&q, h.dim()) {
            let cand = cand.normalized();
            let dc = ding_functional(&cand, gamma, space, grid, exec)?;
            if dc <= d - ARMIJO_C * t * g2 {
                return Ok(Some((cand, dc)));
            }
        }
        t *= 0.5;
    }
    Ok(None)
}

/// Pullback of H by the flow of `v` on O(d): H -> Q H Q^* with
/// Q = Sym^d(exp(-tau A)), so that FS(F_tau^* H) = F_tau^* FS(H).
pub fn pullback_metric(
    h: &HermitianMetricMatrix,
    v: &VectorFieldSL2,
    tau: C64,
    space: &SectionSpace,
) -> Result<(HermitianMetricMatrix, DMatrix<C64>)> {
    let q = symmetric_power(&flow_matrix(v, -tau), space.degree());
    Ok((h.congruence(&q)?, q))
}

/// The three Hermitian directions of sl(2): flows along them leave every
/// compact subset of SL(2)/SU(2).
pub fn sl2_hermitian_fields() -> [VectorFieldSL2; 3] {
    let h = C64::new(0.5, 0.0);
    let i = C64::new(0.0, 0.5);
    [
        VectorFieldSL2::new(Mat2::new(h, zero(), zero(), -h)).expect("traceless"),
        VectorFieldSL2::new(Mat2::new(zero(), h, h, zero())).expect("traceless"),
        VectorFieldSL2::new(Mat2::new(zero(), -i, i, zero())).expect("traceless"),
    ]
}

const FLAT_RAY_TAU: f64 = 2.0;

fn flat_sl2_ray(
    h: &HermitianMetricMatrix,
    gamma: f64,
    space: &SectionSpace,
    grid: &DingGrid,
    exec: Execution,
) -> Result<bool> {
    let d0 = ding_functional(h, gamma, space, grid, exec)?;
    let j0 = j_functional(h, space, grid)?;
    for v in sl2_hermitian_fields() {
        for sign in [1.0, -1.0] {
            let (ht, _) = pullback_metric(h, &v, C64::new(sign * FLAT_RAY_TAU, 0.0), space)?;
            let dj = j_functional(&ht, space, grid)? - j0;
            let dd = ding_functional(&ht, gamma, space, grid, exec)? - d0;
            if dj > 0.5 && dd.abs() < 1e-3 * dj {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub k: String,
    pub gamma: String,
    pub n: usize,
    pub z: f64,
    pub z_stderr: f64,
    /// -(1/(gamma N)) log Z.
    pub lhs: f64,
    pub lhs_stderr: f64,
    pub inf_d: f64,
    /// (1/(kN)) log N.
    pub log_n_term: f64,
    pub rhs: f64,
    /// |D_r - D_{r/2}| at the optimum.
    pub quadrature_tol: f64,
    pub holds: bool,
    /// rhs - lhs, reported only.
    pub gap: f64,
    pub ding: DingReport,
}

/// Compares -(1/(gamma N)) log Z with inf D + (1/(kN)) log N.
pub fn inequality_check(
    pair: &LogPairCurve,
    k: num_rational::Rational64,
    gamma: num_rational::Rational64,
    method: PartitionMethod,
    resolution: usize,
    settings: &DingSettings,
) -> Result<InequalityReport> {
    let params = DeformedDensityParams::new(pair.clone(), k, gamma)?;
    let est = partition_estimate(&params, method, settings.exec)?;
    let (z, z_err) = match est {
        PartitionEstimate::Divergent { .. } => return Err(Error::DivergentPartition),
        PartitionEstimate::Finite { z, stderr, .. } => (z, stderr),
    };
    let g = rational_to_f64(&gamma);
    let space = params.space().clone();
    let n = space.dimension();
    let kf = space.level_f64();
    let grid = DingGrid::new(&space, resolution)?;
    let report = minimize_ding(g, &space, &grid, None, settings)?;
    let h = report.metric_matrix()?;
    let coarse = grid.coarsened(&space)?;
    let d_coarse = ding_functional(&h, g, &space, &coarse, settings.exec)?;
    let quadrature_tol = (report.d - d_coarse).abs();
    let lhs = -z.ln() / (g * n as f64);
    let lhs_stderr = z_err / (z * g * n as f64);
    let log_n_term = (n as f64).ln() / (kf * n as f64);
    let rhs = report.d + log_n_term;
    Ok(InequalityReport {
        k: format_rational(&k),
        gamma: format_rational(&gamma),
        n,
        z,
        z_stderr: z_err,
        lhs,
        lhs_stderr,
        inf_d: report.d,
        log_n_term,
        rhs,
        quadrature_tol,
        holds: lhs <= rhs + 2.0 * lhs_stderr + quadrature_tol,
        gap: rhs - lhs,
        ding: report,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarmonicityReport {
    /// |discrete Laplacian| of tau -> D_{k,-1}(F_tau^* H0) on a 3x3 stencil.
    pub laplacian_residual: f64,
    /// max over the stencil of |D(F^*H0) - D(H0) - (1/kN) log|det Q|^2|.
    pub formula_residual: f64,
    /// max over the stencil of |int e^{-u(F^*H0)} - int e^{-u(H0)}| / int e^{-u(H0)}.
    pub integral_residual: f64,
}

/// Harmonicity of tau -> D_{k,-1}(F_tau^* H0) around `center` with stencil
/// spacing `step`.
pub fn harmonicity_probe(
    v: &VectorFieldSL2,
    h0: &HermitianMetricMatrix,
    space: &SectionSpace,
    grid: &DingGrid,
    center: C64,
    step: f64,
    exec: Execution,
) -> Result<HarmonicityReport> {
    check_space(h0, space)?;
    let kn = space.level_f64() * space.dimension() as f64;
    let d0 = ding_functional(h0, 1.0, space, grid, exec)?;
    let i0 = log_integral(h0, 1.0, space, grid, exec)?;
    let mut vals = [[0.0; 3]; 3];
    let mut formula_residual = 0.0f64;
    let mut integral_residual = 0.0f64;
    for (a, row) in vals.iter_mut().enumerate() {
        for (b, slot) in row.iter_mut().enumerate() {
            let tau = center + C64::new((a as f64 - 1.0) * step, (b as f64 - 1.0) * step);
            let (ht, q) = pullback_metric(h0, v, tau, space)?;
            let dt = ding_functional(&ht, 1.0, space, grid, exec)?;
            let det = q.determinant().norm_sqr().ln() / kn;
            formula_residual = formula_residual.max((dt - d0 - det).abs());
            let it = log_integral(&ht, 1.0, space, grid, exec)?;
            integral_residual = integral_residual.max((it - i0).exp_m1().abs());
            *slot = dt;
        }
    }
    let lap = (vals[0][1] + vals[2][1] + vals[1][0] + vals[1][2] - 4.0 * vals[1][1]) / (step * step);
    Ok(HarmonicityReport {
        laplacian_residual: lap.abs(),
        formula_residual,
        integral_residual,
    })
}

/// The family H_tau = A^* e^{tau Lambda} A, Lambda real traceless diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct Ray {
    pub a: DMatrix<C64>,
    pub lambda: Vec<f64>,
}

impl Ray {
    pub fn at(&self, tau: f64) -> Result<HermitianMetricMatrix> {
        let e = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            self.lambda.len(),
            self.lambda.iter().map(|l| C64::new((tau * l).exp(), 0.0)),
        ));
        HermitianMetricMatrix::new(self.a.adjoint() * e * &self.a)
    }
}

/// The torus ray of the monomial weights j - d/2 through H_0, followed by
/// `random` rays with Haar-random unitary twist and random Lambda.
pub fn default_rays(
    space: &SectionSpace,
    grid: &DingGrid,
    random: usize,
    seed: u64,
) -> Result<Vec<Ray>> {
    let h0 = reference_metric(space, grid)?;
    let base = h0.factor().adjoint();
    let n = space.dimension();
    let d = space.degree() as f64;
    let mut rays = vec![Ray {
        a: base.clone(),
        lambda: (0..n).map(|j| 2.0 * j as f64 - d).collect(),
    }];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..random {
        let g = DMatrix::from_fn(n, n, |_, _| {
            C64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
        });
        let u = g.qr().q();
        let mut lambda: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        let mean = lambda.iter().sum::<f64>() / n as f64;
        lambda.iter_mut().for_each(|l| *l -= mean);
        let s = norm(&lambda).max(1e-12) / (n as f64).sqrt();
        lambda.iter_mut().for_each(|l| *l /= s);
        rays.push(Ray {
            a: &u * &base,
            lambda,
        });
    }
    Ok(rays)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoercivityRow {
    pub epsilon: f64,
    /// (tau, min over rays of D_{k,-1} - eps J_k).
    pub profile: Vec<(f64, f64)>,
    pub non_coercive: bool,
}

/// Tabulates min over rays of D_{k,-1} - eps J_k for tau in [0, tau_max].
/// Every H_tau is integrated on its own [`DingGrid::adapted`] grid at
/// `resolution`. A profile that keeps decreasing over its second half is
/// flagged.
pub fn coercivity_probe(
    epsilons: &[f64],
    rays: &[Ray],
    space: &SectionSpace,
    resolution: usize,
    tau_max: f64,
    steps: usize,
    exec: Execution,
) -> Result<Vec<CoercivityRow>> {
    let steps = steps.max(4);
    let taus: Vec<f64> = (0..=steps).map(|i| tau_max * i as f64 / steps as f64).collect();
    // (D, J) per ray and tau, rays evaluated in parallel
    let table: Vec<Result<Vec<(f64, f64)>>> = map_indexed(exec, rays.len(), |r| {
        taus.iter()
            .map(|&t| {
                let h = rays[r].at(t)?;
                let grid = DingGrid::adapted(space, resolution, &h)?;
                Ok((
                    ding_functional(&h, 1.0, space, &grid, Execution::Sequential)?,
                    j_functional(&h, space, &grid)?,
                ))
            })
            .collect()
    });
    let table = table.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(epsilons
        .iter()
        .map(|&eps| {
            let profile: Vec<(f64, f64)> = taus
                .iter()
                .enumerate()
                .map(|(i, &t)| {
                    let m = table
                        .iter()
                        .map(|row| row[i].0 - eps * row[i].1)
                        .fold(f64::INFINITY, f64::min);
                    (t, m)
                })
                .collect();
            let half = &profile[steps / 2..];
            let decreasing = half.windows(2).all(|w| w[1].1 < w[0].1);
            let slope = (half[half.len() - 1].1 - half[0].1) / (half[half.len() - 1].0 - half[0].0);
            CoercivityRow {
                epsilon: eps,
                non_coercive: decreasing && slope < -1e-3,
                profile,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Rational64;

    fn random_h(n: usize, rng: &mut ChaCha8Rng) -> HermitianMetricMatrix {
        let a = DMatrix::from_fn(n, n, |_, _| {
            C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
        });
        HermitianMetricMatrix::new(&a * a.adjoint() + DMatrix::identity(n, n) * C64::new(0.3, 0.0))
            .unwrap()
    }

    fn half_pair() -> LogPairCurve {
        LogPairCurve::genus0(
            vec![
                SpherePoint::zero(),
                SpherePoint::infinity(),
                SpherePoint::from_chart(C64::new(1.0, 0.0)),
            ],
            vec![Rational64::new(1, 2); 3],
        )
        .unwrap()
    }

    #[test]
    fn rejects_indefinite() {
        let mut m = DMatrix::identity(2, 2);
        m[(1, 1)] = C64::new(-1.0, 0.0);
        assert_eq!(HermitianMetricMatrix::new(m), Err(Error::NotPositiveDefinite));
    }

    #[test]
    fn bergman_metric_is_constant() {
        let space = SectionSpace::anticanonical(2);
        let grid = DingGrid::new(&space, 32).unwrap();
        let h = reference_metric(&space, &grid).unwrap();
        let vals: Vec<f64> = grid.grid.nodes.iter().map(|p| fs_metric_log(&h, &space, p).unwrap()).collect();
        let spread = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - vals.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(spread < 1e-8, "{spread}");
        let j = j_functional(&h, &space, &grid).unwrap();
        assert!((j - vals[0]).abs() < 1e-8);
        // e^c H lowers FS by c/k
        let p = grid.grid.nodes[7];
        let shifted = fs_metric_log(&h.scaled(0.8), &space, &p).unwrap();
        assert!((vals[7] - shifted - 0.4).abs() < 1e-12);
    }

    #[test]
    fn gauge_invariances() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let space = SectionSpace::new(half_pair(), Rational64::from_integer(4)).unwrap();
        let grid = DingGrid::new(&space, 16).unwrap();
        for _ in 0..5 {
            let h = random_h(3, &mut rng);
            let d = ding_functional(&h, 0.7, &space, &grid, Execution::Sequential).unwrap();
            let ds = ding_functional(&h.scaled(3.7), 0.7, &space, &grid, Execution::Sequential).unwrap();
            assert!((d - ds).abs() < 1e-9);
            let j = j_functional(&h, &space, &grid).unwrap();
            let js = j_functional(&h.scaled(-2.1), &space, &grid).unwrap();
            assert!((j - js).abs() < 1e-9);
            let u = DMatrix::from_fn(3, 3, |_, _| {
                C64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
            })
            .qr()
            .q();
            let frame = u * h.orthonormal_frame();
            let du = ding_functional_with_frame(&h, &frame, 0.7, &space, &grid, Execution::Sequential)
                .unwrap();
            assert!((d - du).abs() < 1e-10);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let space = SectionSpace::new(half_pair(), Rational64::from_integer(4)).unwrap();
        let grid = DingGrid::new(&space, 16).unwrap();
        let h = random_h(3, &mut rng);
        let (_, g) = ding_gradient(&h, 0.6, &space, &grid, Execution::Sequential).unwrap();
        let p = factor_params(&h);
        let step = 1e-5;
        let fd: Vec<f64> = (0..p.len())
            .map(|i| {
                let mut a = p.clone();
                let mut b = p.clone();
                a[i] += step;
                b[i] -= step;
                let da = ding_functional(&from_factor_params(&a, 3).unwrap(), 0.6, &space, &grid, Execution::Sequential).unwrap();
                let db = ding_functional(&from_factor_params(&b, 3).unwrap(), 0.6, &space, &grid, Execution::Sequential).unwrap();
                (da - db) / (2.0 * step)
            })
            .collect();
        let diff: Vec<f64> = g.iter().zip(&fd).map(|(a, b)| a - b).collect();
        assert!(norm(&diff) < 1e-5 * norm(&g), "{g:?} {fd:?}");
    }

    #[test]
    fn identity_value_bare() {
        // D(I) = -log int (N / sum_j (1-t)^{d-j} t^j)^{1/k} pi dt, independent oracle
        let space = SectionSpace::anticanonical(1);
        let grid = DingGrid::new(&space, 64).unwrap();
        let d = ding_functional(&HermitianMetricMatrix::identity(3), 1.0, &space, &grid, Execution::Sequential).unwrap();
        let f = |t: f64| 3.0 / ((1.0 - t).powi(2) + (1.0 - t) * t + t * t);
        let simpson = |m: usize| {
            let h = 1.0 / m as f64;
            (0..=m)
                .map(|i| {
                    let w = if i == 0 || i == m { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                    w * f(i as f64 * h)
                })
                .sum::<f64>()
                * h
                / 3.0
        };
        let oracle = -(std::f64::consts::PI * simpson(4096)).ln();
        assert!((simpson(4096) - simpson(2048)).abs() < 1e-12);
        assert!((d - oracle).abs() < 1e-6, "{d} {oracle}");
    }
}

