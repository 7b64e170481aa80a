//! Quadrature on P^1 against the Fubini-Study area form (total mass pi).
//!
//! Two families of rules are provided:
//!
//! * [`make_grid`]: a two-chart product rule. Each chart covers the unit disc
//!   |z| <= 1 of its own affine coordinate; in the variable u = |z1|^2 the
//!   area form is (1/2) du dpsi, so Gauss-Legendre in u times the trapezoid
//!   rule in the angle is exact for every polynomial in z, conj(z) of
//!   moderate degree. The two charts are mirror images under z -> 1/z.
//! * [`singular_grid`]: a rule adapted to integrands with algebraic point
//!   singularities chordal(x, q)^{-s}. A smooth partition of unity localises
//!   the integrand around each center; around its own center every piece is
//!   integrated in geodesic polar coordinates with the radial substitution
//!   u = t^{2/(2-s)}, which cancels the singular factor against the area
//!   element.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::gauss::gauss_legendre_interval;
use super::point::{apply_raw, normalize, SpherePoint, C64};
use crate::error::{Error, Result};
use crate::par::{map_indexed, Execution};

/// An algebraic point singularity chordal(x, point)^{-exponent} of an integrand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingularCenter {
    pub point: SpherePoint,
    pub exponent: f64,
}

#[derive(Debug, Clone, PartialEq)]
enum GridSpec {
    TwoChart,
    Singular {
        centers: Vec<SingularCenter>,
        cutoff: Option<f64>,
    },
    Adapted {
        centers: Vec<SingularCenter>,
        peaks: Vec<SpherePoint>,
        floor: f64,
    },
}

#[derive(Debug, Clone, Copy)]
enum Radial {
    Power(f64),
    Log { floor: f64 },
}

/// Nodes and positive weights; the weights carry the Fubini-Study mass of
/// each node's cell.
#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    pub nodes: Vec<SpherePoint>,
    pub weights: Vec<f64>,
    resolution: usize,
    spec: GridSpec,
}

const PARTITION_POWER: i32 = 6;

/// Two-chart Fubini-Study grid with `resolution` angular nodes and
/// `resolution / 2` radial nodes per chart.
pub fn make_grid(resolution: usize) -> Result<QuadratureGrid> {
    if resolution < 2 {
        return Err(Error::InvalidParameter(format!(
            "grid resolution must be >= 2, got {resolution}"
        )));
    }
    let n_u = (resolution / 2).max(1);
    let (us, wu) = gauss_legendre_interval(n_u, 0.0, 0.5);
    let dpsi = 2.0 * PI / resolution as f64;
    let mut nodes = Vec::with_capacity(2 * n_u * resolution);
    let mut weights = Vec::with_capacity(2 * n_u * resolution);
    for (u, w) in us.iter().zip(&wu) {
        let (a, b) = ((1.0 - u).sqrt(), u.sqrt());
        for j in 0..resolution {
            let psi = dpsi * (j as f64 + 0.5);
            let e = C64::from_polar(b, psi);
            let p = normalize(C64::new(a, 0.0), e).expect("nonzero");
            nodes.push(p);
            weights.push(0.5 * w * dpsi);
            nodes.push(p.swap());
            weights.push(0.5 * w * dpsi);
        }
    }
    Ok(QuadratureGrid {
        nodes,
        weights,
        resolution,
        spec: GridSpec::TwoChart,
    })
}

/// Radial substitution exponent that cancels chordal^{-s} against the area form.
fn radial_power(exponent: f64) -> f64 {
    if exponent > 0.0 && exponent < 2.0 {
        2.0 / (2.0 - exponent)
    } else {
        1.0
    }
}

/// Grid adapted to point singularities at `centers`. With `cutoff = Some(delta)`
/// the disc chordal(x, q) < delta around every center is excluded and the
/// radial variable is sampled logarithmically, which keeps the rule usable for
/// non-integrable exponents.
pub fn singular_grid(
    centers: &[SingularCenter],
    resolution: usize,
    cutoff: Option<f64>,
) -> Result<QuadratureGrid> {
    if centers.is_empty() && cutoff.is_none() {
        return make_grid(resolution);
    }
    if resolution < 2 {
        return Err(Error::InvalidParameter(format!(
            "grid resolution must be >= 2, got {resolution}"
        )));
    }
    if let Some(d) = cutoff {
        if !(d > 0.0 && d < 1.0) {
            return Err(Error::InvalidParameter(format!("cutoff must lie in (0,1), got {d}")));
        }
    }
    let radial: Vec<Radial> = centers
        .iter()
        .map(|c| match cutoff {
            None => Radial::Power(radial_power(c.exponent)),
            Some(floor) => Radial::Log { floor },
        })
        .collect();
    let points: Vec<SpherePoint> = centers.iter().map(|c| c.point).collect();
    let (nodes, weights) = polar_patches(&points, &radial, resolution);
    Ok(QuadratureGrid {
        nodes,
        weights,
        resolution,
        spec: GridSpec::Singular {
            centers: centers.to_vec(),
            cutoff,
        },
    })
}

/// Grid for integrands that concentrate near `peaks` on scales far below the
/// grid spacing: around each peak the radius is sampled logarithmically down
/// to chordal distance `floor`; the marked `centers` keep the algebraic
/// grading of [`singular_grid`].
pub fn adapted_grid(
    centers: &[SingularCenter],
    peaks: &[SpherePoint],
    resolution: usize,
    floor: f64,
) -> Result<QuadratureGrid> {
    if peaks.is_empty() {
        return singular_grid(centers, resolution, None);
    }
    if resolution < 2 {
        return Err(Error::InvalidParameter(format!(
            "grid resolution must be >= 2, got {resolution}"
        )));
    }
    if !(floor > 0.0 && floor < 1.0) {
        return Err(Error::InvalidParameter(format!("floor must lie in (0,1), got {floor}")));
    }
    let mut points: Vec<SpherePoint> = centers.iter().map(|c| c.point).collect();
    let mut radial: Vec<Radial> = centers.iter().map(|c| Radial::Power(radial_power(c.exponent))).collect();
    for p in peaks {
        // a peak sitting on a marked point is already covered there
        if points.iter().all(|q| q.chordal(p) > 1e-9) {
            points.push(*p);
            radial.push(Radial::Log { floor });
        }
    }
    let (nodes, weights) = polar_patches(&points, &radial, resolution);
    Ok(QuadratureGrid {
        nodes,
        weights,
        resolution,
        spec: GridSpec::Adapted {
            centers: centers.to_vec(),
            peaks: peaks.to_vec(),
            floor,
        },
    })
}

/// Polar rules around every point, glued by a partition of unity.
fn polar_patches(points: &[SpherePoint], radial: &[Radial], resolution: usize) -> (Vec<SpherePoint>, Vec<f64>) {
    let n_t = resolution;
    let n_psi = resolution;
    let dpsi = 2.0 * PI / n_psi as f64;
    let (ts, wt) = gauss_legendre_interval(n_t, 0.0, 1.0);
    let mut nodes = Vec::with_capacity(points.len() * n_t * n_psi);
    let mut weights = Vec::with_capacity(points.len() * n_t * n_psi);
    for (j, (c, r)) in points.iter().zip(radial).enumerate() {
        let frame = c.frame();
        for (t, w) in ts.iter().zip(&wt) {
            let (u, du) = match *r {
                Radial::Power(q) => (t.powf(q), q * t.powf(q - 1.0)),
                Radial::Log { floor } => {
                    let log_range = -2.0 * floor.ln();
                    let u = (-(1.0 - t) * log_range).exp();
                    (u, u * log_range)
                }
            };
            if u <= 0.0 || du == 0.0 {
                continue;
            }
            let (a, b) = ((1.0 - u).max(0.0).sqrt(), u.sqrt());
            for k in 0..n_psi {
                let psi = dpsi * (k as f64 + 0.5);
                let local = SpherePoint::new(C64::new(a, 0.0), C64::from_polar(b, psi))
                    .expect("nonzero");
                let [x0, x1] = apply_raw(&frame, &local);
                let p = normalize(x0, x1).expect("unitary image is nonzero");
                let chi = partition_weight(j, &p, points);
                if chi == 0.0 {
                    continue;
                }
                nodes.push(p);
                weights.push(0.5 * w * du * dpsi * chi);
            }
        }
    }
    (nodes, weights)
}

/// chi_j = d_j^{-2P} / sum_m d_m^{-2P}: equal to one at center j, vanishing
/// to order 2P at every other center.
fn partition_weight(j: usize, p: &SpherePoint, centers: &[SpherePoint]) -> f64 {
    let dj = p.chordal(&centers[j]);
    if dj == 0.0 {
        return 1.0;
    }
    let mut denom = 1.0;
    for (m, c) in centers.iter().enumerate() {
        if m == j {
            continue;
        }
        let dm = p.chordal(c);
        if dm == 0.0 {
            return 0.0;
        }
        denom += (dj / dm).powi(PARTITION_POWER);
    }
    1.0 / denom
}

impl QuadratureGrid {
    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// The same rule at half the resolution.
    pub fn coarsened(&self) -> Result<QuadratureGrid> {
        let r = (self.resolution / 2).max(2);
        match &self.spec {
            GridSpec::TwoChart => make_grid(r),
            GridSpec::Singular { centers, cutoff } => singular_grid(centers, r, *cutoff),
            GridSpec::Adapted { centers, peaks, floor } => adapted_grid(centers, peaks, r, *floor),
        }
    }

    /// sum_i w_i f(x_i).
    pub fn integrate<F>(&self, exec: Execution, f: F) -> f64
    where
        F: Fn(&SpherePoint) -> f64 + Sync + Send,
    {
        crate::par::sum_indexed(exec, self.nodes.len(), |i| self.weights[i] * f(&self.nodes[i]))
    }

    /// log sum_i w_i exp(g(x_i)), evaluated without overflow.
    pub fn log_integrate_exp<F>(&self, exec: Execution, g: F) -> f64
    where
        F: Fn(&SpherePoint) -> f64 + Sync + Send,
    {
        let vals = map_indexed(exec, self.nodes.len(), |i| self.weights[i].ln() + g(&self.nodes[i]));
        log_sum_exp(&vals)
    }

    /// Integral together with the change against the half-resolution rule.
    pub fn integrate_with_error<F>(&self, exec: Execution, f: F) -> Result<(f64, f64)>
    where
        F: Fn(&SpherePoint) -> f64 + Sync + Send,
    {
        let fine = self.integrate(exec, &f);
        let coarse = self.coarsened()?.integrate(exec, &f);
        Ok((fine, (fine - coarse).abs()))
    }
}

/// log sum exp(v_i), with -inf for an empty or all -inf input.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
