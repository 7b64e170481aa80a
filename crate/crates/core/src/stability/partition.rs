//! Partition function Z = int rho d(nu^N) of the deformed Gibbs density.
//!
//! Two estimators are available. Importance Monte Carlo averages rho/q over
//! draws from a proposal q: either the normalized product Fubini-Study
//! measure (so Z = pi^N E[rho]) or a defensive mixture that also puts mass
//! near the singular points. Because the weights are heavy-tailed, a run is
//! split over three independent seeds, each with its own tail diagnostic.
//! Tensor quadrature (N <= 3) integrates one point at a time on grids adapted
//! to the marked points and to the points already placed.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::density::DeformedDensityParams;
use crate::error::{Error, Result};
use crate::geometry::{
    log_sum_exp, normalize, random_point, singular_grid, SingularCenter, SpherePoint, C64,
};
use crate::pair::rational_to_f64;
use crate::par::{map_indexed, Execution};

/// Independent seeds per Monte Carlo run.
pub const MC_SEEDS: u64 = 3;
/// Minimum Monte Carlo budget.
pub const MIN_MC_BUDGET: usize = 10_000;
/// A seed is flagged when its Hill tail index falls below this value...
pub const HILL_THRESHOLD: f64 = 1.15;
/// ...or when a single sample carries more than this share of the sum.
pub const MAX_SHARE_THRESHOLD: f64 = 0.5;

const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PartitionMethod {
    /// Iterated singular quadrature at the given grid resolution (N <= 3).
    TensorQuadrature { resolution: usize },
    /// Importance sampling; the budget is split evenly over [`MC_SEEDS`]
    /// seeds starting at `seed`.
    ImportanceMC {
        budget: usize,
        seed: u64,
        proposal: Proposal,
    },
}

/// Importance proposal for Monte Carlo partition estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Proposal {
    /// The product Fubini-Study measure.
    FubiniStudy,
    /// Points are drawn one at a time from a mixture of the Fubini-Study
    /// measure with power-law bumps chordal(x, q)^{-s} centered at the
    /// singular points and at the points already drawn.
    #[default]
    Defensive,
}

/// Tail diagnostic of one Monte Carlo seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedDiagnostic {
    pub seed: u64,
    pub samples: usize,
    pub z: f64,
    pub stderr: f64,
    /// Largest single weight divided by the sum of all weights.
    pub max_share: f64,
    /// Hill estimate of the tail index of rho on the top sqrt(n) samples.
    pub hill_index: f64,
    /// Largest relative jump of the running sum over the second half of
    /// the run, max_i rho_i / sum_{j <= i} rho_j.
    pub late_jump: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PartitionEstimate {
    Finite {
        z: f64,
        stderr: f64,
        seeds: Vec<SeedDiagnostic>,
    },
    Divergent {
        seeds: Vec<SeedDiagnostic>,
    },
}

impl PartitionEstimate {
    pub fn is_divergent(&self) -> bool {
        matches!(self, PartitionEstimate::Divergent { .. })
    }

    pub fn value(&self) -> Option<(f64, f64)> {
        match self {
            PartitionEstimate::Finite { z, stderr, .. } => Some((*z, *stderr)),
            PartitionEstimate::Divergent { .. } => None,
        }
    }

    pub fn seeds(&self) -> &[SeedDiagnostic] {
        match self {
            PartitionEstimate::Finite { seeds, .. } | PartitionEstimate::Divergent { seeds } => {
                seeds
            }
        }
    }
}

pub fn partition_estimate(
    params: &DeformedDensityParams,
    method: PartitionMethod,
    exec: Execution,
) -> Result<PartitionEstimate> {
    match method {
        PartitionMethod::TensorQuadrature { resolution } => {
            let (z, err) = tensor_quadrature(params, resolution, exec)?;
            Ok(PartitionEstimate::Finite {
                z,
                stderr: err,
                seeds: Vec::new(),
            })
        }
        PartitionMethod::ImportanceMC {
            budget,
            seed,
            proposal,
        } => importance_mc(params, budget, seed, proposal, exec),
    }
}

/// Cap on the bump exponents, keeping every mixture component normalizable.
const BUMP_EXPONENT_CAP: f64 = 1.5;
/// Mass of the Fubini-Study component in the defensive mixture.
const DEFENSIVE_FS_MASS: f64 = 0.5;

/// A point drawn from the density (1 - s/2)/pi * chordal(x, center)^{-s}
/// with respect to the Fubini-Study area form.
/// Draws that round onto the center are redrawn, a null set for the density.
fn sample_bump<R: Rng + ?Sized>(rng: &mut R, center: &SpherePoint, s: f64) -> SpherePoint {
    let f = center.frame();
    loop {
        let u = rng.random::<f64>().powf(1.0 / (1.0 - 0.5 * s));
        let psi = rng.random::<f64>() * 2.0 * PI;
        let local = [C64::new((1.0 - u).sqrt(), 0.0), C64::from_polar(u.sqrt(), psi)];
        if let Ok(x) = normalize(
            f[(0, 0)] * local[0] + f[(0, 1)] * local[1],
            f[(1, 0)] * local[0] + f[(1, 1)] * local[1],
        ) {
            if !x.coincides(center) {
                return x;
            }
        }
    }
}

fn log_bump_density(x: &SpherePoint, center: &SpherePoint, s: f64) -> f64 {
    ((1.0 - 0.5 * s) / PI).ln() - s * x.chordal(center).ln()
}

/// Sequential defensive proposal for one density.
struct DefensiveProposal {
    fixed: Vec<(SpherePoint, f64)>,
    pair_exponent: f64,
}

impl DefensiveProposal {
    fn new(params: &DeformedDensityParams) -> Self {
        let fixed = params
            .singular_points()
            .iter()
            .map(|s| (s.point, (2.0 * rational_to_f64(&s.coeff)).min(BUMP_EXPONENT_CAP)))
            .filter(|(_, s)| *s > 0.0)
            .collect();
        let pair_exponent = (2.0 * rational_to_f64(&params.alpha())).min(BUMP_EXPONENT_CAP);
        Self {
            fixed,
            pair_exponent,
        }
    }

    /// Draws x_i given x_0..x_{i-1}; returns log q_i(x_i | previous).
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R, previous: &[SpherePoint]) -> (SpherePoint, f64) {
        let n_prev = if self.pair_exponent > 0.0 { previous.len() } else { 0 };
        let n_bumps = self.fixed.len() + n_prev;
        if n_bumps == 0 {
            return (random_point(rng), -PI.ln());
        }
        let bump_mass = (1.0 - DEFENSIVE_FS_MASS) / n_bumps as f64;
        let r: f64 = rng.random();
        let x = if r < DEFENSIVE_FS_MASS {
            random_point(rng)
        } else {
            let b = (((r - DEFENSIVE_FS_MASS) / bump_mass) as usize).min(n_bumps - 1);
            if b < self.fixed.len() {
                sample_bump(rng, &self.fixed[b].0, self.fixed[b].1)
            } else {
                sample_bump(rng, &previous[b - self.fixed.len()], self.pair_exponent)
            }
        };
        let mut terms = Vec::with_capacity(n_bumps + 1);
        terms.push(DEFENSIVE_FS_MASS.ln() - PI.ln());
        for (c, s) in &self.fixed {
            terms.push(bump_mass.ln() + log_bump_density(&x, c, *s));
        }
        for p in &previous[..n_prev] {
            terms.push(bump_mass.ln() + log_bump_density(&x, p, self.pair_exponent));
        }
        (x, log_sum_exp(&terms))
    }
}

/// Importance log-weights log(rho / q) for `n` draws from `proposal`; their
/// mean estimates Z.
pub fn mc_log_weights(
    params: &DeformedDensityParams,
    n: usize,
    seed: u64,
    proposal: Proposal,
    exec: Execution,
) -> Vec<f64> {
    let npts = params.n();
    let chunks = n.div_ceil(CHUNK);
    let defensive = DefensiveProposal::new(params);
    map_indexed(exec, chunks, |c| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(c as u64);
        let len = CHUNK.min(n - c * CHUNK);
        let mut pts = Vec::with_capacity(npts);
        (0..len)
            .map(|_| {
                pts.clear();
                let mut log_q = 0.0;
                for _ in 0..npts {
                    let (x, lq) = match proposal {
                        Proposal::FubiniStudy => (random_point(&mut rng), -PI.ln()),
                        Proposal::Defensive => defensive.draw(&mut rng, &pts),
                    };
                    pts.push(x);
                    log_q += lq;
                }
                params.log_density_points(&pts) - log_q
            })
            .collect::<Vec<f64>>()
    })
    .into_iter()
    .flatten()
    .collect()
}

/// Summary statistics of one seed's importance log-weights.
pub fn diagnose(seed: u64, logs: &[f64]) -> SeedDiagnostic {
    let n = logs.len();
    let lmax = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !lmax.is_finite() || logs.iter().any(|l| l.is_nan()) {
        // a sample hit the singular locus exactly
        return SeedDiagnostic {
            seed,
            samples: n,
            z: f64::INFINITY,
            stderr: f64::INFINITY,
            max_share: 1.0,
            hill_index: 0.0,
            late_jump: 1.0,
            flagged: true,
        };
    }
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    let mut late_jump = 0.0f64;
    for (i, l) in logs.iter().enumerate() {
        let w = (l - lmax).exp();
        s1 += w;
        s2 += w * w;
        if i >= n / 2 && s1 > 0.0 {
            late_jump = late_jump.max(w / s1);
        }
    }
    let nf = n as f64;
    let mean = s1 / nf;
    let var = (s2 / nf - mean * mean).max(0.0) * nf / (nf - 1.0).max(1.0);
    let scale = lmax.exp();
    let z = scale * mean;
    let stderr = scale * (var / nf).sqrt();
    let max_share = 1.0 / s1;
    let hill_index = hill_tail_index(logs);
    let flagged = hill_index < HILL_THRESHOLD || max_share > MAX_SHARE_THRESHOLD;
    SeedDiagnostic {
        seed,
        samples: n,
        z,
        stderr,
        max_share,
        hill_index,
        late_jump,
        flagged,
    }
}

/// Hill estimator of the tail index from log-values, using the top
/// max(10, sqrt n) order statistics.
pub fn hill_tail_index(logs: &[f64]) -> f64 {
    let n = logs.len();
    if n < 20 {
        return f64::NAN;
    }
    let k = ((n as f64).sqrt() as usize).max(10).min(n - 1);
    let mut sorted = logs.to_vec();
    // partial selection of the top k+1 values
    let idx = n - k - 1;
    sorted.select_nth_unstable_by(idx, f64::total_cmp);
    let threshold = sorted[idx];
    let top = &sorted[idx + 1..];
    let h = top.iter().map(|l| l - threshold).sum::<f64>() / k as f64;
    if h <= 0.0 {
        f64::INFINITY
    } else {
        1.0 / h
    }
}

fn importance_mc(
    params: &DeformedDensityParams,
    budget: usize,
    seed: u64,
    proposal: Proposal,
    exec: Execution,
) -> Result<PartitionEstimate> {
    if budget < MIN_MC_BUDGET {
        return Err(Error::InvalidParameter(format!(
            "Monte Carlo budget must be at least {MIN_MC_BUDGET}, got {budget}"
        )));
    }
    let per_seed = budget / MC_SEEDS as usize;
    let seeds: Vec<SeedDiagnostic> = (0..MC_SEEDS)
        .map(|s| {
            let logs = mc_log_weights(params, per_seed, seed.wrapping_add(s), proposal, exec);
            diagnose(seed.wrapping_add(s), &logs)
        })
        .collect();
    if seeds.iter().all(|d| d.flagged) {
        return Ok(PartitionEstimate::Divergent { seeds });
    }
    let m = seeds.len() as f64;
    let z = seeds.iter().map(|d| d.z).sum::<f64>() / m;
    let stderr = seeds.iter().map(|d| d.stderr * d.stderr).sum::<f64>().sqrt() / m;
    Ok(PartitionEstimate::Finite { z, stderr, seeds })
}

/// Z by iterated singular quadrature, with the change against the
/// half-resolution rule as error estimate.
pub fn tensor_quadrature(
    params: &DeformedDensityParams,
    resolution: usize,
    exec: Execution,
) -> Result<(f64, f64)> {
    if params.n() > 3 {
        return Err(Error::Unsupported(format!(
            "tensor quadrature needs N <= 3, got N = {}",
            params.n()
        )));
    }
    let fine = tensor_level(params, &[], resolution, exec)?;
    let coarse = tensor_level(params, &[], (resolution / 2).max(2), exec)?;
    Ok((fine, (fine - coarse).abs()))
}

fn tensor_level(
    params: &DeformedDensityParams,
    fixed: &[SpherePoint],
    resolution: usize,
    exec: Execution,
) -> Result<f64> {
    if fixed.len() == params.n() {
        return Ok(1.0);
    }
    let alpha2 = 2.0 * rational_to_f64(&params.alpha());
    let mut centers: Vec<SingularCenter> = params
        .singular_points()
        .iter()
        .filter(|s| rational_to_f64(&s.coeff) > 0.0)
        .map(|s| SingularCenter {
            point: s.point,
            exponent: 2.0 * rational_to_f64(&s.coeff),
        })
        .collect();
    if alpha2 > 0.0 {
        centers.extend(fixed.iter().map(|p| SingularCenter {
            point: *p,
            exponent: alpha2,
        }));
    }
    let grid = singular_grid(&centers, resolution, None)?;
    let inner_exec = if fixed.is_empty() { exec } else { Execution::Sequential };
    let vals = map_indexed(inner_exec, grid.len(), |i| {
        let x = grid.nodes[i];
        let mut l = params.log_point_factor(&x);
        for f in fixed {
            l += params.log_pair_factor(&x, f);
        }
        if !l.is_finite() {
            return Ok(0.0);
        }
        let mut next = fixed.to_vec();
        next.push(x);
        let inner = tensor_level(params, &next, resolution, Execution::Sequential)?;
        Ok(grid.weights[i] * l.exp() * inner)
    });
    let mut acc = 0.0;
    for v in vals {
        acc += v?;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pair::LogPairCurve;
    use num_rational::Rational64;

    #[test]
    fn nan_weight_is_flagged() {
        let mut logs: Vec<f64> = (0..100).map(|i| -(i as f64) / 10.0).collect();
        logs[7] = f64::NAN;
        let d = diagnose(0, &logs);
        assert!(d.flagged && d.z.is_infinite());
        hill_tail_index(&logs);
    }

    #[test]
    fn gamma_zero_gives_reference_mass() {
        let p = DeformedDensityParams::new(
            LogPairCurve::bare(),
            Rational64::from_integer(1),
            Rational64::from_integer(0),
        )
        .unwrap();
        let (z, _) = tensor_quadrature(&p, 8, Execution::Sequential).unwrap();
        assert!((z - PI.powi(3)).abs() < 1e-8 * z);
        let mc = partition_estimate(
            &p,
            PartitionMethod::ImportanceMC {
                budget: 30_000,
                seed: 1,
                proposal: Proposal::FubiniStudy,
            },
            Execution::Parallel,
        )
        .unwrap();
        let (z, se) = mc.value().unwrap();
        assert!((z - PI.powi(3)).abs() < 1e-9 * z);
        assert!(se < 1e-9 * z);
    }

    #[test]
    fn budget_floor() {
        let p = DeformedDensityParams::new(
            LogPairCurve::bare(),
            Rational64::from_integer(1),
            Rational64::from_integer(1),
        )
        .unwrap();
        assert!(partition_estimate(
            &p,
            PartitionMethod::ImportanceMC {
                budget: 10,
                seed: 0,
                proposal: Proposal::Defensive
            },
            Execution::Sequential
        )
        .is_err());
    }

    #[test]
    fn hill_on_pareto() {
        // exact Pareto(1.5) quantiles: log rho = -(1/1.5) log u
        let n = 40_000;
        let logs: Vec<f64> = (1..=n)
            .map(|i| -((i as f64 - 0.5) / n as f64).ln() / 1.5)
            .collect();
        let h = hill_tail_index(&logs);
        assert!((h - 1.5).abs() < 0.05, "{h}");
    }

    #[test]
    fn mc_is_thread_independent() {
        let p = DeformedDensityParams::new(
            LogPairCurve::bare(),
            Rational64::from_integer(1),
            Rational64::new(1, 2),
        )
        .unwrap();
        for prop in [Proposal::FubiniStudy, Proposal::Defensive] {
            let a = mc_log_weights(&p, 10_000, 4, prop, Execution::Sequential);
            let b = mc_log_weights(&p, 10_000, 4, prop, Execution::Parallel);
            assert_eq!(a, b);
        }
    }
}
