//! Metropolis-Hastings sampling of the deformed Gibbs measure on (P^1)^N and
//! its one-point push-forward.

use std::f64::consts::{FRAC_PI_4, PI};

use num_rational::Rational64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{mobius_apply, random_point, su2_rotation, Mat2, SpherePoint};
use crate::pair::{rational_to_f64, LogPairCurve};
use crate::par::{map_indexed, Execution};
use crate::sections::{Configuration, LogValue};
use crate::stability::{
    deformed_log_density, gibbs_stable_probe, DeformedDensityParams, LogDensity, ProbeSettings,
    Verdict,
};

/// Steps between full recomputations of the stored log-density.
pub const RESYNC_INTERVAL: u64 = 10_000;
const RESYNC_TOL: f64 = 1e-9;
const INITIAL_STEP: f64 = 0.5;
const TUNE_WINDOW: u64 = 200;
const ACCEPT_LOW: f64 = 0.2;
const ACCEPT_HIGH: f64 = 0.5;
const MIN_STEP: f64 = 1e-4;

/// A single-site proposal kernel, symmetric with respect to the product
/// Fubini-Study measure.
pub trait MoveKernel {
    fn propose(&self, x: &SpherePoint, rng: &mut ChaCha8Rng) -> SpherePoint;
}

/// Rotation by the angle `step_scale` about a uniformly random axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Su2Move {
    pub step_scale: f64,
}

impl MoveKernel for Su2Move {
    fn propose(&self, x: &SpherePoint, rng: &mut ChaCha8Rng) -> SpherePoint {
        let axis = random_point(rng).to_cartesian();
        let g = su2_rotation(axis, self.step_scale);
        mobius_apply(&g, x).expect("SU(2) is unimodular")
    }
}

#[derive(Debug, Clone)]
pub struct ChainState {
    pub config: Configuration,
    pub log_density: LogValue,
    pub rng_seed: u64,
    pub stream: u64,
    pub step_scale: f64,
    pub steps: u64,
    pub accepted: u64,
    /// Largest discrepancy seen between the running and the recomputed
    /// log-density at a resync.
    pub max_drift: f64,
    rng: ChaCha8Rng,
}

impl ChainState {
    /// A chain started from FS-random points off the singular locus.
    pub fn new(params: &DeformedDensityParams, rng_seed: u64, stream: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        rng.set_stream(stream);
        for _ in 0..1000 {
            let config = Configuration::new((0..params.n()).map(|_| random_point(&mut rng)).collect());
            if let LogDensity::Finite(v) = deformed_log_density(params, &config)? {
                return Ok(Self::from_parts(config, v, rng_seed, stream, rng));
            }
        }
        Err(Error::InvalidParameter("no finite starting configuration found".into()))
    }

    /// A chain started at `config`, which must have finite density.
    pub fn at(params: &DeformedDensityParams, config: Configuration, rng_seed: u64, stream: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        rng.set_stream(stream);
        match deformed_log_density(params, &config)? {
            LogDensity::Finite(v) => Ok(Self::from_parts(config, v, rng_seed, stream, rng)),
            LogDensity::Infinite(s) => Err(Error::OnSingularLocus(s)),
        }
    }

    fn from_parts(config: Configuration, v: f64, rng_seed: u64, stream: u64, rng: ChaCha8Rng) -> Self {
        Self {
            config,
            log_density: LogValue::from_log(v),
            rng_seed,
            stream,
            step_scale: INITIAL_STEP,
            steps: 0,
            accepted: 0,
            max_drift: 0.0,
            rng,
        }
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.accepted as f64 / self.steps as f64
        }
    }
}

/// Change of the log-density when x_i moves to `y`; +inf if `y` lands on
/// the singular locus.
pub fn single_site_delta(
    params: &DeformedDensityParams,
    config: &Configuration,
    i: usize,
    y: &SpherePoint,
) -> f64 {
    let new_point = params.log_point_factor(y);
    if new_point.is_infinite() {
        return f64::INFINITY;
    }
    let mut delta = new_point - params.log_point_factor(&config.points[i]);
    let a2 = 2.0 * rational_to_f64(&params.alpha());
    if a2 != 0.0 {
        let x = &config.points[i];
        let mut acc = 0.0;
        for (j, q) in config.points.iter().enumerate() {
            if j == i {
                continue;
            }
            let c = y.chordal(q);
            if c == 0.0 {
                return f64::INFINITY;
            }
            acc += c.ln() - x.chordal(q).ln();
        }
        delta -= a2 * acc;
    }
    delta
}

/// log of the Metropolis acceptance probability min(1, pi(y)/pi(x)).
/// Proposals onto the singular locus are rejected.
pub fn log_acceptance(delta: f64) -> f64 {
    if delta.is_infinite() || delta.is_nan() {
        f64::NEG_INFINITY
    } else {
        delta.min(0.0)
    }
}

/// One Metropolis-Hastings update of a uniformly chosen site with `kernel`.
pub fn mh_step_with<K: MoveKernel>(
    state: &mut ChainState,
    params: &DeformedDensityParams,
    kernel: &K,
) -> Result<bool> {
    let n = state.config.len();
    let i = state.rng.random_range(0..n);
    let y = kernel.propose(&state.config.points[i], &mut state.rng);
    let delta = single_site_delta(params, &state.config, i, &y);
    let la = log_acceptance(delta);
    let u: f64 = state.rng.random();
    let accept = la > f64::NEG_INFINITY && u.ln() < la;
    if accept {
        state.config.points[i] = y;
        state.log_density = LogValue::from_log(state.log_density.ln() + delta);
        state.accepted += 1;
    }
    state.steps += 1;
    if state.steps % RESYNC_INTERVAL == 0 {
        resync(state, params)?;
    }
    Ok(accept)
}

/// One update with the SU(2) rotation kernel of the chain's step scale.
pub fn mh_step(state: &mut ChainState, params: &DeformedDensityParams) -> Result<bool> {
    let kernel = Su2Move {
        step_scale: state.step_scale,
    };
    mh_step_with(state, params, &kernel)
}

fn resync(state: &mut ChainState, params: &DeformedDensityParams) -> Result<()> {
    let exact = match deformed_log_density(params, &state.config)? {
        LogDensity::Finite(v) => v,
        LogDensity::Infinite(s) => return Err(Error::OnSingularLocus(s)),
    };
    let drift = (exact - state.log_density.ln()).abs() / exact.abs().max(1.0);
    state.max_drift = state.max_drift.max(drift);
    if drift > RESYNC_TOL {
        return Err(Error::InvalidParameter(format!(
            "running log-density drifted by {drift:e}"
        )));
    }
    state.log_density = LogValue::from_log(exact);
    Ok(())
}

/// log pi(x) + log alpha(x -> y) - log pi(y) - log alpha(y -> x) for a
/// single-site move of x_i to `y` (zero for a reversible kernel; the
/// proposal densities cancel by symmetry).
pub fn detailed_balance_defect(
    params: &DeformedDensityParams,
    x: &Configuration,
    i: usize,
    y: &SpherePoint,
) -> Result<f64> {
    let lx = deformed_log_density(params, x)?.value();
    let mut xy = x.clone();
    xy.points[i] = *y;
    let ly = deformed_log_density(params, &xy)?.value();
    let fwd = log_acceptance(single_site_delta(params, x, i, y));
    let bwd = log_acceptance(single_site_delta(params, &xy, i, &x.points[i]));
    Ok((lx + fwd) - (ly + bwd))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerSettings {
    /// Single-site updates per chain, burn-in included.
    pub budget: u64,
    pub chains: usize,
    pub seed: u64,
    /// Sample even if the probe finds a non-integrable stratum.
    pub force: bool,
    pub exec: Execution,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        Self {
            budget: 200_000,
            chains: 4,
            seed: 0,
            force: false,
            exec: Execution::Parallel,
        }
    }
}

/// One kept configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub chain: usize,
    pub step: u64,
    pub config: Configuration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBatch {
    pub n: usize,
    pub samples: Vec<Sample>,
    pub acceptance_rate: f64,
    /// Frozen step scale of every chain.
    pub step_scales: Vec<f64>,
    /// Kept sweeps between samples.
    pub thin: usize,
    /// Integrated autocorrelation time, in sweeps, before thinning.
    pub tau_sweeps: f64,
    /// Effective sample size of the height of x_i, per index i.
    pub ess: Vec<f64>,
    pub max_drift: f64,
}

/// Samples the deformed Gibbs measure of (pair, k, gamma). Refuses targets
/// with an unstable witness unless `settings.force` is set.
pub fn run_chain(
    pair: &LogPairCurve,
    k: Rational64,
    gamma: Rational64,
    settings: &SamplerSettings,
) -> Result<SampleBatch> {
    let params = DeformedDensityParams::new(pair.clone(), k, gamma)?;
    run_params(&params, settings)
}

pub fn run_params(params: &DeformedDensityParams, settings: &SamplerSettings) -> Result<SampleBatch> {
    if !settings.force {
        let probe = gibbs_stable_probe(
            params.pair(),
            params.k(),
            params.gamma(),
            &ProbeSettings {
                budget: 0,
                ..Default::default()
            },
        )?;
        if probe.verdict == Verdict::UnstableWitness {
            return Err(Error::UnstableTarget(probe.witness.unwrap_or_default()));
        }
    }
    if settings.chains == 0 {
        return Err(Error::InvalidParameter("at least one chain is required".into()));
    }
    let n = params.n();
    if settings.budget < 20 * n as u64 {
        return Err(Error::InvalidParameter(format!(
            "budget {} is below 20 sweeps of {n} sites",
            settings.budget
        )));
    }
    let runs = map_indexed(settings.exec, settings.chains, |c| {
        run_single(params, settings.budget, settings.seed, c)
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;

    // thinning from the pooled autocorrelation of the mean height
    let tau = runs
        .iter()
        .map(|r| integrated_autocorrelation(&r.trace))
        .fold(1.0, f64::max);
    let thin = tau.ceil().max(1.0) as usize;
    let mut samples = Vec::new();
    for (c, r) in runs.iter().enumerate() {
        for (s, cfg) in r.sweeps.iter().enumerate().step_by(thin) {
            samples.push(Sample {
                chain: c,
                step: r.first_step + (s * n) as u64,
                config: cfg.clone(),
            });
        }
    }
    let ess = (0..n)
        .map(|i| {
            runs.iter()
                .map(|r| {
                    let series: Vec<f64> = r.sweeps.iter().step_by(thin).map(|c| c.points[i].height()).collect();
                    series.len() as f64 / integrated_autocorrelation(&series)
                })
                .sum()
        })
        .collect();
    let steps: u64 = runs.iter().map(|r| r.steps).sum();
    let accepted: u64 = runs.iter().map(|r| r.accepted).sum();
    Ok(SampleBatch {
        n,
        samples,
        acceptance_rate: accepted as f64 / steps as f64,
        step_scales: runs.iter().map(|r| r.step_scale).collect(),
        thin,
        tau_sweeps: tau,
        ess,
        max_drift: runs.iter().map(|r| r.max_drift).fold(0.0, f64::max),
    })
}

struct ChainRun {
    sweeps: Vec<Configuration>,
    trace: Vec<f64>,
    first_step: u64,
    steps: u64,
    accepted: u64,
    step_scale: f64,
    max_drift: f64,
}

fn run_single(params: &DeformedDensityParams, budget: u64, seed: u64, chain: usize) -> Result<ChainRun> {
    let n = params.n() as u64;
    let mut state = ChainState::new(params, seed, chain as u64)?;
    let burn = budget / 10;
    let mut window = (0u64, 0u64);
    for _ in 0..burn {
        let acc = mh_step(&mut state, params)?;
        window.0 += 1;
        window.1 += acc as u64;
        if window.0 == TUNE_WINDOW {
            let rate = window.1 as f64 / window.0 as f64;
            if rate > ACCEPT_HIGH {
                state.step_scale = (state.step_scale * 1.25).min(FRAC_PI_4);
            } else if rate < ACCEPT_LOW {
                state.step_scale = (state.step_scale * 0.8).max(MIN_STEP);
            }
            window = (0, 0);
        }
    }
    let (steps0, acc0) = (state.steps, state.accepted);
    let mut sweeps = Vec::new();
    let mut trace = Vec::new();
    let main = budget - burn;
    for s in 0..main {
        mh_step(&mut state, params)?;
        if (s + 1) % n == 0 {
            trace.push(mean_height(&state.config));
            sweeps.push(state.config.clone());
        }
    }
    Ok(ChainRun {
        sweeps,
        trace,
        first_step: burn + n,
        steps: state.steps - steps0,
        accepted: state.accepted - acc0,
        step_scale: state.step_scale,
        max_drift: state.max_drift,
    })
}

fn mean_height(c: &Configuration) -> f64 {
    c.points.iter().map(|p| p.height()).sum::<f64>() / c.len() as f64
}

/// Integrated autocorrelation time 1 + 2 sum rho_t with Sokal's adaptive
/// window (c = 5); at least 1.
pub fn integrated_autocorrelation(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return 1.0;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    if var == 0.0 {
        return 1.0;
    }
    let mut tau = 1.0;
    for t in 1..n / 2 {
        let c = (0..n - t).map(|i| (x[i] - mean) * (x[i + t] - mean)).sum::<f64>() / n as f64;
        tau += 2.0 * c / var;
        if (t as f64) >= 5.0 * tau {
            break;
        }
    }
    tau.max(1.0)
}

/// Equal Fubini-Study mass cells: `bands` slabs of equal height on the unit
/// sphere times `sectors` azimuthal sectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramBins {
    pub bands: usize,
    pub sectors: usize,
}

impl HistogramBins {
    pub fn len(&self) -> usize {
        self.bands * self.sectors
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cell index of `p`: band from |z1|^2, sector from arg(conj(z0) z1).
    pub fn cell(&self, p: &SpherePoint) -> usize {
        let u = p.polar_u();
        let band = ((u * self.bands as f64) as usize).min(self.bands - 1);
        let w = p.z0().conj() * p.z1();
        let phi = w.im.atan2(w.re).rem_euclid(2.0 * PI);
        let sector = ((phi / (2.0 * PI) * self.sectors as f64) as usize).min(self.sectors - 1);
        band * self.sectors + sector
    }

    /// Bounds (u_lo, u_hi, phi_lo, phi_hi) of a cell.
    pub fn bounds(&self, cell: usize) -> (f64, f64, f64, f64) {
        let (b, s) = (cell / self.sectors, cell % self.sectors);
        let du = 1.0 / self.bands as f64;
        let dp = 2.0 * PI / self.sectors as f64;
        (b as f64 * du, (b + 1) as f64 * du, s as f64 * dp, (s + 1) as f64 * dp)
    }

    /// Center of a cell.
    pub fn center(&self, cell: usize) -> SpherePoint {
        let (u0, u1, p0, p1) = self.bounds(cell);
        let u = 0.5 * (u0 + u1);
        let phi = 0.5 * (p0 + p1);
        SpherePoint::new(
            crate::geometry::C64::new((1.0 - u).sqrt(), 0.0),
            crate::geometry::C64::from_polar(u.sqrt(), phi),
        )
        .expect("unit vector")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bins: HistogramBins,
    /// Probability of each cell; sums to one.
    pub mass: Vec<f64>,
    /// Batch-means standard error of each cell.
    pub stderr: Vec<f64>,
    pub points: usize,
}

const BATCHES: usize = 20;

/// One-point push-forward with all N points pooled.
pub fn pushforward_histogram(batch: &SampleBatch, bins: HistogramBins) -> Result<Histogram> {
    pushforward_mapped(batch, bins, |_, p| Some(*p))
}

/// Push-forward of the points with index `i` only.
pub fn index_histogram(batch: &SampleBatch, bins: HistogramBins, i: usize) -> Result<Histogram> {
    pushforward_mapped(batch, bins, |j, p| (j == i).then_some(*p))
}

/// Push-forward of the transported samples g x.
pub fn transported_histogram(batch: &SampleBatch, bins: HistogramBins, g: &Mat2) -> Result<Histogram> {
    if let Some(s) = batch.samples.first() {
        if let Some(p) = s.config.points.first() {
            mobius_apply(g, p)?;
        }
    }
    pushforward_mapped(batch, bins, |_, p| mobius_apply(g, p).ok())
}

fn pushforward_mapped<F>(batch: &SampleBatch, bins: HistogramBins, f: F) -> Result<Histogram>
where
    F: Fn(usize, &SpherePoint) -> Option<SpherePoint>,
{
    if batch.samples.is_empty() {
        return Err(Error::InvalidParameter("empty sample batch".into()));
    }
    if bins.is_empty() {
        return Err(Error::InvalidParameter("histogram needs at least one cell".into()));
    }
    let m = bins.len();
    let nb = BATCHES.min(batch.samples.len());
    let mut per_batch = vec![vec![0.0; m]; nb];
    let mut totals = vec![0.0; nb];
    let len = batch.samples.len();
    for (idx, s) in batch.samples.iter().enumerate() {
        let b = idx * nb / len;
        for (j, p) in s.config.points.iter().enumerate() {
            if let Some(q) = f(j, p) {
                per_batch[b][bins.cell(&q)] += 1.0;
                totals[b] += 1.0;
            }
        }
    }
    let total: f64 = totals.iter().sum();
    if total == 0.0 {
        return Err(Error::InvalidParameter("no points selected".into()));
    }
    let mass: Vec<f64> = (0..m).map(|c| per_batch.iter().map(|h| h[c]).sum::<f64>() / total).collect();
    let stderr = (0..m)
        .map(|c| {
            if nb < 2 {
                return f64::NAN;
            }
            let fr: Vec<f64> = per_batch
                .iter()
                .zip(&totals)
                .filter(|(_, t)| **t > 0.0)
                .map(|(h, t)| h[c] / t)
                .collect();
            let k = fr.len() as f64;
            let mean = fr.iter().sum::<f64>() / k;
            (fr.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0) / k).sqrt()
        })
        .collect();
    Ok(Histogram {
        bins,
        mass,
        stderr,
        points: total as usize,
    })
}

/// Per-cell z-scores of the difference between the push-forward of the
/// samples and of the transported samples g x, with batch-means errors of the
/// paired difference.
pub fn transport_zscores(batch: &SampleBatch, bins: HistogramBins, g: &Mat2) -> Result<Vec<f64>> {
    if batch.samples.len() < 2 {
        return Err(Error::InvalidParameter("need at least two samples".into()));
    }
    let m = bins.len();
    let nb = BATCHES.min(batch.samples.len());
    let len = batch.samples.len();
    let mut diff = vec![vec![0.0; m]; nb];
    let mut totals = vec![0.0; nb];
    for (idx, s) in batch.samples.iter().enumerate() {
        let b = idx * nb / len;
        for p in &s.config.points {
            diff[b][bins.cell(p)] += 1.0;
            diff[b][bins.cell(&mobius_apply(g, p)?)] -= 1.0;
            totals[b] += 1.0;
        }
    }
    Ok((0..m)
        .map(|c| {
            let fr: Vec<f64> = diff.iter().zip(&totals).map(|(h, t)| h[c] / t).collect();
            let k = fr.len() as f64;
            let mean = fr.iter().sum::<f64>() / k;
            let se = (fr.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0) / k).sqrt();
            if se > 0.0 {
                mean / se
            } else if mean == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .collect())
}

/// Largest |a_c - b_c| / sqrt(se_a^2 + se_b^2) over cells.
pub fn histogram_discrepancy(a: &Histogram, b: &Histogram) -> f64 {
    a.mass
        .iter()
        .zip(&b.mass)
        .zip(a.stderr.iter().zip(&b.stderr))
        .map(|((x, y), (s, t))| {
            let se = (s * s + t * t).sqrt();
            if se > 0.0 {
                (x - y).abs() / se
            } else if x == y {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max)
}

/// N points restricted to the 12 vertices of an icosahedron (poles at 0 and
/// infinity), with the deformed density as target and moves by the 60
/// rotations of the icosahedral group. Small enough for exact enumeration.
#[derive(Debug, Clone)]
pub struct IcosahedralToy {
    pub vertices: Vec<SpherePoint>,
    /// The rotation group as vertex permutations.
    pub group: Vec<Vec<usize>>,
}

impl Default for IcosahedralToy {
    fn default() -> Self {
        Self::new()
    }
}

impl IcosahedralToy {
    pub fn new() -> Self {
        let h = 1.0 / 5f64.sqrt();
        let r = 2.0 * h;
        let mut vertices = vec![SpherePoint::zero(), SpherePoint::infinity()];
        for j in 0..5 {
            let a = 2.0 * PI * j as f64 / 5.0;
            vertices.push(SpherePoint::from_cartesian([r * a.cos(), r * a.sin(), h]).expect("unit"));
            let b = a + PI / 5.0;
            vertices.push(SpherePoint::from_cartesian([r * b.cos(), r * b.sin(), -h]).expect("unit"));
        }
        let as_perm = |g: &Mat2| -> Vec<usize> {
            vertices
                .iter()
                .map(|v| nearest(&vertices, &mobius_apply(g, v).expect("SU(2)")))
                .collect()
        };
        let five = 2.0 * PI / 5.0;
        let gens = [
            as_perm(&su2_rotation(vertices[0].to_cartesian(), five)),
            as_perm(&su2_rotation(vertices[2].to_cartesian(), five)),
        ];
        let identity: Vec<usize> = (0..12).collect();
        let mut group = vec![identity];
        let mut frontier = 0;
        while frontier < group.len() {
            let g = group[frontier].clone();
            for s in &gens {
                let comp: Vec<usize> = g.iter().map(|&v| s[v]).collect();
                if !group.contains(&comp) {
                    group.push(comp);
                }
            }
            frontier += 1;
        }
        Self { vertices, group }
    }

    pub fn index(&self, p: &SpherePoint) -> usize {
        nearest(&self.vertices, p)
    }

    fn state_index(&self, c: &Configuration) -> usize {
        c.points.iter().fold(0, |acc, p| acc * 12 + self.index(p))
    }

    fn state(&self, mut idx: usize, n: usize) -> Configuration {
        let mut pts = vec![self.vertices[0]; n];
        for slot in pts.iter_mut().rev() {
            *slot = self.vertices[idx % 12];
            idx /= 12;
        }
        Configuration::new(pts)
    }

    /// Exact target probabilities of all 12^N states (zero on the singular locus).
    pub fn exact(&self, params: &DeformedDensityParams) -> Result<Vec<f64>> {
        let n = params.n();
        let total = 12usize.pow(n as u32);
        let logs: Vec<f64> = (0..total)
            .map(|s| deformed_log_density(params, &self.state(s, n)).map(|d| match d {
                LogDensity::Finite(v) => v,
                LogDensity::Infinite(_) => f64::NEG_INFINITY,
            }))
            .collect::<Result<_>>()?;
        let z = crate::geometry::log_sum_exp(&logs);
        Ok(logs.iter().map(|l| (l - z).exp()).collect())
    }

    /// Empirical state frequencies of an MH chain, recorded once per sweep
    /// of N single-site updates.
    pub fn empirical(&self, params: &DeformedDensityParams, sweeps: u64, seed: u64) -> Result<Vec<f64>> {
        let n = params.n();
        let start = Configuration::new(self.vertices[..n].to_vec());
        let mut state = ChainState::at(params, start, seed, 0)?;
        let mut counts = vec![0u64; 12usize.pow(n as u32)];
        for _ in 0..sweeps {
            for _ in 0..n {
                mh_step_with(&mut state, params, self)?;
            }
            counts[self.state_index(&state.config)] += 1;
        }
        Ok(counts.iter().map(|c| *c as f64 / sweeps as f64).collect())
    }
}

impl MoveKernel for IcosahedralToy {
    fn propose(&self, x: &SpherePoint, rng: &mut ChaCha8Rng) -> SpherePoint {
        let g = &self.group[rng.random_range(0..self.group.len())];
        self.vertices[g[self.index(x)]]
    }
}

fn nearest(vs: &[SpherePoint], p: &SpherePoint) -> usize {
    vs.iter()
        .enumerate()
        .min_by(|a, b| a.1.chordal(p).total_cmp(&b.1.chordal(p)))
        .map(|(i, _)| i)
        .expect("nonempty vertex list")
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(p: i64, q: i64) -> Rational64 {
        Rational64::new(p, q)
    }

    #[test]
    fn icosahedral_group_has_order_60() {
        let toy = IcosahedralToy::new();
        assert_eq!(toy.group.len(), 60);
        let mut d: Vec<f64> = (1..12).map(|j| toy.vertices[0].chordal(&toy.vertices[j])).collect();
        d.sort_by(f64::total_cmp);
        assert!((d[0] - d[4]).abs() < 1e-12 && (d[10] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn detailed_balance_identity() {
        let params = DeformedDensityParams::new(
            LogPairCurve::genus0(
                vec![SpherePoint::zero(), SpherePoint::infinity(), SpherePoint::from_chart(crate::geometry::C64::new(1.0, 0.0))],
                vec![r(1, 2); 3],
            )
            .unwrap(),
            r(4, 1),
            r(1, 1),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let x = Configuration::new((0..3).map(|_| random_point(&mut rng)).collect());
            let y = random_point(&mut rng);
            let i = rng.random_range(0..3);
            let defect = detailed_balance_defect(&params, &x, i, &y).unwrap();
            assert!(defect.abs() < 1e-12, "{defect}");
        }
    }

    #[test]
    fn flat_target_accepts_everything() {
        let params = DeformedDensityParams::new(LogPairCurve::bare(), r(1, 1), r(0, 1)).unwrap();
        let mut state = ChainState::new(&params, 3, 0).unwrap();
        for _ in 0..5000 {
            assert!(mh_step(&mut state, &params).unwrap());
        }
    }

    #[test]
    fn su2_kernel_moves_at_most_step() {
        let k = Su2Move { step_scale: 0.7 };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = SpherePoint::from_chart(crate::geometry::C64::new(0.3, -1.2));
        for _ in 0..100 {
            let y = k.propose(&x, &mut rng);
            let d = x.chordal(&y);
            assert!(d <= (0.35f64).sin() + 1e-12);
        }
    }
}
