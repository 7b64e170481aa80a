use std::fs::File;
use std::path::PathBuf;
use std::time::Instant;

use gibbslab::ding::{inequality_check, minimize_ding, DingGrid, DingIterate, DingSettings, Termination};
use gibbslab::flows::{intertwining_residual, mu_invariance_test, vanishing_fields};
use gibbslab::geometry::{random_point, random_unimodular, SpherePoint};
use gibbslab::pair::rational_to_f64;
use gibbslab::par::Execution;
use gibbslab::sampler::{pushforward_histogram, run_params, HistogramBins, SamplerSettings};
use gibbslab::sections::{Configuration, SectionSpace};
use gibbslab::stability::{
    gibbs_stable_probe, partition_estimate, PartitionEstimate, PartitionMethod, ProbeSettings,
    Proposal, Verdict,
};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{ExperimentConfig, Method, Resolved};
use crate::{CliError, FlowTest, Outcome, VERSION};

const INTERTWINE_TOL: f64 = 1e-10;
const MU_INVARIANCE_TOL: f64 = 1e-8;
const ZERO_TOL: f64 = 1e-10;

/// Report envelope shared by every command. `wall_clock_seconds` is the
/// only field that differs between repeated runs.
#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    command: &'a str,
    version: &'a str,
    outcome: Outcome,
    exit_code: u8,
    seeds: Vec<u64>,
    wall_clock_seconds: f64,
    config: &'a ExperimentConfig,
    artifacts: Vec<String>,
    result: T,
}

struct Run<'a> {
    resolved: &'a Resolved,
    command: &'static str,
    dir: PathBuf,
    start: Instant,
    artifacts: Vec<String>,
}

impl<'a> Run<'a> {
    fn new(resolved: &'a Resolved, command: &'static str) -> Result<Self, CliError> {
        let dir = resolved.out_dir();
        std::fs::create_dir_all(&dir)?;
        Ok(Self {
            resolved,
            command,
            dir,
            start: Instant::now(),
            artifacts: Vec::new(),
        })
    }

    fn csv(&mut self, name: &str) -> Result<csv::Writer<File>, CliError> {
        self.artifacts.push(name.to_string());
        Ok(csv::Writer::from_path(self.dir.join(name))?)
    }

    fn finish<T: Serialize>(self, outcome: Outcome, seeds: Vec<u64>, result: T) -> Result<Outcome, CliError> {
        let name = format!("{}.json", self.command);
        let report = Report {
            command: self.command,
            version: VERSION,
            outcome,
            exit_code: outcome.code(),
            seeds,
            wall_clock_seconds: self.start.elapsed().as_secs_f64(),
            config: &self.resolved.config,
            artifacts: self.artifacts,
            result,
        };
        let mut text = serde_json::to_string_pretty(&report)?;
        text.push('\n');
        std::fs::write(self.dir.join(&name), text)?;
        println!("{}: {:?} ({})", self.command, outcome, self.dir.join(name).display());
        Ok(outcome)
    }
}

fn mc_method(cfg: &ExperimentConfig) -> PartitionMethod {
    match cfg.partition.method {
        Method::Mc => PartitionMethod::ImportanceMC {
            budget: cfg.budgets.partition as usize,
            seed: cfg.seeds.partition,
            proposal: Proposal::Defensive,
        },
        Method::Quadrature => PartitionMethod::TensorQuadrature {
            resolution: cfg.resolution,
        },
    }
}

pub fn stability(r: &Resolved) -> Result<Outcome, CliError> {
    let mut run = Run::new(r, "stability")?;
    let cfg = &r.config;
    let settings = ProbeSettings {
        budget: cfg.budgets.partition as usize,
        seed: cfg.seeds.partition,
        proposal: Proposal::Defensive,
        exec: Execution::Parallel,
    };
    let report = gibbs_stable_probe(&r.pair, r.k, r.gamma, &settings)?;
    let mut w = run.csv("strata.csv")?;
    w.write_record(["stratum", "m", "location", "exponent", "integrable"])?;
    for row in &report.strata {
        let location = match row.location {
            gibbslab::stability::StratumLocation::Generic => "generic".to_string(),
            gibbslab::stability::StratumLocation::MarkedPoint(a) => format!("marked:{a}"),
        };
        w.write_record([
            row.stratum.clone(),
            row.m.to_string(),
            location,
            row.exponent.clone(),
            row.integrable.to_string(),
        ])?;
    }
    w.flush()?;
    let outcome = match report.verdict {
        Verdict::StableProbePassed => Outcome::Passed,
        Verdict::UnstableWitness => Outcome::Unstable,
        Verdict::Inconclusive => Outcome::Inconclusive,
    };
    let seeds = report
        .partition
        .as_ref()
        .map(|p| p.seeds.iter().map(|s| s.seed).collect())
        .unwrap_or_default();
    run.finish(outcome, seeds, report)
}

pub fn partition(r: &Resolved) -> Result<Outcome, CliError> {
    let mut run = Run::new(r, "partition")?;
    let params = r.params()?;
    let est = partition_estimate(&params, mc_method(&r.config), Execution::Parallel)?;
    let mut w = run.csv("partition_seeds.csv")?;
    for s in est.seeds() {
        w.serialize(s)?;
    }
    w.flush()?;
    let outcome = match est {
        PartitionEstimate::Finite { .. } => Outcome::Passed,
        PartitionEstimate::Divergent { .. } => Outcome::Unstable,
    };
    let seeds = est.seeds().iter().map(|s| s.seed).collect();
    run.finish(outcome, seeds, est)
}

#[derive(Serialize)]
struct SampleSummary {
    n: usize,
    chains: usize,
    kept: usize,
    acceptance_rate: f64,
    step_scales: Vec<f64>,
    thin: usize,
    tau_sweeps: f64,
    ess: Vec<f64>,
    max_drift: f64,
    histogram: gibbslab::sampler::Histogram,
}

pub fn sample(r: &Resolved, force: bool) -> Result<Outcome, CliError> {
    let mut run = Run::new(r, "sample")?;
    let cfg = &r.config;
    let params = r.params()?;
    let settings = SamplerSettings {
        budget: cfg.budgets.sample,
        chains: cfg.sample.chains,
        seed: cfg.seeds.sample,
        force,
        exec: Execution::Parallel,
    };
    let batch = run_params(&params, &settings)?;
    let mut w = run.csv("samples.csv")?;
    w.write_record(["chain", "step", "i", "z0_re", "z0_im", "z1_re", "z1_im"])?;
    for s in &batch.samples {
        for (i, p) in s.config.points.iter().enumerate() {
            let (z0, z1) = (p.z0(), p.z1());
            w.write_record([
                s.chain.to_string(),
                s.step.to_string(),
                i.to_string(),
                z0.re.to_string(),
                z0.im.to_string(),
                z1.re.to_string(),
                z1.im.to_string(),
            ])?;
        }
    }
    w.flush()?;
    let bins = HistogramBins {
        bands: cfg.sample.bands,
        sectors: cfg.sample.sectors,
    };
    if bins.is_empty() {
        return Err(CliError::Usage("histogram needs at least one band and one sector".into()));
    }
    let hist = pushforward_histogram(&batch, bins)?;
    let mut w = run.csv("histogram.csv")?;
    w.write_record(["cell", "u_lo", "u_hi", "phi_lo", "phi_hi", "mass", "stderr"])?;
    for c in 0..bins.len() {
        let (u0, u1, p0, p1) = bins.bounds(c);
        w.write_record([
            c.to_string(),
            u0.to_string(),
            u1.to_string(),
            p0.to_string(),
            p1.to_string(),
            hist.mass[c].to_string(),
            hist.stderr[c].to_string(),
        ])?;
    }
    w.flush()?;
    let summary = SampleSummary {
        n: batch.n,
        chains: settings.chains,
        kept: batch.samples.len(),
        acceptance_rate: batch.acceptance_rate,
        step_scales: batch.step_scales.clone(),
        thin: batch.thin,
        tau_sweeps: batch.tau_sweeps,
        ess: batch.ess.clone(),
        max_drift: batch.max_drift,
        histogram: hist,
    };
    run.finish(Outcome::Passed, vec![cfg.seeds.sample], summary)
}

fn write_trace(run: &mut Run, trace: &[DingIterate]) -> Result<(), CliError> {
    let mut w = run.csv("ding_trace.csv")?;
    w.write_record(["iter", "D", "J", "grad_norm", "step"])?;
    for it in trace {
        w.write_record([
            it.iter.to_string(),
            it.d.to_string(),
            it.j.to_string(),
            it.grad_norm.to_string(),
            format!("{:?}", it.step),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn ding(r: &Resolved) -> Result<Outcome, CliError> {
    let mut run = Run::new(r, "ding")?;
    let space = SectionSpace::new(r.pair.clone(), r.k)?;
    let grid = DingGrid::new(&space, r.config.resolution)?;
    let report = minimize_ding(
        rational_to_f64(&r.gamma),
        &space,
        &grid,
        None,
        &DingSettings::default(),
    )?;
    write_trace(&mut run, &report.trace)?;
    let outcome = if report.non_coercive {
        Outcome::Unstable
    } else {
        match report.termination {
            Termination::Gradient | Termination::Stalled => Outcome::Passed,
            Termination::Escaped | Termination::MaxIterations => Outcome::Inconclusive,
        }
    };
    run.finish(outcome, Vec::new(), report)
}

#[derive(Serialize)]
struct FlowCheck {
    check: usize,
    residual: f64,
    passed: bool,
}

#[derive(Serialize)]
struct FlowSummary {
    test: String,
    checks: usize,
    failures: usize,
    tolerance: f64,
    max_residual: f64,
}

pub fn flows(r: &Resolved, test: FlowTest) -> Result<Outcome, CliError> {
    let mut run = Run::new(r, "flows")?;
    let cfg = &r.config;
    let seed = cfg.seeds.flows;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (name, tolerance) = match test {
        FlowTest::Intertwine => ("intertwine", INTERTWINE_TOL),
        FlowTest::MuInvariance => ("mu-invariance", MU_INVARIANCE_TOL),
        FlowTest::ThreeZeros => ("three-zeros", ZERO_TOL),
    };
    let mut rows = Vec::with_capacity(cfg.flows.checks);
    match test {
        FlowTest::Intertwine => {
            let space = SectionSpace::new(r.pair.clone(), r.k)?;
            for _ in 0..cfg.flows.checks {
                let g = random_unimodular(&mut rng, 0.5);
                let x = random_point(&mut rng);
                rows.push(intertwining_residual(&space, &g, &x)?);
            }
        }
        FlowTest::MuInvariance => {
            if !r.pair.marked_points().is_empty() || !r.k.is_integer() || r.k.to_integer() < 1 {
                return Err(CliError::Usage(
                    "mu-invariance needs the bare pair (no marked points) and an integer level".into(),
                ));
            }
            let k = r.k.to_integer() as u32;
            let n = SectionSpace::anticanonical(k).dimension();
            for _ in 0..cfg.flows.checks {
                let g = random_unimodular(&mut rng, 0.5);
                let config = Configuration::new((0..n).map(|_| random_point(&mut rng)).collect());
                rows.push(mu_invariance_test(k, &g, &config)?);
            }
        }
        FlowTest::ThreeZeros => {
            for _ in 0..cfg.flows.checks {
                let pts: Vec<SpherePoint> = (0..3).map(|_| random_point(&mut rng)).collect();
                rows.push(three_zeros_residual(&pts));
            }
        }
    }
    let mut w = run.csv("flow_checks.csv")?;
    let mut failures = 0;
    let mut max_residual: f64 = 0.0;
    for (check, residual) in rows.into_iter().enumerate() {
        let passed = residual < tolerance;
        failures += usize::from(!passed);
        max_residual = max_residual.max(residual);
        w.serialize(FlowCheck {
            check,
            residual,
            passed,
        })?;
    }
    w.flush()?;
    let summary = FlowSummary {
        test: name.into(),
        checks: cfg.flows.checks,
        failures,
        tolerance,
        max_residual,
    };
    let outcome = if failures == 0 {
        Outcome::Passed
    } else {
        Outcome::CheckFailed
    };
    run.finish(outcome, vec![seed], summary)
}

/// 0 when no nonzero field vanishes at all three points and the field
/// through the first two vanishes exactly there; otherwise the size of the
/// violation.
fn three_zeros_residual(pts: &[SpherePoint]) -> f64 {
    if !vanishing_fields(pts).is_empty() {
        return 1.0;
    }
    let two = vanishing_fields(&pts[..2]);
    if two.len() != 1 || two[0].is_zero() {
        return 1.0;
    }
    let zeros = two[0].zeros();
    if zeros.len() != 2 {
        return 1.0;
    }
    pts[..2]
        .iter()
        .map(|p| zeros.iter().map(|z| z.chordal(p)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

pub fn inequality(r: &Resolved) -> Result<Outcome, CliError> {
    let mut run = Run::new(r, "inequality")?;
    let cfg = &r.config;
    let report = inequality_check(
        &r.pair,
        r.k,
        r.gamma,
        mc_method(cfg),
        cfg.resolution,
        &DingSettings::default(),
    )?;
    write_trace(&mut run, &report.ding.trace)?;
    let outcome = if report.holds {
        Outcome::Passed
    } else {
        Outcome::CheckFailed
    };
    let seeds = match cfg.partition.method {
        Method::Mc => vec![cfg.seeds.partition],
        Method::Quadrature => Vec::new(),
    };
    run.finish(outcome, seeds, report)
}
