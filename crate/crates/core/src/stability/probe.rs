use num_rational::Rational64;
use serde::{Deserialize, Serialize};

use super::density::DeformedDensityParams;
use super::lct::weight_condition;
use super::partition::{partition_estimate, PartitionMethod, Proposal, SeedDiagnostic};
use super::strata::{one_cluster_strata, StratumLocation};
use crate::error::Result;
use crate::pair::{format_point, format_rational, LogPairCurve};
use crate::par::Execution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    StableProbePassed,
    UnstableWitness,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub genus: u32,
    pub points: Vec<String>,
    pub weights: Vec<String>,
}

impl PairRecord {
    pub fn of(pair: &LogPairCurve) -> Self {
        Self {
            genus: pair.genus(),
            points: pair.marked_points().iter().map(format_point).collect(),
            weights: pair.weights().iter().map(format_rational).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumRow {
    pub stratum: String,
    pub m: usize,
    pub location: StratumLocation,
    /// Exact exponent E as "p/q".
    pub exponent: String,
    pub integrable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub z: Option<f64>,
    pub stderr: Option<f64>,
    pub divergent: bool,
    pub seeds: Vec<SeedDiagnostic>,
}

/// Outcome of the one-cluster Gibbs stability probe. A passed probe is
/// evidence, not a proof: multi-cluster strata are not examined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub pair: PairRecord,
    pub k: String,
    pub gamma: String,
    pub n: usize,
    pub weight_condition: Option<bool>,
    pub strata: Vec<StratumRow>,
    pub partition: Option<McSummary>,
    pub verdict: Verdict,
    pub witness: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeSettings {
    /// Total Monte Carlo budget; 0 skips the partition estimate.
    pub budget: usize,
    pub seed: u64,
    pub proposal: Proposal,
    pub exec: Execution,
}

impl Default for ProbeSettings {
    fn default() -> Self {
        Self {
            budget: 300_000,
            seed: 0,
            proposal: Proposal::Defensive,
            exec: Execution::Parallel,
        }
    }
}

pub fn gibbs_stable_probe(
    pair: &LogPairCurve,
    k: Rational64,
    gamma: Rational64,
    settings: &ProbeSettings,
) -> Result<StabilityReport> {
    let params = DeformedDensityParams::new(pair.clone(), k, gamma)?;
    probe_params(&params, settings)
}

/// The probe for an arbitrary deformed density (including a section twist).
pub fn probe_params(
    params: &DeformedDensityParams,
    settings: &ProbeSettings,
) -> Result<StabilityReport> {
    let wc = weight_condition(params.pair())?;
    let strata = one_cluster_strata(params);
    let rows: Vec<StratumRow> = strata
        .iter()
        .map(|(s, e)| StratumRow {
            stratum: s.describe(),
            m: s.m,
            location: s.location,
            exponent: format_rational(&e.exponent),
            integrable: e.integrable,
        })
        .collect();
    let witness = strata
        .iter()
        .filter(|(_, e)| !e.integrable)
        .min_by_key(|(_, e)| e.exponent)
        .map(|(s, e)| format!("{} has E = {}", s.describe(), format_rational(&e.exponent)));
    let partition = if settings.budget > 0 {
        let est = partition_estimate(
            params,
            PartitionMethod::ImportanceMC {
                budget: settings.budget,
                seed: settings.seed,
                proposal: settings.proposal,
            },
            settings.exec,
        )?;
        let v = est.value();
        Some(McSummary {
            z: v.map(|x| x.0),
            stderr: v.map(|x| x.1),
            divergent: est.is_divergent(),
            seeds: est.seeds().to_vec(),
        })
    } else {
        None
    };
    let verdict = if witness.is_some() {
        Verdict::UnstableWitness
    } else {
        match &partition {
            Some(p) if !p.divergent => Verdict::StableProbePassed,
            _ => Verdict::Inconclusive,
        }
    };
    Ok(StabilityReport {
        pair: PairRecord::of(params.pair()),
        k: format_rational(&params.k()),
        gamma: format_rational(&params.gamma()),
        n: params.n(),
        weight_condition: wc,
        strata: rows,
        partition,
        verdict,
        witness,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{SpherePoint, C64};

    fn r(p: i64, q: i64) -> Rational64 {
        Rational64::new(p, q)
    }

    #[test]
    fn verdicts() {
        let settings = ProbeSettings {
            budget: 60_000,
            ..Default::default()
        };
        let bare = gibbs_stable_probe(&LogPairCurve::bare(), r(1, 1), r(1, 1), &settings).unwrap();
        assert_eq!(bare.verdict, Verdict::UnstableWitness);
        assert_eq!(bare.weight_condition, None);
        let pts = vec![
            SpherePoint::zero(),
            SpherePoint::infinity(),
            SpherePoint::from_chart(C64::new(1.0, 0.0)),
        ];
        let half = LogPairCurve::genus0(pts, vec![r(1, 2); 3]).unwrap();
        let rep = gibbs_stable_probe(&half, r(2, 1), r(1, 1), &settings).unwrap();
        assert_eq!(rep.verdict, Verdict::StableProbePassed);
        let heavy = LogPairCurve::genus0(vec![SpherePoint::zero()], vec![r(1, 1)]).unwrap();
        let rep = gibbs_stable_probe(&heavy, r(1, 1), r(1, 1), &ProbeSettings { budget: 0, ..settings })
            .unwrap();
        assert_eq!(rep.verdict, Verdict::UnstableWitness);
        assert!(rep.witness.unwrap().contains("at point 1"));
    }
}
