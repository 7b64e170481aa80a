//! One-cluster collision strata of (P^1)^N.
//!
//! Shrinking a cluster of m points to size eps around a free center costs
//! volume eps^{2(m-1)}; around a fixed singular point, eps^{2m}. The density
//! grows like eps^{-alpha m(m-1)} from the pair factors and eps^{-2cm} from a
//! singular point of coefficient c. The stratum is integrable iff the net
//! exponent E = volume exponent - growth exponent is positive.

use num_rational::Rational64;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use super::density::DeformedDensityParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StratumLocation {
    Generic,
    /// Index into [`DeformedDensityParams::singular_points`].
    MarkedPoint(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stratum {
    pub m: usize,
    pub location: StratumLocation,
}

impl Stratum {
    pub fn describe(&self) -> String {
        match self.location {
            StratumLocation::Generic => format!("generic cluster m={}", self.m),
            StratumLocation::MarkedPoint(a) => format!("cluster m={} at point {}", self.m, a + 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollisionExponent {
    /// Net scaling exponent E.
    pub exponent: Rational64,
    /// E > 0; E = 0 is a logarithmic divergence.
    pub integrable: bool,
    /// Volume exponent V (E = V - growth).
    pub volume: Rational64,
}

impl CollisionExponent {
    /// Growth exponent of the density on the stratum.
    pub fn growth(&self) -> Rational64 {
        self.volume - self.exponent
    }

    /// Tail index of the density under the reference measure contributed
    /// by this stratum: P(rho > t) ~ t^{-V/growth}.
    pub fn tail_index(&self) -> Option<Rational64> {
        let g = self.growth();
        g.is_positive().then(|| self.volume / g)
    }
}

pub fn collision_exponent(
    m: usize,
    location: StratumLocation,
    params: &DeformedDensityParams,
) -> Result<CollisionExponent> {
    let n = params.n();
    let alpha = params.alpha();
    let mr = Rational64::from_integer(m as i64);
    let pairs = alpha * mr * (mr - 1);
    let two = Rational64::from_integer(2);
    let (volume, growth) = match location {
        StratumLocation::Generic => {
            if m < 2 || m > n {
                return Err(Error::BadStratum(format!("generic cluster needs 2 <= m <= {n}, got {m}")));
            }
            (two * (mr - 1), pairs)
        }
        StratumLocation::MarkedPoint(a) => {
            if m < 1 || m > n {
                return Err(Error::BadStratum(format!("marked cluster needs 1 <= m <= {n}, got {m}")));
            }
            let c = params
                .singular_points()
                .get(a)
                .ok_or_else(|| Error::BadStratum(format!("no singular point {}", a + 1)))?
                .coeff;
            (two * mr, pairs + two * c * mr)
        }
    };
    let exponent = volume - growth;
    Ok(CollisionExponent {
        exponent,
        integrable: exponent > Rational64::zero(),
        volume,
    })
}

/// Every one-cluster stratum of the density, in a fixed order: generic
/// clusters m = 2..N, then each singular point with m = 1..N.
pub fn one_cluster_strata(params: &DeformedDensityParams) -> Vec<(Stratum, CollisionExponent)> {
    let n = params.n();
    let mut out = Vec::new();
    for m in 2..=n {
        let loc = StratumLocation::Generic;
        out.push((Stratum { m, location: loc }, collision_exponent(m, loc, params).expect("valid")));
    }
    for a in 0..params.singular_points().len() {
        for m in 1..=n {
            let loc = StratumLocation::MarkedPoint(a);
            out.push((Stratum { m, location: loc }, collision_exponent(m, loc, params).expect("valid")));
        }
    }
    out
}

/// Smallest tail index over all strata (`None` if the density is bounded).
pub fn min_tail_index(params: &DeformedDensityParams) -> Option<Rational64> {
    one_cluster_strata(params)
        .iter()
        .filter_map(|(_, e)| e.tail_index())
        .min()
}
