use num_rational::Rational64;
use num_traits::{One, Signed, Zero};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{random_point, SpherePoint};
use crate::pair::LogPairCurve;
use crate::sections::BinaryForm;

/// A Q-divisor sum c_a p_a on a curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveDivisor {
    pub components: Vec<(SpherePoint, Rational64)>,
}

impl CurveDivisor {
    pub fn new(components: Vec<(SpherePoint, Rational64)>) -> Result<Self> {
        for i in 0..components.len() {
            for j in 0..i {
                if components[i].0.chordal(&components[j].0) < 1e-12 {
                    return Err(Error::InvalidParameter(format!(
                        "divisor components {j} and {i} coincide"
                    )));
                }
            }
        }
        Ok(Self { components })
    }

    /// The zero divisor z0 z1 = 0 of the toric anticanonical section.
    pub fn toric() -> Self {
        Self {
            components: vec![
                (SpherePoint::zero(), Rational64::one()),
                (SpherePoint::infinity(), Rational64::one()),
            ],
        }
    }

    pub fn is_klt(&self) -> bool {
        self.components.iter().all(|(_, c)| *c < Rational64::one())
    }
}

/// Log canonical threshold of a divisor on a curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Lct {
    Finite(Rational64),
    /// No positive coefficient: every multiple is integrable.
    Infinite,
}

impl Lct {
    pub fn is_klt(&self) -> bool {
        match self {
            Lct::Finite(t) => *t > Rational64::one(),
            Lct::Infinite => true,
        }
    }
}

/// 1 / max_a c_a, exactly: |z|^{-2tc} is locally integrable iff tc < 1.
pub fn lct_curve_divisor(d: &CurveDivisor) -> Result<Lct> {
    let max = d
        .components
        .iter()
        .map(|(_, c)| *c)
        .max()
        .ok_or(Error::EmptyDivisor)?;
    if max.is_positive() {
        Ok(Lct::Finite(max.recip()))
    } else {
        Ok(Lct::Infinite)
    }
}

/// Genus-0 weight condition: 2 - sum w > 0 and w_a < sum_{b != a} w_b.
/// `None` when there are no marked points.
pub fn weight_condition(pair: &LogPairCurve) -> Result<Option<bool>> {
    if pair.genus() != 0 {
        return Err(Error::WrongGenus {
            expected: 0,
            got: pair.genus(),
        });
    }
    if pair.weights().is_empty() {
        return Ok(None);
    }
    let total = pair.weight_sum();
    let ample = Rational64::from_integer(2) - total > Rational64::zero();
    let balanced = pair.weights().iter().all(|w| *w < total - w);
    Ok(Some(ample && balanced))
}

/// One line of the genus-1 exponent ledger: the power of |z| contributed
/// near the marked point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentEntry {
    pub factor: String,
    pub exponent: Rational64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentLedger {
    pub k: u32,
    pub dimension: usize,
    pub entries: Vec<ExponentEntry>,
    pub total: Rational64,
    /// |z|^total is locally integrable: total > -2.
    pub klt: bool,
}

/// Exponent bookkeeping for an elliptic curve with Delta = -(1/k) x.
pub fn genus1_exponent_bookkeeping(k: u32) -> Result<ExponentLedger> {
    genus1_exponent_bookkeeping_with(k, Rational64::new(-1, k.max(1) as i64))
}

/// Same, for an arbitrary coefficient of the marked point.
pub fn genus1_exponent_bookkeeping_with(k: u32, coeff: Rational64) -> Result<ExponentLedger> {
    if k == 0 {
        return Err(Error::InvalidParameter("level k must be >= 1".into()));
    }
    let kr = Rational64::from_integer(k as i64);
    let pair = LogPairCurve::genus1(coeff);
    let n = crate::pair::dimension(&pair, kr)?;
    let deg = pair.bundle_degree(kr)? as i64;
    // det S is a section of the degree-`deg` bundle -k(K + Delta) = O(deg x),
    // so for N = 1 it vanishes to order deg at x and nowhere else
    let det_order = Rational64::from_integer(deg);
    let entries = vec![
        ExponentEntry {
            factor: "|det S|^(-2/k)".into(),
            exponent: -Rational64::from_integer(2) / kr * det_order,
        },
        ExponentEntry {
            factor: "|s_Delta|^(-2)".into(),
            exponent: -Rational64::from_integer(2) * coeff,
        },
    ];
    let total = entries.iter().fold(Rational64::zero(), |a, e| a + e.exponent);
    Ok(ExponentLedger {
        k,
        dimension: n,
        entries,
        total,
        klt: total > Rational64::from_integer(-2),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalLct {
    /// 1/e, attained by a section with a single e-fold zero.
    pub exact: Rational64,
    /// Smallest lct among the sampled sections.
    pub min_sampled: Rational64,
    pub samples: usize,
}

/// Global log canonical threshold of a degree-e bundle on a curve, with a
/// sampled confirmation over sections whose zeros have random multiplicities.
pub fn global_lct_probe(
    pair: &LogPairCurve,
    degree: u32,
    samples: usize,
    seed: u64,
) -> Result<GlobalLct> {
    if pair.genus() > 1 {
        return Err(Error::Unsupported(format!("genus {} curves", pair.genus())));
    }
    if degree == 0 {
        return Err(Error::InvalidParameter("bundle degree must be >= 1".into()));
    }
    let e = degree as usize;
    let exact = Rational64::new(1, degree as i64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut min_sampled: Option<Rational64> = None;
    for _ in 0..samples {
        let s = random_section_with_multiplicities(&mut rng, e);
        let zeros = s.zeros(0.05);
        let max_mult = zeros.iter().map(|(_, m)| *m).max().unwrap_or(0);
        if max_mult == 0 {
            continue;
        }
        let t = Rational64::new(1, max_mult as i64);
        min_sampled = Some(min_sampled.map_or(t, |m: Rational64| m.min(t)));
    }
    Ok(GlobalLct {
        exact,
        min_sampled: min_sampled.unwrap_or(Rational64::one()),
        samples,
    })
}

/// A degree-e form whose zeros form a random composition of e, with zeros
/// kept at chordal distance at least 0.2 from each other.
pub fn random_section_with_multiplicities<R: Rng + ?Sized>(rng: &mut R, e: usize) -> BinaryForm {
    let mut mults = Vec::new();
    let mut left = e;
    while left > 0 {
        let m = rng.random_range(1..=left);
        mults.push(m);
        left -= m;
    }
    let mut roots: Vec<(SpherePoint, usize)> = Vec::new();
    for m in mults {
        loop {
            let p = random_point(rng);
            if roots.iter().all(|(q, _)| q.chordal(&p) > 0.2) {
                roots.push((p, m));
                break;
            }
        }
    }
    BinaryForm::from_roots(&roots)
}
