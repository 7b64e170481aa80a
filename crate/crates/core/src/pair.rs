//! Log pairs (X, Delta) on curves of genus 0 and 1.

use num_rational::Rational64;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::SpherePoint;

/// A curve with a weighted divisor Delta = sum_a w_a p_a.
///
/// In genus 0 the marked points live on P^1. In genus 1 only the
/// coefficient bookkeeping is numerical; the single marked point is carried
/// as a label and its coordinates are never evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogPairCurve {
    genus: u32,
    marked_points: Vec<SpherePoint>,
    weights: Vec<Rational64>,
}

impl LogPairCurve {
    /// P^1 with marked points `points` of weights `weights`.
    pub fn genus0(points: Vec<SpherePoint>, weights: Vec<Rational64>) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                got: weights.len(),
            });
        }
        for i in 0..points.len() {
            for j in 0..i {
                if points[i].chordal(&points[j]) < 1e-12 {
                    return Err(Error::InvalidParameter(format!(
                        "marked points {j} and {i} coincide"
                    )));
                }
            }
        }
        Ok(Self {
            genus: 0,
            marked_points: points,
            weights,
        })
    }

    /// P^1 without marked points.
    pub fn bare() -> Self {
        Self {
            genus: 0,
            marked_points: Vec::new(),
            weights: Vec::new(),
        }
    }

    /// An elliptic curve with Delta = coeff * x for a single point x.
    pub fn genus1(coeff: Rational64) -> Self {
        Self {
            genus: 1,
            marked_points: vec![SpherePoint::zero()],
            weights: vec![coeff],
        }
    }

    pub fn genus(&self) -> u32 {
        self.genus
    }

    pub fn marked_points(&self) -> &[SpherePoint] {
        &self.marked_points
    }

    pub fn weights(&self) -> &[Rational64] {
        &self.weights
    }

    pub fn weight_sum(&self) -> Rational64 {
        self.weights.iter().fold(Rational64::zero(), |a, w| a + w)
    }

    /// -(K_X + Delta) is ample (genus 0): 2 - sum w > 0.
    pub fn is_ample(&self) -> bool {
        self.genus == 0 && Rational64::from_integer(2) - self.weight_sum() > Rational64::zero()
    }

    /// All coefficients are below one.
    pub fn is_klt(&self) -> bool {
        self.weights.iter().all(|w| *w < Rational64::one())
    }

    /// Degree of -k(K_X + Delta), which must be a nonnegative integer
    /// (genus 0) or a positive integer (genus 1).
    pub fn bundle_degree(&self, k: Rational64) -> Result<u64> {
        if !k.is_positive() {
            return Err(Error::InvalidParameter(format!("level k must be positive, got {k}")));
        }
        let deg = match self.genus {
            0 => k * (Rational64::from_integer(2) - self.weight_sum()),
            1 => -k * self.weight_sum(),
            g => return Err(Error::Unsupported(format!("genus {g} curves"))),
        };
        let ok = deg.is_integer() && !deg.is_negative() && (self.genus == 0 || deg.is_positive());
        if !ok {
            return Err(Error::NotALineBundle(deg.to_string()));
        }
        Ok(deg.to_integer() as u64)
    }

    /// Weights as floating point numbers.
    pub fn weights_f64(&self) -> Vec<f64> {
        self.weights.iter().map(rational_to_f64).collect()
    }
}

pub fn rational_to_f64(r: &Rational64) -> f64 {
    r.to_f64().expect("finite rational")
}

/// dim H^0(X, -k(K_X + Delta)).
pub fn dimension(pair: &LogPairCurve, k: Rational64) -> Result<usize> {
    let d = pair.bundle_degree(k)? as usize;
    Ok(match pair.genus() {
        0 => d + 1,
        // Riemann-Roch on an elliptic curve: h^0 = degree for positive degree
        _ => d,
    })
}

/// "inf", a real number, or "a+bi" / "a-bi" for a chart coordinate, with
/// 13 significant digits.
pub fn format_point(p: &SpherePoint) -> String {
    let tidy = |x: f64| -> f64 {
        let v: f64 = format!("{x:.12e}").parse().expect("formatted float");
        if v == 0.0 {
            0.0
        } else {
            v
        }
    };
    match p.chart() {
        None => "inf".into(),
        Some(z) => {
            let (re, im) = (tidy(z.re), tidy(z.im));
            if im == 0.0 {
                format!("{re}")
            } else {
                format!("{re}{}{}i", if im < 0.0 { "-" } else { "+" }, im.abs())
            }
        }
    }
}

/// Inverse of [`format_point`].
pub fn parse_point(s: &str) -> Result<SpherePoint> {
    let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    let bad = || Error::InvalidParameter(format!("cannot parse point '{s}'"));
    if t.eq_ignore_ascii_case("inf") || t == "∞" {
        return Ok(SpherePoint::infinity());
    }
    if let Some(body) = t.strip_suffix('i') {
        // split at the last sign that is not part of an exponent
        let bytes = body.as_bytes();
        let mut split = None;
        for i in (1..bytes.len()).rev() {
            if (bytes[i] == b'+' || bytes[i] == b'-') && !matches!(bytes[i - 1], b'e' | b'E') {
                split = Some(i);
                break;
            }
        }
        let (re, im) = match split {
            Some(i) => (body[..i].parse::<f64>().map_err(|_| bad())?, &body[i..]),
            None => (0.0, body),
        };
        let im = match im {
            "" | "+" => 1.0,
            "-" => -1.0,
            v => v.parse::<f64>().map_err(|_| bad())?,
        };
        return finite_point(re, im).ok_or_else(bad);
    }
    let re = t.parse::<f64>().map_err(|_| bad())?;
    finite_point(re, 0.0).ok_or_else(bad)
}

fn finite_point(re: f64, im: f64) -> Option<SpherePoint> {
    (re.is_finite() && im.is_finite())
        .then(|| SpherePoint::from_chart(crate::geometry::C64::new(re, im)))
}

/// Parses "p/q" or "p" into an exact rational.
pub fn parse_rational(s: &str) -> Result<Rational64> {
    let t = s.trim();
    let bad = || Error::InvalidParameter(format!("cannot parse rational '{s}'"));
    let (p, q) = match t.split_once('/') {
        Some((p, q)) => (
            p.trim().parse::<i64>().map_err(|_| bad())?,
            q.trim().parse::<i64>().map_err(|_| bad())?,
        ),
        None => (t.parse::<i64>().map_err(|_| bad())?, 1),
    };
    if q == 0 {
        return Err(Error::InvalidParameter(format!("zero denominator in '{s}'")));
    }
    Ok(Rational64::new(p, q))
}

/// "p/q", or "p" for integers.
pub fn format_rational(r: &Rational64) -> String {
    r.to_string()
}
