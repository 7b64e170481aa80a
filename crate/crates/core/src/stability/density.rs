use num_rational::Rational64;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::SpherePoint;
use crate::pair::{rational_to_f64, LogPairCurve};
use crate::sections::{BinaryForm, Configuration, SectionSpace};

/// A point where the one-point factor is singular, with its local
/// coefficient c: the factor behaves like chordal(x, point)^{-2c}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingularPoint {
    pub point: SpherePoint,
    pub coeff: Rational64,
}

/// Parameters of the deformed Gibbs density
/// ||det S||^{-2 gamma/k} prod_i prod_a chordal(x_i, p_a)^{-2 w_a} prod_i |s(x_i)|^{-2(1-gamma)}
/// relative to the product of Fubini-Study area forms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeformedDensityParams {
    gamma: Rational64,
    space: SectionSpace,
    section: Option<BinaryForm>,
    singular: Vec<SingularPoint>,
}

impl DeformedDensityParams {
    /// The canonical (gamma = 1) or tempered density of a log pair. `gamma`
    /// may be 0, which gives the product reference measure.
    pub fn new(pair: LogPairCurve, k: Rational64, gamma: Rational64) -> Result<Self> {
        if gamma.is_negative() || gamma > Rational64::one() {
            return Err(Error::InvalidParameter(format!("gamma must lie in [0,1], got {gamma}")));
        }
        if pair.weights().iter().any(|w| w.is_negative()) {
            return Err(Error::InvalidParameter("weights must be nonnegative".into()));
        }
        let space = SectionSpace::new(pair, k)?;
        let singular = space
            .pair()
            .marked_points()
            .iter()
            .zip(space.pair().weights())
            .map(|(p, w)| SingularPoint {
                point: *p,
                coeff: *w,
            })
            .collect();
        Ok(Self {
            gamma,
            space,
            section: None,
            singular,
        })
    }

    /// Adds the (1 - gamma) S deformation for an anticanonical section s.
    pub fn with_section(
        pair: LogPairCurve,
        k: Rational64,
        gamma: Rational64,
        s: BinaryForm,
    ) -> Result<Self> {
        if s.degree() != 2 {
            return Err(Error::DegreeMismatch {
                expected: 2,
                got: s.degree(),
            });
        }
        if !(gamma.is_positive() && gamma < Rational64::one()) {
            return Err(Error::InvalidParameter(format!(
                "the deformation needs gamma in (0,1), got {gamma}"
            )));
        }
        let mut me = Self::new(pair, k, gamma)?;
        let one_minus = Rational64::one() - gamma;
        for (root, mult) in s.zeros(1e-6) {
            let c = one_minus * Rational64::from_integer(mult as i64);
            match me.singular.iter_mut().find(|sp| sp.point.chordal(&root) < 1e-9) {
                Some(sp) => sp.coeff += c,
                None => me.singular.push(SingularPoint { point: root, coeff: c }),
            }
        }
        me.section = Some(s);
        Ok(me)
    }

    pub fn gamma(&self) -> Rational64 {
        self.gamma
    }

    pub fn gamma_f64(&self) -> f64 {
        rational_to_f64(&self.gamma)
    }

    pub fn k(&self) -> Rational64 {
        self.space.level()
    }

    /// alpha = gamma / k.
    pub fn alpha(&self) -> Rational64 {
        self.gamma / self.space.level()
    }

    pub fn n(&self) -> usize {
        self.space.dimension()
    }

    pub fn space(&self) -> &SectionSpace {
        &self.space
    }

    pub fn pair(&self) -> &LogPairCurve {
        self.space.pair()
    }

    pub fn section(&self) -> Option<&BinaryForm> {
        self.section.as_ref()
    }

    pub fn singular_points(&self) -> &[SingularPoint] {
        &self.singular
    }

    /// The same density at another gamma (the section, if any, is kept).
    pub fn with_gamma(&self, gamma: Rational64) -> Result<Self> {
        match &self.section {
            Some(s) => Self::with_section(self.pair().clone(), self.k(), gamma, s.clone()),
            None => Self::new(self.pair().clone(), self.k(), gamma),
        }
    }

    /// Log of the one-point factor at p; +inf on a singular point.
    pub fn log_point_factor(&self, p: &SpherePoint) -> f64 {
        let mut acc = 0.0;
        for (q, w) in self.pair().marked_points().iter().zip(self.pair().weights()) {
            if w.is_zero() {
                continue;
            }
            let c = p.chordal(q);
            if c == 0.0 {
                return f64::INFINITY;
            }
            acc -= 2.0 * rational_to_f64(w) * c.ln();
        }
        if let Some(s) = &self.section {
            let v = s.eval(p).norm();
            if v == 0.0 {
                return f64::INFINITY;
            }
            acc -= 2.0 * (1.0 - self.gamma_f64()) * v.ln();
        }
        acc
    }

    /// Log of the pair factor chordal(p, q)^{-2 alpha}; +inf on collision.
    pub fn log_pair_factor(&self, p: &SpherePoint, q: &SpherePoint) -> f64 {
        if self.gamma.is_zero() {
            return 0.0;
        }
        let c = p.chordal(q);
        if c == 0.0 {
            return f64::INFINITY;
        }
        -2.0 * rational_to_f64(&self.alpha()) * c.ln()
    }

    /// Unnormalized log-density of a point tuple, +inf on the singular locus.
    pub fn log_density_points(&self, pts: &[SpherePoint]) -> f64 {
        let a = 2.0 * rational_to_f64(&self.alpha());
        let mut acc = 0.0;
        let mut pair_log = 0.0;
        for (j, p) in pts.iter().enumerate() {
            acc += self.log_point_factor(p);
            if a != 0.0 {
                for q in &pts[..j] {
                    pair_log += p.chordal(q).ln();
                }
            }
        }
        if a != 0.0 {
            acc -= a * pair_log;
        }
        if acc.is_nan() {
            f64::INFINITY
        } else {
            acc
        }
    }
}

/// Value of the deformed log-density at a configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LogDensity {
    Finite(f64),
    /// The configuration lies on the singular locus; the payload names the
    /// stratum that was hit.
    Infinite(String),
}

impl LogDensity {
    pub fn value(&self) -> f64 {
        match self {
            LogDensity::Finite(v) => *v,
            LogDensity::Infinite(_) => f64::INFINITY,
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, LogDensity::Infinite(_))
    }
}

/// Unnormalized log-density of the deformed Gibbs measure relative to the
/// product Fubini-Study measure.
pub fn deformed_log_density(
    params: &DeformedDensityParams,
    config: &Configuration,
) -> Result<LogDensity> {
    let n = params.n();
    if config.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: config.len(),
        });
    }
    let pts = &config.points;
    if params.gamma().is_positive() {
        for j in 0..n {
            for i in 0..j {
                if pts[i].coincides(&pts[j]) {
                    return Ok(LogDensity::Infinite(format!("x_{} = x_{}", i + 1, j + 1)));
                }
            }
        }
    }
    for (i, p) in pts.iter().enumerate() {
        if params.log_point_factor(p).is_infinite() {
            let which = params
                .singular_points()
                .iter()
                .position(|s| s.point.chordal(p) < 1e-12)
                .map(|a| format!("singular point {}", a + 1))
                .unwrap_or_else(|| "a zero of s".into());
            return Ok(LogDensity::Infinite(format!("x_{} at {which}", i + 1)));
        }
    }
    Ok(LogDensity::Finite(params.log_density_points(pts)))
}
