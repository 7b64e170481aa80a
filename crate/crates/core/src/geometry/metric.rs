use serde::{Deserialize, Serialize};

use super::point::{SpherePoint, C64};

/// One of the two affine charts of P^1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Chart {
    /// z = z1/z0, defined where z0 != 0.
    Zero,
    /// w = z0/z1, defined where z1 != 0.
    One,
}

impl Chart {
    /// The chart in which `p` has coordinate of modulus at most one.
    pub fn canonical(p: &SpherePoint) -> Chart {
        if p.z0().norm() >= p.z1().norm() {
            Chart::Zero
        } else {
            Chart::One
        }
    }

    pub fn coordinate(self, p: &SpherePoint) -> Option<C64> {
        match self {
            Chart::Zero if p.z0().norm() > 0.0 => Some(p.z1() / p.z0()),
            Chart::One if p.z1().norm() > 0.0 => Some(p.z0() / p.z1()),
            _ => None,
        }
    }
}

/// The Fubini-Study metric on O(d), weight d log(1 + |z|^2) in either chart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceMetric {
    pub degree: u32,
}

impl ReferenceMetric {
    pub fn new(degree: u32) -> Self {
        Self { degree }
    }

    /// The anticanonical metric (d = 2); e^{-phi} is the Fubini-Study area form of mass pi.
    pub fn anticanonical() -> Self {
        Self { degree: 2 }
    }

    /// -phi_0 at `p` in the chart `chart`, i.e. the log-density of e^{-phi_0}
    /// relative to Lebesgue measure in that chart.
    pub fn log_density_in(&self, p: &SpherePoint, chart: Chart) -> Option<f64> {
        chart
            .coordinate(p)
            .map(|z| -(self.degree as f64) * (z.norm_sqr()).ln_1p())
    }

    /// Log-density in the canonical chart of `p`.
    pub fn log_density(&self, p: &SpherePoint) -> f64 {
        self.log_density_in(p, Chart::canonical(p))
            .expect("canonical chart always contains the point")
    }

    /// Total mass of e^{-phi_0} against chart Lebesgue measure, finite for d >= 2.
    pub fn total_mass(&self) -> Option<f64> {
        (self.degree >= 2).then(|| std::f64::consts::PI / (self.degree as f64 - 1.0))
    }
}

/// log |dz/dw|^2 for the transition from chart `to` coordinates back to
/// `from` coordinates; densities satisfy log rho_to = log rho_from + this.
pub fn chart_log_jacobian(p: &SpherePoint, from: Chart, to: Chart) -> Option<f64> {
    if from == to {
        return Some(0.0);
    }
    // z = 1/w  =>  |dz/dw|^2 = |z|^4
    let z = from.coordinate(p)?;
    to.coordinate(p)?;
    Some(2.0 * z.norm_sqr().ln())
}

/// Free-function form of [`ReferenceMetric::log_density`].
pub fn fs_log_density(metric: &ReferenceMetric, p: &SpherePoint) -> f64 {
    metric.log_density(p)
}
