//! Order of vanishing of x -> det S(x, x_2, ..., x_N) along the zero
//! divisor of an anticanonical section, measured from the slope of
//! log|det| on a shrinking path.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{random_point, SpherePoint};
use crate::sections::{slater_log_lu, BinaryForm, Configuration, SectionSpace};

const RADII: [f64; 2] = [1e-3, 1e-4];
const SLOPE_AGREEMENT: f64 = 0.1;
const MAX_RESAMPLES: usize = 16;

/// Local slope d log|det| / d log eps at the two radii, with the other
/// points frozen at `frozen` (N - 1 points) and x_i approaching `root`.
pub fn vanishing_slopes(
    space: &SectionSpace,
    root: &SpherePoint,
    i: usize,
    frozen: &[SpherePoint],
    psi: f64,
) -> Result<[f64; 2]> {
    let n = space.dimension();
    if frozen.len() + 1 != n || i >= n {
        return Err(Error::DimensionMismatch {
            expected: n - 1,
            got: frozen.len(),
        });
    }
    let log_det = |eps: f64| -> Result<f64> {
        let mut pts = frozen.to_vec();
        pts.insert(i, root.offset(eps, psi));
        Ok(slater_log_lu(space, &Configuration::new(pts))?.ln())
    };
    let mut out = [0.0; 2];
    for (o, r) in out.iter_mut().zip(RADII) {
        let (a, b) = (log_det(r)?, log_det(r / 2.0)?);
        *o = (a - b) / std::f64::consts::LN_2;
    }
    Ok(out)
}

/// l with det S(x_1, ...) = s(x_i)^l q near a zero of s, using explicit
/// frozen points.
pub fn vanishing_order_with(
    space: &SectionSpace,
    s: &BinaryForm,
    i: usize,
    frozen: &[SpherePoint],
) -> Result<usize> {
    let root = simple_root(s)?;
    let slopes = vanishing_slopes(space, &root, i, frozen, 0.7)?;
    if slopes.iter().any(|v| !v.is_finite()) || (slopes[0] - slopes[1]).abs() > SLOPE_AGREEMENT {
        return Err(Error::DegenerateFreeze);
    }
    Ok(slopes[1].round().max(0.0) as usize)
}

/// l for generic frozen points drawn from `seed`; frozen points are
/// resampled while the slope fit is unstable.
pub fn vanishing_order(space: &SectionSpace, s: &BinaryForm, i: usize, seed: u64) -> Result<usize> {
    let n = space.dimension();
    if n < 2 {
        return Err(Error::InvalidParameter("vanishing order needs N >= 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_RESAMPLES {
        let frozen: Vec<SpherePoint> = (0..n - 1).map(|_| random_point(&mut rng)).collect();
        match vanishing_order_with(space, s, i, &frozen) {
            Err(Error::DegenerateFreeze) => continue,
            other => return other,
        }
    }
    Err(Error::DegenerateFreeze)
}

fn simple_root(s: &BinaryForm) -> Result<SpherePoint> {
    if s.degree() != 2 {
        return Err(Error::DegreeMismatch {
            expected: 2,
            got: s.degree(),
        });
    }
    let zeros = s.zeros(1e-8);
    if zeros.len() != 2 || zeros.iter().any(|(_, m)| *m != 1) {
        return Err(Error::InvalidParameter("section must have two simple zeros".into()));
    }
    Ok(zeros[0].0)
}
