use rand::Rng as _;

use super::DpError;
use crate::rng::Rng;

/// One zero-mean Laplace draw with the given scale, by inverse CDF:
/// `sign(u) · scale · ln(1 − 2|u|)` for `u` uniform on `(−½, ½)`.
pub fn laplace_sample(scale: f64, rng: &mut Rng) -> Result<f64, DpError> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(DpError::Scale(scale));
    }
    Ok(sample_unchecked(scale, rng))
}

pub(crate) fn sample_unchecked(scale: f64, rng: &mut Rng) -> f64 {
    loop {
        let u: f64 = rng.random::<f64>() - 0.5;
        // u = -0.5 would give ln(0).
        if u > -0.5 {
            return u.signum() * scale * (1.0 - 2.0 * u.abs()).ln();
        }
    }
}

/// CDF of the zero-mean Laplace distribution.
pub fn laplace_cdf(x: f64, scale: f64) -> f64 {
    if x < 0.0 {
        0.5 * (x / scale).exp()
    } else {
        1.0 - 0.5 * (-x / scale).exp()
    }
}
