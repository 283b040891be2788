use nalgebra::DMatrix;
use num_complex::Complex64;

use super::state::DensityMatrix;
use crate::error::{invalid, Result};
use crate::util::{ln_factorials, sqrt_binomial};

/// Pure-loss channel with transmittance `t`:
/// `rho'_{mn} = sum_k sqrt(C(m+k,k) C(n+k,k)) t^{(m+n)/2} (1-t)^k rho_{m+k,n+k}`.
pub fn loss_channel(rho: &DensityMatrix, t: f64) -> Result<DensityMatrix> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(invalid(format!("transmittance must lie in (0, 1], got {t}")));
    }
    if t == 1.0 {
        return Ok(rho.clone());
    }
    let d = rho.dim();
    let lnf = ln_factorials(2 * d);
    let src = rho.matrix();
    let ln_t = t.ln();
    let ln_r = (1.0 - t).ln();
    let out = DMatrix::from_fn(d, d, |m, n| {
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 0..d - m.max(n) {
            let w = (0.5 * (m + n) as f64 * ln_t + k as f64 * ln_r).exp()
                * sqrt_binomial(&lnf, m + k, k)
                * sqrt_binomial(&lnf, n + k, k);
            acc += src[(m + k, n + k)] * w;
        }
        acc
    });
    Ok(DensityMatrix { mat: out })
}
