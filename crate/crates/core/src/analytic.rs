//! Closed-form squeezed-vacuum and two-photon-subtracted states, their
//! quadrature variances, and the asymptotic squeezing reached by iterated
//! Gaussification. These serve as oracles for the Fock-space numerics.

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fock::{loss_channel, DensityMatrix, FockVector};

/// `sqrt(6)`; shows up throughout the optimised displaced subtraction.
const SQRT6: f64 = 2.449_489_742_783_178;

/// Parameters of a (possibly lossy, possibly displaced-subtracted) source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqueezeParams {
    pub r: f64,
    /// `delta^2` of the operation `a^2 - delta^2`; real, may be negative.
    pub delta_sq: f64,
    /// Overall efficiency in `(0, 1]`, applied as a loss channel.
    pub eta: f64,
}

impl SqueezeParams {
    pub fn pure(r: f64) -> Self {
        Self { r, delta_sq: 0.0, eta: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r >= 0.0) || !self.r.is_finite() {
            return Err(invalid(format!("squeeze parameter must be >= 0, got {}", self.r)));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(invalid(format!("efficiency must lie in (0, 1], got {}", self.eta)));
        }
        if !self.delta_sq.is_finite() {
            return Err(invalid("delta^2 must be finite"));
        }
        Ok(())
    }

    /// Whether iterated vacuum-projection Gaussification of the subtracted
    /// state converges.
    pub fn gaussification_converges(&self) -> bool {
        asymptotic_squeeze(self.r, self.delta_sq).map(|a| a.converges).unwrap_or(false)
    }
}

/// `t^n sqrt((2n)!) / (2^n n!)` for `n = 0..=half`, by the stable ratio
/// `sqrt((2n-1)/(2n))`.
fn even_level_weights(t: f64, half: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(half + 1);
    let mut g = 1.0;
    out.push(g);
    for n in 1..=half {
        let nf = n as f64;
        g *= t * ((2.0 * nf - 1.0) / (2.0 * nf)).sqrt();
        out.push(g);
    }
    out
}

/// Squeezed vacuum `|psi(r)>` (squeezed along `Y`), renormalised after
/// truncation. Fails if more than `1e-6` of the weight reaches the cutoff.
pub fn squeezed_vacuum(r: f64, cutoff: usize) -> Result<FockVector> {
    if !(r >= 0.0) {
        return Err(invalid(format!("squeeze parameter must be >= 0, got {r}")));
    }
    if cutoff < 2 {
        return Err(invalid("cutoff must be at least 2"));
    }
    let t = r.tanh();
    let w = even_level_weights(t, cutoff / 2);
    let mut amps = vec![Complex64::new(0.0, 0.0); cutoff + 1];
    let norm = 1.0 / r.cosh().sqrt();
    for (n, g) in w.iter().enumerate() {
        amps[2 * n] = Complex64::new(g * norm, 0.0);
    }
    let v = FockVector::new(amps)?.normalized()?;
    v.check_truncation()?;
    Ok(v)
}

/// Result of `(a^2 - delta^2)|psi(r)>`.
#[derive(Debug, Clone)]
pub struct Subtracted {
    /// Normalised output state.
    pub state: FockVector,
    /// Squared norm before normalisation (the heralding weight).
    pub weight: f64,
}

/// `(a^2 - delta^2)|psi(r)>` with Fock coefficients
/// `[(2n+1) tanh r - delta^2] (tanh r)^n sqrt((2n)!)/(2^n n!) / sqrt(cosh r)`.
pub fn two_photon_subtracted(r: f64, delta_sq: f64, cutoff: usize) -> Result<Subtracted> {
    if !(r >= 0.0) {
        return Err(invalid(format!("squeeze parameter must be >= 0, got {r}")));
    }
    if cutoff < 2 {
        return Err(invalid("cutoff must be at least 2"));
    }
    let t = r.tanh();
    let w = even_level_weights(t, cutoff / 2);
    let norm = 1.0 / r.cosh().sqrt();
    let mut amps = vec![Complex64::new(0.0, 0.0); cutoff + 1];
    for (n, g) in w.iter().enumerate() {
        let c = ((2 * n + 1) as f64 * t - delta_sq) * g * norm;
        amps[2 * n] = Complex64::new(c, 0.0);
    }
    let raw = FockVector::new(amps)?;
    let weight = raw.norm_sqr();
    if weight == 0.0 {
        return Err(Error::Annihilated);
    }
    let state = raw.normalized()?;
    state.check_truncation()?;
    Ok(Subtracted { state, weight })
}

/// Lossy squeezed vacuum: `|psi(r)>` through a loss channel of efficiency `eta`.
pub fn lossy_squeezed(r: f64, eta: f64, cutoff: usize) -> Result<DensityMatrix> {
    loss_channel(&squeezed_vacuum(r, cutoff)?.to_density(), eta)
}

/// Two-photon-subtracted (optionally displaced) state through a loss channel.
/// Subtraction commutes with loss up to normalisation, so this is also the
/// subtracted lossy squeezed state.
pub fn lossy_subtracted(p: &SqueezeParams, cutoff: usize) -> Result<DensityMatrix> {
    p.validate()?;
    let s = two_photon_subtracted(p.r, p.delta_sq, cutoff)?;
    loss_channel(&s.state.to_density(), p.eta)
}

/// `(var_x, var_y)` of the two-photon-subtracted squeezed vacuum.
/// The `r -> 0` limit (vacuum, both 1) is returned at `r = 0`.
pub fn variances_2s(r: f64) -> Result<(f64, f64)> {
    if !(r >= 0.0) {
        return Err(invalid(format!("squeeze parameter must be >= 0, got {r}")));
    }
    let (s, c) = (r.sinh(), r.cosh());
    let den = 2.0 * s * s + c * c;
    let vx = (2.0 * r).exp() * (1.0 + 4.0 * (s * c + 2.0 * s * s) / den);
    let vy = (-2.0 * r).exp() * (1.0 - 4.0 * (s * c - 2.0 * s * s) / den);
    Ok((vx, vy))
}

/// `(var_x, var_y)` of `(a^2 - delta^2)|psi(r)>`.
pub fn variances_2s_displaced(r: f64, delta_sq: f64) -> Result<(f64, f64)> {
    if !(r >= 0.0) {
        return Err(invalid(format!("squeeze parameter must be >= 0, got {r}")));
    }
    let (s, c) = (r.sinh(), r.cosh());
    let s2 = s * s;
    let den = 2.0 * s2 * s2 + (c * s - delta_sq).powi(2);
    if !(den > 0.0) {
        return Err(Error::Annihilated);
    }
    let vx = (2.0 * r).exp() * (1.0 + 4.0 * s2 * (2.0 * s2 + c * s - delta_sq) / den);
    let vy = (-2.0 * r).exp() * (1.0 + 4.0 * s2 * (2.0 * s2 - c * s + delta_sq) / den);
    Ok((vx, vy))
}

/// `delta^2` minimising the squeezed variance of the displaced subtraction:
/// `cosh r sinh r - (2 + sqrt 6) sinh^2 r`.
pub fn optimal_delta_sq(r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(invalid(format!("squeeze parameter must be > 0, got {r}")));
    }
    let (s, c) = (r.sinh(), r.cosh());
    Ok(c * s - (2.0 + SQRT6) * s * s)
}

/// Variance pair reached at the optimal `delta^2`, independent of `r` up to
/// the factors `e^{±2r}`: `((7 + 2 sqrt6)/(3 + sqrt6), 3/(3 + sqrt6))`.
pub fn optimal_variance_factors() -> (f64, f64) {
    ((7.0 + 2.0 * SQRT6) / (3.0 + SQRT6), 3.0 / (3.0 + SQRT6))
}

/// Squeezing gain of the optimised displaced subtraction in dB.
pub fn optimal_gain_db() -> f64 {
    -10.0 * optimal_variance_factors().1.log10()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticSqueeze {
    pub tanh_rg: f64,
    pub converges: bool,
}

impl AsymptoticSqueeze {
    /// Squeezed variance `(1 - tanh r_G)/(1 + tanh r_G)` of the limit state,
    /// `None` when the iteration diverges.
    pub fn var_y(&self) -> Option<f64> {
        self.converges.then(|| (1.0 - self.tanh_rg) / (1.0 + self.tanh_rg))
    }
}

/// `tanh r_G = (3 tanh r - delta^2) tanh r / (tanh r - delta^2)`; converges
/// iff `|tanh r_G| < 1`. For `delta^2 = 0` this is `3 tanh r`.
pub fn asymptotic_squeeze(r: f64, delta_sq: f64) -> Result<AsymptoticSqueeze> {
    if !(r >= 0.0) {
        return Err(invalid(format!("squeeze parameter must be >= 0, got {r}")));
    }
    let t = r.tanh();
    let tanh_rg = if delta_sq == 0.0 {
        3.0 * t
    } else {
        let den = t - delta_sq;
        if den.abs() < 1e-14 {
            return Err(Error::Singular(format!("pole at tanh r = delta^2 = {delta_sq}")));
        }
        (3.0 * t - delta_sq) * t / den
    };
    Ok(AsymptoticSqueeze {
        tanh_rg,
        converges: tanh_rg.abs() < 1.0,
    })
}

/// `delta^2` that makes the Gaussified limit reach `tanh r_G = target`:
/// `(target - 3 tanh r) tanh r / (target - tanh r)`.
pub fn delta_for_target(r: f64, tanh_rg_target: f64) -> Result<f64> {
    let t = r.tanh();
    let den = tanh_rg_target - t;
    if den.abs() < 1e-14 {
        return Err(invalid("target squeezing equals the input squeezing"));
    }
    Ok((tanh_rg_target - 3.0 * t) * t / den)
}

/// One row of the distilled-variance-versus-input table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fig1Row {
    pub r: f64,
    /// Initial squeezed vacuum, `e^{-2r}`.
    pub var_a: f64,
    /// After two-photon subtraction.
    pub var_b: f64,
    /// Asymptotic Gaussified state, `(1 - 3 tanh r)/(1 + 3 tanh r)`; `None`
    /// where the iteration diverges.
    pub var_c: Option<f64>,
}

pub fn fig1_dataset(r_grid: &[f64]) -> Result<Vec<Fig1Row>> {
    r_grid
        .iter()
        .map(|&r| {
            let (_, var_b) = variances_2s(r)?;
            let var_c = asymptotic_squeeze(r, 0.0)?.var_y();
            Ok(Fig1Row {
                r,
                var_a: (-2.0 * r).exp(),
                var_b,
                var_c,
            })
        })
        .collect()
}

/// CSV `r,varA,varB,varC`; divergent `varC` cells are empty.
pub fn write_fig1_csv<W: Write>(rows: &[Fig1Row], mut out: W) -> std::io::Result<()> {
    writeln!(out, "r,varA,varB,varC")?;
    for row in rows {
        match row.var_c {
            Some(c) => writeln!(out, "{},{},{},{}", row.r, row.var_a, row.var_b, c)?,
            None => writeln!(out, "{},{},{},", row.r, row.var_a, row.var_b)?,
        }
    }
    Ok(())
}

/// Loss-tuned source whose lossy squeezed vacuum shows `initial_db` of
/// squeezing and whose two-photon-subtracted version shows `subtracted_db`.
/// Loss acts affinely on variances, `v -> eta v + 1 - eta`, so the pair fixes
/// `(r, eta)` through the ratio `(1 - V_2s(r)) / (1 - e^{-2r})`.
pub fn tune_lossy_source(initial_db: f64, subtracted_db: f64) -> Result<SqueezeParams> {
    let v0 = 10f64.powf(-initial_db / 10.0);
    let v1 = 10f64.powf(-subtracted_db / 10.0);
    if !(v1 < v0 && v0 < 1.0) {
        return Err(invalid("need 0 < initial_db < subtracted_db"));
    }
    let want = (1.0 - v1) / (1.0 - v0);
    let f = |r: f64| -> f64 {
        let (_, vy) = variances_2s(r).unwrap();
        (1.0 - vy) / (1.0 - (-2.0 * r).exp()) - want
    };
    // the subtraction only helps below tanh r = 1/2
    let (mut lo, mut hi) = (1e-6, 0.5f64.atanh() - 1e-12);
    if f(lo).signum() == f(hi).signum() {
        return Err(invalid(format!(
            "no loss-free-subtraction source produces {initial_db} dB -> {subtracted_db} dB"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid).signum() == f(lo).signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let r = 0.5 * (lo + hi);
    let eta = (1.0 - v0) / (1.0 - (-2.0 * r).exp());
    if eta > 1.0 {
        return Err(invalid(format!("required efficiency {eta} exceeds 1")));
    }
    Ok(SqueezeParams { r, delta_sq: 0.0, eta })
}
