//! Maximum-likelihood reconstruction from binned 8-port homodyne samples.
//!
//! Bins are square with side `d` in coherent-label units `alpha = beta/sqrt2`,
//! centred at `alpha_mn = (m + i n) d`. Each bin is modelled by the POVM
//! element `Pi_mn = (d^2/pi) |alpha_mn><alpha_mn|`.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fock::{coherent_amplitudes, DensityMatrix, TOMOGRAPHY_CUTOFF};
use crate::sampling::SampleSet;

/// Bin side in coherent-label units.
pub const DEFAULT_BIN: f64 = 0.088_388_347_648_318_44; // 1/(8 sqrt2)
pub const DEFAULT_MAX_ITERS: usize = 500;
/// Plateau tolerance on the per-sample log-likelihood increment.
pub const DEFAULT_TOL: f64 = 1e-10;
/// Bins whose coherent state keeps less than this weight below the cutoff
/// are pooled into the overflow and left out of `R`.
pub const OVERFLOW_WEIGHT: f64 = 1e-6;
const P_FLOOR: f64 = 1e-300;
const FLOOR_PATIENCE: usize = 10;
const BLOCK: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSpaceHistogram {
    pub d: f64,
    pub counts: BTreeMap<(i64, i64), u64>,
    pub total: u64,
}

#[derive(Serialize, Deserialize)]
struct HistogramJson {
    d: f64,
    entries: Vec<(i64, i64, u64)>,
}

impl PhaseSpaceHistogram {
    pub fn new(d: f64) -> Result<Self> {
        if !(d > 0.0) || !d.is_finite() {
            return Err(invalid(format!("bin size must be > 0, got {d}")));
        }
        Ok(Self {
            d,
            counts: BTreeMap::new(),
            total: 0,
        })
    }

    pub fn add(&mut self, m: i64, n: i64, count: u64) {
        if count > 0 {
            *self.counts.entry((m, n)).or_insert(0) += count;
            self.total += count;
        }
    }

    pub fn get(&self, m: i64, n: i64) -> u64 {
        self.counts.get(&(m, n)).copied().unwrap_or(0)
    }

    pub fn center(&self, m: i64, n: i64) -> Complex64 {
        Complex64::new(m as f64 * self.d, n as f64 * self.d)
    }

    pub fn scaled(&self, k: u64) -> Self {
        Self {
            d: self.d,
            counts: self.counts.iter().map(|(&key, &c)| (key, c * k)).collect(),
            total: self.total * k,
        }
    }

    /// `{"d": .., "entries": [[m, n, count], ..]}`.
    pub fn to_json(&self) -> Result<String> {
        let j = HistogramJson {
            d: self.d,
            entries: self.counts.iter().map(|(&(m, n), &c)| (m, n, c)).collect(),
        };
        Ok(serde_json::to_string(&j)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let j: HistogramJson = serde_json::from_str(s)?;
        let mut h = Self::new(j.d)?;
        for (m, n, c) in j.entries {
            h.add(m, n, c);
        }
        Ok(h)
    }
}

/// Bin Q-samples on coherent labels: `alpha = beta/sqrt2`,
/// `m = floor(Re alpha / d + 1/2)`.
pub fn histogram(samples: &SampleSet, d: f64) -> Result<PhaseSpaceHistogram> {
    let mut h = PhaseSpaceHistogram::new(d)?;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for q in &samples.samples {
        let m = (q.x * s / d + 0.5).floor() as i64;
        let n = (q.y * s / d + 0.5).floor() as i64;
        h.add(m, n, 1);
    }
    Ok(h)
}

/// `(d^2/pi) |alpha_mn><alpha_mn|` on the truncated space, with the weight
/// of the coherent state kept below the cutoff.
pub fn povm_element(m: i64, n: i64, d: f64, cutoff: usize) -> (DensityMatrix, f64) {
    let alpha = Complex64::new(m as f64 * d, n as f64 * d);
    let c = coherent_amplitudes(alpha, cutoff);
    let kept: f64 = c.iter().map(|z| z.norm_sqr()).sum();
    let w = d * d / std::f64::consts::PI;
    let mat = DMatrix::from_fn(cutoff + 1, cutoff + 1, |i, j| c[i] * c[j].conj() * w);
    (DensityMatrix { mat }, kept)
}

struct Bin {
    key: (i64, i64),
    f: f64,
    c: Vec<Complex64>,
}

/// Occupied bins used in `R`, and the overflow pool.
fn prepare(hist: &PhaseSpaceHistogram, cutoff: usize) -> (Vec<Bin>, u64, usize) {
    let mut bins = Vec::with_capacity(hist.counts.len());
    let (mut over_counts, mut over_bins) = (0, 0);
    for (&(m, n), &f) in &hist.counts {
        let c = coherent_amplitudes(hist.center(m, n), cutoff);
        let kept: f64 = c.iter().map(|z| z.norm_sqr()).sum();
        if kept < OVERFLOW_WEIGHT {
            over_counts += f;
            over_bins += 1;
            continue;
        }
        bins.push(Bin {
            key: (m, n),
            f: f as f64,
            c,
        });
    }
    (bins, over_counts, over_bins)
}

/// `<c| rho |c>`.
fn quad_form(rho: &DMatrix<Complex64>, c: &[Complex64]) -> f64 {
    let d = c.len();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..d {
        let mut row = Complex64::new(0.0, 0.0);
        for j in 0..d {
            row += rho[(i, j)] * c[j];
        }
        acc += c[i].conj() * row;
    }
    acc.re
}

/// `sum f ln p` over occupied bins; `-inf` if any occupied bin has `p = 0`.
pub fn loglikelihood(hist: &PhaseSpaceHistogram, rho: &DensityMatrix) -> f64 {
    let (bins, _, _) = prepare(hist, rho.cutoff());
    let w = hist.d * hist.d / std::f64::consts::PI;
    let parts: Vec<f64> = bins
        .par_chunks(BLOCK)
        .map(|blk| {
            blk.iter()
                .map(|b| {
                    let p = w * quad_form(rho.matrix(), &b.c);
                    if p > 0.0 {
                        b.f * p.ln()
                    } else {
                        f64::NEG_INFINITY
                    }
                })
                .sum::<f64>()
        })
        .collect();
    parts.iter().sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxLikOptions {
    pub cutoff: usize,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for MaxLikOptions {
    fn default() -> Self {
        Self {
            cutoff: TOMOGRAPHY_CUTOFF,
            max_iters: DEFAULT_MAX_ITERS,
            tol: DEFAULT_TOL,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReconstructionResult {
    pub rho: DensityMatrix,
    pub iterations: usize,
    /// Log-likelihood of the starting state followed by one value per iteration.
    pub loglik_trace: Vec<f64>,
    pub converged: bool,
    /// `||R rho - lambda rho||_F / lambda` with `lambda = sum f`.
    pub fixed_point_residual: f64,
    /// Iterations where the plain `R rho R` step lowered the likelihood and a
    /// diluted step was taken instead.
    pub diluted_steps: usize,
    /// Bin evaluations that hit the probability floor.
    pub floored_evaluations: u64,
    pub overflow_bins: usize,
    pub overflow_counts: u64,
    pub stop_rule: String,
}

impl ReconstructionResult {
    /// Run report without the state itself.
    pub fn report_json(&self) -> Result<String> {
        let v = serde_json::json!({
            "iterations": self.iterations,
            "converged": self.converged,
            "final_loglik": self.loglik_trace.last(),
            "fixed_point_residual": self.fixed_point_residual,
            "diluted_steps": self.diluted_steps,
            "floored_evaluations": self.floored_evaluations,
            "overflow_bins": self.overflow_bins,
            "overflow_counts": self.overflow_counts,
            "stop_rule": self.stop_rule,
        });
        Ok(serde_json::to_string_pretty(&v)?)
    }

    pub fn write_loglik_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "iteration,loglik")?;
        for (i, l) in self.loglik_trace.iter().enumerate() {
            writeln!(out, "{i},{l}")?;
        }
        Ok(())
    }
}

/// Probabilities of every bin and the accumulated `R = sum (f/p) Pi`.
/// Blocks are reduced in bin order so results do not depend on threading.
struct Eval {
    r: DMatrix<Complex64>,
    loglik: f64,
    floored: Vec<usize>,
}

fn evaluate(bins: &[Bin], rho: &DMatrix<Complex64>, w: f64) -> Eval {
    let d = rho.nrows();
    let parts: Vec<(DMatrix<Complex64>, f64, Vec<usize>)> = bins
        .par_chunks(BLOCK)
        .enumerate()
        .map(|(bi, blk)| {
            let mut r = DMatrix::from_element(d, d, Complex64::new(0.0, 0.0));
            let mut ll = 0.0;
            let mut floored = Vec::new();
            for (k, b) in blk.iter().enumerate() {
                let mut p = w * quad_form(rho, &b.c);
                if !(p > P_FLOOR) {
                    p = P_FLOOR;
                    floored.push(bi * BLOCK + k);
                }
                ll += b.f * p.ln();
                let s = b.f / p * w;
                for j in 0..d {
                    let cj = b.c[j].conj() * s;
                    for i in 0..d {
                        r[(i, j)] += b.c[i] * cj;
                    }
                }
            }
            (r, ll, floored)
        })
        .collect();
    let mut r = DMatrix::from_element(d, d, Complex64::new(0.0, 0.0));
    let mut loglik = 0.0;
    let mut floored = Vec::new();
    for (pr, pl, pf) in parts {
        r += pr;
        loglik += pl;
        floored.extend(pf);
    }
    Eval { r, loglik, floored }
}

fn sandwich(t: &DMatrix<Complex64>, rho: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let out = t * rho * t.adjoint();
    let tr = out.trace();
    let out = out / tr;
    (&out + out.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Iterate `rho -> R rho R / Tr` from the maximally mixed state until the
/// per-sample log-likelihood gain drops below `tol`.
///
/// Should a plain step lower the likelihood, the diluted map with
/// `T = (1 - e) I + e R/lambda` is used instead, halving `e` until the
/// likelihood does not decrease.
pub fn maxlik(hist: &PhaseSpaceHistogram, opts: &MaxLikOptions) -> Result<ReconstructionResult> {
    if hist.total == 0 {
        return Err(invalid("histogram is empty"));
    }
    if opts.cutoff < 1 || opts.max_iters == 0 {
        return Err(invalid("need cutoff >= 1 and max_iters >= 1"));
    }
    let (bins, overflow_counts, overflow_bins) = prepare(hist, opts.cutoff);
    if bins.is_empty() {
        return Err(invalid("every occupied bin lies beyond the cutoff"));
    }
    let w = hist.d * hist.d / std::f64::consts::PI;
    let lambda: f64 = bins.iter().map(|b| b.f).sum();
    let n = bins.len();
    let dim = opts.cutoff + 1;
    let eye = DMatrix::<Complex64>::identity(dim, dim);

    let mut rho = DensityMatrix::maximally_mixed(opts.cutoff).into_matrix();
    let mut ev = evaluate(&bins, &rho, w);
    let mut trace = vec![ev.loglik];
    let mut floor_run = vec![0usize; n];
    let mut floored_evals = ev.floored.len() as u64;
    let mut converged = false;
    let mut diluted = 0;
    let mut iterations = 0;

    let check_floor = |ev: &Eval, run: &mut Vec<usize>| -> Result<()> {
        let mut hit = vec![false; n];
        for &k in &ev.floored {
            hit[k] = true;
        }
        for k in 0..n {
            run[k] = if hit[k] { run[k] + 1 } else { 0 };
            if run[k] >= FLOOR_PATIENCE {
                let (m, nn) = bins[k].key;
                return Err(Error::Underflow {
                    m,
                    n: nn,
                    iterations: run[k],
                });
            }
        }
        Ok(())
    };
    check_floor(&ev, &mut floor_run)?;

    for _ in 0..opts.max_iters {
        let mut next = sandwich(&ev.r, &rho);
        let mut next_ev = evaluate(&bins, &next, w);
        if next_ev.loglik < ev.loglik {
            diluted += 1;
            let rn = &ev.r / Complex64::new(lambda, 0.0);
            let mut eps = 0.5;
            loop {
                let t = &eye * Complex64::new(1.0 - eps, 0.0) + &rn * Complex64::new(eps, 0.0);
                next = sandwich(&t, &rho);
                next_ev = evaluate(&bins, &next, w);
                if next_ev.loglik >= ev.loglik || eps < 1e-12 {
                    break;
                }
                eps *= 0.5;
            }
        }
        iterations += 1;
        floored_evals += next_ev.floored.len() as u64;
        check_floor(&next_ev, &mut floor_run)?;
        let gain = (next_ev.loglik - ev.loglik) / lambda;
        trace.push(next_ev.loglik);
        rho = next;
        ev = next_ev;
        if gain.abs() < opts.tol {
            converged = true;
            break;
        }
    }
    let resid = (&ev.r * &rho - &rho * Complex64::new(lambda, 0.0)).norm() / lambda;
    Ok(ReconstructionResult {
        rho: DensityMatrix { mat: rho },
        iterations,
        loglik_trace: trace,
        converged,
        fixed_point_residual: resid,
        diluted_steps: diluted,
        floored_evaluations: floored_evals,
        overflow_bins,
        overflow_counts,
        stop_rule: format!(
            "per-sample log-likelihood gain < {:e} or {} iterations",
            opts.tol, opts.max_iters
        ),
    })
}

/// Fourth cumulant `<Y^4> - 3 <Y^2>^2` of the rotated quadrature
/// `cos(t) Y - sin(t) X` (zero-mean states), exact on the truncated support.
pub fn quadrature_cumulant4(rho: &DensityMatrix, theta: f64) -> f64 {
    // pad by two levels so that Y^2 acting on the support is exact
    let d = rho.dim() + 2;
    let mut a = DMatrix::from_element(d, d, Complex64::new(0.0, 0.0));
    for k in 1..d {
        a[(k - 1, k)] = Complex64::new((k as f64).sqrt(), 0.0);
    }
    let i = Complex64::new(0.0, 1.0);
    let ad = a.adjoint();
    let x = &a + &ad;
    let y = (&a - &ad) * (-i);
    let q = y * Complex64::new(theta.cos(), 0.0) - x * Complex64::new(theta.sin(), 0.0);
    let q2 = &q * &q;
    let r = rho.resized(d - 1);
    let (r, _) = r.normalized().unwrap_or((r.clone(), 1.0));
    // <Q^4> = Tr[Q^2 rho Q^2] uses Q^2 only on the padded support
    let m2 = (r.matrix() * &q2).trace().re;
    let m4 = (&q2 * r.matrix() * &q2).trace().re;
    m4 - 3.0 * m2 * m2
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::FockVector;
    use crate::sampling::QSample;

    fn set(points: &[(f64, f64)]) -> SampleSet {
        SampleSet {
            samples: points.iter().map(|&(x, y)| QSample { x, y }).collect(),
            seed: 0,
            source: "t".into(),
        }
    }

    #[test]
    fn origin_goes_to_central_bin() {
        let h = histogram(&set(&[(0.0, 0.0)]), DEFAULT_BIN).unwrap();
        assert_eq!(h.get(0, 0), 1);
        assert_eq!(h.total, 1);
    }

    #[test]
    fn binning_uses_coherent_labels() {
        // beta = sqrt2 * 1.0 d -> alpha = d -> bin 1
        let b = std::f64::consts::SQRT_2 * DEFAULT_BIN;
        let h = histogram(&set(&[(b, -b), (0.49 * b, 0.0)]), DEFAULT_BIN).unwrap();
        assert_eq!(h.get(1, -1), 1);
        assert_eq!(h.get(0, 0), 1);
        assert!(histogram(&set(&[]), 0.0).is_err());
    }

    #[test]
    fn json_round_trip() {
        let mut h = PhaseSpaceHistogram::new(0.1).unwrap();
        h.add(-3, 2, 5);
        h.add(0, 0, 1);
        let back = PhaseSpaceHistogram::from_json(&h.to_json().unwrap()).unwrap();
        assert_eq!(back, h);
        assert!(h.to_json().unwrap().contains("\"entries\":[[-3,2,5],[0,0,1]]"));
    }

    #[test]
    fn povm_origin_and_trace() {
        let d = DEFAULT_BIN;
        let (p, kept) = povm_element(0, 0, d, 21);
        let w = d * d / std::f64::consts::PI;
        assert!((p.get(0, 0).re - w).abs() < 1e-18);
        assert!((kept - 1.0).abs() < 1e-15);
        let (p, _) = povm_element(7, -4, d, 21);
        assert!((p.trace() - w).abs() < 1e-12 * w);
    }

    #[test]
    fn povm_grid_resolves_identity() {
        let d = 0.1;
        let mut sum = DMatrix::from_element(22, 22, Complex64::new(0.0, 0.0));
        for m in -70..=70 {
            for n in -70..=70 {
                sum += povm_element(m, n, d, 21).0.matrix();
            }
        }
        for k in 0..=5 {
            assert!((sum[(k, k)].re - 1.0).abs() < 0.01, "{k}: {}", sum[(k, k)].re);
        }
    }

    #[test]
    fn loglik_single_bin_and_scaling() {
        let mut h = PhaseSpaceHistogram::new(DEFAULT_BIN).unwrap();
        h.add(2, 1, 7);
        let rho = DensityMatrix::vacuum(21);
        let alpha = h.center(2, 1);
        let p = DEFAULT_BIN * DEFAULT_BIN / std::f64::consts::PI * (-alpha.norm_sqr()).exp();
        assert!((loglikelihood(&h, &rho) - 7.0 * p.ln()).abs() < 1e-10);
        let l1 = loglikelihood(&h, &rho);
        let l3 = loglikelihood(&h.scaled(3), &rho);
        assert!((l3 / 3.0 - l1).abs() < 1e-10);
    }

    #[test]
    fn zero_probability_is_neg_inf() {
        let mut h = PhaseSpaceHistogram::new(DEFAULT_BIN).unwrap();
        h.add(0, 0, 1);
        let rho = FockVector::basis(21, 1).unwrap().to_density();
        assert_eq!(loglikelihood(&h, &rho), f64::NEG_INFINITY);
    }

    #[test]
    fn gaussian_states_have_no_fourth_cumulant() {
        let rho = crate::analytic::squeezed_vacuum(0.4, 40).unwrap().to_density();
        assert!(quadrature_cumulant4(&rho, 0.0).abs() < 1e-10);
        assert!(quadrature_cumulant4(&rho, 0.7).abs() < 1e-10);
        // |1>: <Y^4> = 15, <Y^2> = 3
        let one = FockVector::basis(6, 1).unwrap().to_density();
        assert!((quadrature_cumulant4(&one, 0.0) - (15.0 - 27.0)).abs() < 1e-12);
    }
}
