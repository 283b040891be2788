//! Two-copy Gaussification: exact density-matrix iteration, thermal and
//! hard-boundary acceptance, and the closed-form asymptotic covariances.

use nalgebra::Matrix2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_lr;

use crate::error::{invalid, Error, Result};
use crate::fock::{
    displacement_elements, loss_channel, moments, operator_covariance, BeamSplitter, CovMat2, DensityMatrix,
    SYMPLECTIC_FORM,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AcceptanceKind {
    /// Projection of the "+" port on `|0>` (the `n_bar -> 0` limit).
    VacuumProjection,
    /// Gaussian acceptance `exp(-|alpha|^2 / n_bar)`.
    ThermalWeight,
    /// Sample-domain boundary `|beta_+|^2 <= n_bar`, `beta = sqrt2 alpha`.
    HardBoundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceSpec {
    pub n_bar: f64,
    pub kind: AcceptanceKind,
}

impl AcceptanceSpec {
    pub fn vacuum() -> Self {
        Self {
            n_bar: 0.0,
            kind: AcceptanceKind::VacuumProjection,
        }
    }

    pub fn thermal(n_bar: f64) -> Self {
        Self {
            n_bar,
            kind: AcceptanceKind::ThermalWeight,
        }
    }

    pub fn hard(n_bar: f64) -> Self {
        Self {
            n_bar,
            kind: AcceptanceKind::HardBoundary,
        }
    }
}

/// Diagonal of the acceptance operator on the "+" port.
///
/// Thermal: `(n/(n+1))^{k+1}`. Hard boundary: `P(k+1, n/2)`, the regularised
/// lower incomplete gamma function, i.e. the Q-function weight of `|k>` inside
/// the disc `|beta|^2 <= n`.
pub fn acceptance_povm(spec: &AcceptanceSpec, cutoff: usize) -> Result<Vec<f64>> {
    if !(spec.n_bar >= 0.0) || !spec.n_bar.is_finite() {
        return Err(invalid(format!("acceptance threshold must be >= 0, got {}", spec.n_bar)));
    }
    let d = cutoff + 1;
    Ok(match spec.kind {
        AcceptanceKind::VacuumProjection => {
            let mut v = vec![0.0; d];
            v[0] = 1.0;
            v
        }
        AcceptanceKind::ThermalWeight => {
            let q = spec.n_bar / (spec.n_bar + 1.0);
            (0..d).map(|k| q.powi(k as i32 + 1)).collect()
        }
        AcceptanceKind::HardBoundary => {
            if spec.n_bar == 0.0 {
                vec![0.0; d]
            } else {
                (0..d).map(|k| gamma_lr(k as f64 + 1.0, 0.5 * spec.n_bar)).collect()
            }
        }
    })
}

/// Cached beam splitter for repeated steps at one cutoff.
#[derive(Debug, Clone)]
pub struct Gaussifier {
    bs: BeamSplitter,
    cutoff: usize,
}

impl Gaussifier {
    pub fn new(cutoff: usize) -> Self {
        Self {
            bs: BeamSplitter::for_cutoff(cutoff),
            cutoff,
        }
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    /// One two-copy step. Returns the normalised "-" port state and the
    /// success probability.
    pub fn step(&self, rho: &DensityMatrix, spec: &AcceptanceSpec) -> Result<(DensityMatrix, f64)> {
        if rho.cutoff() != self.cutoff {
            return Err(Error::CutoffMismatch(rho.cutoff(), self.cutoff));
        }
        let povm = acceptance_povm(spec, self.cutoff)?;
        self.step_with_povm(rho, &povm)
    }

    pub fn step_with_povm(&self, rho: &DensityMatrix, povm: &[f64]) -> Result<(DensityMatrix, f64)> {
        let tr = rho.trace();
        if !(tr > 0.0) {
            return Err(invalid("input state has non-positive trace"));
        }
        let rho = DensityMatrix {
            mat: rho.matrix().map(|c| c / tr),
        };
        // one projector level per task; summed in index order for reproducibility
        let parts: Vec<DensityMatrix> = povm
            .par_iter()
            .enumerate()
            .filter(|(_, &p)| p != 0.0)
            .map(|(j, &p)| {
                let mut single = vec![0.0; povm.len()];
                single[j] = p;
                self.bs.interfere_and_project(&rho, &single)
            })
            .collect::<Result<_>>()?;
        let mut mat = nalgebra::DMatrix::from_element(rho.dim(), rho.dim(), Complex64::new(0.0, 0.0));
        for part in &parts {
            mat += part.matrix();
        }
        let out = DensityMatrix { mat };
        let p = out.trace();
        if !(p > 1e-300) {
            return Err(Error::ZeroSuccess);
        }
        let (out, _) = out.normalized()?;
        out.check_truncation()?;
        Ok((out.hermitized(), p))
    }
}

/// One Gaussification step; builds a beam splitter for the state's cutoff.
pub fn gaussify_step(rho: &DensityMatrix, spec: &AcceptanceSpec) -> Result<(DensityMatrix, f64)> {
    Gaussifier::new(rho.cutoff()).step(rho, spec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GaussificationStatus {
    Converged,
    MaxIters,
    Diverged,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussificationReport {
    pub spec: AcceptanceSpec,
    pub iterations: usize,
    pub success_probs: Vec<f64>,
    /// Trace distance between successive iterates.
    pub distances: Vec<f64>,
    pub final_state: DensityMatrix,
    pub final_cov: CovMat2,
    pub converged: bool,
    pub status: GaussificationStatus,
    pub reason: Option<String>,
}

impl GaussificationReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub const DEFAULT_TOL: f64 = 1e-8;

/// Iterate until successive states are within `tol` in trace distance.
///
/// Divergence is declared when `<n>` exceeds half the cutoff or an iterate
/// spills over the cutoff.
pub fn iterate(rho0: &DensityMatrix, spec: &AcceptanceSpec, max_iters: usize, tol: f64) -> Result<GaussificationReport> {
    if max_iters == 0 {
        return Err(invalid("max_iters must be at least 1"));
    }
    rho0.validate()?;
    rho0.check_truncation()?;
    let cutoff = rho0.cutoff();
    let g = Gaussifier::new(cutoff);
    let povm = acceptance_povm(spec, cutoff)?;
    let mut cur = rho0.clone();
    let mut probs = Vec::new();
    let mut dists = Vec::new();
    let mut status = GaussificationStatus::MaxIters;
    let mut reason = None;
    for _ in 0..max_iters {
        let (next, p) = match g.step_with_povm(&cur, &povm) {
            Ok(v) => v,
            Err(Error::Truncation { tail }) => {
                status = GaussificationStatus::Diverged;
                reason = Some(format!("state left the truncated space (tail {tail:.2e})"));
                break;
            }
            Err(e) => return Err(e),
        };
        probs.push(p);
        let n = next.mean_photon_number();
        let dist = next.trace_distance(&cur)?;
        dists.push(dist);
        cur = next;
        if n > 0.5 * cutoff as f64 {
            status = GaussificationStatus::Diverged;
            reason = Some(format!("<n> = {n:.3} exceeds half the cutoff"));
            break;
        }
        if dist < tol {
            status = GaussificationStatus::Converged;
            break;
        }
    }
    Ok(GaussificationReport {
        spec: *spec,
        iterations: probs.len(),
        success_probs: probs,
        distances: dists,
        final_cov: moments(&cur).covariance(),
        final_state: cur,
        converged: status == GaussificationStatus::Converged,
        status,
        reason,
    })
}

fn cov_from_matrix(m: &Matrix2<f64>) -> CovMat2 {
    CovMat2::from_matrix(m)
}

/// Asymptotic covariance of vacuum-projection Gaussification,
/// `Gamma_G = Sigma^T B^{-1} Sigma - I`, from the first iterate `rho1`
/// through `sigma = rho1 / rho1_{00}`.
pub fn gamma_g(rho1: &DensityMatrix) -> Result<CovMat2> {
    if rho1.cutoff() < 2 {
        return Err(invalid("need cutoff >= 2"));
    }
    let r00 = rho1.get(0, 0).re;
    if !(r00 > 1e-300) {
        return Err(Error::Singular("rho_00 vanishes".into()));
    }
    let s10 = rho1.get(1, 0) / r00;
    if s10.norm() > 1e-6 {
        return Err(invalid(format!(
            "input is not a first iterate: rho_10/rho_00 = {s10}"
        )));
    }
    let s11 = rho1.get(1, 1).re / r00;
    let s20 = rho1.get(2, 0) / r00;
    let r2 = std::f64::consts::SQRT_2;
    let b = Matrix2::new(
        0.5 * (1.0 - s11 + r2 * s20.re),
        s20.im / r2,
        s20.im / r2,
        0.5 * (1.0 - s11 - r2 * s20.re),
    );
    let det = b.determinant();
    if det.abs() < 1e-14 {
        return Err(Error::Singular(format!("B has determinant {det:.3e}")));
    }
    let binv = b.try_inverse().ok_or_else(|| Error::Singular("B".into()))?;
    let s = SYMPLECTIC_FORM;
    Ok(cov_from_matrix(&(s.transpose() * binv * s - Matrix2::identity())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GammaMethod {
    Campbell,
    Lossy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticCov {
    pub cov: CovMat2,
    /// Positive definite and `Gamma + i Sigma >= -1e-8`.
    pub physical: bool,
    /// Largest imaginary part discarded (Campbell route only).
    pub imag_residual: f64,
}

/// Covariance of the normalised thermal acceptance operator, `(1 + 2 n) I`.
pub fn gamma_pi(n_bar: f64) -> CovMat2 {
    CovMat2::scaled_identity(1.0 + 2.0 * n_bar)
}

fn is_physical(c: &CovMat2) -> bool {
    c.eigenvalues()[0] > 0.0 && c.is_physical()
}

/// Asymptotic covariance of thermal-acceptance Gaussification from its first
/// iterate `rho1`.
///
/// Campbell: `(G - i S)(G - G_sigma)^{-1}(G + i S) - G` with `G = (1 + 2n) I`
/// and `G_sigma` the complex covariance of `sigma = rho1 Pi / Tr[rho1 Pi]`.
/// Lossy: `(Gamma_G(L_T rho1) - (1 - T) I) / T` with `T = 1/(n + 1)`.
pub fn gamma_infinity(rho1: &DensityMatrix, n_bar: f64, method: GammaMethod) -> Result<AsymptoticCov> {
    if !(n_bar > 0.0) || !n_bar.is_finite() {
        return Err(invalid(format!("n_bar must be > 0, got {n_bar}")));
    }
    match method {
        GammaMethod::Lossy => {
            let t = 1.0 / (n_bar + 1.0);
            let gg = gamma_g(&loss_channel(rho1, t)?)?;
            let m = (gg.to_matrix() - Matrix2::identity() * (1.0 - t)) / t;
            let cov = cov_from_matrix(&m);
            Ok(AsymptoticCov {
                physical: is_physical(&cov),
                cov,
                imag_residual: 0.0,
            })
        }
        GammaMethod::Campbell => {
            let sigma = thermal_sigma(rho1, n_bar)?;
            let gs = operator_covariance(&sigma);
            let c = |x: f64| Complex64::new(x, 0.0);
            let i = Complex64::new(0.0, 1.0);
            let g = c(1.0 + 2.0 * n_bar);
            let sym = SYMPLECTIC_FORM.map(c);
            let gpi = Matrix2::new(g, c(0.0), c(0.0), g);
            let gsig = Matrix2::new(gs[0][0], gs[0][1], gs[1][0], gs[1][1]);
            let inv = (gpi - gsig)
                .try_inverse()
                .ok_or_else(|| Error::Singular("Gamma_Pi - Gamma_sigma".into()))?;
            let m = (gpi - sym * i) * inv * (gpi + sym * i) - gpi;
            let imag = m.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
            let cov = cov_from_matrix(&m.map(|z| z.re));
            Ok(AsymptoticCov {
                physical: is_physical(&cov),
                cov,
                imag_residual: imag,
            })
        }
    }
}

/// `sigma = rho1 Pi / Tr[rho1 Pi]` for the thermal acceptance operator.
fn thermal_sigma(rho1: &DensityMatrix, n_bar: f64) -> Result<nalgebra::DMatrix<Complex64>> {
    let povm = acceptance_povm(&AcceptanceSpec::thermal(n_bar), rho1.cutoff())?;
    let m = rho1.matrix();
    let sigma = nalgebra::DMatrix::from_fn(m.nrows(), m.ncols(), |r, k| m[(r, k)] * povm[k]);
    let tr = sigma.trace();
    if tr.norm() < 1e-300 {
        return Err(Error::ZeroSuccess);
    }
    let sigma = sigma / tr;
    // zero displacement: Tr[sigma a] = Tr[sigma a†] = 0
    let d = m.nrows();
    let (mut a, mut ad) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
    for k in 1..d {
        a += sigma[(k, k - 1)] * (k as f64).sqrt();
        ad += sigma[(k - 1, k)] * (k as f64).sqrt();
    }
    if a.norm() > 1e-6 || ad.norm() > 1e-6 {
        return Err(invalid("sigma has non-zero displacement; pass the first iterate"));
    }
    Ok(sigma)
}

/// Largest `|chi_sigma(xi)| = |Tr[sigma D(xi)]|` over a square grid of
/// `n x n` points with half-width `half_width`. A finite-grid heuristic for
/// the weak-convergence condition `|chi| <= 1`, not a certificate.
pub fn characteristic_bound(rho1: &DensityMatrix, n_bar: f64, half_width: f64, n: usize) -> Result<f64> {
    let sigma = thermal_sigma(rho1, n_bar)?;
    let d = sigma.nrows();
    let pts: Vec<(f64, f64)> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| {
            let f = |k: usize| -half_width + 2.0 * half_width * k as f64 / (n.max(2) - 1) as f64;
            (f(i), f(j))
        })
        .collect();
    Ok(pts
        .par_iter()
        .map(|&(x, y)| {
            let dm = displacement_elements(Complex64::new(x, y), d);
            let mut chi = Complex64::new(0.0, 0.0);
            for r in 0..d {
                for k in 0..d {
                    chi += sigma[(r, k)] * dm[(k, r)];
                }
            }
            chi.norm()
        })
        .reduce(|| 0.0, f64::max))
}

/// Smallest thermal threshold for which the asymptotic covariance of the
/// Gaussification of `rho0` is physical, by bisection on `[lo, hi]`.
pub fn convergence_threshold(rho0: &DensityMatrix, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    let g = Gaussifier::new(rho0.cutoff());
    let ok = |n: f64| -> Result<bool> {
        let (rho1, _) = g.step(rho0, &AcceptanceSpec::thermal(n))?;
        match gamma_infinity(&rho1, n, GammaMethod::Lossy) {
            Ok(a) => Ok(a.physical),
            Err(Error::Singular(_)) => Ok(false),
            Err(e) => Err(e),
        }
    };
    if !(lo > 0.0 && hi > lo) {
        return Err(invalid("need 0 < lo < hi"));
    }
    if ok(lo)? || !ok(hi)? {
        return Err(invalid(format!("threshold not bracketed by [{lo}, {hi}]")));
    }
    let (mut lo, mut hi) = (lo, hi);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if ok(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FockFilterPrediction {
    /// `sqrt2 |sigma^F_20|`.
    pub tanh_r: f64,
    /// `arg sigma^F_20`; the limit state's `rho_20` carries this phase.
    pub phase: f64,
    pub feasible: bool,
    /// Weight `Tr[F rho F]` before renormalisation.
    pub filter_weight: f64,
}

/// Prediction for Fock-filter purification: after `F = n - 1` and
/// vacuum-projection Gaussification the state tends to the pure squeezed
/// vacuum with `tanh r = sqrt2 |rho^F_20 / rho^F_00|`.
pub fn fock_filter_prediction(rho: &DensityMatrix) -> Result<(DensityMatrix, FockFilterPrediction)> {
    let (filtered, w) = rho.fock_filter()?;
    let r00 = filtered.get(0, 0).re;
    if !(r00 > 1e-14) {
        return Err(Error::Singular("filtered rho_00 vanishes".into()));
    }
    let s20 = filtered.get(2, 0) / r00;
    let tanh_r = std::f64::consts::SQRT_2 * s20.norm();
    Ok((
        filtered,
        FockFilterPrediction {
            tanh_r,
            phase: s20.arg(),
            feasible: tanh_r < 1.0,
            filter_weight: w,
        },
    ))
}
