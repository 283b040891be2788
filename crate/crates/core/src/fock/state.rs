use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Weight allowed at the top of the truncated space for a state to count as
/// well-truncated.
pub const TAIL_TOLERANCE: f64 = 1e-6;

const C0: Complex64 = Complex64::new(0.0, 0.0);

/// Pure state on the truncated Fock space `|0>..|cutoff>`.
#[derive(Debug, Clone, PartialEq)]
pub struct FockVector {
    amps: Vec<Complex64>,
}

impl FockVector {
    pub fn new(amps: Vec<Complex64>) -> Result<Self> {
        if amps.len() < 2 {
            return Err(invalid("a Fock vector needs cutoff >= 1"));
        }
        Ok(Self { amps })
    }

    pub fn from_real(amps: &[f64]) -> Result<Self> {
        Self::new(amps.iter().map(|&a| Complex64::new(a, 0.0)).collect())
    }

    pub fn zeros(cutoff: usize) -> Self {
        Self {
            amps: vec![C0; cutoff.max(1) + 1],
        }
    }

    /// Number state `|n>`.
    pub fn basis(cutoff: usize, n: usize) -> Result<Self> {
        if n > cutoff {
            return Err(invalid(format!("level {n} above cutoff {cutoff}")));
        }
        let mut v = Self::zeros(cutoff);
        v.amps[n] = Complex64::new(1.0, 0.0);
        Ok(v)
    }

    /// Coherent state `|alpha>` with exact coefficients `e^{-|a|^2/2} a^n / sqrt(n!)`,
    /// not renormalised after truncation.
    pub fn coherent(alpha: Complex64, cutoff: usize) -> Self {
        Self {
            amps: coherent_amplitudes(alpha, cutoff),
        }
    }

    pub fn cutoff(&self) -> usize {
        self.amps.len() - 1
    }

    pub fn amps(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amps_mut(&mut self) -> &mut [Complex64] {
        &mut self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm_sqr();
        if !(n > 0.0) {
            return Err(Error::Annihilated);
        }
        let s = 1.0 / n.sqrt();
        Ok(Self {
            amps: self.amps.iter().map(|a| a * s).collect(),
        })
    }

    /// Fraction of the weight carried by the two highest levels. Two levels
    /// rather than one so that parity-restricted states (squeezed vacuum) are
    /// not judged by a level that is identically zero.
    pub fn tail_weight(&self) -> f64 {
        let n = self.cutoff();
        let top: f64 = self.amps[n - 1..].iter().map(|a| a.norm_sqr()).sum();
        top / self.norm_sqr()
    }

    pub fn is_well_truncated(&self) -> bool {
        self.tail_weight() < TAIL_TOLERANCE
    }

    pub fn check_truncation(&self) -> Result<()> {
        let tail = self.tail_weight();
        if tail < TAIL_TOLERANCE {
            Ok(())
        } else {
            Err(Error::Truncation { tail })
        }
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &FockVector) -> Complex64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// `|<self|other>|^2` of the normalised states.
    pub fn fidelity(&self, other: &FockVector) -> f64 {
        self.inner(other).norm_sqr() / (self.norm_sqr() * other.norm_sqr())
    }

    /// Apply `a^times`. The output is not renormalised; its squared norm is the
    /// weight of the subtraction event. A zero output is reported as
    /// [`Error::Annihilated`].
    pub fn apply_annihilation(&self, times: usize) -> Result<FockVector> {
        if !(1..=2).contains(&times) {
            return Err(invalid("annihilation power must be 1 or 2"));
        }
        self.check_truncation()?;
        let n = self.cutoff();
        let mut out = vec![C0; n + 1];
        for (k, slot) in out.iter_mut().enumerate() {
            let src = k + times;
            if src > n {
                break;
            }
            let mut f = 1.0;
            for j in 1..=times {
                f *= (k + j) as f64;
            }
            *slot = self.amps[src] * f.sqrt();
        }
        let out = FockVector { amps: out };
        if out.norm_sqr() == 0.0 {
            return Err(Error::Annihilated);
        }
        Ok(out)
    }

    pub fn to_density(&self) -> DensityMatrix {
        let v = DVector::from_column_slice(&self.amps);
        let m = &v * v.adjoint();
        DensityMatrix { mat: m }
    }

    /// Same state on a different cutoff (zero-padded or truncated).
    pub fn resized(&self, cutoff: usize) -> FockVector {
        let mut amps = self.amps.clone();
        amps.resize(cutoff + 1, C0);
        FockVector { amps }
    }
}

pub(crate) fn coherent_amplitudes(alpha: Complex64, cutoff: usize) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(cutoff + 1);
    let mut c = Complex64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
    out.push(c);
    for n in 1..=cutoff {
        c = c * alpha / (n as f64).sqrt();
        out.push(c);
    }
    out
}

/// Density operator on the truncated Fock space. Serialises through
/// [`DensityMatrixJson`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "DensityMatrixJson", try_from = "DensityMatrixJson")]
pub struct DensityMatrix {
    pub(crate) mat: DMatrix<Complex64>,
}

impl DensityMatrix {
    pub fn from_matrix(mat: DMatrix<Complex64>) -> Result<Self> {
        if !mat.is_square() || mat.nrows() < 2 {
            return Err(invalid("density matrix must be square with cutoff >= 1"));
        }
        Ok(Self { mat })
    }

    pub fn vacuum(cutoff: usize) -> Self {
        FockVector::basis(cutoff, 0).unwrap().to_density()
    }

    pub fn maximally_mixed(cutoff: usize) -> Self {
        let d = cutoff + 1;
        Self {
            mat: DMatrix::from_diagonal_element(d, d, Complex64::new(1.0 / d as f64, 0.0)),
        }
    }

    /// Diagonal state with the given populations (not normalised).
    pub fn diagonal(pops: &[f64]) -> Result<Self> {
        let d = DVector::from_iterator(pops.len(), pops.iter().map(|&p| Complex64::new(p, 0.0)));
        Self::from_matrix(DMatrix::from_diagonal(&d))
    }

    pub fn cutoff(&self) -> usize {
        self.mat.nrows() - 1
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.mat
    }

    #[inline]
    pub fn get(&self, m: usize, n: usize) -> Complex64 {
        self.mat[(m, n)]
    }

    pub fn trace(&self) -> f64 {
        self.mat.diagonal().iter().map(|c| c.re).sum()
    }

    pub fn populations(&self) -> Vec<f64> {
        self.mat.diagonal().iter().map(|c| c.re).collect()
    }

    /// Renormalise to unit trace, returning the previous trace alongside.
    pub fn normalized(&self) -> Result<(Self, f64)> {
        let t = self.trace();
        if !(t > 0.0) {
            return Err(Error::ZeroSuccess);
        }
        Ok((
            Self {
                mat: self.mat.map(|c| c / t),
            },
            t,
        ))
    }

    /// Population fraction in the two highest levels (see [`FockVector::tail_weight`]).
    pub fn tail_weight(&self) -> f64 {
        let n = self.cutoff();
        let top = self.mat[(n - 1, n - 1)].re + self.mat[(n, n)].re;
        top / self.trace()
    }

    pub fn is_well_truncated(&self) -> bool {
        self.tail_weight() < TAIL_TOLERANCE
    }

    pub fn check_truncation(&self) -> Result<()> {
        let tail = self.tail_weight();
        if tail < TAIL_TOLERANCE {
            Ok(())
        } else {
            Err(Error::Truncation { tail })
        }
    }

    pub fn hermiticity_error(&self) -> f64 {
        (&self.mat - self.mat.adjoint()).iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Hermitian part, used to scrub round-off after long chains of products.
    pub fn hermitized(&self) -> Self {
        Self {
            mat: (&self.mat + self.mat.adjoint()).map(|c| c * 0.5),
        }
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.hermitized().mat.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ev
    }

    /// Check Hermiticity (1e-12), unit trace (1e-10) and positivity (-1e-10).
    pub fn validate(&self) -> Result<()> {
        let h = self.hermiticity_error();
        if h > 1e-12 {
            return Err(Error::InvalidState(format!("not Hermitian (error {h:.2e})")));
        }
        let t = self.trace();
        if (t - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidState(format!("trace {t}")));
        }
        let min = self.eigenvalues()[0];
        if min < -1e-10 {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:.3e}")));
        }
        Ok(())
    }

    pub fn purity(&self) -> f64 {
        (&self.mat * &self.mat).trace().re
    }

    /// Expectation value `Tr[rho * op]`.
    pub fn expect(&self, op: &DMatrix<Complex64>) -> Complex64 {
        (&self.mat * op).trace()
    }

    /// Apply `exp(-i phi n)`, rotating phase space by `phi`:
    /// `rho_mn -> rho_mn e^{-i (m-n) phi}`.
    pub fn rotated(&self, phi: f64) -> Self {
        let mat = DMatrix::from_fn(self.dim(), self.dim(), |m, n| {
            self.mat[(m, n)] * Complex64::from_polar(1.0, -(m as f64 - n as f64) * phi)
        });
        Self { mat }
    }

    /// Zero-pad or cut to a new cutoff (no renormalisation).
    pub fn resized(&self, cutoff: usize) -> Self {
        let d = cutoff + 1;
        let old = self.dim();
        let mat = DMatrix::from_fn(d, d, |m, n| {
            if m < old && n < old {
                self.mat[(m, n)]
            } else {
                C0
            }
        });
        Self { mat }
    }

    /// Cut to the smallest cutoff (at least `min_cutoff`) whose discarded
    /// population is below `tol`, then renormalise.
    pub fn compacted(&self, tol: f64, min_cutoff: usize) -> Self {
        let pops = self.populations();
        let total: f64 = pops.iter().sum();
        let mut tail = 0.0;
        let mut keep = self.cutoff();
        for n in (1..=self.cutoff()).rev() {
            tail += pops[n];
            if tail / total >= tol {
                break;
            }
            keep = n - 1;
        }
        let keep = keep.max(min_cutoff).min(self.cutoff());
        let r = self.resized(keep);
        r.normalized().map(|(s, _)| s).unwrap_or(r)
    }

    /// Trace distance `1/2 ||a - b||_1`.
    pub fn trace_distance(&self, other: &DensityMatrix) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::CutoffMismatch(self.cutoff(), other.cutoff()));
        }
        let diff = &self.mat - &other.mat;
        let diff = (&diff + diff.adjoint()).map(|c| c * 0.5);
        Ok(0.5 * diff.symmetric_eigenvalues().iter().map(|e| e.abs()).sum::<f64>())
    }

    /// Uhlmann fidelity `(Tr sqrt(sqrt(a) b sqrt(a)))^2`. Operands of different
    /// cutoff are compared on the larger space.
    pub fn fidelity(&self, other: &DensityMatrix) -> f64 {
        let c = self.cutoff().max(other.cutoff());
        let a = self.resized(c).hermitized();
        let b = other.resized(c).hermitized();
        let sa = psd_sqrt(&a.mat);
        let inner = &sa * &b.mat * &sa;
        let inner = (&inner + inner.adjoint()).map(|c| c * 0.5);
        let s: f64 = inner.symmetric_eigenvalues().iter().map(|e| e.max(0.0).sqrt()).sum();
        s * s
    }

    /// Fidelity with a pure state, `<psi|rho|psi>` (normalised).
    pub fn fidelity_pure(&self, psi: &FockVector) -> f64 {
        let c = self.cutoff().max(psi.cutoff());
        let rho = self.resized(c);
        let v = DVector::from_column_slice(psi.resized(c).amps());
        let val = (v.adjoint() * &rho.mat * &v)[(0, 0)].re;
        val / (psi.norm_sqr() * rho.trace())
    }

    /// `rho = L L^dagger` with `L` keeping eigenvectors above `rel_tol` of the
    /// largest eigenvalue; negative round-off eigenvalues are dropped.
    pub fn factor(&self, rel_tol: f64) -> DMatrix<Complex64> {
        let eig = self.hermitized().mat.symmetric_eigen();
        let max = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
        let keep: Vec<usize> = (0..self.dim())
            .filter(|&i| eig.eigenvalues[i] > rel_tol * max)
            .collect();
        DMatrix::from_fn(self.dim(), keep.len(), |r, k| {
            let i = keep[k];
            eig.eigenvectors[(r, i)] * eig.eigenvalues[i].sqrt()
        })
    }

    /// Population-weighted mean photon number.
    pub fn mean_photon_number(&self) -> f64 {
        self.populations().iter().enumerate().map(|(n, p)| n as f64 * p).sum::<f64>() / self.trace()
    }

    /// Fock filter `F = n - 1`: returns `F rho F` renormalised and its trace
    /// before renormalisation. Elements (0,1), (1,0) and (1,1) are exactly zero.
    pub fn fock_filter(&self) -> Result<(DensityMatrix, f64)> {
        let mat = DMatrix::from_fn(self.dim(), self.dim(), |m, n| {
            self.mat[(m, n)] * ((m as f64 - 1.0) * (n as f64 - 1.0))
        });
        let filtered = DensityMatrix { mat };
        let w = filtered.trace();
        if !(w > 1e-300) {
            return Err(Error::ZeroSuccess);
        }
        let (out, w) = filtered.normalized()?;
        Ok((out, w))
    }
}

pub(crate) fn psd_sqrt(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let eig = m.clone().symmetric_eigen();
    let v = &eig.eigenvectors;
    let s = DMatrix::from_diagonal(&eig.eigenvalues.map(|e| Complex64::new(e.max(0.0).sqrt(), 0.0)));
    v * s * v.adjoint()
}

/// JSON layout `{"cutoff": N, "re": [[..]], "im": [[..]]}`, row-major, level 0 first.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensityMatrixJson {
    pub cutoff: usize,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl From<&DensityMatrix> for DensityMatrixJson {
    fn from(rho: &DensityMatrix) -> Self {
        let d = rho.dim();
        Self {
            cutoff: rho.cutoff(),
            re: (0..d).map(|m| (0..d).map(|n| rho.mat[(m, n)].re).collect()).collect(),
            im: (0..d).map(|m| (0..d).map(|n| rho.mat[(m, n)].im).collect()).collect(),
        }
    }
}

impl From<DensityMatrix> for DensityMatrixJson {
    fn from(rho: DensityMatrix) -> Self {
        (&rho).into()
    }
}

impl TryFrom<DensityMatrixJson> for DensityMatrix {
    type Error = Error;

    fn try_from(j: DensityMatrixJson) -> Result<Self> {
        let d = j.cutoff + 1;
        let rows_ok = |rows: &Vec<Vec<f64>>| rows.len() == d && rows.iter().all(|r| r.len() == d);
        if !rows_ok(&j.re) || !rows_ok(&j.im) {
            return Err(Error::Format(format!("expected {d}x{d} re/im arrays")));
        }
        DensityMatrix::from_matrix(DMatrix::from_fn(d, d, |m, n| Complex64::new(j.re[m][n], j.im[m][n])))
    }
}

impl DensityMatrix {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&DensityMatrixJson::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let j: DensityMatrixJson = serde_json::from_str(s)?;
        j.try_into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn subtract_from_vacuum_annihilates() {
        let v = FockVector::basis(6, 0).unwrap();
        assert!(matches!(v.apply_annihilation(2), Err(Error::Annihilated)));
    }

    #[test]
    fn subtract_two_from_two() {
        let v = FockVector::basis(6, 2).unwrap();
        let out = v.apply_annihilation(2).unwrap();
        assert!((out.amps()[0] - c(2f64.sqrt())).norm() < 1e-15);
        assert!((out.norm_sqr() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn annihilation_rejects_bad_power() {
        let v = FockVector::basis(6, 2).unwrap();
        assert!(v.apply_annihilation(3).is_err());
    }

    #[test]
    fn fock_filter_edge_cases() {
        let one = FockVector::basis(5, 1).unwrap().to_density();
        assert!(matches!(one.fock_filter(), Err(Error::ZeroSuccess)));
        let vac = DensityMatrix::vacuum(5);
        let (out, w) = vac.fock_filter().unwrap();
        assert!((w - 1.0).abs() < 1e-15);
        assert!((out.get(0, 0).re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn filter_zeroes_single_photon_elements() {
        let coh = FockVector::coherent(Complex64::new(0.5, 0.2), 21).normalized().unwrap();
        let (f, _) = coh.to_density().fock_filter().unwrap();
        assert_eq!(f.get(0, 1), C0);
        assert_eq!(f.get(1, 0), C0);
        assert_eq!(f.get(1, 1), C0);
        assert!(f.get(2, 0).norm() > 1e-3);
    }

    #[test]
    fn json_round_trip() {
        let rho = FockVector::coherent(Complex64::new(0.3, -0.4), 6).to_density();
        let back = DensityMatrix::from_json(&rho.to_json().unwrap()).unwrap();
        assert_eq!(rho, back);
    }

    #[test]
    fn json_rejects_ragged() {
        let bad = r#"{"cutoff": 1, "re": [[1,0],[0]], "im": [[0,0],[0,0]]}"#;
        assert!(DensityMatrix::from_json(bad).is_err());
    }

    #[test]
    fn fidelity_and_distance_basics() {
        let a = DensityMatrix::vacuum(4);
        let b = FockVector::basis(4, 1).unwrap().to_density();
        assert!((a.fidelity(&a) - 1.0).abs() < 1e-12);
        assert!(a.fidelity(&b).abs() < 1e-12);
        assert!((a.trace_distance(&b).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn compaction_keeps_support() {
        let coh = FockVector::coherent(Complex64::new(0.5, 0.0), 40).to_density();
        let small = coh.compacted(1e-15, 2);
        assert!(small.cutoff() < 20);
        let f = small.fidelity(&coh);
        assert!((f - 1.0).abs() < 1e-7, "{f}");
    }
}
