//! Balanced beam splitter on two truncated modes.
//!
//! Convention: `a† -> (a† + b†)/sqrt(2)`, `b† -> (a† - b†)/sqrt(2)`. The first
//! output mode is the constructive ("+") port and the second the destructive
//! ("-") port, so `|alpha>|beta>` maps to `|(alpha+beta)/sqrt2>|(alpha-beta)/sqrt2>`.
//! The unitary conserves total photon number and is stored as one real block
//! per photon-number sector.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::state::DensityMatrix;
use crate::error::{invalid, Error, Result};

const C0: Complex64 = Complex64::new(0.0, 0.0);

/// Block-diagonal representation of the 50:50 beam-splitter unitary.
#[derive(Debug, Clone)]
pub struct BeamSplitter {
    /// `blocks[M][(p, m)] = <p, M-p| U |m, M-m>`.
    blocks: Vec<DMatrix<f64>>,
}

impl BeamSplitter {
    /// Sectors with total photon number up to `max_total`.
    pub fn new(max_total: usize) -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut blocks: Vec<DMatrix<f64>> = Vec::with_capacity(max_total + 1);
        blocks.push(DMatrix::from_element(1, 1, 1.0));
        for total in 1..=max_total {
            let prev = &blocks[total - 1];
            let mut cur = DMatrix::zeros(total + 1, total + 1);
            // column 0: U|0,M> = (1/sqrt M) (a† - b†)/sqrt2 U|0,M-1>
            // column m: U|m,M-m> = (1/sqrt m) (a† + b†)/sqrt2 U|m-1,M-m>
            for col in 0..=total {
                let (src_col, sign, norm) = if col == 0 {
                    (0, -1.0, (total as f64).sqrt())
                } else {
                    (col - 1, 1.0, (col as f64).sqrt())
                };
                for p in 0..total {
                    let v = prev[(p, src_col)];
                    if v == 0.0 {
                        continue;
                    }
                    let q = total - 1 - p;
                    // a† |p, q> -> sqrt(p+1) |p+1, q>
                    cur[(p + 1, col)] += s * v * ((p + 1) as f64).sqrt() / norm;
                    // ± b† |p, q> -> ± sqrt(q+1) |p, q+1>
                    cur[(p, col)] += sign * s * v * ((q + 1) as f64).sqrt() / norm;
                }
            }
            blocks.push(cur);
        }
        Self { blocks }
    }

    /// Enough sectors for two modes of the given cutoff.
    pub fn for_cutoff(cutoff: usize) -> Self {
        Self::new(2 * cutoff)
    }

    pub fn max_total(&self) -> usize {
        self.blocks.len() - 1
    }

    pub fn block(&self, total: usize) -> &DMatrix<f64> {
        &self.blocks[total]
    }

    /// `<p, q| U |m, n>`.
    pub fn element(&self, p: usize, q: usize, m: usize, n: usize) -> f64 {
        if p + q != m + n || p + q > self.max_total() {
            return 0.0;
        }
        self.blocks[p + q][(p, m)]
    }

    /// Apply `U` (or `U†`) to each column of a two-mode operator, keeping
    /// output levels within the cutoff.
    fn apply_to_columns(&self, mat: &DMatrix<Complex64>, cutoff: usize, inverse: bool) -> DMatrix<Complex64> {
        let d = cutoff + 1;
        let mut out = DMatrix::from_element(mat.nrows(), mat.ncols(), C0);
        let mut buf = vec![C0; 2 * cutoff + 1];
        for c in 0..mat.ncols() {
            let col = mat.column(c);
            for total in 0..=2 * cutoff {
                let lo = total.saturating_sub(cutoff);
                let hi = total.min(cutoff);
                let mut any = false;
                for m in lo..=hi {
                    let v = col[m * d + total - m];
                    buf[m] = v;
                    any |= v != C0;
                }
                if !any {
                    continue;
                }
                let block = &self.blocks[total];
                for p in lo..=hi {
                    let mut acc = C0;
                    for m in lo..=hi {
                        let u = if inverse { block[(m, p)] } else { block[(p, m)] };
                        acc += buf[m] * u;
                    }
                    out[(p * d + total - p, c)] = acc;
                }
            }
        }
        out
    }

    fn check(&self, cutoff: usize) -> Result<()> {
        if 2 * cutoff > self.max_total() {
            return Err(invalid(format!(
                "beam splitter built for total {} but cutoff {cutoff} needs {}",
                self.max_total(),
                2 * cutoff
            )));
        }
        Ok(())
    }

    /// `U rho U†` (or `U† rho U`) on a two-mode state.
    pub fn transform(&self, rho: &TwoModeDensity, inverse: bool) -> Result<TwoModeDensity> {
        self.check(rho.cutoff)?;
        let left = self.apply_to_columns(&rho.mat, rho.cutoff, inverse);
        let right = self.apply_to_columns(&left.adjoint(), rho.cutoff, inverse);
        Ok(TwoModeDensity {
            cutoff: rho.cutoff,
            mat: right.adjoint(),
        })
    }

    /// Interfere two copies of `rho`, apply the diagonal POVM `povm` to the
    /// "+" port and return the unnormalised state of the "-" port. Equivalent
    /// to `transform` followed by [`project_mode`] on the first mode, without
    /// materialising the two-mode operator.
    pub fn interfere_and_project(&self, rho: &DensityMatrix, povm: &[f64]) -> Result<DensityMatrix> {
        let n = rho.cutoff();
        self.check(n)?;
        if povm.len() != n + 1 {
            return Err(Error::CutoffMismatch(povm.len().saturating_sub(1), n));
        }
        let d = n + 1;
        let r: Vec<Complex64> = rho.matrix().transpose().iter().copied().collect(); // row-major
        let at = |m: usize, k: usize| r[m * d + k];
        let mut out = vec![C0; d * d];
        // per (j, k): the input pairs (m, j+k-m) reachable within the cutoff
        let mut coeffs: Vec<Vec<(usize, f64)>> = vec![Vec::new(); d];
        for (j, &pj) in povm.iter().enumerate() {
            if pj == 0.0 {
                continue;
            }
            for (k, list) in coeffs.iter_mut().enumerate() {
                list.clear();
                let total = j + k;
                let block = &self.blocks[total];
                for m in total.saturating_sub(n)..=total.min(n) {
                    let u = block[(j, m)];
                    if u != 0.0 {
                        list.push((m, u));
                    }
                }
            }
            for k in 0..d {
                let mk = j + k;
                for l in k..d {
                    let ml = j + l;
                    let mut acc = C0;
                    for &(m, u1) in &coeffs[k] {
                        let mut inner = C0;
                        for &(mp, u2) in &coeffs[l] {
                            inner += at(m, mp) * at(mk - m, ml - mp) * u2;
                        }
                        acc += inner * u1;
                    }
                    out[k * d + l] += acc * pj;
                }
            }
        }
        let mat = DMatrix::from_fn(d, d, |k, l| if l >= k { out[k * d + l] } else { out[l * d + k].conj() });
        Ok(DensityMatrix { mat })
    }
}

/// Two-mode density operator; basis index `i1 * (cutoff + 1) + i2`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoModeDensity {
    pub cutoff: usize,
    pub mat: DMatrix<Complex64>,
}

impl TwoModeDensity {
    pub fn product(a: &DensityMatrix, b: &DensityMatrix) -> Result<Self> {
        if a.cutoff() != b.cutoff() {
            return Err(Error::CutoffMismatch(a.cutoff(), b.cutoff()));
        }
        Ok(Self {
            cutoff: a.cutoff(),
            mat: a.matrix().kronecker(b.matrix()),
        })
    }

    pub fn dim(&self) -> usize {
        self.cutoff + 1
    }

    pub fn get(&self, i1: usize, i2: usize, j1: usize, j2: usize) -> Complex64 {
        let d = self.dim();
        self.mat[(i1 * d + i2, j1 * d + j2)]
    }

    pub fn trace(&self) -> f64 {
        self.mat.diagonal().iter().map(|c| c.re).sum()
    }

    /// `<n_1 + n_2>`.
    pub fn total_photon_number(&self) -> f64 {
        let d = self.dim();
        let mut acc = 0.0;
        for i1 in 0..d {
            for i2 in 0..d {
                acc += (i1 + i2) as f64 * self.mat[(i1 * d + i2, i1 * d + i2)].re;
            }
        }
        acc / self.trace()
    }

    pub fn fidelity(&self, other: &TwoModeDensity) -> f64 {
        let a = DensityMatrix { mat: self.mat.clone() };
        let b = DensityMatrix { mat: other.mat.clone() };
        a.fidelity(&b)
    }
}

/// Which mode a diagonal POVM acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    First,
    Second,
}

/// Balanced beam splitter acting on `rho_a ⊗ rho_b`.
pub fn beamsplitter_interfere(rho_a: &DensityMatrix, rho_b: &DensityMatrix) -> Result<TwoModeDensity> {
    let prod = TwoModeDensity::product(rho_a, rho_b)?;
    BeamSplitter::for_cutoff(prod.cutoff).transform(&prod, false)
}

/// Apply a diagonal POVM to `mode`, trace it out, and return the renormalised
/// state of the other mode with the success probability.
pub fn project_mode(rho2: &TwoModeDensity, povm: &[f64], mode: Mode) -> Result<(DensityMatrix, f64)> {
    let d = rho2.dim();
    if povm.len() != d {
        return Err(Error::CutoffMismatch(povm.len().saturating_sub(1), rho2.cutoff));
    }
    let mat = DMatrix::from_fn(d, d, |k, l| {
        let mut acc = C0;
        for (j, &pj) in povm.iter().enumerate() {
            if pj == 0.0 {
                continue;
            }
            let e = match mode {
                Mode::Second => rho2.get(k, j, l, j),
                Mode::First => rho2.get(j, k, j, l),
            };
            acc += e * pj;
        }
        acc
    });
    let out = DensityMatrix { mat };
    let p = out.trace();
    if !(p > 0.0) {
        return Err(Error::ZeroSuccess);
    }
    let (out, p) = out.normalized()?;
    Ok((out, p))
}

/// `Tr_2[rho2 (I ⊗ Pi)]`, renormalised, with the success probability.
pub fn project_and_trace(rho2: &TwoModeDensity, povm: &[f64]) -> Result<(DensityMatrix, f64)> {
    project_mode(rho2, povm, Mode::Second)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::FockVector;

    #[test]
    fn blocks_are_orthogonal() {
        let bs = BeamSplitter::new(30);
        for total in [0, 1, 5, 17, 30] {
            let b = bs.block(total);
            let err = (b.transpose() * b - DMatrix::identity(total + 1, total + 1)).amax();
            assert!(err < 1e-12, "sector {total}: {err}");
        }
    }

    #[test]
    fn single_photon_convention() {
        let bs = BeamSplitter::new(2);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        // |1,0> -> (|1,0> + |0,1>)/sqrt2 ; |0,1> -> (|1,0> - |0,1>)/sqrt2
        assert!((bs.element(1, 0, 1, 0) - s).abs() < 1e-15);
        assert!((bs.element(0, 1, 1, 0) - s).abs() < 1e-15);
        assert!((bs.element(1, 0, 0, 1) - s).abs() < 1e-15);
        assert!((bs.element(0, 1, 0, 1) + s).abs() < 1e-15);
    }

    #[test]
    fn vacuum_passes_through() {
        let v = DensityMatrix::vacuum(4);
        let out = beamsplitter_interfere(&v, &v).unwrap();
        assert!((out.get(0, 0, 0, 0).re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn hong_ou_mandel() {
        let one = FockVector::basis(4, 1).unwrap().to_density();
        let out = beamsplitter_interfere(&one, &one).unwrap();
        assert!((out.get(2, 0, 2, 0).re - 0.5).abs() < 1e-14);
        assert!((out.get(0, 2, 0, 2).re - 0.5).abs() < 1e-14);
        assert!(out.get(1, 1, 1, 1).norm() < 1e-14);
        assert!((out.trace() - 1.0).abs() < 1e-14);

        let (rest, p) = project_and_trace(&out, &vacuum_povm(4)).unwrap();
        assert!((p - 0.5).abs() < 1e-14);
        assert!((rest.get(2, 2).re - 1.0).abs() < 1e-14);
    }

    fn vacuum_povm(cutoff: usize) -> Vec<f64> {
        let mut p = vec![0.0; cutoff + 1];
        p[0] = 1.0;
        p
    }

    #[test]
    fn coherent_pair_interferes() {
        let alpha = Complex64::new(0.6, 0.2);
        let c = FockVector::coherent(alpha, 20).to_density();
        let out = beamsplitter_interfere(&c, &c).unwrap();
        let plus = FockVector::coherent(alpha * 2f64.sqrt(), 20).to_density();
        let expected = TwoModeDensity::product(&plus, &DensityMatrix::vacuum(20)).unwrap();
        assert!(out.fidelity(&expected) > 1.0 - 1e-10);
    }

    #[test]
    fn identity_povm_is_partial_trace() {
        let a = FockVector::coherent(Complex64::new(0.3, 0.0), 10).normalized().unwrap().to_density();
        let b = FockVector::basis(10, 1).unwrap().to_density();
        let prod = TwoModeDensity::product(&a, &b).unwrap();
        let (rest, p) = project_and_trace(&prod, &vec![1.0; 11]).unwrap();
        assert!((p - 1.0).abs() < 1e-12);
        assert!(rest.trace_distance(&a).unwrap() < 1e-12);
    }

    #[test]
    fn cutoff_mismatch_rejected() {
        let a = DensityMatrix::vacuum(3);
        let b = DensityMatrix::vacuum(4);
        assert!(matches!(beamsplitter_interfere(&a, &b), Err(Error::CutoffMismatch(3, 4))));
    }

    #[test]
    fn fused_projection_matches_explicit_route() {
        let n = 8;
        let rho = FockVector::coherent(Complex64::new(0.4, -0.25), n).normalized().unwrap().to_density();
        let rho = crate::fock::loss_channel(&rho, 0.7).unwrap();
        let povm: Vec<f64> = (0..=n).map(|j| 0.6f64.powi(j as i32 + 1)).collect();
        let bs = BeamSplitter::for_cutoff(n);
        let fused = bs.interfere_and_project(&rho, &povm).unwrap();
        let two = beamsplitter_interfere(&rho, &rho).unwrap();
        let (explicit, p) = project_mode(&two, &povm, Mode::First).unwrap();
        let diff = (fused.matrix() - explicit.matrix().map(|c| c * p)).camax();
        assert!(diff < 1e-12, "{diff}");
    }
}
