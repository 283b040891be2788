use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::state::DensityMatrix;

/// First and second quadrature moments for `X = a + a†`, `Y = -i(a - a†)`.
/// Vacuum variance is 1 in this normalisation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureMoments {
    pub mean_x: f64,
    pub mean_y: f64,
    pub var_x: f64,
    pub var_y: f64,
    /// Symmetrised covariance `<{X,Y}>/2 - <X><Y>`.
    pub cov_xy: f64,
}

impl QuadratureMoments {
    /// `var_x var_y - cov_xy^2`, bounded below by 1 for physical states.
    pub fn uncertainty_product(&self) -> f64 {
        self.var_x * self.var_y - self.cov_xy * self.cov_xy
    }

    pub fn satisfies_heisenberg(&self) -> bool {
        self.uncertainty_product() >= 1.0 - 1e-8
    }

    /// Squeezing in dB, `-10 log10(var_y)`.
    pub fn squeezing_db(&self) -> f64 {
        -10.0 * self.var_y.log10()
    }

    /// Anti-squeezing in dB, `+10 log10(var_x)`.
    pub fn antisqueezing_db(&self) -> f64 {
        10.0 * self.var_x.log10()
    }

    pub fn covariance(&self) -> CovMat2 {
        CovMat2::new(self.var_x, self.cov_xy, self.var_y)
    }
}

/// Normally ordered low moments `<a>`, `<a^2>`, `<a† a>` (and `<a†^2>`, which
/// differs from `conj(<a^2>)` only for non-Hermitian operators).
#[derive(Debug, Clone, Copy)]
pub(crate) struct LadderMoments {
    pub a: Complex64,
    pub ad: Complex64,
    pub a2: Complex64,
    pub ad2: Complex64,
    pub n: Complex64,
    pub norm: Complex64,
}

/// Ladder moments of an arbitrary (possibly non-Hermitian) operator `s`,
/// i.e. `Tr[s a]` etc. Exact on the truncated support, no operator truncation.
pub(crate) fn ladder_moments(s: &DMatrix<Complex64>) -> LadderMoments {
    let d = s.nrows();
    let mut m = LadderMoments {
        a: Complex64::new(0.0, 0.0),
        ad: Complex64::new(0.0, 0.0),
        a2: Complex64::new(0.0, 0.0),
        ad2: Complex64::new(0.0, 0.0),
        n: Complex64::new(0.0, 0.0),
        norm: Complex64::new(0.0, 0.0),
    };
    for k in 0..d {
        let kf = k as f64;
        m.norm += s[(k, k)];
        m.n += s[(k, k)] * kf;
        if k >= 1 {
            // Tr[s a] = sum_k sqrt(k) s_{k,k-1}
            m.a += s[(k, k - 1)] * kf.sqrt();
            m.ad += s[(k - 1, k)] * kf.sqrt();
        }
        if k >= 2 {
            let f = (kf * (kf - 1.0)).sqrt();
            m.a2 += s[(k, k - 2)] * f;
            m.ad2 += s[(k - 2, k)] * f;
        }
    }
    m
}

/// Complex-valued covariance matrix of a (possibly non-Hermitian) operator
/// with symmetrised ordering. For Hermitian unit-trace input it is real and
/// equals the usual quadrature covariance.
pub(crate) fn operator_covariance(s: &DMatrix<Complex64>) -> [[Complex64; 2]; 2] {
    let m = ladder_moments(s);
    let norm = m.norm;
    let a = m.a / norm;
    let ad = m.ad / norm;
    let a2 = m.a2 / norm;
    let ad2 = m.ad2 / norm;
    let n = m.n / norm;
    let i = Complex64::new(0.0, 1.0);
    let one = Complex64::new(1.0, 0.0);
    let ex = a + ad;
    let ey = -i * (a - ad);
    let xx = a2 + ad2 + n * 2.0 + one;
    let yy = -a2 - ad2 + n * 2.0 + one;
    let xy = -i * (a2 - ad2);
    [[xx - ex * ex, xy - ex * ey], [xy - ex * ey, yy - ey * ey]]
}

/// Quadrature moments of a state.
pub fn moments(rho: &DensityMatrix) -> QuadratureMoments {
    let m = ladder_moments(rho.matrix());
    let t = m.norm.re;
    let a = m.a / t;
    let a2 = m.a2 / t;
    let n = m.n.re / t;
    let mean_x = 2.0 * a.re;
    let mean_y = 2.0 * a.im;
    QuadratureMoments {
        mean_x,
        mean_y,
        var_x: 2.0 * a2.re + 2.0 * n + 1.0 - mean_x * mean_x,
        var_y: -2.0 * a2.re + 2.0 * n + 1.0 - mean_y * mean_y,
        cov_xy: 2.0 * a2.im - mean_x * mean_y,
    }
}

/// Symplectic form `[[0, 1], [-1, 0]]`.
pub const SYMPLECTIC_FORM: Matrix2<f64> = Matrix2::new(0.0, 1.0, -1.0, 0.0);

/// Real symmetric 2x2 quadrature covariance matrix (vacuum = identity).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovMat2 {
    /// Row-major `[[xx, xy], [xy, yy]]`.
    pub m: [[f64; 2]; 2],
}

impl CovMat2 {
    pub fn new(xx: f64, xy: f64, yy: f64) -> Self {
        Self { m: [[xx, xy], [xy, yy]] }
    }

    pub fn identity() -> Self {
        Self::new(1.0, 0.0, 1.0)
    }

    pub fn scaled_identity(s: f64) -> Self {
        Self::new(s, 0.0, s)
    }

    /// Symmetrises the input.
    pub fn from_matrix(m: &Matrix2<f64>) -> Self {
        Self::new(m[(0, 0)], 0.5 * (m[(0, 1)] + m[(1, 0)]), m[(1, 1)])
    }

    pub fn to_matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.m[0][0], self.m[0][1], self.m[1][0], self.m[1][1])
    }

    pub fn xx(&self) -> f64 {
        self.m[0][0]
    }

    pub fn yy(&self) -> f64 {
        self.m[1][1]
    }

    pub fn xy(&self) -> f64 {
        self.m[0][1]
    }

    pub fn det(&self) -> f64 {
        self.xx() * self.yy() - self.xy() * self.xy()
    }

    /// Eigenvalues, ascending.
    pub fn eigenvalues(&self) -> [f64; 2] {
        let tr = self.xx() + self.yy();
        let disc = ((self.xx() - self.yy()).powi(2) + 4.0 * self.xy().powi(2)).sqrt();
        [0.5 * (tr - disc), 0.5 * (tr + disc)]
    }

    /// Smallest eigenvalue of the Hermitian matrix `Gamma + i Sigma`.
    pub fn uncertainty_min_eigenvalue(&self) -> f64 {
        // [[xx, xy + i], [xy - i, yy]]
        let tr = self.xx() + self.yy();
        let disc = ((self.xx() - self.yy()).powi(2) + 4.0 * (self.xy().powi(2) + 1.0)).sqrt();
        0.5 * (tr - disc)
    }

    /// `Gamma + i Sigma >= 0` up to -1e-8.
    pub fn is_physical(&self) -> bool {
        self.xx() > 0.0 && self.yy() > 0.0 && self.uncertainty_min_eigenvalue() >= -1e-8
    }

    /// Purity of the Gaussian state with this covariance, `1/sqrt(det)`.
    pub fn gaussian_purity(&self) -> f64 {
        1.0 / self.det().sqrt()
    }

    pub fn max_abs_diff(&self, other: &CovMat2) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                d = d.max((self.m[i][j] - other.m[i][j]).abs());
            }
        }
        d
    }
}
