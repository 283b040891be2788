//! Wigner function on a rectangular grid in the `(x, y)` quadrature plane.
//!
//! `W(x, y) = (1/2pi) Tr[rho D(beta) P]` with `beta = x + i y`, `P` the parity
//! operator. With `X = a + a†` this gives `W_vac(0,0) = 1/(2pi)` and unit
//! vacuum variances.

use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::state::DensityMatrix;
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub y_min: f64,
    pub y_max: f64,
    pub ny: usize,
}

impl Grid {
    pub fn square(half_width: f64, n: usize) -> Self {
        Self {
            x_min: -half_width,
            x_max: half_width,
            nx: n,
            y_min: -half_width,
            y_max: half_width,
            ny: n,
        }
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.nx - 1) as f64
    }

    pub fn dy(&self) -> f64 {
        (self.y_max - self.y_min) / (self.ny - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx()
    }

    pub fn y(&self, j: usize) -> f64 {
        self.y_min + j as f64 * self.dy()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GridStatus {
    Ok,
    /// The grid sum deviates from 1 by more than 1e-2.
    CoarseGrid,
}

#[derive(Debug, Clone)]
pub struct WignerField {
    pub grid: Grid,
    /// `values[j * nx + i]` at `(x(i), y(j))`.
    pub values: Vec<f64>,
    pub status: GridStatus,
}

impl WignerField {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.grid.nx + i]
    }

    /// Riemann sum of `W dx dy`.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.dx() * self.grid.dy()
    }

    /// `(mean_x, mean_y, var_x, var_y)` from grid sums.
    pub fn grid_moments(&self) -> (f64, f64, f64, f64) {
        let g = &self.grid;
        let (mut s, mut sx, mut sy, mut sxx, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for j in 0..g.ny {
            for i in 0..g.nx {
                let w = self.at(i, j);
                let (x, y) = (g.x(i), g.y(j));
                s += w;
                sx += w * x;
                sy += w * y;
                sxx += w * x * x;
                syy += w * y * y;
            }
        }
        let (mx, my) = (sx / s, sy / s);
        (mx, my, sxx / s - mx * mx, syy / s - my * my)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// CSV with header `x,y,w`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "x,y,w")?;
        for j in 0..self.grid.ny {
            for i in 0..self.grid.nx {
                writeln!(out, "{},{},{}", self.grid.x(i), self.grid.y(j), self.at(i, j))?;
            }
        }
        Ok(())
    }
}

/// Matrix elements `<m|D(beta)|n>` for `m, n < dim`, exact (not the
/// displacement of the truncated space), via
/// `sqrt(m) D_{m,n} = sqrt(n) D_{m-1,n-1} + beta D_{m-1,n}`.
pub fn displacement_elements(beta: Complex64, dim: usize) -> DMatrix<Complex64> {
    let mut d = DMatrix::from_element(dim, dim, Complex64::new(0.0, 0.0));
    let mut c = Complex64::new((-0.5 * beta.norm_sqr()).exp(), 0.0);
    d[(0, 0)] = c;
    for n in 1..dim {
        c = -c * beta.conj() / (n as f64).sqrt();
        d[(0, n)] = c;
    }
    for m in 1..dim {
        let sm = (m as f64).sqrt();
        for n in 0..dim {
            let mut v = beta * d[(m - 1, n)];
            if n > 0 {
                v += d[(m - 1, n - 1)] * (n as f64).sqrt();
            }
            d[(m, n)] = v / sm;
        }
    }
    d
}

/// Wigner function value at a single point.
pub fn wigner_point(rho: &DensityMatrix, x: f64, y: f64) -> f64 {
    let dim = rho.dim();
    let d = displacement_elements(Complex64::new(x, y), dim);
    let r = rho.matrix();
    let mut acc = Complex64::new(0.0, 0.0);
    for n in 0..dim {
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        for m in 0..dim {
            acc += r[(n, m)] * d[(m, n)] * sign;
        }
    }
    acc.re / (2.0 * std::f64::consts::PI)
}

pub fn wigner(rho: &DensityMatrix, grid: &Grid) -> Result<WignerField> {
    if grid.nx < 2 || grid.ny < 2 || !(grid.x_max > grid.x_min) || !(grid.y_max > grid.y_min) {
        return Err(invalid("Wigner grid needs at least 2x2 points and positive extent"));
    }
    let values: Vec<f64> = (0..grid.ny)
        .into_par_iter()
        .flat_map_iter(|j| {
            let y = grid.y(j);
            (0..grid.nx).map(move |i| wigner_point(rho, grid.x(i), y))
        })
        .collect();
    let mut field = WignerField {
        grid: *grid,
        values,
        status: GridStatus::Ok,
    };
    if (field.integral() - 1.0).abs() > 1e-2 {
        field.status = GridStatus::CoarseGrid;
    }
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::FockVector;

    #[test]
    fn vacuum_peak_value() {
        let w = wigner_point(&DensityMatrix::vacuum(6), 0.0, 0.0);
        assert!((w - 1.0 / (2.0 * std::f64::consts::PI)).abs() < 1e-15);
    }

    #[test]
    fn displacement_is_unitary_on_low_levels() {
        let d = displacement_elements(Complex64::new(0.8, -0.3), 60);
        let u = d.adjoint() * &d;
        for i in 0..10 {
            assert!((u[(i, i)].re - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn vacuum_grid_moments() {
        let f = wigner(&DensityMatrix::vacuum(10), &Grid::square(6.0, 121)).unwrap();
        assert_eq!(f.status, GridStatus::Ok);
        assert!((f.integral() - 1.0).abs() < 1e-3);
        let (_, _, vx, vy) = f.grid_moments();
        assert!((vx - 1.0).abs() < 1e-3 && (vy - 1.0).abs() < 1e-3);
    }

    #[test]
    fn single_photon_is_negative_at_origin() {
        let rho = FockVector::basis(6, 1).unwrap().to_density();
        assert!(wigner_point(&rho, 0.0, 0.0) < 0.0);
    }

    #[test]
    fn coarse_grid_flagged() {
        let f = wigner(&DensityMatrix::vacuum(4), &Grid::square(1.0, 5)).unwrap();
        assert_eq!(f.status, GridStatus::CoarseGrid);
    }

    #[test]
    fn csv_header() {
        let f = wigner(&DensityMatrix::vacuum(4), &Grid::square(1.0, 3)).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("x,y,w\n"));
        assert_eq!(s.lines().count(), 10);
    }
}
