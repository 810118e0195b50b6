//! Small dense matrices for coefficient values (d ≤ 2).
//!
//! A one-dimensional coefficient is stored in the `[0][0]` slot; the
//! remaining entries are ignored by every 1D code path.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat2(pub [[f64; 2]; 2]);

impl Mat2 {
    pub const ZERO: Mat2 = Mat2([[0.0; 2]; 2]);
    pub const IDENTITY: Mat2 = Mat2([[1.0, 0.0], [0.0, 1.0]]);

    pub fn diag(a: f64, b: f64) -> Self {
        Mat2([[a, 0.0], [0.0, b]])
    }

    pub fn scalar(c: f64) -> Self {
        Self::diag(c, c)
    }

    pub fn transpose(&self) -> Self {
        let m = self.0;
        Mat2([[m[0][0], m[1][0]], [m[0][1], m[1][1]]])
    }

    pub fn scale(&self, s: f64) -> Self {
        let m = self.0;
        Mat2([[s * m[0][0], s * m[0][1]], [s * m[1][0], s * m[1][1]]])
    }

    pub fn add(&self, other: &Mat2) -> Self {
        let (a, b) = (self.0, other.0);
        Mat2([
            [a[0][0] + b[0][0], a[0][1] + b[0][1]],
            [a[1][0] + b[1][0], a[1][1] + b[1][1]],
        ])
    }

    pub fn sub(&self, other: &Mat2) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn mul_vec(&self, v: [f64; 2]) -> [f64; 2] {
        let m = self.0;
        [
            m[0][0] * v[0] + m[0][1] * v[1],
            m[1][0] * v[0] + m[1][1] * v[1],
        ]
    }

    /// `A v · w` restricted to the leading `dim` components.
    pub fn form(&self, dim: usize, v: [f64; 2], w: [f64; 2]) -> f64 {
        if dim == 1 {
            self.0[0][0] * v[0] * w[0]
        } else {
            let av = self.mul_vec(v);
            av[0] * w[0] + av[1] * w[1]
        }
    }

    pub fn max_abs_diff(&self, other: &Mat2, dim: usize) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..dim {
            for j in 0..dim {
                worst = worst.max((self.0[i][j] - other.0[i][j]).abs());
            }
        }
        worst
    }

    pub fn asymmetry(&self, dim: usize) -> f64 {
        if dim == 1 {
            0.0
        } else {
            (self.0[0][1] - self.0[1][0]).abs()
        }
    }

    pub fn symmetric_part(&self) -> Mat2 {
        self.add(&self.transpose()).scale(0.5)
    }

    /// Eigenvalues of the symmetric part in ascending order.
    ///
    /// Closed form for 2×2: `tr/2 ∓ sqrt((a-d)²/4 + b²)`.
    pub fn sym_eigenvalues(&self, dim: usize) -> [f64; 2] {
        if dim == 1 {
            return [self.0[0][0], self.0[0][0]];
        }
        let s = self.symmetric_part().0;
        let mean = 0.5 * (s[0][0] + s[1][1]);
        let half_gap = 0.5 * (s[0][0] - s[1][1]);
        let rad = (half_gap * half_gap + s[0][1] * s[0][1]).sqrt();
        [mean - rad, mean + rad]
    }

    pub fn rows(&self, dim: usize) -> Vec<Vec<f64>> {
        (0..dim).map(|i| self.0[i][..dim].to_vec()).collect()
    }
}

impl Default for Mat2 {
    fn default() -> Self {
        Mat2::ZERO
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigenvalues_of_rotated_diagonal() {
        // R diag(1, 3) Rᵀ with a 30° rotation
        let (c, s) = (30f64.to_radians().cos(), 30f64.to_radians().sin());
        let m = Mat2([
            [c * c + 3.0 * s * s, (3.0 - 1.0) * c * s],
            [(3.0 - 1.0) * c * s, s * s + 3.0 * c * c],
        ]);
        let [lo, hi] = m.sym_eigenvalues(2);
        assert!((lo - 1.0).abs() < 1e-14);
        assert!((hi - 3.0).abs() < 1e-14);
    }

    #[test]
    fn form_ignores_unused_entries_in_1d() {
        let m = Mat2([[2.0, 7.0], [7.0, 9.0]]);
        assert_eq!(m.form(1, [3.0, 5.0], [4.0, 5.0]), 24.0);
    }
}
