//! Macroscopic order parameters shared by the LVQ and SCM models.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of independent order parameters for two adaptive vectors and two
/// characteristic vectors.
pub const STATE_DIM: usize = 7;

/// Column labels in the canonical array order.
pub const STATE_LABELS: [&str; STATE_DIM] = ["R11", "R12", "R21", "R22", "Q11", "Q12", "Q22"];

/// Overlaps `R[i][m] = w_i . B_m` and `Q_ik = w_i . w_k` (with `Q21 == Q12`).
///
/// The same type doubles as the time derivative of a state; the invariants
/// below only apply when it describes an actual configuration.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrderParameterState {
    pub r: [[f64; 2]; 2],
    pub q11: f64,
    pub q12: f64,
    pub q22: f64,
}

impl OrderParameterState {
    pub fn new(r: [[f64; 2]; 2], q11: f64, q12: f64, q22: f64) -> Self {
        Self { r, q11, q12, q22 }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    /// Both adaptive vectors equal to their characteristic vector.
    pub fn identity() -> Self {
        Self::new([[1.0, 0.0], [0.0, 1.0]], 1.0, 0.0, 1.0)
    }

    /// `R_im = r` for all `i, m`, `Q_11 = Q_22 = q`, `Q_12 = c`.
    pub fn symmetric(r: f64, q: f64, c: f64) -> Self {
        Self::new([[r, r], [r, r]], q, c, q)
    }

    /// Symmetric matrix access `Q_ik`, zero-based.
    #[inline]
    pub fn q(&self, i: usize, k: usize) -> f64 {
        match (i, k) {
            (0, 0) => self.q11,
            (1, 1) => self.q22,
            _ => self.q12,
        }
    }

    pub fn to_array(&self) -> [f64; STATE_DIM] {
        [
            self.r[0][0],
            self.r[0][1],
            self.r[1][0],
            self.r[1][1],
            self.q11,
            self.q12,
            self.q22,
        ]
    }

    pub fn from_array(a: &[f64; STATE_DIM]) -> Self {
        Self::new([[a[0], a[1]], [a[2], a[3]]], a[4], a[5], a[6])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// `sqrt(sum of squares)` of all seven components.
    pub fn norm(&self) -> f64 {
        self.to_array().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut a = self.to_array();
        a.iter_mut().for_each(|v| *v *= factor);
        Self::from_array(&a)
    }

    pub fn plus(&self, other: &Self) -> Self {
        let (a, b) = (self.to_array(), other.to_array());
        Self::from_array(&std::array::from_fn(|j| a[j] + b[j]))
    }

    pub fn minus(&self, other: &Self) -> Self {
        self.plus(&other.scaled(-1.0))
    }

    /// Exchange adaptive-vector labels 1 and 2.
    pub fn swap_students(&self) -> Self {
        Self::new([self.r[1], self.r[0]], self.q22, self.q12, self.q11)
    }

    /// Exchange characteristic-vector labels 1 and 2.
    pub fn swap_targets(&self) -> Self {
        Self::new(
            [[self.r[0][1], self.r[0][0]], [self.r[1][1], self.r[1][0]]],
            self.q11,
            self.q12,
            self.q22,
        )
    }

    /// Gram-matrix consistency of two real vectors, up to `tol`.
    pub fn check_gram(&self, tol: f64) -> Result<()> {
        if !self.is_finite() {
            return Err(Error::InconsistentState("non-finite component".into()));
        }
        if self.q11 < -tol || self.q22 < -tol {
            return Err(Error::InconsistentState(format!(
                "negative self-overlap Q11 = {}, Q22 = {}",
                self.q11, self.q22
            )));
        }
        if self.q12 * self.q12 > self.q11 * self.q22 + tol {
            return Err(Error::InconsistentState(format!(
                "Q12^2 = {} exceeds Q11 Q22 = {}",
                self.q12 * self.q12,
                self.q11 * self.q22
            )));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.check_gram(1e-10)
    }

    /// `S_i = |R_i1 - R_i2|`.
    pub fn specialization(&self) -> (f64, f64) {
        ((self.r[0][0] - self.r[0][1]).abs(), (self.r[1][0] - self.r[1][1]).abs())
    }

    /// Relabel adaptive vectors so that student 1 is the one aligned with
    /// target 1 (`R11 + R22 >= R12 + R21`).
    pub fn canonical(&self) -> Self {
        if self.r[0][0] + self.r[1][1] >= self.r[0][1] + self.r[1][0] {
            *self
        } else {
            self.swap_students()
        }
    }
}
