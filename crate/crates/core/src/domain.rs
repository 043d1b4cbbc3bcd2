//! Axis-aligned input domains and the map to the unit cube.

use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::{Error, Result, Scalar};

/// Per-dimension `[lo, hi]` box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", try_from = "BoundsRecord<T>")]
pub struct Bounds<T> {
    lo: Vec<T>,
    hi: Vec<T>,
}

#[derive(Deserialize)]
#[serde(bound = "T: Scalar")]
struct BoundsRecord<T> {
    lo: Vec<T>,
    hi: Vec<T>,
}

impl<T: Scalar> TryFrom<BoundsRecord<T>> for Bounds<T> {
    type Error = Error;
    fn try_from(r: BoundsRecord<T>) -> Result<Self> {
        Bounds::new(r.lo, r.hi)
    }
}

impl<T: Scalar> Bounds<T> {
    pub fn new(lo: Vec<T>, hi: Vec<T>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::InvalidData(format!(
                "bounds need matching non-empty lo/hi (got {} and {})",
                lo.len(),
                hi.len()
            )));
        }
        for (j, (&a, &b)) in lo.iter().zip(&hi).enumerate() {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::InvalidData(format!(
                    "dimension {j}: need finite lo < hi, got [{a}, {b}]"
                )));
            }
        }
        Ok(Self { lo, hi })
    }

    pub fn unit(d: usize) -> Self {
        Self {
            lo: vec![T::zero(); d],
            hi: vec![T::one(); d],
        }
    }

    /// Same interval on every axis.
    pub fn cube(lo: T, hi: T, d: usize) -> Result<Self> {
        Self::new(vec![lo; d], vec![hi; d])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[T] {
        &self.lo
    }

    pub fn hi(&self) -> &[T] {
        &self.hi
    }

    pub fn volume(&self) -> T {
        self.lo
            .iter()
            .zip(&self.hi)
            .fold(T::one(), |v, (&a, &b)| v * (b - a))
    }

    pub fn contains(&self, x: &[T]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(&v, (&a, &b))| v >= a && v <= b)
    }

    pub fn to_unit(&self, x: &[T]) -> Vec<T> {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(&v, (&a, &b))| (v - a) / (b - a))
            .collect()
    }

    pub fn from_unit(&self, u: &[T]) -> Vec<T> {
        u.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(&v, (&a, &b))| a + v * (b - a))
            .collect()
    }

    pub fn to_unit_rows(&self, x: &Matrix<T>) -> Matrix<T> {
        let mut out = Matrix::zeros(0, self.dim());
        for r in x.rows() {
            out.push_row(&self.to_unit(r));
        }
        out
    }

    pub fn from_unit_rows(&self, u: &Matrix<T>) -> Matrix<T> {
        let mut out = Matrix::zeros(0, self.dim());
        for r in u.rows() {
            out.push_row(&self.from_unit(r));
        }
        out
    }
}
