//! Unsigned fixed-point code arrays and the rounding rules shared by the
//! oracles and the simulated converters.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest code of a `bits`-wide unsigned converter, `2^bits - 1`.
#[inline]
pub fn max_code(bits: u32) -> u32 {
    debug_assert!((1..=16).contains(&bits));
    (1u32 << bits) - 1
}

/// `round(num / den)` with ties rounded up, in exact integer arithmetic.
#[inline]
pub fn round_ratio_half_up(num: u128, den: u128) -> u128 {
    debug_assert!(den > 0);
    (2 * num + den) / (2 * den)
}

pub(crate) fn check_bits(bits: u32) -> Result<()> {
    if (1..=16).contains(&bits) {
        Ok(())
    } else {
        Err(Error::invalid(format!("bit width {bits} outside 1..=16")))
    }
}

/// A vector of `bits`-wide unsigned codes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantizedVector {
    bits: u32,
    codes: Vec<u32>,
}

impl QuantizedVector {
    pub fn new(bits: u32, codes: Vec<u32>) -> Result<Self> {
        check_bits(bits)?;
        let max = max_code(bits);
        if let Some(bad) = codes.iter().find(|&&c| c > max) {
            return Err(Error::invalid(format!("code {bad} exceeds {bits}-bit range")));
        }
        Ok(Self { bits, codes })
    }

    pub fn zeros(bits: u32, len: usize) -> Result<Self> {
        Self::new(bits, vec![0; len])
    }

    pub fn random<R: Rng + ?Sized>(bits: u32, len: usize, rng: &mut R) -> Self {
        let max = max_code(bits);
        Self {
            bits,
            codes: (0..len).map(|_| rng.gen_range(0..=max)).collect(),
        }
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn codes(&self) -> &[u32] {
        &self.codes
    }

    pub fn into_codes(self) -> Vec<u32> {
        self.codes
    }
}

/// A row-major matrix of `bits`-wide unsigned codes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantizedMatrix {
    bits: u32,
    rows: usize,
    cols: usize,
    codes: Vec<u32>,
}

impl QuantizedMatrix {
    pub fn new(bits: u32, rows: usize, cols: usize, codes: Vec<u32>) -> Result<Self> {
        check_bits(bits)?;
        if rows == 0 || cols == 0 {
            return Err(Error::shape("matrix dimensions must be nonzero"));
        }
        if codes.len() != rows * cols {
            return Err(Error::shape(format!(
                "{} codes for a {rows}x{cols} matrix",
                codes.len()
            )));
        }
        let max = max_code(bits);
        if let Some(bad) = codes.iter().find(|&&c| c > max) {
            return Err(Error::invalid(format!("code {bad} exceeds {bits}-bit range")));
        }
        Ok(Self {
            bits,
            rows,
            cols,
            codes,
        })
    }

    pub fn from_rows(bits: u32, rows: &[Vec<u32>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::shape("ragged rows"));
        }
        Self::new(bits, rows.len(), cols, rows.concat())
    }

    pub fn from_fn(bits: u32, rows: usize, cols: usize, f: impl Fn(usize, usize) -> u32) -> Result<Self> {
        let codes = (0..rows)
            .flat_map(|r| (0..cols).map(move |c| (r, c)))
            .map(|(r, c)| f(r, c))
            .collect();
        Self::new(bits, rows, cols, codes)
    }

    pub fn random<R: Rng + ?Sized>(bits: u32, rows: usize, cols: usize, rng: &mut R) -> Self {
        let max = max_code(bits);
        Self {
            bits,
            rows,
            cols,
            codes: (0..rows * cols).map(|_| rng.gen_range(0..=max)).collect(),
        }
    }

    /// Matrix with `max_code` on the diagonal and zero elsewhere.
    pub fn scaled_identity(bits: u32, n: usize) -> Result<Self> {
        let max = max_code(bits);
        Self::from_fn(bits, n, n, |r, c| if r == c { max } else { 0 })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> u32 {
        self.codes[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[u32] {
        &self.codes[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> QuantizedVector {
        QuantizedVector {
            bits: self.bits,
            codes: (0..self.rows).map(|r| self.get(r, c)).collect(),
        }
    }

    pub fn codes(&self) -> &[u32] {
        &self.codes
    }

    pub fn to_rows(&self) -> Vec<Vec<u32>> {
        self.codes.chunks(self.cols).map(<[u32]>::to_vec).collect()
    }

    pub fn transpose(&self) -> Self {
        Self {
            bits: self.bits,
            rows: self.cols,
            cols: self.rows,
            codes: (0..self.cols)
                .flat_map(|c| (0..self.rows).map(move |r| (r, c)))
                .map(|(r, c)| self.get(r, c))
                .collect(),
        }
    }

    /// Assemble a matrix from column vectors of equal length and width.
    pub fn from_columns(columns: &[QuantizedVector]) -> Result<Self> {
        let first = columns
            .first()
            .ok_or_else(|| Error::shape("no columns"))?;
        let (bits, rows) = (first.bits, first.len());
        if columns.iter().any(|c| c.bits != bits || c.len() != rows) {
            return Err(Error::shape("columns differ in length or width"));
        }
        Self::from_fn(bits, rows, columns.len(), |r, c| columns[c].codes[r])
    }
}

/// Quantize nonnegative reals onto `bits`-wide codes against `full_scale`,
/// rounding half up and saturating.
pub fn quantize_unsigned(values: &[f64], full_scale: f64, bits: u32) -> Vec<u32> {
    let max = max_code(bits);
    values
        .iter()
        .map(|&v| {
            if full_scale <= 0.0 {
                return 0;
            }
            let u = (v / full_scale * f64::from(max) + 0.5).floor();
            u.clamp(0.0, f64::from(max)) as u32
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_rounding_ties_go_up() {
        assert_eq!(round_ratio_half_up(3, 2), 2);
        assert_eq!(round_ratio_half_up(5, 2), 3);
        assert_eq!(round_ratio_half_up(4, 3), 1);
        assert_eq!(round_ratio_half_up(0, 7), 0);
    }

    #[test]
    fn rejects_out_of_range_codes() {
        assert!(QuantizedVector::new(4, vec![0, 15, 16]).is_err());
        assert!(QuantizedMatrix::new(2, 2, 2, vec![0, 1, 2, 4]).is_err());
        assert!(QuantizedMatrix::new(2, 2, 2, vec![0, 1, 2]).is_err());
    }

    #[test]
    fn transpose_round_trips() {
        let m = QuantizedMatrix::from_rows(4, &[vec![1, 2, 3], vec![4, 5, 6]]).unwrap();
        let t = m.transpose();
        assert_eq!(t.rows(), 3);
        assert_eq!(t.get(2, 1), 6);
        assert_eq!(t.transpose(), m);
    }

    #[test]
    fn columns_assemble() {
        let m = QuantizedMatrix::from_rows(3, &[vec![1, 2], vec![3, 4]]).unwrap();
        let cols: Vec<_> = (0..2).map(|c| m.column(c)).collect();
        assert_eq!(QuantizedMatrix::from_columns(&cols).unwrap(), m);
    }
}
