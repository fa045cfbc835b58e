//! Dense f64 linear algebra, activations and the seeded generator used by
//! every other module.
//!
//! Weight matrices follow the row-vector convention `y = x W`, so a weight
//! acting on an `m`-dimensional input and producing a `p`-dimensional output
//! is stored as an `m × p` row-major matrix.

use std::fmt;
use std::ops::{Deref, DerefMut};

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumError {
    #[error("{op}: shape mismatch between {left} and {right}")]
    Shape {
        op: &'static str,
        left: String,
        right: String,
    },
    #[error("invalid range: lo ({lo}) must be below hi ({hi})")]
    Range { lo: f64, hi: f64 },
}

fn shape_err(op: &'static str, left: impl fmt::Display, right: impl fmt::Display) -> NumError {
    NumError::Shape {
        op,
        left: left.to_string(),
        right: right.to_string(),
    }
}

/// A real vector.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vector {
    data: Vec<f64>,
}

impl Vector {
    pub fn zeros(len: usize) -> Self {
        Vector { data: vec![0.0; len] }
    }

    pub fn filled(len: usize, value: f64) -> Self {
        Vector {
            data: vec![value; len],
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn shape(&self) -> String {
        format!("vector[{}]", self.data.len())
    }
}

impl From<Vec<f64>> for Vector {
    fn from(data: Vec<f64>) -> Self {
        Vector { data }
    }
}

impl From<&[f64]> for Vector {
    fn from(data: &[f64]) -> Self {
        Vector {
            data: data.to_vec(),
        }
    }
}

impl Deref for Vector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.data
    }
}

impl DerefMut for Vector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// A dense row-major matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NumError> {
        if data.len() != rows * cols {
            return Err(shape_err(
                "Matrix::from_vec",
                format!("{rows}x{cols}"),
                format!("data[{}]", data.len()),
            ));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, NumError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(shape_err(
                    "Matrix::from_rows",
                    format!("row length {cols}"),
                    format!("row length {}", r.len()),
                ));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Shape check used when deserialising untrusted records.
    pub fn is_well_formed(&self) -> bool {
        self.data.len() == self.rows * self.cols
    }

    fn shape(&self) -> String {
        format!("matrix {}x{}", self.rows, self.cols)
    }

    /// `out += x W`; zero entries of `x` are skipped, which makes one-hot
    /// inputs cheap.
    pub(crate) fn vecmat_acc(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (xi, row) in x.iter().zip(self.data.chunks_exact(self.cols)) {
            if *xi == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(row) {
                *o += xi * w;
            }
        }
    }

    /// `out += W d`.
    pub(crate) fn matvec_acc(&self, d: &[f64], out: &mut [f64]) {
        debug_assert_eq!(d.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            *o += dot(row, d);
        }
    }

    /// `W += x dᵀ`.
    pub(crate) fn add_outer(&mut self, x: &[f64], d: &[f64]) {
        debug_assert_eq!(x.len(), self.rows);
        debug_assert_eq!(d.len(), self.cols);
        for (xi, row) in x.iter().zip(self.data.chunks_exact_mut(self.cols)) {
            if *xi == 0.0 {
                continue;
            }
            for (w, di) in row.iter_mut().zip(d) {
                *w += xi * di;
            }
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four independent accumulators let the compiler vectorise the loop
    // while keeping a fixed summation order.
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Standard matrix-vector product `W x`.
pub fn matvec(w: &Matrix, x: &Vector) -> Result<Vector, NumError> {
    if w.cols != x.len() {
        return Err(shape_err("matvec", w.shape(), x.shape()));
    }
    let mut out = Vector::zeros(w.rows);
    w.matvec_acc(x, &mut out);
    Ok(out)
}

/// Row-vector product `x W`, the form used by every recurrent cell.
pub fn vecmat(x: &Vector, w: &Matrix) -> Result<Vector, NumError> {
    if w.rows != x.len() {
        return Err(shape_err("vecmat", x.shape(), w.shape()));
    }
    let mut out = Vector::zeros(w.cols);
    w.vecmat_acc(x, &mut out);
    Ok(out)
}

pub fn hadamard(a: &Vector, b: &Vector) -> Result<Vector, NumError> {
    if a.len() != b.len() {
        return Err(shape_err("hadamard", a.shape(), b.shape()));
    }
    Ok(a.iter().zip(b.iter()).map(|(x, y)| x * y).collect::<Vec<_>>().into())
}

pub fn add(a: &Vector, b: &Vector) -> Result<Vector, NumError> {
    if a.len() != b.len() {
        return Err(shape_err("add", a.shape(), b.shape()));
    }
    Ok(a.iter().zip(b.iter()).map(|(x, y)| x + y).collect::<Vec<_>>().into())
}

pub fn concat(a: &Vector, b: &Vector) -> Vector {
    let mut data = Vec::with_capacity(a.len() + b.len());
    data.extend_from_slice(a);
    data.extend_from_slice(b);
    data.into()
}

#[inline]
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &Vector) -> Vector {
    x.iter().map(|&v| sigmoid_scalar(v)).collect::<Vec<_>>().into()
}

pub fn tanh(x: &Vector) -> Vector {
    x.iter().map(|v| v.tanh()).collect::<Vec<_>>().into()
}

/// Serializable snapshot of an [`Rng`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    /// 32-byte ChaCha key as lowercase hex.
    pub seed: String,
    pub stream: u64,
    /// Word position in the keystream, decimal (it is a u128).
    pub word_pos: String,
}

/// Seeded pseudo-random generator.
///
/// Backed by ChaCha8 with the key expanded from a `u64` seed. The output
/// stream is defined by the cipher, not by the host, so runs replay across
/// platforms. Floats are produced from the top 53 bits of `next_u64`.
#[derive(Clone, Debug)]
pub struct Rng {
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn seed_from_u64(seed: u64) -> Self {
        Rng {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`. Callers guarantee `lo < hi`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        let v = lo + (hi - lo) * self.unit();
        // Rounding can land exactly on `hi` for tiny ranges.
        if v >= hi {
            lo
        } else {
            v
        }
    }

    /// Uniform integer in `[0, n)` by multiply-shift; `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "Rng::below requires n > 0");
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    pub fn state(&self) -> RngState {
        let seed = self
            .inner
            .get_seed()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        RngState {
            seed,
            stream: self.inner.get_stream(),
            word_pos: self.inner.get_word_pos().to_string(),
        }
    }

    pub fn from_state(state: &RngState) -> Option<Self> {
        if state.seed.len() != 64 {
            return None;
        }
        let mut key = [0u8; 32];
        for (i, b) in key.iter_mut().enumerate() {
            *b = u8::from_str_radix(state.seed.get(2 * i..2 * i + 2)?, 16).ok()?;
        }
        let word_pos: u128 = state.word_pos.parse().ok()?;
        let mut inner = ChaCha8Rng::from_seed(key);
        inner.set_stream(state.stream);
        inner.set_word_pos(word_pos);
        Some(Rng { inner })
    }
}

// Written as `!(lo < hi)` so NaN bounds are rejected too.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn rand_uniform(rng: &mut Rng, lo: f64, hi: f64, n: usize) -> Result<Vector, NumError> {
    if !(lo < hi) {
        return Err(NumError::Range { lo, hi });
    }
    Ok((0..n).map(|_| rng.uniform(lo, hi)).collect::<Vec<_>>().into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use crate::numkit::Rng;

    fn scalar_matvec(w: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        w.iter()
            .map(|row| {
                let mut s = 0.0;
                for j in 0..x.len() {
                    s += row[j] * x[j];
                }
                s
            })
            .collect()
    }

    #[test]
    fn matvec_examples() {
        let x: Vector = vec![3.0, 4.0].into();
        assert_eq!(matvec(&Matrix::identity(2), &x).unwrap().as_slice(), &[3.0, 4.0]);
        let ones: Vector = vec![1.0, 1.0].into();
        assert_eq!(matvec(&Matrix::zeros(3, 2), &ones).unwrap().as_slice(), &[0.0; 3]);
        let rows = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        let w = Matrix::from_rows(&rows).unwrap();
        let got = matvec(&w, &ones).unwrap();
        assert_eq!(got.as_slice(), &[3.0, 7.0]);
        assert_eq!(got.as_slice(), scalar_matvec(&rows, &ones).as_slice());
    }

    #[test]
    fn matvec_shape_error_names_both_shapes() {
        let err = matvec(&Matrix::zeros(2, 3), &Vector::zeros(2)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2x3") && msg.contains("vector[2]"), "{msg}");
    }

    #[test]
    fn vecmat_is_transposed_matvec() {
        let w = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        let x: Vector = vec![1.0, -1.0].into();
        assert_eq!(vecmat(&x, &w).unwrap().as_slice(), &[-3.0, -3.0, -3.0]);
        assert!(vecmat(&Vector::zeros(3), &w).is_err());
    }

    #[test]
    fn hadamard_examples() {
        let a: Vector = vec![1.0, 2.0].into();
        assert_eq!(hadamard(&a, &Vector::zeros(2)).unwrap().as_slice(), &[0.0, 0.0]);
        assert_eq!(hadamard(&a, &Vector::filled(2, 1.0)).unwrap().as_slice(), &[1.0, 2.0]);
        let b: Vector = vec![0.5, -2.0].into();
        let c: Vector = vec![2.0, 0.5].into();
        assert_eq!(hadamard(&b, &c).unwrap().as_slice(), &[1.0, -1.0]);
        assert!(hadamard(&a, &Vector::zeros(3)).is_err());
    }

    #[test]
    fn concat_examples() {
        let one: Vector = vec![1.0].into();
        let two: Vector = vec![2.0].into();
        assert_eq!(concat(&one, &two).as_slice(), &[1.0, 2.0]);
        let five: Vector = vec![5.0].into();
        assert_eq!(concat(&Vector::zeros(0), &five).as_slice(), &[5.0]);
        let a: Vector = vec![1.0, 2.0].into();
        let b: Vector = vec![3.0, 4.0].into();
        assert_eq!(concat(&a, &b).as_slice(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn activations() {
        assert_eq!(sigmoid(&Vector::zeros(1))[0], 0.5);
        assert_eq!(tanh(&Vector::zeros(1))[0], 0.0);
        let big: Vector = vec![1e3, -1e3].into();
        let s = sigmoid(&big);
        assert!((s[0] - 1.0).abs() < 1e-12);
        assert!(s[1].is_finite() && s[1] >= 0.0 && s[1] < 1e-12);
        let t = tanh(&big);
        assert_eq!(t.as_slice(), &[1.0, -1.0]);
    }

    #[test]
    fn rand_uniform_examples() {
        let a = rand_uniform(&mut Rng::seed_from_u64(7), 0.0, 1.0, 3).unwrap();
        let b = rand_uniform(&mut Rng::seed_from_u64(7), 0.0, 1.0, 3).unwrap();
        assert_eq!(a, b);
        assert!(rand_uniform(&mut Rng::seed_from_u64(7), 0.0, 1.0, 0).unwrap().is_empty());
        assert!(rand_uniform(&mut Rng::seed_from_u64(7), 1.0, 1.0, 3).is_err());
        let mut rng = Rng::seed_from_u64(11);
        let draws = rand_uniform(&mut rng, -2.0, 4.0, 100_000).unwrap();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
        assert!(draws.iter().all(|v| (-2.0..4.0).contains(v)));
    }

    #[test]
    fn rng_state_round_trip_resumes_stream() {
        let mut rng = Rng::seed_from_u64(99);
        for _ in 0..17 {
            rng.next_u64();
        }
        let mut resumed = Rng::from_state(&rng.state()).unwrap();
        for _ in 0..50 {
            assert_eq!(rng.next_u64(), resumed.next_u64());
        }
        assert!(Rng::from_state(&RngState {
            seed: "zz".into(),
            stream: 0,
            word_pos: "0".into()
        })
        .is_none());
    }

    #[test]
    fn rng_below_stays_in_range() {
        let mut rng = Rng::seed_from_u64(3);
        let mut seen = [0usize; 8];
        for _ in 0..8000 {
            seen[rng.below(8)] += 1;
        }
        assert!(seen.iter().all(|&c| c > 800));
    }

    fn small_matrix() -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
        (1usize..=16, 1usize..=16).prop_flat_map(|(r, c)| {
            (Just(r), Just(c), prop::collection::vec(-10.0f64..10.0, r * c))
        })
    }

    proptest! {
        #[test]
        fn matvec_is_linear((r, c, data) in small_matrix(), seed in any::<u64>()) {
            let w = Matrix::from_vec(r, c, data).unwrap();
            let mut rng = Rng::seed_from_u64(seed);
            let x = rand_uniform(&mut rng, -5.0, 5.0, c).unwrap();
            let y = rand_uniform(&mut rng, -5.0, 5.0, c).unwrap();
            let lhs = matvec(&w, &add(&x, &y).unwrap()).unwrap();
            let rhs = add(&matvec(&w, &x).unwrap(), &matvec(&w, &y).unwrap()).unwrap();
            for (a, b) in lhs.iter().zip(rhs.iter()) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
            }
        }

        #[test]
        fn sigmoid_is_symmetric(v in prop::collection::vec(-50.0f64..50.0, 0..32)) {
            let x: Vector = v.clone().into();
            let neg: Vector = v.iter().map(|a| -a).collect::<Vec<_>>().into();
            let (s, t) = (sigmoid(&x), sigmoid(&neg));
            for (a, b) in s.iter().zip(t.iter()) {
                prop_assert!((a + b - 1.0).abs() <= 1e-12);
            }
        }

        #[test]
        fn concat_slices_back(a in prop::collection::vec(-1.0f64..1.0, 0..10),
                              b in prop::collection::vec(-1.0f64..1.0, 0..10)) {
            let joined = concat(&a.clone().into(), &b.clone().into());
            prop_assert_eq!(joined.len(), a.len() + b.len());
            prop_assert_eq!(&joined[..a.len()], a.as_slice());
            prop_assert_eq!(&joined[a.len()..], b.as_slice());
        }
    }
}
