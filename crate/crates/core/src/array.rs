//! Dense row-major `f64` arrays of rank 0..=2 with numpy-style broadcasting
//! restricted to trailing dimensions and scalars.

use crate::error::Error;

/// A dense array of 64-bit reals. Rank is at most 2; a rank-0 array holds a
/// single scalar.
#[derive(Clone, Debug, PartialEq)]
pub struct Array {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Array {
    pub fn scalar(v: f64) -> Self {
        Array { shape: vec![], data: vec![v] }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Array::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Array::full(shape, 1.0)
    }

    pub fn full(shape: &[usize], v: f64) -> Self {
        assert!(shape.len() <= 2, "rank > 2 not supported");
        let n: usize = shape.iter().product();
        Array { shape: shape.to_vec(), data: vec![v; n] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self, Error> {
        if shape.len() > 2 {
            return Err(Error::Shape(format!("rank {} > 2 not supported", shape.len())));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {:?} wants {} elements, got {}",
                shape,
                n,
                data.len()
            )));
        }
        Ok(Array { shape: shape.to_vec(), data })
    }

    /// Column vector `[n, 1]` from a slice.
    pub fn col(values: &[f64]) -> Self {
        Array { shape: vec![values.len(), 1], data: values.to_vec() }
    }

    pub fn vector(values: &[f64]) -> Self {
        Array { shape: vec![values.len()], data: values.to_vec() }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// The single element of a one-element array.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on array of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn rows(&self) -> usize {
        match self.shape.len() {
            2 => self.shape[0],
            _ => 1,
        }
    }

    pub fn cols(&self) -> usize {
        match self.shape.len() {
            2 => self.shape[1],
            1 => self.shape[0],
            _ => 1,
        }
    }

    /// Element at `(i, j)` of a rank-2 array.
    pub fn at(&self, i: usize, j: usize) -> f64 {
        debug_assert_eq!(self.shape.len(), 2);
        self.data[i * self.shape[1] + j]
    }

    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        debug_assert_eq!(self.shape.len(), 2);
        &mut self.data[i * self.shape[1] + j]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Array {
        Array { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Broadcast shape of two operands, aligning trailing dimensions. Each
    /// aligned pair of extents must be equal or contain a 1.
    pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Result<Vec<usize>, Error> {
        let rank = a.len().max(b.len());
        let mut out = vec![0usize; rank];
        for k in 0..rank {
            let da = if k < a.len() { a[a.len() - 1 - k] } else { 1 };
            let db = if k < b.len() { b[b.len() - 1 - k] } else { 1 };
            out[rank - 1 - k] = if da == db {
                da
            } else if da == 1 {
                db
            } else if db == 1 {
                da
            } else {
                return Err(Error::Shape(format!(
                    "cannot broadcast shapes {:?} and {:?}",
                    a, b
                )));
            };
        }
        Ok(out)
    }

    /// Elementwise combine with broadcasting.
    pub fn zip(&self, other: &Array, f: impl Fn(f64, f64) -> f64) -> Result<Array, Error> {
        let shape = Array::broadcast_shape(&self.shape, &other.shape)?;
        let n: usize = shape.iter().product();
        let (r, c) = match shape.len() {
            2 => (shape[0], shape[1]),
            1 => (1, shape[0]),
            _ => (1, 1),
        };
        let sa = Strides::for_broadcast(&self.shape, &shape);
        let sb = Strides::for_broadcast(&other.shape, &shape);
        let mut data = Vec::with_capacity(n);
        for i in 0..r {
            let base_a = i * sa.row;
            let base_b = i * sb.row;
            for j in 0..c {
                data.push(f(self.data[base_a + j * sa.col], other.data[base_b + j * sb.col]));
            }
        }
        Ok(Array { shape, data })
    }

    pub fn broadcast_to(&self, shape: &[usize]) -> Result<Array, Error> {
        let target = Array::broadcast_shape(&self.shape, shape)?;
        if target != shape {
            return Err(Error::Shape(format!(
                "cannot broadcast {:?} to {:?}",
                self.shape, shape
            )));
        }
        let n: usize = shape.iter().product();
        let (r, c) = match shape.len() {
            2 => (shape[0], shape[1]),
            1 => (1, shape[0]),
            _ => (1, 1),
        };
        let s = Strides::for_broadcast(&self.shape, shape);
        let mut data = Vec::with_capacity(n);
        for i in 0..r {
            let base = i * s.row;
            for j in 0..c {
                data.push(self.data[base + j * s.col]);
            }
        }
        Ok(Array { shape: shape.to_vec(), data })
    }

    /// Reduce by summation down to `shape` (the inverse of `broadcast_to`).
    pub fn sum_to(&self, shape: &[usize]) -> Result<Array, Error> {
        if Array::broadcast_shape(shape, &self.shape)? != self.shape {
            return Err(Error::Shape(format!(
                "{:?} is not a broadcast reduction of {:?}",
                shape, self.shape
            )));
        }
        let mut out = Array::zeros(shape);
        let (r, c) = match self.shape.len() {
            2 => (self.shape[0], self.shape[1]),
            1 => (1, self.shape[0]),
            _ => (1, 1),
        };
        let s = Strides::for_broadcast(shape, &self.shape);
        for i in 0..r {
            let base = i * s.row;
            for j in 0..c {
                out.data[base + j * s.col] += self.data[i * c + j];
            }
        }
        Ok(out)
    }

    pub fn matmul(&self, other: &Array) -> Result<Array, Error> {
        if self.shape.len() != 2 || other.shape.len() != 2 || self.shape[1] != other.shape[0] {
            return Err(Error::Shape(format!(
                "matmul shapes {:?} and {:?} are incompatible",
                self.shape, other.shape
            )));
        }
        let (m, k, n) = (self.shape[0], self.shape[1], other.shape[1]);
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            let arow = &self.data[i * k..(i + 1) * k];
            let orow = &mut data[i * n..(i + 1) * n];
            for (p, &a) in arow.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let brow = &other.data[p * n..(p + 1) * n];
                for j in 0..n {
                    orow[j] += a * brow[j];
                }
            }
        }
        Ok(Array { shape: vec![m, n], data })
    }

    pub fn transpose(&self) -> Result<Array, Error> {
        if self.shape.len() != 2 {
            return Err(Error::Shape(format!("transpose needs rank 2, got {:?}", self.shape)));
        }
        let (r, c) = (self.shape[0], self.shape[1]);
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = self.data[i * c + j];
            }
        }
        Ok(Array { shape: vec![c, r], data })
    }

    /// Contiguous slice of length `len` starting at `start` along `axis`.
    pub fn slice(&self, axis: usize, start: usize, len: usize) -> Result<Array, Error> {
        if axis >= self.shape.len().max(1) || start + len > self.shape.get(axis).copied().unwrap_or(1)
        {
            return Err(Error::Shape(format!(
                "slice axis {} range {}..{} out of bounds for {:?}",
                axis,
                start,
                start + len,
                self.shape
            )));
        }
        match self.shape.len() {
            1 => Ok(Array {
                shape: vec![len],
                data: self.data[start..start + len].to_vec(),
            }),
            2 => {
                let (r, c) = (self.shape[0], self.shape[1]);
                if axis == 0 {
                    Ok(Array {
                        shape: vec![len, c],
                        data: self.data[start * c..(start + len) * c].to_vec(),
                    })
                } else {
                    let mut data = Vec::with_capacity(r * len);
                    for i in 0..r {
                        data.extend_from_slice(&self.data[i * c + start..i * c + start + len]);
                    }
                    Ok(Array { shape: vec![r, len], data })
                }
            }
            _ => Err(Error::Shape("cannot slice a scalar".into())),
        }
    }

    pub fn concat(parts: &[&Array], axis: usize) -> Result<Array, Error> {
        if parts.is_empty() {
            return Err(Error::Shape("concat of zero arrays".into()));
        }
        let rank = parts[0].shape.len();
        if rank == 0 || axis >= rank {
            return Err(Error::Shape(format!(
                "concat axis {} invalid for rank {}",
                axis, rank
            )));
        }
        for p in parts {
            if p.shape.len() != rank {
                return Err(Error::Shape("concat rank mismatch".into()));
            }
            for (k, (&a, &b)) in parts[0].shape.iter().zip(p.shape.iter()).enumerate() {
                if k != axis && a != b {
                    return Err(Error::Shape(format!(
                        "concat shapes {:?} and {:?} differ off-axis",
                        parts[0].shape, p.shape
                    )));
                }
            }
        }
        if rank == 1 || axis == 0 {
            let mut shape = parts[0].shape.clone();
            shape[axis] = parts.iter().map(|p| p.shape[axis]).sum();
            let mut data = Vec::with_capacity(shape.iter().product());
            for p in parts {
                data.extend_from_slice(&p.data);
            }
            Ok(Array { shape, data })
        } else {
            let r = parts[0].shape[0];
            let total_c: usize = parts.iter().map(|p| p.shape[1]).sum();
            let mut data = Vec::with_capacity(r * total_c);
            for i in 0..r {
                for p in parts {
                    let c = p.shape[1];
                    data.extend_from_slice(&p.data[i * c..(i + 1) * c]);
                }
            }
            Ok(Array { shape: vec![r, total_c], data })
        }
    }

    /// Log-sum-exp over the last axis, keeping that axis with extent 1.
    pub fn logsumexp_last(&self) -> Array {
        let c = self.cols().max(1);
        let r = self.numel() / c;
        let mut data = Vec::with_capacity(r);
        for i in 0..r {
            let row = &self.data[i * c..(i + 1) * c];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let v = if m.is_finite() {
                m + row.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
            } else {
                m
            };
            data.push(v);
        }
        let shape = match self.shape.len() {
            2 => vec![r, 1],
            1 => vec![1],
            _ => vec![],
        };
        Array { shape, data }
    }
}

struct Strides {
    row: usize,
    col: usize,
}

impl Strides {
    /// Strides for reading `from` as if broadcast to `to`.
    fn for_broadcast(from: &[usize], to: &[usize]) -> Strides {
        let (fr, fc) = match from.len() {
            2 => (from[0], from[1]),
            1 => (1, from[0]),
            _ => (1, 1),
        };
        let tc = match to.len() {
            2 => to[1],
            1 => to[0],
            _ => 1,
        };
        // When `from` is rank 1 it aligns with the trailing axis of `to`.
        let row = if from.len() == 2 && fr > 1 { fc } else { 0 };
        let col = if fc == tc && fc > 1 { 1 } else { 0 };
        Strides { row, col }
    }
}
