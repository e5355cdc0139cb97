//! Dense 64-bit tensors, row-major. The numeric currency of every channel.
//!
//! Rank 0 (scalars), rank 1 (vectors) and rank 2 (matrices) are all that the
//! model needs; the kernels below are written for those ranks and reject
//! anything else rather than guessing.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::shape(
                "tensor construction",
                format!("{numel} elements for shape {shape:?}"),
                format!("{} elements", data.len()),
            ));
        }
        Ok(Tensor { shape, data })
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: vec![],
            data: vec![v],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    /// Row-major `rows x cols` matrix from nested rows.
    pub fn matrix(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::shape(
                    "matrix construction",
                    format!("{c} columns"),
                    format!("{} columns", row.len()),
                ));
            }
            data.extend_from_slice(row);
        }
        Ok(Tensor {
            shape: vec![r, c],
            data,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; numel],
        }
    }

    pub fn zeros_like(other: &Tensor) -> Self {
        Tensor::zeros(other.shape.clone())
    }

    pub fn full(shape: Vec<usize>, v: f64) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape,
            data: vec![v; numel],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
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

    /// The single element of a rank-0 or one-element tensor.
    pub fn item(&self) -> Result<f64> {
        if self.data.len() != 1 {
            return Err(Error::shape(
                "item",
                "1 element".to_string(),
                format!("{} elements", self.data.len()),
            ));
        }
        Ok(self.data[0])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn same_shape(&self, other: &Tensor, op: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(
                op,
                format!("{:?}", self.shape),
                format!("{:?}", other.shape),
            ));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip(&self, other: &Tensor, op: &str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        self.same_shape(other, op)?;
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.zip(other, "mul", |a, b| a * b)
    }

    /// In-place `self += other`, used by gradient accumulation.
    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        self.same_shape(other, "add_assign")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&self, k: f64) -> Tensor {
        self.map(|v| v * k)
    }

    /// Matrix product. Supported shapes:
    /// `[m,k]x[k,n] -> [m,n]`, `[m,k]x[k] -> [m]`, `[k]x[k,n] -> [n]`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let err = || {
            Err(Error::shape(
                "matmul",
                "[m,k]x[k,n], [m,k]x[k] or [k]x[k,n]".to_string(),
                format!("{:?} x {:?}", self.shape, other.shape),
            ))
        };
        match (self.rank(), other.rank()) {
            (2, 2) => {
                let (m, k) = (self.shape[0], self.shape[1]);
                let (k2, n) = (other.shape[0], other.shape[1]);
                if k != k2 {
                    return err();
                }
                let mut out = vec![0.0; m * n];
                for i in 0..m {
                    for p in 0..k {
                        let a = self.data[i * k + p];
                        if a == 0.0 {
                            continue;
                        }
                        let row = &other.data[p * n..(p + 1) * n];
                        let dst = &mut out[i * n..(i + 1) * n];
                        for (d, &b) in dst.iter_mut().zip(row) {
                            *d += a * b;
                        }
                    }
                }
                Tensor::new(vec![m, n], out)
            }
            (2, 1) => {
                let (m, k) = (self.shape[0], self.shape[1]);
                if k != other.shape[0] {
                    return err();
                }
                let mut out = vec![0.0; m];
                for i in 0..m {
                    let row = &self.data[i * k..(i + 1) * k];
                    out[i] = row.iter().zip(&other.data).map(|(&a, &b)| a * b).sum();
                }
                Tensor::new(vec![m], out)
            }
            (1, 2) => {
                let k = self.shape[0];
                let (k2, n) = (other.shape[0], other.shape[1]);
                if k != k2 {
                    return err();
                }
                let mut out = vec![0.0; n];
                for p in 0..k {
                    let a = self.data[p];
                    if a == 0.0 {
                        continue;
                    }
                    let row = &other.data[p * n..(p + 1) * n];
                    for (d, &b) in out.iter_mut().zip(row) {
                        *d += a * b;
                    }
                }
                Tensor::new(vec![n], out)
            }
            _ => err(),
        }
    }

    /// Transpose of a rank-2 tensor.
    pub fn transpose(&self) -> Result<Tensor> {
        if self.rank() != 2 {
            return Err(Error::shape(
                "transpose",
                "rank 2".to_string(),
                format!("rank {}", self.rank()),
            ));
        }
        let (r, c) = (self.shape[0], self.shape[1]);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Tensor::new(vec![c, r], out)
    }

    /// Outer product of two vectors: `[m] x [n] -> [m,n]`.
    pub fn outer(&self, other: &Tensor) -> Result<Tensor> {
        if self.rank() != 1 || other.rank() != 1 {
            return Err(Error::shape(
                "outer",
                "two rank-1 tensors".to_string(),
                format!("{:?} x {:?}", self.shape, other.shape),
            ));
        }
        let (m, n) = (self.shape[0], other.shape[0]);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[i * n + j] = self.data[i] * other.data[j];
            }
        }
        Tensor::new(vec![m, n], out)
    }

    /// Concatenate along `axis`. All parts must share rank and non-axis dims.
    pub fn concat(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
        let first = parts.first().ok_or_else(|| {
            Error::shape("concat", "at least one part".to_string(), "none".to_string())
        })?;
        let rank = first.rank();
        if rank == 0 || axis >= rank {
            return Err(Error::shape(
                "concat",
                format!("rank >= 1 with axis < rank, axis={axis}"),
                format!("rank {rank}"),
            ));
        }
        let mut out_shape = first.shape.clone();
        out_shape[axis] = 0;
        for p in parts {
            if p.rank() != rank {
                return Err(Error::shape(
                    "concat",
                    format!("rank {rank}"),
                    format!("rank {}", p.rank()),
                ));
            }
            for (d, (&a, &b)) in first.shape.iter().zip(p.shape.iter()).enumerate() {
                if d != axis && a != b {
                    return Err(Error::shape(
                        "concat",
                        format!("{:?} on non-concat axes", first.shape),
                        format!("{:?}", p.shape),
                    ));
                }
            }
            out_shape[axis] += p.shape[axis];
        }
        // Row-major copy: iterate outer blocks, append each part's slice.
        let outer: usize = first.shape[..axis].iter().product();
        let inner: usize = first.shape[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(out_shape.iter().product());
        for o in 0..outer {
            for p in parts {
                let span = p.shape[axis] * inner;
                data.extend_from_slice(&p.data[o * span..(o + 1) * span]);
            }
        }
        Tensor::new(out_shape, data)
    }

    /// Contiguous slice `[start, start+len)` along `axis`.
    pub fn slice(&self, axis: usize, start: usize, len: usize) -> Result<Tensor> {
        if self.rank() == 0 || axis >= self.rank() || start + len > self.shape[axis] {
            return Err(Error::shape(
                "slice",
                format!("axis {axis} within rank {} and range within dim", self.rank()),
                format!("shape {:?}, start {start}, len {len}", self.shape),
            ));
        }
        let mut out_shape = self.shape.clone();
        out_shape[axis] = len;
        let outer: usize = self.shape[..axis].iter().product();
        let inner: usize = self.shape[axis + 1..].iter().product();
        let src_span = self.shape[axis] * inner;
        let mut data = Vec::with_capacity(len * outer * inner);
        for o in 0..outer {
            let base = o * src_span + start * inner;
            data.extend_from_slice(&self.data[base..base + len * inner]);
        }
        Tensor::new(out_shape, data)
    }

    /// Scatter `grad` (shaped like the slice output) back into a zero tensor
    /// shaped like `self`. Adjoint of [`Tensor::slice`].
    pub fn slice_adjoint(&self, grad: &Tensor, axis: usize, start: usize) -> Result<Tensor> {
        let mut out = Tensor::zeros_like(self);
        let len = grad.shape[axis];
        let outer: usize = self.shape[..axis].iter().product();
        let inner: usize = self.shape[axis + 1..].iter().product();
        let dst_span = self.shape[axis] * inner;
        for o in 0..outer {
            let dst = o * dst_span + start * inner;
            let src = o * len * inner;
            out.data[dst..dst + len * inner].copy_from_slice(&grad.data[src..src + len * inner]);
        }
        Ok(out)
    }

    /// Numerically stable softmax along `axis` (max-shifted exponentials).
    pub fn softmax(&self, axis: usize) -> Result<Tensor> {
        if self.rank() == 0 || axis >= self.rank() {
            return Err(Error::shape(
                "softmax",
                "rank >= 1 with axis < rank".to_string(),
                format!("shape {:?}, axis {axis}", self.shape),
            ));
        }
        let mut out = self.clone();
        let lanes = self.shape[axis];
        let outer: usize = self.shape[..axis].iter().product();
        let inner: usize = self.shape[axis + 1..].iter().product();
        for o in 0..outer {
            for i in 0..inner {
                let idx = |l: usize| (o * lanes + l) * inner + i;
                let mut max = f64::NEG_INFINITY;
                for l in 0..lanes {
                    max = max.max(self.data[idx(l)]);
                }
                let mut sum = 0.0;
                for l in 0..lanes {
                    let e = (self.data[idx(l)] - max).exp();
                    out.data[idx(l)] = e;
                    sum += e;
                }
                for l in 0..lanes {
                    out.data[idx(l)] /= sum;
                }
            }
        }
        Ok(out)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Broadcast to `target`: rank-0 goes anywhere, otherwise `self.shape`
    /// must be a suffix of `target` (leading dims are repeated).
    pub fn broadcast(&self, target: &[usize]) -> Result<Tensor> {
        if self.rank() > target.len()
            || self.shape != target[target.len() - self.rank()..]
        {
            return Err(Error::shape(
                "broadcast",
                format!("source shape a suffix of {target:?}"),
                format!("{:?}", self.shape),
            ));
        }
        let repeat: usize = target[..target.len() - self.rank()].iter().product();
        let mut data = Vec::with_capacity(repeat * self.data.len());
        for _ in 0..repeat {
            data.extend_from_slice(&self.data);
        }
        Tensor::new(target.to_vec(), data)
    }

    /// Sum `grad` (shaped like the broadcast target) back down to `self`'s
    /// shape. Adjoint of [`Tensor::broadcast`].
    pub fn broadcast_adjoint(&self, grad: &Tensor) -> Tensor {
        let block = self.data.len();
        let mut out = Tensor::zeros_like(self);
        for chunk in grad.data.chunks(block) {
            for (o, &g) in out.data.iter_mut().zip(chunk) {
                *o += g;
            }
        }
        out
    }

    pub fn euclidean_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        slope * x
    }
}
