//! Dense row-major tensor of rank one or two.
//!
//! Every operation that produces new values checks that they are finite and
//! reports [`Error::Numeric`] otherwise, so NaN/Inf never travel silently
//! through a forward or backward pass.

use crate::error::{Error, Result};

/// Dense row-major array of `f64` with shape `[n]` or `[rows, cols]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// Elementwise operations. The binary ones take a tensor or scalar right operand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementwiseOp {
    Add,
    Sub,
    Mul,
    MaxScalar,
    Relu,
    Tanh,
    /// Step function with `H(0) = 0`.
    Heaviside,
}

/// Right-hand operand of a binary elementwise op.
#[derive(Debug, Clone, Copy)]
pub enum Operand<'a> {
    Tensor(&'a Tensor),
    Scalar(f64),
}

/// Per-row reductions over a rank-2 tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowReduce {
    Sum,
    SumSq,
    L1,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.len() > 2 {
        return Err(Error::Shape(format!(
            "rank must be 1 or 2, got shape {shape:?}"
        )));
    }
    if shape.contains(&0) {
        return Err(Error::Shape(format!(
            "dimensions must be positive, got {shape:?}"
        )));
    }
    Ok(shape.iter().product())
}

pub(crate) fn ensure_finite(values: &[f64], what: &str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        None => Ok(()),
        Some(i) => Err(Error::Numeric(format!(
            "{what}: non-finite value {} at flat index {i}",
            values[i]
        ))),
    }
}

impl Tensor {
    /// Builds a tensor, validating the shape against the data length.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let len = check_shape(&shape)?;
        if len != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {len} values, got {}",
                data.len()
            )));
        }
        ensure_finite(&data, "tensor construction")?;
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let len = check_shape(&shape)?;
        Ok(Tensor {
            shape,
            data: vec![0.0; len],
        })
    }

    pub fn filled(shape: Vec<usize>, value: f64) -> Result<Self> {
        let len = check_shape(&shape)?;
        Tensor::new(shape, vec![value; len])
    }

    pub fn vector(data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![data.len()], data)
    }

    /// Rank-2 tensor from a list of equally long rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != d) {
            return Err(Error::Shape(format!(
                "row {i} has {} values, expected {d}",
                r.len()
            )));
        }
        Tensor::new(vec![n, d], rows.concat())
    }

    /// Wraps data produced internally from already-finite inputs.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor { shape, data }
    }

    /// Like [`Tensor::from_parts`] but verifies finiteness.
    pub(crate) fn checked(shape: Vec<usize>, data: Vec<f64>, what: &str) -> Result<Self> {
        ensure_finite(&data, what)?;
        Ok(Tensor::from_parts(shape, data))
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// `(rows, cols)` of a rank-2 tensor.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape[..] {
            [r, c] => Ok((r, c)),
            _ => Err(Error::Shape(format!(
                "expected a rank-2 tensor, got shape {:?}",
                self.shape
            ))),
        }
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        if self.shape.len() == 2 {
            self.shape[1]
        } else {
            1
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    /// Copies the given rows (in order) into a new rank-2 tensor.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        let (n, d) = self.dims2()?;
        let mut data = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            if i >= n {
                return Err(Error::Shape(format!("row {i} out of range for {n} rows")));
            }
            data.extend_from_slice(self.row(i));
        }
        Tensor::new(vec![idx.len(), d], data)
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Self> {
        let len = check_shape(&shape)?;
        if len != self.data.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        Ok(Tensor {
            shape,
            data: self.data.clone(),
        })
    }

    pub fn transpose(&self) -> Result<Self> {
        let (r, c) = self.dims2()?;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Ok(Tensor::from_parts(vec![c, r], out))
    }

    /// Applies `op` elementwise. Unary ops ignore `rhs`.
    pub fn elementwise(&self, op: ElementwiseOp, rhs: Operand<'_>) -> Result<Self> {
        let out: Vec<f64> = match op {
            ElementwiseOp::Relu => self.data.iter().map(|&x| x.max(0.0)).collect(),
            ElementwiseOp::Tanh => self.data.iter().map(|&x| x.tanh()).collect(),
            ElementwiseOp::Heaviside => self
                .data
                .iter()
                .map(|&x| if x > 0.0 { 1.0 } else { 0.0 })
                .collect(),
            ElementwiseOp::Add | ElementwiseOp::Sub | ElementwiseOp::Mul | ElementwiseOp::MaxScalar => {
                let f = match op {
                    ElementwiseOp::Add => |a: f64, b: f64| a + b,
                    ElementwiseOp::Sub => |a: f64, b: f64| a - b,
                    ElementwiseOp::Mul => |a: f64, b: f64| a * b,
                    _ => |a: f64, b: f64| a.max(b),
                };
                match rhs {
                    Operand::Scalar(b) => self.data.iter().map(|&a| f(a, b)).collect(),
                    Operand::Tensor(t) => {
                        if op == ElementwiseOp::MaxScalar {
                            return Err(Error::Shape(
                                "max-with-scalar takes a scalar operand".into(),
                            ));
                        }
                        if t.shape != self.shape {
                            return Err(Error::Shape(format!(
                                "elementwise {op:?}: shapes {:?} and {:?} differ",
                                self.shape, t.shape
                            )));
                        }
                        self.data.iter().zip(&t.data).map(|(&a, &b)| f(a, b)).collect()
                    }
                }
            }
        };
        Tensor::checked(self.shape.clone(), out, "elementwise")
    }

    pub fn add(&self, other: &Tensor) -> Result<Self> {
        self.elementwise(ElementwiseOp::Add, Operand::Tensor(other))
    }

    pub fn sub(&self, other: &Tensor) -> Result<Self> {
        self.elementwise(ElementwiseOp::Sub, Operand::Tensor(other))
    }

    pub fn mul(&self, other: &Tensor) -> Result<Self> {
        self.elementwise(ElementwiseOp::Mul, Operand::Tensor(other))
    }

    pub fn scale(&self, c: f64) -> Result<Self> {
        self.elementwise(ElementwiseOp::Mul, Operand::Scalar(c))
    }

    pub fn relu(&self) -> Result<Self> {
        self.elementwise(ElementwiseOp::Relu, Operand::Scalar(0.0))
    }

    pub fn tanh(&self) -> Result<Self> {
        self.elementwise(ElementwiseOp::Tanh, Operand::Scalar(0.0))
    }

    pub fn heaviside(&self) -> Result<Self> {
        self.elementwise(ElementwiseOp::Heaviside, Operand::Scalar(0.0))
    }

    /// Matrix product of `(n, d) x (d, m)`.
    pub fn matmul(&self, other: &Tensor) -> Result<Self> {
        let (n, d) = self.dims2()?;
        let (d2, m) = other.dims2()?;
        if d != d2 {
            return Err(Error::Shape(format!(
                "matmul inner dimensions differ: {:?} x {:?}",
                self.shape, other.shape
            )));
        }
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let a_row = &self.data[i * d..(i + 1) * d];
            let o_row = &mut out[i * m..(i + 1) * m];
            for (k, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[k * m..(k + 1) * m];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Tensor::checked(vec![n, m], out, "matmul")
    }

    pub fn row_reduce(&self, op: RowReduce) -> Result<Self> {
        let (n, _) = self.dims2()?;
        let out = (0..n)
            .map(|i| {
                let r = self.row(i);
                match op {
                    RowReduce::Sum => r.iter().sum(),
                    RowReduce::SumSq => r.iter().map(|x| x * x).sum(),
                    RowReduce::L1 => r.iter().map(|x| x.abs()).sum(),
                }
            })
            .collect();
        Tensor::checked(vec![n], out, "row_reduce")
    }

    /// Sums over rows, giving one value per column.
    pub fn column_sums(&self) -> Result<Vec<f64>> {
        let (n, d) = self.dims2()?;
        let mut out = vec![0.0; d];
        for i in 0..n {
            for (o, &v) in out.iter_mut().zip(self.row(i)) {
                *o += v;
            }
        }
        Ok(out)
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
