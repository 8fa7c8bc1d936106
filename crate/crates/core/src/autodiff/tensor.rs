use std::fmt;

use crate::error::{Error, Result};

/// Dense row-major tensor of `f64` values.
///
/// Scalars use the empty shape `[]`. Everything in this crate needs at
/// most rank 2.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::InvalidShape(format!("zero extent in {shape:?}")));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::InvalidShape(format!(
                "shape {shape:?} holds {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn scalar(v: f64) -> Self {
        Self { shape: vec![], data: vec![v] }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self { shape: vec![data.len()], data }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![0.0; n] }
    }

    pub fn filled(shape: &[usize], v: f64) -> Self {
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![v; n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
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

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    /// `(rows, cols)` viewing rank 1 as a single row.
    pub fn dims2(&self) -> (usize, usize) {
        match self.shape.as_slice() {
            [] => (1, 1),
            [c] => (1, *c),
            [r, c] => (*r, *c),
            _ => (self.shape[..self.shape.len() - 1].iter().product(), *self.shape.last().unwrap()),
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let (_, c) = self.dims2();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}{:?}", self.shape, self.data)
    }
}

/// `out[i] += c · x[i]`
#[inline(always)]
fn axpy(out: &mut [f64], c: f64, x: &[f64]) {
    for (o, &v) in out.iter_mut().zip(x) {
        *o += c * v;
    }
}

/// Compiles a kernel twice, once for AVX2, and picks the build at run time.
/// The arithmetic is the same separate multiply and add in both, so results
/// are bitwise identical whichever build runs.
macro_rules! dispatch {
    ($(#[$doc:meta])* fn $name:ident / $avx:ident ($($arg:ident: $ty:ty),*) $body:block) => {
        $(#[$doc])*
        pub(crate) fn $name($($arg: $ty),*) {
            #[cfg(target_arch = "x86_64")]
            if std::arch::is_x86_feature_detected!("avx2") {
                // SAFETY: the running CPU supports AVX2.
                return unsafe { $avx($($arg),*) };
            }
            $body
        }

        #[cfg(target_arch = "x86_64")]
        #[target_feature(enable = "avx2")]
        unsafe fn $avx($($arg: $ty),*) $body
    };
}

dispatch! {
    /// `out[m×n] += a[m×k] · b[k×n]`
    fn matmul_nn_acc / matmul_nn_acc_avx2(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
        for i in 0..m {
            let orow = &mut out[i * n..(i + 1) * n];
            for (p, &aip) in a[i * k..(i + 1) * k].iter().enumerate() {
                if aip != 0.0 {
                    axpy(orow, aip, &b[p * n..(p + 1) * n]);
                }
            }
        }
    }
}

dispatch! {
    /// `out[m×k] += g[m×n] · b[k×n]ᵀ`
    fn matmul_nt_acc / matmul_nt_acc_avx2(g: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
        // transpose once so the inner loop is a contiguous axpy
        let mut bt = vec![0.0; n * k];
        for p in 0..k {
            for j in 0..n {
                bt[j * k + p] = b[p * n + j];
            }
        }
        for i in 0..m {
            let orow = &mut out[i * k..(i + 1) * k];
            for (j, &gij) in g[i * n..(i + 1) * n].iter().enumerate() {
                if gij != 0.0 {
                    axpy(orow, gij, &bt[j * k..(j + 1) * k]);
                }
            }
        }
    }
}

dispatch! {
    /// `out[k×n] += a[m×k]ᵀ · g[m×n]`
    fn matmul_tn_acc / matmul_tn_acc_avx2(a: &[f64], g: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
        for i in 0..m {
            let grow = &g[i * n..(i + 1) * n];
            for (p, &aip) in a[i * k..(i + 1) * k].iter().enumerate() {
                if aip != 0.0 {
                    axpy(&mut out[p * n..(p + 1) * n], aip, grow);
                }
            }
        }
    }
}
