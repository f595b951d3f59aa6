//! Dense NCHW tensors over f32 (training) or f64 (gradient checks).

use std::fmt::Debug;

use num_traits::Float;

use crate::NnError;

/// Element type usable by every layer.
pub trait Scalar: Float + Default + Debug + Send + Sync + 'static {
    fn of(v: f64) -> Self;
    fn as_f64(self) -> f64;

    /// C (m×n) ← A·B + beta·C, all row-major. With `a_t` the slice `a` holds
    /// Aᵀ (k×m); with `b_t` the slice `b` holds Bᵀ (n×k).
    #[allow(clippy::too_many_arguments)]
    fn gemm(m: usize, k: usize, n: usize, a: &[Self], a_t: bool, b: &[Self], b_t: bool, c: &mut [Self], beta: Self);
}

macro_rules! impl_scalar {
    ($t:ty, $gemm:path) => {
        impl Scalar for $t {
            fn of(v: f64) -> Self {
                v as $t
            }

            fn as_f64(self) -> f64 {
                self as f64
            }

            fn gemm(m: usize, k: usize, n: usize, a: &[Self], a_t: bool, b: &[Self], b_t: bool, c: &mut [Self], beta: Self) {
                assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n, "gemm operand too short");
                if m == 0 || n == 0 {
                    return;
                }
                let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
                let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
                // SAFETY: the assert above keeps every strided access inside the slices
                unsafe {
                    $gemm(m, k, n, 1.0, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta, c.as_mut_ptr(), n as isize, 1);
                }
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm);
impl_scalar!(f64, matrixmultiply::dgemm);

/// Four-dimensional (N, C, H, W) tensor; lower-rank values use trailing 1s.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub shape: [usize; 4],
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: [usize; 4]) -> Tensor<T> {
        Tensor {
            shape,
            data: vec![T::zero(); shape.iter().product()],
        }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<T>) -> Result<Tensor<T>, NnError> {
        let want: usize = shape.iter().product();
        if data.len() != want {
            return Err(NnError::ShapeMismatch(format!("{} values for shape {shape:?}", data.len())));
        }
        Ok(Tensor { shape, data })
    }

    pub fn n(&self) -> usize {
        self.shape[0]
    }

    pub fn c(&self) -> usize {
        self.shape[1]
    }

    pub fn h(&self) -> usize {
        self.shape[2]
    }

    pub fn w(&self) -> usize {
        self.shape[3]
    }

    /// Values of one sample (C·H·W).
    pub fn sample(&self, n: usize) -> &[T] {
        let s = self.sample_len();
        &self.data[n * s..(n + 1) * s]
    }

    pub fn sample_mut(&mut self, n: usize) -> &mut [T] {
        let s = self.sample_len();
        &mut self.data[n * s..(n + 1) * s]
    }

    pub fn sample_len(&self) -> usize {
        self.shape[1] * self.shape[2] * self.shape[3]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn add_assign(&mut self, other: &Tensor<T>) -> Result<(), NnError> {
        if self.shape != other.shape {
            return Err(NnError::ShapeMismatch(format!("add {:?} + {:?}", self.shape, other.shape)));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + *b;
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }
}

/// Channel-wise concatenation of tensors with equal N, H, W.
pub fn concat_channels<T: Scalar>(parts: &[&Tensor<T>]) -> Result<Tensor<T>, NnError> {
    let first = parts.first().ok_or_else(|| NnError::ShapeMismatch("empty concat".into()))?;
    let [n, _, h, w] = first.shape;
    if let Some(p) = parts.iter().find(|p| p.n() != n || p.h() != h || p.w() != w) {
        return Err(NnError::ShapeMismatch(format!("concat {:?} with {:?}", first.shape, p.shape)));
    }
    let c: usize = parts.iter().map(|p| p.c()).sum();
    let mut data = Vec::with_capacity(n * c * h * w);
    for i in 0..n {
        for p in parts {
            data.extend_from_slice(p.sample(i));
        }
    }
    Ok(Tensor { shape: [n, c, h, w], data })
}

/// Inverse of [`concat_channels`].
pub fn split_channels<T: Scalar>(t: &Tensor<T>, sizes: &[usize]) -> Result<Vec<Tensor<T>>, NnError> {
    if sizes.iter().sum::<usize>() != t.c() {
        return Err(NnError::ShapeMismatch(format!("split {:?} into {sizes:?}", t.shape)));
    }
    let [n, _, h, w] = t.shape;
    let mut out: Vec<Tensor<T>> = sizes.iter().map(|&c| Tensor::zeros([n, c, h, w])).collect();
    for i in 0..n {
        let src = t.sample(i);
        let mut off = 0;
        for part in out.iter_mut() {
            let len = part.sample_len();
            part.sample_mut(i).copy_from_slice(&src[off..off + len]);
            off += len;
        }
    }
    Ok(out)
}
