//! Dense linear algebra and neural primitives.
//!
//! Vectors are plain `&[f64]` slices. Weight matrices are row-major and are
//! applied on the right: `y = x · W` with `W` shaped `in × out`.

use rand_core::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{Error, Result};

/// LayerNorm epsilon used by the prediction network.
pub const LAYER_NORM_EPS: f64 = 1e-6;

/// Row-major dense matrix of 64-bit floats.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    /// A single-row matrix holding `v`.
    pub fn row_vector(v: Vec<f64>) -> Self {
        Self { rows: 1, cols: v.len(), data: v }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn same_shape(&self, other: &Matrix) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }
}

/// Standard matrix product `a · b`.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::Shape(format!(
            "matmul {}x{} by {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let dst = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for (k, &aik) in a.row(i).iter().enumerate() {
            if aik != 0.0 {
                axpy(aik, b.row(k), dst);
            }
        }
    }
    Ok(out)
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `out += x · W` for `W: x.len() × out.len()`.
pub fn vec_mat_acc(x: &[f64], w: &Matrix, out: &mut [f64]) {
    assert_eq!(x.len(), w.rows, "vec_mat input length");
    assert_eq!(out.len(), w.cols, "vec_mat output length");
    for (i, &xi) in x.iter().enumerate() {
        if xi != 0.0 {
            axpy(xi, w.row(i), out);
        }
    }
}

/// `x · W`
pub fn vec_mat(x: &[f64], w: &Matrix) -> Vec<f64> {
    let mut out = vec![0.0; w.cols];
    vec_mat_acc(x, w, &mut out);
    out
}

/// `out += W · y` for `W: out.len() × y.len()`; the transpose product used in backprop.
pub fn mat_vec_acc(w: &Matrix, y: &[f64], out: &mut [f64]) {
    assert_eq!(y.len(), w.cols, "mat_vec input length");
    assert_eq!(out.len(), w.rows, "mat_vec output length");
    for (i, o) in out.iter_mut().enumerate() {
        *o += dot(w.row(i), y);
    }
}

/// `grad += x ⊗ dy`, the weight gradient of `y = x · W`.
pub fn outer_acc(grad: &mut Matrix, x: &[f64], dy: &[f64]) {
    assert_eq!(grad.rows, x.len());
    assert_eq!(grad.cols, dy.len());
    for (i, &xi) in x.iter().enumerate() {
        if xi != 0.0 {
            axpy(xi, dy, grad.row_mut(i));
        }
    }
}

pub fn add_assign(dst: &mut [f64], src: &[f64]) {
    axpy(1.0, src, dst);
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Elementwise `x · sigmoid(x)`.
pub fn swish(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v * sigmoid(v)).collect()
}

/// Derivative of swish at `x`.
#[inline]
pub fn swish_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// LayerNorm with population variance.
pub fn layer_norm(x: &[f64], gamma: &[f64], beta: &[f64], eps: f64) -> Result<Vec<f64>> {
    Ok(layer_norm_cached(x, gamma, beta, eps)?.output)
}

/// Intermediate values of a LayerNorm forward pass, kept for the backward pass.
#[derive(Clone, Debug)]
pub struct LayerNormCache {
    pub normalized: Vec<f64>,
    pub inv_std: f64,
    pub output: Vec<f64>,
}

pub fn layer_norm_cached(
    x: &[f64],
    gamma: &[f64],
    beta: &[f64],
    eps: f64,
) -> Result<LayerNormCache> {
    if x.len() != gamma.len() || x.len() != beta.len() {
        return Err(Error::Shape(format!(
            "layer_norm lengths x={} gamma={} beta={}",
            x.len(),
            gamma.len(),
            beta.len()
        )));
    }
    if x.is_empty() {
        return Err(Error::Shape("layer_norm of empty vector".into()));
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let inv_std = 1.0 / (var + eps).sqrt();
    let normalized: Vec<f64> = x.iter().map(|v| (v - mean) * inv_std).collect();
    let output = normalized
        .iter()
        .zip(gamma.iter().zip(beta))
        .map(|(xh, (g, b))| xh * g + b)
        .collect();
    Ok(LayerNormCache { normalized, inv_std, output })
}

/// Backward pass of LayerNorm: accumulates into `dgamma`/`dbeta` and returns `dx`.
pub fn layer_norm_backward(
    cache: &LayerNormCache,
    gamma: &[f64],
    dy: &[f64],
    dgamma: &mut [f64],
    dbeta: &mut [f64],
) -> Vec<f64> {
    let n = dy.len() as f64;
    let mut dxhat = vec![0.0; dy.len()];
    for i in 0..dy.len() {
        dgamma[i] += dy[i] * cache.normalized[i];
        dbeta[i] += dy[i];
        dxhat[i] = dy[i] * gamma[i];
    }
    let mean_dxhat = dxhat.iter().sum::<f64>() / n;
    let mean_dxhat_xhat = dot(&dxhat, &cache.normalized) / n;
    dxhat
        .iter()
        .zip(&cache.normalized)
        .map(|(d, xh)| cache.inv_std * (d - mean_dxhat - xh * mean_dxhat_xhat))
        .collect()
}

/// Numerically stable `log(exp(a) + exp(b))`.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub fn log_softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::Shape("log_softmax of empty vector".into()));
    }
    let lse = log_sum_exp(logits);
    Ok(logits.iter().map(|x| x - lse).collect())
}

/// Deterministic generator: xoshiro256++ seeded through SplitMix64.
///
/// Gaussian draws use the cosine branch of Box-Muller on two 53-bit uniforms,
/// so a stream is reproducible from the seed alone.
#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
    inner: Xoshiro256PlusPlus,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self { seed, inner: Xoshiro256PlusPlus::seed_from_u64(seed) }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0);
        (self.uniform() * n as f64) as usize % n
    }

    /// Uniform integer in `[lo, hi]`.
    pub fn range_inclusive(&mut self, lo: usize, hi: usize) -> usize {
        lo + self.below(hi - lo + 1)
    }

    pub fn gaussian(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn gaussian_matrix(&mut self, rows: usize, cols: usize, std: f64) -> Matrix {
        let data = (0..rows * cols).map(|_| self.gaussian() * std).collect();
        Matrix { rows, cols, data }
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn naive_matmul(a: &Matrix, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a.get(i, k) * b.get(k, j);
                }
                out.set(i, j, s);
            }
        }
        out
    }

    #[test]
    fn matmul_identity_and_projector() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(matmul(&Matrix::identity(2), &m).unwrap(), m);
        let p = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let v = Matrix::from_rows(&[vec![5.0], vec![7.0]]).unwrap();
        assert_eq!(matmul(&p, &v).unwrap().data(), &[5.0, 0.0]);
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = SeededRng::new(3);
        let a = rng.gaussian_matrix(3, 4, 1.0);
        let b = rng.gaussian_matrix(4, 2, 1.0);
        let fast = matmul(&a, &b).unwrap();
        let slow = naive_matmul(&a, &b);
        for (x, y) in fast.data().iter().zip(slow.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn matmul_shape_error() {
        let a = Matrix::zeros(2, 3);
        assert!(matches!(matmul(&a, &a), Err(Error::Shape(_))));
    }

    #[test]
    fn matmul_associative() {
        let mut rng = SeededRng::new(11);
        for _ in 0..20 {
            let a = rng.gaussian_matrix(3, 4, 1.0);
            let b = rng.gaussian_matrix(4, 5, 1.0);
            let c = rng.gaussian_matrix(5, 2, 1.0);
            let l = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
            let r = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
            for (x, y) in l.data().iter().zip(r.data()) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn layer_norm_examples() {
        let ones = [1.0; 4];
        let zeros = [0.0; 4];
        let out = layer_norm(&[2.5; 4], &ones, &zeros, LAYER_NORM_EPS).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));

        let out = layer_norm(&[1.0, -1.0], &[1.0, 1.0], &[0.0, 0.0], 0.0).unwrap();
        assert_eq!(out, vec![1.0, -1.0]);

        // two-pass oracle
        let x = [1.0, 2.0, 3.0];
        let mean = (1.0 + 2.0 + 3.0) / 3.0;
        let var = x.iter().map(|v: &f64| (v - mean).powi(2)).sum::<f64>() / 3.0;
        let expect: Vec<f64> = x.iter().map(|v| (v - mean) / (var + 1e-6f64).sqrt()).collect();
        let out = layer_norm(&x, &[1.0; 3], &[0.0; 3], 1e-6).unwrap();
        for (a, b) in out.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(matches!(
            layer_norm(&x, &[1.0; 2], &[0.0; 3], 1e-6),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn swish_values() {
        assert_eq!(swish(&[0.0]), vec![0.0]);
        assert!((swish(&[20.0])[0] - 20.0).abs() < 1e-6);
        assert!((swish(&[1.0])[0] - 0.731_058_578_630_004_9).abs() < 1e-12);
    }

    #[test]
    fn swish_grad_matches_difference() {
        for &x in &[-3.0, -0.5, 0.0, 0.7, 4.0] {
            let h = 1e-6;
            let fd = (swish(&[x + h])[0] - swish(&[x - h])[0]) / (2.0 * h);
            assert!((fd - swish_grad(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn log_softmax_examples() {
        let out = log_softmax(&[0.0, 0.0]).unwrap();
        assert!((out[0] + std::f64::consts::LN_2).abs() < 1e-15);
        let out = log_softmax(&[1000.0, 0.0]).unwrap();
        assert!(out.iter().all(|v| v.is_finite()));
        assert!(out[0].abs() < 1e-12);
        let out = log_softmax(&[1.0, 2.0, 3.0]).unwrap();
        let z: f64 = [1.0f64, 2.0, 3.0].iter().map(|v| v.exp()).sum();
        for (i, v) in [1.0f64, 2.0, 3.0].iter().enumerate() {
            assert!((out[i] - (v.exp() / z).ln()).abs() < 1e-12);
        }
        assert!(matches!(log_softmax(&[]), Err(Error::Shape(_))));
    }

    #[test]
    fn layer_norm_backward_matches_difference() {
        let mut rng = SeededRng::new(5);
        let x: Vec<f64> = (0..5).map(|_| rng.gaussian()).collect();
        let g: Vec<f64> = (0..5).map(|_| rng.gaussian()).collect();
        let b: Vec<f64> = (0..5).map(|_| rng.gaussian()).collect();
        let w: Vec<f64> = (0..5).map(|_| rng.gaussian()).collect();
        let f = |x: &[f64]| dot(&layer_norm(x, &g, &b, 1e-6).unwrap(), &w);
        let cache = layer_norm_cached(&x, &g, &b, 1e-6).unwrap();
        let mut dg = vec![0.0; 5];
        let mut db = vec![0.0; 5];
        let dx = layer_norm_backward(&cache, &g, &w, &mut dg, &mut db);
        for i in 0..5 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += 1e-6;
            xm[i] -= 1e-6;
            let fd = (f(&xp) - f(&xm)) / 2e-6;
            assert!((fd - dx[i]).abs() < 1e-7, "{fd} vs {}", dx[i]);
        }
    }

    #[test]
    fn rng_streams_repeat() {
        let mut a = SeededRng::new(42);
        let mut b = SeededRng::new(42);
        for _ in 0..10_000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let mut c = SeededRng::new(43);
        assert_ne!(SeededRng::new(42).next_u64(), c.next_u64());
    }

    proptest! {
        #[test]
        fn log_softmax_normalizes(v in proptest::collection::vec(-1e4f64..1e4, 1..40)) {
            let out = log_softmax(&v).unwrap();
            let s: f64 = out.iter().map(|x| x.exp()).sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }

        #[test]
        fn layer_norm_standardizes(v in proptest::collection::vec(-50f64..50.0, 2..32)) {
            let spread = v.iter().cloned().fold(f64::MIN, f64::max)
                - v.iter().cloned().fold(f64::MAX, f64::min);
            prop_assume!(spread > 1e-2);
            let n = v.len();
            let out = layer_norm(&v, &vec![1.0; n], &vec![0.0; n], LAYER_NORM_EPS).unwrap();
            let mean = out.iter().sum::<f64>() / n as f64;
            let var = out.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
            prop_assert!(mean.abs() < 1e-9);
            prop_assert!((var - 1.0).abs() < 1e-6 * 10.0_f64.max(1.0 / spread));
        }
    }
}
