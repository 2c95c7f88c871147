//! Dense kernels shared by the dual MLP and the primal CNN.

use crate::config::KERNEL_SIZE;

/// Strided view of a row-major matrix.
#[derive(Clone, Copy)]
pub(crate) struct View<'a> {
    data: &'a [f64],
    rows: usize,
    cols: usize,
    rs: usize,
    cs: usize,
}

impl<'a> View<'a> {
    pub fn new(data: &'a [f64], rows: usize, cols: usize) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix storage");
        Self {
            data,
            rows,
            cols,
            rs: cols,
            cs: 1,
        }
    }

    pub fn t(self) -> Self {
        Self {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
        }
    }
}

/// `c = a·b + beta·c` with `c` row-major.
pub(crate) fn gemm(a: View, b: View, beta: f64, c: &mut [f64]) {
    assert_eq!(a.cols, b.rows, "inner dimensions");
    assert_eq!(c.len(), a.rows * b.cols, "output storage");
    if a.rows == 0 || b.cols == 0 {
        return;
    }
    if a.cols == 0 {
        c.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    // SAFETY: the views were built from slices of exactly rows*cols elements,
    // so every strided access stays in bounds, and `c` has rows*cols elements.
    unsafe {
        matrixmultiply::dgemm(
            a.rows,
            a.cols,
            b.cols,
            1.0,
            a.data.as_ptr(),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr(),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.as_mut_ptr(),
            b.cols as isize,
            1,
        );
    }
}

pub(crate) fn prelu(z: &[f64], slope: f64) -> Vec<f64> {
    z.iter()
        .map(|&v| if v > 0.0 { v } else { slope * v })
        .collect()
}

/// Overwrites `dy` with the input gradient and returns the slope gradient.
pub(crate) fn prelu_backward(z: &[f64], slope: f64, dy: &mut [f64]) -> f64 {
    let mut ds = 0.0;
    for (d, &v) in dy.iter_mut().zip(z) {
        if v <= 0.0 {
            ds += *d * v;
            *d *= slope;
        }
    }
    ds
}

/// Fully connected layer over `rows` samples: `x (rows×n_in) → rows×n_out`.
pub(crate) fn linear(x: &[f64], rows: usize, w: &[f64], b: &[f64]) -> Vec<f64> {
    let (n_out, n_in) = (b.len(), w.len() / b.len());
    let mut z: Vec<f64> = (0..rows).flat_map(|_| b.iter().copied()).collect();
    gemm(
        View::new(x, rows, n_in),
        View::new(w, n_out, n_in).t(),
        1.0,
        &mut z,
    );
    z
}

/// Accumulates weight and bias gradients and returns the input gradient.
pub(crate) fn linear_backward(
    x: &[f64],
    rows: usize,
    w: &[f64],
    dz: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
) -> Vec<f64> {
    let (n_out, n_in) = (db.len(), w.len() / db.len());
    gemm(
        View::new(dz, rows, n_out).t(),
        View::new(x, rows, n_in),
        1.0,
        dw,
    );
    for row in dz.chunks_exact(n_out) {
        for (g, d) in db.iter_mut().zip(row) {
            *g += d;
        }
    }
    let mut dx = vec![0.0; rows * n_in];
    gemm(
        View::new(dz, rows, n_out),
        View::new(w, n_out, n_in),
        0.0,
        &mut dx,
    );
    dx
}

/// Spatial shape shared by every feature map of one instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Shape {
    pub width: usize,
    pub height: usize,
}

impl Shape {
    pub fn len(self) -> usize {
        self.width * self.height
    }
}

const HALF: isize = (KERNEL_SIZE / 2) as isize;

/// `(channels·k²) × pixels` patch matrix with zero padding.
pub(crate) fn im2col(x: &[f64], channels: usize, shape: Shape) -> Vec<f64> {
    let (w, h) = (shape.width as isize, shape.height as isize);
    let n = shape.len();
    let mut cols = vec![0.0; channels * KERNEL_SIZE * KERNEL_SIZE * n];
    for c in 0..channels {
        let src = &x[c * n..(c + 1) * n];
        for ky in 0..KERNEL_SIZE {
            for kx in 0..KERNEL_SIZE {
                let row = (c * KERNEL_SIZE + ky) * KERNEL_SIZE + kx;
                let dst = &mut cols[row * n..(row + 1) * n];
                let (dy, dx) = (ky as isize - HALF, kx as isize - HALF);
                for q in 0..h {
                    let sq = q + dy;
                    if sq < 0 || sq >= h {
                        continue;
                    }
                    for p in 0..w {
                        let sp = p + dx;
                        if sp >= 0 && sp < w {
                            dst[(q * w + p) as usize] = src[(sq * w + sp) as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`].
pub(crate) fn col2im(cols: &[f64], channels: usize, shape: Shape) -> Vec<f64> {
    let (w, h) = (shape.width as isize, shape.height as isize);
    let n = shape.len();
    let mut x = vec![0.0; channels * n];
    for c in 0..channels {
        let dst = &mut x[c * n..(c + 1) * n];
        for ky in 0..KERNEL_SIZE {
            for kx in 0..KERNEL_SIZE {
                let row = (c * KERNEL_SIZE + ky) * KERNEL_SIZE + kx;
                let src = &cols[row * n..(row + 1) * n];
                let (dy, dx) = (ky as isize - HALF, kx as isize - HALF);
                for q in 0..h {
                    let sq = q + dy;
                    if sq < 0 || sq >= h {
                        continue;
                    }
                    for p in 0..w {
                        let sp = p + dx;
                        if sp >= 0 && sp < w {
                            dst[(sq * w + sp) as usize] += src[(q * w + p) as usize];
                        }
                    }
                }
            }
        }
    }
    x
}

/// Same-size 3×3 convolution (cross-correlation) of `c_in` channels.
pub(crate) fn conv(x: &[f64], c_in: usize, shape: Shape, w: &[f64], b: &[f64]) -> Vec<f64> {
    let n = shape.len();
    let cols = im2col(x, c_in, shape);
    let mut z: Vec<f64> = b.iter().flat_map(|&v| std::iter::repeat_n(v, n)).collect();
    let k = c_in * KERNEL_SIZE * KERNEL_SIZE;
    gemm(
        View::new(w, b.len(), k),
        View::new(&cols, k, n),
        1.0,
        &mut z,
    );
    z
}

/// Accumulates kernel and bias gradients and returns the input gradient.
pub(crate) fn conv_backward(
    x: &[f64],
    c_in: usize,
    shape: Shape,
    w: &[f64],
    dz: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
) -> Vec<f64> {
    let n = shape.len();
    let c_out = db.len();
    let k = c_in * KERNEL_SIZE * KERNEL_SIZE;
    let cols = im2col(x, c_in, shape);
    gemm(View::new(dz, c_out, n), View::new(&cols, k, n).t(), 1.0, dw);
    for (g, row) in db.iter_mut().zip(dz.chunks_exact(n)) {
        *g += row.iter().sum::<f64>();
    }
    let mut dcols = vec![0.0; k * n];
    gemm(
        View::new(w, c_out, k).t(),
        View::new(dz, c_out, n),
        0.0,
        &mut dcols,
    );
    col2im(&dcols, c_in, shape)
}

pub(crate) const BN_EPS: f64 = 1e-5;

/// Per-channel normalization of one batchnorm layer.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct NormRecord {
    pub xhat: Vec<f64>,
    pub inv_std: Vec<f64>,
    /// Batch mean and unbiased variance, used to update running statistics.
    pub batch_mean: Vec<f64>,
    pub batch_var: Vec<f64>,
    pub batch_stats: bool,
}

/// Normalizes each channel with batch statistics or the given running ones.
pub(crate) fn batchnorm(z: &[f64], n: usize, running: Option<(&[f64], &[f64])>) -> NormRecord {
    let channels = z.len() / n;
    let mut xhat = vec![0.0; z.len()];
    let mut inv_std = vec![0.0; channels];
    let mut batch_mean = vec![0.0; channels];
    let mut batch_var = vec![0.0; channels];
    for c in 0..channels {
        let zc = &z[c * n..(c + 1) * n];
        let (mean, var) = match running {
            Some((rm, rv)) => (rm[c], rv[c]),
            None => {
                let m = zc.iter().sum::<f64>() / n as f64;
                let v = zc.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64;
                batch_mean[c] = m;
                batch_var[c] = if n > 1 {
                    v * n as f64 / (n - 1) as f64
                } else {
                    v
                };
                (m, v)
            }
        };
        let is = 1.0 / (var + BN_EPS).sqrt();
        inv_std[c] = is;
        for (o, &x) in xhat[c * n..(c + 1) * n].iter_mut().zip(zc) {
            *o = (x - mean) * is;
        }
    }
    NormRecord {
        xhat,
        inv_std,
        batch_mean,
        batch_var,
        batch_stats: running.is_none(),
    }
}

/// Returns the gradient with respect to the normalized layer's input, given
/// the gradient with respect to `xhat`.
pub(crate) fn batchnorm_backward(rec: &NormRecord, n: usize, dxhat: &[f64]) -> Vec<f64> {
    let mut dz = vec![0.0; dxhat.len()];
    for (c, &is) in rec.inv_std.iter().enumerate() {
        let range = c * n..(c + 1) * n;
        let (dx, xh) = (&dxhat[range.clone()], &rec.xhat[range.clone()]);
        let out = &mut dz[range];
        if rec.batch_stats {
            let sum: f64 = dx.iter().sum();
            let dot: f64 = dx.iter().zip(xh).map(|(a, b)| a * b).sum();
            let nf = n as f64;
            for ((o, &d), &x) in out.iter_mut().zip(dx).zip(xh) {
                *o = is / nf * (nf * d - sum - x * dot);
            }
        } else {
            for (o, &d) in out.iter_mut().zip(dx) {
                *o = d * is;
            }
        }
    }
    dz
}
