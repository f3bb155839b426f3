//! 1D cross-correlation kernels (im2col + GEMM), batched over samples.

use rayon::prelude::*;

/// Samples per work unit in the batched kernels. Partial weight gradients
/// are formed per unit and summed in unit order, so results do not depend
/// on the thread count.
const CHUNK: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Zero padding; output length `ceil(len / stride)`.
    Same,
    /// No padding; output length `(len - width) / stride + 1`.
    Valid,
}

/// Output length and left padding for an input of `len` samples.
pub fn conv1d_output_len(len: usize, width: usize, stride: usize, padding: Padding) -> (usize, usize) {
    match padding {
        Padding::Same => {
            let out = len.div_ceil(stride);
            let total = ((out.saturating_sub(1)) * stride + width).saturating_sub(len);
            (out, total / 2)
        }
        Padding::Valid => {
            if len < width {
                (0, 0)
            } else {
                ((len - width) / stride + 1, 0)
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub c_in: usize,
    pub len: usize,
    pub c_out: usize,
    pub width: usize,
    pub stride: usize,
    pub pad_left: usize,
    pub out_len: usize,
}

impl ConvGeom {
    fn rows(&self) -> usize {
        self.c_in * self.width
    }

    fn im2col(&self, x: &[f64], col: &mut [f64]) {
        let (w, s, lo) = (self.width, self.stride, self.out_len);
        if s == 1 && lo == self.len && self.pad_left < self.len && w - 1 - self.pad_left < self.len {
            im2col_same(x, self.c_in, self.len, w, self.pad_left, col);
            return;
        }
        for c in 0..self.c_in {
            let xc = &x[c * self.len..(c + 1) * self.len];
            for j in 0..w {
                let row = &mut col[(c * w + j) * lo..(c * w + j + 1) * lo];
                for (i, v) in row.iter_mut().enumerate() {
                    let pos = (i * s + j) as isize - self.pad_left as isize;
                    *v = if pos >= 0 && (pos as usize) < self.len { xc[pos as usize] } else { 0.0 };
                }
            }
        }
    }

    fn col2im(&self, col: &[f64], dx: &mut [f64]) {
        let (w, s, lo) = (self.width, self.stride, self.out_len);
        for c in 0..self.c_in {
            let dxc = &mut dx[c * self.len..(c + 1) * self.len];
            for j in 0..w {
                let row = &col[(c * w + j) * lo..(c * w + j + 1) * lo];
                for (i, v) in row.iter().enumerate() {
                    let pos = (i * s + j) as isize - self.pad_left as isize;
                    if pos >= 0 && (pos as usize) < self.len {
                        dxc[pos as usize] += v;
                    }
                }
            }
        }
    }
}

/// Stride-1 im2col where every output position has an input position:
/// row `(c, j)` of `col` is channel `c` shifted by `j − pad`, zero filled.
pub(crate) fn im2col_same(x: &[f64], c_in: usize, len: usize, width: usize, pad: usize, col: &mut [f64]) {
    for c in 0..c_in {
        let xc = &x[c * len..(c + 1) * len];
        for j in 0..width {
            let row = &mut col[(c * width + j) * len..(c * width + j + 1) * len];
            if j >= pad {
                let o = j - pad;
                row[..len - o].copy_from_slice(&xc[o..]);
                row[len - o..].fill(0.0);
            } else {
                let o = pad - j;
                row[..o].fill(0.0);
                row[o..].copy_from_slice(&xc[..len - o]);
            }
        }
    }
}

/// `y[b,k,i] = Σ_{c,j} w[k,c,j]·x_pad[b,c,i·stride+j] + bias[k]`.
pub(crate) fn forward(g: &ConvGeom, x: &[f64], w: &[f64], bias: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; g.batch * g.c_out * g.out_len];
    if y.is_empty() {
        return y;
    }
    let rows = g.rows();
    let per_x = g.c_in * g.len;
    let per_y = g.c_out * g.out_len;
    y.par_chunks_mut(per_y).enumerate().for_each_init(
        || vec![0.0; rows * g.out_len],
        |col, (b, yb)| {
            g.im2col(&x[b * per_x..(b + 1) * per_x], col);
            for (k, row) in yb.chunks_mut(g.out_len).enumerate() {
                row.fill(bias[k]);
            }
            // SAFETY: all strides describe row-major matrices that lie
            // inside the borrowed slices.
            unsafe {
                matrixmultiply::dgemm(
                    g.c_out,
                    rows,
                    g.out_len,
                    1.0,
                    w.as_ptr(),
                    rows as isize,
                    1,
                    col.as_ptr(),
                    g.out_len as isize,
                    1,
                    1.0,
                    yb.as_mut_ptr(),
                    g.out_len as isize,
                    1,
                );
            }
        },
    );
    y
}

pub(crate) struct ConvGrads {
    pub dx: Option<Vec<f64>>,
    pub dw: Vec<f64>,
    pub db: Vec<f64>,
}

pub(crate) fn backward(g: &ConvGeom, x: &[f64], w: &[f64], dy: &[f64], need_dx: bool) -> ConvGrads {
    let rows = g.rows();
    let per_x = g.c_in * g.len;
    let per_y = g.c_out * g.out_len;
    let n_w = g.c_out * rows;
    let mut dx = vec![0.0; if need_dx { g.batch * per_x } else { 0 }];
    let n_chunks = g.batch.div_ceil(CHUNK);

    let unit = |chunk: usize, dx_chunk: Option<&mut [f64]>| -> (Vec<f64>, Vec<f64>) {
        let mut dw = vec![0.0; n_w];
        let mut db = vec![0.0; g.c_out];
        let mut col = vec![0.0; rows * g.out_len];
        let mut dcol = vec![0.0; rows * g.out_len];
        let mut dx_chunk = dx_chunk;
        for b in chunk * CHUNK..((chunk + 1) * CHUNK).min(g.batch) {
            let dyb = &dy[b * per_y..(b + 1) * per_y];
            g.im2col(&x[b * per_x..(b + 1) * per_x], &mut col);
            for (k, row) in dyb.chunks(g.out_len).enumerate() {
                db[k] += row.iter().sum::<f64>();
            }
            // SAFETY: see `forward`; col^T is read through swapped strides.
            unsafe {
                matrixmultiply::dgemm(
                    g.c_out,
                    g.out_len,
                    rows,
                    1.0,
                    dyb.as_ptr(),
                    g.out_len as isize,
                    1,
                    col.as_ptr(),
                    1,
                    g.out_len as isize,
                    1.0,
                    dw.as_mut_ptr(),
                    rows as isize,
                    1,
                );
            }
            if let Some(dxc) = dx_chunk.as_deref_mut() {
                // SAFETY: w^T is read through swapped strides.
                unsafe {
                    matrixmultiply::dgemm(
                        rows,
                        g.c_out,
                        g.out_len,
                        1.0,
                        w.as_ptr(),
                        1,
                        rows as isize,
                        dyb.as_ptr(),
                        g.out_len as isize,
                        1,
                        0.0,
                        dcol.as_mut_ptr(),
                        g.out_len as isize,
                        1,
                    );
                }
                let local = b - chunk * CHUNK;
                g.col2im(&dcol, &mut dxc[local * per_x..(local + 1) * per_x]);
            }
        }
        (dw, db)
    };

    let partials: Vec<(Vec<f64>, Vec<f64>)> = if need_dx {
        dx.par_chunks_mut(CHUNK * per_x).enumerate().map(|(c, dxc)| unit(c, Some(dxc))).collect()
    } else {
        (0..n_chunks).into_par_iter().map(|c| unit(c, None)).collect()
    };

    let mut dw = vec![0.0; n_w];
    let mut db = vec![0.0; g.c_out];
    for (pw, pb) in partials {
        dw.iter_mut().zip(&pw).for_each(|(a, b)| *a += b);
        db.iter_mut().zip(&pb).for_each(|(a, b)| *a += b);
    }
    ConvGrads { dx: need_dx.then_some(dx), dw, db }
}
