//! Inference without the tape: batch norm folded into the preceding conv,
//! ReLU applied in place, one window row at a time.

use rayon::prelude::*;

use super::{FcnModel, Layer, BN_EPS};
use crate::autograd::im2col_same;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
enum Step {
    Conv { w: Vec<f64>, b: Vec<f64>, c_in: usize, c_out: usize, width: usize, relu: bool },
    Pool { stride: usize },
}

/// A model reduced to conv and pool steps for inference.
#[derive(Debug, Clone)]
pub(crate) struct Folded {
    steps: Vec<Step>,
    input_len: usize,
}

#[derive(Default)]
struct Scratch {
    a: Vec<f64>,
    b: Vec<f64>,
    col: Vec<f64>,
}

impl Folded {
    pub(crate) fn new(model: &FcnModel) -> Result<Self> {
        let params = model.params();
        let stats = model.bn_stats();
        let mut steps: Vec<Step> = Vec::new();
        let (mut p, mut s) = (0, 0);
        for layer in model.plan() {
            match *layer {
                Layer::Conv { c_in, c_out, width, stride } => {
                    if stride != 1 {
                        return Err(Error::Shape("folded inference supports stride-1 convolutions only".into()));
                    }
                    steps.push(Step::Conv {
                        w: params[p].data().to_vec(),
                        b: params[p + 1].data().to_vec(),
                        c_in,
                        c_out,
                        width,
                        relu: false,
                    });
                    p += 2;
                }
                Layer::BatchNorm { .. } => {
                    let st = &stats[s];
                    if !st.is_ready() {
                        return Err(Error::MissingStatistics);
                    }
                    let (gamma, beta) = (params[p].data(), params[p + 1].data());
                    let Some(Step::Conv { w, b, c_in, width, .. }) = steps.last_mut() else {
                        return Err(Error::Shape("batch norm must follow a convolution".into()));
                    };
                    let per = *c_in * *width;
                    for k in 0..b.len() {
                        let scale = gamma[k] / (st.var[k] + BN_EPS).sqrt();
                        w[k * per..(k + 1) * per].iter_mut().for_each(|v| *v *= scale);
                        b[k] = (b[k] - st.mean[k]) * scale + beta[k];
                    }
                    p += 2;
                    s += 1;
                }
                Layer::Relu => match steps.last_mut() {
                    Some(Step::Conv { relu, .. }) => *relu = true,
                    _ => return Err(Error::Shape("ReLU must follow a convolution".into())),
                },
                Layer::AvgPool { stride, .. } => {
                    if stride > 1 {
                        steps.push(Step::Pool { stride });
                    }
                }
                Layer::GlobalAvgPool | Layer::Softmax | Layer::ChannelMax => break,
            }
        }
        Ok(Self { steps, input_len: model.config().input_len })
    }

    /// Class maps `[2, L']` of one input row.
    fn row(&self, x: &[f64], sc: &mut Scratch) -> Vec<f64> {
        let mut len = self.input_len;
        sc.a.clear();
        sc.a.extend_from_slice(x);
        for step in &self.steps {
            match step {
                Step::Conv { w, b, c_in, c_out, width, relu } => {
                    let k = c_in * width;
                    sc.col.resize(k * len, 0.0);
                    im2col_same(&sc.a, *c_in, len, *width, width / 2, &mut sc.col);
                    sc.b.clear();
                    for &bias in b {
                        sc.b.extend(std::iter::repeat(bias).take(len));
                    }
                    // SAFETY: row-major matrices inside the borrowed buffers.
                    unsafe {
                        matrixmultiply::dgemm(
                            *c_out,
                            k,
                            len,
                            1.0,
                            w.as_ptr(),
                            k as isize,
                            1,
                            sc.col.as_ptr(),
                            len as isize,
                            1,
                            1.0,
                            sc.b.as_mut_ptr(),
                            len as isize,
                            1,
                        );
                    }
                    if *relu {
                        sc.b.iter_mut().for_each(|v| *v = v.max(0.0));
                    }
                    std::mem::swap(&mut sc.a, &mut sc.b);
                }
                Step::Pool { stride } => {
                    let out = len / stride;
                    let channels = sc.a.len() / len;
                    sc.b.clear();
                    for c in 0..channels {
                        let src = &sc.a[c * len..(c + 1) * len];
                        sc.b.extend((0..out).map(|i| src[i * stride..(i + 1) * stride].iter().sum::<f64>() / *stride as f64));
                    }
                    std::mem::swap(&mut sc.a, &mut sc.b);
                    len = out;
                }
            }
        }
        sc.a.clone()
    }

    /// Class maps for every row of `x` (`[rows, input_len]`).
    pub(crate) fn class_maps(&self, x: &[f64]) -> Vec<Vec<f64>> {
        x.par_chunks(self.input_len).map_init(Scratch::default, |sc, row| self.row(row, sc)).collect()
    }
}

/// Seizure probability from one row's class maps: global average, then
/// the softmax of the two class means.
pub(crate) fn row_probability(maps: &[f64]) -> f64 {
    let lf = maps.len() / 2;
    let z0 = maps[..lf].iter().sum::<f64>() / lf as f64;
    let z1 = maps[lf..].iter().sum::<f64>() / lf as f64;
    let m = z0.max(z1);
    let (e0, e1) = ((z0 - m).exp(), (z1 - m).exp());
    e1 / (e0 + e1)
}
