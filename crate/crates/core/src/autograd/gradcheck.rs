use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub eps: f64,
    /// Coordinates checked; every coordinate when there are fewer.
    pub coords: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self { eps: 1e-5, coords: 200, seed: 0 }
    }
}

/// Compares the analytic gradient returned by `f` with central differences
/// on a random subset of coordinates. Returns the largest relative error
/// `|a − n| / max(|a|, |n|, 1e-8)`.
///
/// `f` maps parameters to `(loss, gradient per parameter)`.
pub fn grad_check<F>(mut f: F, params: &[Tensor], opts: GradCheckOptions) -> Result<f64>
where
    F: FnMut(&[Tensor]) -> Result<(f64, Vec<Tensor>)>,
{
    let (loss, analytic) = f(params)?;
    if !loss.is_finite() {
        return Err(Error::InvalidArgument(format!("loss {loss} is not finite")));
    }
    if analytic.len() != params.len() || analytic.iter().zip(params).any(|(g, p)| g.shape() != p.shape()) {
        return Err(Error::Shape("analytic gradient does not match parameter shapes".into()));
    }
    let offsets: Vec<usize> = params
        .iter()
        .scan(0, |acc, p| {
            let start = *acc;
            *acc += p.len();
            Some(start)
        })
        .collect();
    let total: usize = params.iter().map(Tensor::len).sum();
    let mut picks: Vec<usize> = if total <= opts.coords {
        (0..total).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rand::seq::index::sample(&mut rng, total, opts.coords).into_vec()
    };
    picks.sort_unstable();

    let mut work = params.to_vec();
    let mut worst = 0.0f64;
    for flat in picks {
        let which = offsets.partition_point(|&o| o <= flat) - 1;
        let idx = flat - offsets[which];
        let orig = work[which].data()[idx];
        work[which].data_mut()[idx] = orig + opts.eps;
        let (plus, _) = f(&work)?;
        work[which].data_mut()[idx] = orig - opts.eps;
        let (minus, _) = f(&work)?;
        work[which].data_mut()[idx] = orig;
        if !(plus.is_finite() && minus.is_finite()) {
            return Err(Error::InvalidArgument(format!("loss not finite around parameter {which}[{idx}]")));
        }
        let numeric = (plus - minus) / (2.0 * opts.eps);
        let a = analytic[which].data()[idx];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}
