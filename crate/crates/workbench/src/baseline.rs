//! Sample-maximum lower bound on the worst-case residual.

use fomcert_core::model_ir::{Compiled, IrError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SampleError {
    #[error("sample count must be at least 1")]
    NoSamples,
    #[error("rejection sampling found no parameter satisfying the extra rows after {0} draws")]
    Rejection(usize),
    #[error(transparent)]
    Ir(#[from] IrError),
}

const MAX_REJECTIONS: usize = 10_000;

fn uniform(rng: &mut ChaCha8Rng, lo: &[f64], hi: &[f64]) -> Vec<f64> {
    lo.iter().zip(hi).map(|(&l, &h)| if h > l { rng.gen_range(l..=h) } else { l }).collect()
}

/// Draws `(x, s0)` uniformly from the parameter and initial boxes; extra parameter rows are
/// handled by rejection.
pub fn draw(c: &Compiled, rng: &mut ChaCha8Rng) -> Result<(Vec<f64>, Vec<f64>), SampleError> {
    let p = &c.family.params;
    let mut tries = 0;
    let x = loop {
        let x = uniform(rng, &p.lower, &p.upper);
        if p.rows.iter().all(|r| fomcert_core::linalg::dot(&r.coefs, &x) <= r.rhs) {
            break x;
        }
        tries += 1;
        if tries >= MAX_REJECTIONS {
            return Err(SampleError::Rejection(tries));
        }
    };
    let init = &c.family.init;
    Ok((x, uniform(rng, &init.lower, &init.upper)))
}

/// Per-`K` maximum residual over `n` simulated instances, `K = 1..=kmax`.
/// Sample `i` uses its own ChaCha stream, so the result does not depend on thread count.
pub fn sample_max(c: &Compiled, n: usize, kmax: usize, seed: u64) -> Result<Vec<f64>, SampleError> {
    if n == 0 {
        return Err(SampleError::NoSamples);
    }
    let per_sample: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let (x, s0) = draw(c, &mut rng)?;
            let traj = c.simulate(&x, &s0, kmax)?;
            Ok((1..=kmax).map(|k| c.residual_inf(&traj, k)).collect())
        })
        .collect::<Result<_, SampleError>>()?;
    Ok((0..kmax).map(|k| per_sample.iter().map(|r| r[k]).fold(0.0, f64::max)).collect())
}
