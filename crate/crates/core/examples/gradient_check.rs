//! Tape gradients of the contrast losses against central differences.
//!
//! cargo run --release --example gradient_check -- [seed]

use cmc::critic::Temperature;
use cmc::gradcheck::{finite_diff_check, FD_STEP};
use cmc::losses::{contrast_loss, contrast_loss_in_batch, nce_loss, ContrastBatch, NceConfig};
use cmc::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn randn(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| StandardNormal.sample(rng)).collect()).unwrap()
}

fn main() -> cmc::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tau = Temperature::new(0.5)?;
    let (n, k, d) = (4, 5, 6);
    let pos = randn(&[n, d], &mut rng);
    let neg = randn(&[n, k, d], &mut rng);
    let anchor = randn(&[n, d], &mut rng);

    let err = finite_diff_check(
        |t, a| {
            let b = ContrastBatch::new(a.l2_normalize()?, t.constant(pos.clone()), t.constant(neg.clone()), tau)?;
            contrast_loss(&b)
        },
        &anchor,
        FD_STEP,
    )?;
    println!("softmax (k+1)-way   max rel err {err:.2e}");

    let err = finite_diff_check(
        |t, a| contrast_loss_in_batch(a.l2_normalize()?, t.constant(pos.clone()).l2_normalize()?, tau),
        &anchor,
        FD_STEP,
    )?;
    println!("in-batch softmax    max rel err {err:.2e}");

    let err = finite_diff_check(
        |t, a| {
            let mut cfg = NceConfig::new(k, 100)?;
            cfg.z0 = Some(50.0);
            nce_loss(a, t.constant(pos.clone()), t.constant(neg.clone()), &mut cfg, tau)
        },
        &anchor,
        FD_STEP,
    )?;
    println!("nce                 max rel err {err:.2e}");
    Ok(())
}
