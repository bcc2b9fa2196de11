//! Temperature softmax, nucleus filtering and categorical sampling.

use rand::Rng;

use crate::scalar::Real;

/// `softmax(logits / t)`, computed with the maximum subtracted first.
///
/// Panics when `t` is not strictly positive.
pub fn apply_temperature<F: Real>(logits: &[F], t: F) -> Vec<F> {
    assert!(t > F::zero(), "temperature must be positive");
    if logits.is_empty() {
        return Vec::new();
    }
    let max = logits
        .iter()
        .copied()
        .fold(F::neg_infinity(), F::max);
    let mut out: Vec<F> = logits.iter().map(|&l| ((l - max) / t).exp()).collect();
    let total: F = out.iter().copied().sum();
    for p in &mut out {
        *p = *p / total;
    }
    out
}

pub fn softmax<F: Real>(logits: &[F]) -> Vec<F> {
    apply_temperature(logits, F::one())
}

/// Keep the smallest set of highest-probability tokens (ties: lower id
/// first) whose mass reaches `top_p`, zero the rest, renormalize.
///
/// `top_p >= 1` returns the input unchanged.
pub fn nucleus_filter<F: Real>(probs: &[F], top_p: F) -> Vec<F> {
    assert!(top_p > F::zero(), "top_p must be positive");
    if top_p >= F::one() {
        return probs.to_vec();
    }
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| {
        probs[b]
            .partial_cmp(&probs[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut kept = 0;
    let mut mass = F::zero();
    for &i in &order {
        mass = mass + probs[i];
        kept += 1;
        if mass >= top_p {
            break;
        }
    }
    let mut out = vec![F::zero(); probs.len()];
    for &i in &order[..kept] {
        out[i] = probs[i] / mass;
    }
    out
}

/// Inverse-CDF draw from a probability vector.
pub fn sample_index<F: Real, R: Rng + ?Sized>(probs: &[F], rng: &mut R) -> usize {
    let u = F::of(rng.random::<f64>());
    let mut acc = F::zero();
    let mut last_nonzero = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > F::zero() {
            last_nonzero = i;
        }
        acc = acc + p;
        if u < acc {
            return i;
        }
    }
    // rounding left the total a hair under u
    last_nonzero
}
