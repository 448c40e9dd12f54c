//! Oracles shared by several test targets.
#![allow(dead_code)]

use nnsplit::moment_match::Covariance;
use nnsplit::scalar::Scalar;
use num_rational::BigRational;
use rand_chacha::ChaCha8Rng;
use rand_core::RngCore;

type Q = BigRational;

fn q(n: i64, d: i64) -> Q {
    Q::from_ratio(n, d)
}

/// Sum over perfect matchings of the labelled items of Π R(label_a, label_b).
pub fn isserlis(cov: &Covariance<Q>, labels: &[usize]) -> Q {
    if labels.is_empty() {
        return q(1, 1);
    }
    if labels.len() % 2 == 1 {
        return q(0, 1);
    }
    let first = labels[0];
    let mut total = q(0, 1);
    for k in 1..labels.len() {
        let mut rest = labels[1..].to_vec();
        let partner = rest.remove(k - 1);
        total += cov.get(first, partner).clone() * isserlis(cov, &rest);
    }
    total
}

pub fn random_rational(rng: &mut ChaCha8Rng, lo: i64, hi: i64) -> Q {
    let den = 1 + (rng.next_u64() % 6) as i64;
    let span = (hi - lo) * den;
    let num = lo * den + (rng.next_u64() % (span as u64 + 1)) as i64;
    q(num, den)
}

/// A symmetric matrix with random rational entries in `[-2, 2]`; not necessarily PSD.
pub fn random_covariance(rng: &mut ChaCha8Rng, dim: usize) -> Covariance<Q> {
    let mut entries = vec![q(0, 1); dim * dim];
    for i in 0..dim {
        for j in 0..=i {
            let v = random_rational(rng, -2, 2);
            entries[i * dim + j] = v.clone();
            entries[j * dim + i] = v;
        }
    }
    Covariance::new(dim, entries).unwrap()
}

/// Calls `visit` with every exponent vector of length `dim` whose entries sum to at most `total`.
pub fn for_each_powers(dim: usize, total: u32, mut visit: impl FnMut(&[u32])) {
    let mut powers = vec![0u32; dim];
    loop {
        if powers.iter().sum::<u32>() <= total {
            visit(&powers);
        }
        let mut k = 0;
        while k < dim {
            powers[k] += 1;
            if powers[k] <= total {
                break;
            }
            powers[k] = 0;
            k += 1;
        }
        if k == dim {
            return;
        }
    }
}

/// The multiset of labels `i` repeated `powers[i]` times.
pub fn labels(powers: &[u32]) -> Vec<usize> {
    powers.iter().enumerate().flat_map(|(i, &m)| std::iter::repeat(i).take(m as usize)).collect()
}
