//! Moment matching for the Gaussian splitting `Z_j = c_j v0 + Σ_i S^i_j v_i`.
//!
//! The expected product `E[exp(Z_1) ... exp(Z_M)]` is compared word by word
//! with `exp(v0 + ½ Σ_i v_i²)`. Brownian indices are independent and share one
//! covariance `R` across the `M` stages: `E[S^i_j S^{i'}_{j'}] = R_{jj'} δ_{ii'}`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};
use crate::freealg::{TruncatedSeries, Word};
use crate::scalar::Scalar;

/// Symmetric `M × M` covariance of `(Y_1, ..., Y_M)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Covariance<S> {
    dim: usize,
    entries: Vec<S>,
}

impl<S: Scalar> Covariance<S> {
    /// Row-major entries; must be symmetric.
    pub fn new(dim: usize, entries: Vec<S>) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::Dimension { expected: dim * dim, got: entries.len() });
        }
        for i in 0..dim {
            for j in 0..i {
                if entries[i * dim + j] != entries[j * dim + i] {
                    return Err(Error::Config(format!("covariance not symmetric at ({i},{j})")));
                }
            }
        }
        Ok(Self { dim, entries })
    }

    pub fn pair(r11: S, r12: S, r22: S) -> Self {
        Self { dim: 2, entries: vec![r11, r12.clone(), r12, r22] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> &S {
        &self.entries[i * self.dim + j]
    }

    /// Every principal minor is nonnegative.
    pub fn is_psd(&self) -> bool {
        (1u32..(1 << self.dim)).all(|mask| {
            let idx: Vec<usize> = (0..self.dim).filter(|i| mask & (1 << i) != 0).collect();
            determinant(&idx, self) >= S::zero()
        })
    }
}

fn determinant<S: Scalar>(idx: &[usize], cov: &Covariance<S>) -> S {
    let n = idx.len();
    let mut a: Vec<Vec<S>> =
        idx.iter().map(|&i| idx.iter().map(|&j| cov.get(i, j).clone()).collect()).collect();
    let mut det = S::one();
    for col in 0..n {
        let Some(pivot) = (col..n).find(|&r| !a[r][col].is_zero()) else {
            return S::zero();
        };
        if pivot != col {
            a.swap(pivot, col);
            det = -det;
        }
        det = det * a[col][col].clone();
        for r in col + 1..n {
            let f = a[r][col].clone() / a[col][col].clone();
            for k in col..n {
                let v = a[r][k].clone() - f.clone() * a[col][k].clone();
                a[r][k] = v;
            }
        }
    }
    det
}

fn factorial<S: Scalar>(n: u32) -> S {
    (1..=n as i64).fold(S::one(), |acc, k| acc * S::from_int(k))
}

/// `E[Y_1^{m_1} ... Y_M^{m_M}]` for a centred Gaussian vector, summed over
/// the pairing-count set `e(m_1, ..., m_M)`:
/// `Σ 2^{-Σ d_ii} Π m_i! / Π d_ij! Π R_ij^{d_ij}`.
pub fn gaussian_moment<S: Scalar>(cov: &Covariance<S>, powers: &[u32]) -> S {
    assert_eq!(cov.dim(), powers.len(), "one power per Gaussian variable");
    if powers.iter().sum::<u32>() % 2 == 1 {
        return S::zero();
    }
    let mut rem = powers.to_vec();
    let sum = moment_rows(cov, 0, &mut rem);
    powers.iter().fold(sum, |acc, &m| acc * factorial::<S>(m))
}

// Fixes row `i` of {d_ij}: off-diagonal counts d_ij (j > i) and the diagonal
// count d_ii = (rem_i - Σ_j d_ij) / 2, then recurses into row i + 1.
fn moment_rows<S: Scalar>(cov: &Covariance<S>, i: usize, rem: &mut [u32]) -> S {
    let m = cov.dim();
    if i == m {
        return S::one();
    }
    let mut total = S::zero();
    off_diagonal(cov, i, i + 1, rem, S::one(), &mut total);
    return total;

    fn off_diagonal<S: Scalar>(
        cov: &Covariance<S>,
        i: usize,
        j: usize,
        rem: &mut [u32],
        weight: S,
        total: &mut S,
    ) {
        let m = cov.dim();
        if j == m {
            if rem[i] % 2 == 1 {
                return;
            }
            let dii = rem[i] / 2;
            let diag = cov.get(i, i).powu(dii)
                / (factorial::<S>(dii) * S::from_int(2).powu(dii));
            let saved = rem[i];
            rem[i] = 0;
            let rest = moment_rows(cov, i + 1, rem);
            rem[i] = saved;
            *total = total.clone() + weight * diag * rest;
            return;
        }
        let max = rem[i].min(rem[j]);
        for dij in 0..=max {
            rem[i] -= dij;
            rem[j] -= dij;
            let w = weight.clone() * cov.get(i, j).powu(dij) / factorial::<S>(dij);
            off_diagonal(cov, i, j + 1, rem, w, total);
            rem[i] += dij;
            rem[j] += dij;
        }
    }
}

/// Drift weights `c_j` and the shared stage covariance `R` of an `M`-stage splitting.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianSplitting<S> {
    pub c: Vec<S>,
    pub cov: Covariance<S>,
}

impl<S: Scalar> GaussianSplitting<S> {
    pub fn new(c: Vec<S>, cov: Covariance<S>) -> Result<Self> {
        if c.len() != cov.dim() {
            return Err(Error::Dimension { expected: cov.dim(), got: c.len() });
        }
        Ok(Self { c, cov })
    }

    pub fn stages(&self) -> usize {
        self.c.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Upper,
    Lower,
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Branch::Upper => "upper",
            Branch::Lower => "lower",
        })
    }
}

impl std::str::FromStr for Branch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "upper" => Ok(Branch::Upper),
            "lower" => Ok(Branch::Lower),
            other => Err(Error::Parse(format!("unknown branch `{other}`"))),
        }
    }
}

/// A member of the two-stage family matching all words up to `‖w‖ = 5`.
#[derive(Clone, Debug, PartialEq)]
pub struct SchemeParams<S> {
    pub u: S,
    pub branch: Branch,
    pub c1: S,
    pub c2: S,
    pub r11: S,
    pub r12: S,
    pub r22: S,
}

/// Which scalar of a two-stage splitting to perturb.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamField {
    C1,
    C2,
    R11,
    R12,
    R22,
}

impl std::str::FromStr for ParamField {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "c1" => Ok(ParamField::C1),
            "c2" => Ok(ParamField::C2),
            "R11" | "r11" => Ok(ParamField::R11),
            "R12" | "r12" => Ok(ParamField::R12),
            "R22" | "r22" => Ok(ParamField::R22),
            other => Err(Error::Parse(format!("unknown parameter `{other}`"))),
        }
    }
}

impl<S: Scalar> SchemeParams<S> {
    pub fn splitting(&self) -> GaussianSplitting<S> {
        GaussianSplitting {
            c: vec![self.c1.clone(), self.c2.clone()],
            cov: Covariance::pair(self.r11.clone(), self.r12.clone(), self.r22.clone()),
        }
    }

    /// The splitting with one scalar shifted by `delta` (no longer on the family).
    pub fn perturbed(&self, field: ParamField, delta: &S) -> GaussianSplitting<S> {
        let mut p = self.clone();
        let slot = match field {
            ParamField::C1 => &mut p.c1,
            ParamField::C2 => &mut p.c2,
            ParamField::R11 => &mut p.r11,
            ParamField::R12 => &mut p.r12,
            ParamField::R22 => &mut p.r22,
        };
        *slot = slot.clone() + delta.clone();
        p.splitting()
    }

    pub fn to_f64(&self) -> SchemeParams<f64> {
        SchemeParams {
            u: self.u.to_f64(),
            branch: self.branch,
            c1: self.c1.to_f64(),
            c2: self.c2.to_f64(),
            r11: self.r11.to_f64(),
            r12: self.r12.to_f64(),
            r22: self.r22.to_f64(),
        }
    }
}

/// Closed-form two-stage solution family parameterised by `u >= 1/2`.
///
/// With `ρ = sqrt(2(2u - 1))` the upper branch is
/// `c = (-ρ/2, 1 + ρ/2)`, `R11 = u`, `R22 = 1 + u + ρ`, `R12 = -u - ρ/2`;
/// the lower branch flips the sign of `ρ`.
pub fn solution_params<S: Scalar>(u: S, branch: Branch) -> Result<SchemeParams<S>> {
    let half = S::from_ratio(1, 2);
    if u < half {
        return Err(Error::Domain(format!("u = {u} is below 1/2")));
    }
    let two = S::from_int(2);
    let disc = two.clone() * (two.clone() * u.clone() - S::one());
    let rho = disc.sqrt_exact().ok_or_else(|| {
        Error::Domain(format!("sqrt({disc}) is not representable in this scalar mode"))
    })?;
    let rho = match branch {
        Branch::Upper => rho,
        Branch::Lower => -rho,
    };
    Ok(SchemeParams {
        c1: -rho.clone() * half.clone(),
        c2: S::one() + rho.clone() * half.clone(),
        r11: u.clone(),
        r22: S::one() + u.clone() + rho.clone(),
        r12: -u.clone() - rho * half,
        u,
        branch,
    })
}

fn brownian_parity_even(w: &Word, d: u8) -> bool {
    (1..=d.max(max_letter(w))).all(|p| w.count(p) % 2 == 0)
}

fn max_letter(w: &Word) -> u8 {
    w.letters().iter().copied().max().unwrap_or(0)
}

/// Memoised Gaussian moments for one covariance.
struct MomentCache<'a, S> {
    cov: &'a Covariance<S>,
    table: HashMap<Vec<u32>, S>,
}

impl<'a, S: Scalar> MomentCache<'a, S> {
    fn new(cov: &'a Covariance<S>) -> Self {
        Self { cov, table: HashMap::new() }
    }

    fn get(&mut self, powers: &[u32]) -> S {
        if let Some(v) = self.table.get(powers) {
            return v.clone();
        }
        let v = gaussian_moment(self.cov, powers);
        self.table.insert(powers.to_vec(), v.clone());
        v
    }
}

/// `C(w) = ⟨E[exp(Z_1) ... exp(Z_M)], w⟩`, summing over the ways of cutting
/// `w` into `M` consecutive (possibly empty) blocks, one per stage.
pub fn scheme_coefficient<S: Scalar>(split: &GaussianSplitting<S>, w: &Word, d: u8) -> S {
    let mut cache = MomentCache::new(&split.cov);
    coefficient_cached(split, w, d, &mut cache)
}

fn coefficient_cached<S: Scalar>(
    split: &GaussianSplitting<S>,
    w: &Word,
    d: u8,
    cache: &mut MomentCache<'_, S>,
) -> S {
    let d = d.max(max_letter(w));
    if !brownian_parity_even(w, d) {
        return S::zero();
    }
    let stages = split.stages();
    let letters = w.letters();
    let mut total = S::zero();
    let mut cuts = vec![0usize; stages + 1];
    cuts[stages] = letters.len();
    compositions(letters.len(), stages, &mut cuts, 1, &mut |cuts| {
        // cuts[j]..cuts[j+1] is the block consumed by stage j.
        let mut term = S::one();
        for j in 0..stages {
            let block = &letters[cuts[j]..cuts[j + 1]];
            term = term / factorial::<S>(block.len() as u32);
            let drift = block.iter().filter(|&&l| l == 0).count() as u32;
            term = term * split.c[j].powu(drift);
            if term.is_zero() {
                return;
            }
        }
        let mut powers = vec![0u32; stages];
        for p in 1..=d {
            for (j, slot) in powers.iter_mut().enumerate() {
                *slot = letters[cuts[j]..cuts[j + 1]].iter().filter(|&&l| l == p).count() as u32;
            }
            if powers.iter().all(|&x| x == 0) {
                continue;
            }
            term = term * cache.get(&powers);
            if term.is_zero() {
                return;
            }
        }
        total = total.clone() + term;
    });
    total
}

fn compositions(
    len: usize,
    stages: usize,
    cuts: &mut [usize],
    j: usize,
    visit: &mut dyn FnMut(&[usize]),
) {
    if j == stages {
        visit(cuts);
        return;
    }
    for c in cuts[j - 1]..=len {
        cuts[j] = c;
        compositions(len, stages, cuts, j + 1, visit);
    }
}

/// `E[j_m(exp(Z_1) ... exp(Z_M))]` by brute expansion: every product of
/// exponential terms is expanded with symbolic Gaussian monomials, and each
/// monomial is then replaced by its moment.
pub fn symbolic_expectation<S: Scalar>(
    split: &GaussianSplitting<S>,
    m: usize,
    d: u8,
) -> TruncatedSeries<S> {
    let stages = split.stages();
    let brownian = d as usize;
    // (word, exponents[p * stages + j]) -> coefficient
    let mut states: BTreeMap<(Word, Vec<u32>), S> = BTreeMap::new();
    states.insert((Word::empty(), vec![0; brownian * stages]), S::one());
    for j in 0..stages {
        let mut next: BTreeMap<(Word, Vec<u32>), S> = BTreeMap::new();
        for ((u, exps), coeff) in &states {
            let budget = m - u.scaled_degree();
            for v in Word::all_up_to(d, budget) {
                // exp(Z_j) contributes (1/|v|!) Π_letters (c_j or S^p_j)
                let drift = v.count(0) as u32;
                let c = coeff.clone() * split.c[j].powu(drift) / factorial::<S>(v.len() as u32);
                if c.is_zero() {
                    continue;
                }
                let mut e = exps.clone();
                for &l in v.letters() {
                    if l > 0 {
                        e[(l as usize - 1) * stages + j] += 1;
                    }
                }
                let key = (u.concat(&v), e);
                let slot = next.entry(key).or_insert_with(S::zero);
                *slot = slot.clone() + c;
            }
        }
        states = next;
    }
    let mut out = TruncatedSeries::zero(m);
    let mut cache = MomentCache::new(&split.cov);
    for ((w, exps), coeff) in states {
        let mut value = coeff;
        for p in 0..brownian {
            let powers = &exps[p * stages..(p + 1) * stages];
            if powers.iter().any(|&x| x > 0) {
                value = value * cache.get(powers);
            }
        }
        out = out
            .add(&TruncatedSeries::monomial(w, value, m))
            .expect("same truncation degree");
    }
    out
}

/// Coefficient of `w` in `exp(v0 + ½ Σ_i v_i²)`: a sum over factorisations
/// `w = w_1 ... w_l` into blocks from `{v0, v1v1, ..., vdvd}` of
/// `1 / (2^{|w| - l} l!)`.
pub fn target_coefficient<S: Scalar>(w: &Word) -> S {
    let letters = w.letters();
    let n = letters.len();
    // ways[k]: block count l -> number of factorisations of the prefix of length k
    let mut ways: Vec<BTreeMap<u32, u64>> = vec![BTreeMap::new(); n + 1];
    ways[0].insert(0, 1);
    for k in 0..n {
        if ways[k].is_empty() {
            continue;
        }
        let current = ways[k].clone();
        let mut push = |to: usize| {
            for (&l, &count) in &current {
                *ways[to].entry(l + 1).or_insert(0) += count;
            }
        };
        if letters[k] == 0 {
            push(k + 1);
        } else if k + 1 < n && letters[k + 1] == letters[k] {
            push(k + 2);
        }
    }
    ways[n].iter().fold(S::zero(), |acc, (&l, &count)| {
        let denom = S::from_int(2).powu(n as u32 - l) * factorial::<S>(l);
        acc + S::from_int(count as i64) / denom
    })
}

/// One row of the matching table.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentRow<S> {
    pub word: Word,
    pub scheme: S,
    pub target: S,
    pub residual: S,
}

/// `C(w)`, the target coefficient and their difference for every `‖w‖ <= m`
/// over `{v0, ..., vd}`, in canonical word order.
pub fn moment_table<S: Scalar>(split: &GaussianSplitting<S>, m: usize, d: u8) -> Vec<MomentRow<S>> {
    let mut cache = MomentCache::new(&split.cov);
    Word::all_up_to(d, m)
        .into_iter()
        .map(|word| {
            let scheme = coefficient_cached(split, &word, d, &mut cache);
            let target = target_coefficient::<S>(&word);
            let residual = scheme.clone() - target.clone();
            MomentRow { word, scheme, target, residual }
        })
        .collect()
}

/// Residual `C(w) - target(w)` for every word `‖w‖ <= m`; identically zero iff
/// the splitting matches the generator's exponential through degree `m`.
pub fn moment_residuals<S: Scalar>(
    split: &GaussianSplitting<S>,
    m: usize,
    d: u8,
) -> BTreeMap<Word, S> {
    moment_table(split, m, d).into_iter().map(|r| (r.word, r.residual)).collect()
}

/// Settings for the multi-start residual minimisation.
#[derive(Clone, Debug)]
pub struct SearchConfig {
    pub m: usize,
    pub stages: usize,
    pub d: u8,
    pub starts: usize,
    pub max_iters: usize,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct SearchReport {
    pub best_norm: f64,
    pub best: GaussianSplitting<f64>,
    pub evaluations: usize,
}

/// Words that carry a nontrivial matching equation: even Brownian parity, nonempty.
fn equation_words(m: usize, d: u8) -> Vec<Word> {
    Word::all_up_to(d, m)
        .into_iter()
        .filter(|w| !w.is_empty() && brownian_parity_even(w, d))
        .collect()
}

// θ = (c_1, ..., c_{M-1}, lower-triangular L row-major); c_M = 1 - Σ c, R = L Lᵀ.
fn decode(theta: &[f64], stages: usize) -> GaussianSplitting<f64> {
    let mut c: Vec<f64> = theta[..stages - 1].to_vec();
    c.push(1.0 - c.iter().sum::<f64>());
    let l = &theta[stages - 1..];
    let at = |i: usize, j: usize| if j <= i { l[i * (i + 1) / 2 + j] } else { 0.0 };
    let mut entries = vec![0.0; stages * stages];
    for i in 0..stages {
        for j in 0..stages {
            entries[i * stages + j] = (0..stages).map(|k| at(i, k) * at(j, k)).sum();
        }
    }
    // Symmetrise exactly so Covariance::new accepts it.
    for i in 0..stages {
        for j in 0..i {
            entries[j * stages + i] = entries[i * stages + j];
        }
    }
    GaussianSplitting { c, cov: Covariance { dim: stages, entries } }
}

fn residual_vector(theta: &[f64], stages: usize, d: u8, words: &[Word]) -> DVector<f64> {
    let split = decode(theta, stages);
    let mut cache = MomentCache::new(&split.cov);
    DVector::from_iterator(
        words.len(),
        words.iter().map(|w| {
            coefficient_cached(&split, w, d, &mut cache) - target_coefficient::<f64>(w)
        }),
    )
}

/// Best-effort numerical search for a splitting with `M = stages` matching
/// through degree `m`: Levenberg-Marquardt from `starts` random points.
/// A large best residual is evidence, not proof, that no solution exists.
pub fn minimize_residual(cfg: &SearchConfig) -> SearchReport {
    assert!(cfg.stages >= 1);
    let words = equation_words(cfg.m, cfg.d);
    let dim = cfg.stages - 1 + cfg.stages * (cfg.stages + 1) / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut uniform = |lo: f64, hi: f64| {
        let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        lo + (hi - lo) * u
    };
    let mut evaluations = 0usize;
    let mut best_norm = f64::INFINITY;
    let mut best_theta = vec![0.0; dim];
    for _ in 0..cfg.starts {
        let mut theta: Vec<f64> = (0..dim)
            .map(|k| if k < cfg.stages - 1 { uniform(-1.0, 2.0) } else { uniform(-1.5, 1.5) })
            .collect();
        let mut r = residual_vector(&theta, cfg.stages, cfg.d, &words);
        evaluations += 1;
        let mut norm = r.norm();
        let mut lambda = 1e-2;
        for _ in 0..cfg.max_iters {
            let mut jac = DMatrix::zeros(words.len(), dim);
            for k in 0..dim {
                let h = 1e-7 * theta[k].abs().max(1.0);
                let mut shifted = theta.clone();
                shifted[k] += h;
                let rk = residual_vector(&shifted, cfg.stages, cfg.d, &words);
                evaluations += 1;
                jac.set_column(k, &((rk - &r) / h));
            }
            let jtj = jac.transpose() * &jac;
            let grad = jac.transpose() * &r;
            let mut improved = false;
            for _ in 0..8 {
                let mut damped = jtj.clone();
                for k in 0..dim {
                    damped[(k, k)] += lambda * (jtj[(k, k)] + 1e-12);
                }
                let Some(step) = damped.lu().solve(&(-&grad)) else {
                    lambda *= 10.0;
                    continue;
                };
                let candidate: Vec<f64> = theta.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
                let rc = residual_vector(&candidate, cfg.stages, cfg.d, &words);
                evaluations += 1;
                let nc = rc.norm();
                if nc < norm {
                    theta = candidate;
                    r = rc;
                    let gain = norm - nc;
                    norm = nc;
                    lambda = (lambda / 3.0).max(1e-12);
                    improved = gain > 1e-15 * norm.max(1e-300);
                    break;
                }
                lambda *= 4.0;
            }
            if !improved || norm < 1e-14 {
                break;
            }
        }
        if norm < best_norm {
            best_norm = norm;
            best_theta = theta;
        }
    }
    SearchReport { best_norm, best: decode(&best_theta, cfg.stages), evaluations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;

    type Q = BigRational;

    fn q(n: i64, d: i64) -> Q {
        Q::from_ratio(n, d)
    }

    fn w(letters: &[u8]) -> Word {
        Word::from_letters(letters)
    }

    #[test]
    fn gaussian_moment_examples() {
        let one = Covariance::new(1, vec![q(5, 3)]).unwrap();
        assert_eq!(gaussian_moment(&one, &[2]), q(5, 3));
        let unit = Covariance::new(1, vec![q(1, 1)]).unwrap();
        assert_eq!(gaussian_moment(&unit, &[4]), q(3, 1));
        assert_eq!(gaussian_moment(&unit, &[3]), q(0, 1));
        assert_eq!(gaussian_moment(&unit, &[0]), q(1, 1));
        let (a, b, c) = (q(2, 1), q(3, 1), q(1, 2));
        let pair = Covariance::pair(a.clone(), c.clone(), b.clone());
        assert_eq!(gaussian_moment(&pair, &[2, 2]), a * b + q(2, 1) * c.clone() * c);
    }

    #[test]
    fn covariance_checks() {
        assert!(Covariance::new(2, vec![q(1, 1), q(1, 2), q(1, 3), q(1, 1)]).is_err());
        assert!(Covariance::pair(q(3, 4), q(-1, 4), q(3, 4)).is_psd());
        assert!(!Covariance::pair(q(1, 1), q(2, 1), q(1, 1)).is_psd());
        assert!(!Covariance::pair(q(-1, 1), q(0, 1), q(1, 1)).is_psd());
    }

    #[test]
    fn solution_family_examples() {
        let p = solution_params(q(1, 2), Branch::Lower).unwrap();
        let u = solution_params(q(1, 2), Branch::Upper).unwrap();
        for s in [&p, &u] {
            assert_eq!(
                (s.c1.clone(), s.c2.clone(), s.r11.clone(), s.r22.clone(), s.r12.clone()),
                (q(0, 1), q(1, 1), q(1, 2), q(3, 2), q(-1, 2))
            );
        }
        let lo = solution_params(q(3, 4), Branch::Lower).unwrap();
        assert_eq!((lo.c1, lo.c2, lo.r11, lo.r22, lo.r12), (q(1, 2), q(1, 2), q(3, 4), q(3, 4), q(-1, 4)));
        let up = solution_params(q(3, 4), Branch::Upper).unwrap();
        assert_eq!((up.c1, up.c2, up.r11, up.r22, up.r12), (q(-1, 2), q(3, 2), q(3, 4), q(11, 4), q(-5, 4)));
        assert!(matches!(solution_params(q(2, 5), Branch::Lower), Err(Error::Domain(_))));
        // sqrt(2) is irrational: exact mode refuses, float mode succeeds.
        assert!(matches!(solution_params(q(1, 1), Branch::Lower), Err(Error::Domain(_))));
        assert!(solution_params(1.0f64, Branch::Lower).is_ok());
    }

    #[test]
    fn scheme_coefficient_examples() {
        let split = solution_params(q(3, 4), Branch::Lower).unwrap().splitting();
        assert_eq!(scheme_coefficient(&split, &w(&[0]), 2), q(1, 1));
        assert_eq!(scheme_coefficient(&split, &w(&[1, 2]), 2), q(0, 1));
        assert_eq!(scheme_coefficient(&split, &w(&[1, 1]), 2), q(1, 2));
        assert_eq!(scheme_coefficient(&split, &Word::empty(), 2), q(1, 1));
    }

    #[test]
    fn target_coefficient_examples() {
        assert_eq!(target_coefficient::<Q>(&Word::empty()), q(1, 1));
        assert_eq!(target_coefficient::<Q>(&w(&[1, 1])), q(1, 2));
        assert_eq!(target_coefficient::<Q>(&w(&[0, 0])), q(1, 2));
        assert_eq!(target_coefficient::<Q>(&w(&[1, 2])), q(0, 1));
        assert_eq!(target_coefficient::<Q>(&w(&[1, 0, 1])), q(0, 1));
        // v0 . v1v1: l = 2, |w| = 3
        assert_eq!(target_coefficient::<Q>(&w(&[0, 1, 1])), q(1, 4));
    }

    #[test]
    fn target_matches_series_exponential() {
        let m = 6;
        let gen = TruncatedSeries::<Q>::from_terms(
            [(w(&[0]), q(1, 1)), (w(&[1, 1]), q(1, 2)), (w(&[2, 2]), q(1, 2))],
            m,
        );
        let e = gen.exp().unwrap();
        for word in Word::all_up_to(2, m) {
            assert_eq!(target_coefficient::<Q>(&word), e.coeff(&word), "{word}");
        }
    }

    #[test]
    fn symbolic_expectation_basics() {
        let split = solution_params(q(3, 4), Branch::Lower).unwrap().splitting();
        assert_eq!(symbolic_expectation(&split, 0, 2), TruncatedSeries::one(0));
        assert_eq!(symbolic_expectation(&split, 3, 2).coeff(&w(&[0])), q(1, 1));
    }

    #[test]
    fn residual_examples() {
        let params = solution_params(q(3, 4), Branch::Lower).unwrap();
        let res = moment_residuals(&params.splitting(), 5, 2);
        assert!(res.values().all(|r| *r == q(0, 1)));
        assert_eq!(res[&w(&[1])], q(0, 1));
        let bumped = params.perturbed(ParamField::R12, &q(1, 10));
        let res = moment_residuals(&bumped, 5, 2);
        assert_eq!(res[&w(&[1, 1])], q(1, 10));
        assert_eq!(res[&w(&[1])], q(0, 1));
    }

    #[test]
    fn single_stage_cannot_match_degree_five() {
        let report = minimize_residual(&SearchConfig {
            m: 5,
            stages: 1,
            d: 2,
            starts: 8,
            max_iters: 100,
            seed: 3,
        });
        assert!(report.best_norm > 0.01, "best residual {}", report.best_norm);
    }

    #[test]
    fn search_recovers_the_two_stage_family() {
        let report = minimize_residual(&SearchConfig {
            m: 5,
            stages: 2,
            d: 1,
            starts: 12,
            max_iters: 200,
            seed: 11,
        });
        assert!(report.best_norm < 1e-8, "best residual {}", report.best_norm);
    }
}
