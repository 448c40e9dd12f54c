//! Truncated non-commutative power series over the alphabet `{v0, v1, ..., vd}`.
//!
//! Words are graded by the scaled degree `‖w‖ = |w| + #{letters equal to v0}`,
//! so the drift letter `v0` counts twice, mirroring Brownian scaling. Every
//! [`TruncatedSeries`] carries its own truncation degree `m` and never stores a
//! word with `‖w‖ > m`. Binary operations refuse operands with different
//! truncation degrees instead of silently re-truncating.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A word `v_{i1} ... v_{in}`; the empty word is the unit `1`.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Word(Vec<u8>);

impl Word {
    pub fn empty() -> Self {
        Word(Vec::new())
    }

    pub fn letter(i: u8) -> Self {
        Word(vec![i])
    }

    pub fn from_letters(letters: &[u8]) -> Self {
        Word(letters.to_vec())
    }

    pub fn letters(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `‖w‖ = |w| + (number of v0 letters)`.
    pub fn scaled_degree(&self) -> usize {
        self.0.len() + self.count(0)
    }

    pub fn count(&self, letter: u8) -> usize {
        self.0.iter().filter(|&&l| l == letter).count()
    }

    pub fn concat(&self, other: &Word) -> Word {
        let mut letters = Vec::with_capacity(self.len() + other.len());
        letters.extend_from_slice(&self.0);
        letters.extend_from_slice(&other.0);
        Word(letters)
    }

    /// All words over `{v0, ..., vd}` with `‖w‖ <= max_degree`, in canonical order.
    pub fn all_up_to(d: u8, max_degree: usize) -> Vec<Word> {
        let mut out = vec![Word::empty()];
        let mut frontier = vec![Word::empty()];
        while !frontier.is_empty() {
            let mut next = Vec::new();
            for w in &frontier {
                for l in 0..=d {
                    let extra = if l == 0 { 2 } else { 1 };
                    if w.scaled_degree() + extra <= max_degree {
                        let mut letters = w.0.clone();
                        letters.push(l);
                        next.push(Word(letters));
                    }
                }
            }
            out.extend(next.iter().cloned());
            frontier = next;
        }
        out.sort();
        out
    }
}

impl Ord for Word {
    fn cmp(&self, other: &Self) -> Ordering {
        self.scaled_degree()
            .cmp(&other.scaled_degree())
            .then(self.len().cmp(&other.len()))
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Word {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "1");
        }
        for (k, l) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ".")?;
            }
            write!(f, "v{l}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// `word_scaled_degree` as a free function.
pub fn word_scaled_degree(w: &Word) -> usize {
    w.scaled_degree()
}

/// A finite series `Σ a_w w` restricted to `‖w‖ <= degree`.
#[derive(Clone, PartialEq)]
pub struct TruncatedSeries<S> {
    degree: usize,
    terms: BTreeMap<Word, S>,
}

impl<S: Scalar> TruncatedSeries<S> {
    pub fn zero(degree: usize) -> Self {
        Self { degree, terms: BTreeMap::new() }
    }

    pub fn one(degree: usize) -> Self {
        Self::monomial(Word::empty(), S::one(), degree)
    }

    /// `coeff · w`, or zero when `‖w‖` exceeds the truncation.
    pub fn monomial(word: Word, coeff: S, degree: usize) -> Self {
        let mut s = Self::zero(degree);
        s.add_term(word, coeff);
        s
    }

    pub fn letter(i: u8, degree: usize) -> Self {
        Self::monomial(Word::letter(i), S::one(), degree)
    }

    pub fn from_terms<I: IntoIterator<Item = (Word, S)>>(terms: I, degree: usize) -> Self {
        let mut s = Self::zero(degree);
        for (w, c) in terms {
            s.add_term(w, c);
        }
        s
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Word, &S)> {
        self.terms.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, w: &Word) -> S {
        self.terms.get(w).cloned().unwrap_or_else(S::zero)
    }

    pub fn constant_term(&self) -> S {
        self.coeff(&Word::empty())
    }

    fn add_term(&mut self, word: Word, coeff: S) {
        if word.scaled_degree() > self.degree || coeff.is_zero() {
            return;
        }
        let slot = self.terms.entry(word);
        match slot {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(coeff);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let sum = o.get().clone() + coeff;
                if sum.is_zero() {
                    o.remove();
                } else {
                    *o.get_mut() = sum;
                }
            }
        }
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.degree != other.degree {
            return Err(Error::Config(format!(
                "truncation degrees differ ({} vs {})",
                self.degree, other.degree
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        for (w, c) in &other.terms {
            out.add_term(w.clone(), c.clone());
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(&-S::one()))
    }

    pub fn scale(&self, k: &S) -> Self {
        let mut out = Self::zero(self.degree);
        if k.is_zero() {
            return out;
        }
        for (w, c) in &self.terms {
            out.add_term(w.clone(), c.clone() * k.clone());
        }
        out
    }

    /// Concatenation product, discarding every word with `‖w‖ > m`.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let mut out = Self::zero(self.degree);
        for (u, a) in &self.terms {
            let du = u.scaled_degree();
            for (v, b) in &other.terms {
                if du + v.scaled_degree() > self.degree {
                    continue;
                }
                out.add_term(u.concat(v), a.clone() * b.clone());
            }
        }
        Ok(out)
    }

    /// `1 + Σ p^k / k!`, finite because `p` has no constant term.
    pub fn exp(&self) -> Result<Self> {
        if !self.constant_term().is_zero() {
            return Err(Error::Domain("exp needs a series without constant term".into()));
        }
        let mut result = Self::one(self.degree);
        let mut power = Self::one(self.degree);
        let mut k = 1i64;
        loop {
            power = power.mul(self)?.scale(&S::from_ratio(1, k));
            if power.is_zero() {
                break;
            }
            result = result.add(&power)?;
            k += 1;
        }
        Ok(result)
    }

    /// `Σ (-1)^{k-1} (q - 1)^k / k`; requires constant term exactly one.
    pub fn log(&self) -> Result<Self> {
        if self.constant_term() != S::one() {
            return Err(Error::Domain("log needs constant term 1".into()));
        }
        let x = self.sub(&Self::one(self.degree))?;
        let mut result = Self::zero(self.degree);
        let mut power = Self::one(self.degree);
        let mut k = 1i64;
        loop {
            power = power.mul(&x)?;
            if power.is_zero() {
                break;
            }
            let sign = if k % 2 == 1 { 1 } else { -1 };
            result = result.add(&power.scale(&S::from_ratio(sign, k)))?;
            k += 1;
        }
        Ok(result)
    }

    /// `j_m`: drops all words with `‖w‖ > m`. The truncation degree is kept.
    pub fn project_jm(&self, m: usize) -> Self {
        Self {
            degree: self.degree,
            terms: self
                .terms
                .iter()
                .filter(|(w, _)| w.scaled_degree() <= m)
                .map(|(w, c)| (w.clone(), c.clone()))
                .collect(),
        }
    }

    /// `Ψ_s`: multiplies the `‖·‖`-homogeneous part of degree `k` by `s^{k/2}`.
    pub fn rescale_psi(&self, s: &S) -> Result<Self> {
        if *s <= S::zero() {
            return Err(Error::Domain("rescaling needs s > 0".into()));
        }
        let root = s.sqrt_exact().ok_or_else(|| {
            Error::Domain(format!("sqrt({s}) is not representable in this scalar mode"))
        })?;
        let mut out = Self::zero(self.degree);
        for (w, c) in &self.terms {
            let factor = root.powu(w.scaled_degree() as u32);
            out.add_term(w.clone(), c.clone() * factor);
        }
        Ok(out)
    }

    /// `⟨P, Q⟩ = Σ_w (P,w)(Q,w)`.
    pub fn inner(&self, other: &Self) -> Result<S> {
        self.check_compatible(other)?;
        let mut acc = S::zero();
        for (w, a) in &self.terms {
            if let Some(b) = other.terms.get(w) {
                acc = acc + a.clone() * b.clone();
            }
        }
        Ok(acc)
    }

    pub fn norm2(&self) -> f64 {
        self.terms.values().map(|c| c.to_f64().powi(2)).sum::<f64>().sqrt()
    }

    /// Lie bracket `[x, y] = xy - yx`.
    pub fn bracket(&self, other: &Self) -> Result<Self> {
        self.mul(other)?.sub(&other.mul(self)?)
    }

    /// Component with exactly `len` letters.
    pub fn homogeneous_by_length(&self, len: usize) -> Self {
        Self {
            degree: self.degree,
            terms: self
                .terms
                .iter()
                .filter(|(w, _)| w.len() == len)
                .map(|(w, c)| (w.clone(), c.clone()))
                .collect(),
        }
    }

    /// `true` iff every length-homogeneous component `P_n` satisfies the
    /// Dynkin-Specht-Wever criterion `Σ_w (P_n, w) r(w) = n P_n`.
    pub fn is_lie(&self) -> Result<bool> {
        if !self.constant_term().is_zero() {
            return Ok(false);
        }
        let max_len = self.terms.keys().map(Word::len).max().unwrap_or(0);
        for n in 1..=max_len {
            let part = self.homogeneous_by_length(n);
            let mut image = Self::zero(self.degree);
            for (w, c) in part.terms() {
                image = image.add(&right_nested_bracket(w, self.degree)?.scale(c))?;
            }
            if image != part.scale(&S::from_int(n as i64)) {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// `r(w) = [v_{i1}, [v_{i2}, [..., [v_{i(n-1)}, v_{in}]...]]]`.
pub fn right_nested_bracket<S: Scalar>(w: &Word, degree: usize) -> Result<TruncatedSeries<S>> {
    let letters = w.letters();
    let Some((&last, rest)) = letters.split_last() else {
        return Ok(TruncatedSeries::zero(degree));
    };
    let mut acc = TruncatedSeries::letter(last, degree);
    for &l in rest.iter().rev() {
        acc = TruncatedSeries::letter(l, degree).bracket(&acc)?;
    }
    Ok(acc)
}

impl<S: Scalar> fmt::Display for TruncatedSeries<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, (w, c)) in self.terms.iter().enumerate() {
            if k > 0 {
                write!(f, " + ")?;
            }
            if w.is_empty() && c.is_one() {
                write!(f, "1")?;
            } else if w.is_empty() {
                write!(f, "({c})")?;
            } else {
                write!(f, "({c}) {w}")?;
            }
        }
        Ok(())
    }
}

impl<S: Scalar> fmt::Debug for TruncatedSeries<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[m={}] {}", self.degree, self)
    }
}

/// A series known to be a Lie element: built from letters, linear
/// combinations, brackets and BCH products only.
#[derive(Clone, PartialEq)]
pub struct LieElement<S>(TruncatedSeries<S>);

impl<S: Scalar> fmt::Debug for LieElement<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Lie{:?}", self.0)
    }
}

impl<S: Scalar> LieElement<S> {
    pub fn zero(degree: usize) -> Self {
        Self(TruncatedSeries::zero(degree))
    }

    pub fn letter(i: u8, degree: usize) -> Self {
        Self(TruncatedSeries::letter(i, degree))
    }

    pub fn series(&self) -> &TruncatedSeries<S> {
        &self.0
    }

    pub fn into_series(self) -> TruncatedSeries<S> {
        self.0
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        Ok(Self(self.0.add(&other.0)?))
    }

    pub fn scale(&self, k: &S) -> Self {
        Self(self.0.scale(k))
    }

    pub fn bracket(&self, other: &Self) -> Result<Self> {
        Ok(Self(self.0.bracket(&other.0)?))
    }

    /// `Σ_i coeff_i · v_i`.
    pub fn linear(coeffs: &[(u8, S)], degree: usize) -> Self {
        Self(TruncatedSeries::from_terms(
            coeffs.iter().map(|(l, c)| (Word::letter(*l), c.clone())),
            degree,
        ))
    }

    pub fn right_nested(w: &Word, degree: usize) -> Result<Self> {
        Ok(Self(right_nested_bracket(w, degree)?))
    }

    pub fn exp(&self) -> Result<TruncatedSeries<S>> {
        self.0.exp()
    }

    pub fn rescale_psi(&self, s: &S) -> Result<Self> {
        Ok(Self(self.0.rescale_psi(s)?))
    }
}

/// `z2 ⊢⊣ z1 = log(exp(z2) exp(z1))`.
pub fn bch<S: Scalar>(z2: &LieElement<S>, z1: &LieElement<S>) -> Result<LieElement<S>> {
    let product = z2.exp()?.mul(&z1.exp()?)?;
    Ok(LieElement(product.log()?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;
    use proptest::prelude::*;

    type Q = BigRational;
    type Series = TruncatedSeries<Q>;

    fn q(n: i64, d: i64) -> Q {
        Q::from_ratio(n, d)
    }

    fn w(letters: &[u8]) -> Word {
        Word::from_letters(letters)
    }

    fn series(terms: &[(&[u8], Q)], m: usize) -> Series {
        Series::from_terms(terms.iter().map(|(l, c)| (w(l), c.clone())), m)
    }

    #[test]
    fn scaled_degree_examples() {
        assert_eq!(word_scaled_degree(&Word::empty()), 0);
        assert_eq!(word_scaled_degree(&w(&[1, 2])), 2);
        assert_eq!(word_scaled_degree(&w(&[0, 1, 0])), 5);
    }

    #[test]
    fn canonical_order_is_degree_then_length_then_letters() {
        let mut words = vec![w(&[0]), w(&[1, 1]), w(&[2]), w(&[1]), Word::empty(), w(&[0, 1])];
        words.sort();
        let shown: Vec<String> = words.iter().map(|x| x.to_string()).collect();
        assert_eq!(shown, ["1", "v1", "v2", "v0", "v1.v1", "v0.v1"]);
    }

    #[test]
    fn all_up_to_counts_weighted_words() {
        // f(k) = 2 f(k-1) + f(k-2) for d = 2.
        let counts = [1usize, 2, 5, 12, 29, 70];
        let words = Word::all_up_to(2, 5);
        for (k, &c) in counts.iter().enumerate() {
            assert_eq!(words.iter().filter(|x| x.scaled_degree() == k).count(), c);
        }
        assert!(words.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn mul_examples() {
        let a = series(&[(&[], q(1, 1)), (&[1], q(1, 1))], 2);
        let b = series(&[(&[], q(1, 1)), (&[2], q(1, 1))], 2);
        let expected =
            series(&[(&[], q(1, 1)), (&[1], q(1, 1)), (&[2], q(1, 1)), (&[1, 2], q(1, 1))], 2);
        assert_eq!(a.mul(&b).unwrap(), expected);

        let v1 = Series::letter(1, 3);
        assert_eq!(v1.mul(&v1).unwrap(), series(&[(&[1, 1], q(1, 1))], 3));

        let v0 = Series::letter(0, 3);
        assert!(v0.mul(&v0).unwrap().is_zero());
    }

    #[test]
    fn mixed_degrees_are_rejected() {
        let a = Series::letter(1, 3);
        let b = Series::letter(1, 4);
        assert!(matches!(a.mul(&b), Err(Error::Config(_))));
        assert!(matches!(a.add(&b), Err(Error::Config(_))));
        assert!(matches!(a.inner(&b), Err(Error::Config(_))));
    }

    #[test]
    fn exp_examples() {
        assert_eq!(Series::zero(4).exp().unwrap(), Series::one(4));
        let e = Series::letter(1, 3).exp().unwrap();
        let expected = series(
            &[(&[], q(1, 1)), (&[1], q(1, 1)), (&[1, 1], q(1, 2)), (&[1, 1, 1], q(1, 6))],
            3,
        );
        assert_eq!(e, expected);
        assert!(matches!(Series::one(3).exp(), Err(Error::Domain(_))));
    }

    #[test]
    fn log_examples() {
        assert!(Series::one(4).log().unwrap().is_zero());
        let p = series(&[(&[1], q(1, 1)), (&[2], q(1, 1))], 4);
        assert_eq!(p.exp().unwrap().log().unwrap(), p);
        let one_plus_v1 = series(&[(&[], q(1, 1)), (&[1], q(1, 1))], 4);
        assert_eq!(one_plus_v1.log().unwrap().exp().unwrap(), one_plus_v1);
        assert!(matches!(Series::zero(2).log(), Err(Error::Domain(_))));
    }

    #[test]
    fn bch_degree_two_and_identity() {
        let m = 2;
        let a = LieElement::<Q>::letter(1, m);
        assert_eq!(bch(&a, &LieElement::zero(m)).unwrap(), a);

        let v1 = LieElement::<Q>::letter(1, m);
        let v2 = LieElement::<Q>::letter(2, m);
        let expected = v1.add(&v2).unwrap().add(&v1.bracket(&v2).unwrap().scale(&q(1, 2))).unwrap();
        assert_eq!(bch(&v1, &v2).unwrap(), expected);
    }

    #[test]
    fn bch_matches_hand_expansion_through_degree_three() {
        // a + b + ½[a,b] + 1/12 [a,[a,b]] + 1/12 [b,[b,a]]
        let m = 3;
        let a = LieElement::<Q>::letter(1, m);
        let b = LieElement::<Q>::letter(2, m);
        let ab = a.bracket(&b).unwrap();
        let ba = b.bracket(&a).unwrap();
        let expected = a
            .add(&b)
            .unwrap()
            .add(&ab.scale(&q(1, 2)))
            .unwrap()
            .add(&a.bracket(&ab).unwrap().scale(&q(1, 12)))
            .unwrap()
            .add(&b.bracket(&ba).unwrap().scale(&q(1, 12)))
            .unwrap();
        assert_eq!(bch(&a, &b).unwrap(), expected);
    }

    #[test]
    fn bch_output_is_lie_through_degree_four() {
        let m = 4;
        let z1 = LieElement::<Q>::linear(&[(1, q(2, 3)), (2, q(-1, 2))], m);
        let z2 = LieElement::<Q>::linear(&[(0, q(1, 5)), (1, q(1, 1)), (2, q(3, 7))], m);
        let z = bch(&z2, &z1).unwrap();
        assert!(z.series().is_lie().unwrap());
        // A generic non-Lie polynomial fails the criterion.
        let not_lie = series(&[(&[1, 2], q(1, 1))], m);
        assert!(!not_lie.is_lie().unwrap());
    }

    #[test]
    fn projection_examples() {
        let p = series(&[(&[], q(1, 1)), (&[1], q(1, 1))], 3);
        assert_eq!(p.project_jm(0), series(&[(&[], q(1, 1))], 3));
        let p = series(&[(&[0], q(1, 1)), (&[1, 1], q(1, 1)), (&[0, 1], q(1, 1))], 4);
        assert_eq!(p.project_jm(2), series(&[(&[0], q(1, 1)), (&[1, 1], q(1, 1))], 4));
        assert_eq!(p.project_jm(2).project_jm(2), p.project_jm(2));
    }

    #[test]
    fn rescale_examples() {
        let v0 = Series::letter(0, 3);
        let v1 = Series::letter(1, 3);
        assert_eq!(v0.rescale_psi(&q(1, 1)).unwrap(), v0);
        assert_eq!(v0.rescale_psi(&q(4, 9)).unwrap(), v0.scale(&q(4, 9)));
        assert_eq!(v1.rescale_psi(&q(4, 9)).unwrap(), v1.scale(&q(2, 3)));
        assert!(matches!(v1.rescale_psi(&q(2, 1)), Err(Error::Domain(_))));
        let f = TruncatedSeries::<f64>::letter(1, 3).rescale_psi(&2.0).unwrap();
        assert!((f.coeff(&w(&[1])) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn inner_examples() {
        let m = 2;
        let v1 = Series::letter(1, m);
        let v2 = Series::letter(2, m);
        assert_eq!(v1.inner(&v1).unwrap(), q(1, 1));
        assert_eq!(v1.inner(&v2).unwrap(), q(0, 1));
        let a = series(&[(&[], q(1, 1)), (&[1], q(2, 1))], m);
        let b = series(&[(&[], q(3, 1)), (&[1], q(1, 1))], m);
        assert_eq!(a.inner(&b).unwrap(), q(5, 1));
        assert!((a.norm2() - 5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn display_uses_canonical_order() {
        let p = series(&[(&[0], q(1, 1)), (&[1, 1], q(1, 2)), (&[], q(1, 1))], 4);
        assert_eq!(p.to_string(), "1 + (1) v0 + (1/2) v1.v1");
    }

    fn arb_series(m: usize, constant: bool) -> impl Strategy<Value = Series> {
        let words = Word::all_up_to(2, m);
        proptest::collection::vec((-4i64..=4, 1i64..=4), words.len()).prop_map(move |cs| {
            Series::from_terms(
                words
                    .iter()
                    .zip(cs)
                    .filter(|(w, _)| constant || !w.is_empty())
                    .map(|(w, (n, d))| (w.clone(), q(n, d))),
                m,
            )
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn log_inverts_exp(p in arb_series(4, false)) {
            prop_assert_eq!(p.exp().unwrap().log().unwrap(), p);
        }

        #[test]
        fn mul_is_associative_and_distributive(
            a in arb_series(4, true), b in arb_series(4, true), c in arb_series(4, true)
        ) {
            prop_assert_eq!(a.mul(&b).unwrap().mul(&c).unwrap(), a.mul(&b.mul(&c).unwrap()).unwrap());
            prop_assert_eq!(
                a.mul(&b.add(&c).unwrap()).unwrap(),
                a.mul(&b).unwrap().add(&a.mul(&c).unwrap()).unwrap()
            );
        }

        #[test]
        fn rescaling_composes_and_commutes_with_projection(
            p in arb_series(4, true), sn in 1i64..5, tn in 1i64..5, m in 0usize..5
        ) {
            let s = q(sn * sn, 4);
            let t = q(tn * tn, 9);
            prop_assert_eq!(
                p.rescale_psi(&t).unwrap().rescale_psi(&s).unwrap(),
                p.rescale_psi(&(s.clone() * t)).unwrap()
            );
            prop_assert_eq!(p.rescale_psi(&s).unwrap().project_jm(m), p.project_jm(m).rescale_psi(&s).unwrap());
        }

        #[test]
        fn bch_is_associative(
            a in proptest::collection::vec(-3i64..=3, 3),
            b in proptest::collection::vec(-3i64..=3, 3),
            c in proptest::collection::vec(-3i64..=3, 3),
        ) {
            let m = 4;
            let mk = |v: &[i64]| LieElement::<Q>::linear(
                &[(0, q(v[0], 2)), (1, q(v[1], 3)), (2, q(v[2], 1))], m);
            let (z1, z2, z3) = (mk(&a), mk(&b), mk(&c));
            let left = bch(&bch(&z1, &z2).unwrap(), &z3).unwrap();
            let right = bch(&z1, &bch(&z2, &z3).unwrap()).unwrap();
            prop_assert_eq!(left, right);
        }
    }

    #[test]
    fn float_log_exp_round_trip() {
        let m = 5;
        let p = TruncatedSeries::<f64>::from_terms(
            Word::all_up_to(2, m)
                .into_iter()
                .filter(|w| !w.is_empty())
                .enumerate()
                .map(|(k, w)| (w, 0.1 * ((k % 7) as f64 - 3.0))),
            m,
        );
        let back = p.exp().unwrap().log().unwrap();
        for (w, c) in p.terms() {
            assert!((back.coeff(w) - c).abs() <= 1e-12 * c.abs().max(1.0));
        }
    }
}
