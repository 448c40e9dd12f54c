//! Non-labelled rooted trees and exact Runge-Kutta order conditions.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::scalar::{parse_rational, Scalar};

/// A rooted tree in canonical form: children are kept sorted, so two trees
/// compare equal exactly when they are isomorphic.
///
/// The derived ordering compares the order `r(t)` first, then the sorted
/// child lists lexicographically.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Tree {
    order: usize,
    children: Vec<Tree>,
}

impl Tree {
    /// The single-vertex tree `τ`.
    pub fn leaf() -> Self {
        Self { order: 1, children: Vec::new() }
    }

    /// `[t1 ... tl]`: a new root grafted onto the given subtrees.
    pub fn graft(mut children: Vec<Tree>) -> Self {
        children.sort();
        let order = 1 + children.iter().map(|c| c.order).sum::<usize>();
        Self { order, children }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn children(&self) -> &[Tree] {
        &self.children
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// Children grouped into (subtree, multiplicity), in canonical order.
    pub fn child_multiplicities(&self) -> Vec<(&Tree, u32)> {
        let mut groups: Vec<(&Tree, u32)> = Vec::new();
        for c in &self.children {
            match groups.last_mut() {
                Some((t, k)) if *t == c => *k += 1,
                _ => groups.push((c, 1)),
            }
        }
        groups
    }
}

impl fmt::Display for Tree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_leaf() {
            return f.write_str("τ");
        }
        f.write_str("[")?;
        for c in &self.children {
            write!(f, "{c}")?;
        }
        f.write_str("]")
    }
}

impl fmt::Debug for Tree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// All trees with `1 <= r(t) <= max_order`; entry `k` holds the trees of order `k + 1`,
/// each group in canonical order.
pub fn enumerate_trees(max_order: usize) -> Vec<Vec<Tree>> {
    let mut by_order: Vec<Vec<Tree>> = Vec::with_capacity(max_order);
    for n in 1..=max_order {
        let smaller: Vec<&Tree> = by_order.iter().flatten().collect();
        let mut trees = Vec::new();
        let mut picked = Vec::new();
        multisets(&smaller, 0, n - 1, &mut picked, &mut trees);
        trees.sort();
        by_order.push(trees);
    }
    by_order
}

// Child multisets of total order `remaining`, drawn with non-decreasing index
// so each multiset appears once.
fn multisets<'a>(
    pool: &[&'a Tree],
    start: usize,
    remaining: usize,
    picked: &mut Vec<&'a Tree>,
    out: &mut Vec<Tree>,
) {
    if remaining == 0 {
        out.push(Tree::graft(picked.iter().map(|t| (*t).clone()).collect()));
        return;
    }
    for i in start..pool.len() {
        if pool[i].order <= remaining {
            picked.push(pool[i]);
            multisets(pool, i, remaining - pool[i].order, picked, out);
            picked.pop();
        }
    }
}

/// All trees with `r(t) <= max_order`, flattened in canonical order.
pub fn trees_up_to(max_order: usize) -> Vec<Tree> {
    enumerate_trees(max_order).into_iter().flatten().collect()
}

fn factorial(n: u64) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, k| acc * BigInt::from(k))
}

/// Symmetry factor: `σ(τ) = 1`, `σ([t1^{m1} ... tk^{mk}]) = Π m_i! σ(t_i)^{m_i}`.
pub fn sigma(t: &Tree) -> BigInt {
    t.child_multiplicities()
        .into_iter()
        .fold(BigInt::one(), |acc, (c, m)| acc * factorial(m as u64) * num_traits::pow(sigma(c), m as usize))
}

/// Density: `γ(τ) = 1`, `γ([t1 ... tl]) = r(t) Π γ(t_i)`.
pub fn gamma(t: &Tree) -> BigInt {
    t.children.iter().fold(BigInt::from(t.order), |acc, c| acc * gamma(c))
}

/// Number of monotone labellings, `r(t)! / (σ(t) γ(t))`.
pub fn alpha(t: &Tree) -> BigInt {
    factorial(t.order as u64) / (sigma(t) * gamma(t))
}

/// An explicit Runge-Kutta method with exact rational coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct ButcherTableau {
    name: String,
    a: Vec<Vec<BigRational>>,
    b: Vec<BigRational>,
    declared_order: usize,
}

impl ButcherTableau {
    /// Validates shape and strict lower-triangularity.
    pub fn new(
        name: impl Into<String>,
        a: Vec<Vec<BigRational>>,
        b: Vec<BigRational>,
        declared_order: usize,
    ) -> Result<Self> {
        let k = b.len();
        if k == 0 {
            return Err(Error::Config("tableau needs at least one stage".into()));
        }
        if a.len() != k {
            return Err(Error::Dimension { expected: k, got: a.len() });
        }
        for (i, row) in a.iter().enumerate() {
            if row.len() != k {
                return Err(Error::Dimension { expected: k, got: row.len() });
            }
            if let Some(j) = (i..k).find(|&j| !row[j].is_zero()) {
                return Err(Error::Config(format!("tableau is not explicit: a[{}][{}] != 0", i + 1, j + 1)));
            }
        }
        Ok(Self { name: name.into(), a, b, declared_order })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn stages(&self) -> usize {
        self.b.len()
    }

    pub fn a(&self) -> &[Vec<BigRational>] {
        &self.a
    }

    pub fn b(&self) -> &[BigRational] {
        &self.b
    }

    pub fn declared_order(&self) -> usize {
        self.declared_order
    }

    /// Stage nodes `c_i = Σ_j a_ij`.
    pub fn nodes(&self) -> Vec<BigRational> {
        self.a.iter().map(|row| row.iter().fold(BigRational::zero(), |s, x| s + x)).collect()
    }

    /// Reads `{"name": .., "order": .., "a": [[..]], "b": [..]}` where entries are
    /// rational strings such as `"11/64"` or integers. `a` may be given as the
    /// full square matrix or as its strictly lower rows (row `i` of length `i`).
    pub fn from_json(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text)?;
        let name = v.get("name").and_then(Value::as_str).unwrap_or("custom").to_string();
        let order = v
            .get("order")
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::Parse("missing integer field `order`".into()))?
            as usize;
        let b: Vec<BigRational> = v
            .get("b")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Parse("missing array field `b`".into()))?
            .iter()
            .map(json_rational)
            .collect::<Result<_>>()?;
        let k = b.len();
        let rows = v
            .get("a")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Parse("missing array field `a`".into()))?;
        let mut a = Vec::with_capacity(rows.len());
        for row in rows {
            let mut entries: Vec<BigRational> = row
                .as_array()
                .ok_or_else(|| Error::Parse("rows of `a` must be arrays".into()))?
                .iter()
                .map(json_rational)
                .collect::<Result<_>>()?;
            if entries.len() < k {
                entries.resize(k, BigRational::zero());
            }
            a.push(entries);
        }
        Self::new(name, a, b, order)
    }

    pub fn to_json(&self) -> String {
        let a: Vec<Vec<String>> =
            self.a.iter().enumerate().map(|(i, row)| row[..i].iter().map(|x| x.to_string()).collect()).collect();
        let b: Vec<String> = self.b.iter().map(|x| x.to_string()).collect();
        serde_json::json!({ "name": self.name, "order": self.declared_order, "a": a, "b": b }).to_string()
    }

    /// One of the built-in methods: `rk5-butcher` (6 stages) or `rk7-butcher` (9 stages).
    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "rk5-butcher" => Ok(rk5_butcher()),
            "rk7-butcher" => Ok(rk7_butcher()),
            other => Err(Error::UnknownTableau(other.to_string())),
        }
    }

    pub const BUILTIN_NAMES: [&'static str; 2] = ["rk5-butcher", "rk7-butcher"];

    /// A built-in name, or else the path of a JSON tableau file.
    pub fn load(name_or_path: &str) -> Result<Self> {
        if Self::BUILTIN_NAMES.contains(&name_or_path) {
            return Self::builtin(name_or_path);
        }
        let path = std::path::Path::new(name_or_path);
        if !path.exists() {
            return Err(Error::UnknownTableau(name_or_path.to_string()));
        }
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn json_rational(v: &Value) -> Result<BigRational> {
    match v {
        Value::String(s) => parse_rational(s).ok_or_else(|| Error::Parse(format!("bad rational `{s}`"))),
        Value::Number(n) => n
            .as_i64()
            .map(|k| BigRational::from_integer(k.into()))
            .ok_or_else(|| Error::Parse(format!("non-integer number {n}; use a rational string"))),
        other => Err(Error::Parse(format!("expected a rational, found {other}"))),
    }
}

fn lower(k: usize, entries: &[(usize, usize, i64, i64)], b: &[(i64, i64)], name: &str, order: usize) -> ButcherTableau {
    let mut a = vec![vec![BigRational::zero(); k]; k];
    for &(i, j, n, d) in entries {
        a[i - 1][j - 1] = BigRational::from_ratio(n, d);
    }
    let b = b.iter().map(|&(n, d)| BigRational::from_ratio(n, d)).collect();
    ButcherTableau::new(name, a, b, order).expect("built-in tableau is well formed")
}

fn rk5_butcher() -> ButcherTableau {
    lower(
        6,
        &[
            (2, 1, 2, 5),
            (3, 1, 11, 64),
            (3, 2, 5, 64),
            (4, 3, 1, 2),
            (5, 1, 3, 64),
            (5, 2, -15, 64),
            (5, 3, 3, 8),
            (5, 4, 9, 16),
            (6, 2, 5, 7),
            (6, 3, 6, 7),
            (6, 4, -12, 7),
            (6, 5, 8, 7),
        ],
        &[(7, 90), (0, 1), (32, 90), (12, 90), (32, 90), (7, 90)],
        "rk5-butcher",
        5,
    )
}

fn rk7_butcher() -> ButcherTableau {
    lower(
        9,
        &[
            (2, 1, 1, 6),
            (3, 2, 1, 3),
            (4, 1, 1, 8),
            (4, 3, 3, 8),
            (5, 1, 148, 1331),
            (5, 3, 150, 1331),
            (5, 4, -56, 1331),
            (6, 1, -404, 243),
            (6, 3, -170, 27),
            (6, 4, 4024, 1701),
            (6, 5, 10648, 1701),
            (7, 1, 2466, 2401),
            (7, 3, 1242, 343),
            (7, 4, -19176, 16807),
            (7, 5, -51909, 16807),
            (7, 6, 1053, 2401),
            (8, 1, 5, 154),
            (8, 4, 96, 539),
            (8, 5, -1815, 20384),
            (8, 6, -405, 2464),
            (8, 7, 49, 1144),
            (9, 1, -113, 32),
            (9, 3, -195, 22),
            (9, 4, 32, 7),
            (9, 5, 29403, 3584),
            (9, 6, -729, 512),
            (9, 7, 1029, 1408),
            (9, 8, 21, 16),
        ],
        &[
            (0, 1),
            (0, 1),
            (0, 1),
            (32, 105),
            (1771561, 6289920),
            (243, 2560),
            (16807, 74880),
            (77, 1440),
            (11, 270),
        ],
        "rk7-butcher",
        7,
    )
}

/// Derivative weights: `ζ_i([t1 ... tl]) = Σ_j a_ij Π_k ζ_j(t_k)`, with the
/// empty product giving `ζ_i(τ) = Σ_j a_ij`.
pub fn elementary_weight(t: &Tree, tableau: &ButcherTableau) -> Vec<BigRational> {
    let inner = child_products(t, tableau);
    tableau
        .a
        .iter()
        .map(|row| row.iter().zip(&inner).fold(BigRational::zero(), |s, (a, p)| s + a * p))
        .collect()
}

// (Π_k ζ_j(t_k))_j over the children of t.
fn child_products(t: &Tree, tableau: &ButcherTableau) -> Vec<BigRational> {
    let mut prod = vec![BigRational::one(); tableau.stages()];
    for c in &t.children {
        for (p, z) in prod.iter_mut().zip(elementary_weight(c, tableau)) {
            *p *= z;
        }
    }
    prod
}

/// One order condition `α(t)/r(t)! = Σ_i b_i Π_k ζ_i(t_k) / σ(t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct OrderCondition {
    pub tree: Tree,
    pub lhs: BigRational,
    pub rhs: BigRational,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OrderReport {
    pub order: usize,
    pub conditions: Vec<OrderCondition>,
}

impl OrderReport {
    pub fn all_pass(&self) -> bool {
        self.conditions.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &OrderCondition> {
        self.conditions.iter().filter(|c| !c.pass)
    }
}

/// Checks every tree with `r(t) <= m` in exact arithmetic.
pub fn check_order(tableau: &ButcherTableau, m: usize) -> OrderReport {
    let conditions = trees_up_to(m)
        .into_iter()
        .map(|tree| {
            let lhs = BigRational::new(alpha(&tree), factorial(tree.order as u64));
            let weights = child_products(&tree, tableau);
            let sum = tableau.b.iter().zip(&weights).fold(BigRational::zero(), |s, (b, w)| s + b * w);
            let rhs = sum / BigRational::from_integer(sigma(&tree));
            let pass = lhs == rhs;
            OrderCondition { tree, lhs, rhs, pass }
        })
        .collect();
    OrderReport { order: m, conditions }
}
