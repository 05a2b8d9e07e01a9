//! Exhaustive enumeration of the coordinate space for tiny `n`, in exact
//! rational arithmetic.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::graph::MultiGraph;
use crate::model::{attachment_law_with, resolve_targets, ModelParams};
use crate::stats::count_tables;

/// Largest outcome space enumerated: `1 * 3 * 5 * 7 * 9 * 11` (n = 6).
pub const MAX_EXACT_OUTCOMES: u64 = 10_395;

/// First and second moments of one count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactMoments {
    pub mean: BigRational,
    pub second: BigRational,
}

impl ExactMoments {
    fn zero() -> Self {
        Self {
            mean: BigRational::zero(),
            second: BigRational::zero(),
        }
    }

    fn add(&mut self, weight: &BigRational, value: u64) {
        if value == 0 {
            return;
        }
        let v = BigRational::from_integer(BigInt::from(value));
        let wv = weight * &v;
        self.second += &wv * &v;
        self.mean += wv;
    }

    pub fn mean_f64(&self) -> f64 {
        self.mean.to_f64().unwrap_or(f64::NAN)
    }

    pub fn variance(&self) -> BigRational {
        &self.second - &self.mean * &self.mean
    }

    pub fn sd_f64(&self) -> f64 {
        self.variance().to_f64().unwrap_or(f64::NAN).max(0.0).sqrt()
    }
}

/// Exact expectations of the count families of H_{a,1}^n.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactExpectations {
    pub a: BigRational,
    pub n: u32,
    pub outcomes: u64,
    /// Indexed by `k = 0 ..= 2n`.
    pub y: Vec<ExactMoments>,
    pub x: Vec<ExactMoments>,
    pub n_cells: BTreeMap<(u32, u32), ExactMoments>,
    pub p_cells: BTreeMap<(u32, u32), ExactMoments>,
}

impl ExactExpectations {
    pub fn y(&self, k: u32) -> Option<&ExactMoments> {
        self.y.get(k as usize)
    }

    pub fn x(&self, k: u32) -> Option<&ExactMoments> {
        self.x.get(k as usize)
    }
}

fn exact_a(a: f64) -> Result<BigRational> {
    BigRational::from_float(a).ok_or_else(|| Error::Parameter(format!("a = {a} is not finite")))
}

fn outcome_count(n: u32) -> Result<u64> {
    let mut total: u64 = 1;
    for i in 1..=n as u64 {
        total = total.saturating_mul(2 * i - 1);
        if total > MAX_EXACT_OUTCOMES {
            return Err(Error::Budget(format!(
                "n = {n} has more than {MAX_EXACT_OUTCOMES} coordinate outcomes"
            )));
        }
    }
    Ok(total)
}

/// Per-coordinate weights `(odd, even)`: `a/((a+1)i-1)` and `1/((a+1)i-1)`.
fn coordinate_weights(a: &BigRational, n: u32) -> Vec<(BigRational, BigRational)> {
    (1..=n)
        .map(|i| {
            let total =
                (a + BigRational::one()) * BigRational::from_integer(i.into()) - BigRational::one();
            (a / &total, BigRational::one() / total)
        })
        .collect()
}

/// Calls `visit(xi, weight)` for every coordinate vector of length `n`.
fn for_each_outcome(a: &BigRational, n: u32, mut visit: impl FnMut(&[u32], &BigRational)) {
    fn recurse(
        weights: &[(BigRational, BigRational)],
        xi: &mut Vec<u32>,
        weight: &BigRational,
        visit: &mut dyn FnMut(&[u32], &BigRational),
    ) {
        let i = xi.len() as u32 + 1;
        if i as usize > weights.len() {
            visit(xi, weight);
            return;
        }
        if i == 1 {
            xi.push(1);
            recurse(weights, xi, weight, visit);
            xi.pop();
            return;
        }
        let (odd, even) = &weights[i as usize - 1];
        for value in 1..=2 * i - 1 {
            let w = if value % 2 == 1 {
                weight * odd
            } else {
                weight * even
            };
            xi.push(value);
            recurse(weights, xi, &w, visit);
            xi.pop();
        }
    }
    let weights = coordinate_weights(a, n);
    let mut xi = Vec::with_capacity(n as usize);
    recurse(&weights, &mut xi, &BigRational::one(), &mut visit);
}

fn chain_graph(targets: &[u32]) -> MultiGraph {
    let edges = targets
        .iter()
        .enumerate()
        .map(|(i, &t)| (i as u32 + 1, t))
        .collect();
    MultiGraph::new(targets.len() as u32, edges).expect("targets never exceed their index")
}

/// Exact moments of Y, X, N and P over the full coordinate space (`m = 1`).
pub fn exact_small_n(params: &ModelParams) -> Result<ExactExpectations> {
    params.validate()?;
    if params.m != 1 {
        return Err(Error::Unsupported("exact enumeration needs m = 1".into()));
    }
    let n = params.n;
    let outcomes = outcome_count(n)?;
    let a = exact_a(params.a)?;
    let width = 2 * n as usize + 1;
    let mut y = vec![ExactMoments::zero(); width];
    let mut x = vec![ExactMoments::zero(); width];
    let mut n_cells: BTreeMap<(u32, u32), ExactMoments> = BTreeMap::new();
    let mut p_cells: BTreeMap<(u32, u32), ExactMoments> = BTreeMap::new();
    for_each_outcome(&a, n, |xi, w| {
        let tables = count_tables(&chain_graph(&resolve_targets(xi)));
        let y_dense = tables.y_dense();
        for k in 0..width {
            y[k].add(w, y_dense.get(k).copied().unwrap_or(0));
            x[k].add(w, tables.x(k as u32));
        }
        for (&key, &c) in &tables.n {
            n_cells
                .entry(key)
                .or_insert_with(ExactMoments::zero)
                .add(w, c);
        }
        for (&key, &c) in &tables.p {
            p_cells
                .entry(key)
                .or_insert_with(ExactMoments::zero)
                .add(w, c);
        }
    });
    Ok(ExactExpectations {
        a,
        n,
        outcomes,
        y,
        x,
        n_cells,
        p_cells,
    })
}

/// Law of the resolved target vector induced by the independent coordinates.
pub fn sampler_distribution(a: &BigRational, n: u32) -> Result<BTreeMap<Vec<u32>, BigRational>> {
    if *a <= BigRational::zero() || n == 0 {
        return Err(Error::Parameter("need a > 0 and n >= 1".into()));
    }
    outcome_count(n)?;
    let mut law: BTreeMap<Vec<u32>, BigRational> = BTreeMap::new();
    for_each_outcome(a, n, |xi, w| {
        *law.entry(resolve_targets(xi))
            .or_insert_with(BigRational::zero) += w;
    });
    Ok(law)
}

/// Law of the target vector when vertex `t` attaches to `s < t` with probability
/// `(d(s) - 1 + a)/((a+1)t - 1)` and to itself with `a/((a+1)t - 1)`.
pub fn law_distribution(a: &BigRational, n: u32) -> Result<BTreeMap<Vec<u32>, BigRational>> {
    if *a <= BigRational::zero() || n == 0 {
        return Err(Error::Parameter("need a > 0 and n >= 1".into()));
    }
    outcome_count(n)?;
    fn recurse(
        a: &BigRational,
        n: u32,
        targets: &mut Vec<u32>,
        weight: BigRational,
        out: &mut BTreeMap<Vec<u32>, BigRational>,
    ) -> Result<()> {
        let t = targets.len() as u32 + 1;
        if t > n {
            *out.entry(targets.clone()).or_insert_with(BigRational::zero) += weight;
            return Ok(());
        }
        let law = attachment_law_with(a, 1, &chain_graph(targets), t)?;
        for (s, p) in law.into_iter().enumerate() {
            if p.is_zero() {
                continue;
            }
            targets.push(s as u32 + 1);
            recurse(a, n, targets, &weight * p, out)?;
            targets.pop();
        }
        Ok(())
    }
    let mut out = BTreeMap::new();
    recurse(a, n, &mut Vec::new(), BigRational::one(), &mut out)?;
    Ok(out)
}
