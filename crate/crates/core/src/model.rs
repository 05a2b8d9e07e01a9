//! Independent-coordinate construction of the Buckley–Osthus graph.
//!
//! Coordinate `i` takes a value in `1..=2i-1`. An odd value `2j-1` attaches the
//! edge of `i` directly to vertex `j`; an even value `2j` copies wherever the
//! edge of coordinate `j` ended up. Targets are resolved eagerly in one forward
//! pass, so a sequence of `N` coordinates costs `O(N)`.

use num_traits::{FromPrimitive, Num};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::MultiGraph;

/// Generator used for every realization. Seeded from a single `u64`.
pub type ModelRng = ChaCha8Rng;

/// Largest supported coordinate count; `2N - 1` must fit in a `u32`.
pub const MAX_COORDINATES: u64 = (1 << 31) - 1;

pub fn rng_from_seed(seed: u64) -> ModelRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Initial attractiveness.
    pub a: f64,
    /// Edges per collapsed vertex.
    pub m: u32,
    /// Vertices of the collapsed graph.
    pub n: u32,
}

impl ModelParams {
    pub fn new(a: f64, m: u32, n: u32) -> Result<Self> {
        let params = Self { a, m, n };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a.is_finite() && self.a > 0.0) {
            return Err(Error::Parameter(format!(
                "a must be positive, got {}",
                self.a
            )));
        }
        if self.m == 0 || self.n == 0 {
            return Err(Error::Parameter(format!(
                "m and n must be at least 1, got m={} n={}",
                self.m, self.n
            )));
        }
        if self.coordinates() > MAX_COORDINATES {
            return Err(Error::Parameter(format!(
                "m*n = {} exceeds {MAX_COORDINATES}",
                self.coordinates()
            )));
        }
        Ok(())
    }

    /// Number of coordinates `N = m * n` of the uncollapsed chain.
    pub fn coordinates(&self) -> u64 {
        self.m as u64 * self.n as u64
    }
}

/// Draws coordinate `i`: `2j-1` with weight `a` for `j` in `1..=i`, and `2j`
/// with weight 1 for `j` in `1..i`, out of a total mass `(a+1)i - 1`.
pub fn sample_xi<R: Rng + ?Sized>(i: u32, a: f64, rng: &mut R) -> Result<u32> {
    if i == 0 || i as u64 > MAX_COORDINATES {
        return Err(Error::Parameter(format!(
            "coordinate index {i} out of range"
        )));
    }
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::Parameter(format!("a must be positive, got {a}")));
    }
    Ok(draw_xi(i, a, rng))
}

#[inline]
pub(crate) fn draw_xi<R: Rng + ?Sized>(i: u32, a: f64, rng: &mut R) -> u32 {
    if i == 1 {
        return 1;
    }
    let fi = i as f64;
    let u = rng.gen::<f64>() * ((a + 1.0) * fi - 1.0);
    let odd_mass = a * fi;
    if u < odd_mass {
        // floor(u / a) can round up to i at the very top of the range
        let j = ((u / a) as u32).min(i - 1);
        2 * j + 1
    } else {
        let j = ((u - odd_mass) as u32).min(i - 2);
        2 * j + 2
    }
}

/// Resolves every coordinate to the vertex its chain ends at.
pub fn resolve_targets(xi: &[u32]) -> Vec<u32> {
    let mut target = Vec::with_capacity(xi.len());
    for &x in xi {
        target.push(resolve_one(x, &target));
    }
    target
}

#[inline]
fn resolve_one(x: u32, resolved: &[u32]) -> u32 {
    if x % 2 == 1 {
        x.div_ceil(2)
    } else {
        resolved[(x / 2 - 1) as usize]
    }
}

/// Sampled coordinates together with their resolved attachment targets.
///
/// Both vectors are stored 0-based; the accessors take the 1-based coordinate index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct XiSequence {
    xi: Vec<u32>,
    target: Vec<u32>,
    seed: u64,
}

impl XiSequence {
    /// Validates explicit coordinate values and resolves their targets.
    pub fn from_xi(xi: Vec<u32>, seed: u64) -> Result<Self> {
        if xi.is_empty() {
            return Err(Error::Consistency("empty coordinate sequence".into()));
        }
        if xi.len() as u64 > MAX_COORDINATES {
            return Err(Error::Budget(format!("{} coordinates", xi.len())));
        }
        for (idx, &x) in xi.iter().enumerate() {
            let i = idx as u32 + 1;
            if x == 0 || x > 2 * i - 1 {
                return Err(Error::Consistency(format!(
                    "xi[{i}] = {x} outside 1..={}",
                    2 * i - 1
                )));
            }
        }
        let target = resolve_targets(&xi);
        Ok(Self { xi, target, seed })
    }

    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn xi(&self, i: u32) -> u32 {
        self.xi[i as usize - 1]
    }

    pub fn target(&self, i: u32) -> u32 {
        self.target[i as usize - 1]
    }

    pub fn xi_values(&self) -> &[u32] {
        &self.xi
    }

    pub fn targets(&self) -> &[u32] {
        &self.target
    }

    /// Copy with coordinate `i` replaced; targets before `i` are reused and the
    /// suffix is re-resolved.
    pub fn with_coordinate(&self, i: u32, value: u32) -> Result<Self> {
        if i == 0 || i as usize > self.xi.len() {
            return Err(Error::Domain(format!(
                "coordinate {i} outside 1..={}",
                self.xi.len()
            )));
        }
        if value == 0 || value > 2 * i - 1 {
            return Err(Error::Domain(format!(
                "value {value} for coordinate {i} outside 1..={}",
                2 * i - 1
            )));
        }
        let mut xi = self.xi.clone();
        xi[i as usize - 1] = value;
        let start = i as usize - 1;
        let mut target = Vec::with_capacity(xi.len());
        target.extend_from_slice(&self.target[..start]);
        for &x in &xi[start..] {
            let t = resolve_one(x, &target);
            target.push(t);
        }
        Ok(Self {
            xi,
            target,
            seed: self.seed,
        })
    }
}

/// Samples all `m*n` coordinates from `seed`, resolving targets in the same pass.
pub fn build_sequence(params: &ModelParams, seed: u64) -> Result<XiSequence> {
    params.validate()?;
    let mut rng = rng_from_seed(seed);
    Ok(sample_sequence(
        params.coordinates() as u32,
        params.a,
        seed,
        &mut rng,
    ))
}

pub(crate) fn sample_sequence<R: Rng + ?Sized>(
    count: u32,
    a: f64,
    seed: u64,
    rng: &mut R,
) -> XiSequence {
    let mut xi = Vec::with_capacity(count as usize);
    let mut target = Vec::with_capacity(count as usize);
    for i in 1..=count {
        let x = draw_xi(i, a, rng);
        xi.push(x);
        let t = resolve_one(x, &target);
        target.push(t);
    }
    XiSequence { xi, target, seed }
}

/// Builds `H_{a,m}^n`: coordinate `i` becomes the edge `(ceil(i/m), ceil(target[i]/m))`.
pub fn materialize(seq: &XiSequence, params: &ModelParams) -> Result<MultiGraph> {
    params.validate()?;
    if seq.len() as u64 != params.coordinates() {
        return Err(Error::Consistency(format!(
            "sequence has {} coordinates but m*n = {}",
            seq.len(),
            params.coordinates()
        )));
    }
    let m = params.m;
    let edges = seq
        .target
        .iter()
        .enumerate()
        .map(|(idx, &t)| (idx as u32 / m + 1, (t - 1) / m + 1))
        .collect();
    Ok(MultiGraph::from_valid_edges(params.n, edges))
}

/// Conditional law of the vertex receiving the edge of vertex `t`, given a
/// realization of the first `t - 1` steps (`m = 1` only). Entry `s - 1` holds
/// `Prob(s)`.
pub fn attachment_law(params: &ModelParams, prefix: &MultiGraph, t: u32) -> Result<Vec<f64>> {
    params.validate()?;
    attachment_law_with(&params.a, params.m, prefix, t)
}

/// Same law evaluated in any numeric field, e.g. exact rationals.
pub fn attachment_law_with<T>(a: &T, m: u32, prefix: &MultiGraph, t: u32) -> Result<Vec<T>>
where
    T: Num + Clone + FromPrimitive,
{
    if m != 1 {
        return Err(Error::Unsupported(
            "attachment law is defined for the uncollapsed chain (m = 1)".into(),
        ));
    }
    if t == 0 {
        return Err(Error::Domain("step t must be at least 1".into()));
    }
    if prefix.vertex_count() != t - 1 || prefix.edge_count() != (t - 1) as usize {
        return Err(Error::Consistency(format!(
            "prefix has {} vertices and {} edges, expected {} of each",
            prefix.vertex_count(),
            prefix.edge_count(),
            t - 1
        )));
    }
    let from = |x: u64| T::from_u64(x).expect("integer is representable");
    let total = (a.clone() + T::one()) * from(t as u64) - T::one();
    let mut law: Vec<T> = (1..t)
        .map(|s| (from(prefix.degree(s) as u64) - T::one() + a.clone()) / total.clone())
        .collect();
    law.push(a.clone() / total);
    Ok(law)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;
    use num_rational::BigRational;

    fn params(a: f64, m: u32, n: u32) -> ModelParams {
        ModelParams::new(a, m, n).unwrap()
    }

    #[test]
    fn params_validation() {
        assert!(ModelParams::new(0.0, 1, 1).is_err());
        assert!(ModelParams::new(-1.0, 1, 1).is_err());
        assert!(ModelParams::new(f64::NAN, 1, 1).is_err());
        assert!(ModelParams::new(1.0, 0, 1).is_err());
        assert!(ModelParams::new(1.0, 1, 0).is_err());
        assert!(ModelParams::new(1.0, 1 << 16, 1 << 16).is_err());
        assert!(ModelParams::new(0.5, 3, 7).is_ok());
    }

    #[test]
    fn first_coordinate_is_forced() {
        let mut rng = rng_from_seed(1);
        for _ in 0..100 {
            assert_eq!(sample_xi(1, 2.5, &mut rng).unwrap(), 1);
        }
        assert!(sample_xi(0, 1.0, &mut rng).is_err());
        assert!(sample_xi(3, 0.0, &mut rng).is_err());
    }

    fn chi_square_uniform(i: u32, a: f64, draws: usize, seed: u64) -> f64 {
        let mut rng = rng_from_seed(seed);
        let cells = (2 * i - 1) as usize;
        let mut counts = vec![0usize; cells];
        for _ in 0..draws {
            counts[sample_xi(i, a, &mut rng).unwrap() as usize - 1] += 1;
        }
        let expected = draws as f64 / cells as f64;
        counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum()
    }

    #[test]
    fn a_equal_one_gives_uniform_coordinates() {
        // i=2: 2 dof, i=3: 4 dof; 0.999 quantiles are 13.8 and 18.5
        assert!(chi_square_uniform(2, 1.0, 1_000_000, 7) < 13.8);
        assert!(chi_square_uniform(3, 1.0, 1_000_000, 8) < 18.5);
    }

    #[test]
    fn coordinate_law_for_general_a() {
        let (i, a, draws) = (4u32, 2.5, 400_000usize);
        let mut rng = rng_from_seed(99);
        let mut counts = vec![0usize; (2 * i - 1) as usize];
        for _ in 0..draws {
            counts[sample_xi(i, a, &mut rng).unwrap() as usize - 1] += 1;
        }
        let total = (a + 1.0) * i as f64 - 1.0;
        for (idx, &c) in counts.iter().enumerate() {
            let value = idx + 1;
            let p = if value % 2 == 1 {
                a / total
            } else {
                1.0 / total
            };
            let sd = (p * (1.0 - p) / draws as f64).sqrt();
            assert!(
                (c as f64 / draws as f64 - p).abs() < 5.0 * sd,
                "value {value}"
            );
        }
    }

    #[test]
    fn single_vertex_is_one_loop() {
        let p = params(1.0, 1, 1);
        let seq = build_sequence(&p, 12345).unwrap();
        assert_eq!(seq.xi_values(), &[1]);
        assert_eq!(seq.targets(), &[1]);
        let g = materialize(&seq, &p).unwrap();
        assert_eq!(g.edges(), &[(1, 1)]);
    }

    #[test]
    fn chains_resolve_through_even_values() {
        let seq = XiSequence::from_xi(vec![1, 2, 4, 3], 0).unwrap();
        assert_eq!(seq.targets(), &[1, 1, 1, 2]);
        assert!(XiSequence::from_xi(vec![1, 4], 0).is_err());
        assert!(XiSequence::from_xi(vec![2], 0).is_err());
        assert!(XiSequence::from_xi(vec![], 0).is_err());
    }

    #[test]
    fn materialize_examples() {
        let seq = XiSequence::from_xi(vec![1, 1, 3, 5], 0).unwrap();
        let g = materialize(&seq, &params(1.0, 1, 4)).unwrap();
        assert_eq!(g.edges(), &[(1, 1), (2, 1), (3, 2), (4, 3)]);

        let g2 = materialize(&seq, &params(1.0, 2, 2)).unwrap();
        assert_eq!(g2.edges(), &[(1, 1), (1, 1), (2, 1), (2, 2)]);

        assert!(matches!(
            materialize(&seq, &params(1.0, 1, 3)),
            Err(Error::Consistency(_))
        ));
    }

    #[test]
    fn with_coordinate_matches_full_resolution() {
        let seq = build_sequence(&params(0.7, 1, 200), 3).unwrap();
        let changed = seq.with_coordinate(50, 20).unwrap();
        let mut xi = seq.xi_values().to_vec();
        xi[49] = 20;
        assert_eq!(changed, XiSequence::from_xi(xi, 3).unwrap());
        assert!(seq.with_coordinate(50, 100).is_err());
        assert!(seq.with_coordinate(201, 1).is_err());
    }

    #[test]
    fn attachment_law_small_cases() {
        let h1 = MultiGraph::new(1, vec![(1, 1)]).unwrap();
        let law = attachment_law(&params(1.0, 1, 2), &h1, 2).unwrap();
        assert!((law[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((law[1] - 1.0 / 3.0).abs() < 1e-15);

        for a in [0.5, 2.0, 3.25] {
            let law = attachment_law(&params(a, 1, 2), &h1, 2).unwrap();
            assert!((law[0] - (1.0 + a) / (2.0 * a + 1.0)).abs() < 1e-15);
        }

        let empty = MultiGraph::new(0, vec![]).unwrap();
        assert_eq!(
            attachment_law(&params(1.5, 1, 1), &empty, 1).unwrap(),
            vec![1.0]
        );

        assert!(matches!(
            attachment_law(&params(1.0, 2, 1), &h1, 2),
            Err(Error::Unsupported(_))
        ));
        assert!(matches!(
            attachment_law(&params(1.0, 1, 2), &h1, 3),
            Err(Error::Consistency(_))
        ));
    }

    #[test]
    fn exact_law_matches_sampler_marginal_at_step_two() {
        // sampler: Prob(xi_2 in {1, 2}) = (a + 1) / (2a + 1)
        let a = BigRational::new(BigInt::from(3), BigInt::from(7));
        let h1 = MultiGraph::new(1, vec![(1, 1)]).unwrap();
        let law = attachment_law_with(&a, 1, &h1, 2).unwrap();
        let one = BigRational::from_integer(1.into());
        let two = BigRational::from_integer(2.into());
        assert_eq!(law[0], (a.clone() + one.clone()) / (two * a.clone() + one));
    }

    #[test]
    fn sampler_reproduces_third_step_law() {
        // Exact oracle over the 3 x 5 outcome space at a = 1:
        // target[2] = 1 w.p. 2/3 (then Prob(target[3] = 1) = 3/5), else 2/5.
        let p = params(1.0, 1, 3);
        let draws = 1_000_000u64;
        let mut hits = [0u64; 2];
        let mut given = [0u64; 2];
        for seed in 0..draws {
            let mut rng = rng_from_seed(seed);
            let seq = sample_sequence(3, p.a, seed, &mut rng);
            let branch = (seq.target(2) == 2) as usize;
            given[branch] += 1;
            if seq.target(3) == 1 {
                hits[branch] += 1;
            }
        }
        let overall = (hits[0] + hits[1]) as f64 / draws as f64;
        let sd = (8.0 / 15.0 * 7.0 / 15.0 / draws as f64).sqrt();
        assert!((overall - 8.0 / 15.0).abs() < 4.0 * sd, "{overall}");
        for (branch, expected) in [(0, 0.6), (1, 0.4)] {
            let rate = hits[branch] as f64 / given[branch] as f64;
            let sd = (expected * (1.0 - expected) / given[branch] as f64).sqrt();
            assert!(
                (rate - expected).abs() < 4.0 * sd,
                "branch {branch}: {rate}"
            );
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let p = params(1.3, 3, 500);
        let s1 = build_sequence(&p, 42).unwrap();
        let s2 = build_sequence(&p, 42).unwrap();
        assert_eq!(s1, s2);
        assert_eq!(materialize(&s1, &p).unwrap(), materialize(&s2, &p).unwrap());
        assert_ne!(s1, build_sequence(&p, 43).unwrap());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        /// Arbitrary admissible coordinates: `xi_i` in `1 ..= 2i - 1`.
        fn coordinates(max_len: usize) -> impl Strategy<Value = Vec<u32>> {
            prop::collection::vec(any::<u32>(), 1..max_len).prop_map(|raw| {
                raw.iter()
                    .enumerate()
                    .map(|(idx, r)| r % (2 * idx as u32 + 1) + 1)
                    .collect()
            })
        }

        proptest! {
            #[test]
            fn targets_never_point_forward(xi in coordinates(200)) {
                let t = resolve_targets(&xi);
                for (idx, &v) in t.iter().enumerate() {
                    prop_assert!(v >= 1 && v as usize <= idx + 1);
                }
            }

            #[test]
            fn even_values_inherit_their_predecessor(xi in coordinates(200)) {
                let t = resolve_targets(&xi);
                for (idx, &x) in xi.iter().enumerate() {
                    let want = if x % 2 == 1 { x.div_ceil(2) } else { t[(x / 2 - 1) as usize] };
                    prop_assert_eq!(t[idx], want);
                }
                // the resolved targets are fixed points of resolution
                let odd: Vec<u32> = t.iter().map(|&v| 2 * v - 1).collect();
                prop_assert_eq!(resolve_targets(&odd), t);
            }

            #[test]
            fn one_coordinate_change_matches_full_resolution(
                xi in coordinates(120),
                pick in any::<u32>(),
                value in any::<u32>(),
            ) {
                let seq = XiSequence::from_xi(xi.clone(), 0).unwrap();
                let i = pick % xi.len() as u32 + 1;
                let v = value % (2 * i - 1) + 1;
                let mut changed = xi;
                changed[i as usize - 1] = v;
                prop_assert_eq!(
                    seq.with_coordinate(i, v).unwrap(),
                    XiSequence::from_xi(changed, 0).unwrap()
                );
            }

            #[test]
            fn sampled_coordinates_are_admissible(a in 0.05f64..5.0, n in 1u32..300, seed in any::<u64>()) {
                let seq = build_sequence(&params(a, 1, n), seed).unwrap();
                prop_assert_eq!(seq.xi(1), 1);
                for i in 1..=n {
                    prop_assert!(seq.xi(i) >= 1 && seq.xi(i) < 2 * i);
                }
            }

            #[test]
            fn collapse_keeps_every_edge(a in 0.1f64..4.0, m in 1u32..5, n in 1u32..100, seed in any::<u64>()) {
                let p = params(a, m, n);
                let g = materialize(&build_sequence(&p, seed).unwrap(), &p).unwrap();
                prop_assert_eq!(g.edge_count() as u64, p.coordinates());
                prop_assert_eq!(g.degrees().iter().map(|&d| d as u64).sum::<u64>(), 2 * p.coordinates());
            }
        }
    }
}
