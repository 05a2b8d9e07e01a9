use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::MultiGraph;
use crate::model::{materialize, rng_from_seed, sample_sequence, ModelParams, XiSequence};
use crate::stats::second_degrees;

/// Graph obtained by replacing coordinate `i` (`i >= 2`) with `new_value`.
/// The input sequence is left untouched.
pub fn perturb_one_coordinate(
    seq: &XiSequence,
    i: u32,
    new_value: u32,
    params: &ModelParams,
) -> Result<MultiGraph> {
    if i < 2 {
        return Err(Error::Domain(format!(
            "coordinate {i} cannot be changed; the first one is forced"
        )));
    }
    materialize(&seq.with_coordinate(i, new_value)?, params)
}

/// Largest change of Y(k) a single coordinate can cause: `2k + 1` for `m = 1`,
/// `2k + 2` otherwise.
pub fn lipschitz_bound(m: u32, k: u32) -> u64 {
    2 * k as u64 + if m == 1 { 1 } else { 2 }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LipschitzReport {
    pub k: u32,
    pub bound: u64,
    pub trials: u64,
    pub max_delta: u64,
    pub violations: u64,
    /// Trials whose redrawn value equalled the original one.
    pub identity_trials: u64,
}

fn tail_count(g: &MultiGraph, k: u32) -> u64 {
    second_degrees(g).into_iter().filter(|&d| d >= k).count() as u64
}

/// Samples a realization per trial (seed `seed + t`), changes one uniformly
/// chosen coordinate to a uniformly chosen admissible value, and records
/// `|Y(x) - Y(x')|` against the bound.
pub fn lipschitz_audit(
    params: &ModelParams,
    k: u32,
    trials: u64,
    seed: u64,
) -> Result<LipschitzReport> {
    params.validate()?;
    if trials == 0 {
        return Err(Error::Parameter("trials must be at least 1".into()));
    }
    let coords = params.coordinates() as u32;
    if coords < 2 {
        return Err(Error::Parameter(
            "a single coordinate cannot be perturbed; need m*n >= 2".into(),
        ));
    }
    let bound = lipschitz_bound(params.m, k);
    let outcomes: Vec<(u64, bool)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let trial_seed = seed.wrapping_add(t);
            let mut rng = rng_from_seed(trial_seed);
            let seq = sample_sequence(coords, params.a, trial_seed, &mut rng);
            let i = rng.gen_range(2..=coords);
            let value = rng.gen_range(1..=2 * i - 1);
            let before = tail_count(&materialize(&seq, params)?, k);
            let after = tail_count(&perturb_one_coordinate(&seq, i, value, params)?, k);
            Ok((before.abs_diff(after), value == seq.xi(i)))
        })
        .collect::<Result<_>>()?;
    Ok(LipschitzReport {
        k,
        bound,
        trials,
        max_delta: outcomes.iter().map(|o| o.0).max().unwrap_or(0),
        violations: outcomes.iter().filter(|o| o.0 > bound).count() as u64,
        identity_trials: outcomes.iter().filter(|o| o.1).count() as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_sequence;

    fn sorted(g: &MultiGraph) -> Vec<(u32, u32)> {
        let mut e = g.edges().to_vec();
        e.sort_unstable();
        e
    }

    #[test]
    fn hand_examples() {
        let p = ModelParams::new(1.0, 1, 4).unwrap();
        let seq = XiSequence::from_xi(vec![1, 1, 3, 5], 0).unwrap();
        let g = perturb_one_coordinate(&seq, 3, 1, &p).unwrap();
        assert_eq!(sorted(&g), vec![(1, 1), (2, 1), (3, 1), (4, 3)]);
        let g = perturb_one_coordinate(&seq, 4, 2, &p).unwrap();
        assert_eq!(g.edges()[3], (4, 1));
        assert_eq!(seq.xi_values(), &[1, 1, 3, 5]);
    }

    #[test]
    fn identity_perturbation_is_a_no_op() {
        let p = ModelParams::new(0.7, 2, 50).unwrap();
        let seq = build_sequence(&p, 3).unwrap();
        let original = materialize(&seq, &p).unwrap();
        for i in [2, 17, 100] {
            let g = perturb_one_coordinate(&seq, i, seq.xi(i), &p).unwrap();
            assert_eq!(g, original);
        }
    }

    #[test]
    fn rejects_out_of_range() {
        let p = ModelParams::new(1.0, 1, 4).unwrap();
        let seq = XiSequence::from_xi(vec![1, 1, 3, 5], 0).unwrap();
        assert!(matches!(
            perturb_one_coordinate(&seq, 3, 6, &p),
            Err(Error::Domain(_))
        ));
        assert!(perturb_one_coordinate(&seq, 3, 0, &p).is_err());
        assert!(perturb_one_coordinate(&seq, 1, 1, &p).is_err());
        assert!(perturb_one_coordinate(&seq, 5, 1, &p).is_err());
    }

    #[test]
    fn small_audits_hold() {
        for &(m, n) in &[(1u32, 200u32), (2, 120), (3, 60)] {
            let p = ModelParams::new(1.0, m, n).unwrap();
            for k in [1, 2, 5] {
                let r = lipschitz_audit(&p, k, 300, 11).unwrap();
                assert_eq!(r.violations, 0, "m={m} k={k} {r:?}");
                assert!(r.max_delta <= r.bound);
            }
        }
        assert_eq!(lipschitz_bound(1, 3), 7);
        assert_eq!(lipschitz_bound(2, 3), 8);
    }

    #[test]
    fn audit_is_deterministic() {
        let p = ModelParams::new(0.5, 1, 100).unwrap();
        assert_eq!(
            lipschitz_audit(&p, 2, 50, 1).unwrap(),
            lipschitz_audit(&p, 2, 50, 1).unwrap()
        );
        assert!(lipschitz_audit(&p, 2, 0, 1).is_err());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            // every admissible replacement of one coordinate, on arbitrary
            // (not only typical) coordinate vectors
            #[test]
            fn no_replacement_exceeds_the_bound(
                raw in prop::collection::vec(any::<u32>(), 2..80),
                m in 1u32..4,
                k in 1u32..6,
                pick in any::<u32>(),
            ) {
                let len = raw.len() as u32 / m * m;
                prop_assume!(len >= 2);
                let xi: Vec<u32> = raw[..len as usize]
                    .iter()
                    .enumerate()
                    .map(|(idx, r)| r % (2 * idx as u32 + 1) + 1)
                    .collect();
                let p = ModelParams::new(1.0, m, len / m).unwrap();
                let seq = XiSequence::from_xi(xi, 0).unwrap();
                let before = tail_count(&materialize(&seq, &p).unwrap(), k);
                let i = pick % (len - 1) + 2;
                for value in 1..2 * i {
                    let after = tail_count(&perturb_one_coordinate(&seq, i, value, &p).unwrap(), k);
                    prop_assert!(before.abs_diff(after) <= lipschitz_bound(m, k), "i={} value={}", i, value);
                }
            }
        }
    }
}
