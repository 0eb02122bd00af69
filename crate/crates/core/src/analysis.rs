//! Counting side of the termination argument: the enumerative code for fixed-weight
//! logs, code-length bounds, the explicit failure budget and the termination bound.

use std::f64::consts::E;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use thiserror::Error;

use crate::instance::margin_bits;
use crate::solver::{HistoryTree, InitialCondition};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("bit string has {found} ones, expected {expected}")]
    WeightMismatch { expected: usize, found: usize },
    #[error("index {index} is not below C({length}, {weight})")]
    IndexOutOfRange {
        index: BigUint,
        length: usize,
        weight: usize,
    },
    #[error("LLL margin violated; no N exists (margin {0})")]
    MarginViolated(f64),
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error("code length {exact} exceeds the closed-form bound {bound}")]
    CodeLengthExceeded { exact: f64, bound: f64 },
    #[error("budget {budget} violates N ≥ a·log2(N) + b (a = {a}, b = {b})")]
    ImplicitInequality { budget: usize, a: f64, b: f64 },
    #[error("the termination bound only applies to trees averaged over all basis inputs")]
    NotAveraged,
}

/// Lexicographic rank of a fixed-weight bit string.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EnumCode {
    pub index: BigUint,
    pub length: usize,
    pub weight: usize,
}

pub fn binomial(n: usize, k: usize) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    acc
}

/// `log2` of a big integer, accurate to double precision.
pub fn log2_big(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits <= 64 {
        return x.to_f64().unwrap_or(0.0).log2();
    }
    let shift = bits - 64;
    let top = (x >> shift).to_f64().expect("fits in 64 bits");
    top.log2() + shift as f64
}

/// Position of `bits` among all strings of its length and weight, in lexicographic order
/// with `0 < 1`.
pub fn rank_bitstring(bits: &[bool], weight: usize) -> Result<EnumCode, AnalysisError> {
    let found = bits.iter().filter(|&&b| b).count();
    if found != weight {
        return Err(AnalysisError::WeightMismatch {
            expected: weight,
            found,
        });
    }
    let length = bits.len();
    let mut index = BigUint::zero();
    let mut remaining = weight;
    for (i, &bit) in bits.iter().enumerate() {
        if bit {
            // every string with a 0 here and the same prefix sorts first
            index += binomial(length - i - 1, remaining);
            remaining -= 1;
        }
    }
    Ok(EnumCode {
        index,
        length,
        weight,
    })
}

pub fn unrank(index: &BigUint, length: usize, weight: usize) -> Result<Vec<bool>, AnalysisError> {
    if *index >= binomial(length, weight) {
        return Err(AnalysisError::IndexOutOfRange {
            index: index.clone(),
            length,
            weight,
        });
    }
    let mut rest = index.clone();
    let mut remaining = weight;
    let mut bits = Vec::with_capacity(length);
    for i in 0..length {
        let below = binomial(length - i - 1, remaining);
        if remaining > 0 && rest >= below {
            rest -= below;
            remaining -= 1;
            bits.push(true);
        } else {
            bits.push(false);
        }
    }
    Ok(bits)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CodeLength {
    /// `log2 C(m + d·t, t)`.
    pub exact_bits: f64,
    /// `m + t·log2(d·e)`.
    pub bound_bits: f64,
}

/// Bits needed to name a log with `t` failures among at most `m + d·t` steps, against
/// the closed-form bound. Errors if the bound fails.
pub fn code_length_bound(m: usize, d: usize, t: usize) -> Result<CodeLength, AnalysisError> {
    if d == 0 {
        return Err(AnalysisError::InvalidParameters(
            "d must be at least 1".into(),
        ));
    }
    let exact_bits = log2_big(&binomial(m + d * t, t));
    let bound_bits = m as f64 + t as f64 * (d as f64 * E).log2();
    if exact_bits > bound_bits + 1e-12 {
        return Err(AnalysisError::CodeLengthExceeded {
            exact: exact_bits,
            bound: bound_bits,
        });
    }
    Ok(CodeLength {
        exact_bits,
        bound_bits,
    })
}

/// Instance shape the bounds depend on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LllParams {
    pub m: usize,
    pub k: usize,
    pub d: usize,
    pub r: usize,
}

impl LllParams {
    pub fn of(inst: &crate::instance::QsatInstance) -> Self {
        Self {
            m: inst.m(),
            k: inst.k(),
            d: inst.d(),
            r: inst.r(),
        }
    }

    /// `k − log2(d·e·r)`: bits gained per failure.
    pub fn margin(&self) -> f64 {
        margin_bits(self.k, self.d, self.r)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundReport {
    pub params: LllParams,
    pub epsilon: f64,
    pub margin: f64,
    pub a: f64,
    pub b: f64,
    /// Failure budget `ceil(b + 3a(log2 b + 1))`, at least 1.
    pub budget: usize,
    /// Step budget `m + budget·d`.
    pub max_steps: usize,
    /// Real-valued `b + 3a(log2 b + 1)` before ceiling.
    pub closed_form: f64,
    /// Middle term `b + a(log2(a+1) + log2(b + a·log2(a+1)))` of the relaxation chain.
    pub relaxation: f64,
    /// Largest solution of `x = a·log2 x + b`; absent when `a·log2 x + b < x` for every
    /// positive `x`, in which case every budget satisfies the implicit inequality.
    pub fixed_point: Option<f64>,
    /// `fixed_point ≤ relaxation ≤ closed_form`.
    pub chain_holds: bool,
    pub success_lower_bound: f64,
}

/// Smallest budget of the closed form that drives the non-termination probability
/// below `epsilon`.
pub fn choose_budget(params: LllParams, epsilon: f64) -> Result<BoundReport, AnalysisError> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(AnalysisError::InvalidParameters(format!(
            "epsilon must lie in (0, 1), got {epsilon}"
        )));
    }
    if params.m == 0 || params.k == 0 || params.d == 0 || params.r == 0 {
        return Err(AnalysisError::InvalidParameters(
            "m, k, d and r must all be positive".into(),
        ));
    }
    let margin = params.margin();
    if margin.is_nan() || margin <= 0.0 {
        return Err(AnalysisError::MarginViolated(margin));
    }
    let a = 1.0 / margin;
    let b = (params.m as f64 + (1.0 / epsilon).log2()) / margin;
    let closed_form = b + 3.0 * a * (b.log2() + 1.0);
    let budget = (closed_form.ceil().max(1.0)) as usize;
    let la = (a + 1.0).log2();
    let relaxation = b + a * (la + (b + a * la).log2());
    let fixed_point = largest_fixed_point(a, b, closed_form.max(relaxation).max(b).max(1.0));
    let tol = 1e-9 * closed_form.abs().max(1.0);
    let chain_holds =
        fixed_point.is_none_or(|x| x <= relaxation + tol) && relaxation <= closed_form + tol;

    let n = budget as f64;
    if n < a * n.log2() + b {
        return Err(AnalysisError::ImplicitInequality { budget, a, b });
    }
    Ok(BoundReport {
        params,
        epsilon,
        margin,
        a,
        b,
        budget,
        max_steps: params.m + budget * params.d,
        closed_form,
        relaxation,
        fixed_point,
        chain_holds,
        success_lower_bound: success_bound(params, budget),
    })
}

/// Iterate `x ← a·log2 x + b` downward from a point above the largest fixed point.
fn largest_fixed_point(a: f64, b: f64, start: f64) -> Option<f64> {
    // a·log2 x + b − x peaks at x = a / ln 2
    let peak = a / std::f64::consts::LN_2;
    if a * peak.log2() + b < peak {
        return None;
    }
    let mut x = start.max(peak);
    for _ in 0..10_000 {
        let next = a * x.log2() + b;
        if (next - x).abs() <= 1e-13 * x.abs().max(1.0) {
            return Some(next);
        }
        x = next;
    }
    Some(x)
}

/// `2^{m + log2 N − N·margin}`: upper bound on the probability that `budget` failures
/// occur from the maximally mixed start. Not clamped.
pub fn exhaustion_bound(params: LllParams, budget: usize) -> f64 {
    let n = budget as f64;
    (params.m as f64 + n.log2() - n * params.margin()).exp2()
}

/// Lower bound on the termination probability, clamped to `[0, 1]`.
pub fn success_bound(params: LllParams, budget: usize) -> f64 {
    (1.0 - exhaustion_bound(params, budget)).clamp(0.0, 1.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TerminationCheck {
    /// Exact probability of leaves that used up the budget.
    pub exhausted_probability: f64,
    /// Probability mass dropped by pruning; counted against the bound.
    pub pruned_mass: f64,
    pub bound: f64,
    pub holds: bool,
    /// `bound − exhausted − pruned`.
    pub slack: f64,
}

/// Compare the exact budget-exhaustion probability of an averaged tree with the bound.
pub fn verify_termination_bound(
    tree: &HistoryTree,
    params: LllParams,
) -> Result<TerminationCheck, AnalysisError> {
    if tree.initial != InitialCondition::Averaged {
        return Err(AnalysisError::NotAveraged);
    }
    let exhausted_probability = tree.exhausted_probability();
    let bound = exhaustion_bound(params, tree.budget);
    let worst = exhausted_probability + tree.pruned_mass;
    Ok(TerminationCheck {
        exhausted_probability,
        pruned_mass: tree.pruned_mass,
        bound,
        holds: worst <= bound,
        slack: bound - worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheduler::parse_bits;

    fn bits(s: &str) -> Vec<bool> {
        parse_bits(s).unwrap()
    }

    /// All strings of the given length and weight, in lexicographic order.
    fn brute_force(length: usize, weight: usize) -> Vec<Vec<bool>> {
        (0u32..1 << length)
            .map(|v| {
                (0..length)
                    .map(|i| (v >> (length - 1 - i)) & 1 == 1)
                    .collect::<Vec<_>>()
            })
            .filter(|s| s.iter().filter(|&&b| b).count() == weight)
            .collect()
    }

    #[test]
    fn rank_examples() {
        assert_eq!(
            rank_bitstring(&bits("0000"), 0).unwrap().index,
            BigUint::zero()
        );
        assert_eq!(
            rank_bitstring(&bits("0101"), 2).unwrap().index,
            BigUint::from(1u8)
        );
        assert_eq!(
            rank_bitstring(&bits("1100"), 2).unwrap().index,
            BigUint::from(5u8)
        );
        assert!(matches!(
            rank_bitstring(&bits("0101"), 1),
            Err(AnalysisError::WeightMismatch {
                expected: 1,
                found: 2
            })
        ));
    }

    #[test]
    fn unrank_examples() {
        assert_eq!(unrank(&BigUint::zero(), 4, 0).unwrap(), bits("0000"));
        assert_eq!(unrank(&BigUint::from(1u8), 4, 2).unwrap(), bits("0101"));
        assert_eq!(unrank(&BigUint::from(5u8), 4, 2).unwrap(), bits("1100"));
        assert!(unrank(&BigUint::from(6u8), 4, 2).is_err());
    }

    #[test]
    fn rank_matches_lexicographic_enumeration() {
        for length in 0..=10 {
            for weight in 0..=length {
                for (i, s) in brute_force(length, weight).iter().enumerate() {
                    let code = rank_bitstring(s, weight).unwrap();
                    assert_eq!(code.index, BigUint::from(i));
                    assert_eq!(&unrank(&code.index, length, weight).unwrap(), s);
                }
            }
        }
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(10, 3), BigUint::from(120u8));
        assert_eq!(binomial(3, 5), BigUint::zero());
        assert_eq!(binomial(0, 0), BigUint::one());
        let big = binomial(200, 100);
        assert!((log2_big(&big) - 195.850_520_479_089_17).abs() < 1e-9);
    }

    #[test]
    fn code_length_examples() {
        let c = code_length_bound(4, 2, 0).unwrap();
        assert_eq!((c.exact_bits, c.bound_bits), (0.0, 4.0));
        let c = code_length_bound(4, 2, 3).unwrap();
        assert!((c.exact_bits - 120f64.log2()).abs() < 1e-12);
        assert!((c.bound_bits - (4.0 + 3.0 * (2.0 * E).log2())).abs() < 1e-12);
        let c = code_length_bound(1, 1, 1).unwrap();
        assert_eq!(c.exact_bits, 1.0);
        assert!((c.bound_bits - 2.442_695_040_888_963).abs() < 1e-12);
    }

    #[test]
    fn budget_example() {
        let params = LllParams {
            m: 10,
            k: 3,
            d: 2,
            r: 1,
        };
        let report = choose_budget(params, 0.01).unwrap();
        // independent evaluation of the closed forms
        let margin = 3.0 - (2.0 * E).log2();
        let a = 1.0 / margin;
        let b = (10.0 + 100f64.log2()) / margin;
        assert!((report.margin - margin).abs() < 1e-15);
        assert!((report.a - a).abs() < 1e-12 && (report.b - b).abs() < 1e-12);
        assert!((report.a - 1.794).abs() < 1e-3 && (report.b - 29.865).abs() < 1e-3);
        assert_eq!((report.budget, report.max_steps), (62, 134));
        assert!(report.chain_holds);
        let exponent: f64 = 10.0 + 62f64.log2() - 62.0 * margin;
        assert!((exponent + 18.6).abs() < 0.05);
        assert!((report.success_lower_bound - (1.0 - exponent.exp2())).abs() < 1e-15);
        assert!(report.success_lower_bound >= 0.99);
    }

    #[test]
    fn margin_violation_is_an_error() {
        let params = LllParams {
            m: 5,
            k: 2,
            d: 2,
            r: 2,
        };
        assert!(matches!(
            choose_budget(params, 0.1),
            Err(AnalysisError::MarginViolated(_))
        ));
        assert!(choose_budget(
            LllParams {
                m: 5,
                k: 3,
                d: 2,
                r: 1
            },
            1.5
        )
        .is_err());
    }

    #[test]
    fn success_bound_clamps() {
        let params = LllParams {
            m: 10,
            k: 3,
            d: 2,
            r: 1,
        };
        assert_eq!(success_bound(params, 1), 0.0);
        assert!(success_bound(params, 1000) > 0.0);
        assert!(success_bound(params, 1000) <= 1.0);
    }

    #[test]
    fn chain_without_fixed_point() {
        // large margin and loose epsilon: a·log2 x + b stays below x everywhere
        let report = choose_budget(
            LllParams {
                m: 1,
                k: 6,
                d: 1,
                r: 1,
            },
            0.5,
        )
        .unwrap();
        assert!(report.fixed_point.is_none());
        assert!(report.chain_holds);
        assert_eq!(report.budget, 1);
        let report = choose_budget(
            LllParams {
                m: 10,
                k: 3,
                d: 2,
                r: 1,
            },
            0.01,
        )
        .unwrap();
        let x = report.fixed_point.unwrap();
        assert!((report.a * x.log2() + report.b - x).abs() < 1e-9);
    }

    #[test]
    fn budget_shrinks_with_looser_epsilon() {
        let params = LllParams {
            m: 10,
            k: 3,
            d: 2,
            r: 1,
        };
        assert!(
            choose_budget(params, 0.5).unwrap().budget
                < choose_budget(params, 0.01).unwrap().budget
        );
    }
}
