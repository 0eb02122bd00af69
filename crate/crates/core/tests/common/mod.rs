//! Oracles and fixtures shared by the integration tests and the acceptance harness.
//! Nothing here calls into the solver or the scheduler.

#![allow(dead_code)]

use std::f64::consts::E;

use qlll_core::instance::{InstanceGenerator, LocalProjector, QsatInstance};
use qlll_core::rng::QlllRng;

/// A classical clause: its variables and the one local assignment that falsifies it
/// (bit `j` of `falsifying` is the value of `vars[j]`).
#[derive(Clone, Debug)]
pub struct Clause {
    pub vars: Vec<usize>,
    pub falsifying: usize,
}

/// Read the clauses off a diagonal rank-1 instance.
pub fn clauses_of(inst: &QsatInstance) -> Vec<Clause> {
    inst.projectors()
        .iter()
        .map(|p| {
            let dim = p.matrix().nrows();
            let hits: Vec<usize> = (0..dim).filter(|&s| p.matrix()[(s, s)].re > 0.5).collect();
            assert_eq!(hits.len(), 1, "not a rank-1 classical clause");
            Clause {
                vars: p.support().to_vec(),
                falsifying: hits[0],
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MoserRun {
    pub log: Vec<bool>,
    pub failures: usize,
    pub completed: bool,
    pub assignment: u64,
}

/// Textbook recursive Moser fixing on bit assignments, consuming the generator in the
/// same order as the quantum solver: `n` bits for the start, then `k` fresh bits per
/// failed clause. Classical measurements are deterministic and draw nothing.
pub fn moser_reference(n: usize, clauses: &[Clause], budget: usize, seed: u64) -> MoserRun {
    struct State<'a> {
        clauses: &'a [Clause],
        assignment: u64,
        rng: QlllRng,
        log: Vec<bool>,
        failures: usize,
        budget: usize,
    }

    impl State<'_> {
        fn violated(&self, c: &Clause) -> bool {
            c.vars
                .iter()
                .enumerate()
                .all(|(j, &v)| ((self.assignment >> v) & 1) as usize == (c.falsifying >> j) & 1)
        }

        fn overlapping(&self, i: usize) -> Vec<usize> {
            let mut out = vec![i];
            for (j, c) in self.clauses.iter().enumerate() {
                if j != i && c.vars.iter().any(|v| self.clauses[i].vars.contains(v)) {
                    out.push(j);
                }
            }
            out
        }

        /// Returns false once the budget is spent.
        fn fix(&mut self, i: usize) -> bool {
            let clause = &self.clauses[i];
            let bad = self.violated(clause);
            self.log.push(bad);
            if !bad {
                return true;
            }
            self.failures += 1;
            let fresh = self.rng.bits(clause.vars.len());
            for (j, &v) in clause.vars.iter().enumerate() {
                self.assignment &= !(1 << v);
                self.assignment |= ((fresh >> j) & 1) << v;
            }
            if self.failures == self.budget {
                return false;
            }
            for j in self.overlapping(i) {
                if !self.fix(j) {
                    return false;
                }
            }
            true
        }
    }

    let mut rng = QlllRng::from_seed(seed);
    let assignment = rng.bits(n);
    let mut state = State {
        clauses,
        assignment,
        rng,
        log: Vec::new(),
        failures: 0,
        budget,
    };
    let mut completed = true;
    for i in 0..clauses.len() {
        if !state.fix(i) {
            completed = false;
            break;
        }
    }
    MoserRun {
        log: state.log,
        failures: state.failures,
        completed,
        assignment: state.assignment,
    }
}

/// `k − log2(d·e·r)` evaluated directly.
pub fn margin_of(k: usize, d: usize, r: usize) -> f64 {
    k as f64 - (d as f64 * r as f64 * E).log2()
}

/// Rank-1 projector onto the all-ones assignment of `support`.
pub fn ones_clause(support: &[usize]) -> LocalProjector {
    LocalProjector::diagonal(support.to_vec(), &[(1 << support.len()) - 1]).unwrap()
}

pub fn instance_of(n: usize, supports: &[&[usize]]) -> QsatInstance {
    QsatInstance::new(n, supports.iter().map(|s| ones_clause(s)).collect()).unwrap()
}

/// Generated commuting instance (rotated off the computational basis) with a degree cap.
pub fn generated(
    n: usize,
    m: usize,
    k: usize,
    rank: usize,
    max_degree: usize,
    seed: u64,
) -> QsatInstance {
    InstanceGenerator::new(n, m, k)
        .rank(rank)
        .max_degree(max_degree)
        .generate(seed)
        .unwrap()
}

/// Three-standard-deviation band for a binomial proportion.
pub fn three_sigma(p: f64, trials: usize) -> f64 {
    3.0 * (p * (1.0 - p) / trials as f64).sqrt()
}
