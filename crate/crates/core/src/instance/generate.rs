//! Seeded generation of commuting instances.
//!
//! Supports are distinct k-subsets; each projector starts diagonal (onto `rank` random
//! local basis states) and is then conjugated by one shared product of Haar-random
//! single-qubit unitaries. Conjugating every projector by the same product unitary keeps
//! commutation and locality intact while leaving the computational basis.

use std::collections::HashSet;
use std::f64::consts::TAU;

use num_complex::Complex64;

use super::{InstanceError, LocalProjector, QsatInstance};
use crate::linalg::{kron, CMatrix};
use crate::rng::QlllRng;

#[derive(Clone, Debug, PartialEq)]
pub struct InstanceGenerator {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    /// Rank of every generated projector.
    pub rank: usize,
    /// Skip the product-unitary conjugation (classical clauses when `rank == 1`).
    pub diagonal: bool,
    /// Reject supports that would make any inclusive neighborhood larger than this.
    pub max_degree: Option<usize>,
}

impl InstanceGenerator {
    pub fn new(n: usize, m: usize, k: usize) -> Self {
        Self {
            n,
            m,
            k,
            rank: 1,
            diagonal: false,
            max_degree: None,
        }
    }

    pub fn rank(mut self, rank: usize) -> Self {
        self.rank = rank;
        self
    }

    pub fn diagonal(mut self, diagonal: bool) -> Self {
        self.diagonal = diagonal;
        self
    }

    pub fn max_degree(mut self, d: usize) -> Self {
        self.max_degree = Some(d);
        self
    }

    pub fn generate(&self, seed: u64) -> Result<QsatInstance, InstanceError> {
        let Self { n, m, k, rank, .. } = *self;
        if k == 0 || n < k {
            return Err(InstanceError::Generator(format!(
                "need 1 ≤ k ≤ n, got n={n}, k={k}"
            )));
        }
        if n > 62 {
            return Err(InstanceError::Generator(format!("n={n} is too large")));
        }
        if m == 0 {
            return Err(InstanceError::Generator("need m ≥ 1".into()));
        }
        if rank == 0 || rank >= 1 << k {
            return Err(InstanceError::Generator(format!(
                "rank must lie in 1..{} for k={k}",
                1usize << k
            )));
        }
        if self.max_degree == Some(0) {
            return Err(InstanceError::Generator(
                "max degree must be at least 1".into(),
            ));
        }
        let available = binomial_saturating(n, k);
        if (m as u128) > available {
            return Err(InstanceError::Generator(format!(
                "cannot place {m} distinct {k}-subsets of {n} qubits (only {available} exist)"
            )));
        }

        let mut rng = QlllRng::from_seed(seed);
        let supports = self.sample_supports(&mut rng)?;
        let dim = 1usize << k;
        let mut projectors = Vec::with_capacity(m);
        for support in supports {
            let states = sample_distinct(&mut rng, dim, rank);
            projectors.push(LocalProjector::diagonal(support, &states)?);
        }
        let inst = QsatInstance::new(n, projectors)?;
        if self.diagonal {
            return Ok(inst);
        }
        let unitaries: Vec<CMatrix> = (0..n).map(|_| random_su2(&mut rng)).collect();
        conjugate_by_product(&inst, &unitaries)
    }

    fn sample_supports(&self, rng: &mut QlllRng) -> Result<Vec<Vec<usize>>, InstanceError> {
        const RESTARTS: usize = 200;
        let patience = 200 + 20 * self.m;
        for _ in 0..RESTARTS {
            if let Some(supports) = self.try_supports(rng, patience) {
                return Ok(supports);
            }
        }
        Err(InstanceError::Generator(format!(
            "could not place {} supports within the degree cap after {RESTARTS} restarts",
            self.m
        )))
    }

    /// One greedy pass; gives up after `patience` consecutive rejections, since early
    /// choices can leave no room for the rest under the degree cap.
    fn try_supports(&self, rng: &mut QlllRng, patience: usize) -> Option<Vec<Vec<usize>>> {
        let mut seen: HashSet<Vec<usize>> = HashSet::new();
        let mut supports: Vec<Vec<usize>> = Vec::with_capacity(self.m);
        // inclusive neighborhood size of every accepted support
        let mut degrees: Vec<usize> = Vec::with_capacity(self.m);
        let mut rejected = 0;
        while supports.len() < self.m {
            if rejected == patience {
                return None;
            }
            let mut candidate = sample_distinct(rng, self.n, self.k);
            candidate.sort_unstable();
            if seen.contains(&candidate) {
                rejected += 1;
                continue;
            }
            let overlapping: Vec<usize> = supports
                .iter()
                .enumerate()
                .filter(|(_, s)| s.iter().any(|q| candidate.contains(q)))
                .map(|(i, _)| i)
                .collect();
            if let Some(cap) = self.max_degree {
                if overlapping.len() + 1 > cap || overlapping.iter().any(|&i| degrees[i] + 1 > cap)
                {
                    rejected += 1;
                    continue;
                }
            }
            rejected = 0;
            for &i in &overlapping {
                degrees[i] += 1;
            }
            degrees.push(overlapping.len() + 1);
            seen.insert(candidate.clone());
            supports.push(candidate);
        }
        Some(supports)
    }
}

/// Shorthand for `InstanceGenerator::new(n, m, k).generate(seed)`.
pub fn gen_random_instance(
    n: usize,
    m: usize,
    k: usize,
    seed: u64,
) -> Result<QsatInstance, InstanceError> {
    InstanceGenerator::new(n, m, k).generate(seed)
}

/// Conjugate every projector by `⊗_q unitaries[q]` restricted to its support.
pub fn conjugate_by_product(
    inst: &QsatInstance,
    unitaries: &[CMatrix],
) -> Result<QsatInstance, InstanceError> {
    if unitaries.len() != inst.n() {
        return Err(InstanceError::Generator(format!(
            "expected {} single-qubit unitaries, got {}",
            inst.n(),
            unitaries.len()
        )));
    }
    let projectors = inst
        .projectors()
        .iter()
        .map(|p| {
            // the highest support qubit is the most significant tensor factor
            let local = p
                .support()
                .iter()
                .rev()
                .map(|&q| unitaries[q].clone())
                .reduce(|acc, u| kron(&acc, &u))
                .expect("non-empty support");
            let rotated = &local * p.matrix() * local.adjoint();
            LocalProjector::new(p.support().to_vec(), rotated)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let out = QsatInstance::new(inst.n(), projectors)?;
    Ok(match inst.declared_rank() {
        Some(r) => out.with_declared_rank(r),
        None => out,
    })
}

/// Haar-random element of SU(2) from a uniformly random unit quaternion (Shoemake).
pub fn random_su2(rng: &mut QlllRng) -> CMatrix {
    let (u1, u2, u3) = (rng.uniform(), rng.uniform(), rng.uniform());
    let (s1, s2) = ((1.0 - u1).sqrt(), u1.sqrt());
    let a = Complex64::new(s1 * (TAU * u2).sin(), s1 * (TAU * u2).cos());
    let b = Complex64::new(s2 * (TAU * u3).sin(), s2 * (TAU * u3).cos());
    CMatrix::from_row_slice(2, 2, &[a, -b.conj(), b, a.conj()])
}

/// `count` distinct values from `0..bound`, in draw order (partial Fisher–Yates).
fn sample_distinct(rng: &mut QlllRng, bound: usize, count: usize) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..bound).collect();
    for i in 0..count {
        let j = i + rng.below((bound - i) as u64) as usize;
        pool.swap(i, j);
    }
    pool.truncate(count);
    pool
}

fn binomial_saturating(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{validate_instance, InstanceFile};
    use crate::linalg::unitarity_deviation;

    #[test]
    fn generation_is_deterministic() {
        let a = gen_random_instance(6, 4, 2, 7).unwrap();
        let b = gen_random_instance(6, 4, 2, 7).unwrap();
        assert_eq!(
            InstanceFile::from_instance(&a),
            InstanceFile::from_instance(&b)
        );
        let c = gen_random_instance(6, 4, 2, 8).unwrap();
        assert_ne!(
            InstanceFile::from_instance(&a),
            InstanceFile::from_instance(&c)
        );
    }

    #[test]
    fn generated_instances_validate() {
        for seed in 0..30 {
            for (n, m, k, rank) in [(5, 4, 2, 1), (6, 5, 3, 1), (6, 3, 3, 2), (4, 6, 2, 3)] {
                let inst = InstanceGenerator::new(n, m, k)
                    .rank(rank)
                    .generate(seed)
                    .unwrap();
                let report = validate_instance(&inst);
                assert!(report.passed, "seed {seed}: {report:?}");
                assert!(inst.projectors().iter().all(|p| p.rank() == rank));
                assert!(!inst.is_classical());
            }
        }
    }

    #[test]
    fn identity_conjugation_keeps_classical_instance() {
        let diag = InstanceGenerator::new(5, 4, 3)
            .diagonal(true)
            .generate(3)
            .unwrap();
        assert!(diag.is_classical());
        let ids = vec![CMatrix::identity(2, 2); 5];
        let same = conjugate_by_product(&diag, &ids).unwrap();
        assert_eq!(same.projectors(), diag.projectors());
    }

    #[test]
    fn diagonal_flag_only_skips_the_rotation() {
        // the rotated instance is the diagonal one conjugated by the unitaries drawn after it
        let diag = InstanceGenerator::new(4, 3, 2)
            .diagonal(true)
            .generate(11)
            .unwrap();
        let rotated = InstanceGenerator::new(4, 3, 2).generate(11).unwrap();
        for (p, q) in diag.projectors().iter().zip(rotated.projectors()) {
            assert_eq!(p.support(), q.support());
            assert_eq!(p.rank(), q.rank());
        }
    }

    #[test]
    fn too_many_supports_is_an_error() {
        // C(4, 2) = 6
        assert!(gen_random_instance(4, 6, 2, 0).is_ok());
        assert!(matches!(
            gen_random_instance(4, 7, 2, 0),
            Err(InstanceError::Generator(_))
        ));
        assert!(gen_random_instance(2, 1, 3, 0).is_err());
        assert!(gen_random_instance(3, 0, 1, 0).is_err());
    }

    #[test]
    fn degree_cap_is_respected() {
        for seed in 0..20 {
            let inst = InstanceGenerator::new(10, 4, 3)
                .max_degree(2)
                .generate(seed)
                .unwrap();
            assert!(inst.d() <= 2, "seed {seed} gave d = {}", inst.d());
        }
        // 3 supports on 3 qubits with k = 2 always pairwise overlap
        assert!(InstanceGenerator::new(3, 3, 2)
            .max_degree(1)
            .generate(0)
            .is_err());
    }

    #[test]
    fn su2_samples_are_unitary() {
        let mut rng = QlllRng::from_seed(5);
        for _ in 0..100 {
            assert!(unitarity_deviation(&random_su2(&mut rng)) < 1e-14);
        }
    }
}
