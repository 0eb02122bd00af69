//! Dense statevector kernel.
//!
//! Qubit `q` is bit `q` of the amplitude index (little-endian). A local operator on
//! `support` uses the same convention inside the support: `support[0]` is the least
//! significant bit of the local index.

use nalgebra::DVector;
use num_complex::Complex64;
use thiserror::Error;

use crate::instance::{LocalProjector, QsatInstance, TOLERANCE};
use crate::linalg::{unitarity_deviation, CMatrix, ONE, ZERO};
use crate::rng::QlllRng;

/// Branches whose probability falls below this are treated as absent.
pub const BRANCH_CUTOFF: f64 = 1e-12;

/// Largest register the dense kernel accepts.
pub const MAX_QUBITS: usize = 28;

#[derive(Debug, Error, PartialEq)]
pub enum SimulatorError {
    #[error("operator is not unitary (deviation {0:.3e})")]
    NotUnitary(f64),
    #[error("support {support:?} is invalid for a {n}-qubit register")]
    BadSupport { support: Vec<usize>, n: usize },
    #[error("operator is {found}x{found} but the support needs {expected}x{expected}")]
    DimensionMismatch { found: usize, expected: usize },
    #[error("state norm² is {0}, expected 1")]
    NotNormalized(f64),
    #[error("amplitude vector length {0} is not a power of two within the qubit limit")]
    BadLength(usize),
    #[error("projector has rank 0 and cannot be diagonalized")]
    ZeroRank,
    #[error("diagonalization found {found} range vectors for a rank-{rank} projector")]
    DiagonalizationFailed { found: usize, rank: usize },
    #[error("state is not in the projector's range (failure probability {0})")]
    NotInRange(f64),
    #[error("extracted local index {extracted} lies outside the rank-{rank} fixed subspace")]
    ExtractedOutsideRank { extracted: usize, rank: usize },
    #[error("local outcome {0} has zero probability")]
    ImpossibleOutcome(usize),
}

/// A normalized pure state of the work register.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// Computational basis state `|index⟩`.
    pub fn basis(n: usize, index: usize) -> Self {
        assert!(n <= MAX_QUBITS, "{n} qubits exceed the dense kernel limit");
        assert!(index < 1 << n, "basis index {index} out of range");
        let mut amps = vec![ZERO; 1 << n];
        amps[index] = ONE;
        Self { n, amps }
    }

    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self, SimulatorError> {
        let len = amps.len();
        if !len.is_power_of_two() || len.trailing_zeros() as usize > MAX_QUBITS {
            return Err(SimulatorError::BadLength(len));
        }
        let state = Self {
            n: len.trailing_zeros() as usize,
            amps,
        };
        let norm = state.norm_sqr();
        if (norm - 1.0).abs() > TOLERANCE {
            return Err(SimulatorError::NotNormalized(norm));
        }
        Ok(state)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(Complex64::norm_sqr).sum()
    }

    fn scale(&mut self, factor: f64) {
        for a in &mut self.amps {
            *a *= factor;
        }
    }

    fn check_support(&self, support: &[usize]) -> Result<(), SimulatorError> {
        let mut sorted = support.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if support.is_empty()
            || sorted.len() != support.len()
            || sorted.iter().any(|&q| q >= self.n)
        {
            return Err(SimulatorError::BadSupport {
                support: support.to_vec(),
                n: self.n,
            });
        }
        Ok(())
    }
}

/// Amplitude offset of every local basis index.
fn local_offsets(support: &[usize]) -> Vec<usize> {
    (0..1usize << support.len())
        .map(|a| {
            support
                .iter()
                .enumerate()
                .map(|(j, &q)| ((a >> j) & 1) << q)
                .sum()
        })
        .collect()
}

/// Amplitude indices whose support bits are all clear.
fn block_bases(n: usize, support: &[usize]) -> impl Iterator<Item = usize> {
    let mask: usize = support.iter().map(|&q| 1 << q).sum();
    (0..1usize << n).filter(move |i| i & mask == 0)
}

/// `op ⊗ 1` applied in place; no checks.
fn apply_matrix(amps: &mut [Complex64], n: usize, op: &CMatrix, support: &[usize]) {
    let offsets = local_offsets(support);
    let dim = offsets.len();
    let mut local = vec![ZERO; dim];
    for base in block_bases(n, support) {
        for (a, &off) in offsets.iter().enumerate() {
            local[a] = amps[base + off];
        }
        for (row, &off) in offsets.iter().enumerate() {
            let mut acc = ZERO;
            for (col, value) in local.iter().enumerate() {
                acc += op[(row, col)] * value;
            }
            amps[base + off] = acc;
        }
    }
    debug_assert_eq!(dim, op.nrows());
}

/// Apply a unitary on `support`, identity elsewhere.
pub fn apply_local_unitary(
    state: &mut StateVector,
    u: &CMatrix,
    support: &[usize],
) -> Result<(), SimulatorError> {
    state.check_support(support)?;
    let expected = 1usize << support.len();
    if u.nrows() != expected || u.ncols() != expected {
        return Err(SimulatorError::DimensionMismatch {
            found: u.nrows(),
            expected,
        });
    }
    let deviation = unitarity_deviation(u);
    if deviation > TOLERANCE {
        return Err(SimulatorError::NotUnitary(deviation));
    }
    let n = state.n;
    apply_matrix(&mut state.amps, n, u, support);
    Ok(())
}

/// Outcome of a coherent measurement of `{1 − Π, Π}`, split into normalized branches.
#[derive(Clone, Debug)]
pub struct MeasurementBranches {
    /// `‖Π|ψ⟩‖²`.
    pub p_fail: f64,
    /// `(1 − Π)|ψ⟩` normalized; absent below [`BRANCH_CUTOFF`].
    pub success_state: Option<StateVector>,
    /// `Π|ψ⟩` normalized; absent below [`BRANCH_CUTOFF`].
    pub fail_state: Option<StateVector>,
}

impl MeasurementBranches {
    pub fn p_success(&self) -> f64 {
        1.0 - self.p_fail
    }
}

pub fn coherent_measure(
    state: &StateVector,
    proj: &LocalProjector,
) -> Result<MeasurementBranches, SimulatorError> {
    state.check_support(proj.support())?;
    let mut fail = state.clone();
    let n = state.n;
    apply_matrix(&mut fail.amps, n, proj.matrix(), proj.support());
    let mut success = state.clone();
    for (s, f) in success.amps.iter_mut().zip(&fail.amps) {
        *s -= f;
    }
    let p_fail = fail.norm_sqr();
    let p_success = success.norm_sqr();
    let normalized = |mut branch: StateVector, p: f64| {
        (p >= BRANCH_CUTOFF).then(|| {
            branch.scale(1.0 / p.sqrt());
            branch
        })
    };
    Ok(MeasurementBranches {
        p_fail,
        success_state: normalized(success, p_success),
        fail_state: normalized(fail, p_fail),
    })
}

/// `⟨ψ|Π|ψ⟩` for one projector.
pub fn projector_energy(state: &StateVector, proj: &LocalProjector) -> f64 {
    let offsets = local_offsets(proj.support());
    let m = proj.matrix();
    let mut total = 0.0;
    for base in block_bases(state.n, proj.support()) {
        for (row, &ro) in offsets.iter().enumerate() {
            let bra = state.amps[base + ro].conj();
            if bra == ZERO {
                continue;
            }
            let mut acc = ZERO;
            for (col, &co) in offsets.iter().enumerate() {
                acc += m[(row, col)] * state.amps[base + co];
            }
            total += (bra * acc).re;
        }
    }
    total.max(0.0)
}

/// `⟨ψ|Π_i|ψ⟩` for every projector of the instance.
pub fn energy(state: &StateVector, inst: &QsatInstance) -> Vec<f64> {
    inst.projectors()
        .iter()
        .map(|p| projector_energy(state, p))
        .collect()
}

/// A unitary rotating a projector onto `diag(1, …, 1, 0, …, 0)`.
#[derive(Clone, Debug)]
pub struct Diagonalizer {
    pub unitary: CMatrix,
    pub rank: usize,
}

/// Canonical diagonalizing unitary: Gram–Schmidt over the columns of `Π` in ascending
/// order gives the first `rank` rows, the columns of `1 − Π` complete the basis.
pub fn diagonalizer(proj: &LocalProjector) -> Result<Diagonalizer, SimulatorError> {
    let rank = proj.rank();
    if rank == 0 {
        return Err(SimulatorError::ZeroRank);
    }
    let dim = proj.matrix().nrows();
    let complement = CMatrix::identity(dim, dim) - proj.matrix();
    let mut basis: Vec<DVector<Complex64>> = Vec::with_capacity(dim);
    extend_orthonormal(&mut basis, proj.matrix(), rank);
    if basis.len() != rank {
        return Err(SimulatorError::DiagonalizationFailed {
            found: basis.len(),
            rank,
        });
    }
    extend_orthonormal(&mut basis, &complement, dim);
    if basis.len() != dim {
        return Err(SimulatorError::DiagonalizationFailed {
            found: basis.len(),
            rank,
        });
    }
    let unitary = CMatrix::from_fn(dim, dim, |row, col| basis[row][col].conj());
    Ok(Diagonalizer { unitary, rank })
}

fn extend_orthonormal(basis: &mut Vec<DVector<Complex64>>, source: &CMatrix, limit: usize) {
    for col in 0..source.ncols() {
        if basis.len() >= limit {
            break;
        }
        let mut v: DVector<Complex64> = source.column(col).into_owned();
        // two passes of modified Gram–Schmidt
        for _ in 0..2 {
            for u in basis.iter() {
                let overlap = u.dotc(&v);
                v -= u * overlap;
            }
        }
        let norm = v.norm();
        if norm > TOLERANCE {
            basis.push(v / Complex64::new(norm, 0.0));
        }
    }
}

/// Apply the diagonalizing unitary to the projector's support.
pub fn rotate_into_fixed_subspace(state: &mut StateVector, support: &[usize], diag: &Diagonalizer) {
    let n = state.n;
    apply_matrix(&mut state.amps, n, &diag.unitary, support);
}

/// Born probabilities of the local computational basis outcomes on `support`.
pub fn local_probabilities(state: &StateVector, support: &[usize]) -> Vec<f64> {
    let offsets = local_offsets(support);
    let mut probs = vec![0.0; offsets.len()];
    for base in block_bases(state.n, support) {
        for (a, &off) in offsets.iter().enumerate() {
            probs[a] += state.amps[base + off].norm_sqr();
        }
    }
    probs
}

/// Collapse `support` onto local outcome `extracted`, then overwrite it with the
/// fresh basis state `fresh`. The rest of the register keeps its conditional state.
pub fn collapse_and_refill(
    state: &mut StateVector,
    support: &[usize],
    extracted: usize,
    fresh: usize,
) -> Result<(), SimulatorError> {
    let offsets = local_offsets(support);
    let p = local_probabilities(state, support)[extracted];
    if p < BRANCH_CUTOFF {
        return Err(SimulatorError::ImpossibleOutcome(extracted));
    }
    let scale = 1.0 / p.sqrt();
    let mut amps = vec![ZERO; state.amps.len()];
    for base in block_bases(state.n, support) {
        amps[base + offsets[fresh]] = state.amps[base + offsets[extracted]] * scale;
    }
    state.amps = amps;
    Ok(())
}

/// Swap-and-rotate in trajectory form: rotate the violated block into the fixed
/// subspace, read out its local index (which must be below the rank), and refill the
/// block with a fresh uniformly random basis state.
///
/// Draw order: one `uniform` for the readout only when more than one outcome is
/// possible, then `bits(k)` for the fresh block.
pub fn resample(
    state: &mut StateVector,
    proj: &LocalProjector,
    diag: &Diagonalizer,
    rng: &mut QlllRng,
) -> Result<usize, SimulatorError> {
    state.check_support(proj.support())?;
    let p_fail = projector_energy(state, proj);
    if p_fail < 1.0 - TOLERANCE {
        return Err(SimulatorError::NotInRange(p_fail));
    }
    rotate_into_fixed_subspace(state, proj.support(), diag);
    let probs = local_probabilities(state, proj.support());
    let extracted = sample_outcome(&probs, rng);
    if extracted >= diag.rank {
        return Err(SimulatorError::ExtractedOutsideRank {
            extracted,
            rank: diag.rank,
        });
    }
    let fresh = rng.bits(proj.k()) as usize;
    collapse_and_refill(state, proj.support(), extracted, fresh)?;
    Ok(extracted)
}

/// Born sampling over the outcomes at or above [`BRANCH_CUTOFF`]; no draw when only one
/// outcome is possible.
fn sample_outcome(probs: &[f64], rng: &mut QlllRng) -> usize {
    let candidates: Vec<usize> = (0..probs.len())
        .filter(|&a| probs[a] >= BRANCH_CUTOFF)
        .collect();
    match candidates.as_slice() {
        [] => 0,
        [only] => *only,
        _ => {
            let total: f64 = candidates.iter().map(|&a| probs[a]).sum();
            let target = rng.uniform() * total;
            let mut acc = 0.0;
            for &a in &candidates {
                acc += probs[a];
                if target < acc {
                    return a;
                }
            }
            *candidates.last().expect("non-empty")
        }
    }
}
