//! Commuting k-local projector instances: representation, validation, the
//! neighborhood structure that drives the resampling schedule, and the local
//! lemma degree condition.

mod dimacs;
mod generate;
mod json;

pub use dimacs::{from_dimacs, to_dimacs};
pub use generate::{conjugate_by_product, gen_random_instance, random_su2, InstanceGenerator};
pub use json::{InstanceFile, ProjectorFile};

use std::f64::consts::E;
use std::fmt;

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::linalg::{embed, max_abs_diff, CMatrix, ONE};
use crate::simulator::MAX_QUBITS;

/// Tolerance for hermiticity, idempotency, rank and commutation checks.
pub const TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("projector support must be strictly increasing, got {0:?}")]
    UnsortedSupport(Vec<usize>),
    #[error("projector support is empty")]
    EmptySupport,
    #[error("matrix is {rows}x{cols} but a support of {k} qubits needs {dim}x{dim}")]
    DimensionMismatch {
        rows: usize,
        cols: usize,
        k: usize,
        dim: usize,
    },
    #[error("projector {index} acts on qubit {qubit}, outside 0..{n}")]
    QubitOutOfRange {
        index: usize,
        qubit: usize,
        n: usize,
    },
    #[error("instance has no projectors")]
    Empty,
    #[error("projector {index} acts on {found} qubits but the instance is {expected}-local")]
    MixedLocality {
        index: usize,
        found: usize,
        expected: usize,
    },
    #[error("projector index {index} out of range for {m} projectors")]
    IndexOutOfRange { index: usize, m: usize },
    #[error("DIMACS line {line}: {message}")]
    Dimacs { line: usize, message: String },
    #[error("invalid generator request: {0}")]
    Generator(String),
    #[error("invalid instance JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{n} qubits exceed the statevector limit of {max}")]
    TooManyQubits { n: usize, max: usize },
    #[error("{0}")]
    Unsupported(String),
}

/// A projector acting on `support.len()` qubits, stored as a dense local matrix.
///
/// Local basis indices are little-endian: `support[0]` is the least significant bit.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalProjector {
    support: Vec<usize>,
    matrix: CMatrix,
    rank: usize,
}

impl LocalProjector {
    pub fn new(support: Vec<usize>, matrix: CMatrix) -> Result<Self, InstanceError> {
        if support.is_empty() {
            return Err(InstanceError::EmptySupport);
        }
        if support.windows(2).any(|w| w[0] >= w[1]) {
            return Err(InstanceError::UnsortedSupport(support));
        }
        let k = support.len();
        let dim = 1usize << k;
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(InstanceError::DimensionMismatch {
                rows: matrix.nrows(),
                cols: matrix.ncols(),
                k,
                dim,
            });
        }
        let rank = numerical_rank(&matrix);
        Ok(Self {
            support,
            matrix,
            rank,
        })
    }

    /// Rank-`falsifying.len()` diagonal projector onto the given local basis states.
    pub fn diagonal(support: Vec<usize>, states: &[usize]) -> Result<Self, InstanceError> {
        let dim = 1usize << support.len();
        let mut matrix = CMatrix::zeros(dim, dim);
        for &s in states {
            if s >= dim {
                return Err(InstanceError::Unsupported(format!(
                    "local basis state {s} does not fit in {} qubits",
                    support.len()
                )));
            }
            matrix[(s, s)] = ONE;
        }
        Self::new(support, matrix)
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    /// Locality of the projector.
    pub fn k(&self) -> usize {
        self.support.len()
    }

    /// Number of eigenvalues within [`TOLERANCE`] of 1.
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn hermiticity_deviation(&self) -> f64 {
        max_abs_diff(&self.matrix, &self.matrix.adjoint())
    }

    pub fn idempotency_deviation(&self) -> f64 {
        max_abs_diff(&(&self.matrix * &self.matrix), &self.matrix)
    }

    /// Diagonal in the computational basis with 0/1 entries only.
    pub fn is_classical(&self) -> bool {
        self.matrix.iter().enumerate().all(|(idx, z)| {
            let (row, col) = (idx % self.matrix.nrows(), idx / self.matrix.nrows());
            if row == col {
                *z == Complex64::new(0.0, 0.0) || *z == ONE
            } else {
                z.norm() == 0.0
            }
        })
    }

    pub fn overlaps(&self, other: &LocalProjector) -> bool {
        self.support.iter().any(|q| other.support.contains(q))
    }
}

fn numerical_rank(matrix: &CMatrix) -> usize {
    let hermitian_part = (matrix + matrix.adjoint()) * Complex64::new(0.5, 0.0);
    hermitian_part
        .symmetric_eigenvalues()
        .iter()
        .filter(|&&ev| (ev - 1.0).abs() <= TOLERANCE)
        .count()
}

/// An immutable commuting k-QSAT instance together with its neighborhood structure.
#[derive(Clone, Debug)]
pub struct QsatInstance {
    n: usize,
    k: usize,
    projectors: Vec<LocalProjector>,
    neighborhoods: Vec<Vec<usize>>,
    d: usize,
    declared_rank: Option<usize>,
}

impl QsatInstance {
    pub fn new(n: usize, projectors: Vec<LocalProjector>) -> Result<Self, InstanceError> {
        if n > MAX_QUBITS {
            return Err(InstanceError::TooManyQubits { n, max: MAX_QUBITS });
        }
        let k = projectors.first().ok_or(InstanceError::Empty)?.k();
        for (index, p) in projectors.iter().enumerate() {
            if p.k() != k {
                return Err(InstanceError::MixedLocality {
                    index,
                    found: p.k(),
                    expected: k,
                });
            }
            if let Some(&qubit) = p.support().iter().find(|&&q| q >= n) {
                return Err(InstanceError::QubitOutOfRange { index, qubit, n });
            }
        }

        let mut on_qubit: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, p) in projectors.iter().enumerate() {
            for &q in p.support() {
                on_qubit[q].push(i);
            }
        }
        let neighborhoods: Vec<Vec<usize>> = (0..projectors.len())
            .map(|i| {
                let mut others: Vec<usize> = projectors[i]
                    .support()
                    .iter()
                    .flat_map(|&q| on_qubit[q].iter().copied())
                    .filter(|&j| j != i)
                    .collect();
                others.sort_unstable();
                others.dedup();
                std::iter::once(i).chain(others).collect()
            })
            .collect();
        let d = neighborhoods.iter().map(Vec::len).max().unwrap_or(0);

        Ok(Self {
            n,
            k,
            projectors,
            neighborhoods,
            d,
            declared_rank: None,
        })
    }

    /// Attach a user-declared rank bound; [`validate_instance`] checks it against the
    /// computed ranks.
    pub fn with_declared_rank(mut self, r: usize) -> Self {
        self.declared_rank = Some(r);
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.projectors.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Largest inclusive neighborhood.
    pub fn d(&self) -> usize {
        self.d
    }

    /// Largest computed projector rank.
    pub fn r(&self) -> usize {
        self.projectors
            .iter()
            .map(LocalProjector::rank)
            .max()
            .unwrap_or(0)
    }

    pub fn declared_rank(&self) -> Option<usize> {
        self.declared_rank
    }

    pub fn projectors(&self) -> &[LocalProjector] {
        &self.projectors
    }

    pub fn projector(&self, i: usize) -> &LocalProjector {
        &self.projectors[i]
    }

    /// Inclusive neighborhood without bounds checking; see [`neighborhood`].
    pub(crate) fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighborhoods[i]
    }

    /// Largest number of projectors acting on one qubit.
    pub fn qubit_degree(&self) -> usize {
        let mut counts = vec![0usize; self.n];
        for p in &self.projectors {
            for &q in p.support() {
                counts[q] += 1;
            }
        }
        counts.into_iter().max().unwrap_or(0)
    }

    pub fn is_classical(&self) -> bool {
        self.projectors.iter().all(LocalProjector::is_classical)
    }
}

/// `Γ⁺(Π_i)`: `i` first, then every projector sharing a qubit with it in ascending order.
pub fn neighborhood(inst: &QsatInstance, i: usize) -> Result<&[usize], InstanceError> {
    if i >= inst.m() {
        return Err(InstanceError::IndexOutOfRange {
            index: i,
            m: inst.m(),
        });
    }
    Ok(inst.neighbors(i))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    NonHermitian,
    NonIdempotent,
    ZeroRank,
    RankAboveDeclared,
    NonCommuting,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ViolationKind::NonHermitian => "non-hermitian",
            ViolationKind::NonIdempotent => "non-idempotent",
            ViolationKind::ZeroRank => "zero rank",
            ViolationKind::RankAboveDeclared => "rank above declared bound",
            ViolationKind::NonCommuting => "non-commuting",
        };
        f.write_str(name)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub projectors: Vec<usize>,
    pub deviation: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    fn from_violations(violations: Vec<Violation>) -> Self {
        Self {
            passed: violations.is_empty(),
            violations,
        }
    }

    /// True when the only problems are commutation failures.
    pub fn only_commutation_failures(&self) -> bool {
        self.violations
            .iter()
            .all(|v| v.kind == ViolationKind::NonCommuting)
    }
}

/// Check every projector and every overlapping pair. Structural problems (dimension,
/// locality, qubit range) are rejected when the instance is built, so this never fails.
pub fn validate_instance(inst: &QsatInstance) -> ValidationReport {
    let mut violations = Vec::new();
    for (i, p) in inst.projectors().iter().enumerate() {
        let herm = p.hermiticity_deviation();
        if herm > TOLERANCE {
            violations.push(Violation {
                kind: ViolationKind::NonHermitian,
                projectors: vec![i],
                deviation: herm,
            });
        }
        let idem = p.idempotency_deviation();
        if idem > TOLERANCE {
            violations.push(Violation {
                kind: ViolationKind::NonIdempotent,
                projectors: vec![i],
                deviation: idem,
            });
        }
        if herm <= TOLERANCE && idem <= TOLERANCE && p.rank() == 0 {
            violations.push(Violation {
                kind: ViolationKind::ZeroRank,
                projectors: vec![i],
                deviation: 1.0,
            });
        }
        if let Some(r) = inst.declared_rank() {
            if p.rank() > r {
                violations.push(Violation {
                    kind: ViolationKind::RankAboveDeclared,
                    projectors: vec![i],
                    deviation: (p.rank() - r) as f64,
                });
            }
        }
    }

    for i in 0..inst.m() {
        for &j in inst.neighbors(i).iter().filter(|&&j| j > i) {
            let deviation = commutator_deviation(inst.projector(i), inst.projector(j));
            if deviation > TOLERANCE {
                violations.push(Violation {
                    kind: ViolationKind::NonCommuting,
                    projectors: vec![i, j],
                    deviation,
                });
            }
        }
    }
    ValidationReport::from_violations(violations)
}

/// `‖[A, B]‖_max` with both operators embedded in the union of their supports.
pub fn commutator_deviation(a: &LocalProjector, b: &LocalProjector) -> f64 {
    let mut joint: Vec<usize> = a.support().iter().chain(b.support()).copied().collect();
    joint.sort_unstable();
    joint.dedup();
    let ea = embed(a.matrix(), a.support(), &joint);
    let eb = embed(b.matrix(), b.support(), &joint);
    max_abs_diff(&(&ea * &eb), &(&eb * &ea))
}

/// The degree condition in both of its forms.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MarginReport {
    /// `k − log₂(d·e·r)` in bits.
    pub margin: f64,
    /// `d ≤ 2^k / (r·e)`.
    pub holds: bool,
    pub k: usize,
    pub d: usize,
    pub r: usize,
    /// Per-qubit degree, reported for reference only.
    pub qubit_degree: usize,
    /// `2^k / (e·r·k)`.
    pub qubit_threshold: f64,
    pub qubit_condition_holds: bool,
}

pub fn lll_margin(inst: &QsatInstance) -> MarginReport {
    let (k, d, r) = (inst.k(), inst.d(), inst.r());
    let margin = margin_bits(k, d, r);
    let qubit_threshold = 2f64.powi(k as i32) / (E * r as f64 * k as f64);
    let qubit_degree = inst.qubit_degree();
    MarginReport {
        margin,
        holds: margin >= 0.0,
        k,
        d,
        r,
        qubit_degree,
        qubit_threshold,
        qubit_condition_holds: (qubit_degree as f64) < qubit_threshold,
    }
}

/// `k − log₂(d·e·r)`.
pub fn margin_bits(k: usize, d: usize, r: usize) -> f64 {
    k as f64 - (d as f64 * E * r as f64).log2()
}
