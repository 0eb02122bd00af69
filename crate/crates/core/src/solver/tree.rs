//! Exact enumeration of every measurement history with its probability.
//!
//! The fresh randomness used by each resample is branched over instead of sampled, so
//! the tree covers the full coherent execution. Depth-first order is fixed: outcome 0
//! before 1, then extracted index ascending, then fresh block ascending.

use std::collections::HashMap;

use super::{ExecutionLog, RunParams, Solver, SolverError, Status};
use crate::instance::{QsatInstance, TOLERANCE};
use crate::scheduler::{Next, StackMachine};
use crate::simulator::{
    coherent_measure, collapse_and_refill, energy, local_probabilities, rotate_into_fixed_subspace,
    SimulatorError, StateVector, BRANCH_CUTOFF,
};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InitialCondition {
    /// Start from `|x⟩`; resample `t` (0-based) refills its block from bits
    /// `[t·k, (t+1)·k)` of `y`, bit `j` going to support qubit `j`.
    Basis { x: usize, y: Vec<bool> },
    /// Uniform average over all basis inputs and all fresh blocks.
    Averaged,
}

#[derive(Clone, Debug)]
pub struct HistoryLeaf {
    pub log: ExecutionLog,
    pub status: Status,
    pub probability: f64,
    pub extracted: Vec<usize>,
    /// Fresh block written by each resample.
    pub refills: Vec<usize>,
    pub max_energy: f64,
    /// Kept only in basis mode with [`EnumerateOptions::keep_states`].
    pub final_state: Option<StateVector>,
}

#[derive(Clone, Debug)]
pub struct HistoryTree {
    pub leaves: Vec<HistoryLeaf>,
    pub initial: InitialCondition,
    pub budget: usize,
    /// Nodes visited, leaves included.
    pub nodes: usize,
    /// Probability of branches dropped below the cutoff.
    pub pruned_mass: f64,
    /// False when enumeration stopped at the node cap.
    pub complete: bool,
}

impl HistoryTree {
    pub fn total_probability(&self) -> f64 {
        self.leaves.iter().fold(0.0, |acc, l| acc + l.probability)
    }

    /// Exact probability of running out of budget.
    pub fn exhausted_probability(&self) -> f64 {
        self.leaves
            .iter()
            .filter(|l| l.status == Status::BudgetExhausted)
            .fold(0.0, |acc, l| acc + l.probability)
    }

    pub fn terminated_probability(&self) -> f64 {
        self.total_probability() - self.exhausted_probability()
    }

    /// Probability of each distinct log, in first-seen order.
    pub fn log_distribution(&self) -> Vec<(ExecutionLog, f64)> {
        let mut index: HashMap<&ExecutionLog, usize> = HashMap::new();
        let mut out: Vec<(ExecutionLog, f64)> = Vec::new();
        for leaf in &self.leaves {
            match index.get(&leaf.log) {
                Some(&i) => out[i].1 += leaf.probability,
                None => {
                    index.insert(&leaf.log, out.len());
                    out.push((leaf.log.clone(), leaf.probability));
                }
            }
        }
        out
    }

    /// No distinct log is a proper prefix of another.
    pub fn logs_prefix_free(&self) -> bool {
        let mut logs: Vec<&[bool]> = self.leaves.iter().map(|l| l.log.bits.as_slice()).collect();
        logs.sort();
        logs.dedup();
        // in sorted order a prefix immediately precedes some extension of it
        logs.windows(2).all(|w| !w[1].starts_with(w[0]))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EnumerateOptions {
    pub node_cap: usize,
    pub keep_states: bool,
}

impl Default for EnumerateOptions {
    fn default() -> Self {
        Self {
            node_cap: 2_000_000,
            keep_states: false,
        }
    }
}

/// Shorthand for `Solver::new(inst)?.enumerate_histories(..)`.
pub fn enumerate_histories(
    inst: &QsatInstance,
    params: &RunParams,
    initial: InitialCondition,
    options: EnumerateOptions,
) -> Result<HistoryTree, SolverError> {
    Solver::new(inst)?.enumerate_histories(params, initial, options)
}

struct Node {
    state: StateVector,
    machine: StackMachine,
    bits: Vec<bool>,
    probability: f64,
    extracted: Vec<usize>,
    refills: Vec<usize>,
}

/// Leaves with equal log, extracted indices and refills are merged.
type LeafKey = (Vec<bool>, Vec<usize>, Vec<usize>);

struct Walk<'s, 'a> {
    solver: &'s Solver<'a>,
    initial: &'s InitialCondition,
    options: EnumerateOptions,
    nodes: usize,
    pruned: f64,
    leaves: Vec<HistoryLeaf>,
    by_key: HashMap<LeafKey, usize>,
}

impl Solver<'_> {
    pub fn enumerate_histories(
        &self,
        params: &RunParams,
        initial: InitialCondition,
        options: EnumerateOptions,
    ) -> Result<HistoryTree, SolverError> {
        params.check(self.inst)?;
        let n = self.inst.n();
        let roots: Vec<(usize, f64)> = match &initial {
            InitialCondition::Basis { x, y } => {
                if *x >= 1 << n {
                    return Err(SolverError::InvalidParameters(format!(
                        "basis index {x} out of range for {n} qubits"
                    )));
                }
                if y.len() < self.inst.k() * params.budget {
                    return Err(SolverError::InvalidParameters(format!(
                        "fresh-bit string has {} bits, need k·budget = {}",
                        y.len(),
                        self.inst.k() * params.budget
                    )));
                }
                vec![(*x, 1.0)]
            }
            InitialCondition::Averaged => {
                let weight = (-(n as f64)).exp2();
                (0..1usize << n).map(|x| (x, weight)).collect()
            }
        };
        let mut walk = Walk {
            solver: self,
            initial: &initial,
            options,
            nodes: 0,
            pruned: 0.0,
            leaves: Vec::new(),
            by_key: HashMap::new(),
        };
        let mut outcome = Ok(());
        for (x, weight) in roots {
            let root = Node {
                state: StateVector::basis(n, x),
                machine: StackMachine::new(params.budget),
                bits: Vec::new(),
                probability: weight,
                extracted: Vec::new(),
                refills: Vec::new(),
            };
            outcome = walk.visit(root);
            if outcome.is_err() {
                break;
            }
        }
        let complete = !matches!(outcome, Err(Capped));
        let tree = HistoryTree {
            leaves: walk.leaves,
            initial: initial.clone(),
            budget: params.budget,
            nodes: walk.nodes,
            pruned_mass: walk.pruned,
            complete,
        };
        match outcome {
            Ok(()) => Ok(tree),
            Err(Capped) => Err(SolverError::NodeCap {
                cap: options.node_cap,
                partial: Box::new(tree),
            }),
            Err(Failed(e)) => Err(e),
        }
    }
}

enum Stop {
    Capped,
    Failed(SolverError),
}
use Stop::{Capped, Failed};

impl<T: Into<SolverError>> From<T> for Stop {
    fn from(e: T) -> Self {
        Failed(e.into())
    }
}

impl Walk<'_, '_> {
    fn visit(&mut self, node: Node) -> Result<(), Stop> {
        self.nodes += 1;
        if self.nodes > self.options.node_cap {
            return Err(Capped);
        }
        let inst = self.solver.inst;
        let Next::Measure(i) = node.machine.current(inst) else {
            return self.leaf(node).map_err(Failed);
        };
        let proj = inst.projector(i);
        let branches = coherent_measure(&node.state, proj)?;

        let p_success = node.probability * branches.p_success().max(0.0);
        match branches.success_state {
            Some(state) if p_success >= BRANCH_CUTOFF => {
                let mut machine = node.machine.clone();
                machine.step_mut(inst, false)?;
                let mut bits = node.bits.clone();
                bits.push(false);
                self.visit(Node {
                    state,
                    machine,
                    bits,
                    probability: p_success,
                    extracted: node.extracted.clone(),
                    refills: node.refills.clone(),
                })?;
            }
            _ => self.pruned += p_success,
        }

        let p_fail = node.probability * branches.p_fail;
        let Some(mut failed) = branches.fail_state.filter(|_| p_fail >= BRANCH_CUTOFF) else {
            self.pruned += p_fail;
            return Ok(());
        };
        let diag = self.solver.diagonalizer(i);
        rotate_into_fixed_subspace(&mut failed, proj.support(), diag);
        let readout = local_probabilities(&failed, proj.support());
        let mut machine = node.machine;
        machine.step_mut(inst, true)?;
        let mut bits = node.bits;
        bits.push(true);
        let block = node.refills.len();

        for (a, &pa) in readout.iter().enumerate() {
            let p_read = p_fail * pa;
            if p_read < BRANCH_CUTOFF {
                self.pruned += p_read;
                continue;
            }
            if a >= diag.rank {
                return Err(SimulatorError::ExtractedOutsideRank {
                    extracted: a,
                    rank: diag.rank,
                }
                .into());
            }
            for (fresh, weight) in self.refill_choices(block, proj.k()) {
                let probability = p_read * weight;
                if probability < BRANCH_CUTOFF {
                    self.pruned += probability;
                    continue;
                }
                let mut state = failed.clone();
                collapse_and_refill(&mut state, proj.support(), a, fresh)?;
                let mut extracted = node.extracted.clone();
                extracted.push(a);
                let mut refills = node.refills.clone();
                refills.push(fresh);
                self.visit(Node {
                    state,
                    machine: machine.clone(),
                    bits: bits.clone(),
                    probability,
                    extracted,
                    refills,
                })?;
            }
        }
        Ok(())
    }

    fn refill_choices(&self, block: usize, k: usize) -> Vec<(usize, f64)> {
        match self.initial {
            InitialCondition::Basis { y, .. } => {
                let fresh = (0..k).map(|j| usize::from(y[block * k + j]) << j).sum();
                vec![(fresh, 1.0)]
            }
            InitialCondition::Averaged => {
                let weight = (-(k as f64)).exp2();
                (0..1usize << k).map(|fresh| (fresh, weight)).collect()
            }
        }
    }

    fn leaf(&mut self, node: Node) -> Result<(), SolverError> {
        let inst = self.solver.inst;
        let t = node.machine.failures();
        let exhausted = node.machine.is_exhausted();
        let max_energy = energy(&node.state, inst).into_iter().fold(0.0, f64::max);
        let status = if exhausted {
            Status::BudgetExhausted
        } else {
            if node.bits.len() > inst.m() + t * inst.d() {
                return Err(SolverError::Invariant(format!(
                    "history {:?} exceeds m + t·d measurements",
                    node.bits
                )));
            }
            if self.solver.verified() {
                if max_energy > TOLERANCE {
                    return Err(SolverError::Invariant(format!(
                        "terminated history left energy {max_energy:.3e}"
                    )));
                }
                Status::Success
            } else {
                Status::Unverified
            }
        };
        let key = (node.bits, node.extracted, node.refills);
        if let Some(&existing) = self.by_key.get(&key) {
            let leaf = &mut self.leaves[existing];
            leaf.probability += node.probability;
            leaf.max_energy = leaf.max_energy.max(max_energy);
            leaf.final_state = None;
            return Ok(());
        }
        let keep =
            self.options.keep_states && matches!(self.initial, InitialCondition::Basis { .. });
        self.by_key.insert(key.clone(), self.leaves.len());
        let (bits, extracted, refills) = key;
        self.leaves.push(HistoryLeaf {
            log: ExecutionLog {
                bits,
                t,
                terminated: !exhausted,
            },
            status,
            probability: node.probability,
            extracted,
            refills,
            max_energy,
            final_state: keep.then_some(node.state),
        });
        Ok(())
    }
}
