//! End-to-end runs: sampled trajectories and exact history enumeration.

mod tree;

pub use tree::{enumerate_histories, EnumerateOptions, HistoryLeaf, HistoryTree, InitialCondition};

use rayon::prelude::*;
use thiserror::Error;

use crate::analysis::{choose_budget, AnalysisError, BoundReport, LllParams};
use crate::instance::{
    lll_margin, validate_instance, MarginReport, QsatInstance, ValidationReport, TOLERANCE,
};
use crate::rng::{split_seed, QlllRng};
use crate::scheduler::{format_bits, Next, SchedulerError, StackMachine};
use crate::simulator::{
    coherent_measure, diagonalizer, energy, resample, Diagonalizer, SimulatorError, StateVector,
};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("instance failed validation: {0:?}")]
    InvalidInstance(ValidationReport),
    #[error("monotone fixing cannot be asserted on a non-commuting instance")]
    UnverifiableAssertion,
    #[error("monotone fixing violated after fixing projector {projector} (step {step}): {detail}")]
    MonotoneFixing {
        step: usize,
        projector: usize,
        detail: String,
    },
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("invalid run parameters: {0}")]
    InvalidParameters(String),
    #[error("history tree exceeded the node cap of {cap}")]
    NodeCap {
        cap: usize,
        partial: Box<HistoryTree>,
    },
    #[error(transparent)]
    Simulator(#[from] SimulatorError),
    #[error(transparent)]
    Scheduler(#[from] SchedulerError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Status {
    Success,
    BudgetExhausted,
    /// Terminated on an instance that failed the commutation check, so low energy is
    /// not guaranteed.
    Unverified,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Success => "SUCCESS",
            Status::BudgetExhausted => "BUDGET_EXHAUSTED",
            Status::Unverified => "UNVERIFIED",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunParams {
    pub epsilon: f64,
    /// Maximum number of failed measurements.
    pub budget: usize,
    /// `m + budget·d`.
    pub max_steps: usize,
    pub seed: u64,
    pub assert_lemma3: bool,
}

impl RunParams {
    pub fn new(inst: &QsatInstance, epsilon: f64, budget: usize, seed: u64) -> Self {
        Self {
            epsilon,
            budget,
            max_steps: inst.m() + budget * inst.d(),
            seed,
            assert_lemma3: false,
        }
    }

    pub fn assert_lemma3(mut self, on: bool) -> Self {
        self.assert_lemma3 = on;
        self
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    fn check(&self, inst: &QsatInstance) -> Result<(), SolverError> {
        if self.budget == 0 {
            return Err(SolverError::InvalidParameters(
                "budget must be at least 1".into(),
            ));
        }
        if self.max_steps != inst.m() + self.budget * inst.d() {
            return Err(SolverError::InvalidParameters(format!(
                "max_steps {} differs from m + budget·d = {}",
                self.max_steps,
                inst.m() + self.budget * inst.d()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ExecutionLog {
    pub bits: Vec<bool>,
    pub t: usize,
    /// The top level completed; false when the budget ran out.
    pub terminated: bool,
}

impl ExecutionLog {
    pub fn to_bit_string(&self) -> String {
        format_bits(&self.bits)
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct TrajectoryResult {
    pub status: Status,
    pub log: ExecutionLog,
    pub final_state: StateVector,
    pub energies: Vec<f64>,
    /// Local index read out of each resampled block, one per failure.
    pub extracted: Vec<usize>,
    /// Projector targeted by each measurement.
    pub measured: Vec<usize>,
    /// Initial basis state, when drawn from the seed.
    pub initial: Option<usize>,
}

impl TrajectoryResult {
    pub fn max_energy(&self) -> f64 {
        self.energies.iter().copied().fold(0.0, f64::max)
    }
}

/// A validated instance with its diagonalizers, ready to run.
#[derive(Clone, Debug)]
pub struct Solver<'a> {
    inst: &'a QsatInstance,
    diagonalizers: Vec<Diagonalizer>,
    report: ValidationReport,
}

impl<'a> Solver<'a> {
    /// Validates the instance. Instances whose only defect is non-commutation are
    /// accepted but their results are marked unverified.
    pub fn new(inst: &'a QsatInstance) -> Result<Self, SolverError> {
        let report = validate_instance(inst);
        if !report.passed && !report.only_commutation_failures() {
            return Err(SolverError::InvalidInstance(report));
        }
        let diagonalizers = inst
            .projectors()
            .iter()
            .map(diagonalizer)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            inst,
            diagonalizers,
            report,
        })
    }

    pub fn instance(&self) -> &QsatInstance {
        self.inst
    }

    pub fn validation(&self) -> &ValidationReport {
        &self.report
    }

    /// Every check passed, commutation included.
    pub fn verified(&self) -> bool {
        self.report.passed
    }

    pub(crate) fn diagonalizer(&self, i: usize) -> &Diagonalizer {
        &self.diagonalizers[i]
    }

    /// One trajectory from a uniformly random basis state drawn from the seed.
    pub fn run_trajectory(&self, params: &RunParams) -> Result<TrajectoryResult, SolverError> {
        let mut rng = QlllRng::from_seed(params.seed);
        let x = rng.bits(self.inst.n()) as usize;
        let mut result = self.run(StateVector::basis(self.inst.n(), x), rng, params)?;
        result.initial = Some(x);
        Ok(result)
    }

    /// One trajectory from a caller-supplied start; the seed drives measurements and
    /// resampling only.
    pub fn run_trajectory_from(
        &self,
        state: StateVector,
        params: &RunParams,
    ) -> Result<TrajectoryResult, SolverError> {
        if state.n() != self.inst.n() {
            return Err(SolverError::InvalidParameters(format!(
                "state has {} qubits, instance has {}",
                state.n(),
                self.inst.n()
            )));
        }
        self.run(state, QlllRng::from_seed(params.seed), params)
    }

    /// Independent trajectories with seeds `split_seed(params.seed, index)`, run in
    /// parallel on the current rayon pool and returned in index order. `summarize` maps
    /// each result to what the caller keeps.
    pub fn run_trials<R, F>(
        &self,
        params: &RunParams,
        trials: usize,
        summarize: F,
    ) -> Vec<Result<R, SolverError>>
    where
        R: Send,
        F: Fn(TrajectoryResult) -> R + Sync,
    {
        (0..trials)
            .into_par_iter()
            .map(|i| {
                self.run_trajectory(&params.with_seed(split_seed(params.seed, i as u64)))
                    .map(&summarize)
            })
            .collect()
    }

    fn run(
        &self,
        mut state: StateVector,
        mut rng: QlllRng,
        params: &RunParams,
    ) -> Result<TrajectoryResult, SolverError> {
        params.check(self.inst)?;
        if params.assert_lemma3 && !self.verified() {
            return Err(SolverError::UnverifiableAssertion);
        }
        let inst = self.inst;
        let mut machine = StackMachine::new(params.budget);
        let mut bits = Vec::new();
        let mut extracted = Vec::new();
        let mut measured = Vec::new();
        // (projector, energies right after its failed measurement) per open fix call
        let mut open_fixes: Vec<(usize, Vec<f64>)> = Vec::new();

        while let Next::Measure(i) = machine.current(inst) {
            let proj = inst.projector(i);
            let branches = coherent_measure(&state, proj)?;
            let failed = match (&branches.success_state, &branches.fail_state) {
                (Some(_), None) => false,
                (None, Some(_)) => true,
                (Some(_), Some(_)) => rng.uniform() < branches.p_fail,
                (None, None) => {
                    return Err(SolverError::Invariant(format!(
                        "measurement of projector {i} has no branch above the cutoff"
                    )))
                }
            };
            state = if failed {
                branches.fail_state
            } else {
                branches.success_state
            }
            .expect("chosen branch is present");
            measured.push(i);
            bits.push(failed);

            if failed {
                if params.assert_lemma3 {
                    open_fixes.push((i, energy(&state, inst)));
                }
                extracted.push(resample(
                    &mut state,
                    proj,
                    &self.diagonalizers[i],
                    &mut rng,
                )?);
                machine.step_mut(inst, true)?;
                continue;
            }
            let event = machine.step_mut(inst, false)?;
            if params.assert_lemma3 {
                for fixed in event.returned {
                    let (opened, before) = open_fixes.pop().ok_or_else(|| {
                        SolverError::Invariant("fix returned without being opened".into())
                    })?;
                    if opened != fixed {
                        return Err(SolverError::Invariant(format!(
                            "fix of {fixed} returned while {opened} was innermost"
                        )));
                    }
                    check_monotone(&state, inst, fixed, &before, bits.len())?;
                }
            }
        }

        let energies = energy(&state, inst);
        let t = machine.failures();
        let terminated = !machine.is_exhausted();
        if terminated && bits.len() > inst.m() + t * inst.d() {
            return Err(SolverError::Invariant(format!(
                "{} measurements exceed m + t·d = {}",
                bits.len(),
                inst.m() + t * inst.d()
            )));
        }
        let status = if !terminated {
            Status::BudgetExhausted
        } else if self.verified() {
            let worst = energies.iter().copied().fold(0.0, f64::max);
            if worst > TOLERANCE {
                return Err(SolverError::Invariant(format!(
                    "terminated with energy {worst:.3e} on a commuting instance"
                )));
            }
            Status::Success
        } else {
            Status::Unverified
        };
        Ok(TrajectoryResult {
            status,
            log: ExecutionLog {
                bits,
                t,
                terminated,
            },
            final_state: state,
            energies,
            extracted,
            measured,
            initial: None,
        })
    }
}

fn check_monotone(
    state: &StateVector,
    inst: &QsatInstance,
    fixed: usize,
    before: &[f64],
    step: usize,
) -> Result<(), SolverError> {
    let after = energy(state, inst);
    if after[fixed] > TOLERANCE {
        return Err(SolverError::MonotoneFixing {
            step,
            projector: fixed,
            detail: format!("fixed projector left with energy {:.3e}", after[fixed]),
        });
    }
    for (j, (&b, &a)) in before.iter().zip(&after).enumerate() {
        if b <= TOLERANCE && a > TOLERANCE {
            return Err(SolverError::MonotoneFixing {
                step,
                projector: fixed,
                detail: format!("projector {j} went from satisfied to energy {a:.3e}"),
            });
        }
    }
    Ok(())
}

/// Budget and parameters chosen for a solve.
#[derive(Clone, Debug)]
pub struct RunPlan {
    pub params: RunParams,
    pub margin: MarginReport,
    /// Present when the margin is positive.
    pub bound: Option<BoundReport>,
    pub warning: Option<String>,
}

/// Budget used when the degree condition fails and no bound exists.
pub fn fallback_budget(m: usize, epsilon: f64) -> usize {
    4 * (m + (1.0 / epsilon).log2().ceil().max(0.0) as usize)
}

/// Pick the failure budget for `epsilon`. A violated degree condition is not an error:
/// the run is still well defined, so a fallback budget is used and a warning returned.
pub fn plan_run(inst: &QsatInstance, epsilon: f64, seed: u64) -> Result<RunPlan, SolverError> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(SolverError::InvalidParameters(format!(
            "epsilon must lie in (0, 1), got {epsilon}"
        )));
    }
    let margin = lll_margin(inst);
    let (budget, bound, warning) = match choose_budget(LllParams::of(inst), epsilon) {
        Ok(report) => (report.budget, Some(report), None),
        Err(AnalysisError::MarginViolated(value)) => {
            let budget = fallback_budget(inst.m(), epsilon);
            let warning = format!(
                "degree condition violated (margin {value:.4} bits); no success guarantee, using budget {budget}"
            );
            (budget, None, Some(warning))
        }
        Err(e) => return Err(e.into()),
    };
    Ok(RunPlan {
        params: RunParams::new(inst, epsilon, budget, seed),
        margin,
        bound,
        warning,
    })
}

#[derive(Clone, Debug)]
pub struct Solved {
    pub plan: RunPlan,
    pub result: TrajectoryResult,
}

/// Plan the budget for `epsilon` and run one trajectory.
pub fn solve(inst: &QsatInstance, epsilon: f64, seed: u64) -> Result<Solved, SolverError> {
    let plan = plan_run(inst, epsilon, seed)?;
    let result = Solver::new(inst)?.run_trajectory(&plan.params)?;
    Ok(Solved { plan, result })
}
