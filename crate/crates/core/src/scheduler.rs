//! Control flow of the fixing recursion: which projector is measured next, given the
//! outcomes seen so far.
//!
//! Two formulations are kept side by side. [`next_measurement`] replays the natural
//! recursion (top level over all projectors, `fix` recursing over the inclusive
//! neighborhood on failure) and is the reference. [`StackMachine`] unrolls the same
//! recursion into an explicit frame stack with a cursor per frame, as a reversible
//! implementation would have to. [`schedule_equiv`] checks that they agree.

use std::fmt;
use std::ops::ControlFlow;

use thiserror::Error;

use crate::instance::QsatInstance;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Next {
    Measure(usize),
    Terminated,
}

impl fmt::Display for Next {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Next::Measure(i) => write!(f, "{i}"),
            Next::Terminated => f.write_str("TERMINATED"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SchedulerError {
    #[error("outcomes after termination (the run ends after {0} outcomes)")]
    AfterTermination(usize),
    #[error("machine has already terminated")]
    Terminated,
}

/// Projector the next measurement targets after `prefix`, by direct replay of the
/// recursion. `true` is a failed measurement.
pub fn next_measurement(inst: &QsatInstance, prefix: &[bool]) -> Result<Next, SchedulerError> {
    let mut replay = Replay {
        inst,
        prefix,
        pos: 0,
    };
    for i in 0..inst.m() {
        if let ControlFlow::Break(next) = replay.fix(i) {
            return Ok(Next::Measure(next));
        }
    }
    if replay.pos < prefix.len() {
        return Err(SchedulerError::AfterTermination(replay.pos));
    }
    Ok(Next::Terminated)
}

struct Replay<'a> {
    inst: &'a QsatInstance,
    prefix: &'a [bool],
    pos: usize,
}

impl Replay<'_> {
    /// Breaks with the projector whose measurement outcome is not in the prefix yet.
    fn fix(&mut self, i: usize) -> ControlFlow<usize> {
        let Some(&failed) = self.prefix.get(self.pos) else {
            return ControlFlow::Break(i);
        };
        self.pos += 1;
        if failed {
            for &j in self.inst.neighbors(i) {
                self.fix(j)?;
            }
        }
        ControlFlow::Continue(())
    }
}

/// What a stack frame iterates over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FrameTarget {
    /// The top level, iterating over every projector.
    Root,
    /// An open `fix` call, iterating over the projector's inclusive neighborhood.
    Projector(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Frame {
    pub target: FrameTarget,
    /// Position of the next member to measure.
    pub cursor: usize,
}

/// Result of one [`StackMachine::step_mut`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepEvent {
    /// Projector whose outcome was consumed.
    pub measured: usize,
    pub outcome: bool,
    /// Projectors whose `fix` call completed during this step, innermost first.
    pub returned: Vec<usize>,
    pub terminated: bool,
}

/// Explicit-stack form of the recursion. Frame 0 is the top level; every failed
/// measurement pushes a frame for the failed projector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StackMachine {
    stack: Vec<Frame>,
    consumed: usize,
    failures: usize,
    budget: Option<usize>,
    return_flags: Vec<bool>,
    terminated: bool,
}

impl StackMachine {
    /// Machine that stops once `budget` measurements have failed.
    pub fn new(budget: usize) -> Self {
        Self::with_budget(Some(budget))
    }

    /// Machine without a failure budget.
    pub fn unbounded() -> Self {
        Self::with_budget(None)
    }

    fn with_budget(budget: Option<usize>) -> Self {
        Self {
            stack: vec![Frame {
                target: FrameTarget::Root,
                cursor: 0,
            }],
            consumed: 0,
            failures: 0,
            budget,
            return_flags: Vec::new(),
            terminated: budget == Some(0),
        }
    }

    pub fn stack(&self) -> &[Frame] {
        &self.stack
    }

    /// Index of the top frame.
    pub fn depth(&self) -> usize {
        self.stack.len() - 1
    }

    /// Outcomes consumed so far.
    pub fn consumed(&self) -> usize {
        self.consumed
    }

    pub fn failures(&self) -> usize {
        self.failures
    }

    pub fn budget(&self) -> Option<usize> {
        self.budget
    }

    /// One flag per consumed outcome: whether at least one `fix` call returned.
    pub fn return_flags(&self) -> &[bool] {
        &self.return_flags
    }

    pub fn is_terminated(&self) -> bool {
        self.terminated
    }

    /// Terminated by running out of failures rather than by completing the top level.
    pub fn is_exhausted(&self) -> bool {
        self.terminated && self.budget == Some(self.failures)
    }

    pub fn current(&self, inst: &QsatInstance) -> Next {
        if self.terminated {
            return Next::Terminated;
        }
        let top = self.stack.last().expect("root frame is never popped");
        Next::Measure(match top.target {
            FrameTarget::Root => top.cursor,
            FrameTarget::Projector(p) => inst.neighbors(p)[top.cursor],
        })
    }

    pub fn step_mut(
        &mut self,
        inst: &QsatInstance,
        outcome: bool,
    ) -> Result<StepEvent, SchedulerError> {
        let Next::Measure(measured) = self.current(inst) else {
            return Err(SchedulerError::Terminated);
        };
        self.consumed += 1;
        let mut returned = Vec::new();
        if outcome {
            self.failures += 1;
            self.stack.push(Frame {
                target: FrameTarget::Projector(measured),
                cursor: 0,
            });
            if self.budget == Some(self.failures) {
                self.terminated = true;
            }
        } else {
            self.advance(inst, &mut returned);
        }
        self.return_flags.push(!returned.is_empty());
        Ok(StepEvent {
            measured,
            outcome,
            returned,
            terminated: self.terminated,
        })
    }

    /// Move the top cursor on; a frame whose cursor wraps has finished, so it is popped
    /// and its parent moves on in turn.
    fn advance(&mut self, inst: &QsatInstance, returned: &mut Vec<usize>) {
        loop {
            let top = self.stack.last_mut().expect("root frame is never popped");
            let len = match top.target {
                FrameTarget::Root => inst.m(),
                FrameTarget::Projector(p) => inst.neighbors(p).len(),
            };
            top.cursor = (top.cursor + 1) % len;
            if top.cursor != 0 {
                return;
            }
            match top.target {
                FrameTarget::Root => {
                    self.terminated = true;
                    return;
                }
                FrameTarget::Projector(p) => {
                    returned.push(p);
                    self.stack.pop();
                }
            }
        }
    }
}

/// Pure form of [`StackMachine::step_mut`].
pub fn stack_step(
    machine: &StackMachine,
    inst: &QsatInstance,
    outcome: bool,
) -> Result<StackMachine, SchedulerError> {
    let mut next = machine.clone();
    next.step_mut(inst, outcome)?;
    Ok(next)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Divergence {
    pub prefix: Vec<bool>,
    pub recursive: Next,
    pub machine: Next,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EquivReport {
    pub max_len: usize,
    /// Reachable outcome strings compared, the empty one included.
    pub strings_checked: usize,
    pub terminated_strings: usize,
    /// Terminated strings using more than `m + t·d` measurements.
    pub accounting_violations: usize,
    pub divergence: Option<Divergence>,
}

impl EquivReport {
    pub fn equivalent(&self) -> bool {
        self.divergence.is_none() && self.accounting_violations == 0
    }
}

/// Compare both schedulers on every reachable outcome string of length at most
/// `max_len`, stopping at the first divergence.
pub fn schedule_equiv(inst: &QsatInstance, max_len: usize) -> EquivReport {
    let mut report = EquivReport {
        max_len,
        strings_checked: 0,
        terminated_strings: 0,
        accounting_violations: 0,
        divergence: None,
    };
    let mut pending = vec![(Vec::new(), StackMachine::unbounded())];
    while let Some((prefix, machine)) = pending.pop() {
        report.strings_checked += 1;
        let recursive = next_measurement(inst, &prefix).unwrap_or(Next::Terminated);
        let unrolled = machine.current(inst);
        if recursive != unrolled {
            report.divergence = Some(Divergence {
                prefix,
                recursive,
                machine: unrolled,
            });
            return report;
        }
        if unrolled == Next::Terminated {
            report.terminated_strings += 1;
            let failures = prefix.iter().filter(|&&b| b).count();
            if prefix.len() > inst.m() + failures * inst.d() {
                report.accounting_violations += 1;
            }
            continue;
        }
        if prefix.len() == max_len {
            continue;
        }
        for outcome in [true, false] {
            let mut child = machine.clone();
            child
                .step_mut(inst, outcome)
                .expect("machine is live when the reference is");
            let mut extended = prefix.clone();
            extended.push(outcome);
            pending.push((extended, child));
        }
    }
    report
}

/// Parse a `0`/`1` string; any other character is rejected.
pub fn parse_bits(text: &str) -> Option<Vec<bool>> {
    text.chars()
        .map(|c| match c {
            '0' => Some(false),
            '1' => Some(true),
            _ => None,
        })
        .collect()
}

pub fn format_bits(bits: &[bool]) -> String {
    bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::LocalProjector;

    fn clause(support: &[usize]) -> LocalProjector {
        LocalProjector::diagonal(support.to_vec(), &[(1 << support.len()) - 1]).unwrap()
    }

    fn instance(n: usize, supports: &[&[usize]]) -> QsatInstance {
        QsatInstance::new(n, supports.iter().map(|s| clause(s)).collect()).unwrap()
    }

    fn bits(s: &str) -> Vec<bool> {
        parse_bits(s).unwrap()
    }

    fn chain() -> QsatInstance {
        instance(4, &[&[0, 1], &[1, 2], &[2, 3]])
    }

    #[test]
    fn reference_examples() {
        let inst = chain();
        assert_eq!(next_measurement(&inst, &[]), Ok(Next::Measure(0)));
        assert_eq!(next_measurement(&inst, &bits("0")), Ok(Next::Measure(1)));
        assert_eq!(next_measurement(&inst, &bits("1")), Ok(Next::Measure(0)));
        // after fixing 0 the neighborhood [0, 1] is re-checked, then the top level moves on
        assert_eq!(next_measurement(&inst, &bits("10")), Ok(Next::Measure(1)));
        assert_eq!(next_measurement(&inst, &bits("100")), Ok(Next::Measure(1)));
        assert_eq!(next_measurement(&inst, &bits("1000")), Ok(Next::Measure(2)));
        assert_eq!(
            next_measurement(&inst, &bits("10000")),
            Ok(Next::Terminated)
        );
        assert_eq!(next_measurement(&inst, &bits("000")), Ok(Next::Terminated));
        assert_eq!(
            next_measurement(&inst, &bits("0000")),
            Err(SchedulerError::AfterTermination(3))
        );
    }

    #[test]
    fn fresh_machine_steps() {
        let inst = chain();
        let fresh = StackMachine::new(5);
        let after_zero = stack_step(&fresh, &inst, false).unwrap();
        assert_eq!(after_zero.stack()[0].cursor, 1);
        assert_eq!(after_zero.depth(), 0);
        assert_eq!(after_zero.consumed(), 1);

        let after_one = stack_step(&fresh, &inst, true).unwrap();
        assert_eq!(after_one.depth(), 1);
        assert_eq!(after_one.failures(), 1);
        assert_eq!(after_one.current(&inst), Next::Measure(0));
    }

    #[test]
    fn budget_forces_termination() {
        let inst = chain();
        let mut machine = StackMachine::new(3);
        for _ in 0..2 {
            machine.step_mut(&inst, true).unwrap();
        }
        assert_eq!(machine.failures(), 2);
        assert!(!machine.is_terminated());
        let event = machine.step_mut(&inst, true).unwrap();
        assert!(event.terminated && machine.is_exhausted());
        let frozen = machine.clone();
        assert_eq!(
            machine.step_mut(&inst, false),
            Err(SchedulerError::Terminated)
        );
        assert_eq!(machine, frozen);
    }

    #[test]
    fn returns_are_reported_innermost_first() {
        let inst = instance(1, &[&[0]]);
        let mut machine = StackMachine::unbounded();
        machine.step_mut(&inst, true).unwrap();
        machine.step_mut(&inst, true).unwrap();
        let event = machine.step_mut(&inst, false).unwrap();
        assert_eq!(event.returned, vec![0, 0]);
        assert!(event.terminated);
        assert_eq!(machine.return_flags(), &[false, false, true]);
        assert!(!machine.is_exhausted());
    }

    #[test]
    fn machine_tracks_the_reference_on_a_fixed_string() {
        let inst = chain();
        let outcomes = bits("1011000100000");
        let mut machine = StackMachine::unbounded();
        for (len, &outcome) in outcomes.iter().enumerate() {
            assert_eq!(
                next_measurement(&inst, &outcomes[..len]).unwrap(),
                machine.current(&inst)
            );
            machine.step_mut(&inst, outcome).unwrap();
        }
        assert_eq!(
            next_measurement(&inst, &outcomes).unwrap(),
            machine.current(&inst)
        );
    }

    #[test]
    fn equivalence_examples() {
        let single = instance(2, &[&[0, 1]]);
        assert!(schedule_equiv(&single, 8).equivalent());
        let report = schedule_equiv(&chain(), 12);
        assert!(report.equivalent(), "{report:?}");
        assert!(report.terminated_strings > 0);
        let empty = schedule_equiv(&chain(), 0);
        assert_eq!(empty.strings_checked, 1);
    }

    #[test]
    fn equivalence_on_small_instances() {
        let cases = [
            instance(3, &[&[0, 1], &[1, 2], &[0, 2]]),
            instance(5, &[&[0, 1, 2], &[2, 3, 4], &[0, 1, 4], &[1, 3, 4]]),
            instance(4, &[&[0], &[1], &[2], &[3]]),
            instance(4, &[&[0, 1], &[2, 3]]),
        ];
        for inst in &cases {
            let report = schedule_equiv(inst, 16);
            assert!(report.equivalent(), "{report:?}");
        }
    }

    #[test]
    fn terminated_strings_are_prefix_free() {
        let inst = chain();
        let mut terminated = Vec::new();
        let mut pending = vec![Vec::new()];
        while let Some(prefix) = pending.pop() {
            match next_measurement(&inst, &prefix).unwrap() {
                Next::Terminated => terminated.push(prefix),
                Next::Measure(_) if prefix.len() < 10 => {
                    for b in [false, true] {
                        let mut p = prefix.clone();
                        p.push(b);
                        pending.push(p);
                    }
                }
                Next::Measure(_) => {}
            }
        }
        for a in &terminated {
            let mut extended = a.clone();
            extended.push(false);
            assert!(next_measurement(&inst, &extended).is_err());
            for b in &terminated {
                assert!(a == b || !b.starts_with(a));
            }
        }
    }

    #[test]
    fn bit_strings_round_trip() {
        assert_eq!(format_bits(&bits("01101")), "01101");
        assert!(parse_bits("01x").is_none());
    }
}
