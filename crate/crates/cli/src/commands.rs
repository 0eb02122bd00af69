use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use qlll_core::analysis::{
    choose_budget, exhaustion_bound, success_bound, verify_termination_bound, AnalysisError,
    LllParams,
};
use qlll_core::instance::{
    from_dimacs, lll_margin, to_dimacs, validate_instance, InstanceError, InstanceGenerator,
    MarginReport, QsatInstance, ValidationReport,
};
use qlll_core::rng::{split_seed, RNG_ALGORITHM};
use qlll_core::scheduler::parse_bits;
use qlll_core::solver::{
    plan_run, EnumerateOptions, HistoryTree, InitialCondition, RunParams, Solver, SolverError,
    Status,
};

use crate::canonical::to_canonical;
use crate::{BoundArgs, EnumerateArgs, GenArgs, InstanceFormat, SolveArgs, ValidateArgs};

pub const RUN_RECORD_SCHEMA: &str = "qlll.run_record/v1";
pub const ENUMERATE_SCHEMA: &str = "qlll.enumerate/v1";
pub const BOUND_SCHEMA: &str = "qlll.bound/v1";
pub const VALIDATION_SCHEMA: &str = "qlll.validation/v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Code {
    Input = 2,
    Invariant = 3,
    Cap = 4,
}

#[derive(Debug)]
pub struct Failure {
    pub code: Code,
    pub message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Self {
            code: Code::Input,
            message: message.into(),
        }
    }
}

impl From<InstanceError> for Failure {
    fn from(e: InstanceError) -> Self {
        Failure::input(e.to_string())
    }
}

impl From<SolverError> for Failure {
    fn from(e: SolverError) -> Self {
        let code = match &e {
            SolverError::MonotoneFixing { .. }
            | SolverError::Invariant(_)
            | SolverError::Simulator(_)
            | SolverError::Scheduler(_) => Code::Invariant,
            SolverError::NodeCap { .. } => Code::Cap,
            _ => Code::Input,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type Outcome = Result<(), Failure>;

pub fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("QLLL_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| format!("QLLL_THREADS must be a positive integer, got `{raw}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| e.to_string())
}

fn emit(value: &Value) {
    let mut stdout = std::io::stdout().lock();
    // a closed pipe is not worth a panic
    let _ = writeln!(stdout, "{}", to_canonical(value));
}

fn tool() -> Value {
    json!({"name": "qlll", "version": env!("CARGO_PKG_VERSION")})
}

fn load_instance(path: &Path) -> Result<QsatInstance, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))?;
    let dimacs = matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("cnf" | "dimacs")
    );
    Ok(if dimacs {
        from_dimacs(&text)?
    } else {
        QsatInstance::from_json_str(&text)?
    })
}

/// `sha256:` digest of the canonical JSON form, so a DIMACS file and its JSON
/// equivalent share a digest.
pub fn instance_digest(inst: &QsatInstance) -> String {
    let hash = Sha256::digest(to_canonical(&inst.to_json_value()).as_bytes());
    format!("sha256:{}", hex::encode(hash))
}

fn instance_summary(inst: &QsatInstance, verified: bool) -> Value {
    json!({
        "digest": instance_digest(inst),
        "n": inst.n(),
        "m": inst.m(),
        "k": inst.k(),
        "d": inst.d(),
        "r": inst.r(),
        "verified": verified,
    })
}

fn margin_json(report: &MarginReport) -> Value {
    serde_json::to_value(report).expect("margin report serializes")
}

fn validation_json(report: &ValidationReport) -> Value {
    serde_json::to_value(report).expect("validation report serializes")
}

pub fn gen(args: GenArgs) -> Outcome {
    let mut generator = InstanceGenerator::new(args.n, args.m, args.k)
        .rank(args.rank)
        .diagonal(args.diagonal);
    if let Some(d) = args.max_degree {
        generator = generator.max_degree(d);
    }
    let inst = generator.generate(args.seed)?;
    let text = match args.format {
        InstanceFormat::Json => to_canonical(&inst.to_json_value()) + "\n",
        InstanceFormat::Dimacs => to_dimacs(&inst)?,
    };
    match args.output {
        Some(path) => fs::write(&path, text)
            .map_err(|e| Failure::input(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

struct TrialSummary {
    status: Status,
    t: usize,
    log: String,
    energies: Vec<f64>,
    max_energy: f64,
    initial: Option<usize>,
    extracted: Vec<usize>,
}

pub fn solve(args: SolveArgs) -> Outcome {
    let started = Instant::now();
    let inst = load_instance(&args.input.instance)?;
    let solver = Solver::new(&inst)?;
    let plan = plan_run(&inst, args.epsilon, args.seed)?;
    let mut warnings = Vec::new();
    if !solver.verified() {
        warnings.push("instance does not commute; results are unverified".to_string());
    }
    let params = match args.budget {
        Some(0) => return Err(Failure::input("--N must be at least 1")),
        Some(budget) => RunParams::new(&inst, args.epsilon, budget, args.seed),
        None => {
            warnings.extend(plan.warning.clone());
            plan.params.clone()
        }
    }
    .assert_lemma3(args.assert_lemma3);
    for w in &warnings {
        eprintln!("qlll: warning: {w}");
    }

    let results = solver.run_trials(&params, args.trials, |r| TrialSummary {
        status: r.status,
        t: r.log.t,
        log: r.log.to_bit_string(),
        max_energy: r.max_energy(),
        energies: r.energies,
        initial: r.initial,
        extracted: r.extracted,
    });
    let mut trials = Vec::with_capacity(args.trials);
    let (mut successes, mut exhausted, mut unverified) = (0usize, 0usize, 0usize);
    for (index, result) in results.into_iter().enumerate() {
        let s = result?;
        match s.status {
            Status::Success => successes += 1,
            Status::BudgetExhausted => exhausted += 1,
            Status::Unverified => unverified += 1,
        }
        trials.push(json!({
            "index": index,
            "seed": split_seed(args.seed, index as u64),
            "status": s.status.as_str(),
            "t": s.t,
            "log": s.log,
            "energies": s.energies,
            "max_energy": s.max_energy,
            "initial": s.initial,
            "extracted": s.extracted,
        }));
    }
    let lower_bound = success_bound(LllParams::of(&inst), params.budget);
    let rate = if args.trials == 0 {
        0.0
    } else {
        successes as f64 / args.trials as f64
    };
    let mut record = json!({
        "schema": RUN_RECORD_SCHEMA,
        "tool": tool(),
        "instance": instance_summary(&inst, solver.verified()),
        "params": {
            "epsilon": params.epsilon,
            "budget": params.budget,
            "max_steps": params.max_steps,
            "seed": params.seed,
            "trials": args.trials,
            "assert_lemma3": params.assert_lemma3,
            "rng": RNG_ALGORITHM,
        },
        "margin": margin_json(&plan.margin),
        "warnings": warnings,
        "trials": trials,
        "summary": {
            "successes": successes,
            "budget_exhausted": exhausted,
            "unverified": unverified,
            "success_rate": rate,
            "success_lower_bound": lower_bound,
            "rate_meets_bound": rate >= lower_bound,
        },
    });
    if !args.no_timings {
        record["timings"] = json!({"total_seconds": started.elapsed().as_secs_f64()});
    }
    emit(&record);
    Ok(())
}

fn parse_initial(text: &str, inst: &QsatInstance) -> Result<InitialCondition, Failure> {
    if text.eq_ignore_ascii_case("averaged") {
        return Ok(InitialCondition::Averaged);
    }
    let (x, y) = text
        .split_once(',')
        .ok_or_else(|| Failure::input("--initial takes `averaged` or `X,Y`"))?;
    let x = x.trim();
    if x.len() != inst.n() || parse_bits(x).is_none() {
        return Err(Failure::input(format!(
            "initial state `{x}` must be {} binary digits",
            inst.n()
        )));
    }
    let x = usize::from_str_radix(x, 2).expect("validated binary digits");
    let y =
        parse_bits(y.trim()).ok_or_else(|| Failure::input("fresh bits must be binary digits"))?;
    Ok(InitialCondition::Basis { x, y })
}

fn tree_json(inst: &QsatInstance, tree: &HistoryTree, verified: bool) -> Value {
    let leaves: Vec<Value> = tree
        .leaves
        .iter()
        .map(|l| {
            json!({
                "log": l.log.to_bit_string(),
                "t": l.log.t,
                "status": l.status.as_str(),
                "probability": l.probability,
                "extracted": l.extracted,
                "refills": l.refills,
                "max_energy": l.max_energy,
            })
        })
        .collect();
    let params = LllParams::of(inst);
    let (initial, bound) = match &tree.initial {
        InitialCondition::Averaged => {
            let check = verify_termination_bound(tree, params).expect("averaged tree");
            (
                json!("averaged"),
                json!({
                    "exhaustion_bound": check.bound,
                    "success_lower_bound": success_bound(params, tree.budget),
                    "holds": check.holds,
                    "slack": check.slack,
                }),
            )
        }
        InitialCondition::Basis { x, y } => (
            json!({
                "x": format!("{x:0width$b}", width = inst.n()),
                "y": qlll_core::scheduler::format_bits(y),
            }),
            Value::Null,
        ),
    };
    let total = tree.total_probability();
    json!({
        "schema": ENUMERATE_SCHEMA,
        "tool": tool(),
        "instance": instance_summary(inst, verified),
        "budget": tree.budget,
        "initial": initial,
        "partial": !tree.complete,
        "nodes": tree.nodes,
        "leaves": leaves,
        "total_probability": total,
        "pruned_mass": tree.pruned_mass,
        "probability_sum_ok": (total + tree.pruned_mass - 1.0).abs() <= 1e-9,
        "exhausted_probability": tree.exhausted_probability(),
        "prefix_free": tree.logs_prefix_free(),
        "bound": bound,
    })
}

pub fn enumerate(args: EnumerateArgs) -> Outcome {
    let inst = load_instance(&args.input.instance)?;
    let solver = Solver::new(&inst)?;
    if args.budget == 0 {
        return Err(Failure::input("--N must be at least 1"));
    }
    let initial = parse_initial(&args.initial, &inst)?;
    // epsilon plays no part in enumeration
    let params = RunParams::new(&inst, 0.5, args.budget, 0);
    let options = EnumerateOptions {
        node_cap: args.node_cap,
        keep_states: false,
    };
    match solver.enumerate_histories(&params, initial, options) {
        Ok(tree) => {
            emit(&tree_json(&inst, &tree, solver.verified()));
            Ok(())
        }
        Err(SolverError::NodeCap { cap, partial }) => {
            emit(&tree_json(&inst, &partial, solver.verified()));
            Err(Failure {
                code: Code::Cap,
                message: format!("node cap {cap} reached; partial tree written"),
            })
        }
        Err(e) => Err(e.into()),
    }
}

pub fn bound(args: BoundArgs) -> Outcome {
    let params = LllParams {
        m: args.m,
        k: args.k,
        d: args.d,
        r: args.r,
    };
    let report = choose_budget(params, args.epsilon).map_err(|e| match e {
        AnalysisError::MarginViolated(margin) => Failure::input(format!(
            "LLL margin violated; no N exists (k - log2(d*e*r) = {margin:.6})"
        )),
        other => Failure::input(other.to_string()),
    })?;
    emit(&json!({
        "schema": BOUND_SCHEMA,
        "tool": tool(),
        "params": {"m": args.m, "k": args.k, "d": args.d, "r": args.r, "epsilon": args.epsilon},
        "margin": report.margin,
        "a": report.a,
        "b": report.b,
        "budget": report.budget,
        "max_steps": report.max_steps,
        "closed_form": report.closed_form,
        "relaxation": report.relaxation,
        "fixed_point": report.fixed_point,
        "chain_holds": report.chain_holds,
        "success_lower_bound": report.success_lower_bound,
        "exhaustion_bound": exhaustion_bound(params, report.budget),
    }));
    Ok(())
}

pub fn validate(args: ValidateArgs) -> Outcome {
    let inst = load_instance(&args.input.instance)?;
    let report = validate_instance(&inst);
    emit(&json!({
        "schema": VALIDATION_SCHEMA,
        "tool": tool(),
        "instance": instance_summary(&inst, report.passed),
        "passed": report.passed,
        "report": validation_json(&report),
        "margin": margin_json(&lll_margin(&inst)),
    }));
    if report.passed {
        Ok(())
    } else {
        Err(Failure::input(format!(
            "instance has {} violation(s)",
            report.violations.len()
        )))
    }
}
