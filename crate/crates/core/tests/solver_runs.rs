mod common;

use std::collections::HashMap;

use common::{clauses_of, generated, instance_of, moser_reference, three_sigma};
use qlll_core::analysis::{verify_termination_bound, LllParams};
use qlll_core::instance::{from_dimacs, InstanceGenerator, QsatInstance};
use qlll_core::solver::{
    enumerate_histories, EnumerateOptions, InitialCondition, RunParams, Solver, Status,
};

fn averaged_tree(inst: &QsatInstance, budget: usize) -> qlll_core::solver::HistoryTree {
    let params = RunParams::new(inst, 0.1, budget, 0);
    enumerate_histories(
        inst,
        &params,
        InitialCondition::Averaged,
        EnumerateOptions::default(),
    )
    .unwrap()
}

#[test]
fn diagonal_runs_match_classical_moser() {
    for inst_seed in 0..5 {
        let inst = InstanceGenerator::new(8, 6, 2)
            .diagonal(true)
            .generate(inst_seed)
            .unwrap();
        let clauses = clauses_of(&inst);
        let solver = Solver::new(&inst).unwrap();
        for seed in 0..60 {
            let params = RunParams::new(&inst, 0.1, 12, seed);
            let quantum = solver.run_trajectory(&params).unwrap();
            let classical = moser_reference(inst.n(), &clauses, 12, seed);
            assert_eq!(
                quantum.log.bits, classical.log,
                "instance {inst_seed} seed {seed}"
            );
            assert_eq!(quantum.log.t, classical.failures);
            assert_eq!(quantum.log.terminated, classical.completed);
            // the final state is the classical assignment
            assert_eq!(
                quantum.final_state.amplitudes()[classical.assignment as usize].re,
                1.0
            );
        }
    }
}

#[test]
fn dimacs_input_matches_classical_moser() {
    let inst = from_dimacs("p cnf 5 4\n1 2 0\n-2 3 0\n-3 -4 0\n4 5 0\n").unwrap();
    let clauses = clauses_of(&inst);
    let solver = Solver::new(&inst).unwrap();
    for seed in 0..200 {
        let quantum = solver
            .run_trajectory(&RunParams::new(&inst, 0.1, 8, seed))
            .unwrap();
        assert_eq!(quantum.log.bits, moser_reference(5, &clauses, 8, seed).log);
    }
}

#[test]
fn successful_runs_have_zero_energy_and_pass_monotone_checks() {
    for seed in 0..10 {
        let inst = generated(8, 4, 3, 1, 2, seed);
        let solver = Solver::new(&inst).unwrap();
        let params = RunParams::new(&inst, 0.01, 20, seed).assert_lemma3(true);
        for result in solver.run_trials(&params, 40, |r| r) {
            let r = result.unwrap();
            if r.status == Status::Success {
                assert!(r.max_energy() <= 1e-9);
                assert!(r.log.len() <= inst.m() + r.log.t * inst.d());
            }
            assert!(r.extracted.iter().all(|&e| e < inst.r()));
        }
    }
}

#[test]
fn trajectory_frequencies_match_the_exact_tree() {
    // two overlapping rotated clauses, small enough for a few dozen distinct logs
    let inst = generated(3, 2, 2, 1, 2, 4);
    let budget = 3;
    let tree = averaged_tree(&inst, budget);
    let exact = tree.log_distribution();
    assert!(exact.len() <= 64, "{} distinct logs", exact.len());

    let solver = Solver::new(&inst).unwrap();
    let trials = 100_000;
    let params = RunParams::new(&inst, 0.1, budget, 2024);
    let mut counts: HashMap<Vec<bool>, usize> = HashMap::new();
    for log in solver.run_trials(&params, trials, |r| r.log.bits) {
        *counts.entry(log.unwrap()).or_default() += 1;
    }
    let mut covered = 0;
    for (log, p) in &exact {
        let seen = counts.get(&log.bits).copied().unwrap_or(0);
        covered += seen;
        let freq = seen as f64 / trials as f64;
        let band = three_sigma(*p, trials).max(1.0 / trials as f64);
        assert!(
            (freq - p).abs() <= band,
            "log {}: empirical {freq} vs exact {p}",
            log.to_bit_string()
        );
    }
    // every sampled log is a leaf of the tree
    assert_eq!(covered, trials);
}

#[test]
fn exact_exhaustion_respects_the_bound_on_generated_instances() {
    for seed in 0..6 {
        let inst = generated(4, 2, 2, 1, 2, seed);
        for budget in 1..=4 {
            let tree = averaged_tree(&inst, budget);
            assert!((tree.total_probability() + tree.pruned_mass - 1.0).abs() < 1e-9);
            let check = verify_termination_bound(&tree, LllParams::of(&inst)).unwrap();
            assert!(check.holds, "seed {seed} budget {budget}: {check:?}");
        }
    }
}

#[test]
fn basis_mode_rejects_termination_check() {
    let inst = instance_of(1, &[&[0]]);
    let params = RunParams::new(&inst, 0.1, 2, 0);
    let tree = enumerate_histories(
        &inst,
        &params,
        InitialCondition::Basis {
            x: 1,
            y: vec![false, true],
        },
        EnumerateOptions::default(),
    )
    .unwrap();
    assert!(verify_termination_bound(&tree, LllParams::of(&inst)).is_err());
    // y = "01": first refill writes 0, so the fix succeeds at once
    assert_eq!(tree.leaves.len(), 1);
    assert_eq!(tree.leaves[0].log.to_bit_string(), "10");
}
