use std::collections::BTreeMap;
use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use refinery::experiment::ROUNDING_EXACT_BUDGET;
use refinery::instance::{assignment_utility, round_latency, system_cost, Assignment, Placement, SchedulingInstance};
use refinery::solver::{
    build_p1, dinkelbach_solve, exact_solve_with_budget, greedy_round, randomized_rounding, weighted_randomized_rounding,
    DinkelbachConfig, P1Problem, RoundedSolution,
};
use refinery::sim::{run_simulation, schedule, Layout, ScenarioConfig, SchedulerKind, SimOptions, SimState, SolverSettings, TaskPreset};
use refinery::topology::GroupId;

fn instance(layout: Layout, seed: u64) -> SchedulingInstance {
    let config = ScenarioConfig::standard(layout, TaskPreset::DenseNet, seed);
    SimState::new(&config, Arc::new(TaskPreset::DenseNet.task())).unwrap().next_instance()
}

fn respects_p1(p1: &P1Problem, sol: &RoundedSolution) -> Result<(), String> {
    let mut clients = Vec::new();
    let mut sites = vec![0usize; p1.site_capacity().len()];
    let mut groups = vec![0.0; p1.group_capacity().len()];
    for &v in &sol.chosen {
        let c = &p1.candidates()[v];
        if clients.contains(&c.client) {
            return Err(format!("client {} chosen twice", c.client));
        }
        clients.push(c.client);
        sites[c.site] += 1;
        for &g in &c.groups {
            groups[g] += c.demand;
        }
    }
    for (j, (&used, &cap)) in sites.iter().zip(p1.site_capacity()).enumerate() {
        if used > cap {
            return Err(format!("site {j}: {used} > {cap}"));
        }
    }
    for (g, (&used, &cap)) in groups.iter().zip(p1.group_capacity()).enumerate() {
        if used > cap * (1.0 + 1e-9) {
            return Err(format!("group {g}: {used} > {cap}"));
        }
    }
    Ok(())
}

/// Recomputes every constraint of an assignment from the instance's raw data.
fn respects_instance(a: &Assignment, inst: &SchedulingInstance) -> Result<(), String> {
    let topo = inst.topology();
    let mut servers = vec![0usize; inst.sites().len()];
    let mut load: BTreeMap<usize, f64> = BTreeMap::new();
    for (&i, p) in &a.admitted {
        if let Placement::Split { site, path, bandwidth, .. } = *p {
            servers[site] += 1;
            let mut groups: Vec<usize> = inst.path(i, site, path).links.iter().map(|&l| topo.link(l).group.0).collect();
            groups.sort_unstable();
            groups.dedup();
            for g in groups {
                *load.entry(g).or_default() += bandwidth;
            }
        }
        let lat = round_latency(i, p, inst);
        if lat.total > inst.task().deadline * (1.0 + 1e-9) {
            return Err(format!("client {i} misses the deadline"));
        }
    }
    for (j, (&used, s)) in servers.iter().zip(inst.sites()).enumerate() {
        if used > s.num_servers {
            return Err(format!("site {j} over capacity"));
        }
    }
    for (g, used) in load {
        if used > topo.group_capacity(GroupId(g)) * (1.0 + 1e-9) {
            return Err(format!("group {g} over capacity"));
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn every_inner_solver_is_feasible(seed in any::<u64>(), rho in 0.0f64..1e-2) {
        let inst = instance(Layout::Tiny, seed);
        let p1 = build_p1(&inst, rho);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sols = [
            greedy_round(&p1).unwrap(),
            exact_solve_with_budget(&p1, ROUNDING_EXACT_BUDGET).unwrap(),
            randomized_rounding(&p1, &mut rng).unwrap(),
            weighted_randomized_rounding(&p1, &mut rng).unwrap(),
        ];
        for sol in &sols {
            prop_assert!(respects_p1(&p1, sol).is_ok(), "{:?}", respects_p1(&p1, sol));
            prop_assert!(respects_instance(&p1.to_assignment(&sol.chosen), &inst).is_ok());
        }
        prop_assert!(sols[1].objective >= sols[0].objective - 1e-9 * sols[1].objective.abs().max(1.0));
    }

    #[test]
    fn reported_ratio_matches_rescored_assignment(seed in any::<u64>(), layout in prop::sample::select(vec![Layout::Tiny, Layout::NS2, Layout::NS3])) {
        let inst = instance(layout, seed);
        let result = dinkelbach_solve(&inst, &DinkelbachConfig::default(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        prop_assert!(respects_instance(&result.assignment, &inst).is_ok());
        let (u, c) = (assignment_utility(&result.assignment, &inst), system_cost(&result.assignment, &inst));
        let o = &result.outcome;
        prop_assert!((u - o.gamma).abs() <= 1e-9 * u.abs().max(1.0));
        prop_assert!((c - o.psi).abs() <= 1e-9 * c.abs().max(1.0));
        if c > 0.0 {
            prop_assert!((u / c - o.rho_final).abs() <= 1e-9 * o.rho_final.abs().max(1e-12));
        }
    }

    #[test]
    fn every_scheduler_passes_the_audit(seed in any::<u64>(), layout in prop::sample::select(vec![Layout::NS1, Layout::NS2, Layout::NS4])) {
        let inst = instance(layout, seed);
        let settings = SolverSettings::default();
        for kind in SchedulerKind::ALL.into_iter().filter(|k| *k != SchedulerKind::Exact) {
            let out = schedule(kind, &inst, &settings, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            if !out.infeasible_bound {
                prop_assert!(respects_instance(&out.assignment, &inst).is_ok(), "{kind}");
            }
        }
    }

    #[test]
    fn unlimited_trains_at_least_limited(seed in any::<u64>(), layout in prop::sample::select(vec![Layout::NS1, Layout::NS2, Layout::NS3, Layout::NS4])) {
        let inst = instance(layout, seed);
        let settings = SolverSettings::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let unlimited = schedule(SchedulerKind::SplitFedUnlimited, &inst, &settings, &mut rng).unwrap();
        let limited = schedule(SchedulerKind::SplitFedLimited, &inst, &settings, &mut rng).unwrap();
        let samples = |a: &Assignment| a.admitted.keys().map(|&i| inst.clients()[i].dataset_size).sum::<f64>();
        prop_assert!(samples(&unlimited.assignment) >= samples(&limited.assignment));
        prop_assert!(unlimited.infeasible_bound);
    }

    #[test]
    fn local_training_admits_exactly_the_fast_clients(seed in any::<u64>()) {
        let inst = instance(Layout::NS1, seed);
        let out = schedule(SchedulerKind::FedAvgLocal, &inst, &SolverSettings::default(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        for i in 0..inst.clients().len() {
            let fast = inst.local_latency(i).total <= inst.task().deadline;
            prop_assert_eq!(out.assignment.admitted.get(&i), fast.then_some(&Placement::Local));
        }
    }
}

#[test]
fn simulations_repeat_exactly_per_seed() {
    let task = Arc::new(TaskPreset::MobileNet.task());
    let options = SimOptions { trace: true, ..Default::default() };
    for kind in [SchedulerKind::Refinery, SchedulerKind::WRR, SchedulerKind::MCC, SchedulerKind::RCA] {
        let config = ScenarioConfig::standard(Layout::NS2, TaskPreset::MobileNet, 11);
        let a = run_simulation(&config, kind, task.clone(), 4, &options).unwrap();
        let b = run_simulation(&config, kind, task.clone(), 4, &options).unwrap();
        assert_eq!(a, b, "{kind}");
    }
    let c = ScenarioConfig::standard(Layout::NS2, TaskPreset::MobileNet, 12);
    let d = ScenarioConfig::standard(Layout::NS2, TaskPreset::MobileNet, 11);
    let x = run_simulation(&c, SchedulerKind::Refinery, task.clone(), 2, &options).unwrap();
    let y = run_simulation(&d, SchedulerKind::Refinery, task, 2, &options).unwrap();
    assert_ne!(x, y);
}

#[test]
fn queues_follow_admissions_over_a_run() {
    let config = ScenarioConfig::standard(Layout::NS3, TaskPreset::DenseNet, 5);
    let task = Arc::new(TaskPreset::DenseNet.task());
    let state = SimState::new(&config, task.clone()).unwrap();
    let weights: Vec<f64> = state.clone().next_instance().clients().iter().map(|c| c.weight).collect();
    let r = run_simulation(&config, SchedulerKind::Refinery, task, 12, &SimOptions::default()).unwrap();
    for (i, w) in weights.iter().enumerate() {
        let expected = 12.0 * w - r.admission_counts[i] as f64;
        assert!((r.final_queues[i] - expected).abs() <= 1e-12);
    }
    for round in &r.rounds {
        for (i, w) in weights.iter().enumerate() {
            let z = if round.admitted.contains(&i) { 1.0 } else { 0.0 };
            assert!((round.queues_after[i] - (round.queues_before[i] - z + w)).abs() <= 1e-12);
        }
    }
}
