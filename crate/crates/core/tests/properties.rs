use fairalloc::analysis::{brute_force, group_allocation_summary, solution_path, tau_bracket};
use fairalloc::io::{self, RunInputs, SolutionFile};
use fairalloc::milp::RowKind;
use fairalloc::synth::{self, nyc_like, random_instance, NycOptions, RandomModel, RandomOptions, SyntheticInstance};
use fairalloc::{
    branch_and_bound, build_knn_graph, encode, fit_max_interference, AllocationProblem, KnnOptions,
    LinearInterferenceModel, NeighborPattern, OutcomeModel, Problem, SolveStatus, SolverConfig,
};
use proptest::prelude::*;

const TOL: f64 = 1e-9;

fn options() -> impl Strategy<Value = (u64, RandomOptions)> {
    (any::<u64>(), 4usize..=9, 1usize..=3, 1usize..=4, 2usize..=3, any::<bool>(), any::<bool>()).prop_map(
        |(seed, n, k, budget, n_groups, linear, include_self)| {
            let opts = RandomOptions {
                n,
                k: k.min(n),
                budget,
                n_groups,
                model: if linear { RandomModel::Linear } else { RandomModel::Max },
                include_self,
                tau: f64::INFINITY,
            };
            (seed, opts)
        },
    )
}

fn instance(seed: u64, opts: &RandomOptions) -> SyntheticInstance {
    random_instance(seed, opts).unwrap()
}

fn all_allocations(n: usize) -> impl Iterator<Item = Vec<bool>> {
    (0..1u32 << n).map(move |m| (0..n).map(|i| m >> i & 1 == 1).collect())
}

fn exact() -> SolverConfig {
    SolverConfig { abs_gap_tol: 0.0, ..SolverConfig::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn own_group_gap_is_zero((seed, opts) in options()) {
        let p = instance(seed, &opts).problem(f64::INFINITY).unwrap();
        for (i, unit) in p.units().iter().enumerate() {
            let d = p.graph().degree(i);
            for j in 0..1usize << d {
                let gap = p.privilege_gap(i, unit.group, &NeighborPattern::from_index(j, d)).unwrap();
                prop_assert_eq!(gap, 0.0);
            }
        }
    }

    #[test]
    fn binary_gaps_are_antisymmetric(seed in any::<u64>(), linear in any::<bool>()) {
        let opts = RandomOptions {
            n_groups: 2,
            model: if linear { RandomModel::Linear } else { RandomModel::Max },
            ..RandomOptions::default()
        };
        let p = instance(seed, &opts).problem(f64::INFINITY).unwrap();
        for i in 0..p.n() {
            let mut units = p.units().to_vec();
            let (a, b) = (units[i].group, 1 - units[i].group);
            units[i].group = b;
            let twin = AllocationProblem::new(
                units,
                p.graph().clone(),
                p.objective_model().clone(),
                p.privilege_model().clone(),
                p.groups().clone(),
                p.budget(),
                f64::INFINITY,
            )
            .unwrap();
            let d = p.graph().degree(i);
            for j in 0..1usize << d {
                let pattern = NeighborPattern::from_index(j, d);
                let forward = p.privilege_gap(i, b, &pattern).unwrap();
                let back = twin.privilege_gap(i, a, &pattern).unwrap();
                prop_assert!((forward + back).abs() <= TOL);
            }
        }
    }

    #[test]
    fn outcomes_depend_only_on_the_neighborhood((seed, opts) in options(), mask in any::<u32>(), flip in any::<u32>()) {
        let p = instance(seed, &opts).problem(f64::INFINITY).unwrap();
        let n = p.n();
        let z: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
        let base = p.evaluate_policy(&z).unwrap();
        for i in 0..n {
            let nb = p.graph().neighbors(i);
            let mut other = z.clone();
            for j in (0..n).filter(|j| !nb.contains(j)) {
                other[j] ^= flip >> j & 1 == 1;
            }
            prop_assert_eq!(p.graph().neighbor_pattern(&z, i).unwrap(), p.graph().neighbor_pattern(&other, i).unwrap());
            let moved = p.evaluate_policy(&other).unwrap();
            prop_assert_eq!(base.outcomes[i], moved.outcomes[i]);
            prop_assert_eq!(&base.gaps[i], &moved.gaps[i]);
        }
    }

    #[test]
    fn direct_effects_add_up((seed, opts) in options(), left in any::<u32>(), right in any::<u32>()) {
        let inst = instance(seed, &opts);
        let base = inst.problem(f64::INFINITY).unwrap();
        let g = base.groups().len();
        let own: Vec<f64> = (0..g).map(|a| 0.5 + a as f64).collect();
        let intercept: Vec<f64> = (0..g).map(|a| 0.1 * a as f64).collect();
        let model: OutcomeModel<f64> = LinearInterferenceModel::direct(vec![(0, 0.3)], intercept, own).unwrap().into();
        let p = AllocationProblem::new(
            base.units().to_vec(),
            base.graph().clone(),
            model.clone(),
            model,
            base.groups().clone(),
            base.budget(),
            f64::INFINITY,
        )
        .unwrap();
        let n = p.n();
        let zl: Vec<bool> = (0..n).map(|i| left >> i & 1 == 1).collect();
        let zr: Vec<bool> = (0..n).map(|i| right >> i & 1 == 1 && left >> i & 1 == 0).collect();
        let both: Vec<bool> = zl.iter().zip(&zr).map(|(a, b)| *a || *b).collect();
        let value = |z: &[bool]| p.evaluate_policy(z).unwrap().total;
        let idle = value(&vec![false; n]);
        let lhs = value(&both) - idle;
        let rhs = (value(&zl) - idle) + (value(&zr) - idle);
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
    }

    #[test]
    fn knn_matches_brute_force((seed, opts) in options(), k in 1usize..=4, include_self in any::<bool>()) {
        let p = instance(seed, &opts).problem(f64::INFINITY).unwrap();
        let n = p.n();
        let k = k.min(n);
        let g = build_knn_graph(p.units(), KnnOptions::new(k, include_self)).unwrap();
        let coords: Vec<[f64; 2]> = p.units().iter().map(|u| u.coords.unwrap()).collect();
        let dist = |i: usize, j: usize| (coords[i][0] - coords[j][0]).hypot(coords[i][1] - coords[j][1]);
        for i in 0..n {
            let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            others.sort_by(|&a, &b| dist(i, a).total_cmp(&dist(i, b)).then(a.cmp(&b)));
            let want: Vec<usize> = if include_self {
                std::iter::once(i).chain(others.into_iter().take(k - 1)).collect()
            } else {
                others.into_iter().take(k).collect()
            };
            prop_assert_eq!(g.neighbors(i), &want[..]);
        }
        for i in 0..n {
            for (slot, &j) in g.neighbors(i).iter().enumerate() {
                if j == i {
                    continue;
                }
                if let Some(back) = g.neighbors(j).iter().position(|&x| x == i) {
                    prop_assert_eq!(g.similarities(i)[slot], g.similarities(j)[back]);
                }
            }
        }
    }

    #[test]
    fn milp_matches_the_model((seed, opts) in options(), mask in any::<u32>(), tau in 0.01f64..2.0) {
        let p = instance(seed, &opts).problem(tau).unwrap();
        let program = encode(&p).unwrap();
        let z: Vec<bool> = (0..p.n()).map(|i| mask >> i & 1 == 1).collect();
        let x = program.assignment(&z);
        let report = p.evaluate_policy(&z).unwrap();
        prop_assert!((program.evaluate(&x) - report.total).abs() <= TOL);
        for c in program.constraints() {
            match c.kind {
                RowKind::Privilege { unit, group } => {
                    let gap = p.privilege_gap(unit, group, &p.graph().neighbor_pattern(&z, unit).unwrap()).unwrap();
                    prop_assert!((c.activity(&x) - gap).abs() <= TOL);
                }
                RowKind::Budget => {}
                _ => prop_assert!(c.is_satisfied(&x, TOL)),
            }
        }
        let g = p.groups().len();
        let k_sum: usize = (0..p.n()).map(|i| p.graph().degree(i) << p.graph().degree(i)).sum();
        let h: usize = (0..p.n()).map(|i| 1usize << p.graph().degree(i)).sum();
        prop_assert_eq!(program.n_h(), h);
        prop_assert_eq!(program.constraints().len(), k_sum + p.n() + p.n() * (g - 1) + 1);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn solver_agrees_with_enumeration((seed, opts) in options(), pick in 0.0f64..1.0) {
        let free = instance(seed, &opts).problem(f64::INFINITY).unwrap();
        let bracket = tau_bracket(&free).unwrap();
        let tau = (bracket.infeasible_below.min(0.0) + pick * (bracket.vacuous_from + 0.1)).max(1e-6);
        let p = free.with_tau(tau).unwrap();
        let want = brute_force(&p).unwrap();
        let got = branch_and_bound(&encode(&p).unwrap(), &exact()).unwrap();
        prop_assert_eq!(got.status, want.status);
        prop_assert_eq!(&got.z, &want.z);
        let again = branch_and_bound(&encode(&p).unwrap(), &exact()).unwrap();
        prop_assert_eq!(&got, &again);
        if let Some(z) = &got.z {
            prop_assert!((got.objective.unwrap() - want.objective.unwrap()).abs() <= TOL);
            let report = p.evaluate_policy(z).unwrap();
            prop_assert!(report.feasible);
            // no single swap improves a feasible optimum
            let best = report.total;
            for on in (0..p.n()).filter(|&i| !z[i]) {
                for off in (0..p.n()).filter(|&i| z[i]) {
                    let mut w = z.clone();
                    w[on] = true;
                    w[off] = false;
                    let r = p.evaluate_policy(&w).unwrap();
                    prop_assert!(!(r.feasible && r.total > best + TOL));
                }
            }
        } else {
            prop_assert!(all_allocations(p.n()).all(|z| !p.evaluate_policy(&z).unwrap().feasible));
        }
    }

    #[test]
    fn paths_are_monotone_and_summaries_conserve((seed, opts) in options(), low in 0.01f64..0.5) {
        let free = instance(seed, &opts).problem(f64::INFINITY).unwrap();
        let taus: Vec<f64> = (0..6).map(|t| low * 2f64.powi(t)).chain([1e6]).collect();
        let path = solution_path(&free, &taus, &SolverConfig::default()).unwrap();
        let objectives = path.optimal_objectives();
        prop_assert!(objectives.windows(2).all(|w| w[1].1 >= w[0].1 - TOL));
        let unconstrained = branch_and_bound(&encode(&free).unwrap(), &SolverConfig::default()).unwrap();
        let last = path.points.last().unwrap().solution.objective.unwrap();
        prop_assert!((last - unconstrained.objective.unwrap()).abs() <= TOL);
        for point in &path.points {
            if point.solution.z.is_some() {
                let s = group_allocation_summary(&free.with_tau(point.tau).unwrap(), &point.solution).unwrap();
                prop_assert_eq!(s.treated_counts.iter().sum::<usize>(), point.solution.budget_used().unwrap());
                prop_assert_eq!(s.treated.len(), point.solution.budget_used().unwrap());
            }
        }
    }

    #[test]
    fn fit_is_consistent(seed in any::<u64>(), rotate in 0usize..60) {
        let mut inst = nyc_like(seed, &NycOptions { n: 60, ..NycOptions::default() }).unwrap();
        let data = inst.fit_dataset().unwrap();
        let fit = fit_max_interference(&data).unwrap();

        // residuals are orthogonal to every regressor within each group
        for a in 0..data.n_groups() {
            let theta = fit.params.group(a);
            let mut dot = [0.0f64; 4];
            let mut scale = [0.0f64; 4];
            for i in (0..data.len()).filter(|&i| data.groups[i] == a) {
                let x = data.regressors(i);
                let r = data.outcome[i] - x.iter().zip(theta).map(|(p, q)| p * q).sum::<f64>();
                for c in 0..4 {
                    dot[c] += x[c] * r;
                    scale[c] += (x[c] * data.outcome[i]).abs();
                }
            }
            for c in 0..4 {
                prop_assert!(dot[c].abs() <= 1e-8 * scale[c].max(f64::MIN_POSITIVE));
            }
        }

        // refitting the fitted values reproduces the parameters
        let mut smooth = data.clone();
        for i in 0..smooth.len() {
            let theta = fit.params.group(smooth.groups[i]);
            smooth.outcome[i] = smooth.regressors(i).iter().zip(theta).map(|(p, q)| p * q).sum();
        }
        let refit = fit_max_interference(&smooth).unwrap();
        for a in 0..data.n_groups() {
            for (x, y) in refit.params.group(a).iter().zip(fit.params.group(a)) {
                prop_assert!((x - y).abs() <= 1e-8 * y.abs().max(1e-6));
            }
        }

        // reordering units leaves the fit unchanged
        inst.records.rotate_left(rotate);
        let shuffled = fit_max_interference(&inst.fit_dataset().unwrap()).unwrap();
        for a in 0..data.n_groups() {
            for (x, y) in shuffled.params.group(a).iter().zip(fit.params.group(a)) {
                prop_assert!((x - y).abs() <= 1e-8 * y.abs().max(1e-6));
            }
        }
    }
}

fn round_trip(inst: &SyntheticInstance) -> (Problem, RunInputs) {
    let dir = tempfile::tempdir().unwrap();
    io::write_instance(inst, dir.path()).unwrap();
    let loaded =
        RunInputs::load(&dir.path().join("units.csv"), &dir.path().join("model.json"), &dir.path().join("config.toml"))
            .unwrap();
    let tau = inst.taus.last().copied().unwrap();
    (inst.problem(tau).unwrap(), loaded)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn files_reproduce_instances((seed, opts) in options()) {
        let inst = instance(seed, &opts);
        let (want, loaded) = round_trip(&inst);
        prop_assert_eq!(&loaded.problem, &want);
    }

    #[test]
    fn solution_files_validate_themselves((seed, opts) in options(), tau in 0.05f64..3.0) {
        let p = instance(seed, &opts).problem(tau).unwrap();
        let s = branch_and_bound(&encode(&p).unwrap(), &SolverConfig::default()).unwrap();
        let file = SolutionFile::new(&p, &s).unwrap();
        let json = file.to_json().unwrap();
        let back: SolutionFile = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(&back, &file);
        if back.status == SolveStatus::Optimal {
            let restored = back.to_solution(&p).unwrap();
            let summary = group_allocation_summary(&p, &restored).unwrap();
            prop_assert!((summary.objective - back.objective.unwrap()).abs() <= TOL);
        }
    }
}

#[test]
fn every_kind_round_trips() {
    for kind in synth::KINDS {
        let inst = if kind == "nyc_like" {
            nyc_like(9, &NycOptions { n: 40, budget: 4, ..NycOptions::default() }).unwrap()
        } else {
            synth::generate(kind, 9).unwrap()
        };
        let (want, loaded) = round_trip(&inst);
        assert_eq!(loaded.problem, want, "{kind}");
    }
}
