use delegate_lab::generators::{random_grid, random_setting, two_feature_setting};
use delegate_lab::solvers::{local_search, solve_brute, solve_geometric, split_by_shared};
use delegate_lab::{CellGrid, DelegationSetting, MachineAction, RowSet};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn grid_strategy(max_h: usize, max_m: usize) -> impl Strategy<Value = CellGrid> {
    (1..=max_h, 1..=max_m, any::<u64>()).prop_map(|(h, m, seed)| {
        random_grid(h, m, &mut ChaCha8Rng::seed_from_u64(seed))
    })
}

/// Grid where some cells carry no mass, including whole rows.
fn sparse_grid_strategy() -> impl Strategy<Value = CellGrid> {
    (1..=6usize, 1..=4usize, any::<u64>()).prop_map(|(h, m, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        loop {
            let mut mass: Vec<Vec<f64>> = (0..h)
                .map(|_| (0..m).map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.1..1.0) }).collect())
                .collect();
            let total: f64 = mass.iter().flatten().sum();
            if total == 0.0 {
                continue;
            }
            for row in mass.iter_mut() {
                for x in row.iter_mut() {
                    *x /= total;
                }
            }
            let value = (0..h).map(|_| (0..m).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
            return CellGrid::new(mass, value, rng.random_range(0.0..0.5)).unwrap();
        }
    })
}

fn subset_of(h: usize, bits: u64) -> RowSet {
    RowSet::from_indices(h, (0..h).filter(|i| bits >> i & 1 == 1))
}

/// Retained-set objective evaluated from its two sums directly.
fn objective_by_sums(grid: &CellGrid, retained: &RowSet) -> f64 {
    let machine = grid.machine_for(retained);
    let human = grid.human_losses();
    let machine_loss = grid.machine_row_losses(&machine);
    (0..grid.h())
        .map(|i| {
            let loss = if retained.contains(i) { machine_loss[i] } else { human[i] };
            grid.row_mass(i) * loss
        })
        .sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn objective_matches_two_sums(grid in sparse_grid_strategy(), bits in any::<u64>()) {
        let r = subset_of(grid.h(), bits);
        let a = grid.retained_objective(&r);
        let b = objective_by_sums(&grid, &r);
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()), "{a} vs {b}");
    }

    #[test]
    fn team_beats_either_agent_alone(grid in sparse_grid_strategy(), bits in any::<u64>()) {
        let machine = grid.machine_for(&subset_of(grid.h(), bits));
        let team = grid.team_loss(&machine);
        let (human, alone) = grid.standalone_losses(&machine);
        prop_assert!(team <= human + 1e-12 && team <= alone + 1e-12);
        prop_assert!(team >= grid.base_loss() - 1e-12);
        let obliv_alone = grid.standalone_losses(&grid.oblivious_machine()).1;
        prop_assert!(obliv_alone <= alone + 1e-12);
    }

    #[test]
    fn delegation_is_strict_improvement(grid in sparse_grid_strategy(), bits in any::<u64>()) {
        let machine = grid.machine_for(&subset_of(grid.h(), bits));
        let d = grid.delegation_set(&machine);
        let ml = grid.machine_row_losses(&machine);
        for (i, loss) in ml.iter().enumerate() {
            prop_assert_eq!(d.contains(i), *loss < grid.human_losses()[i]);
        }
    }

    #[test]
    fn affine_maps_keep_the_minimizers(grid in grid_strategy(6, 4), scale in prop_oneof![-5.0..-0.2, 0.2..5.0f64], shift in -10.0..10.0f64) {
        let base = solve_brute(&grid).unwrap();
        let moved = solve_brute(&grid.affine(scale, shift)).unwrap();
        prop_assert!((moved.team_loss - scale * scale * base.team_loss).abs() <= 1e-9 * (1.0 + moved.team_loss));
        prop_assert_eq!(base.all_minimizers, moved.all_minimizers);
    }

    #[test]
    fn a_single_row_is_never_worse_than_none(grid in sparse_grid_strategy()) {
        // Retaining nothing leaves every row to the human.
        let none = grid.base_loss() + grid.retained_objective(&RowSet::empty(grid.h()));
        let best_single = (0..grid.h())
            .map(|i| grid.team_loss(&grid.machine_for(&RowSet::from_indices(grid.h(), [i]))))
            .fold(f64::INFINITY, f64::min);
        prop_assert!(best_single <= none + 1e-12);
    }

    #[test]
    fn brute_force_is_a_lower_bound(grid in grid_strategy(8, 3), bits in any::<u64>()) {
        let best = solve_brute(&grid).unwrap();
        let start = subset_of(grid.h(), bits);
        let local = local_search(&grid, &start);
        prop_assert!(best.team_loss <= local.team_loss + 1e-9);
        prop_assert!(local.team_loss <= grid.base_loss() + grid.retained_objective(&start) + 1e-12);
        if grid.m() <= 2 {
            let geo = solve_geometric(&grid).unwrap();
            prop_assert!((geo.team_loss - best.team_loss).abs() <= 1e-9);
        }
    }

    #[test]
    fn optimum_is_consistent_with_its_delegation_set(grid in sparse_grid_strategy()) {
        let r = solve_brute(&grid).unwrap();
        let objective = grid.retained_objective(&r.retained);
        prop_assert!((r.team_loss - grid.base_loss() - objective).abs() <= 1e-9 * (1.0 + r.team_loss));
        let again = grid.team_loss(&grid.machine_for(&r.delegation_set));
        prop_assert!((again - r.team_loss).abs() <= 1e-9 * (1.0 + r.team_loss));
    }

    #[test]
    fn parallel_brute_force_matches_a_serial_scan(grid in grid_strategy(9, 3)) {
        let r = solve_brute(&grid).unwrap();
        let active = grid.active_rows();
        let serial = (0u64..1 << active.len())
            .map(|mask| grid.retained_objective(&RowSet::from_mask(grid.h(), &active, mask)))
            .fold(f64::INFINITY, f64::min);
        prop_assert!((r.team_loss - grid.base_loss() - serial).abs() <= 1e-12 * (1.0 + serial));
    }
}

/// Team loss straight from the state-level definition.
fn state_level_team_loss(s: &DelegationSetting, machine: &[f64]) -> f64 {
    let h = 1usize << s.human_features().len();
    let p = s.probabilities();
    let f = s.optimal_actions();
    let mut total = 0.0;
    for c in 0..h {
        let states: Vec<usize> = (0..s.state_count()).filter(|&x| s.human_category(x) == c).collect();
        let pc: f64 = states.iter().map(|&x| p[x]).sum();
        if pc == 0.0 {
            continue;
        }
        let action = states.iter().map(|&x| p[x] * f[x]).sum::<f64>() / pc;
        let human = states.iter().map(|&x| p[x] * (f[x] - action).powi(2)).sum::<f64>() / pc;
        let mach = states
            .iter()
            .map(|&x| p[x] * (f[x] - machine[s.machine_category(x)]).powi(2))
            .sum::<f64>()
            / pc;
        total += pc * human.min(mach);
    }
    total
}

#[test]
fn marginalized_team_loss_matches_state_level_definition() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for k in 0..200 {
        let d = rng.random_range(1..=6);
        let s = random_setting(d, &mut rng).unwrap();
        let grid = s.marginalize();
        let machine: Vec<f64> = (0..grid.m()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let direct = state_level_team_loss(&s, &machine);
        let via_grid = grid.team_loss(&MachineAction::new(machine).unwrap());
        assert!((direct - via_grid).abs() <= 1e-9, "setting {k}: {direct} vs {via_grid}");
    }
}

#[test]
fn shared_feature_split_glues_to_the_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let mut checked = 0;
    while checked < 100 {
        let d = rng.random_range(2..=6);
        let s = random_setting(d, &mut rng).unwrap();
        let shared = s.shared_features().len();
        if !(1..=2).contains(&shared) || s.human_features().len() > 4 {
            continue;
        }
        let grid = s.marginalize();
        let direct = solve_brute(&grid).unwrap().team_loss;
        let split = split_by_shared(&s);
        let mut machines = Vec::new();
        let mut weighted = 0.0;
        for part in &split.parts {
            let r = solve_brute(&part.setting.marginalize()).unwrap();
            weighted += part.mass * r.team_loss;
            machines.push(r.machine);
        }
        let glued = grid.team_loss(&split.glue(&machines));
        assert!((glued - direct).abs() <= 1e-9, "glued {glued} vs direct {direct}");
        assert!((weighted - direct).abs() <= 1e-9, "weighted {weighted} vs direct {direct}");
        checked += 1;
    }
}

#[test]
fn shared_split_example_with_three_features() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let probs: Vec<f64> = {
        let raw: Vec<f64> = (0..8).map(|_| rng.random_range(0.1..1.0)).collect();
        let t: f64 = raw.iter().sum();
        raw.iter().map(|x| x / t).collect()
    };
    let actions: Vec<f64> = (0..8).map(|_| rng.random_range(-2.0..2.0)).collect();
    let s = DelegationSetting::new(3, &[1, 3], &[2, 3], probs, actions).unwrap();
    let split = split_by_shared(&s);
    assert_eq!(split.shared, vec![3]);
    assert_eq!(split.parts.len(), 2);
    let machines: Vec<MachineAction> = split
        .parts
        .iter()
        .map(|p| solve_brute(&p.setting.marginalize()).unwrap().machine)
        .collect();
    let grid = s.marginalize();
    let glued = grid.team_loss(&split.glue(&machines));
    assert!((glued - solve_brute(&grid).unwrap().team_loss).abs() < 1e-12);
}

#[test]
fn two_feature_family_has_consistent_grid() {
    let g = two_feature_setting(0.5, 2.0).marginalize();
    assert_eq!(g.mass_matrix(), vec![vec![0.25; 2]; 2]);
    assert_eq!(g.base_loss(), 0.0);
}
