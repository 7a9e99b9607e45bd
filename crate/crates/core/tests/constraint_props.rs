mod common;

use proptest::prelude::*;
use suture_core::constraints::{
    assemble, h_con, h_con_grad, h_obs, h_obs_grad, v_stiff, v_stiff_grad, RowKind, ThreadParams, ThreadState,
    VariableLayout,
};
use suture_core::geometry::{Obstacle, Point2};

const DELTA: f64 = 1e-3;

fn close(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= 1e-12 * scale
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sizes_match_closed_forms(seed in any::<u64>(), n in 3usize..40, m in 0usize..4) {
        let mut rng = common::rng(seed);
        let inst = common::random_instance(&mut rng, n, m, DELTA);
        let sys = assemble(&inst.state, &inst.obstacles, &inst.params, inst.needle_vel).unwrap();
        let layout = VariableLayout { n };
        prop_assert_eq!(sys.a.nrows(), layout.num_rows(m));
        prop_assert_eq!(sys.a.ncols(), 2 * (n + 1) + 3 * n - 2);
        prop_assert_eq!(sys.a.nnz(), layout.expected_nnz(m));
        prop_assert_eq!(sys.row_tags.len(), sys.b.len());
    }

    #[test]
    fn rows_touch_only_their_nodes_and_slack(seed in any::<u64>(), n in 3usize..30, m in 0usize..4) {
        let mut rng = common::rng(seed);
        let inst = common::random_instance(&mut rng, n, m, DELTA);
        let sys = assemble(&inst.state, &inst.obstacles, &inst.params, inst.needle_vel).unwrap();
        let layout = sys.layout;
        for (i, tag) in sys.row_tags.iter().enumerate() {
            let (cols, _) = sys.a.row(i);
            let slack_cols: Vec<usize> = cols.iter().copied().filter(|&c| c >= layout.num_velocity()).collect();
            match tag.kind {
                RowKind::Obs => prop_assert!(slack_cols.is_empty()),
                _ => prop_assert_eq!(slack_cols, vec![layout.slack_col(tag.slack(n).unwrap())]),
            }
            let nodes = tag.nodes();
            for &c in cols.iter().filter(|&&c| c < layout.num_velocity()) {
                prop_assert!(nodes.contains(&(c / 2)), "row {:?} touches column {}", tag, c);
            }
        }
    }

    #[test]
    fn translation_leaves_barriers_unchanged(
        seed in any::<u64>(),
        n in 3usize..25,
        m in 0usize..3,
        shift in (-5e-2f64..5e-2, -5e-2f64..5e-2),
    ) {
        let mut rng = common::rng(seed);
        let inst = common::random_instance(&mut rng, n, m, DELTA);
        let t = Point2::new(shift.0, shift.1);
        let moved = ThreadState {
            needle_pos: inst.state.needle_pos + t,
            node_pos: inst.state.node_pos.iter().map(|&p| p + t).collect(),
            ..inst.state.clone()
        };
        let moved_obstacles: Vec<Obstacle> = inst.obstacles.iter().map(|o| o.rescaled(-t, 1.0)).collect();
        let a = assemble(&inst.state, &inst.obstacles, &inst.params, inst.needle_vel).unwrap();
        let b = assemble(&moved, &moved_obstacles, &inst.params, inst.needle_vel).unwrap();
        // Coordinates up to 0.06 m lose digits in differences; compare at
        // the scale of the squared coordinates.
        let scale = (0.06f64).powi(2);
        for ((ha, hb), tag) in a.h_values.iter().zip(&b.h_values).zip(&a.row_tags) {
            let s = if tag.kind == RowKind::Stiff { scale * scale } else { scale };
            prop_assert!(close(*ha, *hb, s), "{:?}: {} vs {}", tag, ha, hb);
        }
    }

    #[test]
    fn resting_safe_state_admits_zero_input(seed in any::<u64>(), n in 3usize..30, m in 0usize..4) {
        let mut rng = common::rng(seed);
        let mut inst = common::random_instance(&mut rng, n, m, DELTA);
        // Pull the thread into spacing ≤ Δ and make its current shape the
        // natural one, so every barrier is non-negative and every V is 0.
        let pts = inst.state.all_positions();
        let mut node_pos = Vec::with_capacity(n);
        let mut prev = pts[0];
        for &p in &pts[1..] {
            let d = p - prev;
            let next = if d.norm() > DELTA { prev + d * (DELTA / d.norm()) } else { p };
            node_pos.push(next);
            prev = next;
        }
        let state = ThreadState::at_rest(pts[0], node_pos);
        let all = state.all_positions();
        inst.params.natural_distances = (2..=n).map(|i| all[i].distance(all[i - 2])).collect();
        let obstacles: Vec<Obstacle> = (0..m)
            .map(|id| common::random_obstacle(&mut rng, id, &state, DELTA, inst.params.rho))
            .collect();
        let sys = assemble(&state, &obstacles, &inst.params, Point2::ZERO).unwrap();
        for (i, (&bi, tag)) in sys.b.iter().zip(&sys.row_tags).enumerate() {
            prop_assert!(bi >= -1e-12 * DELTA * DELTA, "row {} {:?}: b = {}", i, tag, bi);
        }
    }

    #[test]
    fn gradients_match_central_differences(
        xi in (-1e-2f64..1e-2, -1e-2f64..1e-2),
        xj in (-1e-2f64..1e-2, -1e-2f64..1e-2),
        delta_i in 1e-4f64..2e-3,
    ) {
        let (xi, xj) = (Point2::new(xi.0, xi.1), Point2::new(xj.0, xj.1));
        let step = 1e-7;
        let fd = |f: &dyn Fn(Point2) -> f64| {
            Point2::new(
                (f(xi + Point2::new(step, 0.0)) - f(xi - Point2::new(step, 0.0))) / (2.0 * step),
                (f(xi + Point2::new(0.0, step)) - f(xi - Point2::new(0.0, step))) / (2.0 * step),
            )
        };
        let checks = [
            (fd(&|p| h_con(p, xj, delta_i)), h_con_grad(xi, xj)),
            (fd(&|p| h_obs(p, xj, delta_i)), h_obs_grad(xi, xj)),
            (fd(&|p| v_stiff(p, xj, delta_i)), v_stiff_grad(xi, xj, delta_i)),
        ];
        for (numeric, analytic) in checks {
            let err = (numeric - analytic).norm();
            prop_assert!(err <= 1e-5 * analytic.norm().max(1e-9), "{:?} vs {:?}", numeric, analytic);
        }
    }
}

#[test]
fn natural_distance_outside_range_is_rejected() {
    let mut p = ThreadParams::new(4, DELTA, 0.0);
    p.natural_distances[1] = 2.5 * DELTA;
    assert!(p.validate().is_err());
}
