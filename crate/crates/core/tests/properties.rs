mod common;

use labscene_core::evaluator::{compose_scores, nav_benchmark, EpisodeResult, EvaluationReport};
use labscene_core::geometry::{out_of_bounds, overlap, rotate};
use labscene_core::navigation::{neighbors, plan_cells, OccupancyGrid};
use labscene_core::refine::{dedup, Adjustment, AdjustmentSuggestion, Axis};
use labscene_core::safety::{satisfaction_distance, satisfaction_glass, worst_k_average};
use labscene_core::scene::{desktop_to_global, LocalPose};
use labscene_core::{Footprint, Layout, NavStatus, PlacedObject, Pose, Room, Vec2};
use proptest::prelude::*;

fn rect() -> impl Strategy<Value = Footprint> {
    (0.0..5.0f64, 0.0..5.0f64, 0.1..2.0f64, 0.1..2.0f64, 0.0..360.0f64)
        .prop_map(|(x, y, w, h, yaw)| Footprint::new(Vec2::new(x, y), w, h, yaw))
}

fn grid(w: usize, h: usize, cells: &[bool]) -> OccupancyGrid {
    let mut g = OccupancyGrid::empty(w, h, 0.05);
    for (i, &c) in cells.iter().enumerate() {
        g.set((i % w, i / w), c);
    }
    g
}

fn suggestion() -> impl Strategy<Value = AdjustmentSuggestion> {
    let object = prop::sample::select(vec!["a", "b", "c"]);
    let adj = prop_oneof![
        (any::<bool>(), -2.0..2.0f64).prop_map(|(x, delta)| Adjustment::Translation {
            axis: if x { Axis::X } else { Axis::Y },
            delta,
        }),
        (0.0..360.0f64, -180.0..180.0f64).prop_map(|(t, d)| Adjustment::Rotation {
            target_theta: t,
            delta_theta: d,
        }),
    ];
    (object, adj).prop_map(|(o, adjustment)| AdjustmentSuggestion {
        object: o.to_string(),
        adjustment,
        reason: "test".into(),
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn overlap_is_symmetric(a in rect(), b in rect()) {
        prop_assert_eq!(overlap(&a, &b).overlapping, overlap(&b, &a).overlapping);
    }

    #[test]
    fn minimal_translation_separates(a in rect(), b in rect()) {
        let r = overlap(&a, &b);
        prop_assert_eq!(r.overlapping, r.depth > 0.0);
        if r.overlapping {
            let moved = b.translated(r.direction * (r.depth + 1e-6));
            prop_assert!(!overlap(&a, &moved).overlapping);
        }
    }

    #[test]
    fn boundary_correction_is_a_fixpoint(f in rect()) {
        let room = Room::new(5.0, 5.0, 3.0);
        if let Some(c) = out_of_bounds(&f, &room).unwrap() {
            prop_assert_eq!(out_of_bounds(&f.translated(c), &room).unwrap(), None);
        }
    }

    #[test]
    fn footprint_centroid_and_area(f in rect()) {
        let c = f.corners();
        let centroid = (c[0] + c[1] + c[2] + c[3]) * 0.25;
        prop_assert!(centroid.distance(f.center) < 1e-9);
        prop_assert!((c[0].distance(c[1]) * c[1].distance(c[2]) - f.area()).abs() < 1e-9);
    }

    #[test]
    fn distance_satisfaction_is_monotone(d1 in 0.0..3.0f64, d2 in 0.0..3.0f64, d_min in 0.1..2.0f64, f in 0.0..0.99f64) {
        let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        let s_lo = satisfaction_distance(lo, d_min, f * d_min, true).unwrap();
        let s_hi = satisfaction_distance(hi, d_min, f * d_min, true).unwrap();
        prop_assert!(s_lo <= s_hi);
        prop_assert!((0.0..=1.0).contains(&s_lo));
        prop_assert_eq!(satisfaction_distance(hi, d_min, f * d_min, false).unwrap(), 0.0);
    }

    #[test]
    fn glass_satisfaction_is_lipschitz(a in -0.2..0.5f64, b in -0.2..0.5f64, d_safe in 0.01..0.3f64) {
        let (sa, sb) = (satisfaction_glass(a, d_safe), satisfaction_glass(b, d_safe));
        prop_assert!((sa - sb).abs() <= (a - b).abs() / d_safe + 1e-12);
    }

    #[test]
    fn worst_k_at_most_mean(scores in prop::collection::vec(0.0..1.0f64, 1..20), k in 1usize..6) {
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        prop_assert!(worst_k_average(&scores, k).unwrap() <= mean + 1e-12);
    }

    #[test]
    fn scores_are_bounded_sums(g in -1.0..2.0f64, c in prop::option::of(-1.0..2.0f64), ok: bool, s in prop::option::of(-10.0..50.0f64)) {
        let sc = compose_scores(g, c, ok, s);
        prop_assert_eq!(sc.overall, sc.s_phys + sc.s_chem + sc.s_consist.unwrap_or(0.0));
        prop_assert!((0.0..=100.0).contains(&sc.overall));
    }

    #[test]
    fn spl_never_exceeds_sr(eps in prop::collection::vec((any::<bool>(), 0.1..10.0f64, 0.0..20.0f64), 1..30)) {
        let eps: Vec<EpisodeResult> = eps
            .into_iter()
            .map(|(success, shortest, extra)| EpisodeResult { success, shortest, agent: shortest + extra })
            .collect();
        let b = nav_benchmark(&eps).unwrap();
        prop_assert!(b.spl <= b.sr + 1e-12);
    }

    #[test]
    fn dedup_is_idempotent(s in prop::collection::vec(suggestion(), 0..20)) {
        let once = dedup(&s);
        prop_assert_eq!(dedup(&once), once.clone());
        // At most one translation per axis and one rotation per object.
        prop_assert!(once.len() <= 9);
    }

    #[test]
    fn planner_is_symmetric(cells in prop::collection::vec(prop::bool::weighted(0.25), 16 * 16), s in (0usize..16, 0usize..16), g in (0usize..16, 0usize..16)) {
        let grid = grid(16, 16, &cells);
        let fwd = plan_cells(&grid, s, g);
        let back = plan_cells(&grid, g, s);
        let swapped = match back.status {
            NavStatus::StartBlocked => NavStatus::EndBlocked,
            NavStatus::EndBlocked => NavStatus::StartBlocked,
            other => other,
        };
        if !(grid.occupied(s) && grid.occupied(g)) {
            prop_assert_eq!(fwd.status, swapped);
        }
        prop_assert_eq!(fwd.length, back.length);
        prop_assert_eq!(fwd.path.is_some(), fwd.status == NavStatus::Ok);
        if let Some(path) = fwd.path {
            prop_assert_eq!(path[0], s);
            prop_assert_eq!(*path.last().unwrap(), g);
            for w in path.windows(2) {
                prop_assert!(!grid.occupied(w[1]));
                prop_assert!(neighbors(&grid, w[0]).any(|(n, _)| n == w[1]));
            }
        }
    }

    #[test]
    fn freeing_cells_never_breaks_a_path(cells in prop::collection::vec(prop::bool::weighted(0.3), 16 * 16), s in (0usize..16, 0usize..16), g in (0usize..16, 0usize..16), drop in prop::collection::vec(0usize..256, 0..40)) {
        let before = plan_cells(&grid(16, 16, &cells), s, g);
        let mut freer = cells.clone();
        for i in drop {
            freer[i] = false;
        }
        let after = plan_cells(&grid(16, 16, &freer), s, g);
        if before.status == NavStatus::Ok {
            prop_assert_eq!(after.status, NavStatus::Ok);
            prop_assert!(after.length <= before.length + 1e-12);
        }
    }

    #[test]
    fn desktop_mapping_is_equivariant(x in 2.0..8.0f64, y in 2.0..8.0f64, yaw in 0.0..360.0f64, dyaw in -180.0..180.0f64, u in 0.0..1.5f64, v in 0.0..0.75f64, dx in -1.0..1.0f64, dy in -1.0..1.0f64) {
        let base = common::assets();
        let table = base.get("ExperimentTable").unwrap();
        let local = LocalPose { u, v, yaw: 0.0 };
        let parent = PlacedObject::on_floor("t", "ExperimentTable", Pose::new(x, y, 0.0, yaw));
        let p0 = desktop_to_global(&parent, table, local).unwrap();
        let shifted = PlacedObject::on_floor("t", "ExperimentTable", Pose::new(x + dx, y + dy, 0.0, yaw));
        let p1 = desktop_to_global(&shifted, table, local).unwrap();
        prop_assert!((p1.x - p0.x - dx).abs() < 1e-9 && (p1.y - p0.y - dy).abs() < 1e-9);
        let turned = PlacedObject::on_floor("t", "ExperimentTable", Pose::new(x, y, 0.0, yaw + dyaw));
        let p2 = desktop_to_global(&turned, table, local).unwrap();
        // Rotation-matrix oracle about the parent's center.
        let want = Vec2::new(x, y) + rotate(p0.xy() - Vec2::new(x, y), dyaw);
        prop_assert!(p2.xy().distance(want) < 1e-9);
        prop_assert!((p0.z - table.bbox.height).abs() < 1e-12);
    }

    #[test]
    fn yaw_is_stored_modulo_360(yaw in -1000.0..1000.0f64) {
        let p = Pose::new(0.0, 0.0, 0.0, yaw);
        prop_assert!((0.0..360.0).contains(&p.yaw));
    }
}

#[test]
fn layout_json_round_trips() {
    for name in ["cluttered_bench", "goal_pairs_case", "refine_severed_corridor"] {
        let l = common::layout(name);
        let back = Layout::from_json_str(&l.to_json_string()).unwrap();
        assert_eq!(l, back, "{name}");
    }
}

#[test]
fn report_json_round_trips() {
    let base = common::assets();
    let p = common::protocol("hotplate_ethanol");
    let l = common::layout("cluttered_bench");
    let cfg = labscene_core::PipelineConfig::default();
    let report =
        labscene_core::evaluator::evaluate_scene(&l, &p, &base, &cfg.eval_config(), &cfg.semantic.stub).unwrap();
    let back: EvaluationReport = serde_json::from_str(&report.to_json_string()).unwrap();
    assert_eq!(report, back);
}
