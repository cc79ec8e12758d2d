//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any fails.

mod common;

use std::cmp::Ordering;
use std::collections::VecDeque;
use std::f64::consts::SQRT_2;
use std::time::{Duration, Instant};

use labscene_core::evaluator::{availability_weighted, compose_scores, nav_benchmark, EpisodeResult};
use labscene_core::geometry::overlap;
use labscene_core::navigation::{
    f_reach, goal_pairs, goal_pairs_json, nav_targets, plan_cells, standoff, Cell, OccupancyGrid,
};
use labscene_core::optimizer::{fast_repair, optimize, trace_is_monotone, trace_to_jsonl};
use labscene_core::pipeline::{write_outputs, OUTPUT_FILES};
use labscene_core::protocol::{load_corpus, protocol_stats};
use labscene_core::refine::{apply_rotation, apply_translation, refine_loop, unreachable_rate, Axis};
use labscene_core::safety::{satisfaction_distance, satisfaction_glass, worst_k_average};
use labscene_core::scene::desktop_to_global;
use labscene_core::scene::LocalPose;
use labscene_core::{
    evaluator::geometry_metrics, run_pipeline, Footprint, Layout, NavConfig, NavStatus, OptimizerConfig,
    PipelineConfig, PlacedObject, Pose, RefineConfig, Room, Vec2,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{assets, close, fixture, layout, protocol};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- 1

fn oracle_distance(d: f64, d_min: f64, d_low: f64, geo_ok: bool) -> f64 {
    if !geo_ok || d < d_low {
        return 0.0;
    }
    f64::min(1.0, d / d_min)
}

fn oracle_worst_k(scores: &[f64], k: usize) -> f64 {
    // Selection by repeated minimum extraction.
    let mut pool = scores.to_vec();
    let take = k.min(pool.len());
    let mut sum = 0.0;
    for _ in 0..take {
        let (i, _) = pool
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(Ordering::Equal))
            .unwrap();
        sum += pool.swap_remove(i);
    }
    sum / take as f64
}

fn formula_exactness() -> Outcome {
    const N: usize = 1000;
    const TOL: f64 = 1e-12;
    let mut r = rng(1);
    let base = assets();
    let bench = base.get("LabBench").unwrap().clone();

    for i in 0..N {
        let d_min = r.gen_range(0.05..3.0);
        let d_low = d_min * r.gen_range(0.0..0.99);
        let d = r.gen_range(0.0..4.0);
        let geo = r.gen_bool(0.9);
        let got = satisfaction_distance(d, d_min, d_low, geo).map_err(|e| e.to_string())?;
        let want = oracle_distance(d, d_min, d_low, geo);
        ensure(close(got, want, TOL), || format!("distance #{i}: {got} vs {want}"))?;

        let d_safe = r.gen_range(0.01..0.5);
        let e = r.gen_range(-0.2..1.0);
        let want = if e <= 0.0 {
            0.0
        } else if e >= d_safe {
            1.0
        } else {
            e / d_safe
        };
        let got = satisfaction_glass(e, d_safe);
        ensure(close(got, want, TOL), || format!("glass #{i}: {got} vs {want}"))?;

        let n = r.gen_range(1..12);
        let scores: Vec<f64> = (0..n).map(|_| r.gen_range(0.0..1.0)).collect();
        let k = r.gen_range(1..6);
        let got = worst_k_average(&scores, k).map_err(|e| e.to_string())?;
        let want = oracle_worst_k(&scores, k);
        ensure(close(got, want, TOL), || format!("worst_k #{i}: {got} vs {want}"))?;

        let m = r.gen_range(1..40);
        let g: Vec<bool> = (0..m).map(|_| r.gen_bool(0.7)).collect();
        let s: Vec<f64> = (0..m).map(|_| r.gen_range(0.0..1.0)).collect();
        let mut num = 0.0;
        for j in 0..m {
            num += (g[j] as u8 as f64) * s[j];
        }
        let got = availability_weighted(&g, &s).map_err(|e| e.to_string())?;
        ensure(close(got, num / m as f64, TOL), || format!("weighting #{i}"))?;

        let total = r.gen_range(1..200usize);
        let u = r.gen_range(0..=total);
        let want = u as f64 / total as f64 * 100.0;
        ensure(close(unreachable_rate(u, total), want, TOL), || format!("rate #{i}"))?;

        // Standoff: heading and position via the polar form of the approach
        // direction, angle 270 - yaw.
        let yaw = r.gen_range(0.0..360.0);
        let offset = r.gen_range(0.1..0.6);
        let mut rec = bench.clone();
        rec.bbox.short_side = r.gen_range(0.2..1.5);
        rec.bbox.long_side = rec.bbox.short_side + r.gen_range(0.0..1.0);
        let one = labscene_core::AssetBase::from_records(vec![rec.clone()]).unwrap();
        let obj = PlacedObject::on_floor(
            "o",
            "LabBench",
            Pose::new(r.gen_range(1.0..9.0), r.gen_range(1.0..9.0), 0.0, yaw),
        );
        let (p, theta) = standoff(&obj, &one, offset).map_err(|e| e.to_string())?;
        let want_theta = (yaw + 180.0) % 360.0;
        ensure(close(theta, want_theta, TOL), || {
            format!("theta #{i}: {theta} vs {want_theta}")
        })?;
        let dist = rec.bbox.short_side / 2.0 + 2.0 * offset;
        let phi = (270.0 - yaw).to_radians();
        let (wx, wy) = (obj.pose.x + dist * phi.cos(), obj.pose.y + dist * phi.sin());
        ensure(close(p.x, wx, TOL) && close(p.y, wy, TOL), || {
            format!("standoff #{i}: {p:?} vs ({wx},{wy})")
        })?;
        ensure(close(p.distance(obj.pose.xy()), dist, TOL), || {
            format!("standoff distance #{i}")
        })?;

        let eps: Vec<EpisodeResult> = (0..r.gen_range(1..20))
            .map(|_| {
                let shortest = r.gen_range(0.5..10.0);
                EpisodeResult {
                    success: r.gen_bool(0.6),
                    shortest,
                    agent: shortest * r.gen_range(0.8..3.0),
                }
            })
            .collect();
        let mut sr = 0.0;
        let mut spl = 0.0;
        for e in &eps {
            let s = if e.success { 1.0 } else { 0.0 };
            sr += s;
            spl += s * e.shortest / f64::max(e.agent, e.shortest);
        }
        let b = nav_benchmark(&eps).map_err(|e| e.to_string())?;
        let n = eps.len() as f64;
        ensure(close(b.sr, sr / n, TOL) && close(b.spl, spl / n, TOL), || {
            format!("spl #{i}")
        })?;
    }
    Ok(format!("{N} random inputs per formula"))
}

// ---------------------------------------------------------------- 2

/// Signed depth of `p` in `fp`: positive inside, the smallest distance to
/// the four edge lines.
fn depth_in(fp: &Footprint, p: Vec2) -> f64 {
    let c = fp.corners();
    (0..4)
        .map(|k| {
            let (a, b) = (c[k], c[(k + 1) % 4]);
            let e = b - a;
            let n = Vec2::new(-e.y, e.x) * (1.0 / e.norm());
            let centroid = (c[0] + c[2]) * 0.5;
            let s = if n.dot(centroid - a) > 0.0 { 1.0 } else { -1.0 };
            s * n.dot(p - a)
        })
        .fold(f64::INFINITY, f64::min)
}

fn perimeter_samples(fp: &Footprint, count: usize) -> Vec<Vec2> {
    let c = fp.corners();
    let per_edge = count / 4;
    let mut out = Vec::with_capacity(count);
    for k in 0..4 {
        let (a, b) = (c[k], c[(k + 1) % 4]);
        for j in 0..per_edge {
            let t = j as f64 / per_edge as f64;
            out.push(a + (b - a) * t);
        }
    }
    out
}

/// Sampling oracle over 10^4 points on both boundaries: the deepest sample
/// of either rectangle inside the other. Positive means overlap.
fn sampled_overlap_depth(a: &Footprint, b: &Footprint) -> f64 {
    let from_a = perimeter_samples(a, 5000).into_iter().map(|p| depth_in(b, p));
    let from_b = perimeter_samples(b, 5000).into_iter().map(|p| depth_in(a, p));
    from_a.chain(from_b).fold(f64::NEG_INFINITY, f64::max)
}

fn geometry_oracle() -> Outcome {
    let mut r = rng(2);
    let mut compared = 0;
    let mut skipped = 0;
    let mut overlapping = 0;
    for i in 0..1000 {
        let mut rect = || {
            Footprint::new(
                Vec2::new(r.gen_range(0.0..3.0), r.gen_range(0.0..3.0)),
                r.gen_range(0.1..1.5),
                r.gen_range(0.1..1.5),
                r.gen_range(0.0..360.0),
            )
        };
        let (a, b) = (rect(), rect());
        let m = sampled_overlap_depth(&a, &b);
        if m.abs() <= 1e-6 {
            skipped += 1;
            continue;
        }
        let got = overlap(&a, &b).overlapping;
        ensure(got == (m > 0.0), || {
            format!("pair #{i}: sat {got}, sampled depth {m}\n{a:?}\n{b:?}")
        })?;
        overlapping += got as usize;
        compared += 1;
    }

    // Axis-aligned boxes on a coarse lattice, so exact contact happens often.
    let mut r = rng(22);
    for i in 0..1000 {
        let mut iv = || {
            let lo = r.gen_range(0..40) as f64 * 0.25;
            (lo, lo + r.gen_range(1..12) as f64 * 0.25)
        };
        let ((ax0, ax1), (ay0, ay1), (bx0, bx1), (by0, by1)) = (iv(), iv(), iv(), iv());
        let a = Footprint::aligned(Vec2::new(ax0, ay0), Vec2::new(ax1, ay1));
        let b = Footprint::aligned(Vec2::new(bx0, by0), Vec2::new(bx1, by1));
        let want = ax0 < bx1 && bx0 < ax1 && ay0 < by1 && by0 < ay1;
        let got = overlap(&a, &b).overlapping;
        ensure(got == want, || format!("aligned #{i}: sat {got}, intervals {want}"))?;
    }
    Ok(format!(
        "{compared} rotated pairs compared ({overlapping} overlapping, {skipped} in tangency band), 1000 aligned"
    ))
}

// ---------------------------------------------------------------- 3

/// Exact path cost `a + b*sqrt(2)` as integer step counts.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
struct Cost(u32, u32);

impl Cost {
    /// Exact comparison of `a1 + b1 r` and `a2 + b2 r` with `r = sqrt(2)`.
    fn cmp_exact(self, o: Cost) -> Ordering {
        let da = self.0 as i64 - o.0 as i64;
        let db = o.1 as i64 - self.1 as i64;
        // Compare da with db * sqrt(2).
        match (da.signum(), db.signum()) {
            (x, y) if x <= 0 && y >= 0 && (x, y) != (0, 0) => Ordering::Less,
            (x, y) if x >= 0 && y <= 0 && (x, y) != (0, 0) => Ordering::Greater,
            (0, 0) => Ordering::Equal,
            (1, 1) => (da * da).cmp(&(2 * db * db)),
            _ => (2 * db * db).cmp(&(da * da)),
        }
    }
}

fn dijkstra(grid: &[bool], w: usize, h: usize, s: Cell, g: Cell) -> Option<Cost> {
    let free =
        |x: i64, y: i64| x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h && !grid[y as usize * w + x as usize];
    let mut dist: Vec<Option<Cost>> = vec![None; w * h];
    let mut done = vec![false; w * h];
    dist[s.1 * w + s.0] = Some(Cost(0, 0));
    loop {
        // Linear scan for the cheapest open node.
        let mut pick: Option<usize> = None;
        for i in 0..w * h {
            if done[i] {
                continue;
            }
            if let Some(c) = dist[i] {
                if pick.is_none_or(|p| c.cmp_exact(dist[p].unwrap()) == Ordering::Less) {
                    pick = Some(i);
                }
            }
        }
        let u = pick?;
        if u == g.1 * w + g.0 {
            return dist[u];
        }
        done[u] = true;
        let (x, y) = ((u % w) as i64, (u / w) as i64);
        for dx in -1i64..=1 {
            for dy in -1i64..=1 {
                if (dx, dy) == (0, 0) || !free(x + dx, y + dy) {
                    continue;
                }
                let diag = dx != 0 && dy != 0;
                if diag && !(free(x + dx, y) && free(x, y + dy)) {
                    continue;
                }
                let c = dist[u].unwrap();
                let nc = if diag { Cost(c.0, c.1 + 1) } else { Cost(c.0 + 1, c.1) };
                let v = (y + dy) as usize * w + (x + dx) as usize;
                if dist[v].is_none_or(|old| nc.cmp_exact(old) == Ordering::Less) {
                    dist[v] = Some(nc);
                }
            }
        }
    }
}

fn connected(grid: &[bool], w: usize, h: usize, s: Cell, g: Cell) -> bool {
    let mut seen = vec![false; w * h];
    let mut q = VecDeque::from([s]);
    seen[s.1 * w + s.0] = true;
    while let Some((x, y)) = q.pop_front() {
        if (x, y) == g {
            return true;
        }
        for (dx, dy) in [
            (1i64, 0i64),
            (-1, 0),
            (0, 1),
            (0, -1),
            (1, 1),
            (1, -1),
            (-1, 1),
            (-1, -1),
        ] {
            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
            let ok = |a: i64, b: i64| {
                a >= 0 && b >= 0 && (a as usize) < w && (b as usize) < h && !grid[b as usize * w + a as usize]
            };
            if !ok(nx, ny) || (dx != 0 && dy != 0 && !(ok(x as i64 + dx, y as i64) && ok(x as i64, y as i64 + dy))) {
                continue;
            }
            let i = ny as usize * w + nx as usize;
            if !seen[i] {
                seen[i] = true;
                q.push_back((nx as usize, ny as usize));
            }
        }
    }
    false
}

fn planner_optimality() -> Outcome {
    const W: usize = 32;
    let res = 0.05;
    let mut r = rng(3);
    let (mut ok, mut classified) = (0, 0);
    for gi in 0..50 {
        let mut grid = OccupancyGrid::empty(W, W, res);
        let cells: Vec<bool> = (0..W * W).map(|_| r.gen_bool(0.2)).collect();
        for (i, &occ) in cells.iter().enumerate() {
            grid.set((i % W, i / W), occ);
        }
        for pi in 0..10 {
            let s = (r.gen_range(0..W), r.gen_range(0..W));
            let g = (r.gen_range(0..W), r.gen_range(0..W));
            let out = plan_cells(&grid, s, g);
            let want = if cells[s.1 * W + s.0] {
                NavStatus::StartBlocked
            } else if cells[g.1 * W + g.0] {
                NavStatus::EndBlocked
            } else if !connected(&cells, W, W, s, g) {
                NavStatus::PathBlocked
            } else {
                NavStatus::Ok
            };
            ensure(out.status == want, || {
                format!("grid {gi} pair {pi}: {} vs oracle {}", out.status, want)
            })?;
            classified += 1;
            if want == NavStatus::Ok {
                let c = dijkstra(&cells, W, W, s, g).ok_or("oracle found no path on a connected instance")?;
                let length = (c.0 as f64 + c.1 as f64 * SQRT_2) * res;
                ensure(out.length == length, || {
                    format!("grid {gi} pair {pi}: {} vs {}", out.length, length)
                })?;
                ok += 1;
            }
        }
    }
    Ok(format!(
        "{classified} instances classified, {ok} connected lengths equal"
    ))
}

// ---------------------------------------------------------------- 4

const FLOOR_ASSETS: [&str; 6] = [
    "ExperimentTable",
    "LabBench",
    "ReagentCabinet",
    "ValidationPlatform",
    "FumeHood",
    "RotaryEvaporatorStation",
];

/// A valid slot layout (one object per 2 m cell), then random shoves that
/// create overlaps and wall crossings.
fn synthetic_scene(seed: u64) -> Layout {
    let mut r = rng(1000 + seed);
    let mut layout = Layout::new(Room::new(10.0, 8.0, 3.0));
    let n = r.gen_range(5..=15);
    let mut slots: Vec<(usize, usize)> = (0..5).flat_map(|i| (0..4).map(move |j| (i, j))).collect();
    for k in 0..n {
        let (i, j) = slots.swap_remove(r.gen_range(0..slots.len()));
        let asset = FLOOR_ASSETS[r.gen_range(0..FLOOR_ASSETS.len())];
        let (cx, cy) = (1.0 + 2.0 * i as f64, 1.0 + 2.0 * j as f64);
        let yaw = if r.gen_bool(0.5) {
            90.0 * r.gen_range(0..4) as f64
        } else {
            r.gen_range(0.0..360.0)
        };
        layout.objects.push(PlacedObject::on_floor(
            format!("{asset}_{k}"),
            asset,
            Pose::new(cx, cy, 0.0, yaw),
        ));
    }
    for o in layout.objects.iter_mut() {
        if r.gen_bool(0.6) {
            let a = r.gen_range(0.0..std::f64::consts::TAU);
            let m = r.gen_range(0.3..1.0);
            o.pose.x += m * a.cos();
            o.pose.y += m * a.sin();
        }
    }
    // At least one wall crossing.
    layout.objects[0].pose.x = 0.3;
    layout
}

fn repair_convergence() -> Outcome {
    let base = assets();
    let p = protocol("two_stop");
    let cfg = OptimizerConfig::default();
    let proposer = labscene_core::HeuristicProposer::default();
    let mut before = (0, 0);
    for seed in 0..20 {
        let scene = synthetic_scene(seed);
        let m0 = geometry_metrics(&scene, &base);
        before.0 += m0.ob;
        before.1 += m0.cn;
        let repaired = fast_repair(&scene, &base, 50, 0.02).map_err(|e| format!("scene {seed}: {e}"))?;
        let out = optimize(&repaired.layout, &p, &base, &proposer, &cfg).map_err(|e| format!("scene {seed}: {e}"))?;
        let m = geometry_metrics(&out.layout, &base);
        ensure(m.ob == 0 && m.cn == 0, || {
            format!("scene {seed}: OB {} CN {} after repair", m.ob, m.cn)
        })?;
        ensure(trace_is_monotone(&out.trace), || {
            format!("scene {seed}: trace not monotone\n{}", trace_to_jsonl(&out.trace))
        })?;
    }
    Ok(format!("20 scenes, OB {} -> 0, CN {} -> 0", before.0, before.1))
}

// ---------------------------------------------------------------- 5

fn refinement_efficacy() -> Outcome {
    let base = assets();
    let p = protocol("two_stop");
    let nav = NavConfig::default();
    let mut notes = Vec::new();
    for name in [
        "refine_blocked_start",
        "refine_blocked_goal",
        "refine_severed_corridor",
        "refine_wall_facing",
        "refine_out_of_interior",
    ] {
        let l = layout(name);
        let r0 = f_reach(&l, &p, &base, &nav).map_err(|e| e.to_string())?;
        ensure(r0.f_reach == 0.0 && r0.unreachable() == 1, || {
            format!("{name}: fixture is not defective")
        })?;
        let out = refine_loop(&l, &p, &base, &nav, &RefineConfig::default()).map_err(|e| e.to_string())?;
        let iterations = out.history.iter().filter(|h| !h.applied.is_empty()).count();
        ensure(iterations <= 3, || format!("{name}: {iterations} adjusting iterations"))?;
        let fresh = f_reach(&out.layout, &p, &base, &nav).map_err(|e| e.to_string())?;
        ensure(fresh.f_reach == 1.0, || {
            format!("{name}: terminal f_reach {}", fresh.f_reach)
        })?;
        notes.push(format!("{}:{iterations}", name.trim_start_matches("refine_")));
    }
    Ok(notes.join(" "))
}

// ---------------------------------------------------------------- 6

fn isometry() -> Outcome {
    let base = assets();
    let mut r = rng(6);
    let items = [
        "Beaker",
        "RoundBottomFlask",
        "HotPlate",
        "Ethanol",
        "Pipette",
        "ElectronicScale",
    ];
    let mut worst: f64 = 0.0;
    for s in 0..100 {
        let surface = FLOOR_ASSETS[r.gen_range(0..FLOOR_ASSETS.len())];
        let sa = base.get(surface).unwrap();
        let mut l = Layout::new(Room::new(10.0, 10.0, 3.0));
        let parent = PlacedObject::on_floor("s", surface, Pose::new(5.0, 5.0, 0.0, r.gen_range(0.0..360.0)));
        l.objects.push(parent.clone());
        for k in 0..r.gen_range(2..7) {
            let u = r.gen_range(0.0..sa.bbox.long_side);
            let v = r.gen_range(0.0..sa.bbox.short_side);
            let pose = desktop_to_global(
                &parent,
                sa,
                LocalPose {
                    u,
                    v,
                    yaw: r.gen_range(0.0..360.0),
                },
            )
            .map_err(|e| e.to_string())?;
            l.objects.push(PlacedObject::on_surface(
                format!("i{k}"),
                items[k % items.len()],
                pose,
                "s",
            ));
        }
        let pairwise = |l: &Layout| -> Vec<f64> {
            let pts: Vec<Vec2> = l.objects.iter().map(|o| o.pose.xy()).collect();
            let mut d = Vec::new();
            for i in 0..pts.len() {
                for j in i + 1..pts.len() {
                    d.push(pts[i].distance(pts[j]));
                }
            }
            d
        };
        let d0 = pairwise(&l);
        let axis = if r.gen_bool(0.5) { Axis::X } else { Axis::Y };
        let moved = apply_translation(&l, "s", axis, r.gen_range(-3.0..3.0)).map_err(|e| e.to_string())?;
        let yaw0 = l.get("s").unwrap().pose.yaw;
        let theta = r.gen_range(-180.0..180.0);
        let turned = apply_rotation(&moved, "s", yaw0 + theta).map_err(|e| e.to_string())?;
        for (a, b) in d0.iter().zip(pairwise(&moved)).chain(d0.iter().zip(pairwise(&turned))) {
            worst = worst.max((a - b).abs());
            ensure((a - b).abs() <= 1e-9, || {
                format!("surface {s}: distance changed by {}", (a - b).abs())
            })?;
        }
        let back = apply_rotation(&turned, "s", yaw0).map_err(|e| e.to_string())?;
        for (o, m) in moved.objects.iter().zip(&back.objects) {
            let err = o.pose.xy().distance(m.pose.xy());
            worst = worst.max(err);
            ensure(err <= 1e-9, || {
                format!("surface {s}: {} off by {err} after +/- rotation", o.instance_id)
            })?;
        }
        ensure(
            moved
                .objects
                .iter()
                .zip(&back.objects)
                .all(|(a, b)| a.pose.z == b.pose.z),
            || "z changed".into(),
        )?;
    }
    Ok(format!("100 surfaces, worst deviation {worst:.2e} m"))
}

// ---------------------------------------------------------------- 7

fn score_composition() -> Outcome {
    let mut r = rng(7);
    for i in 0..10_000 {
        let f_geo = r.gen_range(-0.5..1.5);
        let f_chem = r.gen_bool(0.9).then(|| r.gen_range(-0.5..1.5));
        let assets_ok = r.gen_bool(0.8);
        let sem = r.gen_bool(0.9).then(|| r.gen_range(-5.0..40.0));
        let s = compose_scores(f_geo, f_chem, assets_ok, sem);
        let sum = s.s_phys + s.s_chem + s.s_consist.unwrap_or(0.0);
        ensure(s.overall == sum, || format!("#{i}: {} != {sum}", s.overall))?;
        ensure((0.0..=100.0).contains(&s.overall), || {
            format!("#{i}: {} out of range", s.overall)
        })?;
    }
    let perfect = compose_scores(1.0, Some(1.0), true, Some(30.0));
    ensure(perfect.overall == 100.0, || {
        format!("perfect inputs give {}", perfect.overall)
    })?;
    Ok("10000 random inputs, perfect = 100".into())
}

// ---------------------------------------------------------------- 8

const EXPECTED_GOAL_PAIRS: &str = concat!(
    r#"{"goal_pairs":["#,
    r#"{"start":[1.211,6.704,1.571],"end":[2.100,6.905,0.000]},"#,
    r#"{"start":[2.100,6.905,0.000],"end":[6.779,4.000,4.712]},"#,
    r#"{"start":[6.779,4.000,4.712],"end":[2.423,4.000,1.571]}"#,
    r#"],"num_targets":10,"num_goal_pairs":3}"#
);

fn goal_pair_format() -> Outcome {
    let base = assets();
    let p = protocol("goal_pairs_case");
    let l = layout("goal_pairs_case");
    let nav = NavConfig::default();
    let targets = nav_targets(&p, &l, &base, nav.offset_radius).map_err(|e| e.to_string())?;
    let pairs = goal_pairs(&p, &l, &base, nav.offset_radius).map_err(|e| e.to_string())?;
    let json = goal_pairs_json(&pairs, targets.len(), 3);
    ensure(json == EXPECTED_GOAL_PAIRS, || format!("got {json}"))?;
    let v: serde_json::Value = serde_json::from_str(&json).map_err(|e| e.to_string())?;
    let thetas: Vec<f64> = v["goal_pairs"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|g| [g["start"][2].as_f64().unwrap(), g["end"][2].as_f64().unwrap()])
        .collect();
    for t in &thetas {
        // Parse, print again at three decimals: same digits.
        ensure(
            format!("{t:.3}") == format!("{:.3}", t.to_degrees().to_radians()),
            || format!("{t} drifts"),
        )?;
    }
    ensure(thetas.contains(&1.571) && thetas.contains(&4.712), || {
        format!("{thetas:?}")
    })?;
    Ok("3 pairs byte-identical".into())
}

// ---------------------------------------------------------------- 9

/// Population statistics of the fixture corpus, computed with exact
/// rational arithmetic: (row, mean, min, max, std).
const CORPUS_STATS: [(&str, f64, f64, f64, f64); 4] = [
    ("Reagents", 3.4, 1.0, 6.0, 1.6451950239004087),
    ("Instruments", 5.4, 2.0, 10.0, 2.5768197453450252),
    ("Steps", 10.233333333333333, 3.0, 18.0, 4.521676188710947),
    ("Moves", 4.7, 0.0, 15.0, 4.059146051408678),
];

fn statistics() -> Outcome {
    let corpus = load_corpus(fixture("corpus")).map_err(|e| e.to_string())?;
    ensure(corpus.len() == 30, || format!("{} protocols", corpus.len()))?;
    let stats = protocol_stats(&corpus).map_err(|e| e.to_string())?;
    for (name, mean, min, max, std) in CORPUS_STATS {
        let row = stats.row(name).ok_or(format!("missing row {name}"))?;
        for (what, got, want) in [
            ("mean", row.mean, mean),
            ("min", row.min, min),
            ("max", row.max, max),
            ("std", row.std, std),
        ] {
            ensure((got - want).abs() <= 1e-9, || format!("{name} {what}: {got} vs {want}"))?;
        }
    }
    let table = stats.to_table();
    for line in [
        "Reagents         3.40      1      6     1.65",
        "Instruments      5.40      2     10     2.58",
        "Steps           10.23      3     18     4.52",
        "Moves            4.70      0     15     4.06",
    ] {
        ensure(table.contains(line), || format!("missing `{line}` in\n{table}"))?;
    }
    Ok("30 protocols, 4 rows".into())
}

// ---------------------------------------------------------------- 10

fn determinism() -> Outcome {
    let base = assets();
    let p = protocol("deprotection_tfa");
    let cfg = PipelineConfig {
        seed: 11,
        ..PipelineConfig::default()
    };
    let a = run_pipeline(&p, &base, &cfg, None).map_err(|e| e.to_string())?;
    // Second run on a single worker thread.
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| e.to_string())?;
    let b = pool
        .install(|| run_pipeline(&p, &base, &cfg, None))
        .map_err(|e| e.to_string())?;
    let dirs = [
        tempfile::tempdir().map_err(|e| e.to_string())?,
        tempfile::tempdir().map_err(|e| e.to_string())?,
    ];
    write_outputs(&a, dirs[0].path()).map_err(|e| e.to_string())?;
    write_outputs(&b, dirs[1].path()).map_err(|e| e.to_string())?;
    for name in OUTPUT_FILES {
        let x = std::fs::read(dirs[0].path().join(name)).map_err(|e| e.to_string())?;
        let y = std::fs::read(dirs[1].path().join(name)).map_err(|e| e.to_string())?;
        ensure(x == y, || format!("{name} differs between runs"))?;
    }
    Ok(format!("{} files identical", OUTPUT_FILES.len()))
}

type Criterion = (&'static str, Option<Duration>, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("formula exactness", Some(Duration::from_secs(5)), formula_exactness),
        (
            "geometry oracle equivalence",
            Some(Duration::from_secs(30)),
            geometry_oracle,
        ),
        ("planner optimality", Some(Duration::from_secs(10)), planner_optimality),
        ("repair convergence", Some(Duration::from_secs(60)), repair_convergence),
        (
            "refinement efficacy",
            Some(Duration::from_secs(30)),
            refinement_efficacy,
        ),
        ("isometry invariants", None, isometry),
        ("score composition", None, score_composition),
        ("goal-pair format fidelity", None, goal_pair_format),
        ("statistics arithmetic", None, statistics),
        ("determinism", None, determinism),
    ];
    let mut failed = 0;
    for (i, (name, budget, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let result = run();
        let elapsed = t.elapsed();
        let verdict = match (result, budget) {
            (Ok(note), Some(b)) if elapsed > *b => Err(format!("{note}; over the {:.0}s budget", b.as_secs_f64())),
            (r, _) => r,
        };
        match verdict {
            Ok(note) => println!("PASS {:>2} {name} ({:.2}s): {note}", i + 1, elapsed.as_secs_f64()),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name} ({:.2}s): {why}", i + 1, elapsed.as_secs_f64());
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
