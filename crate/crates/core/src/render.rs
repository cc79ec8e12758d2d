//! Top-down SVG rendering at 100 px per meter with y pointing up.
//!
//! The room outline is the only `<rect>`; footprints are `<polygon>`s whose
//! points are the footprint corners in screen space, printed with three
//! decimals.

use std::fmt::Write as _;
use std::path::Path;

use crate::asset::AssetBase;
use crate::geometry::{footprint, Vec2};
use crate::navigation::{access_direction, NavTarget, OccupancyGrid};
use crate::scene::Layout;

pub const PX_PER_M: f64 = 100.0;

#[derive(Debug, Clone, Default)]
pub struct Overlay<'a> {
    pub grid: Option<&'a OccupancyGrid>,
    /// Paths in world coordinates.
    pub paths: Vec<Vec<Vec2>>,
    pub markers: Vec<&'a NavTarget>,
    /// Pairs of instance ids to highlight as safety violations.
    pub violations: Vec<(String, String)>,
}

/// World point to screen point for a room of the given depth.
pub fn to_screen(p: Vec2, depth: f64) -> (f64, f64) {
    (p.x * PX_PER_M, (depth - p.y) * PX_PER_M)
}

fn points(pts: &[Vec2], depth: f64) -> String {
    pts.iter()
        .map(|&p| {
            let (x, y) = to_screen(p, depth);
            format!("{x:.3},{y:.3}")
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

pub fn render_svg(layout: &Layout, base: &AssetBase, overlay: &Overlay<'_>) -> String {
    let room = layout.room;
    let d = room.depth;
    let (w, h) = (room.width * PX_PER_M, room.depth * PX_PER_M);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.3}" height="{h:.3}" viewBox="0 0 {w:.3} {h:.3}">"#
    );
    let _ = writeln!(
        s,
        r#"<rect class="room" x="0.000" y="0.000" width="{w:.3}" height="{h:.3}" fill="white" stroke="black" stroke-width="2"/>"#
    );

    if let Some(g) = overlay.grid {
        let mut path = String::new();
        let r = g.resolution;
        for j in 0..g.height {
            for i in 0..g.width {
                if g.occupied((i, j)) {
                    let (x, y) = to_screen(g.origin + Vec2::new(i as f64 * r, (j + 1) as f64 * r), d);
                    let c = r * PX_PER_M;
                    let _ = write!(path, "M{x:.3},{y:.3}h{c:.3}v{c:.3}h-{c:.3}z");
                }
            }
        }
        if !path.is_empty() {
            let _ = writeln!(
                s,
                r##"<path class="occupied" d="{path}" fill="#cccccc" stroke="none"/>"##
            );
        }
    }

    for pass_floor in [true, false] {
        for o in layout.objects.iter().filter(|o| o.is_floor() == pass_floor) {
            let Some(a) = base.get(&o.asset_id) else { continue };
            let fp = footprint(o, a);
            let (class, fill) = if pass_floor {
                ("object", "#e8e0c8")
            } else {
                ("item", "#9ec5e8")
            };
            let _ = writeln!(
                s,
                r#"<polygon class="{class}" data-id="{}" points="{}" fill="{fill}" stroke="black" stroke-width="1"/>"#,
                escape(&o.instance_id),
                points(&fp.corners(), d)
            );
            if pass_floor {
                let (x, y) = to_screen(fp.center, d);
                let _ = writeln!(
                    s,
                    r#"<text x="{x:.3}" y="{y:.3}" font-size="10" text-anchor="middle">{}</text>"#,
                    escape(&o.asset_id)
                );
            }
        }
    }

    for (a, b) in &overlay.violations {
        let (Some(pa), Some(pb)) = (layout.get(a), layout.get(b)) else {
            continue;
        };
        let (x1, y1) = to_screen(pa.pose.xy(), d);
        let (x2, y2) = to_screen(pb.pose.xy(), d);
        let _ = writeln!(
            s,
            r#"<line class="violation" x1="{x1:.3}" y1="{y1:.3}" x2="{x2:.3}" y2="{y2:.3}" stroke="red" stroke-width="2" stroke-dasharray="6,3"/>"#
        );
    }

    for p in overlay.paths.iter().filter(|p| p.len() >= 2) {
        let _ = writeln!(
            s,
            r#"<polyline class="path" points="{}" fill="none" stroke="blue" stroke-width="2"/>"#,
            points(p, d)
        );
    }

    for m in &overlay.markers {
        let (x, y) = to_screen(m.xy(), d);
        // Arrow toward the object the robot is facing.
        let tip = m.xy() + access_direction(m.theta) * 0.3;
        let (tx, ty) = to_screen(tip, d);
        let _ = writeln!(
            s,
            r#"<circle class="marker" cx="{x:.3}" cy="{y:.3}" r="6.000" fill="green"/>"#
        );
        let _ = writeln!(
            s,
            r#"<line class="heading" x1="{x:.3}" y1="{y:.3}" x2="{tx:.3}" y2="{ty:.3}" stroke="green" stroke-width="2"/>"#
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn write_svg(path: impl AsRef<Path>, svg: &str) -> std::io::Result<()> {
    std::fs::write(path, svg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asset::{AssetRecord, AssetType, BoundingBox};
    use crate::scene::{PlacedObject, Pose, Room};

    #[test]
    fn empty_room_is_one_rect() {
        let l = Layout::new(Room::new(4.0, 3.0, 3.0));
        let svg = render_svg(&l, &AssetBase::default(), &Overlay::default());
        assert_eq!(svg.matches("<rect").count(), 1);
        assert_eq!(svg.lines().count(), 3);
        assert!(svg.contains(r#"width="400.000" height="300.000""#));
    }

    #[test]
    fn rotated_bench_corners() {
        let base = AssetBase::from_records(vec![AssetRecord::new(
            "Bench",
            AssetType::RoomAsset,
            BoundingBox::new(1.0, 2.0, 0.9),
        )])
        .unwrap();
        let mut l = Layout::new(Room::new(4.0, 4.0, 3.0));
        l.objects
            .push(PlacedObject::on_floor("b", "Bench", Pose::new(2.0, 2.0, 0.0, 90.0)));
        let svg = render_svg(&l, &base, &Overlay::default());
        // Long side along y after a quarter turn: x in [1.5, 2.5], y in [1, 3].
        for corner in [
            "150.000,100.000",
            "250.000,100.000",
            "250.000,300.000",
            "150.000,300.000",
        ] {
            assert!(svg.contains(corner), "{corner} missing in {svg}");
        }
    }
}
