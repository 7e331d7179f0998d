use std::fmt::Write as _;
use std::path::Path;

use crate::arm::fk;
use crate::execution::EpisodeResult;
use crate::geometry::{Convex, Vec2};
use crate::scenario::Scenario;
use crate::world::{Rect, SystemState};

/// Pixels per meter.
const SCALE: f64 = 400.0;
const MARGIN: f64 = 20.0;
const PALETTE: [&str; 6] = ["#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn class_color(class: usize) -> &'static str {
    PALETTE[class % PALETTE.len()]
}

struct Canvas<'a> {
    ws: &'a Rect,
    out: String,
}

impl<'a> Canvas<'a> {
    fn new(ws: &'a Rect) -> Self {
        let w = ws.width() * SCALE + 2.0 * MARGIN;
        let h = ws.height() * SCALE + 2.0 * MARGIN;
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}">"#
        );
        Self { ws, out }
    }

    fn px(&self, p: &Vec2) -> (f64, f64) {
        (
            MARGIN + (p.x - self.ws.min[0]) * SCALE,
            MARGIN + (self.ws.max[1] - p.y) * SCALE,
        )
    }

    fn rect(&mut self, r: &Rect, class: &str, style: &str) {
        let (x, y) = self.px(&Vec2::new(r.min[0], r.max[1]));
        let _ = writeln!(
            self.out,
            r#"<rect class="{class}" x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" {style}/>"#,
            r.width() * SCALE,
            r.height() * SCALE
        );
    }

    fn convex(&mut self, c: &Convex, class: &str, style: &str) {
        if c.core.len() == 1 {
            let (x, y) = self.px(&c.core[0]);
            let _ = writeln!(
                self.out,
                r#"<circle class="{class}" cx="{x:.2}" cy="{y:.2}" r="{:.2}" {style}/>"#,
                c.radius * SCALE
            );
        } else if c.core.len() == 2 {
            let (x1, y1) = self.px(&c.core[0]);
            let (x2, y2) = self.px(&c.core[1]);
            let _ = writeln!(
                self.out,
                r#"<line class="{class}" x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke-width="{:.2}" stroke-linecap="round" {style}/>"#,
                (2.0 * c.radius * SCALE).max(1.0)
            );
        } else {
            let pts = self.points(c.core.iter());
            let _ = writeln!(self.out, r#"<polygon class="{class}" points="{pts}" {style}/>"#);
        }
    }

    fn points<'p>(&self, pts: impl Iterator<Item = &'p Vec2>) -> String {
        pts.map(|p| {
            let (x, y) = self.px(p);
            format!("{x:.2},{y:.2}")
        })
        .collect::<Vec<_>>()
        .join(" ")
    }

    fn polyline(&mut self, pts: &[Vec2], class: &str, style: &str) {
        if pts.len() < 2 {
            return;
        }
        let pts = self.points(pts.iter());
        let _ = writeln!(self.out, r#"<polyline class="{class}" points="{pts}" fill="none" {style}/>"#);
    }

    fn finish(mut self) -> String {
        self.out.push_str("</svg>\n");
        self.out
    }
}

fn draw_scene(c: &mut Canvas, s: &Scenario, q: &SystemState) {
    c.rect(&s.workspace, "workspace", r##"fill="#f7f7f2" stroke="#444""##);
    for (i, r) in s.goal_regions.iter().enumerate() {
        let style = format!(r#"fill="none" stroke="{}" stroke-width="2""#, class_color(i));
        c.rect(r, "goal-region", &style);
    }
    if let Some(r) = s.task.relocate_region.as_ref() {
        c.rect(r, "goal-region", r##"fill="none" stroke="#333" stroke-width="2""##);
    }
    for conv in s.obstacle_convexes() {
        c.convex(conv, "obstacle", r##"fill="#777""##);
    }
    for (i, o) in q.objects.iter().enumerate() {
        let style = format!(r##"fill="{}" stroke="#222""##, class_color(o.class_id));
        c.convex(&q.object_convex(i, &s.shapes), "object", &style);
    }
    for link in s.params.arm.link_capsules(&q.arm) {
        c.convex(&link, "link", r##"stroke="#555" stroke-opacity="0.6""##);
    }
    c.convex(&s.params.arm.end_effector(&q.arm), "end-effector", r##"fill="#111""##);
}

/// SVG of a single state.
pub fn render_state(s: &Scenario, q: &SystemState) -> String {
    let mut c = Canvas::new(&s.workspace);
    draw_scene(&mut c, s, q);
    c.finish()
}

/// SVG of the final state with end-effector traces: pushes solid, transits
/// dashed.
pub fn render_trajectory(s: &Scenario, result: &EpisodeResult) -> String {
    let mut c = Canvas::new(&s.workspace);
    draw_scene(&mut c, s, &result.final_state);
    let arm = &s.params.arm;
    let tip = |q: &crate::arm::JointConfig| fk(q, arm).position();
    for seg in &result.trajectory {
        if !seg.transit.is_trivial() {
            let pts: Vec<Vec2> = seg.transit.samples(0.05).iter().map(tip).collect();
            c.polyline(&pts, "transit", r##"stroke="#888" stroke-width="1.5" stroke-dasharray="6 4""##);
        }
        let mut pts: Vec<Vec2> = seg.steps.first().map(|st| vec![tip(&st.start.arm)]).unwrap_or_default();
        pts.extend(seg.steps.iter().map(|st| tip(&st.reached.arm)));
        c.polyline(&pts, "push", r##"stroke="#000" stroke-width="2""##);
    }
    c.finish()
}

pub fn write_svg(path: &Path, svg: &str) -> std::io::Result<()> {
    std::fs::write(path, svg)
}
