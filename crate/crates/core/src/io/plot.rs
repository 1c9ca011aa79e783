use svg::node::element::path::Data;
use svg::node::element::{Circle, Group, Path, Rectangle, Text};
use svg::Document;

use crate::eval::Histogram;
use crate::scenarios::ScenarioSpec;

const COLORS: [&str; 6] = ["#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];
const MARGIN: f64 = 8.0;

/// Top-down view: road boundaries clipped to the paths' surroundings and one
/// dot per recorded position, colored by player. `paths[ν]` lists `[x, y]`.
pub fn overhead_svg(spec: &ScenarioSpec, paths: &[Vec<[f64; 2]>]) -> String {
    let pts = paths.iter().flatten();
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in pts.filter(|p| p[0].is_finite() && p[1].is_finite()) {
        x0 = x0.min(p[0]);
        x1 = x1.max(p[0]);
        y0 = y0.min(p[1]);
        y1 = y1.max(p[1]);
    }
    if !x0.is_finite() {
        (x0, y0, x1, y1) = (-10.0, -10.0, 10.0, 10.0);
    }
    let (x0, y0, x1, y1) = (x0 - MARGIN, y0 - MARGIN, x1 + MARGIN, y1 + MARGIN);

    // world y points up
    let mut world = Group::new().set("transform", format!("scale(1,-1) translate(0,{})", -(y0 + y1)));
    for b in &spec.boundaries {
        let mut data = Data::new().move_to((b[0][0], b[0][1]));
        for p in &b[1..] {
            data = data.line_to((p[0], p[1]));
        }
        world = world.add(
            Path::new()
                .set("d", data)
                .set("fill", "none")
                .set("stroke", "black")
                .set("stroke-width", 0.2),
        );
    }
    for (nu, path) in paths.iter().enumerate() {
        let color = COLORS[nu % COLORS.len()];
        for p in path.iter().filter(|p| p[0].is_finite() && p[1].is_finite()) {
            world = world.add(
                Circle::new()
                    .set("cx", p[0])
                    .set("cy", p[1])
                    .set("r", 0.25)
                    .set("fill", color),
            );
        }
    }
    Document::new()
        .set("viewBox", (x0, y0, x1 - x0, y1 - y0))
        .set("width", 1000)
        .set("height", (1000.0 * (y1 - y0) / (x1 - x0)).round().max(100.0))
        .add(
            Rectangle::new()
                .set("x", x0)
                .set("y", y0)
                .set("width", x1 - x0)
                .set("height", y1 - y0)
                .set("fill", "white"),
        )
        .add(world)
        .to_string()
}

/// Bar chart of a histogram, one bar per bin, labeled by its lower edge.
pub fn histogram_svg(title: &str, hist: &Histogram) -> String {
    let (w, h, pad) = (600.0, 300.0, 40.0);
    let bins = hist.counts.len().max(1);
    let peak = hist.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let bar = (w - 2.0 * pad) / bins as f64;
    let mut doc = Document::new()
        .set("viewBox", (0, 0, w, h))
        .set("width", w)
        .set("height", h)
        .add(Rectangle::new().set("width", w).set("height", h).set("fill", "white"))
        .add(
            Text::new(title)
                .set("x", w / 2.0)
                .set("y", 20)
                .set("text-anchor", "middle")
                .set("font-size", 14),
        );
    for (i, (&count, edge)) in hist.counts.iter().zip(&hist.edges).enumerate() {
        let bh = (h - 2.0 * pad) * count as f64 / peak;
        let x = pad + i as f64 * bar;
        doc = doc
            .add(
                Rectangle::new()
                    .set("x", x + 1.0)
                    .set("y", h - pad - bh)
                    .set("width", bar - 2.0)
                    .set("height", bh)
                    .set("fill", COLORS[1]),
            )
            .add(
                Text::new(format!("{edge}"))
                    .set("x", x + bar / 2.0)
                    .set("y", h - pad + 14.0)
                    .set("text-anchor", "middle")
                    .set("font-size", 9),
            );
        if count > 0 {
            doc = doc.add(
                Text::new(count.to_string())
                    .set("x", x + bar / 2.0)
                    .set("y", h - pad - bh - 3.0)
                    .set("text-anchor", "middle")
                    .set("font-size", 9),
            );
        }
    }
    doc.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::presets;

    #[test]
    fn overhead_has_one_dot_per_point() {
        let spec = presets::ramp_merge(2);
        let paths = vec![vec![[0.0, 0.0], [1.0, 0.0]], vec![[0.0, -4.0]]];
        let s = overhead_svg(&spec, &paths);
        assert!(s.starts_with("<svg"));
        assert_eq!(s.matches("<circle").count(), 3);
        assert_eq!(s.matches("<path").count(), spec.boundaries.len());
    }

    #[test]
    fn histogram_has_one_bar_per_bin() {
        let hist = Histogram::from_values(vec![0.0, 1.0, 2.0], [0.5, 1.5, 1.7]);
        let s = histogram_svg("iters", &hist);
        // background plus bars
        assert_eq!(s.matches("<rect").count(), 4);
        assert!(s.contains("iters"));
    }
}
