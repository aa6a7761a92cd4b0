//! Standalone SVG line charts.

use std::fmt::Write;

use crate::numfmt::sig9;

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 520.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 220.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const TICKS: usize = 5;
const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn coord(v: f64) -> String {
    format!("{v:.2}")
}

/// Renders one polyline per series with axes, tick labels and a legend.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let mut s = String::new();
    writeln!(
        s,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">
<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>
<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    )
    .unwrap();

    let pts = series.iter().flat_map(|sr| sr.points.iter());
    let (mut x0, mut x1, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    let empty = !x0.is_finite();
    if empty {
        x0 = 0.0;
        x1 = 1.0;
        y1 = 1.0;
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    let y0 = 0.0;
    let y1 = if y1 > 0.0 { y1 * 1.05 } else { 1.0 };

    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * plot_w;
    let sy = |y: f64| TOP + plot_h - (y - y0) / (y1 - y0) * plot_h;

    let (ax, ay, bx, by) = (LEFT, TOP + plot_h, LEFT + plot_w, TOP);
    writeln!(
        s,
        r#"<g id="axes" stroke="black" stroke-width="1">
<line x1="{ax}" y1="{ay}" x2="{bx}" y2="{ay}"/>
<line x1="{ax}" y1="{ay}" x2="{ax}" y2="{by}"/>
</g>"#
    )
    .unwrap();
    s.push_str("<g id=\"ticks\">\n");
    for i in 0..=TICKS {
        let f = i as f64 / TICKS as f64;
        let xv = x0 + f * (x1 - x0);
        let yv = y0 + f * (y1 - y0);
        let (px, py) = (coord(sx(xv)), coord(sy(yv)));
        writeln!(
            s,
            r#"<line x1="{px}" y1="{}" x2="{px}" y2="{}" stroke="black"/><text x="{px}" y="{}" text-anchor="middle">{}</text>"#,
            coord(ay),
            coord(ay + 5.0),
            coord(ay + 18.0),
            sig9((xv * 100.0).round() / 100.0)
        )
        .unwrap();
        writeln!(
            s,
            r#"<line x1="{}" y1="{py}" x2="{}" y2="{py}" stroke="black"/><text x="{}" y="{}" text-anchor="end">{}</text>"#,
            coord(ax - 5.0),
            coord(ax),
            coord(ax - 8.0),
            coord(sy(yv) + 4.0),
            sig9((yv * 1000.0).round() / 1000.0)
        )
        .unwrap();
    }
    s.push_str("</g>\n");
    writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>
<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
        coord(LEFT + plot_w / 2.0),
        coord(HEIGHT - 15.0),
        escape(x_label),
        coord(TOP + plot_h / 2.0),
        coord(TOP + plot_h / 2.0),
        escape(y_label)
    )
    .unwrap();

    if empty {
        writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="18" fill="gray">no data</text>"#,
            coord(LEFT + plot_w / 2.0),
            coord(TOP + plot_h / 2.0)
        )
        .unwrap();
    } else {
        s.push_str("<g id=\"series\" fill=\"none\" stroke-width=\"1.5\">\n");
        for (i, sr) in series.iter().enumerate() {
            let points: Vec<String> = sr
                .points
                .iter()
                .map(|&(x, y)| format!("{},{}", coord(sx(x)), coord(sy(y))))
                .collect();
            writeln!(
                s,
                r#"<polyline stroke="{}" points="{}"><title>{}</title></polyline>"#,
                PALETTE[i % PALETTE.len()],
                points.join(" "),
                escape(&sr.label)
            )
            .unwrap();
        }
        s.push_str("</g>\n<g id=\"legend\">\n");
        for (i, sr) in series.iter().enumerate() {
            let y = TOP + 10.0 + i as f64 * 16.0;
            let lx = LEFT + plot_w + 15.0;
            writeln!(
                s,
                r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
                coord(lx),
                coord(y),
                coord(lx + 20.0),
                coord(y),
                PALETTE[i % PALETTE.len()],
                coord(lx + 26.0),
                coord(y + 4.0),
                escape(&sr.label)
            )
            .unwrap();
        }
        s.push_str("</g>\n");
    }
    s.push_str("</svg>\n");
    s
}
