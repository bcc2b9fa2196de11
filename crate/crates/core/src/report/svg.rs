//! Minimal dependency-free SVG charts: grouped bars for categorical x,
//! polylines otherwise.

use std::fmt::Write;

use super::PlotData;

const W: f64 = 720.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 70.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub fn render(plot: &PlotData) -> String {
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let data_max = plot
        .series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.1))
        .fold(0.0f64, f64::max);
    let y_max = plot.y_max.unwrap_or(data_max).max(f64::MIN_POSITIVE);
    let ys = |y: f64| TOP + ph - (y / y_max).clamp(0.0, 1.0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, esc(&plot.title));
    let _ = writeln!(
        s,
        r#"<line x1="{LEFT}" y1="{}" x2="{}" y2="{}" stroke="black"/><line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{}" stroke="black"/>"#,
        TOP + ph,
        LEFT + pw,
        TOP + ph,
        TOP + ph
    );
    for i in 0..=4 {
        let v = y_max * i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            ys(v) + 4.0,
            trim(v)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        H - 15.0,
        esc(&plot.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{}" text-anchor="middle" transform="rotate(-90 15 {})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        esc(&plot.y_label)
    );

    if let Some(cats) = &plot.categories {
        let slot = pw / cats.len().max(1) as f64;
        let nser = plot.series.len().max(1) as f64;
        let bw = slot * 0.8 / nser;
        for (i, c) in cats.iter().enumerate() {
            let cx = LEFT + slot * (i as f64 + 0.5);
            let _ = writeln!(
                s,
                r#"<text x="{cx:.1}" y="{}" text-anchor="end" transform="rotate(-40 {cx:.1} {})">{}</text>"#,
                TOP + ph + 14.0,
                TOP + ph + 14.0,
                esc(c)
            );
        }
        for (si, ser) in plot.series.iter().enumerate() {
            let color = COLORS[si % COLORS.len()];
            for &(x, y) in &ser.points {
                let x0 = LEFT + slot * x + slot * 0.1 + bw * si as f64;
                let top = ys(y);
                let _ = writeln!(
                    s,
                    r#"<rect x="{x0:.1}" y="{top:.1}" width="{bw:.1}" height="{:.1}" fill="{color}"/>"#,
                    TOP + ph - top
                );
            }
        }
    } else {
        let tx = |x: f64| if plot.log_x { x.log10() } else { x };
        let xs: Vec<f64> = plot.series.iter().flat_map(|s| s.points.iter().map(|p| tx(p.0))).collect();
        let (lo, hi) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        let (lo, hi) = if lo.is_finite() && hi > lo { (lo, hi) } else if lo.is_finite() { (lo - 1.0, lo + 1.0) } else { (0.0, 1.0) };
        let xp = |x: f64| LEFT + (tx(x) - lo) / (hi - lo) * pw;
        for i in 0..=4 {
            let v = lo + (hi - lo) * i as f64 / 4.0;
            let label = if plot.log_x { format!("1e{}", trim(v)) } else { trim(v) };
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#,
                LEFT + pw * i as f64 / 4.0,
                TOP + ph + 16.0,
                label
            );
        }
        for (si, ser) in plot.series.iter().enumerate() {
            let color = COLORS[si % COLORS.len()];
            let pts: Vec<String> = ser.points.iter().map(|&(x, y)| format!("{:.1},{:.1}", xp(x), ys(y))).collect();
            if pts.len() > 1 {
                let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, pts.join(" "));
            }
            for &(x, y) in &ser.points {
                let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="3.5" fill="{color}"/>"#, xp(x), ys(y));
            }
        }
    }

    for (si, ser) in plot.series.iter().enumerate() {
        let y = TOP + 14.0 * si as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{}" width="10" height="10" fill="{}"/><text x="{}" y="{}">{}</text>"#,
            W - RIGHT + 15.0,
            y,
            COLORS[si % COLORS.len()],
            W - RIGHT + 30.0,
            y + 9.0,
            esc(&ser.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn trim(v: f64) -> String {
    let s = format!("{v:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::Series;

    #[test]
    fn renders_bars_and_lines() {
        let mut p = PlotData {
            title: "t<1>".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            log_x: false,
            categories: Some(vec!["C".into(), "Go".into()]),
            series: vec![Series {
                name: "m".into(),
                points: vec![(0.0, 1.0), (1.0, 2.0)],
            }],
            y_max: None,
        };
        let svg = render(&p);
        assert!(svg.starts_with("<svg") && svg.contains("<rect") && svg.contains("t&lt;1&gt;"));
        p.categories = None;
        p.log_x = true;
        let svg = render(&p);
        assert!(svg.contains("<polyline"));
    }
}
