//! Bare-bones SVG charts: line plots with shaded zones and a heat grid.

use std::fmt::Write;

const W: f64 = 720.0;
const H: f64 = 400.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 48.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

pub struct Series<'a> {
    pub name: &'a str,
    pub xs: &'a [f64],
    pub ys: &'a [f64],
}

pub struct LineChart<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub series: Vec<Series<'a>>,
    pub zones: Vec<(f64, f64)>,
    pub hline: Option<(f64, &'a str)>,
    pub log_x: bool,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in vals.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

impl LineChart<'_> {
    pub fn render(&self) -> String {
        let tx = |x: f64| if self.log_x { x.max(1e-12).ln() } else { x };
        let (x0, x1) = range(self.series.iter().flat_map(|s| s.xs.iter().map(|&x| tx(x))));
        let hv = self.hline.map(|h| h.0);
        let (y0, y1) = range(self.series.iter().flat_map(|s| s.ys.iter().copied()).chain(hv));
        let pw = W - LEFT - RIGHT;
        let ph = H - TOP - BOTTOM;
        let px = |x: f64| LEFT + (tx(x) - x0) / (x1 - x0) * pw;
        // non-finite values are pinned to the top edge
        let py = |y: f64| if y.is_finite() { TOP + (y1 - y) / (y1 - y0) * ph } else { TOP };

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="22" font-size="15" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, esc(self.title));
        for &(a, b) in &self.zones {
            let (xa, xb) = (px(a), px(b).max(px(a) + 1.0));
            let _ = writeln!(
                s,
                r##"<rect x="{xa:.2}" y="{TOP}" width="{:.2}" height="{ph}" fill="#f4c542" fill-opacity="0.3"/>"##,
                xb - xa
            );
        }
        let _ = writeln!(s, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
        for i in 0..=4 {
            let fy = y0 + (y1 - y0) * i as f64 / 4.0;
            let fx = x0 + (x1 - x0) * i as f64 / 4.0;
            let yy = py(fy);
            let xx = LEFT + (fx - x0) / (x1 - x0) * pw;
            let xlab = if self.log_x { fx.exp() } else { fx };
            let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 6.0, yy + 4.0, tick(fy));
            let _ = writeln!(s, r#"<text x="{xx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, TOP + ph + 16.0, tick(xlab));
        }
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, H - 10.0, esc(self.x_label));
        let _ = writeln!(
            s,
            r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            esc(self.y_label)
        );
        if let Some((v, label)) = self.hline {
            let yy = py(v);
            let _ = writeln!(
                s,
                r#"<line x1="{LEFT}" y1="{yy:.2}" x2="{:.2}" y2="{yy:.2}" stroke="gray" stroke-dasharray="6 4"/>"#,
                LEFT + pw
            );
            let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" fill="gray">{}</text>"#, LEFT + pw + 6.0, yy + 4.0, esc(label));
        }
        for (i, se) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let pts: Vec<String> = se
                .xs
                .iter()
                .zip(se.ys)
                .map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y)))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.8" points="{}"/>"#,
                pts.join(" ")
            );
            let ly = TOP + 14.0 + 18.0 * i as f64;
            let _ = writeln!(
                s,
                r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#,
                LEFT + pw + 10.0,
                LEFT + pw + 30.0
            );
            let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, LEFT + pw + 36.0, ly + 4.0, esc(se.name));
        }
        s.push_str("</svg>\n");
        s
    }
}

fn tick(v: f64) -> String {
    if v.abs() >= 1000.0 || (v != 0.0 && v.abs() < 0.01) {
        format!("{v:.1e}")
    } else {
        format!("{v:.2}")
    }
}

/// Cells colored on a diverging blue-white-red scale symmetric about 0.
pub fn heat_grid(title: &str, rows: &[String], cols: &[String], values: &[Vec<f64>]) -> String {
    let cell = 26.0;
    let left = 90.0;
    let top = 70.0;
    let w = left + cell * cols.len() as f64 + 20.0;
    let h = top + cell * rows.len() as f64 + 20.0;
    let scale = values
        .iter()
        .flatten()
        .filter(|v| v.is_finite())
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1e-12);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{left}" y="18" font-size="14">{}</text>"#, esc(title));
    for (j, c) in cols.iter().enumerate() {
        let x = left + cell * (j as f64 + 0.5);
        let _ = writeln!(
            s,
            r#"<text x="{x:.1}" y="{:.1}" transform="rotate(-60 {x:.1} {:.1})">{}</text>"#,
            top - 6.0,
            top - 6.0,
            esc(c)
        );
    }
    for (i, r) in rows.iter().enumerate() {
        let y = top + cell * i as f64;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, left - 6.0, y + cell * 0.65, esc(r));
        for (j, v) in values[i].iter().enumerate() {
            let t = if v.is_finite() { (v / scale).clamp(-1.0, 1.0) } else { 0.0 };
            let (r8, g8, b8) = if t >= 0.0 {
                (255.0, 255.0 * (1.0 - t), 255.0 * (1.0 - t))
            } else {
                (255.0 * (1.0 + t), 255.0 * (1.0 + t), 255.0)
            };
            let _ = writeln!(
                s,
                r#"<rect x="{:.1}" y="{y:.1}" width="{cell}" height="{cell}" fill="rgb({},{},{})" stroke="white"><title>{:.3}</title></rect>"#,
                left + cell * j as f64,
                r8.round(),
                g8.round(),
                b8.round(),
                v
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_infinite_values_and_zones() {
        let xs = [0.0, 0.5, 1.0];
        let ys = [1.0, f64::INFINITY, 2.0];
        let svg = LineChart {
            title: "a<b",
            x_label: "t",
            y_label: "F",
            series: vec![Series { name: "F", xs: &xs, ys: &ys }],
            zones: vec![(0.4, 0.6)],
            hline: Some((1.5, "critical")),
            log_x: false,
        }
        .render();
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert!(svg.contains("a&lt;b"));
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }

    #[test]
    fn heat_grid_shape() {
        let svg = heat_grid("h", &["a".into(), "b".into()], &["x".into()], &[vec![1.0], vec![-1.0]]);
        assert_eq!(svg.matches("<rect x=").count(), 2);
        assert!(svg.contains("rgb(255,0,0)") && svg.contains("rgb(0,0,255)"));
    }
}
