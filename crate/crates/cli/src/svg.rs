//! A minimal SVG writer for diagnostic plots.

use std::fmt::Write as _;

/// Maps data coordinates in `[x0, x1] × [y0, y1]` onto a pixel canvas.
#[derive(Clone, Copy, Debug)]
pub struct Frame {
    pub x: (f64, f64),
    pub y: (f64, f64),
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
}

impl Frame {
    pub fn px(&self, p: [f64; 2]) -> (f64, f64) {
        let u = (p[0] - self.x.0) / (self.x.1 - self.x.0);
        let v = (p[1] - self.y.0) / (self.y.1 - self.y.0);
        (self.left + u * self.width, self.top + (1.0 - v) * self.height)
    }
}

pub struct Svg {
    width: f64,
    height: f64,
    body: String,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Svg {
    pub fn new(width: f64, height: f64) -> Self {
        Svg {
            width,
            height,
            body: String::new(),
        }
    }

    pub fn rect(&mut self, f: &Frame, lo: [f64; 2], hi: [f64; 2], fill: &str, stroke: &str, opacity: f64) {
        let (x0, y1) = f.px(lo);
        let (x1, y0) = f.px(hi);
        let _ = writeln!(
            self.body,
            r#"<rect x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" fill="{fill}" fill-opacity="{opacity}" stroke="{stroke}"/>"#,
            x1 - x0,
            y1 - y0
        );
    }

    pub fn line(&mut self, f: &Frame, a: [f64; 2], b: [f64; 2], stroke: &str, width: f64) {
        let (x0, y0) = f.px(a);
        let (x1, y1) = f.px(b);
        let _ = writeln!(
            self.body,
            r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y1:.2}" stroke="{stroke}" stroke-width="{width}"/>"#
        );
    }

    pub fn polyline(&mut self, f: &Frame, points: &[[f64; 2]], stroke: &str, width: f64) {
        if points.is_empty() {
            return;
        }
        let coords: Vec<String> = points
            .iter()
            .map(|p| {
                let (x, y) = f.px(*p);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="{width}"/>"#,
            coords.join(" ")
        );
    }

    pub fn circle(&mut self, f: &Frame, c: [f64; 2], r: f64, fill: &str) {
        let (x, y) = f.px(c);
        let _ = writeln!(self.body, r#"<circle cx="{x:.2}" cy="{y:.2}" r="{r}" fill="{fill}"/>"#);
    }

    /// An arrow from `a` to `b` with a small head.
    pub fn arrow(&mut self, f: &Frame, a: [f64; 2], b: [f64; 2], stroke: &str) {
        let (x0, y0) = f.px(a);
        let (x1, y1) = f.px(b);
        let (dx, dy) = (x1 - x0, y1 - y0);
        let len = (dx * dx + dy * dy).sqrt();
        if len < 1e-9 {
            return;
        }
        let (ux, uy) = (dx / len, dy / len);
        let head = (0.35 * len).min(5.0);
        let l = (x1 - head * (ux - 0.5 * uy), y1 - head * (uy + 0.5 * ux));
        let r = (x1 - head * (ux + 0.5 * uy), y1 - head * (uy - 0.5 * ux));
        let _ = writeln!(
            self.body,
            r#"<path d="M{x0:.2},{y0:.2} L{x1:.2},{y1:.2} M{:.2},{:.2} L{x1:.2},{y1:.2} L{:.2},{:.2}" fill="none" stroke="{stroke}" stroke-width="1"/>"#,
            l.0, l.1, r.0, r.1
        );
    }

    pub fn text(&mut self, x: f64, y: f64, size: f64, anchor: &str, s: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.2}" y="{y:.2}" font-family="sans-serif" font-size="{size}" text-anchor="{anchor}">{}</text>"#,
            escape(s)
        );
    }

    /// Frame border with min/max tick labels and axis names.
    pub fn axes(&mut self, f: &Frame, xlabel: &str, ylabel: &str) {
        let _ = writeln!(
            self.body,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#333"/>"##,
            f.left, f.top, f.width, f.height
        );
        let bottom = f.top + f.height;
        self.text(f.left, bottom + 14.0, 11.0, "middle", &tick(f.x.0));
        self.text(f.left + f.width, bottom + 14.0, 11.0, "middle", &tick(f.x.1));
        self.text(f.left - 4.0, bottom, 11.0, "end", &tick(f.y.0));
        self.text(f.left - 4.0, f.top + 10.0, 11.0, "end", &tick(f.y.1));
        self.text(f.left + f.width / 2.0, bottom + 30.0, 12.0, "middle", xlabel);
        self.text(f.left - 30.0, f.top + f.height / 2.0, 12.0, "middle", ylabel);
    }

    pub fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{body}</svg>\n",
            w = self.width,
            h = self.height,
            body = self.body
        )
    }
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}").trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// Viridis-like color for `t ∈ [0, 1]`.
pub fn colormap(t: f64) -> String {
    const STOPS: [[f64; 3]; 5] = [
        [68.0, 1.0, 84.0],
        [59.0, 82.0, 139.0],
        [33.0, 145.0, 140.0],
        [94.0, 201.0, 98.0],
        [253.0, 231.0, 37.0],
    ];
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let s = t * (STOPS.len() - 1) as f64;
    let i = (s.floor() as usize).min(STOPS.len() - 2);
    let w = s - i as f64;
    let c: Vec<u8> = (0..3)
        .map(|k| (STOPS[i][k] * (1.0 - w) + STOPS[i + 1][k] * w).round() as u8)
        .collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_flips_the_vertical_axis() {
        let f = Frame {
            x: (0.0, 1.0),
            y: (0.0, 1.0),
            left: 10.0,
            top: 20.0,
            width: 100.0,
            height: 50.0,
        };
        assert_eq!(f.px([0.0, 0.0]), (10.0, 70.0));
        assert_eq!(f.px([1.0, 1.0]), (110.0, 20.0));
    }

    #[test]
    fn colormap_endpoints() {
        assert_eq!(colormap(0.0), "#440154");
        assert_eq!(colormap(1.0), "#fde725");
        assert_eq!(colormap(f64::NAN), "#440154");
    }

    #[test]
    fn text_is_escaped() {
        let mut s = Svg::new(10.0, 10.0);
        s.text(0.0, 0.0, 10.0, "start", "a<b & c");
        assert!(s.finish().contains("a&lt;b &amp; c"));
    }
}
