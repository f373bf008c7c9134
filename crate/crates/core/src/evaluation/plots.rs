//! Minimal SVG renderers for the report figures: line charts (uplift
//! curves, uplift vs cost), stacked proportion bars, and hyperparameter
//! boxplots. No styling knobs; these exist so a run leaves inspectable
//! pictures next to the CSVs.

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn from_points<'a>(points: impl Iterator<Item = &'a (f64, f64)>) -> Self {
        let mut frame = Frame { x_min: f64::MAX, x_max: f64::MIN, y_min: f64::MAX, y_max: f64::MIN };
        for &(x, y) in points {
            frame.x_min = frame.x_min.min(x);
            frame.x_max = frame.x_max.max(x);
            frame.y_min = frame.y_min.min(y);
            frame.y_max = frame.y_max.max(y);
        }
        if frame.x_min > frame.x_max {
            frame = Frame { x_min: 0.0, x_max: 1.0, y_min: 0.0, y_max: 1.0 };
        }
        if (frame.x_max - frame.x_min).abs() < 1e-12 {
            frame.x_max = frame.x_min + 1.0;
        }
        if (frame.y_max - frame.y_min).abs() < 1e-12 {
            frame.y_max = frame.y_min + 1.0;
        }
        frame
    }

    fn sx(&self, x: f64) -> f64 {
        MARGIN + (x - self.x_min) / (self.x_max - self.x_min) * (WIDTH - 2.0 * MARGIN)
    }

    fn sy(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y_min) / (self.y_max - self.y_min) * (HEIGHT - 2.0 * MARGIN)
    }
}

fn header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">{}</text>\n",
        WIDTH / 2.0,
        escape(title)
    )
}

fn axes(out: &mut String, frame: &Frame, x_label: &str, y_label: &str) {
    let _ = write!(
        out,
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <text x=\"{cx}\" y=\"{ly}\" text-anchor=\"middle\">{xl}</text>\n\
         <text x=\"16\" y=\"{cy}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {cy})\">{yl}</text>\n",
        m = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN,
        t = MARGIN,
        cx = WIDTH / 2.0,
        ly = HEIGHT - 16.0,
        cy = HEIGHT / 2.0,
        xl = escape(x_label),
        yl = escape(y_label),
    );
    for f in 0..=4 {
        let x = frame.x_min + (frame.x_max - frame.x_min) * f as f64 / 4.0;
        let y = frame.y_min + (frame.y_max - frame.y_min) * f as f64 / 4.0;
        let _ = write!(
            out,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"10\">{:.3}</text>\n\
             <text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-size=\"10\">{:.3}</text>\n",
            frame.sx(x),
            HEIGHT - MARGIN + 16.0,
            x,
            MARGIN - 6.0,
            frame.sy(y) + 4.0,
            y,
        );
    }
}

/// Multi-series line chart; one `(label, points)` entry per series.
pub fn line_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[(String, Vec<(f64, f64)>)],
) -> String {
    let mut out = header(title);
    let frame = Frame::from_points(series.iter().flat_map(|(_, pts)| pts.iter()));
    axes(&mut out, &frame, x_label, y_label);
    for (s, (label, points)) in series.iter().enumerate() {
        let color = PALETTE[s % PALETTE.len()];
        let mut path = String::new();
        for (i, &(x, y)) in points.iter().enumerate() {
            let _ = write!(path, "{}{:.2},{:.2} ", if i == 0 { "M" } else { "L" }, frame.sx(x), frame.sy(y));
        }
        let _ = write!(
            out,
            "<path d=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n\
             <text x=\"{}\" y=\"{}\" fill=\"{color}\">{}</text>\n",
            path.trim_end(),
            WIDTH - MARGIN + 4.0,
            MARGIN + 16.0 * s as f64,
            escape(label),
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Stacked bars: one bar per x entry, stacked by the `stack_labels` series.
/// `values[bar][stack]` are nonnegative heights (proportions).
pub fn stacked_bars(
    title: &str,
    x_label: &str,
    bar_labels: &[String],
    stack_labels: &[String],
    values: &[Vec<f64>],
) -> String {
    let mut out = header(title);
    let n = bar_labels.len().max(1);
    let max_total = values
        .iter()
        .map(|row| row.iter().sum::<f64>())
        .fold(1e-12f64, f64::max)
        .max(1.0);
    let frame = Frame { x_min: 0.0, x_max: n as f64, y_min: 0.0, y_max: max_total };
    axes(&mut out, &frame, x_label, "proportion");
    let bar_width = (WIDTH - 2.0 * MARGIN) / n as f64 * 0.7;
    for (b, row) in values.iter().enumerate() {
        let x_center = frame.sx(b as f64 + 0.5);
        let mut base = 0.0;
        for (s, &v) in row.iter().enumerate() {
            let color = PALETTE[s % PALETTE.len()];
            let y0 = frame.sy(base);
            let y1 = frame.sy(base + v);
            let _ = write!(
                out,
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{color}\"/>\n",
                x_center - bar_width / 2.0,
                y1,
                bar_width,
                (y0 - y1).max(0.0),
            );
            base += v;
        }
        let _ = write!(
            out,
            "<text x=\"{:.2}\" y=\"{}\" text-anchor=\"middle\" font-size=\"9\">{}</text>\n",
            x_center,
            HEIGHT - MARGIN + 28.0,
            escape(&bar_labels[b]),
        );
    }
    for (s, label) in stack_labels.iter().enumerate() {
        let color = PALETTE[s % PALETTE.len()];
        let _ = write!(
            out,
            "<text x=\"{}\" y=\"{}\" fill=\"{color}\">{}</text>\n",
            WIDTH - MARGIN + 4.0,
            MARGIN + 16.0 * s as f64,
            escape(label),
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Boxplots (min, quartiles, median, max) per labeled group.
pub fn boxplots(title: &str, x_label: &str, y_label: &str, groups: &[(String, Vec<f64>)]) -> String {
    let mut out = header(title);
    let n = groups.len().max(1);
    let all: Vec<(f64, f64)> = groups
        .iter()
        .flat_map(|(_, vs)| vs.iter().map(|v| (0.0, *v)))
        .collect();
    let mut frame = Frame::from_points(all.iter());
    frame.x_min = 0.0;
    frame.x_max = n as f64;
    axes(&mut out, &frame, x_label, y_label);
    let half_width = (WIDTH - 2.0 * MARGIN) / n as f64 * 0.25;
    for (g, (label, values)) in groups.iter().enumerate() {
        if values.is_empty() {
            continue;
        }
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        let q = |f: f64| -> f64 {
            let idx = f * (sorted.len() - 1) as f64;
            let lo = idx.floor() as usize;
            let hi = idx.ceil() as usize;
            sorted[lo] + (sorted[hi] - sorted[lo]) * (idx - lo as f64)
        };
        let (min, q1, med, q3, max) = (sorted[0], q(0.25), q(0.5), q(0.75), sorted[sorted.len() - 1]);
        let x = frame.sx(g as f64 + 0.5);
        let color = PALETTE[g % PALETTE.len()];
        let _ = write!(
            out,
            "<line x1=\"{x:.2}\" y1=\"{:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"black\"/>\n\
             <rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{color}\" fill-opacity=\"0.5\" stroke=\"black\"/>\n\
             <line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"black\" stroke-width=\"2\"/>\n\
             <text x=\"{x:.2}\" y=\"{}\" text-anchor=\"middle\" font-size=\"10\">{}</text>\n",
            frame.sy(min),
            frame.sy(max),
            x - half_width,
            frame.sy(q3),
            2.0 * half_width,
            (frame.sy(q1) - frame.sy(q3)).max(0.0),
            x - half_width,
            frame.sy(med),
            x + half_width,
            frame.sy(med),
            HEIGHT - MARGIN + 28.0,
            escape(label),
        );
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
