//! Minimal SVG output for trace plots and grouped box plots. Numbers are
//! printed with fixed precision so files are byte-identical across runs.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 360.0;
const PAD_L: f64 = 60.0;
const PAD_R: f64 = 20.0;
const PAD_T: f64 = 30.0;
const PAD_B: f64 = 40.0;
const MAX_POINTS: usize = 2000;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

struct Frame {
    lo: f64,
    hi: f64,
}

impl Frame {
    fn new(lo: f64, hi: f64) -> Self {
        let (lo, hi) = if (hi - lo).abs() < 1e-12 {
            (lo - 0.5, hi + 0.5)
        } else {
            let pad = 0.05 * (hi - lo);
            (lo - pad, hi + pad)
        };
        Frame { lo, hi }
    }

    fn y(&self, v: f64) -> f64 {
        PAD_T + (H - PAD_T - PAD_B) * (1.0 - (v - self.lo) / (self.hi - self.lo))
    }
}

fn header(out: &mut String, title: &str, frame: &Frame) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="18" font-family="sans-serif" font-size="13" text-anchor="middle">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    let _ = writeln!(
        out,
        r#"<rect x="{PAD_L}" y="{PAD_T}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#,
        W - PAD_L - PAD_R,
        H - PAD_T - PAD_B
    );
    for k in 0..=4 {
        let v = frame.lo + (frame.hi - frame.lo) * k as f64 / 4.0;
        let y = frame.y(v);
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="10" text-anchor="end">{}</text>"#,
            PAD_L - 4.0,
            y + 3.0,
            format_tick(v)
        );
    }
}

fn format_tick(v: f64) -> String {
    if v.abs() >= 1000.0 || (v != 0.0 && v.abs() < 0.01) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

/// Trace of `values` against iteration, with a centered moving average and an
/// optional horizontal reference line.
pub fn trace_plot(title: &str, values: &[f64], truth: Option<f64>) -> String {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let mut lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if let Some(t) = truth {
        lo = lo.min(t);
        hi = hi.max(t);
    }
    if !lo.is_finite() {
        lo = 0.0;
        hi = 1.0;
    }
    let frame = Frame::new(lo, hi);
    let mut out = String::new();
    header(&mut out, title, &frame);
    let n = values.len().max(1);
    let x = |i: usize| PAD_L + (W - PAD_L - PAD_R) * i as f64 / (n.max(2) - 1) as f64;
    let stride = n.div_ceil(MAX_POINTS).max(1);

    let path = |series: &[f64]| {
        let mut d = String::new();
        for (k, i) in (0..series.len()).step_by(stride).enumerate() {
            if !series[i].is_finite() {
                continue;
            }
            let _ = write!(
                d,
                "{}{:.1},{:.1} ",
                if k == 0 { 'M' } else { 'L' },
                x(i),
                frame.y(series[i])
            );
        }
        d
    };
    let _ = writeln!(
        out,
        r#"<path d="{}" fill="none" stroke="{}" stroke-width="0.8"/>"#,
        path(values).trim_end(),
        COLORS[0]
    );
    let smooth = moving_average(values, (values.len() / 20).max(1));
    let _ = writeln!(
        out,
        r#"<path d="{}" fill="none" stroke="black" stroke-width="1.5"/>"#,
        path(&smooth).trim_end()
    );
    if let Some(t) = truth {
        let y = frame.y(t);
        let _ = writeln!(
            out,
            r#"<line x1="{PAD_L}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="{}" stroke-dasharray="5,3"/>"#,
            W - PAD_R,
            COLORS[1]
        );
    }
    out.push_str("</svg>\n");
    out
}

fn moving_average(v: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    (0..v.len())
        .map(|i| {
            let a = i.saturating_sub(half);
            let b = (i + half + 1).min(v.len());
            v[a..b].iter().sum::<f64>() / (b - a) as f64
        })
        .collect()
}

/// Five-number summary used for box plots (min, q1, median, q3, max).
pub fn five_number(values: &[f64]) -> Option<[f64; 5]> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let h = (v.len() - 1) as f64 * p;
        let lo = h.floor() as usize;
        let hi = h.ceil() as usize;
        v[lo] + (h - lo as f64) * (v[hi] - v[lo])
    };
    Some([v[0], q(0.25), q(0.5), q(0.75), v[v.len() - 1]])
}

/// One box per (category, series) pair. `series[s].1[c]` holds the values for
/// category `c`.
pub fn box_plot(title: &str, categories: &[String], series: &[(String, Vec<Vec<f64>>)]) -> String {
    let all = series.iter().flat_map(|s| s.1.iter().flatten()).copied();
    let (lo, hi) = all
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            (a.min(v), b.max(v))
        });
    let frame = if lo.is_finite() {
        Frame::new(lo, hi)
    } else {
        Frame::new(0.0, 1.0)
    };
    let mut out = String::new();
    header(&mut out, title, &frame);
    let nc = categories.len().max(1);
    let ns = series.len().max(1);
    let slot = (W - PAD_L - PAD_R) / nc as f64;
    let bw = slot * 0.7 / ns as f64;
    for (c, cat) in categories.iter().enumerate() {
        let x0 = PAD_L + slot * c as f64 + slot * 0.15;
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="10" text-anchor="middle">{}</text>"#,
            PAD_L + slot * (c as f64 + 0.5),
            H - PAD_B + 14.0,
            escape(cat)
        );
        for (s, (_, groups)) in series.iter().enumerate() {
            let Some(vals) = groups.get(c) else { continue };
            let Some([mn, q1, med, q3, mx]) = five_number(vals) else {
                continue;
            };
            let xl = x0 + bw * s as f64;
            let xm = xl + bw / 2.0;
            let color = COLORS[s % COLORS.len()];
            let _ = writeln!(
                out,
                r#"<line x1="{xm:.1}" y1="{:.1}" x2="{xm:.1}" y2="{:.1}" stroke="{color}"/>"#,
                frame.y(mn),
                frame.y(mx)
            );
            let _ = writeln!(
                out,
                r#"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="white" stroke="{color}"/>"#,
                xl + 1.0,
                frame.y(q3),
                (bw - 2.0).max(1.0),
                (frame.y(q1) - frame.y(q3)).max(0.5)
            );
            let _ = writeln!(
                out,
                r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{color}" stroke-width="2"/>"#,
                xl + 1.0,
                frame.y(med),
                xl + bw - 1.0,
                frame.y(med)
            );
        }
    }
    for (s, (name, _)) in series.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" fill="{}">{}</text>"#,
            PAD_L + 8.0,
            PAD_T + 14.0 * (s + 1) as f64,
            COLORS[s % COLORS.len()],
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Overlaid bar charts of several distributions over the same support.
pub fn bar_plot(title: &str, series: &[(String, Vec<f64>)]) -> String {
    let hi = series
        .iter()
        .flat_map(|s| s.1.iter())
        .copied()
        .filter(|v| v.is_finite())
        .fold(0.0_f64, f64::max);
    let frame = Frame::new(0.0, if hi > 0.0 { hi } else { 1.0 });
    let mut out = String::new();
    header(&mut out, title, &frame);
    let len = series.iter().map(|s| s.1.len()).max().unwrap_or(0).max(1);
    let slot = (W - PAD_L - PAD_R) / len as f64;
    let bw = slot * 0.8 / series.len().max(1) as f64;
    for (s, (name, vals)) in series.iter().enumerate() {
        let color = COLORS[s % COLORS.len()];
        for (k, &v) in vals.iter().enumerate() {
            let x = PAD_L + slot * k as f64 + slot * 0.1 + bw * s as f64;
            let y = frame.y(v);
            let _ = writeln!(
                out,
                r#"<rect x="{x:.1}" y="{y:.1}" width="{:.1}" height="{:.1}" fill="{color}" fill-opacity="0.7"/>"#,
                bw.max(0.5),
                (frame.y(0.0) - y).max(0.0)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" fill="{color}">{}</text>"#,
            W - PAD_R - 150.0,
            PAD_T + 14.0 * (s + 1) as f64,
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_number_summary() {
        let s = five_number(&[5.0, 1.0, 3.0, 2.0, 4.0]).unwrap();
        assert_eq!(s, [1.0, 2.0, 3.0, 4.0, 5.0]);
        assert!(five_number(&[]).is_none());
    }

    #[test]
    fn plots_are_deterministic_and_well_formed() {
        let v: Vec<f64> = (0..500).map(|i| (i as f64).sin()).collect();
        let a = trace_plot("x<1>", &v, Some(0.0));
        assert_eq!(a, trace_plot("x<1>", &v, Some(0.0)));
        assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
        assert!(a.contains("x&lt;1&gt;"));
        let b = box_plot(
            "b",
            &["0.1".into()],
            &[("est".into(), vec![vec![0.1, 0.2, 0.3]])],
        );
        assert!(b.contains("<rect"));
        let c = trace_plot("const", &[1.0; 30], None);
        assert!(!c.contains("NaN"));
    }
}
