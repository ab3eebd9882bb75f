//! Minimal SVG trace and histogram plots.

use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 320.0;
const PAD: f64 = 48.0;

fn extent(xs: &[f64]) -> (f64, f64) {
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

fn header(out: &mut String, title: &str, y_lo: f64, y_hi: f64) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="18" text-anchor="middle" font-size="13">{title}</text>"#, W / 2.0);
    let _ = writeln!(
        out,
        r#"<line x1="{PAD}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{b}" stroke="black"/>"#,
        b = H - PAD,
        r = W - PAD
    );
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{y_hi:.4}</text>"#, PAD - 4.0, PAD + 4.0);
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{y_lo:.4}</text>"#, PAD - 4.0, H - PAD);
}

/// Sample path against iteration, with a dashed marker at the end of burn-in.
pub fn trace_svg(title: &str, values: &[f64], burn_in: usize) -> String {
    let (lo, hi) = extent(values);
    let n = values.len().max(2) - 1;
    let px = |i: usize| PAD + (W - 2.0 * PAD) * i as f64 / n as f64;
    let py = |v: f64| H - PAD - (H - 2.0 * PAD) * (v - lo) / (hi - lo);
    let mut out = String::new();
    header(&mut out, title, lo, hi);
    let mut pts = String::new();
    for (i, v) in values.iter().enumerate() {
        let _ = write!(pts, "{:.2},{:.2} ", px(i), py(*v));
    }
    let _ = writeln!(out, r#"<polyline fill="none" stroke="steelblue" stroke-width="0.6" points="{}"/>"#, pts.trim_end());
    if burn_in > 0 && burn_in < values.len() {
        let x = px(burn_in);
        let _ = writeln!(
            out,
            r#"<line x1="{x:.2}" y1="{PAD}" x2="{x:.2}" y2="{}" stroke="grey" stroke-dasharray="4 3"/>"#,
            H - PAD
        );
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">iteration (0 to {n})</text>"#, W / 2.0, H - 12.0);
    out.push_str("</svg>\n");
    out
}

/// Counts of `values` in `bins` equal-width bins over their range.
pub fn histogram(values: &[f64], bins: usize) -> (f64, f64, Vec<usize>) {
    let (lo, hi) = extent(values);
    let mut counts = vec![0usize; bins.max(1)];
    let last = counts.len() - 1;
    for v in values {
        let b = (((v - lo) / (hi - lo)) * counts.len() as f64) as usize;
        counts[b.min(last)] += 1;
    }
    (lo, hi, counts)
}

pub fn histogram_svg(title: &str, values: &[f64], bins: usize) -> String {
    let (lo, hi, counts) = histogram(values, bins);
    let top = counts.iter().copied().max().unwrap_or(1).max(1) as f64;
    let bw = (W - 2.0 * PAD) / counts.len() as f64;
    let mut out = String::new();
    header(&mut out, title, 0.0, top);
    for (i, c) in counts.iter().enumerate() {
        let h = (H - 2.0 * PAD) * *c as f64 / top;
        let _ = writeln!(
            out,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{h:.2}" fill="steelblue" stroke="white" stroke-width="0.5"/>"#,
            PAD + bw * i as f64,
            H - PAD - h,
            bw
        );
    }
    let _ = writeln!(out, r#"<text x="{PAD}" y="{}" text-anchor="start">{lo:.4}</text>"#, H - PAD + 14.0);
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{hi:.4}</text>"#, W - PAD, H - PAD + 14.0);
    out.push_str("</svg>\n");
    out
}
