//! Static horizontal bar charts.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const LABEL_W: f64 = 150.0;
const VALUE_W: f64 = 130.0;
const ROW_H: f64 = 26.0;
const TOP: f64 = 36.0;

pub enum Bar<'a> {
    /// Filled from zero to the value.
    Point { label: &'a str, value: f64 },
    /// Filled from lower to upper, with a thin baseline across `[0, 1]`.
    Interval { label: &'a str, lower: f64, upper: f64, note: Option<&'a str> },
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for ch in text.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Renders one labeled bar per entry on a shared `[0, scale]` axis.
pub fn bar_chart(title: &str, bars: &[Bar<'_>], scale: f64) -> String {
    let plot_w = WIDTH - LABEL_W - VALUE_W;
    let height = TOP + ROW_H * bars.len() as f64 + 24.0;
    let x = |v: f64| LABEL_W + plot_w * (v / scale).clamp(0.0, 1.0);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<title>{}</title>"#, escape(title));
    let _ = writeln!(out, r#"<text x="{}" y="20" font-size="14">{}</text>"#, LABEL_W, escape(title));
    for (i, bar) in bars.iter().enumerate() {
        let y = TOP + ROW_H * i as f64;
        let mid = y + ROW_H / 2.0 + 4.0;
        let (label, x0, x1, text) = match bar {
            Bar::Point { label, value } => (*label, x(0.0), x(*value), format!("{value:.4}")),
            Bar::Interval { label, lower, upper, note } => {
                let mut t = format!("[{lower:.4}, {upper:.4}]");
                if let Some(n) = note {
                    t.push(' ');
                    t.push_str(n);
                }
                (*label, x(*lower), x(*upper), t)
            }
        };
        let _ = writeln!(out, r#"<g class="bar">"#);
        let _ = writeln!(out, r#"<text x="{}" y="{mid}" text-anchor="end">{}</text>"#, LABEL_W - 8.0, escape(label));
        if matches!(bar, Bar::Interval { .. }) {
            let _ = writeln!(
                out,
                r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#bbbbbb"/>"##,
                x(0.0),
                y + ROW_H / 2.0,
                x(scale),
                y + ROW_H / 2.0
            );
        }
        // keep degenerate intervals visible
        let w = (x1 - x0).max(2.0);
        let _ = writeln!(
            out,
            r##"<rect x="{x0:.2}" y="{}" width="{w:.2}" height="{}" fill="#4a72b0"/>"##,
            y + 5.0,
            ROW_H - 10.0
        );
        let _ = writeln!(out, r#"<text x="{}" y="{mid}">{}</text>"#, LABEL_W + plot_w + 8.0, escape(&text));
        let _ = writeln!(out, "</g>");
    }
    let axis_y = TOP + ROW_H * bars.len() as f64 + 4.0;
    let _ = writeln!(
        out,
        r##"<line x1="{}" y1="{axis_y}" x2="{}" y2="{axis_y}" stroke="#333333"/>"##,
        x(0.0),
        x(scale)
    );
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">0</text>"#, x(0.0), axis_y + 14.0);
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{scale}</text>"#, x(scale), axis_y + 14.0);
    out.push_str("</svg>\n");
    out
}
