//! Hand-rolled SVG 1.1 chart emitters: deterministic output, no plotting
//! dependency. Every chart embeds its source data table (CSV) in a
//! `<metadata>` element so the graphic and the numbers cannot drift apart.

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 30.0;
const MARGIN_TOP: f64 = 58.0;
const MARGIN_BOTTOM: f64 = 64.0;

const OBSERVED_FILL: &str = "#1a1a1a";
const PREDICTED_FILL: &str = "#9e9e9e";

fn fmt(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e12 {
        format!("{:.0}", v)
    } else {
        let s = format!("{:.6}", v);
        let s = s.trim_end_matches('0').trim_end_matches('.');
        s.to_string()
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Equally spaced tick values covering [0, max] with a "nice" step.
fn nice_ticks(max: f64) -> Vec<f64> {
    let max = if max <= 0.0 { 1.0 } else { max };
    let raw = max / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|&s| max / s <= 6.0)
        .unwrap_or(2.0 * mag);
    let mut ticks = Vec::new();
    let mut t = 0.0;
    while t <= max * (1.0 + 1e-9) {
        ticks.push(t);
        t += step;
    }
    ticks
}

fn header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
         <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"#ffffff\"/>\n\
         <text x=\"{x}\" y=\"28\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"17\" fill=\"#111111\">{}</text>\n",
        escape(title),
        x = WIDTH / 2.0
    )
}

fn metadata(csv_table: &str) -> String {
    format!("<metadata id=\"data-table\"><![CDATA[{csv_table}]]></metadata>\n")
}

/// Grouped observed-vs-predicted bar chart over count categories.
pub fn grouped_bar_chart(
    title: &str,
    annotation_lines: &[String],
    category_labels: &[String],
    observed: &[f64],
    predicted: &[f64],
    csv_table: &str,
) -> String {
    assert_eq!(category_labels.len(), observed.len());
    assert_eq!(observed.len(), predicted.len());
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let y_max = observed
        .iter()
        .chain(predicted)
        .fold(0.0f64, |m, &v| m.max(v))
        .max(1e-9);
    let ticks = nice_ticks(y_max);
    let y_top = ticks.last().copied().unwrap_or(1.0).max(y_max);
    let y_of = |v: f64| MARGIN_TOP + plot_h * (1.0 - v / y_top);

    let mut svg = header(title);
    svg.push_str(&metadata(csv_table));

    for (i, line) in annotation_lines.iter().enumerate() {
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#333333\">{}</text>\n",
            WIDTH - MARGIN_RIGHT,
            MARGIN_TOP + 14.0 * (i as f64 + 1.0) - 20.0,
            escape(line)
        ));
    }

    // y axis with gridlines
    for &t in &ticks {
        let y = y_of(t);
        svg.push_str(&format!(
            "<line x1=\"{MARGIN_LEFT}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n",
            WIDTH - MARGIN_RIGHT
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#333333\">{}</text>\n",
            MARGIN_LEFT - 6.0,
            y + 4.0,
            fmt(t)
        ));
    }

    let group_w = plot_w / category_labels.len() as f64;
    let bar_w = group_w * 0.36;
    for (i, label) in category_labels.iter().enumerate() {
        let x0 = MARGIN_LEFT + group_w * i as f64;
        let center = x0 + group_w / 2.0;
        for (series, &value, fill) in [
            ("observed", &observed[i], OBSERVED_FILL),
            ("predicted", &predicted[i], PREDICTED_FILL),
        ] {
            let x = if series == "observed" {
                center - bar_w - 1.0
            } else {
                center + 1.0
            };
            let y = y_of(value);
            let h = MARGIN_TOP + plot_h - y;
            svg.push_str(&format!(
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{fill}\"/>\n",
                x, y, bar_w, h
            ));
        }
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#333333\">{}</text>\n",
            center,
            MARGIN_TOP + plot_h + 16.0,
            escape(label)
        ));
    }

    // axes
    svg.push_str(&format!(
        "<line x1=\"{MARGIN_LEFT}\" y1=\"{MARGIN_TOP}\" x2=\"{MARGIN_LEFT}\" y2=\"{}\" stroke=\"#333333\" stroke-width=\"1\"/>\n",
        MARGIN_TOP + plot_h
    ));
    svg.push_str(&format!(
        "<line x1=\"{MARGIN_LEFT}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#333333\" stroke-width=\"1\"/>\n",
        MARGIN_TOP + plot_h,
        WIDTH - MARGIN_RIGHT,
        MARGIN_TOP + plot_h
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" fill=\"#111111\">Number of crashes</text>\n",
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 22.0
    ));
    svg.push_str(&format!(
        "<text x=\"20\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" fill=\"#111111\" transform=\"rotate(-90 20 {})\">Proportion of sections</text>\n",
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0
    ));

    // legend
    let legend_y = MARGIN_TOP - 18.0;
    svg.push_str(&format!(
        "<rect x=\"{MARGIN_LEFT}\" y=\"{legend_y}\" width=\"12\" height=\"12\" fill=\"{OBSERVED_FILL}\"/>\n\
         <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#333333\">Observed</text>\n\
         <rect x=\"{}\" y=\"{legend_y}\" width=\"12\" height=\"12\" fill=\"{PREDICTED_FILL}\"/>\n\
         <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#333333\">Predicted</text>\n",
        MARGIN_LEFT + 16.0,
        legend_y + 10.0,
        MARGIN_LEFT + 110.0,
        MARGIN_LEFT + 126.0,
        legend_y + 10.0
    ));

    svg.push_str("</svg>\n");
    svg
}

/// Scatter plot, optionally with the 45-degree identity line.
#[allow(clippy::too_many_arguments)]
pub fn scatter_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    points: &[(f64, f64)],
    identity_line: bool,
    annotation_lines: &[String],
    csv_table: &str,
) -> String {
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;

    let (mut x_min, mut x_max, mut y_min, mut y_max) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in points {
        x_min = x_min.min(x);
        x_max = x_max.max(x);
        y_min = y_min.min(y);
        y_max = y_max.max(y);
    }
    if points.is_empty() {
        (x_min, x_max, y_min, y_max) = (0.0, 1.0, 0.0, 1.0);
    }
    if identity_line {
        let lo = x_min.min(y_min).min(0.0);
        let hi = x_max.max(y_max);
        (x_min, y_min) = (lo, lo);
        (x_max, y_max) = (hi, hi);
    }
    if (x_max - x_min).abs() < 1e-12 {
        x_min -= 0.5;
        x_max += 0.5;
    }
    if (y_max - y_min).abs() < 1e-12 {
        y_min -= 0.5;
        y_max += 0.5;
    }
    let pad_x = (x_max - x_min) * 0.05;
    let pad_y = (y_max - y_min) * 0.05;
    let (x0, x1) = (x_min - pad_x, x_max + pad_x);
    let (y0, y1) = (y_min - pad_y, y_max + pad_y);
    let x_of = |v: f64| MARGIN_LEFT + plot_w * (v - x0) / (x1 - x0);
    let y_of = |v: f64| MARGIN_TOP + plot_h * (1.0 - (v - y0) / (y1 - y0));

    let mut svg = header(title);
    svg.push_str(&metadata(csv_table));

    // frame
    svg.push_str(&format!(
        "<rect x=\"{MARGIN_LEFT}\" y=\"{MARGIN_TOP}\" width=\"{plot_w}\" height=\"{plot_h}\" fill=\"none\" stroke=\"#333333\" stroke-width=\"1\"/>\n"
    ));

    // simple 5-tick axes
    for i in 0..=5 {
        let fx = x0 + (x1 - x0) * i as f64 / 5.0;
        let fy = y0 + (y1 - y0) * i as f64 / 5.0;
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#333333\">{}</text>\n",
            x_of(fx),
            MARGIN_TOP + plot_h + 16.0,
            fmt((fx * 1000.0).round() / 1000.0)
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{:.2}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#333333\">{}</text>\n",
            MARGIN_LEFT - 6.0,
            y_of(fy) + 4.0,
            fmt((fy * 1000.0).round() / 1000.0)
        ));
    }

    if identity_line {
        let lo = x0.max(y0);
        let hi = x1.min(y1);
        svg.push_str(&format!(
            "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#888888\" stroke-width=\"1\" stroke-dasharray=\"6 4\"/>\n",
            x_of(lo),
            y_of(lo),
            x_of(hi),
            y_of(hi)
        ));
    }

    for &(x, y) in points {
        svg.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{OBSERVED_FILL}\" fill-opacity=\"0.55\"/>\n",
            x_of(x),
            y_of(y)
        ));
    }

    for (i, line) in annotation_lines.iter().enumerate() {
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#333333\">{}</text>\n",
            MARGIN_LEFT + 10.0,
            MARGIN_TOP + 18.0 + 15.0 * i as f64,
            escape(line)
        ));
    }

    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" fill=\"#111111\">{}</text>\n",
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 22.0,
        escape(x_label)
    ));
    svg.push_str(&format!(
        "<text x=\"20\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" fill=\"#111111\" transform=\"rotate(-90 20 {})\">{}</text>\n",
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0,
        escape(y_label)
    ));

    svg.push_str("</svg>\n");
    svg
}

/// Extracts the embedded data table from a chart produced by this module.
#[allow(dead_code)] // exercised by tests; handy for downstream tooling
pub fn embedded_table(svg: &str) -> Option<&str> {
    let start = svg.find("<![CDATA[")? + "<![CDATA[".len();
    let end = svg[start..].find("]]>")? + start;
    Some(&svg[start..end])
}
