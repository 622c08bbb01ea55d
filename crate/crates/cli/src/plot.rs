//! SVG line plot of per-epoch accuracy curves.

use std::fmt::Write as _;

use spkid_core::pipeline::Curves;

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

fn x_of(epoch: usize, max_epoch: usize) -> f64 {
    let span = (max_epoch.max(2) - 1) as f64;
    LEFT + (epoch.saturating_sub(1)) as f64 / span * (W - LEFT - RIGHT)
}

fn y_of(acc: f64) -> f64 {
    TOP + (1.0 - acc.clamp(0.0, 1.0)) * (H - TOP - BOTTOM)
}

fn polyline(points: &[(usize, f64)], max_epoch: usize, color: &str) -> String {
    let pts: Vec<String> = points
        .iter()
        .map(|&(e, a)| format!("{:.2},{:.2}", x_of(e, max_epoch), y_of(a)))
        .collect();
    format!(
        "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n",
        pts.join(" ")
    )
}

/// Train and validation accuracy against epoch.
pub fn curves_svg(curves: &Curves, title: &str) -> String {
    let n = curves.epochs.last().map(|e| e.epoch).unwrap_or(1);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">{}</text>\n",
        W / 2.0,
        escape(title)
    );
    for i in 0..=5 {
        let a = i as f64 / 5.0;
        let y = y_of(a);
        let _ = writeln!(
            s,
            "<line x1=\"{LEFT}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"#ddd\"/>\
             <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\">{a:.1}</text>",
            W - RIGHT,
            LEFT - 6.0,
            y + 4.0
        );
    }
    let ticks = 5.min(n.max(1));
    for i in 0..=ticks {
        let e = 1 + (n - 1) * i / ticks.max(1);
        let x = x_of(e, n);
        let _ = writeln!(
            s,
            "<text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">{e}</text>",
            H - BOTTOM + 18.0
        );
    }
    let _ = writeln!(
        s,
        "<rect x=\"{LEFT}\" y=\"{TOP}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" stroke=\"black\"/>\n\
         <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">epoch</text>\n\
         <text x=\"16\" y=\"{:.2}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" transform=\"rotate(-90 16 {:.2})\">accuracy</text>",
        W - LEFT - RIGHT,
        H - TOP - BOTTOM,
        (LEFT + W - RIGHT) / 2.0,
        H - 12.0,
        (TOP + H - BOTTOM) / 2.0,
        (TOP + H - BOTTOM) / 2.0
    );
    let train: Vec<(usize, f64)> = curves.epochs.iter().map(|e| (e.epoch, e.train_accuracy)).collect();
    let val: Vec<(usize, f64)> = curves
        .epochs
        .iter()
        .filter_map(|e| e.val_accuracy.map(|v| (e.epoch, v)))
        .collect();
    s.push_str(&polyline(&train, n, "#1f77b4"));
    let mut legend = vec![("train", "#1f77b4")];
    if !val.is_empty() {
        s.push_str(&polyline(&val, n, "#d62728"));
        legend.push(("validation", "#d62728"));
    }
    for (i, (label, color)) in legend.iter().enumerate() {
        let y = TOP + 16.0 + 18.0 * i as f64;
        let x = W - RIGHT - 110.0;
        let _ = writeln!(
            s,
            "<line x1=\"{x:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"{color}\" stroke-width=\"2\"/>\
             <text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"12\">{label}</text>",
            x + 20.0,
            x + 26.0,
            y + 4.0
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
