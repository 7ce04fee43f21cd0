//! SVG rendering of accuracy and loss histories (two side-by-side panels).

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::train::EpochRecord;

const PANEL_W: f64 = 420.0;
const PANEL_H: f64 = 300.0;
const MARGIN_L: f64 = 56.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 36.0;
const MARGIN_B: f64 = 44.0;
const TRAIN_COLOR: &str = "#1f77b4";
const VAL_COLOR: &str = "#ff7f0e";

struct Panel<'a> {
    title: &'a str,
    y_label: &'a str,
    key: &'a str,
    y_max: f64,
    train: Vec<f64>,
    val: Vec<f64>,
}

/// Render the history; identical input produces identical bytes.
pub fn emit_curves(history: &[EpochRecord]) -> Result<String> {
    if history.is_empty() {
        return Err(Error::Argument("cannot plot an empty history".into()));
    }
    let epochs: Vec<usize> = history.iter().map(|r| r.epoch).collect();
    let max_loss = history
        .iter()
        .flat_map(|r| [r.train_loss, r.val_loss])
        .fold(0.0f64, f64::max);
    let panels = [
        Panel {
            title: "Training and validation accuracy",
            y_label: "Accuracy",
            key: "accuracy",
            y_max: 1.0,
            train: history.iter().map(|r| r.train_accuracy).collect(),
            val: history.iter().map(|r| r.val_accuracy).collect(),
        },
        Panel {
            title: "Training and validation loss",
            y_label: "Loss",
            key: "loss",
            y_max: if max_loss > 0.0 {
                nice_ceiling(max_loss)
            } else {
                1.0
            },
            train: history.iter().map(|r| r.train_loss).collect(),
            val: history.iter().map(|r| r.val_loss).collect(),
        },
    ];

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#,
        w = 2.0 * PANEL_W,
        h = PANEL_H
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (i, panel) in panels.iter().enumerate() {
        draw_panel(&mut svg, panel, &epochs, i as f64 * PANEL_W);
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn nice_ceiling(v: f64) -> f64 {
    let mag = 10f64.powf(v.log10().floor());
    for step in [1.0, 2.0, 2.5, 5.0, 10.0] {
        if step * mag >= v {
            return step * mag;
        }
    }
    10.0 * mag
}

fn draw_panel(svg: &mut String, p: &Panel<'_>, epochs: &[usize], x0: f64) {
    let left = x0 + MARGIN_L;
    let right = x0 + PANEL_W - MARGIN_R;
    let top = MARGIN_T;
    let bottom = PANEL_H - MARGIN_B;
    let first = epochs[0] as f64;
    let last = *epochs.last().unwrap() as f64;
    let sx = |e: f64| {
        if last > first {
            left + (e - first) / (last - first) * (right - left)
        } else {
            (left + right) / 2.0
        }
    };
    let sy = |v: f64| bottom - (v / p.y_max).clamp(0.0, 1.0) * (bottom - top);

    let _ = writeln!(svg, r#"<g class="panel-{}">"#, p.key);
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="20" text-anchor="middle" font-size="13">{}</text>"#,
        (left + right) / 2.0,
        p.title
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{left:.2}" y1="{bottom:.2}" x2="{right:.2}" y2="{bottom:.2}" stroke="black"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{left:.2}" y1="{top:.2}" x2="{left:.2}" y2="{bottom:.2}" stroke="black"/>"#
    );
    for t in 0..=4 {
        let v = p.y_max * t as f64 / 4.0;
        let y = sy(v);
        let _ = writeln!(
            svg,
            r##"<line x1="{:.2}" y1="{y:.2}" x2="{right:.2}" y2="{y:.2}" stroke="#dddddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{v:.2}</text>"##,
            left,
            left - 6.0,
            y + 4.0
        );
    }
    let ticks = x_ticks(first as usize, last as usize);
    for e in ticks {
        let x = sx(e as f64);
        let _ = writeln!(
            svg,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{e}</text>"#,
            bottom + 16.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">Epoch</text>"#,
        (left + right) / 2.0,
        PANEL_H - 8.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" transform="rotate(-90 {:.2} {:.2})">{}</text>"#,
        x0 + 16.0,
        (top + bottom) / 2.0,
        x0 + 16.0,
        (top + bottom) / 2.0,
        p.y_label
    );
    for (series, values, color) in [("train", &p.train, TRAIN_COLOR), ("val", &p.val, VAL_COLOR)] {
        let points: Vec<String> = epochs
            .iter()
            .zip(values.iter())
            .map(|(&e, &v)| format!("{:.2},{:.2}", sx(e as f64), sy(v)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline class="{series}-{}" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            p.key,
            points.join(" ")
        );
        for pt in &points {
            let (x, y) = pt.split_once(',').unwrap();
            let _ = writeln!(svg, r#"<circle cx="{x}" cy="{y}" r="2" fill="{color}"/>"#);
        }
    }
    let legend_x = right - 110.0;
    for (i, (label, color)) in [("Training", TRAIN_COLOR), ("Validation", VAL_COLOR)]
        .iter()
        .enumerate()
    {
        let y = top + 12.0 + 14.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{legend_x:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{label}</text>"#,
            legend_x + 18.0,
            legend_x + 22.0,
            y + 4.0
        );
    }
    svg.push_str("</g>\n");
}

fn x_ticks(first: usize, last: usize) -> Vec<usize> {
    let span = last - first;
    let step = match span {
        0..=10 => 1,
        11..=25 => 5,
        _ => 10,
    };
    let mut ticks: Vec<usize> = (first..=last).filter(|e| (e - first) % step == 0).collect();
    if ticks.last() != Some(&last) {
        ticks.push(last);
    }
    ticks
}
