//! Static SVG line plots. Output depends only on the inputs.

use std::fmt::Write;

use crate::table::Table;
use crate::LabError;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: (f64, f64, f64, f64) = (70.0, 20.0, 30.0, 50.0); // left, right, top, bottom

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axes {
    Linear,
    LogLog,
    /// log10 on the y axis only.
    SemiLogY,
}

#[derive(Clone, Debug)]
pub struct PlotSpec {
    pub axes: Axes,
    pub x: String,
    pub y: String,
    pub title: String,
    /// Optional horizontal reference line, in data units.
    pub reference: Option<f64>,
    /// Written into a comment at the top of the file.
    pub meta: Vec<(String, String)>,
}

impl PlotSpec {
    pub fn new(axes: Axes, x: &str, y: &str, title: &str) -> Self {
        PlotSpec {
            axes,
            x: x.into(),
            y: y.into(),
            title: title.into(),
            reference: None,
            meta: Vec::new(),
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace("--", "- -")
}

fn fmt_num(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{}", (v * 1000.0).round() / 1000.0)
    }
}

/// Renders the `spec.x` / `spec.y` columns of `rows` as a polyline with markers.
pub fn emit_plot(rows: &Table, spec: &PlotSpec) -> Result<String, LabError> {
    let (xi, yi) = match (rows.column(&spec.x), rows.column(&spec.y)) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(LabError::Plot(format!("columns {} / {} not found", spec.x, spec.y))),
    };
    let logx = spec.axes == Axes::LogLog;
    let logy = spec.axes != Axes::Linear;
    let tx = |v: f64| if logx { v.log10() } else { v };
    let ty = |v: f64| if logy { v.log10() } else { v };
    let pts: Vec<(f64, f64)> = rows
        .rows
        .iter()
        .filter_map(|r| Some((r[xi].as_f64()?, r[yi].as_f64()?)))
        .filter(|&(x, y)| (!logx || x > 0.0) && (!logy || y > 0.0))
        .map(|(x, y)| (tx(x), ty(y)))
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .collect();
    if pts.is_empty() {
        return Err(LabError::Plot("no plottable rows".into()));
    }
    let mut ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    if let Some(r) = spec.reference.filter(|r| !logy || *r > 0.0) {
        ys.push(ty(r));
    }
    let span = |v: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
        if hi - lo < 1e-12 {
            (lo - 0.5, hi + 0.5)
        } else {
            let pad = 0.05 * (hi - lo);
            (lo - pad, hi + pad)
        }
    };
    let (x0, x1) = span(&mut pts.iter().map(|p| p.0));
    let (y0, y1) = span(&mut ys.iter().copied());
    let (ml, mr, mt, mb) = MARGIN;
    let (pw, ph) = (WIDTH - ml - mr, HEIGHT - mt - mb);
    let px = |x: f64| ml + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| mt + ph - (y - y0) / (y1 - y0) * ph;

    let mut s = String::new();
    writeln!(s, "<?xml version=\"1.0\" encoding=\"UTF-8\"?>").unwrap();
    let meta: Vec<String> = spec
        .meta
        .iter()
        .map(|(k, v)| format!("{}={}", escape(k), escape(v)))
        .collect();
    writeln!(s, "<!-- {} -->", meta.join(" ")).unwrap();
    writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"11\">"
    )
    .unwrap();
    writeln!(s, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>").unwrap();
    writeln!(
        s,
        "<text x=\"{}\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">{}</text>",
        WIDTH / 2.0,
        escape(&spec.title)
    )
    .unwrap();
    writeln!(
        s,
        "<rect x=\"{ml}\" y=\"{mt}\" width=\"{pw}\" height=\"{ph}\" fill=\"none\" stroke=\"black\"/>"
    )
    .unwrap();
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (gx, gy) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let (sx, sy) = (px(gx), py(gy));
        writeln!(
            s,
            "<line x1=\"{sx:.2}\" y1=\"{:.2}\" x2=\"{sx:.2}\" y2=\"{:.2}\" stroke=\"black\"/>",
            mt + ph,
            mt + ph + 4.0
        )
        .unwrap();
        writeln!(
            s,
            "<text x=\"{sx:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
            mt + ph + 16.0,
            fmt_num(if logx { 10f64.powf(gx) } else { gx })
        )
        .unwrap();
        writeln!(
            s,
            "<line x1=\"{:.2}\" y1=\"{sy:.2}\" x2=\"{ml}\" y2=\"{sy:.2}\" stroke=\"black\"/>",
            ml - 4.0
        )
        .unwrap();
        writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>",
            ml - 6.0,
            sy + 4.0,
            fmt_num(if logy { 10f64.powf(gy) } else { gy })
        )
        .unwrap();
    }
    let xl = if logx {
        format!("{} (log scale)", spec.x)
    } else {
        spec.x.clone()
    };
    let yl = if logy {
        format!("{} (log10 scale)", spec.y)
    } else {
        spec.y.clone()
    };
    writeln!(
        s,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
        ml + pw / 2.0,
        HEIGHT - 12.0,
        escape(&xl)
    )
    .unwrap();
    writeln!(
        s,
        "<text x=\"16\" y=\"{:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.2})\">{}</text>",
        mt + ph / 2.0,
        mt + ph / 2.0,
        escape(&yl)
    )
    .unwrap();
    if let Some(r) = spec.reference.filter(|r| !logy || *r > 0.0) {
        let y = py(ty(r));
        writeln!(
            s,
            "<line x1=\"{ml}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"gray\" stroke-dasharray=\"6 4\"/>",
            ml + pw
        )
        .unwrap();
    }
    let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
    writeln!(
        s,
        "<polyline points=\"{}\" fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\"/>",
        path.join(" ")
    )
    .unwrap();
    for &(x, y) in &pts {
        writeln!(
            s,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.5\" fill=\"steelblue\"/>",
            px(x),
            py(y)
        )
        .unwrap();
    }
    writeln!(s, "</svg>").unwrap();
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_rows() -> Table {
        let mut t = Table::new(&["x", "y"]);
        t.push(vec![1.0.into(), 2.0.into()]);
        t.push(vec![10.0.into(), 20.0.into()]);
        t
    }

    #[test]
    fn two_points_make_one_segment() {
        let svg = emit_plot(&two_rows(), &PlotSpec::new(Axes::Linear, "x", "y", "t")).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert_eq!(svg.matches("<circle").count(), 2);
        assert!(svg.contains(">x</text>") && svg.contains(">y</text>"));
    }

    #[test]
    fn deterministic_and_semilog() {
        let spec = PlotSpec::new(Axes::SemiLogY, "x", "y", "t");
        let a = emit_plot(&two_rows(), &spec).unwrap();
        assert_eq!(a, emit_plot(&two_rows(), &spec).unwrap());
        assert!(a.contains("y (log10 scale)"));
    }

    #[test]
    fn empty_is_an_error() {
        let t = Table::new(&["x", "y"]);
        assert!(emit_plot(&t, &PlotSpec::new(Axes::Linear, "x", "y", "t")).is_err());
    }
}
