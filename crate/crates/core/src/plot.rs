//! Static SVG line plots of one or more traces on a shared time base.
//!
//! Output depends only on the traces: coordinates are written with a fixed
//! number of decimals and series are decimated with a fixed stride.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Result, SimError};
use crate::simulation::{SimTrace, TraceRow};

/// Upper bound on plotted points per series.
pub const MAX_POINTS: usize = 2000;

const WIDTH: f64 = 800.0;
const PANEL_HEIGHT: f64 = 170.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 50.0;
const GAP: f64 = 40.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];
const REFERENCE_COLOR: &str = "#555555";

type Extract = fn(&TraceRow) -> Option<f64>;

struct Panel {
    title: &'static str,
    value: Extract,
    reference: Option<Extract>,
}

struct Figure {
    file: &'static str,
    title: &'static str,
    panels: Vec<Panel>,
}

fn lyap(k: usize) -> impl Fn(&TraceRow) -> Option<f64> {
    move |r: &TraceRow| r.lyapunov.map(|v| v[k].v)
}

fn figures() -> Vec<Figure> {
    vec![
        Figure {
            file: "positions.svg",
            title: "Position",
            panels: vec![
                Panel {
                    title: "x (m)",
                    value: |r| Some(r.state.x()),
                    reference: Some(|r| Some(r.reference.x.value)),
                },
                Panel {
                    title: "y (m)",
                    value: |r| Some(r.state.y()),
                    reference: Some(|r| Some(r.reference.y.value)),
                },
                Panel {
                    title: "z (m)",
                    value: |r| Some(r.state.z()),
                    reference: Some(|r| Some(r.reference.channels.z.value)),
                },
            ],
        },
        Figure {
            file: "attitude.svg",
            title: "Euler angles",
            panels: vec![
                Panel {
                    title: "phi (rad)",
                    value: |r| Some(r.state.phi()),
                    reference: Some(|r| Some(r.reference.channels.phi.value)),
                },
                Panel {
                    title: "theta (rad)",
                    value: |r| Some(r.state.theta()),
                    reference: Some(|r| Some(r.reference.channels.theta.value)),
                },
                Panel {
                    title: "psi (rad)",
                    value: |r| Some(r.state.psi()),
                    reference: Some(|r| Some(r.reference.channels.psi.value)),
                },
            ],
        },
        Figure {
            file: "inputs.svg",
            title: "Control inputs",
            panels: vec![
                Panel {
                    title: "u1 (N)",
                    value: |r| Some(r.input.u1),
                    reference: None,
                },
                Panel {
                    title: "u2 (N m)",
                    value: |r| Some(r.input.u2),
                    reference: None,
                },
                Panel {
                    title: "u3 (N m)",
                    value: |r| Some(r.input.u3),
                    reference: None,
                },
                Panel {
                    title: "u4 (N m)",
                    value: |r| Some(r.input.u4),
                    reference: None,
                },
            ],
        },
        Figure {
            file: "lyapunov.svg",
            title: "Lyapunov functions",
            panels: vec![
                Panel {
                    title: "V_phi",
                    value: |r| lyap(0)(r),
                    reference: None,
                },
                Panel {
                    title: "V_theta",
                    value: |r| lyap(1)(r),
                    reference: None,
                },
                Panel {
                    title: "V_psi",
                    value: |r| lyap(2)(r),
                    reference: None,
                },
                Panel {
                    title: "V_z",
                    value: |r| lyap(3)(r),
                    reference: None,
                },
            ],
        },
    ]
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Legend labels: controller names, disambiguated when repeated.
fn labels(traces: &[&SimTrace]) -> Vec<String> {
    traces
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let name = t.meta.controller.to_string();
            let repeated = traces
                .iter()
                .filter(|o| o.meta.controller == t.meta.controller)
                .count()
                > 1;
            if repeated {
                format!("{name} #{}", i + 1)
            } else {
                name
            }
        })
        .collect()
}

fn series(rows: &[TraceRow], f: &dyn Fn(&TraceRow) -> Option<f64>) -> Vec<(f64, f64)> {
    let stride = rows.len().div_ceil(MAX_POINTS).max(1);
    let mut out: Vec<(f64, f64)> = rows
        .iter()
        .step_by(stride)
        .filter_map(|r| f(r).filter(|v| v.is_finite()).map(|v| (r.t, v)))
        .collect();
    if let Some(last) = rows.last() {
        if !(rows.len() - 1).is_multiple_of(stride) {
            if let Some(v) = f(last).filter(|v| v.is_finite()) {
                out.push((last.t, v));
            }
        }
    }
    out
}

fn polyline(
    out: &mut String,
    pts: &[(f64, f64)],
    map: &dyn Fn(f64, f64) -> (f64, f64),
    style: &str,
) {
    if pts.is_empty() {
        return;
    }
    out.push_str("<polyline fill=\"none\" ");
    out.push_str(style);
    out.push_str(" points=\"");
    for (i, (t, v)) in pts.iter().enumerate() {
        let (x, y) = map(*t, *v);
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{x:.2},{y:.2}");
    }
    out.push_str("\"/>\n");
}

fn render(fig: &Figure, traces: &[&SimTrace], names: &[String], t_end: f64) -> String {
    let height = TOP + fig.panels.len() as f64 * (PANEL_HEIGHT + GAP);
    let plot_w = WIDTH - LEFT - RIGHT;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH:.0}\" height=\"{height:.0}\" \
         viewBox=\"0 0 {WIDTH:.0} {height:.0}\" font-family=\"sans-serif\" font-size=\"11\">"
    );
    let _ = writeln!(out, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    let _ = writeln!(
        out,
        "<text x=\"{LEFT:.0}\" y=\"18\" font-size=\"14\">{}</text>",
        escape(fig.title)
    );

    // Legend.
    let mut lx = LEFT;
    let mut entries: Vec<(String, &str, bool)> = names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.clone(), PALETTE[i % PALETTE.len()], false))
        .collect();
    if fig.panels.iter().any(|p| p.reference.is_some()) {
        entries.push(("reference".into(), REFERENCE_COLOR, true));
    }
    let _ = writeln!(out, "<g class=\"legend\">");
    for (name, color, dashed) in &entries {
        let dash = if *dashed {
            " stroke-dasharray=\"5,3\""
        } else {
            ""
        };
        let _ = writeln!(
            out,
            "<line x1=\"{lx:.2}\" y1=\"32\" x2=\"{:.2}\" y2=\"32\" stroke=\"{color}\" stroke-width=\"2\"{dash}/>",
            lx + 20.0
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"36\">{}</text>",
            lx + 25.0,
            escape(name)
        );
        lx += 40.0 + 7.0 * name.len() as f64;
    }
    let _ = writeln!(out, "</g>");

    for (p_idx, panel) in fig.panels.iter().enumerate() {
        let top = TOP + p_idx as f64 * (PANEL_HEIGHT + GAP) + 10.0;
        let data: Vec<Vec<(f64, f64)>> = traces
            .iter()
            .map(|t| series(&t.rows, &panel.value))
            .collect();
        let reference = panel
            .reference
            .zip(traces.first())
            .map(|(f, t)| series(&t.rows, &f))
            .unwrap_or_default();

        let values = data.iter().flatten().chain(&reference).map(|p| p.1);
        let (mut lo, mut hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            (a.min(v), b.max(v))
        });
        if !lo.is_finite() {
            (lo, hi) = (-1.0, 1.0);
        }
        if hi - lo < 1e-12 {
            let pad = (lo.abs() * 0.1).max(1e-6);
            (lo, hi) = (lo - pad, hi + pad);
        }
        let t_span = if t_end > 0.0 { t_end } else { 1.0 };
        let map = |t: f64, v: f64| {
            (
                LEFT + plot_w * t / t_span,
                top + PANEL_HEIGHT * (1.0 - (v - lo) / (hi - lo)),
            )
        };

        let _ = writeln!(
            out,
            "<rect x=\"{LEFT:.2}\" y=\"{top:.2}\" width=\"{plot_w:.2}\" height=\"{PANEL_HEIGHT:.2}\" \
             fill=\"none\" stroke=\"#999999\"/>"
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\">{}</text>",
            LEFT + 4.0,
            top + 14.0,
            escape(panel.title)
        );
        for (v, y) in [(hi, top + 4.0), (lo, top + PANEL_HEIGHT)] {
            let _ = writeln!(
                out,
                "<text x=\"{:.2}\" y=\"{y:.2}\" text-anchor=\"end\">{v:.4}</text>",
                LEFT - 6.0
            );
        }
        let base = top + PANEL_HEIGHT + 14.0;
        let _ = writeln!(out, "<text x=\"{LEFT:.2}\" y=\"{base:.2}\">0</text>");
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{base:.2}\" text-anchor=\"end\">{t_end:.3} s</text>",
            WIDTH - RIGHT
        );

        if !reference.is_empty() {
            polyline(
                &mut out,
                &reference,
                &map,
                &format!(
                    "stroke=\"{REFERENCE_COLOR}\" stroke-width=\"1\" stroke-dasharray=\"5,3\""
                ),
            );
        }
        for (i, pts) in data.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            polyline(
                &mut out,
                pts,
                &map,
                &format!("stroke=\"{color}\" stroke-width=\"1.2\""),
            );
        }
        if data.iter().all(|d| d.is_empty()) {
            let _ = writeln!(
                out,
                "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">no data</text>",
                LEFT + plot_w / 2.0,
                top + PANEL_HEIGHT / 2.0
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Writes `positions.svg`, `attitude.svg`, `inputs.svg` and `lyapunov.svg`
/// into `dir`, overlaying every trace. Returns the written paths.
pub fn emit_plots(traces: &[&SimTrace], dir: &Path) -> Result<Vec<PathBuf>> {
    let first = traces
        .first()
        .ok_or_else(|| SimError::Config("no traces to plot".into()))?;
    if traces.iter().any(|t| t.meta.h != first.meta.h) {
        return Err(SimError::Config(
            "overlaid traces must share the step size".into(),
        ));
    }
    let t_end = traces
        .iter()
        .filter_map(|t| t.rows.last().map(|r| r.t))
        .fold(0.0, f64::max);
    let names = labels(traces);
    std::fs::create_dir_all(dir)?;
    figures()
        .iter()
        .map(|fig| {
            let path = dir.join(fig.file);
            std::fs::write(&path, render(fig, traces, &names, t_end))?;
            Ok(path)
        })
        .collect()
}
