//! Trace CSV format.
//!
//! A block of `# key=value` metadata lines is followed by one header line
//! and one row per step. Columns, in order:
//!
//! ```text
//! t, x1..x12, u1..u4,
//! phi_d, phi_d_dot, phi_d_ddot, theta_d, .., psi_d, .., z_d, .., x_d, .., y_d, ..,
//! e1..e8, V_phi, V_theta, V_psi, V_z, fdx, fdy, fdz
//! ```
//!
//! `e*` and `V_*` are empty for PID runs. Floats are written in their
//! shortest round-trip form, so parsing a written trace is lossless.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::Vector3;

use crate::backstepping::{
    lyapunov_values, BacksteppingErrors, ChannelReference, ChannelRefs, Gains,
};
use crate::dynamics::{ControlInput, State12};
use crate::error::{Result, SimError};
use crate::guidance::FullReference;
use crate::simulation::{RunStatus, SimTrace, TraceMeta, TraceRow};

const MAGIC: &str = "quadsim trace v1";

pub fn header() -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=12).map(|i| format!("x{i}")));
    cols.extend((1..=4).map(|i| format!("u{i}")));
    for ch in ["phi", "theta", "psi", "z", "x", "y"] {
        cols.push(format!("{ch}_d"));
        cols.push(format!("{ch}_d_dot"));
        cols.push(format!("{ch}_d_ddot"));
    }
    cols.extend((1..=8).map(|i| format!("e{i}")));
    cols.extend(["V_phi", "V_theta", "V_psi", "V_z", "fdx", "fdy", "fdz"].map(String::from));
    cols
}

const N_COLS: usize = 1 + 12 + 4 + 18 + 8 + 4 + 3;

fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_else(|| "none".into())
}

fn write_meta<W: Write>(w: &mut W, m: &TraceMeta) -> std::io::Result<()> {
    writeln!(w, "# {MAGIC}")?;
    writeln!(w, "# scenario_hash={}", m.scenario_hash)?;
    writeln!(w, "# controller={}", m.controller)?;
    writeln!(w, "# h={}", fmt_f64(m.h))?;
    writeln!(w, "# horizon={}", fmt_f64(m.horizon))?;
    writeln!(
        w,
        "# singularity_tolerance={}",
        fmt_f64(m.singularity_tolerance)
    )?;
    writeln!(w, "# disturbance_onset={}", fmt_opt(m.disturbance_onset))?;
    let gains = m.gains.map_or_else(
        || "none".to_string(),
        |g| g.as_array().map(fmt_f64).join(","),
    );
    writeln!(w, "# gains={gains}")?;
    let status = match m.status {
        RunStatus::Completed => "completed".to_string(),
        RunStatus::ThrustSingularity { t, margin } => {
            format!("thrust_singularity,{},{}", fmt_f64(t), fmt_f64(margin))
        }
        RunStatus::NumericalBlowup { t, index, value } => {
            format!("numerical_blowup,{},{index},{}", fmt_f64(t), fmt_f64(value))
        }
    };
    writeln!(w, "# status={status}")
}

fn row_fields(r: &TraceRow) -> Vec<String> {
    let mut f: Vec<String> = Vec::with_capacity(N_COLS);
    f.push(fmt_f64(r.t));
    f.extend(r.state.0.iter().map(|v| fmt_f64(*v)));
    f.extend(r.input.to_array().map(fmt_f64));
    let refs = r.reference;
    for c in refs.channels.as_array().into_iter().chain([refs.x, refs.y]) {
        f.extend([c.value, c.rate, c.accel].map(fmt_f64));
    }
    match r.errors {
        Some(e) => f.extend(e.0.map(fmt_f64)),
        None => f.extend(std::iter::repeat_n(String::new(), 8)),
    }
    match r.lyapunov {
        Some(l) => f.extend(l.map(|v| fmt_f64(v.v))),
        None => f.extend(std::iter::repeat_n(String::new(), 4)),
    }
    f.extend(r.disturbance.iter().map(|v| fmt_f64(*v)));
    f
}

pub fn write_trace<W: Write>(trace: &SimTrace, mut out: W) -> Result<()> {
    write_meta(&mut out, &trace.meta)?;
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| SimError::Io(e.to_string());
    w.write_record(header()).map_err(io)?;
    for r in &trace.rows {
        w.write_record(row_fields(r)).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace_file(trace: &SimTrace, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path)
        .map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
    write_trace(trace, std::io::BufWriter::new(f))
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|e| SimError::Parse(format!("{what}: `{s}`: {e}")))
}

fn parse_opt(s: &str, what: &str) -> Result<Option<f64>> {
    match s.trim() {
        "none" => Ok(None),
        v => parse_f64(v, what).map(Some),
    }
}

fn parse_status(s: &str) -> Result<RunStatus> {
    let parts: Vec<&str> = s.split(',').collect();
    match parts[..] {
        ["completed"] => Ok(RunStatus::Completed),
        ["thrust_singularity", t, margin] => Ok(RunStatus::ThrustSingularity {
            t: parse_f64(t, "status t")?,
            margin: parse_f64(margin, "status margin")?,
        }),
        ["numerical_blowup", t, index, value] => Ok(RunStatus::NumericalBlowup {
            t: parse_f64(t, "status t")?,
            index: index
                .parse()
                .map_err(|e| SimError::Parse(format!("status index: {e}")))?,
            value: parse_f64(value, "status value")?,
        }),
        _ => Err(SimError::Parse(format!("unknown status `{s}`"))),
    }
}

fn parse_meta(lines: &[String]) -> Result<TraceMeta> {
    if lines.first().map(|l| l.as_str()) != Some(MAGIC) {
        return Err(SimError::Parse("missing trace signature line".into()));
    }
    let get = |key: &str| -> Result<&str> {
        lines
            .iter()
            .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
            .ok_or_else(|| SimError::Parse(format!("missing metadata `{key}`")))
    };
    let gains = match get("gains")? {
        "none" => None,
        list => {
            let v: Vec<f64> = list
                .split(',')
                .map(|x| parse_f64(x, "gains"))
                .collect::<Result<_>>()?;
            let arr: [f64; 8] = v
                .try_into()
                .map_err(|_| SimError::Parse("gains needs 8 values".into()))?;
            Some(Gains::new(arr)?)
        }
    };
    Ok(TraceMeta {
        scenario_hash: get("scenario_hash")?.to_string(),
        controller: get("controller")?.parse()?,
        h: parse_f64(get("h")?, "h")?,
        horizon: parse_f64(get("horizon")?, "horizon")?,
        singularity_tolerance: parse_f64(get("singularity_tolerance")?, "singularity_tolerance")?,
        disturbance_onset: parse_opt(get("disturbance_onset")?, "disturbance_onset")?,
        gains,
        status: parse_status(get("status")?)?,
    })
}

fn parse_row(rec: &csv::StringRecord, line: usize, gains: Option<&Gains>) -> Result<TraceRow> {
    if rec.len() != N_COLS {
        return Err(SimError::Parse(format!(
            "row {line}: expected {N_COLS} columns, got {}",
            rec.len()
        )));
    }
    let num = |i: usize| parse_f64(&rec[i], &format!("row {line} column {i}"));
    let vals = (0..N_COLS)
        .map(|i| {
            if rec[i].is_empty() {
                Ok(None)
            } else {
                num(i).map(Some)
            }
        })
        .collect::<Result<Vec<Option<f64>>>>()?;
    let req = |i: usize| {
        vals[i].ok_or_else(|| SimError::Parse(format!("row {line}: column {i} is empty")))
    };

    let t = req(0)?;
    let mut state = [0.0; 12];
    for (k, v) in state.iter_mut().enumerate() {
        *v = req(1 + k)?;
    }
    let input = ControlInput::new(req(13)?, req(14)?, req(15)?, req(16)?);
    let chan = |k: usize| -> Result<ChannelReference> {
        let b = 17 + 3 * k;
        Ok(ChannelReference::new(req(b)?, req(b + 1)?, req(b + 2)?))
    };
    let reference = FullReference {
        channels: ChannelRefs {
            phi: chan(0)?,
            theta: chan(1)?,
            psi: chan(2)?,
            z: chan(3)?,
        },
        x: chan(4)?,
        y: chan(5)?,
    };
    let errors = if vals[35..43].iter().all(Option::is_some) {
        Some(BacksteppingErrors(std::array::from_fn(|k| {
            vals[35 + k].unwrap_or_default()
        })))
    } else {
        None
    };
    let lyapunov = match (errors, gains) {
        (Some(e), Some(g)) if vals[43..47].iter().all(Option::is_some) => {
            let mut l = lyapunov_values(&e, g);
            for (k, lv) in l.iter_mut().enumerate() {
                lv.v = req(43 + k)?;
            }
            Some(l)
        }
        _ => None,
    };
    Ok(TraceRow {
        t,
        state: State12::from_array(state),
        input,
        reference,
        errors,
        lyapunov,
        disturbance: Vector3::new(req(47)?, req(48)?, req(49)?),
    })
}

pub fn read_trace<R: Read>(input: R) -> Result<SimTrace> {
    let mut reader = BufReader::new(input);
    let mut meta_lines = Vec::new();
    let header_line = loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 {
            return Err(SimError::Parse("trace has no header line".into()));
        }
        match line.trim_end().strip_prefix('#') {
            Some(m) => meta_lines.push(m.trim().to_string()),
            None => break line,
        }
    };
    let meta = parse_meta(&meta_lines)?;
    let header_fields: Vec<&str> = header_line.trim_end().split(',').collect();
    if header_fields != header() {
        return Err(SimError::Parse("unexpected trace header".into()));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(reader);
    let rows = rdr
        .records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec.map_err(|e| SimError::Parse(e.to_string()))?;
            parse_row(&rec, i + 1, meta.gains.as_ref())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SimTrace { meta, rows })
}

pub fn read_trace_file(path: &Path) -> Result<SimTrace> {
    let f =
        std::fs::File::open(path).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
    read_trace(f)
}
