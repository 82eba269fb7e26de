//! Tracking metrics, Lyapunov checks and side-by-side comparison of runs.
//!
//! Tracking errors are `reference − actual`. Settling after a disturbance
//! is measured around the error's final value (mean over the last 10% of
//! the trace) with a band half-width of `max(pre-onset RMS error, 0.01)`.

use std::fmt;

use crate::backstepping::{thrust_margin, Gains, SUBSYSTEMS};
use crate::error::{Result, SimError};
use crate::simulation::{run_scenario, ControllerKind, ScenarioConfig, SimTrace, TraceRow};

/// Smallest settling band half-width (m or rad).
pub const SETTLING_FLOOR: f64 = 0.01;
/// Fraction of the trace treated as steady state.
pub const STEADY_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    X,
    Y,
    Z,
    Phi,
    Theta,
    Psi,
    /// Euclidean norm of the position error.
    Position,
}

impl Channel {
    pub const ALL: [Channel; 7] = [
        Channel::X,
        Channel::Y,
        Channel::Z,
        Channel::Phi,
        Channel::Theta,
        Channel::Psi,
        Channel::Position,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Channel::X => "x",
            Channel::Y => "y",
            Channel::Z => "z",
            Channel::Phi => "phi",
            Channel::Theta => "theta",
            Channel::Psi => "psi",
            Channel::Position => "position",
        }
    }

    pub fn error(&self, row: &TraceRow) -> f64 {
        let r = &row.reference;
        let s = &row.state;
        match self {
            Channel::X => r.x.value - s.x(),
            Channel::Y => r.y.value - s.y(),
            Channel::Z => r.channels.z.value - s.z(),
            Channel::Phi => r.channels.phi.value - s.phi(),
            Channel::Theta => r.channels.theta.value - s.theta(),
            Channel::Psi => r.channels.psi.value - s.psi(),
            Channel::Position => {
                let [x, y, z] = [Channel::X, Channel::Y, Channel::Z].map(|c| c.error(row));
                (x * x + y * y + z * z).sqrt()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Settling {
    /// Seconds after the reference instant (onset, or `t = 0`).
    Settled(f64),
    NotSettled,
}

impl Settling {
    pub fn time(&self) -> Option<f64> {
        match self {
            Settling::Settled(t) => Some(*t),
            Settling::NotSettled => None,
        }
    }

    /// Whether `self` is strictly faster than `other`; never settling is
    /// slower than any settling time.
    pub fn faster_than(&self, other: &Settling) -> bool {
        match (self, other) {
            (Settling::Settled(a), Settling::Settled(b)) => a < b,
            (Settling::Settled(_), Settling::NotSettled) => true,
            _ => false,
        }
    }
}

impl fmt::Display for Settling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Settling::Settled(t) => write!(f, "{t:.4}"),
            Settling::NotSettled => f.write_str("not settled"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelMetrics {
    pub channel: Channel,
    pub rmse: f64,
    /// RMSE over `t >= onset`.
    pub post_rmse: Option<f64>,
    /// Largest |error| over `t >= onset`.
    pub peak_after_onset: Option<f64>,
    pub settling: Settling,
    /// Band half-width used for `settling`.
    pub band: f64,
    /// RMS error over the final 10% of the trace.
    pub steady_state: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub controller: ControllerKind,
    pub onset: Option<f64>,
    pub channels: Vec<ChannelMetrics>,
    /// `∫u_i² dt` for `u1..u4`, trapezoid rule.
    pub effort: [f64; 4],
}

impl Metrics {
    pub fn channel(&self, c: Channel) -> &ChannelMetrics {
        self.channels
            .iter()
            .find(|m| m.channel == c)
            .expect("every channel is measured")
    }
}

fn rms(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v * v, n + 1));
    (n > 0).then(|| (sum / n as f64).sqrt())
}

/// First instant from which `|e − e_final|` stays within `band` until the
/// end of the series, measured from `times[0]`.
pub fn settling_time(times: &[f64], errors: &[f64], e_final: f64, band: f64) -> Settling {
    match errors.iter().rposition(|e| (e - e_final).abs() > band) {
        None => Settling::Settled(0.0),
        Some(k) if k + 1 == errors.len() => Settling::NotSettled,
        Some(k) => Settling::Settled(times[k + 1] - times[0]),
    }
}

fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

pub fn compute_metrics(trace: &SimTrace, disturbance_onset: Option<f64>) -> Result<Metrics> {
    let rows = &trace.rows;
    if rows.is_empty() {
        return Err(SimError::EmptyTrace);
    }
    let times: Vec<f64> = rows.iter().map(|r| r.t).collect();
    let (t_first, t_last) = (times[0], times[times.len() - 1]);
    let start = disturbance_onset.unwrap_or(t_first);
    let first_after = times.partition_point(|&t| t < start);
    let steady_from = times.partition_point(|&t| t < t_last - STEADY_FRACTION * (t_last - t_first));

    let channels = Channel::ALL
        .iter()
        .map(|&channel| {
            let e: Vec<f64> = rows.iter().map(|r| channel.error(r)).collect();
            let after = &e[first_after..];
            let steady = &e[steady_from..];
            let e_final = steady.iter().sum::<f64>() / steady.len() as f64;
            let band = rms(e[..first_after].iter().copied())
                .unwrap_or(0.0)
                .max(SETTLING_FLOOR);
            let settling = if after.is_empty() {
                Settling::NotSettled
            } else {
                settling_time(&times[first_after..], after, e_final, band)
            };
            let onset = disturbance_onset.filter(|_| !after.is_empty());
            ChannelMetrics {
                channel,
                rmse: rms(e.iter().copied()).unwrap_or(0.0),
                post_rmse: onset.and_then(|_| rms(after.iter().copied())),
                peak_after_onset: onset.map(|_| after.iter().fold(0.0, |m: f64, v| m.max(v.abs()))),
                settling,
                band,
                steady_state: rms(steady.iter().copied()).unwrap_or(0.0),
            }
        })
        .collect();

    let effort = std::array::from_fn(|i| {
        let sq: Vec<f64> = rows.iter().map(|r| r.input.to_array()[i].powi(2)).collect();
        trapezoid(&times, &sq)
    });

    Ok(Metrics {
        controller: trace.meta.controller,
        onset: disturbance_onset,
        channels,
        effort,
    })
}

/// Default tolerance on `V_{k+1} − V_k`.
pub const MONOTONICITY_TOLERANCE: f64 = 1e-9;
/// Absolute floor on `|V̇|` below which mismatches are measured absolutely;
/// `1e-9 / 1e-3`, so a relative bound of `1e-3` implies an absolute floor of `1e-9`.
pub const MISMATCH_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct SubsystemReport {
    pub name: &'static str,
    /// `max(V_{k+1} − V_k)` over undisturbed consecutive rows (0 if none rise).
    pub max_monotonicity_violation: f64,
    /// Row indices `k` whose successor exceeds `V_k` by more than the tolerance.
    pub violation_steps: Vec<usize>,
    /// `max |dV/dt_fd − V̇| / max(|V̇|, MISMATCH_FLOOR)` over interior points.
    pub max_relative_mismatch: f64,
    /// Time of the worst mismatch.
    pub worst_mismatch_t: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovReport {
    pub subsystems: Vec<SubsystemReport>,
    /// Spans `(t_start, t_end)` where `|cos(phi)cos(theta)|` was below ten
    /// times the singularity tolerance.
    pub low_margin_ranges: Vec<(f64, f64)>,
    /// Number of interior points where the derivative was compared.
    pub checked_points: usize,
}

impl LyapunovReport {
    pub fn passes(&self, relative_tolerance: f64, monotonicity_tolerance: f64) -> bool {
        self.subsystems.iter().all(|s| {
            s.max_relative_mismatch <= relative_tolerance
                && s.max_monotonicity_violation <= monotonicity_tolerance
        })
    }
}

fn undisturbed(row: &TraceRow) -> bool {
    row.disturbance.iter().all(|f| *f == 0.0)
}

/// Checks the Lyapunov decrease of every subsystem along a backstepping
/// trace. The stored `V` columns are differenced; the analytic derivative is
/// recomputed from the stored errors with `gains`.
pub fn verify_lyapunov(trace: &SimTrace, gains: &Gains) -> Result<LyapunovReport> {
    if trace.meta.controller != ControllerKind::Backstepping {
        return Err(SimError::WrongController(trace.meta.controller.to_string()));
    }
    let rows = &trace.rows;
    if rows.is_empty() {
        return Err(SimError::EmptyTrace);
    }
    let mut columns = Vec::with_capacity(rows.len());
    for r in rows {
        match (r.errors, r.lyapunov) {
            (Some(e), Some(v)) => columns.push((e, v)),
            _ => {
                return Err(SimError::Parse(format!(
                    "row at t = {} lacks error columns",
                    r.t
                )))
            }
        }
    }
    let c = gains.as_array();
    let calm: Vec<bool> = rows.iter().map(undisturbed).collect();

    let mut checked = 0;
    let mut subsystems = Vec::with_capacity(4);
    for (k, name) in SUBSYSTEMS.iter().enumerate() {
        let v = |i: usize| columns[i].1[k].v;
        let analytic = |i: usize| {
            let e = columns[i].0 .0;
            -c[2 * k] * e[2 * k].powi(2) - c[2 * k + 1] * e[2 * k + 1].powi(2)
        };

        let mut max_violation: f64 = 0.0;
        let mut violation_steps = Vec::new();
        for i in 0..rows.len().saturating_sub(1) {
            if !(calm[i] && calm[i + 1]) {
                continue;
            }
            let rise = v(i + 1) - v(i);
            max_violation = max_violation.max(rise);
            if rise > MONOTONICITY_TOLERANCE {
                violation_steps.push(i);
            }
        }

        let mut worst = (0.0, None);
        let mut points = 0;
        for i in 1..rows.len().saturating_sub(1) {
            if !(calm[i - 1] && calm[i] && calm[i + 1]) {
                continue;
            }
            let fd = (v(i + 1) - v(i - 1)) / (rows[i + 1].t - rows[i - 1].t);
            let an = analytic(i);
            let r = (fd - an).abs() / an.abs().max(MISMATCH_FLOOR);
            points += 1;
            if r > worst.0 || worst.1.is_none() {
                worst = (r, Some(rows[i].t));
            }
        }
        checked = points;
        subsystems.push(SubsystemReport {
            name,
            max_monotonicity_violation: max_violation,
            violation_steps,
            max_relative_mismatch: worst.0,
            worst_mismatch_t: worst.1,
        });
    }

    let threshold = 10.0 * trace.meta.singularity_tolerance;
    let mut low_margin_ranges = Vec::new();
    let mut open: Option<(f64, f64)> = None;
    for r in rows {
        if thrust_margin(&r.state) < threshold {
            open = Some(open.map_or((r.t, r.t), |(a, _)| (a, r.t)));
        } else if let Some(span) = open.take() {
            low_margin_ranges.push(span);
        }
    }
    low_margin_ranges.extend(open);

    Ok(LyapunovReport {
        subsystems,
        low_margin_ranges,
        checked_points: checked,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    A,
    B,
    Tie,
}

impl Verdict {
    fn lower_is_better(a: f64, b: f64) -> Self {
        if a < b {
            Verdict::A
        } else if b < a {
            Verdict::B
        } else {
            Verdict::Tie
        }
    }

    fn settling(a: &Settling, b: &Settling) -> Self {
        if a.faster_than(b) {
            Verdict::A
        } else if b.faster_than(a) {
            Verdict::B
        } else {
            Verdict::Tie
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub metric: String,
    pub a: String,
    pub b: String,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub label_a: String,
    pub label_b: String,
    pub trace_a: SimTrace,
    pub trace_b: SimTrace,
    pub metrics_a: Metrics,
    pub metrics_b: Metrics,
    pub rows: Vec<ComparisonRow>,
}

fn shared_fields_match(a: &ScenarioConfig, b: &ScenarioConfig) -> Result<()> {
    let checks: [(&'static str, bool); 5] = [
        ("plant", a.plant == b.plant),
        ("trajectory", a.trajectory == b.trajectory),
        ("disturbance", a.disturbance == b.disturbance),
        ("h", a.h == b.h),
        ("horizon", a.horizon == b.horizon),
    ];
    match checks.iter().find(|(_, same)| !same) {
        Some((field, _)) => Err(SimError::MismatchedScenario(field)),
        None => Ok(()),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.6}"))
}

fn table(ma: &Metrics, mb: &Metrics) -> Vec<ComparisonRow> {
    let mut rows = Vec::new();
    let mut push = |metric: String, a: String, b: String, verdict| {
        rows.push(ComparisonRow {
            metric,
            a,
            b,
            verdict,
        })
    };
    for (ca, cb) in ma.channels.iter().zip(&mb.channels) {
        let n = ca.channel.name();
        push(
            format!("{n}.rmse"),
            format!("{:.6}", ca.rmse),
            format!("{:.6}", cb.rmse),
            Verdict::lower_is_better(ca.rmse, cb.rmse),
        );
        if let (Some(pa), Some(pb)) = (ca.post_rmse, cb.post_rmse) {
            push(
                format!("{n}.post_rmse"),
                fmt_opt(ca.post_rmse),
                fmt_opt(cb.post_rmse),
                Verdict::lower_is_better(pa, pb),
            );
        }
        if let (Some(pa), Some(pb)) = (ca.peak_after_onset, cb.peak_after_onset) {
            push(
                format!("{n}.peak"),
                fmt_opt(ca.peak_after_onset),
                fmt_opt(cb.peak_after_onset),
                Verdict::lower_is_better(pa, pb),
            );
        }
        push(
            format!("{n}.settling"),
            ca.settling.to_string(),
            cb.settling.to_string(),
            Verdict::settling(&ca.settling, &cb.settling),
        );
        push(
            format!("{n}.steady_state"),
            format!("{:.6}", ca.steady_state),
            format!("{:.6}", cb.steady_state),
            Verdict::lower_is_better(ca.steady_state, cb.steady_state),
        );
    }
    for i in 0..4 {
        push(
            format!("effort.u{}", i + 1),
            format!("{:.6}", ma.effort[i]),
            format!("{:.6}", mb.effort[i]),
            Verdict::lower_is_better(ma.effort[i], mb.effort[i]),
        );
    }
    rows
}

/// Runs both scenarios concurrently and tabulates their metrics.
pub fn compare(cfg_a: &ScenarioConfig, cfg_b: &ScenarioConfig) -> Result<Comparison> {
    shared_fields_match(cfg_a, cfg_b)?;
    let (ra, rb) = std::thread::scope(|s| {
        let ha = s.spawn(|| run_scenario(cfg_a));
        let rb = run_scenario(cfg_b);
        (ha.join().expect("simulation thread panicked"), rb)
    });
    let (trace_a, trace_b) = (ra?, rb?);
    let metrics_a = compute_metrics(&trace_a, trace_a.meta.disturbance_onset)?;
    let metrics_b = compute_metrics(&trace_b, trace_b.meta.disturbance_onset)?;
    let mut label_a = cfg_a.controller.to_string();
    let mut label_b = cfg_b.controller.to_string();
    if label_a == label_b {
        label_a.push_str(" (a)");
        label_b.push_str(" (b)");
    }
    Ok(Comparison {
        rows: table(&metrics_a, &metrics_b),
        label_a,
        label_b,
        trace_a,
        trace_b,
        metrics_a,
        metrics_b,
    })
}

impl Comparison {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| SimError::Io(e.to_string());
        w.write_record(["metric", &self.label_a, &self.label_b, "better"])
            .map_err(io)?;
        for r in &self.rows {
            w.write_record([&r.metric, &r.a, &r.b, self.verdict_label(r.verdict)])
                .map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }

    fn verdict_label(&self, v: Verdict) -> &str {
        match v {
            Verdict::A => &self.label_a,
            Verdict::B => &self.label_b,
            Verdict::Tie => "tie",
        }
    }
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let wa = self.label_a.len().max(14);
        let wb = self.label_b.len().max(14);
        writeln!(
            f,
            "{:<22} {:>wa$} {:>wb$}  better",
            "metric", self.label_a, self.label_b
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<22} {:>wa$} {:>wb$}  {}",
                r.metric,
                r.a,
                r.b,
                self.verdict_label(r.verdict)
            )?;
        }
        Ok(())
    }
}
