//! CSV and text writers for references, logs, plans and reports.

use std::fmt::Write;

use payload_core::eval::{EstimationMetrics, MetricsReport, SweepCell};
use payload_core::reference::DenseReference;
use payload_core::sim::RunLog;

/// `v` with 9 significant digits: plain notation for exponents in
/// `[-4, 9)`, scientific otherwise, trailing zeros removed.
pub fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return if v.is_nan() { "nan".into() } else if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific notation has an exponent");
    let exp: i32 = exp.parse().expect("exponent is an integer");
    if (-4..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa))
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

fn push_row(out: &mut String, values: impl IntoIterator<Item = f64>) {
    let row: Vec<String> = values.into_iter().map(fmt_num).collect();
    out.push_str(&row.join(","));
    out.push('\n');
}

const STATE_NAMES: [&str; 13] = ["x", "y", "z", "th_l", "phi_l", "xd", "yd", "zd", "thd_l", "phid_l", "th", "phi", "F"];
const MEAS_NAMES: [&str; 5] = ["x", "y", "z", "th", "phi"];
const ANGLE_NAMES: [&str; 4] = ["th_l", "phi_l", "thd_l", "phid_l"];

pub fn log_header() -> String {
    let mut cols: Vec<String> = vec!["t".into()];
    cols.extend(STATE_NAMES.iter().map(|s| s.to_string()));
    cols.extend(["sl_x", "sl_y", "sl_z"].iter().map(|s| s.to_string()));
    cols.extend(STATE_NAMES.iter().map(|s| format!("est_{s}")));
    cols.extend(["u_th", "u_phi", "u_F"].iter().map(|s| s.to_string()));
    cols.extend(MEAS_NAMES.iter().map(|s| format!("meas_{s}")));
    cols.join(",")
}

pub fn log_csv(log: &RunLog) -> String {
    let mut out = log_header();
    out.push('\n');
    for r in &log.records {
        let values = std::iter::once(r.t)
            .chain(r.state.0.iter().copied())
            .chain(r.payload.iter().copied())
            .chain(r.estimate.0.iter().copied())
            .chain(r.input.0.iter().copied())
            .chain(r.measurement.iter().copied());
        push_row(&mut out, values);
    }
    out
}

pub fn dense_csv(plan: &DenseReference) -> String {
    let mut out = String::from("t,x,y,z,u_th,u_phi,u_F\n");
    for (k, y) in plan.outputs.iter().enumerate() {
        push_row(&mut out, std::iter::once(plan.time(k)).chain(y.iter().copied()));
    }
    out
}

pub fn plans_csv(log: &RunLog) -> String {
    let mut out = String::from("issued,t,x,y,z,u_th,u_phi,u_F\n");
    for rec in &log.plans {
        for (k, y) in rec.plan.outputs.iter().enumerate() {
            push_row(&mut out, [rec.issued, rec.plan.time(k)].into_iter().chain(y.iter().copied()));
        }
    }
    out
}

fn metric_columns() -> Vec<String> {
    let mut cols: Vec<String> = ["rmse_ol", "rmse_exec", "delta_rmse"].iter().map(|s| s.to_string()).collect();
    for kind in ["est_rmse", "est_std", "est_bias"] {
        cols.extend(ANGLE_NAMES.iter().map(|a| format!("{kind}_{a}")));
    }
    cols
}

fn metric_values(r: &MetricsReport) -> Vec<String> {
    let e: &EstimationMetrics = &r.estimation;
    let mut v = vec![fmt_num(r.rmse_ol), fmt_num(r.rmse_exec), r.delta_rmse.map(fmt_num).unwrap_or_default()];
    for m in [&e.rmse, &e.std, &e.bias] {
        v.extend(m.iter().map(|x| fmt_num(*x)));
    }
    v
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn report_csv(r: &MetricsReport) -> String {
    let mut out = format!("scenario,{}\n", metric_columns().join(","));
    let _ = writeln!(out, "{},{}", quote(&r.scenario), metric_values(r).join(","));
    out
}

/// `key = value` summary; an undefined relative degradation is left empty.
pub fn report_text(r: &MetricsReport) -> String {
    let mut out = format!("scenario = {}\n", r.scenario);
    for (k, v) in metric_columns().iter().zip(metric_values(r)) {
        let _ = writeln!(out, "{k} = {v}");
    }
    out
}

pub fn sweep_header() -> String {
    format!("m_l,l,dt,status,log,{}", metric_columns().join(","))
}

/// Aggregate row of one sweep cell; failed cells carry the error text and
/// empty metric fields.
pub fn sweep_row(cell: &SweepCell, result: Result<&MetricsReport, String>, log_name: &str) -> String {
    let prefix = format!("{},{},{}", fmt_num(cell.m_l), fmt_num(cell.l), fmt_num(cell.dt));
    match result {
        Ok(r) => format!("{prefix},ok,{log_name},{}", metric_values(r).join(",")),
        Err(e) => format!("{prefix},{},,{}", quote(&format!("error: {e}")), ",".repeat(metric_columns().len() - 1)),
    }
}

/// Static SVG of the horizontal payload path against the waypoints.
pub fn xy_plot_svg(log: &RunLog, waypoints: &[nalgebra::Vector3<f64>]) -> String {
    let (w, h, pad) = (600.0, 600.0, 30.0);
    let pts: Vec<(f64, f64)> = log.records.iter().map(|r| (r.payload[0], r.payload[1])).chain(waypoints.iter().map(|p| (p[0], p[1]))).collect();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in &pts {
        x0 = x0.min(*x);
        x1 = x1.max(*x);
        y0 = y0.min(*y);
        y1 = y1.max(*y);
    }
    let span = (x1 - x0).max(y1 - y0).max(1e-3);
    let map = |x: f64, y: f64| (pad + (x - x0) / span * (w - 2.0 * pad), h - pad - (y - y0) / span * (h - 2.0 * pad));
    let mut svg = format!("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\">\n");
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\" points=\"");
    let path: Vec<String> = log
        .records
        .iter()
        .map(|r| {
            let (px, py) = map(r.payload[0], r.payload[1]);
            format!("{px:.2},{py:.2}")
        })
        .collect();
    svg.push_str(&path.join(" "));
    svg.push_str("\"/>\n");
    for p in waypoints {
        let (px, py) = map(p[0], p[1]);
        let _ = writeln!(svg, "<circle cx=\"{px:.2}\" cy=\"{py:.2}\" r=\"4\" fill=\"crimson\"/>");
    }
    svg.push_str("</svg>\n");
    svg
}
