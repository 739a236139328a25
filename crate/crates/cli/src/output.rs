//! Serialization of results to JSON, CSV and human-readable tables.
//!
//! Every number written to a machine-readable stream uses 17 significant
//! digits in scientific notation, which round-trips an `f64` exactly and is
//! independent of locale and platform.

use serde_json::{json, Map, Number, Value};
use timebin_amp::analysis::{Quantity, SweepRow};
use timebin_amp::protocol::{PatternOutcome, ProtocolResult};
use timebin_amp::{DetectorModel, MixedState};

pub const SCHEMA_VERSION: &str = "1";

pub const SWEEP_HEADER: &str = "eta,t,p1,p2,p_total,eta_prime,g,source";

/// Fixed-width scientific rendering: `6.2500000000000000e-2`.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

pub fn num(x: f64) -> Value {
    if !x.is_finite() {
        return Value::Null;
    }
    let n: Number = fmt_num(x)
        .parse()
        .expect("scientific notation is valid JSON");
    Value::Number(n)
}

fn opt_num(x: Option<f64>) -> Value {
    x.map_or(Value::Null, num)
}

pub fn detector_label(model: DetectorModel) -> &'static str {
    match model {
        DetectorModel::NumberResolving => "number-resolving",
        DetectorModel::Threshold => "threshold",
    }
}

/// Wraps a payload in the common record envelope.
pub fn record(command: &str, config: Value, result: Value, meta: bool) -> Value {
    let mut map = Map::new();
    map.insert("schema_version".into(), SCHEMA_VERSION.into());
    map.insert("command".into(), command.into());
    map.insert("config".into(), config);
    map.insert("result".into(), result);
    if meta {
        map.insert(
            "meta".into(),
            json!({ "tool": env!("CARGO_PKG_NAME"), "version": env!("CARGO_PKG_VERSION") }),
        );
    }
    Value::Object(map)
}

pub fn to_json_text(value: &Value) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("JSON values always serialize");
    text.push('\n');
    text
}

fn mixed_state(state: &MixedState) -> Value {
    Value::Array(
        state
            .branches()
            .iter()
            .map(|(weight, branch)| {
                let terms: Vec<Value> = branch
                    .terms()
                    .map(|(basis, amp)| {
                        json!({ "basis": basis.to_string(), "re": num(amp.re), "im": num(amp.im) })
                    })
                    .collect();
                json!({ "weight": num(*weight), "terms": terms })
            })
            .collect(),
    )
}

pub fn run_config(result: &ProtocolResult) -> Value {
    let c = &result.config;
    json!({
        "alpha": num(c.alpha),
        "beta": num(c.beta),
        "eta": num(c.eta),
        "t": num(c.t),
        "detector": detector_label(c.detector_model),
    })
}

fn pattern_json(o: &PatternOutcome) -> Value {
    json!({
        "pattern": o.pattern.to_string(),
        "prob_entangled": num(o.prob_entangled),
        "prob_vacuum": num(o.prob_vacuum),
        "correction": o.correction.to_string(),
        "fidelity": opt_num(o.fidelity),
    })
}

pub fn run_json(result: &ProtocolResult) -> Value {
    json!({
        "p1": num(result.p1),
        "p2": num(result.p2),
        "p_total": num(result.p_total),
        "eta_out": num(result.eta_out),
        "eta_out_defined": result.eta_out_defined,
        "g": opt_num(result.g),
        "output_fidelity": opt_num(result.output_fidelity),
        "per_pattern": result.per_pattern.iter().map(pattern_json).collect::<Vec<_>>(),
        "conditioned_output": result.conditioned_output.as_ref().map_or(Value::Null, mixed_state),
    })
}

pub fn run_csv(result: &ProtocolResult) -> String {
    let c = &result.config;
    let mut out = format!("# schema_version={SCHEMA_VERSION} command=run\n");
    out.push_str(
        "alpha,beta,eta,t,detector,p1,p2,p_total,eta_out,eta_out_defined,g,output_fidelity\n",
    );
    let fields = [
        fmt_num(c.alpha),
        fmt_num(c.beta),
        fmt_num(c.eta),
        fmt_num(c.t),
        detector_label(c.detector_model).to_string(),
        fmt_num(result.p1),
        fmt_num(result.p2),
        fmt_num(result.p_total),
        fmt_num(result.eta_out),
        result.eta_out_defined.to_string(),
        fmt_opt(result.g),
        fmt_opt(result.output_fidelity),
    ];
    out.push_str(&fields.join(","));
    out.push('\n');
    out
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = format!("# schema_version={SCHEMA_VERSION} command=sweep\n{SWEEP_HEADER}\n");
    for r in rows {
        let fields = [
            fmt_num(r.eta),
            fmt_num(r.t),
            fmt_num(r.p1),
            fmt_num(r.p2),
            fmt_num(r.p_total),
            fmt_opt(r.eta_prime),
            fmt_opt(r.g),
            r.source.label().to_string(),
        ];
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn sweep_json(rows: &[SweepRow]) -> Value {
    let rows: Vec<Value> = rows
        .iter()
        .map(|r| {
            json!({
                "eta": num(r.eta),
                "t": num(r.t),
                "p1": num(r.p1),
                "p2": num(r.p2),
                "p_total": num(r.p_total),
                "eta_prime": opt_num(r.eta_prime),
                "g": opt_num(r.g),
                "source": r.source.label(),
            })
        })
        .collect();
    json!({ "rows": rows })
}

/// Wide whitespace-separated blocks, one per quantity, with one column per η.
/// Blocks are separated by two blank lines so gnuplot can address them with `index`.
pub fn sweep_gnuplot(
    rows: &[SweepRow],
    etas: &[f64],
    ts: &[f64],
    quantities: &[Quantity],
) -> String {
    let mut out = format!("# schema_version={SCHEMA_VERSION} command=sweep layout=gnuplot\n");
    for (k, q) in quantities.iter().enumerate() {
        if k > 0 {
            out.push_str("\n\n");
        }
        out.push_str(&format!("# quantity={}\n# t", q.name()));
        for eta in etas {
            out.push_str(&format!(" eta={}", fmt_num(*eta)));
        }
        out.push('\n');
        for (i, t) in ts.iter().enumerate() {
            out.push_str(&fmt_num(*t));
            for e in 0..etas.len() {
                let value = q.of(&rows[e * ts.len() + i]);
                out.push(' ');
                out.push_str(&value.map_or_else(|| "NaN".to_string(), fmt_num));
            }
            out.push('\n');
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    Entangled,
    Vacuum,
    Both,
}

impl Branch {
    fn columns(self) -> &'static [&'static str] {
        match self {
            Branch::Entangled => &["pattern", "prob_entangled", "correction"],
            Branch::Vacuum => &["pattern", "prob_vacuum", "correction"],
            Branch::Both => &["pattern", "prob_entangled", "prob_vacuum", "correction"],
        }
    }

    fn cells(self, o: &PatternOutcome, render: fn(f64) -> String) -> Vec<String> {
        let mut cells = vec![o.pattern.to_string()];
        if self != Branch::Vacuum {
            cells.push(render(o.prob_entangled));
        }
        if self != Branch::Entangled {
            cells.push(render(o.prob_vacuum));
        }
        cells.push(o.correction.to_string());
        cells
    }
}

pub fn patterns_csv(result: &ProtocolResult, branch: Branch) -> String {
    let mut out = format!("# schema_version={SCHEMA_VERSION} command=patterns\n");
    out.push_str(&branch.columns().join(","));
    out.push('\n');
    for o in &result.per_pattern {
        out.push_str(&branch.cells(o, fmt_num).join(","));
        out.push('\n');
    }
    out
}

/// Aligned columns for terminals; numbers use the shortest exact representation.
pub fn patterns_table(result: &ProtocolResult, branch: Branch) -> String {
    let mut grid: Vec<Vec<String>> = vec![branch.columns().iter().map(|s| s.to_string()).collect()];
    grid.extend(
        result
            .per_pattern
            .iter()
            .map(|o| branch.cells(o, |x| x.to_string())),
    );
    let widths: Vec<usize> = (0..grid[0].len())
        .map(|c| grid.iter().map(|row| row[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &grid {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell:<w$}"))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

pub fn patterns_json(result: &ProtocolResult, branch: Branch) -> Value {
    let rows: Vec<Value> = result
        .per_pattern
        .iter()
        .map(|o| {
            let mut row = Map::new();
            row.insert("pattern".into(), o.pattern.to_string().into());
            if branch != Branch::Vacuum {
                row.insert("prob_entangled".into(), num(o.prob_entangled));
            }
            if branch != Branch::Entangled {
                row.insert("prob_vacuum".into(), num(o.prob_vacuum));
            }
            row.insert("correction".into(), o.correction.to_string().into());
            Value::Object(row)
        })
        .collect();
    json!({ "patterns": rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_carry_seventeen_significant_digits() {
        assert_eq!(fmt_num(0.0625), "6.2500000000000000e-2");
        assert_eq!(fmt_num(0.0), "0.0000000000000000e0");
        for x in [0.1, 1.0 / 3.0, 3.0 / 7.0, 1e-300] {
            assert_eq!(fmt_num(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn json_numbers_keep_their_text() {
        let text = serde_json::to_string(&num(0.1)).unwrap();
        assert_eq!(text, "1.0000000000000001e-1");
        assert_eq!(num(f64::NAN), Value::Null);
    }

    #[test]
    fn csv_leaves_undefined_fields_empty() {
        let rows = vec![SweepRow::closed(0.0, 0.0).unwrap()];
        let csv = sweep_csv(&rows);
        let data = csv.lines().nth(2).unwrap();
        assert!(data.ends_with(",,,closed"), "{data}");
        assert_eq!(csv.lines().nth(1), Some(SWEEP_HEADER));
    }
}
