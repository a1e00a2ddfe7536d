//! Deterministic serialization of results: JSON with sorted keys, flat CSV,
//! the benchmark tables, and an indented text form.

use serde::Serialize;
use serde_json::{Map, Number, Value};

use crate::bench::PremiumRow;

pub const SIGNIFICANT_DIGITS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Csv,
    Pretty,
}

/// Column layout of a premium table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum TableLayout {
    /// Maturity count and strike grid per row.
    Mesh,
    /// Put strike per row.
    Moneyness,
}

/// `x` rounded to 12 significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x).parse().unwrap_or(x)
}

fn normalize(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = round_sig(n.as_f64().unwrap_or(0.0));
            Number::from_f64(if x == 0.0 { 0.0 } else { x }).map_or(Value::Null, Value::Number)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(normalize).collect()),
        // the default map is ordered by key
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, normalize(v))).collect::<Map<_, _>>()),
        other => other,
    }
}

/// The value as JSON with sorted keys and rounded floats.
pub fn to_value<T: Serialize>(result: &T) -> Value {
    normalize(serde_json::to_value(result).expect("results serialize"))
}

fn scalar_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(o) => o.iter().for_each(|(k, v)| flatten(&key(k), v, out)),
        Value::Array(a) => a.iter().enumerate().for_each(|(i, v)| flatten(&key(&i.to_string()), v, out)),
        other => out.push((prefix.to_string(), scalar_text(other))),
    }
}

fn write_csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

/// Any result in the requested format. CSV flattens nested fields into
/// dotted `key,value` pairs.
pub fn emit_report<T: Serialize>(result: &T, format: Format) -> String {
    let v = to_value(result);
    match format {
        Format::Json => {
            let mut s = serde_json::to_string(&v).expect("values serialize");
            s.push('\n');
            s
        }
        Format::Pretty => {
            let mut s = serde_json::to_string_pretty(&v).expect("values serialize");
            s.push('\n');
            s
        }
        Format::Csv => {
            let mut pairs = Vec::new();
            flatten("", &v, &mut pairs);
            write_csv(&["key", "value"], pairs.into_iter().map(|(k, v)| vec![k, v]))
        }
    }
}

fn num(x: f64) -> String {
    to_value(&x).to_string()
}

pub fn table_header(layout: TableLayout) -> &'static [&'static str] {
    match layout {
        TableLayout::Mesh => &["N", "lowest_strike", "highest_strike", "strike_interval", "phi", "chi", "zeta", "premium_pct"],
        TableLayout::Moneyness => &["K", "phi", "chi", "zeta", "premium_pct"],
    }
}

fn table_cells(r: &PremiumRow, layout: TableLayout) -> Vec<String> {
    let tail = [num(r.phi), num(r.chi), num(r.zeta), num(r.premium_pct)];
    let mut cells = match layout {
        TableLayout::Mesh => vec![r.maturities.to_string(), num(r.lowest), num(r.highest), r.interval.map_or("-".into(), num)],
        TableLayout::Moneyness => vec![num(r.put_strike)],
    };
    cells.extend(tail);
    cells
}

/// Premium rows as CSV in the table's column order.
pub fn premium_csv(rows: &[PremiumRow], layout: TableLayout) -> String {
    write_csv(table_header(layout), rows.iter().map(|r| table_cells(r, layout)))
}

/// Premium rows as an aligned text table, values to two decimals.
pub fn premium_text(rows: &[PremiumRow], layout: TableLayout) -> String {
    let header = table_header(layout);
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            table_cells(r, layout)
                .into_iter()
                .map(|c| c.parse::<f64>().map_or(c.clone(), |x| if x.fract() == 0.0 { format!("{x}") } else { format!("{x:.2}") }))
                .collect()
        })
        .collect();
    let widths: Vec<usize> =
        (0..header.len()).map(|i| body.iter().map(|r| r[i].len()).chain([header[i].len()]).max().unwrap_or(0)).collect();
    let line = |cells: Vec<String>| cells.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect::<Vec<_>>().join("  ");
    let mut out = line(header.iter().map(|s| s.to_string()).collect());
    out.push('\n');
    for r in body {
        out.push_str(&line(r));
        out.push('\n');
    }
    out
}
