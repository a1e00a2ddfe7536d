use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CallSurface, MarketError};

/// JSON form of a surface: either `calls[strike][maturity]` over the positive
/// strikes, or `marginals[state][maturity]` over `states` (default
/// `[0] ++ strikes`).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strikes: Option<Vec<f64>>,
    pub maturities: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calls: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marginals: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub states: Option<Vec<f64>>,
}

impl SurfaceDocument {
    pub fn into_surface(self) -> Result<CallSurface, MarketError> {
        match (self.calls, self.marginals) {
            (Some(calls), None) => {
                let s0 = self.s0.ok_or_else(|| MarketError::Malformed("missing s0".into()))?;
                let strikes = self.strikes.ok_or_else(|| MarketError::Malformed("missing strikes".into()))?;
                CallSurface::new(s0, strikes, self.maturities, calls)
            }
            (None, Some(marginals)) => {
                let states = match (self.states, self.strikes) {
                    (Some(s), _) => s,
                    (None, Some(k)) => std::iter::once(0.0).chain(k).collect(),
                    (None, None) => return Err(MarketError::Malformed("marginals need states or strikes".into())),
                };
                CallSurface::from_marginals(states, self.maturities, marginals, self.s0)
            }
            (Some(_), Some(_)) => Err(MarketError::Malformed("give either calls or marginals, not both".into())),
            (None, None) => Err(MarketError::Malformed("missing calls or marginals".into())),
        }
    }
}

impl From<&CallSurface> for SurfaceDocument {
    fn from(s: &CallSurface) -> Self {
        SurfaceDocument {
            s0: Some(s.s0()),
            strikes: Some(s.strikes().to_vec()),
            maturities: s.maturities().to_vec(),
            calls: Some(s.prices()[1..].to_vec()),
            marginals: None,
            states: None,
        }
    }
}

pub fn load_surface_json(text: &str) -> Result<CallSurface, MarketError> {
    let doc: SurfaceDocument =
        serde_json::from_str(text).map_err(|e| MarketError::Parse(format!("line {} column {}: {e}", e.line(), e.column())))?;
    doc.into_surface()
}

/// CSV layout: the header holds the maturities after a first cell that is
/// either empty or `s0=<value>`; each further row is a strike followed by its
/// call prices. A row for strike 0 may stand in for `s0=`.
pub fn load_surface_csv(text: &str) -> Result<CallSurface, MarketError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut records = rdr.records();
    let header = records
        .next()
        .ok_or_else(|| MarketError::Parse("empty CSV".into()))?
        .map_err(|e| MarketError::Parse(e.to_string()))?;
    let num = |s: &str, what: &str| s.parse::<f64>().map_err(|_| MarketError::Parse(format!("bad {what} '{s}'")));
    let mut s0 = match header.get(0).unwrap_or("") {
        c if c.starts_with("s0=") => Some(num(&c[3..], "s0")?),
        _ => None,
    };
    let maturities = header.iter().skip(1).map(|c| num(c, "maturity")).collect::<Result<Vec<_>, _>>()?;
    let mut strikes = Vec::new();
    let mut calls = Vec::new();
    for (line, rec) in records.enumerate() {
        let rec = rec.map_err(|e| MarketError::Parse(e.to_string()))?;
        if rec.iter().all(|c| c.is_empty()) {
            continue;
        }
        let k = num(rec.get(0).unwrap_or(""), "strike")?;
        let row = rec.iter().skip(1).map(|c| num(c, "price")).collect::<Result<Vec<_>, _>>()?;
        if row.len() != maturities.len() {
            return Err(MarketError::Parse(format!("row {} has {} prices, expected {}", line + 2, row.len(), maturities.len())));
        }
        if k == 0.0 {
            let v = row[0];
            if s0.is_some_and(|s| (s - v).abs() > 1e-12 * s.max(1.0)) {
                return Err(MarketError::Malformed("zero-strike row disagrees with s0".into()));
            }
            s0 = Some(v);
            calls.insert(0, row);
            strikes.insert(0, 0.0);
        } else {
            strikes.push(k);
            calls.push(row);
        }
    }
    if strikes.first() == Some(&0.0) {
        strikes.remove(0);
    }
    let s0 = s0.ok_or_else(|| MarketError::Malformed("CSV needs s0= in the header or a strike-0 row".into()))?;
    CallSurface::new(s0, strikes, maturities, calls)
}

pub fn load_surface(path: &Path) -> Result<CallSurface, MarketError> {
    let text = std::fs::read_to_string(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => load_surface_csv(&text),
        _ => load_surface_json(&text),
    }
}
