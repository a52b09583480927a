//! Text formats: events CSV (`t`), counts CSV (`left,right,count`) and
//! JSON coefficient vectors. Parse errors carry line and field positions.

use std::io::{Read, Write};

use serde::Deserialize;

use crate::basis::{BasisSpec, Domain};
use crate::error::{Error, Result};
use crate::process::{BinnedDesign, CountData, EventSet};

fn csv_reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(r)
}

fn csv_error(what: &str, e: csv::Error) -> Error {
    match e.position() {
        Some(p) => Error::Parse(format!("{what}: line {}: {e}", p.line())),
        None => Error::Parse(format!("{what}: {e}")),
    }
}

fn check_header<R: Read>(what: &str, rdr: &mut csv::Reader<R>, expected: &[&str]) -> Result<()> {
    let h = rdr.headers().map_err(|e| csv_error(what, e))?;
    if h.iter().ne(expected.iter().copied()) {
        return Err(Error::Parse(format!(
            "{what}: line 1: expected header `{}`, found `{}`",
            expected.join(","),
            h.iter().collect::<Vec<_>>().join(",")
        )));
    }
    Ok(())
}

fn field<T: std::str::FromStr>(
    what: &str,
    rec: &csv::StringRecord,
    i: usize,
    name: &str,
) -> Result<T> {
    let line = rec.position().map_or(0, |p| p.line());
    let raw = rec.get(i).unwrap_or("");
    raw.parse().map_err(|_| {
        Error::Parse(format!(
            "{what}: line {line}, field `{name}`: cannot parse `{raw}`"
        ))
    })
}

pub fn read_events<R: Read>(r: R, domain: &Domain) -> Result<EventSet> {
    const WHAT: &str = "events CSV";
    let mut rdr = csv_reader(r);
    check_header(WHAT, &mut rdr, &["t"])?;
    let mut coords = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(WHAT, e))?;
        let t: f64 = field(WHAT, &rec, 0, "t")?;
        if !domain.contains(t) {
            let line = rec.position().map_or(0, |p| p.line());
            return Err(Error::Parse(format!(
                "{WHAT}: line {line}, field `t`: {t} lies outside [{}, {}]",
                domain.lower, domain.upper
            )));
        }
        coords.push(t);
    }
    EventSet::new(domain, coords)
}

pub fn write_events<W: Write>(w: W, events: &EventSet) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t"])
        .map_err(|e| csv_error("events CSV", e))?;
    for t in events.coordinates() {
        out.write_record([t.to_string()])
            .map_err(|e| csv_error("events CSV", e))?;
    }
    out.flush()?;
    Ok(())
}

/// Bin edges and counts as read from a counts CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct CountTable {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl CountTable {
    pub fn into_count_data(self, basis: &BasisSpec) -> Result<CountData> {
        BinnedDesign::new(basis, self.edges)?.with_counts(self.counts)
    }
}

pub fn read_counts<R: Read>(r: R) -> Result<CountTable> {
    const WHAT: &str = "counts CSV";
    let mut rdr = csv_reader(r);
    check_header(WHAT, &mut rdr, &["left", "right", "count"])?;
    let mut edges = Vec::new();
    let mut counts = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(WHAT, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let left: f64 = field(WHAT, &rec, 0, "left")?;
        let right: f64 = field(WHAT, &rec, 1, "right")?;
        let count: u64 = field(WHAT, &rec, 2, "count")?;
        match edges.last() {
            None => edges.push(left),
            Some(&prev) if prev != left => {
                return Err(Error::Parse(format!(
                    "{WHAT}: line {line}, field `left`: bins must be contiguous, expected {prev}, found {left}"
                )))
            }
            _ => {}
        }
        if !(right > left) {
            return Err(Error::Parse(format!(
                "{WHAT}: line {line}, field `right`: {right} does not exceed left edge {left}"
            )));
        }
        edges.push(right);
        counts.push(count);
    }
    if counts.is_empty() {
        return Err(Error::Parse(format!("{WHAT}: no bins")));
    }
    Ok(CountTable { edges, counts })
}

pub fn write_counts<W: Write>(w: W, data: &CountData) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["left", "right", "count"])
        .map_err(|e| csv_error("counts CSV", e))?;
    for (e, c) in data.edges.windows(2).zip(&data.counts) {
        out.write_record([e[0].to_string(), e[1].to_string(), c.to_string()])
            .map_err(|e| csv_error("counts CSV", e))?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum CoefficientFile {
    Plain(Vec<f64>),
    Object { x: Vec<f64> },
    Estimate { x_hat: Vec<f64> },
}

/// Reads a coefficient vector: a JSON array, `{"x": [...]}`, or an estimate
/// file with an `x_hat` field.
pub fn read_coefficients(text: &str) -> Result<Vec<f64>> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("coefficients JSON: {e}")))?;
    let parsed: CoefficientFile = serde_json::from_value(value).map_err(|_| {
        Error::Parse("coefficients JSON: expected an array of numbers or an object with field `x` or `x_hat`".into())
    })?;
    let x = match parsed {
        CoefficientFile::Plain(x)
        | CoefficientFile::Object { x }
        | CoefficientFile::Estimate { x_hat: x } => x,
    };
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::Parse(format!(
            "coefficients JSON: entry {i} is not finite"
        )));
    }
    Ok(x)
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn events_round_trip_exactly() {
        let d = Domain::new(0.0, 1.0).unwrap();
        let ev = EventSet::new(&d, vec![0.1, 1.0 / 3.0, 0.7 + 1e-17, 0.0]).unwrap();
        let mut buf = Vec::new();
        write_events(&mut buf, &ev).unwrap();
        assert!(buf.starts_with(b"t\n"));
        assert_eq!(read_events(&buf[..], &d).unwrap(), ev);
        assert!(read_events(&b"t\n"[..], &d).unwrap().is_empty());
    }

    #[test]
    fn event_diagnostics_name_line_and_field() {
        let d = Domain::new(0.0, 1.0).unwrap();
        let e = read_events(&b"t\n0.5\nabc\n"[..], &d)
            .unwrap_err()
            .to_string();
        assert!(e.contains("line 3") && e.contains("`t`"), "{e}");
        let e = read_events(&b"t\n2.0\n"[..], &d).unwrap_err().to_string();
        assert!(e.contains("outside"), "{e}");
        let e = read_events(&b"time\n0.5\n"[..], &d)
            .unwrap_err()
            .to_string();
        assert!(e.contains("expected header"), "{e}");
    }

    #[test]
    fn counts_round_trip_and_contiguity() {
        let b = BasisSpec::unit_indicators(2);
        let d = BinnedDesign::uniform(&b, 4)
            .unwrap()
            .with_counts(vec![1, 0, 3, 2])
            .unwrap();
        let mut buf = Vec::new();
        write_counts(&mut buf, &d).unwrap();
        let t = read_counts(&buf[..]).unwrap();
        assert_eq!(t.clone().into_count_data(&b).unwrap(), d);
        let e = read_counts(&b"left,right,count\n0,1,2\n1.5,2,1\n"[..])
            .unwrap_err()
            .to_string();
        assert!(e.contains("line 3") && e.contains("contiguous"), "{e}");
        let e = read_counts(&b"left,right,count\n0,1,-2\n"[..])
            .unwrap_err()
            .to_string();
        assert!(e.contains("`count`"), "{e}");
    }

    #[test]
    fn coefficient_forms() {
        assert_eq!(read_coefficients("[1, 2.5]").unwrap(), vec![1.0, 2.5]);
        assert_eq!(read_coefficients(r#"{"x": [3]}"#).unwrap(), vec![3.0]);
        assert_eq!(
            read_coefficients(r#"{"x_hat": [4], "nll_value": 0}"#).unwrap(),
            vec![4.0]
        );
        assert!(read_coefficients(r#"{"y": [1]}"#).is_err());
        assert!(read_coefficients("[1,")
            .unwrap_err()
            .to_string()
            .contains("line 1"));
    }
}
