//! Report rendering. Every report is a list of flat rows with a fixed column
//! order, printed as an aligned table, CSV, or one JSON object per line.

use std::io::{self, Write};

use anyhow::Result;
use clap::ValueEnum;
use serde::Serialize;
use serde_json::{Map, Value};

pub type Row = Map<String, Value>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Csv,
    Json,
}

pub fn to_row<T: Serialize>(value: &T) -> Result<Row> {
    match serde_json::to_value(value)? {
        Value::Object(map) => Ok(map),
        other => anyhow::bail!("report row is not an object: {other}"),
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

pub fn render(rows: &[Row], format: Format, out: &mut impl Write) -> Result<()> {
    let Some(first) = rows.first() else { return Ok(()) };
    let header: Vec<&String> = first.keys().collect();
    match format {
        Format::Json => {
            for row in rows {
                writeln!(out, "{}", serde_json::to_string(row)?)?;
            }
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(&header)?;
            for row in rows {
                w.write_record(row.values().map(cell))?;
            }
            w.flush()?;
        }
        Format::Text => {
            let table: Vec<Vec<String>> = rows.iter().map(|r| r.values().map(cell).collect()).collect();
            let widths: Vec<usize> = header
                .iter()
                .enumerate()
                .map(|(c, h)| table.iter().map(|r| r[c].len()).chain([h.len()]).max().unwrap_or(0))
                .collect();
            let line = |cells: Vec<&str>| {
                cells.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect::<Vec<_>>().join("  ")
            };
            writeln!(out, "{}", line(header.iter().map(|h| h.as_str()).collect()))?;
            for r in &table {
                writeln!(out, "{}", line(r.iter().map(String::as_str).collect()))?;
            }
        }
    }
    Ok(())
}

pub fn emit(rows: &[Row], format: Format) -> Result<()> {
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    render(rows, format, &mut lock)?;
    lock.flush()?;
    Ok(())
}
