//! Self-describing result tables with CSV and JSON emitters.

use std::collections::BTreeMap;
use std::io::Write;

use serde_json::{json, Map, Value as Json};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unit {
    /// Money per scarcity event.
    Dollars,
    Mw,
    DollarsPerMwh,
    Percent,
    Ratio,
    Count,
    Seconds,
    Text,
    Flag,
}

impl Unit {
    pub fn label(self) -> &'static str {
        match self {
            Unit::Dollars => "$/event",
            Unit::Mw => "MW",
            Unit::DollarsPerMwh => "$/MWh",
            Unit::Percent => "%",
            Unit::Ratio => "ratio",
            Unit::Count => "count",
            Unit::Seconds => "s",
            Unit::Text => "text",
            Unit::Flag => "bool",
        }
    }

    fn decimals(self) -> usize {
        match self {
            Unit::Dollars | Unit::DollarsPerMwh => 2,
            Unit::Percent => 1,
            Unit::Mw => 4,
            Unit::Ratio => 8,
            Unit::Seconds => 3,
            Unit::Count | Unit::Text | Unit::Flag => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Text(String),
    Flag(bool),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Num(v as f64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Flag(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Empty, Into::into)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub unit: Unit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[(&str, Unit)]) -> Self {
        Self {
            name: name.to_string(),
            columns: columns
                .iter()
                .map(|&(n, unit)| Column { name: n.to_string(), unit })
                .collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width for table {}", self.name);
        self.rows.push(row);
    }
}

/// The output of one command: run metadata plus named tables.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultSet {
    pub command: String,
    pub scenario: String,
    pub seed: Option<u64>,
    pub tolerances: BTreeMap<String, f64>,
    pub tables: Vec<Table>,
}

impl ResultSet {
    pub fn new(command: &str, scenario: &str) -> Self {
        Self {
            command: command.to_string(),
            scenario: scenario.to_string(),
            seed: None,
            tolerances: BTreeMap::new(),
            tables: Vec::new(),
        }
    }

    pub fn tolerance(mut self, name: &str, value: f64) -> Self {
        self.tolerances.insert(name.to_string(), value);
        self
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }
}

pub fn format_number(v: f64, unit: Unit) -> String {
    if !v.is_finite() {
        return if v.is_nan() { "nan".into() } else if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let d = unit.decimals();
    let s = format!("{v:.d$}");
    // avoid "-0.00"
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

fn text_cell(cell: &Cell, unit: Unit) -> String {
    match cell {
        Cell::Num(v) => format_number(*v, unit),
        Cell::Text(s) => s.clone(),
        Cell::Flag(b) => b.to_string(),
        Cell::Empty => String::new(),
    }
}

fn csv_block(records: &[Vec<String>]) -> std::io::Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(Vec::new());
    for r in records {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| e.into_error())
}

/// Metadata as `# key,value` records, then one block per table separated
/// by blank lines; headers read `name [unit]`.
pub fn write_csv<W: Write>(set: &ResultSet, mut out: W) -> std::io::Result<()> {
    let mut meta = vec![
        vec!["# command".to_string(), set.command.clone()],
        vec!["# scenario".to_string(), set.scenario.clone()],
    ];
    if let Some(seed) = set.seed {
        meta.push(vec!["# seed".into(), seed.to_string()]);
    }
    for (k, v) in &set.tolerances {
        meta.push(vec![format!("# tolerance {k}"), format!("{v:e}")]);
    }
    out.write_all(&csv_block(&meta)?)?;
    for t in &set.tables {
        let mut records = vec![
            vec!["# table".to_string(), t.name.clone()],
            t.columns.iter().map(|c| format!("{} [{}]", c.name, c.unit.label())).collect(),
        ];
        for row in &t.rows {
            records.push(row.iter().zip(&t.columns).map(|(cell, c)| text_cell(cell, c.unit)).collect());
        }
        out.write_all(b"\n")?;
        out.write_all(&csv_block(&records)?)?;
    }
    out.flush()
}

fn json_cell(cell: &Cell, unit: Unit) -> Json {
    match cell {
        Cell::Num(v) if v.is_finite() => {
            let rounded: f64 = format_number(*v, unit).parse().expect("formatted number parses");
            json!(rounded)
        }
        Cell::Num(v) => json!(format_number(*v, unit)),
        Cell::Text(s) => json!(s),
        Cell::Flag(b) => json!(b),
        Cell::Empty => Json::Null,
    }
}

pub fn to_json(set: &ResultSet) -> Json {
    let tables: Vec<Json> = set
        .tables
        .iter()
        .map(|t| {
            let rows: Vec<Json> = t
                .rows
                .iter()
                .map(|row| {
                    let mut m = Map::new();
                    for (cell, c) in row.iter().zip(&t.columns) {
                        m.insert(c.name.clone(), json_cell(cell, c.unit));
                    }
                    Json::Object(m)
                })
                .collect();
            json!({
                "name": t.name,
                "columns": t.columns.iter().map(|c| json!({"name": c.name, "unit": c.unit.label()})).collect::<Vec<_>>(),
                "rows": rows,
            })
        })
        .collect();
    json!({
        "command": set.command,
        "scenario": set.scenario,
        "seed": set.seed,
        "tolerances": set.tolerances,
        "tables": tables,
    })
}

pub fn write_json<W: Write>(set: &ResultSet, mut out: W) -> std::io::Result<()> {
    serde_json::to_writer_pretty(&mut out, &to_json(set))?;
    writeln!(out)
}
