use std::collections::BTreeSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use log::warn;

use super::{ResponseRecord, ResponseTable};
use crate::error::{Error, Result};

/// Column names for each record field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnSchema {
    pub verb: String,
    pub frame: String,
    pub subject: String,
    pub tense: String,
    pub participant: String,
    pub negraising: String,
    pub acceptability: String,
}

impl Default for ColumnSchema {
    fn default() -> Self {
        Self {
            verb: "verb".into(),
            frame: "frame".into(),
            subject: "subject".into(),
            tense: "tense".into(),
            participant: "participant".into(),
            negraising: "negraising".into(),
            acceptability: "acceptability".into(),
        }
    }
}

impl ColumnSchema {
    fn names(&self) -> [&str; 7] {
        [
            &self.verb,
            &self.frame,
            &self.subject,
            &self.tense,
            &self.participant,
            &self.negraising,
            &self.acceptability,
        ]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum RowErrorPolicy {
    /// Stop at the first bad row.
    #[default]
    Fail,
    /// Log and skip bad rows.
    Skip,
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    pub schema: ColumnSchema,
    pub on_error: RowErrorPolicy,
    /// Participants whose rows are discarded (e.g. non-native speakers).
    pub drop_participants: BTreeSet<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadStats {
    pub rows: usize,
    pub skipped: usize,
    pub dropped: usize,
}

/// Loads a long-format CSV, failing on the first bad row.
pub fn load_csv(path: impl AsRef<Path>, schema: &ColumnSchema) -> Result<ResponseTable> {
    let options = LoadOptions {
        schema: schema.clone(),
        ..LoadOptions::default()
    };
    load_csv_with(path, &options).map(|(table, _)| table)
}

pub fn load_csv_with(
    path: impl AsRef<Path>,
    options: &LoadOptions,
) -> Result<(ResponseTable, LoadStats)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, options)
}

pub fn read_csv<R: Read>(reader: R, options: &LoadOptions) -> Result<(ResponseTable, LoadStats)> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut columns = [0usize; 7];
    for (slot, name) in columns.iter_mut().zip(options.schema.names()) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_owned()))?;
    }

    let mut stats = LoadStats::default();
    let mut records = Vec::new();
    for row in rdr.records() {
        stats.rows += 1;
        let parsed = row.map_err(Error::from).and_then(|row| {
            let line = row.position().map_or(0, |p| p.line());
            parse_row(&row, &columns, &options.schema)
                .map_err(|message| Error::Row { line, message })
        });
        match parsed {
            Ok(record) if options.drop_participants.contains(&record.participant) => {
                stats.dropped += 1;
            }
            Ok(record) => records.push(record),
            Err(e) if options.on_error == RowErrorPolicy::Skip => {
                warn!("skipping row: {e}");
                stats.skipped += 1;
            }
            Err(e) => return Err(e),
        }
    }
    Ok((ResponseTable::from_records(records)?, stats))
}

fn parse_row(
    row: &csv::StringRecord,
    columns: &[usize; 7],
    schema: &ColumnSchema,
) -> std::result::Result<ResponseRecord, String> {
    let field = |i: usize| row.get(columns[i]).unwrap_or("");
    let text = |i: usize, name: &str| {
        let v = field(i);
        if v.is_empty() {
            Err(format!("empty `{name}`"))
        } else {
            Ok(v.to_owned())
        }
    };
    let response = |i: usize, name: &str| -> std::result::Result<f64, String> {
        let raw = field(i);
        let v: f64 = raw
            .parse()
            .map_err(|_| format!("`{name}` value `{raw}` is not a number"))?;
        if !v.is_finite() || !(0.0..=1.0).contains(&v) {
            return Err(format!("`{name}` value {v} outside [0, 1]"));
        }
        Ok(v)
    };
    Ok(ResponseRecord {
        verb: text(0, &schema.verb)?,
        frame: field(1).parse()?,
        subject: field(2).parse()?,
        tense: field(3).parse()?,
        participant: text(4, &schema.participant)?,
        negraising: response(5, &schema.negraising)?,
        acceptability: response(6, &schema.acceptability)?,
    })
}

/// Writes the canonical schema. Floats use shortest round-trip formatting.
pub fn write_csv<W: Write>(table: &ResponseTable, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(ColumnSchema::default().names())?;
    for r in table.records() {
        wtr.write_record([
            r.verb.as_str(),
            r.frame.label(),
            r.subject.label(),
            r.tense.label(),
            r.participant.as_str(),
            &r.negraising.to_string(),
            &r.acceptability.to_string(),
        ])?;
    }
    wtr.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

pub fn write_csv_path(table: &ResponseTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(table, file)
}
