//! Judgment records, label indexes and the sentence (cell) layout.
//!
//! A *sentence* is a verb in a frame with a matrix subject and tense. Each
//! sentence is rated by several participants, and every rating carries both a
//! neg-raising response and an acceptability response on a 0-1 slider.

mod csv_io;
mod summary;
mod synthetic;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::hash::Hash;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use csv_io::{
    load_csv, load_csv_with, read_csv, write_csv, write_csv_path, ColumnSchema, LoadOptions,
    LoadStats, RowErrorPolicy,
};
pub use summary::{summarize, CellCount, SummaryReport};
pub use synthetic::{
    generate_synthetic, PlantedAcceptability, PlantedEffects, PlantedFactors, PlantedSpec,
    RealizedEffects,
};

/// Slider responses are clamped into `[RESPONSE_EPSILON, 1 - RESPONSE_EPSILON]`
/// because the KL loss is undefined at the endpoints.
pub const RESPONSE_EPSILON: f64 = 1e-4;

pub(crate) fn clamp_response(x: f64) -> f64 {
    x.clamp(RESPONSE_EPSILON, 1.0 - RESPONSE_EPSILON)
}

/// The six subcategorization frames. Frames with a direct object appear in
/// passive form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Frame {
    ThatS,
    ToVpEventive,
    ToVpStative,
    PassiveThatS,
    PassiveToVpEventive,
    PassiveToVpStative,
}

impl Frame {
    pub const ALL: [Frame; 6] = [
        Frame::ThatS,
        Frame::ToVpEventive,
        Frame::ToVpStative,
        Frame::PassiveThatS,
        Frame::PassiveToVpEventive,
        Frame::PassiveToVpStative,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Frame::ThatS => "NP __ that S",
            Frame::ToVpEventive => "NP __ to VP[+ev]",
            Frame::ToVpStative => "NP __ to VP[-ev]",
            Frame::PassiveThatS => "NP be __ that S",
            Frame::PassiveToVpEventive => "NP be __ to VP[+ev]",
            Frame::PassiveToVpStative => "NP be __ to VP[-ev]",
        }
    }
}

// Lowercase, `_ed`/`___` blanks folded to `__`, single spaces, no space before `[`.
fn normalize_frame_label(s: &str) -> String {
    let lower = s.trim().to_lowercase().replace("_ed", "_");
    let mut out = String::with_capacity(lower.len());
    let mut chars = lower.chars().peekable();
    while let Some(c) = chars.next() {
        if c == '_' {
            while chars.peek() == Some(&'_') {
                chars.next();
            }
            out.push_str("__");
        } else {
            out.push(c);
        }
    }
    out.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .replace(" [", "[")
}

impl FromStr for Frame {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = normalize_frame_label(s);
        Frame::ALL
            .into_iter()
            .find(|f| normalize_frame_label(f.label()) == key)
            .ok_or_else(|| format!("unknown frame `{s}`"))
    }
}

impl fmt::Display for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl From<Frame> for String {
    fn from(f: Frame) -> String {
        f.label().to_owned()
    }
}

impl TryFrom<String> for Frame {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

/// Matrix subject person.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subject {
    First,
    Third,
}

impl Subject {
    pub const ALL: [Subject; 2] = [Subject::First, Subject::Third];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Subject::First => "first",
            Subject::Third => "third",
        }
    }
}

impl FromStr for Subject {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_lowercase().as_str() {
            "first" | "1st" | "1" => Ok(Subject::First),
            "third" | "3rd" | "3" => Ok(Subject::Third),
            _ => Err(format!("unknown subject `{s}`")),
        }
    }
}

impl fmt::Display for Subject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Matrix tense.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tense {
    Past,
    Present,
}

impl Tense {
    pub const ALL: [Tense; 2] = [Tense::Past, Tense::Present];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Tense::Past => "past",
            Tense::Present => "present",
        }
    }
}

impl FromStr for Tense {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_lowercase().as_str() {
            "past" => Ok(Tense::Past),
            "present" => Ok(Tense::Present),
            _ => Err(format!("unknown tense `{s}`")),
        }
    }
}

impl fmt::Display for Tense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Flat index of a (subject, tense) pair: `subject * 2 + tense`.
pub fn context_index(subject: Subject, tense: Tense) -> usize {
    subject.index() * 2 + tense.index()
}

/// One rating of one sentence by one participant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub verb: String,
    pub frame: Frame,
    pub subject: Subject,
    pub tense: Tense,
    pub participant: String,
    pub negraising: f64,
    pub acceptability: f64,
}

impl ResponseRecord {
    pub fn sentence(&self) -> Sentence {
        Sentence {
            verb: self.verb.clone(),
            frame: self.frame,
            subject: self.subject,
            tense: self.tense,
        }
    }
}

/// A rated item, identified by labels.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Sentence {
    pub verb: String,
    pub frame: Frame,
    pub subject: Subject,
    pub tense: Tense,
}

impl fmt::Display for Sentence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} / {} / {} / {}",
            self.verb, self.frame, self.subject, self.tense
        )
    }
}

/// A rated item, identified by dense ids of some [`ResponseTable`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellKey {
    pub verb: usize,
    pub frame: usize,
    pub subject: Subject,
    pub tense: Tense,
}

impl CellKey {
    pub fn context(&self) -> usize {
        context_index(self.subject, self.tense)
    }
}

/// Bijection between labels and dense ids `0..len`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelIndex<T: Eq + Hash + Clone> {
    items: Vec<T>,
    lookup: HashMap<T, usize>,
}

impl<T: Eq + Hash + Clone> LabelIndex<T> {
    pub fn new(items: Vec<T>) -> Result<Self> {
        let mut lookup = HashMap::with_capacity(items.len());
        for (i, item) in items.iter().enumerate() {
            if lookup.insert(item.clone(), i).is_some() {
                return Err(Error::Schema("duplicate label in index".into()));
            }
        }
        Ok(Self { items, lookup })
    }

    pub fn encode(&self, item: &T) -> Option<usize> {
        self.lookup.get(item).copied()
    }

    pub fn decode(&self, id: usize) -> Option<&T> {
        self.items.get(id)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[T] {
        &self.items
    }
}

impl LabelIndex<String> {
    pub fn encode_str(&self, item: &str) -> Option<usize> {
        // HashMap<String, _> accepts &str lookups through Borrow.
        self.lookup.get(item).copied()
    }
}

/// Dense ids of one record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecordIds {
    pub verb: usize,
    pub frame: usize,
    pub participant: usize,
}

/// An immutable, fully indexed collection of judgment records.
///
/// Indexes are sorted (verbs and participants lexicographically, frames in
/// [`Frame::ALL`] order), so the ids do not depend on row order.
#[derive(Debug, Clone)]
pub struct ResponseTable {
    records: Vec<ResponseRecord>,
    ids: Vec<RecordIds>,
    verbs: LabelIndex<String>,
    frames: LabelIndex<Frame>,
    participants: LabelIndex<String>,
}

impl ResponseTable {
    /// Validates responses (finite, within `[0, 1]`), clamps them away from
    /// the endpoints and builds sorted indexes over the labels present.
    pub fn from_records(records: Vec<ResponseRecord>) -> Result<Self> {
        let verbs: BTreeSet<&str> = records.iter().map(|r| r.verb.as_str()).collect();
        let frames: BTreeSet<Frame> = records.iter().map(|r| r.frame).collect();
        let participants: BTreeSet<&str> = records.iter().map(|r| r.participant.as_str()).collect();
        let verbs = LabelIndex::new(verbs.into_iter().map(str::to_owned).collect())?;
        let frames = LabelIndex::new(frames.into_iter().collect())?;
        let participants = LabelIndex::new(participants.into_iter().map(str::to_owned).collect())?;
        Self::with_indexes(records, verbs, frames, participants)
    }

    /// Builds a table over externally supplied indexes, which may contain
    /// labels that no record uses.
    pub fn with_indexes(
        mut records: Vec<ResponseRecord>,
        verbs: LabelIndex<String>,
        frames: LabelIndex<Frame>,
        participants: LabelIndex<String>,
    ) -> Result<Self> {
        let mut ids = Vec::with_capacity(records.len());
        for (n, r) in records.iter_mut().enumerate() {
            for (name, value) in [
                ("negraising", r.negraising),
                ("acceptability", r.acceptability),
            ] {
                if !value.is_finite() || !(0.0..=1.0).contains(&value) {
                    return Err(Error::Domain(format!(
                        "record {n}: {name} response {value} not in [0, 1]"
                    )));
                }
            }
            r.negraising = clamp_response(r.negraising);
            r.acceptability = clamp_response(r.acceptability);
            let unknown = |what: &str, label: &str| {
                Error::Schema(format!("record {n}: {what} `{label}` missing from index"))
            };
            ids.push(RecordIds {
                verb: verbs
                    .encode_str(&r.verb)
                    .ok_or_else(|| unknown("verb", &r.verb))?,
                frame: frames
                    .encode(&r.frame)
                    .ok_or_else(|| unknown("frame", r.frame.label()))?,
                participant: participants
                    .encode_str(&r.participant)
                    .ok_or_else(|| unknown("participant", &r.participant))?,
            });
        }
        Ok(Self {
            records,
            ids,
            verbs,
            frames,
            participants,
        })
    }

    /// Records satisfying `keep`, over the same indexes as `self`.
    pub fn filter(&self, mut keep: impl FnMut(&ResponseRecord) -> bool) -> ResponseTable {
        let mut records = Vec::new();
        let mut ids = Vec::new();
        for (r, id) in self.records.iter().zip(&self.ids) {
            if keep(r) {
                records.push(r.clone());
                ids.push(*id);
            }
        }
        ResponseTable {
            records,
            ids,
            verbs: self.verbs.clone(),
            frames: self.frames.clone(),
            participants: self.participants.clone(),
        }
    }

    pub fn records(&self) -> &[ResponseRecord] {
        &self.records
    }

    pub fn record_ids(&self) -> &[RecordIds] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn verbs(&self) -> &LabelIndex<String> {
        &self.verbs
    }

    pub fn frames(&self) -> &LabelIndex<Frame> {
        &self.frames
    }

    pub fn participants(&self) -> &LabelIndex<String> {
        &self.participants
    }

    pub fn cell_key(&self, record: usize) -> CellKey {
        let r = &self.records[record];
        let id = self.ids[record];
        CellKey {
            verb: id.verb,
            frame: id.frame,
            subject: r.subject,
            tense: r.tense,
        }
    }

    pub fn sentence_of(&self, cell: &CellKey) -> Sentence {
        Sentence {
            verb: self.verbs.items[cell.verb].clone(),
            frame: self.frames.items[cell.frame],
            subject: cell.subject,
            tense: cell.tense,
        }
    }

    /// Distinct cells in sorted order, and the cell position of every record.
    pub fn cell_layout(&self) -> CellLayout {
        let mut cells: Vec<CellKey> = (0..self.len()).map(|i| self.cell_key(i)).collect();
        cells.sort_unstable();
        cells.dedup();
        let record_cell = (0..self.len())
            .map(|i| {
                cells
                    .binary_search(&self.cell_key(i))
                    .expect("cell collected above")
            })
            .collect();
        CellLayout { cells, record_cell }
    }
}

/// The distinct cells of a table and the record-to-cell map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellLayout {
    pub cells: Vec<CellKey>,
    pub record_cell: Vec<usize>,
}

impl CellLayout {
    pub fn position(&self, cell: &CellKey) -> Option<usize> {
        self.cells.binary_search(cell).ok()
    }
}
