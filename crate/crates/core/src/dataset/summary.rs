use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Frame, ResponseTable, Tense};
use crate::error::{Error, Result};

/// Number of distinct verbs observed in one (tense, frame) cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellCount {
    pub tense: Tense,
    pub frame: Frame,
    pub verbs: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub records: usize,
    pub verbs: usize,
    pub participants: usize,
    pub sentences: usize,
    /// Only cells with at least one record, ordered by tense then frame.
    pub verbs_per_cell: Vec<CellCount>,
    pub records_per_participant: BTreeMap<String, usize>,
}

pub fn summarize(table: &ResponseTable) -> Result<SummaryReport> {
    if table.is_empty() {
        return Err(Error::Empty);
    }
    let mut cells: BTreeMap<(Tense, Frame), BTreeSet<&str>> = BTreeMap::new();
    let mut per_participant: BTreeMap<String, usize> = BTreeMap::new();
    let mut verbs = BTreeSet::new();
    let mut participants = BTreeSet::new();
    for r in table.records() {
        cells.entry((r.tense, r.frame)).or_default().insert(&r.verb);
        *per_participant.entry(r.participant.clone()).or_default() += 1;
        verbs.insert(r.verb.as_str());
        participants.insert(r.participant.as_str());
    }
    Ok(SummaryReport {
        records: table.len(),
        verbs: verbs.len(),
        participants: participants.len(),
        sentences: table.cell_layout().cells.len(),
        verbs_per_cell: cells
            .into_iter()
            .map(|((tense, frame), v)| CellCount {
                tense,
                frame,
                verbs: v.len(),
            })
            .collect(),
        records_per_participant: per_participant,
    })
}

impl fmt::Display for SummaryReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "records:      {}", self.records)?;
        writeln!(f, "verbs:        {}", self.verbs)?;
        writeln!(f, "sentences:    {}", self.sentences)?;
        writeln!(f, "participants: {}", self.participants)?;
        writeln!(f)?;
        writeln!(f, "{:<8} {:<22} {:>7}", "tense", "frame", "# verbs")?;
        for c in &self.verbs_per_cell {
            writeln!(
                f,
                "{:<8} {:<22} {:>7}",
                c.tense.label(),
                c.frame.label(),
                c.verbs
            )?;
        }
        Ok(())
    }
}
