use std::collections::{BTreeMap, HashMap};

use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Frame, ResponseTable, Sentence};
use crate::error::{Error, Result};

pub const DEFAULT_FOLDS: usize = 5;
/// Swap attempts before falling back to pinning.
pub const MAX_SWAPS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldEntry {
    pub sentence: Sentence,
    /// `None` for a sentence pinned to training in every fold.
    pub fold: Option<usize>,
}

/// Sentence-level fold assignment. Each training split (all folds but one,
/// plus pinned sentences) contains every verb–frame pair of the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub n_folds: usize,
    pub seed: u64,
    /// Sorted by sentence.
    pub entries: Vec<FoldEntry>,
}

/// A verb–frame pair missing from the training split of `fold`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub verb: String,
    pub frame: Frame,
    pub fold: usize,
}

impl FoldAssignment {
    /// `Some(fold)` for a held-out sentence, `Some(None)` if pinned, `None` if unknown.
    pub fn fold_of(&self, sentence: &Sentence) -> Option<Option<usize>> {
        self.entries
            .binary_search_by(|e| e.sentence.cmp(sentence))
            .ok()
            .map(|i| self.entries[i].fold)
    }

    pub fn pinned(&self) -> impl Iterator<Item = &Sentence> {
        self.entries
            .iter()
            .filter(|e| e.fold.is_none())
            .map(|e| &e.sentence)
    }

    pub fn fold_sentences(&self, fold: usize) -> impl Iterator<Item = &Sentence> {
        self.entries
            .iter()
            .filter(move |e| e.fold == Some(fold))
            .map(|e| &e.sentence)
    }

    /// Training and held-out records for `fold`. Both keep the parent's indexes.
    pub fn split(
        &self,
        table: &ResponseTable,
        fold: usize,
    ) -> Result<(ResponseTable, ResponseTable)> {
        let folds: HashMap<Sentence, Option<usize>> = self
            .entries
            .iter()
            .map(|e| (e.sentence.clone(), e.fold))
            .collect();
        for r in table.records() {
            if !folds.contains_key(&r.sentence()) {
                return Err(Error::Coverage(format!(
                    "sentence {} has no fold",
                    r.sentence()
                )));
            }
        }
        let train = table.filter(|r| folds[&r.sentence()] != Some(fold));
        let test = table.filter(|r| folds[&r.sentence()] == Some(fold));
        Ok((train, test))
    }

    /// Every verb–frame pair of `table` missing from some training split.
    pub fn violations(&self, table: &ResponseTable) -> Vec<Violation> {
        let mut groups: BTreeMap<(&str, Frame), Vec<Option<usize>>> = BTreeMap::new();
        for r in table.records() {
            groups.entry((r.verb.as_str(), r.frame)).or_default();
        }
        for e in &self.entries {
            if let Some(g) = groups.get_mut(&(e.sentence.verb.as_str(), e.sentence.frame)) {
                g.push(e.fold);
            }
        }
        let mut out = Vec::new();
        for ((verb, frame), folds) in groups {
            for fold in 0..self.n_folds {
                if !folds.iter().any(|&f| f != Some(fold)) {
                    out.push(Violation {
                        verb: verb.to_string(),
                        frame,
                        fold,
                    });
                }
            }
        }
        out
    }
}

/// Assigns sentences to `n_folds` folds: a seeded shuffle dealt round-robin,
/// then random swaps until every verb–frame pair survives in each training
/// split. A pair with a single sentence has it pinned to training.
pub fn assign_folds(table: &ResponseTable, n_folds: usize, seed: u64) -> Result<FoldAssignment> {
    if n_folds < 2 {
        return Err(Error::Config("at least two folds are needed".into()));
    }
    if table.is_empty() {
        return Err(Error::Empty);
    }
    let layout = table.cell_layout();
    let sentences: Vec<Sentence> = layout.cells.iter().map(|c| table.sentence_of(c)).collect();
    let mut group_of = Vec::with_capacity(layout.cells.len());
    let mut group_ids: HashMap<(usize, usize), usize> = HashMap::new();
    for c in &layout.cells {
        let next = group_ids.len();
        group_of.push(*group_ids.entry((c.verb, c.frame)).or_insert(next));
    }
    let mut members = vec![Vec::new(); group_ids.len()];
    for (n, &g) in group_of.iter().enumerate() {
        members[g].push(n);
    }

    let mut fold: Vec<Option<usize>> = vec![None; sentences.len()];
    let mut free: Vec<usize> = Vec::new();
    for group in &members {
        if group.len() == 1 {
            warn!(
                "{} {} has a single sentence; pinned to training",
                sentences[group[0]].verb, sentences[group[0]].frame
            );
        } else {
            free.extend(group);
        }
    }
    free.sort_unstable();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    free.shuffle(&mut rng);
    for (k, &n) in free.iter().enumerate() {
        fold[n] = Some(k % n_folds);
    }

    let violated = |g: usize, fold: &[Option<usize>]| -> bool {
        let first = fold[members[g][0]];
        first.is_some() && members[g].iter().all(|&n| fold[n] == first)
    };
    let mut bad: Vec<usize> = (0..members.len()).filter(|&g| violated(g, &fold)).collect();
    let mut swaps = 0;
    while !bad.is_empty() && swaps < MAX_SWAPS && free.len() > 1 {
        swaps += 1;
        let g = bad[rng.random_range(0..bad.len())];
        let a = members[g][rng.random_range(0..members[g].len())];
        let b = free[rng.random_range(0..free.len())];
        if fold[a] == fold[b] {
            continue;
        }
        let h = group_of[b];
        let before = violated(g, &fold) as usize + (h != g && violated(h, &fold)) as usize;
        fold.swap(a, b);
        let after = violated(g, &fold) as usize + (h != g && violated(h, &fold)) as usize;
        if after < before {
            bad.retain(|&x| violated(x, &fold));
        } else {
            fold.swap(a, b);
        }
    }
    for g in bad {
        let n = members[g][0];
        warn!(
            "could not separate {} {} across folds; pinned {} to training",
            sentences[n].verb, sentences[n].frame, sentences[n]
        );
        fold[n] = None;
    }

    Ok(FoldAssignment {
        n_folds,
        seed,
        entries: sentences
            .into_iter()
            .zip(fold)
            .map(|(sentence, fold)| FoldEntry { sentence, fold })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ResponseRecord, Subject, Tense};

    fn grid_table(n_verbs: usize, frames: &[Frame], contexts: usize) -> ResponseTable {
        let mut records = Vec::new();
        for v in 0..n_verbs {
            for &frame in frames {
                for (k, (subject, tense)) in [
                    (Subject::First, Tense::Past),
                    (Subject::First, Tense::Present),
                    (Subject::Third, Tense::Past),
                    (Subject::Third, Tense::Present),
                ]
                .into_iter()
                .take(contexts)
                .enumerate()
                {
                    records.push(ResponseRecord {
                        verb: format!("v{v}"),
                        frame,
                        subject,
                        tense,
                        participant: format!("p{k}"),
                        negraising: 0.5,
                        acceptability: 0.5,
                    });
                }
            }
        }
        ResponseTable::from_records(records).unwrap()
    }

    #[test]
    fn four_sentence_groups_satisfy_the_training_constraint() {
        let table = grid_table(30, &Frame::ALL, 4);
        let folds = assign_folds(&table, 5, 3).unwrap();
        assert!(folds.violations(&table).is_empty());
        assert_eq!(folds.pinned().count(), 0);
        assert_eq!(folds.entries.len(), 30 * 6 * 4);
    }

    #[test]
    fn two_sentence_groups_are_repaired_by_swaps() {
        let table = grid_table(40, &Frame::ALL[..3], 2);
        let folds = assign_folds(&table, 5, 11).unwrap();
        assert!(folds.violations(&table).is_empty());
        assert_eq!(folds.pinned().count(), 0);
        let sizes: Vec<usize> = (0..5).map(|k| folds.fold_sentences(k).count()).collect();
        assert_eq!(sizes.iter().sum::<usize>(), 240);
        assert!(sizes.iter().all(|&s| s == 48));
    }

    #[test]
    fn single_sentence_groups_are_pinned() {
        let table = grid_table(3, &[Frame::ThatS], 1);
        let folds = assign_folds(&table, 5, 0).unwrap();
        assert_eq!(folds.pinned().count(), 3);
        assert!(folds.violations(&table).is_empty());
    }

    #[test]
    fn same_seed_same_assignment() {
        let table = grid_table(10, &Frame::ALL[..2], 4);
        assert_eq!(
            assign_folds(&table, 5, 4).unwrap(),
            assign_folds(&table, 5, 4).unwrap()
        );
        assert_ne!(
            assign_folds(&table, 5, 4).unwrap(),
            assign_folds(&table, 5, 5).unwrap()
        );
    }

    #[test]
    fn split_partitions_records() {
        let table = grid_table(6, &Frame::ALL[..2], 4);
        let folds = assign_folds(&table, 5, 1).unwrap();
        let mut held = 0;
        for k in 0..5 {
            let (train, test) = folds.split(&table, k).unwrap();
            assert_eq!(train.len() + test.len(), table.len());
            held += test.len();
        }
        assert_eq!(held, table.len());
    }
}
