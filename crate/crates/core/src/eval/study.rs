use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::derive_rng;

const STREAM_STUDY: u64 = 41;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StudyKind {
    /// Rate each edited image from one to five stars for how well it follows the text.
    Standalone,
    /// Pick which of two edited images fits the text better.
    Pairwise,
}

impl fmt::Display for StudyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StudyKind::Standalone => "standalone",
            StudyKind::Pairwise => "pairwise",
        })
    }
}

impl FromStr for StudyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standalone" => Ok(Self::Standalone),
            "pairwise" => Ok(Self::Pairwise),
            other => Err(invalid(format!(
                "unknown study kind {other:?} (expected standalone or pairwise)"
            ))),
        }
    }
}

/// One input with its instruction and the outputs of several models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRecord {
    pub id: String,
    pub input: String,
    pub description: String,
    /// Model id to output image reference.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskItem {
    pub slot: String,
    pub image: String,
}

/// What a rater sees. Model identities are hidden behind slot letters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingTask {
    pub task_id: String,
    pub kind: StudyKind,
    pub input: String,
    pub description: String,
    pub question: String,
    pub items: Vec<TaskItem>,
}

/// Resolves a task's slots back to the record and models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskKey {
    pub task_id: String,
    pub record: String,
    pub slots: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyExport {
    pub tasks: Vec<RatingTask>,
    pub key: Vec<TaskKey>,
}

fn slot_name(i: usize) -> String {
    char::from(b'A' + (i % 26) as u8).to_string()
}

/// Builds anonymized rating tasks. Standalone gives one task per record with all outputs in
/// seeded random order; pairwise gives one task per record and model pair, with the two
/// outputs in seeded random order. Task order is shuffled too.
pub fn export_rating_tasks(
    records: &[StudyRecord],
    kind: StudyKind,
    seed: u64,
) -> Result<StudyExport> {
    if records.is_empty() {
        return Err(invalid("study export needs at least one record"));
    }
    let need = match kind {
        StudyKind::Standalone => 1,
        StudyKind::Pairwise => 2,
    };
    let mut groups: Vec<(&StudyRecord, Vec<&String>)> = Vec::new();
    for r in records {
        if r.outputs.len() < need {
            return Err(invalid(format!(
                "record {} has {} outputs; a {kind} study needs at least {need}",
                r.id,
                r.outputs.len()
            )));
        }
        let models: Vec<&String> = r.outputs.keys().collect();
        match kind {
            StudyKind::Standalone => groups.push((r, models)),
            StudyKind::Pairwise => {
                for i in 0..models.len() {
                    for j in i + 1..models.len() {
                        groups.push((r, vec![models[i], models[j]]));
                    }
                }
            }
        }
    }
    let mut rng = derive_rng(seed, STREAM_STUDY, 0);
    groups.shuffle(&mut rng);
    let question = match kind {
        StudyKind::Standalone => {
            "How well does the edited image follow the instructions? (1-5 stars)"
        }
        StudyKind::Pairwise => "Pick the image that fits the text better.",
    };
    let mut tasks = Vec::with_capacity(groups.len());
    let mut key = Vec::with_capacity(groups.len());
    for (n, (record, mut models)) in groups.into_iter().enumerate() {
        models.shuffle(&mut rng);
        let task_id = format!("task-{n:05}");
        let mut items = Vec::new();
        let mut slots = BTreeMap::new();
        for (i, m) in models.iter().enumerate() {
            let slot = slot_name(i);
            items.push(TaskItem {
                slot: slot.clone(),
                image: record.outputs[*m].clone(),
            });
            slots.insert(slot, (*m).clone());
        }
        tasks.push(RatingTask {
            task_id: task_id.clone(),
            kind,
            input: record.input.clone(),
            description: record.description.clone(),
            question: question.to_string(),
            items,
        });
        key.push(TaskKey {
            task_id,
            record: record.id.clone(),
            slots,
        });
    }
    Ok(StudyExport { tasks, key })
}
