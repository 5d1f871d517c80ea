use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use adamant_core::{Annotation, AnnotationType};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QuestionCounts {
    pub total: usize,
    pub answered: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PinCounts {
    /// Records whose author pin is set.
    pub author: usize,
    /// Reader pins on the counted records.
    pub reader: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub total: usize,
    pub by_type: BTreeMap<AnnotationType, usize>,
    pub questions: QuestionCounts,
    pub answered_ratio: f64,
    pub mean_body_words: f64,
    pub pins: PinCounts,
}

/// Counts over the live records in `annotations`. `reader_pins` are
/// `(user, annotation id)` pairs; only those on counted records are included.
pub fn compute(annotations: &[Annotation], reader_pins: &[(String, String)]) -> Stats {
    let live: Vec<&Annotation> = annotations.iter().filter(|a| !a.deleted).collect();
    let mut by_type: BTreeMap<AnnotationType, usize> = AnnotationType::ALL.iter().map(|k| (*k, 0)).collect();
    for a in &live {
        *by_type.entry(a.kind).or_default() += 1;
    }
    let questions: Vec<_> = live.iter().filter(|a| a.kind == AnnotationType::Question).collect();
    let answered = questions.iter().filter(|a| a.state.status() == "answered").count();
    let words: usize = live.iter().map(|a| a.body_words()).sum();
    let ids: BTreeSet<&str> = live.iter().map(|a| a.id.as_str()).collect();
    let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
    Stats {
        total: live.len(),
        by_type,
        questions: QuestionCounts {
            total: questions.len(),
            answered,
        },
        answered_ratio: ratio(answered, questions.len()),
        mean_body_words: ratio(words, live.len()),
        pins: PinCounts {
            author: live.iter().filter(|a| a.pinned).count(),
            reader: reader_pins.iter().filter(|(_, id)| ids.contains(id.as_str())).count(),
        },
    }
}

impl fmt::Display for Stats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "annotations   {}", self.total)?;
        for (k, n) in &self.by_type {
            writeln!(f, "  {:<11} {n}", k.as_str())?;
        }
        writeln!(
            f,
            "answered      {}/{} ({:.2})",
            self.questions.answered, self.questions.total, self.answered_ratio
        )?;
        writeln!(f, "mean words    {:.2}", self.mean_body_words)?;
        writeln!(f, "author pins   {}", self.pins.author)?;
        write!(f, "reader pins   {}", self.pins.reader)
    }
}
