//! Portable annotation files in a web-annotation style shape.
//!
//! Each record carries one target per anchor with three selectors: the
//! exact quote, the dual offsets, and the node path. Fields beyond the
//! web-annotation core (`tags`, `visibility`, `state`, `replies`, `pinned`,
//! `modified`) keep a round trip lossless.

use std::collections::BTreeSet;

use adamant_core::anchor::{NodePath, Selector};
use adamant_core::annotation::{QuestionState, Reply, TodoState};
use adamant_core::{Annotation, AnnotationType, PageUrl, TypeState, Visibility};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("malformed interchange file: {0}")]
pub struct Malformed(pub String);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum SelectorPart {
    TextQuoteSelector {
        exact: String,
    },
    TextPositionSelector {
        start: usize,
        end_from_end: usize,
    },
    NodePathSelector {
        value: String,
    },
    #[serde(other)]
    Unsupported,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Target {
    pub source: String,
    pub selector: Vec<SelectorPart>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterchangeReply {
    pub creator: String,
    pub body: String,
    pub created: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterchangeRecord {
    #[serde(rename = "type")]
    pub record_type: String,
    pub motivation: String,
    pub creator: String,
    pub created: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modified: Option<DateTime<Utc>>,
    #[serde(default)]
    pub body: String,
    pub target: Vec<Target>,
    #[serde(default)]
    pub tags: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visibility: Option<Visibility>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pinned: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<TypeState>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub replies: Vec<InterchangeReply>,
}

pub fn motivation(kind: AnnotationType) -> &'static str {
    match kind {
        AnnotationType::Normal => "commenting",
        AnnotationType::Highlight => "highlighting",
        AnnotationType::Question => "questioning",
        AnnotationType::Issue => "assessing",
        AnnotationType::Todo => "bookmarking",
    }
}

pub fn kind_of(motivation: &str) -> Option<AnnotationType> {
    AnnotationType::ALL.into_iter().find(|k| self::motivation(*k) == motivation)
}

impl InterchangeRecord {
    pub fn from_annotation(a: &Annotation) -> Self {
        InterchangeRecord {
            record_type: "Annotation".into(),
            motivation: motivation(a.kind).into(),
            creator: a.author.clone(),
            created: a.created_at,
            modified: Some(a.modified_at),
            body: a.body.clone(),
            target: a
                .anchors
                .iter()
                .map(|s| Target {
                    source: s.page_url.to_string(),
                    selector: vec![
                        SelectorPart::TextQuoteSelector { exact: s.quote.clone() },
                        SelectorPart::TextPositionSelector {
                            start: s.start_offset,
                            end_from_end: s.end_offset,
                        },
                        SelectorPart::NodePathSelector { value: s.path.to_string() },
                    ],
                })
                .collect(),
            tags: a.tags.clone(),
            visibility: Some(a.visibility.clone()),
            pinned: Some(a.pinned),
            state: Some(a.state.clone()),
            replies: a
                .replies
                .iter()
                .map(|r| InterchangeReply {
                    creator: r.author.clone(),
                    body: r.body.clone(),
                    created: r.created_at,
                })
                .collect(),
        }
    }

    /// The record as an annotation with placeholder id and revision; the
    /// store assigns real ones on import.
    pub fn to_annotation(&self) -> Result<Annotation, Malformed> {
        if self.record_type != "Annotation" {
            return Err(Malformed(format!("record type `{}` is not Annotation", self.record_type)));
        }
        let kind = kind_of(&self.motivation).ok_or_else(|| Malformed(format!("unknown motivation `{}`", self.motivation)))?;
        if self.target.is_empty() {
            return Err(Malformed("record has no target".into()));
        }
        let anchors = self
            .target
            .iter()
            .enumerate()
            .map(|(i, t)| target_selector(t).map_err(|m| Malformed(format!("target {}: {m}", i + 1))))
            .collect::<Result<Vec<_>, _>>()?;
        let state = self.state.clone().unwrap_or(match kind {
            AnnotationType::Question => TypeState::Question(QuestionState::Unanswered),
            AnnotationType::Todo => TypeState::Todo(TodoState::Open),
            _ => TypeState::None,
        });
        let pinned = self
            .pinned
            .unwrap_or(matches!(kind, AnnotationType::Question | AnnotationType::Todo) && !state.is_terminal());
        Ok(Annotation {
            id: String::new(),
            author: self.creator.clone(),
            kind,
            body: self.body.clone(),
            anchors,
            tags: self.tags.clone(),
            visibility: self.visibility.clone().unwrap_or(Visibility::Public),
            pinned,
            state,
            replies: self
                .replies
                .iter()
                .map(|r| Reply {
                    id: String::new(),
                    author: r.creator.clone(),
                    body: r.body.clone(),
                    created_at: r.created,
                })
                .collect(),
            created_at: self.created,
            modified_at: self.modified.unwrap_or(self.created),
            revision: 1,
            deleted: false,
        })
    }
}

fn target_selector(t: &Target) -> Result<Selector, String> {
    let page_url = PageUrl::parse(&t.source).map_err(|e| e.to_string())?;
    let mut quote = None;
    let mut offsets = None;
    let mut path = None;
    for part in &t.selector {
        match part {
            SelectorPart::TextQuoteSelector { exact } => quote = Some(exact.clone()),
            SelectorPart::TextPositionSelector { start, end_from_end } => offsets = Some((*start, *end_from_end)),
            SelectorPart::NodePathSelector { value } => {
                path = Some(value.parse::<NodePath>().map_err(|e| format!("bad node path: {e}"))?)
            }
            SelectorPart::Unsupported => {}
        }
    }
    let quote = quote.ok_or("missing TextQuoteSelector")?;
    let (start_offset, end_offset) = offsets.ok_or("missing TextPositionSelector")?;
    let path = path.ok_or("missing NodePathSelector")?;
    if quote.is_empty() {
        return Err("empty quote".into());
    }
    Ok(Selector {
        page_url,
        path,
        quote,
        start_offset,
        end_offset,
    })
}

/// Live records sorted by creation time, then id, as pretty JSON.
pub fn export(records: &[Annotation]) -> String {
    let mut live: Vec<&Annotation> = records.iter().filter(|a| !a.deleted).collect();
    live.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.id.cmp(&b.id)));
    let out: Vec<InterchangeRecord> = live.into_iter().map(InterchangeRecord::from_annotation).collect();
    let mut text = serde_json::to_string_pretty(&out).expect("interchange records serialize");
    text.push('\n');
    text
}

/// Parses a whole file; any bad record rejects the file.
pub fn parse(text: &str) -> Result<Vec<Annotation>, Malformed> {
    let records: Vec<InterchangeRecord> =
        serde_json::from_str(text).map_err(|e| Malformed(e.to_string()))?;
    records
        .iter()
        .enumerate()
        .map(|(i, r)| r.to_annotation().map_err(|Malformed(m)| Malformed(format!("record {}: {m}", i + 1))))
        .collect()
}
