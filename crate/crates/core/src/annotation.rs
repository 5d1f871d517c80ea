//! Typed, stateful, multi-anchor annotations.
//!
//! Annotation values are immutable: every operation returns a new record
//! with `revision` bumped by exactly one, or an error. Question and to-do
//! annotations carry a small state machine whose terminal states are final.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::anchor::{AnchorError, Selector};

pub type AnnotationId = String;
pub type UserId = String;
pub type GroupId = String;

/// Appended between a question and its answer.
pub const ANSWER_SEPARATOR: &str = "\n\n[Answer] ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnnotationType {
    Normal,
    Highlight,
    Question,
    Issue,
    Todo,
}

impl AnnotationType {
    pub const ALL: [AnnotationType; 5] = [
        AnnotationType::Normal,
        AnnotationType::Highlight,
        AnnotationType::Question,
        AnnotationType::Issue,
        AnnotationType::Todo,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AnnotationType::Normal => "normal",
            AnnotationType::Highlight => "highlight",
            AnnotationType::Question => "question",
            AnnotationType::Issue => "issue",
            AnnotationType::Todo => "todo",
        }
    }

    fn initial_state(self) -> TypeState {
        match self {
            AnnotationType::Question => TypeState::Question(QuestionState::Unanswered),
            AnnotationType::Todo => TypeState::Todo(TodoState::Open),
            _ => TypeState::None,
        }
    }

    fn pinned_by_default(self) -> bool {
        matches!(self, AnnotationType::Question | AnnotationType::Todo)
    }
}

impl fmt::Display for AnnotationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AnnotationType {
    type Err = AnnotationError;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        AnnotationType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| AnnotationError::UnknownType(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QuestionState {
    Unanswered,
    Answered {
        answer_text: String,
        answered_at: DateTime<Utc>,
    },
    NotRelevant {
        at: DateTime<Utc>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TodoState {
    Open,
    Done { at: DateTime<Utc> },
}

/// Per-type state. Only questions and to-dos have one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "StateWire", into = "StateWire")]
pub enum TypeState {
    None,
    Question(QuestionState),
    Todo(TodoState),
}

impl TypeState {
    pub fn is_terminal(&self) -> bool {
        !matches!(
            self,
            TypeState::None
                | TypeState::Question(QuestionState::Unanswered)
                | TypeState::Todo(TodoState::Open)
        )
    }

    /// Wire name of the state, e.g. `unanswered` or `done`.
    pub fn status(&self) -> &'static str {
        match self {
            TypeState::None => "none",
            TypeState::Question(QuestionState::Unanswered) => "unanswered",
            TypeState::Question(QuestionState::Answered { .. }) => "answered",
            TypeState::Question(QuestionState::NotRelevant { .. }) => "not_relevant",
            TypeState::Todo(TodoState::Open) => "open",
            TypeState::Todo(TodoState::Done { .. }) => "done",
        }
    }

    fn matches(&self, kind: AnnotationType) -> bool {
        match self {
            TypeState::None => !matches!(kind, AnnotationType::Question | AnnotationType::Todo),
            TypeState::Question(_) => kind == AnnotationType::Question,
            TypeState::Todo(_) => kind == AnnotationType::Todo,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
enum StateWire {
    None,
    Unanswered,
    Answered {
        answer_text: String,
        answered_at: DateTime<Utc>,
    },
    NotRelevant {
        at: DateTime<Utc>,
    },
    Open,
    Done {
        at: DateTime<Utc>,
    },
}

impl From<StateWire> for TypeState {
    fn from(w: StateWire) -> Self {
        match w {
            StateWire::None => TypeState::None,
            StateWire::Unanswered => TypeState::Question(QuestionState::Unanswered),
            StateWire::Answered {
                answer_text,
                answered_at,
            } => TypeState::Question(QuestionState::Answered {
                answer_text,
                answered_at,
            }),
            StateWire::NotRelevant { at } => TypeState::Question(QuestionState::NotRelevant { at }),
            StateWire::Open => TypeState::Todo(TodoState::Open),
            StateWire::Done { at } => TypeState::Todo(TodoState::Done { at }),
        }
    }
}

impl From<TypeState> for StateWire {
    fn from(s: TypeState) -> Self {
        match s {
            TypeState::None => StateWire::None,
            TypeState::Question(QuestionState::Unanswered) => StateWire::Unanswered,
            TypeState::Question(QuestionState::Answered {
                answer_text,
                answered_at,
            }) => StateWire::Answered {
                answer_text,
                answered_at,
            },
            TypeState::Question(QuestionState::NotRelevant { at }) => StateWire::NotRelevant { at },
            TypeState::Todo(TodoState::Open) => StateWire::Open,
            TypeState::Todo(TodoState::Done { at }) => StateWire::Done { at },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Visibility {
    Public,
    Private,
    Group(GroupId),
}

/// Group membership as seen by the annotation rules.
pub trait Membership {
    fn group_exists(&self, group: &str) -> bool;
    fn is_member(&self, group: &str, user: &str) -> bool;
}

/// No groups at all.
pub struct NoGroups;

impl Membership for NoGroups {
    fn group_exists(&self, _: &str) -> bool {
        false
    }

    fn is_member(&self, _: &str, _: &str) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reply {
    pub id: String,
    pub author: UserId,
    pub body: String,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub id: AnnotationId,
    pub author: UserId,
    #[serde(rename = "type")]
    pub kind: AnnotationType,
    pub body: String,
    pub anchors: Vec<Selector>,
    pub tags: BTreeSet<String>,
    pub visibility: Visibility,
    /// The author's own pin. Other users' pins live outside the record.
    pub pinned: bool,
    pub state: TypeState,
    pub replies: Vec<Reply>,
    pub created_at: DateTime<Utc>,
    pub modified_at: DateTime<Utc>,
    pub revision: u64,
    pub deleted: bool,
}

/// Creation input; everything the author chooses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationDraft {
    pub author: UserId,
    #[serde(rename = "type")]
    pub kind: AnnotationType,
    #[serde(default)]
    pub body: String,
    pub anchors: Vec<Selector>,
    #[serde(default)]
    pub tags: BTreeSet<String>,
    #[serde(default = "default_visibility")]
    pub visibility: Visibility,
}

fn default_visibility() -> Visibility {
    Visibility::Public
}

/// A combined author edit; applied as a single revision.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationEdit {
    #[serde(default)]
    pub body: Option<String>,
    #[serde(default)]
    pub tags: Option<BTreeSet<String>>,
    #[serde(default)]
    pub add_tags: Vec<String>,
    #[serde(default)]
    pub anchors: Option<Vec<Selector>>,
}

impl AnnotationEdit {
    pub fn is_empty(&self) -> bool {
        self.body.is_none() && self.tags.is_none() && self.add_tags.is_empty() && self.anchors.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QuestionAction {
    Answer(String),
    Dismiss,
}

/// Result of a pin request: either the author's own record changes, or a
/// reader's pin set does.
#[derive(Debug, Clone, PartialEq, Eq)]
#[allow(clippy::large_enum_variant)]
pub enum PinChange {
    Record(Annotation),
    Reader { user: UserId, pinned: bool },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssueReport {
    pub annotation_id: AnnotationId,
    pub anchors: Vec<Selector>,
    pub body: String,
    pub author: UserId,
    pub exported_at: DateTime<Utc>,
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum AnnotationError {
    #[error("highlight annotations cannot have a body")]
    HighlightWithBody,
    #[error("an annotation needs at least one anchor")]
    NoAnchors,
    #[error("unknown group `{0}`")]
    UnknownGroup(String),
    #[error("unknown annotation type `{0}`")]
    UnknownType(String),
    #[error("only the author may do this")]
    NotAuthor,
    #[error("annotation has been deleted")]
    DeletedAnnotation,
    #[error("identical anchor already present")]
    DuplicateAnchor,
    #[error("annotation is not a question")]
    NotAQuestion,
    #[error("question is already resolved")]
    AlreadyResolved,
    #[error("annotation is not a to-do")]
    NotATodo,
    #[error("to-do is already done")]
    AlreadyDone,
    #[error("annotation is not readable by this user")]
    NoReadAccess,
    #[error("body must not be empty")]
    EmptyBody,
    #[error("annotation is not an issue")]
    NotAnIssue,
    #[error("invalid anchor: {0}")]
    InvalidAnchor(#[from] AnchorError),
    #[error("corrupt record: {0}")]
    Corrupt(String),
}

impl AnnotationError {
    pub fn code(&self) -> &'static str {
        match self {
            AnnotationError::HighlightWithBody => "highlight-with-body",
            AnnotationError::NoAnchors => "no-anchors",
            AnnotationError::UnknownGroup(_) => "unknown-group",
            AnnotationError::UnknownType(_) => "unknown-type",
            AnnotationError::NotAuthor => "not-author",
            AnnotationError::DeletedAnnotation => "deleted-annotation",
            AnnotationError::DuplicateAnchor => "duplicate-anchor",
            AnnotationError::NotAQuestion => "not-a-question",
            AnnotationError::AlreadyResolved => "already-resolved",
            AnnotationError::NotATodo => "not-a-todo",
            AnnotationError::AlreadyDone => "already-done",
            AnnotationError::NoReadAccess => "no-read-access",
            AnnotationError::EmptyBody => "empty-body",
            AnnotationError::NotAnIssue => "not-an-issue",
            AnnotationError::InvalidAnchor(e) => e.code(),
            AnnotationError::Corrupt(_) => "corrupt-record",
        }
    }
}

type Result<T> = std::result::Result<T, AnnotationError>;

fn check_anchors(anchors: &[Selector]) -> Result<()> {
    if anchors.is_empty() {
        return Err(AnnotationError::NoAnchors);
    }
    for (i, a) in anchors.iter().enumerate() {
        a.validate()?;
        if anchors[..i].contains(a) {
            return Err(AnnotationError::DuplicateAnchor);
        }
    }
    Ok(())
}

/// Builds a fresh annotation at revision 1.
pub fn create_annotation(
    draft: AnnotationDraft,
    id: AnnotationId,
    now: DateTime<Utc>,
    groups: &impl Membership,
) -> Result<Annotation> {
    if draft.kind == AnnotationType::Highlight && !draft.body.is_empty() {
        return Err(AnnotationError::HighlightWithBody);
    }
    check_anchors(&draft.anchors)?;
    if let Visibility::Group(g) = &draft.visibility {
        if !groups.group_exists(g) {
            return Err(AnnotationError::UnknownGroup(g.clone()));
        }
    }
    Ok(Annotation {
        id,
        author: draft.author,
        kind: draft.kind,
        body: draft.body,
        anchors: draft.anchors,
        tags: draft.tags,
        visibility: draft.visibility,
        pinned: draft.kind.pinned_by_default(),
        state: draft.kind.initial_state(),
        replies: Vec::new(),
        created_at: now,
        modified_at: now,
        revision: 1,
        deleted: false,
    })
}

impl Annotation {
    /// Public to everyone; private to the author; group to members and the author.
    pub fn readable_by(&self, user: Option<&str>, groups: &impl Membership) -> bool {
        match (&self.visibility, user) {
            (Visibility::Public, _) => true,
            (_, None) => false,
            (Visibility::Private, Some(u)) => u == self.author,
            (Visibility::Group(g), Some(u)) => u == self.author || groups.is_member(g, u),
        }
    }

    pub fn is_on_page(&self, page: &crate::url::PageUrl) -> bool {
        self.anchors.iter().any(|a| &a.page_url == page)
    }

    /// Every invariant a stored record must satisfy.
    pub fn check_invariants(&self) -> Result<()> {
        let corrupt = |m: &str| Err(AnnotationError::Corrupt(format!("{}: {m}", self.id)));
        if self.kind == AnnotationType::Highlight && !self.body.is_empty() {
            return corrupt("highlight with body");
        }
        if !self.state.matches(self.kind) {
            return corrupt("state does not match type");
        }
        if let TypeState::Question(QuestionState::Answered { answer_text, .. }) = &self.state {
            if answer_text.is_empty() {
                return corrupt("empty answer");
            }
        }
        if self.anchors.is_empty() {
            return corrupt("no anchors");
        }
        if self.revision == 0 {
            return corrupt("revision 0");
        }
        if self.modified_at < self.created_at {
            return corrupt("modified before created");
        }
        if self.replies.iter().any(|r| r.body.is_empty()) {
            return corrupt("empty reply");
        }
        Ok(())
    }

    fn next_revision(&self, now: DateTime<Utc>) -> Annotation {
        let mut next = self.clone();
        next.revision += 1;
        next.modified_at = now.max(self.modified_at);
        next
    }

    fn authored_live(&self, editor: &str) -> Result<()> {
        if self.deleted {
            return Err(AnnotationError::DeletedAnnotation);
        }
        if editor != self.author {
            return Err(AnnotationError::NotAuthor);
        }
        Ok(())
    }

    /// Replaces the body. A highlight given text becomes a normal annotation.
    pub fn edit_body(&self, editor: &str, new_body: &str, now: DateTime<Utc>) -> Result<Annotation> {
        self.apply_edit(
            editor,
            AnnotationEdit {
                body: Some(new_body.to_string()),
                ..Default::default()
            },
            now,
        )
    }

    pub fn apply_edit(&self, editor: &str, edit: AnnotationEdit, now: DateTime<Utc>) -> Result<Annotation> {
        self.authored_live(editor)?;
        let mut next = self.next_revision(now);
        if let Some(body) = edit.body {
            if next.kind == AnnotationType::Highlight && !body.is_empty() {
                next.kind = AnnotationType::Normal;
            }
            next.body = body;
        }
        if let Some(tags) = edit.tags {
            next.tags = tags;
        }
        next.tags.extend(edit.add_tags);
        if let Some(anchors) = edit.anchors {
            check_anchors(&anchors)?;
            next.anchors = anchors;
        }
        Ok(next)
    }

    pub fn add_anchor(&self, editor: &str, selector: Selector, now: DateTime<Utc>) -> Result<Annotation> {
        self.authored_live(editor)?;
        selector.validate()?;
        if self.anchors.contains(&selector) {
            return Err(AnnotationError::DuplicateAnchor);
        }
        let mut next = self.next_revision(now);
        next.anchors.push(selector);
        Ok(next)
    }

    /// Answers or dismisses an unanswered question; both unpin it.
    pub fn transition_question(
        &self,
        editor: &str,
        action: QuestionAction,
        now: DateTime<Utc>,
    ) -> Result<Annotation> {
        if self.deleted {
            return Err(AnnotationError::DeletedAnnotation);
        }
        let TypeState::Question(state) = &self.state else {
            return Err(AnnotationError::NotAQuestion);
        };
        if *state != QuestionState::Unanswered {
            return Err(AnnotationError::AlreadyResolved);
        }
        if editor != self.author {
            return Err(AnnotationError::NotAuthor);
        }
        let mut next = self.next_revision(now);
        next.pinned = false;
        match action {
            QuestionAction::Answer(text) => {
                if text.is_empty() {
                    return Err(AnnotationError::EmptyBody);
                }
                next.body.push_str(ANSWER_SEPARATOR);
                next.body.push_str(&text);
                next.state = TypeState::Question(QuestionState::Answered {
                    answer_text: text,
                    answered_at: next.modified_at,
                });
            }
            QuestionAction::Dismiss => {
                next.state = TypeState::Question(QuestionState::NotRelevant { at: next.modified_at });
            }
        }
        Ok(next)
    }

    pub fn complete_todo(&self, editor: &str, now: DateTime<Utc>) -> Result<Annotation> {
        if self.deleted {
            return Err(AnnotationError::DeletedAnnotation);
        }
        let TypeState::Todo(state) = &self.state else {
            return Err(AnnotationError::NotATodo);
        };
        if *state != TodoState::Open {
            return Err(AnnotationError::AlreadyDone);
        }
        if editor != self.author {
            return Err(AnnotationError::NotAuthor);
        }
        let mut next = self.next_revision(now);
        next.pinned = false;
        next.state = TypeState::Todo(TodoState::Done { at: next.modified_at });
        Ok(next)
    }

    /// Pins or unpins for `user`, who needs read access.
    pub fn set_pinned(
        &self,
        user: &str,
        flag: bool,
        groups: &impl Membership,
        now: DateTime<Utc>,
    ) -> Result<PinChange> {
        if self.deleted {
            return Err(AnnotationError::DeletedAnnotation);
        }
        if !self.readable_by(Some(user), groups) {
            return Err(AnnotationError::NoReadAccess);
        }
        if user == self.author {
            if self.pinned == flag {
                return Ok(PinChange::Record(self.clone()));
            }
            let mut next = self.next_revision(now);
            next.pinned = flag;
            Ok(PinChange::Record(next))
        } else {
            Ok(PinChange::Reader {
                user: user.to_string(),
                pinned: flag,
            })
        }
    }

    pub fn add_reply(
        &self,
        author: &str,
        body: &str,
        groups: &impl Membership,
        now: DateTime<Utc>,
    ) -> Result<Annotation> {
        if self.deleted {
            return Err(AnnotationError::DeletedAnnotation);
        }
        if !self.readable_by(Some(author), groups) {
            return Err(AnnotationError::NoReadAccess);
        }
        if body.trim().is_empty() {
            return Err(AnnotationError::EmptyBody);
        }
        let mut next = self.next_revision(now);
        next.replies.push(Reply {
            id: format!("{}-r{}", self.id, self.replies.len() + 1),
            author: author.to_string(),
            body: body.to_string(),
            created_at: next.modified_at,
        });
        Ok(next)
    }

    /// Tombstones the annotation. Deleting a tombstone is a no-op.
    pub fn delete(&self, editor: &str, now: DateTime<Utc>) -> Result<Annotation> {
        if editor != self.author {
            return Err(AnnotationError::NotAuthor);
        }
        if self.deleted {
            return Ok(self.clone());
        }
        let mut next = self.next_revision(now);
        next.deleted = true;
        Ok(next)
    }

    /// Replaces anchors by index after re-anchoring; not an author action.
    pub fn relocate_anchors(&self, moved: &[(usize, Selector)], now: DateTime<Utc>) -> Annotation {
        let mut next = self.next_revision(now);
        for (i, sel) in moved {
            next.anchors[*i] = sel.clone();
        }
        next
    }

    pub fn export_issue_report(&self, now: DateTime<Utc>) -> Result<IssueReport> {
        if self.kind != AnnotationType::Issue {
            return Err(AnnotationError::NotAnIssue);
        }
        Ok(IssueReport {
            annotation_id: self.id.clone(),
            anchors: self.anchors.clone(),
            body: self.body.clone(),
            author: self.author.clone(),
            exported_at: now,
        })
    }

    /// Whitespace-delimited word count of the body.
    pub fn body_words(&self) -> usize {
        self.body.split_whitespace().count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anchor::{create_selector, DocumentSnapshot};
    use chrono::TimeZone;
    use std::collections::HashMap;

    struct Groups(HashMap<&'static str, Vec<&'static str>>);

    impl Membership for Groups {
        fn group_exists(&self, g: &str) -> bool {
            self.0.contains_key(g)
        }
        fn is_member(&self, g: &str, u: &str) -> bool {
            self.0.get(g).is_some_and(|m| m.contains(&u))
        }
    }

    fn t(s: i64) -> DateTime<Utc> {
        Utc.timestamp_opt(1_700_000_000 + s, 0).unwrap()
    }

    fn sel(page: &str, start: usize) -> Selector {
        let doc = DocumentSnapshot::parse(
            "<html><body><p>Set columns to change rows.</p></body></html>",
            page,
        )
        .unwrap();
        let p = doc.find_by_tag("p").next().unwrap();
        create_selector(&doc, p, start, 7).unwrap()
    }

    fn draft(kind: AnnotationType, body: &str) -> AnnotationDraft {
        AnnotationDraft {
            author: "u1".into(),
            kind,
            body: body.into(),
            anchors: vec![sel("https://piling.example/docs", 4)],
            tags: BTreeSet::new(),
            visibility: Visibility::Public,
        }
    }

    fn make(kind: AnnotationType, body: &str) -> Annotation {
        create_annotation(draft(kind, body), "a1".into(), t(0), &NoGroups).unwrap()
    }

    #[test]
    fn questions_and_todos_are_pinned_by_default() {
        let q = make(AnnotationType::Question, "How do I use this?");
        assert!(q.pinned);
        assert_eq!(q.state, TypeState::Question(QuestionState::Unanswered));
        assert_eq!(q.revision, 1);
        assert!(make(AnnotationType::Todo, "").pinned);
        assert!(!make(AnnotationType::Normal, "x").pinned);
    }

    #[test]
    fn highlight_rules() {
        let h = make(AnnotationType::Highlight, "");
        assert_eq!(h.body, "");
        assert_eq!(
            create_annotation(draft(AnnotationType::Highlight, "note"), "a".into(), t(0), &NoGroups),
            Err(AnnotationError::HighlightWithBody)
        );
        let edited = h.edit_body("u1", "use this to create rows", t(5)).unwrap();
        assert_eq!(edited.kind, AnnotationType::Normal);
        assert_eq!(edited.revision, 2);
    }

    #[test]
    fn creation_errors() {
        let mut d = draft(AnnotationType::Normal, "x");
        d.anchors.clear();
        assert_eq!(create_annotation(d, "a".into(), t(0), &NoGroups), Err(AnnotationError::NoAnchors));
        let mut d = draft(AnnotationType::Normal, "x");
        d.visibility = Visibility::Group("g9".into());
        assert_eq!(
            create_annotation(d, "a".into(), t(0), &NoGroups),
            Err(AnnotationError::UnknownGroup("g9".into()))
        );
    }

    #[test]
    fn edit_permissions() {
        let a = make(AnnotationType::Normal, "first");
        let b = a.edit_body("u1", "second", t(1)).unwrap();
        assert_eq!((b.body.as_str(), b.revision), ("second", 2));
        assert_eq!(a.edit_body("u2", "x", t(1)), Err(AnnotationError::NotAuthor));
        let gone = a.delete("u1", t(2)).unwrap();
        assert_eq!(gone.edit_body("u1", "x", t(3)), Err(AnnotationError::DeletedAnnotation));
    }

    #[test]
    fn multi_anchor() {
        let a = make(AnnotationType::Normal, "x");
        let b = a.add_anchor("u1", sel("https://piling.example/api", 4), t(1)).unwrap();
        assert_eq!(b.anchors.len(), 2);
        assert_ne!(b.anchors[0].page_url, b.anchors[1].page_url);
        let mut c = b.clone();
        for (i, page) in ["a", "b", "c"].iter().enumerate() {
            c = c
                .add_anchor("u1", sel(&format!("https://piling.example/{page}"), 4), t(2 + i as i64))
                .unwrap();
        }
        assert_eq!(c.anchors.len(), 5);
        assert_eq!(
            c.add_anchor("u1", sel("https://piling.example/api", 4), t(9)),
            Err(AnnotationError::DuplicateAnchor)
        );
        assert_eq!(
            a.add_anchor("u2", sel("https://piling.example/z", 4), t(9)),
            Err(AnnotationError::NotAuthor)
        );
    }

    #[test]
    fn answering_appends_and_unpins() {
        let q = make(AnnotationType::Question, "How do I set rows?");
        let a = q
            .transition_question("u1", QuestionAction::Answer("use columns: 2".into()), t(1))
            .unwrap();
        assert_eq!(a.body, "How do I set rows?\n\n[Answer] use columns: 2");
        assert!(!a.pinned);
        assert!(matches!(a.state, TypeState::Question(QuestionState::Answered { ref answer_text, .. }) if answer_text == "use columns: 2"));
        assert_eq!(
            a.transition_question("u1", QuestionAction::Answer("again".into()), t(2)),
            Err(AnnotationError::AlreadyResolved)
        );
        let d = q.transition_question("u1", QuestionAction::Dismiss, t(1)).unwrap();
        assert!(matches!(d.state, TypeState::Question(QuestionState::NotRelevant { .. })));
        assert!(!d.pinned);
        assert_eq!(
            q.transition_question("u2", QuestionAction::Dismiss, t(1)),
            Err(AnnotationError::NotAuthor)
        );
        assert_eq!(
            make(AnnotationType::Todo, "").transition_question("u1", QuestionAction::Dismiss, t(1)),
            Err(AnnotationError::NotAQuestion)
        );
    }

    #[test]
    fn todo_completion() {
        let todo = make(AnnotationType::Todo, "try arrangeBy");
        let done = todo.complete_todo("u1", t(1)).unwrap();
        assert!(matches!(done.state, TypeState::Todo(TodoState::Done { .. })));
        assert!(!done.pinned);
        assert_eq!(done.complete_todo("u1", t(2)), Err(AnnotationError::AlreadyDone));
        assert_eq!(
            make(AnnotationType::Question, "q").complete_todo("u1", t(1)),
            Err(AnnotationError::NotATodo)
        );
    }

    #[test]
    fn pins_and_access() {
        let groups = Groups(HashMap::from([("g1", vec!["u2"])]));
        let a = make(AnnotationType::Normal, "x");
        assert_eq!(
            a.set_pinned("u2", true, &groups, t(1)),
            Ok(PinChange::Reader { user: "u2".into(), pinned: true })
        );
        let mut private = a.clone();
        private.visibility = Visibility::Private;
        assert_eq!(private.set_pinned("u2", true, &groups, t(1)), Err(AnnotationError::NoReadAccess));
        let mut grouped = a.clone();
        grouped.visibility = Visibility::Group("g1".into());
        assert!(grouped.readable_by(Some("u2"), &groups));
        assert!(!grouped.readable_by(Some("u3"), &groups));
        assert!(!grouped.readable_by(None, &groups));
        let PinChange::Record(own) = a.set_pinned("u1", true, &groups, t(1)).unwrap() else {
            panic!("author pin changes the record");
        };
        assert!(own.pinned);
        assert_eq!(own.revision, 2);
    }

    #[test]
    fn replies() {
        let a = make(AnnotationType::Normal, "x");
        let r = a.add_reply("u2", "thanks, this fixed aggregateColorMap", &NoGroups, t(1)).unwrap();
        assert_eq!(r.replies.len(), 1);
        assert_eq!(r.revision, 2);
        assert_eq!(a.add_reply("u2", "", &NoGroups, t(1)), Err(AnnotationError::EmptyBody));
        let gone = a.delete("u1", t(1)).unwrap();
        assert_eq!(gone.add_reply("u2", "hi", &NoGroups, t(2)), Err(AnnotationError::DeletedAnnotation));
    }

    #[test]
    fn deletion_is_idempotent() {
        let a = make(AnnotationType::Normal, "x");
        assert_eq!(a.delete("u2", t(1)), Err(AnnotationError::NotAuthor));
        let once = a.delete("u1", t(1)).unwrap();
        assert!(once.deleted);
        assert_eq!(once.delete("u1", t(2)).unwrap(), once);
    }

    #[test]
    fn issue_reports() {
        let issue = make(AnnotationType::Issue, "this code example does not compile");
        let issue = issue.add_anchor("u1", sel("https://piling.example/docs", 0), t(1)).unwrap();
        let report = issue.export_issue_report(t(2)).unwrap();
        assert_eq!(report.anchors.len(), 2);
        assert_eq!(report.anchors[0].quote, "columns");
        assert_eq!(report.body, issue.body);
        assert_eq!(
            make(AnnotationType::Normal, "x").export_issue_report(t(2)),
            Err(AnnotationError::NotAnIssue)
        );
    }

    #[test]
    fn json_shape() {
        let q = make(AnnotationType::Question, "How do I use this?");
        let v = serde_json::to_value(&q).unwrap();
        let keys: BTreeSet<_> = v.as_object().unwrap().keys().cloned().collect();
        let want: BTreeSet<String> = [
            "id", "author", "type", "body", "anchors", "tags", "visibility", "pinned", "state",
            "replies", "created_at", "modified_at", "revision", "deleted",
        ]
        .into_iter()
        .map(String::from)
        .collect();
        assert_eq!(keys, want);
        assert_eq!(v["type"], "question");
        assert_eq!(v["state"]["status"], "unanswered");
        assert_eq!(v["visibility"], "public");
        assert_eq!(v["created_at"], "2023-11-14T22:13:20Z");
        let back: Annotation = serde_json::from_value(v).unwrap();
        assert_eq!(back, q);
        let g = serde_json::to_value(Visibility::Group("g1".into())).unwrap();
        assert_eq!(g, serde_json::json!({"group": "g1"}));
    }
}
