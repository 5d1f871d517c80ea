//! Durable annotation store.
//!
//! Layout of a store directory:
//!
//! ```text
//! log.jsonl                  append-only records since the last compaction
//! snapshot.jsonl             full state as of the last compaction
//! documents/<url-hash>/<n>.html
//! lock                       held exclusively while the store is open
//! ```
//!
//! Writers are serialized by one mutex; every write is appended (and
//! optionally fsynced) before it becomes visible to readers and before its
//! change events are published.

mod feed;
mod log;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use feed::{apply_event, ChangeEvent, ChangeKind, Subscription};
pub use log::{DocumentRecord, PinRecord, Record, LOG_FILE, SNAPSHOT_FILE};

use crate::anchor::{resolve_selector, AnchorError, DocumentSnapshot, Resolution, ResolutionStatus};
use crate::annotation::{
    create_annotation, Annotation, AnnotationDraft, AnnotationEdit, AnnotationError, AnnotationId,
    GroupId, IssueReport, Membership, PinChange, QuestionAction, UserId, Visibility,
};
use crate::search::{self, SearchError, SearchIndex, SearchQuery, SearchScope};
use crate::url::{PageUrl, SitePrefix};
use feed::Feeds;
use log::LogWriter;

const DOCUMENT_HISTORY: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct User {
    pub id: UserId,
    pub display_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Group {
    pub id: GroupId,
    pub name: String,
    pub members: BTreeSet<UserId>,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("store at {0} is locked by another process")]
    Locked(String),
    #[error("corrupt store file {file} at line {line}: {message}")]
    Corrupt { file: String, line: usize, message: String },
    #[error("revision conflict: expected {expected}, stored {actual}")]
    RevisionConflict { expected: u64, actual: u64 },
    #[error("unknown author `{0}`")]
    UnknownAuthor(String),
    #[error("unknown user `{0}`")]
    UnknownUser(String),
    #[error("unknown group `{0}`")]
    UnknownGroup(String),
    #[error("annotation `{0}` not found")]
    NotFound(String),
    #[error("no document snapshot for {0}")]
    NoSnapshot(String),
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
    #[error(transparent)]
    Anchor(#[from] AnchorError),
    #[error(transparent)]
    Search(#[from] SearchError),
}

impl StoreError {
    pub fn code(&self) -> &'static str {
        match self {
            StoreError::Io(_) => "io-error",
            StoreError::Json(_) => "json-error",
            StoreError::Locked(_) => "store-locked",
            StoreError::Corrupt { .. } => "corrupt-store",
            StoreError::RevisionConflict { .. } => "revision-conflict",
            StoreError::UnknownAuthor(_) => "unknown-author",
            StoreError::UnknownUser(_) => "unknown-user",
            StoreError::UnknownGroup(_) => "unknown-group",
            StoreError::NotFound(_) => "not-found",
            StoreError::NoSnapshot(_) => "no-snapshot",
            StoreError::InvalidRecord(_) => "invalid-record",
            StoreError::Annotation(e) => e.code(),
            StoreError::Anchor(e) => e.code(),
            StoreError::Search(e) => e.code(),
        }
    }
}

pub type Result<T> = std::result::Result<T, StoreError>;

pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

#[derive(Clone)]
pub struct StoreOptions {
    /// fsync after every append.
    pub fsync: bool,
    /// Compact once the log holds this many records.
    pub compact_after: usize,
    /// Per-subscriber event buffer; a subscriber that falls this far behind is dropped.
    pub feed_buffer: usize,
    pub clock: Clock,
}

impl Default for StoreOptions {
    fn default() -> Self {
        StoreOptions {
            fsync: true,
            compact_after: 10_000,
            feed_buffer: 1024,
            clock: Arc::new(Utc::now),
        }
    }
}

#[derive(Debug, Clone)]
struct StoredDocument {
    record: DocumentRecord,
    snapshot: Arc<DocumentSnapshot>,
}

#[derive(Default)]
struct State {
    users: BTreeMap<UserId, User>,
    groups: BTreeMap<GroupId, Group>,
    annotations: BTreeMap<AnnotationId, Annotation>,
    pins: BTreeMap<UserId, BTreeSet<AnnotationId>>,
    documents: BTreeMap<PageUrl, VecDeque<StoredDocument>>,
    index: SearchIndex,
    next_annotation: u64,
    next_group: u64,
}

impl Membership for State {
    fn group_exists(&self, group: &str) -> bool {
        self.groups.contains_key(group)
    }

    fn is_member(&self, group: &str, user: &str) -> bool {
        self.groups.get(group).is_some_and(|g| g.members.contains(user))
    }
}

fn counter_of(id: &str, prefix: &str) -> Option<u64> {
    id.strip_prefix(prefix)?.parse().ok()
}

impl State {
    fn apply(&mut self, record: Record) {
        match record {
            Record::Annotation(a) => {
                if let Some(n) = counter_of(&a.id, "ann-") {
                    self.next_annotation = self.next_annotation.max(n);
                }
                self.index.index_annotation(&a);
                self.annotations.insert(a.id.clone(), a);
            }
            Record::Pin(p) => {
                let set = self.pins.entry(p.user.clone()).or_default();
                if p.pinned {
                    set.insert(p.annotation);
                } else {
                    set.remove(&p.annotation);
                    if set.is_empty() {
                        self.pins.remove(&p.user);
                    }
                }
            }
            Record::Group(g) => {
                if let Some(n) = counter_of(&g.id, "grp-") {
                    self.next_group = self.next_group.max(n);
                }
                self.groups.insert(g.id.clone(), g);
            }
            Record::User(u) => {
                self.users.insert(u.id.clone(), u);
            }
            Record::Document(_) => unreachable!("documents are applied with their snapshot"),
        }
    }

    fn apply_document(&mut self, doc: StoredDocument) -> Vec<DocumentRecord> {
        let history = self.documents.entry(doc.record.url.clone()).or_default();
        history.push_back(doc);
        let mut evicted = Vec::new();
        while history.len() > DOCUMENT_HISTORY {
            evicted.extend(history.pop_front().map(|d| d.record));
        }
        evicted
    }

    fn visible<'a>(&'a self, requester: Option<&'a str>) -> impl Iterator<Item = &'a Annotation> + 'a {
        self.annotations
            .values()
            .filter(move |a| !a.deleted && a.readable_by(requester, self))
    }

    fn latest_document(&self, url: &PageUrl) -> Option<&StoredDocument> {
        self.documents.get(url).and_then(|h| h.back())
    }

    /// Full state as log records, for compaction.
    fn records(&self) -> Vec<Record> {
        let mut out: Vec<Record> = Vec::new();
        out.extend(self.users.values().cloned().map(Record::User));
        out.extend(self.groups.values().cloned().map(Record::Group));
        out.extend(self.annotations.values().cloned().map(Record::Annotation));
        for (user, ids) in &self.pins {
            out.extend(ids.iter().map(|id| {
                Record::Pin(PinRecord {
                    user: user.clone(),
                    annotation: id.clone(),
                    pinned: true,
                })
            }));
        }
        for history in self.documents.values() {
            out.extend(history.iter().map(|d| Record::Document(d.record.clone())));
        }
        out
    }
}

struct Writer {
    log: LogWriter,
    seq: u64,
}

/// Outcome of re-anchoring one anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorReport {
    pub annotation_id: AnnotationId,
    pub anchor_index: usize,
    pub resolution: Resolution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReanchorSummary {
    pub url: PageUrl,
    pub attached: usize,
    pub relocated: usize,
    pub broken: usize,
    pub anchors: Vec<AnchorReport>,
}

pub struct Store {
    dir: PathBuf,
    opts: StoreOptions,
    writer: Mutex<Writer>,
    state: RwLock<State>,
    feeds: Mutex<Feeds>,
    _lock: File,
}

fn url_hash(url: &PageUrl) -> String {
    Sha256::digest(url.as_str().as_bytes())
        .iter()
        .take(8)
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl Store {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        Self::open_with(dir, StoreOptions::default())
    }

    pub fn open_with(dir: impl AsRef<Path>, opts: StoreOptions) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let lock = File::options()
            .create(true)
            .truncate(false)
            .write(true)
            .open(dir.join("lock"))?;
        if lock.try_lock().is_err() {
            return Err(StoreError::Locked(dir.display().to_string()));
        }

        let snapshot = log::read_records(&dir.join(SNAPSHOT_FILE))?;
        let base = snapshot.iter().map(|(s, _)| *s).max().unwrap_or(0);
        let logged = log::read_records(&dir.join(LOG_FILE))?;
        let log_lines = logged.len();
        let mut state = State::default();
        let mut docs: BTreeMap<PageUrl, Vec<DocumentRecord>> = BTreeMap::new();
        let mut seq = base;
        for (s, record) in snapshot
            .into_iter()
            .chain(logged.into_iter().filter(|(s, _)| *s > base))
        {
            seq = seq.max(s);
            match record {
                Record::Document(d) => docs.entry(d.url.clone()).or_default().push(d),
                other => state.apply(other),
            }
        }
        for (_, mut records) in docs {
            records.sort_by_key(|r| r.version);
            let keep = records.len().saturating_sub(DOCUMENT_HISTORY);
            for record in records.into_iter().skip(keep) {
                let html = fs::read_to_string(dir.join(&record.file))?;
                let snapshot = DocumentSnapshot::parse_at(&html, record.url.as_str(), record.fetched_at)?;
                state.apply_document(StoredDocument {
                    record,
                    snapshot: Arc::new(snapshot),
                });
            }
        }

        let log = LogWriter::open(dir.join(LOG_FILE), opts.fsync, log_lines)?;
        Ok(Store {
            dir,
            opts,
            writer: Mutex::new(Writer { log, seq }),
            state: RwLock::new(state),
            feeds: Mutex::new(Feeds::default()),
            _lock: lock,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn now(&self) -> DateTime<Utc> {
        (self.opts.clock)()
    }

    /// Appends `records`, then applies them. Returns the seq of the last one.
    fn commit(&self, w: &mut Writer, records: Vec<Record>) -> Result<u64> {
        let mut lines = Vec::with_capacity(records.len());
        let mut seq = w.seq;
        for r in &records {
            seq += 1;
            lines.push(log::encode(seq, r)?);
        }
        w.log.append(&lines)?;
        w.seq = seq;
        let mut st = self.state.write();
        for r in records {
            st.apply(r);
        }
        Ok(seq)
    }

    fn maybe_compact(&self, w: &mut Writer) -> Result<()> {
        if w.log.lines() >= self.opts.compact_after {
            self.compact_locked(w)?;
        }
        Ok(())
    }

    /// Writes the full state to the snapshot file and empties the log.
    pub fn compact(&self) -> Result<()> {
        let mut w = self.writer.lock();
        self.compact_locked(&mut w)
    }

    fn compact_locked(&self, w: &mut Writer) -> Result<()> {
        let records = self.state.read().records();
        let lines = records
            .iter()
            .map(|r| log::encode(w.seq, r))
            .collect::<Result<Vec<_>>>()?;
        w.log.compact(&self.dir, &lines)
    }

    fn write_annotation(
        &self,
        w: &mut Writer,
        previous: Option<&Annotation>,
        next: Annotation,
    ) -> Result<Annotation> {
        let kind = match previous {
            None => ChangeKind::Created,
            Some(p) if next.deleted && !p.deleted => ChangeKind::Deleted,
            Some(_) => ChangeKind::Updated,
        };
        let seq = self.commit(w, vec![Record::Annotation(next.clone())])?;
        let pages: BTreeSet<&PageUrl> = previous
            .into_iter()
            .flat_map(|p| p.anchors.iter())
            .chain(next.anchors.iter())
            .map(|s| &s.page_url)
            .collect();
        let event = ChangeEvent {
            kind,
            annotation: next.clone(),
            seq,
        };
        {
            let st = self.state.read();
            let mut feeds = self.feeds.lock();
            for page in pages {
                feeds.publish(page, &event, &*st);
            }
        }
        self.maybe_compact(w)?;
        Ok(next)
    }

    // ---- users and groups ----

    /// Adds a user, or renames an existing one.
    pub fn put_user(&self, user: User) -> Result<User> {
        let mut w = self.writer.lock();
        if self.state.read().users.get(&user.id) == Some(&user) {
            return Ok(user);
        }
        self.commit(&mut w, vec![Record::User(user.clone())])?;
        self.maybe_compact(&mut w)?;
        Ok(user)
    }

    /// Registers `id` with its id as display name unless it already exists.
    pub fn ensure_user(&self, id: &str) -> Result<User> {
        if let Some(u) = self.user(id) {
            return Ok(u);
        }
        self.put_user(User {
            id: id.to_string(),
            display_name: id.to_string(),
        })
    }

    pub fn user(&self, id: &str) -> Option<User> {
        self.state.read().users.get(id).cloned()
    }

    pub fn users(&self) -> Vec<User> {
        self.state.read().users.values().cloned().collect()
    }

    pub fn create_group(&self, name: &str, members: impl IntoIterator<Item = UserId>) -> Result<Group> {
        let mut w = self.writer.lock();
        let group = {
            let st = self.state.read();
            let members: BTreeSet<UserId> = members.into_iter().collect();
            if members.is_empty() {
                return Err(StoreError::InvalidRecord("a group needs at least one member".into()));
            }
            if let Some(unknown) = members.iter().find(|m| !st.users.contains_key(*m)) {
                return Err(StoreError::UnknownUser(unknown.clone()));
            }
            Group {
                id: format!("grp-{:04}", st.next_group + 1),
                name: name.to_string(),
                members,
            }
        };
        self.commit(&mut w, vec![Record::Group(group.clone())])?;
        self.maybe_compact(&mut w)?;
        Ok(group)
    }

    pub fn add_member(&self, group: &str, user: &str) -> Result<Group> {
        let mut w = self.writer.lock();
        let next = {
            let st = self.state.read();
            let mut g = st
                .groups
                .get(group)
                .cloned()
                .ok_or_else(|| StoreError::UnknownGroup(group.to_string()))?;
            if !st.users.contains_key(user) {
                return Err(StoreError::UnknownUser(user.to_string()));
            }
            if !g.members.insert(user.to_string()) {
                return Ok(g);
            }
            g
        };
        self.commit(&mut w, vec![Record::Group(next.clone())])?;
        self.maybe_compact(&mut w)?;
        Ok(next)
    }

    pub fn group(&self, id: &str) -> Option<Group> {
        self.state.read().groups.get(id).cloned()
    }

    /// Groups `user` belongs to.
    pub fn list_groups(&self, user: &str) -> Vec<Group> {
        self.state
            .read()
            .groups
            .values()
            .filter(|g| g.members.contains(user))
            .cloned()
            .collect()
    }

    // ---- annotation writes ----

    /// Stores `record` if the stored revision is `expected_revision` (0 to create).
    pub fn put_annotation(&self, record: Annotation, expected_revision: u64) -> Result<Annotation> {
        let mut w = self.writer.lock();
        let previous = {
            let st = self.state.read();
            if !st.users.contains_key(&record.author) {
                return Err(StoreError::UnknownAuthor(record.author.clone()));
            }
            record.check_invariants()?;
            let previous = st.annotations.get(&record.id).cloned();
            let actual = previous.as_ref().map_or(0, |p| p.revision);
            if actual != expected_revision {
                return Err(StoreError::RevisionConflict {
                    expected: expected_revision,
                    actual,
                });
            }
            if record.revision != expected_revision + 1 {
                return Err(StoreError::InvalidRecord(format!(
                    "revision must be {} for expected revision {expected_revision}",
                    expected_revision + 1
                )));
            }
            if let Some(p) = &previous {
                if p.author != record.author || p.created_at != record.created_at {
                    return Err(StoreError::InvalidRecord("author and created_at are immutable".into()));
                }
            } else if let Visibility::Group(g) = &record.visibility {
                if !st.group_exists(g) {
                    return Err(AnnotationError::UnknownGroup(g.clone()).into());
                }
            }
            previous
        };
        self.write_annotation(&mut w, previous.as_ref(), record)
    }

    /// Creates an annotation with a fresh id and server timestamps.
    pub fn create_annotation(&self, draft: AnnotationDraft) -> Result<Annotation> {
        let mut w = self.writer.lock();
        let record = {
            let st = self.state.read();
            if !st.users.contains_key(&draft.author) {
                return Err(StoreError::UnknownAuthor(draft.author.clone()));
            }
            let id = format!("ann-{:06}", st.next_annotation + 1);
            create_annotation(draft, id, self.now(), &*st)?
        };
        self.write_annotation(&mut w, None, record)
    }

    /// Stores a foreign record under a fresh id, keeping its content,
    /// timestamps and state but restarting at revision 1.
    pub fn import_annotation(&self, mut record: Annotation) -> Result<Annotation> {
        let mut w = self.writer.lock();
        {
            let st = self.state.read();
            if !st.users.contains_key(&record.author) {
                return Err(StoreError::UnknownAuthor(record.author.clone()));
            }
            if let Visibility::Group(g) = &record.visibility {
                if !st.group_exists(g) {
                    return Err(AnnotationError::UnknownGroup(g.clone()).into());
                }
            }
            record.id = format!("ann-{:06}", st.next_annotation + 1);
            record.revision = 1;
            for (i, r) in record.replies.iter_mut().enumerate() {
                r.id = format!("{}-r{}", record.id, i + 1);
            }
            record.check_invariants()?;
        }
        self.write_annotation(&mut w, None, record)
    }

    /// Applies `op` to the current record of `id` as `requester`, who must be
    /// able to read it. A no-op result is not written.
    fn mutate(
        &self,
        id: &str,
        requester: &str,
        expected_revision: Option<u64>,
        op: impl FnOnce(&Annotation, &State, DateTime<Utc>) -> Result<Annotation>,
    ) -> Result<Annotation> {
        let mut w = self.writer.lock();
        let (current, next) = {
            let st = self.state.read();
            let current = st
                .annotations
                .get(id)
                .filter(|a| a.readable_by(Some(requester), &*st))
                .cloned()
                .ok_or_else(|| StoreError::NotFound(id.to_string()))?;
            if let Some(expected) = expected_revision {
                if current.revision != expected {
                    return Err(StoreError::RevisionConflict {
                        expected,
                        actual: current.revision,
                    });
                }
            }
            let next = op(&current, &st, self.now())?;
            (current, next)
        };
        if next == current {
            return Ok(current);
        }
        self.write_annotation(&mut w, Some(&current), next)
    }

    pub fn edit_annotation(
        &self,
        id: &str,
        editor: &str,
        edit: AnnotationEdit,
        expected_revision: Option<u64>,
    ) -> Result<Annotation> {
        self.mutate(id, editor, expected_revision, |a, _, now| {
            Ok(a.apply_edit(editor, edit, now)?)
        })
    }

    pub fn add_anchor(&self, id: &str, editor: &str, selector: crate::anchor::Selector) -> Result<Annotation> {
        self.mutate(id, editor, None, |a, _, now| Ok(a.add_anchor(editor, selector, now)?))
    }

    pub fn transition_question(&self, id: &str, editor: &str, action: QuestionAction) -> Result<Annotation> {
        self.mutate(id, editor, None, |a, _, now| {
            Ok(a.transition_question(editor, action, now)?)
        })
    }

    pub fn complete_todo(&self, id: &str, editor: &str) -> Result<Annotation> {
        self.mutate(id, editor, None, |a, _, now| Ok(a.complete_todo(editor, now)?))
    }

    pub fn add_reply(&self, id: &str, author: &str, body: &str) -> Result<Annotation> {
        self.mutate(id, author, None, |a, st, now| Ok(a.add_reply(author, body, st, now)?))
    }

    pub fn delete_annotation(&self, id: &str, editor: &str) -> Result<Annotation> {
        self.mutate(id, editor, None, |a, _, now| Ok(a.delete(editor, now)?))
    }

    /// Pins or unpins `id` for `user`. Returns the (possibly unchanged) record.
    pub fn set_pinned(&self, id: &str, user: &str, flag: bool) -> Result<Annotation> {
        let mut w = self.writer.lock();
        let (current, change) = {
            let st = self.state.read();
            let current = st
                .annotations
                .get(id)
                .cloned()
                .ok_or_else(|| StoreError::NotFound(id.to_string()))?;
            let change = current.set_pinned(user, flag, &*st, self.now())?;
            if let PinChange::Reader { .. } = change {
                let has = st.pins.get(user).is_some_and(|p| p.contains(id));
                if has == flag {
                    return Ok(current);
                }
            }
            (current, change)
        };
        match change {
            PinChange::Record(next) if next == current => Ok(current),
            PinChange::Record(next) => self.write_annotation(&mut w, Some(&current), next),
            PinChange::Reader { user, pinned } => {
                self.commit(
                    &mut w,
                    vec![Record::Pin(PinRecord {
                        user,
                        annotation: id.to_string(),
                        pinned,
                    })],
                )?;
                self.maybe_compact(&mut w)?;
                Ok(current)
            }
        }
    }

    // ---- annotation reads ----

    /// The record if `requester` may read it; tombstones included.
    pub fn get(&self, id: &str, requester: Option<&str>) -> Option<Annotation> {
        let st = self.state.read();
        st.annotations
            .get(id)
            .filter(|a| a.readable_by(requester, &*st))
            .cloned()
    }

    /// Every record, deleted or not, regardless of visibility.
    pub fn all_records(&self) -> Vec<Annotation> {
        self.state.read().annotations.values().cloned().collect()
    }

    pub fn issue_report(&self, id: &str, requester: Option<&str>) -> Result<IssueReport> {
        let a = self
            .get(id, requester)
            .filter(|a| !a.deleted)
            .ok_or_else(|| StoreError::NotFound(id.to_string()))?;
        Ok(a.export_issue_report(self.now())?)
    }

    pub fn query_page(&self, url: &PageUrl, requester: Option<&str>) -> Vec<Annotation> {
        self.query_scope(&SearchScope::Page(url.clone()), requester)
    }

    pub fn query_site(&self, site: &SitePrefix, requester: Option<&str>) -> Vec<Annotation> {
        self.query_scope(&SearchScope::Site(site.clone()), requester)
    }

    pub fn query_all(&self, requester: Option<&str>) -> Vec<Annotation> {
        self.query_scope(&SearchScope::All, requester)
    }

    /// Live annotations in `scope` readable by `requester`, in id order.
    pub fn query_scope(&self, scope: &SearchScope, requester: Option<&str>) -> Vec<Annotation> {
        let st = self.state.read();
        st.visible(requester).filter(|a| scope.includes(a)).cloned().collect()
    }

    /// Ranked full-text search within the query's scope.
    pub fn search(&self, query: &SearchQuery) -> Result<Vec<Annotation>> {
        let st = self.state.read();
        let candidates = st
            .visible(query.requester.as_deref())
            .filter(|a| query.scope.includes(a));
        let ids = st.index.search(&query.text, candidates)?;
        Ok(ids.iter().map(|id| st.annotations[id].clone()).collect())
    }

    /// Everything `user` has pinned on any page, newest first. The user's own
    /// default-pinned open questions and to-dos are included.
    pub fn pin_list(&self, user: &str) -> Vec<Annotation> {
        let st = self.state.read();
        let reader_pins = st.pins.get(user);
        let mut out: Vec<Annotation> = st
            .visible(Some(user))
            .filter(|a| {
                if a.author == user {
                    a.pinned
                } else {
                    reader_pins.is_some_and(|p| p.contains(&a.id))
                }
            })
            .cloned()
            .collect();
        search::newest_first(&mut out);
        out
    }

    /// Live `(user, annotation)` reader pins, sorted.
    pub fn reader_pins(&self) -> Vec<(UserId, AnnotationId)> {
        let st = self.state.read();
        let mut out: Vec<_> = st
            .pins
            .iter()
            .flat_map(|(u, ids)| ids.iter().map(move |id| (u.clone(), id.clone())))
            .filter(|(_, id)| st.annotations.get(id).is_some_and(|a| !a.deleted))
            .collect();
        out.sort();
        out
    }

    pub fn subscribe(&self, url: &PageUrl, requester: Option<&str>) -> Subscription {
        self.feeds
            .lock()
            .subscribe(url.clone(), requester.map(str::to_string), self.opts.feed_buffer)
    }

    pub fn subscriber_count(&self, url: &PageUrl) -> usize {
        self.feeds.lock().subscriber_count(url)
    }

    // ---- documents ----

    /// Stores a new version of the page; returns its version number.
    pub fn put_document(&self, snapshot: DocumentSnapshot) -> Result<u64> {
        let mut w = self.writer.lock();
        let url = snapshot.url().clone();
        let version = {
            let st = self.state.read();
            st.latest_document(&url).map_or(0, |d| d.record.version) + 1
        };
        let rel = format!("documents/{}/{version}.html", url_hash(&url));
        let path = self.dir.join(&rel);
        fs::create_dir_all(path.parent().expect("document path has a parent"))?;
        fs::write(&path, snapshot.source())?;
        let record = DocumentRecord {
            url,
            version,
            fetched_at: snapshot.fetched_at(),
            file: rel,
        };
        let mut lines = Vec::new();
        w.seq += 1;
        lines.push(log::encode(w.seq, &Record::Document(record.clone()))?);
        w.log.append(&lines)?;
        let evicted = self.state.write().apply_document(StoredDocument {
            record,
            snapshot: Arc::new(snapshot),
        });
        for old in evicted {
            if let Err(e) = fs::remove_file(self.dir.join(&old.file)) {
                tracing::warn!(file = %old.file, error = %e, "could not remove old snapshot");
            }
        }
        self.maybe_compact(&mut w)?;
        Ok(version)
    }

    pub fn get_document(&self, url: &PageUrl) -> Option<Arc<DocumentSnapshot>> {
        self.state.read().latest_document(url).map(|d| d.snapshot.clone())
    }

    /// Retained versions of a page, oldest first.
    pub fn document_history(&self, url: &PageUrl) -> Vec<(u64, Arc<DocumentSnapshot>)> {
        self.state
            .read()
            .documents
            .get(url)
            .map(|h| h.iter().map(|d| (d.record.version, d.snapshot.clone())).collect())
            .unwrap_or_default()
    }

    pub fn document_urls(&self) -> Vec<PageUrl> {
        self.state.read().documents.keys().cloned().collect()
    }

    /// Resolves every anchor of `id` on pages with a stored snapshot.
    pub fn anchor_health(&self, id: &str, requester: Option<&str>) -> Option<Vec<Option<Resolution>>> {
        let a = self.get(id, requester)?;
        let st = self.state.read();
        Some(
            a.anchors
                .iter()
                .map(|s| {
                    st.latest_document(&s.page_url)
                        .map(|d| resolve_selector(&d.snapshot, s))
                })
                .collect(),
        )
    }

    /// Re-anchors every live annotation on `url` against its latest snapshot.
    ///
    /// Relocated anchors are rewritten (one revision per annotation); broken
    /// anchors are reported and left in place for the author to repair.
    pub fn reanchor_page(&self, url: &PageUrl) -> Result<ReanchorSummary> {
        let mut w = self.writer.lock();
        let (doc, annotations) = {
            let st = self.state.read();
            let doc = st
                .latest_document(url)
                .map(|d| d.snapshot.clone())
                .ok_or_else(|| StoreError::NoSnapshot(url.to_string()))?;
            let anns: Vec<Annotation> = st
                .annotations
                .values()
                .filter(|a| !a.deleted && a.is_on_page(url))
                .cloned()
                .collect();
            (doc, anns)
        };
        let mut summary = ReanchorSummary {
            url: url.clone(),
            attached: 0,
            relocated: 0,
            broken: 0,
            anchors: Vec::new(),
        };
        for a in annotations {
            let mut moved = Vec::new();
            for (i, sel) in a.anchors.iter().enumerate().filter(|(_, s)| &s.page_url == url) {
                let res = resolve_selector(&doc, sel);
                match res.status {
                    ResolutionStatus::Attached => summary.attached += 1,
                    ResolutionStatus::Broken => summary.broken += 1,
                    ResolutionStatus::Relocated => {
                        summary.relocated += 1;
                        if let Some(new_sel) = res.to_selector(sel) {
                            if &new_sel != sel {
                                moved.push((i, new_sel));
                            }
                        }
                    }
                }
                summary.anchors.push(AnchorReport {
                    annotation_id: a.id.clone(),
                    anchor_index: i,
                    resolution: res,
                });
            }
            if !moved.is_empty() {
                let next = a.relocate_anchors(&moved, self.now());
                self.write_annotation(&mut w, Some(&a), next)?;
            }
        }
        Ok(summary)
    }
}
