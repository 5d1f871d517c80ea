//! Operations shared by the HTTP API and the command-line tool.

use std::collections::BTreeSet;
use std::sync::Arc;

use adamant_core::anchor::{DocumentSnapshot, Resolution, Selector};
use adamant_core::annotation::{AnnotationDraft, AnnotationEdit, QuestionAction};
use adamant_core::search::{self, parse_time, SearchError};
use adamant_core::store::{ReanchorSummary, StoreError};
use adamant_core::{
    Annotation, AnnotationType, FilterCriteria, Group, IssueReport, PageUrl, SearchQuery, SearchScope, SortMode,
    Store, Visibility,
};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("this request needs an X-User identity")]
    Anonymous,
    #[error("bad parameter `{param}`: {message}")]
    BadParam { param: String, message: String },
    #[error("internal error: {0}")]
    Internal(String),
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::Store(e) => e.code(),
            ServiceError::Anonymous => "anonymous",
            ServiceError::BadParam { .. } => "bad-parameter",
            ServiceError::Internal(_) => "internal",
        }
    }

    pub fn bad(param: &str, message: impl Into<String>) -> Self {
        ServiceError::BadParam {
            param: param.to_string(),
            message: message.into(),
        }
    }
}

impl From<SearchError> for ServiceError {
    fn from(e: SearchError) -> Self {
        ServiceError::Store(e.into())
    }
}

pub type Result<T> = std::result::Result<T, ServiceError>;

/// Create request body. Ids, revisions and timestamps are assigned by the store.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreateRequest {
    #[serde(rename = "type")]
    pub kind: AnnotationType,
    #[serde(default)]
    pub body: String,
    pub anchors: Vec<Selector>,
    #[serde(default)]
    pub tags: BTreeSet<String>,
    #[serde(default)]
    pub visibility: Option<Visibility>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchRequest {
    pub expected_revision: u64,
    #[serde(flatten)]
    pub edit: AnnotationEdit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "lowercase")]
pub enum StateRequest {
    Answer { text: String },
    Dismiss,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplyRequest {
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentRequest {
    pub url: String,
    pub html: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentSummary {
    pub url: PageUrl,
    pub version: u64,
    pub elements: usize,
    pub text_length: usize,
    pub fetched_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredDocument {
    pub url: PageUrl,
    pub version: u64,
    pub fetched_at: DateTime<Utc>,
    pub html: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupRequest {
    pub name: String,
    #[serde(default)]
    pub members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemberRequest {
    pub user: String,
}

/// Raw list parameters as they arrive in a query string.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ListParams {
    pub url: Option<String>,
    pub scope: Option<String>,
    /// Comma-separated annotation types.
    pub types: Option<String>,
    /// Comma-separated required tags.
    pub tags: Option<String>,
    /// Comma-separated state names.
    pub states: Option<String>,
    pub from: Option<String>,
    pub to: Option<String>,
    pub q: Option<String>,
    pub sort: Option<String>,
}

/// A validated listing: scope, optional search text, filter and sort.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Listing {
    pub scope: SearchScope,
    pub text: Option<String>,
    pub criteria: FilterCriteria,
    pub sort: Option<SortMode>,
}

fn comma_list(s: &Option<String>) -> impl Iterator<Item = &str> {
    s.as_deref()
        .unwrap_or("")
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
}

impl ListParams {
    pub fn parse(&self) -> Result<Listing> {
        let page = match self.url.as_deref().filter(|u| !u.is_empty()) {
            Some(u) => Some(PageUrl::parse(u).map_err(|e| ServiceError::bad("url", e.to_string()))?),
            None => None,
        };
        let need_url = |what: &str| ServiceError::bad("url", format!("required for {what}"));
        let scope = match (self.scope.as_deref(), &page) {
            (None | Some("page"), Some(p)) => SearchScope::Page(p.clone()),
            (Some("page"), None) => return Err(need_url("scope=page")),
            (Some("site"), Some(p)) => SearchScope::Site(p.site()),
            (Some("site"), None) => return Err(need_url("scope=site")),
            (None | Some("all"), _) => SearchScope::All,
            (Some(other), _) => return Err(ServiceError::bad("scope", format!("unknown scope `{other}`"))),
        };

        let mut criteria = FilterCriteria::default();
        if self.types.is_some() {
            let mut types = BTreeSet::new();
            for t in comma_list(&self.types) {
                types.insert(t.parse().map_err(|_| ServiceError::bad("types", format!("unknown type `{t}`")))?);
            }
            criteria.types = Some(types);
        }
        criteria.tags = comma_list(&self.tags).map(str::to_string).collect();
        if self.states.is_some() {
            criteria.states = Some(comma_list(&self.states).map(str::to_string).collect());
        }
        let time = |param: &str, v: &Option<String>| -> Result<Option<DateTime<Utc>>> {
            match v.as_deref().filter(|s| !s.is_empty()) {
                None => Ok(None),
                Some(s) => parse_time(s)
                    .map(Some)
                    .ok_or_else(|| ServiceError::bad(param, format!("bad timestamp `{s}`"))),
            }
        };
        criteria.created_from = time("from", &self.from)?;
        criteria.created_to = time("to", &self.to)?;

        let sort = match self.sort.as_deref() {
            None | Some("") => None,
            Some("document_order") => Some(SortMode::DocumentOrder(page.ok_or_else(|| need_url("sort=document_order"))?)),
            Some("time_desc") => Some(SortMode::TimeDesc),
            Some("time_asc") => Some(SortMode::TimeAsc),
            Some(other) => return Err(ServiceError::bad("sort", format!("unknown sort `{other}`"))),
        };
        let text = self.q.clone().filter(|q| !q.is_empty());
        Ok(Listing {
            scope,
            text,
            criteria,
            sort,
        })
    }
}

#[derive(Clone)]
pub struct Service {
    store: Arc<Store>,
}

impl Service {
    pub fn new(store: Arc<Store>) -> Self {
        Service { store }
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    /// Identity for a write: anonymous callers are refused, first-time users
    /// are registered.
    pub fn identify(&self, user: Option<&str>) -> Result<String> {
        let user = user.map(str::trim).filter(|u| !u.is_empty()).ok_or(ServiceError::Anonymous)?;
        self.store.ensure_user(user)?;
        Ok(user.to_string())
    }

    pub fn create(&self, user: Option<&str>, req: CreateRequest) -> Result<Annotation> {
        let author = self.identify(user)?;
        Ok(self.store.create_annotation(AnnotationDraft {
            author,
            kind: req.kind,
            body: req.body,
            anchors: req.anchors,
            tags: req.tags,
            visibility: req.visibility.unwrap_or(Visibility::Public),
        })?)
    }

    pub fn edit(&self, user: Option<&str>, id: &str, req: PatchRequest) -> Result<Annotation> {
        let user = self.identify(user)?;
        Ok(self.store.edit_annotation(id, &user, req.edit, Some(req.expected_revision))?)
    }

    pub fn delete(&self, user: Option<&str>, id: &str) -> Result<Annotation> {
        let user = self.identify(user)?;
        Ok(self.store.delete_annotation(id, &user)?)
    }

    pub fn get(&self, user: Option<&str>, id: &str) -> Result<Annotation> {
        self.store
            .get(id, user)
            .filter(|a| !a.deleted)
            .ok_or_else(|| StoreError::NotFound(id.to_string()).into())
    }

    pub fn anchor_health(&self, user: Option<&str>, id: &str) -> Result<Vec<Option<Resolution>>> {
        self.get(user, id)?;
        self.store
            .anchor_health(id, user)
            .ok_or_else(|| StoreError::NotFound(id.to_string()).into())
    }

    pub fn reply(&self, user: Option<&str>, id: &str, req: ReplyRequest) -> Result<Annotation> {
        let user = self.identify(user)?;
        Ok(self.store.add_reply(id, &user, &req.body)?)
    }

    pub fn transition(&self, user: Option<&str>, id: &str, req: StateRequest) -> Result<Annotation> {
        let user = self.identify(user)?;
        Ok(match req {
            StateRequest::Answer { text } => self.store.transition_question(id, &user, QuestionAction::Answer(text))?,
            StateRequest::Dismiss => self.store.transition_question(id, &user, QuestionAction::Dismiss)?,
            StateRequest::Complete => self.store.complete_todo(id, &user)?,
        })
    }

    pub fn pin(&self, user: Option<&str>, id: &str, flag: bool) -> Result<Annotation> {
        let user = self.identify(user)?;
        Ok(self.store.set_pinned(id, &user, flag)?)
    }

    pub fn pins(&self, user: Option<&str>) -> Vec<Annotation> {
        user.map(|u| self.store.pin_list(u)).unwrap_or_default()
    }

    /// Scope, then search, then filter, then sort.
    pub fn list(&self, user: Option<&str>, listing: &Listing) -> Result<Vec<Annotation>> {
        let found = match &listing.text {
            Some(text) => self.store.search(&SearchQuery {
                text: text.clone(),
                scope: listing.scope.clone(),
                requester: user.map(str::to_string),
            })?,
            None => self.store.query_scope(&listing.scope, user),
        };
        let filtered = search::filter(found, &listing.criteria);
        match &listing.sort {
            None => Ok(filtered),
            Some(mode) => {
                let doc = match mode {
                    SortMode::DocumentOrder(url) => self.store.get_document(url),
                    _ => None,
                };
                Ok(search::sort(filtered, mode, doc.as_deref())?)
            }
        }
    }

    pub fn register_document(&self, user: Option<&str>, req: DocumentRequest) -> Result<DocumentSummary> {
        self.identify(user)?;
        let doc = DocumentSnapshot::parse_at(&req.html, &req.url, self.store.now())
            .map_err(StoreError::from)?;
        let summary = DocumentSummary {
            url: doc.url().clone(),
            version: 0,
            elements: doc.element_count(),
            text_length: doc.document_text().len(),
            fetched_at: doc.fetched_at(),
        };
        let version = self.store.put_document(doc)?;
        Ok(DocumentSummary { version, ..summary })
    }

    pub fn document(&self, url: &str) -> Result<StoredDocument> {
        let url = PageUrl::parse(url).map_err(|e| ServiceError::bad("url", e.to_string()))?;
        let (version, doc) = self
            .store
            .document_history(&url)
            .pop()
            .ok_or_else(|| StoreError::NoSnapshot(url.to_string()))?;
        Ok(StoredDocument {
            url,
            version,
            fetched_at: doc.fetched_at(),
            html: doc.source().to_string(),
        })
    }

    pub fn document_urls(&self) -> Vec<PageUrl> {
        self.store.document_urls()
    }

    pub fn reanchor(&self, user: Option<&str>, url: &str) -> Result<ReanchorSummary> {
        self.identify(user)?;
        let url = PageUrl::parse(url).map_err(|e| ServiceError::bad("url", e.to_string()))?;
        Ok(self.store.reanchor_page(&url)?)
    }

    pub fn groups(&self, user: Option<&str>) -> Vec<Group> {
        user.map(|u| self.store.list_groups(u)).unwrap_or_default()
    }

    /// The creator is always a member.
    pub fn create_group(&self, user: Option<&str>, req: GroupRequest) -> Result<Group> {
        let user = self.identify(user)?;
        let members = std::iter::once(user).chain(req.members);
        Ok(self.store.create_group(&req.name, members)?)
    }

    pub fn add_member(&self, user: Option<&str>, group: &str, req: MemberRequest) -> Result<Group> {
        let user = self.identify(user)?;
        let g = self
            .store
            .group(group)
            .filter(|g| g.members.contains(&user))
            .ok_or_else(|| StoreError::UnknownGroup(group.to_string()))?;
        Ok(self.store.add_member(&g.id, &req.user)?)
    }

    pub fn report(&self, user: Option<&str>, id: &str) -> Result<IssueReport> {
        Ok(self.store.issue_report(id, user)?)
    }
}
