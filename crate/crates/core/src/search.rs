//! Full-text search, filters and sort modes for annotation lists.

use std::cmp::Reverse;
use std::collections::{BTreeSet, HashMap};
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::anchor::{document_position, resolve_selector, DocumentPosition, DocumentSnapshot};
use crate::annotation::{Annotation, AnnotationId, AnnotationType, UserId};
use crate::url::{PageUrl, SitePrefix};

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum SearchError {
    #[error("search query has no tokens")]
    EmptyQuery,
    #[error("no document snapshot for {0}")]
    MissingSnapshot(String),
    #[error("bad filter `{0}`")]
    BadFilter(String),
}

impl SearchError {
    pub fn code(&self) -> &'static str {
        match self {
            SearchError::EmptyQuery => "empty-query",
            SearchError::MissingSnapshot(_) => "missing-snapshot",
            SearchError::BadFilter(_) => "bad-filter",
        }
    }
}

/// Lowercases and splits on anything that is not alphanumeric.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Every searchable token of an annotation: body, anchor quotes, tags and replies.
pub fn annotation_tokens(a: &Annotation) -> HashMap<String, u32> {
    let mut counts = HashMap::new();
    let texts = std::iter::once(a.body.as_str())
        .chain(a.anchors.iter().map(|s| s.quote.as_str()))
        .chain(a.tags.iter().map(String::as_str))
        .chain(a.replies.iter().map(|r| r.body.as_str()));
    for text in texts {
        for tok in tokenize(text) {
            *counts.entry(tok).or_insert(0) += 1;
        }
    }
    counts
}

/// Inverted index from token to per-annotation term frequency.
#[derive(Debug, Default, Clone)]
pub struct SearchIndex {
    postings: HashMap<String, HashMap<AnnotationId, u32>>,
    terms: HashMap<AnnotationId, Vec<String>>,
}

impl SearchIndex {
    pub fn new() -> Self {
        Self::default()
    }

    /// (Re)indexes `a`; deleted annotations are dropped from the index.
    pub fn index_annotation(&mut self, a: &Annotation) {
        self.remove_from_index(&a.id);
        if a.deleted {
            return;
        }
        let counts = annotation_tokens(a);
        let mut terms = Vec::with_capacity(counts.len());
        for (tok, n) in counts {
            self.postings.entry(tok.clone()).or_default().insert(a.id.clone(), n);
            terms.push(tok);
        }
        self.terms.insert(a.id.clone(), terms);
    }

    pub fn remove_from_index(&mut self, id: &str) {
        let Some(terms) = self.terms.remove(id) else { return };
        for tok in terms {
            if let Some(p) = self.postings.get_mut(&tok) {
                p.remove(id);
                if p.is_empty() {
                    self.postings.remove(&tok);
                }
            }
        }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Annotations containing every token, with their summed term frequency.
    pub fn lookup(&self, tokens: &[String]) -> HashMap<AnnotationId, u64> {
        let mut lists: Vec<&HashMap<AnnotationId, u32>> = Vec::with_capacity(tokens.len());
        for tok in tokens {
            match self.postings.get(tok) {
                Some(p) => lists.push(p),
                None => return HashMap::new(),
            }
        }
        lists.sort_by_key(|p| p.len());
        let Some((first, rest)) = lists.split_first() else {
            return HashMap::new();
        };
        first
            .iter()
            .filter_map(|(id, n)| {
                let mut score = u64::from(*n);
                for p in rest {
                    score += u64::from(*p.get(id)?);
                }
                Some((id.clone(), score))
            })
            .collect()
    }

    /// Ranks `candidates` that match every token of `text`.
    ///
    /// Order: higher total term frequency, then newer `modified_at`, then id.
    pub fn search<'a>(
        &self,
        text: &str,
        candidates: impl IntoIterator<Item = &'a Annotation>,
    ) -> Result<Vec<AnnotationId>, SearchError> {
        let tokens = query_tokens(text)?;
        let hits = self.lookup(&tokens);
        let mut ranked: Vec<(u64, DateTime<Utc>, &AnnotationId)> = candidates
            .into_iter()
            .filter_map(|a| hits.get(&a.id).map(|s| (*s, a.modified_at, &a.id)))
            .collect();
        ranked.sort_by(|x, y| y.0.cmp(&x.0).then(y.1.cmp(&x.1)).then(x.2.cmp(y.2)));
        Ok(ranked.into_iter().map(|(_, _, id)| id.clone()).collect())
    }
}

/// Distinct query tokens in first-seen order.
pub fn query_tokens(text: &str) -> Result<Vec<String>, SearchError> {
    let mut seen = BTreeSet::new();
    let tokens: Vec<String> = tokenize(text).filter(|t| seen.insert(t.clone())).collect();
    if tokens.is_empty() {
        return Err(SearchError::EmptyQuery);
    }
    Ok(tokens)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchScope {
    Page(PageUrl),
    Site(SitePrefix),
    All,
}

impl SearchScope {
    pub fn includes(&self, a: &Annotation) -> bool {
        match self {
            SearchScope::Page(url) => a.is_on_page(url),
            SearchScope::Site(site) => a.anchors.iter().any(|s| site.contains(&s.page_url)),
            SearchScope::All => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchQuery {
    pub text: String,
    pub scope: SearchScope,
    pub requester: Option<UserId>,
}

/// Conjunctive annotation filter. `None`/empty fields do not constrain.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterCriteria {
    #[serde(default)]
    pub types: Option<BTreeSet<AnnotationType>>,
    /// Inclusive lower bound on `created_at`.
    #[serde(default)]
    pub created_from: Option<DateTime<Utc>>,
    /// Inclusive upper bound on `created_at`.
    #[serde(default)]
    pub created_to: Option<DateTime<Utc>>,
    /// Every listed tag is required.
    #[serde(default)]
    pub tags: BTreeSet<String>,
    /// State names as in [`crate::annotation::TypeState::status`].
    #[serde(default)]
    pub states: Option<BTreeSet<String>>,
}

impl FilterCriteria {
    pub fn is_empty(&self) -> bool {
        *self == FilterCriteria::default()
    }

    pub fn matches(&self, a: &Annotation) -> bool {
        self.types.as_ref().is_none_or(|t| t.contains(&a.kind))
            && self.created_from.is_none_or(|f| a.created_at >= f)
            && self.created_to.is_none_or(|t| a.created_at <= t)
            && self.tags.iter().all(|t| a.tags.contains(t))
            && self.states.as_ref().is_none_or(|s| s.contains(a.state.status()))
    }

    /// Criteria matching exactly what both `self` and `other` match.
    pub fn and(&self, other: &FilterCriteria) -> FilterCriteria {
        fn meet<T: Ord + Clone>(a: &Option<BTreeSet<T>>, b: &Option<BTreeSet<T>>) -> Option<BTreeSet<T>> {
            match (a, b) {
                (None, x) | (x, None) => x.clone(),
                (Some(x), Some(y)) => Some(x.intersection(y).cloned().collect()),
            }
        }
        FilterCriteria {
            types: meet(&self.types, &other.types),
            created_from: self.created_from.max(other.created_from),
            created_to: match (self.created_to, other.created_to) {
                (Some(a), Some(b)) => Some(a.min(b)),
                (a, b) => a.or(b),
            },
            tags: self.tags.union(&other.tags).cloned().collect(),
            states: meet(&self.states, &other.states),
        }
    }
}

/// Parses the batch mini-language: comma- or space-separated `key=value`
/// terms with keys `type`, `tag`, `state`, `after` and `before`. Repeated
/// `type`/`state` terms are alternatives; repeated `tag` terms are all required.
impl FromStr for FilterCriteria {
    type Err = SearchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut c = FilterCriteria::default();
        for term in s.split([',', ' ']).map(str::trim).filter(|t| !t.is_empty()) {
            let bad = || SearchError::BadFilter(term.to_string());
            let (key, value) = term.split_once('=').ok_or_else(bad)?;
            match key {
                "type" => {
                    let t: AnnotationType = value.parse().map_err(|_| bad())?;
                    c.types.get_or_insert_with(BTreeSet::new).insert(t);
                }
                "tag" => {
                    c.tags.insert(value.to_string());
                }
                "state" => {
                    c.states.get_or_insert_with(BTreeSet::new).insert(value.to_string());
                }
                "after" => c.created_from = Some(parse_time(value).ok_or_else(bad)?),
                "before" => c.created_to = Some(parse_time(value).ok_or_else(bad)?),
                _ => return Err(bad()),
            }
        }
        Ok(c)
    }
}

/// RFC 3339 timestamp or a bare `YYYY-MM-DD` date (midnight UTC).
pub fn parse_time(s: &str) -> Option<DateTime<Utc>> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    chrono::NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|dt| dt.and_utc())
}

pub fn filter(annotations: Vec<Annotation>, criteria: &FilterCriteria) -> Vec<Annotation> {
    annotations.into_iter().filter(|a| criteria.matches(a)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SortMode {
    DocumentOrder(PageUrl),
    TimeDesc,
    TimeAsc,
}

/// Earliest resolvable position of `a`'s anchors on `doc`'s page.
pub fn annotation_position(a: &Annotation, doc: &DocumentSnapshot) -> Option<DocumentPosition> {
    a.anchors
        .iter()
        .filter(|s| &s.page_url == doc.url())
        .filter_map(|s| document_position(doc, &resolve_selector(doc, s)).ok())
        .min()
}

/// Orders annotations per `mode`. Document order puts annotations without a
/// resolvable anchor on the page last, oldest first.
pub fn sort(
    mut annotations: Vec<Annotation>,
    mode: &SortMode,
    doc: Option<&DocumentSnapshot>,
) -> Result<Vec<Annotation>, SearchError> {
    match mode {
        SortMode::TimeDesc => {
            annotations.sort_by(|a, b| b.created_at.cmp(&a.created_at).then_with(|| a.id.cmp(&b.id)))
        }
        SortMode::TimeAsc => {
            annotations.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.id.cmp(&b.id)))
        }
        SortMode::DocumentOrder(url) => {
            let doc = doc
                .filter(|d| d.url() == url)
                .ok_or_else(|| SearchError::MissingSnapshot(url.to_string()))?;
            let mut keyed: Vec<_> = annotations
                .into_iter()
                .map(|a| {
                    let pos = annotation_position(&a, doc);
                    (pos.is_none(), pos, a)
                })
                .collect();
            keyed.sort_by(|x, y| {
                (x.0, x.1)
                    .cmp(&(y.0, y.1))
                    .then_with(|| x.2.created_at.cmp(&y.2.created_at))
                    .then_with(|| x.2.id.cmp(&y.2.id))
            });
            return Ok(keyed.into_iter().map(|(_, _, a)| a).collect());
        }
    }
    Ok(annotations)
}

/// Newest-first order used for pin lists.
pub fn newest_first(annotations: &mut [Annotation]) {
    annotations.sort_by_key(|a| (Reverse(a.created_at), a.id.clone()));
}
