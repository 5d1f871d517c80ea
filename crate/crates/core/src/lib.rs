//! Core of the adamant documentation annotator.
//!
//! * [`anchor`]: HTML snapshots, node paths, selectors and re-anchoring.
//! * [`annotation`]: typed, stateful, multi-anchor annotations.
//! * [`store`]: append-only persistence, visibility-aware queries and change feeds.
//! * [`search`]: inverted index, filters and sort modes.

pub mod anchor;
pub mod annotation;
pub mod search;
pub mod store;
pub mod url;

pub use anchor::{
    fuzzy_find, DocumentPosition, DocumentSnapshot, FuzzyMatch, NodeId, NodePath, Resolution,
    ResolutionStatus, ResolveMethod, Selector,
};
pub use annotation::{Annotation, AnnotationType, IssueReport, Reply, TypeState, Visibility};
pub use search::{FilterCriteria, SearchQuery, SearchScope, SortMode};
pub use store::{ChangeEvent, ChangeKind, Group, Store, User};
pub use url::PageUrl;
