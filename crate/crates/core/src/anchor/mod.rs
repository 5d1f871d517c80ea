//! Robust text anchoring.
//!
//! A [`Selector`] pins a range of one element's text by node path, an exact
//! copy of the quoted text and two offsets: characters from the element's
//! text start to the quote, and from the quote end to the element's text end.
//! [`resolve_selector`] re-attaches a selector to a (possibly changed)
//! [`DocumentSnapshot`], falling back from the stored path to a search of the
//! element, then of its ancestors, then to a fuzzy match over the document.
//!
//! All offsets count Unicode scalar values over entity-decoded text.

mod document;
mod fuzzy;
mod path;
mod resolve;
mod selector;

pub use document::{parse_document, Child, DocumentSnapshot, ElementNode, NodeId, TextNode};
pub use fuzzy::{fuzzy_find, FuzzyMatch, FUZZY_BAND, FUZZY_THRESHOLD};
pub use path::{NodePath, PathSegment};
pub use resolve::{
    document_position, resolve_selector, DocumentPosition, Resolution, ResolutionStatus,
    ResolveMethod,
};
pub use selector::{create_selector, locate_quote, Selector};

pub(crate) use fuzzy::fuzzy_minima;

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum AnchorError {
    #[error("unparseable input: {0}")]
    UnparseableInput(String),
    #[error(transparent)]
    InvalidUrl(#[from] crate::url::UrlError),
    #[error("node does not belong to this document")]
    NodeNotInDocument,
    #[error("range {start}..{end} is outside element text of length {len}")]
    RangeOutOfBounds { start: usize, end: usize, len: usize },
    #[error("quote must not be empty")]
    EmptyQuote,
    #[error("invalid node path `{0}`")]
    InvalidPath(String),
    #[error("resolution is broken and has no document position")]
    BrokenResolution,
}

impl AnchorError {
    pub fn code(&self) -> &'static str {
        match self {
            AnchorError::UnparseableInput(_) => "unparseable-input",
            AnchorError::InvalidUrl(_) => "invalid-url",
            AnchorError::NodeNotInDocument => "node-not-in-document",
            AnchorError::RangeOutOfBounds { .. } => "range-out-of-bounds",
            AnchorError::EmptyQuote => "empty-quote",
            AnchorError::InvalidPath(_) => "invalid-path",
            AnchorError::BrokenResolution => "broken-resolution",
        }
    }
}
