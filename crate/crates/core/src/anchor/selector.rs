use serde::{Deserialize, Serialize};

use super::{AnchorError, DocumentSnapshot, NodeId, NodePath};
use crate::url::PageUrl;

/// Persistent description of one anchored text range.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Selector {
    pub page_url: PageUrl,
    pub path: NodePath,
    pub quote: String,
    /// Characters from the element's text start to the quote start.
    pub start_offset: usize,
    /// Characters from the quote end to the element's text end.
    pub end_offset: usize,
}

impl Selector {
    pub fn quote_len(&self) -> usize {
        self.quote.chars().count()
    }

    /// Checks the shape constraints that hold regardless of any document.
    pub fn validate(&self) -> Result<(), AnchorError> {
        if self.quote.is_empty() {
            return Err(AnchorError::EmptyQuote);
        }
        Ok(())
    }
}

/// Selector for `quote_len` characters of `node`'s text starting at `quote_start`.
pub fn create_selector(
    doc: &DocumentSnapshot,
    node: NodeId,
    quote_start: usize,
    quote_len: usize,
) -> Result<Selector, AnchorError> {
    let path = doc.build_node_path(node)?;
    if quote_len == 0 {
        return Err(AnchorError::EmptyQuote);
    }
    let text = doc.element_chars(node);
    let end = quote_start + quote_len;
    if end > text.len() {
        return Err(AnchorError::RangeOutOfBounds {
            start: quote_start,
            end,
            len: text.len(),
        });
    }
    Ok(Selector {
        page_url: doc.url().clone(),
        path,
        quote: text[quote_start..end].iter().collect(),
        start_offset: quote_start,
        end_offset: text.len() - end,
    })
}

/// Selectors for every occurrence of `quote` in the document text, in
/// document order. Each targets the deepest element holding the whole match.
pub fn locate_quote(doc: &DocumentSnapshot, quote: &str) -> Vec<Selector> {
    let needle: Vec<char> = quote.chars().collect();
    if needle.is_empty() {
        return Vec::new();
    }
    let text = doc.document_text();
    let root = doc.root();
    text.windows(needle.len())
        .enumerate()
        .filter(|(_, w)| *w == &needle[..])
        .filter_map(|(i, _)| {
            let node = doc.deepest_containing(root, i..i + needle.len());
            let start = i - doc.el(node).text_range().start;
            create_selector(doc, node, start, needle.len()).ok()
        })
        .collect()
}
