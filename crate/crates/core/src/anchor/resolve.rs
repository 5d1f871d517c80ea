use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{fuzzy_minima, AnchorError, DocumentSnapshot, NodeId, NodePath, Selector, FUZZY_THRESHOLD};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResolutionStatus {
    Attached,
    Relocated,
    Broken,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResolveMethod {
    Exact,
    ElementSearch,
    AncestorSearch,
    Fuzzy,
}

/// Outcome of re-anchoring one selector against a snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    pub status: ResolutionStatus,
    pub path: Option<NodePath>,
    pub start_offset: Option<usize>,
    pub end_offset: Option<usize>,
    pub confidence: f64,
    /// `None` only for broken resolutions.
    pub method: Option<ResolveMethod>,
    /// Text found at the recovered range; differs from the quote only for fuzzy matches.
    pub matched_text: Option<String>,
    #[serde(skip)]
    target: Option<NodeId>,
}

impl Resolution {
    pub fn broken() -> Self {
        Resolution {
            status: ResolutionStatus::Broken,
            path: None,
            start_offset: None,
            end_offset: None,
            confidence: 0.0,
            method: None,
            matched_text: None,
            target: None,
        }
    }

    pub fn is_broken(&self) -> bool {
        self.status == ResolutionStatus::Broken
    }

    /// Element the range lives in, when resolved against a snapshot in this process.
    pub fn target(&self) -> Option<NodeId> {
        self.target
    }

    /// Selector equivalent to this resolution, keeping the page of `original`.
    pub fn to_selector(&self, original: &Selector) -> Option<Selector> {
        Some(Selector {
            page_url: original.page_url.clone(),
            path: self.path.clone()?,
            quote: self.matched_text.clone()?,
            start_offset: self.start_offset?,
            end_offset: self.end_offset?,
        })
    }
}

fn located(
    doc: &DocumentSnapshot,
    element: NodeId,
    global: Range<usize>,
    method: ResolveMethod,
    confidence: f64,
) -> Resolution {
    let el = doc.el(element).text_range();
    let matched: String = doc.document_text()[global.clone()].iter().collect();
    let status = if method == ResolveMethod::Exact {
        ResolutionStatus::Attached
    } else {
        ResolutionStatus::Relocated
    };
    Resolution {
        status,
        path: Some(doc.build_node_path(element).expect("element from this document")),
        start_offset: Some(global.start - el.start),
        end_offset: Some(el.end - global.end),
        confidence,
        method: Some(method),
        matched_text: Some(matched),
        target: Some(element),
    }
}

/// Start positions of every (possibly overlapping) occurrence of `needle`.
fn occurrences(hay: &[char], needle: &[char]) -> Vec<usize> {
    if needle.is_empty() || needle.len() > hay.len() {
        return Vec::new();
    }
    hay.windows(needle.len())
        .enumerate()
        .filter(|(_, w)| *w == needle)
        .map(|(i, _)| i)
        .collect()
}

/// Occurrence closest to `anchor`; the earliest one on equal distance.
fn closest(positions: &[usize], anchor: usize) -> Option<usize> {
    positions.iter().copied().min_by_key(|p| (p.abs_diff(anchor), *p))
}

/// Re-attaches `sel` to `doc`.
///
/// Stages, first success wins: the stored range as-is, the quote elsewhere in
/// the same element, the quote under the nearest ancestor that contains it,
/// and finally the best fuzzy window over the whole document text.
pub fn resolve_selector(doc: &DocumentSnapshot, sel: &Selector) -> Resolution {
    let quote: Vec<char> = sel.quote.chars().collect();
    if quote.is_empty() {
        return Resolution::broken();
    }
    let (depth, deepest) = doc.resolve_path_prefix(&sel.path);
    let full = (depth == sel.path.len()).then_some(deepest).flatten();

    if let Some(element) = full {
        let range = doc.el(element).text_range();
        let text = &doc.document_text()[range.clone()];
        let end = sel.start_offset + quote.len();
        if end + sel.end_offset == text.len() && text[sel.start_offset..end] == quote[..] {
            let global = range.start + sel.start_offset..range.start + end;
            return located(doc, element, global, ResolveMethod::Exact, 1.0);
        }
        if let Some(pos) = closest(&occurrences(text, &quote), sel.start_offset) {
            let global = range.start + pos..range.start + pos + quote.len();
            return located(doc, element, global, ResolveMethod::ElementSearch, 1.0);
        }
    }

    // Walk up from the deepest element the path still reaches.
    let (walk_from, anchor) = match (full, deepest) {
        (Some(element), _) => {
            let r = doc.el(element).text_range();
            (doc.el(element).parent(), (r.start + sel.start_offset).min(r.end))
        }
        (None, Some(prefix)) => (Some(prefix), doc.el(prefix).text_range().start),
        (None, None) => (Some(doc.root()), 0),
    };
    if let Some(start) = walk_from {
        for ancestor in doc.ancestors_inclusive(start) {
            let range = doc.el(ancestor).text_range();
            let text = &doc.document_text()[range.clone()];
            let found: Vec<usize> = occurrences(text, &quote)
                .into_iter()
                .map(|p| p + range.start)
                .collect();
            if let Some(pos) = closest(&found, anchor) {
                let global = pos..pos + quote.len();
                let element = doc.deepest_containing(ancestor, global.clone());
                return located(doc, element, global, ResolveMethod::AncestorSearch, 1.0);
            }
        }
    }

    resolve_fuzzy(doc, &quote).unwrap_or_else(Resolution::broken)
}

fn resolve_fuzzy(doc: &DocumentSnapshot, quote: &[char]) -> Option<Resolution> {
    let (best, ties) = fuzzy_minima(doc.document_text(), quote, FUZZY_THRESHOLD)?;
    let root = doc.root();
    let placed: Vec<(Range<usize>, NodeId)> = ties
        .iter()
        .map(|&(pos, len)| (pos..pos + len, doc.deepest_containing(root, pos..pos + len)))
        .collect();
    // Equally good windows in separate places are ambiguous; overlapping ones are
    // the same spot seen through slightly shifted windows.
    let (first_range, first_el) = &placed[0];
    let ambiguous = placed.iter().enumerate().any(|(i, (ra, ea))| {
        placed[i + 1..]
            .iter()
            .any(|(rb, eb)| ea != eb && (ra.end <= rb.start || rb.end <= ra.start))
    });
    if ambiguous {
        return None;
    }
    Some(located(
        doc,
        *first_el,
        first_range.clone(),
        ResolveMethod::Fuzzy,
        1.0 - best.norm_dist,
    ))
}

/// Sort key placing a resolved range in document order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DocumentPosition {
    pub element_preorder: usize,
    pub start_offset: usize,
}

pub fn document_position(
    doc: &DocumentSnapshot,
    res: &Resolution,
) -> Result<DocumentPosition, AnchorError> {
    if res.is_broken() {
        return Err(AnchorError::BrokenResolution);
    }
    let target = res
        .target
        .filter(|t| doc.contains(*t))
        .or_else(|| res.path.as_ref().and_then(|p| doc.resolve_node_path(p)))
        .ok_or(AnchorError::NodeNotInDocument)?;
    Ok(DocumentPosition {
        element_preorder: target.preorder_index(),
        start_offset: res.start_offset.unwrap_or(0),
    })
}
