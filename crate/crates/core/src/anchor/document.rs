use std::collections::HashMap;
use std::ops::Range;
use std::sync::atomic::{AtomicU64, Ordering};

use chrono::{DateTime, Utc};
use ego_tree::NodeRef;
use scraper::{Html, Node};

use super::AnchorError;
use crate::url::PageUrl;

static NEXT_DOC_TOKEN: AtomicU64 = AtomicU64::new(1);

/// Reference to an element of one particular [`DocumentSnapshot`].
///
/// Element ids are assigned in pre-order, so comparing the ids of two
/// elements of the same document compares their document order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId {
    doc: u64,
    index: usize,
}

impl NodeId {
    /// Position of the element in a pre-order walk of its document.
    pub fn preorder_index(self) -> usize {
        self.index
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Child {
    Element(NodeId),
    /// Index into [`DocumentSnapshot::text_nodes`].
    Text(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ElementNode {
    tag: String,
    parent: Option<NodeId>,
    children: Vec<Child>,
    same_tag_index: u32,
    text: Range<usize>,
}

impl ElementNode {
    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn parent(&self) -> Option<NodeId> {
        self.parent
    }

    pub fn children(&self) -> &[Child] {
        &self.children
    }

    /// 1-based position among element siblings with the same tag.
    pub fn same_tag_index(&self) -> u32 {
        self.same_tag_index
    }

    /// Character range of this element's text within the document text.
    pub fn text_range(&self) -> Range<usize> {
        self.text.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextNode {
    data: String,
    parent: NodeId,
    /// `None` for text inside `script`/`style`, which never counts as element text.
    start: Option<usize>,
}

impl TextNode {
    pub fn data(&self) -> &str {
        &self.data
    }

    pub fn parent(&self) -> NodeId {
        self.parent
    }

    pub fn is_excluded(&self) -> bool {
        self.start.is_none()
    }
}

/// Parsed tree of one HTML documentation page.
///
/// The tree follows the HTML5 tree-construction rules, so node paths match
/// what a browser would build for the same markup. Text is stored as parsed,
/// without whitespace collapsing.
#[derive(Debug, Clone)]
pub struct DocumentSnapshot {
    token: u64,
    url: PageUrl,
    fetched_at: DateTime<Utc>,
    source: String,
    elements: Vec<ElementNode>,
    texts: Vec<TextNode>,
    text: Vec<char>,
}

impl PartialEq for DocumentSnapshot {
    fn eq(&self, other: &Self) -> bool {
        self.url == other.url
            && self.fetched_at == other.fetched_at
            && self.source == other.source
            && self.elements.len() == other.elements.len()
            && self.text == other.text
    }
}

fn excluded_tag(tag: &str) -> bool {
    matches!(tag, "script" | "style")
}

/// Parses `html` as the page at `url`, stamped with the current time.
pub fn parse_document(html: &str, url: &str) -> Result<DocumentSnapshot, AnchorError> {
    DocumentSnapshot::parse(html, url)
}

impl DocumentSnapshot {
    pub fn parse(html: &str, url: &str) -> Result<Self, AnchorError> {
        Self::parse_at(html, url, Utc::now())
    }

    pub fn parse_at(html: &str, url: &str, fetched_at: DateTime<Utc>) -> Result<Self, AnchorError> {
        let url = PageUrl::parse(url)?;
        if html.trim().is_empty() {
            return Err(AnchorError::UnparseableInput("empty document".into()));
        }
        let parsed = Html::parse_document(html);
        let root = parsed
            .tree
            .root()
            .children()
            .find(|n| n.value().is_element())
            .ok_or_else(|| AnchorError::UnparseableInput("no root element".into()))?;

        let token = NEXT_DOC_TOKEN.fetch_add(1, Ordering::Relaxed);
        let mut doc = DocumentSnapshot {
            token,
            url,
            fetched_at,
            source: html.to_string(),
            elements: Vec::new(),
            texts: Vec::new(),
            text: Vec::new(),
        };
        doc.build(root);
        Ok(doc)
    }

    fn build(&mut self, root: NodeRef<'_, Node>) {
        // (node, parent, inside script/style)
        let mut stack: Vec<(NodeRef<'_, Node>, Option<NodeId>, bool)> = vec![(root, None, false)];
        while let Some((node, parent, excluded)) = stack.pop() {
            match node.value() {
                Node::Element(el) => {
                    let id = NodeId {
                        doc: self.token,
                        index: self.elements.len(),
                    };
                    let tag = el.name().to_ascii_lowercase();
                    let excluded = excluded || excluded_tag(&tag);
                    let at = self.text.len();
                    self.elements.push(ElementNode {
                        tag,
                        parent,
                        children: Vec::new(),
                        same_tag_index: 1,
                        text: at..at,
                    });
                    if let Some(p) = parent {
                        self.elements[p.index].children.push(Child::Element(id));
                    }
                    let children: Vec<_> = node.children().collect();
                    for child in children.into_iter().rev() {
                        stack.push((child, Some(id), excluded));
                    }
                }
                Node::Text(t) => {
                    let Some(parent) = parent else { continue };
                    let start = if excluded {
                        None
                    } else {
                        let start = self.text.len();
                        self.text.extend(t.chars());
                        self.elements[parent.index].text.end = self.text.len();
                        Some(start)
                    };
                    let idx = self.texts.len();
                    self.texts.push(TextNode {
                        data: t.to_string(),
                        parent,
                        start,
                    });
                    self.elements[parent.index].children.push(Child::Text(idx));
                }
                _ => {}
            }
        }

        // Parents precede children in pre-order, so a reverse sweep widens every
        // ancestor's range to cover its descendants.
        for i in (1..self.elements.len()).rev() {
            let end = self.elements[i].text.end;
            if let Some(p) = self.elements[i].parent {
                let range = &mut self.elements[p.index].text;
                range.end = range.end.max(end);
            }
        }

        let mut counts: HashMap<&str, u32> = HashMap::new();
        let mut assignments = Vec::new();
        for el in &self.elements {
            counts.clear();
            for child in &el.children {
                if let Child::Element(c) = child {
                    let tag = self.elements[c.index].tag.as_str();
                    let n = counts.entry(tag).or_insert(0);
                    *n += 1;
                    assignments.push((c.index, *n));
                }
            }
        }
        for (index, n) in assignments {
            self.elements[index].same_tag_index = n;
        }
    }

    pub fn url(&self) -> &PageUrl {
        &self.url
    }

    pub fn fetched_at(&self) -> DateTime<Utc> {
        self.fetched_at
    }

    /// The HTML this snapshot was parsed from.
    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn root(&self) -> NodeId {
        NodeId {
            doc: self.token,
            index: 0,
        }
    }

    pub fn contains(&self, id: NodeId) -> bool {
        id.doc == self.token && id.index < self.elements.len()
    }

    pub fn element(&self, id: NodeId) -> Option<&ElementNode> {
        if id.doc != self.token {
            return None;
        }
        self.elements.get(id.index)
    }

    pub(crate) fn el(&self, id: NodeId) -> &ElementNode {
        &self.elements[id.index]
    }

    pub fn element_count(&self) -> usize {
        self.elements.len()
    }

    pub fn text_nodes(&self) -> &[TextNode] {
        &self.texts
    }

    /// All elements in document order.
    pub fn elements(&self) -> impl Iterator<Item = (NodeId, &ElementNode)> + '_ {
        self.elements.iter().enumerate().map(|(index, el)| {
            (
                NodeId {
                    doc: self.token,
                    index,
                },
                el,
            )
        })
    }

    /// Elements with the given tag, in document order.
    pub fn find_by_tag<'a>(&'a self, tag: &'a str) -> impl Iterator<Item = NodeId> + 'a {
        self.elements()
            .filter(move |(_, el)| el.tag == tag)
            .map(|(id, _)| id)
    }

    /// Child elements of `id`, in order.
    pub fn child_elements(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.el(id).children.iter().filter_map(|c| match c {
            Child::Element(e) => Some(*e),
            Child::Text(_) => None,
        })
    }

    /// Concatenated text of every non-script/style text descendant of the root.
    pub fn document_text(&self) -> &[char] {
        &self.text
    }

    pub fn element_chars(&self, id: NodeId) -> &[char] {
        match self.element(id) {
            Some(el) => &self.text[el.text.clone()],
            None => &[],
        }
    }

    /// Concatenation of the element's descendant text nodes in document order.
    pub fn element_text(&self, id: NodeId) -> String {
        self.element_chars(id).iter().collect()
    }

    pub fn text_len(&self, id: NodeId) -> usize {
        self.element(id).map_or(0, |el| el.text.len())
    }

    /// `id` followed by its ancestors up to the root.
    pub fn ancestors_inclusive(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        std::iter::successors(Some(id), move |n| self.el(*n).parent)
    }

    /// The deepest element under `from` (inclusive) whose text covers `range`.
    pub fn deepest_containing(&self, from: NodeId, range: Range<usize>) -> NodeId {
        let mut current = from;
        'descend: loop {
            for child in self.child_elements(current) {
                let r = &self.el(child).text;
                if r.start <= range.start && range.end <= r.end && !(range.is_empty() && r.is_empty())
                {
                    current = child;
                    continue 'descend;
                }
            }
            return current;
        }
    }
}
