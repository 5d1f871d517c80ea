use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{AnchorError, DocumentSnapshot, NodeId};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PathSegment {
    pub tag: String,
    /// 1-based position among same-tag element siblings.
    pub index: u32,
}

/// Slash-separated element address, serialized as `/tag[i]/tag[i]/...`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct NodePath {
    segments: Vec<PathSegment>,
}

impl NodePath {
    pub fn new(segments: Vec<PathSegment>) -> Result<Self, AnchorError> {
        if segments.is_empty() {
            return Err(AnchorError::InvalidPath(String::new()));
        }
        for seg in &segments {
            if seg.index == 0 || !valid_tag(&seg.tag) {
                return Err(AnchorError::InvalidPath(format!("{}[{}]", seg.tag, seg.index)));
            }
        }
        Ok(NodePath { segments })
    }

    pub fn segments(&self) -> &[PathSegment] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }
}

fn valid_tag(tag: &str) -> bool {
    !tag.is_empty()
        && tag
            .chars()
            .all(|c| !c.is_ascii_uppercase() && !c.is_whitespace() && !matches!(c, '/' | '[' | ']'))
}

impl fmt::Display for NodePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for seg in &self.segments {
            write!(f, "/{}[{}]", seg.tag, seg.index)?;
        }
        Ok(())
    }
}

impl FromStr for NodePath {
    type Err = AnchorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || AnchorError::InvalidPath(s.to_string());
        let rest = s.strip_prefix('/').ok_or_else(bad)?;
        let segments = rest
            .split('/')
            .map(|part| {
                let (tag, idx) = part.strip_suffix(']').and_then(|p| p.split_once('['))?;
                let index: u32 = idx.parse().ok()?;
                // Reject forms like `p[+1]` or `p[01]` so serialization stays canonical.
                (index.to_string() == idx).then(|| PathSegment {
                    tag: tag.to_string(),
                    index,
                })
            })
            .collect::<Option<Vec<_>>>()
            .ok_or_else(bad)?;
        NodePath::new(segments).map_err(|_| bad())
    }
}

impl TryFrom<String> for NodePath {
    type Error = AnchorError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<NodePath> for String {
    fn from(value: NodePath) -> Self {
        value.to_string()
    }
}

impl DocumentSnapshot {
    /// Path from the root to `node`, one `(tag, same-tag index)` per level.
    pub fn build_node_path(&self, node: NodeId) -> Result<NodePath, AnchorError> {
        if !self.contains(node) {
            return Err(AnchorError::NodeNotInDocument);
        }
        let mut segments: Vec<PathSegment> = self
            .ancestors_inclusive(node)
            .map(|id| {
                let el = self.el(id);
                PathSegment {
                    tag: el.tag().to_string(),
                    index: el.same_tag_index(),
                }
            })
            .collect();
        segments.reverse();
        Ok(NodePath { segments })
    }

    /// The element `path` addresses, if it still exists.
    pub fn resolve_node_path(&self, path: &NodePath) -> Option<NodeId> {
        let (depth, node) = self.resolve_path_prefix(path);
        (depth == path.len()).then_some(node).flatten()
    }

    /// Longest prefix of `path` that resolves, as `(segments matched, element)`.
    pub fn resolve_path_prefix(&self, path: &NodePath) -> (usize, Option<NodeId>) {
        let mut segments = path.segments().iter();
        let Some(first) = segments.next() else {
            return (0, None);
        };
        let root = self.root();
        if first.index != 1 || self.el(root).tag() != first.tag {
            return (0, None);
        }
        let mut current = root;
        let mut depth = 1;
        for seg in segments {
            let next = self
                .child_elements(current)
                .filter(|c| self.el(*c).tag() == seg.tag)
                .nth(seg.index as usize - 1);
            match next {
                Some(n) => {
                    current = n;
                    depth += 1;
                }
                None => break,
            }
        }
        (depth, Some(current))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const F1: &str = "<html><head><title>Docs</title></head><body><h1>Piling Guide</h1><p>Hello world example.</p><pre>const p = createPilingJs(el);</pre><p>Set columns to change rows.</p></body></html>";

    fn doc(html: &str) -> DocumentSnapshot {
        DocumentSnapshot::parse(html, "https://piling.example/docs").unwrap()
    }

    #[test]
    fn builds_paths_for_f1() {
        let d = doc(F1);
        let p2 = d.find_by_tag("p").nth(1).unwrap();
        assert_eq!(d.build_node_path(p2).unwrap().to_string(), "/html[1]/body[1]/p[2]");
        assert_eq!(d.build_node_path(d.root()).unwrap().to_string(), "/html[1]");
    }

    #[test]
    fn wrapped_paragraph_gets_new_path() {
        let wrapped = F1.replace(
            "<p>Hello world example.</p>",
            "<div><p>Hello world example.</p></div>",
        );
        let d = doc(&wrapped);
        let p = d.find_by_tag("p").next().unwrap();
        assert_eq!(d.build_node_path(p).unwrap().to_string(), "/html[1]/body[1]/div[1]/p[1]");
    }

    #[test]
    fn resolves_and_misses() {
        let d = doc(F1);
        let p1: NodePath = "/html[1]/body[1]/p[1]".parse().unwrap();
        let hit = d.resolve_node_path(&p1).unwrap();
        assert_eq!(d.element_text(hit), "Hello world example.");
        assert!(d.resolve_node_path(&"/html[1]/body[1]/p[3]".parse().unwrap()).is_none());
        assert!(d.resolve_node_path(&"/html[1]/body[1]/div[1]".parse().unwrap()).is_none());
        assert!(d.resolve_node_path(&"/body[1]".parse().unwrap()).is_none());
    }

    #[test]
    fn prefix_resolution_stops_at_first_miss() {
        let d = doc(F1);
        let path: NodePath = "/html[1]/body[1]/div[2]/p[1]".parse().unwrap();
        let (depth, node) = d.resolve_path_prefix(&path);
        assert_eq!(depth, 2);
        assert_eq!(d.el(node.unwrap()).tag(), "body");
    }

    #[test]
    fn rejects_malformed_paths() {
        for bad in ["", "/", "html[1]", "/html[0]", "/html", "/html[1]/", "/Html[1]", "/p[01]", "/p[x]"] {
            assert!(bad.parse::<NodePath>().is_err(), "{bad:?} should not parse");
        }
    }

    #[test]
    fn node_from_other_document_is_rejected() {
        let a = doc(F1);
        let b = doc(F1);
        assert_eq!(b.build_node_path(a.root()), Err(AnchorError::NodeNotInDocument));
    }

    proptest! {
        #[test]
        fn serialization_round_trips(segs in prop::collection::vec(("[a-z][a-z0-9-]{0,6}", 1u32..50), 1..8)) {
            let path = NodePath::new(segs.into_iter().map(|(tag, index)| PathSegment { tag, index }).collect()).unwrap();
            let text = path.to_string();
            let back: NodePath = text.parse().unwrap();
            prop_assert_eq!(&back, &path);
            prop_assert_eq!(back.to_string(), text);
        }
    }
}
