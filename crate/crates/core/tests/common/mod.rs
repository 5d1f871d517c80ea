//! Synthetic documentation pages kept as editable trees, plus brute-force
//! reference implementations used as test oracles.
#![allow(dead_code)]

use std::ops::Range;

use adamant_core::anchor::{DocumentSnapshot, Resolution};
use rand::rngs::StdRng;
use rand::seq::IndexedRandom;
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    El { tag: String, children: Vec<Node> },
    Text(String),
}

pub fn el(tag: &str, children: Vec<Node>) -> Node {
    Node::El {
        tag: tag.to_string(),
        children,
    }
}

pub fn text(s: impl Into<String>) -> Node {
    Node::Text(s.into())
}

impl Node {
    pub fn render(&self, out: &mut String) {
        match self {
            Node::Text(t) => out.push_str(t),
            Node::El { tag, children } => {
                out.push('<');
                out.push_str(tag);
                out.push('>');
                for c in children {
                    c.render(out);
                }
                out.push_str("</");
                out.push_str(tag);
                out.push('>');
            }
        }
    }

    pub fn text_len(&self) -> usize {
        match self {
            Node::Text(t) => t.chars().count(),
            Node::El { children, .. } => children.iter().map(Node::text_len).sum(),
        }
    }

    fn collect_text(&self, out: &mut String) {
        match self {
            Node::Text(t) => out.push_str(t),
            Node::El { children, .. } => children.iter().for_each(|c| c.collect_text(out)),
        }
    }

    /// Replaces the chars in `range` (relative to this node's text) with
    /// `with`, which lands in the first text node the range touches.
    fn splice(&mut self, offset: &mut usize, range: &Range<usize>, with: &mut Option<String>) {
        match self {
            Node::Text(t) => {
                let chars: Vec<char> = t.chars().collect();
                let (lo, hi) = (*offset, *offset + chars.len());
                *offset = hi;
                let touches = range.start < hi && range.end > lo || (range.is_empty() && range.start >= lo && range.start <= hi && with.is_some());
                if !touches {
                    return;
                }
                let a = range.start.clamp(lo, hi) - lo;
                let b = range.end.clamp(lo, hi) - lo;
                let mut s: String = chars[..a].iter().collect();
                if let Some(w) = with.take() {
                    s.push_str(&w);
                }
                s.extend(&chars[b..]);
                *t = s;
            }
            Node::El { children, .. } => {
                for c in children {
                    c.splice(offset, range, with);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Page {
    pub url: String,
    pub title: String,
    pub section_tags: Vec<String>,
    pub sections: Vec<Vec<Node>>,
}

const CONSONANTS: &[char] = &[
    'b', 'c', 'd', 'f', 'g', 'h', 'j', 'k', 'l', 'm', 'n', 'p', 'q', 'r', 's', 't', 'v', 'w', 'x', 'z',
];
const VOWELS: &[char] = &['a', 'e', 'i', 'o', 'u', 'y'];

pub fn word(rng: &mut StdRng) -> String {
    let syllables = rng.random_range(2..=4);
    let mut w = String::new();
    for _ in 0..syllables {
        w.push(*CONSONANTS.choose(rng).unwrap());
        w.push(*VOWELS.choose(rng).unwrap());
        if rng.random_bool(0.3) {
            w.push(*CONSONANTS.choose(rng).unwrap());
        }
    }
    w
}

pub fn sentence(rng: &mut StdRng, words: Range<usize>) -> String {
    let n = rng.random_range(words);
    (0..n).map(|_| word(rng)).collect::<Vec<_>>().join(" ")
}

fn inline_run(rng: &mut StdRng) -> Vec<Node> {
    let mut out = vec![text(format!("{} ", sentence(rng, 3..10)))];
    for _ in 0..rng.random_range(0..3) {
        let tag = *["em", "code", "a", "strong"].choose(rng).unwrap();
        out.push(el(tag, vec![text(sentence(rng, 1..4))]));
        out.push(text(format!(" {}. ", sentence(rng, 2..8))));
    }
    out
}

pub fn block(rng: &mut StdRng) -> Node {
    match rng.random_range(0..10) {
        0 => el("ul", (0..rng.random_range(1..4)).map(|_| el("li", inline_run(rng))).collect()),
        1 => el("div", vec![el("p", inline_run(rng))]),
        2 => el("pre", vec![text(sentence(rng, 2..6))]),
        _ => el("p", inline_run(rng)),
    }
}

pub fn page(rng: &mut StdRng, index: usize) -> Page {
    let sections: Vec<Vec<Node>> = (0..rng.random_range(2..5))
        .map(|_| {
            let mut blocks = vec![el("h2", vec![text(sentence(rng, 1..4))])];
            blocks.extend((0..rng.random_range(1..5)).map(|_| block(rng)));
            blocks
        })
        .collect();
    Page {
        url: format!("https://docs.example/lib/page-{index}"),
        title: sentence(rng, 2..4),
        section_tags: vec!["section".into(); sections.len()],
        sections,
    }
}

impl Page {
    pub fn html(&self) -> String {
        let mut out = String::from("<!DOCTYPE html><html><head><title>");
        out.push_str(&self.title);
        out.push_str("</title><style>p {}</style></head><body><nav><a>home</a></nav><main>");
        for (tag, blocks) in self.section_tags.iter().zip(&self.sections) {
            out.push_str(&format!("<{tag}>"));
            for b in blocks {
                b.render(&mut out);
            }
            out.push_str(&format!("</{tag}>"));
        }
        out.push_str("</main></body></html>");
        out
    }

    /// Body text exactly as the anchoring engine sees it.
    pub fn text(&self) -> String {
        let mut out = format!("{}home", self.title);
        for b in self.sections.iter().flatten() {
            b.collect_text(&mut out);
        }
        out
    }

    pub fn snapshot(&self) -> DocumentSnapshot {
        DocumentSnapshot::parse(&self.html(), &self.url).expect("synthetic page parses")
    }

    fn prefix(&self) -> usize {
        self.title.chars().count() + 4
    }

    /// Section and block index holding global text position `pos`.
    pub fn block_at(&self, pos: usize) -> (usize, usize) {
        let mut at = self.prefix();
        for (s, blocks) in self.sections.iter().enumerate() {
            for (b, node) in blocks.iter().enumerate() {
                let len = node.text_len();
                if pos < at + len {
                    return (s, b);
                }
                at += len;
            }
        }
        panic!("position {pos} is past the text");
    }

    /// Replaces global text range `range` with `with`.
    pub fn splice(&mut self, range: Range<usize>, with: &str) {
        let mut offset = self.prefix();
        let mut with = Some(with.to_string());
        for b in self.sections.iter_mut().flatten() {
            b.splice(&mut offset, &range, &mut with);
        }
        assert!(with.is_none(), "range {range:?} outside the text");
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mutation {
    InsertSibling,
    PrependText,
    WrapInContainer,
    RenameAncestor,
    InQuoteEdit,
    DeleteQuote,
}

impl Mutation {
    pub const ALL: [Mutation; 6] = [
        Mutation::InsertSibling,
        Mutation::PrependText,
        Mutation::WrapInContainer,
        Mutation::RenameAncestor,
        Mutation::InQuoteEdit,
        Mutation::DeleteQuote,
    ];
}

/// Applies `m` around the quote occupying global range `quote`.
pub fn mutate(page: &Page, quote: Range<usize>, m: Mutation, rng: &mut StdRng) -> Page {
    let mut p = page.clone();
    let (s, b) = p.block_at(quote.start);
    match m {
        Mutation::InsertSibling => {
            let extra = el("p", vec![text(sentence(rng, 3..8))]);
            p.sections[s].insert(b, extra);
        }
        Mutation::PrependText => {
            let prefix = text(format!("{} ", sentence(rng, 1..4)));
            let target = &mut p.sections[s][b];
            let target = match target {
                Node::El { tag, children } if tag == "ul" || tag == "div" => &mut children[0],
                other => other,
            };
            if let Node::El { children, .. } = target {
                children.insert(0, prefix);
            }
        }
        Mutation::WrapInContainer => {
            let inner = p.sections[s][b].clone();
            p.sections[s][b] = el("div", vec![inner]);
        }
        Mutation::RenameAncestor => p.section_tags[s] = "article".into(),
        Mutation::InQuoteEdit => {
            let chars: Vec<char> = page.text().chars().collect();
            let edits = rng.random_range(1..=2);
            let mut positions: Vec<usize> = Vec::new();
            while positions.len() < edits {
                let at = rng.random_range(quote.clone());
                if !positions.contains(&at) {
                    positions.push(at);
                }
            }
            positions.sort_unstable_by(|a, b| b.cmp(a));
            for at in positions {
                let replacement = loop {
                    let c = *CONSONANTS.choose(rng).unwrap();
                    if c != chars[at] {
                        break c;
                    }
                };
                match rng.random_range(0..3) {
                    0 => p.splice(at..at + 1, &replacement.to_string()),
                    1 => p.splice(at..at + 1, ""),
                    _ => p.splice(at..at, &replacement.to_string()),
                }
            }
        }
        Mutation::DeleteQuote => p.splice(quote, ""),
    }
    p
}

/// Every start position of `needle` in `hay`.
pub fn scan(hay: &[char], needle: &[char]) -> Vec<usize> {
    if needle.is_empty() || needle.len() > hay.len() {
        return Vec::new();
    }
    (0..=hay.len() - needle.len())
        .filter(|&i| hay[i..i + needle.len()] == *needle)
        .collect()
}

/// Textbook Levenshtein distance.
pub fn levenshtein(a: &[char], b: &[char]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.iter().enumerate() {
        let mut cur = vec![i + 1; b.len() + 1];
        for (j, cb) in b.iter().enumerate() {
            cur[j + 1] = (prev[j] + usize::from(ca != cb)).min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        prev = cur;
    }
    prev[b.len()]
}

/// Every (start, width) window over `hay` whose width is within the band
/// around `quote.len()`, with its edit distance to `quote`. One DP per start
/// covers all widths.
pub fn all_windows(hay: &[char], quote: &[char], band: f64) -> Vec<(usize, usize, usize)> {
    let q = quote.len();
    let slack = (band * q as f64).floor() as usize;
    let (lo, hi) = ((q - slack).max(1), q + slack);
    let mut out = Vec::new();
    for start in 0..hay.len() {
        // dist[i] = distance between quote[..i] and the current window
        let mut col: Vec<usize> = (0..=q).collect();
        for w in 1..=hi.min(hay.len() - start) {
            let h = hay[start + w - 1];
            let mut next = vec![w; q + 1];
            for i in 1..=q {
                next[i] = (col[i - 1] + usize::from(quote[i - 1] != h)).min(col[i] + 1).min(next[i - 1] + 1);
            }
            col = next;
            if w >= lo {
                out.push((start, w, col[q]));
            }
        }
    }
    out
}

/// What a correct re-anchoring of `quote` into `doc` must produce.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expect {
    At(Range<usize>),
    Broken,
    /// The quote occurs more than once; not a unique-quote case.
    NotUnique,
}

/// Reference answer: the unique exact occurrence if there is one, otherwise
/// the best fuzzy window by brute force (smallest distance, then earliest
/// start, then shortest width), broken when over the threshold or when
/// equally good windows sit apart in different elements.
pub fn oracle(doc: &DocumentSnapshot, quote: &str, threshold: f64, band: f64) -> Expect {
    let q: Vec<char> = quote.chars().collect();
    let hay = doc.document_text();
    match scan(hay, &q).as_slice() {
        [one] => return Expect::At(*one..*one + q.len()),
        [] => {}
        _ => return Expect::NotUnique,
    }
    let windows = all_windows(hay, &q, band);
    let Some(best) = windows.iter().map(|w| w.2).min() else {
        return Expect::Broken;
    };
    if best as f64 > threshold * q.len() as f64 + 1e-9 {
        return Expect::Broken;
    }
    let mut tied: Vec<(usize, usize)> = Vec::new();
    for &(start, width, d) in &windows {
        if d == best && tied.last().is_none_or(|t| t.0 != start) {
            tied.push((start, width));
        }
    }
    let places: Vec<(Range<usize>, _)> = tied
        .iter()
        .map(|&(s, w)| (s..s + w, doc.deepest_containing(doc.root(), s..s + w)))
        .collect();
    for (i, (ra, ea)) in places.iter().enumerate() {
        for (rb, eb) in &places[i + 1..] {
            if ea != eb && (ra.end <= rb.start || rb.end <= ra.start) {
                return Expect::Broken;
            }
        }
    }
    Expect::At(places[0].0.clone())
}

/// Global char range a resolution points at in `doc`.
pub fn resolved_range(doc: &DocumentSnapshot, r: &Resolution) -> Option<Range<usize>> {
    let node = doc.resolve_node_path(r.path.as_ref()?)?;
    let span = doc.element(node)?.text_range();
    let start = span.start + r.start_offset?;
    let end = span.end.checked_sub(r.end_offset?)?;
    (start <= end).then_some(start..end)
}

pub mod lifecycle {
    //! Random operation sequences on one annotation, checked step by step
    //! against the lifecycle rules.

    use adamant_core::annotation::{
        AnnotationDraft, AnnotationError, NoGroups, PinChange, QuestionAction, QuestionState, TodoState,
        ANSWER_SEPARATOR,
    };
    use adamant_core::{Annotation, AnnotationType, TypeState, Visibility};
    use chrono::{DateTime, Duration, Utc};
    use rand::rngs::StdRng;
    use rand::seq::IndexedRandom;
    use rand::Rng;

    pub const AUTHOR: &str = "author";
    const USERS: [&str; 3] = [AUTHOR, AUTHOR, "reader"];

    #[derive(Debug, Clone)]
    pub enum Op {
        EditBody(&'static str, String),
        Answer(&'static str, String),
        Dismiss(&'static str),
        Complete(&'static str),
        Pin(&'static str, bool),
        Reply(&'static str, String),
        Delete(&'static str),
    }

    fn short_text(rng: &mut StdRng) -> String {
        match rng.random_range(0..4) {
            0 => String::new(),
            1 => " ".into(),
            _ => super::sentence(rng, 1..4),
        }
    }

    pub fn random_op(rng: &mut StdRng) -> Op {
        let who = *USERS.choose(rng).unwrap();
        match rng.random_range(0..100) {
            0..20 => Op::EditBody(who, short_text(rng)),
            20..40 => Op::Answer(who, short_text(rng)),
            40..50 => Op::Dismiss(who),
            50..65 => Op::Complete(who),
            65..80 => Op::Pin(who, rng.random_bool(0.5)),
            80..97 => Op::Reply(who, short_text(rng)),
            _ => Op::Delete(who),
        }
    }

    pub fn fresh(kind: AnnotationType, rng: &mut StdRng, now: DateTime<Utc>) -> Annotation {
        let quote = super::sentence(rng, 1..3);
        let html = format!("<p>{quote}</p>");
        let doc = adamant_core::anchor::DocumentSnapshot::parse(&html, "https://docs.example/a").unwrap();
        let anchor = adamant_core::anchor::locate_quote(&doc, &quote).remove(0);
        let body = if kind == AnnotationType::Highlight {
            String::new()
        } else {
            super::sentence(rng, 1..5)
        };
        adamant_core::annotation::create_annotation(
            AnnotationDraft {
                author: AUTHOR.into(),
                kind,
                body,
                anchors: vec![anchor],
                tags: Default::default(),
                visibility: Visibility::Public,
            },
            "ann-000001".into(),
            now,
            &NoGroups,
        )
        .unwrap()
    }

    pub enum Outcome {
        Record(Annotation),
        Reader(PinChange),
        Failed(AnnotationError),
    }

    pub fn apply(a: &Annotation, op: &Op, now: DateTime<Utc>) -> Outcome {
        let r = match op {
            Op::EditBody(u, b) => a.edit_body(u, b, now),
            Op::Answer(u, t) => a.transition_question(u, QuestionAction::Answer(t.clone()), now),
            Op::Dismiss(u) => a.transition_question(u, QuestionAction::Dismiss, now),
            Op::Complete(u) => a.complete_todo(u, now),
            Op::Pin(u, f) => match a.set_pinned(u, *f, &NoGroups, now) {
                Ok(PinChange::Record(next)) => Ok(next),
                Ok(other) => return Outcome::Reader(other),
                Err(e) => Err(e),
            },
            Op::Reply(u, b) => a.add_reply(u, b, &NoGroups, now),
            Op::Delete(u) => a.delete(u, now),
        };
        match r {
            Ok(next) => Outcome::Record(next),
            Err(e) => Outcome::Failed(e),
        }
    }

    /// Expected error for `op` on `a`, or `None` when it must succeed.
    fn expected_error(a: &Annotation, op: &Op) -> Option<AnnotationError> {
        use AnnotationError::*;
        let not_author = |u: &str| (u != a.author).then_some(NotAuthor);
        if let Op::Delete(u) = op {
            return not_author(u);
        }
        if a.deleted {
            return Some(DeletedAnnotation);
        }
        match op {
            Op::EditBody(u, _) => not_author(u),
            Op::Answer(u, _) | Op::Dismiss(u) => match &a.state {
                TypeState::Question(QuestionState::Unanswered) => not_author(u).or(match op {
                    Op::Answer(_, t) if t.is_empty() => Some(EmptyBody),
                    _ => None,
                }),
                TypeState::Question(_) => Some(AlreadyResolved),
                _ => Some(NotAQuestion),
            },
            Op::Complete(u) => match &a.state {
                TypeState::Todo(TodoState::Open) => not_author(u),
                TypeState::Todo(_) => Some(AlreadyDone),
                _ => Some(NotATodo),
            },
            Op::Pin(..) => None,
            Op::Reply(_, b) => b.trim().is_empty().then_some(EmptyBody),
            Op::Delete(_) => unreachable!(),
        }
    }

    /// Checks one step; returns the record to continue from.
    pub fn check(a: &Annotation, op: &Op, out: Outcome) -> Result<Annotation, String> {
        let fail = |m: String| Err(format!("{op:?} on {a:?}: {m}"));
        let expected = expected_error(a, op);
        let next = match (out, expected) {
            (Outcome::Failed(e), Some(x)) if e == x => return Ok(a.clone()),
            (Outcome::Failed(e), x) => return fail(format!("failed with {e:?}, expected {x:?}")),
            (_, Some(x)) => return fail(format!("succeeded, expected {x:?}")),
            (Outcome::Reader(change), None) => {
                return match (op, change) {
                    (Op::Pin(u, f), PinChange::Reader { user, pinned }) if *u != a.author && user == *u && pinned == *f => {
                        Ok(a.clone())
                    }
                    (_, c) => fail(format!("unexpected pin change {c:?}")),
                };
            }
            (Outcome::Record(n), None) => n,
        };
        if let Err(e) = next.check_invariants() {
            return fail(format!("invariant broken: {e}"));
        }
        if next.kind == AnnotationType::Highlight && !next.body.is_empty() {
            return fail("highlight with a body".into());
        }
        if a.state.is_terminal() && next.state != a.state {
            return fail(format!("left terminal state for {:?}", next.state));
        }
        let unchanged = next == *a;
        if !unchanged && (next.revision != a.revision + 1 || next.modified_at < a.modified_at) {
            return fail("revision or timestamp did not advance".into());
        }
        let same_except = |n: &Annotation, body: &str, kind, pinned: bool| {
            n.body == body && n.kind == kind && n.pinned == pinned && n.replies == a.replies && n.deleted == a.deleted
        };
        let ok = match op {
            Op::EditBody(_, b) => {
                let kind = if a.kind == AnnotationType::Highlight && !b.is_empty() {
                    AnnotationType::Normal
                } else {
                    a.kind
                };
                same_except(&next, b, kind, a.pinned) && next.state == a.state
            }
            Op::Answer(_, t) => {
                let body = format!("{}{ANSWER_SEPARATOR}{t}", a.body);
                same_except(&next, &body, a.kind, false)
                    && matches!(&next.state, TypeState::Question(QuestionState::Answered { answer_text, .. }) if answer_text == t)
            }
            Op::Dismiss(_) => {
                same_except(&next, &a.body, a.kind, false)
                    && matches!(next.state, TypeState::Question(QuestionState::NotRelevant { .. }))
            }
            Op::Complete(_) => {
                same_except(&next, &a.body, a.kind, false)
                    && matches!(next.state, TypeState::Todo(TodoState::Done { .. }))
            }
            Op::Pin(_, f) => same_except(&next, &a.body, a.kind, *f) && next.state == a.state,
            Op::Reply(u, b) => {
                let r = next.replies.last();
                next.replies.len() == a.replies.len() + 1
                    && r.is_some_and(|r| r.author == *u && r.body == *b && r.id == format!("{}-r{}", a.id, a.replies.len() + 1))
                    && next.body == a.body
                    && next.state == a.state
            }
            Op::Delete(_) => next.deleted && next.body == a.body && next.state == a.state,
        };
        if !ok {
            return fail(format!("wrong result {next:?}"));
        }
        Ok(next)
    }

    /// Runs `steps` random operations over fresh annotations of every type.
    /// Returns the number of steps checked.
    pub fn run(seed: u64, steps: usize) -> Result<usize, String> {
        let mut rng = <StdRng as rand::SeedableRng>::seed_from_u64(seed);
        let mut now = DateTime::from_timestamp(1_600_000_000, 0).unwrap();
        let mut done = 0;
        while done < steps {
            let kind = *AnnotationType::ALL.choose(&mut rng).unwrap();
            let mut a = fresh(kind, &mut rng, now);
            for _ in 0..rng.random_range(1..40).min(steps - done) {
                now += Duration::seconds(rng.random_range(0..3));
                let op = random_op(&mut rng);
                let out = apply(&a, &op, now);
                a = check(&a, &op, out)?;
                done += 1;
            }
        }
        Ok(done)
    }
}

pub mod world {
    //! Randomized stores and a brute-force reference for listing queries.

    use std::cmp::Reverse;
    use std::collections::{BTreeMap, BTreeSet};
    use std::sync::atomic::{AtomicI64, Ordering};
    use std::sync::Arc;

    use adamant_core::anchor::{create_selector, DocumentSnapshot, NodeId, Selector};
    use adamant_core::annotation::{AnnotationDraft, AnnotationEdit, QuestionAction};
    use adamant_core::search::SortMode;
    use adamant_core::store::StoreOptions;
    use adamant_core::{Annotation, AnnotationType, FilterCriteria, PageUrl, SearchScope, Store, Visibility};
    use chrono::{DateTime, Utc};
    use rand::rngs::StdRng;
    use rand::seq::IndexedRandom;
    use rand::{Rng, SeedableRng};

    pub const VOCAB: &[&str] = &[
        "grid", "pile", "cover", "Preview", "renderer", "matrix", "layout", "zoom", "columns", "rows", "scatter",
        "drag", "drop", "aggregate", "colour", "label", "texture", "item", "canvas", "event",
    ];
    pub const TAGS: &[&str] = &["api", "bug", "docs", "grid", "perf"];
    pub const STATES: &[&str] = &["none", "unanswered", "answered", "not_relevant", "open", "done"];

    pub struct World {
        pub store: Arc<Store>,
        pub dir: tempfile::TempDir,
        pub users: Vec<String>,
        pub groups: BTreeMap<String, BTreeSet<String>>,
        pub docs: Vec<DocumentSnapshot>,
        pub start: DateTime<Utc>,
        pub end: DateTime<Utc>,
    }

    fn words(rng: &mut StdRng, n: std::ops::Range<usize>) -> String {
        let n = rng.random_range(n);
        let mut out = String::new();
        for i in 0..n {
            if i > 0 {
                out.push_str([" ", " ", ", ", ". "].choose(rng).unwrap());
            }
            out.push_str(VOCAB.choose(rng).unwrap());
        }
        out
    }

    pub fn random_anchor(doc: &DocumentSnapshot, rng: &mut StdRng) -> Selector {
        let elements: Vec<NodeId> = doc.elements().map(|(id, _)| id).filter(|id| doc.text_len(*id) > 0).collect();
        let node = *elements.choose(rng).unwrap();
        let len = doc.text_len(node);
        let start = rng.random_range(0..len);
        let quote_len = rng.random_range(1..=(len - start).min(30));
        create_selector(doc, node, start, quote_len).unwrap()
    }

    pub fn store_in(dir: &std::path::Path, start: i64) -> Store {
        let tick = Arc::new(AtomicI64::new(0));
        let clock = Arc::new(move || {
            let n = tick.fetch_add(1, Ordering::SeqCst);
            DateTime::from_timestamp(start + 60 * (n / 3), 0).unwrap()
        });
        Store::open_with(
            dir,
            StoreOptions {
                fsync: false,
                feed_buffer: 1 << 16,
                clock,
                ..Default::default()
            },
        )
        .unwrap()
    }

    pub fn build(seed: u64, annotations: usize) -> World {
        let mut rng = StdRng::seed_from_u64(seed);
        let dir = tempfile::tempdir().unwrap();
        let start = 1_650_000_000;
        let store = store_in(dir.path(), start);
        let users: Vec<String> = (0..6).map(|i| format!("u{i}")).collect();
        for u in &users {
            store.ensure_user(u).unwrap();
        }
        let mut groups = BTreeMap::new();
        for name in ["team", "reviewers"] {
            let members: BTreeSet<String> = users.iter().filter(|_| rng.random_bool(0.4)).cloned().collect();
            let members = if members.is_empty() { BTreeSet::from([users[0].clone()]) } else { members };
            let g = store.create_group(name, members.iter().cloned()).unwrap();
            groups.insert(g.id, members);
        }
        let urls = [
            "https://docs.example/lib/intro",
            "https://docs.example/lib/api?v=2",
            "https://docs.example/lib/guide",
            "https://other.example/notes",
        ];
        let mut docs = Vec::new();
        for (i, url) in urls.iter().enumerate() {
            let mut p = super::page(&mut rng, i);
            p.url = url.to_string();
            let doc = p.snapshot();
            store.put_document(doc.clone()).unwrap();
            docs.push(doc);
        }
        let group_ids: Vec<String> = groups.keys().cloned().collect();
        let mut ids = Vec::new();
        for _ in 0..annotations {
            let author = users.choose(&mut rng).unwrap().clone();
            let kind = *AnnotationType::ALL.choose(&mut rng).unwrap();
            let mut anchors = vec![random_anchor(docs.choose(&mut rng).unwrap(), &mut rng)];
            if rng.random_bool(0.15) {
                let extra = random_anchor(docs.choose(&mut rng).unwrap(), &mut rng);
                if !anchors.contains(&extra) {
                    anchors.push(extra);
                }
            }
            let visibility = match rng.random_range(0..10) {
                0..6 => Visibility::Public,
                6..8 => Visibility::Private,
                _ => Visibility::Group(group_ids.choose(&mut rng).unwrap().clone()),
            };
            let a = store
                .create_annotation(AnnotationDraft {
                    author,
                    kind,
                    body: if kind == AnnotationType::Highlight { String::new() } else { words(&mut rng, 1..9) },
                    anchors,
                    tags: TAGS.iter().filter(|_| rng.random_bool(0.25)).map(|t| t.to_string()).collect(),
                    visibility,
                })
                .unwrap();
            ids.push(a);
        }
        for a in &ids {
            match rng.random_range(0..20) {
                0 => {
                    store.delete_annotation(&a.id, &a.author).unwrap();
                }
                1..4 if a.kind == AnnotationType::Question => {
                    let action = if rng.random_bool(0.7) {
                        QuestionAction::Answer(words(&mut rng, 1..5))
                    } else {
                        QuestionAction::Dismiss
                    };
                    store.transition_question(&a.id, &a.author, action).unwrap();
                }
                1..4 if a.kind == AnnotationType::Todo => {
                    store.complete_todo(&a.id, &a.author).unwrap();
                }
                4..6 => {
                    store.add_reply(&a.id, &a.author, &words(&mut rng, 1..6)).unwrap();
                }
                6 => {
                    let edit = AnnotationEdit {
                        add_tags: vec![TAGS.choose(&mut rng).unwrap().to_string()],
                        ..Default::default()
                    };
                    store.edit_annotation(&a.id, &a.author, edit, None).unwrap();
                }
                _ => {}
            }
        }
        let end = store.now();
        World {
            store: Arc::new(store),
            dir,
            users,
            groups,
            docs,
            start: DateTime::from_timestamp(start, 0).unwrap(),
            end,
        }
    }

    #[derive(Debug, Clone)]
    pub struct Query {
        pub requester: Option<String>,
        pub scope: SearchScope,
        pub text: Option<String>,
        pub criteria: FilterCriteria,
        pub sort: Option<SortMode>,
    }

    impl World {
        pub fn random_query(&self, rng: &mut StdRng) -> Query {
            let requester = rng.random_bool(0.85).then(|| self.users.choose(rng).unwrap().clone());
            let page = self.docs.choose(rng).unwrap().url().clone();
            let scope = match rng.random_range(0..3) {
                0 => SearchScope::Page(page.clone()),
                1 => SearchScope::Site(page.site()),
                _ => SearchScope::All,
            };
            let text = rng.random_bool(0.6).then(|| {
                let mut t = words(rng, 1..3);
                if rng.random_bool(0.3) {
                    t = t.to_uppercase();
                }
                t
            });
            let mut criteria = FilterCriteria::default();
            if rng.random_bool(0.4) {
                criteria.types = Some(AnnotationType::ALL.iter().filter(|_| rng.random_bool(0.4)).copied().collect());
            }
            if rng.random_bool(0.3) {
                criteria.tags.insert(TAGS.choose(rng).unwrap().to_string());
            }
            if rng.random_bool(0.2) {
                criteria.states = Some(STATES.iter().filter(|_| rng.random_bool(0.4)).map(|s| s.to_string()).collect());
            }
            let span = (self.end - self.start).num_seconds().max(1);
            let at = |rng: &mut StdRng| self.start + chrono::Duration::seconds(rng.random_range(0..=span) / 60 * 60);
            if rng.random_bool(0.3) {
                criteria.created_from = Some(at(rng));
            }
            if rng.random_bool(0.3) {
                criteria.created_to = Some(at(rng));
            }
            let sort = match rng.random_range(0..4) {
                0 => None,
                1 => Some(SortMode::TimeDesc),
                2 => Some(SortMode::TimeAsc),
                _ => Some(SortMode::DocumentOrder(page)),
            };
            Query {
                requester,
                scope,
                text,
                criteria,
                sort,
            }
        }

        pub fn readable(&self, a: &Annotation, user: Option<&str>) -> bool {
            match (&a.visibility, user) {
                (Visibility::Public, _) => true,
                (_, None) => false,
                (Visibility::Private, Some(u)) => a.author == u,
                (Visibility::Group(g), Some(u)) => a.author == u || self.groups[g].contains(u),
            }
        }

        fn doc(&self, url: &PageUrl) -> &DocumentSnapshot {
            self.docs.iter().find(|d| d.url() == url).unwrap()
        }

        /// Expected ids for `q`, computed from the raw records.
        pub fn reference(&self, q: &Query) -> Vec<String> {
            let in_scope = |a: &Annotation| {
                a.anchors.iter().any(|s| match &q.scope {
                    SearchScope::Page(p) => s.page_url == *p,
                    SearchScope::Site(site) => {
                        let host = |u: &str| u.split('/').take(3).collect::<Vec<_>>().join("/");
                        host(s.page_url.as_str()) == site.as_str()
                    }
                    SearchScope::All => true,
                })
            };
            let mut hits: Vec<(u64, Annotation)> = self
                .store
                .all_records()
                .into_iter()
                .filter(|a| !a.deleted && self.readable(a, q.requester.as_deref()) && in_scope(a))
                .filter_map(|a| match &q.text {
                    None => Some((0, a)),
                    Some(t) => score(&a, t).map(|s| (s, a)),
                })
                .collect();
            if q.text.is_some() {
                hits.sort_by(|x, y| {
                    (Reverse(x.0), Reverse(x.1.modified_at), &x.1.id).cmp(&(Reverse(y.0), Reverse(y.1.modified_at), &y.1.id))
                });
            } else {
                hits.sort_by(|x, y| x.1.id.cmp(&y.1.id));
            }
            let c = &q.criteria;
            let mut kept: Vec<Annotation> = hits
                .into_iter()
                .map(|(_, a)| a)
                .filter(|a| {
                    c.types.as_ref().is_none_or(|t| t.contains(&a.kind))
                        && c.created_from.is_none_or(|f| f <= a.created_at)
                        && c.created_to.is_none_or(|t| a.created_at <= t)
                        && c.tags.is_subset(&a.tags)
                        && c.states.as_ref().is_none_or(|s| s.contains(a.state.status()))
                })
                .collect();
            match &q.sort {
                None => {}
                Some(SortMode::TimeDesc) => kept.sort_by(|a, b| (Reverse(a.created_at), &a.id).cmp(&(Reverse(b.created_at), &b.id))),
                Some(SortMode::TimeAsc) => kept.sort_by(|a, b| (a.created_at, &a.id).cmp(&(b.created_at, &b.id))),
                Some(SortMode::DocumentOrder(url)) => {
                    let doc = self.doc(url);
                    let order = preorder(doc);
                    let key = |a: &Annotation| {
                        a.anchors
                            .iter()
                            .filter(|s| s.page_url == *url)
                            .filter_map(|s| Some((order[&doc.resolve_node_path(&s.path)?], s.start_offset)))
                            .min()
                    };
                    kept.sort_by(|a, b| {
                        let (ka, kb) = (key(a), key(b));
                        (ka.is_none(), ka, a.created_at, &a.id).cmp(&(kb.is_none(), kb, b.created_at, &b.id))
                    });
                }
            }
            kept.into_iter().map(|a| a.id).collect()
        }
    }

    /// Element visiting order from a depth-first walk.
    fn preorder(doc: &DocumentSnapshot) -> BTreeMap<NodeId, usize> {
        let mut out = BTreeMap::new();
        let mut stack = vec![doc.root()];
        while let Some(n) = stack.pop() {
            out.insert(n, out.len());
            let children: Vec<NodeId> = doc.child_elements(n).collect();
            stack.extend(children.into_iter().rev());
        }
        out
    }

    fn tokens(s: &str) -> Vec<String> {
        let mut out = Vec::new();
        let mut cur = String::new();
        for c in s.chars() {
            if c.is_alphanumeric() {
                cur.extend(c.to_lowercase());
            } else if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
        out
    }

    /// Summed frequency of the distinct query tokens, if all occur.
    fn score(a: &Annotation, text: &str) -> Option<u64> {
        let mut fields = tokens(&a.body);
        for s in &a.anchors {
            fields.extend(tokens(&s.quote));
        }
        for t in &a.tags {
            fields.extend(tokens(t));
        }
        for r in &a.replies {
            fields.extend(tokens(&r.body));
        }
        let wanted: BTreeSet<String> = tokens(text).into_iter().collect();
        let mut total = 0;
        for w in wanted {
            let n = fields.iter().filter(|f| **f == w).count() as u64;
            if n == 0 {
                return None;
            }
            total += n;
        }
        Some(total)
    }
}
