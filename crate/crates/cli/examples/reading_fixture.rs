//! Regenerates `fixtures/reading/annotations.json` from `piling.html`.
//!
//! Run with `cargo run -p adamant-cli --example reading_fixture`.

use std::path::PathBuf;
use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::Arc;

use adamant_core::anchor::{locate_quote, DocumentSnapshot};
use adamant_core::annotation::{AnnotationDraft, QuestionAction};
use adamant_core::store::StoreOptions;
use adamant_core::{AnnotationType, Store, Visibility};
use chrono::DateTime;

const URL: &str = "https://piling.example/docs/layout";
const START: i64 = 1_618_218_000; // 2021-04-12T09:00:00Z

struct Note {
    author: &'static str,
    kind: AnnotationType,
    quote: &'static str,
    occurrence: usize,
    body: &'static str,
    tags: &'static [&'static str],
}

const fn n(
    author: &'static str,
    kind: AnnotationType,
    quote: &'static str,
    body: &'static str,
    tags: &'static [&'static str],
) -> Note {
    Note {
        author,
        kind,
        quote,
        occurrence: 0,
        body,
        tags,
    }
}

use AnnotationType::{Issue, Normal, Question};

const NOTES: &[Note] = &[
    n("p1", Normal, "columns", "Use this to create rows", &["grid"]),
    n("p2", Normal, "small multiples", "These are the thumbnails shown on the canvas", &[]),
    n("p3", Issue, "pixi.js", "The install command does not pin a compatible PixiJS version", &["setup"]),
    n("p3", Normal, "peer dependency", "Remember to add pixi.js to package.json as well", &["setup"]),
    n("p2", Issue, "imageRenderer", "imageRenderer is used here but never imported in this snippet", &["setup"]),
    n("p1", Normal, "piling.set()", "Most settings can be changed at runtime through this call", &[]),
    n("p4", Normal, "required property", "Only src is needed for each item object", &[]),
    n("p5", Question, "asynchronous function", "Can a renderer return plain canvas elements instead of textures?", &["renderer"]),
    n("p2", Normal, "display object", "The renderer must resolve one per source, in order", &["renderer"]),
    n("p6", Issue, "resolves to one display object per source", "Does not say what happens when loading a source fails", &["renderer"]),
    n("p6", Question, "time series", "Is there a built-in renderer for line charts?", &["renderer"]),
    n("p5", Normal, "custom renderer", "Needed for matrix data like the Hi-C maps", &["renderer"]),
    n("p1", Issue, "the column count", "Unclear whether rows can also be set directly", &["grid"]),
    n("p3", Normal, "cellPadding", "Padding is in pixels between neighbouring cells", &["grid"]),
    n("p6", Normal, "itemSize", "Prefer this over columns for responsive layouts", &["grid"]),
    n("p4", Issue, "current width", "Resizing the window does not seem to trigger a relayout", &["grid"]),
    n("p1", Normal, "cellAspectRatio", "Set it below one to make cells wider than tall", &["grid"]),
    n("p5", Issue, "'year', 'price'", "The example data with year and price is not shown anywhere", &[]),
    n("p4", Normal, "scatter plot", "Two properties give a two dimensional layout", &[]),
    n("p2", Issue, "wrapped onto the grid", "Wrapping order is not documented for a single property", &[]),
    n("p5", Normal, "animated transition", "Transitions get slow with thousands of items", &["performance"]),
    n("p2", Normal, "coverAggregator", "Receives all items of the pile as an array", &[]),
    n("p6", Normal, "thin strip", "Previews sit underneath the cover image", &[]),
    n("p3", Issue, "aggregated values", "The color map format is never described", &[]),
    n("p3", Normal, "by overlap", "Overlap grouping merges piles whose bounding boxes touch", &[]),
    n("p6", Issue, "by distance", "Distance units and the merge threshold are missing", &[]),
    n("p1", Question, "'category', 'type'", "What does the second argument of groupBy do?", &[]),
    n("p1", Normal, "splitAll", "Undo all grouping in one call", &[]),
    n("p4", Normal, "pileDrop", "Fires once the dragged pile has been released", &["events"]),
    n("p4", Issue, "WebGL resources", "Calling destroy twice throws an error", &["events"]),
    n("p2", Question, "Hi-C matrices", "Where can I download the Hi-C example data?", &[]),
    n("p5", Normal, "npm start", "Run it from inside each example folder", &[]),
];

const ANSWERS: &[(&str, &str)] = &[
    ("asynchronous function", "Yes, anything PixiJS can turn into a texture works"),
    ("time series", "Use the SVG renderer together with a chart library"),
    ("'category', 'type'", "It names the property used for the pile label"),
];

fn main() {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/reading");
    let html = std::fs::read_to_string(root.join("piling.html")).expect("read piling.html");
    let tick = Arc::new(AtomicI64::new(START));
    let clock = {
        let tick = tick.clone();
        Arc::new(move || DateTime::from_timestamp(tick.fetch_add(420, Ordering::SeqCst), 0).unwrap())
    };
    let dir = tempfile::tempdir().expect("temp store");
    let store = Store::open_with(
        dir.path(),
        StoreOptions {
            fsync: false,
            clock,
            ..Default::default()
        },
    )
    .expect("open store");
    let fetched = DateTime::from_timestamp(START - 3600, 0).unwrap();
    let doc = DocumentSnapshot::parse_at(&html, URL, fetched).expect("parse page");
    store.put_document(doc.clone()).expect("store page");

    let mut ids = Vec::new();
    for note in NOTES {
        store.ensure_user(note.author).unwrap();
        let hits = locate_quote(&doc, note.quote);
        let anchor = hits
            .get(note.occurrence)
            .unwrap_or_else(|| panic!("`{}` not on the page", note.quote))
            .clone();
        let a = store
            .create_annotation(AnnotationDraft {
                author: note.author.into(),
                kind: note.kind,
                body: note.body.into(),
                anchors: vec![anchor],
                tags: note.tags.iter().map(|t| t.to_string()).collect(),
                visibility: Visibility::Public,
            })
            .expect("create");
        ids.push((note.quote, note.author, a.id));
    }
    for (quote, text) in ANSWERS {
        let (_, author, id) = ids.iter().find(|(q, ..)| q == quote).unwrap();
        store
            .transition_question(id, author, QuestionAction::Answer(text.to_string()))
            .expect("answer");
    }
    let (_, _, open) = ids.iter().find(|(q, ..)| *q == "Hi-C matrices").unwrap();
    store.ensure_user("p3").unwrap();
    store
        .add_reply(open, "p3", "It is linked from the repository readme")
        .expect("reply");

    let text = adamant_cli::interchange::export(&store.all_records());
    let out = root.join("annotations.json");
    std::fs::write(&out, text).expect("write fixture");
    println!("wrote {} annotations to {}", NOTES.len(), out.display());
}
