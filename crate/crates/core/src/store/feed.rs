//! Per-page change feeds.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use tokio::sync::mpsc::{self, error::TrySendError};

use crate::annotation::{Annotation, Membership, UserId};
use crate::url::PageUrl;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChangeKind {
    Created,
    Updated,
    Deleted,
}

/// One change to an annotation as seen from one page.
///
/// `seq` is the store's write sequence number, so it is strictly increasing
/// within every page feed (and across restarts).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeEvent {
    pub kind: ChangeKind,
    pub annotation: Annotation,
    pub seq: u64,
}

struct Subscriber {
    id: u64,
    requester: Option<UserId>,
    tx: mpsc::Sender<ChangeEvent>,
    dropped: Arc<AtomicBool>,
}

#[derive(Default)]
pub(crate) struct Feeds {
    pages: HashMap<PageUrl, Vec<Subscriber>>,
    next_id: AtomicU64,
}

impl Feeds {
    pub fn subscribe(&mut self, page: PageUrl, requester: Option<UserId>, buffer: usize) -> Subscription {
        let (tx, rx) = mpsc::channel(buffer.max(1));
        let dropped = Arc::new(AtomicBool::new(false));
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        self.pages.entry(page.clone()).or_default().push(Subscriber {
            id,
            requester,
            tx,
            dropped: dropped.clone(),
        });
        Subscription {
            page,
            rx,
            last_seq: None,
            dropped,
        }
    }

    /// Delivers `event` to every subscriber of `page` allowed to read it.
    /// Subscribers whose buffer is full are cut off.
    pub fn publish(&mut self, page: &PageUrl, event: &ChangeEvent, groups: &impl Membership) {
        let Some(subs) = self.pages.get_mut(page) else { return };
        subs.retain(|sub| {
            if !event.annotation.readable_by(sub.requester.as_deref(), groups) {
                return !sub.tx.is_closed();
            }
            match sub.tx.try_send(event.clone()) {
                Ok(()) => true,
                Err(TrySendError::Full(_)) => {
                    tracing::warn!(subscriber = sub.id, %page, "dropping slow feed subscriber");
                    sub.dropped.store(true, Ordering::SeqCst);
                    false
                }
                Err(TrySendError::Closed(_)) => false,
            }
        });
        if subs.is_empty() {
            self.pages.remove(page);
        }
    }

    pub fn subscriber_count(&self, page: &PageUrl) -> usize {
        self.pages.get(page).map_or(0, |s| s.iter().filter(|s| !s.tx.is_closed()).count())
    }
}

/// Receiving end of a page feed. Dropping it cancels the subscription.
pub struct Subscription {
    page: PageUrl,
    rx: mpsc::Receiver<ChangeEvent>,
    last_seq: Option<u64>,
    dropped: Arc<AtomicBool>,
}

impl Subscription {
    pub fn page(&self) -> &PageUrl {
        &self.page
    }

    fn admit(&mut self, ev: &ChangeEvent) -> bool {
        if self.last_seq.is_some_and(|s| ev.seq <= s) {
            return false;
        }
        self.last_seq = Some(ev.seq);
        true
    }

    /// Next event, or `None` once the feed has ended.
    pub async fn next(&mut self) -> Option<ChangeEvent> {
        loop {
            let ev = self.rx.recv().await?;
            if self.admit(&ev) {
                return Some(ev);
            }
        }
    }

    /// Next already-delivered event, without waiting.
    pub fn try_next(&mut self) -> Option<ChangeEvent> {
        loop {
            let ev = self.rx.try_recv().ok()?;
            if self.admit(&ev) {
                return Some(ev);
            }
        }
    }

    /// True when the store cut this subscriber off for falling behind.
    pub fn was_dropped(&self) -> bool {
        self.dropped.load(Ordering::SeqCst)
    }

    pub fn cancel(self) {}
}

/// Applies a feed event to a page view the way a subscriber should: the
/// record replaces any earlier copy, and is removed when deleted or no longer
/// anchored on the page.
pub fn apply_event(view: &mut std::collections::BTreeMap<String, Annotation>, page: &PageUrl, ev: &ChangeEvent) {
    if ev.kind == ChangeKind::Deleted || ev.annotation.deleted || !ev.annotation.is_on_page(page) {
        view.remove(&ev.annotation.id);
    } else {
        view.insert(ev.annotation.id.clone(), ev.annotation.clone());
    }
}
