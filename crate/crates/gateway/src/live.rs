//! Per-session fan-out of turn records and device events.
//!
//! A subscriber first registers with the broadcast channel, then replays
//! the persisted log, then follows the channel. Records are deduplicated by
//! turn id, so every persisted record reaches each subscriber exactly once
//! and in order, whichever of replay and broadcast delivered it first. A
//! subscriber that falls behind the channel catches up from the store.

use std::collections::HashMap;
use std::sync::Arc;

use companion_core::pipeline::TurnRecord;
use companion_core::protocol::DeviceEvent;
use companion_core::store::{LogQuery, Store, StoreError};
use futures::Stream;
use parking_lot::Mutex;
use tokio::sync::broadcast;

const CHANNEL_CAPACITY: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub enum LiveItem {
    Turn(Arc<TurnRecord>),
    Device(Arc<DeviceEvent>),
}

impl LiveItem {
    /// SSE event name.
    pub fn event_name(&self) -> &'static str {
        match self {
            LiveItem::Turn(_) => "turn",
            LiveItem::Device(_) => "device",
        }
    }

    /// SSE data line: the record or event itself.
    pub fn data_json(&self) -> String {
        match self {
            LiveItem::Turn(r) => serde_json::to_string(r.as_ref()),
            LiveItem::Device(e) => serde_json::to_string(e.as_ref()),
        }
        .expect("live items serialize")
    }
}

#[derive(Default)]
pub struct LiveHub {
    channels: Mutex<HashMap<String, broadcast::Sender<LiveItem>>>,
}

impl LiveHub {
    pub fn new() -> Self {
        Self::default()
    }

    fn sender(&self, session_id: &str) -> broadcast::Sender<LiveItem> {
        self.channels
            .lock()
            .entry(session_id.to_string())
            .or_insert_with(|| broadcast::channel(CHANNEL_CAPACITY).0)
            .clone()
    }

    /// Never blocks; items for sessions nobody watches are dropped.
    pub fn publish(&self, session_id: &str, item: LiveItem) {
        let _ = self.sender(session_id).send(item);
    }

    pub fn subscriber_count(&self, session_id: &str) -> usize {
        self.channels
            .lock()
            .get(session_id)
            .map_or(0, |s| s.receiver_count())
    }

    /// Stream of the session's records after `after_turn` (all when `None`),
    /// followed by live items. Fails only if the session is unknown.
    pub fn subscribe(
        self: &Arc<Self>,
        store: Arc<Store>,
        session_id: &str,
        after_turn: Option<u64>,
    ) -> Result<impl Stream<Item = LiveItem> + Send + 'static, StoreError> {
        // Register before reading the log so nothing falls between the two.
        let rx = self.sender(session_id).subscribe();
        let backlog = replay(&store, session_id, after_turn)?;
        let state = Follow {
            rx,
            store,
            session_id: session_id.to_string(),
            last: after_turn,
            backlog,
        };
        Ok(futures::stream::unfold(state, |mut s| async move {
            let item = s.next().await?;
            Some((item, s))
        }))
    }
}

fn replay(
    store: &Store,
    session_id: &str,
    after_turn: Option<u64>,
) -> Result<Vec<TurnRecord>, StoreError> {
    let q = LogQuery {
        after_turn,
        ..LogQuery::default()
    };
    Ok(store.query_log(session_id, &q)?.records)
}

struct Follow {
    rx: broadcast::Receiver<LiveItem>,
    store: Arc<Store>,
    session_id: String,
    last: Option<u64>,
    backlog: Vec<TurnRecord>,
}

impl Follow {
    fn fresh(&self, turn_id: u64) -> bool {
        self.last.is_none_or(|l| turn_id > l)
    }

    async fn next(&mut self) -> Option<LiveItem> {
        loop {
            if !self.backlog.is_empty() {
                let r = self.backlog.remove(0);
                if self.fresh(r.turn_id) {
                    self.last = Some(r.turn_id);
                    return Some(LiveItem::Turn(Arc::new(r)));
                }
                continue;
            }
            match self.rx.recv().await {
                Ok(LiveItem::Turn(r)) if !self.fresh(r.turn_id) => continue,
                Ok(LiveItem::Turn(r)) => {
                    self.last = Some(r.turn_id);
                    return Some(LiveItem::Turn(r));
                }
                Ok(item) => return Some(item),
                Err(broadcast::error::RecvError::Lagged(skipped)) => {
                    tracing::warn!(session = %self.session_id, skipped, "live subscriber lagged; catching up from store");
                    self.backlog = replay(&self.store, &self.session_id, self.last).ok()?;
                }
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    }
}
