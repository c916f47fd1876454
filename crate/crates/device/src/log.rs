use std::io::Write;
use std::path::Path;

use companion_core::protocol::{DeviceEvent, DeviceEventKind};

/// Append-only device event log with non-decreasing timestamps.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    events: Vec<DeviceEvent>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn last_ms(&self) -> u64 {
        self.events.last().map_or(0, |e| e.timestamp_ms)
    }

    pub fn push(&mut self, event: DeviceEvent) {
        assert!(
            event.timestamp_ms >= self.last_ms(),
            "event at {} ms logged after {} ms",
            event.timestamp_ms,
            self.last_ms()
        );
        self.events.push(event);
    }

    /// Append a batch after stable-sorting it by time.
    pub fn extend_sorted(&mut self, mut batch: Vec<DeviceEvent>) {
        batch.sort_by_key(|e| e.timestamp_ms);
        for e in batch {
            self.push(e);
        }
    }

    pub fn events(&self) -> &[DeviceEvent] {
        &self.events
    }

    pub fn of_kind(&self, kind: DeviceEventKind) -> impl Iterator<Item = &DeviceEvent> {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    pub fn has_errors(&self) -> bool {
        self.of_kind(DeviceEventKind::Error).next().is_some()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&e.to_json_line());
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl(&self, path: &Path) -> std::io::Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_jsonl().as_bytes())?;
        f.sync_all()
    }
}
