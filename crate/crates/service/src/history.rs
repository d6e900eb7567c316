use coilboard_core::grid::CoilId;
use coilboard_core::sim::MarkerId;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum HistoryEvent {
    /// Marker reached the target of a move or render.
    Arrived,
    /// Marker was captured by a hold coil after placement.
    Held,
    Parked,
    Contention,
    /// Marker lost its hold because the coil went dark.
    Released,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    /// Simulated clock in milliseconds.
    pub timestamp: u64,
    pub marker_id: MarkerId,
    pub coil_id: CoilId,
    pub event: HistoryEvent,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct HistoryQuery {
    pub marker_id: Option<u32>,
    pub from: Option<u64>,
    pub to: Option<u64>,
}

/// Append-only log with non-decreasing timestamps.
#[derive(Debug, Clone, Default)]
pub struct History {
    records: Vec<HistoryRecord>,
}

impl History {
    pub fn push(&mut self, timestamp: u64, marker_id: MarkerId, coil_id: CoilId, event: HistoryEvent) {
        let timestamp = self.records.last().map_or(timestamp, |r| r.timestamp.max(timestamp));
        self.records.push(HistoryRecord { timestamp, marker_id, coil_id, event });
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[HistoryRecord] {
        &self.records
    }

    /// Records matching the query; `from` and `to` are inclusive.
    pub fn query(&self, q: &HistoryQuery) -> Vec<HistoryRecord> {
        self.records
            .iter()
            .filter(|r| q.marker_id.is_none_or(|m| r.marker_id.0 == m))
            .filter(|r| q.from.is_none_or(|f| r.timestamp >= f))
            .filter(|r| q.to.is_none_or(|t| r.timestamp <= t))
            .cloned()
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monotone_and_filtered() {
        let mut h = History::default();
        h.push(10, MarkerId(0), CoilId(1), HistoryEvent::Held);
        h.push(5, MarkerId(1), CoilId(2), HistoryEvent::Held);
        h.push(30, MarkerId(0), CoilId(3), HistoryEvent::Arrived);
        let ts: Vec<u64> = h.records().iter().map(|r| r.timestamp).collect();
        assert_eq!(ts, vec![10, 10, 30]);
        assert_eq!(h.query(&HistoryQuery { marker_id: Some(0), ..Default::default() }).len(), 2);
        assert_eq!(h.query(&HistoryQuery { from: Some(11), to: Some(29), ..Default::default() }).len(), 0);
        assert_eq!(h.query(&HistoryQuery { from: Some(30), to: Some(30), marker_id: None }).len(), 1);
    }
}
