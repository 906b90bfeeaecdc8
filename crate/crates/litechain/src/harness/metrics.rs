//! The exported measurement stream: one row per communication round plus
//! clustering and update-consensus event traces, with CSV and JSON
//! renderers.
//!
//! CSV columns, in order: `round, sim_time, test_accuracy, tt_latency,
//! vt_latency, round_latency, ledger_live_bytes, ledger_total_bytes,
//! security_score, committed, rejected_replay, rejected_quality,
//! rejected_signature, rejected_votes, offchain_rejected, welfare`.
//! Counters are per-round; `welfare` repeats the clustering game's final
//! social welfare (zero for one-tier schemes).

use serde::{Deserialize, Serialize};

use super::scenario::Scheme;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RejectCounts {
    pub replay: u64,
    pub quality: u64,
    pub signature: u64,
    pub votes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub round: u64,
    pub sim_time: f64,
    pub test_accuracy: f64,
    /// Slowest training-plus-aggregation leg of the round.
    pub tt_latency: f64,
    /// Slowest verification leg of the round.
    pub vt_latency: f64,
    /// The simulated-clock advance of the round.
    pub round_latency: f64,
    pub ledger_live_bytes: u64,
    pub ledger_total_bytes: u64,
    pub security_score: f64,
    pub committed: u64,
    pub rejected: RejectCounts,
    pub offchain_rejected: u64,
    pub welfare: f64,
}

/// One clustering-game slot in the exported trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringSlot {
    pub slot: usize,
    pub executed_ops: usize,
    pub welfare: f64,
}

/// One update-consensus event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateEvent {
    pub round: u64,
    pub attempts: usize,
    pub pruned_blocks: usize,
    pub latency: f64,
    pub live_bytes_after: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsLog {
    pub scheme: Scheme,
    pub seed: u64,
    pub n_devices: usize,
    pub n_clusters: usize,
    pub rows: Vec<MetricsRow>,
    pub clustering_trace: Vec<ClusteringSlot>,
    pub update_events: Vec<UpdateEvent>,
    pub update_latency_total: f64,
    pub final_accuracy: f64,
    /// Simulated seconds at which the target accuracy was first reached.
    pub time_to_target: Option<f64>,
    pub rounds_run: u64,
    pub final_sim_time: f64,
}

impl MetricsLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "round,sim_time,test_accuracy,tt_latency,vt_latency,round_latency,\
             ledger_live_bytes,ledger_total_bytes,security_score,committed,\
             rejected_replay,rejected_quality,rejected_signature,rejected_votes,\
             offchain_rejected,welfare\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.round,
                r.sim_time,
                r.test_accuracy,
                r.tt_latency,
                r.vt_latency,
                r.round_latency,
                r.ledger_live_bytes,
                r.ledger_total_bytes,
                r.security_score,
                r.committed,
                r.rejected.replay,
                r.rejected.quality,
                r.rejected.signature,
                r.rejected.votes,
                r.offchain_rejected,
                r.welfare,
            ));
        }
        out
    }

    /// JSON summary of the run.
    pub fn summary_json(&self) -> String {
        let committed: u64 = self.rows.iter().map(|r| r.committed).sum();
        let rejected: u64 = self
            .rows
            .iter()
            .map(|r| {
                r.rejected.replay + r.rejected.quality + r.rejected.signature + r.rejected.votes
            })
            .sum();
        let summary = serde_json::json!({
            "scheme": self.scheme.as_str(),
            "seed": self.seed,
            "devices": self.n_devices,
            "clusters": self.n_clusters,
            "rounds_run": self.rounds_run,
            "final_accuracy": self.final_accuracy,
            "final_sim_time": self.final_sim_time,
            "time_to_target": self.time_to_target,
            "committed_blocks": committed,
            "rejected_proposals": rejected,
            "offchain_rejected": self.rows.iter().map(|r| r.offchain_rejected).sum::<u64>(),
            "ledger_live_bytes": self.rows.last().map(|r| r.ledger_live_bytes).unwrap_or(0),
            "ledger_total_bytes": self.rows.last().map(|r| r.ledger_total_bytes).unwrap_or(0),
            "update_consensuses": self.update_events.len(),
            "update_latency_total": self.update_latency_total,
            "clustering_slots": self.clustering_trace.len(),
            "final_security_score": self.rows.last().map(|r| r.security_score).unwrap_or(0.0),
        });
        serde_json::to_string_pretty(&summary).expect("summary serializes")
    }

    /// Accuracy resampled onto a fixed simulated-time grid (step seconds):
    /// the last known accuracy at or before each grid point.
    pub fn resample_accuracy(&self, step: f64) -> Vec<(f64, f64)> {
        let mut grid = Vec::new();
        if self.rows.is_empty() || step <= 0.0 {
            return grid;
        }
        let end = self.final_sim_time;
        let mut t = 0.0;
        let mut idx = 0usize;
        let mut last = 0.0;
        while t <= end {
            while idx < self.rows.len() && self.rows[idx].sim_time <= t {
                last = self.rows[idx].test_accuracy;
                idx += 1;
            }
            grid.push((t, last));
            t += step;
        }
        grid
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(round: u64, time: f64, acc: f64) -> MetricsRow {
        MetricsRow {
            round,
            sim_time: time,
            test_accuracy: acc,
            tt_latency: 1.0,
            vt_latency: 2.0,
            round_latency: 3.0,
            ledger_live_bytes: 10,
            ledger_total_bytes: 20,
            security_score: 0.9,
            committed: 1,
            rejected: RejectCounts::default(),
            offchain_rejected: 0,
            welfare: 0.0,
        }
    }

    fn log() -> MetricsLog {
        MetricsLog {
            scheme: Scheme::Litechain,
            seed: 1,
            n_devices: 4,
            n_clusters: 4,
            rows: vec![row(1, 3.0, 0.2), row(2, 6.0, 0.5)],
            clustering_trace: vec![],
            update_events: vec![],
            update_latency_total: 0.0,
            final_accuracy: 0.5,
            time_to_target: None,
            rounds_run: 2,
            final_sim_time: 6.0,
        }
    }

    #[test]
    fn csv_has_header_and_rows() {
        let csv = log().to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("round,sim_time,test_accuracy"));
        assert!(lines[1].starts_with("1,3,0.2"));
    }

    #[test]
    fn resampling_holds_last_value() {
        let grid = log().resample_accuracy(1.0);
        assert_eq!(grid.len(), 7);
        assert_eq!(grid[0], (0.0, 0.0));
        assert_eq!(grid[3], (3.0, 0.2));
        assert_eq!(grid[5], (5.0, 0.2));
        assert_eq!(grid[6], (6.0, 0.5));
    }

    #[test]
    fn summary_is_valid_json() {
        let parsed: serde_json::Value = serde_json::from_str(&log().summary_json()).unwrap();
        assert_eq!(parsed["devices"], 4);
        assert_eq!(parsed["final_accuracy"], 0.5);
    }
}
