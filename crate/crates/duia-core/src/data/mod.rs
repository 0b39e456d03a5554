//! Interaction events, synthetic data generation with planted communities,
//! Taobao-style CSV ingestion, temporal splitting, and cohort labeling.

mod csv_io;
mod gen;
mod split;

pub use csv_io::{ingest_csv, read_sidecar, write_csv, write_sidecar, SIDE_CAR_NAME};
pub use gen::{generate, GenConfig};
pub use split::{temporal_split, Cohort, CohortMap, HistoryTracker};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("missing or malformed header: expected {expected:?}, found {found:?}")]
    Header { expected: String, found: String },
    #[error("line {line}: {message}")]
    Row { line: usize, message: String },
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error("sidecar: {0}")]
    Sidecar(#[from] serde_json::Error),
}

/// Behavior strength is ordered: a long view implies a valid consumption.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    View,
    ValidConsume,
    LongView,
}

impl Behavior {
    pub fn is_valid_consume(self) -> bool {
        self >= Behavior::ValidConsume
    }

    pub fn is_long_view(self) -> bool {
        self == Behavior::LongView
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Behavior::View => "view",
            Behavior::ValidConsume => "valid_consume",
            Behavior::LongView => "long_view",
        }
    }

    /// Unknown behavior strings map to plain views.
    pub fn parse(s: &str) -> Behavior {
        match s {
            "valid_consume" => Behavior::ValidConsume,
            "long_view" => Behavior::LongView,
            _ => Behavior::View,
        }
    }
}

/// One `(user, item, behavior, timestamp)` record; the unit of streaming
/// training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionEvent {
    pub user_id: u64,
    pub item_id: u64,
    pub category_id: u64,
    pub behavior: Behavior,
    pub timestamp: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: u64,
    /// Category preferences as `(category id, score in [0, 1])`.
    pub pref_categories: Vec<(u64, f64)>,
    /// Tag preferences as `(tag id, score in [0, 1])`.
    pub pref_tags: Vec<(u64, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ItemProfile {
    pub item_id: u64,
    pub category_id: u64,
    pub tags: Vec<u64>,
}

/// Ground truth behind a generated dataset; kept in the sidecar for
/// oracle-based tests and never fed to the model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorldModel {
    pub communities: usize,
    pub topics: usize,
    /// Row per community, column per topic, values in [0, 1].
    pub affinity: Vec<Vec<f64>>,
    pub user_community: Vec<u32>,
    pub user_low_active: Vec<bool>,
    pub item_topic: Vec<u32>,
    pub low_active_fraction: f64,
}

/// A complete dataset: the event stream plus the feature tables the model
/// reads and, for generated data, the world behind it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    pub events: Vec<InteractionEvent>,
    pub users: Vec<UserProfile>,
    pub items: Vec<ItemProfile>,
    pub world: Option<WorldModel>,
}

impl Dataset {
    /// Minimal dataset from a bare event log (e.g. an ingested CSV with no
    /// sidecar): profiles carry only ids, with item categories taken from
    /// the last event that mentioned each item.
    pub fn from_events(events: Vec<InteractionEvent>) -> Dataset {
        let mut user_ids: Vec<u64> = events.iter().map(|e| e.user_id).collect();
        user_ids.sort_unstable();
        user_ids.dedup();
        let mut item_cat: std::collections::BTreeMap<u64, u64> = Default::default();
        for e in &events {
            item_cat.insert(e.item_id, e.category_id);
        }
        Dataset {
            events,
            users: user_ids
                .into_iter()
                .map(|user_id| UserProfile {
                    user_id,
                    pref_categories: Vec::new(),
                    pref_tags: Vec::new(),
                })
                .collect(),
            items: item_cat
                .into_iter()
                .map(|(item_id, category_id)| ItemProfile {
                    item_id,
                    category_id,
                    tags: Vec::new(),
                })
                .collect(),
            world: None,
        }
    }

    pub fn user_profile(&self, user_id: u64) -> Option<&UserProfile> {
        self.users
            .binary_search_by_key(&user_id, |u| u.user_id)
            .ok()
            .map(|k| &self.users[k])
    }

    pub fn item_profile(&self, item_id: u64) -> Option<&ItemProfile> {
        self.items
            .binary_search_by_key(&item_id, |i| i.item_id)
            .ok()
            .map(|k| &self.items[k])
    }
}
