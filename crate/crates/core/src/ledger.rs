//! Service-request ledger.
//!
//! Records are persisted as JSON lines. Every mutation appends a full
//! snapshot of the affected record; on load the last snapshot per id wins.
//! All mutations go through one writer lock; readers only ever observe
//! records whose snapshot has already been written and synced.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, RwLock};

use chrono::{DateTime, SubsecRound, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ContactCard;
use crate::nlq::Resolution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Received,
    Notified,
    InProgress,
    Resolved,
    Rejected,
}

impl Status {
    pub const ALL: [Status; 5] = [
        Status::Received,
        Status::Notified,
        Status::InProgress,
        Status::Resolved,
        Status::Rejected,
    ];

    pub fn can_transition_to(self, next: Status) -> bool {
        use Status::*;
        matches!(
            (self, next),
            (Received, Notified)
                | (Notified, InProgress | Rejected)
                | (InProgress, Resolved | Rejected)
        )
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, Status::Resolved | Status::Rejected)
    }

    /// Statuses reachable in one legal step.
    pub fn successors(self) -> Vec<Status> {
        Status::ALL
            .into_iter()
            .filter(|s| self.can_transition_to(*s))
            .collect()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Status::Received => "received",
            Status::Notified => "notified",
            Status::InProgress => "in_progress",
            Status::Resolved => "resolved",
            Status::Rejected => "rejected",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Status {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Status::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown status '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reporter {
    pub name: String,
    /// Email address or phone number.
    pub contact: String,
}

mod rfc3339 {
    use chrono::{DateTime, SecondsFormat, Utc};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&t.to_rfc3339_opts(SecondsFormat::Micros, true))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let raw = String::deserialize(d)?;
        DateTime::parse_from_rfc3339(&raw)
            .map(|t| t.with_timezone(&Utc))
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    #[serde(with = "rfc3339")]
    pub at: DateTime<Utc>,
    pub status: Status,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceRequest {
    pub id: String,
    #[serde(with = "rfc3339")]
    pub created_at: DateTime<Utc>,
    pub raw_text: String,
    pub subject: String,
    pub location: String,
    pub type311: String,
    pub agency: String,
    pub action: String,
    pub status: Status,
    pub reporter: Reporter,
    pub history: Vec<HistoryEntry>,
}

impl ServiceRequest {
    /// Checks the record's own invariants.
    pub fn check(&self) -> Result<(), String> {
        let first = self.history.first().ok_or("history is empty")?;
        if first.status != Status::Received {
            return Err("history does not start with received".into());
        }
        for pair in self.history.windows(2) {
            if pair[1].at < pair[0].at {
                return Err("history timestamps decrease".into());
            }
            if pair[0].status != pair[1].status && !pair[0].status.can_transition_to(pair[1].status)
            {
                return Err(format!(
                    "illegal transition {} -> {} in history",
                    pair[0].status, pair[1].status
                ));
            }
        }
        if self.history.last().map(|h| h.status) != Some(self.status) {
            return Err("status differs from last history entry".into());
        }
        if self.reporter.contact.trim().is_empty() {
            return Err("reporter contact is empty".into());
        }
        Ok(())
    }

    fn now_after_history(&self) -> DateTime<Utc> {
        let now = now();
        self.history.last().map_or(now, |h| h.at.max(now))
    }
}

fn now() -> DateTime<Utc> {
    Utc::now().trunc_subsecs(6)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Delivery {
    Delivered,
    Failed(String),
}

/// Delivers a request to the responsible agency. Must tolerate being
/// called again for the same request id.
pub trait NotificationSink: Send + Sync {
    fn deliver(&self, card: &ContactCard, request: &ServiceRequest) -> Delivery;
}

/// Keeps notifications in memory, keyed by request id.
#[derive(Debug, Default)]
pub struct RecordingSink {
    delivered: Mutex<BTreeMap<String, String>>,
    calls: AtomicUsize,
    fail_with: Option<String>,
}

impl RecordingSink {
    pub fn new() -> Self {
        Self::default()
    }

    /// A sink whose every delivery fails with `reason`.
    pub fn failing(reason: impl Into<String>) -> Self {
        Self {
            fail_with: Some(reason.into()),
            ..Self::default()
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Request id → notified agency.
    pub fn delivered(&self) -> BTreeMap<String, String> {
        self.delivered.lock().unwrap().clone()
    }
}

impl NotificationSink for RecordingSink {
    fn deliver(&self, card: &ContactCard, request: &ServiceRequest) -> Delivery {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if let Some(reason) = &self.fail_with {
            return Delivery::Failed(reason.clone());
        }
        self.delivered
            .lock()
            .unwrap()
            .insert(request.id.clone(), card.agency.clone());
        Delivery::Delivered
    }
}

/// Writes `<dir>/<id>.txt` per request; redelivery overwrites the same file.
#[derive(Debug, Clone)]
pub struct FileSink {
    dir: PathBuf,
}

impl FileSink {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn path_for(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.txt"))
    }
}

pub fn render_notification(card: &ContactCard, request: &ServiceRequest) -> String {
    let short = |iri: &str| crate::rdf::local_part(iri).to_string();
    let mut out = String::new();
    out.push_str(&format!("To: {}", card.label));
    if !card.email.is_empty() {
        out.push_str(&format!(" <{}>", card.email));
    }
    out.push('\n');
    if !card.phone.is_empty() {
        out.push_str(&format!("Phone: {}\n", card.phone));
    }
    if !card.governing_body.is_empty() {
        out.push_str(&format!("Governing body: {}\n", card.governing_body));
    }
    out.push_str(&format!(
        "Re: service request {} ({} at {})\n\n",
        request.id,
        short(&request.subject),
        short(&request.location)
    ));
    out.push_str(&format!("Request id: {}\n", request.id));
    out.push_str(&format!("Received: {}\n", request.created_at.to_rfc3339()));
    out.push_str(&format!("Subject: {}\n", short(&request.subject)));
    out.push_str(&format!("Location: {}\n", short(&request.location)));
    out.push_str(&format!("Type: {}\n", short(&request.type311)));
    out.push_str(&format!("Action needed: {}\n", short(&request.action)));
    out.push_str(&format!(
        "Reporter: {} ({})\n\n",
        request.reporter.name, request.reporter.contact
    ));
    out.push_str("Complaint:\n");
    out.push_str(&request.raw_text);
    out.push('\n');
    out
}

impl NotificationSink for FileSink {
    fn deliver(&self, card: &ContactCard, request: &ServiceRequest) -> Delivery {
        let result = fs::create_dir_all(&self.dir).and_then(|()| {
            fs::write(
                self.path_for(&request.id),
                render_notification(card, request),
            )
        });
        match result {
            Ok(()) => Delivery::Delivered,
            Err(e) => Delivery::Failed(e.to_string()),
        }
    }
}

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("storage failure: {0}")]
    StorageFailure(String),
    #[error("unknown request {0}")]
    UnknownRequest(String),
    #[error("illegal transition {current} -> {requested}")]
    IllegalTransition { current: Status, requested: Status },
    #[error("corrupt ledger at line {line}: {reason}")]
    CorruptLedger { line: usize, reason: String },
    #[error("reporter contact must not be empty")]
    InvalidReporter,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestFilter {
    pub status: Option<Status>,
    pub agency: Option<String>,
    pub location: Option<String>,
}

impl RequestFilter {
    pub fn matches(&self, r: &ServiceRequest) -> bool {
        self.status.is_none_or(|s| s == r.status)
            && self.agency.as_ref().is_none_or(|a| *a == r.agency)
            && self.location.as_ref().is_none_or(|l| *l == r.location)
    }
}

struct Writer {
    next: u64,
}

pub struct Ledger {
    path: Option<PathBuf>,
    prefix: String,
    records: RwLock<BTreeMap<String, ServiceRequest>>,
    writer: Mutex<Writer>,
}

impl fmt::Debug for Ledger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Ledger")
            .field("path", &self.path)
            .field("records", &self.records.read().unwrap().len())
            .finish()
    }
}

fn run_prefix() -> String {
    format!("SR-{:08x}", rand::random::<u32>())
}

impl Ledger {
    /// A ledger that is never written to disk.
    pub fn in_memory() -> Self {
        Self::with_records(None, BTreeMap::new())
    }

    fn with_records(path: Option<PathBuf>, records: BTreeMap<String, ServiceRequest>) -> Self {
        Self {
            path,
            prefix: run_prefix(),
            writer: Mutex::new(Writer {
                next: records.len() as u64 + 1,
            }),
            records: RwLock::new(records),
        }
    }

    /// Load the ledger at `path`; an absent file is an empty ledger. Any
    /// malformed line fails the whole load.
    pub fn reload(path: &Path) -> Result<Self, LedgerError> {
        let text = match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(LedgerError::StorageFailure(e.to_string())),
        };
        let mut records: BTreeMap<String, ServiceRequest> = BTreeMap::new();
        for (i, line) in text.split_inclusive('\n').enumerate() {
            let lineno = i + 1;
            let corrupt = |reason: String| LedgerError::CorruptLedger {
                line: lineno,
                reason,
            };
            let body = line.strip_suffix('\n').unwrap_or(line);
            let record: ServiceRequest =
                serde_json::from_str(body).map_err(|e| corrupt(e.to_string()))?;
            record.check().map_err(corrupt)?;
            if let Some(prev) = records.get(&record.id) {
                check_successor(prev, &record).map_err(corrupt)?;
            }
            records.insert(record.id.clone(), record);
        }
        Ok(Self::with_records(Some(path.to_path_buf()), records))
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.records.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, id: &str) -> Option<ServiceRequest> {
        self.records.read().unwrap().get(id).cloned()
    }

    /// Matching requests ordered by creation time, then id.
    pub fn list_requests(&self, filter: &RequestFilter) -> Vec<ServiceRequest> {
        let mut out: Vec<_> = self
            .records
            .read()
            .unwrap()
            .values()
            .filter(|r| filter.matches(r))
            .cloned()
            .collect();
        out.sort_by(|a, b| {
            a.created_at
                .cmp(&b.created_at)
                .then_with(|| a.id.cmp(&b.id))
        });
        out
    }

    fn persist(&self, record: &ServiceRequest) -> Result<(), LedgerError> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        let mut line = serde_json::to_string(record).expect("record serializes");
        line.push('\n');
        let storage =
            |e: std::io::Error| LedgerError::StorageFailure(format!("{}: {e}", path.display()));
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(storage)?;
        file.write_all(line.as_bytes()).map_err(storage)?;
        file.sync_data().map_err(storage)
    }

    fn commit(&self, record: ServiceRequest) -> Result<ServiceRequest, LedgerError> {
        self.persist(&record)?;
        self.records
            .write()
            .unwrap()
            .insert(record.id.clone(), record.clone());
        Ok(record)
    }

    /// Record a resolved complaint and notify the agency once. The record
    /// is durable before the sink is called; a failed delivery leaves the
    /// request in `Received` with the failure noted in its history.
    pub fn create_request(
        &self,
        resolution: &Resolution,
        reporter: Reporter,
        raw_text: &str,
        sink: &dyn NotificationSink,
    ) -> Result<ServiceRequest, LedgerError> {
        if reporter.contact.trim().is_empty() {
            return Err(LedgerError::InvalidReporter);
        }
        let mut writer = self.writer.lock().unwrap();
        let id = {
            let records = self.records.read().unwrap();
            loop {
                let candidate = format!("{}-{:06}", self.prefix, writer.next);
                writer.next += 1;
                if !records.contains_key(&candidate) {
                    break candidate;
                }
            }
        };
        let created_at = now();
        let record = ServiceRequest {
            id,
            created_at,
            raw_text: raw_text.to_string(),
            subject: resolution.slots.subject.value().to_string(),
            location: resolution.slots.location.value().to_string(),
            type311: resolution.type311.value().to_string(),
            agency: resolution.agency.value().to_string(),
            action: resolution.action.value().to_string(),
            status: Status::Received,
            reporter,
            history: vec![HistoryEntry {
                at: created_at,
                status: Status::Received,
                note: "complaint recorded".into(),
            }],
        };
        let mut record = self.commit(record)?;

        let (status, note) = match sink.deliver(&resolution.contact, &record) {
            Delivery::Delivered => (
                Status::Notified,
                format!("notification sent to {}", resolution.contact.label),
            ),
            Delivery::Failed(reason) => {
                (Status::Received, format!("notification failed: {reason}"))
            }
        };
        let at = record.now_after_history();
        record.status = status;
        record.history.push(HistoryEntry { at, status, note });
        let record = self.commit(record)?;
        drop(writer);
        Ok(record)
    }

    pub fn update_status(
        &self,
        id: &str,
        requested: Status,
        note: &str,
    ) -> Result<ServiceRequest, LedgerError> {
        let _writer = self.writer.lock().unwrap();
        let mut record = self
            .get(id)
            .ok_or_else(|| LedgerError::UnknownRequest(id.to_string()))?;
        if !record.status.can_transition_to(requested) {
            return Err(LedgerError::IllegalTransition {
                current: record.status,
                requested,
            });
        }
        let at = record.now_after_history();
        record.status = requested;
        record.history.push(HistoryEntry {
            at,
            status: requested,
            note: note.to_string(),
        });
        self.commit(record)
    }
}

/// A later snapshot may only extend the history of an earlier one.
fn check_successor(prev: &ServiceRequest, next: &ServiceRequest) -> Result<(), String> {
    let same_identity = prev.created_at == next.created_at
        && prev.raw_text == next.raw_text
        && prev.subject == next.subject
        && prev.location == next.location
        && prev.type311 == next.type311
        && prev.agency == next.agency
        && prev.action == next.action
        && prev.reporter == next.reporter;
    if !same_identity {
        return Err(format!("snapshot of {} changes immutable fields", next.id));
    }
    if !next.history.starts_with(&prev.history) || next.history.len() <= prev.history.len() {
        return Err(format!("snapshot of {} rewrites history", next.id));
    }
    Ok(())
}
