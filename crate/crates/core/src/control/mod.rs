//! Engine distribution: the updater publishes versioned artifacts to an
//! object store and announces them on a small control channel; processor
//! instances fetch, validate, and hot-swap engines, acknowledging what they
//! activated.
//!
//! Notifications stay under 1 KiB because the artifact itself travels
//! through the object store, never through the channel. Each publish or
//! rollback event carries a fresh `activation_seq`; instances converge on
//! the highest sequence they have processed, which makes concurrent
//! publishes last-writer-wins and lets a rollback re-announce an older
//! version without losing to it.

mod channel;
mod store;

pub use channel::{ChannelError, ControlChannel, ControlMessage, FileLogChannel, InProcessChannel};
pub use store::{DirectoryStore, ObjectStore, StoreError};

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::engine::{
    deserialize_engine, read_manifest, serialize_engine, ArtifactError, CompiledEngine,
    EngineChecksum, EngineManifest,
};
use crate::pipeline::EngineHandle;
use crate::rules::{fresh_run_nonce, RuleSet, VersionTag};
use crate::RuleSetDelta;

/// Hard cap on the serialized size of an update notification.
pub const MAX_NOTIFICATION_BYTES: usize = 1024;

/// Announcement of a newly published (or re-announced) engine version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateNotification {
    pub version_tag: VersionTag,
    /// Object-store key of the artifact.
    pub object_reference: String,
    pub checksum: EngineChecksum,
    pub rule_count: u32,
    pub published_at: i64,
    /// Activation order; consumers apply the highest sequence they see.
    pub activation_seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AckOutcome {
    Activated,
    FetchFailed,
    ChecksumMismatch,
    VersionMismatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AckMessage {
    pub instance_id: String,
    pub version_tag: VersionTag,
    pub outcome: AckOutcome,
    pub acked_at: i64,
}

/// Per-node record of engine versions: what is active, what is being
/// fetched, and the activation history in order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EngineStateStore {
    pub active_version: Option<VersionTag>,
    pub pending_version: Option<VersionTag>,
    /// `(version, activated_at)`, append-only, timestamps non-decreasing.
    pub activation_history: Vec<(VersionTag, i64)>,
}

impl EngineStateStore {
    fn record_activation(&mut self, version: VersionTag, at: i64) {
        // Clamp against clock jitter so history timestamps never decrease.
        let at = self
            .activation_history
            .last()
            .map_or(at, |(_, prev)| at.max(*prev));
        self.active_version = Some(version.clone());
        self.pending_version = None;
        self.activation_history.push((version, at));
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PublishError {
    #[error("rule set failed to compile: {0}")]
    CompileFailed(#[from] crate::engine::CompileError),
    #[error("object store rejected the artifact: {0}")]
    StoreUnavailable(#[from] StoreError),
    #[error("control channel rejected the notification: {0}")]
    ChannelUnavailable(#[from] ChannelError),
    #[error("notification serializes to {0} bytes, limit is {MAX_NOTIFICATION_BYTES}")]
    NotificationTooLarge(usize),
}

#[derive(Debug, thiserror::Error)]
pub enum RollbackError {
    #[error("unknown version {0}")]
    UnknownVersion(String),
    #[error("object store error: {0}")]
    Store(#[from] StoreError),
    #[error("control channel error: {0}")]
    Channel(#[from] ChannelError),
    #[error("stored artifact for {version} is unusable: {reason}")]
    BadArtifact { version: String, reason: String },
}

/// Result of a publish call.
#[derive(Debug)]
pub struct PublishOutcome {
    pub version: VersionTag,
    /// None when the target equaled the current rules and nothing was sent.
    pub notification: Option<UpdateNotification>,
    pub delta: RuleSetDelta,
}

pub fn engine_artifact_key(version: &VersionTag) -> String {
    format!("engines/{version}.fse")
}

pub fn engine_manifest_key(version: &VersionTag) -> String {
    format!("engines/{version}.manifest")
}

struct UpdaterInner {
    run: String,
    next_seq: u64,
    next_activation_seq: u64,
    current_rules: RuleSet,
    current_version: Option<VersionTag>,
    state: EngineStateStore,
    published: BTreeMap<VersionTag, EngineManifest>,
}

/// The publisher side of the control plane. One updater owns one run nonce;
/// every version it assigns is unique and increasing.
pub struct Updater {
    store: Arc<dyn ObjectStore>,
    channel: Arc<dyn ControlChannel>,
    inner: Mutex<UpdaterInner>,
}

impl Updater {
    pub fn new(store: Arc<dyn ObjectStore>, channel: Arc<dyn ControlChannel>) -> Self {
        Self::with_run(store, channel, &fresh_run_nonce())
    }

    /// Fixed run nonce, for deterministic tests.
    pub fn with_run(
        store: Arc<dyn ObjectStore>,
        channel: Arc<dyn ControlChannel>,
        run: &str,
    ) -> Self {
        Updater {
            store,
            channel,
            inner: Mutex::new(UpdaterInner {
                run: run.to_string(),
                next_seq: 1,
                next_activation_seq: 1,
                current_rules: RuleSet::empty(),
                current_version: None,
                state: EngineStateStore::default(),
                published: BTreeMap::new(),
            }),
        }
    }

    /// Reconstructs an updater after a process restart: same run, sequence
    /// counters continuing where the previous process stopped, and the
    /// rules of the currently active version (refetched by the caller from
    /// the object store, which outlives the process).
    pub fn resume(
        store: Arc<dyn ObjectStore>,
        channel: Arc<dyn ControlChannel>,
        run: &str,
        next_seq: u64,
        next_activation_seq: u64,
        current_rules: RuleSet,
        current_version: Option<VersionTag>,
    ) -> Self {
        Updater {
            store,
            channel,
            inner: Mutex::new(UpdaterInner {
                run: run.to_string(),
                next_seq,
                next_activation_seq,
                current_rules,
                current_version,
                state: EngineStateStore::default(),
                published: BTreeMap::new(),
            }),
        }
    }

    pub fn current_version(&self) -> Option<VersionTag> {
        self.inner.lock().unwrap().current_version.clone()
    }

    pub fn current_rules(&self) -> RuleSet {
        self.inner.lock().unwrap().current_rules.clone()
    }

    pub fn state(&self) -> EngineStateStore {
        self.inner.lock().unwrap().state.clone()
    }

    /// Publishes `target` as a new version: compiles, uploads artifact and
    /// manifest, then announces on the channel. Publishing rules identical
    /// to the current version returns that version untouched.
    pub fn publish(&self, target: &RuleSet, now: i64) -> Result<PublishOutcome, PublishError> {
        let mut inner = self.inner.lock().unwrap();
        let delta = crate::engine::compute_delta(&inner.current_rules, target);
        if delta.is_empty() {
            if let Some(current) = inner.current_version.clone() {
                return Ok(PublishOutcome {
                    version: current,
                    notification: None,
                    delta,
                });
            }
        }

        let version = VersionTag::new(&inner.run, inner.next_seq);
        let engine = CompiledEngine::compile(target, version.clone())?;
        let artifact = serialize_engine(&engine);
        let manifest = EngineManifest {
            version_tag: version.clone(),
            rule_count: engine.rule_count(),
            digest_algorithm: "sha-256".into(),
            checksum: *engine.checksum(),
        };
        let object_reference = engine_artifact_key(&version);
        self.store.put(&object_reference, &artifact)?;
        self.store.put(
            &engine_manifest_key(&version),
            &serde_json::to_vec_pretty(&manifest).expect("manifest serializes"),
        )?;

        let notification = UpdateNotification {
            version_tag: version.clone(),
            object_reference,
            checksum: *engine.checksum(),
            rule_count: engine.rule_count(),
            published_at: now,
            activation_seq: inner.next_activation_seq,
        };
        let encoded = serde_json::to_vec(&notification).expect("notification serializes");
        if encoded.len() > MAX_NOTIFICATION_BYTES {
            return Err(PublishError::NotificationTooLarge(encoded.len()));
        }
        self.channel
            .publish(&ControlMessage::Notification(notification.clone()))?;

        inner.next_seq += 1;
        inner.next_activation_seq += 1;
        inner.current_rules = target.clone();
        inner.current_version = Some(version.clone());
        inner.state.pending_version = Some(version.clone());
        inner.published.insert(version.clone(), manifest);
        Ok(PublishOutcome {
            version,
            notification: Some(notification),
            delta,
        })
    }

    /// Re-announces a previously published version without recompiling.
    /// Returns None when `to` is already the current version.
    pub fn rollback(
        &self,
        to: &VersionTag,
        now: i64,
    ) -> Result<Option<UpdateNotification>, RollbackError> {
        let mut inner = self.inner.lock().unwrap();
        if inner.current_version.as_ref() == Some(to) {
            return Ok(None);
        }
        let manifest = match inner.published.get(to) {
            Some(manifest) => manifest.clone(),
            None => {
                // Not published by this run; accept any version whose
                // artifact the store still holds.
                let bytes = match self.store.get(&engine_artifact_key(to)) {
                    Ok(bytes) => bytes,
                    Err(StoreError::NotFound(_)) => {
                        return Err(RollbackError::UnknownVersion(to.to_string()));
                    }
                    Err(e) => return Err(e.into()),
                };
                read_manifest(&bytes).map_err(|e| RollbackError::BadArtifact {
                    version: to.to_string(),
                    reason: e.to_string(),
                })?
            }
        };

        // Future deltas must be computed against the rolled-back rules.
        let artifact = self.store.get(&engine_artifact_key(to))?;
        let engine = deserialize_engine(&artifact, to, &manifest.checksum).map_err(|e| {
            RollbackError::BadArtifact {
                version: to.to_string(),
                reason: e.to_string(),
            }
        })?;

        let notification = UpdateNotification {
            version_tag: to.clone(),
            object_reference: engine_artifact_key(to),
            checksum: manifest.checksum,
            rule_count: manifest.rule_count,
            published_at: now,
            activation_seq: inner.next_activation_seq,
        };
        self.channel
            .publish(&ControlMessage::Notification(notification.clone()))?;
        inner.next_activation_seq += 1;
        inner.current_rules = engine.ruleset().clone();
        inner.current_version = Some(to.clone());
        inner.state.pending_version = Some(to.clone());
        Ok(Some(notification))
    }

    /// Marks a rollout observed as complete, moving pending to active.
    pub fn record_rollout_complete(&self, version: &VersionTag, at: i64) {
        let mut inner = self.inner.lock().unwrap();
        if inner.state.pending_version.as_ref() == Some(version) {
            inner.state.record_activation(version.clone(), at);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RolloutStatus {
    Complete,
    InProgress,
    Failed { lagging: BTreeSet<String> },
}

/// Classifies a rollout from the acks observed so far. Pure in its inputs:
/// `now`, `published_at`, and `timeout_ms` decide whether missing acks mean
/// in-progress or failed.
pub fn rollout_status(
    version: &VersionTag,
    acks: &[AckMessage],
    expected_instances: &BTreeSet<String>,
    published_at: i64,
    now: i64,
    timeout_ms: i64,
) -> RolloutStatus {
    let activated: BTreeSet<&String> = acks
        .iter()
        .filter(|a| a.outcome == AckOutcome::Activated && &a.version_tag == version)
        .map(|a| &a.instance_id)
        .collect();
    let lagging: BTreeSet<String> = expected_instances
        .iter()
        .filter(|id| !activated.contains(id))
        .cloned()
        .collect();
    if lagging.is_empty() {
        RolloutStatus::Complete
    } else if now - published_at <= timeout_ms {
        RolloutStatus::InProgress
    } else {
        RolloutStatus::Failed { lagging }
    }
}

struct InstanceState {
    last_applied_seq: u64,
    state: EngineStateStore,
}

/// The consumer side: one processing node holding a hot-swappable engine.
pub struct ProcessorInstance {
    instance_id: String,
    handle: EngineHandle,
    store: Arc<dyn ObjectStore>,
    inner: Mutex<InstanceState>,
}

impl ProcessorInstance {
    pub fn new(instance_id: &str, handle: EngineHandle, store: Arc<dyn ObjectStore>) -> Self {
        ProcessorInstance {
            instance_id: instance_id.to_string(),
            handle,
            store,
            inner: Mutex::new(InstanceState {
                last_applied_seq: 0,
                state: EngineStateStore::default(),
            }),
        }
    }

    pub fn instance_id(&self) -> &str {
        &self.instance_id
    }

    pub fn handle(&self) -> &EngineHandle {
        &self.handle
    }

    pub fn engine_state(&self) -> EngineStateStore {
        self.inner.lock().unwrap().state.clone()
    }

    /// Fetches, validates, and activates the announced engine. The running
    /// engine is never replaced unless every validation passes.
    ///
    /// Returns None for a stale event that lost to an already-applied newer
    /// activation; a duplicate of the applied event is re-acknowledged as
    /// ACTIVATED without refetching.
    pub fn handle_notification(
        &self,
        notification: &UpdateNotification,
        now: i64,
    ) -> Option<AckMessage> {
        let mut inner = self.inner.lock().unwrap();
        let ack = |outcome: AckOutcome| {
            Some(AckMessage {
                instance_id: self.instance_id.clone(),
                version_tag: notification.version_tag.clone(),
                outcome,
                acked_at: now,
            })
        };

        if notification.activation_seq <= inner.last_applied_seq {
            // The channel is ordered, so a sequence at or below the applied
            // one is a redelivery. Re-ack the event that is still active;
            // stay silent about events a newer activation superseded.
            if inner.state.active_version.as_ref() == Some(&notification.version_tag) {
                return ack(AckOutcome::Activated);
            }
            return None;
        }

        inner.state.pending_version = Some(notification.version_tag.clone());
        let bytes = match self.store.get(&notification.object_reference) {
            Ok(bytes) => bytes,
            Err(_) => {
                inner.state.pending_version = None;
                return ack(AckOutcome::FetchFailed);
            }
        };
        match deserialize_engine(&bytes, &notification.version_tag, &notification.checksum) {
            Ok(engine) => {
                self.handle.swap(Arc::new(engine));
                inner.last_applied_seq = notification.activation_seq;
                inner
                    .state
                    .record_activation(notification.version_tag.clone(), now);
                ack(AckOutcome::Activated)
            }
            Err(e) => {
                inner.state.pending_version = None;
                match e {
                    ArtifactError::VersionMismatch { .. } => ack(AckOutcome::VersionMismatch),
                    // Structural corruption is an integrity failure too.
                    ArtifactError::ChecksumMismatch { .. } | ArtifactError::CorruptArtifact(_) => {
                        ack(AckOutcome::ChecksumMismatch)
                    }
                }
            }
        }
    }

    /// Drains the channel from `cursor`: handles notifications, publishes
    /// acks, advances the cursor. Returns the acks it produced.
    pub fn process_new(
        &self,
        channel: &dyn ControlChannel,
        cursor: &mut u64,
        now: i64,
    ) -> Result<Vec<AckMessage>, ChannelError> {
        let mut acks = Vec::new();
        for (index, message) in channel.read_from(*cursor)? {
            if let ControlMessage::Notification(n) = message {
                if let Some(ack) = self.handle_notification(&n, now) {
                    channel.publish(&ControlMessage::Ack(ack.clone()))?;
                    acks.push(ack);
                }
            }
            *cursor = index + 1;
        }
        Ok(acks)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::FilterRule;

    fn ruleset(terms: &[(u32, &str)]) -> RuleSet {
        RuleSet::new(
            terms
                .iter()
                .map(|(id, term)| FilterRule::literal(*id, "content1", term))
                .collect(),
        )
        .unwrap()
    }

    fn setup() -> (Arc<DirectoryStore>, Arc<InProcessChannel>, Updater, tempfile::TempDir) {
        let dir = tempfile::tempdir().unwrap();
        let store = Arc::new(DirectoryStore::new(dir.path()));
        let channel = Arc::new(InProcessChannel::new());
        let updater = Updater::with_run(store.clone(), channel.clone(), "test");
        (store, channel, updater, dir)
    }

    #[test]
    fn publish_uploads_artifact_manifest_and_notifies() {
        let (store, channel, updater, _dir) = setup();
        let outcome = updater.publish(&ruleset(&[(1, "alpha")]), 100).unwrap();
        assert_eq!(outcome.version.to_string(), "run-test-000001");
        let n = outcome.notification.unwrap();
        assert_eq!(n.rule_count, 1);
        assert!(store.exists(&n.object_reference).unwrap());
        assert!(store.exists(&engine_manifest_key(&n.version_tag)).unwrap());
        assert_eq!(channel.read_from(0).unwrap().len(), 1);
        let encoded = serde_json::to_vec(&n).unwrap();
        assert!(encoded.len() <= MAX_NOTIFICATION_BYTES, "{} bytes", encoded.len());
    }

    #[test]
    fn unchanged_rules_publish_as_noop() {
        let (_store, channel, updater, _dir) = setup();
        let first = updater.publish(&ruleset(&[(1, "alpha")]), 100).unwrap();
        let second = updater.publish(&ruleset(&[(1, "alpha")]), 200).unwrap();
        assert_eq!(second.version, first.version);
        assert!(second.notification.is_none());
        assert!(second.delta.is_empty());
        assert_eq!(channel.read_from(0).unwrap().len(), 1);
    }

    #[test]
    fn versions_increase_monotonically() {
        let (_store, _channel, updater, _dir) = setup();
        let a = updater.publish(&ruleset(&[(1, "alpha")]), 1).unwrap().version;
        let b = updater.publish(&ruleset(&[(2, "beta")]), 2).unwrap().version;
        let c = updater.publish(&ruleset(&[(3, "gamma")]), 3).unwrap().version;
        assert!(a < b && b < c);
    }

    #[test]
    fn instance_activates_valid_publish() {
        let (store, _channel, updater, _dir) = setup();
        let outcome = updater.publish(&ruleset(&[(1, "alpha")]), 100).unwrap();
        let n = outcome.notification.unwrap();

        let handle = EngineHandle::empty();
        let instance = ProcessorInstance::new("node-1", handle.clone(), store);
        let ack = instance.handle_notification(&n, 150).unwrap();
        assert_eq!(ack.outcome, AckOutcome::Activated);
        assert_eq!(handle.version(), n.version_tag);
        let state = instance.engine_state();
        assert_eq!(state.active_version, Some(n.version_tag.clone()));
        assert_eq!(state.pending_version, None);
        assert_eq!(state.activation_history.len(), 1);
    }

    #[test]
    fn rollback_reannounces_older_version_and_wins() {
        let (store, _channel, updater, _dir) = setup();
        let v1 = updater.publish(&ruleset(&[(1, "alpha")]), 1).unwrap();
        let n1 = v1.notification.unwrap();
        let v2 = updater.publish(&ruleset(&[(1, "alphov")]), 2).unwrap();
        let n2 = v2.notification.unwrap();

        let handle = EngineHandle::empty();
        let instance = ProcessorInstance::new("node-1", handle.clone(), store);
        instance.handle_notification(&n1, 10).unwrap();
        instance.handle_notification(&n2, 20).unwrap();
        assert_eq!(handle.version(), n2.version_tag);

        // Roll back: same version tag as n1, fresh activation sequence.
        let n3 = updater.rollback(&n1.version_tag, 30).unwrap().unwrap();
        assert_eq!(n3.version_tag, n1.version_tag);
        assert!(n3.activation_seq > n2.activation_seq);
        let ack = instance.handle_notification(&n3, 40).unwrap();
        assert_eq!(ack.outcome, AckOutcome::Activated);
        assert_eq!(handle.version(), n1.version_tag);

        // The updater now plans deltas against the rolled-back rules.
        assert!(updater.current_rules().same_rules(&ruleset(&[(1, "alpha")])));
        assert_eq!(updater.current_version(), Some(n1.version_tag.clone()));

        // Rolling back to the already-active version is a no-op.
        assert!(updater.rollback(&n1.version_tag, 50).unwrap().is_none());
    }

    #[test]
    fn rollback_to_unknown_version_fails() {
        let (_store, _channel, updater, _dir) = setup();
        updater.publish(&ruleset(&[(1, "alpha")]), 1).unwrap();
        let missing = VersionTag::new("test", 99);
        assert!(matches!(
            updater.rollback(&missing, 2),
            Err(RollbackError::UnknownVersion(_))
        ));
    }

    #[test]
    fn stale_redelivery_is_silent_and_duplicate_is_idempotent() {
        let (store, _channel, updater, _dir) = setup();
        let n1 = updater.publish(&ruleset(&[(1, "a")]), 1).unwrap().notification.unwrap();
        let n2 = updater.publish(&ruleset(&[(2, "b")]), 2).unwrap().notification.unwrap();

        let counting = Arc::new(CountingStore::new(store));
        let instance =
            ProcessorInstance::new("node-1", EngineHandle::empty(), counting.clone());
        instance.handle_notification(&n1, 10).unwrap();
        instance.handle_notification(&n2, 20).unwrap();
        let fetches = counting.gets();

        // Duplicate of the applied event: ACTIVATED again, no refetch.
        let dup = instance.handle_notification(&n2, 30).unwrap();
        assert_eq!(dup.outcome, AckOutcome::Activated);
        assert_eq!(counting.gets(), fetches);

        // Redelivery of the superseded event: no ack, engine untouched.
        assert!(instance.handle_notification(&n1, 40).is_none());
        assert_eq!(instance.handle().version(), n2.version_tag);
    }

    struct CountingStore {
        inner: Arc<dyn ObjectStore>,
        gets: std::sync::atomic::AtomicU64,
    }

    impl CountingStore {
        fn new(inner: Arc<dyn ObjectStore>) -> Self {
            CountingStore {
                inner,
                gets: std::sync::atomic::AtomicU64::new(0),
            }
        }

        fn gets(&self) -> u64 {
            self.gets.load(std::sync::atomic::Ordering::SeqCst)
        }
    }

    impl ObjectStore for CountingStore {
        fn put(&self, key: &str, bytes: &[u8]) -> Result<(), StoreError> {
            self.inner.put(key, bytes)
        }

        fn get(&self, key: &str) -> Result<Vec<u8>, StoreError> {
            self.gets.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
            self.inner.get(key)
        }

        fn exists(&self, key: &str) -> Result<bool, StoreError> {
            self.inner.exists(key)
        }
    }

    #[test]
    fn fault_acks_name_the_failure_and_keep_engine() {
        let (store, _channel, updater, dir) = setup();
        let n1 = updater.publish(&ruleset(&[(1, "a")]), 1).unwrap().notification.unwrap();
        let instance = ProcessorInstance::new("node-1", EngineHandle::empty(), store.clone());
        instance.handle_notification(&n1, 10).unwrap();

        let n2 = updater.publish(&ruleset(&[(2, "b")]), 2).unwrap().notification.unwrap();

        // Fetch failure: notification points at a missing object.
        let mut missing = n2.clone();
        missing.object_reference = "engines/vanished.fse".into();
        let ack = instance.handle_notification(&missing, 20).unwrap();
        assert_eq!(ack.outcome, AckOutcome::FetchFailed);
        assert_eq!(instance.handle().version(), n1.version_tag);

        // Checksum failure: corrupt the stored artifact on disk.
        let artifact_path = dir.path().join(&n2.object_reference);
        let mut bytes = std::fs::read(&artifact_path).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 0x80;
        std::fs::write(&artifact_path, &bytes).unwrap();
        let ack = instance.handle_notification(&n2, 30).unwrap();
        assert_eq!(ack.outcome, AckOutcome::ChecksumMismatch);
        assert_eq!(instance.handle().version(), n1.version_tag);
        assert_eq!(instance.engine_state().pending_version, None);

        // Version failure: notification claims a different version than the
        // artifact's manifest (checksum left intact).
        std::fs::write(&artifact_path, {
            let original: Vec<u8> = {
                let engine = CompiledEngine::compile(&ruleset(&[(2, "b")]), n2.version_tag.clone())
                    .unwrap();
                serialize_engine(&engine)
            };
            original
        })
        .unwrap();
        let mut wrong_version = n2.clone();
        wrong_version.version_tag = VersionTag::new("test", 77);
        wrong_version.activation_seq = n2.activation_seq + 5;
        let ack = instance.handle_notification(&wrong_version, 40).unwrap();
        assert_eq!(ack.outcome, AckOutcome::VersionMismatch);
        assert_eq!(instance.handle().version(), n1.version_tag);

        // The intact artifact still activates afterwards.
        let ack = instance.handle_notification(&n2, 50).unwrap();
        assert_eq!(ack.outcome, AckOutcome::Activated);
        assert_eq!(instance.handle().version(), n2.version_tag);
    }

    #[test]
    fn rollout_status_classifies_acks() {
        let v = VersionTag::new("test", 1);
        let expected: BTreeSet<String> =
            ["a", "b"].iter().map(|s| s.to_string()).collect();
        let ack = |id: &str, outcome| AckMessage {
            instance_id: id.into(),
            version_tag: v.clone(),
            outcome,
            acked_at: 0,
        };

        let acks = [ack("a", AckOutcome::Activated)];
        assert_eq!(
            rollout_status(&v, &acks, &expected, 0, 500, 1000),
            RolloutStatus::InProgress
        );
        assert_eq!(
            rollout_status(&v, &acks, &expected, 0, 2000, 1000),
            RolloutStatus::Failed {
                lagging: ["b".to_string()].into_iter().collect()
            }
        );
        let acks = [ack("a", AckOutcome::Activated), ack("b", AckOutcome::Activated)];
        assert_eq!(
            rollout_status(&v, &acks, &expected, 0, 2000, 1000),
            RolloutStatus::Complete
        );
        // Acks for another version or failed outcomes do not count.
        let other = VersionTag::new("test", 2);
        let acks = [
            ack("a", AckOutcome::Activated),
            ack("b", AckOutcome::ChecksumMismatch),
            AckMessage {
                instance_id: "b".into(),
                version_tag: other,
                outcome: AckOutcome::Activated,
                acked_at: 0,
            },
        ];
        assert!(matches!(
            rollout_status(&v, &acks, &expected, 0, 2000, 1000),
            RolloutStatus::Failed { .. }
        ));
    }

    #[test]
    fn process_new_drains_channel_and_acks() {
        let (store, channel, updater, _dir) = setup();
        let instance = ProcessorInstance::new("node-1", EngineHandle::empty(), store);
        let mut cursor = 0u64;

        updater.publish(&ruleset(&[(1, "a")]), 1).unwrap();
        updater.publish(&ruleset(&[(2, "b")]), 2).unwrap();
        let acks = instance.process_new(channel.as_ref(), &mut cursor, 10).unwrap();
        assert_eq!(acks.len(), 2);
        assert!(acks.iter().all(|a| a.outcome == AckOutcome::Activated));
        assert_eq!(instance.handle().version(), updater.current_version().unwrap());

        // Cursor advanced: nothing new, nothing re-acked.
        let acks = instance.process_new(channel.as_ref(), &mut cursor, 20).unwrap();
        assert!(acks.is_empty());

        // The channel now carries the instance's acks alongside the
        // notifications.
        let all = channel.read_from(0).unwrap();
        let ack_count = all
            .iter()
            .filter(|(_, m)| matches!(m, ControlMessage::Ack(_)))
            .count();
        assert_eq!(ack_count, 2);
    }
}
