use std::collections::BTreeMap;
use std::sync::RwLock;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::digest::sha256_parts;

use super::{ContingencyCase, ContingencyResult};

/// Composite key over case text, modification history and the outage.
///
/// Keys follow history rather than net effect: two different edit
/// sequences that happen to produce the same network get different keys.
pub fn cache_key(case_checksum: &str, diff_digest: &str, outage: &ContingencyCase) -> String {
    sha256_parts(&[
        b"n1",
        case_checksum.as_bytes(),
        diff_digest.as_bytes(),
        outage.outage_kind.as_str().as_bytes(),
        outage.element_index.to_string().as_bytes(),
    ])
}

/// Per-outage results shared across sweeps. Reads may run concurrently;
/// writes are serialized.
#[derive(Debug, Default)]
pub struct ContingencyCache {
    entries: RwLock<BTreeMap<String, ContingencyResult>>,
}

impl ContingencyCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: &str) -> Option<ContingencyResult> {
        self.entries.read().expect("cache lock").get(key).cloned()
    }

    pub fn insert(&self, key: String, mut result: ContingencyResult) {
        result.from_cache = false;
        self.entries.write().expect("cache lock").insert(key, result);
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&self) {
        self.entries.write().expect("cache lock").clear();
    }

    pub fn snapshot(&self) -> BTreeMap<String, ContingencyResult> {
        self.entries.read().expect("cache lock").clone()
    }

    pub fn from_entries(entries: BTreeMap<String, ContingencyResult>) -> Self {
        ContingencyCache {
            entries: RwLock::new(entries),
        }
    }
}

impl Clone for ContingencyCache {
    fn clone(&self) -> Self {
        Self::from_entries(self.snapshot())
    }
}

impl PartialEq for ContingencyCache {
    fn eq(&self, other: &Self) -> bool {
        self.snapshot() == other.snapshot()
    }
}

impl Serialize for ContingencyCache {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.snapshot().serialize(s)
    }
}

impl<'de> Deserialize<'de> for ContingencyCache {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(Self::from_entries(BTreeMap::deserialize(d)?))
    }
}

/// A cache plus the identity of the network state it is consulted for.
#[derive(Debug, Clone, Copy)]
pub struct CacheBinding<'a> {
    pub cache: &'a ContingencyCache,
    pub case_checksum: &'a str,
    pub diff_digest: &'a str,
}

impl CacheBinding<'_> {
    pub fn key(&self, outage: &ContingencyCase) -> String {
        cache_key(self.case_checksum, self.diff_digest, outage)
    }
}
