//! Content-addressed transcript cache: `<dir>/<first-2-hex>/<digest>.json`.
//!
//! Entries are written once via temp-file-then-rename and never modified,
//! so concurrent writers racing on the same key are harmless.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ChatMessage, CompletionParams, Conversation};

/// Everything that determines a response. Field order is the canonical
/// serialization order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyMaterial {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub presence_penalty: f64,
    pub messages: Vec<ChatMessage>,
}

impl KeyMaterial {
    pub fn new(conversation: &Conversation, params: &CompletionParams) -> Self {
        Self {
            model: params.model.clone(),
            temperature: params.temperature,
            max_tokens: params.max_tokens,
            presence_penalty: params.presence_penalty,
            messages: conversation.messages().to_vec(),
        }
    }

    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("serializable");
        hex::encode(Sha256::digest(&bytes))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub key_material: KeyMaterial,
    pub response: String,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone)]
pub struct TranscriptCache {
    root: PathBuf,
}

impl TranscriptCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        self.root.join(&key[..2]).join(format!("{key}.json"))
    }

    pub fn get(&self, material: &KeyMaterial) -> io::Result<Option<CacheEntry>> {
        let key = material.digest();
        let path = self.path_for(&key);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e),
        };
        let entry: CacheEntry = serde_json::from_slice(&bytes)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("{}: {e}", path.display())))?;
        if entry.key != key || entry.key_material != *material {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!("{}: key material does not match its digest", path.display()),
            ));
        }
        Ok(Some(entry))
    }

    /// Stores `response` unless an entry already exists for the key.
    pub fn put(&self, material: &KeyMaterial, response: &str) -> io::Result<PathBuf> {
        let key = material.digest();
        let path = self.path_for(&key);
        let dir = path.parent().expect("has parent");
        fs::create_dir_all(dir)?;
        let entry = CacheEntry {
            key,
            key_material: material.clone(),
            response: response.to_string(),
            created_at: Utc::now(),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        serde_json::to_writer_pretty(&mut tmp, &entry)?;
        tmp.write_all(b"\n")?;
        tmp.as_file().sync_all()?;
        match tmp.persist_noclobber(&path) {
            Ok(_) => Ok(path),
            Err(e) if e.error.kind() == io::ErrorKind::AlreadyExists => Ok(path),
            Err(e) => Err(e.error),
        }
    }

    pub fn len(&self) -> usize {
        let Ok(shards) = fs::read_dir(&self.root) else { return 0 };
        shards
            .filter_map(Result::ok)
            .filter_map(|s| fs::read_dir(s.path()).ok())
            .flat_map(|d| d.filter_map(Result::ok))
            .filter(|f| f.path().extension().is_some_and(|e| e == "json"))
            .count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn material(text: &str) -> KeyMaterial {
        KeyMaterial::new(
            &Conversation(vec![ChatMessage::user(text)]),
            &CompletionParams::default(),
        )
    }

    #[test]
    fn digest_depends_on_every_field() {
        let base = material("a");
        assert_eq!(base.digest().len(), 64);
        assert_eq!(base.digest(), material("a").digest());
        assert_ne!(base.digest(), material("b").digest());
        let mut other = base.clone();
        other.temperature = 0.5;
        assert_ne!(base.digest(), other.digest());
        let mut other = base.clone();
        other.model = "m2".into();
        assert_ne!(base.digest(), other.digest());
    }

    #[test]
    fn put_then_get() {
        let dir = tempfile::tempdir().unwrap();
        let cache = TranscriptCache::new(dir.path());
        let m = material("news");
        assert!(cache.get(&m).unwrap().is_none());
        let path = cache.put(&m, "reply [0.3]").unwrap();
        let key = m.digest();
        assert_eq!(path, dir.path().join(&key[..2]).join(format!("{key}.json")));
        let entry = cache.get(&m).unwrap().unwrap();
        assert_eq!(entry.response, "reply [0.3]");
        assert_eq!(entry.key_material, m);

        // second writer does not clobber
        cache.put(&m, "different").unwrap();
        assert_eq!(cache.get(&m).unwrap().unwrap().response, "reply [0.3]");
        assert_eq!(cache.len(), 1);
    }

    #[test]
    fn tampered_entry_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cache = TranscriptCache::new(dir.path());
        let m = material("news");
        let path = cache.put(&m, "ok").unwrap();
        let mut entry: CacheEntry = serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
        entry.key_material.model = "other".into();
        fs::write(&path, serde_json::to_vec(&entry).unwrap()).unwrap();
        assert!(cache.get(&m).is_err());
    }

    #[test]
    fn concurrent_writers() {
        let dir = tempfile::tempdir().unwrap();
        let cache = TranscriptCache::new(dir.path());
        std::thread::scope(|s| {
            for i in 0..8 {
                let cache = &cache;
                s.spawn(move || {
                    for j in 0..20 {
                        cache.put(&material(&format!("n{}", j % 10)), &format!("w{i}")).unwrap();
                    }
                });
            }
        });
        assert_eq!(cache.len(), 10);
        for j in 0..10 {
            assert!(cache.get(&material(&format!("n{j}"))).unwrap().is_some());
        }
    }
}
