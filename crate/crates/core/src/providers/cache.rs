use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::ProviderKind;
use crate::text::sha256_hex;

/// Provider responses keyed by a digest of the request. Memory-only, or
/// mirrored to `<dir>/<ab>/<digest>.json` for reuse across processes.
#[derive(Debug, Default)]
pub struct ResponseCache {
    mem: Mutex<HashMap<String, String>>,
    dir: Option<PathBuf>,
}

pub(super) fn request_key<T: Serialize + ?Sized>(
    kind: ProviderKind,
    provider_id: &str,
    request: &T,
) -> String {
    let body = serde_json::to_string(request).expect("requests serialize");
    sha256_hex(format!("{kind:?}\u{0}{provider_id}\u{0}{body}").as_bytes())
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn on_disk(dir: impl Into<PathBuf>) -> Self {
        Self {
            mem: Mutex::default(),
            dir: Some(dir.into()),
        }
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.dir
            .as_ref()
            .map(|d| d.join(&key[..2]).join(format!("{key}.json")))
    }

    pub fn get<T: DeserializeOwned>(&self, key: &str) -> Option<T> {
        if let Some(s) = self.mem.lock().expect("cache poisoned").get(key) {
            return serde_json::from_str(s).ok();
        }
        let s = std::fs::read_to_string(self.path(key)?).ok()?;
        let v = serde_json::from_str(&s).ok()?;
        self.mem.lock().expect("cache poisoned").insert(key.to_owned(), s);
        Some(v)
    }

    pub fn put<T: Serialize>(&self, key: &str, value: &T) {
        let s = serde_json::to_string(value).expect("responses serialize");
        if let Some(path) = self.path(key) {
            if let Err(e) = crate::persistence::atomic_write(&path, s.as_bytes()) {
                log::warn!("response cache write failed: {e}");
            }
        }
        self.mem.lock().expect("cache poisoned").insert(key.to_owned(), s);
    }

    pub fn len(&self) -> usize {
        self.mem.lock().expect("cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disk_cache_survives_new_instance() {
        let dir = tempfile::tempdir().unwrap();
        let key = request_key(ProviderKind::Chat, "p", "req");
        ResponseCache::on_disk(dir.path()).put(&key, &vec![1, 2, 3]);
        let fresh = ResponseCache::on_disk(dir.path());
        assert_eq!(fresh.get::<Vec<i32>>(&key), Some(vec![1, 2, 3]));
        assert_ne!(key, request_key(ProviderKind::Chat, "q", "req"));
    }
}
