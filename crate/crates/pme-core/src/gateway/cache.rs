//! Append-friendly response cache: one record per line with the content
//! hash, an ISO-8601 timestamp, and the raw response JSON-escaped. Human
//! inspectable, and a hit returns the stored text byte-identically.

use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use sha2::{Digest, Sha256};

use crate::prompting::Strategy;

/// Content hash of (strategy, backend descriptor, rendered prompt).
pub fn cache_key(strategy: Strategy, backend_descriptor: &str, prompt_text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(strategy.slug().as_bytes());
    hasher.update([0u8]);
    hasher.update(backend_descriptor.as_bytes());
    hasher.update([0u8]);
    hasher.update(prompt_text.as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn iso8601_utc_now() -> String {
    let seconds = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let days = (seconds / 86_400) as i64;
    let rem = seconds % 86_400;
    // Howard Hinnant's civil-from-days.
    let z = days + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z.rem_euclid(146_097);
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let year = yoe + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let day = doy - (153 * mp + 2) / 5 + 1;
    let month = if mp < 10 { mp + 3 } else { mp - 9 };
    let year = if month <= 2 { year + 1 } else { year };
    format!(
        "{year:04}-{month:02}-{day:02}T{:02}:{:02}:{:02}Z",
        rem / 3600,
        (rem % 3600) / 60,
        rem % 60
    )
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CacheStats {
    pub hits: usize,
    pub misses: usize,
    pub corrupt_lines: usize,
}

/// In-memory map backed by an append-only file. Reloading the file
/// reproduces the map; corrupt lines are skipped with a warning and
/// overwritten on the next write of that key.
#[derive(Debug)]
pub struct ResponseCache {
    path: Option<PathBuf>,
    entries: HashMap<String, String>,
    stats: CacheStats,
    warnings: Vec<String>,
}

impl ResponseCache {
    /// Purely in-memory cache (tests, dry runs).
    pub fn in_memory() -> Self {
        ResponseCache {
            path: None,
            entries: HashMap::new(),
            stats: CacheStats::default(),
            warnings: Vec::new(),
        }
    }

    /// Opens (or creates) a file-backed cache, loading existing entries.
    pub fn open(path: &Path) -> Result<Self, std::io::Error> {
        let mut cache = ResponseCache {
            path: Some(path.to_path_buf()),
            entries: HashMap::new(),
            stats: CacheStats::default(),
            warnings: Vec::new(),
        };
        if path.exists() {
            let text = std::fs::read_to_string(path)?;
            for (line_no, line) in text.lines().enumerate() {
                if line.is_empty() {
                    continue;
                }
                let mut parts = line.splitn(3, '\t');
                let key = parts.next().unwrap_or_default();
                let _timestamp = parts.next();
                let escaped = parts.next();
                let parsed =
                    escaped.and_then(|e| serde_json::from_str::<String>(e).ok());
                match parsed {
                    Some(response) if key.len() == 64 => {
                        cache.entries.insert(key.to_string(), response);
                    }
                    _ => {
                        cache.stats.corrupt_lines += 1;
                        cache.warnings.push(format!(
                            "cache line {} is corrupt; treating as miss",
                            line_no + 1
                        ));
                    }
                }
            }
        }
        Ok(cache)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn stats(&self) -> CacheStats {
        self.stats
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn get(&mut self, key: &str) -> Option<String> {
        match self.entries.get(key) {
            Some(text) => {
                self.stats.hits += 1;
                Some(text.clone())
            }
            None => {
                self.stats.misses += 1;
                None
            }
        }
    }

    pub fn put(&mut self, key: &str, response: &str) -> Result<(), (String, std::io::Error)> {
        self.entries.insert(key.to_string(), response.to_string());
        if let Some(path) = &self.path {
            let line = format!(
                "{key}\t{}\t{}\n",
                iso8601_utc_now(),
                serde_json::to_string(response).expect("strings serialize")
            );
            let result = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .and_then(|mut f| f.write_all(line.as_bytes()));
            if let Err(e) = result {
                return Err((path.display().to_string(), e));
            }
        }
        Ok(())
    }

    /// Hash of the cached (key, response) pairs, independent of insertion
    /// order and timestamps; used in run manifests.
    pub fn content_hash(&self) -> String {
        let mut keys: Vec<&String> = self.entries.keys().collect();
        keys.sort_unstable();
        let mut hasher = Sha256::new();
        for key in keys {
            hasher.update(key.as_bytes());
            hasher.update([0u8]);
            hasher.update(self.entries[key].as_bytes());
            hasher.update([0u8]);
        }
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_byte_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.tsv");
        let response = "line one\nline \"two\"\twith tab";
        {
            let mut cache = ResponseCache::open(&path).unwrap();
            cache.put("k".repeat(64).as_str(), response).unwrap();
        }
        let mut reloaded = ResponseCache::open(&path).unwrap();
        assert_eq!(reloaded.get(&"k".repeat(64)), Some(response.to_string()));
        assert_eq!(reloaded.stats().hits, 1);
    }

    #[test]
    fn corrupt_line_treated_as_miss() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.tsv");
        std::fs::write(&path, "garbage line without tabs\n").unwrap();
        let mut cache = ResponseCache::open(&path).unwrap();
        assert_eq!(cache.stats().corrupt_lines, 1);
        assert_eq!(cache.warnings().len(), 1);
        assert_eq!(cache.get("whatever"), None);
        // overwriting works fine afterwards
        cache.put(&"a".repeat(64), "fresh").unwrap();
        assert_eq!(cache.get(&"a".repeat(64)), Some("fresh".to_string()));
    }

    #[test]
    fn key_depends_on_all_parts() {
        let a = cache_key(Strategy::DigitalTwin, "http:model-a", "prompt");
        let b = cache_key(Strategy::DigitalTwin, "http:model-b", "prompt");
        let c = cache_key(Strategy::DigitalTwin, "http:model-a", "prompt!");
        let d = cache_key(Strategy::ZeroShotAll, "http:model-a", "prompt");
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
        assert_eq!(a.len(), 64);
    }

    #[test]
    fn content_hash_ignores_timestamps_and_order() {
        let mut a = ResponseCache::in_memory();
        let mut b = ResponseCache::in_memory();
        a.put(&"1".repeat(64), "x").unwrap();
        a.put(&"2".repeat(64), "y").unwrap();
        b.put(&"2".repeat(64), "y").unwrap();
        b.put(&"1".repeat(64), "x").unwrap();
        assert_eq!(a.content_hash(), b.content_hash());
    }

    #[test]
    fn timestamp_shape() {
        let ts = iso8601_utc_now();
        // e.g. 2026-08-08T12:30:00Z
        assert_eq!(ts.len(), 20);
        assert_eq!(&ts[4..5], "-");
        assert!(ts.ends_with('Z'));
        assert!(ts.starts_with("20"));
    }
}
