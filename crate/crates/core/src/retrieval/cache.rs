//! Content-addressed result cache. One file per key with a checksum footer.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::Serialize;

use super::RetrievalError;
use crate::media::sha256_hex;

const FOOTER: &str = "\n#fcheck-sha256:";
const TMP_SUFFIX: &str = ".tmp";

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

#[derive(Debug, Clone)]
pub struct ResultCache {
    root: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CacheStats {
    pub entries: usize,
    pub bytes: u64,
    pub corrupt: usize,
    pub temp_files: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct GcReport {
    pub removed_corrupt: usize,
    pub removed_temp: usize,
    pub removed_entries: usize,
}

/// Cache key: SHA-256 of the canonical JSON of `parts`.
pub fn cache_key<T: Serialize>(parts: &T) -> String {
    sha256_hex(serde_json::to_string(parts).expect("cache key serializes").as_bytes())
}

fn encode(value: &[u8]) -> Vec<u8> {
    let mut out = value.to_vec();
    out.extend_from_slice(FOOTER.as_bytes());
    out.extend_from_slice(sha256_hex(value).as_bytes());
    out.push(b'\n');
    out
}

fn decode(stored: &[u8]) -> Option<&[u8]> {
    let footer = FOOTER.as_bytes();
    let at = stored.windows(footer.len()).rposition(|w| w == footer)?;
    let value = &stored[..at];
    let sum = std::str::from_utf8(&stored[at + footer.len()..])
        .ok()?
        .trim_end_matches('\n');
    (sum == sha256_hex(value)).then_some(value)
}

impl ResultCache {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, RetrievalError> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(|e| RetrievalError::Io(format!("{}: {e}", root.display())))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn path_for(&self, key: &str) -> PathBuf {
        let shard = key.get(..2).unwrap_or("__");
        self.root.join(shard).join(key)
    }

    pub fn get(&self, key: &str) -> Result<Option<Vec<u8>>, RetrievalError> {
        let stored = match std::fs::read(self.path_for(key)) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(RetrievalError::Io(e.to_string())),
        };
        decode(&stored)
            .map(|v| Some(v.to_vec()))
            .ok_or_else(|| RetrievalError::CacheCorrupt(key.to_string()))
    }

    /// Atomic write via rename; concurrent writers of one key are last-writer-wins.
    pub fn put(&self, key: &str, value: &[u8]) -> Result<(), RetrievalError> {
        let path = self.path_for(key);
        let io = |e: std::io::Error| RetrievalError::Io(format!("{}: {e}", path.display()));
        std::fs::create_dir_all(path.parent().expect("sharded path")).map_err(io)?;
        let tmp = path.with_extension(format!(
            "{}-{}{TMP_SUFFIX}",
            std::process::id(),
            TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        std::fs::write(&tmp, encode(value)).map_err(io)?;
        std::fs::rename(&tmp, &path).map_err(io)
    }

    pub fn stats(&self) -> CacheStats {
        let mut stats = CacheStats::default();
        for path in files_under(&self.root) {
            if path.to_string_lossy().ends_with(TMP_SUFFIX) {
                stats.temp_files += 1;
                continue;
            }
            match std::fs::read(&path) {
                Ok(b) if decode(&b).is_some() => {
                    stats.entries += 1;
                    stats.bytes += b.len() as u64;
                }
                _ => stats.corrupt += 1,
            }
        }
        stats
    }

    /// Removes corrupt entries and stray temp files; with `all`, empties the cache.
    pub fn gc(&self, all: bool) -> Result<GcReport, RetrievalError> {
        let mut report = GcReport::default();
        for path in files_under(&self.root) {
            let remove = |p: &Path| std::fs::remove_file(p).map_err(|e| RetrievalError::Io(e.to_string()));
            if path.to_string_lossy().ends_with(TMP_SUFFIX) {
                remove(&path)?;
                report.removed_temp += 1;
            } else if std::fs::read(&path).ok().and_then(|b| decode(&b).map(|_| ())).is_none() {
                remove(&path)?;
                report.removed_corrupt += 1;
            } else if all {
                remove(&path)?;
                report.removed_entries += 1;
            }
        }
        Ok(report)
    }
}

/// Cache files (`<root>/<shard>/<key>`), sorted.
fn files_under(root: &Path) -> Vec<PathBuf> {
    walkdir::WalkDir::new(root)
        .min_depth(2)
        .max_depth(2)
        .sort_by_file_name()
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file())
        .map(|e| e.into_path())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn put_then_get_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResultCache::open(dir.path()).unwrap();
        let key = cache_key(&("search", "q"));
        cache.put(&key, b"[1,2,3]").unwrap();
        assert_eq!(cache.get(&key).unwrap().as_deref(), Some(&b"[1,2,3]"[..]));
    }

    #[test]
    fn unknown_key_is_absent() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResultCache::open(dir.path()).unwrap();
        assert_eq!(cache.get(&cache_key(&"nothing")).unwrap(), None);
    }

    #[test]
    fn tampered_entry_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResultCache::open(dir.path()).unwrap();
        let key = cache_key(&"k");
        cache.put(&key, b"value").unwrap();
        let path = cache.path_for(&key);
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'V';
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(cache.get(&key), Err(RetrievalError::CacheCorrupt(k)) if k == key));

        std::fs::write(&path, b"no footer").unwrap();
        assert!(matches!(cache.get(&key), Err(RetrievalError::CacheCorrupt(_))));
    }

    #[test]
    fn value_containing_footer_text_survives() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResultCache::open(dir.path()).unwrap();
        let value = format!("a{FOOTER}deadbeef\nb");
        cache.put("abcd", value.as_bytes()).unwrap();
        assert_eq!(cache.get("abcd").unwrap().unwrap(), value.as_bytes());
    }

    #[test]
    fn stats_and_gc() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResultCache::open(dir.path()).unwrap();
        cache.put("aa01", b"x").unwrap();
        cache.put("bb02", b"y").unwrap();
        std::fs::write(cache.path_for("bb02"), b"broken").unwrap();
        std::fs::write(dir.path().join("aa").join("aa03.1-1.tmp"), b"partial").unwrap();
        let s = cache.stats();
        assert_eq!((s.entries, s.corrupt, s.temp_files), (1, 1, 1));
        let r = cache.gc(false).unwrap();
        assert_eq!((r.removed_corrupt, r.removed_temp, r.removed_entries), (1, 1, 0));
        assert_eq!(cache.stats().entries, 1);
        assert_eq!(cache.gc(true).unwrap().removed_entries, 1);
        assert_eq!(cache.stats(), CacheStats::default());
    }
}
