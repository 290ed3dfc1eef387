//! On-disk snapshot persistence: six files (manifest plus five data
//! files), 64-bit FNV-1a checksums, and write-to-staging-then-rename swap
//! semantics so a partially written snapshot is never visible at the
//! final path.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::dense::DenseIndex;
use crate::error::{Error, Result};
use crate::model::Document;
use crate::query::{Glossary, Vocabularies};
use crate::rank::{fnv1a64, EngineConfig, SearchEngine};
use crate::sparse::SparseIndex;

pub const FORMAT_VERSION: u32 = 1;

/// Data files covered by manifest checksums; `manifest.json` is sixth.
pub const DATA_FILES: [&str; 5] =
    ["documents.jsonl", "sparse.idx", "dense.idx", "vocabularies.json", "glossary.json"];

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestCounts {
    pub documents: usize,
    pub chunks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub created_at: String,
    pub counts: ManifestCounts,
    pub config: EngineConfig,
    /// FNV-1a 64 of the canonical config JSON, 16 hex digits.
    pub config_hash: String,
    /// file name → FNV-1a 64 of the file bytes, 16 hex digits.
    pub checksums: BTreeMap<String, String>,
}

fn checksum_hex(bytes: &[u8]) -> String {
    format!("{:016x}", fnv1a64(bytes))
}

/// Advisory single-writer lock: a `<name>.lock` file beside the snapshot
/// directory, created exclusively and removed on drop. Readers ignore it.
#[derive(Debug)]
pub struct SnapshotLock {
    path: PathBuf,
}

impl SnapshotLock {
    pub fn acquire(snapshot_dir: &Path) -> Result<SnapshotLock> {
        let path = lock_path(snapshot_dir);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut file = OpenOptions::new().write(true).create_new(true).open(&path).map_err(
            |e| {
                if e.kind() == std::io::ErrorKind::AlreadyExists {
                    Error::Io(std::io::Error::new(
                        std::io::ErrorKind::AlreadyExists,
                        format!("another writer holds {}", path.display()),
                    ))
                } else {
                    Error::Io(e)
                }
            },
        )?;
        let _ = writeln!(file, "{}", std::process::id());
        Ok(SnapshotLock { path })
    }
}

impl Drop for SnapshotLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn lock_path(snapshot_dir: &Path) -> PathBuf {
    let name = snapshot_dir
        .file_name()
        .map_or_else(|| "snapshot".to_string(), |n| n.to_string_lossy().into_owned());
    match snapshot_dir.parent() {
        Some(parent) if parent.as_os_str().is_empty() => PathBuf::from(format!("{name}.lock")),
        Some(parent) => parent.join(format!("{name}.lock")),
        None => PathBuf::from(format!("{name}.lock")),
    }
}

static STAGING_NONCE: AtomicU64 = AtomicU64::new(0);

fn staging_dir_for(dir: &Path) -> PathBuf {
    let nonce = STAGING_NONCE.fetch_add(1, Ordering::Relaxed);
    let name = dir
        .file_name()
        .map_or_else(|| "snapshot".to_string(), |n| n.to_string_lossy().into_owned());
    let staged = format!(".{name}.staging-{}-{nonce}", std::process::id());
    match dir.parent() {
        Some(parent) if parent.as_os_str().is_empty() => PathBuf::from(staged),
        Some(parent) => parent.join(staged),
        None => PathBuf::from(staged),
    }
}

fn write_file_synced(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut file = File::create(path)?;
    file.write_all(bytes)?;
    file.sync_all()?;
    Ok(())
}

fn sync_dir(path: &Path) -> Result<()> {
    File::open(path)?.sync_all()?;
    Ok(())
}

fn encode_documents(docs: &[Document]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for doc in docs {
        serde_json::to_writer(&mut out, doc)
            .map_err(|e| Error::CorruptIndex { file: "documents.jsonl".into(), message: e.to_string() })?;
        out.push(b'\n');
    }
    Ok(out)
}

/// Write the engine as a snapshot at `dir`, replacing any previous
/// snapshot. All files are staged, fsynced, and renamed into place; the
/// manifest is written last within the staging directory.
pub fn save_snapshot(engine: &SearchEngine, dir: &Path) -> Result<Manifest> {
    let _lock = SnapshotLock::acquire(dir)?;
    if let Some(parent) = dir.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }

    let documents = encode_documents(engine.docs())?;
    let mut sparse = Vec::new();
    engine.sparse().write_to(&mut sparse)?;
    let mut dense = Vec::new();
    engine.dense().write_to(&mut dense)?;
    let vocabularies = serde_json::to_vec(engine.vocabularies())
        .map_err(|e| Error::CorruptIndex { file: "vocabularies.json".into(), message: e.to_string() })?;
    let glossary = serde_json::to_vec(engine.glossary())
        .map_err(|e| Error::CorruptIndex { file: "glossary.json".into(), message: e.to_string() })?;

    let payloads: [(&str, &[u8]); 5] = [
        ("documents.jsonl", &documents),
        ("sparse.idx", &sparse),
        ("dense.idx", &dense),
        ("vocabularies.json", &vocabularies),
        ("glossary.json", &glossary),
    ];

    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        created_at: engine.created_at().to_string(),
        counts: ManifestCounts {
            documents: engine.docs().len(),
            chunks: engine.dense().len(),
        },
        config: engine.config().clone(),
        config_hash: format!("{:016x}", engine.config().hash()),
        checksums: payloads
            .iter()
            .map(|&(name, bytes)| (name.to_string(), checksum_hex(bytes)))
            .collect(),
    };

    let staging = staging_dir_for(dir);
    fs::create_dir_all(&staging)?;
    let result = (|| -> Result<()> {
        for (name, bytes) in payloads {
            write_file_synced(&staging.join(name), bytes)?;
        }
        let manifest_json = serde_json::to_vec_pretty(&manifest)
            .map_err(|e| Error::CorruptIndex { file: MANIFEST_FILE.into(), message: e.to_string() })?;
        write_file_synced(&staging.join(MANIFEST_FILE), &manifest_json)?;
        sync_dir(&staging)?;

        if dir.exists() {
            let old = staging.with_extension("old");
            fs::rename(dir, &old)?;
            fs::rename(&staging, dir)?;
            let _ = fs::remove_dir_all(&old);
        } else {
            fs::rename(&staging, dir)?;
        }
        if let Some(parent) = dir.parent() {
            if !parent.as_os_str().is_empty() {
                let _ = sync_dir(parent);
            }
        }
        Ok(())
    })();
    if result.is_err() {
        let _ = fs::remove_dir_all(&staging);
    }
    result?;
    Ok(manifest)
}

fn read_checked(dir: &Path, manifest: &Manifest, name: &str) -> Result<Vec<u8>> {
    let expected = manifest.checksums.get(name).ok_or_else(|| Error::CorruptIndex {
        file: MANIFEST_FILE.into(),
        message: format!("manifest lists no checksum for {name}"),
    })?;
    let bytes = fs::read(dir.join(name))?;
    if checksum_hex(&bytes) != *expected {
        return Err(Error::ChecksumMismatch(name.to_string()));
    }
    Ok(bytes)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let bytes = fs::read(dir.join(MANIFEST_FILE))?;
    let manifest: Manifest = serde_json::from_slice(&bytes)
        .map_err(|e| Error::CorruptIndex { file: MANIFEST_FILE.into(), message: e.to_string() })?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::VersionMismatch { expected: FORMAT_VERSION, got: manifest.format_version });
    }
    Ok(manifest)
}

/// Load a snapshot, verifying the format version, the config hash, and
/// every file checksum. The loaded engine's search output is bit-identical
/// to the saved engine's.
pub fn load_snapshot(dir: &Path) -> Result<SearchEngine> {
    let manifest = read_manifest(dir)?;
    if manifest.config_hash != format!("{:016x}", manifest.config.hash()) {
        return Err(Error::CorruptIndex {
            file: MANIFEST_FILE.into(),
            message: "config hash does not match config".into(),
        });
    }

    let documents_bytes = read_checked(dir, &manifest, "documents.jsonl")?;
    let sparse_bytes = read_checked(dir, &manifest, "sparse.idx")?;
    let dense_bytes = read_checked(dir, &manifest, "dense.idx")?;
    let vocabularies_bytes = read_checked(dir, &manifest, "vocabularies.json")?;
    let glossary_bytes = read_checked(dir, &manifest, "glossary.json")?;

    let mut docs = Vec::new();
    for (i, line) in documents_bytes.split(|&b| b == b'\n').enumerate() {
        if line.is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_slice(line)
            .map_err(|e| Error::parse(i + 1, e.to_string()))?;
        docs.push(doc);
    }
    let sparse = SparseIndex::read_from(&mut &sparse_bytes[..])?;
    let dense = DenseIndex::read_from(&mut &dense_bytes[..])?;
    let vocabularies: Vocabularies = serde_json::from_slice(&vocabularies_bytes)
        .map_err(|e| Error::CorruptIndex { file: "vocabularies.json".into(), message: e.to_string() })?;
    let glossary_text = String::from_utf8(glossary_bytes).map_err(|e| Error::CorruptIndex {
        file: "glossary.json".into(),
        message: e.to_string(),
    })?;
    let glossary = Glossary::parse(&glossary_text)?;

    if docs.len() != manifest.counts.documents || dense.len() != manifest.counts.chunks {
        return Err(Error::CorruptIndex {
            file: MANIFEST_FILE.into(),
            message: format!(
                "counts disagree: manifest says {}/{} docs/chunks, files hold {}/{}",
                manifest.counts.documents,
                manifest.counts.chunks,
                docs.len(),
                dense.len()
            ),
        });
    }

    SearchEngine::from_parts(
        docs,
        glossary,
        vocabularies,
        sparse,
        dense,
        manifest.config.clone(),
        manifest.created_at.clone(),
    )
}

/// Convenience for callers that have config but no snapshot yet.
pub fn snapshot_exists(dir: &Path) -> bool {
    dir.join(MANIFEST_FILE).is_file()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{ingest_record, IngestConfig};
    use crate::query::FilterMap;
    use crate::rank::Mode;
    use tempfile::TempDir;

    fn mk_doc(id: u32, number: &str, title: &str, body: &str) -> Document {
        let line = serde_json::json!({
            "metadata": {
                "dataset_document_number": number,
                "dataset_name": "snapshots",
                "dataset_file_title": title,
                "language": "en",
                "country": "portugal",
            },
            "body": body,
        })
        .to_string();
        ingest_record(&line, 1, &IngestConfig::default(), id).unwrap()
    }

    fn engine() -> SearchEngine {
        let docs = vec![
            mk_doc(0, "N-01", "Adverse Event Summary", "adverse event counts for the reporting period with severity grading"),
            mk_doc(1, "N-02", "Protocol Amendment Two", "protocol amendment adjusting dosage arms and inclusion criteria"),
            mk_doc(2, "N-03", "Site Training Deck", "training deck for new investigative sites covering sample handling"),
        ];
        let glossary = Glossary::parse(r#"{"ae": ["adverse event"]}"#).unwrap();
        let config = EngineConfig { embed_dim: 64, ..EngineConfig::default() };
        SearchEngine::build(docs, glossary, config, "2024-06-01T12:00:00Z".into()).unwrap()
    }

    fn search_json(engine: &SearchEngine, queries: &[&str]) -> String {
        let mut out = String::new();
        for q in queries {
            let resp = engine.search(q, &FilterMap::new(), Mode::Hybrid, 10).unwrap();
            out.push_str(&serde_json::to_string(&resp.hits).unwrap());
            out.push('\n');
        }
        out
    }

    const QUERIES: [&str; 4] =
        ["adverse event severity", "protocol dosage", "training sample handling", "ae reporting"];

    #[test]
    fn save_creates_exactly_six_files() {
        let tmp = TempDir::new().unwrap();
        let dir = tmp.path().join("snap");
        save_snapshot(&engine(), &dir).unwrap();
        let mut names: Vec<String> = fs::read_dir(&dir)
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect();
        names.sort();
        let mut expected: Vec<String> =
            DATA_FILES.iter().map(|s| s.to_string()).chain([MANIFEST_FILE.to_string()]).collect();
        expected.sort();
        assert_eq!(names, expected);
    }

    #[test]
    fn double_save_is_byte_identical() {
        let tmp = TempDir::new().unwrap();
        let e = engine();
        let dir_a = tmp.path().join("a");
        let dir_b = tmp.path().join("b");
        save_snapshot(&e, &dir_a).unwrap();
        save_snapshot(&e, &dir_b).unwrap();
        for name in DATA_FILES.iter().chain([&MANIFEST_FILE]) {
            let a = fs::read(dir_a.join(name)).unwrap();
            let b = fs::read(dir_b.join(name)).unwrap();
            assert_eq!(a, b, "file {name} differs between identical saves");
        }
    }

    #[test]
    fn resave_over_existing_snapshot_replaces_it() {
        let tmp = TempDir::new().unwrap();
        let dir = tmp.path().join("snap");
        save_snapshot(&engine(), &dir).unwrap();
        let docs = vec![mk_doc(0, "X-99", "Lone Document", "entirely different corpus body")];
        let other = SearchEngine::build(
            docs,
            Glossary::empty(),
            EngineConfig { embed_dim: 64, ..EngineConfig::default() },
            "2024-06-02T00:00:00Z".into(),
        )
        .unwrap();
        save_snapshot(&other, &dir).unwrap();
        let loaded = load_snapshot(&dir).unwrap();
        assert_eq!(loaded.docs().len(), 1);
        assert_eq!(loaded.docs()[0].document_number(), "X-99");
        assert_eq!(loaded.created_at(), "2024-06-02T00:00:00Z");
    }

    #[test]
    fn round_trip_preserves_search_output_bit_for_bit() {
        let tmp = TempDir::new().unwrap();
        let dir = tmp.path().join("snap");
        let e = engine();
        let before = search_json(&e, &QUERIES);
        save_snapshot(&e, &dir).unwrap();
        let loaded = load_snapshot(&dir).unwrap();
        let after = search_json(&loaded, &QUERIES);
        assert_eq!(before, after);
        assert_eq!(loaded.config(), e.config());
        assert_eq!(loaded.created_at(), e.created_at());
        assert_eq!(loaded.vocabularies(), e.vocabularies());
    }

    #[test]
    fn corrupt_byte_is_detected_per_file() {
        for name in DATA_FILES {
            let tmp = TempDir::new().unwrap();
            let dir = tmp.path().join("snap");
            save_snapshot(&engine(), &dir).unwrap();
            let path = dir.join(name);
            let mut bytes = fs::read(&path).unwrap();
            let mid = bytes.len() / 2;
            bytes[mid] ^= 0xFF;
            fs::write(&path, &bytes).unwrap();
            let err = load_snapshot(&dir).unwrap_err();
            assert!(
                matches!(&err, Error::ChecksumMismatch(f) if f == name),
                "expected ChecksumMismatch({name}), got {err:?}"
            );
        }
    }

    #[test]
    fn future_format_version_is_rejected() {
        let tmp = TempDir::new().unwrap();
        let dir = tmp.path().join("snap");
        save_snapshot(&engine(), &dir).unwrap();
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).unwrap();
        let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
        value["format_version"] = serde_json::json!(99);
        fs::write(&path, serde_json::to_vec_pretty(&value).unwrap()).unwrap();
        let err = load_snapshot(&dir).unwrap_err();
        assert!(matches!(err, Error::VersionMismatch { expected: 1, got: 99 }));
    }

    #[test]
    fn tampered_config_fails_hash_check() {
        let tmp = TempDir::new().unwrap();
        let dir = tmp.path().join("snap");
        save_snapshot(&engine(), &dir).unwrap();
        let path = dir.join(MANIFEST_FILE);
        let mut value: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        value["config"]["rrf_k"] = serde_json::json!(61.0);
        fs::write(&path, serde_json::to_vec_pretty(&value).unwrap()).unwrap();
        let err = load_snapshot(&dir).unwrap_err();
        assert!(matches!(err, Error::CorruptIndex { file, .. } if file == MANIFEST_FILE));
    }

    #[test]
    fn missing_data_file_is_an_error() {
        let tmp = TempDir::new().unwrap();
        let dir = tmp.path().join("snap");
        save_snapshot(&engine(), &dir).unwrap();
        fs::remove_file(dir.join("dense.idx")).unwrap();
        assert!(load_snapshot(&dir).is_err());
    }

    #[test]
    fn unwritable_destination_leaves_no_partial_snapshot() {
        let tmp = TempDir::new().unwrap();
        // A regular file where the parent directory should be.
        let blocker = tmp.path().join("blocker");
        fs::write(&blocker, b"not a directory").unwrap();
        let dir = blocker.join("snap");
        assert!(save_snapshot(&engine(), &dir).is_err());
        assert!(!dir.exists());
    }

    #[test]
    fn advisory_lock_excludes_second_writer() {
        let tmp = TempDir::new().unwrap();
        let dir = tmp.path().join("snap");
        let guard = SnapshotLock::acquire(&dir).unwrap();
        let err = save_snapshot(&engine(), &dir).unwrap_err();
        assert!(matches!(err, Error::Io(_)));
        drop(guard);
        save_snapshot(&engine(), &dir).unwrap();
        assert!(load_snapshot(&dir).is_ok());
    }

    #[test]
    fn manifest_counts_match_contents() {
        let tmp = TempDir::new().unwrap();
        let dir = tmp.path().join("snap");
        let e = engine();
        let manifest = save_snapshot(&e, &dir).unwrap();
        assert_eq!(manifest.counts.documents, 3);
        assert_eq!(manifest.counts.chunks, e.dense().len());
        assert_eq!(manifest.checksums.len(), 5);
        let reread = read_manifest(&dir).unwrap();
        assert_eq!(reread, manifest);
    }
}
