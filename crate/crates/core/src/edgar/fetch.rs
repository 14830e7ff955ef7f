use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant, SystemTime};

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::html::{extract_text, ExtractError};
use super::index::IndexEntry;

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("network error fetching {url}: {message}")]
    Network { url: String, message: String },
    #[error("not found: {0}")]
    NotFound(String),
    #[error("rate limited fetching {url} (retry after {retry_after:?})")]
    RateLimited {
        url: String,
        retry_after: Option<Duration>,
    },
    #[error("unexpected HTTP status {status} for {url}")]
    Status { url: String, status: u16 },
    #[error("cache error: {0}")]
    Cache(#[from] io::Error),
    #[error(transparent)]
    Extract(#[from] ExtractError),
}

/// Raw response of a single GET.
#[derive(Debug, Clone)]
pub struct FetchResponse {
    pub status: u16,
    pub body: Vec<u8>,
    pub retry_after: Option<Duration>,
}

/// Source of filing bytes, addressed by the index `filename` field.
pub trait Fetcher: Send + Sync {
    fn get(&self, filename: &str) -> Result<FetchResponse, FetchError>;
}

/// Blocking HTTP fetcher against an archive base URL (e.g.
/// `https://www.sec.gov/Archives`).
pub struct HttpFetcher {
    base_url: String,
    client: reqwest::blocking::Client,
}

impl HttpFetcher {
    /// EDGAR rejects requests without a descriptive user agent, so one is required.
    pub fn new(base_url: impl Into<String>, user_agent: &str) -> Result<Self, FetchError> {
        let base_url = base_url.into();
        let client = reqwest::blocking::Client::builder()
            .user_agent(user_agent)
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| FetchError::Network {
                url: base_url.clone(),
                message: e.to_string(),
            })?;
        Ok(Self { base_url, client })
    }
}

impl Fetcher for HttpFetcher {
    fn get(&self, filename: &str) -> Result<FetchResponse, FetchError> {
        let url = format!(
            "{}/{}",
            self.base_url.trim_end_matches('/'),
            filename.trim_start_matches('/')
        );
        let net = |e: reqwest::Error| FetchError::Network {
            url: url.clone(),
            message: e.to_string(),
        };
        let resp = self.client.get(&url).send().map_err(net)?;
        let status = resp.status().as_u16();
        let retry_after = resp
            .headers()
            .get(reqwest::header::RETRY_AFTER)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map(Duration::from_secs);
        let body = resp.bytes().map_err(net)?.to_vec();
        Ok(FetchResponse {
            status,
            body,
            retry_after,
        })
    }
}

/// Serves filings from a local directory tree laid out like the archive.
pub struct LocalFetcher {
    root: PathBuf,
}

impl LocalFetcher {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }
}

impl Fetcher for LocalFetcher {
    fn get(&self, filename: &str) -> Result<FetchResponse, FetchError> {
        let path = self.root.join(filename.trim_start_matches('/'));
        match fs::read(&path) {
            Ok(body) => Ok(FetchResponse {
                status: 200,
                body,
                retry_after: None,
            }),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(FetchResponse {
                status: 404,
                body: Vec::new(),
                retry_after: None,
            }),
            Err(e) => Err(FetchError::Network {
                url: path.display().to_string(),
                message: e.to_string(),
            }),
        }
    }
}

/// Global minimum spacing between request starts, shared by all workers.
pub struct Throttle {
    min_interval: Duration,
    last: Mutex<Option<Instant>>,
}

impl Throttle {
    pub fn new(min_interval: Duration) -> Self {
        Self {
            min_interval,
            last: Mutex::new(None),
        }
    }

    /// Block until a request may start, then record its start time.
    pub fn wait(&self) {
        let mut last = self.last.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(prev) = *last {
            let elapsed = prev.elapsed();
            if elapsed < self.min_interval {
                thread::sleep(self.min_interval - elapsed);
            }
        }
        *last = Some(Instant::now());
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Cache key of an index entry: SHA-256 of its `filename` field.
pub fn cache_key(filename: &str) -> String {
    sha256_hex(filename.as_bytes())
}

/// On-disk store of raw filing bytes and extracted text.
///
/// Writes go to a temporary sibling and are renamed into place, so
/// concurrent writers of the same key never expose partial files.
#[derive(Debug, Clone)]
pub struct ContentStore {
    root: PathBuf,
}

static TMP_COUNTER: AtomicUsize = AtomicUsize::new(0);

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().expect("cache paths have a parent");
    fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.{}.{}.tmp",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("blob"),
        std::process::id(),
        TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

impl ContentStore {
    pub fn open(root: impl Into<PathBuf>) -> io::Result<Self> {
        let root = root.into();
        fs::create_dir_all(root.join("raw"))?;
        fs::create_dir_all(root.join("text"))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn raw_path(&self, key: &str) -> PathBuf {
        self.root.join("raw").join(key)
    }

    /// Text path relative to the store root.
    pub fn text_rel_path(key: &str) -> String {
        format!("text/{key}.txt")
    }

    pub fn contains(&self, key: &str) -> bool {
        self.raw_path(key).is_file()
    }

    pub fn read_raw(&self, key: &str) -> io::Result<Option<(Vec<u8>, SystemTime)>> {
        let path = self.raw_path(key);
        match fs::read(&path) {
            Ok(b) => Ok(Some((b, fs::metadata(&path)?.modified()?))),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn write_raw(&self, key: &str, bytes: &[u8]) -> io::Result<()> {
        write_atomic(&self.raw_path(key), bytes)
    }

    pub fn read_text(&self, key: &str) -> io::Result<Option<String>> {
        match fs::read_to_string(self.root.join(Self::text_rel_path(key))) {
            Ok(t) => Ok(Some(t)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn write_text(&self, key: &str, text: &str) -> io::Result<()> {
        write_atomic(&self.root.join(Self::text_rel_path(key)), text.as_bytes())
    }
}

#[derive(Debug, Clone)]
pub struct FilingDocument {
    pub entry: IndexEntry,
    /// SHA-256 of the raw bytes held in the cache.
    pub raw_bytes_digest: String,
    pub text: String,
    /// Location of the extracted text, relative to the cache root.
    pub text_path: String,
    pub fetched_at: DateTime<Utc>,
    pub from_cache: bool,
}

/// One JSON-lines record of the ingest manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub cik: u64,
    pub form_type: String,
    pub date_filed: NaiveDate,
    pub digest: String,
    pub text_path: String,
}

impl From<&FilingDocument> for ManifestRecord {
    fn from(d: &FilingDocument) -> Self {
        Self {
            cik: d.entry.cik,
            form_type: d.entry.form_type.clone(),
            date_filed: d.entry.date_filed,
            digest: d.raw_bytes_digest.clone(),
            text_path: d.text_path.clone(),
        }
    }
}

/// Fetch one filing, serving it from the store when already cached.
pub fn fetch_filing(
    entry: &IndexEntry,
    fetcher: &dyn Fetcher,
    store: &ContentStore,
    throttle: &Throttle,
) -> Result<FilingDocument, FetchError> {
    let key = cache_key(&entry.filename);
    let text_path = ContentStore::text_rel_path(&key);

    if let Some((bytes, mtime)) = store.read_raw(&key)? {
        let text = match store.read_text(&key)? {
            Some(t) => t,
            None => {
                let t = extract_text(&bytes)?;
                store.write_text(&key, &t)?;
                t
            }
        };
        return Ok(FilingDocument {
            entry: entry.clone(),
            raw_bytes_digest: sha256_hex(&bytes),
            text,
            text_path,
            fetched_at: mtime.into(),
            from_cache: true,
        });
    }

    throttle.wait();
    let resp = fetcher.get(&entry.filename)?;
    match resp.status {
        200..=299 => {}
        404 => return Err(FetchError::NotFound(entry.filename.clone())),
        429 => {
            return Err(FetchError::RateLimited {
                url: entry.filename.clone(),
                retry_after: resp.retry_after,
            })
        }
        status => {
            return Err(FetchError::Status {
                url: entry.filename.clone(),
                status,
            })
        }
    }
    let text = extract_text(&resp.body)?;
    store.write_raw(&key, &resp.body)?;
    store.write_text(&key, &text)?;
    Ok(FilingDocument {
        entry: entry.clone(),
        raw_bytes_digest: sha256_hex(&resp.body),
        text,
        text_path,
        fetched_at: Utc::now(),
        from_cache: false,
    })
}

#[derive(Debug, Default)]
pub struct BatchOutcome {
    /// Successful documents, in input order.
    pub documents: Vec<FilingDocument>,
    pub failures: Vec<(IndexEntry, FetchError)>,
}

/// Fetch many entries with up to `workers` threads sharing one throttle.
pub fn fetch_all(
    entries: &[IndexEntry],
    fetcher: &dyn Fetcher,
    store: &ContentStore,
    throttle: &Throttle,
    workers: usize,
) -> BatchOutcome {
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<FilingDocument, FetchError>>>> =
        entries.iter().map(|_| Mutex::new(None)).collect();
    thread::scope(|s| {
        for _ in 0..workers.max(1).min(entries.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= entries.len() {
                    break;
                }
                let r = fetch_filing(&entries[i], fetcher, store, throttle);
                *slots[i].lock().unwrap() = Some(r);
            });
        }
    });
    let mut out = BatchOutcome::default();
    for (entry, slot) in entries.iter().zip(slots) {
        match slot.into_inner().unwrap().expect("every slot is filled") {
            Ok(d) => out.documents.push(d),
            Err(e) => out.failures.push((entry.clone(), e)),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;
    use std::sync::Mutex;

    struct FakeFetcher {
        pages: HashMap<String, FetchResponse>,
        calls: Mutex<Vec<Instant>>,
    }

    impl FakeFetcher {
        fn new(pages: &[(&str, u16, &[u8])]) -> Self {
            Self {
                pages: pages
                    .iter()
                    .map(|(k, s, b)| {
                        (
                            k.to_string(),
                            FetchResponse {
                                status: *s,
                                body: b.to_vec(),
                                retry_after: (*s == 429).then(|| Duration::from_secs(10)),
                            },
                        )
                    })
                    .collect(),
                calls: Mutex::new(Vec::new()),
            }
        }

        fn count(&self) -> usize {
            self.calls.lock().unwrap().len()
        }
    }

    impl Fetcher for FakeFetcher {
        fn get(&self, filename: &str) -> Result<FetchResponse, FetchError> {
            self.calls.lock().unwrap().push(Instant::now());
            Ok(self.pages.get(filename).cloned().unwrap_or(FetchResponse {
                status: 404,
                body: vec![],
                retry_after: None,
            }))
        }
    }

    fn entry(filename: &str) -> IndexEntry {
        IndexEntry {
            cik: 320193,
            company_name: "APPLE INC".into(),
            form_type: "10-K".into(),
            date_filed: NaiveDate::from_ymd_opt(2022, 10, 28).unwrap(),
            filename: filename.into(),
        }
    }

    #[test]
    fn warm_cache_makes_no_network_calls() {
        let dir = tempfile::tempdir().unwrap();
        let store = ContentStore::open(dir.path()).unwrap();
        let fake = FakeFetcher::new(&[("a.htm", 200, b"<p>Risk&amp;Co</p>")]);
        let throttle = Throttle::new(Duration::ZERO);

        let first = fetch_filing(&entry("a.htm"), &fake, &store, &throttle).unwrap();
        assert!(!first.from_cache);
        assert_eq!(first.text, "Risk&Co");
        assert_eq!(first.raw_bytes_digest, sha256_hex(b"<p>Risk&amp;Co</p>"));
        assert_eq!(fake.count(), 1);

        let second = fetch_filing(&entry("a.htm"), &fake, &store, &throttle).unwrap();
        assert!(second.from_cache);
        assert_eq!(fake.count(), 1);
        assert_eq!(second.raw_bytes_digest, first.raw_bytes_digest);
        assert_eq!(second.text, first.text);
        assert_eq!(ManifestRecord::from(&first), ManifestRecord::from(&second));
    }

    #[test]
    fn status_mapping() {
        let dir = tempfile::tempdir().unwrap();
        let store = ContentStore::open(dir.path()).unwrap();
        let fake = FakeFetcher::new(&[("slow", 429, b""), ("boom", 500, b"")]);
        let t = Throttle::new(Duration::ZERO);
        assert!(matches!(fetch_filing(&entry("missing"), &fake, &store, &t), Err(FetchError::NotFound(_))));
        match fetch_filing(&entry("slow"), &fake, &store, &t) {
            Err(FetchError::RateLimited { retry_after, .. }) => {
                assert_eq!(retry_after, Some(Duration::from_secs(10)))
            }
            other => panic!("expected RateLimited, got {other:?}"),
        }
        assert!(matches!(
            fetch_filing(&entry("boom"), &fake, &store, &t),
            Err(FetchError::Status { status: 500, .. })
        ));
        // Failed fetches must not leave cache entries behind.
        assert!(!store.contains(&cache_key("missing")));
    }

    #[test]
    fn throttle_spaces_requests() {
        let dir = tempfile::tempdir().unwrap();
        let store = ContentStore::open(dir.path()).unwrap();
        let fake = FakeFetcher::new(&[("a", 200, b"a"), ("b", 200, b"b")]);
        let t = Throttle::new(Duration::from_millis(500));
        fetch_filing(&entry("a"), &fake, &store, &t).unwrap();
        fetch_filing(&entry("b"), &fake, &store, &t).unwrap();
        let calls = fake.calls.lock().unwrap();
        assert!(calls[1].duration_since(calls[0]) >= Duration::from_millis(500));
    }

    #[test]
    fn parallel_fetch_respects_global_throttle_and_order() {
        let dir = tempfile::tempdir().unwrap();
        let store = ContentStore::open(dir.path()).unwrap();
        let names: Vec<String> = (0..6).map(|i| format!("f{i}")).collect();
        let pages: Vec<(&str, u16, &[u8])> = names.iter().map(|n| (n.as_str(), 200, n.as_bytes())).collect();
        let fake = FakeFetcher::new(&pages);
        let t = Throttle::new(Duration::from_millis(30));
        let entries: Vec<IndexEntry> = names.iter().map(|n| entry(n)).collect();
        let out = fetch_all(&entries, &fake, &store, &t, 3);
        assert!(out.failures.is_empty());
        let texts: Vec<&str> = out.documents.iter().map(|d| d.text.as_str()).collect();
        assert_eq!(texts, names.iter().map(String::as_str).collect::<Vec<_>>());
        let mut calls = fake.calls.lock().unwrap().clone();
        calls.sort();
        for w in calls.windows(2) {
            assert!(w[1].duration_since(w[0]) >= Duration::from_millis(29));
        }
    }

    #[test]
    fn local_fetcher_serves_files() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("edgar/data/1")).unwrap();
        fs::write(dir.path().join("edgar/data/1/x.htm"), "<p>hi</p>").unwrap();
        let f = LocalFetcher::new(dir.path());
        assert_eq!(f.get("edgar/data/1/x.htm").unwrap().status, 200);
        assert_eq!(f.get("edgar/data/1/y.htm").unwrap().status, 404);
    }
}
