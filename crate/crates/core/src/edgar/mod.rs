//! EDGAR ingestion: quarterly full-index parsing, 10-K selection, cached
//! HTTP fetching and plain-text extraction.

mod fetch;
mod html;
mod index;

pub use fetch::{
    cache_key, fetch_all, sha256_hex, fetch_filing, BatchOutcome, ContentStore, FetchError, FetchResponse,
    Fetcher, FilingDocument, HttpFetcher, LocalFetcher, ManifestRecord, Throttle,
};
pub use html::{extract_text, ExtractError};
pub use index::{filter_10k, parse_index_file, parse_index_line, IndexEntry, IndexError, ParsedIndex};
