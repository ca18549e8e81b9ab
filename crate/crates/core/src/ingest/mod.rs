//! Acquiring search-volume series and assembling them into aligned panels.

mod fetch;
mod mock;
mod panel;
mod raw;
mod vocabulary;

pub use fetch::{cache_key, fetch_all, fetch_series, EndpointConfig, DEFAULT_GEO, ENDPOINT_ENV};
pub use mock::MockTrendsServer;
pub use panel::{assemble_panel, TermPanel};
pub use raw::{parse_raw_series, parse_time_series, time_series_to_csv, RawSeries};
pub use vocabulary::{slug, term_list_hash, Category, Variant, Vocabulary, VocabularyEntry};
