//! Track re-identification: a persisted index of classified best shots,
//! filtered search over it, and the HTTP service in front of it.
//!
//! Classification happens once at build time; queries are pure metadata
//! filters over an immutable snapshot.

mod index;
mod service;

pub use index::{
    build_index, load_index, save_index, Index, IndexMeta, Member, SearchEntry, SearchQuery, SearchResult,
    TrackDetail, TrackEntry, DEFAULT_LIMIT, INDEX_FORMAT,
};
pub use service::{parse_search_params, router, serve, IndexStore, ServiceConfig};
