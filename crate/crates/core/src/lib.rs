//! Toolchain for natural-language-guided code prediction: notebook corpus
//! ingestion, byte-level BPE, docstring mapping and comment injection,
//! benchmark mining and curation, beam-search prediction over a pluggable
//! language model, and code-similarity metrics.

pub mod benchmine;
pub mod docmap;
pub mod fsutil;
pub mod ingest;
pub mod inject;
pub mod metrics;
pub mod pipeline;
pub mod predictor;
pub mod pyast;
pub mod script;
pub mod tokenizer;
