pub mod baseline;
pub mod cli;
pub mod ingest;
pub mod model;
pub mod pipeline;
pub mod preprocess;
pub mod probes;
pub mod validate;
