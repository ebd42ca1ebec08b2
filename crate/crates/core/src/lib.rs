pub mod cli;
pub mod distance;
pub mod evaluate;
pub mod geo;
pub mod hierarchy;
pub mod ingest;
pub mod kmedoids;
pub mod matrix;
pub mod numeric;
pub mod rng;
pub mod synth;
