pub mod evaluate;
pub mod preprocess;
pub mod report;
pub mod synth;
