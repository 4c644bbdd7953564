pub mod dataset;
pub mod enhance;
pub mod evalkit;
pub mod imgcore;
pub mod nnet;
pub mod pipeline;
pub mod platefind;
pub mod preprocess;
pub mod segment;
