pub mod dataset;
pub mod eval;
pub mod experiment;
pub mod model;
pub mod ndgrad;
pub mod stgraph;
pub mod trainer;
