pub mod corpus;
pub mod eval;
pub mod features;
pub mod lexicons;
pub mod model;
pub mod pipeline;
pub mod preprocess;
pub mod providers;
pub mod sparse;
pub mod synthetic;
