pub mod error;
pub mod io;
pub mod morpho;
pub mod raster;
pub mod rules;
pub mod assess;
pub mod synth;
pub mod config;
pub mod pipeline;
