pub mod cells;
pub mod grad;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod numkit;
pub mod optim;
pub mod params;
pub mod tasks;
