pub mod analysis;
pub mod data;
pub mod ensemble;
pub mod model;
pub mod ndmath;
pub mod training;
