pub mod analyze;
pub mod baseline;
pub mod video;
