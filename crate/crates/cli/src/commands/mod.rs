pub mod gradcheck;
pub mod metrics;
pub mod synthesize;
pub mod train;
pub mod transform;
