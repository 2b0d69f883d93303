pub mod bench;
pub mod metrics;
pub mod phantom;
pub mod project;
pub mod selftest;
pub mod synthesize;
