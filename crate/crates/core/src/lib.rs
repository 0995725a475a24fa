pub mod calendar;
pub mod classifiers;
pub mod data;
pub mod features;
pub mod metrics;
pub mod strategy;
pub mod synth;
pub mod prequential;
pub mod stats;
pub mod config;
pub mod runner;
pub mod timeline;
