//! Limit-order-book market simulator with an execution agent, background
//! agents and a trainable world agent.
//!
//! The crate measures how far a simulated market is from a real one through
//! the distribution of interactive feedbacks (causal effects of the
//! execution agent's market orders, or its episode reward), compared with
//! MMD, energy distance or 1-D EMD. [`trainer`] descends that distance with
//! a Monte-Carlo policy gradient to calibrate the world agent.
//!
//! Every random draw comes from a ChaCha stream derived from one master
//! seed (see [`seed`]), so rollouts, feedbacks and training are
//! reproducible bit for bit.

pub mod agents;
pub mod config;
pub mod csvio;
pub mod env;
pub mod experiment;
pub mod feedback;
pub mod lob;
pub mod metric;
pub mod report;
pub mod seed;
pub mod stats;
pub mod trainer;
