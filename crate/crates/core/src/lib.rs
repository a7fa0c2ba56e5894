pub mod channel;
pub mod circuit;
pub mod error;
pub mod estimator;
pub mod experiment;
pub mod linalg;
pub mod metrics;
pub mod noise;
pub mod sdp;
pub mod simulator;
