//! Mobile edge generation simulator.
//!
//! A linear stand-in for a generative AI model is split across a user
//! equipment (UE) and edge servers (ES). Eleven message-flow protocols move
//! images, latent seeds, sketches and text over AWGN links; a discrete-event
//! kernel times every step, and the metrics module accounts bits and quality.

pub mod channel;
pub mod config;
pub mod content;
pub mod error;
pub mod metrics;
pub mod pipeline;
pub mod protocol;
pub mod report;
pub mod rng;
pub mod sim;

pub use channel::{ChannelSpec, EnergyMode, LinkChannels};
pub use config::{load_scenario, ScenarioConfig};
pub use content::{ContentGrid, GenRequest, LatentSeed, ProtocolId, SketchGrid, TextPrompt};
pub use error::{MegError, Result};
pub use metrics::{expected_overhead, OverheadRecord, QualityRecord};
pub use pipeline::{Pipeline, PipelineParams};
pub use protocol::{build_plan, execute_plan, ExecEnv, ProtocolPlan, Transcript};
pub use sim::{run_scenario, RunReport};
