//! Navigational instruction generation: content selection over a formal
//! command language learned by inverse reinforcement learning, followed by
//! neural surface realization with attention and language-model re-ranking.

pub mod cas;
pub mod content_select;
pub mod corpus;
pub mod lm;
pub mod metrics;
pub mod neural;
pub mod realize;
pub mod pipeline;
pub mod planner;
pub mod worldmodel;
