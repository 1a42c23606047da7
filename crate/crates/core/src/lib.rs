pub mod action;
pub mod browser;
pub mod gateway;
pub mod grounding;
pub mod metrics;
pub mod prompts;
pub mod reply;
pub mod roadmap;
pub mod session;
pub mod agent;
pub mod checklist;
pub mod synthesis;
pub mod report;
pub mod config;
pub mod pipeline;
pub mod audit;
