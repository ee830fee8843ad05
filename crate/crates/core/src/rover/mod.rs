//! The client tier: a rover that discovers, binds and invokes through the
//! bus, plus a runner for scripted missions.

pub mod client;
pub mod mission;

pub use client::{Invocation, Policy, RoverClient};
pub use mission::{parse_param, render, run as run_mission, Mission, MissionReport, ParseError, StepReport};
