pub mod cli;
pub mod dataset;
pub mod net;
pub mod preview;
pub mod recommend;
pub mod scrobble;
pub mod study;
pub mod synth;
