//! End-to-end simulation of discrete multi-tone (DMT) transmission over
//! intensity-modulated, directly detected optical links.

pub mod channel;
pub mod constellation;
pub mod loading;
pub mod metrics;
pub mod modem;
pub mod signal;
