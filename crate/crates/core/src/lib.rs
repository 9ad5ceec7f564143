//! Decentralized learning-and-employment records.
//!
//! Institutions issue signed transcript credentials, a simulated enclave
//! derives attested skill credentials from transcripts and syllabi, holders
//! disclose selectively, and verifiers match on attested skills only.

pub mod canon;
pub mod credential;
pub mod clock;
pub mod enclave;
pub mod fixtures;
pub mod fsutil;
pub mod identity;
pub mod matching;
pub mod protocol;
pub mod skills;
