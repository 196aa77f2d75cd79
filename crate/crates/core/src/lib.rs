//! Transaction-level model of a tensor memory engine.
//!
//! * [`pattern`]: access-pattern specifications and view compilers.
//! * [`engine`]: the engine pipeline (configuration port, trapper, reorder
//!   buffer, preparator, descriptor generator, fetch unit).
//! * [`memsys`]: burst-granular DRAM, a set-associative last-level cache
//!   with a stream prefetcher, allocation tracking and metrics.
//! * [`bench`]: workloads in baseline and engine-assisted variants, checked
//!   against brute-force oracles.

pub mod bench;
pub mod engine;
pub mod memsys;
pub mod par;
pub mod pattern;
