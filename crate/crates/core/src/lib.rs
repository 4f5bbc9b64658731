//! Multi-modal neural code editing, from the tensor level up.
//!
//! The crate is `no_std` (with `alloc`): every routine is a pure function of
//! its inputs and a seed, which keeps training runs bit-reproducible.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod numerics;
pub mod edit;
pub mod model;
pub mod tokenizer;
pub mod pipeline;
