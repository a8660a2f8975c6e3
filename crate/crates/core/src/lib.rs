//! Simulation and gradient-based training of fully memristive spiking
//! neural networks.
//!
//! - [`device`]: MIF neuron and alpha synapse dynamics, RK4 reference.
//! - [`autodiff`]: reverse-mode tape used for backpropagation through time.
//! - [`network`]: crossbar and MIF layers unrolled in time.
//! - [`data`]: IDX and EVT0 loaders, batching, a synthetic toy set.
//! - [`train`]: loss, Adam, training loop, evaluation, checkpoints, export.
//! - [`hwcost`]: area, power and latency estimates.
//! - [`cli`]: the `memprop` command line.

pub mod autodiff;
pub mod cli;
pub mod data;
pub mod device;
pub mod hwcost;
pub mod network;
pub mod train;
