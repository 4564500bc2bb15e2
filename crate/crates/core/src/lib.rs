// SPDX-License-Identifier: Apache-2.0

//! Multi-tenant systolic-array simulator.
//!
//! A workload of DNN graphs is lowered to GEMMs, scheduled onto column
//! partitions of a weight-stationary array, and costed either with closed
//! forms or by stepping a functional model of the array.

pub mod cli;
pub mod energy;
pub mod engine;
pub mod lowering;
pub mod pe_array;
pub mod scheduler;
pub mod timing;
pub mod workload;
