//! Co-simulation of distribution grids with cell-based voltage control.

pub mod bus;
pub mod cells;
pub mod clients;
pub mod experiment;
pub mod grid;
pub mod numfmt;
pub mod plot;
pub mod powerflow;
pub mod ppvc;
pub mod sectioned;
