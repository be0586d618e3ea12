//! Library side of the `netflow` command: network files, SVG output and the
//! subcommand implementations.

pub mod commands;
pub mod io;
pub mod svg;
