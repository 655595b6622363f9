pub mod design;
pub mod error;
pub mod family;
pub mod gram;
pub mod hat;
pub mod iwls;
pub mod kernel;
pub mod linalg;
pub mod model;
pub mod penalty;
pub mod bench;
pub mod cli;
pub mod cv;
pub mod init;
pub mod io;
pub mod marginal;
pub mod normal;
pub mod optim;
pub mod perf;
pub mod quadrature;
pub mod tune;
pub mod vb;
