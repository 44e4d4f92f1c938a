//! Steady states, Lyapunov certificates, admissible feedback gains and
//! time-domain simulation for Saint-Venant flows on tree-shaped channel
//! networks.

pub mod certificate;
pub mod characteristics;
pub mod cli;
pub mod config;
pub mod gains;
pub mod io;
pub mod ode;
pub mod quadrature;
pub mod sim;
pub mod steady;
pub mod topology;
pub mod weights;
