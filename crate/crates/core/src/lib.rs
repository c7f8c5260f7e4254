//! Atomic detection statistics of the one-atom maser.

pub mod banded;
pub mod config;
pub mod error;
pub mod fano;
pub mod fock;
pub mod numerics;
pub mod ode;
pub mod propagator;
pub mod quadrature;
pub mod statistics;
pub mod steady;
pub mod sweep;
pub mod trajectory;
pub mod verify;

pub use error::{MaserError, Result};
pub use fock::{Channel, ChannelSplit, MaserParams, PhotonDistribution, TimeUnit};
pub use numerics::{Method, Numerics};
