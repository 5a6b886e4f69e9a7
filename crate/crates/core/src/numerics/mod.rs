//! Differentiable arrays, neural building blocks, optimizer and seeded RNG.

pub mod adam;
pub mod array;
pub mod nn;
pub mod params;
pub mod rng;
pub mod tape;
pub mod testing;

pub use adam::{Adam, AdamConfig};
pub use array::DArray;
pub use nn::{Activation, Gru, GruStack, LayerSpec, Mlp};
pub use params::ParamStore;
pub use rng::RngStream;
pub use tape::{Graph, Var};
