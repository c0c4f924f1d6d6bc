//! Grids, transforms, multipliers, the diagonalizer `V` and norms.

mod diag;
mod fft;
mod field;
mod grid;
mod lp;
mod norm;
mod sum;
mod symbol;

pub use diag::{apply_v, v_forward, v_inverse, VInverse};
pub use fft::Direction;
pub use field::{Field, Space};
pub use grid::Grid;
pub use lp::{littlewood_paley, LpPart};
pub use norm::{energy_metric, hdot1, lp_norm, norm, EnergyDistance, NormKind};
pub use sum::pairwise_sum;
pub use symbol::{
    apply_indexed, apply_k2, apply_multiplier, apply_table, divergence, gradient, lp_bump,
    partial, RadialSymbol, SymbolKind,
};
