use serde::{Deserialize, Serialize};

use super::field::Field;
use super::symbol::{apply_multiplier, RadialSymbol};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LpPart {
    /// `P_{<=N}`
    Leq,
    /// `P_{>N} = Id - P_{<=N}`
    Gt,
}

/// Littlewood-Paley projection at scale `n` (any positive real, dyadic in use).
pub fn littlewood_paley(f: &Field, n: f64, part: LpPart) -> Result<Field> {
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::InvalidParameter(format!("LP scale must be positive, got {n}")));
    }
    let sym = match part {
        LpPart::Leq => RadialSymbol::lp_leq(n),
        LpPart::Gt => RadialSymbol::lp_gt(n),
    };
    apply_multiplier(&sym, f)
}
