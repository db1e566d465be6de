//! Built-in reactions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{BreakpointGenerator, PieceDoc, Reaction, ReactionDoc};
use crate::{Error, Result};

/// Named reaction families with their parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum Preset {
    /// `floor(1/s)^γ` on `(0, 1)` and `λ floor(s)^{p-1}` on `(1, ∞)`, with
    /// `f(1) = λ`.
    StaircaseSingular {
        gamma: f64,
        #[serde(default)]
        lambda: f64,
    },
    /// `floor(4s)/4 + σ` on `(0, 1)` and `0` beyond, with `f(1) = 0`.
    StaircaseNonsingular { sigma: f64 },
    /// `coef · s^exponent`; singular when the exponent lies in `(-1, 0)`.
    Power { coef: f64, exponent: f64 },
    /// `f ≡ value`.
    Constant { value: f64 },
    /// `height` on `(0, 1)`, `0` on `(1, ∞)` and `f(1) = 0`.
    PlateauStep { height: f64 },
}

fn num(x: f64) -> String {
    // Shortest round-trip representation, parenthesized for negative values.
    if x < 0.0 {
        format!("({x:?})")
    } else {
        format!("{x:?}")
    }
}

fn piece(lo: f64, hi: f64, formula: String, left: Option<f64>, right: Option<f64>) -> PieceDoc {
    PieceDoc { interval: [lo, hi], formula, left_limit: left, right_limit: right }
}

fn invalid(name: &'static str, reason: String) -> Error {
    Error::InvalidParameter { name, reason }
}

impl Preset {
    pub fn document(&self, p: f64) -> Result<ReactionDoc> {
        crate::error::check_p(p)?;
        let inf = f64::INFINITY;
        let mut point_values = BTreeMap::new();
        let doc = match *self {
            Preset::StaircaseSingular { gamma, lambda } => {
                if !(gamma > 0.0 && gamma < 1.0) {
                    return Err(invalid("gamma", format!("expected gamma in (0, 1), got {gamma}")));
                }
                if !(lambda >= 0.0 && lambda.is_finite()) {
                    return Err(invalid("lambda", format!("expected lambda >= 0, got {lambda}")));
                }
                point_values.insert("1".to_string(), lambda);
                let mut generators = vec![BreakpointGenerator::ReciprocalIntegers { cutoff: 1e-4 }];
                if lambda > 0.0 {
                    generators.push(BreakpointGenerator::Integers { upper: 1e4 });
                }
                let upper =
                    if lambda > 0.0 { format!("{} * floor(s)^{}", num(lambda), num(p - 1.0)) } else { "0".to_string() };
                ReactionDoc {
                    pieces: vec![
                        piece(0.0, 1.0, format!("floor(1/s)^{}", num(gamma)), None, Some(1.0)),
                        piece(1.0, inf, upper, Some(lambda), None),
                    ],
                    point_values,
                    gamma: Some(gamma),
                    breakpoint_generator: generators,
                }
            }
            Preset::StaircaseNonsingular { sigma } => {
                if !(sigma > 0.0 && sigma.is_finite()) {
                    return Err(invalid("sigma", format!("expected sigma > 0, got {sigma}")));
                }
                let mut pieces = Vec::new();
                for k in 0..4 {
                    let (lo, hi) = (k as f64 / 4.0, (k + 1) as f64 / 4.0);
                    let level = k as f64 / 4.0 + sigma;
                    pieces.push(piece(lo, hi, num(level), Some(level), Some(level)));
                    if k > 0 {
                        point_values.insert(num(lo), level);
                    }
                }
                pieces.push(piece(1.0, inf, "0".into(), Some(0.0), None));
                point_values.insert("1".to_string(), 0.0);
                ReactionDoc { pieces, point_values, gamma: None, breakpoint_generator: Vec::new() }
            }
            Preset::Power { coef, exponent } => {
                if !(coef > 0.0 && coef.is_finite()) {
                    return Err(invalid("coef", format!("expected coef > 0, got {coef}")));
                }
                if !(exponent > -1.0 && exponent.is_finite()) {
                    return Err(invalid("exponent", format!("expected exponent > -1, got {exponent}")));
                }
                let gamma = (exponent < 0.0).then_some(-exponent);
                ReactionDoc {
                    pieces: vec![piece(0.0, inf, format!("{} * s^{}", num(coef), num(exponent)), None, None)],
                    point_values,
                    gamma,
                    breakpoint_generator: Vec::new(),
                }
            }
            Preset::Constant { value } => {
                if !(value >= 0.0 && value.is_finite()) {
                    return Err(invalid("value", format!("expected value >= 0, got {value}")));
                }
                ReactionDoc {
                    pieces: vec![piece(0.0, inf, num(value), Some(value), None)],
                    point_values,
                    gamma: None,
                    breakpoint_generator: Vec::new(),
                }
            }
            Preset::PlateauStep { height } => {
                if !(height > 0.0 && height.is_finite()) {
                    return Err(invalid("height", format!("expected height > 0, got {height}")));
                }
                point_values.insert("1".to_string(), 0.0);
                ReactionDoc {
                    pieces: vec![
                        piece(0.0, 1.0, num(height), Some(height), Some(height)),
                        piece(1.0, inf, "0".into(), Some(0.0), None),
                    ],
                    point_values,
                    gamma: None,
                    breakpoint_generator: Vec::new(),
                }
            }
        };
        Ok(doc)
    }

    pub fn build(&self, p: f64) -> Result<Reaction> {
        Reaction::from_doc(self.document(p)?)
    }
}
