//! Piecewise-continuous reactions `f: (0, ∞) → [0, ∞)`.
//!
//! A [`Reaction`] is an ordered list of pieces on open intervals, each
//! carrying a continuous formula, together with explicit values at the
//! interior endpoints and optional generators for countable breakpoint
//! families (e.g. `{1/k}` accumulating at zero). Because every piece is
//! continuous, the essential envelopes reduce to one-sided limits and are
//! computed exactly.
//!
//! A discontinuity set of positive measure cannot be described: the only
//! ways to introduce breakpoints are finitely many piece endpoints and the
//! countable [`BreakpointGenerator`] families.
//!
//! ```compile_fail
//! use plap_core::reaction::BreakpointGenerator;
//! // No variant describes a set of positive measure.
//! let dense = BreakpointGenerator::Interval { a: 0.0, b: 1.0 };
//! ```

mod expr;
mod hypotheses;
mod mollify;
mod presets;

use std::collections::BTreeMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use expr::Formula;
pub use hypotheses::{
    check_hypotheses, growth_constants, DeltaWitness, GammaWitness, GrowthConstants, HypothesisReport,
    SublinearWitness, DEFAULT_SAMPLES_PER_DECADE,
};
pub(crate) use mollify::window_unchecked;
pub use mollify::{mollifier_rho, mollify, primitive_g, truncate, window_eval, window_extrema, WindowEval};
pub use presets::Preset;

use crate::quadrature::gauss6;
use crate::{Error, Result};

/// Relative offset used to evaluate one-sided limits at generated breakpoints.
const NUDGE: f64 = 1e-10;

/// Relative tolerance for recognising an argument as a breakpoint.
const MATCH: f64 = 1e-14;

/// Countable breakpoint families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BreakpointGenerator {
    /// `{1/k : k ≥ 1, 1/k ≥ cutoff}`; below the cutoff the formula is used as is.
    ReciprocalIntegers {
        #[serde(default = "default_cutoff")]
        cutoff: f64,
    },
    /// `{k : 1 ≤ k ≤ upper}`.
    Integers { upper: f64 },
}

fn default_cutoff() -> f64 {
    1e-4
}

impl BreakpointGenerator {
    fn validate(&self) -> Result<()> {
        match *self {
            BreakpointGenerator::ReciprocalIntegers { cutoff } if !(cutoff > 0.0 && cutoff < 1.0) => {
                Err(Error::Reaction(format!("reciprocal cutoff must lie in (0, 1), got {cutoff}")))
            }
            BreakpointGenerator::Integers { upper } if !(1.0..=1e7).contains(&upper) => {
                Err(Error::Reaction(format!("integer breakpoint bound must lie in [1, 1e7], got {upper}")))
            }
            _ => Ok(()),
        }
    }

    fn points(&self) -> Vec<f64> {
        match *self {
            BreakpointGenerator::ReciprocalIntegers { cutoff } => {
                let kmax = (1.0 / cutoff).floor() as u64;
                (1..=kmax).map(|k| 1.0 / k as f64).collect()
            }
            BreakpointGenerator::Integers { upper } => (1..=upper.floor() as u64).map(|k| k as f64).collect(),
        }
    }
}

/// One continuous piece of `f` on the open interval `(lo, hi)`.
#[derive(Debug, Clone)]
pub struct Piece {
    pub lo: f64,
    pub hi: f64,
    pub formula: Formula,
    /// Limit as `s → lo⁺`; evaluated from the formula when absent.
    pub left_limit: Option<f64>,
    /// Limit as `s → hi⁻`; evaluated from the formula when absent.
    pub right_limit: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Breakpoint {
    s: f64,
    lower: f64,
    upper: f64,
    value: f64,
}

/// JSON form of a reaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReactionDoc {
    pub pieces: Vec<PieceDoc>,
    /// Values at interior piece endpoints, keyed by the endpoint written as a number.
    #[serde(default)]
    pub point_values: BTreeMap<String, f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default, with = "generators_serde")]
    pub breakpoint_generator: Vec<BreakpointGenerator>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PieceDoc {
    #[serde(with = "interval_serde")]
    pub interval: [f64; 2],
    pub formula: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left_limit: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right_limit: Option<f64>,
}

mod interval_serde {
    use super::*;

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Bound {
        Num(f64),
        Text(String),
        Null,
    }

    pub fn serialize<S: Serializer>(v: &[f64; 2], ser: S) -> std::result::Result<S::Ok, S::Error> {
        let conv = |x: f64| if x.is_infinite() { Bound::Text("inf".into()) } else { Bound::Num(x) };
        [conv(v[0]), conv(v[1])].serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> std::result::Result<[f64; 2], D::Error> {
        let raw = <[Bound; 2]>::deserialize(de)?;
        let conv = |b: &Bound| match b {
            Bound::Num(x) => Ok(*x),
            Bound::Null => Ok(f64::INFINITY),
            Bound::Text(t) if matches!(t.as_str(), "inf" | "infinity" | "Infinity") => Ok(f64::INFINITY),
            Bound::Text(t) => Err(serde::de::Error::custom(format!("bad interval bound `{t}`"))),
        };
        Ok([conv(&raw[0])?, conv(&raw[1])?])
    }
}

mod generators_serde {
    use super::*;

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(BreakpointGenerator),
        Many(Vec<BreakpointGenerator>),
    }

    pub fn serialize<S: Serializer>(v: &[BreakpointGenerator], ser: S) -> std::result::Result<S::Ok, S::Error> {
        match v {
            [] => ser.serialize_none(),
            [one] => one.serialize(ser),
            many => many.serialize(ser),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> std::result::Result<Vec<BreakpointGenerator>, D::Error> {
        Ok(match Option::<OneOrMany>::deserialize(de)? {
            None => Vec::new(),
            Some(OneOrMany::One(g)) => vec![g],
            Some(OneOrMany::Many(v)) => v,
        })
    }
}

/// Cumulative integral of `f` on a grid containing every breakpoint.
#[derive(Debug, Clone)]
struct PrimitiveTable {
    nodes: Vec<f64>,
    cumulative: Vec<f64>,
}

/// A validated piecewise-continuous reaction.
#[derive(Debug, Clone)]
pub struct Reaction {
    doc: ReactionDoc,
    pieces: Vec<Piece>,
    gamma: Option<f64>,
    generators: Vec<BreakpointGenerator>,
    breakpoints: Vec<Breakpoint>,
    positions: Vec<f64>,
    primitive: PrimitiveTable,
}

fn err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Reaction(msg.into()))
}

fn check_positive_arg(s: f64) -> Result<()> {
    if s > 0.0 && !s.is_nan() {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name: "s", reason: format!("the reaction is defined for s > 0 only, got {s}") })
    }
}

impl Reaction {
    pub fn from_json(text: &str) -> Result<Reaction> {
        let doc: ReactionDoc = serde_json::from_str(text)?;
        Reaction::from_doc(doc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.doc).expect("reaction documents always serialize")
    }

    pub fn doc(&self) -> &ReactionDoc {
        &self.doc
    }

    pub fn from_doc(doc: ReactionDoc) -> Result<Reaction> {
        if doc.pieces.is_empty() {
            return err("at least one piece is required");
        }
        let mut pieces = Vec::with_capacity(doc.pieces.len());
        for pd in &doc.pieces {
            let [lo, hi] = pd.interval;
            if lo.is_nan() || hi.is_nan() || !(lo < hi) {
                return err(format!("piece interval ({lo}, {hi}) is empty"));
            }
            for (name, lim) in [("left_limit", pd.left_limit), ("right_limit", pd.right_limit)] {
                if let Some(v) = lim {
                    if !(v.is_finite() && v >= 0.0) {
                        return err(format!("{name} {v} of piece ({lo}, {hi}) must be finite and nonnegative"));
                    }
                }
            }
            pieces.push(Piece {
                lo,
                hi,
                formula: Formula::parse(&pd.formula)?,
                left_limit: pd.left_limit,
                right_limit: pd.right_limit,
            });
        }
        if pieces[0].lo != 0.0 {
            return err(format!("pieces must start at 0, first starts at {}", pieces[0].lo));
        }
        if pieces.last().unwrap().hi != f64::INFINITY {
            return err("pieces must extend to infinity");
        }
        for w in pieces.windows(2) {
            if w[0].hi != w[1].lo {
                return err(format!("gap or overlap between pieces at {} / {}", w[0].hi, w[1].lo));
            }
        }
        if let Some(g) = doc.gamma {
            if !(g > 0.0 && g < 1.0) {
                return err(format!("gamma must lie in (0, 1), got {g}"));
            }
        }
        for g in &doc.breakpoint_generator {
            g.validate()?;
        }

        let mut declared = Vec::new();
        let mut point_values: Vec<(f64, f64)> = Vec::new();
        for (key, &v) in &doc.point_values {
            let s: f64 =
                key.trim().parse().map_err(|_| Error::Reaction(format!("point value key `{key}` is not a number")))?;
            if !(v.is_finite() && v >= 0.0) {
                return err(format!("point value f({s}) = {v} must be finite and nonnegative"));
            }
            point_values.push((s, v));
        }

        // Every piece must be nonnegative and well defined on a sample net.
        for pc in &pieces {
            for s in sample_piece(pc.lo, pc.hi) {
                let v = pc.formula.eval(s);
                if v.is_nan() || v < 0.0 {
                    return err(format!("formula `{}` gives {v} at s = {s}", pc.formula.source()));
                }
            }
        }

        // Declared endpoints.
        for i in 0..pieces.len() - 1 {
            let s = pieces[i].hi;
            let lower_side = pieces[i].right_limit.unwrap_or_else(|| pieces[i].formula.eval(s * (1.0 - NUDGE)));
            let upper_side = pieces[i + 1].left_limit.unwrap_or_else(|| pieces[i + 1].formula.eval(s * (1.0 + NUDGE)));
            let Some(&(_, value)) = point_values.iter().find(|(t, _)| matches(*t, s)) else {
                return err(format!("missing point value at breakpoint {s}"));
            };
            if !(lower_side >= 0.0 && upper_side >= 0.0) {
                return err(format!("one-sided limits at {s} must be nonnegative"));
            }
            declared.push(Breakpoint {
                s,
                lower: lower_side.min(upper_side),
                upper: lower_side.max(upper_side),
                value,
            });
        }
        for &(s, _) in &point_values {
            if !declared.iter().any(|b| matches(b.s, s)) {
                return err(format!("point value at {s} is not a piece endpoint"));
            }
        }

        // Generated breakpoints strictly inside pieces.
        // Declared endpoints take precedence; duplicates among generated
        // points are removed by the sort-and-dedup below.
        let n_declared = declared.len();
        let mut breakpoints = declared;
        for g in &doc.breakpoint_generator {
            for s in g.points() {
                if breakpoints[..n_declared].iter().any(|b| matches(b.s, s)) {
                    continue;
                }
                let pc = &pieces[piece_index(&pieces, s)];
                let left = pc.formula.eval(s * (1.0 - NUDGE));
                let right = pc.formula.eval(s * (1.0 + NUDGE));
                let value = pc.formula.eval(s);
                if !(left >= 0.0 && right >= 0.0 && value >= 0.0) {
                    return err(format!("formula is negative or undefined near breakpoint {s}"));
                }
                breakpoints.push(Breakpoint { s, lower: left.min(right), upper: left.max(right), value });
            }
        }
        breakpoints.sort_by(|a, b| a.s.total_cmp(&b.s));
        breakpoints.dedup_by(|a, b| matches(a.s, b.s));
        let positions = breakpoints.iter().map(|b| b.s).collect();

        let mut r = Reaction {
            gamma: doc.gamma,
            generators: doc.breakpoint_generator.clone(),
            doc,
            pieces,
            breakpoints,
            positions,
            primitive: PrimitiveTable { nodes: Vec::new(), cumulative: Vec::new() },
        };
        r.primitive = r.build_primitive();
        Ok(r)
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn gamma(&self) -> Option<f64> {
        self.gamma
    }

    pub fn generators(&self) -> &[BreakpointGenerator] {
        &self.generators
    }

    /// All breakpoints (declared and generated), increasing.
    pub fn breakpoints(&self) -> &[f64] {
        &self.positions
    }

    /// Largest cutoff below which generated breakpoints accumulate undeclared.
    pub fn accumulation_cutoff(&self) -> Option<f64> {
        self.generators
            .iter()
            .filter_map(|g| match *g {
                BreakpointGenerator::ReciprocalIntegers { cutoff } => Some(cutoff),
                _ => None,
            })
            .reduce(f64::max)
    }

    fn breakpoint_at(&self, s: f64) -> Option<&Breakpoint> {
        let i = self.positions.partition_point(|&b| b < s * (1.0 - MATCH));
        self.breakpoints.get(i).filter(|b| matches(b.s, s))
    }

    /// `f(s)` for `s > 0`.
    pub fn eval_f(&self, s: f64) -> Result<f64> {
        check_positive_arg(s)?;
        Ok(self.value(s))
    }

    /// Unchecked evaluation; `s` must be positive.
    #[inline]
    pub(crate) fn value(&self, s: f64) -> f64 {
        if let Some(b) = self.breakpoint_at(s) {
            return b.value;
        }
        self.formula_value(s)
    }

    /// Piece formula at a point known not to be a declared endpoint.
    #[inline]
    pub(crate) fn formula_value(&self, s: f64) -> f64 {
        self.pieces[piece_index(&self.pieces, s)].formula.eval(s)
    }

    /// Essential lower and upper envelopes `(f̲(s), f̄(s))`.
    ///
    /// Point values never enter: at a breakpoint the envelopes are the min and
    /// max of the one-sided limits.
    pub fn eval_envelopes(&self, s: f64) -> Result<(f64, f64)> {
        check_positive_arg(s)?;
        Ok(self.envelopes(s))
    }

    #[inline]
    pub(crate) fn envelopes(&self, s: f64) -> (f64, f64) {
        match self.breakpoint_at(s) {
            Some(b) => (b.lower, b.upper),
            None => {
                let v = self.formula_value(s);
                (v, v)
            }
        }
    }

    /// Breakpoints where `f` is genuinely discontinuous (the set `D_f` above
    /// the accumulation cutoff).
    pub fn discontinuities(&self) -> Vec<f64> {
        self.breakpoints.iter().filter(|b| b.lower != b.upper || b.value != b.lower).map(|b| b.s).collect()
    }

    /// Distance from `s` to the discontinuity set; below an accumulation
    /// cutoff the local spacing `s²` of the `{1/k}` family is used.
    pub fn distance_to_discontinuity(&self, s: f64) -> f64 {
        let mut best = f64::INFINITY;
        if let Some(c) = self.accumulation_cutoff() {
            if s <= c {
                best = s * s;
            }
        }
        let i = self.positions.partition_point(|&b| b < s);
        for j in [i.wrapping_sub(1), i, i + 1] {
            if let Some(b) = self.breakpoints.get(j) {
                if b.lower != b.upper || b.value != b.lower {
                    best = best.min((b.s - s).abs());
                }
            }
        }
        if best.is_infinite() {
            // Fall back to a scan when the neighbours are removable breakpoints.
            for b in &self.breakpoints {
                if b.lower != b.upper || b.value != b.lower {
                    best = best.min((b.s - s).abs());
                }
            }
        }
        best
    }

    /// Breakpoint positions inside the open interval `(a, b)`.
    pub(crate) fn breakpoints_between(&self, a: f64, b: f64) -> &[f64] {
        let lo = self.positions.partition_point(|&t| t <= a);
        let hi = self.positions.partition_point(|&t| t < b);
        &self.positions[lo..hi.max(lo)]
    }

    fn build_primitive(&self) -> PrimitiveTable {
        let mut nodes: Vec<f64> = Vec::new();
        let per_decade = 32;
        for k in 0..=(18 * per_decade) {
            nodes.push(1e-12 * 10f64.powf(k as f64 / per_decade as f64));
        }
        nodes.extend(self.positions.iter().copied());
        nodes.sort_by(f64::total_cmp);
        nodes.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * b.abs());
        let mut cumulative = Vec::with_capacity(nodes.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for w in nodes.windows(2) {
            acc += gauss6().integrate(w[0], w[1], |t| self.formula_value(t));
            cumulative.push(acc);
        }
        PrimitiveTable { nodes, cumulative }
    }

    /// `∫_{t0}^{s} f` for some fixed reference `t0`; differences give exact
    /// integrals between any two positive points.
    pub(crate) fn primitive(&self, s: f64) -> f64 {
        let t = &self.primitive;
        let first = t.nodes[0];
        let last = *t.nodes.last().unwrap();
        if s <= first {
            return -gauss6().integrate(s, first, |x| self.formula_value(x));
        }
        if s >= last {
            let mut acc = *t.cumulative.last().unwrap();
            let mut a = last;
            while a < s {
                let b = (2.0 * a).min(s);
                acc += gauss6().integrate(a, b, |x| self.formula_value(x));
                a = b;
            }
            return acc;
        }
        let i = t.nodes.partition_point(|&x| x <= s) - 1;
        t.cumulative[i] + gauss6().integrate(t.nodes[i], s, |x| self.formula_value(x))
    }

    /// `∫_a^b f` for `0 < a ≤ b`.
    pub fn integral(&self, a: f64, b: f64) -> Result<f64> {
        check_positive_arg(a)?;
        check_positive_arg(b)?;
        Ok(self.primitive(b) - self.primitive(a))
    }
}

#[inline]
fn matches(a: f64, b: f64) -> bool {
    (a - b).abs() <= MATCH * a.abs().max(b.abs())
}

#[inline]
fn piece_index(pieces: &[Piece], s: f64) -> usize {
    pieces.partition_point(|p| p.hi <= s).min(pieces.len() - 1)
}

fn sample_piece(lo: f64, hi: f64) -> Vec<f64> {
    let mut out: Vec<f64> = (-8..=60).map(|k| 10f64.powf(k as f64 / 10.0)).filter(|&s| s > lo && s < hi).collect();
    if hi.is_finite() {
        out.extend((0..64).map(|k| lo + (k as f64 + 0.5) / 64.0 * (hi - lo)));
    }
    out
}
