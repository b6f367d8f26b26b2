use std::cmp::Ordering;
use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// One interval with open or closed endpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Piece {
    pub lo: f64,
    pub lo_closed: bool,
    pub hi: f64,
    pub hi_closed: bool,
}

impl Piece {
    pub fn new(lo: f64, lo_closed: bool, hi: f64, hi_closed: bool) -> Self {
        Self { lo, lo_closed, hi, hi_closed }
    }

    pub fn open(lo: f64, hi: f64) -> Self {
        Self::new(lo, false, hi, false)
    }

    pub fn closed(lo: f64, hi: f64) -> Self {
        Self::new(lo, true, hi, true)
    }

    fn is_empty(&self) -> bool {
        !(self.lo < self.hi || (self.lo == self.hi && self.lo_closed && self.hi_closed))
    }

    pub fn contains(&self, x: f64) -> bool {
        let above = if self.lo_closed { x >= self.lo } else { x > self.lo };
        let below = if self.hi_closed { x <= self.hi } else { x < self.hi };
        above && below
    }

    fn intersect(&self, other: &Piece) -> Piece {
        let (lo, lo_closed) = match self.lo.partial_cmp(&other.lo) {
            Some(Ordering::Greater) => (self.lo, self.lo_closed),
            Some(Ordering::Less) => (other.lo, other.lo_closed),
            _ => (self.lo, self.lo_closed && other.lo_closed),
        };
        let (hi, hi_closed) = match self.hi.partial_cmp(&other.hi) {
            Some(Ordering::Less) => (self.hi, self.hi_closed),
            Some(Ordering::Greater) => (other.hi, other.hi_closed),
            _ => (self.hi, self.hi_closed && other.hi_closed),
        };
        Piece { lo, lo_closed, hi, hi_closed }
    }

    fn flags(&self) -> &'static str {
        match (self.lo_closed, self.hi_closed) {
            (false, false) => "oo",
            (false, true) => "oc",
            (true, false) => "co",
            (true, true) => "cc",
        }
    }
}

impl fmt::Display for Piece {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let l = if self.lo_closed { '[' } else { '(' };
        let r = if self.hi_closed { ']' } else { ')' };
        write!(f, "{l}{}, {}{r}", self.lo, self.hi)
    }
}

/// A finite union of subintervals of `[0, 1]`, kept sorted, disjoint and
/// non-adjacent.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IntervalSet {
    pieces: Vec<Piece>,
}

impl IntervalSet {
    pub fn empty() -> Self {
        Self::default()
    }

    /// The open unit interval `(0, 1)`.
    pub fn unit() -> Self {
        Self { pieces: vec![Piece::open(0.0, 1.0)] }
    }

    pub fn open(lo: f64, hi: f64) -> Self {
        Self::from_pieces([Piece::open(lo, hi)])
    }

    /// Normalizes arbitrary pieces: clips to `(0, 1)`, drops empties, merges
    /// overlapping or touching pieces.
    pub fn from_pieces(pieces: impl IntoIterator<Item = Piece>) -> Self {
        let clip = Piece::open(0.0, 1.0);
        let mut ps: Vec<Piece> = pieces
            .into_iter()
            .filter(|p| !p.lo.is_nan() && !p.hi.is_nan())
            .map(|p| p.intersect(&clip))
            .filter(|p| !p.is_empty())
            .collect();
        ps.sort_by(|a, b| a.lo.total_cmp(&b.lo).then(b.lo_closed.cmp(&a.lo_closed)));
        let mut out: Vec<Piece> = Vec::with_capacity(ps.len());
        for p in ps {
            if let Some(cur) = out.last_mut() {
                let joins = p.lo < cur.hi || (p.lo == cur.hi && (cur.hi_closed || p.lo_closed));
                if joins {
                    if p.hi > cur.hi {
                        cur.hi = p.hi;
                        cur.hi_closed = p.hi_closed;
                    } else if p.hi == cur.hi {
                        cur.hi_closed |= p.hi_closed;
                    }
                    continue;
                }
            }
            out.push(p);
        }
        Self { pieces: out }
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn contains(&self, x: f64) -> bool {
        self.pieces.iter().any(|p| p.contains(x))
    }

    /// Supremum, or `None` for the empty set.
    pub fn sup(&self) -> Option<f64> {
        self.pieces.last().map(|p| p.hi)
    }

    /// Infimum, or `None` for the empty set.
    pub fn inf(&self) -> Option<f64> {
        self.pieces.first().map(|p| p.lo)
    }

    /// Total length of the set.
    pub fn measure(&self) -> f64 {
        self.pieces.iter().map(|p| p.hi - p.lo).sum()
    }

    pub fn union(&self, other: &IntervalSet) -> IntervalSet {
        Self::from_pieces(self.pieces.iter().chain(&other.pieces).copied())
    }

    pub fn intersect(&self, other: &IntervalSet) -> IntervalSet {
        let mut out = Vec::new();
        for a in &self.pieces {
            for b in &other.pieces {
                let p = a.intersect(b);
                if !p.is_empty() {
                    out.push(p);
                }
            }
        }
        Self::from_pieces(out)
    }

    /// Complement relative to the open unit interval `(0, 1)`.
    pub fn complement(&self) -> IntervalSet {
        let mut gaps = Vec::with_capacity(self.pieces.len() + 1);
        let mut lo = 0.0;
        let mut lo_closed = false;
        for p in &self.pieces {
            gaps.push(Piece::new(lo, lo_closed, p.lo, !p.lo_closed));
            lo = p.hi;
            lo_closed = !p.hi_closed;
        }
        gaps.push(Piece::new(lo, lo_closed, 1.0, false));
        Self::from_pieces(gaps)
    }
}

pub fn is_union(a: &IntervalSet, b: &IntervalSet) -> IntervalSet {
    a.union(b)
}

pub fn is_intersect(a: &IntervalSet, b: &IntervalSet) -> IntervalSet {
    a.intersect(b)
}

pub fn is_complement(a: &IntervalSet) -> IntervalSet {
    a.complement()
}

impl fmt::Display for IntervalSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.pieces.is_empty() {
            return f.write_str("∅");
        }
        for (i, p) in self.pieces.iter().enumerate() {
            if i > 0 {
                f.write_str(" ∪ ")?;
            }
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

/// Serialized as `[[lo, hi, "oo|oc|co|cc"], ...]`.
impl Serialize for IntervalSet {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let triples: Vec<(f64, f64, &str)> = self.pieces.iter().map(|p| (p.lo, p.hi, p.flags())).collect();
        triples.serialize(s)
    }
}

impl<'de> Deserialize<'de> for IntervalSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let triples: Vec<(f64, f64, String)> = Vec::deserialize(d)?;
        let pieces = triples
            .into_iter()
            .map(|(lo, hi, flags)| {
                let (lc, hc) = match flags.as_str() {
                    "oo" => (false, false),
                    "oc" => (false, true),
                    "co" => (true, false),
                    "cc" => (true, true),
                    other => return Err(D::Error::custom(format!("bad endpoint flags `{other}`"))),
                };
                Ok(Piece::new(lo, lc, hi, hc))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::from_pieces(pieces))
    }
}
