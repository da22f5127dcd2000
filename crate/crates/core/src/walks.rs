//! Step distributions of translation-invariant walks on the square lattice,
//! their covariance and heat-kernel constant, and random conductance
//! environments for weighted nearest-neighbour walks.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use num_rational::Rational64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::domains::Site;
use crate::error::{Error, Result};

const MASS_TOL: f64 = 1e-12;

/// A step probability, kept exact when the walk allows it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Probability {
    Exact(Rational64),
    Float(f64),
}

impl Probability {
    pub fn ratio(numer: i64, denom: i64) -> Self {
        Probability::Exact(Rational64::new(numer, denom))
    }

    pub fn value(self) -> f64 {
        match self {
            Probability::Exact(r) => *r.numer() as f64 / *r.denom() as f64,
            Probability::Float(f) => f,
        }
    }
}

impl fmt::Display for Probability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Probability::Exact(r) => write!(f, "{r}"),
            Probability::Float(v) => write!(f, "{v}"),
        }
    }
}

/// One non-holding move of a walk, with its probability conditional on moving.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub dx: i64,
    pub dy: i64,
    pub prob: Probability,
}

impl Step {
    pub fn new(dx: i64, dy: i64, prob: Probability) -> Self {
        Step { dx, dy, prob }
    }
}

/// The named walks shipped with the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BuiltinWalk {
    Lsrw,
    Srw,
    King,
    Triangular,
    Knight,
}

impl BuiltinWalk {
    pub const ALL: [BuiltinWalk; 5] = [
        BuiltinWalk::Lsrw,
        BuiltinWalk::Srw,
        BuiltinWalk::King,
        BuiltinWalk::Triangular,
        BuiltinWalk::Knight,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BuiltinWalk::Lsrw => "lsrw",
            BuiltinWalk::Srw => "srw",
            BuiltinWalk::King => "king",
            BuiltinWalk::Triangular => "triangular",
            BuiltinWalk::Knight => "knight",
        }
    }

    /// Holding probability used when no override is given.
    pub fn default_laziness(self) -> f64 {
        match self {
            BuiltinWalk::Lsrw => 0.5,
            _ => 0.0,
        }
    }

    fn offsets(self) -> &'static [(i64, i64)] {
        match self {
            BuiltinWalk::Lsrw | BuiltinWalk::Srw => &[(1, 0), (-1, 0), (0, 1), (0, -1)],
            BuiltinWalk::King => &[
                (1, 0),
                (-1, 0),
                (0, 1),
                (0, -1),
                (1, 1),
                (1, -1),
                (-1, 1),
                (-1, -1),
            ],
            BuiltinWalk::Triangular => &[(1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1)],
            BuiltinWalk::Knight => &[
                (2, 1),
                (2, -1),
                (-2, 1),
                (-2, -1),
                (1, 2),
                (1, -2),
                (-1, 2),
                (-1, -2),
            ],
        }
    }
}

impl FromStr for BuiltinWalk {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lsrw" => Ok(BuiltinWalk::Lsrw),
            "srw" => Ok(BuiltinWalk::Srw),
            "king" => Ok(BuiltinWalk::King),
            "triangular" | "tri" => Ok(BuiltinWalk::Triangular),
            "knight" => Ok(BuiltinWalk::Knight),
            other => Err(Error::UnknownWalk(other.to_string())),
        }
    }
}

impl fmt::Display for BuiltinWalk {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A translation-invariant walk: hold with probability `laziness`, otherwise
/// take one of `steps`.
///
/// Construction checks that the offsets are distinct and nonzero, that the
/// conditional step probabilities sum to one, and that the walk has mean zero.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSet {
    name: String,
    steps: Vec<Step>,
    laziness: f64,
}

impl StepSet {
    pub fn new(name: impl Into<String>, steps: Vec<Step>, laziness: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&laziness) || !laziness.is_finite() {
            return Err(Error::InvalidLaziness(laziness));
        }
        if steps.is_empty() {
            return Err(Error::InvalidSteps("no steps".into()));
        }
        for (i, s) in steps.iter().enumerate() {
            if s.dx == 0 && s.dy == 0 {
                return Err(Error::InvalidSteps(
                    "(0,0) is not a step; use laziness for holding".into(),
                ));
            }
            let p = s.prob.value();
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::InvalidSteps(format!(
                    "probability {} of step ({}, {}) is outside (0, 1]",
                    s.prob, s.dx, s.dy
                )));
            }
            if steps[..i].iter().any(|t| t.dx == s.dx && t.dy == s.dy) {
                return Err(Error::InvalidSteps(format!(
                    "duplicate step ({}, {})",
                    s.dx, s.dy
                )));
            }
        }

        let exact: Option<Vec<Rational64>> = steps
            .iter()
            .map(|s| match s.prob {
                Probability::Exact(r) => Some(r),
                Probability::Float(_) => None,
            })
            .collect();
        match exact {
            Some(probs) => {
                let total: Rational64 = probs.iter().copied().sum();
                if total != Rational64::from_integer(1) {
                    return Err(Error::InvalidSteps(format!("probabilities sum to {total}")));
                }
                let mx: Rational64 = probs
                    .iter()
                    .zip(&steps)
                    .map(|(p, s)| p * Rational64::from_integer(s.dx))
                    .sum();
                let my: Rational64 = probs
                    .iter()
                    .zip(&steps)
                    .map(|(p, s)| p * Rational64::from_integer(s.dy))
                    .sum();
                if mx != Rational64::from_integer(0) || my != Rational64::from_integer(0) {
                    return Err(Error::InvalidSteps(format!("nonzero mean ({mx}, {my})")));
                }
            }
            None => {
                let total: f64 = steps.iter().map(|s| s.prob.value()).sum();
                if (total - 1.0).abs() > MASS_TOL {
                    return Err(Error::InvalidSteps(format!("probabilities sum to {total}")));
                }
                let mx: f64 = steps.iter().map(|s| s.prob.value() * s.dx as f64).sum();
                let my: f64 = steps.iter().map(|s| s.prob.value() * s.dy as f64).sum();
                if mx.abs() > MASS_TOL || my.abs() > MASS_TOL {
                    return Err(Error::InvalidSteps(format!("nonzero mean ({mx}, {my})")));
                }
            }
        }

        Ok(StepSet {
            name: name.into(),
            steps,
            laziness,
        })
    }

    pub fn builtin(walk: BuiltinWalk, laziness_override: Option<f64>) -> Result<Self> {
        let offsets = walk.offsets();
        let prob = Probability::ratio(1, offsets.len() as i64);
        let steps = offsets
            .iter()
            .map(|&(dx, dy)| Step::new(dx, dy, prob))
            .collect();
        StepSet::new(
            walk.name(),
            steps,
            laziness_override.unwrap_or(walk.default_laziness()),
        )
    }

    /// Simple random walk on the integers, embedded along the x axis.
    pub fn path_srw() -> Self {
        StepSet::new(
            "srw1d",
            vec![
                Step::new(1, 0, Probability::ratio(1, 2)),
                Step::new(-1, 0, Probability::ratio(1, 2)),
            ],
            0.0,
        )
        .expect("valid walk")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn laziness(&self) -> f64 {
        self.laziness
    }

    pub fn with_laziness(&self, laziness: f64) -> Result<Self> {
        StepSet::new(self.name.clone(), self.steps.clone(), laziness)
    }

    /// The full one-step law: `(offset, probability)` pairs including the
    /// holding mass at `(0, 0)` when the walk is lazy.
    pub fn one_step_distribution(&self) -> Vec<((i64, i64), f64)> {
        let mut out = Vec::with_capacity(self.steps.len() + 1);
        if self.laziness > 0.0 {
            out.push(((0, 0), self.laziness));
        }
        let moving = 1.0 - self.laziness;
        out.extend(
            self.steps
                .iter()
                .map(|s| ((s.dx, s.dy), moving * s.prob.value())),
        );
        out
    }

    /// Largest coordinate displacement of a single step.
    pub fn max_step(&self) -> i64 {
        self.steps
            .iter()
            .map(|s| s.dx.abs().max(s.dy.abs()))
            .max()
            .unwrap_or(0)
    }

    /// True when every step `s` has `-s` with equal probability.
    pub fn is_symmetric(&self) -> bool {
        self.steps.iter().all(|s| {
            self.steps
                .iter()
                .any(|t| t.dx == -s.dx && t.dy == -s.dy && t.prob.value() == s.prob.value())
        })
    }

    /// True when every step changes the parity of `x + y`, so that returns
    /// to the origin only happen at even times (for a non-lazy walk).
    pub fn is_bipartite(&self) -> bool {
        self.laziness == 0.0 && self.steps.iter().all(|s| (s.dx + s.dy).rem_euclid(2) == 1)
    }

    pub fn covariance(&self) -> CovarianceMatrix {
        covariance(self)
    }
}

pub fn builtin_walk(name: &str, laziness_override: Option<f64>) -> Result<StepSet> {
    StepSet::builtin(name.parse()?, laziness_override)
}

/// Per-step covariance of a walk, in squared lattice units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceMatrix {
    pub sxx: f64,
    pub sxy: f64,
    pub syy: f64,
}

impl CovarianceMatrix {
    pub fn det(&self) -> f64 {
        self.sxx * self.syy - self.sxy * self.sxy
    }

    pub fn scaled(&self, factor: f64) -> Self {
        CovarianceMatrix {
            sxx: self.sxx * factor,
            sxy: self.sxy * factor,
            syy: self.syy * factor,
        }
    }
}

/// Covariance of the full one-step law, holding included.
pub fn covariance(walk: &StepSet) -> CovarianceMatrix {
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for s in walk.steps() {
        let p = s.prob.value();
        let (x, y) = (s.dx as f64, s.dy as f64);
        sxx += p * x * x;
        sxy += p * x * y;
        syy += p * y * y;
    }
    CovarianceMatrix { sxx, sxy, syy }.scaled(1.0 - walk.laziness())
}

/// The heat-kernel constant `1 / (2 pi sqrt(det cov))`, the limit of
/// `t * p_t(x, x)` for a mean-zero planar walk.
pub fn heat_constant(cov: &CovarianceMatrix) -> Result<f64> {
    let det = cov.det();
    if !(det > 0.0) || cov.sxx <= 0.0 {
        return Err(Error::DegenerateCovariance(det));
    }
    Ok(1.0 / (2.0 * std::f64::consts::PI * det.sqrt()))
}

/// A rectangle of sites `{1..=width} x {1..=height}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Extent {
    pub width: usize,
    pub height: usize,
}

impl Extent {
    pub fn new(width: usize, height: usize) -> Self {
        Extent { width, height }
    }

    pub fn square(side: usize) -> Self {
        Extent::new(side, side)
    }

    pub fn contains(&self, site: Site) -> bool {
        site.x >= 1 && site.y >= 1 && site.x <= self.width as i64 && site.y <= self.height as i64
    }
}

/// I.i.d. `Uniform[c1, c2]` conductances on every nearest-neighbour edge that
/// touches the extent, including edges that leave it.
///
/// Weights are drawn from ChaCha20 seeded with `seed`
/// (`ChaCha20Rng::seed_from_u64`), horizontal edges first in row-major
/// order, then vertical edges in column-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct ConductanceEnvironment {
    extent: Extent,
    c1: f64,
    c2: f64,
    seed: u64,
    // edge (x, y)-(x+1, y) for x in 0..=w, y in 1..=h at (y-1)*(w+1)+x
    horizontal: Vec<f64>,
    // edge (x, y)-(x, y+1) for x in 1..=w, y in 0..=h at (x-1)*(h+1)+y
    vertical: Vec<f64>,
}

/// Name of the conductance law, recorded in output metadata.
pub const CONDUCTANCE_LAW: &str = "iid-uniform";
/// Name of the generator behind `sample_environment`.
pub const ENVIRONMENT_RNG: &str = "chacha20";

pub fn sample_environment(
    extent: Extent,
    c1: f64,
    c2: f64,
    seed: u64,
) -> Result<ConductanceEnvironment> {
    if !(c1 > 0.0 && c1 <= c2 && c2.is_finite()) {
        return Err(Error::InvalidInterval { c1, c2 });
    }
    let Extent { width: w, height: h } = extent;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut draw = || {
        if c1 == c2 {
            c1
        } else {
            c1 + (c2 - c1) * rng.random::<f64>()
        }
    };
    let horizontal = (0..(w + 1) * h).map(|_| draw()).collect();
    let vertical = (0..w * (h + 1)).map(|_| draw()).collect();
    Ok(ConductanceEnvironment {
        extent,
        c1,
        c2,
        seed,
        horizontal,
        vertical,
    })
}

impl ConductanceEnvironment {
    pub fn extent(&self) -> Extent {
        self.extent
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.c1, self.c2)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn horizontal_weights(&self) -> &[f64] {
        &self.horizontal
    }

    pub fn vertical_weights(&self) -> &[f64] {
        &self.vertical
    }

    /// Conductance of the edge `{a, b}`, if it is a nearest-neighbour edge
    /// touching the extent.
    pub fn weight(&self, a: Site, b: Site) -> Option<f64> {
        let (w, h) = (self.extent.width as i64, self.extent.height as i64);
        let (dx, dy) = (b.x - a.x, b.y - a.y);
        let (lo, horizontal) = match (dx, dy) {
            (1, 0) => (a, true),
            (-1, 0) => (b, true),
            (0, 1) => (a, false),
            (0, -1) => (b, false),
            _ => return None,
        };
        if horizontal {
            if lo.y < 1 || lo.y > h || lo.x < 0 || lo.x > w {
                return None;
            }
            Some(self.horizontal[((lo.y - 1) * (w + 1) + lo.x) as usize])
        } else {
            if lo.x < 1 || lo.x > w || lo.y < 0 || lo.y > h {
                return None;
            }
            Some(self.vertical[((lo.x - 1) * (h + 1) + lo.y) as usize])
        }
    }

    /// Weighted neighbours of a site in the extent, in the order +x, -x, +y, -y.
    pub fn neighbours(&self, site: Site) -> impl Iterator<Item = (Site, f64)> + '_ {
        [(1, 0), (-1, 0), (0, 1), (0, -1)]
            .into_iter()
            .filter_map(move |(dx, dy)| {
                let nb = Site::new(site.x + dx, site.y + dy);
                self.weight(site, nb).map(|w| (nb, w))
            })
    }

    /// Vertex measure `m(x) = sum_y w_xy`.
    pub fn measure(&self, site: Site) -> f64 {
        self.neighbours(site).map(|(_, w)| w).sum()
    }

    /// Writes the weights as CSV (`orientation,x,y,weight`) after a `#`
    /// metadata header carrying extent, bounds, seed and generator.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "# extent={}x{} c1={} c2={} seed={} rng={} law={}",
            self.extent.width,
            self.extent.height,
            self.c1,
            self.c2,
            self.seed,
            ENVIRONMENT_RNG,
            CONDUCTANCE_LAW
        )?;
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["orientation", "x", "y", "weight"])?;
        let (w, h) = (self.extent.width as i64, self.extent.height as i64);
        for y in 1..=h {
            for x in 0..=w {
                let v = self.horizontal[((y - 1) * (w + 1) + x) as usize];
                wtr.write_record(["h", &x.to_string(), &y.to_string(), &v.to_string()])?;
            }
        }
        for x in 1..=w {
            for y in 0..=h {
                let v = self.vertical[((x - 1) * (h + 1) + y) as usize];
                wtr.write_record(["v", &x.to_string(), &y.to_string(), &v.to_string()])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(mut input: R) -> Result<Self> {
        let mut header = String::new();
        input.read_line(&mut header)?;
        let meta = header
            .strip_prefix('#')
            .ok_or_else(|| Error::Parse("missing `#` metadata header".into()))?;
        let field = |key: &str| -> Result<&str> {
            meta.split_whitespace()
                .find_map(|kv| kv.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
                .ok_or_else(|| Error::Parse(format!("missing `{key}` in header")))
        };
        let parse_f = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(e.to_string()));
        let (w, h) = field("extent")?
            .split_once('x')
            .ok_or_else(|| Error::Parse("bad extent".into()))?;
        let w: usize = w.parse().map_err(|_| Error::Parse("bad width".into()))?;
        let h: usize = h.parse().map_err(|_| Error::Parse("bad height".into()))?;
        let c1 = parse_f(field("c1")?)?;
        let c2 = parse_f(field("c2")?)?;
        let seed: u64 = field("seed")?
            .parse()
            .map_err(|_| Error::Parse("bad seed".into()))?;

        let mut horizontal = vec![f64::NAN; (w + 1) * h];
        let mut vertical = vec![f64::NAN; w * (h + 1)];
        let mut rdr = csv::Reader::from_reader(input);
        for rec in rdr.records() {
            let rec = rec?;
            let get = |i: usize| rec.get(i).ok_or_else(|| Error::Parse("short record".into()));
            let x: i64 = get(1)?.parse().map_err(|_| Error::Parse("bad x".into()))?;
            let y: i64 = get(2)?.parse().map_err(|_| Error::Parse("bad y".into()))?;
            let v = parse_f(get(3)?)?;
            let slot = match get(0)? {
                "h" if (1..=h as i64).contains(&y) && (0..=w as i64).contains(&x) => {
                    &mut horizontal[((y - 1) * (w as i64 + 1) + x) as usize]
                }
                "v" if (1..=w as i64).contains(&x) && (0..=h as i64).contains(&y) => {
                    &mut vertical[((x - 1) * (h as i64 + 1) + y) as usize]
                }
                _ => return Err(Error::Parse(format!("edge out of range at ({x}, {y})"))),
            };
            *slot = v;
        }
        if horizontal.iter().chain(&vertical).any(|v| v.is_nan()) {
            return Err(Error::Parse("missing edge weights".into()));
        }
        if horizontal
            .iter()
            .chain(&vertical)
            .any(|&v| v < c1 || v > c2)
        {
            return Err(Error::Parse("weight outside [c1, c2]".into()));
        }
        Ok(ConductanceEnvironment {
            extent: Extent::new(w, h),
            c1,
            c2,
            seed,
            horizontal,
            vertical,
        })
    }
}
