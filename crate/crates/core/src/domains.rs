//! Finite vertex sets: squares, word-metric balls and one-dimensional paths,
//! with a lexicographic index and the interior / boundary-layer split.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::walks::StepSet;

/// A point of the square lattice.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default,
)]
pub struct Site {
    pub x: i64,
    pub y: i64,
}

impl Site {
    pub const fn new(x: i64, y: i64) -> Self {
        Site { x, y }
    }

    pub fn offset(self, dx: i64, dy: i64) -> Self {
        Site::new(self.x + dx, self.y + dy)
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    /// `{1..=side}^2`.
    Square { side: usize },
    /// `{1..=width} x {1..=height}`.
    Rect { width: usize, height: usize },
    /// Sites within word distance `radius` of `center`.
    Ball { center: Site, radius: usize },
    /// `{1..=length}` on the x axis.
    Path { length: usize },
}

impl Shape {
    pub fn kind(&self) -> &'static str {
        match self {
            Shape::Square { .. } => "square",
            Shape::Rect { .. } => "rect",
            Shape::Ball { .. } => "ball",
            Shape::Path { .. } => "path",
        }
    }
}

/// A finite domain with a bijective index `site <-> 0..n`.
///
/// Sites are kept in lexicographic order. `offsets` are the moves of the walk
/// whose word metric the domain was built with.
#[derive(Debug, Clone)]
pub struct Domain {
    shape: Shape,
    sites: Vec<Site>,
    index: HashMap<Site, usize>,
    radius: usize,
    offsets: Vec<(i64, i64)>,
    restricted: bool,
}

pub fn build_domain(shape: Shape, walk: &StepSet) -> Result<Domain> {
    let offsets: Vec<(i64, i64)> = walk.steps().iter().map(|s| (s.dx, s.dy)).collect();
    let (candidates, center, radius) = match shape {
        Shape::Square { side } => {
            if side < 1 {
                return Err(Error::InvalidRadius { min: 1, got: side });
            }
            let c = ((side as i64) + 1) / 2;
            (rect_sites(side, side), Site::new(c, c), side)
        }
        Shape::Rect { width, height } => {
            if width < 1 || height < 1 {
                return Err(Error::InvalidRadius {
                    min: 1,
                    got: width.min(height),
                });
            }
            let c = Site::new((width as i64 + 1) / 2, (height as i64 + 1) / 2);
            (rect_sites(width, height), c, width.max(height))
        }
        Shape::Ball { center, radius } => {
            if radius < 1 {
                return Err(Error::InvalidRadius { min: 1, got: radius });
            }
            let dist = bfs(center, &offsets, |_| true, Some(radius));
            let mut sites: Vec<Site> = dist.into_keys().collect();
            sites.sort();
            (sites, center, radius)
        }
        Shape::Path { length } => return path_domain(length),
    };

    // Keep the component of the center when the step graph splits the set.
    let members: std::collections::HashSet<Site> = candidates.iter().copied().collect();
    let reached = bfs(center, &offsets, |s| members.contains(&s), None);
    let restricted = reached.len() < candidates.len();
    let sites: Vec<Site> = if restricted {
        candidates
            .into_iter()
            .filter(|s| reached.contains_key(s))
            .collect()
    } else {
        candidates
    };
    Ok(Domain::from_sites(shape, sites, radius, offsets, restricted))
}

/// The interval `{1..=length}` with nearest-neighbour steps.
pub fn path_domain(length: usize) -> Result<Domain> {
    if length < 2 {
        return Err(Error::InvalidRadius {
            min: 2,
            got: length,
        });
    }
    let sites = (1..=length as i64).map(|x| Site::new(x, 0)).collect();
    Ok(Domain::from_sites(
        Shape::Path { length },
        sites,
        length,
        vec![(1, 0), (-1, 0)],
        false,
    ))
}

fn rect_sites(width: usize, height: usize) -> Vec<Site> {
    let mut v = Vec::with_capacity(width * height);
    for x in 1..=width as i64 {
        for y in 1..=height as i64 {
            v.push(Site::new(x, y));
        }
    }
    v
}

/// Breadth-first word distances from `start`, moving only onto sites accepted
/// by `allowed`, optionally stopping at `limit`.
fn bfs(
    start: Site,
    offsets: &[(i64, i64)],
    allowed: impl Fn(Site) -> bool,
    limit: Option<usize>,
) -> HashMap<Site, usize> {
    let mut dist = HashMap::new();
    if !allowed(start) {
        return dist;
    }
    dist.insert(start, 0);
    let mut queue = VecDeque::from([start]);
    while let Some(s) = queue.pop_front() {
        let d = dist[&s];
        if limit.is_some_and(|l| d >= l) {
            continue;
        }
        for &(dx, dy) in offsets {
            let nb = s.offset(dx, dy);
            if allowed(nb) && !dist.contains_key(&nb) {
                dist.insert(nb, d + 1);
                queue.push_back(nb);
            }
        }
    }
    dist
}

impl Domain {
    fn from_sites(
        shape: Shape,
        sites: Vec<Site>,
        radius: usize,
        offsets: Vec<(i64, i64)>,
        restricted: bool,
    ) -> Self {
        let index = sites.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        Domain {
            shape,
            sites,
            index,
            radius,
            offsets,
            restricted,
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    /// Side length for squares and paths, radius for balls.
    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn site(&self, i: usize) -> Site {
        self.sites[i]
    }

    pub fn index_of(&self, site: Site) -> Option<usize> {
        self.index.get(&site).copied()
    }

    pub fn contains(&self, site: Site) -> bool {
        self.index.contains_key(&site)
    }

    /// True when the step graph on the candidate set was disconnected and
    /// only the center's component was kept.
    pub fn is_restricted(&self) -> bool {
        self.restricted
    }

    pub fn offsets(&self) -> &[(i64, i64)] {
        &self.offsets
    }

    pub fn center(&self) -> Site {
        match self.shape {
            Shape::Square { side } => {
                let c = (side as i64 + 1) / 2;
                Site::new(c, c)
            }
            Shape::Rect { width, height } => {
                Site::new((width as i64 + 1) / 2, (height as i64 + 1) / 2)
            }
            Shape::Ball { center, .. } => center,
            Shape::Path { length } => Site::new((length as i64 + 1) / 2, 0),
        }
    }

    /// Word distance from `from` to every site of the domain, moving through
    /// the whole lattice.
    pub fn word_distances_from(&self, from: Site) -> Vec<usize> {
        let limit = self
            .sites
            .iter()
            .map(|s| (s.x - from.x).abs() + (s.y - from.y).abs())
            .max()
            .unwrap_or(0) as usize;
        let lo_x = self.sites.iter().map(|s| s.x).min().unwrap_or(0) - limit as i64;
        let hi_x = self.sites.iter().map(|s| s.x).max().unwrap_or(0) + limit as i64;
        let lo_y = self.sites.iter().map(|s| s.y).min().unwrap_or(0) - limit as i64;
        let hi_y = self.sites.iter().map(|s| s.y).max().unwrap_or(0) + limit as i64;
        let dist = bfs(
            from,
            &self.offsets,
            |s| s.x >= lo_x && s.x <= hi_x && s.y >= lo_y && s.y <= hi_y,
            None,
        );
        self.sites
            .iter()
            .map(|s| dist.get(s).copied().unwrap_or(usize::MAX))
            .collect()
    }

    /// Word distance from each site to the nearest site outside the domain.
    pub fn distance_to_complement(&self) -> Vec<usize> {
        let n = self.len();
        let mut dist = vec![usize::MAX; n];
        let mut queue = VecDeque::new();
        for (i, s) in self.sites.iter().enumerate() {
            if self
                .offsets
                .iter()
                .any(|&(dx, dy)| !self.contains(s.offset(dx, dy)))
            {
                dist[i] = 1;
                queue.push_back(i);
            }
        }
        while let Some(i) = queue.pop_front() {
            let s = self.sites[i];
            for &(dx, dy) in &self.offsets {
                if let Some(j) = self.index_of(s.offset(-dx, -dy)) {
                    if dist[j] == usize::MAX {
                        dist[j] = dist[i] + 1;
                        queue.push_back(j);
                    }
                }
            }
        }
        dist
    }
}

/// Interior sites lie at word distance greater than `width` from the
/// complement; everything else forms the boundary layer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerPartition {
    pub eta: f64,
    pub width: usize,
    pub distance: Vec<usize>,
    pub interior: Vec<usize>,
    pub layer: Vec<usize>,
}

/// Layer width `floor(R^(1 - eta))`.
pub fn layer_width(radius: usize, eta: f64) -> usize {
    (radius as f64).powf(1.0 - eta).floor() as usize
}

pub fn boundary_layer(dom: &Domain, eta: f64) -> Result<LayerPartition> {
    if !(eta > 0.0 && eta < 0.5) {
        return Err(Error::InvalidEta(eta));
    }
    let width = layer_width(dom.radius(), eta);
    let distance = dom.distance_to_complement();
    let (interior, layer): (Vec<usize>, Vec<usize>) =
        (0..dom.len()).partition(|&i| distance[i] > width);
    Ok(LayerPartition {
        eta,
        width,
        distance,
        interior,
        layer,
    })
}

impl LayerPartition {
    pub fn is_interior(&self, i: usize) -> bool {
        self.distance[i] > self.width
    }

    /// CSV with columns `x,y,layer,distance`.
    pub fn write_csv<W: Write>(&self, dom: &Domain, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["x", "y", "layer", "distance"])?;
        for (i, s) in dom.sites().iter().enumerate() {
            let flag = if self.is_interior(i) { "0" } else { "1" };
            wtr.write_record([
                s.x.to_string().as_str(),
                &s.y.to_string(),
                flag,
                &self.distance[i].to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}
