//! Exact time evolution of heat kernels by repeated convolution: full-space
//! return probabilities `p_t(x,x)`, killed kernels `p_t^H`, Green diagonals,
//! return sums and the fitted quantitative-homogenisation rate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::domains::{Domain, Site};
use crate::error::{Error, Result};
use crate::operator::{symmetrize, CsrMatrix, DirichletOperator, SymmetrizedOperator};
use crate::solver::{default_max_iter, pcg, DEFAULT_TOL};
use crate::walks::StepSet;

/// Default cap on the number of cells in a full-space window.
pub const DEFAULT_MAX_CELLS: usize = 100_000_000;

/// Edge rows and columns with every entry below this are dropped.
pub const DEFAULT_TRIM_BELOW: f64 = 1e-60;

#[derive(Debug, Clone, Copy)]
pub struct EvolutionConfig {
    pub max_cells: usize,
    /// Trimming threshold; `0.0` keeps the full support.
    pub trim_below: f64,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            max_cells: DEFAULT_MAX_CELLS,
            trim_below: DEFAULT_TRIM_BELOW,
        }
    }
}

/// A snapshot of a probability field.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelState {
    pub t: usize,
    pub origin: Site,
    /// Window corner and size for full-space fields, `None` for domain fields
    /// (indexed like the domain).
    pub window: Option<(Site, usize, usize)>,
    pub values: Vec<f64>,
}

impl KernelState {
    pub fn mass(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// The law of `X_t - X_0` for a translation-invariant walk, stored on the
/// bounding box of its support.
///
/// The box grows by the step extents each step. Edge rows and columns whose
/// entries have all fallen below `trim_below` are dropped, which keeps the box
/// near the Gaussian bulk; the mass lost per step is below `trim_below` times
/// the perimeter.
#[derive(Debug, Clone)]
pub struct FullSpaceKernel {
    steps: Vec<((i64, i64), f64)>,
    t: usize,
    // lattice coordinate of data[0]
    x0: i64,
    y0: i64,
    width: usize,
    height: usize,
    // column-major in x: data[(x - x0) * height + (y - y0)]
    data: Vec<f64>,
    max_cells: usize,
    trim_below: f64,
    scratch: Vec<f64>,
}

impl FullSpaceKernel {
    pub fn new(walk: &StepSet, config: &EvolutionConfig) -> Self {
        FullSpaceKernel {
            steps: walk.one_step_distribution(),
            t: 0,
            x0: 0,
            y0: 0,
            width: 1,
            height: 1,
            data: vec![1.0],
            max_cells: config.max_cells,
            trim_below: config.trim_below,
            scratch: Vec::new(),
        }
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn mass(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn cells(&self) -> usize {
        self.data.len()
    }

    /// `P(X_t - X_0 = (dx, dy))`.
    pub fn at(&self, dx: i64, dy: i64) -> f64 {
        let (i, j) = (dx - self.x0, dy - self.y0);
        if i < 0 || j < 0 || i as usize >= self.width || j as usize >= self.height {
            0.0
        } else {
            self.data[i as usize * self.height + j as usize]
        }
    }

    pub fn step(&mut self) -> Result<()> {
        let (min_dx, max_dx) = extent(self.steps.iter().map(|s| s.0 .0));
        let (min_dy, max_dy) = extent(self.steps.iter().map(|s| s.0 .1));
        let width = self.width + (max_dx - min_dx) as usize;
        let height = self.height + (max_dy - min_dy) as usize;
        if width * height > self.max_cells {
            return Err(Error::WindowTooLarge {
                cells: width * height,
                cap: self.max_cells,
            });
        }
        let mut out = std::mem::take(&mut self.scratch);
        out.clear();
        out.resize(width * height, 0.0);
        for &((dx, dy), p) in &self.steps {
            let ox = (dx - min_dx) as usize;
            let oy = (dy - min_dy) as usize;
            for cx in 0..self.width {
                let src = &self.data[cx * self.height..(cx + 1) * self.height];
                let base = (cx + ox) * height + oy;
                let dst = &mut out[base..base + self.height];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += p * s;
                }
            }
        }
        self.scratch = std::mem::replace(&mut self.data, out);
        self.x0 += min_dx;
        self.y0 += min_dy;
        self.width = width;
        self.height = height;
        self.t += 1;
        self.trim();
        Ok(())
    }

    fn trim(&mut self) {
        let tiny = self.trim_below;
        if !(tiny > 0.0) {
            return;
        }
        let h = self.height;
        let col_small = |d: &[f64], c: usize| d[c * h..(c + 1) * h].iter().all(|&v| v < tiny);
        let (mut lo_c, mut hi_c) = (0usize, self.width);
        while hi_c - lo_c > 1 && col_small(&self.data, lo_c) {
            lo_c += 1;
        }
        while hi_c - lo_c > 1 && col_small(&self.data, hi_c - 1) {
            hi_c -= 1;
        }
        let row_small = |d: &[f64], r: usize| (lo_c..hi_c).all(|c| d[c * h + r] < tiny);
        let (mut lo_r, mut hi_r) = (0usize, h);
        while hi_r - lo_r > 1 && row_small(&self.data, lo_r) {
            lo_r += 1;
        }
        while hi_r - lo_r > 1 && row_small(&self.data, hi_r - 1) {
            hi_r -= 1;
        }
        if lo_c == 0 && hi_c == self.width && lo_r == 0 && hi_r == h {
            return;
        }
        let nh = hi_r - lo_r;
        let mut out = Vec::with_capacity((hi_c - lo_c) * nh);
        for c in lo_c..hi_c {
            out.extend_from_slice(&self.data[c * h + lo_r..c * h + hi_r]);
        }
        self.data = out;
        self.x0 += lo_c as i64;
        self.y0 += lo_r as i64;
        self.width = hi_c - lo_c;
        self.height = nh;
    }

    /// `sum_y self(y) other(-y)`: the probability that the concatenation of
    /// the two walks returns to its start.
    pub fn return_overlap(&self, other: &FullSpaceKernel) -> f64 {
        let mut total = 0.0;
        for cx in 0..self.width {
            let x = self.x0 + cx as i64;
            let ox = -x - other.x0;
            if ox < 0 || ox as usize >= other.width {
                continue;
            }
            let ocol = &other.data[ox as usize * other.height..(ox as usize + 1) * other.height];
            for cy in 0..self.height {
                let v = self.data[cx * self.height + cy];
                if v == 0.0 {
                    continue;
                }
                let oy = -(self.y0 + cy as i64) - other.y0;
                if oy >= 0 && (oy as usize) < other.height {
                    total += v * ocol[oy as usize];
                }
            }
        }
        total
    }

    pub fn state(&self, origin: Site) -> KernelState {
        KernelState {
            t: self.t,
            origin,
            window: Some((
                Site::new(origin.x + self.x0, origin.y + self.y0),
                self.width,
                self.height,
            )),
            values: self.data.clone(),
        }
    }
}

fn extent(it: impl Iterator<Item = i64>) -> (i64, i64) {
    it.fold((0, 0), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// On-diagonal series `p_t(x, x)` for `t = 0..=T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnSeries {
    pub walk: String,
    pub origin: Site,
    pub values: Vec<f64>,
    /// Set for walks that can only return at even times.
    pub bipartite: bool,
}

impl ReturnSeries {
    pub fn horizon(&self) -> usize {
        self.values.len().saturating_sub(1)
    }

    /// `(t, p_t, t p_t)` rows.
    pub fn rows(&self) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(|(t, &p)| (t, p, t as f64 * p))
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["t", "p_t", "t_p_t"])?;
        for (t, p, tp) in self.rows() {
            wtr.write_record([t.to_string(), format!("{p:e}"), format!("{tp:.12}")])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Exact `p_t(origin, origin)` for `t <= horizon`.
///
/// Uses Chapman-Kolmogorov at the midpoint: with `f_s` the law of the
/// displacement after `s` steps, `p_{2s} = sum_y f_s(y) f_s(-y)` and
/// `p_{2s+1} = sum_y f_s(y) f_{s+1}(-y)`, so fields are only evolved to
/// `ceil(T/2)`.
pub fn evolve_full(walk: &StepSet, origin: Site, horizon: usize) -> Result<ReturnSeries> {
    evolve_full_with(walk, origin, horizon, &EvolutionConfig::default())
}

pub fn evolve_full_with(
    walk: &StepSet,
    origin: Site,
    horizon: usize,
    config: &EvolutionConfig,
) -> Result<ReturnSeries> {
    let mut values = vec![0.0; horizon + 1];
    values[0] = 1.0;
    let mut cur = FullSpaceKernel::new(walk, config);
    let mut next = cur.clone();
    next.step()?;
    let mut s = 0;
    loop {
        if 2 * s <= horizon {
            values[2 * s] = cur.return_overlap(&cur);
        }
        if 2 * s + 1 <= horizon {
            values[2 * s + 1] = cur.return_overlap(&next);
        } else {
            break;
        }
        s += 1;
        cur.clone_from(&next);
        next.step()?;
    }
    values[0] = 1.0;
    Ok(ReturnSeries {
        walk: walk.name().to_string(),
        origin,
        values,
        bipartite: walk.is_bipartite(),
    })
}

/// `sum_{t=1}^{R} p_t(x, x)`.
pub fn return_sum(walk: &StepSet, origin: Site, r: usize) -> Result<f64> {
    if r < 2 {
        return Err(Error::InvalidRadius { min: 2, got: r });
    }
    let series = evolve_full(walk, origin, r)?;
    Ok(series.values[1..].iter().sum())
}

/// Killed evolution `f_{t+1} = f_t P_H` started from a point mass.
///
/// Survival is tracked by subtracting the exit flux `sum_x f_t(x) exit(x)`
/// each step rather than re-summing the field, so it is non-increasing in
/// floating point as well.
#[derive(Debug, Clone)]
pub struct KilledKernel {
    transposed: CsrMatrix,
    exit: Vec<f64>,
    field: Vec<f64>,
    scratch: Vec<f64>,
    survival: f64,
    t: usize,
}

impl KilledKernel {
    pub fn new(op: &DirichletOperator, origin: usize) -> Self {
        let mut field = vec![0.0; op.n()];
        field[origin] = 1.0;
        KilledKernel {
            transposed: op.transitions().transpose(),
            exit: (0..op.n()).map(|i| op.exit_probability(i)).collect(),
            scratch: vec![0.0; op.n()],
            field,
            survival: 1.0,
            t: 0,
        }
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn field(&self) -> &[f64] {
        &self.field
    }

    /// Survival probability `P(tau > t)`.
    pub fn mass(&self) -> f64 {
        self.survival
    }

    pub fn step(&mut self) {
        let flux: f64 = self.field.iter().zip(&self.exit).map(|(f, e)| f * e).sum();
        self.survival = (self.survival - flux).max(0.0);
        self.transposed.mul_into(&self.field, &mut self.scratch);
        std::mem::swap(&mut self.field, &mut self.scratch);
        self.t += 1;
    }

    pub fn state(&self, origin: Site) -> KernelState {
        KernelState {
            t: self.t,
            origin,
            window: None,
            values: self.field.clone(),
        }
    }
}

/// Killed return probabilities with the survival mass at each time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KilledSeries {
    pub returns: ReturnSeries,
    /// `survival[t] = P_x(tau_H > t)`.
    pub survival: Vec<f64>,
}

impl KilledSeries {
    /// `P_x(tau_H <= t)`.
    pub fn exit_probability(&self, t: usize) -> f64 {
        1.0 - self.survival[t]
    }
}

pub fn evolve_killed(
    op: &DirichletOperator,
    dom: &Domain,
    origin: Site,
    horizon: usize,
) -> Result<KilledSeries> {
    let idx = dom
        .index_of(origin)
        .ok_or(Error::NotInDomain(origin.x, origin.y))?;
    if dom.len() != op.n() {
        return Err(Error::LengthMismatch {
            expected: op.n(),
            got: dom.len(),
        });
    }
    let mut k = KilledKernel::new(op, idx);
    let mut values = Vec::with_capacity(horizon + 1);
    let mut survival = Vec::with_capacity(horizon + 1);
    values.push(1.0);
    survival.push(1.0);
    for _ in 0..horizon {
        k.step();
        values.push(k.field()[idx]);
        survival.push(k.mass());
    }
    Ok(KilledSeries {
        returns: ReturnSeries {
            walk: op.label().to_string(),
            origin,
            values,
            bipartite: false,
        },
        survival,
    })
}

/// `G_H(v, v) = (L_H^{-1})(v, v)`.
pub fn green_diagonal(op: &DirichletOperator, v: usize) -> Result<f64> {
    let sym = symmetrize(op)?;
    green_diagonal_sym(&sym, v, DEFAULT_TOL)
}

/// Green diagonal from a symmetrised operator; the diagonal is invariant
/// under the diagonal similarity, so `(S^{-1})_vv = (L_H^{-1})_vv`.
pub fn green_diagonal_sym(sym: &SymmetrizedOperator, v: usize, tol: f64) -> Result<f64> {
    let n = sym.n();
    if v >= n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: v,
        });
    }
    let mut e = vec![0.0; n];
    e[v] = 1.0;
    let out = pcg(sym.matrix(), &e, tol, default_max_iter(n))?;
    Ok(out.x[v])
}

/// Fitted `t p_t(x,x) ~ G + C t^{-delta}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QhFit {
    pub g_hat: f64,
    pub delta_hat: f64,
    pub c_hat: f64,
    /// Root-mean-square residual of the fitted model.
    pub rms_residual: f64,
    /// Slope of `log |t p_t - g_hat|` against `log t` (about `-delta_hat`).
    pub loglog_slope: f64,
    pub points: usize,
}

/// Least-squares fit of the approach of `t p_t` to its limit over `t >= t_min`.
///
/// For each trial exponent the asymptote and amplitude are solved linearly;
/// the exponent minimising the residual is refined by golden-section search.
/// Walks that only return at even times are fitted on two-step averages.
pub fn fit_qh_rate(series: &ReturnSeries, t_min: usize) -> Result<QhFit> {
    let t_min = t_min.max(1);
    if series.values.len() < 4 * t_min {
        return Err(Error::InsufficientData(format!(
            "series of length {} is shorter than 4 * t_min = {}",
            series.values.len(),
            4 * t_min
        )));
    }
    let tp: Vec<f64> = series.rows().map(|(_, _, tp)| tp).collect();
    let points: Vec<(f64, f64)> = if series.bipartite {
        (t_min..tp.len() - 1)
            .step_by(2)
            .map(|t| (t as f64 + 0.5, 0.5 * (tp[t] + tp[t + 1])))
            .collect()
    } else {
        (t_min..tp.len()).map(|t| (t as f64, tp[t])).collect()
    };
    let n = points.len() as f64;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let var_y = points.iter().map(|p| (p.1 - mean_y).powi(2)).sum::<f64>();
    if !(var_y > 1e-24 * mean_y * mean_y * n) {
        return Err(Error::DegenerateFit("t p_t is constant on the fit range".into()));
    }

    let solve = |delta: f64| -> (f64, f64, f64) {
        // y = g + c * t^-delta
        let (mut sx, mut sxx, mut sy, mut sxy) = (0.0, 0.0, 0.0, 0.0);
        for &(t, y) in &points {
            let x = t.powf(-delta);
            sx += x;
            sxx += x * x;
            sy += y;
            sxy += x * y;
        }
        let den = n * sxx - sx * sx;
        let c = (n * sxy - sx * sy) / den;
        let g = (sy - c * sx) / n;
        let sse = points
            .iter()
            .map(|&(t, y)| (y - g - c * t.powf(-delta)).powi(2))
            .sum::<f64>();
        (g, c, sse)
    };

    let grid: Vec<f64> = (1..=120).map(|k| k as f64 * 0.05).collect();
    let best = grid
        .iter()
        .copied()
        .min_by(|&a, &b| solve(a).2.total_cmp(&solve(b).2))
        .expect("nonempty grid");
    let (mut lo, mut hi) = ((best - 0.05).max(1e-3), best + 0.05);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let a = hi - phi * (hi - lo);
        let b = lo + phi * (hi - lo);
        if solve(a).2 < solve(b).2 {
            hi = b;
        } else {
            lo = a;
        }
    }
    let delta = 0.5 * (lo + hi);
    let (g, c, sse) = solve(delta);
    if !g.is_finite() || !c.is_finite() {
        return Err(Error::DegenerateFit("singular normal equations".into()));
    }

    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter_map(|&(t, y)| {
            let d = (y - g).abs();
            (d > 0.0).then(|| (t.ln(), d.ln()))
        })
        .collect();
    let loglog_slope = linear_slope(&logs).unwrap_or(f64::NAN);

    Ok(QhFit {
        g_hat: g,
        delta_hat: delta,
        c_hat: c,
        rms_residual: (sse / n).sqrt(),
        loglog_slope,
        points: points.len(),
    })
}

fn linear_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Monte-Carlo estimate of `p_t(0, 0)` with its standard error. Only meant as
/// a cross-check of the exact evolution.
pub fn monte_carlo_return(walk: &StepSet, t: usize, samples: usize, seed: u64) -> (f64, f64) {
    let dist = walk.one_step_distribution();
    let mut cdf = Vec::with_capacity(dist.len());
    let mut acc = 0.0;
    for &(_, p) in &dist {
        acc += p;
        cdf.push(acc);
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..samples {
        let (mut x, mut y) = (0i64, 0i64);
        for _ in 0..t {
            let u: f64 = rng.random();
            let k = cdf.iter().position(|&c| u < c).unwrap_or(dist.len() - 1);
            x += dist[k].0 .0;
            y += dist[k].0 .1;
        }
        if x == 0 && y == 0 {
            hits += 1;
        }
    }
    let p = hits as f64 / samples as f64;
    (p, (p * (1.0 - p) / samples as f64).sqrt())
}
