//! Spectral zeta value `Z_H(1) = tr(L_H^{-1})` by dense eigenvalues, exact
//! per-vertex Green diagonals and Hutchinson probing; principal eigenpair,
//! heat traces, ultracontractivity ratios and Kirchhoff-index identities.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domains::{Domain, Site};
use crate::error::{Error, Result};
use crate::kernel::evolve_killed;
use crate::operator::{symmetrize, DirichletOperator, SymmetrizedOperator};
use crate::solver::{default_max_iter, pcg, BandedLdlt};

/// Largest operator handed to the dense eigensolver by default.
pub const DENSE_CAP: usize = 5000;

/// Work budget `n * bandwidth^2` below which exact traces use the banded
/// factorisation instead of one CG solve per vertex.
const BANDED_BUDGET: f64 = 2e10;

/// Sorted Dirichlet eigenvalues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralSummary {
    pub eigenvalues: Vec<f64>,
}

impl SpectralSummary {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn lambda1(&self) -> f64 {
        self.eigenvalues[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceMethod {
    Dense,
    ColumnSolve,
    Hutchinson,
}

impl TraceMethod {
    pub fn name(self) -> &'static str {
        match self {
            TraceMethod::Dense => "dense",
            TraceMethod::ColumnSolve => "exact",
            TraceMethod::Hutchinson => "hutchinson",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceResult {
    pub value: f64,
    pub method: TraceMethod,
    /// Standard error of a stochastic estimate.
    pub stderr: Option<f64>,
    pub probes: Option<usize>,
    /// Total solver iterations.
    pub iterations: usize,
    pub seed: Option<u64>,
    /// Relative residual target of iterative solves.
    pub tol: Option<f64>,
    /// Largest relative residual reached.
    pub worst_residual: Option<f64>,
    pub solver: String,
}

impl TraceResult {
    fn deterministic(value: f64, method: TraceMethod, solver: &str) -> Self {
        TraceResult {
            value,
            method,
            stderr: None,
            probes: None,
            iterations: 0,
            seed: None,
            tol: None,
            worst_residual: None,
            solver: solver.to_string(),
        }
    }

    /// Two-sided normal confidence interval; `None` for deterministic values.
    pub fn confidence_interval(&self, z: f64) -> Option<(f64, f64)> {
        self.stderr.map(|se| (self.value - z * se, self.value + z * se))
    }
}

pub fn dense_spectrum(op: &DirichletOperator) -> Result<SpectralSummary> {
    dense_spectrum_with_cap(op, DENSE_CAP)
}

pub fn dense_spectrum_with_cap(op: &DirichletOperator, cap: usize) -> Result<SpectralSummary> {
    if op.n() > cap {
        return Err(Error::DenseCapExceeded { n: op.n(), cap });
    }
    let sym = symmetrize(op)?;
    let mut eigenvalues: Vec<f64> = sym.to_dense().symmetric_eigenvalues().iter().copied().collect();
    eigenvalues.sort_by(f64::total_cmp);
    Ok(SpectralSummary { eigenvalues })
}

/// `sum_k 1 / lambda_k`.
pub fn zeta_from_spectrum(spec: &SpectralSummary) -> TraceResult {
    let value = spec.eigenvalues.iter().map(|l| 1.0 / l).sum();
    TraceResult::deterministic(value, TraceMethod::Dense, "symmetric-eigen")
}

/// How `zeta_exact` obtains the Green diagonals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExactStrategy {
    /// Banded factorisation when it fits the work budget, otherwise CG.
    #[default]
    Auto,
    Banded,
    ColumnCg,
}

/// `sum_v G_H(v, v)`.
pub fn zeta_exact(op: &DirichletOperator, tol: f64) -> Result<TraceResult> {
    zeta_exact_with(op, tol, ExactStrategy::Auto)
}

pub fn zeta_exact_with(
    op: &DirichletOperator,
    tol: f64,
    strategy: ExactStrategy,
) -> Result<TraceResult> {
    let sym = symmetrize(op)?;
    let n = sym.n();
    let bw = sym.matrix().bandwidth() as f64;
    let banded = match strategy {
        ExactStrategy::Auto => n as f64 * bw * bw <= BANDED_BUDGET,
        ExactStrategy::Banded => true,
        ExactStrategy::ColumnCg => false,
    };
    if banded {
        let diag = BandedLdlt::factor(sym.matrix())?.inverse_diagonal();
        let mut r = TraceResult::deterministic(diag.iter().sum(), TraceMethod::ColumnSolve, "banded-ldlt");
        r.tol = Some(tol);
        return Ok(r);
    }
    let diag = green_diagonals_cg(&sym, tol)?;
    let (sum, iterations, worst) = diag
        .iter()
        .fold((0.0, 0, 0.0f64), |(s, it, w), d| (s + d.0, it + d.1, w.max(d.2)));
    Ok(TraceResult {
        value: sum,
        method: TraceMethod::ColumnSolve,
        stderr: None,
        probes: None,
        iterations,
        seed: None,
        tol: Some(tol),
        worst_residual: Some(worst),
        solver: "pcg-jacobi".into(),
    })
}

/// `(G(v,v), iterations, residual)` for every vertex, in vertex order.
fn green_diagonals_cg(sym: &SymmetrizedOperator, tol: f64) -> Result<Vec<(f64, usize, f64)>> {
    let n = sym.n();
    let max_iter = default_max_iter(n);
    (0..n)
        .into_par_iter()
        .map(|v| {
            let mut e = vec![0.0; n];
            e[v] = 1.0;
            let out = pcg(sym.matrix(), &e, tol, max_iter)?;
            Ok((out.x[v], out.iterations, out.relative_residual))
        })
        .collect()
}

/// Hutchinson estimate `mean(z^T L^{-1} z)` over Rademacher probes.
///
/// Probe `k` draws its signs from ChaCha20 seeded with `seed` on stream `k`,
/// so results do not depend on the thread count.
pub fn zeta_hutchinson(
    op: &DirichletOperator,
    probes: usize,
    tol: f64,
    seed: u64,
) -> Result<TraceResult> {
    if probes < 2 {
        return Err(Error::InsufficientData(format!(
            "Hutchinson needs at least 2 probes, got {probes}"
        )));
    }
    let sym = symmetrize(op)?;
    let n = sym.n();
    let max_iter = default_max_iter(n);
    let samples: Vec<(f64, usize, f64)> = (0..probes)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let z: Vec<f64> = (0..n)
                .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                .collect();
            let out = pcg(sym.matrix(), &z, tol, max_iter)?;
            let q = z.iter().zip(&out.x).map(|(a, b)| a * b).sum();
            Ok((q, out.iterations, out.relative_residual))
        })
        .collect::<Result<_>>()?;
    let m = probes as f64;
    let mean = samples.iter().map(|s| s.0).sum::<f64>() / m;
    let var = samples.iter().map(|s| (s.0 - mean).powi(2)).sum::<f64>() / (m - 1.0);
    Ok(TraceResult {
        value: mean,
        method: TraceMethod::Hutchinson,
        stderr: Some((var / m).sqrt()),
        probes: Some(probes),
        iterations: samples.iter().map(|s| s.1).sum(),
        seed: Some(seed),
        tol: Some(tol),
        worst_residual: Some(samples.iter().map(|s| s.2).fold(0.0, f64::max)),
        solver: "pcg-jacobi".into(),
    })
}

/// `sum_k exp(-t lambda_k)`.
pub fn heat_trace(spec: &SpectralSummary, t: f64) -> f64 {
    spec.eigenvalues.iter().map(|l| (-t * l).exp()).sum()
}

/// Principal Dirichlet eigenpair of the symmetrised operator; `vector` is
/// unit-norm and positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundState {
    pub lambda1: f64,
    pub vector: Vec<f64>,
}

/// Inverse power iteration on the banded factorisation.
pub fn ground_state(op: &DirichletOperator, tol: f64) -> Result<GroundState> {
    let sym = symmetrize(op)?;
    let f = BandedLdlt::factor(sym.matrix())?;
    let n = sym.n();
    let mut x = vec![1.0 / (n as f64).sqrt(); n];
    let mut lambda = f64::NAN;
    let mut ax = vec![0.0; n];
    for _ in 0..10_000 {
        let mut y = f.solve(&x);
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        y.iter_mut().for_each(|v| *v /= norm);
        sym.apply(&y, &mut ax);
        let rq: f64 = y.iter().zip(&ax).map(|(a, b)| a * b).sum();
        let resid = ax
            .iter()
            .zip(&y)
            .map(|(a, b)| (a - rq * b).powi(2))
            .sum::<f64>()
            .sqrt();
        x = y;
        lambda = rq;
        if resid <= tol * rq.abs() {
            break;
        }
    }
    if x.iter().sum::<f64>() < 0.0 {
        x.iter_mut().for_each(|v| *v = -*v);
    }
    Ok(GroundState { lambda1: lambda, vector: x })
}

/// Ground state from a dense eigen-decomposition, for cross-checks.
pub fn dense_ground_state(op: &DirichletOperator) -> Result<GroundState> {
    let sym = symmetrize(op)?;
    let eig = sym.to_dense().symmetric_eigen();
    let (k, &lambda1) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .ok_or_else(|| Error::InsufficientData("empty operator".into()))?;
    let mut vector: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
    if vector.iter().sum::<f64>() < 0.0 {
        vector.iter_mut().for_each(|v| *v = -*v);
    }
    Ok(GroundState { lambda1, vector })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IuRow {
    pub t: usize,
    pub p_t: f64,
    /// `p_t^H(v,v) N exp(lambda_1 t)`.
    pub ratio: f64,
    /// `p_t^H(v,v) N / (1 - lambda_1)^t`.
    pub discrete_ratio: f64,
    /// Large-time limit of `discrete_ratio`: `N phi_1(v)^2`.
    pub spectral_limit: f64,
}

/// Ultracontractivity ratios at `v` along `t_grid`.
pub fn iu_diagnostic(
    op: &DirichletOperator,
    dom: &Domain,
    ground: &GroundState,
    v: Site,
    t_grid: &[usize],
) -> Result<Vec<IuRow>> {
    let horizon = t_grid.iter().copied().max().unwrap_or(0);
    let series = evolve_killed(op, dom, v, horizon)?;
    let idx = dom.index_of(v).ok_or(Error::NotInDomain(v.x, v.y))?;
    let n = op.n() as f64;
    let l1 = ground.lambda1;
    let phi = ground.vector[idx];
    Ok(t_grid
        .iter()
        .map(|&t| {
            let p = series.returns.values[t];
            IuRow {
                t,
                p_t: p,
                ratio: p * n * (l1 * t as f64).exp(),
                discrete_ratio: p * n * (-(t as f64) * (1.0 - l1).ln()).exp(),
                spectral_limit: n * phi * phi,
            }
        })
        .collect())
}

/// Simple undirected graph on `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimpleGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
}

impl SimpleGraph {
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut list: Vec<(usize, usize)> = Vec::new();
        for (a, b) in edges {
            if a >= n || b >= n || a == b {
                return Err(Error::Parse(format!("invalid edge ({a}, {b})")));
            }
            let e = (a.min(b), a.max(b));
            if !list.contains(&e) {
                list.push(e);
            }
        }
        list.sort();
        Ok(SimpleGraph { n, edges: list })
    }

    pub fn complete(n: usize) -> Self {
        let edges = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b)));
        SimpleGraph::new(n, edges).expect("valid")
    }

    pub fn path(n: usize) -> Self {
        SimpleGraph::new(n, (1..n).map(|i| (i - 1, i))).expect("valid")
    }

    pub fn cycle(n: usize) -> Self {
        SimpleGraph::new(n, (0..n).map(|i| (i, (i + 1) % n))).expect("valid")
    }

    /// Random spanning tree plus each remaining pair with probability `p`.
    pub fn random_connected(n: usize, p: f64, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut edges = Vec::new();
        for v in 1..n {
            edges.push((rng.random_range(0..v), v));
        }
        for a in 0..n {
            for b in a + 1..n {
                if rng.random::<f64>() < p {
                    edges.push((a, b));
                }
            }
        }
        SimpleGraph::new(n, edges).expect("valid")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n];
        for &(a, b) in &self.edges {
            d[a] += 1;
            d[b] += 1;
        }
        d
    }

    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return false;
        }
        let mut adj = vec![Vec::new(); self.n];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut seen = vec![false; self.n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Combinatorial Laplacian `D - A`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let mut l = DMatrix::zeros(self.n, self.n);
        for &(a, b) in &self.edges {
            l[(a, b)] -= 1.0;
            l[(b, a)] -= 1.0;
            l[(a, a)] += 1.0;
            l[(b, b)] += 1.0;
        }
        l
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KirchhoffReport {
    /// Sum of effective resistances over unordered pairs.
    pub k_resistance: f64,
    /// `n sum_{k>=2} 1 / mu_k(L)`.
    pub k_spectral: f64,
    /// `vol(H) sum_{k>=2} 1 / lambda_k(I - D^{-1} A)`, reported for comparison.
    pub k_volume: f64,
}

pub const KIRCHHOFF_MAX_N: usize = 200;

pub fn kirchhoff_check(graph: &SimpleGraph) -> Result<KirchhoffReport> {
    let n = graph.n();
    if n > KIRCHHOFF_MAX_N {
        return Err(Error::DenseCapExceeded {
            n,
            cap: KIRCHHOFF_MAX_N,
        });
    }
    if !graph.is_connected() {
        return Err(Error::Disconnected);
    }
    if n == 1 {
        return Ok(KirchhoffReport {
            k_resistance: 0.0,
            k_spectral: 0.0,
            k_volume: 0.0,
        });
    }
    let l = graph.laplacian();
    let nf = n as f64;

    // L^+ = (L + J/n)^{-1} - J/n on a connected graph.
    let j = DMatrix::from_element(n, n, 1.0 / nf);
    let pinv = (&l + &j)
        .cholesky()
        .ok_or(Error::NotPositiveDefinite { row: 0, pivot: 0.0 })?
        .inverse()
        - &j;
    let mut k_resistance = 0.0;
    for a in 0..n {
        for b in a + 1..n {
            k_resistance += pinv[(a, a)] + pinv[(b, b)] - 2.0 * pinv[(a, b)];
        }
    }

    let mut mu: Vec<f64> = l.symmetric_eigenvalues().iter().copied().collect();
    mu.sort_by(f64::total_cmp);
    let k_spectral = nf * mu[1..].iter().map(|m| 1.0 / m).sum::<f64>();

    let deg = graph.degrees();
    let vol: f64 = deg.iter().map(|&d| d as f64).sum();
    let inv_sqrt = DVector::from_iterator(n, deg.iter().map(|&d| 1.0 / (d as f64).sqrt()));
    let mut norm = l.clone();
    for a in 0..n {
        for b in 0..n {
            norm[(a, b)] *= inv_sqrt[a] * inv_sqrt[b];
        }
    }
    let mut lam: Vec<f64> = norm.symmetric_eigenvalues().iter().copied().collect();
    lam.sort_by(f64::total_cmp);
    let k_volume = vol * lam[1..].iter().map(|m| 1.0 / m).sum::<f64>();

    Ok(KirchhoffReport {
        k_resistance,
        k_spectral,
        k_volume,
    })
}
