//! Killed transition kernels `P_H` on a finite domain, the Dirichlet
//! Laplacian `I - P_H`, and its symmetrised form `M^{1/2} (I - P_H) M^{-1/2}`.

use std::io::Write;

use nalgebra::DMatrix;

use crate::domains::Domain;
use crate::error::{Error, Result};
use crate::walks::{ConductanceEnvironment, StepSet};

const REVERSIBILITY_TOL: f64 = 1e-12;

/// Square sparse matrix in compressed-row form with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Builds the matrix from per-row entry lists; each row is sorted by column.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let nnz = rows.iter().map(Vec::len).sum();
        let mut cols = Vec::with_capacity(nnz);
        let mut vals = Vec::with_capacity(nnz);
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            for (c, v) in row {
                debug_assert!(c < n);
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        CsrMatrix {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[r.clone()].binary_search(&j) {
            Ok(k) => self.vals[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).map(|(_, v)| v).sum()
    }

    /// `y = A x`.
    pub fn mul_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let r = self.row_ptr[i]..self.row_ptr[i + 1];
            *yi = self.cols[r.clone()]
                .iter()
                .zip(&self.vals[r])
                .map(|(&c, &v)| v * x[c])
                .sum();
        }
    }

    pub fn transpose(&self) -> Self {
        let mut rows = vec![Vec::new(); self.n];
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                rows[j].push((i, v));
            }
        }
        CsrMatrix::from_rows(rows)
    }

    /// Largest `|i - j|` over stored entries.
    pub fn bandwidth(&self) -> usize {
        (0..self.n)
            .flat_map(|i| self.row(i).map(move |(j, _)| i.abs_diff(j)))
            .max()
            .unwrap_or(0)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                m[(i, j)] += v;
            }
        }
        m
    }
}

/// The walk driving an assembly.
#[derive(Debug, Clone, Copy)]
pub enum WalkSource<'a> {
    Steps(&'a StepSet),
    /// Nearest-neighbour walk with `P(x,y) = (1 - laziness) w_xy / m(x)`.
    Conductances {
        env: &'a ConductanceEnvironment,
        laziness: f64,
    },
}

impl<'a> From<&'a StepSet> for WalkSource<'a> {
    fn from(walk: &'a StepSet) -> Self {
        WalkSource::Steps(walk)
    }
}

/// Transition kernel of a walk killed on leaving a domain.
///
/// Rows of `P_H` are substochastic: the deficit `1 - sum_y P_H(x,y)` is the
/// probability of leaving the domain in one step from `x`.
#[derive(Debug, Clone)]
pub struct DirichletOperator {
    transitions: CsrMatrix,
    measure: Vec<f64>,
    label: String,
    laziness: f64,
}

pub fn assemble<'a>(walk: impl Into<WalkSource<'a>>, dom: &Domain) -> Result<DirichletOperator> {
    match walk.into() {
        WalkSource::Steps(walk) => {
            let dist = walk.one_step_distribution();
            let rows = dom
                .sites()
                .iter()
                .map(|&s| {
                    dist.iter()
                        .filter_map(|&((dx, dy), p)| dom.index_of(s.offset(dx, dy)).map(|j| (j, p)))
                        .collect()
                })
                .collect();
            Ok(DirichletOperator {
                transitions: CsrMatrix::from_rows(rows),
                measure: vec![1.0; dom.len()],
                label: walk.name().to_string(),
                laziness: walk.laziness(),
            })
        }
        WalkSource::Conductances { env, laziness } => {
            if !(0.0..1.0).contains(&laziness) {
                return Err(Error::InvalidLaziness(laziness));
            }
            let mut rows = Vec::with_capacity(dom.len());
            let mut measure = Vec::with_capacity(dom.len());
            for &s in dom.sites() {
                if !env.extent().contains(s) {
                    return Err(Error::EnvironmentMismatch(s.x, s.y));
                }
                let m = env.measure(s);
                let mut row = Vec::with_capacity(5);
                if laziness > 0.0 {
                    row.push((dom.index_of(s).expect("site in domain"), laziness));
                }
                row.extend(env.neighbours(s).filter_map(|(nb, w)| {
                    dom.index_of(nb).map(|j| (j, (1.0 - laziness) * w / m))
                }));
                rows.push(row);
                measure.push(m);
            }
            let (c1, c2) = env.bounds();
            Ok(DirichletOperator {
                transitions: CsrMatrix::from_rows(rows),
                measure,
                label: format!("rcm[{c1}..{c2}]#{}", env.seed()),
                laziness,
            })
        }
    }
}

impl DirichletOperator {
    /// Operator with no transitions at all, so that `I - P_H = I`.
    pub fn identity(n: usize) -> Self {
        DirichletOperator {
            transitions: CsrMatrix::from_rows(vec![Vec::new(); n]),
            measure: vec![1.0; n],
            label: "identity".into(),
            laziness: 0.0,
        }
    }

    /// Wraps an arbitrary kernel; callers are responsible for its validity.
    pub fn from_parts(transitions: CsrMatrix, measure: Vec<f64>, label: impl Into<String>) -> Self {
        DirichletOperator {
            transitions,
            measure,
            label: label.into(),
            laziness: 0.0,
        }
    }

    pub fn n(&self) -> usize {
        self.transitions.n()
    }

    pub fn transitions(&self) -> &CsrMatrix {
        &self.transitions
    }

    pub fn measure(&self) -> &[f64] {
        &self.measure
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn laziness(&self) -> f64 {
        self.laziness
    }

    /// One-step probability of leaving the domain from vertex `i`.
    pub fn exit_probability(&self, i: usize) -> f64 {
        (1.0 - self.transitions.row_sum(i)).max(0.0)
    }

    /// Largest violation of `m(x)P(x,y) = m(y)P(y,x)`, relative to the larger side.
    pub fn reversibility_defect(&self) -> (f64, usize, usize) {
        let p = &self.transitions;
        let mut worst = (0.0, 0, 0);
        for i in 0..p.n() {
            for (j, v) in p.row(i) {
                let a = self.measure[i] * v;
                let b = self.measure[j] * p.get(j, i);
                let d = (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
                if d > worst.0 {
                    worst = (d, i, j);
                }
            }
        }
        worst
    }

    /// The Laplacian `I - P_H` as a sparse matrix.
    pub fn laplacian(&self) -> CsrMatrix {
        let p = &self.transitions;
        let rows = (0..p.n())
            .map(|i| {
                let mut row: Vec<(usize, f64)> = p.row(i).map(|(j, v)| (j, -v)).collect();
                match row.iter_mut().find(|(j, _)| *j == i) {
                    Some(e) => e.1 += 1.0,
                    None => row.push((i, 1.0)),
                }
                row
            })
            .collect();
        CsrMatrix::from_rows(rows)
    }

    pub fn to_dense_laplacian(&self) -> DMatrix<f64> {
        DMatrix::identity(self.n(), self.n()) - self.transitions.to_dense()
    }

    /// `(I - P_H) v`.
    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        self.transitions.mul_into(v, out);
        for (o, x) in out.iter_mut().zip(v) {
            *o = x - *o;
        }
    }

    /// Laplacian in Matrix Market coordinate format (1-based).
    pub fn write_matrix_market<W: Write>(&self, mut out: W) -> Result<()> {
        let l = self.laplacian();
        writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(out, "% Dirichlet Laplacian I - P_H, walk {}", self.label)?;
        writeln!(out, "{} {} {}", l.n(), l.n(), l.nnz())?;
        for i in 0..l.n() {
            for (j, v) in l.row(i) {
                writeln!(out, "{} {} {}", i + 1, j + 1, v)?;
            }
        }
        Ok(())
    }
}

/// `(I - P_H) v` for a freshly allocated output.
pub fn matvec(op: &DirichletOperator, v: &[f64]) -> Result<Vec<f64>> {
    if v.len() != op.n() {
        return Err(Error::LengthMismatch {
            expected: op.n(),
            got: v.len(),
        });
    }
    let mut out = vec![0.0; v.len()];
    op.apply(v, &mut out);
    Ok(out)
}

/// `S = M^{1/2} (I - P_H) M^{-1/2}`, symmetric for reversible kernels and
/// similar to the Laplacian, so spectrum and trace of the inverse agree.
#[derive(Debug, Clone)]
pub struct SymmetrizedOperator {
    matrix: CsrMatrix,
    sqrt_measure: Vec<f64>,
}

pub fn symmetrize(op: &DirichletOperator) -> Result<SymmetrizedOperator> {
    if let Some(i) = op.measure.iter().position(|&m| !(m > 0.0)) {
        return Err(Error::ZeroMeasure(i));
    }
    let (defect, i, j) = op.reversibility_defect();
    if defect > REVERSIBILITY_TOL {
        return Err(Error::NotReversible(i, j));
    }
    let sqrt_measure: Vec<f64> = op.measure.iter().map(|m| m.sqrt()).collect();
    let l = op.laplacian();
    let mut rows: Vec<Vec<(usize, f64)>> = (0..l.n())
        .map(|i| {
            l.row(i)
                .map(|(j, v)| (j, sqrt_measure[i] * v / sqrt_measure[j]))
                .collect()
        })
        .collect();
    // Average mirrored entries so the stored matrix is exactly symmetric.
    let snapshot = CsrMatrix::from_rows(rows.clone());
    for (i, row) in rows.iter_mut().enumerate() {
        for e in row.iter_mut() {
            if e.0 != i {
                e.1 = 0.5 * (e.1 + snapshot.get(e.0, i));
            }
        }
    }
    Ok(SymmetrizedOperator {
        matrix: CsrMatrix::from_rows(rows),
        sqrt_measure,
    })
}

impl SymmetrizedOperator {
    pub fn n(&self) -> usize {
        self.matrix.n()
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn sqrt_measure(&self) -> &[f64] {
        &self.sqrt_measure
    }

    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        self.matrix.mul_into(v, out);
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.n() {
            return Err(Error::LengthMismatch {
                expected: self.n(),
                got: v.len(),
            });
        }
        let mut out = vec![0.0; v.len()];
        self.apply(v, &mut out);
        Ok(out)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        self.matrix.to_dense()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::{build_domain, path_domain, Shape, Site};
    use crate::walks::{sample_environment, BuiltinWalk, Extent, StepSet};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn square_op(w: BuiltinWalk, side: usize) -> DirichletOperator {
        let walk = StepSet::builtin(w, None).unwrap();
        let dom = build_domain(Shape::Square { side }, &walk).unwrap();
        assemble(&walk, &dom).unwrap()
    }

    fn env_op(width: usize, height: usize, seed: u64) -> DirichletOperator {
        let env = sample_environment(Extent::new(width, height), 0.5, 2.0, seed).unwrap();
        let walk = StepSet::builtin(BuiltinWalk::Srw, None).unwrap();
        let dom = build_domain(Shape::Rect { width, height }, &walk).unwrap();
        assemble(
            WalkSource::Conductances {
                env: &env,
                laziness: 0.5,
            },
            &dom,
        )
        .unwrap()
    }

    #[test]
    fn single_vertex_lsrw() {
        let op = square_op(BuiltinWalk::Lsrw, 1);
        assert_eq!(op.n(), 1);
        assert_eq!(op.transitions().get(0, 0), 0.5);
        assert_eq!(op.to_dense_laplacian()[(0, 0)], 0.5);
        assert_eq!(matvec(&op, &[2.0]).unwrap(), vec![1.0]);
        assert_eq!(matvec(&op, &[0.0]).unwrap(), vec![0.0]);
        assert!(matches!(
            matvec(&op, &[1.0, 2.0]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn king_matches_displayed_pattern() {
        let op = square_op(BuiltinWalk::King, 4);
        let l = op.to_dense_laplacian();
        // first block row of the displayed matrix
        let expect_row0 = [(0, 1.0), (1, -0.125), (4, -0.125), (5, -0.125)];
        for j in 0..16 {
            let want = expect_row0
                .iter()
                .find(|e| e.0 == j)
                .map_or(0.0, |e| e.1);
            assert_eq!(l[(0, j)], want, "col {j}");
        }
        let expect_row3 = [(2, -0.125), (3, 1.0), (6, -0.125), (7, -0.125)];
        for j in 0..16 {
            let want = expect_row3
                .iter()
                .find(|e| e.0 == j)
                .map_or(0.0, |e| e.1);
            assert_eq!(l[(3, j)], want, "col {j}");
        }
        // block tridiagonal: nothing two blocks away
        for i in 0..4 {
            for j in 8..16 {
                assert_eq!(l[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn triangular_block_asymmetry() {
        let op = square_op(BuiltinWalk::Triangular, 4);
        let l = op.to_dense_laplacian();
        let s = -1.0 / 6.0;
        // vertex (1,1) couples to (1,2) and (2,1) only
        assert_eq!(l[(0, 1)], s);
        assert_eq!(l[(0, 4)], s);
        assert_eq!(l[(0, 5)], 0.0);
        // vertex (1,2) couples to (2,1) and (2,2): upper block is lower bidiagonal
        assert_eq!(l[(1, 4)], s);
        assert_eq!(l[(1, 5)], s);
        assert_eq!(l[(1, 6)], 0.0);
        // the lower block is the transpose
        assert_eq!(l[(4, 1)], s);
        assert_eq!(l[(5, 1)], s);
        assert_eq!(l[(4, 0)], s);
        assert_eq!(l[(4, 5)], s);
        assert_eq!(l[(5, 0)], 0.0);
        assert_eq!(l, l.transpose());
    }

    #[test]
    fn knight_matches_displayed_pattern() {
        let op = square_op(BuiltinWalk::Knight, 4);
        let l = op.to_dense_laplacian();
        let nz: Vec<usize> = (0..16).filter(|&j| j != 0 && l[(0, j)] != 0.0).collect();
        assert_eq!(nz, vec![6, 9]);
        let nz: Vec<usize> = (0..16).filter(|&j| j != 1 && l[(1, j)] != 0.0).collect();
        assert_eq!(nz, vec![7, 8, 10]);
        let nz: Vec<usize> = (0..16).filter(|&j| j != 4 && l[(4, j)] != 0.0).collect();
        assert_eq!(nz, vec![2, 10, 13]);
    }

    #[test]
    fn row_deficit_is_exit_probability() {
        for w in BuiltinWalk::ALL {
            let walk = StepSet::builtin(w, None).unwrap();
            let dom = build_domain(Shape::Square { side: 9 }, &walk).unwrap();
            let op = assemble(&walk, &dom).unwrap();
            let mut killed_somewhere = false;
            for (i, &s) in dom.sites().iter().enumerate() {
                let leaving: f64 = walk
                    .one_step_distribution()
                    .iter()
                    .filter(|&&((dx, dy), _)| !dom.contains(s.offset(dx, dy)))
                    .map(|&(_, p)| p)
                    .sum();
                assert!((op.exit_probability(i) - leaving).abs() < 1e-12);
                assert!(op.transitions().row_sum(i) <= 1.0 + 1e-12);
                assert!(op.transitions().row(i).count() <= walk.steps().len() + 1);
                killed_somewhere |= leaving > 0.0;
            }
            assert!(killed_somewhere);
        }
    }

    #[test]
    fn environment_rows_and_reversibility() {
        let op = env_op(6, 5, 13);
        assert_eq!(op.n(), 30);
        for i in 0..op.n() {
            let s = op.transitions().row_sum(i);
            assert!(s <= 1.0 + 1e-12 && s >= 0.5);
        }
        assert!(op.reversibility_defect().0 < 1e-12);
        // interior vertex: full row mass
        let dom = build_domain(
            Shape::Rect {
                width: 6,
                height: 5,
            },
            &StepSet::builtin(BuiltinWalk::Srw, None).unwrap(),
        )
        .unwrap();
        let inner = dom.index_of(Site::new(3, 3)).unwrap();
        assert!((op.transitions().row_sum(inner) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn environment_domain_mismatch() {
        let env = sample_environment(Extent::new(3, 3), 0.5, 2.0, 1).unwrap();
        let walk = StepSet::builtin(BuiltinWalk::Srw, None).unwrap();
        let dom = build_domain(Shape::Square { side: 4 }, &walk).unwrap();
        let err = assemble(
            WalkSource::Conductances {
                env: &env,
                laziness: 0.0,
            },
            &dom,
        );
        assert!(matches!(err, Err(Error::EnvironmentMismatch(..))));
    }

    #[test]
    fn symmetrize_constant_measure_is_identity_map() {
        let op = square_op(BuiltinWalk::Lsrw, 7);
        let s = symmetrize(&op).unwrap();
        assert_eq!(s.matrix(), &op.laplacian());
    }

    #[test]
    fn symmetrize_environment_preserves_spectrum() {
        // Dense oracle: eigenvalues of the raw (non-symmetric) Laplacian via
        // its real Schur form against the symmetrised eigenvalues.
        let op = env_op(10, 5, 21);
        let s = symmetrize(&op).unwrap();
        let dense = s.to_dense();
        assert_eq!(dense, dense.transpose());
        let mut sym: Vec<f64> = dense.symmetric_eigenvalues().iter().copied().collect();
        sym.sort_by(f64::total_cmp);
        let raw = op.to_dense_laplacian();
        let mut ev: Vec<f64> = raw
            .complex_eigenvalues()
            .iter()
            .map(|c| {
                assert!(c.im.abs() < 1e-9);
                c.re
            })
            .collect();
        ev.sort_by(f64::total_cmp);
        for (a, b) in sym.iter().zip(&ev) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        assert!(sym[0] > 0.0);
    }

    #[test]
    fn symmetrize_rejects_bad_inputs() {
        let rows = vec![vec![(1, 0.5)], vec![(0, 0.25)]];
        let op = DirichletOperator::from_parts(CsrMatrix::from_rows(rows.clone()), vec![1.0, 1.0], "x");
        assert!(matches!(symmetrize(&op), Err(Error::NotReversible(..))));
        let op = DirichletOperator::from_parts(CsrMatrix::from_rows(rows), vec![1.0, 0.0], "x");
        assert!(matches!(symmetrize(&op), Err(Error::ZeroMeasure(1))));
    }

    #[test]
    fn matvec_matches_dense_product() {
        let op = square_op(BuiltinWalk::King, 10);
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let v: Vec<f64> = (0..100).map(|_| rng.random::<f64>() - 0.5).collect();
        let got = matvec(&op, &v).unwrap();
        let want = op.to_dense_laplacian() * nalgebra::DVector::from_vec(v);
        for (a, b) in got.iter().zip(want.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn spectrum_lies_in_unit_interval_for_lazy_walks() {
        let ops = [
            square_op(BuiltinWalk::Lsrw, 20),
            square_op(BuiltinWalk::King, 12),
            square_op(BuiltinWalk::Knight, 15),
            env_op(20, 20, 3),
        ];
        for op in &ops {
            let s = symmetrize(op).unwrap();
            let ev = s.to_dense().symmetric_eigenvalues();
            let max = if op.laziness() > 0.0 { 1.0 } else { 2.0 };
            for &l in ev.iter() {
                assert!(l > 0.0 && l <= max + 1e-12, "{}: {l}", op.label());
            }
        }
    }

    #[test]
    fn path_two_operator() {
        let dom = path_domain(2).unwrap();
        let op = assemble(&StepSet::path_srw(), &dom).unwrap();
        assert_eq!(op.transitions().get(0, 1), 0.5);
        assert_eq!(op.transitions().get(1, 0), 0.5);
        assert_eq!(op.transitions().get(0, 0), 0.0);
    }

    #[test]
    fn matrix_market_export() {
        let op = square_op(BuiltinWalk::Lsrw, 2);
        let mut buf = Vec::new();
        op.write_matrix_market(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines().filter(|l| !l.starts_with('%'));
        assert_eq!(lines.next(), Some("4 4 12"));
        assert_eq!(lines.next(), Some("1 1 0.5"));
        assert_eq!(lines.next(), Some("1 2 -0.125"));
    }

    proptest! {
        #[test]
        fn matvec_is_linear(seed in 0u64..1000, a in -3.0f64..3.0) {
            let op = square_op(BuiltinWalk::Triangular, 6);
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let u: Vec<f64> = (0..36).map(|_| rng.random::<f64>()).collect();
            let v: Vec<f64> = (0..36).map(|_| rng.random::<f64>()).collect();
            let w: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + y).collect();
            let lu = matvec(&op, &u).unwrap();
            let lv = matvec(&op, &v).unwrap();
            let lw = matvec(&op, &w).unwrap();
            for i in 0..36 {
                prop_assert!((lw[i] - (a * lu[i] + lv[i])).abs() < 1e-12);
            }
        }
    }
}
