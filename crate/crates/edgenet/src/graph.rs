//! Graph shift operators: symmetric operators with cached eigendecompositions,
//! support masks, graph Fourier transforms, and synthetic graph generators.
//!
//! All generated operators are adjacency matrices normalized by their spectral
//! radius, so the spectrum lies in `[-1, 1]` with the top eigenvalue exactly 1.

use std::io::{BufRead, Write};

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::linalg;

/// Per-entry tolerance accepted when validating symmetry of user input.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Default number of re-sampling attempts before giving up on connectivity.
pub const DEFAULT_SBM_RETRIES: usize = 100;

/// Index set of forced-zero positions: the zero entries of `S + I`.
///
/// The diagonal is never in the set (`S + I` has a nonzero diagonal) and the
/// set is symmetric for symmetric operators.
#[derive(Debug, Clone)]
pub struct SupportMask {
    n: usize,
    zero: Array2<bool>,
    count: usize,
}

impl SupportMask {
    /// Build the mask from a square matrix using an exact-zero test on `S + I`.
    pub fn from_matrix(s: &Array2<f64>) -> Result<Self> {
        let (r, c) = s.dim();
        if r != c {
            return Err(Error::NotSquare(r, c));
        }
        let mut zero = Array2::from_elem((r, r), false);
        let mut count = 0;
        for i in 0..r {
            for j in 0..r {
                let val = s[[i, j]] + if i == j { 1.0 } else { 0.0 };
                if val == 0.0 {
                    if i == j {
                        return Err(Error::InvalidParameter(format!(
                            "diagonal entry {i} of S + I is zero"
                        )));
                    }
                    zero[[i, j]] = true;
                    count += 1;
                }
            }
        }
        for i in 0..r {
            for j in (i + 1)..r {
                if zero[[i, j]] != zero[[j, i]] {
                    return Err(Error::NotSymmetric {
                        i,
                        j,
                        delta: (s[[i, j]] - s[[j, i]]).abs(),
                    });
                }
            }
        }
        Ok(Self { n: r, zero, count })
    }

    /// Mask with no constrained entries (complete support).
    pub fn empty(n: usize) -> Self {
        Self { n, zero: Array2::from_elem((n, n), false), count: 0 }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of constrained positions `|A|`.
    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.zero[[i, j]]
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.n;
        (0..n)
            .flat_map(move |i| (0..n).map(move |j| (i, j)))
            .filter(move |&(i, j)| self.zero[[i, j]])
    }

    /// Zero out the constrained entries of `m` in place.
    pub fn project(&self, m: &mut Array2<f64>) {
        for (i, j) in self.iter() {
            m[[i, j]] = 0.0;
        }
    }

    /// Largest magnitude that `m` places on constrained entries.
    pub fn violation(&self, m: &Array2<f64>) -> f64 {
        self.iter().map(|(i, j)| m[[i, j]].abs()).fold(0.0, f64::max)
    }
}

/// Symmetric graph shift operator with cached eigendecomposition and support.
#[derive(Debug, Clone)]
pub struct GraphShiftOperator {
    n: usize,
    matrix: Array2<f64>,
    eigvecs: Array2<f64>,
    eigvals: Array1<f64>,
    support: SupportMask,
}

impl GraphShiftOperator {
    /// Wrap an existing symmetric matrix, computing the eigendecomposition.
    ///
    /// Validates symmetry per entry within [`SYMMETRY_TOL`] and then
    /// symmetrizes exactly so all downstream invariants hold bit-for-bit.
    pub fn from_matrix(m: Array2<f64>) -> Result<Self> {
        let (r, c) = m.dim();
        if r != c {
            return Err(Error::NotSquare(r, c));
        }
        check_symmetric(&m, SYMMETRY_TOL)?;
        let mut sym = m;
        for i in 0..r {
            for j in (i + 1)..r {
                let avg = 0.5 * (sym[[i, j]] + sym[[j, i]]);
                sym[[i, j]] = avg;
                sym[[j, i]] = avg;
            }
        }
        let support = SupportMask::from_matrix(&sym)?;
        let (eigvecs, eigvals) = linalg::eigh_sym(&sym);
        Ok(Self { n: r, matrix: sym, eigvecs, eigvals, support })
    }

    fn from_adjacency_normalized(adj: Array2<f64>) -> Result<Self> {
        let n = adj.nrows();
        let (eigvecs, vals) = linalg::eigh_sym(&adj);
        let radius = vals.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        if radius == 0.0 {
            return Err(Error::InvalidParameter("graph has no edges".into()));
        }
        let matrix = adj.mapv(|x| x / radius);
        let eigvals = vals.mapv(|x| x / radius);
        let support = SupportMask::from_matrix(&matrix)?;
        Ok(Self { n, matrix, eigvecs, eigvals, support })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    /// Orthonormal eigenvectors as columns, eigenvalues ascending.
    pub fn eigenvectors(&self) -> &Array2<f64> {
        &self.eigvecs
    }

    pub fn eigenvalues(&self) -> &Array1<f64> {
        &self.eigvals
    }

    pub fn support(&self) -> &SupportMask {
        &self.support
    }

    pub fn spectral_norm(&self) -> f64 {
        self.eigvals.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
    }

    /// One application of the shift: `S x`.
    pub fn shift(&self, x: &Array1<f64>) -> Array1<f64> {
        self.matrix.dot(x)
    }

    /// Number of neighbors of node `i` (nonzero off-diagonal entries).
    pub fn degree(&self, i: usize) -> usize {
        (0..self.n).filter(|&j| j != i && self.matrix[[i, j]] != 0.0).count()
    }

    /// Graph Fourier transform `x_hat = V^T x`.
    pub fn gft(&self, x: &Array1<f64>) -> Result<Array1<f64>> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: x.len() });
        }
        Ok(self.eigvecs.t().dot(x))
    }

    /// Inverse graph Fourier transform `x = V x_hat`.
    pub fn igft(&self, x_hat: &Array1<f64>) -> Result<Array1<f64>> {
        if x_hat.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: x_hat.len() });
        }
        Ok(self.eigvecs.dot(x_hat))
    }

    /// Plain-text edge list: header `n m`, then `i j w` per stored edge with
    /// 0-based indices. Only the upper triangle (and any nonzero diagonal)
    /// is written; weights round-trip exactly through shortest-decimal form.
    pub fn save_edge_list<W: Write>(&self, mut w: W) -> Result<()> {
        let mut edges = Vec::new();
        for i in 0..self.n {
            for j in i..self.n {
                if self.matrix[[i, j]] != 0.0 {
                    edges.push((i, j, self.matrix[[i, j]]));
                }
            }
        }
        writeln!(w, "{} {}", self.n, edges.len())?;
        for (i, j, weight) in edges {
            writeln!(w, "{} {} {}", i, j, weight)?;
        }
        Ok(())
    }

    /// Parse the edge-list format written by [`save_edge_list`]. The
    /// eigendecomposition is recomputed from the loaded matrix.
    pub fn load_edge_list<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::Parse { line: 1, msg: "empty file".into() })?;
        let header = header?;
        let mut parts = header.split_whitespace();
        let parse_field = |line: usize, field: Option<&str>, what: &str| -> Result<usize> {
            field
                .ok_or_else(|| Error::Parse { line, msg: format!("missing {what}") })?
                .parse()
                .map_err(|_| Error::Parse { line, msg: format!("bad {what}") })
        };
        let n = parse_field(1, parts.next(), "node count")?;
        let m = parse_field(1, parts.next(), "edge count")?;
        let mut adj = Array2::<f64>::zeros((n, n));
        let mut seen = 0usize;
        for (idx, line) in lines {
            let lineno = idx + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let i = parse_field(lineno, parts.next(), "row index")?;
            let j = parse_field(lineno, parts.next(), "column index")?;
            let w: f64 = parts
                .next()
                .ok_or_else(|| Error::Parse { line: lineno, msg: "missing weight".into() })?
                .parse()
                .map_err(|_| Error::Parse { line: lineno, msg: "bad weight".into() })?;
            if i >= n || j >= n {
                return Err(Error::Parse { line: lineno, msg: format!("index out of range: {i} {j}") });
            }
            adj[[i, j]] = w;
            adj[[j, i]] = w;
            seen += 1;
        }
        if seen != m {
            return Err(Error::Parse {
                line: seen + 2,
                msg: format!("expected {m} edges, found {seen}"),
            });
        }
        Self::from_matrix(adj)
    }
}

/// Graph signal: one real value per node, optionally carrying its expansion
/// over the operator's eigenvectors.
#[derive(Debug, Clone)]
pub struct GraphSignal {
    pub values: Array1<f64>,
    pub spectrum: Option<Array1<f64>>,
}

impl GraphSignal {
    pub fn from_values(values: Array1<f64>) -> Self {
        Self { values, spectrum: None }
    }

    /// Attach the GFT spectrum computed against `s`.
    pub fn analyzed(s: &GraphShiftOperator, values: Array1<f64>) -> Result<Self> {
        let spectrum = s.gft(&values)?;
        Ok(Self { values, spectrum: Some(spectrum) })
    }

    /// Residual `||x - V x_hat||_2`; zero when no spectrum is attached.
    pub fn synthesis_residual(&self, s: &GraphShiftOperator) -> Result<f64> {
        match &self.spectrum {
            None => Ok(0.0),
            Some(sp) => {
                let back = s.igft(sp)?;
                Ok(linalg::norm2(&(&self.values - &back)))
            }
        }
    }
}

fn check_symmetric(m: &Array2<f64>, tol: f64) -> Result<()> {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let delta = (m[[i, j]] - m[[j, i]]).abs();
            if delta > tol {
                return Err(Error::NotSymmetric { i, j, delta });
            }
        }
    }
    Ok(())
}

/// Eigendecomposition with validation and a deterministic sign convention:
/// eigenvalues ascending, each eigenvector's largest-magnitude entry positive.
pub fn eigendecompose(m: &Array2<f64>) -> Result<(Array2<f64>, Array1<f64>)> {
    let (r, c) = m.dim();
    if r != c {
        return Err(Error::NotSquare(r, c));
    }
    check_symmetric(m, SYMMETRY_TOL)?;
    Ok(linalg::eigh_sym(m))
}

/// Support mask of a square matrix (zero entries of `S + I`).
pub fn support_mask(m: &Array2<f64>) -> Result<SupportMask> {
    SupportMask::from_matrix(m)
}

/// Block community assignment used by the SBM generator: node `i` belongs to
/// community `i / (n / communities)`.
pub fn community_assignment(n: usize, communities: usize) -> Vec<usize> {
    let size = n / communities;
    (0..n).map(|i| i / size).collect()
}

fn is_connected(adj: &Array2<f64>) -> bool {
    let n = adj.nrows();
    if n == 0 {
        return false;
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut visited = 1;
    while let Some(i) = stack.pop() {
        for j in 0..n {
            if !seen[j] && adj[[i, j]] != 0.0 {
                seen[j] = true;
                visited += 1;
                stack.push(j);
            }
        }
    }
    visited == n
}

/// Sample a connected stochastic block model graph and return its
/// spectral-radius-normalized adjacency.
///
/// Communities are equal-sized contiguous blocks (see
/// [`community_assignment`]). Sampling retries until connected, up to
/// [`DEFAULT_SBM_RETRIES`] attempts; the random stream continues across
/// attempts so results stay deterministic per seed.
pub fn build_sbm(
    n: usize,
    communities: usize,
    p_intra: f64,
    p_inter: f64,
    seed: u64,
) -> Result<GraphShiftOperator> {
    build_sbm_with_retries(n, communities, p_intra, p_inter, seed, DEFAULT_SBM_RETRIES)
}

pub fn build_sbm_with_retries(
    n: usize,
    communities: usize,
    p_intra: f64,
    p_inter: f64,
    seed: u64,
    retries: usize,
) -> Result<GraphShiftOperator> {
    if communities == 0 || n == 0 {
        return Err(Error::InvalidParameter("n and communities must be positive".into()));
    }
    if n % communities != 0 {
        return Err(Error::InvalidParameter(format!(
            "n = {n} not divisible by communities = {communities}"
        )));
    }
    for (name, p) in [("p_intra", p_intra), ("p_inter", p_inter)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!("{name} = {p} outside [0, 1]")));
        }
    }
    let assignment = community_assignment(n, communities);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    for _ in 0..retries {
        let mut adj = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            for j in (i + 1)..n {
                let p = if assignment[i] == assignment[j] { p_intra } else { p_inter };
                if rng.random::<f64>() < p {
                    adj[[i, j]] = 1.0;
                    adj[[j, i]] = 1.0;
                }
            }
        }
        if is_connected(&adj) {
            return GraphShiftOperator::from_adjacency_normalized(adj);
        }
    }
    Err(Error::Disconnected { retries })
}

/// Erdős–Rényi graph: one-community SBM.
pub fn erdos_renyi(n: usize, p: f64, seed: u64) -> Result<GraphShiftOperator> {
    build_sbm_with_retries(n, 1, p, p, seed, DEFAULT_SBM_RETRIES)
}

/// Complete graph on `n` nodes, normalized (spectrum `{1, -1/(n-1), ...}`).
pub fn complete_graph(n: usize) -> Result<GraphShiftOperator> {
    if n < 2 {
        return Err(Error::InvalidParameter("complete graph needs n >= 2".into()));
    }
    let adj = Array2::from_shape_fn((n, n), |(i, j)| if i == j { 0.0 } else { 1.0 });
    GraphShiftOperator::from_adjacency_normalized(adj)
}

/// Path graph 0 - 1 - ... - (n-1), normalized.
pub fn path_graph(n: usize) -> Result<GraphShiftOperator> {
    if n < 2 {
        return Err(Error::InvalidParameter("path graph needs n >= 2".into()));
    }
    let mut adj = Array2::<f64>::zeros((n, n));
    for i in 0..n - 1 {
        adj[[i, i + 1]] = 1.0;
        adj[[i + 1, i]] = 1.0;
    }
    GraphShiftOperator::from_adjacency_normalized(adj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{frobenius, norm2, orthonormality_defect};
    use ndarray::array;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn complete_graph_spectrum() {
        let s = complete_graph(4).unwrap();
        let vals = s.eigenvalues();
        assert!((vals[3] - 1.0).abs() < 1e-12);
        for i in 0..3 {
            assert!((vals[i] + 1.0 / 3.0).abs() < 1e-12);
        }
        assert!(s.support().is_empty());
    }

    #[test]
    fn sbm_basic_invariants() {
        let s = build_sbm(100, 10, 0.8, 0.2, 1).unwrap();
        assert_eq!(s.n(), 100);
        // unit spectral norm after normalization
        assert!((s.spectral_norm() - 1.0).abs() < 1e-12);
        // exact symmetry
        for i in 0..100 {
            for j in 0..100 {
                assert_eq!(s.matrix()[[i, j]], s.matrix()[[j, i]]);
            }
        }
        // orthonormality of V
        assert!(orthonormality_defect(s.eigenvectors()) < 1e-10);
        // reconstruction residual
        let v = s.eigenvectors();
        let lam = Array2::from_diag(s.eigenvalues());
        let rec = v.dot(&lam).dot(&v.t());
        let resid = frobenius(&(&rec - s.matrix())) / frobenius(s.matrix());
        assert!(resid < 1e-9, "residual {resid}");
    }

    #[test]
    fn sbm_five_dominant_eigenvalues() {
        // 5 well-separated communities: eigengap between sorted positions 5 and 6
        let s = build_sbm(50, 5, 0.8, 0.2, 7).unwrap();
        let vals = s.eigenvalues();
        let mut mags: Vec<f64> = vals.iter().map(|x| x.abs()).collect();
        mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
        // top-5 magnitudes separated from the bulk
        assert!(
            mags[4] > 1.5 * mags[5],
            "expected eigengap after 5 dominant values: {:?}",
            &mags[..7]
        );
    }

    #[test]
    fn sbm_determinism_and_probability_validation() {
        let a = build_sbm(40, 4, 0.7, 0.1, 33).unwrap();
        let b = build_sbm(40, 4, 0.7, 0.1, 33).unwrap();
        assert_eq!(a.matrix(), b.matrix());
        assert!(matches!(
            build_sbm(10, 2, 1.2, 0.1, 0),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            build_sbm(10, 3, 0.5, 0.1, 0),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn sbm_disconnected_reports_retries() {
        let err = build_sbm_with_retries(10, 2, 0.0, 0.0, 5, 7).unwrap_err();
        match err {
            Error::Disconnected { retries } => assert_eq!(retries, 7),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn eigendecompose_known_cases() {
        let (v, vals) = eigendecompose(&Array2::<f64>::eye(3)).unwrap();
        for i in 0..3 {
            assert!((vals[i] - 1.0).abs() < 1e-12);
        }
        assert!(orthonormality_defect(&v) < 1e-12);

        let (v, vals) = eigendecompose(&array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        assert!((vals[0] + 1.0).abs() < 1e-12 && (vals[1] - 1.0).abs() < 1e-12);
        let r = 0.5f64.sqrt();
        assert!((v[[0, 0]] - r).abs() < 1e-12 && (v[[1, 0]] + r).abs() < 1e-12);

        let asym = array![[0.0, 1.0], [0.5, 0.0]];
        assert!(matches!(eigendecompose(&asym), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn gft_roundtrip_and_eigenvector_coordinates() {
        let s = build_sbm(30, 3, 0.8, 0.2, 2).unwrap();
        // x = v_3 maps to e_3
        let v3 = s.eigenvectors().column(2).to_owned();
        let xh = s.gft(&v3).unwrap();
        for i in 0..30 {
            let want = if i == 2 { 1.0 } else { 0.0 };
            assert!((xh[i] - want).abs() < 1e-10);
        }
        // zero maps to zero
        let zh = s.gft(&Array1::zeros(30)).unwrap();
        assert!(zh.iter().all(|x| *x == 0.0));
        // roundtrip identity on random signals, norm preserved
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        for _ in 0..100 {
            let x = Array1::from_shape_fn(30, |_| rng.random::<f64>() - 0.5);
            let back = s.igft(&s.gft(&x).unwrap()).unwrap();
            assert!(norm2(&(&back - &x)) <= 1e-10 * norm2(&x).max(1e-30));
            let xh = s.gft(&x).unwrap();
            assert!((norm2(&xh) - norm2(&x)).abs() < 1e-10);
        }
        assert!(matches!(
            s.gft(&Array1::zeros(7)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn support_mask_cases() {
        let k4 = complete_graph(4).unwrap();
        assert_eq!(support_mask(k4.matrix()).unwrap().len(), 0);

        let p3 = path_graph(3).unwrap();
        let mask = support_mask(p3.matrix()).unwrap();
        assert_eq!(mask.len(), 2);
        assert!(mask.contains(0, 2) && mask.contains(2, 0));
        assert!(!mask.contains(0, 1) && !mask.contains(1, 1));

        let s = build_sbm(50, 5, 0.8, 0.2, 11).unwrap();
        let mask = s.support();
        let non_edges = (0..50)
            .flat_map(|i| (0..50).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j && s.matrix()[[i, j]] == 0.0)
            .count();
        assert_eq!(mask.len(), non_edges);
    }

    #[test]
    fn edge_list_roundtrip_is_exact() {
        let s = build_sbm(24, 4, 0.9, 0.3, 17).unwrap();
        let mut buf = Vec::new();
        s.save_edge_list(&mut buf).unwrap();
        let loaded = GraphShiftOperator::load_edge_list(buf.as_slice()).unwrap();
        assert_eq!(loaded.matrix(), s.matrix());
    }

    #[test]
    fn edge_list_parse_errors_carry_line_numbers() {
        let bad = "3 1\n0 zzz 1.0\n";
        match GraphShiftOperator::load_edge_list(bad.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn graph_signal_synthesis_residual() {
        let s = complete_graph(5).unwrap();
        let x = Array1::from_shape_fn(5, |i| (i as f64) - 1.0);
        let sig = GraphSignal::analyzed(&s, x).unwrap();
        assert!(sig.synthesis_residual(&s).unwrap() < 1e-9 * norm2(&sig.values));
    }
}
