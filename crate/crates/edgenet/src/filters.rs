//! Edge-varying graph filters `y = sum_k Phi^(k) S^k x` and their constrained
//! subclasses: convolutional (scaled identities), node-varying (diagonals),
//! shift-invariant (sharing the graph eigenbasis on a fixed support), and
//! eigenvector-sharing (one common eigenbasis, possibly off the graph's).
//!
//! The shift-invariant parameter family is built by solving for admissible
//! eigenvalue vectors: `Phi = V diag(w) V^T` is zero on the forbidden index
//! set exactly when `w` lies in the nullspace of the constraint matrix whose
//! row for position `(i, j)` is the entrywise product of rows `i` and `j`
//! of `V` (the selected rows of a Khatri-Rao product).

use std::io::{BufRead, Write};
use std::sync::{Arc, OnceLock};

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::graph::{GraphShiftOperator, SupportMask};
use crate::linalg;

/// Relative cutoff for nullspace rank decisions in the SI-basis SVD.
pub const NULLSPACE_CUTOFF: f64 = 1e-10;

/// Orthonormality tolerance accepted for eigenvector-sharing bases.
pub const ORTHONORMALITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterClass {
    Convolutional,
    NodeVarying,
    ShiftInvariant,
    EigenvectorSharing,
    General,
}

impl FilterClass {
    pub fn tag(&self) -> &'static str {
        match self {
            FilterClass::Convolutional => "convolutional",
            FilterClass::NodeVarying => "node_varying",
            FilterClass::ShiftInvariant => "shift_invariant",
            FilterClass::EigenvectorSharing => "eigenvector_sharing",
            FilterClass::General => "general",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "convolutional" => Some(FilterClass::Convolutional),
            "node_varying" => Some(FilterClass::NodeVarying),
            "shift_invariant" => Some(FilterClass::ShiftInvariant),
            "eigenvector_sharing" => Some(FilterClass::EigenvectorSharing),
            "general" => Some(FilterClass::General),
            _ => None,
        }
    }
}

impl std::fmt::Display for FilterClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

/// One eigendecomposition `Phi = U diag(phi) U^T`.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub vectors: Array2<f64>,
    pub values: Array1<f64>,
}

/// Internal parameter storage, one variant per structural family.
#[derive(Debug, Clone)]
enum Repr {
    /// `Phi^(k) = h_k I`
    Scalars(Vec<f64>),
    /// `Phi^(k) = diag(d_k)`
    Diagonals(Vec<Array1<f64>>),
    /// `Phi^(k) = B diag(g_k) B^T` with a shared orthonormal basis.
    Spectral { basis: Arc<Array2<f64>>, gains: Vec<Array1<f64>> },
    /// Arbitrary dense matrices.
    Dense(Vec<Array2<f64>>),
}

/// Coefficients of a trained shift-invariant filter over its admissible basis.
#[derive(Debug, Clone)]
pub struct SiCoefficients {
    pub basis: Arc<SIBasis>,
    pub alphas: Vec<Array1<f64>>,
}

/// A set of `K + 1` filter parameter matrices with a class tag.
#[derive(Debug, Clone)]
pub struct FilterParams {
    n: usize,
    order: usize,
    class: FilterClass,
    repr: Repr,
    support: Option<SupportMask>,
    si: Option<SiCoefficients>,
    eigen_cache: OnceLock<Vec<EigenPair>>,
}

impl FilterParams {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Filter order `K` (there are `K + 1` parameter matrices).
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn class(&self) -> FilterClass {
        self.class
    }

    pub fn support(&self) -> Option<&SupportMask> {
        self.support.as_ref()
    }

    /// Materialize `Phi^(k)` as a dense matrix.
    pub fn matrix(&self, k: usize) -> Array2<f64> {
        assert!(k <= self.order);
        match &self.repr {
            Repr::Scalars(h) => Array2::from_diag_elem(self.n, h[k]),
            Repr::Diagonals(ds) => Array2::from_diag(&ds[k]),
            Repr::Spectral { basis, gains } => {
                let scaled = basis.as_ref() * &gains[k].clone().insert_axis(ndarray::Axis(0));
                scaled.dot(&basis.t())
            }
            Repr::Dense(ms) => ms[k].clone(),
        }
    }

    /// Apply to precomputed shifted signals `shifts[k] = S^k x`.
    pub fn apply_shifted(&self, shifts: &[Array1<f64>]) -> Array1<f64> {
        assert!(shifts.len() == self.order + 1);
        match &self.repr {
            Repr::Scalars(h) => {
                let mut y = Array1::<f64>::zeros(self.n);
                for (hk, z) in h.iter().zip(shifts) {
                    y.scaled_add(*hk, z);
                }
                y
            }
            Repr::Diagonals(ds) => {
                let mut y = Array1::<f64>::zeros(self.n);
                for (d, z) in ds.iter().zip(shifts) {
                    y += &(d * z);
                }
                y
            }
            Repr::Spectral { basis, gains } => {
                let mut acc = Array1::<f64>::zeros(self.n);
                for (g, z) in gains.iter().zip(shifts) {
                    let w = basis.t().dot(z);
                    acc += &(g * &w);
                }
                basis.dot(&acc)
            }
            Repr::Dense(ms) => {
                let mut y = Array1::<f64>::zeros(self.n);
                for (m, z) in ms.iter().zip(shifts) {
                    y += &m.dot(z);
                }
                y
            }
        }
    }

    /// `Phi^(k)^T v`, used by reverse-mode differentiation.
    pub fn matrix_t_apply(&self, k: usize, v: &Array1<f64>) -> Array1<f64> {
        match &self.repr {
            Repr::Scalars(h) => v * h[k],
            Repr::Diagonals(ds) => &ds[k] * v,
            // B diag(g) B^T is symmetric
            Repr::Spectral { basis, gains } => {
                let w = basis.t().dot(v);
                basis.dot(&(&gains[k] * &w))
            }
            Repr::Dense(ms) => ms[k].t().dot(v),
        }
    }

    /// Eigendecompositions of the parameter matrices, computed on demand.
    ///
    /// Structured classes report their defining decomposition (identity basis
    /// for scalars and diagonals, the shared basis for spectral builds);
    /// dense matrices are symmetrized as `(Phi + Phi^T) / 2` first.
    pub fn eigen_pairs(&self) -> &[EigenPair] {
        self.eigen_cache.get_or_init(|| match &self.repr {
            Repr::Scalars(h) => h
                .iter()
                .map(|&hk| EigenPair {
                    vectors: Array2::eye(self.n),
                    values: Array1::from_elem(self.n, hk),
                })
                .collect(),
            Repr::Diagonals(ds) => ds
                .iter()
                .map(|d| EigenPair { vectors: Array2::eye(self.n), values: d.clone() })
                .collect(),
            Repr::Spectral { basis, gains } => gains
                .iter()
                .map(|g| EigenPair { vectors: basis.as_ref().clone(), values: g.clone() })
                .collect(),
            Repr::Dense(ms) => ms
                .iter()
                .map(|m| {
                    let sym = 0.5 * (m + &m.t());
                    let (vectors, values) = linalg::eigh_sym(&sym);
                    EigenPair { vectors, values }
                })
                .collect(),
        })
    }

    /// Trained shift-invariant coefficients, when this filter carries them.
    pub fn si_coefficients(&self) -> Option<&SiCoefficients> {
        self.si.as_ref()
    }

    pub(crate) fn scalars(&self) -> Option<&[f64]> {
        match &self.repr {
            Repr::Scalars(h) => Some(h),
            _ => None,
        }
    }

    pub(crate) fn scalars_mut(&mut self) -> Option<&mut Vec<f64>> {
        self.eigen_cache = OnceLock::new();
        match &mut self.repr {
            Repr::Scalars(h) => Some(h),
            _ => None,
        }
    }

    pub(crate) fn diagonals_mut(&mut self) -> Option<&mut Vec<Array1<f64>>> {
        self.eigen_cache = OnceLock::new();
        match &mut self.repr {
            Repr::Diagonals(ds) => Some(ds),
            _ => None,
        }
    }

    pub(crate) fn dense_mut(&mut self) -> Option<&mut Vec<Array2<f64>>> {
        self.eigen_cache = OnceLock::new();
        match &mut self.repr {
            Repr::Dense(ms) => Some(ms),
            _ => None,
        }
    }

    /// Scale every parameter matrix by `c` (responses scale linearly).
    ///
    /// A nonnegative `c` keeps any computed eigendecompositions, with the
    /// eigenvalues scaled in place; a negative `c` discards them.
    pub fn scale(&mut self, c: f64) {
        let kept = if c >= 0.0 { self.eigen_cache.take() } else { None };
        self.eigen_cache = OnceLock::new();
        if let Some(mut pairs) = kept {
            for p in &mut pairs {
                p.values *= c;
            }
            let _ = self.eigen_cache.set(pairs);
        }
        match &mut self.repr {
            Repr::Scalars(h) => h.iter_mut().for_each(|x| *x *= c),
            Repr::Diagonals(ds) => ds.iter_mut().for_each(|d| *d *= c),
            Repr::Spectral { gains, .. } => gains.iter_mut().for_each(|g| *g *= c),
            Repr::Dense(ms) => ms.iter_mut().for_each(|m| *m *= c),
        }
        if let Some(si) = &mut self.si {
            si.alphas.iter_mut().for_each(|a| *a *= c);
        }
    }

    /// Update the gains of a trained SI filter from new alpha coefficients.
    pub(crate) fn set_si_alphas(&mut self, alphas: Vec<Array1<f64>>) {
        let si = self.si.as_mut().expect("not an SI-parameterized filter");
        let basis = si.basis.clone();
        si.alphas = alphas;
        let gains: Vec<Array1<f64>> =
            si.alphas.iter().map(|a| basis.vectors().dot(a)).collect();
        self.eigen_cache = OnceLock::new();
        match &mut self.repr {
            Repr::Spectral { gains: g, .. } => *g = gains,
            _ => unreachable!("SI filters use the spectral representation"),
        }
    }
}

/// Apply the filter: `y = sum_k Phi^(k) S^k x`, computed by iterated shifts
/// of the signal (never by forming dense powers of `S`).
pub fn apply(
    params: &FilterParams,
    s: &GraphShiftOperator,
    x: &Array1<f64>,
) -> Result<Array1<f64>> {
    if params.n() != s.n() {
        return Err(Error::DimensionMismatch { expected: s.n(), got: params.n() });
    }
    if x.len() != s.n() {
        return Err(Error::DimensionMismatch { expected: s.n(), got: x.len() });
    }
    let shifts = shift_sequence(s, x, params.order());
    Ok(params.apply_shifted(&shifts))
}

/// `[x, Sx, S^2 x, ..., S^K x]`.
pub fn shift_sequence(s: &GraphShiftOperator, x: &Array1<f64>, order: usize) -> Vec<Array1<f64>> {
    let mut shifts = Vec::with_capacity(order + 1);
    shifts.push(x.clone());
    for k in 1..=order {
        let next = s.shift(&shifts[k - 1]);
        shifts.push(next);
    }
    shifts
}

/// Convolutional filter: `Phi^(k) = h_k I`.
pub fn make_convolutional(taps: &[f64], n: usize) -> Result<FilterParams> {
    if taps.is_empty() {
        return Err(Error::InvalidParameter("need at least one tap".into()));
    }
    Ok(FilterParams {
        n,
        order: taps.len() - 1,
        class: FilterClass::Convolutional,
        repr: Repr::Scalars(taps.to_vec()),
        support: None,
        si: None,
        eigen_cache: OnceLock::new(),
    })
}

/// Node-varying filter: `Phi^(k) = diag(d_k)`.
pub fn make_node_varying(diags: Vec<Array1<f64>>) -> Result<FilterParams> {
    let n = diags.first().map(|d| d.len()).ok_or_else(|| {
        Error::InvalidParameter("need at least one diagonal".into())
    })?;
    if diags.iter().any(|d| d.len() != n) {
        return Err(Error::InvalidParameter("diagonals must share a length".into()));
    }
    Ok(FilterParams {
        n,
        order: diags.len() - 1,
        class: FilterClass::NodeVarying,
        repr: Repr::Diagonals(diags),
        support: None,
        si: None,
        eigen_cache: OnceLock::new(),
    })
}

/// Eigenvector-sharing filter: `Phi^(k) = U diag(phi_k) U^T` for a common
/// orthonormal `U`. The support mask is not enforced here; the stability
/// analysis of this class rests on eigenstructure alone.
pub fn make_es_params(u: Array2<f64>, phis: Vec<Array1<f64>>) -> Result<FilterParams> {
    let n = u.nrows();
    if u.ncols() != n {
        return Err(Error::NotSquare(u.nrows(), u.ncols()));
    }
    let defect = linalg::orthonormality_defect(&u);
    if defect > ORTHONORMALITY_TOL {
        return Err(Error::NotOrthonormal(defect));
    }
    if phis.is_empty() || phis.iter().any(|p| p.len() != n) {
        return Err(Error::InvalidParameter("need K + 1 length-n gain vectors".into()));
    }
    let order = phis.len() - 1;
    Ok(FilterParams {
        n,
        order,
        class: FilterClass::EigenvectorSharing,
        repr: Repr::Spectral { basis: Arc::new(u), gains: phis },
        support: None,
        si: None,
        eigen_cache: OnceLock::new(),
    })
}

/// General edge-varying filter from dense matrices. When a support mask is
/// given the constrained entries are zeroed (projection, not rejection).
pub fn make_general(
    mut mats: Vec<Array2<f64>>,
    support: Option<SupportMask>,
) -> Result<FilterParams> {
    let n = match mats.first() {
        Some(m) if m.nrows() == m.ncols() => m.nrows(),
        Some(m) => return Err(Error::NotSquare(m.nrows(), m.ncols())),
        None => return Err(Error::InvalidParameter("need at least one matrix".into())),
    };
    if mats.iter().any(|m| m.dim() != (n, n)) {
        return Err(Error::DimensionMismatch { expected: n, got: 0 });
    }
    if let Some(mask) = &support {
        if mask.n() != n {
            return Err(Error::DimensionMismatch { expected: n, got: mask.n() });
        }
        for m in &mut mats {
            mask.project(m);
        }
    }
    Ok(FilterParams {
        n,
        order: mats.len() - 1,
        class: FilterClass::General,
        repr: Repr::Dense(mats),
        support,
        si: None,
        eigen_cache: OnceLock::new(),
    })
}

/// General filter assembled from explicit per-order eigendecompositions
/// `Phi^(k) = U_k diag(g_k) U_k^T`.
///
/// The provided decompositions are kept verbatim for spectral analysis, so
/// the response index pairing stays coherent across orders; a plain
/// [`make_general`] would recover sorted decompositions instead. No support
/// projection is applied (it would invalidate the factorizations).
pub fn make_general_from_eigen(
    decompositions: Vec<(Array2<f64>, Array1<f64>)>,
) -> Result<FilterParams> {
    let n = match decompositions.first() {
        Some((u, _)) if u.nrows() == u.ncols() => u.nrows(),
        Some((u, _)) => return Err(Error::NotSquare(u.nrows(), u.ncols())),
        None => return Err(Error::InvalidParameter("need at least one decomposition".into())),
    };
    let mut mats = Vec::with_capacity(decompositions.len());
    let mut pairs = Vec::with_capacity(decompositions.len());
    for (u, gains) in decompositions {
        if u.dim() != (n, n) || gains.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: gains.len() });
        }
        let defect = linalg::orthonormality_defect(&u);
        if defect > ORTHONORMALITY_TOL {
            return Err(Error::NotOrthonormal(defect));
        }
        let scaled = &u * &gains.clone().insert_axis(ndarray::Axis(0));
        mats.push(scaled.dot(&u.t()));
        pairs.push(EigenPair { vectors: u, values: gains });
    }
    let params = FilterParams {
        n,
        order: mats.len() - 1,
        class: FilterClass::General,
        repr: Repr::Dense(mats),
        support: None,
        si: None,
        eigen_cache: OnceLock::new(),
    };
    let _ = params.eigen_cache.set(pairs);
    Ok(params)
}

/// Orthonormal basis of admissible eigenvalue vectors for shift-invariant
/// filters on a fixed support.
#[derive(Debug)]
pub struct SIBasis {
    basis: Array2<f64>,
    eigvecs: Array2<f64>,
    support: SupportMask,
}

impl SIBasis {
    /// Basis vectors as columns (`n x p`, orthonormal).
    pub fn vectors(&self) -> &Array2<f64> {
        &self.basis
    }

    /// Dimension `p` of the admissible space (always at least 1).
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// The graph eigenbasis this basis was built against.
    pub fn eigenbasis(&self) -> &Array2<f64> {
        &self.eigvecs
    }

    pub fn support(&self) -> &SupportMask {
        &self.support
    }

    /// Residual of projecting `w` onto the admissible span.
    pub fn span_residual(&self, w: &Array1<f64>) -> f64 {
        let coeffs = self.basis.t().dot(w);
        let back = self.basis.dot(&coeffs);
        linalg::norm2(&(w - &back))
    }

    /// Coefficients of the orthogonal projection of `w` onto the span.
    pub fn coefficients_for(&self, w: &Array1<f64>) -> Array1<f64> {
        self.basis.t().dot(w)
    }
}

/// Solve for the admissible eigenvalue vectors of shift-invariant filters.
///
/// Builds the `|A| x n` constraint matrix whose row for `(i, j)` in the
/// forbidden set is the entrywise product of rows `i` and `j` of `V`, and
/// returns an orthonormal nullspace basis (SVD, relative cutoff
/// [`NULLSPACE_CUTOFF`]). The all-ones vector is always admissible (it gives
/// the identity filter), so the dimension is at least 1.
pub fn build_si_basis(s: &GraphShiftOperator) -> SIBasis {
    let n = s.n();
    let v = s.eigenvectors();
    let mask = s.support().clone();
    let basis = if mask.is_empty() {
        Array2::eye(n)
    } else {
        let rows: Vec<(usize, usize)> = mask.iter().collect();
        let mut m = Array2::<f64>::zeros((rows.len(), n));
        for (r, &(i, j)) in rows.iter().enumerate() {
            for c in 0..n {
                m[[r, c]] = v[[i, c]] * v[[j, c]];
            }
        }
        linalg::svd_nullspace(&m, NULLSPACE_CUTOFF)
    };
    debug_assert!(basis.ncols() >= 1);
    SIBasis { basis, eigvecs: v.clone(), support: mask }
}

/// Shift-invariant filter from basis coefficients:
/// `Phi^(k) = V diag(B alpha_k) V^T`.
pub fn make_si_params(basis: &Arc<SIBasis>, alphas: Vec<Array1<f64>>) -> Result<FilterParams> {
    let p = basis.dim();
    if alphas.is_empty() {
        return Err(Error::InvalidParameter("need K + 1 coefficient vectors".into()));
    }
    if let Some(bad) = alphas.iter().find(|a| a.len() != p) {
        return Err(Error::DimensionMismatch { expected: p, got: bad.len() });
    }
    let order = alphas.len() - 1;
    let n = basis.eigvecs.nrows();
    let gains: Vec<Array1<f64>> = alphas.iter().map(|a| basis.vectors().dot(a)).collect();
    Ok(FilterParams {
        n,
        order,
        class: FilterClass::ShiftInvariant,
        repr: Repr::Spectral { basis: Arc::new(basis.eigvecs.clone()), gains },
        support: Some(basis.support.clone()),
        si: Some(SiCoefficients { basis: basis.clone(), alphas }),
        eigen_cache: OnceLock::new(),
    })
}

/// Shift-invariant filter directly from admissible eigenvalue vectors.
/// Callers are responsible for keeping each `w` inside the admissible span;
/// use [`make_si_params`] for the guaranteed construction.
pub fn make_si_from_gains(
    eigvecs: &Array2<f64>,
    gains: Vec<Array1<f64>>,
    support: Option<SupportMask>,
) -> Result<FilterParams> {
    let n = eigvecs.nrows();
    if gains.is_empty() || gains.iter().any(|g| g.len() != n) {
        return Err(Error::InvalidParameter("need K + 1 length-n gain vectors".into()));
    }
    let order = gains.len() - 1;
    Ok(FilterParams {
        n,
        order,
        class: FilterClass::ShiftInvariant,
        repr: Repr::Spectral { basis: Arc::new(eigvecs.clone()), gains },
        support,
        si: None,
        eigen_cache: OnceLock::new(),
    })
}

/// Relative commutator defect `||Phi S - S Phi||_F / (||Phi||_F ||S||_F)`,
/// maximized over the parameter matrices. Shift-invariant filters score
/// (numerically) zero against the operator they were built for.
pub fn commutator_defect(params: &FilterParams, s: &GraphShiftOperator) -> f64 {
    let sf = linalg::frobenius(s.matrix());
    let mut worst = 0.0f64;
    for k in 0..=params.order() {
        let phi = params.matrix(k);
        let pf = linalg::frobenius(&phi);
        if pf == 0.0 {
            continue;
        }
        let comm = phi.dot(s.matrix()) - s.matrix().dot(&phi);
        worst = worst.max(linalg::frobenius(&comm) / (pf * sf));
    }
    worst
}

/// Plain-text filter format: header `n K class_tag`, then the parameter
/// blocks (scalars for convolutional, diagonals for node-varying, dense
/// row-major matrices otherwise).
pub fn save_filter<W: Write>(params: &FilterParams, mut w: W) -> Result<()> {
    writeln!(w, "{} {} {}", params.n(), params.order(), params.class().tag())?;
    match (&params.repr, params.class()) {
        (Repr::Scalars(h), _) => {
            let line: Vec<String> = h.iter().map(|x| x.to_string()).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        (Repr::Diagonals(ds), _) => {
            for d in ds {
                let line: Vec<String> = d.iter().map(|x| x.to_string()).collect();
                writeln!(w, "{}", line.join(" "))?;
            }
        }
        _ => {
            for k in 0..=params.order() {
                let m = params.matrix(k);
                for i in 0..params.n() {
                    let line: Vec<String> = m.row(i).iter().map(|x| x.to_string()).collect();
                    writeln!(w, "{}", line.join(" "))?;
                }
            }
        }
    }
    Ok(())
}

/// Parse the format written by [`save_filter`]. Spectral factorizations are
/// not stored, so shift-invariant and eigenvector-sharing filters come back
/// with dense parameter matrices (same class tag, identical action).
pub fn load_filter<R: BufRead>(r: R) -> Result<FilterParams> {
    let mut lines = r.lines().enumerate();
    let (_, header) =
        lines.next().ok_or_else(|| Error::Parse { line: 1, msg: "empty file".into() })?;
    let header = header?;
    let mut parts = header.split_whitespace();
    let n: usize = parts
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::Parse { line: 1, msg: "bad node count".into() })?;
    let order: usize = parts
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::Parse { line: 1, msg: "bad order".into() })?;
    let class = parts
        .next()
        .and_then(FilterClass::from_tag)
        .ok_or_else(|| Error::Parse { line: 1, msg: "bad class tag".into() })?;

    let mut next_row = |expected: usize| -> Result<Vec<f64>> {
        let (idx, line) = lines
            .next()
            .ok_or_else(|| Error::Parse { line: 0, msg: "unexpected end of file".into() })?;
        let lineno = idx + 1;
        let line = line?;
        let row: std::result::Result<Vec<f64>, _> =
            line.split_whitespace().map(|t| t.parse::<f64>()).collect();
        let row = row.map_err(|_| Error::Parse { line: lineno, msg: "bad float".into() })?;
        if row.len() != expected {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected {expected} values, got {}", row.len()),
            });
        }
        Ok(row)
    };

    match class {
        FilterClass::Convolutional => {
            let taps = next_row(order + 1)?;
            make_convolutional(&taps, n)
        }
        FilterClass::NodeVarying => {
            let mut diags = Vec::with_capacity(order + 1);
            for _ in 0..=order {
                diags.push(Array1::from_vec(next_row(n)?));
            }
            make_node_varying(diags)
        }
        _ => {
            let mut mats = Vec::with_capacity(order + 1);
            for _ in 0..=order {
                let mut m = Array2::<f64>::zeros((n, n));
                for i in 0..n {
                    let row = next_row(n)?;
                    for (j, v) in row.into_iter().enumerate() {
                        m[[i, j]] = v;
                    }
                }
                mats.push(m);
            }
            let mut params = make_general(mats, None)?;
            params.class = class;
            Ok(params)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_sbm, complete_graph, path_graph};
    use crate::linalg::norm2;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn random_vec(rng: &mut ChaCha20Rng, n: usize) -> Array1<f64> {
        Array1::from_shape_fn(n, |_| rng.random::<f64>() * 2.0 - 1.0)
    }

    fn random_mat(rng: &mut ChaCha20Rng, n: usize) -> Array2<f64> {
        Array2::from_shape_fn((n, n), |_| rng.random::<f64>() * 2.0 - 1.0)
    }

    /// Brute-force oracle: y = sum_k Phi^(k) (S^k as a dense power) x.
    fn apply_matrix_power_oracle(
        params: &FilterParams,
        s: &GraphShiftOperator,
        x: &Array1<f64>,
    ) -> Array1<f64> {
        let n = s.n();
        let mut power = Array2::<f64>::eye(n);
        let mut y = Array1::<f64>::zeros(n);
        for k in 0..=params.order() {
            if k > 0 {
                power = power.dot(s.matrix());
            }
            y += &params.matrix(k).dot(&power).dot(x);
        }
        y
    }

    #[test]
    fn identity_and_shift_filters() {
        let s = build_sbm(12, 3, 0.9, 0.3, 4).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let x = random_vec(&mut rng, 12);

        let ident = make_convolutional(&[1.0, 0.0, 0.0], 12).unwrap();
        let y = apply(&ident, &s, &x).unwrap();
        assert!(norm2(&(&y - &x)) < 1e-14);

        let shift = make_convolutional(&[0.0, 1.0], 12).unwrap();
        let y = apply(&shift, &s, &x).unwrap();
        assert!(norm2(&(&y - &s.shift(&x))) < 1e-14);
    }

    #[test]
    fn general_filter_matches_matrix_power_oracle() {
        let s = build_sbm(10, 2, 0.9, 0.4, 8).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let mats: Vec<Array2<f64>> = (0..4).map(|_| random_mat(&mut rng, 10)).collect();
        let params = make_general(mats, None).unwrap();
        let x = random_vec(&mut rng, 10);
        let got = apply(&params, &s, &x).unwrap();
        let want = apply_matrix_power_oracle(&params, &s, &x);
        assert!(norm2(&(&got - &want)) <= 1e-9 * norm2(&want));
    }

    #[test]
    fn supported_general_filter_matches_oracle() {
        let s = build_sbm(8, 2, 0.9, 0.5, 3).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let mats: Vec<Array2<f64>> = (0..3).map(|_| random_mat(&mut rng, 8)).collect();
        let params = make_general(mats, Some(s.support().clone())).unwrap();
        for k in 0..=2 {
            assert_eq!(s.support().violation(&params.matrix(k)), 0.0);
        }
        let x = random_vec(&mut rng, 8);
        let got = apply(&params, &s, &x).unwrap();
        let want = apply_matrix_power_oracle(&params, &s, &x);
        assert!(norm2(&(&got - &want)) <= 1e-9 * norm2(&want).max(1e-12));
    }

    #[test]
    fn si_basis_on_complete_graph_is_full() {
        let s = complete_graph(5).unwrap();
        let basis = build_si_basis(&s);
        assert_eq!(basis.dim(), 5);
    }

    #[test]
    fn si_basis_path_graph_cross_checked() {
        let s = path_graph(3).unwrap();
        let basis = build_si_basis(&s);
        // every basis vector yields a support-respecting, commuting filter
        for b in 0..basis.dim() {
            let w = basis.vectors().column(b).to_owned();
            let params = make_si_from_gains(s.eigenvectors(), vec![w], None).unwrap();
            let phi = params.matrix(0);
            let scale = crate::linalg::frobenius(&phi);
            assert!(s.support().violation(&phi) < 1e-8 * scale.max(1e-12));
            assert!(commutator_defect(&params, &s) < 1e-8);
        }
        // brute-force dimension check: nullspace of the explicit constraint system
        let v = s.eigenvectors();
        let rows: Vec<(usize, usize)> = s.support().iter().collect();
        let mut m = Array2::<f64>::zeros((rows.len(), 3));
        for (r, &(i, j)) in rows.iter().enumerate() {
            for c in 0..3 {
                m[[r, c]] = v[[i, c]] * v[[j, c]];
            }
        }
        let null = crate::linalg::svd_nullspace(&m, 1e-10);
        assert_eq!(basis.dim(), null.ncols());
    }

    #[test]
    fn si_basis_contains_eigenvalue_vector() {
        // w = Lambda gives Phi = S, which trivially shares support and eigenvectors
        let s = build_sbm(20, 4, 0.8, 0.2, 6).unwrap();
        let basis = build_si_basis(&s);
        let lam = s.eigenvalues().clone();
        assert!(basis.span_residual(&lam) < 1e-8);
        let ones = Array1::from_elem(20, 1.0);
        assert!(basis.span_residual(&ones) < 1e-8);
    }

    #[test]
    fn make_si_params_constant_direction_is_identity() {
        let s = build_sbm(20, 4, 0.8, 0.2, 10).unwrap();
        let basis = Arc::new(build_si_basis(&s));
        let h = 0.7f64;
        let target = Array1::from_elem(20, h);
        let alpha = basis.coefficients_for(&target);
        let params = make_si_params(&basis, vec![alpha]).unwrap();
        let phi = params.matrix(0);
        let diff = &phi - &Array2::from_diag_elem(20, h);
        assert!(crate::linalg::frobenius(&diff) < 1e-10);
    }

    #[test]
    fn make_si_params_random_commutes_and_zero_is_zero() {
        let s = build_sbm(16, 4, 0.9, 0.2, 12).unwrap();
        let basis = Arc::new(build_si_basis(&s));
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let alphas: Vec<Array1<f64>> =
            (0..3).map(|_| random_vec(&mut rng, basis.dim())).collect();
        let params = make_si_params(&basis, alphas).unwrap();
        assert!(commutator_defect(&params, &s) < 1e-8);
        for k in 0..=2 {
            let phi = params.matrix(k);
            let scale = crate::linalg::frobenius(&phi).max(1e-12);
            assert!(s.support().violation(&phi) < 1e-8 * scale);
        }

        let zero = make_si_params(&basis, vec![Array1::zeros(basis.dim()); 2]).unwrap();
        let x = random_vec(&mut rng, 16);
        let y = apply(&zero, &s, &x).unwrap();
        assert!(norm2(&y) == 0.0);

        // wrong alpha length
        assert!(make_si_params(&basis, vec![Array1::zeros(basis.dim() + 1)]).is_err());
    }

    #[test]
    fn es_params_cases() {
        let s = build_sbm(10, 2, 0.9, 0.4, 5).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let phis: Vec<Array1<f64>> = (0..3).map(|_| random_vec(&mut rng, 10)).collect();

        // U = V: passes the shift-invariance commutator test
        let aligned = make_es_params(s.eigenvectors().clone(), phis.clone()).unwrap();
        assert!(commutator_defect(&aligned, &s) < 1e-8);

        // U = I: diagonal matrices, equal to the node-varying construction
        let diag = make_es_params(Array2::eye(10), phis.clone()).unwrap();
        let nv = make_node_varying(phis.clone()).unwrap();
        for k in 0..=2 {
            let d = &diag.matrix(k) - &nv.matrix(k);
            assert!(crate::linalg::frobenius(&d) < 1e-12);
        }

        // misaligned U: generally does not commute with S
        let u = crate::spectral::rotate_basis(s.eigenvectors(), 0.1, &[(0, 1)]).unwrap();
        let misaligned = make_es_params(u, phis).unwrap();
        assert!(commutator_defect(&misaligned, &s) > 1e-6);

        // non-orthonormal basis rejected
        let bad = Array2::from_elem((10, 10), 0.3);
        assert!(matches!(
            make_es_params(bad, vec![Array1::zeros(10)]),
            Err(Error::NotOrthonormal(_))
        ));
    }

    #[test]
    fn class_nesting_conv_general_equivalence() {
        let s = build_sbm(10, 2, 0.9, 0.4, 9).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let taps = [0.3, -0.5, 0.2];
        let conv = make_convolutional(&taps, 10).unwrap();
        let gen = make_general(
            taps.iter().map(|&h| Array2::from_diag_elem(10, h)).collect(),
            None,
        )
        .unwrap();
        let x = random_vec(&mut rng, 10);
        let a = apply(&conv, &s, &x).unwrap();
        let b = apply(&gen, &s, &x).unwrap();
        assert!(norm2(&(&a - &b)) < 1e-12);
        // convolutional filters pass the SI commutator test
        assert!(commutator_defect(&conv, &s) < 1e-10);
        // K=0 general filter with Phi = S returns S x
        let gs = make_general(vec![s.matrix().clone()], None).unwrap();
        let y = apply(&gs, &s, &x).unwrap();
        assert!(norm2(&(&y - &s.shift(&x))) < 1e-12);
    }

    #[test]
    fn node_varying_matrices_commute_pairwise() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let nv = make_node_varying((0..3).map(|_| random_vec(&mut rng, 8)).collect()).unwrap();
        for a in 0..=2 {
            for b in 0..=2 {
                let ma = nv.matrix(a);
                let mb = nv.matrix(b);
                let comm = ma.dot(&mb) - mb.dot(&ma);
                assert!(crate::linalg::frobenius(&comm) < 1e-12);
            }
        }
    }

    #[test]
    fn shift_invariance_property_on_signals() {
        // H(Sx) = S H(x) for SI filters, 50 random signals
        let s = build_sbm(14, 2, 0.9, 0.4, 13).unwrap();
        let basis = Arc::new(build_si_basis(&s));
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let alphas: Vec<Array1<f64>> =
            (0..3).map(|_| random_vec(&mut rng, basis.dim())).collect();
        let params = make_si_params(&basis, alphas).unwrap();
        for _ in 0..50 {
            let x = random_vec(&mut rng, 14);
            let lhs = apply(&params, &s, &s.shift(&x)).unwrap();
            let rhs = s.shift(&apply(&params, &s, &x).unwrap());
            assert!(norm2(&(&lhs - &rhs)) < 1e-7 * norm2(&x));
        }
    }

    #[test]
    fn supported_apply_respects_k_hop_reachability() {
        let s = path_graph(6).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(14);
        let mats: Vec<Array2<f64>> = (0..3).map(|_| random_mat(&mut rng, 6)).collect();
        let params = make_general(mats, Some(s.support().clone())).unwrap();
        // impulse at node 0; K = 2 with 1-hop parameter support reaches <= 3 hops
        let mut e0 = Array1::<f64>::zeros(6);
        e0[0] = 1.0;
        let y = apply(&params, &s, &e0).unwrap();
        assert!(y[4].abs() <= 1e-10 && y[5].abs() <= 1e-10);
    }

    #[test]
    fn convolutional_filters_are_permutation_equivariant() {
        let s = build_sbm(12, 3, 0.9, 0.3, 21).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let taps: Vec<f64> = (0..4).map(|_| rng.random::<f64>() - 0.5).collect();
        let params = make_convolutional(&taps, 12).unwrap();
        let x = random_vec(&mut rng, 12);

        // random permutation
        let mut perm: Vec<usize> = (0..12).collect();
        use rand::seq::SliceRandom;
        perm.shuffle(&mut rng);
        let p = {
            let mut p = Array2::<f64>::zeros((12, 12));
            for (i, &pi) in perm.iter().enumerate() {
                p[[i, pi]] = 1.0;
            }
            p
        };
        let sp = GraphShiftOperator::from_matrix(p.t().dot(s.matrix()).dot(&p)).unwrap();
        let lhs = apply(&params, &sp, &p.t().dot(&x)).unwrap();
        let rhs = p.t().dot(&apply(&params, &s, &x).unwrap());
        assert!(norm2(&(&lhs - &rhs)) < 1e-9);
    }

    #[test]
    fn filter_save_load_roundtrip() {
        let s = build_sbm(8, 2, 0.9, 0.4, 30).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let x = random_vec(&mut rng, 8);

        let conv = make_convolutional(&[0.25, -1.5, 0.125], 8).unwrap();
        let nv = make_node_varying((0..2).map(|_| random_vec(&mut rng, 8)).collect()).unwrap();
        let gen =
            make_general((0..2).map(|_| random_mat(&mut rng, 8)).collect(), None).unwrap();
        for params in [&conv, &nv, &gen] {
            let mut buf = Vec::new();
            save_filter(params, &mut buf).unwrap();
            let loaded = load_filter(buf.as_slice()).unwrap();
            assert_eq!(loaded.class(), params.class());
            assert_eq!(loaded.order(), params.order());
            let a = apply(params, &s, &x).unwrap();
            let b = apply(&loaded, &s, &x).unwrap();
            assert!(norm2(&(&a - &b)) < 1e-12);
        }
    }
}
