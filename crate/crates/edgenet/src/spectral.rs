//! Frequency-domain analysis of edge-varying filters: univariate and
//! multivariate frequency responses, spectral-domain reconstructions of
//! filter outputs, eigenvector misalignment, and integral-Lipschitz constant
//! estimation.
//!
//! The spectral reconstructions are deliberately written as the literal
//! index sums (cost `O(n^3 K)`): they serve as independent oracles against
//! the shift-domain `apply`, so they must not share its code path.

use std::io::Write;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::filters::{FilterClass, FilterParams};
use crate::graph::GraphShiftOperator;
use crate::linalg;

/// Absolute threshold below which a scaling-variable denominator is treated
/// as zero and the degenerate convention applies.
pub const DEGENERATE_DENOMINATOR: f64 = 1e-12;

/// Default evaluation grid for Lipschitz-constant estimation on `[-1, 1]`.
pub const DEFAULT_LIPSCHITZ_GRID: usize = 2001;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResponseKind {
    Univariate,
    Multivariate,
}

/// Per-index polynomial response coefficients: row `i`, column `k` holds
/// `phi_i^(k)`.
///
/// Univariate rows evaluate as `h_i(l) = sum_k phi_i^(k) l^k`; multivariate
/// rows as `h_i(l) = sum_k phi_i^(k) prod_{m <= k} l^(m)` over a length-`K`
/// frequency vector.
#[derive(Debug, Clone)]
pub struct FrequencyResponse {
    coefficients: Array2<f64>,
    kind: ResponseKind,
}

impl FrequencyResponse {
    pub fn new(coefficients: Array2<f64>, kind: ResponseKind) -> Self {
        Self { coefficients, kind }
    }

    pub fn rows(&self) -> usize {
        self.coefficients.nrows()
    }

    /// Polynomial order `K`.
    pub fn order(&self) -> usize {
        self.coefficients.ncols() - 1
    }

    pub fn kind(&self) -> ResponseKind {
        self.kind
    }

    pub fn coefficients(&self) -> &Array2<f64> {
        &self.coefficients
    }

    /// Horner evaluation of row `i` at `lambda`.
    pub fn eval(&self, i: usize, lambda: f64) -> f64 {
        let k = self.order();
        let mut acc = self.coefficients[[i, k]];
        for kk in (0..k).rev() {
            acc = acc * lambda + self.coefficients[[i, kk]];
        }
        acc
    }

    /// Power-sum evaluation, kept as an independent check on [`eval`](Self::eval).
    pub fn eval_naive(&self, i: usize, lambda: f64) -> f64 {
        (0..=self.order())
            .map(|k| self.coefficients[[i, k]] * lambda.powi(k as i32))
            .sum()
    }

    /// Derivative of row `i` at `lambda`.
    pub fn eval_derivative(&self, i: usize, lambda: f64) -> f64 {
        let mut acc = 0.0;
        for k in (1..=self.order()).rev() {
            acc = acc * lambda + k as f64 * self.coefficients[[i, k]];
        }
        acc
    }

    /// Multivariate evaluation of row `i` at the frequency vector
    /// `l = (l^(1), ..., l^(K))`.
    pub fn eval_multivariate(&self, i: usize, lambdas: &[f64]) -> f64 {
        debug_assert_eq!(lambdas.len(), self.order());
        let mut prod = 1.0;
        let mut acc = self.coefficients[[i, 0]];
        for (k, l) in lambdas.iter().enumerate() {
            prod *= l;
            acc += self.coefficients[[i, k + 1]] * prod;
        }
        acc
    }
}

/// Univariate response of a shift-invariant (or convolutional) filter:
/// `phi_i^(k) = (V^T Phi^(k) V)_{ii}`.
pub fn si_response(params: &FilterParams, s: &GraphShiftOperator) -> Result<FrequencyResponse> {
    match params.class() {
        FilterClass::ShiftInvariant | FilterClass::Convolutional => {}
        other => {
            return Err(Error::WrongClass {
                expected: "shift_invariant or convolutional".into(),
                got: other.tag().into(),
            })
        }
    }
    let n = s.n();
    if params.n() != n {
        return Err(Error::DimensionMismatch { expected: n, got: params.n() });
    }
    let v = s.eigenvectors();
    let mut coeffs = Array2::<f64>::zeros((n, params.order() + 1));
    for k in 0..=params.order() {
        let w = params.matrix(k).dot(v);
        for i in 0..n {
            coeffs[[i, k]] = v.column(i).dot(&w.column(i));
        }
    }
    Ok(FrequencyResponse::new(coeffs, ResponseKind::Univariate))
}

/// Univariate response of an eigenvector-sharing filter: row `j` holds the
/// eigenvalues of the parameter matrices in their shared basis.
pub fn es_response(params: &FilterParams) -> Result<FrequencyResponse> {
    match params.class() {
        FilterClass::EigenvectorSharing
        | FilterClass::NodeVarying
        | FilterClass::ShiftInvariant
        | FilterClass::Convolutional => {}
        other => {
            return Err(Error::WrongClass {
                expected: "a shared-eigenbasis class".into(),
                got: other.tag().into(),
            })
        }
    }
    Ok(response_from_eigenvalues(params, ResponseKind::Univariate))
}

/// Multivariate response of a general edge-varying filter: row `j` pairs the
/// `j`-th eigenvalue of each parameter matrix across its own decomposition.
pub fn edge_response(params: &FilterParams) -> FrequencyResponse {
    response_from_eigenvalues(params, ResponseKind::Multivariate)
}

fn response_from_eigenvalues(params: &FilterParams, kind: ResponseKind) -> FrequencyResponse {
    let pairs = params.eigen_pairs();
    let n = params.n();
    let mut coeffs = Array2::<f64>::zeros((n, params.order() + 1));
    for (k, pair) in pairs.iter().enumerate() {
        for j in 0..n {
            coeffs[[j, k]] = pair.values[j];
        }
    }
    FrequencyResponse::new(coeffs, kind)
}

/// Spectral-domain reconstruction for shift-invariant filters:
/// `y = sum_i x_hat_i h_i(lambda_i) v_i`.
pub fn spectral_apply_si(
    response: &FrequencyResponse,
    s: &GraphShiftOperator,
    x: &Array1<f64>,
) -> Result<Array1<f64>> {
    if response.rows() != s.n() {
        return Err(Error::DimensionMismatch { expected: s.n(), got: response.rows() });
    }
    let xh = s.gft(x)?;
    let vals = s.eigenvalues();
    let yh = Array1::from_shape_fn(s.n(), |i| xh[i] * response.eval(i, vals[i]));
    s.igft(&yh)
}

/// Triple-sum spectral reconstruction for eigenvector-sharing filters.
pub fn spectral_apply_es(
    params: &FilterParams,
    s: &GraphShiftOperator,
    x: &Array1<f64>,
) -> Result<Array1<f64>> {
    match params.class() {
        FilterClass::EigenvectorSharing | FilterClass::NodeVarying => {}
        other => {
            return Err(Error::WrongClass {
                expected: "eigenvector_sharing or node_varying".into(),
                got: other.tag().into(),
            })
        }
    }
    let n = s.n();
    if params.n() != n || x.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: params.n().min(x.len()) });
    }
    let u = &params.eigen_pairs()[0].vectors;
    let response = es_response(params)?;
    let cross = s.eigenvectors().t().dot(u); // cross[i][j] = <v_i, u_j>
    let xh = s.gft(x)?;
    let vals = s.eigenvalues();
    // h_j evaluated at every graph frequency lambda_i
    let mut table = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        for i in 0..n {
            table[[j, i]] = response.eval(j, vals[i]);
        }
    }
    let mut yh = Array1::<f64>::zeros(n);
    for i in 0..n {
        for j in 0..n {
            let vij = cross[[i, j]];
            if vij == 0.0 {
                continue;
            }
            let w = xh[i] * vij * table[[j, i]];
            for l in 0..n {
                yh[l] += w * cross[[l, j]];
            }
        }
    }
    s.igft(&yh)
}

/// Quadruple-indexed spectral reconstruction for general edge-varying
/// filters, using per-order eigenbases. Exact against `apply` when every
/// parameter matrix is symmetric; non-symmetric matrices are symmetrized
/// for analysis and the reconstruction describes the symmetrized filter.
pub fn spectral_apply_edge(
    params: &FilterParams,
    s: &GraphShiftOperator,
    x: &Array1<f64>,
) -> Result<Array1<f64>> {
    let n = s.n();
    if params.n() != n || x.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: params.n().min(x.len()) });
    }
    let pairs = params.eigen_pairs();
    let v = s.eigenvectors();
    let crosses: Vec<Array2<f64>> =
        pairs.iter().map(|p| v.t().dot(&p.vectors)).collect();
    let xh = s.gft(x)?;
    let vals = s.eigenvalues();
    let order = params.order();
    let mut yh = Array1::<f64>::zeros(n);
    for i in 0..n {
        let mut powers = Vec::with_capacity(order + 1);
        let mut p = 1.0;
        for _ in 0..=order {
            powers.push(p);
            p *= vals[i];
        }
        for j in 0..n {
            for l in 0..n {
                let mut term = 0.0;
                for (k, cross) in crosses.iter().enumerate() {
                    term += pairs[k].values[j] * cross[[i, j]] * cross[[l, j]] * powers[k];
                }
                yh[l] += xh[i] * term;
            }
        }
    }
    s.igft(&yh)
}

/// A multivariate graph frequency: the length-`K` vector of scaled
/// frequencies seen by one `(i, j, l)` index triple, with its provenance.
#[derive(Debug, Clone)]
pub struct MultivariateFrequency {
    /// `lambda^(k) = beta^(k) * lambda_i` for `k = 1..K`.
    pub lambdas: Vec<f64>,
    /// The scaling variables `beta^(k)`.
    pub betas: Vec<f64>,
    /// Base graph eigenvalue `lambda_i`.
    pub base_eigenvalue: f64,
    /// Zeroth-order expansion product `v_hat^(0) u_hat^(0)`.
    pub prefactor: f64,
}

/// Scaling variables and scaled frequencies for one index triple of a
/// general edge-varying filter.
///
/// `beta^(k)` is the ratio of consecutive expansion-coefficient products;
/// when a denominator's magnitude falls below [`DEGENERATE_DENOMINATOR`] the
/// degenerate convention `beta^(k) = v_hat^(k) u_hat^(k)` applies.
pub fn scaled_frequencies(
    params: &FilterParams,
    s: &GraphShiftOperator,
    i: usize,
    j: usize,
    l: usize,
) -> MultivariateFrequency {
    let pairs = params.eigen_pairs();
    let v = s.eigenvectors();
    let order = params.order();
    // q_k = v_hat^(k)_{ij} u_hat^(k)_{jl} = <v_i, u_j^(k)> <v_l, u_j^(k)>
    let mut q = Vec::with_capacity(order + 1);
    for pair in pairs {
        let uj = pair.vectors.column(j);
        let vij = v.column(i).dot(&uj);
        let ujl = v.column(l).dot(&uj);
        q.push(vij * ujl);
    }
    let lambda_i = s.eigenvalues()[i];
    let mut betas = Vec::with_capacity(order);
    let mut lambdas = Vec::with_capacity(order);
    for k in 1..=order {
        let beta = if q[k - 1].abs() < DEGENERATE_DENOMINATOR {
            q[k]
        } else {
            q[k] / q[k - 1]
        };
        betas.push(beta);
        lambdas.push(beta * lambda_i);
    }
    MultivariateFrequency { lambdas, betas, base_eigenvalue: lambda_i, prefactor: q[0] }
}

/// Spectral reconstruction through the scaled-frequency form: every index
/// triple contributes `x_hat_i * prefactor * h_j(lambda)` with `lambda` from
/// [`scaled_frequencies`]. Dual to [`spectral_apply_edge`]; the two agree
/// whenever no triple with nonzero higher-order products has a vanishing
/// zeroth-order prefactor.
pub fn spectral_apply_edge_scaled(
    params: &FilterParams,
    s: &GraphShiftOperator,
    x: &Array1<f64>,
) -> Result<Array1<f64>> {
    let n = s.n();
    if params.n() != n || x.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: params.n().min(x.len()) });
    }
    let response = edge_response(params);
    let xh = s.gft(x)?;
    let mut yh = Array1::<f64>::zeros(n);
    for i in 0..n {
        if xh[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            for l in 0..n {
                let freq = scaled_frequencies(params, s, i, j, l);
                if freq.prefactor == 0.0 {
                    continue;
                }
                yh[l] += xh[i] * freq.prefactor * response.eval_multivariate(j, &freq.lambdas);
            }
        }
    }
    s.igft(&yh)
}

/// Eigenvector misalignment between two orthonormal bases.
#[derive(Debug, Clone)]
pub struct MisalignmentReport {
    /// Largest off-diagonal expansion coefficient magnitude.
    pub epsilon: f64,
    /// Cross matrix of inner products `<v_i, u_j>`.
    pub cross_matrix: Array2<f64>,
    /// Smallest diagonal magnitude `min_i |<v_i, u_i>|`.
    pub diag_min: f64,
}

/// Measure the misalignment `epsilon` between orthonormal bases `V` and `U`.
///
/// For orthonormal bases both expansion-coefficient families coincide with
/// the entries of the single cross matrix `V^T U`, so `epsilon` is its
/// largest off-diagonal magnitude.
pub fn misalignment(v: &Array2<f64>, u: &Array2<f64>) -> Result<MisalignmentReport> {
    if v.dim() != u.dim() || v.nrows() != v.ncols() {
        return Err(Error::DimensionMismatch { expected: v.nrows(), got: u.nrows() });
    }
    for basis in [v, u] {
        let defect = linalg::orthonormality_defect(basis);
        if defect > 1e-8 {
            return Err(Error::NotOrthonormal(defect));
        }
    }
    let cross = v.t().dot(u);
    let n = cross.nrows();
    let mut epsilon = 0.0f64;
    let mut diag_min = f64::INFINITY;
    for i in 0..n {
        for j in 0..n {
            let a = cross[[i, j]].abs();
            if i == j {
                diag_min = diag_min.min(a);
            } else {
                epsilon = epsilon.max(a);
            }
        }
    }
    Ok(MisalignmentReport { epsilon, cross_matrix: cross, diag_min })
}

/// Apply Givens rotations by `theta` in the listed coordinate planes of the
/// column space: a controlled-misalignment generator. A single disjoint
/// plane set rotated by `theta` yields misalignment exactly `|sin theta|`.
pub fn rotate_basis(
    v: &Array2<f64>,
    theta: f64,
    plane_pairs: &[(usize, usize)],
) -> Result<Array2<f64>> {
    let n = v.ncols();
    let mut out = v.clone();
    let (sin, cos) = theta.sin_cos();
    for &(a, b) in plane_pairs {
        if a >= n || b >= n || a == b {
            return Err(Error::InvalidParameter(format!("bad rotation plane ({a}, {b})")));
        }
        let col_a = out.column(a).to_owned();
        let col_b = out.column(b).to_owned();
        for i in 0..out.nrows() {
            out[[i, a]] = cos * col_a[i] + sin * col_b[i];
            out[[i, b]] = -sin * col_a[i] + cos * col_b[i];
        }
    }
    Ok(out)
}

/// Integral-Lipschitz constant of a univariate response over a domain grid.
///
/// Maximizes the midpoint-scaled difference quotient
/// `|(l1 + l2) / 2 * (h_i(l1) - h_i(l2)) / (l1 - l2)|` over all grid pairs
/// and rows, and the derivative form `|l h_i'(l)|` over grid points; the
/// reported constant is the larger of the two.
pub fn lipschitz_constant_univariate(
    response: &FrequencyResponse,
    domain: (f64, f64),
    grid: usize,
) -> Result<f64> {
    if response.rows() == 0 {
        return Err(Error::InvalidParameter("empty response".into()));
    }
    if grid < 2 {
        return Err(Error::InvalidParameter("grid must have at least 2 points".into()));
    }
    let (lo, hi) = domain;
    if !(lo < hi) {
        return Err(Error::InvalidParameter(format!("bad domain [{lo}, {hi}]")));
    }
    let rows = response.rows();
    let step = (hi - lo) / (grid - 1) as f64;
    let lambdas: Vec<f64> = (0..grid).map(|g| lo + step * g as f64).collect();

    // value table plus per-point row extrema for pruning
    let mut table = vec![vec![0.0f64; rows]; grid];
    let mut row_max = vec![f64::NEG_INFINITY; grid];
    let mut row_min = vec![f64::INFINITY; grid];
    let mut deriv_max = 0.0f64;
    for g in 0..grid {
        for i in 0..rows {
            let h = response.eval(i, lambdas[g]);
            table[g][i] = h;
            row_max[g] = row_max[g].max(h);
            row_min[g] = row_min[g].min(h);
            deriv_max = deriv_max.max((lambdas[g] * response.eval_derivative(i, lambdas[g])).abs());
        }
    }

    let pair_max = (0..grid)
        .into_par_iter()
        .map(|g1| {
            let mut local = deriv_max;
            for g2 in (g1 + 1)..grid {
                let l1 = lambdas[g1];
                let l2 = lambdas[g2];
                let factor = ((l1 + l2) / (2.0 * (l1 - l2))).abs();
                let spread =
                    (row_max[g1] - row_min[g2]).max(row_max[g2] - row_min[g1]).max(0.0);
                if factor * spread <= local {
                    continue;
                }
                for i in 0..rows {
                    let q = factor * (table[g1][i] - table[g2][i]).abs();
                    if q > local {
                        local = q;
                    }
                }
            }
            local
        })
        .reduce(|| deriv_max, f64::max);

    Ok(pair_max)
}

/// Graph-specific Lipschitz constant: each row's quotient is evaluated only
/// at pairs `(lambda, lambda_i)` drawn from the actual spectrum, plus the
/// derivative form at `lambda_i`. Never exceeds the continuum constant when
/// the spectrum lies inside the domain.
pub fn lipschitz_constant_graph_specific(
    response: &FrequencyResponse,
    s: &GraphShiftOperator,
) -> Result<f64> {
    let n = s.n();
    if response.rows() != n {
        return Err(Error::DimensionMismatch { expected: n, got: response.rows() });
    }
    let vals = s.eigenvalues();
    let mut worst = 0.0f64;
    for i in 0..n {
        let li = vals[i];
        worst = worst.max((li * response.eval_derivative(i, li)).abs());
        let hi_at_li = response.eval(i, li);
        for m in 0..n {
            let lm = vals[m];
            if (lm - li).abs() < 1e-12 {
                continue;
            }
            let q = ((lm + li) / 2.0 * (response.eval(i, lm) - hi_at_li) / (lm - li)).abs();
            worst = worst.max(q);
        }
    }
    Ok(worst)
}

/// Mixed-point gradient of a multivariate response row between two frequency
/// instantiations: entry `k` is the partial derivative with respect to
/// `lambda^(k)` evaluated where the first `k` coordinates come from `l1` and
/// the rest from `l2`. Satisfies the exact telescoping identity
/// `h(l1) - h(l2) = grad . (l1 - l2)`.
pub fn lipschitz_gradient(
    response: &FrequencyResponse,
    row: usize,
    l1: &[f64],
    l2: &[f64],
) -> Result<Vec<f64>> {
    if response.kind() != ResponseKind::Multivariate {
        return Err(Error::WrongClass {
            expected: "multivariate response".into(),
            got: "univariate response".into(),
        });
    }
    let k_order = response.order();
    if l1.len() != k_order || l2.len() != k_order {
        return Err(Error::DimensionMismatch { expected: k_order, got: l1.len().min(l2.len()) });
    }
    let coeffs = response.coefficients();
    let mut grad = Vec::with_capacity(k_order);
    for k in 1..=k_order {
        // mixed instantiation: first k entries from l1, rest from l2
        let mixed = |kappa: usize| if kappa <= k { l1[kappa - 1] } else { l2[kappa - 1] };
        let mut entry = 0.0;
        for kp in k..=k_order {
            let mut prod = 1.0;
            for kappa in 1..=kp {
                if kappa != k {
                    prod *= mixed(kappa);
                }
            }
            entry += coeffs[[row, kp]] * prod;
        }
        grad.push(entry);
    }
    Ok(grad)
}

/// Residual of the telescoping identity `h(l1) - h(l2) = grad . (l1 - l2)`.
pub fn gradient_identity_residual(
    response: &FrequencyResponse,
    row: usize,
    l1: &[f64],
    l2: &[f64],
) -> Result<f64> {
    let grad = lipschitz_gradient(response, row, l1, l2)?;
    let lhs = response.eval_multivariate(row, l1) - response.eval_multivariate(row, l2);
    let rhs: f64 = grad.iter().zip(l1.iter().zip(l2)).map(|(g, (a, b))| g * (a - b)).sum();
    Ok((lhs - rhs).abs())
}

/// Integral-Lipschitz constant of a multivariate response over supplied
/// frequency pairs: the maximum of `|(l1 + l2) / 2 . grad|` across pairs and
/// rows.
pub fn lipschitz_constant_multivariate(
    response: &FrequencyResponse,
    pairs: &[(Vec<f64>, Vec<f64>)],
) -> Result<f64> {
    let mut worst = 0.0f64;
    for (l1, l2) in pairs {
        for row in 0..response.rows() {
            let grad = lipschitz_gradient(response, row, l1, l2)?;
            let dot: f64 = grad
                .iter()
                .zip(l1.iter().zip(l2.iter()))
                .map(|(g, (a, b))| g * 0.5 * (a + b))
                .sum();
            worst = worst.max(dot.abs());
        }
    }
    Ok(worst)
}

/// Largest response magnitude over a set of multivariate frequency points.
pub fn max_abs_multivariate(response: &FrequencyResponse, points: &[Vec<f64>]) -> f64 {
    let mut worst = 0.0f64;
    for p in points {
        for row in 0..response.rows() {
            worst = worst.max(response.eval_multivariate(row, p).abs());
        }
    }
    worst
}

/// Multivariate frequencies realized by the graph: scaled frequencies over
/// index triples. All `n^3` triples are enumerated when that count is within
/// `limit`; otherwise `limit` triples are sampled deterministically.
pub fn graph_induced_frequencies(
    params: &FilterParams,
    s: &GraphShiftOperator,
    limit: usize,
    seed: u64,
) -> Vec<Vec<f64>> {
    let n = s.n();
    let total = n * n * n;
    let mut out = Vec::new();
    if total <= limit {
        for i in 0..n {
            for j in 0..n {
                for l in 0..n {
                    out.push(scaled_frequencies(params, s, i, j, l).lambdas);
                }
            }
        }
    } else {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        for _ in 0..limit {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            let l = rng.random_range(0..n);
            out.push(scaled_frequencies(params, s, i, j, l).lambdas);
        }
    }
    out
}

/// Uniform sample of frequency vectors in `[-1, 1]^K`.
pub fn uniform_frequencies(order: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (0..order).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
        .collect()
}

/// Response dump as CSV: one row per response index.
pub fn write_response_csv<W: Write>(response: &FrequencyResponse, mut w: W) -> Result<()> {
    let cols: Vec<String> = (0..=response.order()).map(|k| format!("phi_{k}")).collect();
    writeln!(w, "index,{}", cols.join(","))?;
    for i in 0..response.rows() {
        let vals: Vec<String> =
            (0..=response.order()).map(|k| response.coefficients()[[i, k]].to_string()).collect();
        writeln!(w, "{i},{}", vals.join(","))?;
    }
    Ok(())
}

/// Misalignment report as CSV: a one-line summary comment, then the cross
/// matrix.
pub fn write_misalignment_csv<W: Write>(report: &MisalignmentReport, mut w: W) -> Result<()> {
    writeln!(w, "# epsilon={} diag_min={}", report.epsilon, report.diag_min)?;
    let n = report.cross_matrix.nrows();
    let header: Vec<String> = (0..n).map(|j| format!("u_{j}")).collect();
    writeln!(w, "v,{}", header.join(","))?;
    for i in 0..n {
        let vals: Vec<String> =
            (0..n).map(|j| report.cross_matrix[[i, j]].to_string()).collect();
        writeln!(w, "{i},{}", vals.join(","))?;
    }
    Ok(())
}
