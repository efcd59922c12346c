//! Linear dynamic influence models: FIR transfer matrices, their graphs, and
//! analytic power-spectral computations.
//!
//! A model couples a hollow transfer matrix `H` (diagonal identically zero)
//! with a noise specification. The output process satisfies
//! `x(z) = H(z) x(z) + e(z)`, so the observed spectrum is
//! `Phi_x = (I - H)^{-1} Phi_e (I - H)^{-*}` and its inverse factors as
//! `(I - H)^* Phi_e^{-1} (I - H)`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::poly_lift::PolyCorrelationSpec;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type RMatrix = DMatrix<f64>;

/// Default grid size for well-posedness and detectability scans.
pub const DEFAULT_GRID: usize = 512;
/// Minimum acceptable |det(I - H)| over the unit-circle grid.
pub const TAU_DET: f64 = 1e-8;

/// Finite impulse response transfer function; `taps[k]` multiplies `z^{-k}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferFunction {
    taps: Vec<f64>,
}

impl TransferFunction {
    pub fn new(taps: Vec<f64>) -> Self {
        Self { taps }
    }

    pub fn zero() -> Self {
        Self { taps: Vec::new() }
    }

    /// Pure delay `gain * z^{-delay}`.
    pub fn delay(gain: f64, delay: usize) -> Self {
        let mut taps = vec![0.0; delay + 1];
        taps[delay] = gain;
        Self { taps }
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn degree(&self) -> usize {
        self.taps.len().saturating_sub(1)
    }

    pub fn is_zero(&self) -> bool {
        self.taps.iter().all(|&c| c == 0.0)
    }

    /// True iff the zero-delay coefficient vanishes.
    pub fn is_strictly_causal(&self) -> bool {
        self.taps.first().map_or(true, |&c| c == 0.0)
    }

    /// Evaluate at `z = e^{j omega}`: sum of `c_k e^{-j omega k}`.
    pub fn eval(&self, omega: f64) -> C64 {
        let step = C64::from_polar(1.0, -omega);
        let mut phase = C64::new(1.0, 0.0);
        let mut acc = C64::new(0.0, 0.0);
        for &c in &self.taps {
            acc += phase * c;
            phase *= step;
        }
        acc
    }

    /// Pointwise sum of two FIR responses.
    pub fn add(&self, other: &TransferFunction) -> TransferFunction {
        let len = self.taps.len().max(other.taps.len());
        let mut taps = vec![0.0; len];
        for (k, t) in taps.iter_mut().enumerate() {
            *t = self.taps.get(k).copied().unwrap_or(0.0) + other.taps.get(k).copied().unwrap_or(0.0);
        }
        TransferFunction::new(taps)
    }

    pub fn scale(&self, a: f64) -> TransferFunction {
        TransferFunction::new(self.taps.iter().map(|&c| a * c).collect())
    }
}

/// Square matrix of transfer functions with an identically-zero diagonal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferMatrix {
    n: usize,
    entries: Vec<TransferFunction>,
}

impl TransferMatrix {
    pub fn zero(n: usize) -> Self {
        Self {
            n,
            entries: vec![TransferFunction::zero(); n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> &TransferFunction {
        &self.entries[i * self.n + j]
    }

    /// Sets entry (i, j); the diagonal must stay zero.
    pub fn set(&mut self, i: usize, j: usize, tf: TransferFunction) -> Result<()> {
        if i >= self.n || j >= self.n {
            return Err(Error::Dimension(format!(
                "entry ({i},{j}) out of bounds for n={}",
                self.n
            )));
        }
        if i == j && !tf.is_zero() {
            return Err(Error::Invalid(format!("diagonal entry ({i},{i}) must be zero")));
        }
        self.entries[i * self.n + j] = tf;
        Ok(())
    }

    pub fn max_delay(&self) -> usize {
        self.entries.iter().map(|tf| tf.degree()).max().unwrap_or(0)
    }

    pub fn is_strictly_causal(&self) -> bool {
        self.entries.iter().all(|tf| tf.is_strictly_causal())
    }

    /// First non-strictly-causal entry, if any.
    pub fn first_non_causal(&self) -> Option<(usize, usize)> {
        for i in 0..self.n {
            for j in 0..self.n {
                if !self.get(i, j).is_strictly_causal() {
                    return Some((i, j));
                }
            }
        }
        None
    }

    /// Evaluate the whole matrix at `z = e^{j omega}`.
    pub fn eval(&self, omega: f64) -> CMatrix {
        CMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j).eval(omega))
    }

    /// Directed graph with an edge `j -> i` for every nonzero entry (i, j).
    pub fn graph(&self) -> DirectedGraph {
        let mut g = DirectedGraph::new(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                if !self.get(i, j).is_zero() {
                    g.add_edge(j, i).expect("hollow matrix cannot produce self-loops");
                }
            }
        }
        g
    }

    /// Minimum of |det(I - H(e^{j omega}))| over a uniform grid.
    pub fn min_det_on_grid(&self, grid_size: usize) -> f64 {
        let mut min_det = f64::INFINITY;
        for k in 0..grid_size {
            let omega = -PI + 2.0 * PI * (k as f64 + 1.0) / grid_size as f64;
            let m = CMatrix::identity(self.n, self.n) - self.eval(omega);
            let d = m.determinant().norm();
            if d < min_det {
                min_det = d;
            }
        }
        min_det
    }
}

/// Rectangular matrix of transfer functions (latent gain columns and
/// monomial gain columns).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<TransferFunction>,
}

impl GainMatrix {
    pub fn zero(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: vec![TransferFunction::zero(); rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> &TransferFunction {
        &self.entries[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, tf: TransferFunction) -> Result<()> {
        if i >= self.rows || j >= self.cols {
            return Err(Error::Dimension(format!(
                "entry ({i},{j}) out of bounds for {}x{}",
                self.rows, self.cols
            )));
        }
        self.entries[i * self.cols + j] = tf;
        Ok(())
    }

    pub fn eval(&self, omega: f64) -> CMatrix {
        CMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j).eval(omega))
    }

    pub fn max_delay(&self) -> usize {
        self.entries.iter().map(|tf| tf.degree()).max().unwrap_or(0)
    }

    /// Column indices holding at least one nonzero entry.
    pub fn active_columns(&self) -> Vec<usize> {
        (0..self.cols)
            .filter(|&j| (0..self.rows).any(|i| !self.get(i, j).is_zero()))
            .collect()
    }

    /// Row indices with a nonzero entry in column `j`.
    pub fn column_support(&self, j: usize) -> Vec<usize> {
        (0..self.rows).filter(|&i| !self.get(i, j).is_zero()).collect()
    }
}

/// Affine noise correlation: `e = e_o + F e_h` with `e_o`, `e_h` jointly
/// uncorrelated and white.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineCorrelation {
    pub gains: GainMatrix,
    pub latent_variances: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Correlation {
    None,
    Affine(AffineCorrelation),
    Poly(PolyCorrelationSpec),
}

/// Noise model: diagonal base spectra plus an optional correlation structure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub base_variances: Vec<f64>,
    pub correlation: Correlation,
}

impl NoiseSpec {
    pub fn diagonal(variances: Vec<f64>) -> Self {
        Self {
            base_variances: variances,
            correlation: Correlation::None,
        }
    }

    pub fn n(&self) -> usize {
        self.base_variances.len()
    }

    pub fn is_diagonal(&self) -> bool {
        matches!(self.correlation, Correlation::None)
    }

    /// Noise PSD matrix at `omega` (Hermitian by construction).
    pub fn psd_at(&self, omega: f64) -> CMatrix {
        let n = self.n();
        let mut phi = CMatrix::zeros(n, n);
        for i in 0..n {
            phi[(i, i)] = C64::new(self.base_variances[i], 0.0);
        }
        match &self.correlation {
            Correlation::None => phi,
            Correlation::Affine(aff) => {
                let f = aff.gains.eval(omega);
                let lam = CMatrix::from_fn(aff.latent_variances.len(), aff.latent_variances.len(), |i, j| {
                    if i == j {
                        C64::new(aff.latent_variances[i], 0.0)
                    } else {
                        C64::new(0.0, 0.0)
                    }
                });
                phi += &f * lam * f.adjoint();
                hermitianize(&phi)
            }
            Correlation::Poly(spec) => {
                phi += spec.psd_contribution(omega);
                hermitianize(&phi)
            }
        }
    }
}

/// Linear dynamic influence model: hollow transfer matrix plus noise spec.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Ldim {
    h: TransferMatrix,
    noise: NoiseSpec,
}

impl Ldim {
    /// Validating constructor: checks dimensions, well-posedness and
    /// topological detectability on the default grid.
    pub fn new(h: TransferMatrix, noise: NoiseSpec) -> Result<Self> {
        if h.n() != noise.n() {
            return Err(Error::Dimension(format!(
                "H is {0}x{0} but noise covers {1} nodes",
                h.n(),
                noise.n()
            )));
        }
        let min_det = h.min_det_on_grid(DEFAULT_GRID);
        if min_det <= TAU_DET {
            return Err(Error::NotWellPosed { min_det });
        }
        let model = Self { h, noise };
        let min_eig = model.min_noise_eigenvalue(16);
        if min_eig <= 0.0 {
            return Err(Error::NotDetectable { min_eig });
        }
        Ok(model)
    }

    /// Constructor without validation, for diagnostics on bad models.
    pub fn new_unchecked(h: TransferMatrix, noise: NoiseSpec) -> Self {
        Self { h, noise }
    }

    pub fn h(&self) -> &TransferMatrix {
        &self.h
    }

    pub fn noise(&self) -> &NoiseSpec {
        &self.noise
    }

    pub fn n(&self) -> usize {
        self.h.n()
    }

    pub fn noise_psd(&self, omega: f64) -> CMatrix {
        self.noise.psd_at(omega)
    }

    fn min_noise_eigenvalue(&self, grid: usize) -> f64 {
        let mut min_eig = f64::INFINITY;
        for k in 0..grid {
            let omega = -PI + 2.0 * PI * (k as f64 + 1.0) / grid as f64;
            let phi = self.noise_psd(omega);
            let eig = phi.symmetric_eigen();
            let lo = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
            if lo < min_eig {
                min_eig = lo;
            }
        }
        min_eig
    }

    /// Observed PSD via `(I - H)^{-1} Phi_e (I - H)^{-*}`.
    pub fn psd(&self, omega: f64) -> Result<SpectralMatrix> {
        analytic_psd(self, &SpectralMatrix::new(omega, self.noise_psd(omega)), omega)
    }

    /// Observed IPSDM via the factorization `(I - H)^* Phi_e^{-1} (I - H)`.
    pub fn ipsdm(&self, omega: f64) -> Result<SpectralMatrix> {
        analytic_ipsdm(self, &SpectralMatrix::new(omega, self.noise_psd(omega)), omega)
    }
}

/// Complex matrix tagged with its frequency.
#[derive(Clone, Debug)]
pub struct SpectralMatrix {
    pub omega: f64,
    pub values: CMatrix,
}

impl SpectralMatrix {
    pub fn new(omega: f64, values: CMatrix) -> Self {
        Self { omega, values }
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn max_hermitian_deviation(&self) -> f64 {
        let adj = self.values.adjoint();
        (&self.values - adj).iter().map(|c| c.norm()).fold(0.0, f64::max)
    }
}

/// Force exact Hermitian symmetry: (A + A^*) / 2.
pub fn hermitianize(m: &CMatrix) -> CMatrix {
    let adj = m.adjoint();
    (m + adj).map(|c| c * 0.5)
}

/// Condition number estimate from singular values.
pub fn condition_number(m: &CMatrix) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if smin == 0.0 {
        f64::INFINITY
    } else {
        smax / smin
    }
}

/// Evaluate `H` entrywise at `z = e^{j omega}`.
pub fn eval_transfer_matrix(h: &TransferMatrix, omega: f64) -> CMatrix {
    h.eval(omega)
}

#[derive(Clone, Debug)]
pub struct WellPosedness {
    pub well_posed: bool,
    pub min_det: f64,
}

/// Scan |det(I - H)| over a uniform grid of at least 8 frequencies.
pub fn check_well_posed(ldim: &Ldim, grid_size: usize) -> Result<WellPosedness> {
    if grid_size < 8 {
        return Err(Error::Invalid(format!("grid_size {grid_size} < 8")));
    }
    let min_det = ldim.h().min_det_on_grid(grid_size);
    Ok(WellPosedness {
        well_posed: min_det > TAU_DET,
        min_det,
    })
}

const COND_LIMIT: f64 = 1e12;

/// `Phi_x^{-1} = (I - H)^* Phi_e^{-1} (I - H)`, Hermitian-symmetrized.
pub fn analytic_ipsdm(ldim: &Ldim, phi_e: &SpectralMatrix, omega: f64) -> Result<SpectralMatrix> {
    let n = ldim.n();
    if phi_e.n() != n {
        return Err(Error::Dimension(format!(
            "phi_e is {}x{} but model has n={}",
            phi_e.n(),
            phi_e.n(),
            n
        )));
    }
    let cond = condition_number(&phi_e.values);
    if !cond.is_finite() || cond > COND_LIMIT {
        return Err(Error::IllConditioned {
            omega,
            cond,
            limit: COND_LIMIT,
        });
    }
    let phi_inv = phi_e
        .values
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular {
            context: "noise PSD inversion".into(),
        })?;
    let ih = CMatrix::identity(n, n) - ldim.h().eval(omega);
    let out = ih.adjoint() * phi_inv * ih;
    Ok(SpectralMatrix::new(omega, hermitianize(&out)))
}

/// `Phi_x = (I - H)^{-1} Phi_e (I - H)^{-*}`.
pub fn analytic_psd(ldim: &Ldim, phi_e: &SpectralMatrix, omega: f64) -> Result<SpectralMatrix> {
    let n = ldim.n();
    if phi_e.n() != n {
        return Err(Error::Dimension(format!(
            "phi_e is {}x{} but model has n={}",
            phi_e.n(),
            phi_e.n(),
            n
        )));
    }
    let ih = CMatrix::identity(n, n) - ldim.h().eval(omega);
    let ih_inv = ih.try_inverse().ok_or(Error::Singular {
        context: format!("I - H singular at omega={omega}"),
    })?;
    let out = &ih_inv * &phi_e.values * ih_inv.adjoint();
    Ok(SpectralMatrix::new(omega, hermitianize(&out)))
}

/// Directed graph over `n` nodes without self-loops.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectedGraph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl DirectedGraph {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            edges: BTreeSet::new(),
        }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = Self::new(n);
        for &(from, to) in edges {
            g.add_edge(from, to)?;
        }
        Ok(g)
    }

    pub fn add_edge(&mut self, from: usize, to: usize) -> Result<()> {
        if from == to {
            return Err(Error::Invalid(format!("self-loop at node {from}")));
        }
        if from >= self.n || to >= self.n {
            return Err(Error::Dimension(format!(
                "edge ({from},{to}) out of bounds for n={}",
                self.n
            )));
        }
        self.edges.insert((from, to));
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> impl Iterator<Item = &(usize, usize)> {
        self.edges.iter()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn contains(&self, from: usize, to: usize) -> bool {
        self.edges.contains(&(from, to))
    }

    pub fn parents(&self, i: usize) -> BTreeSet<usize> {
        self.edges.iter().filter(|&&(_, t)| t == i).map(|&(f, _)| f).collect()
    }

    pub fn children(&self, i: usize) -> BTreeSet<usize> {
        self.edges.iter().filter(|&&(f, _)| f == i).map(|&(_, t)| t).collect()
    }
}

/// Undirected graph stored with `i < j` per edge.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl Topology {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            edges: BTreeSet::new(),
        }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut t = Self::new(n);
        for &(a, b) in edges {
            t.add_edge(a, b)?;
        }
        Ok(t)
    }

    pub fn add_edge(&mut self, a: usize, b: usize) -> Result<()> {
        if a == b {
            return Err(Error::Invalid(format!("self-loop at node {a}")));
        }
        if a >= self.n || b >= self.n {
            return Err(Error::Dimension(format!(
                "edge ({a},{b}) out of bounds for n={}",
                self.n
            )));
        }
        self.edges.insert((a.min(b), a.max(b)));
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> impl Iterator<Item = &(usize, usize)> {
        self.edges.iter()
    }

    pub fn edge_list(&self) -> Vec<(usize, usize)> {
        self.edges.iter().copied().collect()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn contains(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }

    pub fn is_subset_of(&self, other: &Topology) -> bool {
        self.edges.is_subset(&other.edges)
    }

    pub fn neighbors(&self, i: usize) -> BTreeSet<usize> {
        self.edges
            .iter()
            .filter_map(|&(a, b)| {
                if a == i {
                    Some(b)
                } else if b == i {
                    Some(a)
                } else {
                    None
                }
            })
            .collect()
    }
}

/// Moral graph: joins parents, children and spouses (co-parents).
pub fn kin_graph(g: &DirectedGraph) -> Topology {
    let mut t = Topology::new(g.n());
    for &(from, to) in g.edges() {
        t.add_edge(from, to).expect("no self-loops in source graph");
    }
    // spouses: pairs sharing a child
    for child in 0..g.n() {
        let parents: Vec<usize> = g.parents(child).into_iter().collect();
        for a in 0..parents.len() {
            for b in (a + 1)..parents.len() {
                t.add_edge(parents[a], parents[b]).expect("distinct parents");
            }
        }
    }
    t
}

/// Undirected image of a directed edge set.
pub fn topology_of(g: &DirectedGraph) -> Topology {
    let mut t = Topology::new(g.n());
    for &(from, to) in g.edges() {
        t.add_edge(from, to).expect("no self-loops in source graph");
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn two_entry_matrix() -> TransferMatrix {
        // h13 = 0.5 z^{-1}, h21 = 0.4 z^{-1} in 1-based paper indexing:
        // x1 gets 0.5 z^{-1} from node 3, x2 gets 0.4 z^{-1} from node 1.
        let mut h = TransferMatrix::zero(3);
        h.set(0, 2, TransferFunction::delay(0.5, 1)).unwrap();
        h.set(1, 0, TransferFunction::delay(0.4, 1)).unwrap();
        h
    }

    #[test]
    fn eval_single_delay_at_quarter_turn() {
        // 0.5 z^{-1} at omega = pi/2 evaluates to -0.5j.
        let tf = TransferFunction::new(vec![0.0, 0.5]);
        let v = tf.eval(PI / 2.0);
        assert_relative_eq!(v.re, 0.0, epsilon = 1e-15);
        assert_relative_eq!(v.im, -0.5, epsilon = 1e-15);
    }

    #[test]
    fn eval_zero_matrix_is_zero() {
        let h = TransferMatrix::zero(4);
        let m = h.eval(1.234);
        assert!(m.iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn eval_matches_scalar_oracle_per_entry() {
        let h = two_entry_matrix();
        let omega = 3.0 * PI / 8.0;
        let m = h.eval(omega);
        let mut nonzero = 0;
        for i in 0..3 {
            for j in 0..3 {
                // independent scalar route: direct cosine/sine evaluation
                let expect: C64 = h
                    .get(i, j)
                    .taps()
                    .iter()
                    .enumerate()
                    .map(|(k, &c)| C64::new(c * (omega * k as f64).cos(), -c * (omega * k as f64).sin()))
                    .sum();
                assert_relative_eq!(m[(i, j)].re, expect.re, epsilon = 1e-14);
                assert_relative_eq!(m[(i, j)].im, expect.im, epsilon = 1e-14);
                if m[(i, j)].norm() > 0.0 {
                    nonzero += 1;
                }
            }
        }
        assert_eq!(nonzero, 2);
    }

    #[test]
    fn eval_is_linear_in_taps() {
        let h1 = two_entry_matrix();
        let mut h2 = TransferMatrix::zero(3);
        h2.set(2, 1, TransferFunction::new(vec![0.0, 0.3, 0.2])).unwrap();
        h2.set(0, 2, TransferFunction::delay(0.1, 2)).unwrap();
        let (a, b) = (1.7, -0.6);
        let mut combo = TransferMatrix::zero(3);
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    combo
                        .set(i, j, h1.get(i, j).scale(a).add(&h2.get(i, j).scale(b)))
                        .unwrap();
                }
            }
        }
        let omega = 0.77;
        let lhs = combo.eval(omega);
        let rhs = h1.eval(omega).map(|c| c * a) + h2.eval(omega).map(|c| c * b);
        for (x, y) in lhs.iter().zip(rhs.iter()) {
            assert_relative_eq!(x.re, y.re, epsilon = 1e-14);
            assert_relative_eq!(x.im, y.im, epsilon = 1e-14);
        }
    }

    #[test]
    fn well_posedness_detects_unit_circle_root() {
        // h12 = h21 = z^{-1}: det(I - H) = 1 - e^{-2j omega}, zero at omega = 0.
        let mut h = TransferMatrix::zero(2);
        h.set(0, 1, TransferFunction::delay(1.0, 1)).unwrap();
        h.set(1, 0, TransferFunction::delay(1.0, 1)).unwrap();
        let model = Ldim::new_unchecked(h, NoiseSpec::diagonal(vec![1.0, 1.0]));
        let wp = check_well_posed(&model, 512).unwrap();
        assert!(!wp.well_posed, "min det {} should be below tolerance", wp.min_det);
    }

    #[test]
    fn zero_h_is_well_posed() {
        let model = Ldim::new_unchecked(TransferMatrix::zero(3), NoiseSpec::diagonal(vec![1.0; 3]));
        let wp = check_well_posed(&model, 64).unwrap();
        assert!(wp.well_posed);
        assert_relative_eq!(wp.min_det, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn row_sum_bounded_gains_are_well_posed() {
        // single-delay gains, each row summing to at most 0.9
        let mut h = TransferMatrix::zero(4);
        h.set(0, 1, TransferFunction::delay(0.5, 1)).unwrap();
        h.set(0, 2, TransferFunction::delay(0.4, 1)).unwrap();
        h.set(1, 3, TransferFunction::delay(0.9, 1)).unwrap();
        h.set(2, 0, TransferFunction::delay(0.3, 1)).unwrap();
        h.set(3, 2, TransferFunction::delay(0.8, 1)).unwrap();
        let model = Ldim::new_unchecked(h, NoiseSpec::diagonal(vec![1.0; 4]));
        let wp = check_well_posed(&model, 256).unwrap();
        assert!(wp.well_posed);
    }

    #[test]
    fn small_grid_rejected() {
        let model = Ldim::new_unchecked(TransferMatrix::zero(2), NoiseSpec::diagonal(vec![1.0; 2]));
        assert!(check_well_posed(&model, 4).is_err());
    }

    #[test]
    fn ipsdm_identity_cases() {
        let model = Ldim::new(TransferMatrix::zero(3), NoiseSpec::diagonal(vec![1.0; 3])).unwrap();
        let phi = SpectralMatrix::new(0.3, CMatrix::identity(3, 3));
        let out = analytic_ipsdm(&model, &phi, 0.3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_relative_eq!(out.values[(i, j)].re, expect, epsilon = 1e-12);
                assert_relative_eq!(out.values[(i, j)].im, 0.0, epsilon = 1e-12);
            }
        }

        let d = vec![2.0, 0.5, 4.0];
        let phi_d = SpectralMatrix::new(
            0.3,
            CMatrix::from_fn(3, 3, |i, j| {
                if i == j {
                    C64::new(d[i], 0.0)
                } else {
                    C64::new(0.0, 0.0)
                }
            }),
        );
        let out = analytic_ipsdm(&model, &phi_d, 0.3).unwrap();
        for i in 0..3 {
            assert_relative_eq!(out.values[(i, i)].re, 1.0 / d[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn ipsdm_matches_inverse_of_psd() {
        // Fig 1(a)-shaped model: edges 3 -> 1 and 1 -> 2 (0-based: 2 -> 0, 0 -> 1).
        let h = two_entry_matrix();
        let model = Ldim::new(h, NoiseSpec::diagonal(vec![1.0, 0.8, 1.3])).unwrap();
        let omega = 3.0 * PI / 8.0;
        let phi_e = SpectralMatrix::new(omega, model.noise_psd(omega));
        let psd = analytic_psd(&model, &phi_e, omega).unwrap();
        let ipsdm = analytic_ipsdm(&model, &phi_e, omega).unwrap();
        // oracle: explicit inverse of the analytic PSD
        let inv = psd.values.clone().try_inverse().unwrap();
        let dev = (&ipsdm.values - &inv).iter().map(|c| c.norm()).fold(0.0, f64::max);
        assert!(dev < 1e-10, "factorized vs inverted IPSDM deviate by {dev}");
    }

    #[test]
    fn psd_times_ipsdm_is_identity_and_pd() {
        let mut h = TransferMatrix::zero(5);
        let gains = [
            (0usize, 1usize, 0.4),
            (1, 2, 0.35),
            (2, 3, 0.45),
            (3, 4, 0.3),
            (4, 0, 0.25),
            (1, 3, 0.2),
        ];
        for &(i, j, g) in &gains {
            h.set(i, j, TransferFunction::delay(g, 1)).unwrap();
        }
        let model = Ldim::new(h, NoiseSpec::diagonal(vec![1.0, 2.0, 0.5, 1.5, 0.9])).unwrap();
        for k in 0..8 {
            let omega = -PI + 2.0 * PI * (k as f64 + 1.0) / 8.0;
            let phi_e = SpectralMatrix::new(omega, model.noise_psd(omega));
            let psd = analytic_psd(&model, &phi_e, omega).unwrap();
            let ipsdm = analytic_ipsdm(&model, &phi_e, omega).unwrap();
            let prod = &psd.values * &ipsdm.values;
            for i in 0..5 {
                for j in 0..5 {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((prod[(i, j)].re - expect).abs() < 1e-10);
                    assert!(prod[(i, j)].im.abs() < 1e-10);
                }
            }
            // eigen-solver oracle: Hermitian PD
            assert!(psd.max_hermitian_deviation() < 1e-12);
            let eig = psd.values.clone().symmetric_eigen();
            assert!(eig.eigenvalues.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn scalar_chain_psd_closed_form() {
        // 2-node chain 1 -> 2 with gain 0.5 z^{-1}; at omega = 0 the output
        // variance density of node 2 is |0.5|^2 * 1 + 1 against unit noise:
        // x2 = 0.5 z^{-1} x1 + e2, x1 = e1.
        let mut h = TransferMatrix::zero(2);
        h.set(1, 0, TransferFunction::delay(0.5, 1)).unwrap();
        let model = Ldim::new(h, NoiseSpec::diagonal(vec![1.0, 1.0])).unwrap();
        let psd = model.psd(1e-9).unwrap();
        assert_relative_eq!(psd.values[(0, 0)].re, 1.0, epsilon = 1e-9);
        assert_relative_eq!(psd.values[(1, 1)].re, 1.25, epsilon = 1e-9);
    }

    #[test]
    fn kin_graph_of_fig1_adds_no_spouses() {
        // edges {3 -> 1, 1 -> 2} in paper indexing = {(2,0), (0,1)} 0-based
        let g = DirectedGraph::from_edges(3, &[(2, 0), (0, 1)]).unwrap();
        let kin = kin_graph(&g);
        assert_eq!(kin.edge_list(), vec![(0, 1), (0, 2)]);
    }

    #[test]
    fn kin_graph_adds_spouse_edge() {
        // 1 -> 3 and 2 -> 3 share the child 3: spouse edge (1,2) appears.
        let g = DirectedGraph::from_edges(3, &[(0, 2), (1, 2)]).unwrap();
        let kin = kin_graph(&g);
        assert_eq!(kin.edge_list(), vec![(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn kin_graph_of_empty_is_empty() {
        let g = DirectedGraph::new(4);
        assert_eq!(kin_graph(&g).edge_count(), 0);
    }

    #[test]
    fn topology_merges_antiparallel_edges() {
        let g = DirectedGraph::from_edges(2, &[(0, 1), (1, 0)]).unwrap();
        let t = topology_of(&g);
        assert_eq!(t.edge_list(), vec![(0, 1)]);
    }

    #[test]
    fn topology_of_fig1() {
        let g = DirectedGraph::from_edges(3, &[(2, 0), (0, 1)]).unwrap();
        assert_eq!(topology_of(&g).edge_list(), vec![(0, 1), (0, 2)]);
    }

    #[test]
    fn topology_subset_of_kin_and_difference_is_spouses() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..20 {
            let n = rng.gen_range(3..10);
            let mut g = DirectedGraph::new(n);
            for _ in 0..rng.gen_range(0..3 * n) {
                let a = rng.gen_range(0..n);
                let b = rng.gen_range(0..n);
                if a != b {
                    g.add_edge(a, b).unwrap();
                }
            }
            let topo = topology_of(&g);
            let kin = kin_graph(&g);
            assert!(topo.is_subset_of(&kin));
            assert!(topo.edge_count() <= g.edge_count());
            for &(a, b) in kin.edges() {
                if !topo.contains(a, b) {
                    // must be a spouse pair: a and b share a child
                    let shared = g
                        .children(a)
                        .intersection(&g.children(b))
                        .next()
                        .is_some();
                    assert!(shared, "extra kin edge ({a},{b}) is not a spouse pair");
                }
            }
        }
    }
}
