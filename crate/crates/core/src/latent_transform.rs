//! Correlation graphs, maximal-clique enumeration, and the latent-node
//! expansion that rewrites spatially correlated noise as uncorrelated noise
//! entering through strict-parent latent nodes.
//!
//! The minimal expansion attaches exactly one latent node per maximal clique
//! (size >= 2) of the correlation graph; the latent node's children are the
//! clique members. The expansion leaves the observed topology untouched and
//! is spectrally equivalent to the original model.

use nalgebra::DMatrix;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::netmodel::{
    hermitianize, AffineCorrelation, C64, CMatrix, Correlation, GainMatrix, Ldim, NoiseSpec,
    RMatrix, SpectralMatrix, TransferFunction, TransferMatrix,
};

/// Undirected graph over noise sources; edge (i,j) means the cross-spectrum
/// of e_i and e_j is nonzero.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrelationGraph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl CorrelationGraph {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            edges: BTreeSet::new(),
        }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = Self::new(n);
        for &(a, b) in edges {
            g.add_edge(a, b)?;
        }
        Ok(g)
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

/// Canonically ordered maximal cliques of size >= 2.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaximalCliqueSet {
    cliques: Vec<Vec<usize>>,
}

impl MaximalCliqueSet {
    pub fn q(&self) -> usize {
        self.cliques.len()
    }

    pub fn cliques(&self) -> &[Vec<usize>] {
        &self.cliques
    }
}

const MAX_CLIQUE_NODES: usize = 10_000;

/// Exact enumeration of maximal cliques (size >= 2) via Bron-Kerbosch with
/// pivoting. Cliques are returned sorted, each with ascending members.
pub fn maximal_cliques(gc: &CorrelationGraph) -> Result<MaximalCliqueSet> {
    if gc.n() > MAX_CLIQUE_NODES {
        return Err(Error::Invalid(format!(
            "clique enumeration guarded at n <= {MAX_CLIQUE_NODES}, got {}",
            gc.n()
        )));
    }
    let adjacency: Vec<BTreeSet<usize>> = (0..gc.n()).map(|i| gc.neighbors(i)).collect();
    let mut out: Vec<Vec<usize>> = Vec::new();
    let mut r = Vec::new();
    // isolated nodes can never join a size >= 2 clique
    let p: BTreeSet<usize> = (0..gc.n()).filter(|&i| !adjacency[i].is_empty()).collect();
    let x = BTreeSet::new();
    bron_kerbosch(&adjacency, &mut r, p, x, &mut out);
    for clique in &mut out {
        clique.sort_unstable();
    }
    out.sort();
    Ok(MaximalCliqueSet { cliques: out })
}

fn bron_kerbosch(
    adjacency: &[BTreeSet<usize>],
    r: &mut Vec<usize>,
    p: BTreeSet<usize>,
    x: BTreeSet<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    if p.is_empty() && x.is_empty() {
        if r.len() >= 2 {
            out.push(r.clone());
        }
        return;
    }
    // pivot: vertex of P u X with the most neighbors inside P
    let pivot = p
        .iter()
        .chain(x.iter())
        .max_by_key(|&&u| adjacency[u].intersection(&p).count())
        .copied();
    let candidates: Vec<usize> = match pivot {
        Some(u) => p.iter().filter(|&&v| !adjacency[u].contains(&v)).copied().collect(),
        None => p.iter().copied().collect(),
    };
    let mut p = p;
    let mut x = x;
    for v in candidates {
        let next_p: BTreeSet<usize> = p.intersection(&adjacency[v]).copied().collect();
        let next_x: BTreeSet<usize> = x.intersection(&adjacency[v]).copied().collect();
        r.push(v);
        bron_kerbosch(adjacency, r, next_p, next_x, out);
        r.pop();
        p.remove(&v);
        x.insert(v);
    }
}

/// Expansion of an n-node model with L latent strict-parent nodes: observed
/// dynamics `H`, latent gains `F` (n x L), and diagonal base spectra for the
/// joint noise `[e_o, e_h]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentExpansion {
    h: TransferMatrix,
    f: GainMatrix,
    observed_variances: Vec<f64>,
    latent_variances: Vec<f64>,
    latent_children: Vec<Vec<usize>>,
}

impl LatentExpansion {
    pub fn new(
        h: TransferMatrix,
        f: GainMatrix,
        observed_variances: Vec<f64>,
        latent_variances: Vec<f64>,
    ) -> Result<Self> {
        let n = h.n();
        if f.rows() != n {
            return Err(Error::Dimension(format!(
                "F has {} rows but H is {n}x{n}",
                f.rows()
            )));
        }
        if observed_variances.len() != n {
            return Err(Error::Dimension("observed variance count != n".into()));
        }
        if latent_variances.len() != f.cols() {
            return Err(Error::Dimension("latent variance count != F columns".into()));
        }
        let latent_children = (0..f.cols()).map(|l| f.column_support(l)).collect();
        Ok(Self {
            h,
            f,
            observed_variances,
            latent_variances,
            latent_children,
        })
    }

    pub fn n(&self) -> usize {
        self.h.n()
    }

    pub fn latent_count(&self) -> usize {
        self.f.cols()
    }

    pub fn h(&self) -> &TransferMatrix {
        &self.h
    }

    pub fn f(&self) -> &GainMatrix {
        &self.f
    }

    pub fn observed_variances(&self) -> &[f64] {
        &self.observed_variances
    }

    pub fn latent_variances(&self) -> &[f64] {
        &self.latent_variances
    }

    pub fn latent_children(&self) -> &[Vec<usize>] {
        &self.latent_children
    }

    /// The equivalent n-node model with dense affine-correlated noise.
    pub fn to_ldim(&self) -> Result<Ldim> {
        Ldim::new(
            self.h.clone(),
            NoiseSpec {
                base_variances: self.observed_variances.clone(),
                correlation: Correlation::Affine(AffineCorrelation {
                    gains: self.f.clone(),
                    latent_variances: self.latent_variances.clone(),
                }),
            },
        )
    }

    /// The (n+L)-node system with diagonal noise: `H~ = [[H, F], [0, 0]]`.
    pub fn full_system(&self) -> Result<Ldim> {
        let n = self.n();
        let total = n + self.latent_count();
        let mut big = TransferMatrix::zero(total);
        for i in 0..n {
            for j in 0..n {
                if !self.h.get(i, j).is_zero() {
                    big.set(i, j, self.h.get(i, j).clone())?;
                }
            }
            for l in 0..self.latent_count() {
                if !self.f.get(i, l).is_zero() {
                    big.set(i, n + l, self.f.get(i, l).clone())?;
                }
            }
        }
        let mut variances = self.observed_variances.clone();
        variances.extend_from_slice(&self.latent_variances);
        Ldim::new(big, NoiseSpec::diagonal(variances))
    }

    /// `Phi_e = Phi_eo + F Phi_eh F^*` at `omega`.
    pub fn noise_psd(&self, omega: f64) -> CMatrix {
        let n = self.n();
        let mut phi = CMatrix::zeros(n, n);
        for i in 0..n {
            phi[(i, i)] = C64::new(self.observed_variances[i], 0.0);
        }
        if self.latent_count() > 0 {
            let f = self.f.eval(omega);
            let lam = CMatrix::from_fn(self.latent_count(), self.latent_count(), |i, j| {
                if i == j {
                    C64::new(self.latent_variances[i], 0.0)
                } else {
                    C64::new(0.0, 0.0)
                }
            });
            phi += &f * lam * f.adjoint();
        }
        hermitianize(&phi)
    }

    /// Observed-block PSD computed through the full (n+L) system.
    pub fn observed_psd(&self, omega: f64) -> Result<CMatrix> {
        let full = self.full_system()?;
        let psd = full.psd(omega)?;
        Ok(psd.values.view((0, 0), (self.n(), self.n())).into_owned())
    }

    /// Analytic sparse + low-rank split of the observed IPSDM.
    pub fn sl_split(&self, omega: f64) -> Result<SlSplit> {
        let d_h = RMatrix::from_fn(self.latent_count(), self.latent_count(), |i, j| {
            if i == j {
                self.latent_variances[i]
            } else {
                0.0
            }
        });
        sl_split_parts(
            &self.h.eval(omega),
            &self.f.eval(omega),
            &self.observed_variances,
            &d_h,
            omega,
        )
    }

    /// Topology of the full (n+L)-node graph, for support comparisons.
    pub fn full_topology(&self) -> crate::netmodel::Topology {
        let n = self.n();
        let total = n + self.latent_count();
        let mut topo = crate::netmodel::Topology::new(total);
        for i in 0..n {
            for j in 0..n {
                if !self.h.get(i, j).is_zero() {
                    topo.add_edge(j, i).expect("hollow H");
                }
            }
        }
        for (l, children) in self.latent_children.iter().enumerate() {
            for &c in children {
                topo.add_edge(n + l, c).expect("latent edges are valid");
            }
        }
        topo
    }
}

/// Result of the matrix-inversion-lemma split `Phi_o^{-1} = S + L`.
#[derive(Clone, Debug)]
pub struct SlSplit {
    pub s: CMatrix,
    pub l: CMatrix,
    pub omega: f64,
}

impl SlSplit {
    pub fn sum(&self) -> CMatrix {
        &self.s + &self.l
    }
}

/// Split from raw parts: `S = (I-H)^* D_o^{-1} (I-H)`,
/// `L = -Psi^* Lambda^{-1} Psi` with `Psi = F^* D_o^{-1} (I-H)` and
/// `Lambda = F^* D_o^{-1} F + Phi_h^{-1}`. `Phi_h` is the latent spectrum
/// (diagonal in the affine case, a dense PD block for lifted monomials).
pub fn sl_split_parts(
    h_eval: &CMatrix,
    f_eval: &CMatrix,
    observed_variances: &[f64],
    latent_spectrum: &RMatrix,
    omega: f64,
) -> Result<SlSplit> {
    let n = h_eval.nrows();
    let l_count = f_eval.ncols();
    if observed_variances.len() != n || f_eval.nrows() != n {
        return Err(Error::Dimension("inconsistent split inputs".into()));
    }
    let d_inv = CMatrix::from_fn(n, n, |i, j| {
        if i == j {
            C64::new(1.0 / observed_variances[i], 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let ih = CMatrix::identity(n, n) - h_eval;
    let s = hermitianize(&(ih.adjoint() * &d_inv * &ih));
    if l_count == 0 {
        return Ok(SlSplit {
            s,
            l: CMatrix::zeros(n, n),
            omega,
        });
    }
    let phi_h = latent_spectrum.map(|x| C64::new(x, 0.0));
    let phi_h_inv = phi_h.try_inverse().ok_or(Error::Singular {
        context: "latent spectrum inversion".into(),
    })?;
    let psi = f_eval.adjoint() * &d_inv * &ih;
    let lambda = f_eval.adjoint() * &d_inv * f_eval + phi_h_inv;
    let lambda_inv = lambda.try_inverse().ok_or(Error::Singular {
        context: "Lambda inversion in S/L split".into(),
    })?;
    let l = hermitianize(&(-(psi.adjoint() * lambda_inv * psi)));
    Ok(SlSplit { s, l, omega })
}

/// Split for a polynomial correlation spec: the latent block is the centered
/// covariance of the active monomials.
pub fn sl_split_poly(
    h: &TransferMatrix,
    base_variances: &[f64],
    spec: &crate::poly_lift::PolyCorrelationSpec,
    omega: f64,
) -> Result<SlSplit> {
    let f = spec.active_gains_at(omega);
    let cov = spec.active_covariance()?;
    sl_split_parts(&h.eval(omega), &f, base_variances, &cov, omega)
}

/// Build the minimal expansion: one latent node per maximal clique, children
/// equal to the clique, gains drawn from the seed as single-delay taps with
/// magnitude in [0.3, 1.0].
pub fn build_lq_expansion(ldim: &Ldim, gc: &CorrelationGraph, seed: u64) -> Result<LatentExpansion> {
    build_lq_expansion_with_delays(ldim, gc, seed, &[1])
}

/// Variant with a caller-chosen cycle of latent gain delays (children of one
/// latent node rotate through the list). Heterogeneous delays keep the
/// imaginary part of the low-rank term nonzero even when clique members have
/// no incoming edges.
pub fn build_lq_expansion_with_delays(
    ldim: &Ldim,
    gc: &CorrelationGraph,
    seed: u64,
    delays: &[usize],
) -> Result<LatentExpansion> {
    if gc.n() != ldim.n() {
        return Err(Error::Dimension(format!(
            "correlation graph has {} nodes, model has {}",
            gc.n(),
            ldim.n()
        )));
    }
    if delays.is_empty() {
        return Err(Error::Invalid("delay cycle must be nonempty".into()));
    }
    let cliques = maximal_cliques(gc)?;
    let q = cliques.q();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = GainMatrix::zero(ldim.n(), q);
    for (l, clique) in cliques.cliques().iter().enumerate() {
        for (child_pos, &i) in clique.iter().enumerate() {
            let gain = rng.gen_range(0.3..=1.0);
            let delay = delays[child_pos % delays.len()];
            f.set(i, l, TransferFunction::delay(gain, delay))?;
        }
    }
    let latent_variances: Vec<f64> = (0..q).map(|_| rng.gen_range(0.5..=1.5)).collect();
    LatentExpansion::new(
        ldim.h().clone(),
        f,
        ldim.noise().base_variances.clone(),
        latent_variances,
    )
}

/// `Phi_e` of an expansion wrapped as a spectral matrix.
pub fn noise_psd_of_expansion(exp: &LatentExpansion, omega: f64) -> SpectralMatrix {
    SpectralMatrix::new(omega, exp.noise_psd(omega))
}

/// Support graph of the off-diagonal noise spectrum: edge (i,j) iff the
/// largest |(Phi_e)_ij| over the samples exceeds `tau_supp` times the
/// largest off-diagonal magnitude overall.
pub fn correlation_graph_from_psd(
    samples: &[SpectralMatrix],
    tau_supp: f64,
) -> Result<CorrelationGraph> {
    let first = samples
        .first()
        .ok_or_else(|| Error::Invalid("need at least one sampled spectral matrix".into()))?;
    let n = first.n();
    let mut max_entry: f64 = 0.0;
    let mut peak = DMatrix::<f64>::zeros(n, n);
    for s in samples {
        if s.n() != n {
            return Err(Error::Dimension("inconsistent sample sizes".into()));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let mag = s.values[(i, j)].norm();
                if mag > peak[(i, j)] {
                    peak[(i, j)] = mag;
                }
                if mag > max_entry {
                    max_entry = mag;
                }
            }
        }
    }
    let mut gc = CorrelationGraph::new(n);
    if max_entry == 0.0 {
        return Ok(gc);
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if peak[(i, j)] > tau_supp * max_entry {
                gc.add_edge(i, j)?;
            }
        }
    }
    Ok(gc)
}

/// Anything that exposes an observed-block PSD.
pub trait ObservedSpectrum {
    fn nodes(&self) -> usize;
    fn observed_psd_at(&self, omega: f64) -> Result<CMatrix>;
}

impl ObservedSpectrum for Ldim {
    fn nodes(&self) -> usize {
        self.n()
    }

    fn observed_psd_at(&self, omega: f64) -> Result<CMatrix> {
        Ok(self.psd(omega)?.values)
    }
}

impl ObservedSpectrum for LatentExpansion {
    fn nodes(&self) -> usize {
        self.n()
    }

    fn observed_psd_at(&self, omega: f64) -> Result<CMatrix> {
        self.observed_psd(omega)
    }
}

#[derive(Clone, Debug)]
pub struct EquivalenceReport {
    pub equivalent: bool,
    pub max_deviation: f64,
    pub tol: f64,
}

/// Two models are equivalent when their observed PSDs agree on the grid.
pub fn check_equivalence(
    a: &dyn ObservedSpectrum,
    b: &dyn ObservedSpectrum,
    grid_size: usize,
    tol: f64,
) -> Result<EquivalenceReport> {
    if a.nodes() != b.nodes() {
        return Err(Error::Dimension(format!(
            "models compare {} vs {} observed nodes",
            a.nodes(),
            b.nodes()
        )));
    }
    let mut max_dev: f64 = 0.0;
    for k in 0..grid_size {
        let omega = -PI + 2.0 * PI * (k as f64 + 1.0) / grid_size as f64;
        let pa = a.observed_psd_at(omega)?;
        let pb = b.observed_psd_at(omega)?;
        let dev = (&pa - &pb).map(|c| c.norm_sqr()).sum().sqrt();
        if dev > max_dev {
            max_dev = dev;
        }
    }
    Ok(EquivalenceReport {
        equivalent: max_dev <= tol,
        max_deviation: max_dev,
        tol,
    })
}

#[derive(Clone, Debug)]
pub struct StructureCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug)]
pub struct StructureReport {
    pub checks: Vec<StructureCheck>,
}

impl StructureReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Structural verification of an expansion against its correlation graph:
/// (i) (i,j) is an edge iff some latent node parents both, (ii) the latent
/// count is at least q, (iii) when a second expansion over the same graph is
/// supplied, both have identical support.
pub fn verify_structure(
    exp: &LatentExpansion,
    other: Option<&LatentExpansion>,
    gc: &CorrelationGraph,
) -> Result<StructureReport> {
    let mut checks = Vec::new();
    let n = exp.n();
    if gc.n() != n {
        return Err(Error::Dimension("graph/expansion size mismatch".into()));
    }

    let mut shared_parent_ok = true;
    let mut detail = String::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let has_common = exp
                .latent_children()
                .iter()
                .any(|ch| ch.contains(&i) && ch.contains(&j));
            if has_common != gc.contains(i, j) {
                shared_parent_ok = false;
                detail = format!(
                    "pair ({i},{j}): edge={} but common latent parent={}",
                    gc.contains(i, j),
                    has_common
                );
            }
        }
    }
    checks.push(StructureCheck {
        name: "edge iff common latent parent".into(),
        passed: shared_parent_ok,
        detail,
    });

    let q = maximal_cliques(gc)?.q();
    checks.push(StructureCheck {
        name: "latent count >= clique count".into(),
        passed: exp.latent_count() >= q,
        detail: format!("L={} q={q}", exp.latent_count()),
    });

    if let Some(other) = other {
        let same = exp.full_topology() == other.full_topology();
        checks.push(StructureCheck {
            name: "support identical across seeds".into(),
            passed: same,
            detail: String::new(),
        });
    }

    Ok(StructureReport { checks })
}
