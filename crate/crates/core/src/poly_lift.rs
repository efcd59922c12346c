//! Monomial lifting for polynomially correlated noise.
//!
//! An m-variate driver `v` with symmetric marginals is lifted to the vector
//! of all monomials `v^alpha` of total degree at most `p`. Second moments of
//! lifted coordinates factor over coordinates, vanish whenever the combined
//! exponent is odd anywhere, and therefore group the basis into at most
//! `2^m` mutually uncorrelated parity clusters.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netmodel::{CMatrix, GainMatrix, RMatrix};

/// Exponent vector of one monomial.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MultiIndex {
    exponents: Vec<u32>,
}

impl MultiIndex {
    pub fn new(exponents: Vec<u32>) -> Self {
        Self { exponents }
    }

    pub fn zeros(m: usize) -> Self {
        Self {
            exponents: vec![0; m],
        }
    }

    pub fn exponents(&self) -> &[u32] {
        &self.exponents
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.exponents.iter().sum()
    }

    pub fn parity(&self) -> ParityClass {
        ParityClass {
            even: self.exponents.iter().map(|&a| a % 2 == 0).collect(),
        }
    }
}

/// Odd/even pattern of an exponent vector; at most `2^m` distinct values.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ParityClass {
    even: Vec<bool>,
}

impl ParityClass {
    pub fn even_flags(&self) -> &[bool] {
        &self.even
    }

    /// Sort key: coordinate i contributes 2^i when its exponent is odd, so
    /// the all-even class comes first.
    pub fn key(&self) -> usize {
        self.even
            .iter()
            .enumerate()
            .map(|(i, &e)| if e { 0 } else { 1 << i })
            .sum()
    }
}

/// Ordered monomial basis: degree-major, lexicographic (descending exponent
/// vectors) within each degree. The first entry is the constant monomial.
#[derive(Clone, Debug, PartialEq)]
pub struct MonomialBasis {
    m: usize,
    p: u32,
    entries: Vec<MultiIndex>,
}

impl MonomialBasis {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[MultiIndex] {
        &self.entries
    }

    pub fn get(&self, k: usize) -> &MultiIndex {
        &self.entries[k]
    }
}

fn binomial(n: u64, k: u64) -> u128 {
    let k = k.min(n - k.min(n));
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// `M = sum_{k=0}^{p} C(m+k-1, k)`, the basis size.
pub fn basis_size(m: usize, p: u32) -> u128 {
    (0..=p as u64).map(|k| binomial(m as u64 + k - 1, k)).sum()
}

const MAX_BASIS: u128 = 1_000_000;

/// All monomials in `m` variables of total degree at most `p`.
pub fn enumerate_monomials(m: usize, p: u32) -> Result<MonomialBasis> {
    if m < 1 {
        return Err(Error::Invalid("m must be at least 1".into()));
    }
    let size = basis_size(m, p);
    if size > MAX_BASIS {
        return Err(Error::Invalid(format!(
            "basis size {size} exceeds the {MAX_BASIS} guard"
        )));
    }
    let mut entries = Vec::with_capacity(size as usize);
    for degree in 0..=p {
        let mut degree_block = Vec::new();
        let mut current = vec![0u32; m];
        emit_degree(m, degree, 0, degree, &mut current, &mut degree_block);
        // descending lexicographic within the degree: v1^k first
        degree_block.sort_by(|a, b| b.exponents.cmp(&a.exponents));
        entries.extend(degree_block);
    }
    Ok(MonomialBasis { m, p, entries })
}

fn emit_degree(
    m: usize,
    degree: u32,
    pos: usize,
    remaining: u32,
    current: &mut Vec<u32>,
    out: &mut Vec<MultiIndex>,
) {
    if pos == m - 1 {
        current[pos] = remaining;
        out.push(MultiIndex::new(current.clone()));
        current[pos] = 0;
        return;
    }
    for a in 0..=remaining {
        current[pos] = a;
        emit_degree(m, degree, pos + 1, remaining - a, current, out);
    }
    current[pos] = 0;
}

/// `E[v^p]` for `v ~ N(0, sigma^2)`: zero for odd `p`, `sigma^p (p-1)!!` for
/// even `p`.
pub fn gaussian_moment(p: u32, sigma: f64) -> f64 {
    if p % 2 == 1 {
        return 0.0;
    }
    let mut acc = 1.0;
    let mut k = p as i64 - 1;
    while k >= 1 {
        acc *= k as f64;
        k -= 2;
    }
    acc * sigma.powi(p as i32)
}

/// `E[v^alpha v^beta]` for IID `N(0, sigma^2)` coordinates: the product of
/// per-coordinate moments, exactly zero unless every combined exponent is
/// even.
pub fn monomial_second_moment(a: &MultiIndex, b: &MultiIndex, sigma: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "multi-indices have lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.exponents()
        .iter()
        .zip(b.exponents())
        .any(|(&x, &y)| (x + y) % 2 == 1)
    {
        return Ok(0.0);
    }
    let mut acc = 1.0;
    for (&x, &y) in a.exponents().iter().zip(b.exponents()) {
        acc *= gaussian_moment(x + y, sigma);
    }
    Ok(acc)
}

/// `E[v^alpha]` under the same driver.
pub fn monomial_mean(a: &MultiIndex, sigma: f64) -> f64 {
    if a.exponents().iter().any(|&x| x % 2 == 1) {
        return 0.0;
    }
    a.exponents().iter().map(|&x| gaussian_moment(x, sigma)).product()
}

/// Basis reordering that groups monomials by parity class.
#[derive(Clone, Debug)]
pub struct ParityClustering {
    /// permutation[r] = original basis index placed at permuted row r
    pub permutation: Vec<usize>,
    /// cluster_of[k] = cluster id of original basis index k
    pub cluster_of: Vec<usize>,
    /// clusters in sort-key order, each holding original basis indices
    pub clusters: Vec<(ParityClass, Vec<usize>)>,
}

/// Group the basis by parity class; within a cluster the original order is
/// kept, and clusters are sorted by their parity key (all-even first).
pub fn parity_permutation(basis: &MonomialBasis) -> ParityClustering {
    let mut clusters: Vec<(ParityClass, Vec<usize>)> = Vec::new();
    for (k, idx) in basis.entries().iter().enumerate() {
        let pc = idx.parity();
        match clusters.iter_mut().find(|(c, _)| *c == pc) {
            Some((_, members)) => members.push(k),
            None => clusters.push((pc, vec![k])),
        }
    }
    clusters.sort_by_key(|(c, _)| c.key());
    let mut permutation = Vec::with_capacity(basis.len());
    let mut cluster_of = vec![0usize; basis.len()];
    for (cid, (_, members)) in clusters.iter().enumerate() {
        for &k in members {
            permutation.push(k);
            cluster_of[k] = cid;
        }
    }
    ParityClustering {
        permutation,
        cluster_of,
        clusters,
    }
}

/// Raw lag-0 second-moment matrix of the lifted vector, `E[y_k y_l]`.
/// Entries across different parity classes are set to literal zero.
pub fn lifted_moment_matrix(m: usize, p: u32, sigma: f64) -> Result<RMatrix> {
    let basis = enumerate_monomials(m, p)?;
    let size = basis.len();
    let mut out = RMatrix::zeros(size, size);
    for k in 0..size {
        for l in k..size {
            let v = monomial_second_moment(basis.get(k), basis.get(l), sigma)?;
            out[(k, l)] = v;
            out[(l, k)] = v;
        }
    }
    Ok(out)
}

/// Centered covariance of the lifted vector, `E[y y^T] - E[y] E[y]^T`.
/// Shares the parity block structure of the raw moment matrix.
pub fn lifted_covariance_matrix(m: usize, p: u32, sigma: f64) -> Result<RMatrix> {
    let basis = enumerate_monomials(m, p)?;
    let size = basis.len();
    let means: Vec<f64> = basis.entries().iter().map(|a| monomial_mean(a, sigma)).collect();
    let mut out = lifted_moment_matrix(m, p, sigma)?;
    for k in 0..size {
        for l in 0..size {
            out[(k, l)] -= means[k] * means[l];
        }
    }
    Ok(out)
}

/// Pointwise lift of an `m x N` series to the `M x N` monomial series.
pub fn lift_series(v: &RMatrix, basis: &MonomialBasis) -> Result<RMatrix> {
    if v.nrows() != basis.m() {
        return Err(Error::Dimension(format!(
            "series has {} rows but the basis expects m={}",
            v.nrows(),
            basis.m()
        )));
    }
    let samples = v.ncols();
    let mut out = RMatrix::zeros(basis.len(), samples);
    for t in 0..samples {
        for (k, idx) in basis.entries().iter().enumerate() {
            let mut acc = 1.0;
            for (i, &a) in idx.exponents().iter().enumerate() {
                if a > 0 {
                    acc *= v[(i, t)].powi(a as i32);
                }
            }
            out[(k, t)] = acc;
        }
    }
    Ok(out)
}

/// Polynomial noise correlation: `e_i = e_o_i + sum_k F_{ik} (y_k - E[y_k])`,
/// with gains over the ordered monomial basis. Column 0 (the constant
/// monomial) must stay zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyCorrelationSpec {
    pub m: usize,
    pub p: u32,
    pub sigma: f64,
    pub gains: GainMatrix,
}

impl PolyCorrelationSpec {
    pub fn new(m: usize, p: u32, sigma: f64, gains: GainMatrix) -> Result<Self> {
        let expected = basis_size(m, p);
        if gains.cols() as u128 != expected {
            return Err(Error::Dimension(format!(
                "gain matrix has {} columns but the (m={m}, p={p}) basis has {expected}",
                gains.cols()
            )));
        }
        if (0..gains.rows()).any(|i| !gains.get(i, 0).is_zero()) {
            return Err(Error::Invalid(
                "constant-monomial gain column must be zero".into(),
            ));
        }
        Ok(Self { m, p, sigma, gains })
    }

    pub fn n(&self) -> usize {
        self.gains.rows()
    }

    /// Active monomial columns (the set J).
    pub fn active_set(&self) -> Vec<usize> {
        self.gains.active_columns()
    }

    pub fn latent_count(&self) -> usize {
        self.active_set().len()
    }

    pub fn basis(&self) -> Result<MonomialBasis> {
        enumerate_monomials(self.m, self.p)
    }

    /// Centered covariance of the active lifted coordinates.
    pub fn active_covariance(&self) -> Result<RMatrix> {
        let cov = lifted_covariance_matrix(self.m, self.p, self.sigma)?;
        let j = self.active_set();
        Ok(RMatrix::from_fn(j.len(), j.len(), |r, c| cov[(j[r], j[c])]))
    }

    /// Contribution `F_J(w) Cov_JJ F_J(w)^*` to the noise PSD.
    pub fn psd_contribution(&self, omega: f64) -> CMatrix {
        let j = self.active_set();
        if j.is_empty() {
            return CMatrix::zeros(self.n(), self.n());
        }
        let cov = self
            .active_covariance()
            .expect("validated spec has a consistent basis");
        let f = CMatrix::from_fn(self.n(), j.len(), |i, c| self.gains.get(i, j[c]).eval(omega));
        let cov_c = cov.map(|x| Complex64::new(x, 0.0));
        &f * cov_c * f.adjoint()
    }

    /// Gains restricted to active columns, evaluated at `omega`.
    pub fn active_gains_at(&self, omega: f64) -> CMatrix {
        let j = self.active_set();
        CMatrix::from_fn(self.n(), j.len(), |i, c| self.gains.get(i, j[c]).eval(omega))
    }
}

/// Union of per-active-cluster child cliques implied by a polynomial spec:
/// nodes i, j are correlated iff some parity cluster has both among the
/// children of its active monomials.
pub fn correlation_edges_of_spec(spec: &PolyCorrelationSpec) -> Result<Vec<(usize, usize)>> {
    let basis = spec.basis()?;
    let clustering = parity_permutation(&basis);
    let mut edges = std::collections::BTreeSet::new();
    for (_, members) in &clustering.clusters {
        let mut children = std::collections::BTreeSet::new();
        for &k in members {
            if k == 0 {
                continue; // constant column carries no randomness
            }
            for i in spec.gains.column_support(k) {
                children.insert(i);
            }
        }
        let ch: Vec<usize> = children.into_iter().collect();
        for a in 0..ch.len() {
            for b in (a + 1)..ch.len() {
                edges.insert((ch[a], ch[b]));
            }
        }
    }
    Ok(edges.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn basis_m2_p3_matches_reference_order() {
        let basis = enumerate_monomials(2, 3).unwrap();
        let expect: Vec<Vec<u32>> = vec![
            vec![0, 0],
            vec![1, 0],
            vec![0, 1],
            vec![2, 0],
            vec![1, 1],
            vec![0, 2],
            vec![3, 0],
            vec![2, 1],
            vec![1, 2],
            vec![0, 3],
        ];
        assert_eq!(basis.len(), 10);
        for (k, e) in expect.iter().enumerate() {
            assert_eq!(basis.get(k).exponents(), e.as_slice(), "entry {k}");
        }
    }

    #[test]
    fn basis_m1_p0_is_constant_only() {
        let basis = enumerate_monomials(1, 0).unwrap();
        assert_eq!(basis.len(), 1);
        assert_eq!(basis.get(0).degree(), 0);
    }

    #[test]
    fn basis_size_formula_matches_enumeration() {
        for m in 1..=4usize {
            for p in 0..=5u32 {
                let basis = enumerate_monomials(m, p).unwrap();
                assert_eq!(basis.len() as u128, basis_size(m, p), "(m,p)=({m},{p})");
            }
        }
        assert_eq!(basis_size(3, 2), 10);
    }

    #[test]
    fn gaussian_moment_reference_values() {
        assert_relative_eq!(gaussian_moment(4, 1.0), 3.0);
        assert_relative_eq!(gaussian_moment(3, 2.7), 0.0);
        assert_relative_eq!(gaussian_moment(0, 5.0), 1.0);
        // sigma = 2, p = 6: 15 * 64
        assert_relative_eq!(gaussian_moment(6, 2.0), 960.0);
    }

    #[test]
    fn gaussian_moment_matches_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sigma = 2.0;
        let samples = 10_000_000usize;
        let mut acc = 0.0;
        for _ in 0..samples {
            let u: f64 = rng.sample(rand_distr_standard_normal());
            acc += (sigma * u).powi(6);
        }
        let mc = acc / samples as f64;
        let exact = gaussian_moment(6, sigma);
        assert!(
            (mc - exact).abs() / exact < 0.02,
            "MC {mc} vs exact {exact}"
        );
    }

    // small helper so the tests do not depend on rand_distr
    fn rand_distr_standard_normal() -> impl rand::distributions::Distribution<f64> {
        struct BoxMuller;
        impl rand::distributions::Distribution<f64> for BoxMuller {
            fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> f64 {
                let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
                let u2: f64 = rng.gen();
                (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
            }
        }
        BoxMuller
    }

    #[test]
    fn second_moment_reference_values() {
        let basis = enumerate_monomials(2, 3).unwrap();
        // y2 * y5 = v1 * (v1 v2) = v1^2 v2 has an odd v2 exponent
        let v = monomial_second_moment(basis.get(1), basis.get(4), 1.0).unwrap();
        assert_eq!(v, 0.0);
        // y2 * y7 = v1 * v1^3 = v1^4 -> 3 sigma^4
        let sigma = 1.3;
        let v = monomial_second_moment(basis.get(1), basis.get(6), sigma).unwrap();
        assert_relative_eq!(v, 3.0 * sigma.powi(4), epsilon = 1e-12);
        // constant * constant
        let v = monomial_second_moment(basis.get(0), basis.get(0), sigma).unwrap();
        assert_relative_eq!(v, 1.0);
    }

    #[test]
    fn parity_clusters_match_reference() {
        let basis = enumerate_monomials(2, 3).unwrap();
        let clustering = parity_permutation(&basis);
        // permuted order (0-based): [y1,y4,y6, y2,y7,y9, y3,y8,y10, y5]
        assert_eq!(clustering.permutation, vec![0, 3, 5, 1, 6, 8, 2, 7, 9, 4]);
        // the (odd, even) cluster is {y2, y7, y9} = indices {1, 6, 8}
        let odd_even = clustering
            .clusters
            .iter()
            .find(|(c, _)| c.even_flags() == [false, true])
            .unwrap();
        assert_eq!(odd_even.1, vec![1, 6, 8]);
        assert!(clustering.clusters.len() <= 4);
    }

    #[test]
    fn parity_m1_p1_two_clusters() {
        let basis = enumerate_monomials(1, 1).unwrap();
        let clustering = parity_permutation(&basis);
        assert_eq!(clustering.clusters.len(), 2);
        assert_eq!(clustering.permutation, vec![0, 1]);
    }

    #[test]
    fn moment_matrix_block_structure() {
        let m = lifted_moment_matrix(2, 3, 1.0).unwrap();
        assert_eq!(m.nrows(), 10);
        let basis = enumerate_monomials(2, 3).unwrap();
        let clustering = parity_permutation(&basis);
        // permuted matrix must be exactly block diagonal
        let perm = &clustering.permutation;
        let mut block_sizes: Vec<usize> = clustering.clusters.iter().map(|(_, v)| v.len()).collect();
        block_sizes.sort_unstable();
        assert_eq!(block_sizes, vec![1, 3, 3, 3]);
        for r in 0..10 {
            for c in 0..10 {
                let (k, l) = (perm[r], perm[c]);
                if clustering.cluster_of[k] != clustering.cluster_of[l] {
                    assert_eq!(m[(k, l)], 0.0, "off-block entry ({r},{c}) must be exact zero");
                }
            }
        }
        // symmetric PSD
        let sym_dev = (&m - m.transpose()).abs().max();
        assert_eq!(sym_dev, 0.0);
        let eig = m.clone().symmetric_eigen();
        assert!(eig.eigenvalues.iter().all(|&v| v > -1e-12));
    }

    #[test]
    fn moment_matrix_m1_p1() {
        let sigma = 1.7;
        let m = lifted_moment_matrix(1, 1, sigma).unwrap();
        assert_relative_eq!(m[(0, 0)], 1.0);
        assert_relative_eq!(m[(0, 1)], 0.0);
        assert_relative_eq!(m[(1, 0)], 0.0);
        assert_relative_eq!(m[(1, 1)], sigma * sigma);
    }

    #[test]
    fn moment_matrix_matches_sample_covariance() {
        let (m, p, sigma) = (2usize, 2u32, 1.0);
        let basis = enumerate_monomials(m, p).unwrap();
        let n_samples = 1_000_000usize;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let dist = rand_distr_standard_normal();
        let mut v = RMatrix::zeros(m, n_samples);
        for t in 0..n_samples {
            for i in 0..m {
                v[(i, t)] = sigma * rng.sample(&dist);
            }
        }
        let y = lift_series(&v, &basis).unwrap();
        let exact = lifted_moment_matrix(m, p, sigma).unwrap();
        for k in 0..basis.len() {
            for l in k..basis.len() {
                let mut acc = 0.0;
                let mut acc2 = 0.0;
                for t in 0..n_samples {
                    let prod = y[(k, t)] * y[(l, t)];
                    acc += prod;
                    acc2 += prod * prod;
                }
                let mean = acc / n_samples as f64;
                let var = (acc2 / n_samples as f64 - mean * mean).max(0.0);
                let se = (var / n_samples as f64).sqrt();
                assert!(
                    (mean - exact[(k, l)]).abs() <= 3.0 * se + 1e-9,
                    "entry ({k},{l}): sample {mean} vs exact {} (se {se})",
                    exact[(k, l)]
                );
            }
        }
    }

    #[test]
    fn lift_of_zero_series() {
        let basis = enumerate_monomials(2, 2).unwrap();
        let v = RMatrix::zeros(2, 5);
        let y = lift_series(&v, &basis).unwrap();
        for t in 0..5 {
            assert_eq!(y[(0, t)], 1.0);
            for k in 1..basis.len() {
                assert_eq!(y[(k, t)], 0.0);
            }
        }
    }

    #[test]
    fn lift_single_sample_reference() {
        let basis = enumerate_monomials(2, 2).unwrap();
        let v = RMatrix::from_column_slice(2, 1, &[2.0, 3.0]);
        let y = lift_series(&v, &basis).unwrap();
        let got: Vec<f64> = (0..basis.len()).map(|k| y[(k, 0)]).collect();
        assert_eq!(got, vec![1.0, 2.0, 3.0, 4.0, 6.0, 9.0]);
    }

    #[test]
    fn oversized_basis_rejected() {
        assert!(enumerate_monomials(30, 12).is_err());
    }
}
