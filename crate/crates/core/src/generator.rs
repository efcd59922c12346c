//! Seeded random model generation for benchmarks and property suites.
//!
//! Generated models follow the conventions that make the downstream
//! reconstruction identifiable: every directed edge carries a positive
//! single-delay gain (common phase per row, nonzero imaginary part away from
//! 0 and pi), rows are rescaled to keep the dynamics well-posed, and the
//! correlation structure is planted as disjoint cliques.
//!
//! In separated mode, latent nodes are kept at least four hops apart and
//! clique members accept no incoming edges from outside their clique; latent
//! gain delays then alternate between 1 and 2 so the low-rank term keeps a
//! nonzero imaginary part. Under those constraints the support of the
//! low-rank singular vectors equals the clique exactly, which is what the
//! correlation-graph readout relies on.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent_transform::{
    build_lq_expansion_with_delays, maximal_cliques, sl_split_poly, CorrelationGraph,
    LatentExpansion, SlSplit,
};
use crate::netmodel::{
    topology_of, Correlation, GainMatrix, Ldim, NoiseSpec, Topology, TransferFunction,
    TransferMatrix,
};
use crate::poly_lift::{enumerate_monomials, parity_permutation, PolyCorrelationSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CorrelationKind {
    Diagonal,
    Affine,
    Poly,
}

/// Generator parameters.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n: usize,
    /// number of directed edges (each drawn on a distinct unordered pair)
    pub directed_edges: usize,
    /// number of planted maximal cliques of size >= 2
    pub q: usize,
    pub clique_size: usize,
    pub correlation: CorrelationKind,
    /// keep latent nodes >= 4 hops apart and clique members free of
    /// incoming edges from outside the clique
    pub separated: bool,
    /// keep clique members out of the dynamics entirely: the sparse and
    /// low-rank supports then live on disjoint index sets, which is what
    /// gives the penalty sweep its exact middle plateau
    pub isolate_cliques: bool,
    /// cap on the undirected degree of any node in the drawn topology;
    /// the sign pattern of the sparse part then keeps a small spectral
    /// norm, which widens the recovery window
    pub max_degree: usize,
    /// latent gains carry both a lag-1 and a lag-2 tap with per-child
    /// mixing phases, spreading each clique's rank-2 block over all its
    /// members (low incoherence) and keeping its imaginary part nonzero
    pub two_tap_latents: bool,
    /// rotate latent gain delays through {1, 2}
    pub delay_diverse: bool,
    /// polynomial lifting parameters (used when correlation = Poly)
    pub poly_m: usize,
    pub poly_p: u32,
    pub poly_sigma: f64,
    pub max_attempts: usize,
    /// multiplier on the drawn latent gains
    pub latent_gain_scale: f64,
    /// multiplier on the drawn latent variances
    pub latent_variance_scale: f64,
}

impl GeneratorConfig {
    pub fn affine_benchmark(n: usize, q: usize) -> Self {
        Self {
            n,
            directed_edges: 16.min(n * (n - 1) / 2),
            q,
            clique_size: 5,
            correlation: if q == 0 {
                CorrelationKind::Diagonal
            } else {
                CorrelationKind::Affine
            },
            separated: true,
            isolate_cliques: true,
            max_degree: 3,
            two_tap_latents: true,
            delay_diverse: true,
            poly_m: 2,
            poly_p: 3,
            poly_sigma: 1.0,
            max_attempts: 200,
            latent_gain_scale: 1.0,
            latent_variance_scale: 2.0,
        }
    }

    pub fn poly_benchmark(n: usize) -> Self {
        Self {
            correlation: CorrelationKind::Poly,
            q: 1,
            ..Self::affine_benchmark(n, 1)
        }
    }
}

/// Generated model bundle: the correlated-noise model plus whichever latent
/// representation produced it.
#[derive(Clone, Debug)]
pub struct GeneratedModel {
    pub ldim: Ldim,
    pub expansion: Option<LatentExpansion>,
    pub topology: Topology,
    pub corr_graph: CorrelationGraph,
    pub seed: u64,
    pub attempts: usize,
    pub min_det: f64,
}

impl GeneratedModel {
    /// Analytic split of the observed IPSDM at `omega`.
    pub fn analytic_split(&self, omega: f64) -> Result<SlSplit> {
        if let Some(exp) = &self.expansion {
            return exp.sl_split(omega);
        }
        match &self.ldim.noise().correlation {
            Correlation::Poly(spec) => sl_split_poly(
                self.ldim.h(),
                &self.ldim.noise().base_variances,
                spec,
                omega,
            ),
            Correlation::None => {
                let ipsdm = self.ldim.ipsdm(omega)?;
                Ok(SlSplit {
                    l: crate::netmodel::CMatrix::zeros(self.ldim.n(), self.ldim.n()),
                    s: ipsdm.values,
                    omega,
                })
            }
            Correlation::Affine(_) => unreachable!("affine models carry their expansion"),
        }
    }
}

fn knuth_shuffle<T, R: Rng>(items: &mut [T], rng: &mut R) {
    for i in (1..items.len()).rev() {
        let j = rng.gen_range(0..=i);
        items.swap(i, j);
    }
}

fn splitmix(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Lag-1/lag-2 gain for child `p` of `k`: magnitudes near `scale` with the
/// tap mix rotating across children, so the per-latent rank-2 block spreads
/// evenly over the whole clique.
fn two_tap_gain<R: Rng>(rng: &mut R, p: usize, k: usize, scale: f64) -> TransferFunction {
    let jitter = rng.gen_range(-0.1..0.1);
    let phase = std::f64::consts::PI * ((p as f64 + 0.5) / k as f64 + jitter);
    let g = scale * rng.gen_range(0.9..1.1);
    TransferFunction::new(vec![0.0, g * phase.cos(), g * phase.sin()])
}

/// Generate a model; retries with derived sub-seeds until the structural
/// checks pass (well-posedness, detectability, planted cliques maximal).
pub fn generate(cfg: &GeneratorConfig, seed: u64) -> Result<GeneratedModel> {
    if cfg.n < 2 {
        return Err(Error::Invalid("need at least 2 nodes".into()));
    }
    if cfg.q * cfg.clique_size > cfg.n {
        return Err(Error::Invalid(format!(
            "{} cliques of size {} do not fit in {} nodes",
            cfg.q, cfg.clique_size, cfg.n
        )));
    }
    if cfg.clique_size < 2 && cfg.q > 0 {
        return Err(Error::Invalid("cliques need at least 2 members".into()));
    }
    let mut last_reason = String::new();
    for attempt in 0..cfg.max_attempts {
        let sub_seed = splitmix(seed ^ splitmix(attempt as u64));
        match try_generate(cfg, seed, sub_seed, attempt + 1) {
            Ok(model) => return Ok(model),
            Err(e) => last_reason = e.to_string(),
        }
    }
    Err(Error::GeneratorExhausted {
        attempts: cfg.max_attempts,
        reason: last_reason,
    })
}

fn try_generate(
    cfg: &GeneratorConfig,
    seed: u64,
    sub_seed: u64,
    attempt: usize,
) -> Result<GeneratedModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed);
    let n = cfg.n;

    // clique members: disjoint node groups
    let mut nodes: Vec<usize> = (0..n).collect();
    knuth_shuffle(&mut nodes, &mut rng);
    let mut cliques: Vec<Vec<usize>> = (0..cfg.q)
        .map(|k| {
            let mut members: Vec<usize> =
                nodes[k * cfg.clique_size..(k + 1) * cfg.clique_size].to_vec();
            members.sort_unstable();
            members
        })
        .collect();
    cliques.sort();
    let mut gc = CorrelationGraph::new(n);
    for clique in &cliques {
        for a in 0..clique.len() {
            for b in (a + 1)..clique.len() {
                gc.add_edge(clique[a], clique[b])?;
            }
        }
    }
    // disjoint planting must survive maximal-clique enumeration
    let enumerated = maximal_cliques(&gc)?;
    if enumerated.cliques() != cliques.as_slice() {
        return Err(Error::Invalid("planted cliques are not maximal".into()));
    }

    let clique_of: Vec<Option<usize>> = (0..n)
        .map(|i| cliques.iter().position(|c| c.contains(&i)))
        .collect();

    // directed edges on distinct unordered pairs
    let mut h = TransferMatrix::zero(n);
    let mut used_pairs = std::collections::BTreeSet::new();
    let mut degree = vec![0usize; n];
    let mut placed = 0usize;
    let mut budget = 50 * cfg.directed_edges + 500;
    while placed < cfg.directed_edges && budget > 0 {
        budget -= 1;
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a == b || used_pairs.contains(&(a.min(b), a.max(b))) {
            continue;
        }
        if degree[a] >= cfg.max_degree || degree[b] >= cfg.max_degree {
            continue;
        }
        let (from, to) = if rng.gen_bool(0.5) { (a, b) } else { (b, a) };
        if cfg.isolate_cliques && (clique_of[from].is_some() || clique_of[to].is_some()) {
            continue;
        }
        if cfg.separated {
            let (cf, ct) = (clique_of[from], clique_of[to]);
            // no contact between different cliques
            if cf.is_some() && ct.is_some() && cf != ct {
                continue;
            }
            // no incoming edges into a clique from outside it
            if ct.is_some() && cf != ct {
                continue;
            }
        }
        let gain = rng.gen_range(0.1..0.9);
        h.set(to, from, TransferFunction::delay(gain, 1))?;
        used_pairs.insert((a.min(b), a.max(b)));
        degree[a] += 1;
        degree[b] += 1;
        placed += 1;
    }
    if placed < cfg.directed_edges {
        return Err(Error::Invalid(format!(
            "placed only {placed} of {} edges under the separation constraints",
            cfg.directed_edges
        )));
    }

    // rescale rows so single-delay gains sum to at most 0.9 per row
    for i in 0..n {
        let row_sum: f64 = (0..n).map(|j| h.get(i, j).taps().iter().map(|c| c.abs()).sum::<f64>()).sum();
        if row_sum > 0.9 {
            let scale = 0.9 / row_sum;
            for j in 0..n {
                if !h.get(i, j).is_zero() {
                    let scaled = h.get(i, j).scale(scale);
                    h.set(i, j, scaled)?;
                }
            }
        }
    }

    let observed_variances: Vec<f64> = (0..n).map(|_| rng.gen_range(0.8..1.2)).collect();

    let (ldim, expansion) = match cfg.correlation {
        CorrelationKind::Diagonal => {
            let ldim = Ldim::new(h.clone(), NoiseSpec::diagonal(observed_variances))?;
            (ldim, None)
        }
        CorrelationKind::Affine => {
            let exp = if cfg.two_tap_latents {
                let mut f = GainMatrix::zero(n, cfg.q);
                for (l, clique) in cliques.iter().enumerate() {
                    for (p, &i) in clique.iter().enumerate() {
                        f.set(i, l, two_tap_gain(&mut rng, p, clique.len(), cfg.latent_gain_scale))?;
                    }
                }
                let latent_variances: Vec<f64> = (0..cfg.q)
                    .map(|_| rng.gen_range(0.5..1.5) * cfg.latent_variance_scale)
                    .collect();
                LatentExpansion::new(h.clone(), f, observed_variances, latent_variances)?
            } else {
                let base = Ldim::new(h.clone(), NoiseSpec::diagonal(observed_variances))?;
                let delays: &[usize] = if cfg.delay_diverse { &[1, 2] } else { &[1] };
                let drawn = build_lq_expansion_with_delays(&base, &gc, sub_seed ^ 0x5eed, delays)?;
                let boosted: Vec<f64> = drawn
                    .latent_variances()
                    .iter()
                    .map(|v| v * cfg.latent_variance_scale)
                    .collect();
                LatentExpansion::new(
                    drawn.h().clone(),
                    drawn.f().clone(),
                    drawn.observed_variances().to_vec(),
                    boosted,
                )?
            };
            let ldim = exp.to_ldim()?;
            (ldim, Some(exp))
        }
        CorrelationKind::Poly => {
            let basis = enumerate_monomials(cfg.poly_m, cfg.poly_p)?;
            let clustering = parity_permutation(&basis);
            // first cluster holding a degree-1 monomial and no constant
            let cluster = clustering
                .clusters
                .iter()
                .find(|(_, members)| !members.contains(&0))
                .map(|(_, members)| members.clone())
                .ok_or_else(|| Error::Invalid("no usable parity cluster".into()))?;
            let children = cliques
                .first()
                .cloned()
                .ok_or_else(|| Error::Invalid("polynomial correlation needs q >= 1".into()))?;
            // separable gains F_ik = u_i(z) w_k: every correlated node sees
            // the same polynomial of the driver scaled by its own transfer
            // function, so the lifted block stays rank one and the sweep
            // keeps an exact-recovery window
            let monomial_weights: Vec<f64> =
                cluster.iter().map(|_| rng.gen_range(0.5..1.0)).collect();
            let mut gains = GainMatrix::zero(n, basis.len());
            for (pos, &i) in children.iter().enumerate() {
                let profile = if cfg.two_tap_latents {
                    two_tap_gain(&mut rng, pos, children.len(), cfg.latent_gain_scale)
                } else {
                    let delay = if cfg.delay_diverse { 1 + (pos % 2) } else { 1 };
                    TransferFunction::delay(rng.gen_range(0.3..1.0), delay)
                };
                for (ci, &k) in cluster.iter().enumerate() {
                    gains.set(i, k, profile.scale(monomial_weights[ci]))?;
                }
            }
            let spec = PolyCorrelationSpec::new(cfg.poly_m, cfg.poly_p, cfg.poly_sigma, gains)?;
            let ldim = Ldim::new(
                h.clone(),
                NoiseSpec {
                    base_variances: observed_variances,
                    correlation: Correlation::Poly(spec),
                },
            )?;
            (ldim, None)
        }
    };

    let topology = topology_of(&h.graph());
    let wp = crate::netmodel::check_well_posed(&ldim, crate::netmodel::DEFAULT_GRID)?;
    if !wp.well_posed {
        return Err(Error::NotWellPosed { min_det: wp.min_det });
    }

    Ok(GeneratedModel {
        ldim,
        expansion,
        topology,
        corr_graph: gc,
        seed,
        attempts: attempt,
        min_det: wp.min_det,
    })
}
