//! Named property suites runnable from the CLI and reused by the
//! integration tests: spectral equivalence of expansions, block-diagonality
//! of lifted moment matrices, exact decomposition recovery, and
//! clique/latent counting.

use crate::decomp::{
    check_sufficient_condition, find_recovery_t, SkewSymmetricMatrix, SolverConfig,
};
use crate::error::Result;
use crate::generator::{generate, GeneratorConfig};
use crate::latent_transform::{
    build_lq_expansion, check_equivalence, maximal_cliques, verify_structure,
};
use crate::netmodel::RMatrix;
use crate::poly_lift::{enumerate_monomials, lifted_moment_matrix, parity_permutation};

#[derive(Clone, Debug)]
pub struct SuiteCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug)]
pub struct SuiteReport {
    pub suite: String,
    pub checks: Vec<SuiteCheck>,
}

impl SuiteReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Spectral equivalence of each generated model and its latent expansion.
pub fn equivalence_suite(seeds: u64) -> Result<SuiteReport> {
    let mut checks = Vec::new();
    for seed in 0..seeds {
        let q = 1 + (seed % 3) as usize;
        let n = 8 + (seed % 4) as usize * 7; // 8..29
        let mut cfg = GeneratorConfig::affine_benchmark(n, q);
        cfg.directed_edges = n / 2;
        let model = generate(&cfg, 1000 + seed)?;
        let exp = model.expansion.as_ref().expect("affine model");
        let correlated = exp.to_ldim()?;
        let report = check_equivalence(&correlated, exp, 16, 1e-10)?;
        checks.push(SuiteCheck {
            name: format!("equivalence seed={seed} n={n} q={q}"),
            passed: report.equivalent,
            detail: format!("max deviation {:.3e}", report.max_deviation),
        });
    }
    Ok(SuiteReport {
        suite: "equivalence".into(),
        checks,
    })
}

/// Exact block-diagonality of permuted lifted moment matrices.
pub fn blockdiag_suite() -> Result<SuiteReport> {
    let mut checks = Vec::new();
    for &(m, p) in &[(1usize, 2u32), (2, 3), (3, 2)] {
        let basis = enumerate_monomials(m, p)?;
        let clustering = parity_permutation(&basis);
        let moment = lifted_moment_matrix(m, p, 1.0)?;
        let mut off_block_zero = true;
        for k in 0..basis.len() {
            for l in 0..basis.len() {
                if clustering.cluster_of[k] != clustering.cluster_of[l] && moment[(k, l)] != 0.0 {
                    off_block_zero = false;
                }
            }
        }
        let blocks = clustering.clusters.len();
        checks.push(SuiteCheck {
            name: format!("block diagonal (m={m}, p={p})"),
            passed: off_block_zero && blocks <= 1 << m,
            detail: format!("{blocks} blocks of sizes {:?}", clustering
                .clusters
                .iter()
                .map(|(_, v)| v.len())
                .collect::<Vec<_>>()),
        });
    }
    Ok(SuiteReport {
        suite: "blockdiag".into(),
        checks,
    })
}

/// Flat rank-2 skew plus partial-matching sparse part that satisfies the
/// 1/12 bound; some grid point must recover it exactly.
pub fn recovery_suite(instances: u64) -> Result<SuiteReport> {
    let mut checks = Vec::new();
    let n = 300;
    for seed in 0..instances {
        let (s_true, l_true) = planted_instance(n, 5000 + seed);
        let (ok, product) = check_sufficient_condition(&s_true, &l_true, 1e-6, 1e-6);
        let c = SkewSymmetricMatrix::new(s_true.values() + l_true.values())?;
        let cfg = SolverConfig {
            max_iters: 4000,
            tol_primal: 1e-9,
            tol_dual: 1e-9,
            ..SolverConfig::default()
        };
        let found = find_recovery_t(&c, (&s_true, &l_true), &cfg, 0.01, 0.35, 1e-4, 12);
        checks.push(SuiteCheck {
            name: format!("planted recovery seed={seed}"),
            passed: ok && found.is_some(),
            detail: match found {
                Some((t, tol)) => format!("product {product:.4}, t={t:.2}, tol {tol:.2e}"),
                None => format!("product {product:.4}, no grid t reached 1e-4"),
            },
        });
    }
    Ok(SuiteReport {
        suite: "recovery".into(),
        checks,
    })
}

/// Planted pair used by the recovery suite: deg_max 1 and incoherence
/// exactly sqrt(2/n).
pub fn planted_instance(n: usize, seed: u64) -> (SkewSymmetricMatrix, SkewSymmetricMatrix) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut s = RMatrix::zeros(n, n);
    let mut nodes: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        nodes.swap(i, j);
    }
    for pair in nodes.chunks(2) {
        if pair.len() == 2 {
            let (a, b) = (pair[0], pair[1]);
            let mag = rng.gen_range(0.5..1.5) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            s[(a, b)] = mag;
            s[(b, a)] = -mag;
        }
    }
    let scale = 1.0 / (n as f64).sqrt();
    let u = RMatrix::from_fn(n, 1, |_, _| scale);
    let mut signs: Vec<f64> = (0..n).map(|i| if i < n / 2 { 1.0 } else { -1.0 }).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        signs.swap(i, j);
    }
    let v = RMatrix::from_fn(n, 1, |i, _| scale * signs[i]);
    let theta = rng.gen_range(0.8..1.2) * (n as f64).sqrt();
    let l = (&u * v.transpose() - &v * u.transpose()) * theta;
    (
        SkewSymmetricMatrix::project(&s),
        SkewSymmetricMatrix::project(&l),
    )
}

/// Clique/latent counting: the expansion has exactly one latent per maximal
/// clique, children match cliques bijectively, and two seeds share support.
pub fn counting_suite(seeds: u64) -> Result<SuiteReport> {
    let mut checks = Vec::new();
    for seed in 0..seeds {
        let q = (seed % 4) as usize;
        let n = 9 + (seed % 3) as usize * 5;
        let mut cfg = GeneratorConfig::affine_benchmark(n, q.max(1));
        if q == 0 {
            cfg.correlation = crate::generator::CorrelationKind::Diagonal;
            cfg.q = 0;
        }
        cfg.directed_edges = n / 3;
        let model = generate(&cfg, 2000 + seed)?;
        let cliques = maximal_cliques(&model.corr_graph)?;
        let exp_a = build_lq_expansion(&model.ldim, &model.corr_graph, 1)?;
        let exp_b = build_lq_expansion(&model.ldim, &model.corr_graph, 2)?;
        let count_ok = exp_a.latent_count() == cliques.q();
        let children_ok = cliques
            .cliques()
            .iter()
            .all(|c| exp_a.latent_children().iter().filter(|ch| *ch == c).count() == 1);
        let structure = verify_structure(&exp_a, Some(&exp_b), &model.corr_graph)?;
        checks.push(SuiteCheck {
            name: format!("counting seed={seed} n={n} q={}", cliques.q()),
            passed: count_ok && children_ok && structure.all_passed(),
            detail: format!(
                "latents {} cliques {} bijective {}",
                exp_a.latent_count(),
                cliques.q(),
                children_ok
            ),
        });
    }
    Ok(SuiteReport {
        suite: "counting".into(),
        checks,
    })
}

/// Dispatch by suite name.
pub fn run_suite(name: &str) -> Result<SuiteReport> {
    match name {
        "equivalence" => equivalence_suite(20),
        "blockdiag" => blockdiag_suite(),
        "recovery" => recovery_suite(5),
        "counting" => counting_suite(20),
        other => Err(crate::error::Error::Invalid(format!(
            "unknown suite '{other}' (available: equivalence, blockdiag, recovery, counting)"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomp::{deg_max, incoherence};

    #[test]
    fn blockdiag_suite_passes() {
        let report = blockdiag_suite().unwrap();
        assert!(report.all_passed(), "{:?}", report.checks);
    }

    #[test]
    fn counting_suite_passes() {
        let report = counting_suite(6).unwrap();
        assert!(report.all_passed(), "{:?}", report.checks);
    }

    #[test]
    fn unknown_suite_rejected() {
        assert!(run_suite("bogus").is_err());
    }

    #[test]
    fn planted_instance_satisfies_bound() {
        let (s, l) = planted_instance(300, 1);
        let (ok, product) = check_sufficient_condition(&s, &l, 1e-6, 1e-6);
        assert!(ok, "product {product}");
        assert_eq!(deg_max(s.values(), 1e-6), 1);
        let inc = incoherence(l.values(), 1e-6);
        assert!((inc - (2.0f64 / 300.0).sqrt()).abs() < 1e-10);
    }
}
