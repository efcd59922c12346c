//! Constrained l1 + nuclear-norm splitting of a real skew-symmetric matrix.
//!
//! Solves, for a penalty factor `t` in [0, 1],
//!
//! ```text
//! min  t ||S||_1 + (1 - t) ||L||_*   subject to  S + L = C,  S^T = -S,  L^T = -L
//! ```
//!
//! by proximal splitting (ADMM): element-wise soft-thresholding for the l1
//! block, singular-value soft-thresholding for the nuclear block, scaled dual
//! updates for the coupling constraint. Both proximal maps preserve skew
//! symmetry; the iterates are re-projected each iteration to keep the
//! invariant exact in floating point.
//!
//! A penalty sweep over the grid {eps, 2 eps, ..., 1} exposes the regions
//! where the solution path is stationary; with a sparse + low-rank ground
//! truth the path is constant near the endpoints and on an exact-recovery
//! interval in between, so the successive-change trace has at least three
//! zero regions and the middle one identifies the exact decomposition.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netmodel::{CMatrix, RMatrix};

/// Real matrix with `A^T = -A` held exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct SkewSymmetricMatrix {
    values: RMatrix,
}

impl SkewSymmetricMatrix {
    /// Wraps a matrix that is already exactly skew-symmetric.
    pub fn new(values: RMatrix) -> Result<Self> {
        if values.nrows() != values.ncols() {
            return Err(Error::Dimension("skew matrix must be square".into()));
        }
        let max_dev = (&values + values.transpose())
            .iter()
            .map(|v| v.abs())
            .fold(0.0, f64::max);
        if max_dev > 0.0 {
            return Err(Error::NotSkewSymmetric { max_dev });
        }
        Ok(Self { values })
    }

    /// Projects an arbitrary square matrix onto the skew subspace,
    /// `(A - A^T) / 2`, with exact antisymmetry enforced entrywise.
    pub fn project(m: &RMatrix) -> Self {
        let n = m.nrows();
        let mut out = RMatrix::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (m[(i, j)] - m[(j, i)]);
                out[(i, j)] = v;
                out[(j, i)] = -v;
            }
        }
        Self { values: out }
    }

    /// Imaginary part of a (Hermitian) complex matrix, antisymmetrized.
    pub fn imag_part(c: &CMatrix) -> Self {
        let im = c.map(|z| z.im);
        Self::project(&im)
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            values: RMatrix::zeros(n, n),
        }
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &RMatrix {
        &self.values
    }

    pub fn into_values(self) -> RMatrix {
        self.values
    }

    pub fn frobenius(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    pub fn scale(&self, a: f64) -> Self {
        Self {
            values: self.values.map(|v| a * v),
        }
    }
}

/// ADMM parameters.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolverConfig {
    /// initial augmented-penalty weight (auto-balanced when adaptive)
    pub rho: f64,
    /// over-relaxation factor in [1, 1.8]
    pub alpha: f64,
    pub max_iters: usize,
    /// primal tolerance, relative to ||C||_F
    pub tol_primal: f64,
    /// dual tolerance, relative to ||C||_F
    pub tol_dual: f64,
    /// residual-balancing updates of rho
    pub adaptive_rho: bool,
    /// relative singular-value cutoff for ranks and incoherence
    pub tau_rank: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rho: 1.0,
            alpha: 1.6,
            max_iters: 20_000,
            tol_primal: 1e-10,
            tol_dual: 1e-10,
            adaptive_rho: true,
            tau_rank: 1e-6,
        }
    }
}

/// One solve of the splitting program.
#[derive(Clone, Debug)]
pub struct SplitSolution {
    pub s: SkewSymmetricMatrix,
    pub l: SkewSymmetricMatrix,
    pub iters: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub converged: bool,
}

/// Warm-start state carried between related solves.
#[derive(Clone, Debug)]
pub struct WarmStart {
    pub s: RMatrix,
    pub l: RMatrix,
    pub dual: RMatrix,
    pub rho: f64,
}

fn soft_threshold(m: &RMatrix, tau: f64) -> RMatrix {
    m.map(|v| {
        let a = v.abs() - tau;
        if a > 0.0 {
            a * v.signum()
        } else {
            0.0
        }
    })
}

/// Singular-value soft-thresholding through the symmetric eigendecomposition
/// of `A^T A`: with `A = U Sigma V^T`, `A V f(Sigma) V^T = U max(Sigma-tau,0) V^T`
/// for `f(s) = max(s - tau, 0)/s`. Returns the thresholded matrix and the
/// count of singular values above `tau`.
fn svt(a: &RMatrix, tau: f64) -> (RMatrix, usize) {
    let n = a.nrows();
    let b = a.transpose() * a;
    let eig = b.symmetric_eigen();
    let mut factors = vec![0.0; n];
    let mut rank = 0usize;
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        let sigma = lam.max(0.0).sqrt();
        if sigma > tau {
            factors[k] = (sigma - tau) / sigma;
            rank += 1;
        }
    }
    if rank == 0 {
        return (RMatrix::zeros(n, n), 0);
    }
    let v = &eig.eigenvectors;
    let mut scaled = v.clone();
    for k in 0..n {
        let f = factors[k];
        for i in 0..n {
            scaled[(i, k)] *= f;
        }
    }
    ((a * &scaled) * v.transpose(), rank)
}

/// Weighted splitting `min w_s ||S||_1 + w_l ||L||_*  s.t. S + L = C`.
/// Used with `(t, 1-t)` weights and with `(gamma, 1)` weights.
pub fn solve_weighted(
    c: &SkewSymmetricMatrix,
    w_s: f64,
    w_l: f64,
    cfg: &SolverConfig,
    warm: Option<&WarmStart>,
) -> SplitSolution {
    let n = c.n();
    let scale = c.max_abs();
    if scale == 0.0 {
        return SplitSolution {
            s: SkewSymmetricMatrix::zeros(n),
            l: SkewSymmetricMatrix::zeros(n),
            iters: 0,
            primal_residual: 0.0,
            dual_residual: 0.0,
            converged: true,
        };
    }
    // weight corners have closed-form solutions
    if w_s == 0.0 {
        return SplitSolution {
            s: c.clone(),
            l: SkewSymmetricMatrix::zeros(n),
            iters: 0,
            primal_residual: 0.0,
            dual_residual: 0.0,
            converged: true,
        };
    }
    if w_l == 0.0 {
        return SplitSolution {
            s: SkewSymmetricMatrix::zeros(n),
            l: c.clone(),
            iters: 0,
            primal_residual: 0.0,
            dual_residual: 0.0,
            converged: true,
        };
    }

    let cn = c.values().map(|v| v / scale);
    let c_fro = cn.iter().map(|v| v * v).sum::<f64>().sqrt();

    let (mut s, mut l, mut u, mut rho) = match warm {
        Some(w) => (
            w.s.map(|v| v / scale),
            w.l.map(|v| v / scale),
            w.dual.clone(),
            w.rho,
        ),
        None => (
            RMatrix::zeros(n, n),
            RMatrix::zeros(n, n),
            RMatrix::zeros(n, n),
            cfg.rho,
        ),
    };

    let mut primal = f64::INFINITY;
    let mut dual = f64::INFINITY;
    let mut iters = 0;
    let mut converged = false;

    for k in 0..cfg.max_iters {
        iters = k + 1;
        // S block
        let s_arg = &cn - &l - &u;
        s = soft_threshold(&s_arg, w_s / rho);
        // over-relaxed S for the coupling
        let s_hat = if cfg.alpha != 1.0 {
            s.map(|v| v * cfg.alpha) + (&cn - &l).map(|v| v * (1.0 - cfg.alpha))
        } else {
            s.clone()
        };
        // L block
        let l_prev = l.clone();
        let l_arg = &cn - &s_hat - &u;
        let (l_new, _) = svt(&l_arg, w_l / rho);
        l = SkewSymmetricMatrix::project(&l_new).into_values();
        // dual update
        let r_relaxed = &s_hat + &l - &cn;
        u += &r_relaxed;

        let r = &s + &l - &cn;
        primal = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        dual = rho * (&l - &l_prev).iter().map(|v| v * v).sum::<f64>().sqrt();

        if primal <= cfg.tol_primal * c_fro && dual <= cfg.tol_dual * c_fro {
            converged = true;
            break;
        }

        if cfg.adaptive_rho && (k + 1) % 10 == 0 {
            if primal > 10.0 * dual && rho < 1e4 {
                rho *= 2.0;
                u /= 2.0;
            } else if dual > 10.0 * primal && rho > 1e-4 {
                rho /= 2.0;
                u *= 2.0;
            }
        }
    }

    let s_out = SkewSymmetricMatrix::project(&s.map(|v| v * scale));
    let l_out = SkewSymmetricMatrix::project(&l.map(|v| v * scale));
    SplitSolution {
        s: s_out,
        l: l_out,
        iters,
        primal_residual: primal * scale,
        dual_residual: dual * scale,
        converged,
    }
}

/// Solve the split at penalty factor `t`; errors if `t` is out of range or
/// the solver fails to converge.
pub fn solve_split(c: &SkewSymmetricMatrix, t: f64, cfg: &SolverConfig) -> Result<SplitSolution> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Invalid(format!("t = {t} outside [0, 1]")));
    }
    let sol = solve_weighted(c, t, 1.0 - t, cfg, None);
    if !sol.converged {
        return Err(Error::NoConvergence {
            iters: sol.iters,
            primal: sol.primal_residual,
            dual: sol.dual_residual,
        });
    }
    Ok(sol)
}

/// Same program in the `gamma ||S||_1 + ||L||_*` parameterization; matches
/// `solve_split` under `t = gamma / (1 + gamma)`.
pub fn solve_split_gamma(
    c: &SkewSymmetricMatrix,
    gamma: f64,
    cfg: &SolverConfig,
) -> Result<SplitSolution> {
    if gamma < 0.0 {
        return Err(Error::Invalid(format!("gamma = {gamma} must be nonnegative")));
    }
    let sol = solve_weighted(c, gamma, 1.0, cfg, None);
    if !sol.converged {
        return Err(Error::NoConvergence {
            iters: sol.iters,
            primal: sol.primal_residual,
            dual: sol.dual_residual,
        });
    }
    Ok(sol)
}

/// Maximum row/column count of entries above `tau_supp * max |entry|`.
pub fn deg_max(m: &RMatrix, tau_supp: f64) -> usize {
    let max_abs = m.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if max_abs == 0.0 {
        return 0;
    }
    let thresh = tau_supp * max_abs;
    let n = m.nrows();
    let mut best = 0usize;
    for i in 0..n {
        let row = (0..m.ncols()).filter(|&j| m[(i, j)].abs() > thresh).count();
        best = best.max(row);
    }
    for j in 0..m.ncols() {
        let col = (0..n).filter(|&i| m[(i, j)].abs() > thresh).count();
        best = best.max(col);
    }
    best
}

/// Subspace incoherence `max_k ||U U^T e_k||_2` where `U` spans the column
/// space of `m` (compact SVD truncated at `tau_rank * sigma_max`).
pub fn incoherence(m: &RMatrix, tau_rank: f64) -> f64 {
    let svd = m.clone().svd(true, false);
    let u = match &svd.u {
        Some(u) => u,
        None => return 0.0,
    };
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0.0;
    }
    let keep: Vec<usize> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > tau_rank * smax)
        .map(|(k, _)| k)
        .collect();
    let mut best: f64 = 0.0;
    for i in 0..u.nrows() {
        let row_norm_sq: f64 = keep.iter().map(|&k| u[(i, k)] * u[(i, k)]).sum();
        best = best.max(row_norm_sq);
    }
    best.sqrt()
}

/// Effective rank at the same relative cutoff.
pub fn rank_with_tol(m: &RMatrix, tau_rank: f64) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tau_rank * smax).count()
}

/// Exact-recovery sufficient condition `deg_max(S) * inc(L) < 1/12`.
pub fn check_sufficient_condition(
    s: &SkewSymmetricMatrix,
    l: &SkewSymmetricMatrix,
    tau_supp: f64,
    tau_rank: f64,
) -> (bool, f64) {
    let product = deg_max(s.values(), tau_supp) as f64 * incoherence(l.values(), tau_rank);
    (product < 1.0 / 12.0, product)
}

/// Relative recovery error against known ground truth; absolute norms are
/// used for components whose true part vanishes.
pub fn tol_metric(
    s: &SkewSymmetricMatrix,
    l: &SkewSymmetricMatrix,
    s_true: &SkewSymmetricMatrix,
    l_true: &SkewSymmetricMatrix,
) -> f64 {
    let term = |est: &SkewSymmetricMatrix, truth: &SkewSymmetricMatrix| {
        let denom = truth.frobenius();
        let num = (est.values() - truth.values())
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        if denom > 0.0 {
            num / denom
        } else {
            num
        }
    };
    term(s, s_true) + term(l, l_true)
}

pub const DEFAULT_TAU_SUPP: f64 = 1e-6;
pub const DEFAULT_TAU_ZERO: f64 = 1e-3;

/// One grid point of the penalty sweep.
#[derive(Clone, Debug)]
pub struct SweepRecord {
    pub t: f64,
    pub s: SkewSymmetricMatrix,
    pub l: SkewSymmetricMatrix,
    pub diff: f64,
    pub tol: Option<f64>,
    pub deg_max_s: usize,
    pub inc_l: f64,
    pub rank_l: usize,
    pub primal_residual: f64,
    pub iters: usize,
    pub converged: bool,
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub eps: f64,
    pub records: Vec<SweepRecord>,
    pub truth_given: bool,
}

impl SweepResult {
    pub fn diffs(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.diff).collect()
    }
}

/// Penalty sweep over `t in {eps, 2 eps, ..., 1}`. Per-t solves run
/// independently (cold starts, parallelizable); the successive-change trace
/// `diff_t` is computed in a second sequential pass against the `t = 0`
/// corner `(C, 0)`.
pub fn sweep(
    c: &SkewSymmetricMatrix,
    eps: f64,
    cfg: &SolverConfig,
    truth: Option<(&SkewSymmetricMatrix, &SkewSymmetricMatrix)>,
) -> Result<SweepResult> {
    if !(0.0..=0.5).contains(&eps) || eps <= 0.0 {
        return Err(Error::Invalid(format!("eps = {eps} outside (0, 0.5]")));
    }
    let steps_f = 1.0 / eps;
    let steps = steps_f.round() as usize;
    if (steps_f - steps as f64).abs() > 1e-9 {
        return Err(Error::Invalid(format!("1/eps = {steps_f} is not an integer")));
    }

    let solutions: Vec<(f64, SplitSolution)> = (1..=steps)
        .into_par_iter()
        .map(|k| {
            let t = k as f64 * eps;
            let sol = solve_weighted(c, t, 1.0 - t, cfg, None);
            (t, sol)
        })
        .collect();

    let mut records = Vec::with_capacity(steps);
    let mut prev_s = c.clone();
    let mut prev_l = SkewSymmetricMatrix::zeros(c.n());
    for (t, sol) in solutions {
        let diff_s = (sol.s.values() - prev_s.values())
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        let diff_l = (sol.l.values() - prev_l.values())
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        let diff = diff_s + diff_l;
        let tol = truth.map(|(st, lt)| tol_metric(&sol.s, &sol.l, st, lt));
        records.push(SweepRecord {
            t,
            diff,
            tol,
            deg_max_s: deg_max(sol.s.values(), DEFAULT_TAU_SUPP),
            inc_l: incoherence(sol.l.values(), cfg.tau_rank),
            rank_l: rank_with_tol(sol.l.values(), cfg.tau_rank),
            primal_residual: sol.primal_residual,
            iters: sol.iters,
            converged: sol.converged,
            s: sol.s.clone(),
            l: sol.l.clone(),
        });
        prev_s = sol.s;
        prev_l = sol.l;
    }
    Ok(SweepResult {
        eps,
        records,
        truth_given: truth.is_some(),
    })
}

/// Maximal runs of grid indices whose diff value sits below the zero
/// threshold. The threshold is `tau_zero` times a scale taken as the median
/// diff, floored at 1e-3 of the peak diff so that solver noise on wide
/// plateaus cannot push the cut below its own level.
pub fn zero_regions(diffs: &[f64], tau_zero: f64) -> (f64, Vec<(usize, usize)>) {
    if diffs.is_empty() {
        return (0.0, Vec::new());
    }
    let max_diff = diffs.iter().cloned().fold(0.0, f64::max);
    if max_diff == 0.0 {
        return (0.0, vec![(0, diffs.len() - 1)]);
    }
    let mut sorted: Vec<f64> = diffs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = sorted[sorted.len() / 2];
    let scale = median.max(1e-3 * max_diff);
    let threshold = tau_zero * scale;

    let mut regions = Vec::new();
    let mut start: Option<usize> = None;
    for (i, &d) in diffs.iter().enumerate() {
        if d < threshold {
            if start.is_none() {
                start = Some(i);
            }
        } else if let Some(s) = start.take() {
            regions.push((s, i - 1));
        }
    }
    if let Some(s) = start {
        regions.push((s, diffs.len() - 1));
    }
    (threshold, regions)
}

fn ordered_float(x: f64) -> u64 {
    // total order for nonnegative floats
    x.to_bits()
}

/// Chosen middle region of a sweep.
#[derive(Clone, Debug)]
pub struct MiddleRegionSelection {
    pub regions: Vec<(usize, usize)>,
    pub threshold: f64,
    pub region: (usize, usize),
    pub t_range: (f64, f64),
    pub t0: f64,
    pub t0_index: usize,
    /// Algorithm step-7 re-validation at the chosen point (advisory: the
    /// product bound is conservative and generally fails at moderate n even
    /// when recovery is exact).
    pub sufficient: bool,
    pub product: f64,
}

/// Picks the middle zero region of the diff trace and its midpoint. The
/// corner regions are the runs attached to the two grid ends (solutions
/// stuck at `(C, 0)` and `(0, C)`); with more than one region left in
/// between, interior regions whose midpoints pass the 1/12 check are
/// preferred, then longer runs (a short spurious lock vertex can appear
/// between the recovery plateau and a corner), then proximity to the grid
/// center.
pub fn select_middle_region(
    sr: &SweepResult,
    tau_zero: f64,
    tau_supp: f64,
    tau_rank: f64,
) -> Result<MiddleRegionSelection> {
    let diffs = sr.diffs();
    let (threshold, regions) = zero_regions(&diffs, tau_zero);
    if regions.len() < 3 {
        return Err(Error::TooFewZeroRegions {
            found: regions.len(),
        });
    }
    let last = sr.records.len() - 1;
    let interior: Vec<(usize, usize)> = regions
        .iter()
        .filter(|r| r.0 != 0 && r.1 != last)
        .copied()
        .collect();
    if interior.is_empty() {
        return Err(Error::TooFewZeroRegions {
            found: regions.len(),
        });
    }
    let center = last as f64 / 2.0;
    let midpoint = |r: &(usize, usize)| (r.0 + r.1) / 2;
    let passes = |r: &(usize, usize)| {
        let rec = &sr.records[midpoint(r)];
        check_sufficient_condition(&rec.s, &rec.l, tau_supp, tau_rank).0
    };
    let rank_key = |r: &(usize, usize)| {
        let len = r.1 - r.0;
        let dist = (midpoint(r) as f64 - center).abs();
        (!passes(r), std::cmp::Reverse(len), ordered_float(dist))
    };
    let pick = interior
        .iter()
        .min_by_key(|r| rank_key(r))
        .copied()
        .expect("interior region list is nonempty");

    let idx = midpoint(&pick);
    let rec = &sr.records[idx];
    let (sufficient, product) = check_sufficient_condition(&rec.s, &rec.l, tau_supp, tau_rank);
    Ok(MiddleRegionSelection {
        regions: regions.clone(),
        threshold,
        region: pick,
        t_range: (sr.records[pick.0].t, sr.records[pick.1].t),
        t0: rec.t,
        t0_index: idx,
        sufficient,
        product,
    })
}

/// Scans grid points outward from `start_t` until the recovery error drops
/// below `tol_target`, warm-starting each solve from the previous one.
/// Returns the first grid `t` that achieves the target.
pub fn find_recovery_t(
    c: &SkewSymmetricMatrix,
    truth: (&SkewSymmetricMatrix, &SkewSymmetricMatrix),
    cfg: &SolverConfig,
    eps: f64,
    start_t: f64,
    tol_target: f64,
    max_probes: usize,
) -> Option<(f64, f64)> {
    let steps = (1.0 / eps).round() as usize;
    let start_k = ((start_t / eps).round() as usize).clamp(1, steps);
    let mut order = vec![start_k];
    for d in 1..steps {
        if start_k + d <= steps {
            order.push(start_k + d);
        }
        if start_k > d {
            order.push(start_k - d);
        }
    }
    let mut warm: Option<WarmStart> = None;
    for &k in order.iter().take(max_probes) {
        let t = k as f64 * eps;
        let sol = solve_weighted(c, t, 1.0 - t, cfg, warm.as_ref());
        let tol = tol_metric(&sol.s, &sol.l, truth.0, truth.1);
        warm = Some(WarmStart {
            s: sol.s.values().clone(),
            l: sol.l.values().clone(),
            dual: RMatrix::zeros(c.n(), c.n()),
            rho: cfg.rho,
        });
        if tol < tol_target {
            return Some((t, tol));
        }
    }
    None
}
