// Temporary calibration harness; run with
//   cargo test -p nettopo --test calibrate -- --nocapture --ignored
use nettopo::decomp::{
    select_middle_region, sweep, SkewSymmetricMatrix, SolverConfig,
};
use nettopo::generator::{generate, GeneratorConfig};
use nettopo::reconstruct::{evaluate_edges, topology_from_sparse, correlation_graph_from_lowrank};
use std::f64::consts::PI;
use std::time::Instant;

#[test]
#[ignore]
fn calibrate_affine_benchmark() {
    let omega = 3.0 * PI / 8.0;
    for seed in [7u64, 11, 21, 42, 77] {
        let t0 = Instant::now();
        let cfg = GeneratorConfig::affine_benchmark(29, 3);
        let model = generate(&cfg, seed).unwrap();
        let split = model.analytic_split(omega).unwrap();
        let s_true = SkewSymmetricMatrix::imag_part(&split.s);
        let l_true = SkewSymmetricMatrix::imag_part(&split.l);
        let c = SkewSymmetricMatrix::new(s_true.values() + l_true.values()).unwrap();
        println!(
            "seed {seed}: |S|_F={:.3} |L|_F={:.3} maxS={:.3} maxL={:.3} attempts={}",
            s_true.frobenius(),
            l_true.frobenius(),
            s_true.max_abs(),
            l_true.max_abs(),
            model.attempts
        );
        let solver = SolverConfig::default();
        let sr = sweep(&c, 0.01, &solver, Some((&s_true, &l_true))).unwrap();
        let elapsed = t0.elapsed();
        let diffs = sr.diffs();
        let (thresh, regions) = nettopo::decomp::zero_regions(&diffs, 1e-3);
        println!("  sweep in {elapsed:?}; threshold {thresh:.3e}; regions {regions:?}");
        let min_tol = sr
            .records
            .iter()
            .map(|r| r.tol.unwrap())
            .fold(f64::INFINITY, f64::min);
        let tol_zero_ts: Vec<f64> = sr
            .records
            .iter()
            .filter(|r| r.tol.unwrap() < 1e-4)
            .map(|r| r.t)
            .collect();
        println!(
            "  min tol {min_tol:.3e}; tol<1e-4 at t in {:?}..{:?} ({} pts)",
            tol_zero_ts.first(),
            tol_zero_ts.last(),
            tol_zero_ts.len()
        );
        let iters_max = sr.records.iter().map(|r| r.iters).max().unwrap();
        let unconverged = sr.records.iter().filter(|r| !r.converged).count();
        println!("  max iters {iters_max}; unconverged {unconverged}");
        match select_middle_region(&sr, 1e-3, 1e-6, 1e-6) {
            Ok(sel) => {
                let rec = &sr.records[sel.t0_index];
                let topo = topology_from_sparse(&rec.s, 1e-6);
                let m = evaluate_edges(&topo, &model.topology).unwrap();
                let corr = correlation_graph_from_lowrank(&rec.l, 1e-6, 1e-6);
                println!(
                    "  middle t0={:.2} range=({:.2},{:.2}) topo err={} corr exact={} product={:.3}",
                    sel.t0,
                    sel.t_range.0,
                    sel.t_range.1,
                    m.total_error_fraction,
                    corr.graph == model.corr_graph,
                    sel.product
                );
            }
            Err(e) => println!("  SELECTION FAILED: {e}"),
        }
    }
}

#[test]
#[ignore]
fn toy_disjoint_support_window() {
    use nettopo::decomp::{solve_split, tol_metric};
    use nettopo::netmodel::RMatrix;
    // matching sparse part on nodes 8..19, flat rank-2 clique block on 0..7
    let n = 20;
    let k = 8;
    let mut s = RMatrix::zeros(n, n);
    for (a, b) in [(8, 9), (10, 11), (12, 13), (14, 15), (16, 17), (18, 19)] {
        s[(a, b)] = 1.0;
        s[(b, a)] = -1.0;
    }
    let mut u = RMatrix::zeros(n, 1);
    let mut v = RMatrix::zeros(n, 1);
    for i in 0..k {
        u[(i, 0)] = 1.0 / (k as f64).sqrt() * if i % 2 == 0 { 1.0 } else { -1.0 };
        v[(i, 0)] = 1.0 / (k as f64).sqrt();
    }
    // orthogonalize v against u (u has zero sum over the clique via signs)
    let l = (&u * v.transpose() - &v * u.transpose()) * 2.0;
    let s_true = SkewSymmetricMatrix::project(&s);
    let l_true = SkewSymmetricMatrix::project(&l);
    let c = SkewSymmetricMatrix::new(s_true.values() + l_true.values()).unwrap();
    let cfg = SolverConfig::default();
    for t in [0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5] {
        let sol = solve_split(&c, t, &cfg).unwrap();
        let tol = tol_metric(&sol.s, &sol.l, &s_true, &l_true);
        println!("t={t:.2} tol={tol:.3e} iters={}", sol.iters);
    }
}

#[test]
#[ignore]
fn scan_generator_params() {
    use nettopo::decomp::find_recovery_t;
    let omega = 3.0 * PI / 8.0;
    for &(clique, gain_scale, var_scale, isolate) in &[
        (5usize, 1.0f64, 2.0f64, true),
        (5, 1.0, 4.0, true),
        (6, 1.0, 2.0, true),
        (6, 1.0, 4.0, true),
        (7, 1.0, 2.0, true),
        (8, 1.0, 2.0, true),
    ] {
        let mut hits = 0;
        let mut tols = Vec::new();
        for seed in 0..6u64 {
            let mut cfg = GeneratorConfig::affine_benchmark(29, 3);
            cfg.clique_size = clique;
            cfg.latent_gain_scale = gain_scale;
            cfg.latent_variance_scale = var_scale;
            cfg.isolate_cliques = isolate;
            let model = match generate(&cfg, 100 + seed) {
                Ok(m) => m,
                Err(e) => {
                    println!("  gen failed seed {seed}: {e}");
                    continue;
                }
            };
            let split = model.analytic_split(omega).unwrap();
            let s_true = SkewSymmetricMatrix::imag_part(&split.s);
            let l_true = SkewSymmetricMatrix::imag_part(&split.l);
            let c = SkewSymmetricMatrix::new(s_true.values() + l_true.values()).unwrap();
            let solver = SolverConfig::default();
            let found = find_recovery_t(&c, (&s_true, &l_true), &solver, 0.01, 0.33, 1e-4, 30);
            if let Some((t, tol)) = found {
                hits += 1;
                tols.push((seed, t, tol));
            }
        }
        println!(
            "clique={clique} gain={gain_scale} var={var_scale} iso={isolate}: {hits}/6 recovered; {tols:?}"
        );
    }
}

#[test]
#[ignore]
fn calibrate_poly_benchmark() {
    use nettopo::decomp::find_recovery_t;
    let omega = 3.0 * PI / 8.0;
    for seed in [5u64, 9, 13, 17, 23, 29] {
        let cfg = GeneratorConfig::poly_benchmark(29);
        let model = match generate(&cfg, seed) {
            Ok(m) => m,
            Err(e) => {
                println!("seed {seed}: gen failed: {e}");
                continue;
            }
        };
        let split = model.analytic_split(omega).unwrap();
        let s_true = SkewSymmetricMatrix::imag_part(&split.s);
        let l_true = SkewSymmetricMatrix::imag_part(&split.l);
        let c = SkewSymmetricMatrix::new(s_true.values() + l_true.values()).unwrap();
        let solver = SolverConfig::default();
        let found = find_recovery_t(&c, (&s_true, &l_true), &solver, 0.01, 0.33, 1e-4, 30);
        println!(
            "poly seed {seed}: |S|={:.2} |L|={:.2} rankL(im)={} found={found:?}",
            s_true.frobenius(),
            l_true.frobenius(),
            nettopo::decomp::rank_with_tol(l_true.values(), 1e-6)
        );
    }
}

#[test]
#[ignore]
fn calibrate_finite_data() {
    use nettopo::reconstruct::{
        direct_threshold_topology_calibrated, end_to_end, EndToEndConfig, GroundTruth,
    };
    use nettopo::spectral_est::{
        estimate_ipsdm, simulate_ldim, simulate_noise_affine, welch_cross_psd, WelchConfig,
    };
    let omega = 2.0 * PI / 5.0;
    let n_samples = 1_000_000usize;
    for seed in [7u64, 11, 21] {
        let t_start = Instant::now();
        let cfg = GeneratorConfig::affine_benchmark(29, 3);
        let model = generate(&cfg, seed).unwrap();
        let exp = model.expansion.as_ref().unwrap();
        let wcfg = WelchConfig::default();
        let draw = simulate_noise_affine(exp, n_samples + wcfg.burn_in, seed ^ 0xdead);
        let x = simulate_ldim(exp.h(), &draw.observed, wcfg.burn_in).unwrap();
        let est = welch_cross_psd(&x, &wcfg, &[omega]).unwrap();
        let ipsdm_hat = estimate_ipsdm(&est, omega).unwrap();
        let ipsdm_true = model.ldim.ipsdm(omega).unwrap();
        let rel = (&ipsdm_hat - &ipsdm_true.values)
            .iter()
            .map(|c| c.norm_sqr())
            .sum::<f64>()
            .sqrt()
            / ipsdm_true
                .values
                .iter()
                .map(|c| c.norm_sqr())
                .sum::<f64>()
                .sqrt();
        println!("seed {seed}: sim+welch in {:?}; ipsdm rel err {rel:.4}", t_start.elapsed());

        let split = model.analytic_split(omega).unwrap();
        let truth = GroundTruth {
            topology: model.topology.clone(),
            corr_graph: Some(model.corr_graph.clone()),
            im_s: Some(SkewSymmetricMatrix::imag_part(&split.s)),
            im_l: Some(SkewSymmetricMatrix::imag_part(&split.l)),
        };
        let (baseline_topo, thr, base_metrics) =
            direct_threshold_topology_calibrated(&ipsdm_hat, &model.topology).unwrap();
        let _ = baseline_topo;
        println!(
            "  direct baseline: thr={thr:.3} tp={} fp={} fn={} err={:.3}",
            base_metrics.true_positives,
            base_metrics.false_positives,
            base_metrics.false_negatives,
            base_metrics.total_error_fraction
        );
        let e2e_cfg = EndToEndConfig::finite_data(omega);
        let outcome = end_to_end(&ipsdm_hat, Some(&truth), &e2e_cfg).unwrap();
        match &outcome.report {
            Some(rep) => {
                let m = rep.topology_metrics.unwrap();
                println!(
                    "  decomposition: t0={:.2} regions={:?} tp={} fp={} fn={} err={:.3} (total {:?})",
                    rep.t0,
                    rep.zero_regions.iter().map(|r| (r.t_start, r.t_end)).collect::<Vec<_>>(),
                    m.true_positives,
                    m.false_positives,
                    m.false_negatives,
                    m.total_error_fraction,
                    t_start.elapsed()
                );
                let diffs = outcome.sweep.diffs();
                let show: Vec<String> = diffs.iter().enumerate().step_by(5).map(|(i, d)| format!("{i}:{d:.2e}")).collect();
                println!("  diffs {show:?}");
            }
            None => {
                println!("  SELECTION FAILED: {:?}", outcome.selection_error);
                let diffs = outcome.sweep.diffs();
                let show: Vec<String> = diffs.iter().enumerate().step_by(5).map(|(i, d)| format!("{i}:{d:.2e}")).collect();
                println!("  diffs {show:?}");
            }
        }
    }
}

#[test]
#[ignore]
fn calibrate_planted_timing() {
    use nettopo::decomp::find_recovery_t;
    use nettopo::verify::planted_instance;
    let n = 300;
    let t0 = Instant::now();
    let mut found_ts = Vec::new();
    for seed in 0..5 {
        let (s_true, l_true) = planted_instance(n, 9000 + seed);
        let c = SkewSymmetricMatrix::new(s_true.values() + l_true.values()).unwrap();
        let cfg = SolverConfig {
            max_iters: 4000,
            tol_primal: 1e-9,
            tol_dual: 1e-9,
            ..SolverConfig::default()
        };
        let t1 = Instant::now();
        let found = find_recovery_t(&c, (&s_true, &l_true), &cfg, 0.01, 0.35, 1e-4, 12);
        println!("seed {seed}: found {found:?} in {:?}", t1.elapsed());
        found_ts.push(found);
    }
    println!("total {:?}", t0.elapsed());
}
