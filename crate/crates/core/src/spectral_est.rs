//! Time-domain simulation of the models and Welch cross-spectral estimation.
//!
//! Simulation realizes `x(t) = sum_{tau >= 1} H_tau x(t - tau) + e(t)` as a
//! forward recursion, which requires every entry of `H` to be strictly
//! causal. Noise is drawn as IID Gaussians pushed through the affine or
//! polynomial correlation structure. The Welch estimator averages windowed
//! cross-periodograms over overlapping segments, evaluated at arbitrary
//! frequencies through a direct windowed transform per segment, so the
//! benchmark frequencies (rational multiples of pi) need not sit on a
//! power-of-two FFT grid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent_transform::LatentExpansion;
use crate::netmodel::{C64, CMatrix, RMatrix, TransferMatrix, hermitianize};
use crate::poly_lift::{enumerate_monomials, lift_series, monomial_mean, PolyCorrelationSpec};

/// Multichannel real series, one row per node.
#[derive(Clone, Debug)]
pub struct TimeSeries {
    values: RMatrix,
    pub seed: Option<u64>,
}

impl TimeSeries {
    pub fn new(values: RMatrix) -> Self {
        Self { values, seed: None }
    }

    pub fn with_seed(values: RMatrix, seed: u64) -> Self {
        Self {
            values,
            seed: Some(seed),
        }
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn len(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.values.ncols() == 0
    }

    pub fn values(&self) -> &RMatrix {
        &self.values
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.len()).map(|t| self.values[(i, t)]).collect()
    }
}

fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller; one draw per call keeps the stream layout simple and seeded
    let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// White Gaussian noise with per-row variances.
pub fn white_noise(variances: &[f64], samples: usize, seed: u64) -> TimeSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = variances.len();
    let mut out = RMatrix::zeros(n, samples);
    for t in 0..samples {
        for i in 0..n {
            out[(i, t)] = variances[i].sqrt() * standard_normal(&mut rng);
        }
    }
    TimeSeries::with_seed(out, seed)
}

/// Affine noise draw: the observed block `e = e_o + F * e_h` plus the latent
/// series itself.
pub struct NoiseDraw {
    pub observed: TimeSeries,
    pub latent: TimeSeries,
}

/// Simulate `e = e_o + F e_h` with everything IID Gaussian and `F` applied
/// as FIR convolution. Deterministic per seed.
pub fn simulate_noise_affine(exp: &LatentExpansion, samples: usize, seed: u64) -> NoiseDraw {
    let n = exp.n();
    let l_count = exp.latent_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut observed = RMatrix::zeros(n, samples);
    for t in 0..samples {
        for i in 0..n {
            observed[(i, t)] = exp.observed_variances()[i].sqrt() * standard_normal(&mut rng);
        }
    }
    let mut latent = RMatrix::zeros(l_count, samples);
    for t in 0..samples {
        for l in 0..l_count {
            latent[(l, t)] = exp.latent_variances()[l].sqrt() * standard_normal(&mut rng);
        }
    }
    for i in 0..n {
        for l in 0..l_count {
            let tf = exp.f().get(i, l);
            if tf.is_zero() {
                continue;
            }
            for (delay, &c) in tf.taps().iter().enumerate() {
                if c == 0.0 {
                    continue;
                }
                for t in delay..samples {
                    observed[(i, t)] += c * latent[(l, t - delay)];
                }
            }
        }
    }
    NoiseDraw {
        observed: TimeSeries::with_seed(observed, seed),
        latent: TimeSeries::with_seed(latent, seed),
    }
}

/// Simulate polynomially correlated noise: `v` IID `N(0, sigma^2 I_m)`,
/// `e = e_o + F_poly (y - E[y])` with `y` the lifted monomial series.
/// Even monomials carry nonzero means, so the lift is centered before the
/// gains are applied, keeping `e` zero-mean.
pub fn simulate_noise_poly(
    base_variances: &[f64],
    spec: &PolyCorrelationSpec,
    samples: usize,
    seed: u64,
) -> Result<TimeSeries> {
    if base_variances.len() != spec.n() {
        return Err(Error::Dimension(
            "base variance count != polynomial spec rows".into(),
        ));
    }
    let n = spec.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut e = RMatrix::zeros(n, samples);
    for t in 0..samples {
        for i in 0..n {
            e[(i, t)] = base_variances[i].sqrt() * standard_normal(&mut rng);
        }
    }
    let active = spec.active_set();
    if active.is_empty() {
        return Ok(TimeSeries::with_seed(e, seed));
    }
    let basis = enumerate_monomials(spec.m, spec.p)?;
    let mut v = RMatrix::zeros(spec.m, samples);
    for t in 0..samples {
        for i in 0..spec.m {
            v[(i, t)] = spec.sigma * standard_normal(&mut rng);
        }
    }
    let y = lift_series(&v, &basis)?;
    let means: Vec<f64> = basis
        .entries()
        .iter()
        .map(|a| monomial_mean(a, spec.sigma))
        .collect();
    for i in 0..n {
        for &k in &active {
            let tf = spec.gains.get(i, k);
            if tf.is_zero() {
                continue;
            }
            for (delay, &c) in tf.taps().iter().enumerate() {
                if c == 0.0 {
                    continue;
                }
                for t in delay..samples {
                    e[(i, t)] += c * (y[(k, t - delay)] - means[k]);
                }
            }
        }
    }
    Ok(TimeSeries::with_seed(e, seed))
}

/// Forward recursion `x(t) = sum_{tau >= 1} H_tau x(t - tau) + e(t)`,
/// discarding the first `burn_in` samples. `H` must be strictly causal.
pub fn simulate_ldim(h: &TransferMatrix, e: &TimeSeries, burn_in: usize) -> Result<TimeSeries> {
    let n = h.n();
    if e.n() != n {
        return Err(Error::Dimension(format!(
            "noise has {} rows, model has n={n}",
            e.n()
        )));
    }
    if let Some((i, j)) = h.first_non_causal() {
        return Err(Error::NotStrictlyCausal { i, j });
    }
    let total = e.len();
    if burn_in >= total {
        return Err(Error::InsufficientData(format!(
            "burn-in {burn_in} consumes all {total} samples"
        )));
    }
    // sparse tap list: (target, source, delay, coefficient)
    let mut taps = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let tf = h.get(i, j);
            for (delay, &c) in tf.taps().iter().enumerate() {
                if c != 0.0 {
                    taps.push((i, j, delay, c));
                }
            }
        }
    }
    let mut x = RMatrix::zeros(n, total);
    for t in 0..total {
        for i in 0..n {
            x[(i, t)] = e.values()[(i, t)];
        }
        for &(i, j, delay, c) in &taps {
            if t >= delay {
                let v = c * x[(j, t - delay)];
                x[(i, t)] += v;
            }
        }
    }
    let kept = total - burn_in;
    let out = RMatrix::from_fn(n, kept, |i, t| x[(i, t + burn_in)]);
    Ok(TimeSeries {
        values: out,
        seed: e.seed,
    })
}

/// Recover the noise from a simulated series; the defining recursion must
/// hold to machine precision.
pub fn residual_noise(h: &TransferMatrix, x: &TimeSeries) -> Result<TimeSeries> {
    if let Some((i, j)) = h.first_non_causal() {
        return Err(Error::NotStrictlyCausal { i, j });
    }
    let n = x.n();
    let total = x.len();
    let mut e = x.values().clone();
    for i in 0..n {
        for j in 0..n {
            let tf = h.get(i, j);
            for (delay, &c) in tf.taps().iter().enumerate() {
                if c == 0.0 {
                    continue;
                }
                for t in delay..total {
                    e[(i, t)] -= c * x.values()[(j, t - delay)];
                }
            }
        }
    }
    Ok(TimeSeries::new(e))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum WindowKind {
    Hann,
    Rectangular,
}

/// Welch estimator parameters.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WelchConfig {
    pub segment_length: usize,
    pub overlap: f64,
    pub window: WindowKind,
    pub burn_in: usize,
}

impl Default for WelchConfig {
    fn default() -> Self {
        Self {
            segment_length: 4096,
            overlap: 0.5,
            window: WindowKind::Hann,
            burn_in: 1000,
        }
    }
}

impl WelchConfig {
    pub fn validate(&self, samples: usize) -> Result<()> {
        if !self.segment_length.is_power_of_two() {
            return Err(Error::Invalid(format!(
                "segment length {} is not a power of two",
                self.segment_length
            )));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(Error::Invalid(format!(
                "overlap {} outside [0, 1)",
                self.overlap
            )));
        }
        if samples < 4 * self.segment_length {
            return Err(Error::InsufficientData(format!(
                "need at least 4 segments: {} samples < 4 * {}",
                samples, self.segment_length
            )));
        }
        Ok(())
    }

    fn window_values(&self) -> Vec<f64> {
        let len = self.segment_length;
        match self.window {
            WindowKind::Rectangular => vec![1.0; len],
            WindowKind::Hann => (0..len)
                .map(|t| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * t as f64 / len as f64).cos()))
                .collect(),
        }
    }
}

/// Hermitian cross-PSD estimates at a fixed set of frequencies.
#[derive(Clone, Debug)]
pub struct SpectralEstimate {
    pub omegas: Vec<f64>,
    pub matrices: Vec<CMatrix>,
    pub segments: usize,
}

impl SpectralEstimate {
    pub fn at(&self, omega: f64) -> Result<&CMatrix> {
        self.omegas
            .iter()
            .position(|&w| (w - omega).abs() < 1e-12)
            .map(|k| &self.matrices[k])
            .ok_or_else(|| Error::Invalid(format!("omega {omega} was not estimated")))
    }
}

/// Welch cross-PSD: averaged windowed cross-periodograms over overlapping
/// segments. Per-channel means are removed first; window power is
/// normalized so white unit-variance input estimates the identity.
pub fn welch_cross_psd(
    x: &TimeSeries,
    cfg: &WelchConfig,
    omegas: &[f64],
) -> Result<SpectralEstimate> {
    cfg.validate(x.len())?;
    if omegas.is_empty() {
        return Err(Error::Invalid("no frequencies requested".into()));
    }
    let n = x.n();
    let seg = cfg.segment_length;
    let hop = ((1.0 - cfg.overlap) * seg as f64).round().max(1.0) as usize;
    let segments = (x.len() - seg) / hop + 1;
    let window = cfg.window_values();
    let window_power: f64 = window.iter().map(|w| w * w).sum();

    let means: Vec<f64> = (0..n)
        .map(|i| (0..x.len()).map(|t| x.values()[(i, t)]).sum::<f64>() / x.len() as f64)
        .collect();

    let mut matrices = Vec::with_capacity(omegas.len());
    for &omega in omegas {
        // phase table for the windowed transform at this frequency
        let step = C64::from_polar(1.0, -omega);
        let mut phases = Vec::with_capacity(seg);
        let mut ph = C64::new(1.0, 0.0);
        for w in window.iter() {
            phases.push(ph * *w);
            ph *= step;
        }
        let mut acc = CMatrix::zeros(n, n);
        let mut spectra = vec![C64::new(0.0, 0.0); n];
        for s in 0..segments {
            let start = s * hop;
            for (i, item) in spectra.iter_mut().enumerate() {
                let mut sum = C64::new(0.0, 0.0);
                for (t, phase) in phases.iter().enumerate() {
                    sum += phase * (x.values()[(i, start + t)] - means[i]);
                }
                *item = sum;
            }
            for i in 0..n {
                for j in i..n {
                    acc[(i, j)] += spectra[i] * spectra[j].conj();
                }
            }
        }
        let norm = 1.0 / (segments as f64 * window_power);
        let mut phi = CMatrix::zeros(n, n);
        for i in 0..n {
            phi[(i, i)] = C64::new(acc[(i, i)].re * norm, 0.0);
            for j in (i + 1)..n {
                let v = acc[(i, j)] * norm;
                phi[(i, j)] = v;
                phi[(j, i)] = v.conj();
            }
        }
        matrices.push(phi);
    }
    Ok(SpectralEstimate {
        omegas: omegas.to_vec(),
        matrices,
        segments,
    })
}

const IPSDM_COND_LIMIT: f64 = 1e8;

/// Inverse of the Welch estimate at one frequency, Hermitian-symmetrized.
pub fn estimate_ipsdm(est: &SpectralEstimate, omega: f64) -> Result<CMatrix> {
    let phi = est.at(omega)?;
    let cond = crate::netmodel::condition_number(phi);
    if !cond.is_finite() || cond > IPSDM_COND_LIMIT {
        return Err(Error::IllConditioned {
            omega,
            cond,
            limit: IPSDM_COND_LIMIT,
        });
    }
    let inv = phi.clone().try_inverse().ok_or(Error::Singular {
        context: format!("estimated PSD at omega={omega}"),
    })?;
    Ok(hermitianize(&inv))
}

/// Store a series as CSV, one row per node.
pub fn write_series_csv<W: std::io::Write>(x: &TimeSeries, mut w: W) -> Result<()> {
    for i in 0..x.n() {
        let row: Vec<String> = (0..x.len()).map(|t| format!("{:.17e}", x.values()[(i, t)])).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn read_series_csv<R: std::io::BufRead>(r: R) -> Result<TimeSeries> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|v| v.trim().parse::<f64>()).collect();
        rows.push(row.map_err(|e| Error::Parse(format!("bad float in series CSV: {e}")))?);
    }
    if rows.is_empty() {
        return Err(Error::Parse("empty series file".into()));
    }
    let len = rows[0].len();
    if rows.iter().any(|r| r.len() != len) {
        return Err(Error::Parse("ragged series CSV".into()));
    }
    let values = RMatrix::from_fn(rows.len(), len, |i, t| rows[i][t]);
    Ok(TimeSeries::new(values))
}

/// Binary block layout: `u32 n`, `u64 N`, then `n * N` little-endian f64
/// values in row-major order.
pub fn write_series_bin<W: std::io::Write>(x: &TimeSeries, mut w: W) -> Result<()> {
    w.write_all(&(x.n() as u32).to_le_bytes())?;
    w.write_all(&(x.len() as u64).to_le_bytes())?;
    for i in 0..x.n() {
        for t in 0..x.len() {
            w.write_all(&x.values()[(i, t)].to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_series_bin<R: std::io::Read>(mut r: R) -> Result<TimeSeries> {
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b4)?;
    let n = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b8)?;
    let len = u64::from_le_bytes(b8) as usize;
    let mut values = RMatrix::zeros(n, len);
    for i in 0..n {
        for t in 0..len {
            r.read_exact(&mut b8)?;
            values[(i, t)] = f64::from_le_bytes(b8);
        }
    }
    Ok(TimeSeries::new(values))
}
