//! Closed-form quantities accompanying the simulations: fringe visibility,
//! degree of polarization, two-qubit concurrence, momentum-correlation
//! visibility, a nonlinear-interferometer spectroscopy forward model,
//! dual-wavelength imaging helpers and cavity transmission.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, Matrix3, Vector3};

use crate::fock::{DensityOperator, FockState};
use crate::{C64, Error, Result, TOL};

/// sin(x)/x with sinc(0) = 1.
pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x.sin() / x
    }
}

/// Sampled interference fringe.
#[derive(Clone, Debug, PartialEq)]
pub struct FringeSeries {
    pub phases: Vec<f64>,
    pub intensities: Vec<f64>,
}

impl FringeSeries {
    pub fn new(phases: Vec<f64>, intensities: Vec<f64>) -> Result<Self> {
        if phases.is_empty() || phases.len() != intensities.len() {
            return Err(Error::invalid(
                "fringe series needs equally many phases and intensities, at least one",
            ));
        }
        if intensities.iter().any(|i| !i.is_finite() || *i < 0.0) {
            return Err(Error::invalid("intensities must be finite and non-negative"));
        }
        Ok(FringeSeries { phases, intensities })
    }

    /// (I_max - I_min)/(I_max + I_min); 0 for constant or all-zero series.
    pub fn visibility(&self) -> f64 {
        let max = self.intensities.iter().cloned().fold(f64::MIN, f64::max);
        let min = self.intensities.iter().cloned().fold(f64::MAX, f64::min);
        if max <= 0.0 {
            return 0.0;
        }
        (max - min) / (max + min)
    }
}

/// Least-squares fit of `offset + amplitude * cos(phase + phase0)`.
#[derive(Clone, Copy, Debug)]
pub struct SinusoidFit {
    pub offset: f64,
    pub amplitude: f64,
    pub phase0: f64,
    /// Largest pointwise deviation between data and model.
    pub max_residual: f64,
}

impl SinusoidFit {
    pub fn visibility(&self) -> f64 {
        if self.offset <= 0.0 {
            0.0
        } else {
            self.amplitude / self.offset
        }
    }

    pub fn eval(&self, phase: f64) -> f64 {
        self.offset + self.amplitude * (phase + self.phase0).cos()
    }
}

/// Fits a + b cos(phi) + c sin(phi) by normal equations; exact on any grid
/// that determines the three coefficients.
pub fn fit_sinusoid(phases: &[f64], values: &[f64]) -> Result<SinusoidFit> {
    if phases.len() != values.len() || phases.len() < 3 {
        return Err(Error::invalid("sinusoid fit needs at least three points"));
    }
    let mut m = Matrix3::<f64>::zeros();
    let mut rhs = Vector3::<f64>::zeros();
    for (&phi, &y) in phases.iter().zip(values) {
        let row = Vector3::new(1.0, phi.cos(), phi.sin());
        m += row * row.transpose();
        rhs += row * y;
    }
    let sol = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::invalid("phase grid does not determine a sinusoid"))?;
    let (a, b, c) = (sol[0], sol[1], sol[2]);
    let amplitude = b.hypot(c);
    let phase0 = (-c).atan2(b);
    let fit = SinusoidFit {
        offset: a,
        amplitude,
        phase0,
        max_residual: 0.0,
    };
    let max_residual = phases
        .iter()
        .zip(values)
        .map(|(&phi, &y)| (y - fit.eval(phi)).abs())
        .fold(0.0, f64::max);
    Ok(SinusoidFit {
        max_residual,
        ..fit
    })
}

/// P = |T + cos g|/(1 + T cos g) for an attenuated-idler polarization
/// interferometer at an interferometric phase of a multiple of 2 pi. The
/// T = 1 boundary family continues through the removable g = pi point.
/// A degree of polarization is a magnitude, hence the absolute value; past
/// cos g = -T the major axis flips from H to V but P itself stays positive.
pub fn degree_of_polarization(t: f64, gamma: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::BadTransmission(t));
    }
    let c = gamma.cos();
    let num = t + c;
    let den = 1.0 + t * c;
    if den.abs() < TOL {
        // Only reachable at T = 1, cos g = -1 where the family value is 1.
        return Ok(1.0);
    }
    Ok((num / den).abs())
}

/// lambda_S^2 / lambda_I: the fringe spacing observed at the signal
/// wavelength follows this effective wavelength.
pub fn equivalent_wavelength(lambda_s: f64, lambda_i: f64) -> Result<f64> {
    if lambda_s <= 0.0 || lambda_i <= 0.0 {
        return Err(Error::invalid("wavelengths must be positive"));
    }
    Ok(lambda_s * lambda_s / lambda_i)
}

/// Radius of the n-th fringe extremum for a quadratic (defocus) phase:
/// rho_n = sqrt(2 f_C^2 (n lambda - phi0)/d). `None` when n lambda < phi0.
pub fn fringe_radius(n: f64, d: f64, f_c: f64, phi0: f64, lambda: f64) -> Result<Option<f64>> {
    if d <= 0.0 || f_c <= 0.0 || lambda <= 0.0 {
        return Err(Error::invalid("d, f_C and lambda must be positive"));
    }
    let arg = n * lambda - phi0;
    if arg < 0.0 {
        return Ok(None);
    }
    Ok(Some((2.0 * f_c * f_c * arg / d).sqrt()))
}

/// M = f0 lambda_S / (f_I lambda_I).
pub fn magnification(f0: f64, f_i: f64, lambda_s: f64, lambda_i: f64) -> Result<f64> {
    if f0 <= 0.0 || f_i <= 0.0 || lambda_s <= 0.0 || lambda_i <= 0.0 {
        return Err(Error::invalid("focal lengths and wavelengths must be positive"));
    }
    Ok(f0 * lambda_s / (f_i * lambda_i))
}

/// Transmission through a two-mirror cavity on the idler path.
#[derive(Clone, Debug)]
pub struct CavityTransmission {
    /// Amplitude after k internal round trips: t2 (r1 r2)^k.
    pub round_amplitudes: Vec<C64>,
    /// Incoherent total over the truncated rounds.
    pub truncated_total: f64,
    /// |t2|^2 / (1 - |r1 r2|^2).
    pub closed_form: f64,
}

/// Per-round transmitted amplitudes and the total transmitted probability.
/// Rounds are summed incoherently; the truncated total converges to the
/// closed form within |r1 r2|^(2 max_rounds).
pub fn cavity_transmission(
    r1: C64,
    r2: C64,
    t2: C64,
    max_rounds: usize,
) -> Result<CavityTransmission> {
    if r1.norm() > 1.0 + TOL || r2.norm() > 1.0 + TOL || t2.norm() > 1.0 + TOL {
        return Err(Error::invalid("mirror coefficients must have magnitude <= 1"));
    }
    if r2.norm_sqr() + t2.norm_sqr() > 1.0 + 1e-9 {
        return Err(Error::invalid(
            "outcoupler violates |r2|^2 + |t2|^2 <= 1",
        ));
    }
    if max_rounds == 0 {
        return Err(Error::invalid("at least one round is needed"));
    }
    let loop_amp = r1 * r2;
    let loop_prob = loop_amp.norm_sqr();
    if (1.0 - loop_prob).abs() < TOL && t2.norm() <= TOL {
        return Err(Error::CavityDivergence);
    }
    let mut round_amplitudes = Vec::with_capacity(max_rounds);
    let mut amp = t2;
    let mut truncated_total = 0.0;
    for _ in 0..max_rounds {
        round_amplitudes.push(amp);
        truncated_total += amp.norm_sqr();
        amp *= loop_amp;
    }
    let closed_form = t2.norm_sqr() / (1.0 - loop_prob);
    Ok(CavityTransmission {
        round_amplitudes,
        truncated_total,
        closed_form,
    })
}

/// Forward model of nonlinear-interferometer spectroscopy: a sample of
/// length `len_medium` and absorption `alpha_m` sits in the idler arm
/// between two crystals of length `len_crystal`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectroscopyConfig {
    /// Pump, signal and idler wavelengths in meters at the reference point.
    pub lambda_p: f64,
    pub lambda_s: f64,
    pub lambda_i: f64,
    /// Refractive indices seen by pump, signal and idler.
    pub n_p: f64,
    pub n_s: f64,
    pub n_i: f64,
    /// Crystal length and medium length in meters.
    pub len_crystal: f64,
    pub len_medium: f64,
    /// Medium absorption coefficient per meter.
    pub alpha_m: f64,
    /// Reference signal emission angle in radians.
    pub theta_s: f64,
}

impl SpectroscopyConfig {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        lambda_p: f64,
        lambda_s: f64,
        lambda_i: f64,
        n_p: f64,
        n_s: f64,
        n_i: f64,
        len_crystal: f64,
        len_medium: f64,
        alpha_m: f64,
        theta_s: f64,
    ) -> Result<Self> {
        for (v, name) in [
            (lambda_p, "lambda_p"),
            (lambda_s, "lambda_s"),
            (lambda_i, "lambda_i"),
            (n_p, "n_p"),
            (n_s, "n_s"),
            (n_i, "n_i"),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if len_crystal < 0.0 || len_medium < 0.0 || alpha_m < 0.0 {
            return Err(Error::invalid("lengths and absorption must be >= 0"));
        }
        let lhs = 1.0 / lambda_p;
        let rhs = 1.0 / lambda_s + 1.0 / lambda_i;
        let rel = (lhs - rhs).abs() / lhs;
        if rel > 1e-9 {
            return Err(Error::EnergyConservation(rel));
        }
        Ok(SpectroscopyConfig {
            lambda_p,
            lambda_s,
            lambda_i,
            n_p,
            n_s,
            n_i,
            len_crystal,
            len_medium,
            alpha_m,
            theta_s,
        })
    }

    /// Idler wavelength fixed by energy conservation at a given signal
    /// wavelength.
    pub fn idler_wavelength(lambda_p: f64, lambda_s: f64) -> Result<f64> {
        if lambda_p <= 0.0 || lambda_s <= lambda_p {
            return Err(Error::invalid(
                "signal wavelength must exceed the pump wavelength",
            ));
        }
        Ok(1.0 / (1.0 / lambda_p - 1.0 / lambda_s))
    }

    /// Medium amplitude transmissivity |tau| = exp(-alpha_m len_medium).
    pub fn transmissivity(&self) -> f64 {
        (-self.alpha_m * self.len_medium).exp()
    }

    /// Phase mismatches (delta, delta_m) at a signal wavelength and emission
    /// angle. The idler wavelength follows from energy conservation.
    pub fn mismatch(&self, lambda_s: f64, theta_s: f64) -> Result<(f64, f64)> {
        let cos = theta_s.cos();
        if cos.abs() < 1e-12 {
            return Err(Error::GrazingAngle);
        }
        let lambda_i = Self::idler_wavelength(self.lambda_p, lambda_s)?;
        let k_p = TAU * self.n_p / self.lambda_p;
        let k_s = TAU * self.n_s / lambda_s;
        let k_i = TAU * self.n_i / lambda_i;
        let mismatch = k_p - k_i - k_s;
        Ok((
            self.len_crystal * mismatch / cos,
            self.len_medium * mismatch / cos,
        ))
    }

    /// Signal intensity with an extra interferometric phase offset.
    pub fn intensity_with_offset(
        &self,
        lambda_s: f64,
        theta_s: f64,
        offset: f64,
    ) -> Result<f64> {
        let (delta, delta_m) = self.mismatch(lambda_s, theta_s)?;
        let tau = self.transmissivity();
        let envelope = sinc(delta / 2.0);
        Ok(0.5 * envelope * envelope * (1.0 + tau * (delta + delta_m + offset).cos()))
    }

    /// I = 1/2 sinc^2(delta/2) [1 + |tau| cos(delta + delta_m)].
    pub fn intensity(&self, lambda_s: f64, theta_s: f64) -> Result<f64> {
        self.intensity_with_offset(lambda_s, theta_s, 0.0)
    }
}

/// Intensity map over a (lambda_s, theta_s) grid; rows follow `lambdas`.
pub fn spectrogram(
    cfg: &SpectroscopyConfig,
    lambdas: &[f64],
    thetas: &[f64],
) -> Result<Vec<Vec<f64>>> {
    if lambdas.is_empty() || thetas.is_empty() {
        return Err(Error::invalid("spectrogram grid is empty"));
    }
    lambdas
        .iter()
        .map(|&l| thetas.iter().map(|&t| cfg.intensity(l, t)).collect())
        .collect()
}

/// Fringe obtained by scanning an interferometric phase offset at a fixed
/// point of the spectrogram.
pub fn spectral_fringe(
    cfg: &SpectroscopyConfig,
    lambda_s: f64,
    theta_s: f64,
    offsets: &[f64],
) -> Result<FringeSeries> {
    let intensities = offsets
        .iter()
        .map(|&o| cfg.intensity_with_offset(lambda_s, theta_s, o))
        .collect::<Result<Vec<f64>>>()?;
    FringeSeries::new(offsets.to_vec(), intensities)
}

/// Joint signal-idler transverse-momentum amplitude on a uniform grid,
/// stored normalized.
#[derive(Clone, Debug, PartialEq)]
pub struct JointMomentumDistribution {
    q_signal: Vec<f64>,
    q_idler: Vec<f64>,
    amps: Vec<C64>,
}

impl JointMomentumDistribution {
    pub fn new(q_signal: Vec<f64>, q_idler: Vec<f64>, mut amps: Vec<C64>) -> Result<Self> {
        if q_signal.is_empty() || q_idler.is_empty() {
            return Err(Error::invalid("momentum grid is empty"));
        }
        if amps.len() != q_signal.len() * q_idler.len() {
            return Err(Error::invalid(format!(
                "expected {} amplitudes, got {}",
                q_signal.len() * q_idler.len(),
                amps.len()
            )));
        }
        let norm_sq: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if norm_sq <= 0.0 || !norm_sq.is_finite() {
            return Err(Error::ZeroNorm);
        }
        let scale = 1.0 / norm_sq.sqrt();
        for a in &mut amps {
            *a *= scale;
        }
        Ok(JointMomentumDistribution {
            q_signal,
            q_idler,
            amps,
        })
    }

    /// Double-Gaussian amplitude exp(-(qs+qi)^2/(4 s_sum^2)) *
    /// exp(-(qs-qi)^2/(4 s_diff^2)) on a symmetric n x n grid over
    /// [-q_max, q_max]. Small `s_sum` anti-correlates the momenta.
    pub fn gaussian(n: usize, q_max: f64, sigma_sum: f64, sigma_diff: f64) -> Result<Self> {
        if n < 2 || q_max <= 0.0 || sigma_sum <= 0.0 || sigma_diff <= 0.0 {
            return Err(Error::invalid("gaussian grid needs n >= 2 and positive widths"));
        }
        let grid: Vec<f64> = (0..n)
            .map(|i| -q_max + 2.0 * q_max * i as f64 / (n - 1) as f64)
            .collect();
        let mut amps = Vec::with_capacity(n * n);
        for &qs in &grid {
            for &qi in &grid {
                let sum = qs + qi;
                let diff = qs - qi;
                let log_amp = -sum * sum / (4.0 * sigma_sum * sigma_sum)
                    - diff * diff / (4.0 * sigma_diff * sigma_diff);
                amps.push(C64::new(log_amp.exp(), 0.0));
            }
        }
        JointMomentumDistribution::new(grid.clone(), grid, amps)
    }

    pub fn signal_values(&self) -> &[f64] {
        &self.q_signal
    }

    pub fn idler_values(&self) -> &[f64] {
        &self.q_idler
    }

    pub fn amplitude(&self, i_signal: usize, i_idler: usize) -> C64 {
        self.amps[i_signal * self.q_idler.len() + i_idler]
    }

    pub fn total_probability(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Normalized conditional idler distribution at one signal cell, with
    /// mean and variance; `None` when the marginal vanishes.
    pub fn conditional(&self, i_signal: usize) -> Option<Conditional> {
        let n_i = self.q_idler.len();
        let row = &self.amps[i_signal * n_i..(i_signal + 1) * n_i];
        let marginal: f64 = row.iter().map(|a| a.norm_sqr()).sum();
        if marginal < 1e-30 {
            return None;
        }
        let probs: Vec<f64> = row.iter().map(|a| a.norm_sqr() / marginal).collect();
        let mean: f64 = probs
            .iter()
            .zip(&self.q_idler)
            .map(|(p, q)| p * q)
            .sum();
        let variance: f64 = probs
            .iter()
            .zip(&self.q_idler)
            .map(|(p, q)| p * (q - mean) * (q - mean))
            .sum();
        Some(Conditional {
            probs,
            mean,
            variance,
        })
    }
}

#[derive(Clone, Debug)]
pub struct Conditional {
    pub probs: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct MomentumPoint {
    pub q_signal: f64,
    /// V(q_S) = |sum_qI P(q_I|q_S) e^{i phi(q_I)}|.
    pub visibility: f64,
    /// Conditional idler-momentum variance at this signal cell.
    pub variance: f64,
}

/// Phase-averaged fringe visibility per signal momentum, for an idler phase
/// profile `phase(q_I)`. Signal cells with zero marginal are skipped.
pub fn momentum_visibility<F>(dist: &JointMomentumDistribution, phase: F) -> Vec<MomentumPoint>
where
    F: Fn(f64) -> f64,
{
    let mut out = Vec::new();
    for (i, &qs) in dist.signal_values().iter().enumerate() {
        let Some(cond) = dist.conditional(i) else {
            continue;
        };
        let mut avg = C64::default();
        for (p, &qi) in cond.probs.iter().zip(dist.idler_values()) {
            avg += C64::from_polar(*p, phase(qi));
        }
        out.push(MomentumPoint {
            q_signal: qs,
            visibility: avg.norm(),
            variance: cond.variance,
        });
    }
    out
}

fn spin_flip() -> DMatrix<C64> {
    // sigma_y (x) sigma_y is real: antidiagonal (-1, 1, 1, -1).
    let mut m = DMatrix::<C64>::zeros(4, 4);
    m[(0, 3)] = C64::new(-1.0, 0.0);
    m[(1, 2)] = C64::new(1.0, 0.0);
    m[(2, 1)] = C64::new(1.0, 0.0);
    m[(3, 0)] = C64::new(-1.0, 0.0);
    m
}

fn check_physical(rho: &DMatrix<C64>) -> Result<()> {
    let mut dev: f64 = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            dev = dev.max((rho[(i, j)] - rho[(j, i)].conj()).norm());
        }
    }
    if dev > 1e-9 {
        return Err(Error::NotHermitian(dev));
    }
    let trace: f64 = (0..4).map(|i| rho[(i, i)].re).sum();
    if (trace - 1.0).abs() > 1e-9 {
        return Err(Error::BadTrace(trace));
    }
    let eig = nalgebra::SymmetricEigen::new(rho.clone());
    if let Some(min) = eig
        .eigenvalues
        .iter()
        .cloned()
        .min_by(|a, b| a.total_cmp(b))
    {
        if min < -1e-9 {
            return Err(Error::NotPositive(min));
        }
    }
    Ok(())
}

/// Wootters concurrence of a 4x4 two-qubit density matrix. With any
/// factorization rho = Phi Phi^dag, the sqrt-eigenvalues of rho * rho_tilde
/// are the singular values of Phi^T (sigma_y (x) sigma_y) Phi; computing
/// them as singular values sidesteps the precision loss of square-rooting
/// near-zero eigenvalues, which matters because physical two-qubit states
/// are routinely rank deficient.
pub fn concurrence(rho: &DMatrix<C64>) -> Result<f64> {
    if rho.nrows() != 4 || rho.ncols() != 4 {
        return Err(Error::invalid("concurrence needs a 4x4 density matrix"));
    }
    check_physical(rho)?;
    let eig = nalgebra::SymmetricEigen::new(rho.clone());
    let top = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(0.0f64, f64::max);
    let mut phi = eig.eigenvectors.clone();
    for (k, mut col) in phi.column_iter_mut().enumerate() {
        // Null directions are zeroed outright so their roundoff never
        // reaches the singular values.
        let ev = eig.eigenvalues[k];
        let scale = if ev > top * 1e-13 { ev.sqrt() } else { 0.0 };
        for z in col.iter_mut() {
            *z *= scale;
        }
    }
    let m = phi.transpose() * spin_flip() * &phi;
    let mut lambdas: Vec<f64> = m.singular_values().iter().cloned().collect();
    lambdas.sort_by(|a, b| b.total_cmp(a));
    Ok((lambdas[0] - lambdas[1] - lambdas[2] - lambdas[3]).max(0.0))
}

/// Concurrence of a pure two-qubit state: |<psi| sigma_y (x) sigma_y |psi*>|.
pub fn concurrence_pure(amps: &[C64; 4]) -> Result<f64> {
    let norm_sq: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
    if norm_sq <= TOL {
        return Err(Error::ZeroNorm);
    }
    let yy = spin_flip();
    let mut overlap = C64::default();
    for i in 0..4 {
        for j in 0..4 {
            overlap += amps[i].conj() * yy[(i, j)] * amps[j].conj();
        }
    }
    Ok(overlap.norm() / norm_sq)
}

/// Extracts the 4x4 block of a density operator on an explicit two-qubit
/// Fock basis (ordered |00>, |01>, |10>, |11>). The operator must live
/// entirely inside that block.
pub fn two_qubit_matrix(
    rho: &DensityOperator,
    basis: &[FockState; 4],
) -> Result<DMatrix<C64>> {
    let idx: Vec<Option<usize>> = basis.iter().map(|f| rho.index_of(f)).collect();
    let mut m = DMatrix::<C64>::zeros(4, 4);
    for (i, oi) in idx.iter().enumerate() {
        for (j, oj) in idx.iter().enumerate() {
            if let (Some(a), Some(b)) = (oi, oj) {
                m[(i, j)] = rho.entry(*a, *b);
            }
        }
    }
    let block_trace: f64 = (0..4).map(|i| m[(i, i)].re).sum();
    if (block_trace - rho.trace()).abs() > 1e-9 {
        return Err(Error::invalid(
            "density operator has support outside the two-qubit basis",
        ));
    }
    Ok(m)
}
