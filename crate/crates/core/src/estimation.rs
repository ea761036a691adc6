//! The two-phase channel estimation protocol.
//!
//! Phase (a): the BS broadcasts random antipodal probe vectors and every MS
//! tracks the dominant left singular vectors of its composite channel with
//! PASTd, without knowing the probes. The tracked basis becomes the MS
//! baseband beamformer `D_k,BB`.
//!
//! Phase (b): every MS sends `sqrt(alpha_k) D_k,BB Phi_k` and the BS estimates
//! `[lambda_k1 v_k1, ..., lambda_kM v_kM]` (scaled by `sqrt(alpha_k)`) either by
//! pilot matching or by zero-forcing the stacked pilot matrix.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::seq::index::sample;
use rand::Rng;

use crate::array::AnalogCombiner;
use crate::error::{check_dims, Error, Result};
use crate::linalg::{complex_normal_matrix, to_complex, CMatrix, CVector};
use crate::pastd::{PastdState, DEFAULT_EPS_GUARD};

/// Largest Gram condition number accepted before the stacked pilots are
/// treated as rank deficient.
pub const MAX_PILOT_CONDITION: f64 = 1e12;

/// Downlink probing parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbingConfig {
    /// Number of probe vectors `P_BS`.
    pub probe_len: usize,
    /// BS transmit power `P_T`, watts.
    pub probe_power: f64,
    /// Thermal noise variance per antenna, watts.
    pub noise_var: f64,
}

impl ProbingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.probe_len == 0 {
            return Err(Error::InvalidArgument("probe length must be at least 1".into()));
        }
        if !(self.probe_power > 0.0 && self.probe_power.is_finite()) {
            return Err(Error::InvalidArgument("probe power must be positive".into()));
        }
        if !(self.noise_var >= 0.0 && self.noise_var.is_finite()) {
            return Err(Error::InvalidArgument("noise variance must be nonnegative".into()));
        }
        Ok(())
    }
}

/// `probe_len` vectors of i.i.d. equiprobable +/-1 entries.
pub fn generate_probing_symbols<R: Rng + ?Sized>(
    probe_len: usize,
    dim: usize,
    rng: &mut R,
) -> Vec<DVector<f64>> {
    (0..probe_len)
        .map(|_| DVector::from_fn(dim, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 }))
        .collect()
}

/// One received probe at an MS:
/// `r = sqrt(P_T / tr(D_BS D_BS^H)) H s + D_MS^H g`, `g ~ CN(0, noise_var I)`.
pub fn simulate_phase_a_rx<R: Rng + ?Sized>(
    composite: &CMatrix,
    probe: &DVector<f64>,
    cfg: &ProbingConfig,
    d_bs: &AnalogCombiner,
    d_ms: &AnalogCombiner,
    rng: &mut R,
) -> Result<CVector> {
    check_dims("phase (a) channel", (d_ms.n_rf(), d_bs.n_rf()), composite.shape())?;
    check_dims("phase (a) probe", (d_bs.n_rf(), 1), (probe.len(), 1))?;
    let scale = (cfg.probe_power / d_bs.power_trace()).sqrt();
    let s = probe.map(|x| Complex64::new(x, 0.0));
    let mut r = composite * s * Complex64::new(scale, 0.0);
    if cfg.noise_var > 0.0 {
        let g = complex_normal_matrix(d_ms.n_antennas(), 1, cfg.noise_var, rng);
        r += d_ms.matrix().adjoint() * g.column(0);
    }
    Ok(r)
}

/// Phase (a) for every user at once: one probe sequence is broadcast and each
/// user's tracker only ever sees its own received vectors. Returns `D_k,BB`
/// for each user.
pub fn run_phase_a_broadcast<R: Rng + ?Sized>(
    composites: &[CMatrix],
    cfg: &ProbingConfig,
    d_bs: &AnalogCombiner,
    d_ms: &AnalogCombiner,
    order: usize,
    beta: f64,
    rng: &mut R,
) -> Result<Vec<CMatrix>> {
    cfg.validate()?;
    let mut trackers = composites
        .iter()
        .map(|_| PastdState::new(order, d_ms.n_rf(), beta, DEFAULT_EPS_GUARD))
        .collect::<Result<Vec<_>>>()?;
    for _ in 0..cfg.probe_len {
        let probe = generate_probing_symbols(1, d_bs.n_rf(), rng).remove(0);
        for (h, tracker) in composites.iter().zip(trackers.iter_mut()) {
            let r = simulate_phase_a_rx(h, &probe, cfg, d_bs, d_ms, rng)?;
            tracker.update(&r)?;
        }
    }
    trackers.iter().map(PastdState::extract_basis).collect()
}

/// Phase (a) for a single user.
pub fn run_phase_a<R: Rng + ?Sized>(
    composite: &CMatrix,
    cfg: &ProbingConfig,
    d_bs: &AnalogCombiner,
    d_ms: &AnalogCombiner,
    order: usize,
    beta: f64,
    rng: &mut R,
) -> Result<CMatrix> {
    Ok(run_phase_a_broadcast(std::slice::from_ref(composite), cfg, d_bs, d_ms, order, beta, rng)?
        .remove(0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PilotKind {
    /// Rows of a Sylvester-Hadamard matrix with a per-user random sign
    /// pattern; needs a power-of-two pilot length.
    Binary,
    /// Rows of a random real orthonormal matrix.
    Orthonormal,
}

/// Per-user pilot matrices `Phi_k` (`M x P_MS`, orthonormal rows) and power
/// coefficients `alpha_k`.
#[derive(Debug, Clone)]
pub struct PilotBook {
    pub pilots: Vec<DMatrix<f64>>,
    pub pilot_len: usize,
    pub alphas: Vec<f64>,
}

impl PilotBook {
    pub fn n_users(&self) -> usize {
        self.pilots.len()
    }

    pub fn order(&self) -> usize {
        self.pilots.first().map(|p| p.nrows()).unwrap_or(0)
    }

    /// All users' pilots stacked into an `MK x P_MS` matrix.
    pub fn stacked(&self) -> DMatrix<f64> {
        let m = self.order();
        let mut out = DMatrix::zeros(m * self.n_users(), self.pilot_len);
        for (k, p) in self.pilots.iter().enumerate() {
            out.rows_mut(k * m, m).copy_from(p);
        }
        out
    }
}

fn hadamard_entry(i: usize, j: usize) -> f64 {
    if (i & j).count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Pilot book with binary pilots when `pilot_len` is a power of two and the
/// orthonormal fallback otherwise.
pub fn generate_pilot_book<R: Rng + ?Sized>(
    n_users: usize,
    order: usize,
    pilot_len: usize,
    ms_power: f64,
    rng: &mut R,
) -> Result<PilotBook> {
    let kind = if pilot_len.is_power_of_two() {
        PilotKind::Binary
    } else {
        PilotKind::Orthonormal
    };
    generate_pilot_book_with(kind, n_users, order, pilot_len, ms_power, rng)
}

/// `alpha_k = ms_power * P_MS / M`, so the average per-slot radiated power
/// equals `ms_power` for orthonormal `D_k,BB`.
pub fn generate_pilot_book_with<R: Rng + ?Sized>(
    kind: PilotKind,
    n_users: usize,
    order: usize,
    pilot_len: usize,
    ms_power: f64,
    rng: &mut R,
) -> Result<PilotBook> {
    if n_users == 0 || order == 0 {
        return Err(Error::InvalidArgument("pilot book needs users and streams".into()));
    }
    if pilot_len < order {
        return Err(Error::InvalidArgument(format!(
            "pilot length {pilot_len} is shorter than the multiplexing order {order}"
        )));
    }
    if !(ms_power > 0.0 && ms_power.is_finite()) {
        return Err(Error::InvalidArgument("MS pilot power must be positive".into()));
    }
    let scale = 1.0 / (pilot_len as f64).sqrt();
    let pilots = match kind {
        PilotKind::Binary => {
            if !pilot_len.is_power_of_two() {
                return Err(Error::InvalidArgument(format!(
                    "binary pilots need a power-of-two length, got {pilot_len}"
                )));
            }
            (0..n_users)
                .map(|_| {
                    let rows = sample(rng, pilot_len, order).into_vec();
                    let signs: Vec<f64> = (0..pilot_len)
                        .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                        .collect();
                    DMatrix::from_fn(order, pilot_len, |i, j| {
                        hadamard_entry(rows[i], j) * signs[j] * scale
                    })
                })
                .collect()
        }
        PilotKind::Orthonormal => (0..n_users)
            .map(|_| {
                let g = DMatrix::from_fn(pilot_len, order, |_, _| {
                    rng.sample::<f64, _>(rand_distr::StandardNormal)
                });
                g.qr().q().transpose()
            })
            .collect(),
    };
    Ok(PilotBook {
        pilots,
        pilot_len,
        alphas: vec![ms_power * pilot_len as f64 / order as f64; n_users],
    })
}

/// BS observation during phase (b):
/// `Y = sum_k sqrt(alpha_k) H_k^H D_k,BB Phi_k + D_BS^H G`, `G ~ CN(0, noise_var I)`.
pub fn simulate_phase_b_rx<R: Rng + ?Sized>(
    composites: &[CMatrix],
    d_bbs: &[CMatrix],
    book: &PilotBook,
    noise_var: f64,
    d_bs: &AnalogCombiner,
    rng: &mut R,
) -> Result<CMatrix> {
    if composites.len() != book.n_users() || d_bbs.len() != book.n_users() {
        return Err(Error::InvalidArgument(format!(
            "{} channels and {} beamformers for {} pilot users",
            composites.len(),
            d_bbs.len(),
            book.n_users()
        )));
    }
    if !(noise_var >= 0.0 && noise_var.is_finite()) {
        return Err(Error::InvalidArgument("noise variance must be nonnegative".into()));
    }
    let n_rf = d_bs.n_rf();
    let mut y = CMatrix::zeros(n_rf, book.pilot_len);
    for ((h, d_bb), (phi, alpha)) in composites
        .iter()
        .zip(d_bbs)
        .zip(book.pilots.iter().zip(&book.alphas))
    {
        check_dims("phase (b) channel", (h.nrows(), n_rf), h.shape())?;
        check_dims("phase (b) beamformer", (h.nrows(), phi.nrows()), d_bb.shape())?;
        y += h.adjoint() * d_bb * to_complex(phi) * Complex64::new(alpha.sqrt(), 0.0);
    }
    if noise_var > 0.0 {
        let g = complex_normal_matrix(d_bs.n_antennas(), book.pilot_len, noise_var, rng);
        y += d_bs.matrix().adjoint() * g;
    }
    Ok(y)
}

/// Which CSI a BS-side beamformer was built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Estimator {
    Pm,
    Zf,
    Perfect,
}

impl Estimator {
    pub const ALL: [Estimator; 3] = [Estimator::Pm, Estimator::Zf, Estimator::Perfect];

    pub fn as_str(&self) -> &'static str {
        match self {
            Estimator::Pm => "pm",
            Estimator::Zf => "zf",
            Estimator::Perfect => "perfect",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pm" => Ok(Estimator::Pm),
            "zf" => Ok(Estimator::Zf),
            "perfect" => Ok(Estimator::Perfect),
            other => Err(Error::InvalidArgument(format!("unknown estimator '{other}'"))),
        }
    }
}

/// BS-side estimate of `sqrt(alpha_k) [lambda_k1 v_k1, ..., lambda_kM v_kM]`.
#[derive(Debug, Clone)]
pub struct ChannelEstimate {
    pub matrix: CMatrix,
    pub kind: Estimator,
}

/// Pilot-matched estimate: column `i` is `Y Phi_k(i,:)^H`.
pub fn pm_estimate(y: &CMatrix, pilots: &DMatrix<f64>) -> Result<ChannelEstimate> {
    check_dims("pilot-matched filter", (y.ncols(), pilots.nrows()), (pilots.ncols(), pilots.nrows()))?;
    Ok(ChannelEstimate {
        matrix: y * to_complex(&pilots.transpose()),
        kind: Estimator::Pm,
    })
}

/// Zero-forcing pilot filters `Z_k` with `Phi_k Z_k = I` and `Phi_j Z_k = 0`.
#[derive(Debug, Clone)]
pub struct ZfFilter {
    pub blocks: Vec<DMatrix<f64>>,
    /// Condition number of `Phi_all Phi_all^T`.
    pub gram_condition: f64,
}

/// `Z = Phi_all^T (Phi_all Phi_all^T)^{-1}`, split into per-user column blocks.
pub fn zf_matrix(book: &PilotBook) -> Result<ZfFilter> {
    let m = book.order();
    let k = book.n_users();
    if book.pilot_len < m * k {
        return Err(Error::InvalidArgument(format!(
            "zero-forcing needs pilot length >= M*K = {}, got {}",
            m * k,
            book.pilot_len
        )));
    }
    let stacked = book.stacked();
    let gram = &stacked * stacked.transpose();
    let eig = SymmetricEigen::try_new(gram.clone(), 5.0 * f64::EPSILON, 0)
        .ok_or(Error::Decomposition("pilot gram eigen-decomposition did not converge"))?;
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    let gram_condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(gram_condition <= MAX_PILOT_CONDITION) {
        return Err(Error::RankDeficient {
            condition: gram_condition,
        });
    }
    let inv = gram
        .cholesky()
        .ok_or(Error::RankDeficient {
            condition: gram_condition,
        })?
        .inverse();
    let z = stacked.transpose() * inv;
    let blocks = (0..k).map(|u| z.columns(u * m, m).into_owned()).collect();
    Ok(ZfFilter {
        blocks,
        gram_condition,
    })
}

/// Zero-forcing estimate `Y Z_k`.
pub fn zf_estimate(y: &CMatrix, z_k: &DMatrix<f64>) -> Result<ChannelEstimate> {
    check_dims("zero-forcing filter", (y.ncols(), z_k.ncols()), z_k.shape())?;
    Ok(ChannelEstimate {
        matrix: y * to_complex(z_k),
        kind: Estimator::Zf,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::{build_analog_combiner, CombinerMode};
    use crate::channel::{channel_svd, generate_channel, ClusterModelParams};
    use crate::linalg::{chordal_distance, orthonormalize};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn hybrid() -> (AnalogCombiner, AnalogCombiner) {
        (
            build_analog_combiner(64, 16, CombinerMode::Grid).unwrap(),
            build_analog_combiner(4, 2, CombinerMode::Grid).unwrap(),
        )
    }

    fn rel_err(a: &CMatrix, b: &CMatrix) -> f64 {
        (a - b).norm() / b.norm()
    }

    #[test]
    fn probes_are_antipodal_with_identity_covariance() {
        let mut r = rng(1);
        let probes = generate_probing_symbols(10_000, 4, &mut r);
        assert!(probes.iter().all(|p| p.len() == 4));
        assert!(probes.iter().flat_map(|p| p.iter()).all(|x| *x == 1.0 || *x == -1.0));
        let mut cov = DMatrix::<f64>::zeros(4, 4);
        for p in &probes {
            cov += p * p.transpose();
        }
        cov /= probes.len() as f64;
        let err = (cov - DMatrix::identity(4, 4)).abs().max();
        assert!(err < 0.1, "max entry error {err}");
    }

    #[test]
    fn noise_free_basis_probe_reads_first_column() {
        let (d_bs, d_ms) = hybrid();
        let h = complex_normal_matrix(2, 16, 1.0, &mut rng(2));
        let cfg = ProbingConfig {
            probe_len: 1,
            probe_power: 2.0,
            noise_var: 0.0,
        };
        let mut e1 = DVector::zeros(16);
        e1[0] = 1.0;
        let r = simulate_phase_a_rx(&h, &e1, &cfg, &d_bs, &d_ms, &mut rng(3)).unwrap();
        let want = h.column(0) * c((2.0f64 / 16.0).sqrt());
        assert!((r - want).norm() < 1e-14);
    }

    #[test]
    fn fully_digital_probe_scaling() {
        let d_bs = build_analog_combiner(8, 8, CombinerMode::Identity).unwrap();
        let d_ms = build_analog_combiner(2, 2, CombinerMode::Identity).unwrap();
        let h = complex_normal_matrix(2, 8, 1.0, &mut rng(4));
        let cfg = ProbingConfig {
            probe_len: 1,
            probe_power: 1.0,
            noise_var: 0.0,
        };
        let s = DVector::from_element(8, 1.0);
        let r = simulate_phase_a_rx(&h, &s, &cfg, &d_bs, &d_ms, &mut rng(5)).unwrap();
        let want = &h * DVector::from_element(8, c(1.0)) * c((1.0f64 / 8.0).sqrt());
        assert!((r - want).norm() < 1e-14);
        let bad = DVector::from_element(4, 1.0);
        assert!(simulate_phase_a_rx(&h, &bad, &cfg, &d_bs, &d_ms, &mut rng(5)).is_err());
    }

    #[test]
    fn phase_a_noise_covariance() {
        // Non-orthogonal 8-element grid so D^H D differs from the identity.
        let d_ms = build_analog_combiner(8, 3, CombinerMode::Grid).unwrap();
        let d_bs = build_analog_combiner(4, 4, CombinerMode::Identity).unwrap();
        let h = CMatrix::zeros(3, 4);
        let var = 0.7;
        let cfg = ProbingConfig {
            probe_len: 1,
            probe_power: 1.0,
            noise_var: var,
        };
        let s = DVector::from_element(4, 1.0);
        let mut r = rng(6);
        let draws = 10_000;
        let mut cov = CMatrix::zeros(3, 3);
        for _ in 0..draws {
            let w = simulate_phase_a_rx(&h, &s, &cfg, &d_bs, &d_ms, &mut r).unwrap();
            cov += &w * w.adjoint();
        }
        cov /= c(draws as f64);
        let want = d_ms.gram() * c(var);
        assert!(rel_err(&cov, &want) < 0.05, "{}", rel_err(&cov, &want));
    }

    fn rank_one(n_ms: usize, n_bs: usize, seed: u64) -> CMatrix {
        let mut r = rng(seed);
        let u = complex_normal_matrix(n_ms, 1, 1.0, &mut r).normalize();
        let v = complex_normal_matrix(n_bs, 1, 1.0, &mut r).normalize();
        &u * v.adjoint() * c(3e-6)
    }

    #[test]
    fn phase_a_recovers_rank_one_direction() {
        let (d_bs, d_ms) = hybrid();
        let h = rank_one(2, 16, 7);
        let cfg = ProbingConfig {
            probe_len: 60,
            probe_power: 1.0,
            noise_var: 0.0,
        };
        let d_bb = run_phase_a(&h, &cfg, &d_bs, &d_ms, 1, 1.0, &mut rng(8)).unwrap();
        assert_eq!(d_bb.shape(), (2, 1));
        assert!((d_bb.column(0).norm() - 1.0).abs() < 1e-12);
        let u = channel_svd(&h).unwrap().left_block(1);
        assert!(d_bb.column(0).dotc(&u.column(0)).norm() > 0.995);
    }

    #[test]
    fn phase_a_degrades_when_noise_dominates() {
        let d_bs = build_analog_combiner(16, 16, CombinerMode::Identity).unwrap();
        let d_ms = build_analog_combiner(8, 8, CombinerMode::Identity).unwrap();
        let h = rank_one(8, 16, 9);
        let u = channel_svd(&h).unwrap().left_block(1);
        // per-sample signal power at the MS is |lambda|^2 P_T / N_BS^RF
        let signal = 9e-12 / 16.0;
        let dist = |snr_db: f64, seed| {
            let cfg = ProbingConfig {
                probe_len: 60,
                probe_power: 1.0,
                noise_var: signal / 10f64.powf(snr_db / 10.0),
            };
            let d_bb = run_phase_a(&h, &cfg, &d_bs, &d_ms, 1, 1.0, &mut rng(seed)).unwrap();
            chordal_distance(&d_bb, &u)
        };
        let good = dist(30.0, 10);
        let bad = dist(-40.0, 11);
        assert!(good < 0.1, "{good}");
        assert!(bad > 0.5, "{bad}");
    }

    #[test]
    fn binary_pilot_book() {
        let book = generate_pilot_book(5, 2, 32, 0.1, &mut rng(12)).unwrap();
        let s = 1.0 / 32f64.sqrt();
        for phi in &book.pilots {
            assert_eq!(phi.shape(), (2, 32));
            assert!((phi * phi.transpose() - DMatrix::identity(2, 2)).abs().max() < 1e-10);
            assert!(phi.iter().all(|x| (x.abs() - s).abs() < 1e-15));
        }
        assert!(book.alphas.iter().all(|a| (a - 0.1 * 32.0 / 2.0).abs() < 1e-15));
    }

    #[test]
    fn pilot_cross_correlation_matches_dot_product() {
        let book = generate_pilot_book(2, 1, 4, 1.0, &mut rng(13)).unwrap();
        let (a, b) = (&book.pilots[0], &book.pilots[1]);
        let direct: f64 = (0..4).map(|j| a[(0, j)] * b[(0, j)]).sum();
        let cross = a * b.transpose();
        assert!((cross[(0, 0)] - direct).abs() < 1e-15);
        // over many draws the cross-correlation is not always zero
        let nonzero = (0..50)
            .map(|s| generate_pilot_book(2, 1, 4, 1.0, &mut rng(100 + s)).unwrap())
            .filter(|bk| (&bk.pilots[0] * bk.pilots[1].transpose())[(0, 0)].abs() > 1e-12)
            .count();
        assert!(nonzero > 0);
    }

    #[test]
    fn pilot_book_errors_and_fallback() {
        assert!(generate_pilot_book(2, 3, 2, 1.0, &mut rng(0)).is_err());
        assert!(generate_pilot_book_with(PilotKind::Binary, 2, 1, 6, 1.0, &mut rng(0)).is_err());
        let book = generate_pilot_book(3, 2, 6, 1.0, &mut rng(0)).unwrap();
        for phi in &book.pilots {
            assert!((phi * phi.transpose() - DMatrix::identity(2, 2)).abs().max() < 1e-10);
        }
    }

    #[test]
    fn zf_single_user_is_transpose() {
        let book = generate_pilot_book(1, 2, 8, 1.0, &mut rng(14)).unwrap();
        let zf = zf_matrix(&book).unwrap();
        assert!((&zf.blocks[0] - book.pilots[0].transpose()).abs().max() < 1e-12);
        assert!((zf.gram_condition - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zf_nulls_other_users() {
        let book = generate_pilot_book(2, 1, 4, 1.0, &mut rng(15)).unwrap();
        let zf = match zf_matrix(&book) {
            Ok(z) => z,
            Err(Error::RankDeficient { .. }) => return,
            Err(e) => panic!("{e}"),
        };
        for (j, phi) in book.pilots.iter().enumerate() {
            for (k, z) in zf.blocks.iter().enumerate() {
                let want = if j == k { 1.0 } else { 0.0 };
                assert!(((phi * z)[(0, 0)] - want).abs() < 1e-10);
            }
        }
        assert!(zf.gram_condition.is_finite());
    }

    #[test]
    fn zf_gram_of_distinct_hadamard_rows_is_identity() {
        // shared sign pattern keeps distinct Hadamard rows mutually orthogonal
        let p = 8;
        let s = 1.0 / (p as f64).sqrt();
        let pilots = (0..3)
            .map(|u| DMatrix::from_fn(1, p, |_, j| hadamard_entry(u + 1, j) * s))
            .collect();
        let book = PilotBook {
            pilots,
            pilot_len: p,
            alphas: vec![1.0; 3],
        };
        let g = book.stacked() * book.stacked().transpose();
        assert!((g - DMatrix::identity(3, 3)).abs().max() < 1e-15);
        assert!((zf_matrix(&book).unwrap().gram_condition - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zf_rejects_short_or_dependent_pilots() {
        let book = generate_pilot_book(5, 1, 4, 1.0, &mut rng(16)).unwrap();
        assert!(matches!(zf_matrix(&book), Err(Error::InvalidArgument(_))));
        let row = DMatrix::from_row_slice(1, 2, &[0.6, 0.8]);
        let book = PilotBook {
            pilots: vec![row.clone(), row],
            pilot_len: 2,
            alphas: vec![1.0, 1.0],
        };
        assert!(matches!(zf_matrix(&book), Err(Error::RankDeficient { .. })));
    }

    /// Noise-free phase (b) with `D_k,BB` equal to the true left singular vectors.
    fn ideal_setup(k: usize, m: usize, p: usize, seed: u64) -> (Vec<CMatrix>, Vec<CMatrix>, PilotBook, CMatrix, AnalogCombiner) {
        let (d_bs, d_ms) = (
            build_analog_combiner(64, 16, CombinerMode::Grid).unwrap(),
            build_analog_combiner(8, 4, CombinerMode::Grid).unwrap(),
        );
        let mut r = rng(seed);
        let params = ClusterModelParams::default();
        let mut comps = Vec::new();
        let mut d_bbs = Vec::new();
        let mut targets = Vec::new();
        let book = generate_pilot_book(k, m, p, 0.1, &mut r).unwrap();
        for u in 0..k {
            let h = generate_channel(&params, 8, 64, 10.0 + 7.0 * u as f64, &mut r).unwrap();
            let comp = d_ms.matrix().adjoint() * h * d_bs.matrix();
            let svd = channel_svd(&comp).unwrap();
            d_bbs.push(svd.left_block(m));
            targets.push(svd.scaled_right(m) * c(book.alphas[u].sqrt()));
            comps.push(comp);
        }
        let y = simulate_phase_b_rx(&comps, &d_bbs, &book, 0.0, &d_bs, &mut r).unwrap();
        (comps, targets, book, y, d_bs)
    }

    #[test]
    fn phase_b_single_user_expansion() {
        let (_, targets, book, y, _) = ideal_setup(1, 2, 8, 17);
        assert_eq!(y.shape(), (16, 8));
        let want = &targets[0] * to_complex(&book.pilots[0]);
        assert!(rel_err(&y, &want) < 1e-12);
        let pm = pm_estimate(&y, &book.pilots[0]).unwrap();
        assert!(rel_err(&pm.matrix, &targets[0]) < 1e-12);
        let zf = zf_estimate(&y, &zf_matrix(&book).unwrap().blocks[0]).unwrap();
        assert!(rel_err(&zf.matrix, &targets[0]) < 1e-12);
    }

    #[test]
    fn phase_b_is_linear_in_users() {
        let (comps, _, book, y, d_bs) = ideal_setup(2, 1, 8, 18);
        let mut sum = CMatrix::zeros(y.nrows(), y.ncols());
        for u in 0..2 {
            let svd = channel_svd(&comps[u]).unwrap();
            let single = PilotBook {
                pilots: vec![book.pilots[u].clone()],
                pilot_len: 8,
                alphas: vec![book.alphas[u]],
            };
            sum += simulate_phase_b_rx(&comps[u..=u], &[svd.left_block(1)], &single, 0.0, &d_bs, &mut rng(0))
                .unwrap();
        }
        assert!(rel_err(&y, &sum) < 1e-12);
    }

    #[test]
    fn pm_with_orthogonal_and_correlated_pilots() {
        let d_bs = build_analog_combiner(8, 8, CombinerMode::Identity).unwrap();
        let mut r = rng(19);
        let comps: Vec<CMatrix> = (0..2).map(|_| complex_normal_matrix(2, 8, 1.0, &mut r)).collect();
        let svds: Vec<_> = comps.iter().map(|h| channel_svd(h).unwrap()).collect();
        let d_bbs: Vec<CMatrix> = svds.iter().map(|s| s.left_block(1)).collect();
        let targets: Vec<CMatrix> = svds.iter().map(|s| s.scaled_right(1) * c(2.0)).collect();
        let h = 0.5;
        // orthogonal pilot rows: exact per-user recovery
        let book = PilotBook {
            pilots: vec![
                DMatrix::from_row_slice(1, 4, &[h, h, h, h]),
                DMatrix::from_row_slice(1, 4, &[h, -h, h, -h]),
            ],
            pilot_len: 4,
            alphas: vec![4.0, 4.0],
        };
        let y = simulate_phase_b_rx(&comps, &d_bbs, &book, 0.0, &d_bs, &mut r).unwrap();
        for u in 0..2 {
            let est = pm_estimate(&y, &book.pilots[u]).unwrap();
            assert!(rel_err(&est.matrix, &targets[u]) < 1e-12);
        }
        // correlated rows: bias is the other user's target times Phi_2 Phi_1^H
        let book = PilotBook {
            pilots: vec![
                DMatrix::from_row_slice(1, 4, &[h, h, h, h]),
                DMatrix::from_row_slice(1, 4, &[h, h, h, -h]),
            ],
            pilot_len: 4,
            alphas: vec![4.0, 4.0],
        };
        let y = simulate_phase_b_rx(&comps, &d_bbs, &book, 0.0, &d_bs, &mut r).unwrap();
        let est = pm_estimate(&y, &book.pilots[0]).unwrap();
        let corr: f64 = (0..4).map(|j| book.pilots[1][(0, j)] * book.pilots[0][(0, j)]).sum();
        assert!((corr - 0.5).abs() < 1e-15);
        let bias = &est.matrix - &targets[0];
        assert!(rel_err(&bias, &(&targets[1] * c(corr))) < 1e-12);
    }

    #[test]
    fn zf_exact_recovery_noise_free() {
        let (_, targets, book, y, _) = ideal_setup(5, 2, 32, 20);
        let zf = zf_matrix(&book).unwrap();
        for (k, target) in targets.iter().enumerate() {
            let est = zf_estimate(&y, &zf.blocks[k]).unwrap();
            assert!(rel_err(&est.matrix, target) < 1e-9);
        }
    }

    #[test]
    fn zf_equals_pm_single_user_single_stream() {
        let (_, _, book, y, _) = ideal_setup(1, 1, 16, 21);
        let pm = pm_estimate(&y, &book.pilots[0]).unwrap();
        let zf = zf_estimate(&y, &zf_matrix(&book).unwrap().blocks[0]).unwrap();
        assert!(rel_err(&zf.matrix, &pm.matrix) < 1e-12);
    }

    #[test]
    fn zf_noise_only_estimate_is_zero_mean() {
        let d_bs = build_analog_combiner(4, 2, CombinerMode::Grid).unwrap();
        let mut r = rng(22);
        let zf = loop {
            let book = generate_pilot_book(2, 1, 4, 1.0, &mut r).unwrap();
            if let Ok(z) = zf_matrix(&book) {
                break (book, z);
            }
        };
        let (book, zf) = (zf.0, zf.1);
        let comps = vec![CMatrix::zeros(2, 2); 2];
        let d_bbs = vec![CMatrix::from_element(2, 1, c(std::f64::consts::FRAC_1_SQRT_2)); 2];
        let trials = 10_000;
        let mut samples = Vec::with_capacity(trials);
        for _ in 0..trials {
            let y = simulate_phase_b_rx(&comps, &d_bbs, &book, 1.0, &d_bs, &mut r).unwrap();
            samples.push(zf_estimate(&y, &zf.blocks[0]).unwrap().matrix);
        }
        for i in 0..2 {
            for part in [|z: Complex64| z.re, |z: Complex64| z.im] {
                let xs: Vec<f64> = samples.iter().map(|s| part(s[(i, 0)])).collect();
                let mean = xs.iter().sum::<f64>() / trials as f64;
                let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
                let se = (var / trials as f64).sqrt();
                assert!(mean.abs() < 3.0 * se, "mean {mean} se {se}");
            }
        }
    }

    #[test]
    fn pilot_power_accounting() {
        let d_ms = build_analog_combiner(4, 2, CombinerMode::Grid).unwrap();
        let mut r = rng(23);
        let ms_power = 0.1;
        let book = generate_pilot_book(1, 2, 32, ms_power, &mut r).unwrap();
        let d_bb = orthonormalize(&complex_normal_matrix(2, 2, 1.0, &mut r));
        let tx = d_ms.matrix() * &d_bb * to_complex(&book.pilots[0]) * c(book.alphas[0].sqrt());
        let energy = tx.norm_squared();
        assert!((energy - book.alphas[0] * 2.0).abs() < 1e-12);
        assert!((energy / 32.0 - ms_power).abs() < 1e-12);
    }
}
