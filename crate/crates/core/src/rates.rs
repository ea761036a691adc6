//! Data-phase beamformers and multiuser achievable rates.
//!
//! Interference from the other users is treated as Gaussian noise with its
//! exact covariance, and thermal noise keeps the `sigma^2 D^H D` shape the
//! analog combiners give it:
//!
//! ```text
//! R_k = W log2 det(I + Rzi_k^{-1} S_k)
//! ```

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::array::AnalogCombiner;
use crate::channel::ChannelSvd;
use crate::error::{check_dims, Error, Result};
use crate::linalg::{is_finite, ln_det_identity_plus, CMatrix};

/// Front-end architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BfMode {
    Hybrid,
    /// Fully digital: identity analog stage on both ends.
    Fd,
}

impl BfMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            BfMode::Hybrid => "hybrid",
            BfMode::Fd => "fd",
        }
    }
}

impl fmt::Display for BfMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BfMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hybrid" | "hy" => Ok(BfMode::Hybrid),
            "fd" | "digital" => Ok(BfMode::Fd),
            other => Err(Error::InvalidArgument(format!("unknown beamforming mode '{other}'"))),
        }
    }
}

/// Per-user baseband beamformers for the data phase.
#[derive(Debug, Clone)]
pub struct BeamformerSet {
    /// Downlink precoders `Q_k`, power-scaled.
    pub bs_precoders: Vec<CMatrix>,
    /// Uplink transmit beamformers `T_k` (scaled `D_k,BB`).
    pub ms_precoders: Vec<CMatrix>,
    /// Uplink BS combiners: the unscaled channel estimates.
    pub bs_combiners: Vec<CMatrix>,
    /// Downlink MS combiners: the unscaled `D_k,BB`.
    pub ms_combiners: Vec<CMatrix>,
    pub bs_powers: Vec<f64>,
    pub ms_powers: Vec<f64>,
}

impl BeamformerSet {
    pub fn n_users(&self) -> usize {
        self.bs_precoders.len()
    }
}

/// BS-side `V(:,1:M) diag(lambda)` and MS-side `U(:,1:M)` for perfect CSI.
pub fn perfect_directions(svds: &[ChannelSvd], order: usize) -> (Vec<CMatrix>, Vec<CMatrix>) {
    svds.iter()
        .map(|s| (s.scaled_right(order), s.left_block(order)))
        .unzip()
}

fn radiated_power(rf: &AnalogCombiner, bb: &CMatrix) -> f64 {
    (rf.matrix() * bb).norm_squared()
}

/// Scale BS and MS directions to the configured data powers.
///
/// Downlink: `trace(D_BS Q_k Q_k^H D_BS^H) = bs_data_power / K` for each user.
/// Uplink: `trace(D_k D_k,BB D_k,BB^H D_k^H) = ms_data_power` per user.
pub fn make_precoders(
    bs_directions: &[CMatrix],
    ms_directions: &[CMatrix],
    bs_data_power: f64,
    ms_data_power: f64,
    d_bs: &AnalogCombiner,
    d_ms: &AnalogCombiner,
) -> Result<BeamformerSet> {
    let k = bs_directions.len();
    if k == 0 || ms_directions.len() != k {
        return Err(Error::InvalidArgument(format!(
            "{} BS and {} MS directions",
            k,
            ms_directions.len()
        )));
    }
    for p in [bs_data_power, ms_data_power] {
        if !(p >= 0.0 && p.is_finite()) {
            return Err(Error::InvalidArgument(format!("data power {p} must be nonnegative")));
        }
    }
    let share = bs_data_power / k as f64;
    let mut set = BeamformerSet {
        bs_precoders: Vec::with_capacity(k),
        ms_precoders: Vec::with_capacity(k),
        bs_combiners: bs_directions.to_vec(),
        ms_combiners: ms_directions.to_vec(),
        bs_powers: vec![share; k],
        ms_powers: vec![ms_data_power; k],
    };
    for (user, (q, t)) in bs_directions.iter().zip(ms_directions).enumerate() {
        check_dims("BS beamformer", (d_bs.n_rf(), q.ncols()), q.shape())?;
        check_dims("MS beamformer", (d_ms.n_rf(), q.ncols()), t.shape())?;
        let pq = radiated_power(d_bs, q);
        let pt = radiated_power(d_ms, t);
        if !(pq > 0.0 && pt > 0.0) || !is_finite(q) || !is_finite(t) {
            return Err(Error::Degenerate(format!("user {user} has an all-zero or non-finite beamformer")));
        }
        set.bs_precoders.push(q * Complex64::new((share / pq).sqrt(), 0.0));
        set.ms_precoders.push(t * Complex64::new((ms_data_power / pt).sqrt(), 0.0));
    }
    Ok(set)
}

fn rate_from(noise: &CMatrix, signal: &CMatrix, bandwidth: f64) -> Result<f64> {
    let nats = ln_det_identity_plus(noise, signal)?;
    let rate = bandwidth * nats / std::f64::consts::LN_2;
    if rate.is_finite() {
        Ok(rate.max(0.0))
    } else {
        Err(Error::NonFinite("achievable rate"))
    }
}

fn outer(a: &CMatrix) -> CMatrix {
    a * a.adjoint()
}

/// Per-user downlink rates (bits/s). MS `k` combines with `A_k = D_k,BB`.
pub fn downlink_rates(
    channels: &[CMatrix],
    bf: &BeamformerSet,
    noise_var: f64,
    bandwidth: f64,
    d_ms: &AnalogCombiner,
) -> Result<Vec<f64>> {
    if channels.len() != bf.n_users() {
        return Err(Error::InvalidArgument("channel/beamformer count mismatch".into()));
    }
    let ms_gram = d_ms.gram();
    channels
        .iter()
        .enumerate()
        .map(|(k, h)| {
            let a = &bf.ms_combiners[k];
            let ah = a.adjoint() * h;
            let mut noise = a.adjoint() * &ms_gram * a * Complex64::new(noise_var, 0.0);
            let mut signal = CMatrix::zeros(a.ncols(), a.ncols());
            for (j, q) in bf.bs_precoders.iter().enumerate() {
                let term = outer(&(&ah * q));
                if j == k {
                    signal = term;
                } else {
                    noise += term;
                }
            }
            rate_from(&noise, &signal, bandwidth)
        })
        .collect()
}

/// Per-user uplink rates (bits/s). The BS combines user `k` with its channel
/// estimate `B_k`.
pub fn uplink_rates(
    channels: &[CMatrix],
    bf: &BeamformerSet,
    noise_var: f64,
    bandwidth: f64,
    d_bs: &AnalogCombiner,
) -> Result<Vec<f64>> {
    if channels.len() != bf.n_users() {
        return Err(Error::InvalidArgument("channel/beamformer count mismatch".into()));
    }
    let bs_gram = d_bs.gram();
    // H_j^H T_j, reused by every receiver
    let arrivals: Vec<CMatrix> = channels
        .iter()
        .zip(&bf.ms_precoders)
        .map(|(h, t)| h.adjoint() * t)
        .collect();
    (0..channels.len())
        .map(|k| {
            let b = &bf.bs_combiners[k];
            let bh = b.adjoint();
            let mut noise = &bh * &bs_gram * b * Complex64::new(noise_var, 0.0);
            let mut signal = CMatrix::zeros(b.ncols(), b.ncols());
            for (j, arr) in arrivals.iter().enumerate() {
                let term = outer(&(&bh * arr));
                if j == k {
                    signal = term;
                } else {
                    noise += term;
                }
            }
            rate_from(&noise, &signal, bandwidth)
        })
        .collect()
}

/// Rates of one beamformer set in both directions.
#[derive(Debug, Clone)]
pub struct RateReport {
    pub estimator: crate::estimation::Estimator,
    pub bf_mode: BfMode,
    pub downlink: Vec<f64>,
    pub uplink: Vec<f64>,
}
