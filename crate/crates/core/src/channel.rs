//! Clustered mmWave channel generation, the composite channel seen through
//! the analog beamformers, and its singular value decomposition.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::SVD;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::array::{ula_response, AnalogCombiner, UlaSpec};
use crate::error::{check_dims, Error, Result};
use crate::linalg::{complex_normal, is_finite, CMatrix};

/// Parameters of the clustered narrowband channel and its distance-driven
/// attenuation.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModelParams {
    pub n_clusters: usize,
    pub n_rays_per_cluster: usize,
    /// Half-width of the uniform ray offset around each cluster center, radians.
    pub angle_spread: f64,
    /// Hz.
    pub carrier_freq: f64,
    pub path_loss_exponent: f64,
    /// Loss at the 1 m reference distance, dB.
    pub ref_loss_db: f64,
    /// Log-normal shadowing standard deviation, dB; zero disables it.
    pub shadowing_std_db: f64,
}

impl Default for ClusterModelParams {
    fn default() -> Self {
        Self {
            n_clusters: 4,
            n_rays_per_cluster: 6,
            angle_spread: 7.5f64.to_radians(),
            carrier_freq: 73e9,
            path_loss_exponent: 3.0,
            ref_loss_db: 69.7,
            shadowing_std_db: 0.0,
        }
    }
}

impl ClusterModelParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(what.to_string()));
        if self.n_clusters == 0 {
            return bad("n_clusters must be at least 1");
        }
        if self.n_rays_per_cluster == 0 {
            return bad("n_rays_per_cluster must be at least 1");
        }
        if !(self.angle_spread >= 0.0 && self.angle_spread.is_finite()) {
            return bad("angle_spread must be finite and nonnegative");
        }
        if !(self.carrier_freq > 0.0 && self.carrier_freq.is_finite()) {
            return bad("carrier frequency must be positive");
        }
        if !(self.path_loss_exponent > 0.0 && self.path_loss_exponent.is_finite()) {
            return bad("path loss exponent must be positive");
        }
        if !self.ref_loss_db.is_finite() {
            return bad("reference loss must be finite");
        }
        if !(self.shadowing_std_db >= 0.0 && self.shadowing_std_db.is_finite()) {
            return bad("shadowing std must be finite and nonnegative");
        }
        Ok(())
    }
}

/// Linear power attenuation at `distance` meters.
///
/// `PL_dB = ref_loss_db + 10 n log10(d) + X`, where `X ~ N(0, shadowing_std_db^2)`
/// is drawn from `rng` only when shadowing is enabled.
pub fn path_loss_linear<R: Rng + ?Sized>(
    distance: f64,
    params: &ClusterModelParams,
    rng: &mut R,
) -> Result<f64> {
    if !(distance > 0.0 && distance.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "distance must be positive, got {distance}"
        )));
    }
    let mut pl_db = params.ref_loss_db + 10.0 * params.path_loss_exponent * distance.log10();
    if params.shadowing_std_db > 0.0 {
        let x: f64 = rng.sample(StandardNormal);
        pl_db += params.shadowing_std_db * x;
    }
    Ok(10f64.powf(-pl_db / 10.0))
}

// Rays that spill past end-fire are folded back; sin is symmetric about pi/2.
fn fold_angle(theta: f64) -> f64 {
    if theta > FRAC_PI_2 {
        PI - theta
    } else if theta < -FRAC_PI_2 {
        -PI - theta
    } else {
        theta
    }
}

/// Draw one `n_ms x n_bs` clustered channel:
/// `H = gamma * sum_{i,l} alpha_il sqrt(L) a_MS(theta_il) a_BS(phi_il)^H`,
/// with `gamma = sqrt(n_ms n_bs / (n_clusters n_rays))`.
pub fn generate_channel<R: Rng + ?Sized>(
    params: &ClusterModelParams,
    n_ms: usize,
    n_bs: usize,
    distance: f64,
    rng: &mut R,
) -> Result<CMatrix> {
    params.validate()?;
    let ms = UlaSpec::half_wavelength(n_ms)?;
    let bs = UlaSpec::half_wavelength(n_bs)?;
    let attenuation = path_loss_linear(distance, params, rng)?;
    let n_paths = params.n_clusters * params.n_rays_per_cluster;
    let gamma = ((n_ms * n_bs) as f64 / n_paths as f64).sqrt();
    let amplitude = gamma * attenuation.sqrt();

    let mut h = CMatrix::zeros(n_ms, n_bs);
    for _ in 0..params.n_clusters {
        let ms_center = rng.random_range(-FRAC_PI_2..=FRAC_PI_2);
        let bs_center = rng.random_range(-FRAC_PI_2..=FRAC_PI_2);
        for _ in 0..params.n_rays_per_cluster {
            let (ms_off, bs_off) = if params.angle_spread > 0.0 {
                let s = params.angle_spread;
                (rng.random_range(-s..=s), rng.random_range(-s..=s))
            } else {
                (0.0, 0.0)
            };
            let gain = complex_normal(rng, 1.0) * amplitude;
            let a_ms = ula_response(&ms, fold_angle(ms_center + ms_off))?;
            let a_bs = ula_response(&bs, fold_angle(bs_center + bs_off))?;
            h.ger(gain, &a_ms, &a_bs.conjugate(), Complex64::new(1.0, 0.0));
        }
    }
    Ok(h)
}

/// `D_MS^H H D_BS`.
pub fn composite_channel(
    h: &CMatrix,
    d_ms: &AnalogCombiner,
    d_bs: &AnalogCombiner,
) -> Result<CMatrix> {
    check_dims(
        "composite channel",
        (d_ms.n_antennas(), d_bs.n_antennas()),
        h.shape(),
    )?;
    Ok(d_ms.matrix().adjoint() * h * d_bs.matrix())
}

/// Thin SVD `H = U diag(s) V^H` with singular values in descending order.
///
/// Phase convention: the largest-modulus entry of every right singular vector
/// is real and positive; the matching left vector carries the same rotation.
#[derive(Debug, Clone)]
pub struct ChannelSvd {
    pub left: CMatrix,
    pub singular_values: Vec<f64>,
    pub right: CMatrix,
}

impl ChannelSvd {
    pub fn reconstruct(&self) -> CMatrix {
        let mut scaled = self.left.clone();
        for (j, s) in self.singular_values.iter().enumerate() {
            scaled.column_mut(j).scale_mut(*s);
        }
        scaled * self.right.adjoint()
    }

    /// `[lambda_1 v_1, ..., lambda_M v_M]`.
    pub fn scaled_right(&self, m: usize) -> CMatrix {
        let mut out = self.right.columns(0, m).into_owned();
        for j in 0..m {
            out.column_mut(j).scale_mut(self.singular_values[j]);
        }
        out
    }

    pub fn left_block(&self, m: usize) -> CMatrix {
        self.left.columns(0, m).into_owned()
    }
}

pub fn channel_svd(h: &CMatrix) -> Result<ChannelSvd> {
    if !is_finite(h) {
        return Err(Error::NonFinite("channel matrix"));
    }
    let svd = SVD::try_new(h.clone(), true, true, 5.0 * f64::EPSILON, 0)
        .ok_or(Error::Decomposition("SVD did not converge"))?;
    let u = svd.u.ok_or(Error::Decomposition("SVD missing U"))?;
    let v = svd
        .v_t
        .ok_or(Error::Decomposition("SVD missing V"))?
        .adjoint();
    let r = svd.singular_values.len();
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

    let mut left = CMatrix::zeros(u.nrows(), r);
    let mut right = CMatrix::zeros(v.nrows(), r);
    let mut singular_values = Vec::with_capacity(r);
    for (dst, &src) in order.iter().enumerate() {
        let vcol = v.column(src);
        let pivot = vcol
            .iter()
            .enumerate()
            .fold((0, -1.0), |best, (i, z)| {
                if z.norm() > best.1 {
                    (i, z.norm())
                } else {
                    best
                }
            })
            .0;
        let p = vcol[pivot];
        let rot = if p.norm() > 0.0 {
            (p / p.norm()).conj()
        } else {
            Complex64::new(1.0, 0.0)
        };
        right.set_column(dst, &(vcol * rot));
        left.set_column(dst, &(u.column(src) * rot));
        singular_values.push(svd.singular_values[src]);
    }
    Ok(ChannelSvd {
        left,
        singular_values,
        right,
    })
}

/// One user's channel in both the antenna and the RF-chain domain.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    pub full_channel: CMatrix,
    pub composite_channel: CMatrix,
    pub svd: ChannelSvd,
    pub distance: f64,
}

impl ChannelRealization {
    pub fn new(
        full_channel: CMatrix,
        d_ms: &AnalogCombiner,
        d_bs: &AnalogCombiner,
        distance: f64,
    ) -> Result<Self> {
        let composite_channel = composite_channel(&full_channel, d_ms, d_bs)?;
        let svd = channel_svd(&composite_channel)?;
        Ok(Self {
            full_channel,
            composite_channel,
            svd,
            distance,
        })
    }
}
