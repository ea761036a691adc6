//! Monte-Carlo campaigns: scenario sampling, the per-trial pipeline, and the
//! empirical rate statistics.
//!
//! Each trial draws its randomness from ChaCha streams keyed by
//! `(master_seed, trial, purpose)`, so a campaign is a pure function of its
//! configuration no matter how many workers execute it or in which order.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::array::{build_analog_combiner, AnalogCombiner, CombinerMode};
use crate::channel::{generate_channel, ChannelRealization, ClusterModelParams};
use crate::error::{Error, Result};
use crate::estimation::{
    generate_pilot_book, pm_estimate, run_phase_a_broadcast, simulate_phase_b_rx, zf_estimate,
    zf_matrix, Estimator, ProbingConfig,
};
use crate::linalg::CMatrix;
use crate::rates::{downlink_rates, make_precoders, perfect_directions, uplink_rates};

pub use crate::rates::BfMode;

const THERMAL_NOISE_DBM_PER_HZ: f64 = -174.0;
const PILOT_REDRAWS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Link {
    Downlink,
    Uplink,
}

impl Link {
    pub const BOTH: [Link; 2] = [Link::Downlink, Link::Uplink];

    pub fn as_str(&self) -> &'static str {
        match self {
            Link::Downlink => "dl",
            Link::Uplink => "ul",
        }
    }
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Everything a campaign depends on.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub n_users: usize,
    pub n_bs: usize,
    pub n_ms: usize,
    pub n_bs_rf: usize,
    pub n_ms_rf: usize,
    /// Multiplexing order `M`.
    pub order: usize,
    /// Hz.
    pub bandwidth: f64,
    pub noise_figure_db: f64,
    /// Phase (a) BS power, watts.
    pub probe_power: f64,
    /// MS power for pilots and uplink data, watts.
    pub ms_power: f64,
    /// Downlink data power, watts, split equally across users.
    pub bs_data_power: f64,
    pub probe_len: usize,
    pub pilot_len: usize,
    pub dist_min: f64,
    pub dist_max: f64,
    /// PASTd forgetting factor.
    pub beta: f64,
    pub n_trials: usize,
    pub master_seed: u64,
    pub bf_modes: Vec<BfMode>,
    pub estimators: Vec<Estimator>,
    pub channel: ClusterModelParams,
    /// Worker threads; 0 lets rayon decide.
    pub workers: usize,
    /// Perfect-CSI rates use the true left singular vectors at the MS
    /// (otherwise the tracked `D_k,BB`).
    pub perfect_uses_true_ms: bool,
    /// Replace the tracked `D_k,BB` with the true left singular vectors.
    pub ideal_tracking: bool,
    /// Force the thermal noise variance (watts) instead of deriving it.
    pub noise_var_override: Option<f64>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_users: 5,
            n_bs: 64,
            n_ms: 4,
            n_bs_rf: 16,
            n_ms_rf: 2,
            order: 1,
            bandwidth: 500e6,
            noise_figure_db: 6.0,
            probe_power: 1.0,
            ms_power: 0.1,
            bs_data_power: 1.0,
            probe_len: 60,
            pilot_len: 32,
            dist_min: 5.0,
            dist_max: 100.0,
            beta: 1.0,
            n_trials: 5000,
            master_seed: 1,
            bf_modes: vec![BfMode::Hybrid],
            estimators: Estimator::ALL.to_vec(),
            channel: ClusterModelParams::default(),
            workers: 0,
            perfect_uses_true_ms: true,
            ideal_tracking: false,
            noise_var_override: None,
        }
    }
}

/// A configuration invariant violation and the config keys involved.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigIssue {
    pub keys: &'static [&'static str],
    pub message: String,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.check()
            .map_err(|issue| Error::InvalidArgument(issue.message))
    }

    /// Invariant check naming the offending keys.
    pub fn check(&self) -> std::result::Result<(), ConfigIssue> {
        let fail = |keys: &'static [&'static str], message: String| Err(ConfigIssue { keys, message });
        let counts: [(&'static [&'static str], usize); 9] = [
            (&["k"], self.n_users),
            (&["n_bs"], self.n_bs),
            (&["n_ms"], self.n_ms),
            (&["n_bs_rf"], self.n_bs_rf),
            (&["n_ms_rf"], self.n_ms_rf),
            (&["m"], self.order),
            (&["probe_len"], self.probe_len),
            (&["pilot_len"], self.pilot_len),
            (&["trials"], self.n_trials),
        ];
        for (keys, v) in counts {
            if v == 0 {
                return fail(keys, format!("{} must be at least 1", keys[0]));
            }
        }
        if self.n_bs_rf > self.n_bs {
            return fail(&["n_bs_rf", "n_bs"], "n_bs_rf cannot exceed n_bs".into());
        }
        if self.n_ms_rf > self.n_ms {
            return fail(&["n_ms_rf", "n_ms"], "n_ms_rf cannot exceed n_ms".into());
        }
        if self.order > self.n_ms_rf.min(self.n_bs_rf) {
            return fail(
                &["m", "n_ms_rf", "n_bs_rf"],
                format!(
                    "m = {} exceeds min(n_ms_rf, n_bs_rf) = {}",
                    self.order,
                    self.n_ms_rf.min(self.n_bs_rf)
                ),
            );
        }
        if self.pilot_len < self.order {
            return fail(&["pilot_len", "m"], "pilot_len must be at least m".into());
        }
        if self.estimators.contains(&Estimator::Zf) && self.pilot_len < self.order * self.n_users {
            return fail(
                &["pilot_len", "m", "k", "estimators"],
                format!(
                    "zero-forcing needs pilot_len >= m*k = {}, got {}",
                    self.order * self.n_users,
                    self.pilot_len
                ),
            );
        }
        let positive: [(&'static [&'static str], f64); 3] = [
            (&["bw_mhz"], self.bandwidth),
            (&["probe_power_w"], self.probe_power),
            (&["ms_power_w"], self.ms_power),
        ];
        for (keys, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return fail(keys, format!("{} must be positive", keys[0]));
            }
        }
        if !(self.bs_data_power >= 0.0 && self.bs_data_power.is_finite()) {
            return fail(&["bs_data_power_w"], "bs_data_power_w must be nonnegative".into());
        }
        if !self.noise_figure_db.is_finite() {
            return fail(&["noise_figure_db"], "noise_figure_db must be finite".into());
        }
        if !(self.dist_min > 0.0 && self.dist_max >= self.dist_min && self.dist_max.is_finite()) {
            return fail(
                &["dist_min_m", "dist_max_m"],
                "distances need 0 < dist_min_m <= dist_max_m".into(),
            );
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return fail(&["beta"], "beta must lie in (0, 1]".into());
        }
        if self.bf_modes.is_empty() {
            return fail(&["bf_mode"], "at least one bf_mode is required".into());
        }
        if self.estimators.is_empty() {
            return fail(&["estimators"], "at least one estimator is required".into());
        }
        if let Some(v) = self.noise_var_override {
            if !(v >= 0.0 && v.is_finite()) {
                return fail(&[], "noise variance override must be nonnegative".into());
            }
        }
        self.channel.validate().map_err(|e| ConfigIssue {
            keys: &[
                "n_clusters",
                "n_rays",
                "angle_spread_deg",
                "f0_ghz",
                "path_loss_exponent",
                "ref_loss_db",
                "shadowing_std_db",
            ],
            message: e.to_string(),
        })
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var_override
            .unwrap_or_else(|| noise_variance(self.bandwidth, self.noise_figure_db))
    }

    fn combiners(&self, mode: BfMode) -> Result<(AnalogCombiner, AnalogCombiner)> {
        let (kind, bs_rf, ms_rf) = match mode {
            BfMode::Hybrid => (CombinerMode::Grid, self.n_bs_rf, self.n_ms_rf),
            BfMode::Fd => (CombinerMode::Identity, self.n_bs, self.n_ms),
        };
        Ok((
            build_analog_combiner(self.n_bs, bs_rf, kind)?,
            build_analog_combiner(self.n_ms, ms_rf, kind)?,
        ))
    }
}

/// Thermal noise power in watts over bandwidth `bandwidth` Hz:
/// `-174 dBm/Hz + 10 log10(W) + NF`.
pub fn noise_variance(bandwidth: f64, noise_figure_db: f64) -> f64 {
    let dbm = THERMAL_NOISE_DBM_PER_HZ + 10.0 * bandwidth.log10() + noise_figure_db;
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Independent stream for one `(trial, purpose)` pair.
fn stream(master_seed: u64, trial: usize, purpose: u64) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&master_seed.to_le_bytes());
    seed[8..16].copy_from_slice(&(trial as u64).to_le_bytes());
    seed[16..24].copy_from_slice(&purpose.to_le_bytes());
    seed[24..].copy_from_slice(b"mmw-trl\0");
    ChaCha8Rng::from_seed(seed)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateSample {
    pub user: usize,
    pub link: Link,
    pub bf_mode: BfMode,
    pub estimator: Estimator,
    /// bits/s
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial: usize,
    /// Per-user BS distance, meters.
    pub distances: Vec<f64>,
    pub samples: Vec<RateSample>,
}

impl TrialResult {
    pub fn rates(&self, link: Link, bf_mode: BfMode, estimator: Estimator) -> Vec<f64> {
        self.samples
            .iter()
            .filter(|s| s.link == link && s.bf_mode == bf_mode && s.estimator == estimator)
            .map(|s| s.rate)
            .collect()
    }
}

/// One complete scenario realization: drops, channels, both estimation
/// phases, and UL/DL rates for every configured mode and estimator.
pub fn run_trial(cfg: &ScenarioConfig, trial: usize) -> Result<TrialResult> {
    cfg.validate()?;
    let noise_var = cfg.noise_var();
    let mut drop_rng = stream(cfg.master_seed, trial, 0);
    let distances: Vec<f64> = (0..cfg.n_users)
        .map(|_| {
            if cfg.dist_max > cfg.dist_min {
                drop_rng.random_range(cfg.dist_min..cfg.dist_max)
            } else {
                cfg.dist_min
            }
        })
        .collect();
    let full_channels = distances
        .iter()
        .map(|&d| generate_channel(&cfg.channel, cfg.n_ms, cfg.n_bs, d, &mut drop_rng))
        .collect::<Result<Vec<_>>>()?;

    let mut samples = Vec::new();
    for &mode in &cfg.bf_modes {
        let mut rng = stream(cfg.master_seed, trial, 1 + mode as u64);
        let (d_bs, d_ms) = cfg.combiners(mode)?;
        let links = full_channels
            .iter()
            .zip(&distances)
            .map(|(h, &d)| ChannelRealization::new(h.clone(), &d_ms, &d_bs, d))
            .collect::<Result<Vec<_>>>()?;
        let composites: Vec<CMatrix> = links.iter().map(|l| l.composite_channel.clone()).collect();
        let svds: Vec<_> = links.iter().map(|l| l.svd.clone()).collect();

        let probing = ProbingConfig {
            probe_len: cfg.probe_len,
            probe_power: cfg.probe_power,
            noise_var,
        };
        let tracked =
            run_phase_a_broadcast(&composites, &probing, &d_bs, &d_ms, cfg.order, cfg.beta, &mut rng)?;
        let (true_bs, true_ms) = perfect_directions(&svds, cfg.order);
        let d_bbs = if cfg.ideal_tracking {
            true_ms.clone()
        } else {
            tracked
        };

        let needs_pilots = cfg
            .estimators
            .iter()
            .any(|e| matches!(e, Estimator::Pm | Estimator::Zf));
        let mut pilots = None;
        if needs_pilots {
            let want_zf = cfg.estimators.contains(&Estimator::Zf);
            let mut attempt = 0;
            let (book, zf) = loop {
                let book = generate_pilot_book(cfg.n_users, cfg.order, cfg.pilot_len, cfg.ms_power, &mut rng)?;
                if !want_zf {
                    break (book, None);
                }
                match zf_matrix(&book) {
                    Ok(z) => break (book, Some(z)),
                    Err(Error::RankDeficient { .. }) if attempt + 1 < PILOT_REDRAWS => attempt += 1,
                    Err(e) => return Err(e),
                }
            };
            let y = simulate_phase_b_rx(&composites, &d_bbs, &book, noise_var, &d_bs, &mut rng)?;
            pilots = Some((book, zf, y));
        }

        for &estimator in &cfg.estimators {
            let (bs_dirs, ms_dirs) = match estimator {
                Estimator::Perfect => {
                    let ms = if cfg.perfect_uses_true_ms {
                        true_ms.clone()
                    } else {
                        d_bbs.clone()
                    };
                    (true_bs.clone(), ms)
                }
                Estimator::Pm => {
                    let (book, _, y) = pilots.as_ref().expect("pilots simulated");
                    let est = book
                        .pilots
                        .iter()
                        .map(|phi| pm_estimate(y, phi).map(|e| e.matrix))
                        .collect::<Result<Vec<_>>>()?;
                    (est, d_bbs.clone())
                }
                Estimator::Zf => {
                    let (_, zf, y) = pilots.as_ref().expect("pilots simulated");
                    let zf = zf.as_ref().expect("zero-forcing filter built");
                    let est = zf
                        .blocks
                        .iter()
                        .map(|z| zf_estimate(y, z).map(|e| e.matrix))
                        .collect::<Result<Vec<_>>>()?;
                    (est, d_bbs.clone())
                }
            };
            let bf = make_precoders(&bs_dirs, &ms_dirs, cfg.bs_data_power, cfg.ms_power, &d_bs, &d_ms)?;
            let dl = downlink_rates(&composites, &bf, noise_var, cfg.bandwidth, &d_ms)?;
            let ul = uplink_rates(&composites, &bf, noise_var, cfg.bandwidth, &d_bs)?;
            for (link, rates) in [(Link::Downlink, dl), (Link::Uplink, ul)] {
                samples.extend(rates.into_iter().enumerate().map(|(user, rate)| RateSample {
                    user,
                    link,
                    bf_mode: mode,
                    estimator,
                    rate,
                }));
            }
        }
    }
    Ok(TrialResult {
        trial,
        distances,
        samples,
    })
}

/// Sorted `(value, i/n)` pairs.
pub fn empirical_cdf(values: &[f64]) -> Result<Vec<(f64, f64)>> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("empirical CDF of an empty sample".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    Ok(sorted
        .into_iter()
        .enumerate()
        .map(|(i, v)| (v, (i + 1) as f64 / n))
        .collect())
}

/// Nearest-rank percentile: the sorted sample at 1-based index `ceil(p n)`.
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("percentile of an empty sample".into()));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("percentile {p} outside [0, 1]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    // tolerance keeps e.g. 0.9 * 100 from rounding up to 91
    let rank = ((p * n as f64) - 1e-9).ceil().max(1.0) as usize;
    Ok(sorted[rank.min(n) - 1])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SeriesKey {
    pub link: Link,
    pub bf_mode: BfMode,
    pub estimator: Estimator,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesStats {
    pub cdf: Vec<(f64, f64)>,
    pub median: f64,
    pub p90: f64,
    pub n_samples: usize,
}

/// Pooled per-user rate statistics for every (link, mode, estimator).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CampaignStats {
    pub series: BTreeMap<SeriesKey, SeriesStats>,
}

impl CampaignStats {
    pub fn from_trials(trials: &[TrialResult]) -> Result<Self> {
        let mut pooled: BTreeMap<SeriesKey, Vec<f64>> = BTreeMap::new();
        for t in trials {
            for s in &t.samples {
                pooled
                    .entry(SeriesKey {
                        link: s.link,
                        bf_mode: s.bf_mode,
                        estimator: s.estimator,
                    })
                    .or_default()
                    .push(s.rate);
            }
        }
        let mut series = BTreeMap::new();
        for (key, values) in pooled {
            series.insert(
                key,
                SeriesStats {
                    cdf: empirical_cdf(&values)?,
                    median: percentile(&values, 0.5)?,
                    p90: percentile(&values, 0.9)?,
                    n_samples: values.len(),
                },
            );
        }
        Ok(Self { series })
    }

    pub fn get(&self, link: Link, bf_mode: BfMode, estimator: Estimator) -> Option<&SeriesStats> {
        self.series.get(&SeriesKey {
            link,
            bf_mode,
            estimator,
        })
    }

    pub fn median(&self, link: Link, bf_mode: BfMode, estimator: Estimator) -> Option<f64> {
        self.get(link, bf_mode, estimator).map(|s| s.median)
    }
}

#[derive(Debug, Clone)]
pub struct Campaign {
    /// Successful trials in trial-index order.
    pub trials: Vec<TrialResult>,
    pub stats: CampaignStats,
    /// Trials that errored, with the error message.
    pub failures: Vec<(usize, String)>,
}

/// Run `cfg.n_trials` trials on up to `cfg.workers` threads.
///
/// Fails if more than 0.1% of the trials error; otherwise failed trials are
/// dropped and reported in [`Campaign::failures`].
pub fn run_campaign(cfg: &ScenarioConfig) -> Result<Campaign> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;
    let outcomes: Vec<Result<TrialResult>> =
        pool.install(|| (0..cfg.n_trials).into_par_iter().map(|t| run_trial(cfg, t)).collect());

    let mut trials = Vec::with_capacity(outcomes.len());
    let mut failures = Vec::new();
    for (idx, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(t) => trials.push(t),
            Err(e) => failures.push((idx, e.to_string())),
        }
    }
    if failures.len() * 1000 > cfg.n_trials {
        return Err(Error::CampaignFailed {
            failed: failures.len(),
            total: cfg.n_trials,
        });
    }
    let stats = CampaignStats::from_trials(&trials)?;
    Ok(Campaign {
        trials,
        stats,
        failures,
    })
}
