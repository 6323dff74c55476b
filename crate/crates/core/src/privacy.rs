//! Sensitivity calibration and the Laplace-perturbed similarity oracle.
//!
//! Noise scale is `S / ε` where `S` is one of
//!
//! * global sensitivity, fixed at 2 because cosine similarity lies in `[-1, 1]`;
//! * smooth sensitivity, `2 · exp(-(ε/2) · ln(2/δ)) · S_local` with `δ = 1/n²`;
//! * mixed sensitivity, `min(S_global, S_smooth)`.
//!
//! Every unordered pair receives exactly one noise draw. The draw comes from a
//! ChaCha stream selected by the pair index, so it is a pure function of
//! `(seed, block, pair)` and racing workers always agree on the value.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::corpus::BlockView;
use crate::error::{Error, Result};

/// Sensitivity of cosine similarity over all possible datasets.
pub const GLOBAL_SENSITIVITY: f64 = 2.0;

pub fn global_sensitivity() -> f64 {
    GLOBAL_SENSITIVITY
}

/// Privacy budget; `Off` disables perturbation entirely.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Epsilon {
    Off,
    Budget(f64),
}

impl Epsilon {
    pub fn value(self) -> Option<f64> {
        match self {
            Epsilon::Off => None,
            Epsilon::Budget(e) => Some(e),
        }
    }

    pub fn is_off(self) -> bool {
        matches!(self, Epsilon::Off)
    }
}

impl fmt::Display for Epsilon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Epsilon::Off => f.write_str("off"),
            Epsilon::Budget(e) => write!(f, "{e}"),
        }
    }
}

impl FromStr for Epsilon {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("off") || s.eq_ignore_ascii_case("none") {
            return Ok(Epsilon::Off);
        }
        let e: f64 = s.parse().map_err(|_| {
            Error::Config(format!("epsilon must be a number or \"off\", got {s:?}"))
        })?;
        if !(e > 0.0 && e.is_finite()) {
            return Err(Error::Config(format!("epsilon must be positive, got {e}")));
        }
        Ok(Epsilon::Budget(e))
    }
}

impl Serialize for Epsilon {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Epsilon::Off => serializer.serialize_str("off"),
            Epsilon::Budget(e) => serializer.serialize_f64(*e),
        }
    }
}

impl<'de> Deserialize<'de> for Epsilon {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Num(e) => Epsilon::from_str(&e.to_string()),
            Raw::Text(s) => Epsilon::from_str(&s),
        }
        .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensitivityMode {
    Global,
    Smooth,
    Mixed,
}

impl FromStr for SensitivityMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "global" => Ok(SensitivityMode::Global),
            "smooth" => Ok(SensitivityMode::Smooth),
            "mixed" => Ok(SensitivityMode::Mixed),
            other => Err(Error::Config(format!(
                "unknown sensitivity mode {other:?} (expected global, smooth or mixed)"
            ))),
        }
    }
}

impl fmt::Display for SensitivityMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SensitivityMode::Global => "global",
            SensitivityMode::Smooth => "smooth",
            SensitivityMode::Mixed => "mixed",
        })
    }
}

/// Which sensitivity ended up calibrating the noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Chosen {
    Global,
    Smooth,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    pub epsilon: Epsilon,
    pub sensitivity_mode: SensitivityMode,
    /// Failure probability; `None` means `1/n²` for a block of size `n`.
    #[serde(default)]
    pub delta: Option<f64>,
    pub seed: u64,
}

impl PrivacyParams {
    pub fn new(epsilon: Epsilon, seed: u64) -> Self {
        PrivacyParams {
            epsilon,
            sensitivity_mode: SensitivityMode::Mixed,
            delta: None,
            seed,
        }
    }

    pub fn off(seed: u64) -> Self {
        Self::new(Epsilon::Off, seed)
    }

    pub fn with_mode(mut self, mode: SensitivityMode) -> Self {
        self.sensitivity_mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let Epsilon::Budget(e) = self.epsilon {
            if !(e > 0.0 && e.is_finite()) {
                return Err(Error::Config(format!("epsilon must be positive, got {e}")));
            }
        }
        if let Some(d) = self.delta {
            if !(d > 0.0 && d < 1.0) {
                return Err(Error::Config(format!("delta must lie in (0, 1), got {d}")));
            }
        }
        Ok(())
    }

    /// δ used for a block of `n` records.
    pub fn delta_for(&self, n: usize) -> f64 {
        self.delta.unwrap_or_else(|| default_delta(n))
    }
}

pub fn default_delta(n: usize) -> f64 {
    let n = n as f64;
    1.0 / (n * n)
}

/// Largest per-anchor spread of observed cosines: for each anchor `i`, the
/// gap between its most and least similar partner, maximized over anchors.
pub fn local_sensitivity(block: &BlockView<'_>) -> Result<f64> {
    let n = block.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let spread = (0..n)
        .into_par_iter()
        .map(|i| {
            let (lo, hi) = (0..n)
                .filter(|&j| j != i)
                .map(|j| block.cosine(i, j))
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
                    (lo.min(c), hi.max(c))
                });
            hi - lo
        })
        .reduce(|| 0.0, f64::max);
    Ok(spread.clamp(0.0, GLOBAL_SENSITIVITY))
}

/// Smooth sensitivity with the default `δ = 1/n²`.
pub fn smooth_sensitivity(s_local: f64, epsilon: f64, n: usize) -> f64 {
    smooth_sensitivity_with_delta(s_local, epsilon, default_delta(n))
}

/// `2 · exp(-(ε/2) · ln(2/δ)) · s_local`, natural logarithm.
pub fn smooth_sensitivity_with_delta(s_local: f64, epsilon: f64, delta: f64) -> f64 {
    2.0 * (-(epsilon / 2.0) * (2.0 / delta).ln()).exp() * s_local
}

pub fn mixed_sensitivity(s_global: f64, s_smooth: f64) -> f64 {
    s_global.min(s_smooth)
}

/// Laplace(0, scale) by inverse CDF on `u ~ U(-½, ½)`.
pub fn laplace_sample<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    if scale == 0.0 {
        return 0.0;
    }
    let u: f64 = rng.sample::<f64, _>(Open01) - 0.5;
    laplace_inverse_cdf(scale, u)
}

/// Inverse CDF of Laplace(0, scale) at `u ∈ (-½, ½)` (`u` is the CDF minus ½).
pub fn laplace_inverse_cdf(scale: f64, u: f64) -> f64 {
    if u == 0.0 || scale == 0.0 {
        return 0.0;
    }
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    /// `None` for pooled runs.
    pub block: Option<u32>,
    pub n: usize,
    pub epsilon: Epsilon,
    pub mode: SensitivityMode,
    pub delta: f64,
    /// Base of the logarithm inside the smooth-sensitivity exponent.
    pub log_base: String,
    pub s_global: f64,
    pub s_local: f64,
    pub s_smooth: f64,
    pub s_mixed: f64,
    pub chosen: Chosen,
    pub noise_scale: f64,
    /// Distinct perturbed pair queries, filled in once a graph is built.
    #[serde(default)]
    pub perturbed_queries: Option<u64>,
}

impl SensitivityReport {
    /// Sensitivity that calibrates the noise under the report's mode.
    pub fn applied_sensitivity(&self) -> f64 {
        match self.mode {
            SensitivityMode::Global => self.s_global,
            SensitivityMode::Smooth => self.s_smooth,
            SensitivityMode::Mixed => self.s_mixed,
        }
    }
}

/// Computes all sensitivities for a block. With `ε = off` the smooth term
/// takes its `ε → ∞` limit of 0 and no noise is applied.
pub fn sensitivity_report(
    block: &BlockView<'_>,
    params: &PrivacyParams,
) -> Result<SensitivityReport> {
    params.validate()?;
    let n = block.len();
    let s_local = local_sensitivity(block)?;
    let delta = params.delta_for(n);
    let s_global = global_sensitivity();
    let s_smooth = match params.epsilon {
        Epsilon::Off => 0.0,
        Epsilon::Budget(e) => smooth_sensitivity_with_delta(s_local, e, delta),
    };
    let s_mixed = mixed_sensitivity(s_global, s_smooth);
    let chosen = match params.sensitivity_mode {
        SensitivityMode::Global => Chosen::Global,
        SensitivityMode::Smooth => Chosen::Smooth,
        SensitivityMode::Mixed if s_smooth < s_global => Chosen::Smooth,
        SensitivityMode::Mixed => Chosen::Global,
    };
    let mut report = SensitivityReport {
        block: block.block(),
        n,
        epsilon: params.epsilon,
        mode: params.sensitivity_mode,
        delta,
        log_base: "e".to_string(),
        s_global,
        s_local,
        s_smooth,
        s_mixed,
        chosen,
        noise_scale: 0.0,
        perturbed_queries: None,
    };
    if let Epsilon::Budget(e) = params.epsilon {
        report.noise_scale = report.applied_sensitivity() / e;
    }
    Ok(report)
}

const EMPTY: u64 = u64::MAX;

/// Perturbed cosine similarities with one cached noise draw per unordered pair.
///
/// Safe to share across threads: concurrent first queries of the same pair
/// compute bit-identical values, so whichever store wins is correct.
pub struct SimilarityOracle<'a> {
    block: BlockView<'a>,
    noise_scale: f64,
    base: ChaCha8Rng,
    cache: Vec<AtomicU64>,
    filled: AtomicUsize,
}

impl<'a> SimilarityOracle<'a> {
    /// `noise_scale` is typically [`SensitivityReport::noise_scale`].
    pub fn new(block: BlockView<'a>, seed: u64, noise_scale: f64) -> Self {
        let n = block.len();
        let pairs = n * n.saturating_sub(1) / 2;
        let block_salt = block.block().map_or(u64::MAX, u64::from);
        let base = ChaCha8Rng::seed_from_u64(
            seed ^ block_salt
                .wrapping_add(1)
                .wrapping_mul(0x9E37_79B9_7F4A_7C15),
        );
        SimilarityOracle {
            block,
            noise_scale: noise_scale.max(0.0),
            base,
            cache: (0..pairs).map(|_| AtomicU64::new(EMPTY)).collect(),
            filled: AtomicUsize::new(0),
        }
    }

    /// An oracle that returns exact cosines.
    pub fn exact(block: BlockView<'a>) -> Self {
        Self::new(block, 0, 0.0)
    }

    pub fn from_report(
        block: BlockView<'a>,
        params: &PrivacyParams,
        report: &SensitivityReport,
    ) -> Self {
        Self::new(block, params.seed, report.noise_scale)
    }

    pub fn block(&self) -> &BlockView<'a> {
        &self.block
    }

    pub fn len(&self) -> usize {
        self.block.len()
    }

    pub fn is_empty(&self) -> bool {
        self.block.is_empty()
    }

    pub fn noise_scale(&self) -> f64 {
        self.noise_scale
    }

    /// Number of distinct pairs queried so far.
    pub fn cache_len(&self) -> usize {
        self.filled.load(Ordering::Relaxed)
    }

    /// Perturbed similarity of nodes `i` and `j` (block-local indices).
    pub fn noisy_similarity(&self, i: usize, j: usize) -> Result<f64> {
        let n = self.block.len();
        if i == j || i >= n || j >= n {
            return Err(Error::InvalidPair(i, j));
        }
        Ok(self.get(i, j))
    }

    pub(crate) fn get(&self, i: usize, j: usize) -> f64 {
        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
        let slot = hi * (hi - 1) / 2 + lo;
        let cell = &self.cache[slot];
        let bits = cell.load(Ordering::Acquire);
        if bits != EMPTY {
            return f64::from_bits(bits);
        }
        let value = self.block.cosine(lo, hi) + self.noise(slot as u64);
        if cell
            .compare_exchange(EMPTY, value.to_bits(), Ordering::AcqRel, Ordering::Acquire)
            .is_ok()
        {
            self.filled.fetch_add(1, Ordering::Relaxed);
        }
        value
    }

    fn noise(&self, pair: u64) -> f64 {
        if self.noise_scale == 0.0 {
            return 0.0;
        }
        let mut rng = self.base.clone();
        rng.set_stream(pair);
        laplace_sample(self.noise_scale, &mut rng)
    }
}

impl fmt::Debug for SimilarityOracle<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SimilarityOracle")
            .field("n", &self.block.len())
            .field("noise_scale", &self.noise_scale)
            .field("cached", &self.cache_len())
            .finish()
    }
}
