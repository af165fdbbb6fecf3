//! Experiment configuration, the Zipf content model and parameter validation.

use std::fmt;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::neumaier_sum;

/// All physical, content and queueing parameters of one experiment.
///
/// Intensities are in nodes/m², powers in linear watts, the request rate in
/// requests per slot (one slot is one second).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub lambda_user: f64,
    pub lambda_bs: f64,
    pub alpha: f64,
    pub power_d2d: f64,
    pub power_bs: f64,
    pub pathloss: f64,
    pub sense_threshold: f64,
    pub fading_rate: f64,
    pub num_channels: usize,
    pub request_rate: f64,
    pub library_size: usize,
    pub cache_size: usize,
    pub zipf_exponent: f64,
    pub window_side: f64,
    pub seed: u64,
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

impl ScenarioConfig {
    /// The numerical setup of the reference experiment: 100 users and one BS
    /// per disc of radius 500 m, 23/43 dBm, path-loss exponent 4,
    /// ten channels, 0.09 requests/s, N = 200, M = 10, Zipf exponent 1.
    ///
    /// Values the reference experiment leaves open are filled in as follows:
    /// `alpha = 0.5`, `fading_rate = 1`, the sensing threshold is calibrated
    /// so that one BS is sensed on average (see
    /// [`calibrated_sense_threshold`]), and the window is 8 km so that it
    /// spans more than eight mean BS spacings.
    pub fn reference_defaults() -> Self {
        let disc = std::f64::consts::PI * 500.0 * 500.0;
        let mut cfg = ScenarioConfig {
            lambda_user: 100.0 / disc,
            lambda_bs: 1.0 / disc,
            alpha: 0.5,
            power_d2d: dbm_to_watts(23.0),
            power_bs: dbm_to_watts(43.0),
            pathloss: 4.0,
            sense_threshold: 0.0,
            fading_rate: 1.0,
            num_channels: 10,
            request_rate: 0.09,
            library_size: 200,
            cache_size: 10,
            zipf_exponent: 1.0,
            window_side: 8000.0,
            seed: 1,
        };
        cfg.sense_threshold = calibrated_sense_threshold(&cfg);
        cfg
    }

    /// Same network with caching disabled.
    pub fn baseline(&self) -> Self {
        ScenarioConfig {
            alpha: 0.0,
            ..self.clone()
        }
    }

    /// Offered load, in requests per slot, at which a node saturates.
    pub fn saturation_users(&self) -> f64 {
        self.num_channels as f64 / self.request_rate
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_kv_str(&text)
    }

    /// Parses `key = value` lines. Keys match the field names; the powers and
    /// the sensing threshold may be given in dBm through a `_dbm` suffix.
    /// Omitted keys keep their [`reference_defaults`](Self::reference_defaults)
    /// value, except the sensing threshold which, when omitted, is
    /// recalibrated from the final parameters.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut cfg = Self::reference_defaults();
        if !cfg.apply_kv(text)? {
            cfg.sense_threshold = calibrated_sense_threshold(&cfg);
        }
        Ok(cfg)
    }

    /// Applies `key = value` lines on top of `self`; returns whether the
    /// sensing threshold was among them.
    fn apply_kv(&mut self, text: &str) -> Result<bool> {
        let cfg = self;
        let mut seen: Vec<&str> = Vec::new();
        let mut threshold_given = false;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: line_no,
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = key.trim();
            let value = value.trim();
            let canonical = key.strip_suffix("_dbm").unwrap_or(key);
            if seen.contains(&canonical) {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("duplicate key `{canonical}`"),
                });
            }
            let float = || -> Result<f64> {
                value.parse::<f64>().map_err(|e| Error::Parse {
                    line: line_no,
                    msg: format!("`{key}`: {e}"),
                })
            };
            let int = || -> Result<u64> {
                value.parse::<u64>().map_err(|e| Error::Parse {
                    line: line_no,
                    msg: format!("`{key}`: {e}"),
                })
            };
            match key {
                "lambda_user" => cfg.lambda_user = float()?,
                "lambda_bs" => cfg.lambda_bs = float()?,
                "alpha" => cfg.alpha = float()?,
                "power_d2d" => cfg.power_d2d = float()?,
                "power_d2d_dbm" => cfg.power_d2d = dbm_to_watts(float()?),
                "power_bs" => cfg.power_bs = float()?,
                "power_bs_dbm" => cfg.power_bs = dbm_to_watts(float()?),
                "pathloss" => cfg.pathloss = float()?,
                "sense_threshold" => {
                    cfg.sense_threshold = float()?;
                    threshold_given = true;
                }
                "sense_threshold_dbm" => {
                    cfg.sense_threshold = dbm_to_watts(float()?);
                    threshold_given = true;
                }
                "fading_rate" => cfg.fading_rate = float()?,
                "num_channels" => cfg.num_channels = int()? as usize,
                "request_rate" => cfg.request_rate = float()?,
                "library_size" => cfg.library_size = int()? as usize,
                "cache_size" => cfg.cache_size = int()? as usize,
                "zipf_exponent" => cfg.zipf_exponent = float()?,
                "window_side" => cfg.window_side = float()?,
                "seed" => cfg.seed = int()?,
                _ => {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: format!("unknown key `{key}`"),
                    })
                }
            }
            seen.push(canonical);
        }
        Ok(threshold_given)
    }

    /// Serializes every field in linear units; parsing the output yields an
    /// identical config.
    pub fn to_kv_string(&self) -> String {
        format!(
            "lambda_user = {}\nlambda_bs = {}\nalpha = {}\npower_d2d = {}\npower_bs = {}\n\
             pathloss = {}\nsense_threshold = {}\nfading_rate = {}\nnum_channels = {}\n\
             request_rate = {}\nlibrary_size = {}\ncache_size = {}\nzipf_exponent = {}\n\
             window_side = {}\nseed = {}\n",
            self.lambda_user,
            self.lambda_bs,
            self.alpha,
            self.power_d2d,
            self.power_bs,
            self.pathloss,
            self.sense_threshold,
            self.fading_rate,
            self.num_channels,
            self.request_rate,
            self.library_size,
            self.cache_size,
            self.zipf_exponent,
            self.window_side,
            self.seed
        )
    }

    /// Sets a field by name from its textual value (used by parameter sweeps).
    pub fn set_param(&mut self, name: &str, value: &str) -> Result<()> {
        let mut next = self.clone();
        next.apply_kv(&format!("{name} = {value}"))?;
        *self = next;
        Ok(())
    }
}

/// Sensing threshold at which a D2D transmitter senses on average exactly one
/// BS: `gamma = P_bs / mu * (pi * lambda_bs * Gamma(1 + 2/beta))^(beta/2)`.
pub fn calibrated_sense_threshold(cfg: &ScenarioConfig) -> f64 {
    let delta = 2.0 / cfg.pathloss;
    let area_factor =
        std::f64::consts::PI * cfg.lambda_bs * statrs::function::gamma::gamma(1.0 + delta);
    cfg.power_bs / cfg.fading_rate * area_factor.powf(1.0 / delta)
}

/// Zipf popularity of the content with rank `rank` (1-based).
pub fn zipf_pmf(rank: usize, nu: f64, n_lib: usize) -> Result<f64> {
    if n_lib == 0 || rank == 0 || rank > n_lib {
        return Err(Error::Domain(format!(
            "content rank {rank} outside 1..={n_lib}"
        )));
    }
    if !(nu >= 0.0) {
        return Err(Error::Domain(format!("negative Zipf exponent {nu}")));
    }
    Ok((rank as f64).powf(-nu) / zipf_normalizer(nu, n_lib))
}

fn zipf_normalizer(nu: f64, n_lib: usize) -> f64 {
    // Smallest terms first.
    neumaier_sum((1..=n_lib).rev().map(|j| (j as f64).powf(-nu)))
}

/// Probability that a request hits one of the `m` most popular contents.
/// `m = 0` gives 0 and `m = n_lib` gives 1.
pub fn cache_hit_prob(m: usize, nu: f64, n_lib: usize) -> Result<f64> {
    if m > n_lib {
        return Err(Error::Domain(format!(
            "cache size {m} exceeds the library size {n_lib}"
        )));
    }
    if m == n_lib {
        return Ok(1.0);
    }
    Ok(ZipfLaw::new(nu, n_lib)?.cache_hit(m))
}

/// Tabulated Zipf law over a fixed library, used for sampling request ranks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZipfLaw {
    pmf: Vec<f64>,
    cdf: Vec<f64>,
}

impl ZipfLaw {
    pub fn new(nu: f64, n_lib: usize) -> Result<Self> {
        if n_lib == 0 {
            return Err(Error::Domain("empty content library".into()));
        }
        if !(nu >= 0.0) {
            return Err(Error::Domain(format!("negative Zipf exponent {nu}")));
        }
        let norm = zipf_normalizer(nu, n_lib);
        let pmf: Vec<f64> = (1..=n_lib).map(|i| (i as f64).powf(-nu) / norm).collect();
        let mut cdf = Vec::with_capacity(n_lib);
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for &p in &pmf {
            let t = sum + p;
            if sum.abs() >= p.abs() {
                comp += (sum - t) + p;
            } else {
                comp += (p - t) + sum;
            }
            sum = t;
            cdf.push(sum + comp);
        }
        Ok(ZipfLaw { pmf, cdf })
    }

    pub fn len(&self) -> usize {
        self.pmf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pmf.is_empty()
    }

    /// Popularity of rank `rank` (1-based).
    pub fn pmf(&self, rank: usize) -> f64 {
        self.pmf[rank - 1]
    }

    pub fn cache_hit(&self, m: usize) -> f64 {
        match m {
            0 => 0.0,
            m if m >= self.pmf.len() => 1.0,
            m => self.cdf[m - 1],
        }
    }

    /// Draws a 1-based content rank.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let idx = self.cdf.partition_point(|&c| c <= u);
        idx.min(self.pmf.len() - 1) + 1
    }
}

/// One violated configuration invariant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ConfigViolation {
    NonPositive(&'static str),
    BsDenserThanUsers,
    AlphaOutOfRange,
    CacheSize,
    Pathloss,
    StabilityImpossible,
}

impl fmt::Display for ConfigViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigViolation::NonPositive(field) => write!(f, "{field} must be strictly positive"),
            ConfigViolation::BsDenserThanUsers => {
                write!(f, "lambda_user must be at least lambda_bs")
            }
            ConfigViolation::AlphaOutOfRange => write!(f, "alpha must lie in [0, 1]"),
            ConfigViolation::CacheSize => {
                write!(f, "cache_size must satisfy 1 <= cache_size < library_size")
            }
            ConfigViolation::Pathloss => write!(f, "pathloss must be at least 2"),
            ConfigViolation::StabilityImpossible => write!(
                f,
                "stability impossible: request_rate must be below num_channels"
            ),
        }
    }
}

/// Checks every config invariant and returns the config unchanged, or the
/// complete list of violations.
pub fn validate_config(
    cfg: ScenarioConfig,
) -> std::result::Result<ScenarioConfig, Vec<ConfigViolation>> {
    let mut violations = Vec::new();
    let positive = [
        ("lambda_user", cfg.lambda_user),
        ("lambda_bs", cfg.lambda_bs),
        ("power_d2d", cfg.power_d2d),
        ("power_bs", cfg.power_bs),
        ("sense_threshold", cfg.sense_threshold),
        ("fading_rate", cfg.fading_rate),
        ("num_channels", cfg.num_channels as f64),
        ("request_rate", cfg.request_rate),
        ("library_size", cfg.library_size as f64),
        ("window_side", cfg.window_side),
    ];
    for (name, v) in positive {
        // NaN fails this comparison too.
        if !(v > 0.0) || !v.is_finite() {
            violations.push(ConfigViolation::NonPositive(name));
        }
    }
    if cfg.lambda_user < cfg.lambda_bs {
        violations.push(ConfigViolation::BsDenserThanUsers);
    }
    if !(0.0..=1.0).contains(&cfg.alpha) {
        violations.push(ConfigViolation::AlphaOutOfRange);
    }
    if cfg.cache_size < 1 || cfg.cache_size >= cfg.library_size {
        violations.push(ConfigViolation::CacheSize);
    }
    if !(cfg.pathloss >= 2.0) {
        violations.push(ConfigViolation::Pathloss);
    }
    if !(cfg.zipf_exponent >= 0.0) {
        violations.push(ConfigViolation::NonPositive("zipf_exponent"));
    }
    if cfg.request_rate >= cfg.num_channels as f64 {
        violations.push(ConfigViolation::StabilityImpossible);
    }
    if violations.is_empty() {
        Ok(cfg)
    } else {
        Err(violations)
    }
}

/// Same as [`validate_config`] but folded into the crate error type.
pub fn validated(cfg: &ScenarioConfig) -> Result<ScenarioConfig> {
    validate_config(cfg.clone()).map_err(Error::InvalidConfig)
}

/// Soft assumptions that are reported but not rejected.
pub fn config_warnings(cfg: &ScenarioConfig) -> Vec<String> {
    let mut out = Vec::new();
    if cfg.lambda_user < 10.0 * cfg.lambda_bs {
        out.push(format!(
            "lambda_user ({:e}) is less than ten times lambda_bs ({:e}); the dense-user assumption is weak",
            cfg.lambda_user, cfg.lambda_bs
        ));
    }
    let spacing = 1.0 / cfg.lambda_bs.sqrt();
    if cfg.window_side < 8.0 * spacing {
        out.push(format!(
            "window_side {} m is below eight mean BS spacings ({:.0} m); edge effects and few BSs per run",
            cfg.window_side,
            8.0 * spacing
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn harmonic(n: usize) -> f64 {
        neumaier_sum((1..=n).rev().map(|j| 1.0 / j as f64))
    }

    #[test]
    fn zipf_uniform_when_flat() {
        for i in [1, 17, 200] {
            assert!((zipf_pmf(i, 0.0, 200).unwrap() - 0.005).abs() < 1e-15);
        }
    }

    #[test]
    fn zipf_two_content_case() {
        assert!((zipf_pmf(1, 1.0, 2).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn zipf_top_rank_is_inverse_harmonic() {
        let h200 = harmonic(200);
        assert!((zipf_pmf(1, 1.0, 200).unwrap() - 1.0 / h200).abs() < 1e-15);
        // frozen from the direct sum H_200 = 5.878030948121446
        assert!((h200 - 5.878_030_948_121_446).abs() < 1e-12);
    }

    #[test]
    fn zipf_rank_out_of_range() {
        assert!(zipf_pmf(0, 1.0, 10).is_err());
        assert!(zipf_pmf(11, 1.0, 10).is_err());
    }

    #[test]
    fn cache_hit_examples() {
        assert_eq!(cache_hit_prob(200, 0.7, 200).unwrap(), 1.0);
        assert!((cache_hit_prob(1, 0.0, 200).unwrap() - 0.005).abs() < 1e-15);
        let expected = harmonic(10) / harmonic(200);
        let got = cache_hit_prob(10, 1.0, 200).unwrap();
        assert!((got - expected).abs() < 1e-14);
        assert!((got - 0.498).abs() < 5e-4);
        assert!(cache_hit_prob(201, 1.0, 200).is_err());
    }

    #[test]
    fn zipf_sums_to_one_for_large_libraries() {
        for nu in [0.0, 0.5, 1.0, 2.0] {
            for n in [1usize, 10, 1000, 1_000_000] {
                let law = ZipfLaw::new(nu, n).unwrap();
                let total = neumaier_sum((1..=n).map(|i| law.pmf(i)));
                assert!((total - 1.0).abs() < 1e-12, "nu={nu} n={n} total={total}");
            }
        }
    }

    #[test]
    fn sampling_hits_top_ranks_at_the_zipf_rate() {
        use rand::SeedableRng;
        let law = ZipfLaw::new(1.0, 200).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = 200_000;
        let hits = (0..n).filter(|_| law.sample(&mut rng) <= 10).count();
        let p = hits as f64 / n as f64;
        assert!((p - law.cache_hit(10)).abs() < 0.005, "{p}");
    }

    #[test]
    fn baseline_alpha_is_valid() {
        let cfg = ScenarioConfig::reference_defaults().baseline();
        assert!(validate_config(cfg).is_ok());
    }

    #[test]
    fn request_rate_at_channel_count_is_rejected() {
        let mut cfg = ScenarioConfig::reference_defaults();
        cfg.request_rate = cfg.num_channels as f64;
        let errs = validate_config(cfg).unwrap_err();
        assert_eq!(errs, vec![ConfigViolation::StabilityImpossible]);
        assert!(errs[0].to_string().contains("stability impossible"));
    }

    #[test]
    fn full_cache_is_rejected() {
        let mut cfg = ScenarioConfig::reference_defaults();
        cfg.cache_size = cfg.library_size;
        assert_eq!(
            validate_config(cfg).unwrap_err(),
            vec![ConfigViolation::CacheSize]
        );
    }

    #[test]
    fn all_violations_are_reported() {
        let mut cfg = ScenarioConfig::reference_defaults();
        cfg.alpha = 1.5;
        cfg.pathloss = 1.0;
        cfg.power_bs = -1.0;
        cfg.lambda_bs = cfg.lambda_user * 2.0;
        let errs = validate_config(cfg).unwrap_err();
        assert_eq!(errs.len(), 4, "{errs:?}");
    }

    #[test]
    fn defaults_match_reference_setup() {
        let cfg = ScenarioConfig::reference_defaults();
        assert!((watts_to_dbm(cfg.power_d2d) - 23.0).abs() < 1e-12);
        assert!((watts_to_dbm(cfg.power_bs) - 43.0).abs() < 1e-12);
        assert!((cfg.lambda_user / cfg.lambda_bs - 100.0).abs() < 1e-9);
        assert!(config_warnings(&cfg).is_empty());
    }

    #[test]
    fn kv_round_trip_and_dbm_keys() {
        let cfg = ScenarioConfig::reference_defaults();
        let back = ScenarioConfig::from_kv_str(&cfg.to_kv_string()).unwrap();
        assert_eq!(cfg, back);

        let parsed = ScenarioConfig::from_kv_str(
            "# comment\npower_bs_dbm = 40\nalpha = 0.25 # trailing\n\nseed = 9\n",
        )
        .unwrap();
        assert!((parsed.power_bs - 10.0).abs() < 1e-12);
        assert_eq!(parsed.alpha, 0.25);
        assert_eq!(parsed.seed, 9);
        // threshold recalibrated for the new BS power
        assert!((parsed.sense_threshold - calibrated_sense_threshold(&parsed)).abs() < 1e-30);
    }

    #[test]
    fn kv_errors() {
        assert!(matches!(
            ScenarioConfig::from_kv_str("bogus = 1"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(ScenarioConfig::from_kv_str("alpha 0.3").is_err());
        assert!(ScenarioConfig::from_kv_str("alpha = x").is_err());
        assert!(ScenarioConfig::from_kv_str("power_bs = 1\npower_bs_dbm = 30").is_err());
    }

    #[test]
    fn set_param_overrides_one_field() {
        let mut cfg = ScenarioConfig::reference_defaults();
        let before = cfg.clone();
        cfg.set_param("request_rate", "0.12").unwrap();
        assert_eq!(cfg.request_rate, 0.12);
        assert_eq!(cfg.sense_threshold, before.sense_threshold);
        assert!(cfg.set_param("nonsense", "1").is_err());
    }

    proptest::proptest! {
        #[test]
        fn cache_hit_increments_are_zipf_masses(m in 1usize..200, nu in 0.0f64..3.0) {
            let a = cache_hit_prob(m, nu, 200).unwrap();
            let b = cache_hit_prob(m - 1, nu, 200).unwrap();
            let f = zipf_pmf(m, nu, 200).unwrap();
            proptest::prop_assert!((a - b - f).abs() < 1e-12);
        }

        #[test]
        fn validation_is_idempotent(alpha in -0.5f64..1.5, rate in 0.01f64..12.0, m in 0usize..250) {
            let mut cfg = ScenarioConfig::reference_defaults();
            cfg.alpha = alpha;
            cfg.request_rate = rate;
            cfg.cache_size = m;
            if let Ok(v) = validate_config(cfg.clone()) {
                proptest::prop_assert_eq!(&v, &cfg);
                proptest::prop_assert_eq!(validate_config(v.clone()).unwrap(), v);
            }
        }
    }
}
