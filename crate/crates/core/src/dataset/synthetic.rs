//! Seeded generator for irregular, asynchronous, sparse deterioration records.
//!
//! Each location carries a monotone deterioration curve whose starting level,
//! growth rate and pavement age come from spatially smooth random fields
//! (random Fourier features approximating a squared-exponential Gaussian
//! process). Repairs arrive as maintenance campaigns that resurface every
//! location within a radius at nearly the same time, so nearby recent
//! observations carry information about a location's current state. Locations
//! come in small clusters, each a road segment whose locations share pavement
//! age and repair history. Growth is faster where local rainfall is heavier,
//! which makes `precipitation` the planted driver feature; `cloud` is pure
//! noise. Visits follow a renewal process with
//! log-normal gaps, warped through a seasonal inspection intensity so the
//! pooled timestamp histogram is far from uniform.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, LogNormal, Normal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::{DatasetError, DistressType, EnvFeature, RawRecord};

const EARTH_RADIUS_M: f64 = 6_371_000.0;
const RFF_FEATURES: usize = 256;
const YEAR: f64 = 365.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_locations: usize,
    /// Exact row count; visit counts are trimmed or topped up to match.
    pub n_records: Option<usize>,
    pub origin_lon: f64,
    pub origin_lat: f64,
    /// Side of the square area, degrees.
    pub extent_deg: f64,
    pub mean_visits: f64,
    /// First day of the observation window, days since epoch.
    pub start_day: f64,
    pub time_span_days: f64,
    /// Spatial length scale of the latent fields, meters.
    pub space_length_m: f64,
    /// Temporal length scale of the weather anomalies, days.
    pub time_length_days: f64,
    /// Std of additive observation noise on `detect_info`.
    pub noise: f64,
    /// Expected repairs per location per year.
    pub reset_rate: f64,
    /// Mean radius of a maintenance campaign, meters.
    pub campaign_radius_m: f64,
    /// Spatial length scale of the pavement age field, meters.
    pub age_length_m: f64,
    /// Per-location spread of pavement age around the field value, days.
    pub age_jitter_days: f64,
    /// Locations per road segment.
    pub cluster_size: usize,
    /// Spread of locations around their segment center, meters.
    pub cluster_radius_m: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_locations: 400,
            n_records: Some(2000),
            origin_lon: 121.40,
            origin_lat: 31.20,
            extent_deg: 0.08,
            mean_visits: 5.0,
            start_day: 19_000.0,
            time_span_days: 365.0,
            space_length_m: 1500.0,
            time_length_days: 45.0,
            noise: 0.1,
            reset_rate: 0.3,
            campaign_radius_m: 300.0,
            age_length_m: 600.0,
            age_jitter_days: 40.0,
            cluster_size: 4,
            cluster_radius_m: 120.0,
            seed: 7,
        }
    }
}

impl SyntheticConfig {
    /// Environmental column that drives deterioration speed.
    pub const DRIVER: EnvFeature = EnvFeature::Precipitation;
    /// Environmental column that is independent noise.
    pub const NOISE: EnvFeature = EnvFeature::Cloud;

    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |m: &str| Err(DatasetError::Config(m.to_string()));
        if self.n_locations == 0 {
            return bad("n_locations must be positive");
        }
        if self.n_records == Some(0) {
            return bad("n_records must be positive");
        }
        if self.cluster_size == 0 {
            return bad("cluster_size must be positive");
        }
        if !(self.mean_visits >= 1.0) {
            return bad("mean_visits must be >= 1");
        }
        for (name, v) in [
            ("extent_deg", self.extent_deg),
            ("time_span_days", self.time_span_days),
            ("space_length_m", self.space_length_m),
            ("time_length_days", self.time_length_days),
            ("campaign_radius_m", self.campaign_radius_m),
            ("age_length_m", self.age_length_m),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(&format!("{name} must be positive"));
            }
        }
        if [self.noise, self.reset_rate, self.cluster_radius_m, self.age_jitter_days].iter().any(|v| !(*v >= 0.0)) {
            return bad("noise, reset_rate, cluster_radius_m and age_jitter_days must be non-negative");
        }
        Ok(())
    }
}

/// Random Fourier feature approximation of a unit-variance squared-exponential field.
#[derive(Clone, Debug)]
pub struct LatentField {
    freqs: Vec<Vec<f64>>,
    phases: Vec<f64>,
}

impl LatentField {
    pub fn new<R: Rng + ?Sized>(length_scales: &[f64], rng: &mut R) -> Self {
        let std = Normal::new(0.0, 1.0).expect("unit normal");
        let freqs = (0..RFF_FEATURES)
            .map(|_| length_scales.iter().map(|l| std.sample(rng) / l).collect())
            .collect();
        let phases = (0..RFF_FEATURES).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        Self { freqs, phases }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let norm = (2.0 / RFF_FEATURES as f64).sqrt();
        norm * self
            .freqs
            .iter()
            .zip(&self.phases)
            .map(|(w, b)| (w.iter().zip(x).map(|(a, c)| a * c).sum::<f64>() + b).cos())
            .sum::<f64>()
    }
}

/// Pavement age and repair times shared by the locations of one road segment.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    life_start: f64,
    resets: Vec<f64>,
}

/// Per-location state.
#[derive(Clone, Debug)]
pub struct Site {
    pub lon: f64,
    pub lat: f64,
    base: f64,
    rate: f64,
    rain_level: f64,
    life_start: f64,
    resets: Vec<f64>,
    distress_type: DistressType,
}

/// The fields shared by every location in one generated dataset.
#[derive(Clone, Debug)]
pub struct SyntheticWorld {
    config: SyntheticConfig,
    base: LatentField,
    rate: LatentField,
    rain: LatentField,
    kind: LatentField,
    age: LatentField,
    weather: Vec<LatentField>,
    campaigns: Vec<Campaign>,
    rain_phase: f64,
}

/// A resurfacing event covering a disc.
#[derive(Clone, Copy, Debug)]
struct Campaign {
    center: [f64; 2],
    radius: f64,
    t: f64,
}

/// How far before the observation window pavement lives may start, days.
const MAX_AGE_DAYS: f64 = 400.0;

fn season(t: f64) -> f64 {
    (2.0 * PI * (t - 100.0) / YEAR).sin()
}

impl Site {
    /// Repair times, ascending.
    pub fn resets(&self) -> &[f64] {
        &self.resets
    }
}

impl SyntheticWorld {
    pub fn new<R: Rng + ?Sized>(config: &SyntheticConfig, rng: &mut R) -> Self {
        let ls = config.space_length_m;
        let st = [ls, ls, config.time_length_days];
        let la = config.age_length_m;
        let base = LatentField::new(&[ls, ls], rng);
        let rate = LatentField::new(&[ls, ls], rng);
        let rain = LatentField::new(&[ls, ls], rng);
        let kind = LatentField::new(&[ls, ls], rng);
        let age = LatentField::new(&[la, la], rng);
        let weather = (0..8).map(|_| LatentField::new(&st, rng)).collect();
        let rain_phase = rng.random_range(0.0..2.0 * PI);

        // campaign count gives roughly `reset_rate` repairs per location-year
        let side = config.extent_deg.to_radians() * EARTH_RADIUS_M;
        let (t0, t1) = (config.start_day - MAX_AGE_DAYS, config.start_day + config.time_span_days);
        let r = config.campaign_radius_m;
        let expected = config.reset_rate * (t1 - t0) / YEAR * side * side / (PI * r * r);
        let mut campaigns = Vec::new();
        if expected > 0.0 {
            let count = rand_distr::Poisson::new(expected).expect("positive mean").sample(rng) as usize;
            for _ in 0..count {
                campaigns.push(Campaign {
                    center: [rng.random_range(0.0..side), rng.random_range(0.0..side)],
                    radius: r * rng.random_range(0.7..1.3),
                    t: rng.random_range(t0..t1),
                });
            }
        }
        Self { config: config.clone(), base, rate, rain, kind, age, weather, campaigns, rain_phase }
    }

    /// Local east/north offsets from the origin, meters.
    pub fn to_meters(&self, lon: f64, lat: f64) -> [f64; 2] {
        let c = self.config.origin_lat.to_radians().cos();
        [
            (lon - self.config.origin_lon).to_radians() * EARTH_RADIUS_M * c,
            (lat - self.config.origin_lat).to_radians() * EARTH_RADIUS_M,
        ]
    }

    /// Age and repair history of a road segment centered at `(lon, lat)`.
    pub fn segment<R: Rng + ?Sized>(&self, lon: f64, lat: f64, rng: &mut R) -> Segment {
        let c = &self.config;
        let xy = self.to_meters(lon, lat);
        let age_u = statrs::function::erf::erfc(-self.age.eval(&xy) / std::f64::consts::SQRT_2) / 2.0;
        let jitter = c.age_jitter_days * rng.random_range(0.0..1.0);
        let life_start = c.start_day - (MAX_AGE_DAYS - c.age_jitter_days).max(0.0) * age_u - jitter;
        let mut resets: Vec<f64> = self
            .campaigns
            .iter()
            .filter(|cp| {
                let d = ((cp.center[0] - xy[0]).powi(2) + (cp.center[1] - xy[1]).powi(2)).sqrt();
                d <= cp.radius && cp.t > life_start
            })
            // crews reach each segment within a few days of the campaign start
            .map(|cp| cp.t + rng.random_range(0.0..7.0))
            .filter(|&t| t < c.start_day + c.time_span_days)
            .collect();
        resets.sort_by(f64::total_cmp);
        Segment { life_start, resets }
    }

    /// A location on `segment`; level and growth rate follow the local fields.
    pub fn site(&self, lon: f64, lat: f64, segment: &Segment) -> Site {
        let xy = self.to_meters(lon, lat);
        let rain_level = (0.5 * self.rain.eval(&xy)).exp();
        let k = self.kind.eval(&xy);
        let distress_type = match k {
            k if k < -1.0 => DistressType::PatchPothole,
            k if k < -0.4 => DistressType::Pothole,
            k if k < 0.2 => DistressType::Crack,
            k if k < 0.9 => DistressType::NetCrack,
            _ => DistressType::PatchCrack,
        };
        Site {
            lon,
            lat,
            base: 0.6 * (0.6 * self.base.eval(&xy)).exp(),
            rate: 0.011 * (0.4 * self.rate.eval(&xy)).exp() * (0.4 + 0.6 * rain_level),
            rain_level,
            life_start: segment.life_start,
            resets: segment.resets.clone(),
            distress_type,
        }
    }

    /// Seasonal rainfall multiplier, always in `[0.2, 1.8]`.
    fn rain_season(&self, t: f64) -> f64 {
        1.0 + 0.8 * (2.0 * PI * t / YEAR + self.rain_phase).sin()
    }

    /// `∫ (1 + 0.5 * level * rain_season(s)) ds` from 0 to `t`, in closed form.
    fn exposure(&self, level: f64, t: f64) -> f64 {
        let w = 2.0 * PI / YEAR;
        t + 0.5 * level * (t - 0.8 / w * (w * t + self.rain_phase).cos())
    }

    /// Noise-free deterioration value.
    pub fn latent_value(&self, site: &Site, t: f64) -> f64 {
        let last = site.resets.iter().rev().find(|&&r| r <= t).copied();
        let (origin, start_value) = match last {
            Some(r) => (r, 0.3 * site.base),
            None => (site.life_start, site.base),
        };
        let grown = self.exposure(site.rain_level, t) - self.exposure(site.rain_level, origin);
        start_value + site.rate * grown
    }

    pub fn observe<R: Rng + ?Sized>(&self, site: &Site, location_id: u64, t: f64, rng: &mut R) -> RawRecord {
        let noise = Normal::new(0.0, 1.0).expect("unit normal");
        let mut n = || noise.sample(rng);
        let xy = self.to_meters(site.lon, site.lat);
        let q = [xy[0], xy[1], t];
        let a: Vec<f64> = self.weather.iter().map(|f| f.eval(&q)).collect();
        let s = season(t);

        let mut env = [0.0; 8];
        env[EnvFeature::MinTem.index()] = 12.0 + 9.0 * s + 2.0 * a[0] + 0.8 * n();
        env[EnvFeature::MaxTem.index()] = env[EnvFeature::MinTem.index()] + 7.0 + 1.5 * a[1] + 0.8 * n();
        env[EnvFeature::Humidity.index()] = (70.0 + 12.0 * s + 6.0 * a[2] + 3.0 * n()).clamp(5.0, 100.0);
        env[EnvFeature::Wind.index()] = (3.0 + s + 0.8 * a[3] + 0.5 * n()).max(0.0);
        env[EnvFeature::Pressure.index()] = 1013.0 - 6.0 * s + 2.0 * a[4] + 0.5 * n();
        env[EnvFeature::Visibility.index()] = (14.0 - 4.0 * s + 3.0 * a[5] + 1.5 * n()).max(0.5);
        env[EnvFeature::Precipitation.index()] =
            (3.0 * site.rain_level * self.rain_season(t) + 0.5 * a[6] + 0.5 * n()).max(0.0);
        let cloud: f64 = rng.random_range(0.0..100.0);
        env[EnvFeature::Cloud.index()] = cloud;

        let value = self.latent_value(site, t);
        let noise_term = self.config.noise * noise.sample(rng);
        RawRecord {
            location_id,
            longitude_gcj: site.lon,
            latitude_gcj: site.lat,
            collect_time: t,
            env,
            detect_info: (value + noise_term).max(0.0),
            detect_conf: rng.random_range(0.55..0.99),
            distress_type: site.distress_type,
        }
    }

    /// Maps uniform operational time `u ∈ [0,1)` through the inverse CDF of a
    /// seasonal inspection intensity over the observation window.
    fn warp_time(&self, u: f64, cdf: &[f64]) -> f64 {
        let n = cdf.len() - 1;
        let k = cdf.partition_point(|&c| c < u).clamp(1, n);
        let (c0, c1) = (cdf[k - 1], cdf[k]);
        let frac = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
        self.config.start_day + self.config.time_span_days * ((k - 1) as f64 + frac) / n as f64
    }

    fn intensity_cdf(&self) -> Vec<f64> {
        const GRID: usize = 2000;
        let span = self.config.time_span_days;
        let lambda = |s: f64| 1.0 + 0.85 * (2.0 * PI * s * span / 120.0).sin();
        let mut cdf = vec![0.0; GRID + 1];
        for i in 1..=GRID {
            let mid = (i as f64 - 0.5) / GRID as f64;
            cdf[i] = cdf[i - 1] + lambda(mid);
        }
        let total = cdf[GRID];
        cdf.iter_mut().for_each(|c| *c /= total);
        cdf
    }
}

fn visit_counts<R: Rng + ?Sized>(config: &SyntheticConfig, rng: &mut R) -> Vec<usize> {
    let geo = Geometric::new(1.0 / config.mean_visits).expect("valid probability");
    let mut counts: Vec<usize> = (0..config.n_locations).map(|_| 1 + geo.sample(rng) as usize).collect();
    if let Some(target) = config.n_records {
        let n = counts.len();
        let mut total: usize = counts.iter().sum();
        while total > target {
            let i = rng.random_range(0..n);
            if counts[i] > 1 || total - target >= n {
                if counts[i] > 0 {
                    counts[i] -= 1;
                    total -= 1;
                }
            }
        }
        while total < target {
            // top up in proportion to the current count, keeping the tail heavy
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            let pick = if counts[i] >= counts[j] { i } else { j };
            counts[pick] += 1;
            total += 1;
        }
    }
    counts
}

/// Generates a time-sorted record list.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<Vec<RawRecord>, DatasetError> {
    generate_with_sites(config).map(|(records, _)| records)
}

/// Like [`generate_synthetic`], also returning each location's hidden state,
/// indexed by `location_id - 1`.
pub fn generate_with_sites(config: &SyntheticConfig) -> Result<(Vec<RawRecord>, Vec<Site>), DatasetError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let world = SyntheticWorld::new(config, &mut rng);
    let counts = visit_counts(config, &mut rng);
    let cdf = world.intensity_cdf();
    let gap_sigma = 1.1;

    let mut records = Vec::with_capacity(counts.iter().sum());
    let mut sites = Vec::with_capacity(counts.len());
    let jitter = Normal::new(0.0, config.cluster_radius_m / EARTH_RADIUS_M).expect("finite spread");
    let cos_lat = config.origin_lat.to_radians().cos();
    let mut center = (0.0, 0.0);
    let mut segment = None;
    for (loc, &count) in counts.iter().enumerate() {
        if loc % config.cluster_size == 0 {
            center = (
                config.origin_lon + rng.random_range(0.0..config.extent_deg),
                config.origin_lat + rng.random_range(0.0..config.extent_deg),
            );
            segment = Some(world.segment(center.0, center.1, &mut rng));
        }
        let lon = center.0 + jitter.sample(&mut rng).to_degrees() / cos_lat;
        let lat = center.1 + jitter.sample(&mut rng).to_degrees();
        let site = world.site(lon, lat, segment.as_ref().expect("set on the first location"));
        sites.push(site.clone());
        if count == 0 {
            continue;
        }
        let mean_gap = 1.0 / (count as f64 + 1.0);
        let gaps = LogNormal::new(mean_gap.ln() - gap_sigma * gap_sigma / 2.0, gap_sigma).expect("lognormal");
        let mut u: f64 = rng.random_range(0.0..1.0);
        let mut times = Vec::with_capacity(count);
        for _ in 0..count {
            times.push(world.warp_time(u.fract(), &cdf));
            u += gaps.sample(&mut rng);
        }
        times.sort_by(f64::total_cmp);
        for t in times {
            records.push(world.observe(&site, loc as u64 + 1, t, &mut rng));
        }
    }
    super::sort_records(&mut records);
    Ok((records, sites))
}

/// Summary statistics for the three data pathologies.
#[derive(Clone, Debug, Serialize)]
pub struct PathologyReport {
    /// p-value of a chi-square test of the pooled timestamp histogram against uniform.
    pub uniformity_p_value: f64,
    pub median_series_length: f64,
    /// Number of location pairs whose timestamp sets are disjoint.
    pub asynchronous_pairs: usize,
    pub n_locations: usize,
}

pub fn pathology_report(records: &[RawRecord], bins: usize) -> PathologyReport {
    let (lo, hi) = records
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| (a.min(r.collect_time), b.max(r.collect_time)));
    let mut hist = vec![0usize; bins];
    for r in records {
        let x = if hi > lo { (r.collect_time - lo) / (hi - lo) } else { 0.0 };
        hist[((x * bins as f64) as usize).min(bins - 1)] += 1;
    }
    let expected = records.len() as f64 / bins as f64;
    let chi2: f64 = hist.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
    let uniformity_p_value = ChiSquared::new((bins - 1) as f64).map(|d| d.sf(chi2)).unwrap_or(f64::NAN);

    let mut by_loc: std::collections::BTreeMap<u64, Vec<u64>> = Default::default();
    for r in records {
        by_loc.entry(r.location_id).or_default().push(r.collect_time.to_bits());
    }
    let mut lengths: Vec<usize> = by_loc.values().map(Vec::len).collect();
    lengths.sort_unstable();
    let median_series_length = match lengths.len() {
        0 => 0.0,
        n if n % 2 == 1 => lengths[n / 2] as f64,
        n => (lengths[n / 2 - 1] + lengths[n / 2]) as f64 / 2.0,
    };
    let sets: Vec<std::collections::HashSet<u64>> = by_loc.values().map(|v| v.iter().copied().collect()).collect();
    let mut asynchronous_pairs = 0;
    for i in 0..sets.len() {
        for j in i + 1..sets.len() {
            if sets[i].is_disjoint(&sets[j]) {
                asynchronous_pairs += 1;
            }
        }
    }
    PathologyReport { uniformity_p_value, median_series_length, asynchronous_pairs, n_locations: sets.len() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_is_bit_identical() {
        let cfg = SyntheticConfig { n_locations: 50, n_records: Some(200), ..Default::default() };
        let a = generate_synthetic(&cfg).unwrap();
        let b = generate_synthetic(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 200);
        let c = generate_synthetic(&SyntheticConfig { seed: 8, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_locations_rejected() {
        let cfg = SyntheticConfig { n_locations: 0, ..Default::default() };
        assert!(matches!(generate_synthetic(&cfg), Err(DatasetError::Config(_))));
    }

    #[test]
    fn records_satisfy_invariants() {
        let recs = generate_synthetic(&SyntheticConfig::default()).unwrap();
        assert_eq!(recs.len(), 2000);
        for r in &recs {
            r.validate().unwrap();
        }
        assert!(recs.windows(2).all(|w| w[0].collect_time <= w[1].collect_time));
    }

    #[test]
    fn noiseless_single_location_is_monotone_between_resets() {
        let cfg = SyntheticConfig {
            n_locations: 1,
            n_records: Some(300),
            noise: 0.0,
            reset_rate: 2.0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let world = SyntheticWorld::new(&cfg, &mut rng);
        let segment = world.segment(cfg.origin_lon, cfg.origin_lat, &mut rng);
        let site = world.site(cfg.origin_lon, cfg.origin_lat, &segment);
        assert!(!site.resets.is_empty());
        let mut prev: Option<f64> = None;
        let mut t = cfg.start_day;
        while t < cfg.start_day + cfg.time_span_days {
            let v = world.latent_value(&site, t);
            let crossed = site.resets.iter().any(|&r| r > t - 1.0 && r <= t);
            if let (Some(p), false) = (prev, crossed) {
                assert!(v >= p, "value dropped at t={t} without a reset");
            }
            prev = Some(v);
            t += 1.0;
        }

        let (recs, sites) = generate_with_sites(&cfg).unwrap();
        let site = &sites[0];
        for w in recs.windows(2) {
            let repaired = site.resets.iter().any(|&r| r > w[0].collect_time && r <= w[1].collect_time);
            if !repaired {
                assert!(w[1].detect_info >= w[0].detect_info);
            }
        }
    }

    fn correlation(pairs: &[(f64, f64)]) -> f64 {
        let n = pairs.len() as f64;
        let (ma, mb) = pairs.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0 / n, b + p.1 / n));
        let cov: f64 = pairs.iter().map(|p| (p.0 - ma) * (p.1 - mb)).sum();
        let va: f64 = pairs.iter().map(|p| (p.0 - ma).powi(2)).sum();
        let vb: f64 = pairs.iter().map(|p| (p.1 - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn spatial_correlation_decays_with_distance() {
        let cfg = SyntheticConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let world = SyntheticWorld::new(&cfg, &mut rng);
        let t = cfg.start_day + cfg.time_span_days / 2.0;
        let deg_per_m = 1.0 / (EARTH_RADIUS_M.to_radians());
        let far = 3.0 * cfg.space_length_m * deg_per_m;
        let mut near_pairs = Vec::new();
        let mut far_pairs = Vec::new();
        for _ in 0..10_000 {
            let lon = cfg.origin_lon + rng.random_range(0.0..0.5);
            let lat = cfg.origin_lat + rng.random_range(0.0..0.5);
            let near_segment = world.segment(lon, lat, &mut rng);
            let far_segment = world.segment(lon, lat + far, &mut rng);
            let a = world.site(lon, lat, &near_segment);
            let b = world.site(lon, lat, &near_segment);
            let c = world.site(lon, lat + far, &far_segment);
            let va = world.observe(&a, 1, t, &mut rng).detect_info;
            near_pairs.push((va, world.observe(&b, 2, t, &mut rng).detect_info));
            far_pairs.push((va, world.observe(&c, 3, t, &mut rng).detect_info));
        }
        let (near, far) = (correlation(&near_pairs), correlation(&far_pairs));
        assert!(near > far + 0.1, "near {near} far {far}");
    }

    #[test]
    fn default_config_shows_all_pathologies() {
        let recs = generate_synthetic(&SyntheticConfig::default()).unwrap();
        let rep = pathology_report(&recs, 20);
        assert!(rep.uniformity_p_value < 0.01, "{rep:?}");
        assert!(rep.median_series_length < 10.0, "{rep:?}");
        assert!(rep.asynchronous_pairs >= 1, "{rep:?}");
    }
}
