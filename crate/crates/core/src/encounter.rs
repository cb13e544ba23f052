//! Radio encounter models.
//!
//! Two users are considered to have met when either a Bluetooth beacon from
//! one is heard strongly enough by the other, or their WiFi scans of the
//! building access points are close enough. Each model also maps the raw
//! signal to a relative-distance estimate with a fitted regression, whose
//! held-out RMSE becomes the measurement variance fed to the filter.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Lowest and highest representable received signal strength, dBm.
pub const RSS_MIN: f64 = -120.0;
pub const RSS_MAX: f64 = 0.0;

/// Default number of strongest APs kept when comparing scans.
pub const DEFAULT_TOP_N: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum EncounterError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("model fit failed: {0}")]
    FitFailure(String),
    #[error("malformed record on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for EncounterError {
    fn from(e: std::io::Error) -> Self {
        EncounterError::Io(e.to_string())
    }
}

fn check_rss(rss: f64) -> Result<(), EncounterError> {
    if !(RSS_MIN..=RSS_MAX).contains(&rss) {
        return Err(EncounterError::InvalidInput(format!(
            "rss {rss} outside [{RSS_MIN}, {RSS_MAX}] dBm"
        )));
    }
    Ok(())
}

/// One signal strength reading from a known emitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RssSample {
    pub rss: f64,
    pub source_id: u32,
}

impl RssSample {
    pub fn new(rss: f64, source_id: u32) -> Result<Self, EncounterError> {
        check_rss(rss)?;
        Ok(Self { rss, source_id })
    }
}

/// A WiFi scan: access point id to RSS in dBm.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WifiScan {
    readings: BTreeMap<u32, f64>,
    pub timestamp: u64,
}

impl WifiScan {
    pub fn new(readings: BTreeMap<u32, f64>, timestamp: u64) -> Result<Self, EncounterError> {
        for &rss in readings.values() {
            check_rss(rss)?;
        }
        Ok(Self { readings, timestamp })
    }

    pub fn from_samples(samples: &[RssSample], timestamp: u64) -> Result<Self, EncounterError> {
        let mut readings = BTreeMap::new();
        for s in samples {
            if readings.insert(s.source_id, s.rss).is_some() {
                return Err(EncounterError::InvalidInput(format!(
                    "duplicate access point {} in scan",
                    s.source_id
                )));
            }
        }
        Self::new(readings, timestamp)
    }

    pub fn readings(&self) -> &BTreeMap<u32, f64> {
        &self.readings
    }

    pub fn len(&self) -> usize {
        self.readings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.readings.is_empty()
    }

    /// The `n` strongest readings. Ties are broken by ascending AP id.
    pub fn strongest(&self, n: usize) -> BTreeMap<u32, f64> {
        let mut v: Vec<(u32, f64)> = self.readings.iter().map(|(&k, &r)| (k, r)).collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        v.truncate(n);
        v.into_iter().collect()
    }
}

/// Scan dissimilarity: the Euclidean norm of the RSS difference over the
/// commonly heard APs (after keeping each scan's `top_n` strongest), divided
/// by the number of common APs. Smaller means closer. Returns `None` when the
/// restricted scans share no AP.
pub fn wifi_similarity(a: &WifiScan, b: &WifiScan, top_n: usize) -> Option<f64> {
    let top_n = top_n.max(1);
    let ra = a.strongest(top_n);
    let rb = b.strongest(top_n);
    let mut n = 0usize;
    let mut sq = 0.0;
    for (id, rss_a) in &ra {
        if let Some(rss_b) = rb.get(id) {
            n += 1;
            sq += (rss_a - rss_b).powi(2);
        }
    }
    if n == 0 {
        None
    } else {
        Some(sq.sqrt() / n as f64)
    }
}

/// WiFi encounter rule: the dissimilarity must not exceed the threshold.
pub fn detect_encounter_wifi(sim: Option<f64>, threshold: f64) -> bool {
    matches!(sim, Some(s) if s.is_finite() && s <= threshold)
}

/// Bluetooth encounter rule: inclusive RSS cut-off.
pub fn detect_encounter_bluetooth(rss: f64, threshold: f64) -> bool {
    rss >= threshold
}

/// Distance model `d = a·rss² + b·rss + c` for Bluetooth RSS.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticRssModel {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl QuadraticRssModel {
    pub fn eval_raw(&self, rss: f64) -> f64 {
        self.a * rss * rss + self.b * rss + self.c
    }
}

/// Distance model `d = alpha + beta·ln(sim)` for WiFi scan dissimilarity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogWifiModel {
    pub alpha: f64,
    pub beta: f64,
}

pub fn bluetooth_distance(rss: f64, model: &QuadraticRssModel) -> f64 {
    model.eval_raw(rss).max(0.0)
}

pub fn wifi_distance(sim: f64, model: &LogWifiModel) -> Result<f64, EncounterError> {
    if !(sim > 0.0) {
        return Err(EncounterError::InvalidInput(format!(
            "wifi similarity must be positive, got {sim}"
        )));
    }
    Ok((model.alpha + model.beta * sim.ln()).max(0.0))
}

/// Least-squares quadratic fit of distance against RSS.
///
/// The RSS axis is centred and scaled before solving so that coefficients
/// are recovered accurately even though `rss²` spans several thousand.
pub fn fit_quadratic_model(samples: &[(f64, f64)]) -> Result<QuadraticRssModel, EncounterError> {
    if samples.len() < 3 {
        return Err(EncounterError::FitFailure(format!(
            "need at least 3 samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|(r, d)| !r.is_finite() || !d.is_finite()) {
        return Err(EncounterError::InvalidInput("non-finite sample".into()));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().map(|s| s.0).sum::<f64>() / n;
    let scale = samples.iter().map(|s| (s.0 - mean).abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Err(EncounterError::FitFailure("all rss values identical".into()));
    }
    let x = DMatrix::from_fn(samples.len(), 3, |i, j| {
        let t = (samples[i].0 - mean) / scale;
        match j {
            0 => t * t,
            1 => t,
            _ => 1.0,
        }
    });
    let y = DVector::from_iterator(samples.len(), samples.iter().map(|s| s.1));
    let svd = x.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin <= smax * 1e-10 {
        return Err(EncounterError::FitFailure(
            "rank-deficient design (fewer than 3 distinct rss values)".into(),
        ));
    }
    let coef = svd
        .solve(&y, 0.0)
        .map_err(|e| EncounterError::FitFailure(e.to_string()))?;
    let (qa, qb, qc) = (coef[0], coef[1], coef[2]);
    let s2 = scale * scale;
    Ok(QuadraticRssModel {
        a: qa / s2,
        b: qb / scale - 2.0 * qa * mean / s2,
        c: qa * mean * mean / s2 - qb * mean / scale + qc,
    })
}

/// Least-squares fit of `d = alpha + beta·ln(sim)`.
pub fn fit_log_model(samples: &[(f64, f64)]) -> Result<LogWifiModel, EncounterError> {
    if let Some((s, _)) = samples.iter().find(|(s, _)| !(*s > 0.0)) {
        return Err(EncounterError::InvalidInput(format!(
            "similarity must be positive, got {s}"
        )));
    }
    if samples.len() < 2 {
        return Err(EncounterError::FitFailure(format!(
            "need at least 2 samples, got {}",
            samples.len()
        )));
    }
    let n = samples.len() as f64;
    let mx = samples.iter().map(|s| s.0.ln()).sum::<f64>() / n;
    let my = samples.iter().map(|s| s.1).sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (s, d) in samples {
        let dx = s.ln() - mx;
        sxx += dx * dx;
        sxy += dx * (d - my);
    }
    if sxx <= f64::EPSILON * n * (1.0 + mx * mx) {
        return Err(EncounterError::FitFailure(
            "degenerate design: all similarity values equal".into(),
        ));
    }
    let beta = sxy / sxx;
    Ok(LogWifiModel {
        alpha: my - beta * mx,
        beta,
    })
}

/// A fitted distance model of either kind, with its held-out RMSE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model_type", rename_all = "snake_case")]
pub enum DistanceModel {
    Quadratic { a: f64, b: f64, c: f64, rmse: f64 },
    Log { alpha: f64, beta: f64, rmse: f64 },
}

impl DistanceModel {
    pub fn quadratic(m: QuadraticRssModel, rmse: f64) -> Self {
        DistanceModel::Quadratic {
            a: m.a,
            b: m.b,
            c: m.c,
            rmse,
        }
    }

    pub fn log(m: LogWifiModel, rmse: f64) -> Self {
        DistanceModel::Log {
            alpha: m.alpha,
            beta: m.beta,
            rmse,
        }
    }

    pub fn rmse(&self) -> f64 {
        match *self {
            DistanceModel::Quadratic { rmse, .. } | DistanceModel::Log { rmse, .. } => rmse,
        }
    }

    /// Measurement variance used for encounters produced by this model.
    pub fn variance(&self) -> f64 {
        self.rmse().powi(2).max(1e-6)
    }

    /// Distance estimate for the model's native input (RSS or similarity).
    pub fn distance(&self, x: f64) -> Result<f64, EncounterError> {
        match *self {
            DistanceModel::Quadratic { a, b, c, .. } => Ok(bluetooth_distance(x, &QuadraticRssModel { a, b, c })),
            DistanceModel::Log { alpha, beta, .. } => wifi_distance(x, &LogWifiModel { alpha, beta }),
        }
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("model serializes")
    }

    pub fn from_text(s: &str) -> Result<Self, EncounterError> {
        toml::from_str(s).map_err(|e| EncounterError::Parse {
            line: e.span().map(|sp| s[..sp.start].lines().count().max(1)).unwrap_or(0),
            msg: e.message().to_string(),
        })
    }
}

/// Root-mean-square error of a model over `(input, true_distance)` pairs.
pub fn model_rmse(model: &DistanceModel, samples: &[(f64, f64)]) -> Result<f64, EncounterError> {
    if samples.is_empty() {
        return Err(EncounterError::InvalidInput("no samples".into()));
    }
    let mut sq = 0.0;
    for &(x, d) in samples {
        sq += (model.distance(x)? - d).powi(2);
    }
    Ok((sq / samples.len() as f64).sqrt())
}

/// Which radio produced an encounter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncounterSource {
    Bluetooth,
    Wifi,
}

impl fmt::Display for EncounterSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EncounterSource::Bluetooth => f.write_str("bluetooth"),
            EncounterSource::Wifi => f.write_str("wifi"),
        }
    }
}

impl FromStr for EncounterSource {
    type Err = EncounterError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bluetooth" => Ok(EncounterSource::Bluetooth),
            "wifi" => Ok(EncounterSource::Wifi),
            other => Err(EncounterError::InvalidInput(format!("unknown source {other:?}"))),
        }
    }
}

/// Relative-distance measurement between two users.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncounterObservation {
    pub user_a: usize,
    pub user_b: usize,
    pub z: f64,
    pub r_var: f64,
    pub source: EncounterSource,
    pub timestamp: u64,
}

impl EncounterObservation {
    pub fn new(
        user_a: usize,
        user_b: usize,
        z: f64,
        r_var: f64,
        source: EncounterSource,
        timestamp: u64,
    ) -> Result<Self, EncounterError> {
        if user_a == user_b {
            return Err(EncounterError::InvalidInput("user cannot encounter itself".into()));
        }
        if !(z >= 0.0) || !z.is_finite() {
            return Err(EncounterError::InvalidInput(format!("distance {z} must be >= 0")));
        }
        if !(r_var > 0.0) || !r_var.is_finite() {
            return Err(EncounterError::InvalidInput(format!("variance {r_var} must be > 0")));
        }
        Ok(Self {
            user_a,
            user_b,
            z,
            r_var,
            source,
            timestamp,
        })
    }
}

/// Writes calibration samples as `rss_or_sim,true_distance_m` lines.
pub fn write_calibration<W: Write>(mut w: W, samples: &[(f64, f64)]) -> Result<(), EncounterError> {
    writeln!(w, "rss_or_sim,true_distance_m")?;
    for (x, d) in samples {
        writeln!(w, "{x},{d}")?;
    }
    Ok(())
}

/// Reads calibration samples. A non-numeric first line is treated as a header;
/// blank lines and `#` comments are skipped.
pub fn read_calibration<R: BufRead>(r: R) -> Result<Vec<(f64, f64)>, EncounterError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = t.split(',').map(str::trim).collect();
        if fields.len() != 2 {
            return Err(EncounterError::Parse {
                line: i + 1,
                msg: format!("expected 2 fields, found {}", fields.len()),
            });
        }
        match (fields[0].parse::<f64>(), fields[1].parse::<f64>()) {
            (Ok(x), Ok(d)) => out.push((x, d)),
            _ if i == 0 => continue,
            _ => {
                return Err(EncounterError::Parse {
                    line: i + 1,
                    msg: format!("non-numeric field in {t:?}"),
                })
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scan(pairs: &[(u32, f64)]) -> WifiScan {
        WifiScan::new(pairs.iter().copied().collect(), 0).unwrap()
    }

    #[test]
    fn similarity_examples() {
        let a = scan(&[(1, -50.0), (2, -60.0)]);
        let b = scan(&[(1, -53.0), (2, -64.0)]);
        assert_eq!(wifi_similarity(&a, &a, 5), Some(0.0));
        assert_relative_eq!(wifi_similarity(&a, &b, 2).unwrap(), 2.5, epsilon = 1e-12);
        assert_relative_eq!(wifi_similarity(&a, &b, 5).unwrap(), 2.5, epsilon = 1e-12);
        let c = scan(&[(7, -40.0)]);
        assert_eq!(wifi_similarity(&a, &c, 5), None);
        assert_eq!(wifi_similarity(&a, &WifiScan::default(), 5), None);
    }

    #[test]
    fn top_n_restriction_drops_weak_aps() {
        // AP 3 is common but is not among the two strongest of `a`.
        let a = scan(&[(1, -40.0), (2, -45.0), (3, -90.0)]);
        let b = scan(&[(3, -30.0), (1, -44.0), (2, -45.0)]);
        let s = wifi_similarity(&a, &b, 2).unwrap();
        // top-2 of a = {1,2}, top-2 of b = {3,1}; common = {1}
        assert_relative_eq!(s, 4.0, epsilon = 1e-12);
    }

    #[test]
    fn detection_rules() {
        assert!(detect_encounter_wifi(Some(2.5), 8.0));
        assert!(detect_encounter_wifi(Some(8.0), 8.0));
        assert!(!detect_encounter_wifi(Some(8.01), 8.0));
        assert!(!detect_encounter_wifi(None, 8.0));
        assert!(detect_encounter_bluetooth(-75.0, -90.0));
        assert!(!detect_encounter_bluetooth(-95.0, -90.0));
        assert!(detect_encounter_bluetooth(-90.0, -90.0));
    }

    #[test]
    fn distance_models() {
        let q = QuadraticRssModel {
            a: 0.0,
            b: -0.1,
            c: -3.0,
        };
        assert_relative_eq!(bluetooth_distance(-70.0, &q), 4.0, epsilon = 1e-12);
        assert_eq!(bluetooth_distance(-10.0, &q), 0.0);
        let l = LogWifiModel { alpha: 0.0, beta: 1.0 };
        assert_relative_eq!(wifi_distance(std::f64::consts::E, &l).unwrap(), 1.0, epsilon = 1e-12);
        assert!(matches!(wifi_distance(0.0, &l), Err(EncounterError::InvalidInput(_))));
        assert!(wifi_distance(-1.0, &l).is_err());
        assert_eq!(wifi_distance(1e-6, &l).unwrap(), 0.0);
    }

    #[test]
    fn quadratic_fit_recovers_exact_coefficients() {
        let samples: Vec<(f64, f64)> = (0..30)
            .map(|i| {
                let rss = -95.0 + i as f64 * 1.5;
                (rss, 0.01 * rss * rss)
            })
            .collect();
        let m = fit_quadratic_model(&samples).unwrap();
        assert_relative_eq!(m.a, 0.01, max_relative = 1e-9);
        assert!(m.b.abs() < 1e-9, "b = {}", m.b);
        assert!(m.c.abs() < 1e-7, "c = {}", m.c);
    }

    #[test]
    fn quadratic_fit_rejects_degenerate_input() {
        assert!(matches!(
            fit_quadratic_model(&[(-60.0, 1.0), (-70.0, 2.0)]),
            Err(EncounterError::FitFailure(_))
        ));
        assert!(matches!(
            fit_quadratic_model(&[(-60.0, 1.0), (-60.0, 2.0), (-70.0, 2.5), (-70.0, 3.0)]),
            Err(EncounterError::FitFailure(_))
        ));
    }

    #[test]
    fn log_fit() {
        let samples: Vec<(f64, f64)> = [0.5, 1.0, 2.0, 4.0, 9.0]
            .iter()
            .map(|&s: &f64| (s, 2.0 + 3.0 * s.ln()))
            .collect();
        let m = fit_log_model(&samples).unwrap();
        assert_relative_eq!(m.alpha, 2.0, epsilon = 1e-9);
        assert_relative_eq!(m.beta, 3.0, epsilon = 1e-9);
        assert!(matches!(
            fit_log_model(&[(0.0, 1.0), (1.0, 2.0)]),
            Err(EncounterError::InvalidInput(_))
        ));
        assert!(matches!(
            fit_log_model(&[(2.0, 1.0), (2.0, 2.0)]),
            Err(EncounterError::FitFailure(_))
        ));
    }

    #[test]
    fn model_text_round_trip() {
        let m = DistanceModel::quadratic(
            QuadraticRssModel {
                a: 0.001,
                b: -0.2,
                c: -5.0,
            },
            0.9,
        );
        let text = m.to_text();
        assert!(text.contains("model_type = \"quadratic\""));
        assert_eq!(DistanceModel::from_text(&text).unwrap(), m);
        assert!(DistanceModel::from_text("model_type = \"cubic\"\n").is_err());
    }

    #[test]
    fn calibration_io() {
        let samples = vec![(-60.0, 1.5), (-72.5, 3.25)];
        let mut buf = Vec::new();
        write_calibration(&mut buf, &samples).unwrap();
        assert_eq!(read_calibration(&buf[..]).unwrap(), samples);
        let bad = "rss_or_sim,true_distance_m\n-60,1\n-61,x\n";
        assert!(matches!(
            read_calibration(bad.as_bytes()),
            Err(EncounterError::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn observation_validation() {
        assert!(EncounterObservation::new(0, 1, 2.0, 1.0, EncounterSource::Wifi, 3).is_ok());
        assert!(EncounterObservation::new(1, 1, 2.0, 1.0, EncounterSource::Wifi, 3).is_err());
        assert!(EncounterObservation::new(0, 1, -0.1, 1.0, EncounterSource::Wifi, 3).is_err());
        assert!(EncounterObservation::new(0, 1, 1.0, 0.0, EncounterSource::Bluetooth, 3).is_err());
        assert!(RssSample::new(-130.0, 1).is_err());
        assert!(WifiScan::from_samples(
            &[RssSample::new(-50.0, 1).unwrap(), RssSample::new(-60.0, 1).unwrap()],
            0
        )
        .is_err());
    }

    mod props {
        use super::*;
        use proptest::collection::btree_map;
        use proptest::prelude::*;

        fn arb_scan() -> impl Strategy<Value = WifiScan> {
            btree_map(0u32..12, -100.0f64..-20.0, 0..10).prop_map(|m| WifiScan::new(m, 0).unwrap())
        }

        proptest! {
            #[test]
            fn similarity_is_symmetric(a in arb_scan(), b in arb_scan(), n in 1usize..8) {
                prop_assert_eq!(wifi_similarity(&a, &b, n), wifi_similarity(&b, &a, n));
            }

            #[test]
            fn similarity_nonnegative_and_zero_on_self(a in arb_scan(), n in 1usize..8) {
                let s = wifi_similarity(&a, &a, n);
                prop_assert!(a.is_empty() == s.is_none());
                if let Some(v) = s { prop_assert_eq!(v, 0.0); }
            }

            #[test]
            fn weak_extra_ap_does_not_change_similarity(
                a in arb_scan(), b in arb_scan(), n in 1usize..8, id in 100u32..200
            ) {
                // An AP weaker than everything else, heard by one side only,
                // stays outside the common set.
                let before = wifi_similarity(&a, &b, n);
                let mut r = a.readings().clone();
                r.insert(id, -119.0);
                let a2 = WifiScan::new(r, 0).unwrap();
                prop_assert_eq!(before, wifi_similarity(&a2, &b, n));
            }

            #[test]
            fn distances_never_negative(rss in -120.0f64..0.0, a in -1.0f64..1.0, b in -1.0f64..1.0,
                                        c in -50.0f64..50.0, sim in 1e-6f64..100.0) {
                let quad = QuadraticRssModel { a, b, c };
                let log = LogWifiModel { alpha: a * 10.0, beta: c };
                prop_assert!(bluetooth_distance(rss, &quad) >= 0.0);
                prop_assert!(wifi_distance(sim, &log).unwrap() >= 0.0);
            }
        }
    }
}
