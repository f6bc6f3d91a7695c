//! Chromatogram synthesis, peak integration and zero-intercept calibration.
//!
//! Areas are in AU·s. A peak's area before saturation is
//! `gain * concentration`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::{AnalyteId, SolutionState};

pub const DEFAULT_RUN_MIN: f64 = 12.5;
pub const DEFAULT_SAMPLE_PERIOD_S: f64 = 0.5;
pub const DEFAULT_BASELINE_WINDOW_S: f64 = 30.0;
/// Integration half-width in peak sigmas.
pub const WINDOW_SIGMAS: f64 = 3.0;
/// Minimum spacing between retention times in units of the widest sigma.
pub const RESOLUTION_SIGMAS: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakProfile {
    pub analyte: AnalyteId,
    pub retention_min: f64,
    pub sigma_min: f64,
    /// Area per unit concentration, AU·s per mg/mL.
    pub gain: f64,
    /// Soft-clip scale for the area; `None` means a linear detector.
    pub saturation_area: Option<f64>,
}

impl PeakProfile {
    /// Noise-free peak area for concentration `c`.
    pub fn response_area(&self, c: f64) -> f64 {
        saturate(self.gain * c, self.saturation_area)
    }

    pub fn window_min(&self) -> (f64, f64) {
        let h = WINDOW_SIGMAS * self.sigma_min;
        (self.retention_min - h, self.retention_min + h)
    }
}

/// Monotone soft clip `a_sat * (1 - exp(-a / a_sat))`.
pub fn saturate(area: f64, saturation_area: Option<f64>) -> f64 {
    match saturation_area {
        Some(s) if area > 0.0 => s * -(-area / s).exp_m1(),
        _ => area,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HplcProfile {
    peaks: Vec<PeakProfile>,
    pub run_min: f64,
    pub sample_period_s: f64,
    pub baseline_window_s: f64,
}

impl HplcProfile {
    pub fn new(peaks: Vec<PeakProfile>) -> Result<Self> {
        let p = Self {
            peaks,
            run_min: DEFAULT_RUN_MIN,
            sample_period_s: DEFAULT_SAMPLE_PERIOD_S,
            baseline_window_s: DEFAULT_BASELINE_WINDOW_S,
        };
        p.validate()?;
        Ok(p)
    }

    /// Default profile for the three phenols, detected at 214 nm.
    pub fn phenols() -> Self {
        let peak = |id, rt, gain: f64| PeakProfile {
            analyte: AnalyteId(id),
            retention_min: rt,
            sigma_min: 0.0375,
            gain,
            saturation_area: Some(100.0 * gain),
        };
        Self::new(vec![
            peak(1, 3.41, 1.2),
            peak(2, 4.53, 1.6),
            peak(3, 9.31, 2.2),
        ])
        .expect("default profile is valid")
    }

    /// Same profile with the detector made linear.
    pub fn without_saturation(mut self) -> Self {
        for p in &mut self.peaks {
            p.saturation_area = None;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.peaks.is_empty() {
            return Err(Error::EmptyInput("peaks"));
        }
        if !(self.run_min > 0.0 && self.sample_period_s > 0.0 && self.baseline_window_s >= 0.0) {
            return Err(Error::InvalidConfig(
                "run length and sample period must be positive".into(),
            ));
        }
        let mut ids = std::collections::BTreeSet::new();
        for p in &self.peaks {
            if !ids.insert(p.analyte) {
                return Err(Error::AnalyteCollision(p.analyte));
            }
            if !(p.gain > 0.0) || !(p.sigma_min > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "analyte {}: gain and sigma must be positive",
                    p.analyte
                )));
            }
            if let Some(s) = p.saturation_area {
                if !(s > 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "analyte {}: saturation area must be positive",
                        p.analyte
                    )));
                }
            }
            let (lo, hi) = p.window_min();
            if lo < 0.0 || hi > self.run_min {
                return Err(Error::WindowOutOfRange {
                    start_min: lo,
                    end_min: hi,
                    run_min: self.run_min,
                });
            }
        }
        if let Some((a, b)) = self.overlapping().first() {
            return Err(Error::Unresolvable(*a, *b));
        }
        Ok(())
    }

    /// Pairs of analytes whose retention times sit closer than the
    /// resolvability limit.
    pub fn overlapping(&self) -> Vec<(AnalyteId, AnalyteId)> {
        let max_sigma = self.peaks.iter().map(|p| p.sigma_min).fold(0.0, f64::max);
        let mut out = Vec::new();
        for (i, a) in self.peaks.iter().enumerate() {
            for b in &self.peaks[i + 1..] {
                if (a.retention_min - b.retention_min).abs() < RESOLUTION_SIGMAS * max_sigma {
                    out.push((a.analyte, b.analyte));
                }
            }
        }
        out
    }

    pub fn peak(&self, id: AnalyteId) -> Option<&PeakProfile> {
        self.peaks.iter().find(|p| p.analyte == id)
    }

    pub fn peaks(&self) -> &[PeakProfile] {
        &self.peaks
    }

    pub fn n_samples(&self) -> usize {
        (self.run_min * 60.0 / self.sample_period_s).round() as usize + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chromatogram {
    pub sample_period_s: f64,
    pub absorbance: Vec<f64>,
}

impl Chromatogram {
    pub fn zeros(sample_period_s: f64, n: usize) -> Self {
        Self {
            sample_period_s,
            absorbance: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.absorbance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.absorbance.is_empty()
    }

    pub fn run_min(&self) -> f64 {
        self.len().saturating_sub(1) as f64 * self.sample_period_s / 60.0
    }

    pub fn time_min(&self, k: usize) -> f64 {
        k as f64 * self.sample_period_s / 60.0
    }

    /// Adds a Gaussian of the given area (AU·s) centred at `center_min`.
    pub fn add_peak(&mut self, area: f64, center_min: f64, sigma_min: f64) {
        let sigma_s = sigma_min * 60.0;
        let amp = area / (sigma_s * (2.0 * PI).sqrt());
        let lo = ((center_min - 8.0 * sigma_min) * 60.0 / self.sample_period_s)
            .floor()
            .max(0.0) as usize;
        let hi = (((center_min + 8.0 * sigma_min) * 60.0 / self.sample_period_s).ceil() as usize)
            .min(self.len());
        for k in lo..hi {
            let dt = k as f64 * self.sample_period_s - center_min * 60.0;
            self.absorbance[k] += amp * (-0.5 * (dt / sigma_s).powi(2)).exp();
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("time_min,absorbance_au\n");
        for (k, a) in self.absorbance.iter().enumerate() {
            let _ = writeln!(out, "{:.5},{:.8}", self.time_min(k), a);
        }
        out
    }

    /// Reads the CSV written by [`Chromatogram::to_csv`]; the sample period
    /// comes from the first two time stamps.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut times = Vec::new();
        let mut absorbance = Vec::new();
        for (n, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let mut it = line.split(',');
            let mut field = || -> Result<f64> {
                it.next()
                    .and_then(|f| f.trim().parse().ok())
                    .ok_or_else(|| Error::Parse(format!("chromatogram line {}", n + 1)))
            };
            times.push(field()?);
            absorbance.push(field()?);
        }
        if times.len() < 2 {
            return Err(Error::InsufficientPoints {
                needed: 2,
                got: times.len(),
            });
        }
        let period_s = (times[1] - times[0]) * 60.0;
        if !(period_s > 0.0) || absorbance.iter().any(|a| !a.is_finite()) {
            return Err(Error::Parse(
                "chromatogram samples must be finite and evenly spaced".into(),
            ));
        }
        // time stamps are printed to 1e-5 min, so snap to a 1 ms grid
        Ok(Self {
            sample_period_s: (period_s * 1000.0).round() / 1000.0,
            absorbance,
        })
    }

    pub fn to_svg(&self, title: &str) -> String {
        let (w, h, pad) = (800.0, 300.0, 40.0);
        let max = self.absorbance.iter().cloned().fold(1e-12, f64::max);
        let n = self.len().max(2) - 1;
        let mut pts = String::new();
        for (k, a) in self.absorbance.iter().enumerate() {
            let x = pad + (w - 2.0 * pad) * k as f64 / n as f64;
            let y = h - pad - (h - 2.0 * pad) * (a / max).max(0.0);
            let _ = write!(pts, "{x:.1},{y:.1} ");
        }
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\">\n\
             <text x=\"{pad}\" y=\"20\" font-size=\"14\">{title}</text>\n\
             <text x=\"{}\" y=\"{}\" font-size=\"12\">time (min), 0 to {:.1}</text>\n\
             <polyline fill=\"none\" stroke=\"black\" stroke-width=\"1\" points=\"{}\"/>\n</svg>\n",
            w / 2.0 - 60.0,
            h - 10.0,
            self.run_min(),
            pts.trim_end()
        )
    }
}

/// Injection and detector noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InjectionModel {
    /// Relative sd of the injected amount, shared by every analyte in a run.
    pub injection_cv: f64,
    /// Relative sd of each analyte's response gain, drawn per run.
    pub drift_cv: f64,
    /// Per-sample absorbance noise, AU.
    pub baseline_noise: f64,
}

impl Default for InjectionModel {
    fn default() -> Self {
        Self {
            injection_cv: 0.01,
            drift_cv: 0.01,
            baseline_noise: 1e-4,
        }
    }
}

impl InjectionModel {
    pub fn noiseless() -> Self {
        Self {
            injection_cv: 0.0,
            drift_cv: 0.0,
            baseline_noise: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.injection_cv < 0.0 || self.drift_cv < 0.0 || self.baseline_noise < 0.0 {
            return Err(Error::InvalidConfig(
                "injection noise parameters must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Synthesizes the chromatogram of one injection of `sol`.
pub fn measure(
    sol: &SolutionState,
    profile: &HplcProfile,
    inj: &InjectionModel,
    seed: u64,
) -> Result<Chromatogram> {
    inj.validate()?;
    if sol.is_empty() {
        return Err(Error::EmptySolution);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = || -> f64 { rng.sample(StandardNormal) };
    let inj_factor = (1.0 + inj.injection_cv * g()).max(0.0);
    let mut chrom = Chromatogram::zeros(profile.sample_period_s, profile.n_samples());
    for p in profile.peaks() {
        let drift = (1.0 + inj.drift_cv * g()).max(0.0);
        let c = sol.concentration(p.analyte)?;
        let area = saturate(p.gain * c * drift * inj_factor, p.saturation_area);
        if area > 0.0 {
            chrom.add_peak(area, p.retention_min, p.sigma_min);
        }
    }
    if inj.baseline_noise > 0.0 {
        for a in &mut chrom.absorbance {
            *a += inj.baseline_noise * g();
        }
    }
    Ok(chrom)
}

fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Baseline level: median of the first `window_s` seconds.
pub fn baseline(chrom: &Chromatogram, window_s: f64) -> f64 {
    let n = ((window_s / chrom.sample_period_s).floor() as usize + 1).min(chrom.len());
    median(&mut chrom.absorbance[..n].to_vec())
}

/// Trapezoidal integral of `chrom - base` over `[start_min, end_min]`, with
/// linear interpolation at the window edges.
pub fn integrate_window(
    chrom: &Chromatogram,
    start_min: f64,
    end_min: f64,
    base: f64,
) -> Result<f64> {
    let run = chrom.run_min();
    if chrom.is_empty() || start_min < 0.0 || end_min > run + 1e-12 || start_min > end_min {
        return Err(Error::WindowOutOfRange {
            start_min,
            end_min,
            run_min: run,
        });
    }
    let dt = chrom.sample_period_s;
    let y = |t_s: f64| -> f64 {
        let x = t_s / dt;
        let k = (x.floor() as usize).min(chrom.len() - 1);
        let frac = x - k as f64;
        let a = chrom.absorbance[k];
        let b = chrom.absorbance.get(k + 1).copied().unwrap_or(a);
        a + (b - a) * frac - base
    };
    let (t0, t1) = (start_min * 60.0, end_min * 60.0);
    let mut knots = vec![t0];
    let first = (t0 / dt).floor() as usize + 1;
    let mut k = first;
    while (k as f64) * dt < t1 {
        knots.push(k as f64 * dt);
        k += 1;
    }
    knots.push(t1);
    Ok(knots
        .windows(2)
        .map(|w| 0.5 * (w[1] - w[0]) * (y(w[0]) + y(w[1])))
        .sum())
}

/// Baseline-subtracted area of one analyte's peak over retention ± 3σ.
pub fn integrate_peak(
    chrom: &Chromatogram,
    peak: &PeakProfile,
    baseline_window_s: f64,
) -> Result<f64> {
    let (lo, hi) = peak.window_min();
    integrate_window(chrom, lo, hi, baseline(chrom, baseline_window_s))
}

/// Zero-intercept least squares `C ≈ s * A` over points with
/// concentration at or below `cutoff`.
pub fn fit_calibration(series: &[(f64, f64)], cutoff: Option<f64>) -> Result<f64> {
    if series.iter().any(|&(c, _)| !(c > 0.0)) {
        return Err(Error::InvalidConfig(
            "calibration concentrations must be positive".into(),
        ));
    }
    let pts: Vec<(f64, f64)> = series
        .iter()
        .copied()
        .filter(|&(c, _)| cutoff.is_none_or(|k| c <= k))
        .collect();
    if pts.len() < 3 {
        return Err(Error::InsufficientPoints {
            needed: 3,
            got: pts.len(),
        });
    }
    let saa: f64 = pts.iter().map(|&(_, a)| a * a).sum();
    if saa == 0.0 {
        return Err(Error::DegenerateSeries);
    }
    let sac: f64 = pts.iter().map(|&(c, a)| a * c).sum();
    let s = sac / saa;
    if !(s > 0.0) {
        return Err(Error::DegenerateSeries);
    }
    Ok(s)
}

/// Per-analyte slopes, mg/mL per AU·s.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CalibrationCurve {
    pub slopes: BTreeMap<AnalyteId, f64>,
}

impl CalibrationCurve {
    /// The exact inverse of a linear detector.
    pub fn ideal(profile: &HplcProfile) -> Self {
        Self {
            slopes: profile
                .peaks()
                .iter()
                .map(|p| (p.analyte, 1.0 / p.gain))
                .collect(),
        }
    }

    /// Fits every analyte that has a series.
    pub fn fit(series: &BTreeMap<AnalyteId, Vec<(f64, f64)>>, cutoff: Option<f64>) -> Result<Self> {
        let mut slopes = BTreeMap::new();
        for (&id, s) in series {
            slopes.insert(id, fit_calibration(s, cutoff)?);
        }
        Ok(Self { slopes })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("calibration serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(s)?;
        if let Some((id, _)) = c.slopes.iter().find(|(_, &s)| !(s > 0.0)) {
            return Err(Error::InvalidConfig(format!(
                "analyte {id}: slope must be positive"
            )));
        }
        Ok(c)
    }
}

/// Concentration of every profiled analyte.
pub fn quantify(
    chrom: &Chromatogram,
    cal: &CalibrationCurve,
    profile: &HplcProfile,
) -> Result<BTreeMap<AnalyteId, f64>> {
    let base = baseline(chrom, profile.baseline_window_s);
    let mut out = BTreeMap::new();
    for p in profile.peaks() {
        let slope = *cal
            .slopes
            .get(&p.analyte)
            .ok_or(Error::MissingCalibration(p.analyte))?;
        let (lo, hi) = p.window_min();
        out.insert(p.analyte, slope * integrate_window(chrom, lo, hi, base)?);
    }
    Ok(out)
}
