//! Deterministic synthetic ECG corpora.
//!
//! Each class is a periodic train of Gaussian "beats" (optional P wave, QRS
//! complex, T wave) parameterized by heart rate, RR irregularity and the rate of
//! inserted premature wide beats, plus white noise. Waveforms are scaled so each
//! lead peaks at unit magnitude. Reports are the class template with the sampled
//! rate substituted for `{rate}`.

use std::sync::Arc;

use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Corpus, EcgEpisode, SignalRef, SignalTensor};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassTemplate {
    /// Rhythm class label.
    pub name: String,
    /// Heart rates to draw from uniformly, beats per minute.
    pub rates_bpm: Vec<u32>,
    /// Relative standard deviation of successive RR intervals.
    #[serde(default)]
    pub rr_irregularity: f64,
    /// Probability that a premature wide beat follows a normal beat.
    #[serde(default)]
    pub extra_beat_probability: f64,
    #[serde(default = "default_true")]
    pub p_wave: bool,
    #[serde(default = "default_qrs")]
    pub qrs_width_s: f64,
    #[serde(default = "default_noise")]
    pub noise_std: f64,
    /// Report text; `{rate}` is replaced by the sampled rate.
    pub report: String,
}

fn default_true() -> bool {
    true
}
fn default_qrs() -> f64 {
    0.09
}
fn default_noise() -> f64 {
    0.03
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub classes: Vec<ClassTemplate>,
    pub episodes_per_class: usize,
    pub leads: usize,
    pub sampling_rate_hz: u32,
    pub duration_s: f64,
}

impl SyntheticSpec {
    /// Five rhythm classes, 400 episodes each, single lead at 128 Hz for 10 s.
    pub fn five_class() -> Self {
        let class = |name: &str, rates: &[u32], irr: f64, extra: f64, p_wave: bool, qrs: f64, report: &str| ClassTemplate {
            name: name.into(),
            rates_bpm: rates.to_vec(),
            rr_irregularity: irr,
            extra_beat_probability: extra,
            p_wave,
            qrs_width_s: qrs,
            noise_std: 0.03,
            report: report.into(),
        };
        Self {
            classes: vec![
                class("sinus_rhythm", &[60, 70, 80], 0.02, 0.0, true, 0.09, "sinus rhythm {rate} , normal ecg"),
                class("bradycardia", &[40, 45, 50], 0.02, 0.0, true, 0.09, "marked sinus bradycardia with rate {rate}"),
                class("tachycardia", &[110, 130, 150], 0.02, 0.0, true, 0.08, "sinus tachycardia {rate} beats per minute"),
                class("atrial_fibrillation", &[90, 110, 130], 0.25, 0.0, false, 0.09, "atrial fibrillation , irregular response {rate}"),
                class("premature_contractions", &[60, 70, 80], 0.02, 0.35, true, 0.09, "frequent premature ventricular contractions at {rate}"),
            ],
            episodes_per_class: 400,
            leads: 1,
            sampling_rate_hz: 128,
            duration_s: 10.0,
        }
    }

    pub fn samples(&self) -> usize {
        (self.duration_s * self.sampling_rate_hz as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Synthetic(m));
        if self.classes.len() < 2 {
            return fail(format!("need at least 2 classes, got {}", self.classes.len()));
        }
        if self.episodes_per_class == 0 || self.leads == 0 || self.sampling_rate_hz == 0 {
            return fail("episodes_per_class, leads and sampling_rate_hz must be positive".into());
        }
        if !(self.duration_s > 0.0) || self.samples() == 0 {
            return fail("duration_s must be positive".into());
        }
        let mut names = std::collections::HashSet::new();
        for c in &self.classes {
            if !names.insert(c.name.as_str()) {
                return fail(format!("class {:?} listed twice", c.name));
            }
            if c.rates_bpm.is_empty() || c.rates_bpm.contains(&0) {
                return fail(format!("class {:?} needs positive rates", c.name));
            }
            if !c.report.contains("{rate}") {
                return fail(format!("report template of {:?} must mention {{rate}}", c.name));
            }
            if !(0.0..=1.0).contains(&c.extra_beat_probability) || c.rr_irregularity < 0.0 || c.noise_std < 0.0 || c.qrs_width_s <= 0.0 {
                return fail(format!("class {:?} has out-of-range waveform parameters", c.name));
            }
        }
        Ok(())
    }
}

struct Bump {
    center: f64,
    sigma: f64,
    amplitude: f64,
}

fn beat_bumps(t: f64, rr: f64, class: &ClassTemplate, premature: bool, out: &mut Vec<Bump>) {
    let qrs_sigma = class.qrs_width_s / 6.0;
    if premature {
        out.push(Bump { center: t, sigma: qrs_sigma * 2.5, amplitude: -1.3 });
        out.push(Bump { center: t + 0.32, sigma: 0.07, amplitude: 0.4 });
        return;
    }
    if class.p_wave {
        out.push(Bump { center: t - 0.16, sigma: 0.022, amplitude: 0.15 });
    }
    out.push(Bump { center: t, sigma: qrs_sigma, amplitude: 1.0 });
    out.push(Bump { center: t + 0.4 * rr.sqrt(), sigma: 0.05, amplitude: 0.3 });
}

fn lead_gain(lead: usize) -> f64 {
    if lead == 0 {
        1.0
    } else {
        let g = 0.4 + 0.6 * ((lead * 7) % 5) as f64 / 4.0;
        if lead % 3 == 2 {
            -g
        } else {
            g
        }
    }
}

fn synthesize(class: &ClassTemplate, rate: u32, spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let fs = spec.sampling_rate_hz as f64;
    let n = spec.samples();
    let duration = n as f64 / fs;
    let mean_rr = 60.0 / rate as f64;
    let standard = Normal::new(0.0, 1.0).expect("unit normal");

    let mut bumps = Vec::new();
    let mut t = rng.gen_range(0.0..mean_rr);
    while t < duration + 0.5 {
        let rr = (mean_rr * (1.0 + class.rr_irregularity * standard.sample(rng))).max(0.35 * mean_rr);
        beat_bumps(t, rr, class, false, &mut bumps);
        if rng.gen_bool(class.extra_beat_probability) {
            beat_bumps(t + 0.55 * rr, rr, class, true, &mut bumps);
            t += 1.5 * rr;
        } else {
            t += rr;
        }
    }

    let clean: Vec<f64> = (0..n)
        .map(|i| {
            let x = i as f64 / fs;
            bumps
                .iter()
                .filter(|b| (x - b.center).abs() < 5.0 * b.sigma)
                .map(|b| b.amplitude * (-0.5 * ((x - b.center) / b.sigma).powi(2)).exp())
                .sum()
        })
        .collect();

    let mut data = Vec::with_capacity(n * spec.leads);
    for lead in 0..spec.leads {
        let gain = lead_gain(lead);
        let raw: Vec<f64> = clean.iter().map(|v| gain * v + class.noise_std * standard.sample(rng)).collect();
        let peak = raw.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
        data.extend(raw.iter().map(|v| (v / peak) as f32));
    }
    data
}

/// Generates `episodes_per_class` episodes per class, class-major. Each synthetic
/// patient (group) owns 1 to 5 consecutive episodes of a single class, recorded on
/// consecutive days.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<Corpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base_date = NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date");
    let samples = spec.samples();
    let mut episodes = Vec::with_capacity(spec.classes.len() * spec.episodes_per_class);
    for (ci, class) in spec.classes.iter().enumerate() {
        let mut patient = 0usize;
        let mut remaining_in_group = 0usize;
        let mut day = 0u64;
        for _ in 0..spec.episodes_per_class {
            if remaining_in_group == 0 {
                patient += 1;
                remaining_in_group = rng.gen_range(1..=5);
                day = 0;
            }
            remaining_in_group -= 1;
            let rate = class.rates_bpm[rng.gen_range(0..class.rates_bpm.len())];
            let data = synthesize(class, rate, spec, &mut rng);
            let signal = SignalTensor::new(spec.leads, samples, data)?;
            episodes.push(EcgEpisode {
                episode_id: format!("syn{:06}", episodes.len()),
                group_id: format!("c{ci}-p{patient:05}"),
                sampling_rate_hz: spec.sampling_rate_hz,
                leads: spec.leads,
                samples,
                signal: SignalRef::Memory(Arc::new(signal)),
                rhythm_class: Some(class.name.clone()),
                recorded_at: base_date.checked_add_days(Days::new(day)),
                report: class.report.replace("{rate}", &rate.to_string()),
                split: None,
            });
            day += 1;
        }
    }
    Corpus::new(episodes)
}
