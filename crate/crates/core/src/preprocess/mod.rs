//! Signal conditioning and per-word windowing.
//!
//! `preprocess_recording` runs, in order: average re-reference, channel
//! selection through an [`AlignmentMap`], resampling to 200 Hz, zero-phase
//! 0.3-75 Hz band-pass, and rescaling to units of 100 µV.

pub mod filter;
pub mod heeg;
pub mod manifest;
pub mod resample;

use std::path::Path;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::montage::AlignmentMap;
pub use filter::BandPass;
pub use manifest::{ManifestRow, SampleManifest};
pub use resample::Resampler;

pub const TARGET_RATE: u32 = 200;
pub const MIN_INPUT_RATE: u32 = 150;
pub const WINDOW_SECONDS: f64 = 1.0;
/// Stored amplitude unit, in volts.
pub const STORED_UNIT_VOLTS: f64 = 100e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct EegRecording {
    /// channels x time
    pub data: Array2<f64>,
    pub rate: u32,
    pub channel_labels: Vec<String>,
    pub layout: Option<String>,
}

impl EegRecording {
    pub fn new(data: Array2<f64>, rate: u32, channel_labels: Vec<String>) -> Result<Self> {
        let rec = EegRecording {
            data,
            rate,
            channel_labels,
            layout: None,
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rate == 0 {
            return Err(Error::InvalidArgument("sampling rate must be positive".into()));
        }
        if self.channel_labels.len() != self.data.nrows() {
            return Err(Error::Shape {
                expected: self.data.nrows(),
                got: self.channel_labels.len(),
            });
        }
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("recording contains non-finite samples".into()));
        }
        Ok(())
    }

    pub fn n_channels(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.data.ncols()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.n_samples() as f64 / f64::from(self.rate)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    pub target_rate: u32,
    pub band_low_hz: f64,
    pub band_high_hz: f64,
    pub filter_order: usize,
    pub kaiser_beta: f64,
    /// Volts per raw input unit (1e-6 for µV input).
    pub input_unit_volts: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            target_rate: TARGET_RATE,
            band_low_hz: 0.3,
            band_high_hz: 75.0,
            filter_order: 4,
            kaiser_beta: resample::KAISER_BETA,
            input_unit_volts: 1e-6,
        }
    }
}

/// Filter and resampler realisation, written next to preprocessed outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessMeta {
    pub filter_family: String,
    pub filter_order: usize,
    pub zero_phase: bool,
    pub band_hz: [f64; 2],
    pub input_rate: u32,
    pub output_rate: u32,
    pub resample_up: usize,
    pub resample_down: usize,
    pub kaiser_beta: f64,
    pub scale: f64,
    pub channels: Vec<String>,
}

/// Subtracts the per-timepoint mean across channels.
pub fn average_reference(data: &mut Array2<f64>) {
    if data.nrows() == 0 {
        return;
    }
    if let Some(mean) = data.mean_axis(Axis(0)) {
        for mut row in data.rows_mut() {
            row -= &mean;
        }
    }
}

pub fn select_channels(rec: &EegRecording, labels: &[&str]) -> Result<EegRecording> {
    let mut out = Array2::zeros((labels.len(), rec.n_samples()));
    for (i, l) in labels.iter().enumerate() {
        let src = rec
            .channel_labels
            .iter()
            .position(|c| c == l)
            .ok_or_else(|| Error::MissingChannel(l.to_string()))?;
        out.row_mut(i).assign(&rec.data.row(src));
    }
    Ok(EegRecording {
        data: out,
        rate: rec.rate,
        channel_labels: labels.iter().map(|s| s.to_string()).collect(),
        layout: rec.layout.clone(),
    })
}

pub fn resample_recording(rec: &EegRecording, to_hz: u32, beta: f64) -> EegRecording {
    let r = Resampler::new(rec.rate, to_hz, beta);
    let n_out = r.output_len(rec.n_samples());
    let mut out = Array2::zeros((rec.n_channels(), n_out));
    for (i, row) in rec.data.rows().into_iter().enumerate() {
        let y = r.apply(&row.to_vec());
        out.row_mut(i).assign(&ndarray::Array1::from(y));
    }
    EegRecording {
        data: out,
        rate: to_hz,
        channel_labels: rec.channel_labels.clone(),
        layout: rec.layout.clone(),
    }
}

/// Runs the full conditioning chain.
///
/// `layout` names the montage the recording was made with; it picks the
/// column of `map` used for channel selection. Output channels carry the
/// reference-layout labels.
pub fn preprocess_recording(
    raw: &EegRecording,
    map: &AlignmentMap,
    layout: &str,
    cfg: &PreprocessConfig,
) -> Result<(EegRecording, PreprocessMeta)> {
    raw.validate()?;
    if raw.rate < MIN_INPUT_RATE {
        return Err(Error::InvalidArgument(format!(
            "sampling rate {} Hz is below the {MIN_INPUT_RATE} Hz minimum",
            raw.rate
        )));
    }
    let labels = map
        .labels_for(layout)
        .ok_or_else(|| Error::Layout(format!("layout `{layout}` not in alignment map")))?;

    let mut referenced = raw.clone();
    average_reference(&mut referenced.data);
    let selected = select_channels(&referenced, &labels)?;
    let resampled = resample_recording(&selected, cfg.target_rate, cfg.kaiser_beta);

    let bp = BandPass::butterworth(
        cfg.filter_order,
        cfg.band_low_hz,
        cfg.band_high_hz,
        f64::from(cfg.target_rate),
    )?;
    let scale = cfg.input_unit_volts / STORED_UNIT_VOLTS;
    let mut data = resampled.data;
    for mut row in data.rows_mut() {
        let y = bp.filtfilt(&row.to_vec());
        for (dst, v) in row.iter_mut().zip(y) {
            *dst = v * scale;
        }
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("preprocessing produced non-finite samples".into()));
    }
    let r = Resampler::new(raw.rate, cfg.target_rate, cfg.kaiser_beta);
    let meta = PreprocessMeta {
        filter_family: "butterworth".into(),
        filter_order: cfg.filter_order,
        zero_phase: true,
        band_hz: [cfg.band_low_hz, cfg.band_high_hz],
        input_rate: raw.rate,
        output_rate: cfg.target_rate,
        resample_up: r.up,
        resample_down: r.down,
        kaiser_beta: cfg.kaiser_beta,
        scale,
        channels: map.reference_labels().iter().map(|s| s.to_string()).collect(),
    };
    let out = EegRecording {
        data,
        rate: cfg.target_rate,
        channel_labels: meta.channels.clone(),
        layout: Some(map.reference_layout.clone()),
    };
    Ok((out, meta))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedWindow {
    pub sample_id: String,
    pub reason: String,
}

/// Sample id and window data.
pub type Window = (String, Array2<f64>);

/// Cuts a one-second, onset-locked window per manifest row.
pub fn extract_word_windows(rec: &EegRecording, rows: &[ManifestRow]) -> Result<(Vec<Window>, Vec<SkippedWindow>)> {
    if rec.rate != TARGET_RATE {
        return Err(Error::InvalidArgument(format!(
            "windows are cut from {TARGET_RATE} Hz recordings, got {} Hz",
            rec.rate
        )));
    }
    let len = (WINDOW_SECONDS * f64::from(rec.rate)).round() as usize;
    let mut windows = Vec::new();
    let mut skipped = Vec::new();
    for row in rows {
        let start = (row.onset_seconds * f64::from(rec.rate)).round();
        if !row.onset_seconds.is_finite() || start < 0.0 || start as usize + len > rec.n_samples() {
            skipped.push(SkippedWindow {
                sample_id: row.sample_id.clone(),
                reason: format!(
                    "window at {:.3}s exceeds recording of {:.3}s",
                    row.onset_seconds,
                    rec.duration_seconds()
                ),
            });
            continue;
        }
        let start = start as usize;
        let w = rec.data.slice(ndarray::s![.., start..start + len]).to_owned();
        windows.push((row.sample_id.clone(), w));
    }
    Ok((windows, skipped))
}

/// Reads a `HEEG1` recording plus its optional `.channels` sidecar.
pub fn read_recording(path: &Path) -> Result<EegRecording> {
    let t = heeg::read_tensor(path)?;
    let (layout, labels) = match heeg::read_channels(path)? {
        Some((layout, labels)) => (layout, labels),
        None => (None, (0..t.data.nrows()).map(|i| i.to_string()).collect()),
    };
    let mut rec = EegRecording::new(t.data.mapv(f64::from), t.rate, labels)?;
    rec.layout = layout;
    Ok(rec)
}

pub fn write_recording(path: &Path, rec: &EegRecording) -> Result<()> {
    heeg::write_tensor(
        path,
        &heeg::Tensor {
            data: rec.data.mapv(|v| v as f32),
            rate: rec.rate,
        },
    )?;
    heeg::write_channels(path, rec.layout.as_deref(), &rec.channel_labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montage::AlignmentEntry;
    use std::f64::consts::PI;

    fn identity_map(labels: &[&str]) -> AlignmentMap {
        AlignmentMap {
            reference_layout: "ref".into(),
            target_layouts: vec!["tgt".into()],
            entries: labels
                .iter()
                .map(|l| AlignmentEntry {
                    reference: l.to_string(),
                    targets: vec![format!("t{l}")],
                })
                .collect(),
        }
    }

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("C{i}")).collect()
    }

    #[test]
    fn rereference_zero_mean_and_idempotent() {
        let data = Array2::from_shape_fn((5, 64), |(c, t)| (c as f64 + 1.0) * (t as f64 * 0.37).sin() + c as f64);
        let mut once = data.clone();
        average_reference(&mut once);
        for col in once.columns() {
            let scale = col.iter().map(|v| v.abs()).fold(1.0, f64::max);
            assert!(col.sum().abs() / scale < 1e-9);
        }
        let mut twice = once.clone();
        average_reference(&mut twice);
        assert!((&twice - &once).iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn two_seconds_at_512_gives_400_samples() {
        let l = labels(3);
        let raw = EegRecording::new(Array2::from_elem((3, 1024), 1.0), 512, l.clone()).unwrap();
        let names: Vec<&str> = l.iter().map(String::as_str).collect();
        let (out, meta) =
            preprocess_recording(&raw, &identity_map(&names), "ref", &PreprocessConfig::default()).unwrap();
        assert_eq!(out.n_samples(), 400);
        assert_eq!(out.rate, 200);
        assert_eq!((meta.resample_up, meta.resample_down), (25, 64));
    }

    #[test]
    fn selects_by_target_layout_and_reports_missing() {
        let raw = EegRecording::new(Array2::zeros((2, 400)), 200, vec!["tA".into(), "tB".into()]).unwrap();
        let (out, _) =
            preprocess_recording(&raw, &identity_map(&["A", "B"]), "tgt", &PreprocessConfig::default()).unwrap();
        assert_eq!(out.channel_labels, vec!["A", "B"]);
        let err =
            preprocess_recording(&raw, &identity_map(&["A", "C"]), "tgt", &PreprocessConfig::default()).unwrap_err();
        assert!(matches!(err, Error::MissingChannel(ref c) if c == "tC"));
        let slow = EegRecording::new(Array2::zeros((2, 100)), 128, vec!["tA".into(), "tB".into()]).unwrap();
        assert!(preprocess_recording(&slow, &identity_map(&["A", "B"]), "tgt", &PreprocessConfig::default()).is_err());
    }

    #[test]
    fn sine_passes_and_drift_is_removed() {
        let rate = 512u32;
        let n = 240 * rate as usize;
        // one tone per recording; the other channels stay flat
        let run = |freq: f64| {
            let mut data = Array2::zeros((3, n));
            for t in 0..n {
                data[[0, t]] = 100.0 * (2.0 * PI * freq * t as f64 / rate as f64).sin();
            }
            let raw = EegRecording::new(data.clone(), rate, labels(3)).unwrap();
            let mut referenced = data;
            average_reference(&mut referenced);
            let (out, _) = preprocess_recording(
                &raw,
                &identity_map(&["C0", "C1", "C2"]),
                "ref",
                &PreprocessConfig::default(),
            )
            .unwrap();
            // µV -> 100 µV divides amplitudes by 100
            (mid_rms(&referenced) / 100.0, mid_rms(&out.data))
        };
        let (sine_in, sine_out) = run(50.0);
        assert!((sine_out / sine_in - 1.0).abs() <= 0.05, "{sine_out} vs {sine_in}");
        let (drift_in, drift_out) = run(0.05);
        assert!(20.0 * (drift_out / drift_in).log10() <= -20.0);
    }

    fn mid_rms(src: &Array2<f64>) -> f64 {
        let n = src.ncols();
        let (a, b) = (n / 4, 3 * n / 4);
        let v = src.row(0);
        (v.slice(ndarray::s![a..b]).iter().map(|x| x * x).sum::<f64>() / (b - a) as f64).sqrt()
    }

    #[test]
    fn windows_respect_bounds() {
        let rec = EegRecording::new(
            Array2::from_shape_fn((2, 200), |(c, t)| (c * 1000 + t) as f64),
            200,
            labels(2),
        )
        .unwrap();
        let row = |id: &str, onset: f64| ManifestRow {
            sample_id: id.into(),
            word: "W".into(),
            subject: "s".into(),
            session: "0".into(),
            recording_uri: "r".into(),
            onset_seconds: onset,
        };
        let (w, skipped) = extract_word_windows(&rec, &[row("a", 0.0), row("b", 0.5)]).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].1, rec.data);
        assert_eq!(skipped.len(), 1);
        assert_eq!(skipped[0].sample_id, "b");

        let long = EegRecording::new(Array2::zeros((4, 200 * 40)), 200, labels(4)).unwrap();
        let rows: Vec<ManifestRow> = (0..16).map(|i| row(&format!("w{i}"), 1.0 + 2.4 * i as f64)).collect();
        let (w, skipped) = extract_word_windows(&long, &rows).unwrap();
        assert_eq!(w.len(), 16);
        assert!(skipped.is_empty());
        assert!(w.iter().all(|(_, m)| m.dim() == (4, 200)));
    }
}
