//! On-disk formats: scene bundles (JSON manifest plus raw little-endian f32
//! arrays with JSON shape sidecars) and estimate directories (JSON metadata
//! plus CSV tables).

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, ScfaError};
use crate::evaluation::PsdTrack;
use crate::linalg::CMat;
use crate::model::{FrequencyGrid, Point};
use crate::scene::GroundTruth;
use crate::solver::SolveReport;
use crate::stft::{FramePlan, SubframeSpectra};

pub const SCHEMA_VERSION: u32 = 1;

/// Parses JSON, reporting the path of the offending field on failure.
pub fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| ScfaError::Schema {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| ScfaError::io(path, e))?;
    parse_json(&text)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| ScfaError::Configuration(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| ScfaError::io(path, e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArraySidecar {
    pub dtype: String,
    pub shape: Vec<usize>,
}

/// Writes `values` as little-endian f32 to `<name>.f32` with a `<name>.json` sidecar.
pub fn write_array(dir: &Path, name: &str, shape: &[usize], values: impl Iterator<Item = f64>) -> Result<()> {
    let path = dir.join(format!("{name}.f32"));
    let file = fs::File::create(&path).map_err(|e| ScfaError::io(&path, e))?;
    let mut out = BufWriter::new(file);
    let mut count = 0usize;
    for v in values {
        out.write_all(&(v as f32).to_le_bytes()).map_err(|e| ScfaError::io(&path, e))?;
        count += 1;
    }
    out.flush().map_err(|e| ScfaError::io(&path, e))?;
    if count != shape.iter().product::<usize>() {
        return Err(ScfaError::Coverage(format!("array {name}: {count} values for shape {shape:?}")));
    }
    write_json(
        &dir.join(format!("{name}.json")),
        &ArraySidecar {
            dtype: "f32le".into(),
            shape: shape.to_vec(),
        },
    )
}

/// Reads an array written by [`write_array`], checking its shape.
pub fn read_array(dir: &Path, name: &str, expected: &[usize]) -> Result<Vec<f64>> {
    let sidecar: ArraySidecar = read_json(&dir.join(format!("{name}.json")))?;
    if sidecar.dtype != "f32le" || sidecar.shape != expected {
        return Err(ScfaError::Coverage(format!(
            "array {name} has {} {:?}, expected f32le {expected:?}",
            sidecar.dtype, sidecar.shape
        )));
    }
    let path = dir.join(format!("{name}.f32"));
    let bytes = fs::read(&path).map_err(|e| ScfaError::io(&path, e))?;
    if bytes.len() != 4 * expected.iter().product::<usize>() {
        return Err(ScfaError::Coverage(format!("array {name} has {} bytes", bytes.len())));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

fn complex_parts(z: &[Complex<f64>]) -> impl Iterator<Item = f64> + '_ {
    z.iter().flat_map(|c| [c.re, c.im])
}

fn to_complex(v: &[f64]) -> Vec<Complex<f64>> {
    v.chunks_exact(2).map(|c| Complex::new(c[0], c[1])).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BundleKind {
    Synthetic,
    Recording,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: u32,
    pub kind: BundleKind,
    pub seed: u64,
    pub config_sha256: String,
    pub config: serde_json::Value,
    pub mic_positions: Vec<Point>,
    pub reference_index: usize,
    pub num_sources: usize,
    pub grid: FrequencyGrid,
    pub plan: FramePlan,
    pub min_distance: f64,
    pub frames: usize,
    pub subframes: usize,
    pub bins: usize,
    pub mics: usize,
    pub active_bins: Vec<usize>,
    /// Length of the time signal the spectra map to; absent when the
    /// spectra do not cover a full STFT (bin subsets, sub-frame override).
    pub signal_len: Option<usize>,
    pub self_noise: Option<f64>,
}

impl Manifest {
    fn frame_shape(&self, channels: usize) -> [usize; 5] {
        [self.frames, self.subframes, self.bins, channels, 2]
    }
}

/// A loaded bundle.
#[derive(Clone, Debug)]
pub struct Bundle {
    pub manifest: Manifest,
    pub frames: SubframeSpectra<f64>,
    /// Per-source reference-microphone components (synthetic bundles only).
    pub sources: Option<SubframeSpectra<f64>>,
    pub truth: Option<GroundTruth>,
}

pub fn write_bundle(dir: &Path, bundle: &Bundle) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| ScfaError::io(dir, e))?;
    let m = &bundle.manifest;
    write_json(&dir.join("manifest.json"), m)?;
    write_array(dir, "frames", &m.frame_shape(m.mics), complex_parts(&bundle.frames.data))?;
    if let Some(s) = &bundle.sources {
        write_array(dir, "sources", &m.frame_shape(m.num_sources), complex_parts(&s.data))?;
    }
    if let Some(truth) = &bundle.truth {
        let r = m.num_sources;
        write_array(dir, "truth_psd", &[m.frames, m.bins, r], truth.psd.data.iter().copied())?;
        write_array(dir, "truth_gamma", &[m.frames, m.bins], truth.gamma.data.iter().copied())?;
        write_array(
            dir,
            "truth_mixing",
            &[m.frames, m.bins, m.mics, r, 2],
            truth.mixing.iter().flat_map(|a| complex_parts(a.as_slice()).collect::<Vec<_>>()),
        )?;
    }
    Ok(())
}

pub fn read_bundle(dir: &Path) -> Result<Bundle> {
    let manifest: Manifest = read_json(&dir.join("manifest.json"))?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(ScfaError::Configuration(format!(
            "bundle schema version {} is not supported (expected {SCHEMA_VERSION})",
            manifest.schema_version
        )));
    }
    let m = &manifest;
    let spectra = |name: &str, channels: usize| -> Result<SubframeSpectra<f64>> {
        let raw = read_array(dir, name, &m.frame_shape(channels))?;
        let mut s = SubframeSpectra::zeros(m.frames, m.subframes, m.bins, channels);
        s.data = to_complex(&raw);
        Ok(s)
    };
    let frames = spectra("frames", m.mics)?;
    let (sources, truth) = match m.kind {
        BundleKind::Recording => (None, None),
        BundleKind::Synthetic => {
            let r = m.num_sources;
            let sources = spectra("sources", r)?;
            let mut psd = PsdTrack::zeros(m.frames, m.bins, r);
            psd.data = read_array(dir, "truth_psd", &[m.frames, m.bins, r])?;
            let mut gamma = PsdTrack::zeros(m.frames, m.bins, 1);
            gamma.data = read_array(dir, "truth_gamma", &[m.frames, m.bins])?;
            let mix = to_complex(&read_array(dir, "truth_mixing", &[m.frames, m.bins, m.mics, r, 2])?);
            let per = m.mics * r;
            let mixing = (0..m.frames * m.bins)
                .map(|i| CMat::from_rows(m.mics, r, mix[i * per..(i + 1) * per].to_vec()))
                .collect();
            let self_noise = m
                .self_noise
                .ok_or_else(|| ScfaError::Configuration("synthetic bundle lacks the self-noise PSD".into()))?;
            (
                Some(sources),
                Some(GroundTruth {
                    psd,
                    gamma,
                    self_noise,
                    mixing,
                }),
            )
        }
    };
    Ok(Bundle {
        manifest,
        frames,
        sources,
        truth,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub bin: usize,
    pub error: String,
}

/// Metadata of an estimation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateMeta {
    pub schema_version: u32,
    pub method: String,
    pub objective: Option<String>,
    pub frames_per_segment: usize,
    pub seed: u64,
    pub sources: usize,
    pub frames: usize,
    pub bins: usize,
    pub self_noise_channels: usize,
    pub has_gamma: bool,
    pub estimated_bins: Vec<usize>,
    pub failures: Vec<FailureRecord>,
    pub bundle_config_sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runtime_s: Option<f64>,
}

/// One row of `solve_reports.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub bin: usize,
    pub segment: usize,
    pub start: usize,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub iterations: usize,
    pub termination: String,
    pub max_violation: f64,
    pub pg_norm: f64,
    pub identifiability_warning: bool,
    pub data_loaded: bool,
    pub model_loaded: bool,
    pub fallback_columns: usize,
}

impl ReportRow {
    pub fn new(bin: usize, segment: usize, start: usize, r: &SolveReport) -> Self {
        Self {
            bin,
            segment,
            start,
            initial_objective: r.initial_objective,
            final_objective: r.final_objective,
            iterations: r.iterations,
            termination: r.termination.to_string(),
            max_violation: r.max_violation,
            pg_norm: r.pg_norm,
            identifiability_warning: r.identifiability_warning,
            data_loaded: r.data_loaded,
            model_loaded: r.model_loaded,
            fallback_columns: r.fallback_columns.len(),
        }
    }
}

/// Estimated parameters on the full `(frame, bin)` grid; tiles of bins
/// that were not estimated hold NaN / `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimateSet {
    pub meta: EstimateMeta,
    pub psd: PsdTrack,
    pub gamma: Option<PsdTrack>,
    pub self_noise: PsdTrack,
    /// RATF matrices indexed `t * bins + k`.
    pub mixing: Vec<Option<CMat<f64>>>,
    pub reports: Vec<ReportRow>,
}

impl EstimateSet {
    pub fn empty(meta: EstimateMeta) -> Self {
        let (t, k) = (meta.frames, meta.bins);
        let nan = |c: usize| PsdTrack {
            frames: t,
            bins: k,
            channels: c,
            data: vec![f64::NAN; t * k * c],
        };
        Self {
            psd: nan(meta.sources),
            gamma: meta.has_gamma.then(|| nan(1)),
            self_noise: nan(meta.self_noise_channels),
            mixing: vec![None; t * k],
            reports: Vec::new(),
            meta,
        }
    }

    pub fn mixing(&self, t: usize, k: usize) -> Option<&CMat<f64>> {
        self.mixing[t * self.meta.bins + k].as_ref()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct PsdRow {
    frame: usize,
    bin: usize,
    kind: String,
    channel: usize,
    value: f64,
    negative: u8,
}

#[derive(Debug, Serialize, Deserialize)]
struct RatfRow {
    frame: usize,
    bin: usize,
    source: usize,
    mic: usize,
    re: f64,
    im: f64,
}

fn csv_error(path: &Path, e: csv::Error) -> ScfaError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => ScfaError::io(path, io),
        other => ScfaError::Schema {
            path: path.display().to_string(),
            message: format!("{other:?}"),
        },
    }
}

fn write_rows<S: Serialize>(path: &Path, rows: impl IntoIterator<Item = S>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| ScfaError::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    for row in rows {
        w.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| ScfaError::io(path, e))
}

fn read_rows<D: DeserializeOwned>(path: &Path) -> Result<Vec<D>> {
    let file = fs::File::open(path).map_err(|e| ScfaError::io(path, e))?;
    let mut text = String::new();
    BufReader::new(file)
        .read_to_string(&mut text)
        .map_err(|e| ScfaError::io(path, e))?;
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize().map(|row| row.map_err(|e| csv_error(path, e))).collect()
}

fn write_header_only(path: &Path, header: &[&str]) -> Result<()> {
    fs::write(path, format!("{}\n", header.join(","))).map_err(|e| ScfaError::io(path, e))
}

pub fn write_estimates(dir: &Path, est: &EstimateSet) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| ScfaError::io(dir, e))?;
    write_json(&dir.join("estimates.json"), &est.meta)?;
    let mut psd_rows = Vec::new();
    let mut ratf_rows = Vec::new();
    let mut push = |t: usize, k: usize, kind: &str, c: usize, v: f64| {
        psd_rows.push(PsdRow {
            frame: t,
            bin: k,
            kind: kind.into(),
            channel: c,
            value: v,
            negative: u8::from(v < 0.0),
        })
    };
    for &k in &est.meta.estimated_bins {
        for t in 0..est.meta.frames {
            for j in 0..est.psd.channels {
                push(t, k, "source", j, est.psd.get(t, k, j));
            }
            if let Some(g) = &est.gamma {
                push(t, k, "late", 0, g.get(t, k, 0));
            }
            for i in 0..est.self_noise.channels {
                push(t, k, "self-noise", i, est.self_noise.get(t, k, i));
            }
            if let Some(a) = est.mixing(t, k) {
                for j in 0..a.cols() {
                    for i in 0..a.rows() {
                        ratf_rows.push(RatfRow {
                            frame: t,
                            bin: k,
                            source: j,
                            mic: i,
                            re: a[(i, j)].re,
                            im: a[(i, j)].im,
                        });
                    }
                }
            }
        }
    }
    let psd_path = dir.join("psd_estimates.csv");
    if psd_rows.is_empty() {
        write_header_only(&psd_path, &["frame", "bin", "kind", "channel", "value", "negative"])?;
    } else {
        write_rows(&psd_path, psd_rows)?;
    }
    let ratf_path = dir.join("ratf_estimates.csv");
    if ratf_rows.is_empty() {
        write_header_only(&ratf_path, &["frame", "bin", "source", "mic", "re", "im"])?;
    } else {
        write_rows(&ratf_path, ratf_rows)?;
    }
    let report_path = dir.join("solve_reports.csv");
    if est.reports.is_empty() {
        write_header_only(
            &report_path,
            &[
                "bin",
                "segment",
                "start",
                "initial_objective",
                "final_objective",
                "iterations",
                "termination",
                "max_violation",
                "pg_norm",
                "identifiability_warning",
                "data_loaded",
                "model_loaded",
                "fallback_columns",
            ],
        )
    } else {
        write_rows(&report_path, &est.reports)
    }
}

pub fn read_estimates(dir: &Path) -> Result<EstimateSet> {
    let meta: EstimateMeta = read_json(&dir.join("estimates.json"))?;
    if meta.schema_version != SCHEMA_VERSION {
        return Err(ScfaError::Configuration(format!(
            "estimate schema version {} is not supported",
            meta.schema_version
        )));
    }
    let mut est = EstimateSet::empty(meta);
    let out_of_range = |what: &str| ScfaError::Coverage(format!("{what} row outside the estimate grid"));
    for row in read_rows::<PsdRow>(&dir.join("psd_estimates.csv"))? {
        if row.frame >= est.meta.frames || row.bin >= est.meta.bins {
            return Err(out_of_range("PSD"));
        }
        let track = match row.kind.as_str() {
            "source" => Some(&mut est.psd),
            "late" => est.gamma.as_mut(),
            "self-noise" => Some(&mut est.self_noise),
            _ => None,
        }
        .ok_or_else(|| ScfaError::Coverage(format!("unexpected PSD kind `{}`", row.kind)))?;
        if row.channel >= track.channels {
            return Err(out_of_range("PSD"));
        }
        track.set(row.frame, row.bin, row.channel, row.value);
    }
    let (r, bins) = (est.meta.sources, est.meta.bins);
    for row in read_rows::<RatfRow>(&dir.join("ratf_estimates.csv"))? {
        if row.frame >= est.meta.frames || row.bin >= bins || row.source >= r {
            return Err(out_of_range("RATF"));
        }
        let slot = &mut est.mixing[row.frame * bins + row.bin];
        let mics = row.mic + 1;
        let a = slot.get_or_insert_with(|| CMat::zeros(mics, r));
        if row.mic >= a.rows() {
            let mut grown = CMat::zeros(mics, r);
            for i in 0..a.rows() {
                for j in 0..r {
                    grown[(i, j)] = a[(i, j)];
                }
            }
            *a = grown;
        }
        a[(row.mic, row.source)] = Complex::new(row.re, row.im);
    }
    est.reports = read_rows(&dir.join("solve_reports.csv"))?;
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn array_round_trip_and_shape_check() {
        let dir = tempfile::tempdir().unwrap();
        write_array(dir.path(), "x", &[2, 3], (0..6).map(|i| i as f64 * 0.5)).unwrap();
        assert_eq!(read_array(dir.path(), "x", &[2, 3]).unwrap(), vec![0.0, 0.5, 1.0, 1.5, 2.0, 2.5]);
        assert!(matches!(read_array(dir.path(), "x", &[3, 2]), Err(ScfaError::Coverage(_))));
        assert!(write_array(dir.path(), "y", &[4], (0..3).map(f64::from)).is_err());
    }

    #[test]
    fn schema_errors_name_the_field() {
        #[derive(Debug, Deserialize)]
        #[allow(dead_code)]
        struct Outer {
            inner: Inner,
        }
        #[derive(Debug, Deserialize)]
        #[allow(dead_code)]
        struct Inner {
            level: f64,
        }
        match parse_json::<Outer>(r#"{"inner": {"level": "loud"}}"#) {
            Err(ScfaError::Schema { path, .. }) => assert_eq!(path, "inner.level"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn estimates_round_trip() {
        let meta = EstimateMeta {
            schema_version: SCHEMA_VERSION,
            method: "scfa-rev1".into(),
            objective: Some("ml".into()),
            frames_per_segment: 2,
            seed: 5,
            sources: 1,
            frames: 2,
            bins: 3,
            self_noise_channels: 1,
            has_gamma: true,
            estimated_bins: vec![1],
            failures: vec![FailureRecord {
                bin: 2,
                error: "boom".into(),
            }],
            bundle_config_sha256: "00".into(),
            runtime_s: None,
        };
        let mut est = EstimateSet::empty(meta);
        for t in 0..2 {
            est.psd.set(t, 1, 0, 0.1 + t as f64 / 3.0);
            est.gamma.as_mut().unwrap().set(t, 1, 0, 1e-3);
            est.self_noise.set(t, 1, 0, 9e-6);
            est.mixing[t * 3 + 1] = Some(CMat::from_rows(2, 1, vec![Complex::new(1.0, 0.0), Complex::new(0.3, -0.7)]));
        }
        let dir = tempfile::tempdir().unwrap();
        write_estimates(dir.path(), &est).unwrap();
        let back = read_estimates(dir.path()).unwrap();
        assert_eq!(back.meta, est.meta);
        assert_eq!(back.mixing, est.mixing);
        for t in 0..2 {
            assert_eq!(back.psd.get(t, 1, 0), est.psd.get(t, 1, 0));
        }
        assert!(back.psd.get(0, 0, 0).is_nan());
    }
}
