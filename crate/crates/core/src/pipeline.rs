//! Batch operations behind the command-line front-end: synthesis, estimation,
//! evaluation and raw PCM ingestion.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::reference_bin;
use crate::beamforming::{apply_and_reconstruct, interference_cpsdm, mwf_weights, WeightSet};
use crate::bundle::{
    parse_json, read_bundle, read_estimates, read_json, sha256_hex, write_bundle, write_estimates, Bundle, BundleKind,
    EstimateMeta, EstimateSet, FailureRecord, Manifest, ReportRow, SCHEMA_VERSION,
};
use crate::error::{Result, ScfaError};
use crate::evaluation::{hermitian_angle_error, psd_log_errors, segmental_snr, LogErrors, PsdTrack, SkipRule, SsnrSettings};
use crate::linalg::{CMat, HermitianMatrix};
use crate::model::{distance_matrix, spherical_coherence, DistanceMatrix, FrequencyGrid, Geometry};
use crate::scene::{build_scene, synthesize_frames, ArrayLayout, SceneConfig};
use crate::solver::{
    permute_columns, resolve_permutation, run_online, ConstraintParams, ObjectiveKind, OnlineConfig, ProblemVariant,
    SolverOptions,
};
use crate::stft::{overlap_add, stft_subframes, CpsdmSeries, FramePlan, Window};

/// Estimation method selectable by name.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Method {
    Scfa(ProblemVariant),
    /// Whitened-eigenvalue γ, whitened-eigenvector RATF and MVDR target PSD,
    /// with the true self-noise PSD.
    ReferenceDerev,
}

pub const REFERENCE_METHOD: &str = "ref-derev";

pub fn method_names() -> Vec<&'static str> {
    ProblemVariant::presets()
        .iter()
        .map(|(n, _)| *n)
        .chain(std::iter::once(REFERENCE_METHOD))
        .collect()
}

pub fn parse_method(name: &str) -> Result<Method> {
    if name == REFERENCE_METHOD {
        return Ok(Method::ReferenceDerev);
    }
    ProblemVariant::from_name(name).map(Method::Scfa).ok_or_else(|| {
        ScfaError::Configuration(format!("unknown method `{name}`; valid methods: {}", method_names().join(", ")))
    })
}

fn config_hash<T: Serialize>(config: &T) -> Result<(serde_json::Value, String)> {
    let value = serde_json::to_value(config).map_err(|e| ScfaError::Configuration(e.to_string()))?;
    let bytes = serde_json::to_vec(&value).map_err(|e| ScfaError::Configuration(e.to_string()))?;
    Ok((value, sha256_hex(&bytes)))
}

/// Synthesizes a scene bundle in memory.
pub fn synthesize_bundle(config: &SceneConfig) -> Result<Bundle> {
    let scene = build_scene(config)?;
    if !scene.floored_bins.is_empty() {
        log::info!("coherence floored in {} bins", scene.floored_bins.len());
    }
    let synth = synthesize_frames(&scene, config, config.seed)?;
    let (config_value, config_sha256) = config_hash(config)?;
    let bins = config.grid.num_bins();
    let full_stft = config.subframes_override.is_none() && synth.bins.len() == bins;
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        kind: BundleKind::Synthetic,
        seed: config.seed,
        config_sha256,
        config: config_value,
        mic_positions: scene.geometry.mic_positions.clone(),
        reference_index: scene.geometry.reference_index,
        num_sources: config.num_sources(),
        grid: config.grid,
        plan: config.plan,
        min_distance: config.min_distance,
        frames: config.num_frames,
        subframes: synth.frames.subframes,
        bins,
        mics: scene.geometry.num_mics(),
        active_bins: synth.bins.clone(),
        signal_len: full_stft.then_some(config.num_frames * config.plan.frame_len),
        self_noise: Some(config.self_noise),
    };
    Ok(Bundle {
        manifest,
        frames: synth.frames,
        sources: Some(synth.sources),
        truth: Some(synth.truth),
    })
}

pub fn load_scene_config(path: &Path) -> Result<SceneConfig> {
    let config: SceneConfig = read_json(path)?;
    config.validate()?;
    Ok(config)
}

/// Reads a scene configuration, synthesizes it and writes the bundle.
pub fn cmd_synth(config_path: &Path, out_dir: &Path, seed: Option<u64>) -> Result<Manifest> {
    let mut config = load_scene_config(config_path)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    let bundle = synthesize_bundle(&config)?;
    write_bundle(out_dir, &bundle)?;
    Ok(bundle.manifest)
}

/// Coherence per bin and microphone distances of a bundle's array.
pub fn array_model(manifest: &Manifest) -> Result<(Vec<HermitianMatrix<f64>>, DistanceMatrix)> {
    let geometry = Geometry {
        mic_positions: manifest.mic_positions.clone(),
        source_positions: Vec::new(),
        reference_index: manifest.reference_index,
    };
    let d = distance_matrix(&geometry);
    let phi = (0..manifest.bins)
        .map(|k| spherical_coherence(&d, k, &manifest.grid).map(|c| c.matrix))
        .collect::<Result<Vec<_>>>()?;
    Ok((phi, d))
}

#[derive(Clone, Debug)]
pub struct EstimateOptions {
    pub method: String,
    pub frames_per_segment: Option<usize>,
    pub seed: Option<u64>,
    pub objective: Option<ObjectiveKind>,
    /// Record wall-clock runtime (makes outputs non-reproducible).
    pub timing: bool,
    pub solver: SolverOptions,
    pub constraints: Option<ConstraintParams>,
    pub cold_start: bool,
}

impl EstimateOptions {
    pub fn new(method: &str) -> Self {
        Self {
            method: method.into(),
            frames_per_segment: None,
            seed: None,
            objective: None,
            timing: false,
            solver: SolverOptions::default(),
            constraints: None,
            cold_start: false,
        }
    }
}

/// Runs one method on a loaded bundle.
pub fn estimate_bundle(bundle: &Bundle, options: &EstimateOptions) -> Result<EstimateSet> {
    let method = parse_method(&options.method)?;
    let m = &bundle.manifest;
    let plan = m.plan.with_frames_per_segment(options.frames_per_segment.unwrap_or(m.plan.frames_per_segment));
    plan.validate()?;
    if m.frames < plan.frames_per_segment {
        return Err(ScfaError::Configuration(format!(
            "{} frames do not fill one segment of {}",
            m.frames, plan.frames_per_segment
        )));
    }
    if m.num_sources == 0 {
        return Err(ScfaError::Configuration("estimation needs at least one source".into()));
    }
    let seed = options.seed.unwrap_or(m.seed);
    let (phi, distances) = array_model(m)?;
    let series = CpsdmSeries::from_spectra(&bundle.frames)?;
    let started = Instant::now();
    let (has_gamma, noise_channels, objective) = match method {
        Method::Scfa(v) => {
            let v = options.objective.map_or(v, |o| v.with_objective(o));
            (v.estimate_gamma, if v.shared_self_noise { 1 } else { m.mics }, Some(v.objective.to_string()))
        }
        Method::ReferenceDerev => (true, 1, None),
    };
    let meta = EstimateMeta {
        schema_version: SCHEMA_VERSION,
        method: options.method.clone(),
        objective,
        frames_per_segment: plan.frames_per_segment,
        seed,
        sources: m.num_sources,
        frames: m.frames,
        bins: m.bins,
        self_noise_channels: noise_channels,
        has_gamma,
        estimated_bins: Vec::new(),
        failures: Vec::new(),
        bundle_config_sha256: m.config_sha256.clone(),
        runtime_s: None,
    };
    let mut est = EstimateSet::empty(meta);
    let mut failures = Vec::new();
    match method {
        Method::Scfa(variant) => {
            let variant = options.objective.map_or(variant, |o| variant.with_objective(o));
            let config = OnlineConfig {
                variant,
                constraint_params: options.constraints.unwrap_or(ConstraintParams {
                    min_distance: m.min_distance,
                    ..ConstraintParams::default()
                }),
                options: options.solver,
                sources: m.num_sources,
                reference: m.reference_index,
                grid: m.grid,
                plan,
                distances: Some(distances),
                seed,
                cold_start: options.cold_start,
            };
            let out = run_online(&series, &phi, &m.active_bins, &config)?;
            for track in &out.tracks {
                let k = track.bin;
                for t in 0..m.frames {
                    for (j, &p) in track.psd(t).iter().enumerate() {
                        est.psd.set(t, k, j, p);
                    }
                    if let Some(g) = est.gamma.as_mut() {
                        g.set(t, k, 0, track.gamma(t));
                    }
                    for (i, &q) in track.self_noise(t).iter().enumerate() {
                        est.self_noise.set(t, k, i, q);
                    }
                    est.mixing[t * m.bins + k] = Some(track.mixing(t).clone());
                }
                for (si, seg) in track.segments.iter().enumerate() {
                    est.reports.push(ReportRow::new(k, si, seg.start, &seg.report));
                }
                est.meta.estimated_bins.push(k);
            }
            failures = out.failures;
        }
        Method::ReferenceDerev => {
            if m.num_sources != 1 {
                return Err(ScfaError::Configuration(format!(
                    "{REFERENCE_METHOD} handles a single source, the bundle has {}",
                    m.num_sources
                )));
            }
            let q = m
                .self_noise
                .ok_or_else(|| ScfaError::Configuration(format!("{REFERENCE_METHOD} needs the true self-noise PSD")))?;
            let results: Vec<_> = m
                .active_bins
                .par_iter()
                .map(|&k| {
                    (
                        k,
                        reference_bin(&series, &phi[k], k, q, m.reference_index, plan.frames_per_segment, plan.segment_hop),
                    )
                })
                .collect();
            for (k, r) in results {
                match r {
                    Ok(track) => {
                        if track.low_confidence_frames > 0 {
                            log::debug!("bin {k}: {} low-confidence RATF frames", track.low_confidence_frames);
                        }
                        for t in 0..m.frames {
                            est.psd.set(t, k, 0, track.psd[t]);
                            est.gamma.as_mut().expect("reference estimates γ").set(t, k, 0, track.gamma[t]);
                            est.self_noise.set(t, k, 0, q);
                            est.mixing[t * m.bins + k] = Some(CMat::from_rows(m.mics, 1, track.ratf[t].clone()));
                        }
                        est.meta.estimated_bins.push(k);
                    }
                    Err(e) => failures.push((k, e)),
                }
            }
        }
    }
    est.meta.failures = failures
        .into_iter()
        .map(|(bin, e)| FailureRecord {
            bin,
            error: e.to_string(),
        })
        .collect();
    if options.timing {
        est.meta.runtime_s = Some(started.elapsed().as_secs_f64());
    }
    Ok(est)
}

pub fn cmd_estimate(bundle_dir: &Path, out_dir: &Path, options: &EstimateOptions) -> Result<EstimateSet> {
    parse_method(&options.method)?;
    let bundle = read_bundle(bundle_dir)?;
    let est = estimate_bundle(&bundle, options)?;
    write_estimates(out_dir, &est)?;
    Ok(est)
}

/// One row of the metrics CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub schema_version: u32,
    pub method: String,
    pub frames_per_segment: usize,
    pub seed: u64,
    #[serde(rename = "E_s")]
    pub e_s: f64,
    #[serde(rename = "E_s_ov")]
    pub e_s_ov: f64,
    #[serde(rename = "E_s_un")]
    pub e_s_un: f64,
    #[serde(rename = "E_l")]
    pub e_l: Option<f64>,
    #[serde(rename = "E_l_ov")]
    pub e_l_ov: Option<f64>,
    #[serde(rename = "E_l_un")]
    pub e_l_un: Option<f64>,
    #[serde(rename = "E_v")]
    pub e_v: f64,
    #[serde(rename = "E_v_ov")]
    pub e_v_ov: f64,
    #[serde(rename = "E_v_un")]
    pub e_v_un: f64,
    #[serde(rename = "E_A")]
    pub e_a: f64,
    #[serde(rename = "SSNR")]
    pub ssnr: Option<f64>,
    pub runtime_s: Option<f64>,
}

pub const METRICS_HEADER: &str =
    "schema_version,method,frames_per_segment,seed,E_s,E_s_ov,E_s_un,E_l,E_l_ov,E_l_un,E_v,E_v_ov,E_v_un,E_A,SSNR,runtime_s";

/// Estimates aligned to the truth over the active bins.
struct Aligned {
    truth_psd: PsdTrack,
    psd: PsdTrack,
    truth_gamma: PsdTrack,
    gamma: Option<PsdTrack>,
    truth_noise: PsdTrack,
    noise: PsdTrack,
    truth_mixing: Vec<CMat<f64>>,
    mixing: Vec<CMat<f64>>,
}

fn align(bundle: &Bundle, est: &EstimateSet) -> Result<Aligned> {
    let m = &bundle.manifest;
    let truth = bundle
        .truth
        .as_ref()
        .ok_or_else(|| ScfaError::Configuration("the bundle has no ground truth to evaluate against".into()))?;
    if est.meta.frames != m.frames || est.meta.bins != m.bins || est.meta.sources != m.num_sources {
        return Err(ScfaError::Coverage("estimate shape does not match the bundle".into()));
    }
    if est.meta.bundle_config_sha256 != m.config_sha256 {
        return Err(ScfaError::Configuration("estimates were produced from a different bundle".into()));
    }
    let missing: Vec<usize> = m
        .active_bins
        .iter()
        .copied()
        .filter(|k| !est.meta.estimated_bins.contains(k))
        .collect();
    if !missing.is_empty() {
        return Err(ScfaError::Coverage(format!("no estimates for bins {missing:?}")));
    }
    let (frames, r, nb) = (m.frames, m.num_sources, m.active_bins.len());
    let c = est.self_noise.channels;
    let mut out = Aligned {
        truth_psd: PsdTrack::zeros(frames, nb, r),
        psd: PsdTrack::zeros(frames, nb, r),
        truth_gamma: PsdTrack::zeros(frames, nb, 1),
        gamma: est.gamma.as_ref().map(|_| PsdTrack::zeros(frames, nb, 1)),
        truth_noise: PsdTrack::from_fn(frames, nb, c, |_, _, _| truth.self_noise),
        noise: PsdTrack::zeros(frames, nb, c),
        truth_mixing: Vec::with_capacity(frames * nb),
        mixing: Vec::with_capacity(frames * nb),
    };
    for t in 0..frames {
        for (b, &k) in m.active_bins.iter().enumerate() {
            let a_true = truth.mixing(t, k);
            let a_est = est
                .mixing(t, k)
                .ok_or_else(|| ScfaError::Coverage(format!("no RATF estimate at frame {t}, bin {k}")))?;
            let perm = if r > 1 {
                resolve_permutation(a_est, a_true)?
            } else {
                (0..r).collect()
            };
            for j in 0..r {
                out.truth_psd.set(t, b, j, truth.psd.get(t, k, j));
                out.psd.set(t, b, j, est.psd.get(t, k, perm[j]));
            }
            out.truth_gamma.set(t, b, 0, truth.gamma.get(t, k, 0));
            if let (Some(g), Some(src)) = (out.gamma.as_mut(), est.gamma.as_ref()) {
                g.set(t, b, 0, src.get(t, k, 0));
            }
            for i in 0..c {
                out.noise.set(t, b, i, est.self_noise.get(t, k, i));
            }
            out.truth_mixing.push(a_true.clone());
            out.mixing.push(permute_columns(a_est, &perm));
        }
    }
    if [&out.psd, &out.noise].iter().any(|p| p.data.iter().any(|v| !v.is_finite()))
        || out.gamma.as_ref().is_some_and(|g| g.data.iter().any(|v| !v.is_finite()))
    {
        return Err(ScfaError::Coverage("estimates contain missing or non-finite values".into()));
    }
    Ok(out)
}

/// SSNR of the per-source multichannel Wiener filters built from the estimates.
fn estimate_ssnr(bundle: &Bundle, aligned: &Aligned, phi: &[HermitianMatrix<f64>]) -> Result<Option<f64>> {
    let m = &bundle.manifest;
    let (Some(signal_len), Some(sources)) = (m.signal_len, bundle.sources.as_ref()) else {
        return Ok(None);
    };
    let r = m.num_sources;
    let nb = m.active_bins.len();
    let mut weights = WeightSet::new(m.frames, m.bins, r);
    for t in 0..m.frames {
        for (b, &k) in m.active_bins.iter().enumerate() {
            let a = &aligned.mixing[t * nb + b];
            let psd: Vec<f64> = (0..r).map(|j| aligned.psd.get(t, b, j).max(0.0)).collect();
            let gamma = aligned.gamma.as_ref().map_or(0.0, |g| g.get(t, b, 0).max(0.0));
            let q: Vec<f64> = (0..aligned.noise.channels).map(|i| aligned.noise.get(t, b, i).max(0.0)).collect();
            for j in 0..r {
                let noise = interference_cpsdm(a, &psd, j, gamma, &q, &phi[k]);
                weights.set(t, k, j, mwf_weights(psd[j], &a.column(j), &noise)?);
            }
        }
    }
    let enhanced = apply_and_reconstruct(&weights, &bundle.frames, &m.plan, &m.grid, signal_len)?;
    let clean = (0..r)
        .map(|j| {
            let mono: Vec<Complex<f64>> = sources.data.iter().skip(j).step_by(r).copied().collect();
            overlap_add(&mono, m.frames, m.subframes, &m.plan, &m.grid, Window::SqrtHann, signal_len)
        })
        .collect::<Result<Vec<_>>>()?;
    let settings = SsnrSettings {
        subframe_len: m.plan.subframe_len,
        hop: m.plan.subframe_hop()?,
        ..SsnrSettings::default()
    };
    match segmental_snr(&clean, &enhanced, &settings) {
        Ok(v) => Ok(Some(v)),
        Err(ScfaError::InsufficientActivity { source_index }) => {
            log::warn!("SSNR skipped: source {source_index} is never active");
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

/// Scores one estimate set against its bundle.
pub fn evaluate(bundle: &Bundle, est: &EstimateSet) -> Result<MetricRow> {
    let aligned = align(bundle, est)?;
    let r = bundle.manifest.num_sources as f64;
    let skip = SkipRule {
        frames_per_segment: est.meta.frames_per_segment,
        ..SkipRule::default()
    };
    let e_s = psd_log_errors(&aligned.truth_psd, &aligned.psd, &skip, 1.0)?;
    let e_l: Option<LogErrors> = aligned
        .gamma
        .as_ref()
        .map(|g| psd_log_errors(&aligned.truth_gamma, g, &skip, r))
        .transpose()?;
    let e_v = psd_log_errors(&aligned.truth_noise, &aligned.noise, &skip, r)?;
    let e_a = hermitian_angle_error(&aligned.truth_mixing, &aligned.mixing)?;
    let (phi, _) = array_model(&bundle.manifest)?;
    let ssnr = estimate_ssnr(bundle, &aligned, &phi)?;
    Ok(MetricRow {
        schema_version: SCHEMA_VERSION,
        method: est.meta.method.clone(),
        frames_per_segment: est.meta.frames_per_segment,
        seed: est.meta.seed,
        e_s: e_s.total,
        e_s_ov: e_s.over,
        e_s_un: e_s.under,
        e_l: e_l.map(|e| e.total),
        e_l_ov: e_l.map(|e| e.over),
        e_l_un: e_l.map(|e| e.under),
        e_v: e_v.total,
        e_v_ov: e_v.over,
        e_v_un: e_v.under,
        e_a,
        ssnr,
        runtime_s: est.meta.runtime_s,
    })
}

pub fn write_metrics(path: &Path, rows: &[MetricRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| ScfaError::Configuration(e.to_string()))?;
    }
    let body = w.into_inner().map_err(|e| ScfaError::Configuration(e.to_string()))?;
    let mut text = format!("{METRICS_HEADER}\n").into_bytes();
    text.extend(body);
    fs::write(path, text).map_err(|e| ScfaError::io(path, e))
}

/// Evaluates every estimate directory against the bundle; one row each.
pub fn cmd_evaluate(bundle_dir: &Path, estimate_dirs: &[PathBuf], out_path: &Path) -> Result<Vec<MetricRow>> {
    if estimate_dirs.is_empty() {
        return Err(ScfaError::Configuration("no estimate directories given".into()));
    }
    let bundle = read_bundle(bundle_dir)?;
    let rows = estimate_dirs
        .iter()
        .map(|d| evaluate(&bundle, &read_estimates(d)?))
        .collect::<Result<Vec<_>>>()?;
    write_metrics(out_path, &rows)?;
    Ok(rows)
}

/// Array and framing of a raw recording.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestConfig {
    pub array: ArrayLayout,
    #[serde(default)]
    pub reference_index: usize,
    pub sources: usize,
    pub fft_len: usize,
    #[serde(default = "default_speed_of_sound")]
    pub speed_of_sound: f64,
    pub plan: FramePlan,
    #[serde(default = "default_min_distance")]
    pub min_distance: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_speed_of_sound() -> f64 {
    343.0
}

fn default_min_distance() -> f64 {
    0.01
}

/// Sidecar of a raw interleaved little-endian f32 recording.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PcmSidecar {
    pub sampling_rate: f64,
    pub channels: usize,
}

/// Converts interleaved f32 PCM (sidecar at `<pcm>.json`) into a bundle
/// without ground truth.
pub fn cmd_ingest(pcm_path: &Path, config_path: &Path, out_dir: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(config_path).map_err(|e| ScfaError::io(config_path, e))?;
    let config: IngestConfig = parse_json(&text)?;
    let sidecar: PcmSidecar = read_json(&pcm_path.with_extension("json"))?;
    let mics = config.array.positions()?;
    if sidecar.channels != mics.len() {
        return Err(ScfaError::Configuration(format!(
            "recording has {} channels, the array {}",
            sidecar.channels,
            mics.len()
        )));
    }
    if config.reference_index >= mics.len() {
        return Err(ScfaError::Configuration("reference microphone out of range".into()));
    }
    let grid = FrequencyGrid::new(config.fft_len, sidecar.sampling_rate, config.speed_of_sound)?;
    let bytes = fs::read(pcm_path).map_err(|e| ScfaError::io(pcm_path, e))?;
    if bytes.len() % (4 * sidecar.channels) != 0 {
        return Err(ScfaError::Configuration("PCM length is not a whole number of samples".into()));
    }
    let samples: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let len = samples.len() / sidecar.channels;
    let signal: Vec<Vec<f64>> = (0..sidecar.channels)
        .map(|ch| samples.iter().skip(ch).step_by(sidecar.channels).copied().collect())
        .collect();
    let frames = stft_subframes(&signal, &config.plan, &grid, Window::SqrtHann)?;
    let (config_value, config_sha256) = config_hash(&config)?;
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        kind: BundleKind::Recording,
        seed: config.seed,
        config_sha256,
        config: config_value,
        mic_positions: mics,
        reference_index: config.reference_index,
        num_sources: config.sources,
        grid,
        plan: config.plan,
        min_distance: config.min_distance,
        frames: frames.frames,
        subframes: frames.subframes,
        bins: grid.num_bins(),
        mics: sidecar.channels,
        active_bins: (0..grid.num_bins()).collect(),
        signal_len: Some(len),
        self_noise: None,
    };
    let bundle = Bundle {
        manifest,
        frames,
        sources: None,
        truth: None,
    };
    write_bundle(out_dir, &bundle)?;
    Ok(bundle.manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for name in method_names() {
            parse_method(name).unwrap();
        }
        match parse_method("magic") {
            Err(ScfaError::Configuration(msg)) => assert!(msg.contains("scfa-rev1") && msg.contains(REFERENCE_METHOD)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn metrics_header_matches_row_fields() {
        let row = MetricRow {
            schema_version: 1,
            method: "x".into(),
            frames_per_segment: 1,
            seed: 0,
            e_s: 0.0,
            e_s_ov: 0.0,
            e_s_un: 0.0,
            e_l: None,
            e_l_ov: None,
            e_l_un: None,
            e_v: 0.0,
            e_v_ov: 0.0,
            e_v_un: 0.0,
            e_a: 0.0,
            ssnr: None,
            runtime_s: None,
        };
        let mut w = csv::Writer::from_writer(Vec::new());
        w.serialize(&row).unwrap();
        let text = String::from_utf8(w.into_inner().unwrap()).unwrap();
        assert_eq!(text.lines().next().unwrap(), METRICS_HEADER);
    }
}
