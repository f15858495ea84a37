use std::fs;
use std::path::{Path, PathBuf};

use scfa_core::bundle::{
    read_bundle, read_estimates, write_estimates, Bundle, EstimateMeta, EstimateSet, SCHEMA_VERSION,
};
use scfa_core::pipeline::{
    cmd_estimate, cmd_evaluate, cmd_ingest, cmd_synth, estimate_bundle, evaluate, synthesize_bundle, EstimateOptions,
    METRICS_HEADER,
};
use scfa_core::scene::{table_config, PsdProfile, SceneConfig};
use scfa_core::{FramePlan, FrequencyGrid, ScfaError};
use tempfile::TempDir;

fn toy(sources: usize, seed: u64) -> SceneConfig {
    SceneConfig {
        active_bins: Some(vec![40, 90]),
        subframes_override: Some(37),
        ..table_config(sources, 6, seed)
    }
}

/// Full-STFT scene small enough to resynthesise quickly.
fn tiny(seed: u64) -> SceneConfig {
    SceneConfig {
        grid: FrequencyGrid::new(32, 16000.0, 343.0).unwrap(),
        plan: FramePlan {
            frame_len: 64,
            subframe_len: 32,
            subframe_overlap: 0.5,
            frames_per_segment: 2,
            segment_hop: 1,
        },
        num_frames: 6,
        ..table_config(1, 6, seed)
    }
}

fn write_config(dir: &Path, config: &SceneConfig) -> PathBuf {
    let path = dir.join("scene.json");
    fs::write(&path, serde_json::to_string_pretty(config).unwrap()).unwrap();
    path
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

/// Estimates equal to the ground truth on every active tile.
fn truth_estimates(bundle: &Bundle, frames_per_segment: usize) -> EstimateSet {
    let m = &bundle.manifest;
    let truth = bundle.truth.as_ref().unwrap();
    let mut est = EstimateSet::empty(EstimateMeta {
        schema_version: SCHEMA_VERSION,
        method: "oracle".into(),
        objective: None,
        frames_per_segment,
        seed: m.seed,
        sources: m.num_sources,
        frames: m.frames,
        bins: m.bins,
        self_noise_channels: 1,
        has_gamma: true,
        estimated_bins: m.active_bins.clone(),
        failures: Vec::new(),
        bundle_config_sha256: m.config_sha256.clone(),
        runtime_s: None,
    });
    for &k in &m.active_bins {
        for t in 0..m.frames {
            for j in 0..m.num_sources {
                est.psd.set(t, k, j, truth.psd.get(t, k, j));
            }
            est.gamma.as_mut().unwrap().set(t, k, 0, truth.gamma.get(t, k, 0));
            est.self_noise.set(t, k, 0, truth.self_noise);
            est.mixing[t * m.bins + k] = Some(truth.mixing(t, k).clone());
        }
    }
    est
}

#[test]
fn synthesis_is_byte_reproducible() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &toy(2, 4));
    cmd_synth(&cfg, &tmp.path().join("a"), None).unwrap();
    cmd_synth(&cfg, &tmp.path().join("b"), None).unwrap();
    assert_eq!(dir_bytes(&tmp.path().join("a")), dir_bytes(&tmp.path().join("b")));
    assert!(tmp.path().join("a/truth_psd.f32").exists());
    let m = cmd_synth(&cfg, &tmp.path().join("c"), Some(5)).unwrap();
    assert_eq!(m.seed, 5);
    assert_ne!(dir_bytes(&tmp.path().join("a")), dir_bytes(&tmp.path().join("c")));
}

#[test]
fn table_scene_manifest_echoes_its_parameters() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &toy(3, 1));
    let m = cmd_synth(&cfg, &tmp.path().join("b"), None).unwrap();
    assert_eq!((m.mics, m.grid.fft_len, m.plan.subframe_len, m.num_sources), (4, 256, 200, 3));
    let back = read_bundle(&tmp.path().join("b")).unwrap().manifest;
    assert_eq!(back, m);
    assert_eq!(back.config["grid"]["fft_len"], 256);
}

#[test]
fn config_errors_name_the_field() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("bad.json");
    let mut value = serde_json::to_value(toy(1, 0)).unwrap();
    value["plan"]["subframe_len"] = serde_json::json!("two hundred");
    fs::write(&path, value.to_string()).unwrap();
    match cmd_synth(&path, &tmp.path().join("out"), None) {
        Err(ScfaError::Schema { path, .. }) => assert_eq!(path, "plan.subframe_len"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn constrained_variants_stay_nonnegative_and_parra_is_flagged() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &toy(1, 2));
    let bundle = tmp.path().join("b");
    cmd_synth(&cfg, &bundle, None).unwrap();
    for method in ["scfa-no-rev", "parra"] {
        let out = tmp.path().join(method);
        let est = cmd_estimate(&bundle, &out, &EstimateOptions::new(method)).unwrap();
        assert!(est.meta.failures.is_empty());
        let text = fs::read_to_string(out.join("psd_estimates.csv")).unwrap();
        assert!(text.starts_with("frame,bin,kind,channel,value,negative\n"));
        for line in text.lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            let v: f64 = f[4].parse().unwrap();
            assert_eq!(f[5] == "1", v < 0.0, "{line}");
            if method == "scfa-no-rev" {
                assert!(v >= 0.0, "{line}");
            }
        }
    }
}

#[test]
fn reference_chain_uses_true_self_noise() {
    let config = toy(1, 3);
    let bundle = synthesize_bundle(&config).unwrap();
    let est = estimate_bundle(&bundle, &EstimateOptions::new("ref-derev")).unwrap();
    assert_eq!(est.meta.estimated_bins, vec![40, 90]);
    for t in 0..6 {
        for k in [40, 90] {
            assert_eq!(est.self_noise.get(t, k, 0), config.self_noise);
            assert!(est.gamma.as_ref().unwrap().get(t, k, 0) >= 0.0);
            assert!(est.psd.get(t, k, 0) >= 0.0);
            assert_eq!(est.mixing(t, k).unwrap()[(0, 0)].re, 1.0);
        }
    }
    let two = synthesize_bundle(&toy(2, 3)).unwrap();
    assert!(matches!(
        estimate_bundle(&two, &EstimateOptions::new("ref-derev")),
        Err(ScfaError::Configuration(_))
    ));
}

#[test]
fn unknown_method_lists_valid_names() {
    let tmp = TempDir::new().unwrap();
    match cmd_estimate(tmp.path(), &tmp.path().join("o"), &EstimateOptions::new("best")) {
        Err(ScfaError::Configuration(msg)) => assert!(msg.contains("scfa-no-rev2") && msg.contains("parra")),
        other => panic!("{other:?}"),
    }
}

#[test]
fn ground_truth_scores_zero_and_clamps_ssnr() {
    let config = SceneConfig {
        late_psd: PsdProfile::Constant { level: 0.0 },
        self_noise: 0.0,
        ..tiny(6)
    };
    let bundle = synthesize_bundle(&config).unwrap();
    assert!(bundle.manifest.signal_len.is_some());
    let tmp = TempDir::new().unwrap();
    write_estimates(tmp.path(), &truth_estimates(&bundle, 2)).unwrap();
    let row = evaluate(&bundle, &read_estimates(tmp.path()).unwrap()).unwrap();
    assert_eq!((row.e_s, row.e_l, row.e_v, row.e_a), (0.0, Some(0.0), 0.0, 0.0));
    let ssnr = row.ssnr.unwrap();
    assert!((ssnr - 35.0).abs() < 1e-9, "{ssnr}");
}

#[test]
fn metrics_rows_follow_inputs_in_order() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &toy(1, 8));
    let bundle = tmp.path().join("b");
    cmd_synth(&cfg, &bundle, None).unwrap();
    let mut dirs = Vec::new();
    for b in [1, 2, 4, 6] {
        let out = tmp.path().join(format!("rev1-{b}"));
        let opts = EstimateOptions {
            frames_per_segment: Some(b),
            ..EstimateOptions::new("scfa-rev1")
        };
        cmd_estimate(&bundle, &out, &opts).unwrap();
        dirs.push(out);
    }
    let ref_dir = tmp.path().join("ref");
    cmd_estimate(&bundle, &ref_dir, &EstimateOptions::new("ref-derev")).unwrap();
    dirs.push(ref_dir);
    let out = tmp.path().join("metrics.csv");
    let rows = cmd_evaluate(&bundle, &dirs, &out).unwrap();
    let got: Vec<(String, usize)> = rows.iter().map(|r| (r.method.clone(), r.frames_per_segment)).collect();
    assert_eq!(
        got,
        vec![
            ("scfa-rev1".to_string(), 1),
            ("scfa-rev1".to_string(), 2),
            ("scfa-rev1".to_string(), 4),
            ("scfa-rev1".to_string(), 6),
            ("ref-derev".to_string(), 6)
        ]
    );
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 6);
    assert!(text.starts_with(
        "schema_version,method,frames_per_segment,seed,E_s,E_s_ov,E_s_un,E_l,E_l_ov,E_l_un,E_v,E_v_ov,E_v_un,E_A,SSNR,runtime_s\n"
    ));
    assert!(text.starts_with(METRICS_HEADER));
    for r in &rows {
        assert!(r.e_s.is_finite() && r.e_a.is_finite());
        assert!((r.e_s - r.e_s_ov - r.e_s_un).abs() <= 1e-10);
        assert!(r.ssnr.is_none() && r.runtime_s.is_none());
    }
}

#[test]
fn estimation_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &toy(2, 9));
    let bundle = tmp.path().join("b");
    cmd_synth(&cfg, &bundle, None).unwrap();
    for name in ["x", "y"] {
        cmd_estimate(&bundle, &tmp.path().join(name), &EstimateOptions::new("scfa-rev2")).unwrap();
    }
    assert_eq!(dir_bytes(&tmp.path().join("x")), dir_bytes(&tmp.path().join("y")));
}

#[test]
fn missing_bins_are_a_coverage_error() {
    let bundle = synthesize_bundle(&toy(1, 10)).unwrap();
    let mut est = truth_estimates(&bundle, 1);
    est.meta.estimated_bins = vec![40];
    assert!(matches!(evaluate(&bundle, &est), Err(ScfaError::Coverage(_))));
    let mut est = truth_estimates(&bundle, 1);
    est.mixing[3 * bundle.manifest.bins + 90] = None;
    assert!(matches!(evaluate(&bundle, &est), Err(ScfaError::Coverage(_))));
}

#[test]
fn raw_pcm_ingestion_feeds_estimation() {
    let tmp = TempDir::new().unwrap();
    let pcm = tmp.path().join("rec.f32");
    let len = 16000;
    let mut bytes = Vec::with_capacity(len * 4 * 4);
    for n in 0..len {
        for ch in 0..4 {
            let v = ((n * 7919 + ch * 104_729) % 1000) as f32 / 1000.0 - 0.5;
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(&pcm, bytes).unwrap();
    fs::write(tmp.path().join("rec.json"), r#"{"sampling_rate": 16000, "channels": 4}"#).unwrap();
    let config = tmp.path().join("ingest.json");
    fs::write(
        &config,
        r#"{
            "array": {"kind": "circular", "num_mics": 4, "spacing": 0.02, "center": [0, 0, 0]},
            "sources": 1,
            "fft_len": 256,
            "plan": {"frame_len": 2000, "subframe_len": 200, "subframe_overlap": 0.75, "frames_per_segment": 4, "segment_hop": 1}
        }"#,
    )
    .unwrap();
    let out = tmp.path().join("bundle");
    let m = cmd_ingest(&pcm, &config, &out).unwrap();
    assert_eq!((m.frames, m.subframes, m.mics), (8, 37, 4));
    let bundle = read_bundle(&out).unwrap();
    assert!(bundle.truth.is_none());
    assert!(matches!(
        estimate_bundle(&bundle, &EstimateOptions::new("ref-derev")),
        Err(ScfaError::Configuration(_))
    ));
    fs::write(tmp.path().join("rec.json"), r#"{"sampling_rate": 16000, "channels": 2}"#).unwrap();
    assert!(cmd_ingest(&pcm, &config, &tmp.path().join("b2")).is_err());
}
