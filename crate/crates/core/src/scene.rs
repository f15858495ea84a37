//! Ground-truth scenes and model-consistent sub-frame spectra.

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ScfaError};
use crate::evaluation::PsdTrack;
use crate::linalg::{hermitian_eig, norm2, CMat};
use crate::model::{distance_matrix, relative_green, spherical_coherence, DistanceMatrix, FrequencyGrid, Geometry, Point};
use crate::stft::{FramePlan, SubframeSpectra};

/// Per-frame level of one PSD track.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PsdProfile {
    Constant {
        level: f64,
    },
    /// Level in dB performs a random walk over frames, clipped to
    /// `[min_db, max_db]`; each bin starts at `start_db` plus a uniform
    /// offset in `±bin_spread_db`.
    RandomWalkDb {
        start_db: f64,
        step_db: f64,
        min_db: f64,
        max_db: f64,
        #[serde(default)]
        bin_spread_db: f64,
    },
}

impl PsdProfile {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PsdProfile::Constant { level } if !(level >= 0.0) || !level.is_finite() => {
                Err(ScfaError::Scene(format!("constant PSD level {level} must be finite and ≥ 0")))
            }
            PsdProfile::RandomWalkDb {
                start_db,
                step_db,
                min_db,
                max_db,
                bin_spread_db,
            } if !(min_db <= max_db)
                || ![start_db, step_db, min_db, max_db, bin_spread_db].iter().all(|v| v.is_finite())
                || step_db < 0.0
                || bin_spread_db < 0.0 =>
            {
                Err(ScfaError::Scene("random-walk profile needs finite values with min ≤ max".into()))
            }
            _ => Ok(()),
        }
    }

    fn track<R: Rng>(&self, frames: usize, rng: &mut R) -> Vec<f64> {
        match *self {
            PsdProfile::Constant { level } => vec![level; frames],
            PsdProfile::RandomWalkDb {
                start_db,
                step_db,
                min_db,
                max_db,
                bin_spread_db,
            } => {
                let mut db = (start_db + bin_spread_db * rng.random_range(-1.0..=1.0)).clamp(min_db, max_db);
                (0..frames)
                    .map(|t| {
                        if t > 0 {
                            db = (db + step_db * rng.random_range(-1.0..=1.0)).clamp(min_db, max_db);
                        }
                        10f64.powf(db / 10.0)
                    })
                    .collect()
            }
        }
    }
}

/// Microphone layout: explicit positions or a circle with given spacing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ArrayLayout {
    Positions { positions: Vec<Point> },
    Circular { num_mics: usize, spacing: f64, center: Point },
}

impl ArrayLayout {
    pub fn positions(&self) -> Result<Vec<Point>> {
        match self {
            ArrayLayout::Positions { positions } => Ok(positions.clone()),
            ArrayLayout::Circular {
                num_mics,
                spacing,
                center,
            } => {
                if *num_mics == 0 || !(*spacing > 0.0) {
                    return Err(ScfaError::InvalidGeometry("circular array needs mics and a positive spacing".into()));
                }
                Ok(Geometry::circular_array(*num_mics, *spacing, *center))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub array: ArrayLayout,
    /// Zero-based reference microphone.
    #[serde(default)]
    pub reference_index: usize,
    /// Source positions; the number of sources is their count.
    pub sources: Vec<Point>,
    /// Optional later positions: entry `e` applies from frame
    /// `(e + 1) · frames_per_position` on.
    #[serde(default)]
    pub trajectory: Vec<Vec<Point>>,
    #[serde(default)]
    pub frames_per_position: Option<usize>,
    /// One profile per source, or a single profile shared by all.
    pub source_psd: Vec<PsdProfile>,
    pub late_psd: PsdProfile,
    pub self_noise: f64,
    pub grid: FrequencyGrid,
    pub plan: FramePlan,
    pub num_frames: usize,
    /// Hermitian-angle radius of the per-frame RATF perturbation.
    #[serde(default)]
    pub mismatch_radians: f64,
    /// Bins to synthesize; all one-sided bins when absent.
    #[serde(default)]
    pub active_bins: Option<Vec<usize>>,
    /// Sub-frames per frame, overriding the plan (test mode, no time signal).
    #[serde(default)]
    pub subframes_override: Option<usize>,
    /// Minimum source–microphone distance λ.
    #[serde(default = "default_min_distance")]
    pub min_distance: f64,
    pub seed: u64,
}

fn default_min_distance() -> f64 {
    0.01
}

impl SceneConfig {
    pub fn num_sources(&self) -> usize {
        self.sources.len()
    }

    pub fn bins(&self) -> Vec<usize> {
        self.active_bins
            .clone()
            .unwrap_or_else(|| (0..self.grid.num_bins()).collect())
    }

    pub fn subframes_per_frame(&self) -> Result<usize> {
        match self.subframes_override {
            Some(0) => Err(ScfaError::Configuration("sub-frame override must be positive".into())),
            Some(n) => Ok(n),
            None => self.plan.subframes_per_frame(),
        }
    }

    fn profile(&self, j: usize) -> &PsdProfile {
        if self.source_psd.len() == 1 {
            &self.source_psd[0]
        } else {
            &self.source_psd[j]
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.plan.validate()?;
        let r = self.num_sources();
        if r > 0 && self.source_psd.len() != 1 && self.source_psd.len() != r {
            return Err(ScfaError::Configuration(format!(
                "{} source PSD profiles for {r} sources",
                self.source_psd.len()
            )));
        }
        for p in self.source_psd.iter().chain(std::iter::once(&self.late_psd)) {
            p.validate()?;
        }
        if !(self.self_noise >= 0.0) || !self.self_noise.is_finite() {
            return Err(ScfaError::Scene("self-noise PSD must be finite and ≥ 0".into()));
        }
        if self.num_frames == 0 {
            return Err(ScfaError::Configuration("at least one frame is required".into()));
        }
        if self.frames_per_position == Some(0) || (self.frames_per_position.is_none() && !self.trajectory.is_empty()) {
            return Err(ScfaError::Configuration("a trajectory needs a positive frames_per_position".into()));
        }
        if self.trajectory.iter().any(|p| p.len() != r) {
            return Err(ScfaError::Configuration("every trajectory entry needs one position per source".into()));
        }
        if !(self.mismatch_radians >= 0.0 && self.mismatch_radians < std::f64::consts::FRAC_PI_2) {
            return Err(ScfaError::Configuration("mismatch radius must lie in [0, π/2)".into()));
        }
        if let Some(bins) = &self.active_bins {
            if let Some(k) = bins.iter().find(|&&k| k >= self.grid.num_bins()) {
                return Err(ScfaError::Configuration(format!("active bin {k} out of range")));
            }
            if bins.is_empty() || bins.windows(2).any(|w| w[0] >= w[1]) {
                return Err(ScfaError::Configuration("active bins must be non-empty and strictly increasing".into()));
            }
        }
        self.subframes_per_frame()?;
        Ok(())
    }
}

/// Geometry-derived quantities of a scene.
#[derive(Clone, Debug)]
pub struct SceneModel {
    pub geometry: Geometry,
    /// Source positions per position epoch (epoch 0 = `geometry`).
    pub epochs: Vec<Vec<Point>>,
    pub frames_per_position: usize,
    pub distances: DistanceMatrix,
    /// Spherical-isotropic coherence per bin.
    pub coherence: Vec<CMat<f64>>,
    /// Bins where the coherence needed eigenvalue flooring.
    pub floored_bins: Vec<usize>,
    /// Anechoic RATFs per epoch and bin, indexed `epoch * bins + k`.
    pub mixing: Vec<CMat<f64>>,
    pub grid: FrequencyGrid,
}

impl SceneModel {
    pub fn epoch_of_frame(&self, t: usize) -> usize {
        (t / self.frames_per_position).min(self.epochs.len() - 1)
    }

    pub fn mixing_at(&self, t: usize, k: usize) -> &CMat<f64> {
        &self.mixing[self.epoch_of_frame(t) * self.grid.num_bins() + k]
    }
}

fn ratf_matrix(mics: &[Point], sources: &[Point], reference: usize, k: usize, grid: &FrequencyGrid) -> Result<CMat<f64>> {
    let mut a = CMat::zeros(mics.len(), sources.len());
    for (j, s) in sources.iter().enumerate() {
        let d_ref = crate::model::euclidean(&mics[reference], s);
        for (i, m) in mics.iter().enumerate() {
            a[(i, j)] = if i == reference {
                Complex::new(1.0, 0.0)
            } else {
                relative_green(d_ref, crate::model::euclidean(m, s), k, grid)?
            };
        }
    }
    Ok(a)
}

pub fn build_scene(config: &SceneConfig) -> Result<SceneModel> {
    config.validate()?;
    let geometry = Geometry {
        mic_positions: config.array.positions()?,
        source_positions: config.sources.clone(),
        reference_index: config.reference_index,
    };
    geometry.validate(config.min_distance)?;
    let mut epochs = vec![config.sources.clone()];
    for positions in &config.trajectory {
        Geometry {
            source_positions: positions.clone(),
            ..geometry.clone()
        }
        .validate(config.min_distance)?;
        epochs.push(positions.clone());
    }
    let distances = distance_matrix(&geometry);
    let bins = config.grid.num_bins();
    let mut coherence = Vec::with_capacity(bins);
    let mut floored_bins = Vec::new();
    for k in 0..bins {
        let c = spherical_coherence::<f64>(&distances, k, &config.grid)?;
        if c.floored {
            floored_bins.push(k);
        }
        coherence.push(c.matrix);
    }
    let mut mixing = Vec::with_capacity(epochs.len() * bins);
    for positions in &epochs {
        for k in 0..bins {
            mixing.push(ratf_matrix(&geometry.mic_positions, positions, geometry.reference_index, k, &config.grid)?);
        }
    }
    Ok(SceneModel {
        geometry,
        epochs,
        frames_per_position: config.frames_per_position.unwrap_or(usize::MAX),
        distances,
        coherence,
        floored_bins,
        mixing,
        grid: config.grid.clone(),
    })
}

/// True parameters of every tile.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    /// Source PSDs `(t, k, j)`.
    pub psd: PsdTrack,
    /// Late-reverberation PSD `(t, k, 0)`.
    pub gamma: PsdTrack,
    /// Self-noise PSD, shared by all microphones.
    pub self_noise: f64,
    /// RATFs per tile, indexed `t * bins + k`.
    pub mixing: Vec<CMat<f64>>,
}

impl GroundTruth {
    pub fn mixing(&self, t: usize, k: usize) -> &CMat<f64> {
        &self.mixing[t * self.psd.bins + k]
    }
}

/// Synthesized observation and the pieces needed to score it.
#[derive(Clone, Debug)]
pub struct SynthesizedScene {
    /// Microphone sub-frame spectra `y_θ(t,k)`.
    pub frames: SubframeSpectra<f64>,
    /// Source components at the reference microphone, one channel per source.
    pub sources: SubframeSpectra<f64>,
    pub truth: GroundTruth,
    pub bins: Vec<usize>,
}

fn complex_normal<R: Rng>(rng: &mut R) -> Complex<f64> {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Rotates `a` by exactly `radius` in Hermitian angle and renormalises the
/// reference entry to one.
fn perturb<R: Rng>(a: &[Complex<f64>], radius: f64, reference: usize, rng: &mut R) -> Vec<Complex<f64>> {
    if radius == 0.0 {
        return a.to_vec();
    }
    let na = norm2(a);
    for _ in 0..16 {
        let u: Vec<Complex<f64>> = a.iter().map(|_| complex_normal(rng)).collect();
        let proj = crate::linalg::inner(a, &u) / (na * na);
        let perp: Vec<Complex<f64>> = u.iter().zip(a).map(|(x, y)| x - proj * y).collect();
        let np = norm2(&perp);
        if np < 1e-12 {
            continue;
        }
        let b: Vec<Complex<f64>> = a
            .iter()
            .zip(&perp)
            .map(|(x, p)| x * radius.cos() + p * (radius.sin() * na / np))
            .collect();
        if b[reference].norm() > 1e-6 {
            let r = b[reference];
            return b.iter().map(|z| z / r).collect();
        }
    }
    a.to_vec()
}

/// Lower factor `L` with `L Lᴴ = Φ` from the eigen-decomposition (Φ may be singular).
fn coherence_factor(phi: &CMat<f64>) -> Result<CMat<f64>> {
    let eig = hermitian_eig(phi)?;
    if eig.values.iter().any(|&l| l < -1e-10 * phi.real_trace().abs().max(1.0)) {
        return Err(ScfaError::Scene("coherence matrix is not positive semidefinite".into()));
    }
    let n = phi.rows();
    Ok(CMat::from_fn(n, n, |i, j| eig.vectors[(i, j)] * eig.values[j].max(0.0).sqrt()))
}

/// Per-bin random stream for synthesis; `purpose` separates independent uses.
fn stream(seed: u64, purpose: u64, k: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ purpose.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(k as u64);
    rng
}

struct BinDraw {
    k: usize,
    psd: Vec<Vec<f64>>,
    gamma: Vec<f64>,
    mixing: Vec<CMat<f64>>,
    y: Vec<Vec<Complex<f64>>>,
    s: Vec<Vec<Complex<f64>>>,
}

/// Draws ground-truth tracks and sub-frame spectra. Bins are generated in
/// parallel, each from its own random stream, so the output depends only on
/// the configuration and seed.
pub fn synthesize_frames(scene: &SceneModel, config: &SceneConfig, seed: u64) -> Result<SynthesizedScene> {
    let frames = config.num_frames;
    let subframes = config.subframes_per_frame()?;
    let bins = config.grid.num_bins();
    let m = scene.geometry.num_mics();
    let r = config.num_sources();
    let rho = scene.geometry.reference_index;
    let active = config.bins();
    let q_sqrt = config.self_noise.sqrt();

    let draws: Vec<BinDraw> = active
        .par_iter()
        .map(|&k| -> Result<BinDraw> {
            let mut track_rng = stream(seed, 1, k);
            let psd_tracks: Vec<Vec<f64>> = (0..r).map(|j| config.profile(j).track(frames, &mut track_rng)).collect();
            let gamma = config.late_psd.track(frames, &mut track_rng);
            let mut mismatch_rng = stream(seed, 2, k);
            let mixing: Vec<CMat<f64>> = (0..frames)
                .map(|t| {
                    let base = scene.mixing_at(t, k);
                    let mut a = base.clone();
                    for j in 0..r {
                        let col = perturb(&base.column(j), config.mismatch_radians, rho, &mut mismatch_rng);
                        a.set_column(j, &col);
                    }
                    a
                })
                .collect();
            let l_phi = coherence_factor(&scene.coherence[k])?;
            let mut rng = stream(seed, 3, k);
            let mut y = Vec::with_capacity(frames * subframes);
            let mut s_out = Vec::with_capacity(frames * subframes);
            for t in 0..frames {
                let a = &mixing[t];
                let g_sqrt = gamma[t].sqrt();
                for _ in 0..subframes {
                    let s: Vec<Complex<f64>> = (0..r).map(|j| complex_normal(&mut rng) * psd_tracks[j][t].sqrt()).collect();
                    let xi: Vec<Complex<f64>> = (0..m).map(|_| complex_normal(&mut rng)).collect();
                    let eta: Vec<Complex<f64>> = (0..m).map(|_| complex_normal(&mut rng)).collect();
                    let late = l_phi.mul_vec(&xi);
                    let v: Vec<Complex<f64>> = (0..m)
                        .map(|i| {
                            let direct = (0..r).fold(Complex::new(0.0, 0.0), |acc, j| acc + a[(i, j)] * s[j]);
                            direct + late[i] * g_sqrt + eta[i] * q_sqrt
                        })
                        .collect();
                    y.push(v);
                    s_out.push(s);
                }
            }
            Ok(BinDraw {
                k,
                psd: psd_tracks,
                gamma,
                mixing,
                y,
                s: s_out,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = SubframeSpectra::zeros(frames, subframes, bins, m);
    let mut sources = SubframeSpectra::zeros(frames, subframes, bins, r);
    let mut psd = PsdTrack::zeros(frames, bins, r);
    let mut gamma = PsdTrack::zeros(frames, bins, 1);
    let mut mixing = vec![CMat::zeros(m, r); frames * bins];
    for d in draws {
        let k = d.k;
        for t in 0..frames {
            for j in 0..r {
                psd.set(t, k, j, d.psd[j][t]);
            }
            gamma.set(t, k, 0, d.gamma[t]);
            mixing[t * bins + k] = d.mixing[t].clone();
            for th in 0..subframes {
                out.vector_mut(t, th, k).copy_from_slice(&d.y[t * subframes + th]);
                sources.vector_mut(t, th, k).copy_from_slice(&d.s[t * subframes + th]);
            }
        }
    }
    for k in (0..bins).filter(|k| !active.contains(k)) {
        for t in 0..frames {
            mixing[t * bins + k] = scene.mixing_at(t, k).clone();
        }
    }
    Ok(SynthesizedScene {
        frames: out,
        sources,
        truth: GroundTruth {
            psd,
            gamma,
            self_noise: config.self_noise,
            mixing,
        },
        bins: active,
    })
}

/// Table-I style configuration: 4-mic circle with 2 cm spacing, K = 256,
/// N = 200, T = 2000, 75 % overlap, f_s = 16 kHz, q = 9e-6.
pub fn table_config(num_sources: usize, num_frames: usize, seed: u64) -> SceneConfig {
    let sources: Vec<Point> = (0..num_sources)
        .map(|j| {
            let angle = 0.3 + 2.1 * j as f64;
            [1.0 * angle.cos(), 1.0 * angle.sin(), 0.1]
        })
        .collect();
    SceneConfig {
        array: ArrayLayout::Circular {
            num_mics: 4,
            spacing: 0.02,
            center: [0.0, 0.0, 0.0],
        },
        reference_index: 0,
        sources,
        trajectory: Vec::new(),
        frames_per_position: None,
        source_psd: vec![PsdProfile::RandomWalkDb {
            start_db: -10.0,
            step_db: 3.0,
            min_db: -25.0,
            max_db: 5.0,
            bin_spread_db: 5.0,
        }],
        late_psd: PsdProfile::RandomWalkDb {
            start_db: -25.0,
            step_db: 2.0,
            min_db: -35.0,
            max_db: -15.0,
            bin_spread_db: 3.0,
        },
        self_noise: 9e-6,
        grid: FrequencyGrid {
            fft_len: 256,
            sampling_rate: 16000.0,
            speed_of_sound: 343.0,
        },
        plan: FramePlan {
            frame_len: 2000,
            subframe_len: 200,
            subframe_overlap: 0.75,
            frames_per_segment: 6,
            segment_hop: 1,
        },
        num_frames,
        mismatch_radians: 0.0,
        active_bins: None,
        subframes_override: None,
        min_distance: default_min_distance(),
        seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::hermitian_angle;
    use crate::model::assemble_cpsdm;
    use crate::stft::sample_cpsdm;

    fn small(num_sources: usize) -> SceneConfig {
        SceneConfig {
            num_frames: 2,
            active_bins: Some(vec![3, 40]),
            subframes_override: Some(8),
            ..table_config(num_sources, 2, 1)
        }
    }

    #[test]
    fn no_sources_gives_late_plus_noise_only() {
        let cfg = small(0);
        let scene = build_scene(&cfg).unwrap();
        assert_eq!(scene.mixing[0].cols(), 0);
        let synth = synthesize_frames(&scene, &cfg, 3).unwrap();
        assert_eq!(synth.sources.channels, 0);
        assert_eq!(synth.truth.psd.channels, 0);
    }

    #[test]
    fn all_zero_psds_give_zero_frames() {
        let cfg = SceneConfig {
            source_psd: vec![PsdProfile::Constant { level: 0.0 }],
            late_psd: PsdProfile::Constant { level: 0.0 },
            self_noise: 0.0,
            ..small(2)
        };
        let scene = build_scene(&cfg).unwrap();
        let synth = synthesize_frames(&scene, &cfg, 4).unwrap();
        assert!(synth.frames.data.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn equidistant_source_has_equal_ratf_magnitudes() {
        let cfg = SceneConfig {
            sources: vec![[0.0, 0.0, 1.5]],
            ..small(1)
        };
        let scene = build_scene(&cfg).unwrap();
        for k in [5, 60] {
            for i in 0..4 {
                assert!((scene.mixing[k][(i, 0)].norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let cfg = small(2);
        let scene = build_scene(&cfg).unwrap();
        let a = synthesize_frames(&scene, &cfg, 11).unwrap();
        let b = synthesize_frames(&scene, &cfg, 11).unwrap();
        assert_eq!(a.frames, b.frames);
        assert_eq!(a.truth, b.truth);
        let c = synthesize_frames(&scene, &cfg, 12).unwrap();
        assert_ne!(a.frames, c.frames);
    }

    #[test]
    fn mismatch_rotates_by_requested_angle() {
        let cfg = SceneConfig {
            mismatch_radians: 0.1,
            ..small(1)
        };
        let scene = build_scene(&cfg).unwrap();
        let synth = synthesize_frames(&scene, &cfg, 5).unwrap();
        let angle = hermitian_angle(&scene.mixing[40].column(0), &synth.truth.mixing(1, 40).column(0)).unwrap();
        assert!((angle - 0.1).abs() < 1e-9);
        assert_eq!(synth.truth.mixing(1, 40)[(0, 0)], Complex::new(1.0, 0.0));
    }

    #[test]
    fn large_subframe_count_approaches_model() {
        let cfg = SceneConfig {
            num_frames: 1,
            active_bins: Some((0..129).step_by(8).collect()),
            subframes_override: Some(10_000),
            ..table_config(2, 1, 7)
        };
        let scene = build_scene(&cfg).unwrap();
        let synth = synthesize_frames(&scene, &cfg, 6).unwrap();
        let mut good = 0;
        for &k in &synth.bins {
            let model = assemble_cpsdm(
                synth.truth.mixing(0, k),
                &[synth.truth.psd.get(0, k, 0), synth.truth.psd.get(0, k, 1)],
                synth.truth.gamma.get(0, k, 0),
                &[cfg.self_noise],
                &scene.coherence[k],
            )
            .unwrap();
            let est = sample_cpsdm(&synth.frames.tile(0, k)).unwrap();
            if (&est - &model).frobenius_norm() <= 0.1 * model.frobenius_norm() {
                good += 1;
            }
        }
        assert!(good as f64 >= 0.95 * synth.bins.len() as f64, "{good}/{}", synth.bins.len());
    }
}
