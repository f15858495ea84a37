use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Result, ScfaError};
use crate::linalg::HermitianMatrix;
use crate::model::{DistanceMatrix, FrequencyGrid, SegmentParameters};
use crate::scalar::Real;
use crate::stft::{segment_starts, CpsdmSeries, FramePlan};

use super::constraints::{build_constraints, ConstraintSet};
use super::identifiability::check_identifiability;
use super::init::{initialize_segment, WarmStart};
use super::objective::SegmentObjective;
use super::optimize::{minimize, SolveReport, SolverOptions};
use super::packing::VariablePacking;
use super::variant::{ConstraintParams, ProblemVariant};

/// Per-variable scaling used inside the optimizer: one for RATF entries,
/// the mean per-microphone data power for PSD variables.
pub fn variable_scale<T: Real>(packing: &VariablePacking, data: &[HermitianMatrix<T>]) -> Vec<T> {
    let m = T::from_count(packing.mics);
    let power = data.iter().fold(T::zero(), |acc, p| acc + p.real_trace()) / (m * T::from_count(data.len().max(1)));
    let psd_scale = if power > T::zero() && power.is_finite() {
        power
    } else {
        T::one()
    };
    (0..packing.len())
        .map(|i| if i < packing.num_mixing() { T::one() } else { psd_scale })
        .collect()
}

/// Solves one (segment, bin) problem from a given starting point.
pub fn solve_segment<T: Real>(
    data: &[HermitianMatrix<T>],
    phi: &HermitianMatrix<T>,
    variant: &ProblemVariant,
    packing: &VariablePacking,
    constraints: &ConstraintSet<T>,
    init: &[T],
    options: &SolverOptions,
) -> Result<(SegmentParameters<T>, SolveReport)> {
    let objective = SegmentObjective::new(variant.objective, *packing, data, phi)?;
    let scale = variable_scale(packing, data);
    let minimum = minimize(&objective, constraints, init, &scale, options)?;
    let mut report = minimum.report;
    report.identifiability_warning =
        !check_identifiability(packing.mics, packing.sources, packing.frames, variant).first_condition;
    if report.identifiability_warning {
        log::warn!(
            "first identifiability condition fails for M={}, r={}, |B|={}",
            packing.mics,
            packing.sources,
            packing.frames
        );
    }
    Ok((packing.unpack(&minimum.x), report))
}

/// Everything the online estimator needs besides the data.
#[derive(Clone, Debug)]
pub struct OnlineConfig {
    pub variant: ProblemVariant,
    pub constraint_params: ConstraintParams,
    pub options: SolverOptions,
    pub sources: usize,
    pub reference: usize,
    pub grid: FrequencyGrid,
    pub plan: FramePlan,
    pub distances: Option<DistanceMatrix>,
    pub seed: u64,
    /// Initialize every segment from scratch instead of the previous estimates.
    pub cold_start: bool,
}

impl OnlineConfig {
    fn packing(&self, mics: usize) -> VariablePacking {
        VariablePacking::new(
            mics,
            self.sources,
            self.plan.frames_per_segment,
            self.reference,
            self.variant.estimate_gamma,
            self.variant.shared_self_noise,
        )
    }
}

/// Random stream of bin `k`: independent of thread scheduling.
pub fn bin_rng(seed: u64, k: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64);
    rng
}

#[derive(Clone, Debug)]
pub struct SegmentEstimate<T> {
    pub start: usize,
    pub params: SegmentParameters<T>,
    pub report: SolveReport,
    /// Objective at the starting point actually used.
    pub init_objective: f64,
}

/// Estimates of one bin over the whole stream.
#[derive(Clone, Debug)]
pub struct BinTrack<T> {
    pub bin: usize,
    pub segments: Vec<SegmentEstimate<T>>,
    /// For every frame, the segment whose estimate it reports: the earliest
    /// segment containing it, so the first segment contributes all its frames
    /// and each later one its newest frames.
    pub frame_segment: Vec<usize>,
}

impl<T: Real> BinTrack<T> {
    fn local(&self, t: usize) -> (&SegmentEstimate<T>, usize) {
        let seg = &self.segments[self.frame_segment[t]];
        (seg, t - seg.start)
    }

    pub fn num_frames(&self) -> usize {
        self.frame_segment.len()
    }

    pub fn psd(&self, t: usize) -> &[T] {
        let (seg, i) = self.local(t);
        &seg.params.psd[i]
    }

    pub fn gamma(&self, t: usize) -> T {
        let (seg, i) = self.local(t);
        seg.params.gamma[i]
    }

    pub fn self_noise(&self, t: usize) -> &[T] {
        &self.local(t).0.params.self_noise
    }

    pub fn mixing(&self, t: usize) -> &crate::linalg::CMat<T> {
        &self.local(t).0.params.mixing
    }
}

/// Frame → earliest covering segment.
pub fn frame_owners(num_frames: usize, starts: &[usize], frames_per_segment: usize) -> Vec<usize> {
    (0..num_frames)
        .map(|t| {
            starts
                .iter()
                .position(|&s| s <= t && t < s + frames_per_segment)
                .expect("segments cover every frame")
        })
        .collect()
}

/// Runs the sliding-segment estimator on one bin.
pub fn run_bin<T: Real>(series: &CpsdmSeries<T>, phi: &HermitianMatrix<T>, k: usize, config: &OnlineConfig) -> Result<BinTrack<T>> {
    let b = config.plan.frames_per_segment;
    let starts = segment_starts(series.frames, b, config.plan.segment_hop);
    if starts.is_empty() {
        return Err(ScfaError::InsufficientData(format!(
            "{} frames do not fill one segment of {b}",
            series.frames
        )));
    }
    let packing = config.packing(series.channels);
    let mut rng = bin_rng(config.seed, k);
    let mut segments: Vec<SegmentEstimate<T>> = Vec::with_capacity(starts.len());
    for (si, &start) in starts.iter().enumerate() {
        let context = |e: ScfaError| ScfaError::Solve {
            segment: si,
            bin: k,
            source: Box::new(e),
        };
        let data = series.bin_frames(k, start..start + b);
        let constraints = build_constraints(
            &config.variant,
            &config.grid,
            &config.plan,
            &data,
            phi,
            config.distances.as_ref(),
            &config.constraint_params,
            &packing,
        )
        .map_err(context)?;
        let warm = match (segments.last(), config.cold_start) {
            (Some(prev), false) => Some(WarmStart {
                previous: &prev.params,
                shift: start - prev.start,
            }),
            _ => None,
        };
        let init = initialize_segment(&data, &packing, &constraints, warm, &mut rng).map_err(context)?;
        let (params, mut report) =
            solve_segment(&data, phi, &config.variant, &packing, &constraints, &init.x, &config.options).map_err(context)?;
        report.fallback_columns = init.fallback_columns;
        segments.push(SegmentEstimate {
            start,
            init_objective: report.initial_objective,
            params,
            report,
        });
    }
    Ok(BinTrack {
        bin: k,
        frame_segment: frame_owners(series.frames, &starts, b),
        segments,
    })
}

/// Result of the online estimator over a set of bins.
#[derive(Debug)]
pub struct OnlineEstimate<T> {
    pub tracks: Vec<BinTrack<T>>,
    /// Bins whose solve failed, with the error.
    pub failures: Vec<(usize, ScfaError)>,
}

/// Runs every requested bin in parallel; `phi[k]` is the coherence of bin `k`.
pub fn run_online<T: Real>(
    series: &CpsdmSeries<T>,
    phi: &[HermitianMatrix<T>],
    bins: &[usize],
    config: &OnlineConfig,
) -> Result<OnlineEstimate<T>> {
    config.plan.validate()?;
    config.variant.validate()?;
    if config.reference >= series.channels {
        return Err(ScfaError::Configuration(format!(
            "reference microphone {} out of range for {} channels",
            config.reference, series.channels
        )));
    }
    if config.sources == 0 {
        return Err(ScfaError::Configuration("at least one source is required".into()));
    }
    if let Some(&k) = bins.iter().find(|&&k| k >= series.bins || k >= phi.len()) {
        return Err(ScfaError::Configuration(format!("bin {k} out of range")));
    }
    let results: Vec<(usize, Result<BinTrack<T>>)> = bins
        .par_iter()
        .map(|&k| (k, run_bin(series, &phi[k], k, config)))
        .collect();
    let mut tracks = Vec::new();
    let mut failures = Vec::new();
    for (k, r) in results {
        match r {
            Ok(t) => tracks.push(t),
            Err(e) => failures.push((k, e)),
        }
    }
    Ok(OnlineEstimate { tracks, failures })
}
