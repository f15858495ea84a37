//! Signal-model types: frequency grid, array geometry, per-segment parameters,
//! relative Green's functions, the spherical isotropic coherence model and
//! the model CPSDM `A diag(p) Aᴴ + γΦ + diag(q)`.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ScfaError};
use crate::linalg::{hermitian_eig, CMat, HermitianMatrix};
use crate::scalar::Real;

/// One-sided STFT frequency grid (bins `0..=K/2`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub fft_len: usize,
    pub sampling_rate: f64,
    pub speed_of_sound: f64,
}

impl FrequencyGrid {
    pub fn new(fft_len: usize, sampling_rate: f64, speed_of_sound: f64) -> Result<Self> {
        let grid = Self {
            fft_len,
            sampling_rate,
            speed_of_sound,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.fft_len == 0 || self.fft_len % 2 != 0 {
            return Err(ScfaError::Configuration(format!(
                "fft length must be even and positive, got {}",
                self.fft_len
            )));
        }
        if !(self.sampling_rate > 0.0) || !(self.speed_of_sound > 0.0) {
            return Err(ScfaError::Configuration(
                "sampling rate and speed of sound must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Number of one-sided bins, `K/2 + 1`.
    pub fn num_bins(&self) -> usize {
        self.fft_len / 2 + 1
    }

    /// Centre frequency of bin `k` in Hz.
    pub fn bin_frequency(&self, k: usize) -> f64 {
        self.sampling_rate * k as f64 / self.fft_len as f64
    }
}

pub type Point = [f64; 3];

/// Microphone and source positions with the reference microphone index
/// (zero-based).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub mic_positions: Vec<Point>,
    pub source_positions: Vec<Point>,
    pub reference_index: usize,
}

pub fn euclidean(a: &Point, b: &Point) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

impl Geometry {
    pub fn num_mics(&self) -> usize {
        self.mic_positions.len()
    }

    pub fn num_sources(&self) -> usize {
        self.source_positions.len()
    }

    /// Checks the reference index and that every source keeps at least
    /// `min_distance` from every microphone.
    pub fn validate(&self, min_distance: f64) -> Result<()> {
        if self.mic_positions.is_empty() {
            return Err(ScfaError::InvalidGeometry("no microphones".into()));
        }
        if self.reference_index >= self.num_mics() {
            return Err(ScfaError::InvalidGeometry(format!(
                "reference index {} out of range for {} microphones",
                self.reference_index,
                self.num_mics()
            )));
        }
        let finite = |p: &Point| p.iter().all(|x| x.is_finite());
        if !self.mic_positions.iter().all(finite) || !self.source_positions.iter().all(finite) {
            return Err(ScfaError::InvalidGeometry("non-finite position".into()));
        }
        for (j, s) in self.source_positions.iter().enumerate() {
            for (i, m) in self.mic_positions.iter().enumerate() {
                let d = euclidean(s, m);
                if d < min_distance {
                    return Err(ScfaError::InvalidGeometry(format!(
                        "source {j} is {d:.4} m from microphone {i}, below the minimum {min_distance} m"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Distance from source `j` to microphone `i`.
    pub fn source_distance(&self, i: usize, j: usize) -> f64 {
        euclidean(&self.mic_positions[i], &self.source_positions[j])
    }

    /// Microphones on a circle with the given consecutive spacing, in the
    /// z = 0 plane, centred at `center`.
    pub fn circular_array(num_mics: usize, spacing: f64, center: Point) -> Vec<Point> {
        if num_mics == 1 {
            return vec![center];
        }
        let step = 2.0 * std::f64::consts::PI / num_mics as f64;
        let radius = spacing / (2.0 * (step / 2.0).sin());
        (0..num_mics)
            .map(|i| {
                let phi = step * i as f64;
                [
                    center[0] + radius * phi.cos(),
                    center[1] + radius * phi.sin(),
                    center[2],
                ]
            })
            .collect()
    }
}

/// Symmetric microphone-distance matrix in metres.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    pub order: usize,
    pub entries: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_fn(order: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut entries = Vec::with_capacity(order * order);
        for i in 0..order {
            for j in 0..order {
                entries.push(f(i, j));
            }
        }
        Self { order, entries }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.order + j]
    }

    pub fn validate(&self) -> Result<()> {
        if self.entries.len() != self.order * self.order {
            return Err(ScfaError::InvalidGeometry("distance matrix has wrong size".into()));
        }
        for i in 0..self.order {
            if self.get(i, i) != 0.0 {
                return Err(ScfaError::InvalidGeometry(format!("nonzero diagonal at {i}")));
            }
            for j in 0..self.order {
                let d = self.get(i, j);
                if !(d >= 0.0) || !d.is_finite() {
                    return Err(ScfaError::InvalidGeometry(format!("invalid distance at ({i},{j})")));
                }
                if (d - self.get(j, i)).abs() > 1e-12 * d.max(1.0) {
                    return Err(ScfaError::InvalidGeometry(format!(
                        "distance matrix is not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Euclidean microphone-distance matrix.
pub fn distance_matrix(geometry: &Geometry) -> DistanceMatrix {
    let m = &geometry.mic_positions;
    DistanceMatrix::from_fn(m.len(), |i, j| if i == j { 0.0 } else { euclidean(&m[i], &m[j]) })
}

/// Anechoic relative transfer function of a source between the reference
/// microphone (distance `d_ref`) and another microphone (distance `d_mic`).
pub fn relative_green<T: Real>(d_ref: f64, d_mic: f64, k: usize, grid: &FrequencyGrid) -> Result<Complex<T>> {
    if !(d_ref > 0.0) || !(d_mic > 0.0) {
        return Err(ScfaError::InvalidGeometry(format!(
            "distances must be positive (d_ref = {d_ref}, d_mic = {d_mic})"
        )));
    }
    let phase = 2.0 * std::f64::consts::PI * grid.bin_frequency(k) * (d_mic - d_ref) / grid.speed_of_sound;
    let z = Complex::from_polar(d_ref / d_mic, phase);
    Ok(Complex::new(T::lit(z.re), T::lit(z.im)))
}

/// Unit-diagonal spatial coherence matrix for one bin.
#[derive(Clone, Debug)]
pub struct CoherenceMatrix<T> {
    pub matrix: HermitianMatrix<T>,
    /// Set when negative eigenvalues had to be floored at zero.
    pub floored: bool,
}

/// Spherically isotropic (diffuse) coherence: `sin(x)/x`, `x = 2π f d / c`.
pub fn spherical_coherence<T: Real>(
    distances: &DistanceMatrix,
    k: usize,
    grid: &FrequencyGrid,
) -> Result<CoherenceMatrix<T>> {
    distances.validate()?;
    let omega = 2.0 * std::f64::consts::PI * grid.bin_frequency(k) / grid.speed_of_sound;
    let n = distances.order;
    let matrix = CMat::from_fn(n, n, |i, j| {
        let x = omega * distances.get(i, j);
        let v = if x == 0.0 { 1.0 } else { x.sin() / x };
        Complex::new(T::lit(v), T::zero())
    });
    let eig = hermitian_eig(&matrix)?;
    let min = *eig.values.last().unwrap_or(&T::zero());
    if min >= -T::lit(1e-10) * T::from_count(n) {
        return Ok(CoherenceMatrix {
            matrix,
            floored: false,
        });
    }
    // floor negative eigenvalues, then restore the unit diagonal
    let clipped = eig.reconstruct_with(|l| l.max(T::zero()));
    let d: Vec<T> = clipped.diag_real().into_iter().map(|x| T::one() / x.sqrt()).collect();
    let mut normalized = CMat::from_fn(n, n, |i, j| clipped[(i, j)] * d[i] * d[j]);
    for i in 0..n {
        normalized[(i, i)] = Complex::new(T::one(), T::zero());
    }
    Ok(CoherenceMatrix {
        matrix: normalized.hermitian_part(),
        floored: true,
    })
}

/// Self-noise PSDs: one shared value or one per microphone.
pub fn expand_self_noise<T: Real>(q: &[T], mics: usize) -> Result<Vec<T>> {
    match q.len() {
        1 => Ok(vec![q[0]; mics]),
        n if n == mics => Ok(q.to_vec()),
        n => Err(ScfaError::InvalidParameter(format!(
            "self-noise vector has length {n}, expected 1 or {mics}"
        ))),
    }
}

/// Model CPSDM `Σ_j p_j a_j a_jᴴ + γΦ + diag(q)` for one tile.
pub fn assemble_cpsdm<T: Real>(
    mixing: &CMat<T>,
    psd: &[T],
    gamma: T,
    self_noise: &[T],
    phi: &HermitianMatrix<T>,
) -> Result<HermitianMatrix<T>> {
    let m = mixing.rows();
    if psd.len() != mixing.cols() || phi.rows() != m || phi.cols() != m {
        return Err(ScfaError::InvalidParameter(format!(
            "inconsistent dimensions: A is {}×{}, {} PSDs, Φ is {}×{}",
            m,
            mixing.cols(),
            psd.len(),
            phi.rows(),
            phi.cols()
        )));
    }
    let q = expand_self_noise(self_noise, m)?;
    if psd.iter().chain(q.iter()).chain(std::iter::once(&gamma)).any(|&x| !(x >= T::zero())) {
        return Err(ScfaError::InvalidParameter("negative or non-finite PSD".into()));
    }
    Ok(model_cpsdm_unchecked(mixing, psd, gamma, &q, phi))
}

/// Same as [`assemble_cpsdm`] but accepts any sign (used inside the solver,
/// where unconstrained variants may visit negative PSDs).
pub(crate) fn model_cpsdm_unchecked<T: Real>(
    mixing: &CMat<T>,
    psd: &[T],
    gamma: T,
    q: &[T],
    phi: &HermitianMatrix<T>,
) -> HermitianMatrix<T> {
    let m = mixing.rows();
    let mut out = phi.scale(gamma);
    for (j, &p) in psd.iter().enumerate() {
        if p != T::zero() {
            out.add_outer(&mixing.column(j), p);
        }
    }
    let q = if q.len() == 1 { vec![q[0]; m] } else { q.to_vec() };
    out.add_to_diagonal(|i| q[i]);
    out.hermitian_part()
}

/// Parameters of one (segment, bin) problem.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentParameters<T> {
    /// `M × r` mixing matrix of early RATFs, reference row all ones.
    pub mixing: CMat<T>,
    /// Per-frame source PSDs (`frames × r`).
    pub psd: Vec<Vec<T>>,
    /// Per-frame late-reverberation PSD (zeros when not estimated).
    pub gamma: Vec<T>,
    /// Self-noise PSDs: length 1 (shared) or `M`.
    pub self_noise: Vec<T>,
    pub reference_index: usize,
}

impl<T: Real> SegmentParameters<T> {
    pub fn num_frames(&self) -> usize {
        self.psd.len()
    }

    pub fn num_sources(&self) -> usize {
        self.mixing.cols()
    }

    pub fn num_mics(&self) -> usize {
        self.mixing.rows()
    }

    /// Checks the invariants: reference row ones, non-negative PSDs, frame
    /// counts consistent.
    pub fn validate(&self) -> Result<()> {
        for j in 0..self.num_sources() {
            let a = self.mixing[(self.reference_index, j)];
            if a != Complex::new(T::one(), T::zero()) {
                return Err(ScfaError::InvalidParameter(format!(
                    "reference row entry for source {j} is {a}, expected 1"
                )));
            }
        }
        if self.gamma.len() != self.num_frames() {
            return Err(ScfaError::InvalidParameter("gamma track length differs from frame count".into()));
        }
        if self.psd.iter().any(|p| p.len() != self.num_sources()) {
            return Err(ScfaError::InvalidParameter("psd row length differs from source count".into()));
        }
        let negative = self
            .psd
            .iter()
            .flatten()
            .chain(&self.gamma)
            .chain(&self.self_noise)
            .any(|&x| !(x >= T::zero()));
        if negative {
            return Err(ScfaError::InvalidParameter("negative PSD".into()));
        }
        Ok(())
    }

    /// Model CPSDM of frame `t`.
    pub fn frame_cpsdm(&self, t: usize, phi: &HermitianMatrix<T>) -> Result<HermitianMatrix<T>> {
        assemble_cpsdm(&self.mixing, &self.psd[t], self.gamma[t], &self.self_noise, phi)
    }

    /// Target part `A diag(p(t)) Aᴴ` of frame `t`.
    pub fn target_cpsdm(&self, t: usize) -> HermitianMatrix<T> {
        let m = self.num_mics();
        let mut out = CMat::zeros(m, m);
        for j in 0..self.num_sources() {
            out.add_outer(&self.mixing.column(j), self.psd[t][j]);
        }
        out
    }
}
