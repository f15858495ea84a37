use serde::{Deserialize, Serialize};

use crate::error::{Result, ScfaError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveKind {
    /// `log|P_y| + tr(P̂_y P_y⁻¹)`
    #[default]
    Ml,
    /// `½‖P_y − P̂_y‖²_F`
    Ls,
    /// `½‖P̂_y^{-1/2}(P_y − P̂_y)P̂_y^{-1/2}‖²_F`
    Gls,
}

impl std::str::FromStr for ObjectiveKind {
    type Err = ScfaError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ml" => Ok(Self::Ml),
            "ls" => Ok(Self::Ls),
            "gls" => Ok(Self::Gls),
            other => Err(ScfaError::Configuration(format!(
                "unknown objective `{other}` (expected ml, ls or gls)"
            ))),
        }
    }
}

impl std::fmt::Display for ObjectiveKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Ml => "ml",
            Self::Ls => "ls",
            Self::Gls => "gls",
        })
    }
}

/// Upper bound on the per-frame PSD sum at the reference microphone.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PsdSumConstraint {
    None,
    /// `Σ_j p_j + γ φ_ρρ + q_ρ ≤ δ₁ p̂_ρρ`
    WithGamma,
    /// `Σ_j p_j ≤ δ₂ p̂_ρρ`
    WithoutGamma,
}

/// Box on real and imaginary parts of the free RATF entries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RatfBox {
    None,
    /// `±(N c / f_s + λ)/λ`, needs no geometry.
    Blind,
    /// `±(d̂_ρi + λ)/λ` from the microphone-distance matrix.
    DistanceBased,
}

/// One SCFA problem flavour.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemVariant {
    pub estimate_gamma: bool,
    pub shared_self_noise: bool,
    pub positivity_on_psds: bool,
    pub psd_sum: PsdSumConstraint,
    pub ratf_box: RatfBox,
    pub gamma_box: bool,
    pub self_noise_box: bool,
    pub objective: ObjectiveKind,
}

impl ProblemVariant {
    fn base(estimate_gamma: bool) -> Self {
        Self {
            estimate_gamma,
            shared_self_noise: true,
            positivity_on_psds: true,
            psd_sum: PsdSumConstraint::None,
            ratf_box: RatfBox::None,
            gamma_box: false,
            self_noise_box: false,
            objective: ObjectiveKind::Ml,
        }
    }

    /// Late reverberation estimated; PSD-sum row with γ, distance RATF box,
    /// γ box and shared self-noise box.
    pub fn rev1() -> Self {
        Self {
            psd_sum: PsdSumConstraint::WithGamma,
            ..Self::rev2()
        }
    }

    /// As [`Self::rev1`] without the PSD-sum row.
    pub fn rev2() -> Self {
        Self {
            ratf_box: RatfBox::DistanceBased,
            gamma_box: true,
            self_noise_box: true,
            ..Self::base(true)
        }
    }

    /// Basic problem without late reverberation: positivity only.
    pub fn no_rev() -> Self {
        Self::base(false)
    }

    /// Sparsity row, blind RATF box and self-noise box.
    pub fn no_rev1() -> Self {
        Self {
            psd_sum: PsdSumConstraint::WithoutGamma,
            ratf_box: RatfBox::Blind,
            self_noise_box: true,
            ..Self::base(false)
        }
    }

    /// As [`Self::no_rev1`] with the distance-based RATF box.
    pub fn no_rev2() -> Self {
        Self {
            ratf_box: RatfBox::DistanceBased,
            ..Self::no_rev1()
        }
    }

    /// Joint-diagonalisation preset: reference row fixed, no positivity.
    pub fn parra() -> Self {
        Self {
            positivity_on_psds: false,
            ..Self::base(false)
        }
    }

    pub fn with_objective(mut self, objective: ObjectiveKind) -> Self {
        self.objective = objective;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.psd_sum == PsdSumConstraint::WithGamma && !self.estimate_gamma {
            return Err(ScfaError::Configuration(
                "the PSD-sum constraint with γ requires estimating γ".into(),
            ));
        }
        if self.gamma_box && !self.estimate_gamma {
            return Err(ScfaError::Configuration("the γ box requires estimating γ".into()));
        }
        Ok(())
    }

    /// All named presets with their method names.
    pub fn presets() -> [(&'static str, ProblemVariant); 6] {
        [
            ("scfa-rev1", Self::rev1()),
            ("scfa-rev2", Self::rev2()),
            ("scfa-no-rev", Self::no_rev()),
            ("scfa-no-rev1", Self::no_rev1()),
            ("scfa-no-rev2", Self::no_rev2()),
            ("parra", Self::parra()),
        ]
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::presets()
            .into_iter()
            .find(|(n, _)| *n == name)
            .map(|(_, v)| v)
    }
}

/// Numeric knobs of the constraint builder.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintParams {
    /// δ₁ of the PSD-sum row with γ.
    pub delta_with_gamma: f64,
    /// δ₂ of the sparsity row.
    pub delta_without_gamma: f64,
    /// λ, the minimum source–microphone distance in metres.
    pub min_distance: f64,
}

impl Default for ConstraintParams {
    fn default() -> Self {
        Self {
            delta_with_gamma: 1.2,
            delta_without_gamma: 1.0,
            min_distance: 0.01,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid_and_named() {
        for (name, v) in ProblemVariant::presets() {
            v.validate().unwrap();
            assert_eq!(ProblemVariant::from_name(name), Some(v));
        }
        assert!(ProblemVariant::from_name("nope").is_none());
        assert!(!ProblemVariant::parra().positivity_on_psds);
        assert_eq!(ProblemVariant::no_rev(), ProblemVariant { positivity_on_psds: true, ..ProblemVariant::parra() });
    }

    #[test]
    fn inconsistent_variants_are_rejected() {
        let v = ProblemVariant {
            psd_sum: PsdSumConstraint::WithGamma,
            ..ProblemVariant::no_rev()
        };
        assert!(v.validate().is_err());
        let v = ProblemVariant {
            gamma_box: true,
            ..ProblemVariant::no_rev()
        };
        assert!(v.validate().is_err());
    }

    #[test]
    fn objective_parses() {
        assert_eq!("GLS".parse::<ObjectiveKind>().unwrap(), ObjectiveKind::Gls);
        assert!("l1".parse::<ObjectiveKind>().is_err());
    }
}
