//! Sensitivity zones from the σ/μ* ratio.
//!
//! Zone boundaries are the slopes σ/μ* = 0.1, 0.5 and 1 of the (μ*, σ)
//! scatter plot. Inputs whose μ* is a small fraction of the largest μ* in the
//! same analysis (and whose σ is equally small) are negligible.

use serde::{Deserialize, Serialize};

use crate::effects::EffectsSummary;
use crate::error::{Error, Result};

pub const ALMOST_LINEAR_MAX: f64 = 0.1;
pub const MONOTONIC_MAX: f64 = 0.5;
pub const ALMOST_MONOTONIC_MAX: f64 = 1.0;
pub const GUIDE_RATIOS: [f64; 3] = [ALMOST_LINEAR_MAX, MONOTONIC_MAX, ALMOST_MONOTONIC_MAX];
pub const DEFAULT_NEGLIGIBLE_REL: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZoneLabel {
    Negligible,
    AlmostLinear,
    Monotonic,
    AlmostMonotonic,
    NonmonotonicOrInteracting,
}

impl ZoneLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            ZoneLabel::Negligible => "negligible",
            ZoneLabel::AlmostLinear => "almost_linear",
            ZoneLabel::Monotonic => "monotonic",
            ZoneLabel::AlmostMonotonic => "almost_monotonic",
            ZoneLabel::NonmonotonicOrInteracting => "nonmonotonic_or_interacting",
        }
    }
}

impl std::fmt::Display for ZoneLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Zone of one summary. `max_mu_star` is the largest μ* among the summaries
/// it is compared against.
pub fn classify(summary: &EffectsSummary, max_mu_star: f64, negligible_rel: f64) -> Result<ZoneLabel> {
    let sigma = match summary.sigma {
        Some(s) if summary.n >= 2 => s,
        _ => return Err(Error::ClassificationRefused { n: summary.n }),
    };
    let threshold = negligible_rel * max_mu_star;
    if summary.mu_star == 0.0 && sigma == 0.0 {
        return Ok(ZoneLabel::Negligible);
    }
    if summary.mu_star < threshold && sigma < threshold {
        return Ok(ZoneLabel::Negligible);
    }
    if summary.mu_star == 0.0 {
        // σ > 0 with μ* = 0 is impossible; μ* = 0 forces every effect to 0.
        return Err(Error::UndefinedRatio);
    }
    let ratio = sigma / summary.mu_star;
    Ok(if ratio < ALMOST_LINEAR_MAX {
        ZoneLabel::AlmostLinear
    } else if ratio < MONOTONIC_MAX {
        ZoneLabel::Monotonic
    } else if ratio < ALMOST_MONOTONIC_MAX {
        ZoneLabel::AlmostMonotonic
    } else {
        ZoneLabel::NonmonotonicOrInteracting
    })
}

/// Classify a group of summaries against their common maximum μ*.
pub fn classify_all(summaries: &[EffectsSummary], negligible_rel: f64) -> Result<Vec<ZoneLabel>> {
    let max = summaries.iter().map(|s| s.mu_star).fold(0.0, f64::max);
    summaries.iter().map(|s| classify(s, max, negligible_rel)).collect()
}

/// `(σ/μ*, σ/|μ|)`; the second is `None` when μ = 0.
pub fn monotonicity_ratios(summary: &EffectsSummary) -> Result<(f64, Option<f64>)> {
    if summary.mu_star == 0.0 {
        return Err(Error::UndefinedRatio);
    }
    let sigma = summary.sigma.ok_or(Error::ClassificationRefused { n: summary.n })?;
    let ratio_abs = (summary.mu != 0.0).then(|| sigma / summary.mu.abs());
    Ok((sigma / summary.mu_star, ratio_abs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::effects::{summarize, EffectKey};
    use proptest::prelude::*;

    fn with(mu_star: f64, sigma: f64) -> EffectsSummary {
        EffectsSummary {
            key: EffectKey::First(0),
            mu: mu_star,
            mu_star,
            sigma: Some(sigma),
            ratio_star: None,
            ratio_abs: None,
            n: 10,
        }
    }

    #[test]
    fn zone_examples() {
        assert_eq!(classify(&with(100.0, 5.0), 100.0, 0.01).unwrap(), ZoneLabel::AlmostLinear);
        assert_eq!(classify(&with(100.0, 120.0), 100.0, 0.01).unwrap(), ZoneLabel::NonmonotonicOrInteracting);
        assert_eq!(classify(&with(100.0, 30.0), 100.0, 0.01).unwrap(), ZoneLabel::Monotonic);
        assert_eq!(classify(&with(100.0, 70.0), 100.0, 0.01).unwrap(), ZoneLabel::AlmostMonotonic);
        assert_eq!(classify(&with(0.0, 0.0), 0.0, 0.01).unwrap(), ZoneLabel::Negligible);
        assert_eq!(classify(&with(0.5, 0.2), 100.0, 0.01).unwrap(), ZoneLabel::Negligible);
        // Small μ* but large scatter is not negligible.
        assert_eq!(classify(&with(0.5, 2.0), 100.0, 0.01).unwrap(), ZoneLabel::NonmonotonicOrInteracting);
    }

    #[test]
    fn boundaries_are_half_open() {
        assert_eq!(classify(&with(1.0, 0.1), 1.0, 0.01).unwrap(), ZoneLabel::Monotonic);
        assert_eq!(classify(&with(1.0, 0.5), 1.0, 0.01).unwrap(), ZoneLabel::AlmostMonotonic);
        assert_eq!(classify(&with(1.0, 1.0), 1.0, 0.01).unwrap(), ZoneLabel::NonmonotonicOrInteracting);
    }

    #[test]
    fn single_replicate_refused() {
        let s = summarize(EffectKey::First(0), &[1.0]).unwrap();
        assert!(matches!(classify(&s, 1.0, 0.01), Err(Error::ClassificationRefused { n: 1 })));
    }

    #[test]
    fn ratio_examples() {
        let s = summarize(EffectKey::First(0), &[-1.0, -2.0, -4.5]).unwrap();
        let (star, abs) = monotonicity_ratios(&s).unwrap();
        assert_eq!(Some(star), abs);

        let s = summarize(EffectKey::First(0), &[2.5, -2.5]).unwrap();
        let (star, abs) = monotonicity_ratios(&s).unwrap();
        assert_eq!(abs, None);
        assert!((star - 2f64.sqrt()).abs() < 1e-12);

        let s = summarize(EffectKey::First(0), &[3.0, 3.0]).unwrap();
        assert_eq!(monotonicity_ratios(&s).unwrap(), (0.0, Some(0.0)));

        let s = summarize(EffectKey::First(0), &[0.0, 0.0]).unwrap();
        assert!(matches!(monotonicity_ratios(&s), Err(Error::UndefinedRatio)));
    }

    proptest! {
        #[test]
        fn zones_survive_rescaling(values in prop::collection::vec(-100.0f64..100.0, 2..20), c in 1e-3f64..1e3) {
            let groups: Vec<Vec<f64>> = vec![values.clone(), values.iter().map(|v| v * 0.3 + 1.0).collect()];
            let base: Vec<_> = groups.iter().enumerate().map(|(i, g)| summarize(EffectKey::First(i), g).unwrap()).collect();
            let scaled: Vec<_> = groups
                .iter()
                .enumerate()
                .map(|(i, g)| summarize(EffectKey::First(i), &g.iter().map(|v| v * c).collect::<Vec<_>>()).unwrap())
                .collect();
            let z1 = classify_all(&base, DEFAULT_NEGLIGIBLE_REL).unwrap();
            let z2 = classify_all(&scaled, DEFAULT_NEGLIGIBLE_REL).unwrap();
            // Ratios can move by a few ulps under scaling; only compare zones away from a boundary.
            for ((a, b), s) in z1.iter().zip(&z2).zip(&base) {
                let r = s.sigma.unwrap() / s.mu_star;
                let near = GUIDE_RATIOS.iter().any(|g| (r - g).abs() < 1e-9);
                if !near {
                    prop_assert_eq!(a, b);
                }
            }
        }

        #[test]
        fn ratio_star_never_exceeds_ratio_abs(values in prop::collection::vec(-50.0f64..50.0, 2..30)) {
            let s = summarize(EffectKey::First(0), &values).unwrap();
            if let Ok((star, Some(abs))) = monotonicity_ratios(&s) {
                prop_assert!(star <= abs);
            }
        }
    }
}
