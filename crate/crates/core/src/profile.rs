//! Per-partition-point compute and communication profiles of a training model.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("profile parse error: {0}")]
    Parse(String),
    #[error("profile invariant violated: {0}")]
    InvariantViolation(String),
    #[error("reading profile: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerCut {
    pub k: usize,
    /// Client-side compute per batch.
    #[serde(rename = "q_client")]
    pub client_density: f64,
    /// Server-side compute per batch.
    #[serde(rename = "q_server")]
    pub server_density: f64,
    /// Data exchanged per batch (activations, gradients and labels).
    #[serde(rename = "s_exchange")]
    pub exchange_size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelProfile {
    pub name: String,
    pub num_layers: usize,
    pub model_size: f64,
    /// Compute per batch when the whole model runs on the client. Defaults to
    /// the largest client+server total over all cuts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_full: Option<f64>,
    pub cuts: Vec<LayerCut>,
}

impl ModelProfile {
    pub fn from_json(text: &str) -> Result<Self, ProfileError> {
        let profile: ModelProfile = serde_json::from_str(text).map_err(|e| ProfileError::Parse(e.to_string()))?;
        profile.validate()?;
        Ok(profile)
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        let bad = |msg: String| Err(ProfileError::InvariantViolation(msg));
        if self.cuts.is_empty() {
            return bad("profile has no cuts".into());
        }
        if !(self.model_size.is_finite() && self.model_size >= 0.0) {
            return bad("model_size must be finite and non-negative".into());
        }
        if let Some(q) = self.q_full {
            if !(q.is_finite() && q >= 0.0) {
                return bad("q_full must be finite and non-negative".into());
            }
        }
        let mut seen = BTreeSet::new();
        for cut in &self.cuts {
            if cut.k == 0 {
                return bad("cut k=0 is not allowed (raw data would leave the client)".into());
            }
            if cut.k >= self.num_layers {
                return bad(format!("cut k={} must be below num_layers={}", cut.k, self.num_layers));
            }
            if !seen.insert(cut.k) {
                return bad(format!("duplicate cut k={}", cut.k));
            }
            for (name, v) in [
                ("q_client", cut.client_density),
                ("q_server", cut.server_density),
                ("s_exchange", cut.exchange_size),
            ] {
                if !(v.is_finite() && v >= 0.0) {
                    return bad(format!("cut k={}: {name} must be finite and non-negative", cut.k));
                }
            }
        }
        Ok(())
    }

    pub fn cut(&self, k: usize) -> Option<&LayerCut> {
        self.cuts.iter().find(|c| c.k == k)
    }

    pub fn full_density(&self) -> f64 {
        self.q_full.unwrap_or_else(|| {
            self.cuts.iter().map(|c| c.client_density + c.server_density).fold(0.0, f64::max)
        })
    }

    /// The bundled DenseNet-shaped synthetic profile.
    pub fn densenet_like() -> Self {
        Self::from_json(include_str!("../data/densenet_like.json")).expect("bundled profile is valid")
    }

    /// The bundled MobileNet-shaped synthetic profile.
    pub fn mobilenet_like() -> Self {
        Self::from_json(include_str!("../data/mobilenet_like.json")).expect("bundled profile is valid")
    }
}

pub fn load_profile(path: impl AsRef<Path>) -> Result<ModelProfile, ProfileError> {
    ModelProfile::from_json(&std::fs::read_to_string(path)?)
}

/// Cuts worth considering: scanning in ascending `k`, a cut is kept when its
/// exchange size is strictly below `shrink_factor` times the smallest
/// exchange size among all earlier cuts. The first cut is always kept.
pub fn effective_partition_points(profile: &ModelProfile, shrink_factor: f64) -> Vec<usize> {
    assert!(shrink_factor > 0.0 && shrink_factor <= 1.0, "shrink_factor must be in (0, 1]");
    let mut cuts: Vec<&LayerCut> = profile.cuts.iter().collect();
    cuts.sort_by_key(|c| c.k);
    let mut out = Vec::new();
    let mut running_min = f64::INFINITY;
    for (idx, cut) in cuts.iter().enumerate() {
        if idx == 0 || cut.exchange_size < shrink_factor * running_min {
            out.push(cut.k);
        }
        running_min = running_min.min(cut.exchange_size);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn with_sizes(sizes: &[f64]) -> ModelProfile {
        ModelProfile {
            name: "t".into(),
            num_layers: sizes.len() + 1,
            model_size: 1.0,
            q_full: None,
            cuts: sizes
                .iter()
                .enumerate()
                .map(|(i, &s)| LayerCut { k: i + 1, client_density: i as f64, server_density: 1.0, exchange_size: s })
                .collect(),
        }
    }

    #[test]
    fn loads_three_cuts() {
        let text = r#"{"name":"m","num_layers":4,"model_size":10,
            "cuts":[{"k":1,"q_client":1,"q_server":3,"s_exchange":5},
                    {"k":2,"q_client":2,"q_server":2,"s_exchange":4},
                    {"k":3,"q_client":3,"q_server":1,"s_exchange":6}]}"#;
        let p = ModelProfile::from_json(text).unwrap();
        assert_eq!(p.cuts.len(), 3);
        assert_eq!(p.full_density(), 4.0);
    }

    #[test]
    fn rejects_duplicate_and_zero_cut() {
        let dup = r#"{"name":"m","num_layers":4,"model_size":1,
            "cuts":[{"k":2,"q_client":1,"q_server":1,"s_exchange":1},
                    {"k":2,"q_client":1,"q_server":1,"s_exchange":1}]}"#;
        assert!(matches!(ModelProfile::from_json(dup), Err(ProfileError::InvariantViolation(_))));
        let zero = r#"{"name":"m","num_layers":4,"model_size":1,
            "cuts":[{"k":0,"q_client":1,"q_server":1,"s_exchange":1}]}"#;
        assert!(matches!(ModelProfile::from_json(zero), Err(ProfileError::InvariantViolation(_))));
        let neg = r#"{"name":"m","num_layers":4,"model_size":1,
            "cuts":[{"k":1,"q_client":-1,"q_server":1,"s_exchange":1}]}"#;
        assert!(matches!(ModelProfile::from_json(neg), Err(ProfileError::InvariantViolation(_))));
        assert!(matches!(ModelProfile::from_json("{"), Err(ProfileError::Parse(_))));
    }

    #[test]
    fn effective_points_examples() {
        assert_eq!(effective_partition_points(&with_sizes(&[10.0, 4.0, 6.0, 3.0]), 1.0), vec![1, 2, 4]);
        assert_eq!(effective_partition_points(&with_sizes(&[2.0, 5.0, 9.0]), 1.0), vec![1]);
        assert_eq!(effective_partition_points(&with_sizes(&[5.0, 5.0, 5.0]), 1.0), vec![1]);
    }

    #[test]
    fn stricter_factor_prunes_more() {
        let p = with_sizes(&[10.0, 8.0, 3.0]);
        assert_eq!(effective_partition_points(&p, 1.0), vec![1, 2, 3]);
        assert_eq!(effective_partition_points(&p, 0.5), vec![1, 3]);
    }

    #[test]
    fn bundled_profiles_are_valid() {
        let d = ModelProfile::densenet_like();
        let m = ModelProfile::mobilenet_like();
        assert_eq!(effective_partition_points(&d, 1.0), vec![1, 3, 5, 9]);
        assert_eq!(effective_partition_points(&m, 1.0), vec![1, 4, 8, 12, 24]);
        for p in [&d, &m] {
            let mut last = -1.0;
            for c in &p.cuts {
                assert!(c.client_density > last, "client density increases with k");
                last = c.client_density;
            }
        }
    }

    proptest! {
        #[test]
        fn effective_points_properties(
            sizes in prop::collection::vec(0.01f64..100.0, 1..20),
            scale in 0.01f64..100.0,
        ) {
            let p = with_sizes(&sizes);
            let eff = effective_partition_points(&p, 1.0);
            prop_assert_eq!(eff[0], 1);
            prop_assert!(eff.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(eff.iter().all(|k| p.cut(*k).is_some()));
            let selected: Vec<f64> = eff.iter().map(|k| p.cut(*k).unwrap().exchange_size).collect();
            prop_assert!(selected.windows(2).all(|w| w[1] < w[0]));

            let scaled = with_sizes(&sizes.iter().map(|s| s * scale).collect::<Vec<_>>());
            prop_assert_eq!(effective_partition_points(&scaled, 1.0), eff);
        }
    }
}
