//! Two-channel flakiness detector. The log channel scores a failed job by
//! its nearest labeled neighbors; the structured channel scores the same job
//! from build metadata. The final score is their convex combination,
//! thresholded strictly.

use serde::{Deserialize, Serialize};

use crate::diag::Diagnostic;
use crate::features::StructuredFeatureVector;
use crate::learners::{FeatureRanking, FittedClassifier};
use crate::logsem::{self, LogDocument, LogScoreModel, VectorIndex};

/// The four tunable parameters of the detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Neighbors retrieved by the log channel.
    pub k: usize,
    /// Structured features kept after ranking.
    pub f: usize,
    /// Weight of the log channel in the fusion.
    pub alpha: f64,
    /// Decision threshold; scores strictly above it are Flaky.
    pub beta: f64,
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), DetectorError> {
        if self.k == 0 {
            return Err(DetectorError::NonPositive { what: "k" });
        }
        if self.f == 0 {
            return Err(DetectorError::NonPositive { what: "f" });
        }
        if !(0.0..=1.0).contains(&self.alpha) || !self.alpha.is_finite() {
            return Err(DetectorError::OutOfRange { what: "alpha", value: self.alpha });
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(DetectorError::OutOfRange { what: "beta", value: self.beta });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Flaky,
    Safe,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Flaky => "flaky",
            Verdict::Safe => "safe",
        })
    }
}

/// Convex combination of the two channel scores:
/// `alpha * p_log + (1 - alpha) * p_struct`.
pub fn fuse(p_log: f64, p_struct: f64, alpha: f64) -> Result<f64, DetectorError> {
    for (what, value) in [("p_log", p_log), ("p_struct", p_struct), ("alpha", alpha)] {
        if !(0.0..=1.0).contains(&value) || !value.is_finite() {
            return Err(DetectorError::OutOfRange { what, value });
        }
    }
    Ok(alpha * p_log + (1.0 - alpha) * p_struct)
}

/// Flaky iff the fused score strictly exceeds the threshold; a score equal
/// to the threshold is Safe.
pub fn decide(p_final: f64, beta: f64) -> Verdict {
    if p_final > beta {
        Verdict::Flaky
    } else {
        Verdict::Safe
    }
}

/// The complete trained artifact: both channels, the feature ranking that
/// defines the structured projection, and the configuration they were
/// trained under. Immutable once assembled; prediction is pure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub schema_version: u32,
    pub config: DetectorConfig,
    pub index: VectorIndex,
    pub log_model: LogScoreModel,
    pub ranking: FeatureRanking,
    /// Names of the structured columns the classifier consumes, in ranking
    /// order. Always the top `config.f` of `ranking`.
    pub selected_features: Vec<String>,
    pub classifier: FittedClassifier,
}

impl DetectorModel {
    /// Assembles and cross-checks a model from trained channel parts.
    pub fn new(
        config: DetectorConfig,
        index: VectorIndex,
        log_model: LogScoreModel,
        ranking: FeatureRanking,
        classifier: FittedClassifier,
    ) -> Result<Self, DetectorError> {
        config.validate()?;
        if log_model.k != config.k {
            return Err(DetectorError::ChannelMismatch {
                what: format!("log model trained with k={}, config has k={}", log_model.k, config.k),
            });
        }
        if ranking.entries.len() < config.f {
            return Err(DetectorError::ChannelMismatch {
                what: format!(
                    "ranking covers {} features, config selects f={}",
                    ranking.entries.len(),
                    config.f
                ),
            });
        }
        if classifier.input_width() != config.f {
            return Err(DetectorError::ChannelMismatch {
                what: format!(
                    "classifier expects {} columns, config selects f={}",
                    classifier.input_width(),
                    config.f
                ),
            });
        }
        let selected_features =
            ranking.top_names(config.f).into_iter().map(str::to_string).collect();
        Ok(DetectorModel {
            schema_version: crate::SCHEMA_VERSION,
            config,
            index,
            log_model,
            ranking,
            selected_features,
            classifier,
        })
    }

    /// Re-checks the invariants, for models loaded from disk.
    pub fn validate(&self) -> Result<(), DetectorError> {
        let rebuilt = DetectorModel::new(
            self.config,
            self.index.clone(),
            self.log_model.clone(),
            self.ranking.clone(),
            self.classifier.clone(),
        )?;
        if rebuilt.selected_features != self.selected_features {
            return Err(DetectorError::ChannelMismatch {
                what: "selected features disagree with the ranking".to_string(),
            });
        }
        Ok(())
    }
}

/// One scored job, with both channel scores kept for auditing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub job_ref: String,
    pub p_log: f64,
    pub p_struct: f64,
    pub p_final: f64,
    pub label: Verdict,
    pub diagnostics: Vec<Diagnostic>,
}

fn project_row(
    row: &[f64],
    names: &[String],
    selected: &[String],
) -> Result<Vec<f64>, DetectorError> {
    selected
        .iter()
        .map(|s| {
            names
                .iter()
                .position(|n| n == s)
                .map(|j| row[j])
                .ok_or_else(|| DetectorError::UnknownFeature { name: s.clone() })
        })
        .collect()
}

/// Scores one failed job through both channels and fuses. Both channel
/// scores are computed even at the alpha boundaries so the output is always
/// auditable. An empty log is scored against padded neighbors and flagged.
pub fn predict(
    model: &DetectorModel,
    doc: &LogDocument,
    features: &StructuredFeatureVector,
) -> Result<Prediction, DetectorError> {
    let p_log = logsem::p_log(&model.log_model, &model.index, doc);
    let row = features.encode();
    let projected =
        project_row(&row, StructuredFeatureVector::feature_names(), &model.selected_features)?;
    let p_struct = model.classifier.predict_proba(&projected);
    let p_final = fuse(p_log, p_struct, model.config.alpha)?;
    let mut diagnostics = Vec::new();
    if doc.raw.is_empty() {
        diagnostics.push(Diagnostic::new(
            doc.job_ref.clone(),
            "log missing or empty; log channel scored against padded neighbors",
        ));
    }
    Ok(Prediction {
        job_ref: doc.job_ref.clone(),
        p_log,
        p_struct,
        p_final,
        label: decide(p_final, model.config.beta),
        diagnostics,
    })
}

#[derive(Debug, thiserror::Error)]
pub enum DetectorError {
    #[error("{what} must be positive")]
    NonPositive { what: &'static str },
    #[error("{what} = {value} is out of range")]
    OutOfRange { what: &'static str, value: f64 },
    #[error("channel mismatch: {what}")]
    ChannelMismatch { what: String },
    #[error("model selects unknown feature {name:?}")]
    UnknownFeature { name: String },
}
