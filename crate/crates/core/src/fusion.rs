//! Asynchronous multimodal fusion of a text and an optional visual report.
//!
//! Post-peak imagery showing receded water is not allowed to veto the
//! text analyst's extent estimate; damage is persistent, so the larger of
//! the two damage estimates wins.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysts::{AnalystReport, EvidenceRefs};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error("extent_weight must lie in [0, 1], got {0}")]
    InvalidWeight(f64),
    #[error("{field} = {value} is outside its range")]
    OutOfRange { field: &'static str, value: f64 },
}

/// Peak flooding date of the Harvey event.
pub fn default_peak_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2017, 8, 28).expect("valid date")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionParams {
    pub peak_date: NaiveDate,
    /// Text weight in the weighted-average branch.
    pub extent_weight: f64,
}

impl Default for FusionParams {
    fn default() -> Self {
        FusionParams {
            peak_date: default_peak_date(),
            extent_weight: 0.5,
        }
    }
}

impl FusionParams {
    pub fn validate(&self) -> Result<(), FusionError> {
        if (0.0..=1.0).contains(&self.extent_weight) {
            Ok(())
        } else {
            Err(FusionError::InvalidWeight(self.extent_weight))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionInput {
    pub text_report: AnalystReport,
    pub visual_report: Option<AnalystReport>,
    /// End date of the query window.
    pub query_date: NaiveDate,
    pub params: FusionParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    TextPriority,
    Weighted,
    TextOnlyFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionProvenance {
    pub evidence_refs: EvidenceRefs,
    pub text_reasoning: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub visual_reasoning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedAssessment {
    pub flood_extent_pct: f64,
    pub damage_severity_pct: f64,
    pub confidence: f64,
    pub branch_taken: Branch,
    pub provenance: FusionProvenance,
}

pub fn weighted_avg(t: f64, v: f64, w: f64) -> f64 {
    w * t + (1.0 - w) * v
}

fn check(report: &AnalystReport) -> Result<(), FusionError> {
    let fields = [
        ("flood_extent_pct", report.flood_extent_pct, 100.0),
        ("damage_severity_pct", report.damage_severity_pct, 100.0),
        ("confidence", report.confidence, 1.0),
    ];
    for (field, value, hi) in fields {
        if !(0.0..=hi).contains(&value) {
            return Err(FusionError::OutOfRange { field, value });
        }
    }
    Ok(())
}

pub fn fuse(input: &FusionInput) -> Result<FusedAssessment, FusionError> {
    input.params.validate()?;
    let t = &input.text_report;
    check(t)?;
    let Some(v) = &input.visual_report else {
        return Ok(FusedAssessment {
            flood_extent_pct: t.flood_extent_pct,
            damage_severity_pct: t.damage_severity_pct,
            confidence: t.confidence,
            branch_taken: Branch::TextOnlyFallback,
            provenance: FusionProvenance {
                evidence_refs: t.evidence_refs.clone(),
                text_reasoning: t.reasoning.clone(),
                visual_reasoning: None,
            },
        });
    };
    check(v)?;
    let (extent, branch) = if input.query_date > input.params.peak_date && v.recession_observed {
        (t.flood_extent_pct, Branch::TextPriority)
    } else {
        (
            weighted_avg(t.flood_extent_pct, v.flood_extent_pct, input.params.extent_weight),
            Branch::Weighted,
        )
    };
    Ok(FusedAssessment {
        flood_extent_pct: extent,
        damage_severity_pct: t.damage_severity_pct.max(v.damage_severity_pct),
        confidence: t.confidence.min(v.confidence),
        branch_taken: branch,
        provenance: FusionProvenance {
            evidence_refs: t.evidence_refs.merged(&v.evidence_refs),
            text_reasoning: t.reasoning.clone(),
            visual_reasoning: Some(v.reasoning.clone()),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysts::ReportFlags;

    fn report(extent: f64, damage: f64, recession: bool) -> AnalystReport {
        AnalystReport {
            flood_extent_pct: extent,
            damage_severity_pct: damage,
            recession_observed: recession,
            confidence: 0.8,
            roads_impacted: Vec::new(),
            reasoning: String::new(),
            evidence_refs: EvidenceRefs::default(),
            summary: None,
            flags: ReportFlags::default(),
        }
    }

    fn input(t: AnalystReport, v: Option<AnalystReport>, q: &str) -> FusionInput {
        FusionInput {
            text_report: t,
            visual_report: v,
            query_date: q.parse().unwrap(),
            params: FusionParams::default(),
        }
    }

    #[test]
    fn post_peak_recession_keeps_text_extent() {
        let f = fuse(&input(report(60.0, 10.0, false), Some(report(2.0, 30.0, true)), "2017-09-01")).unwrap();
        assert_eq!((f.flood_extent_pct, f.damage_severity_pct), (60.0, 30.0));
        assert_eq!(f.branch_taken, Branch::TextPriority);
    }

    #[test]
    fn before_peak_weighted() {
        let f = fuse(&input(report(40.0, 0.0, false), Some(report(60.0, 0.0, true)), "2017-08-27")).unwrap();
        assert_eq!((f.flood_extent_pct, f.branch_taken), (50.0, Branch::Weighted));
    }

    #[test]
    fn peak_day_is_not_after_peak() {
        let f = fuse(&input(report(40.0, 0.0, false), Some(report(60.0, 0.0, true)), "2017-08-28")).unwrap();
        assert_eq!(f.branch_taken, Branch::Weighted);
    }

    #[test]
    fn text_only_fallback() {
        let f = fuse(&input(report(35.0, 12.0, false), None, "2017-09-01")).unwrap();
        assert_eq!((f.flood_extent_pct, f.damage_severity_pct), (35.0, 12.0));
        assert_eq!(f.branch_taken, Branch::TextOnlyFallback);
        assert!(f.provenance.visual_reasoning.is_none());
    }

    #[test]
    fn weighted_avg_bounds() {
        assert_eq!(weighted_avg(40.0, 60.0, 1.0), 40.0);
        assert_eq!(weighted_avg(40.0, 60.0, 0.0), 60.0);
        assert_eq!(weighted_avg(40.0, 60.0, 0.5), 50.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut i = input(report(35.0, 12.0, false), None, "2017-09-01");
        i.params.extent_weight = 1.5;
        assert_eq!(fuse(&i), Err(FusionError::InvalidWeight(1.5)));
        let i = input(report(135.0, 12.0, false), None, "2017-09-01");
        assert!(matches!(fuse(&i), Err(FusionError::OutOfRange { .. })));
    }
}
