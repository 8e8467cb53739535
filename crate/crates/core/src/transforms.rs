//! Derived outputs computed from recorded runs.
//!
//! Nothing here can reach a model: transforms only read [`EvaluationRecord`]s,
//! so any number of derived analyses cost zero extra runs.

use serde::{Deserialize, Serialize};

use crate::design::DesignPlan;
use crate::effects::OutputMap;
use crate::error::{Error, Result};
use crate::ledger::{EvaluationRecord, Ledger};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransformSpec {
    Identity,
    NaturalLog,
    /// Divide by `constant * prod(physical value of each listed parameter)`,
    /// read from the same record.
    DivideByProduct {
        parameters: Vec<usize>,
        #[serde(default = "one")]
        constant: f64,
    },
    Affine {
        scale: f64,
        #[serde(default)]
        offset: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl TransformSpec {
    /// Apply to an already-derived value belonging to `record`.
    pub fn apply_value(&self, value: f64, record: &EvaluationRecord) -> Result<f64> {
        match self {
            TransformSpec::Identity => Ok(value),
            TransformSpec::NaturalLog => {
                if value > 0.0 {
                    Ok(value.ln())
                } else {
                    Err(Error::Domain {
                        point_id: record.point_id,
                        reason: format!("logarithm of non-positive value {value}"),
                    })
                }
            }
            TransformSpec::DivideByProduct { parameters, constant } => {
                let mut divisor = *constant;
                for &i in parameters {
                    let x = record.physical_values.get(i).ok_or_else(|| Error::Domain {
                        point_id: record.point_id,
                        reason: format!("record has no parameter {i}"),
                    })?;
                    divisor *= x;
                }
                if divisor == 0.0 || !divisor.is_finite() {
                    return Err(Error::Domain {
                        point_id: record.point_id,
                        reason: format!("divisor is {divisor}"),
                    });
                }
                Ok(value / divisor)
            }
            TransformSpec::Affine { scale, offset } => Ok(scale * value + offset),
        }
    }

    pub fn apply(&self, record: &EvaluationRecord, output_name: &str) -> Result<f64> {
        self.apply_value(raw(record, output_name)?, record)
    }
}

fn raw(record: &EvaluationRecord, output_name: &str) -> Result<f64> {
    record.outputs.get(output_name).copied().ok_or_else(|| Error::Domain {
        point_id: record.point_id,
        reason: format!("no output named `{output_name}`"),
    })
}

/// Apply a chain of transforms in order.
pub fn apply_chain(chain: &[TransformSpec], record: &EvaluationRecord, output_name: &str) -> Result<f64> {
    let mut value = raw(record, output_name)?;
    for t in chain {
        value = t.apply_value(value, record)?;
    }
    if !value.is_finite() {
        return Err(Error::Domain {
            point_id: record.point_id,
            reason: format!("transformed value is {value}"),
        });
    }
    Ok(value)
}

/// Every point-level failure of a transform, so callers can report all of
/// them instead of silently dropping points.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformFailure {
    pub failures: Vec<(usize, String)>,
}

impl std::fmt::Display for TransformFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "transform failed at {} point(s):", self.failures.len())?;
        for (id, reason) in &self.failures {
            writeln!(f, "  point {id}: {reason}")?;
        }
        Ok(())
    }
}

/// Derived output for every plan point, keyed by plan point id.
pub fn derive_outputs(
    plan: &DesignPlan,
    ledger: &Ledger,
    output_name: &str,
    chain: &[TransformSpec],
) -> Result<std::result::Result<OutputMap, TransformFailure>> {
    let records = ledger.records_for_plan(plan)?;
    let mut values = OutputMap::with_capacity(records.len());
    let mut failures = Vec::new();
    for (id, record) in records.into_iter().enumerate() {
        match apply_chain(chain, record, output_name) {
            Ok(v) => {
                values.insert(id, v);
            }
            Err(Error::Domain { reason, .. }) => failures.push((id, reason)),
            Err(e) => return Err(e),
        }
    }
    if failures.is_empty() {
        Ok(Ok(values))
    } else {
        Ok(Err(TransformFailure { failures }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{sample_first_order, sample_second_order, ParameterSpec};
    use crate::effects::{analyze, EffectKey};
    use crate::ledger::LedgerHeader;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn record(y: f64, physical: Vec<f64>) -> EvaluationRecord {
        EvaluationRecord::ok(4, vec![0; physical.len()], physical, BTreeMap::from([("y".to_string(), y)]))
    }

    #[test]
    fn identity_and_volume() {
        assert_eq!(TransformSpec::Identity.apply(&record(42.0, vec![]), "y").unwrap(), 42.0);
        let per_volume = TransformSpec::DivideByProduct { parameters: vec![0, 1], constant: 5.0 };
        assert_eq!(per_volume.apply(&record(1000.0, vec![10.0, 10.0]), "y").unwrap(), 2.0);
    }

    #[test]
    fn domain_errors_name_the_point() {
        match TransformSpec::NaturalLog.apply(&record(0.0, vec![]), "y") {
            Err(Error::Domain { point_id, .. }) => assert_eq!(point_id, 4),
            other => panic!("{other:?}"),
        }
        let per_volume = TransformSpec::DivideByProduct { parameters: vec![0], constant: 1.0 };
        assert!(matches!(per_volume.apply(&record(3.0, vec![0.0]), "y"), Err(Error::Domain { .. })));
        assert!(matches!(TransformSpec::Identity.apply(&record(3.0, vec![]), "z"), Err(Error::Domain { .. })));
    }

    #[test]
    fn chain_applies_in_order() {
        let chain = [
            TransformSpec::DivideByProduct { parameters: vec![0], constant: 1.0 },
            TransformSpec::NaturalLog,
            TransformSpec::Affine { scale: 2.0, offset: 1.0 },
        ];
        let v = apply_chain(&chain, &record(std::f64::consts::E * 4.0, vec![4.0]), "y").unwrap();
        assert!((v - 3.0).abs() < 1e-15);
    }

    fn ledger_for(plan: &DesignPlan, f: impl Fn(&[f64]) -> f64) -> Ledger {
        let mut ledger = Ledger::in_memory(LedgerHeader::new("h", "r", vec![], vec!["y".into()]));
        let records = plan
            .points
            .iter()
            .enumerate()
            .map(|(id, p)| {
                let y = f(&p.coords(&plan.parameters));
                EvaluationRecord::ok(id, p.levels().to_vec(), p.physical(&plan.parameters), BTreeMap::from([("y".to_string(), y)]))
            })
            .collect();
        ledger.append(records).unwrap();
        ledger
    }

    #[test]
    fn log_linearizes_exponential_model() {
        let ps: Vec<_> = (0..2).map(|i| ParameterSpec::new(format!("x{i}"), 0.0, 1.0, 10).unwrap()).collect();
        let plan = sample_first_order(&ps, 10, 21).unwrap();
        let ledger = ledger_for(&plan, |x| (2.0 * x[0] + x[1]).exp());
        let runs = ledger.run_count();
        let logged = derive_outputs(&plan, &ledger, "y", &[TransformSpec::NaturalLog]).unwrap().unwrap();
        let analysis = analyze(&plan, &logged).unwrap();
        for s in analysis.first_order() {
            assert!(s.sigma.unwrap() <= 1e-9, "{s:?}");
        }
        assert_eq!(ledger.run_count(), runs);
    }

    #[test]
    fn failures_are_reported_not_dropped() {
        let ps: Vec<_> = (0..2).map(|i| ParameterSpec::new(format!("x{i}"), 0.0, 1.0, 4).unwrap()).collect();
        let plan = sample_first_order(&ps, 6, 2).unwrap();
        let ledger = ledger_for(&plan, |x| x[0] - 0.5);
        let failure = derive_outputs(&plan, &ledger, "y", &[TransformSpec::NaturalLog]).unwrap().unwrap_err();
        let expected: Vec<usize> = plan
            .points
            .iter()
            .enumerate()
            .filter(|(_, p)| p.coords(&ps)[0] <= 0.5)
            .map(|(id, _)| id)
            .collect();
        assert_eq!(failure.failures.iter().map(|f| f.0).collect::<Vec<_>>(), expected);
    }

    proptest! {
        #[test]
        fn empty_product_is_identity(y in -1e9f64..1e9, xs in prop::collection::vec(-10.0f64..10.0, 0..4)) {
            let t = TransformSpec::DivideByProduct { parameters: vec![], constant: 1.0 };
            prop_assert_eq!(t.apply(&record(y, xs), "y").unwrap(), y);
        }

        #[test]
        fn log_removes_multiplicative_interaction(seed: u64, a in 0.1f64..3.0, b in -2.0f64..2.0) {
            let ps: Vec<_> = (0..2).map(|i| ParameterSpec::new(format!("x{i}"), 0.0, 1.0, 10).unwrap()).collect();
            let plan = sample_second_order(&ps, 5, seed).unwrap();
            // f1(x1) * f2(x2) with both factors positive.
            let ledger = ledger_for(&plan, |x| (a + x[0] * x[0]) * (b * x[1]).exp());
            let logged = derive_outputs(&plan, &ledger, "y", &[TransformSpec::NaturalLog]).unwrap().unwrap();
            let analysis = analyze(&plan, &logged).unwrap();
            prop_assert!(analysis.get(EffectKey::Second(0, 1)).unwrap().mu_star <= 1e-9);
        }
    }
}
