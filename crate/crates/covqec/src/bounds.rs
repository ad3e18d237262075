//! Fundamental limits relating symmetry violation, inaccuracy, and the
//! channel quantities, evaluated as explicit pass/fail checks with residuals.

use serde::{Deserialize, Serialize};

use crate::codes::SymmetryPair;
use crate::measures::MeasureReport;
use crate::{Error, Result};

/// Tolerance for the exact (no lower-order slack) inequalities.
pub const EXACT_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
    /// `lhs - (rhs - c * rhs^2)` for the leading-order bounds, `lhs - rhs`
    /// for the exact ones; nonnegative (up to tolerance) when satisfied.
    pub slack: f64,
    pub notes: String,
}

impl BoundCheck {
    fn vacuous(name: &str, notes: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            lhs: f64::NAN,
            rhs: f64::NAN,
            satisfied: true,
            slack: f64::NAN,
            notes: notes.into(),
        }
    }
}

/// Lower bound on the global symmetry violation of a code correcting the
/// noise to inaccuracy `epsilon`:
/// `delta_G >= sqrt(max(0, dh_logical - 2 epsilon j_min) / dh_physical)`
/// up to second order; checked in the leading-order form
/// `lhs - rhs >= -c * rhs^2`.
pub fn theorem1(
    delta_group: f64,
    epsilon: f64,
    j_min: Option<f64>,
    dh_logical: f64,
    dh_physical: f64,
    c: f64,
) -> Result<BoundCheck> {
    if dh_physical <= 0.0 {
        return Err(Error::InvalidParameter(
            "theorem1 needs a nontrivial physical Hamiltonian".into(),
        ));
    }
    let Some(j) = j_min else {
        return Ok(BoundCheck::vacuous(
            "theorem1",
            "vacuous: no Hamiltonian expansion in the Kraus span",
        ));
    };
    let rhs = ((dh_logical - 2.0 * epsilon * j).max(0.0) / dh_physical).sqrt();
    let slack = delta_group - (rhs - c * rhs * rhs);
    Ok(BoundCheck {
        name: "theorem1".into(),
        lhs: delta_group,
        rhs,
        satisfied: slack >= -EXACT_TOL,
        slack,
        notes: format!("leading-order slack with c = {c}"),
    })
}

/// Joint lower bound from the regularized channel QFI:
/// `epsilon + delta_G >= dh_logical / sqrt(4 f_reg)` to leading order.
pub fn theorem2(
    epsilon: f64,
    delta_group: f64,
    f_reg: Option<f64>,
    dh_logical: f64,
    c: f64,
) -> Result<BoundCheck> {
    let Some(f) = f_reg else {
        return Ok(BoundCheck::vacuous(
            "theorem2",
            "vacuous: regularized channel QFI diverges",
        ));
    };
    if f <= 0.0 {
        return Ok(BoundCheck::vacuous(
            "theorem2",
            "vacuous: zero channel QFI",
        ));
    }
    let rhs = dh_logical / (4.0 * f).sqrt();
    let lhs = epsilon + delta_group;
    let slack = lhs - (rhs - c * rhs * rhs);
    Ok(BoundCheck {
        name: "theorem2".into(),
        lhs,
        rhs,
        satisfied: slack >= -EXACT_TOL,
        slack,
        notes: format!("leading-order slack with c = {c}"),
    })
}

/// Exact trade-off inequalities (no lower-order terms):
/// `delta_P + 2 epsilon j_min >= dh_logical`,
/// `delta_C + 2 epsilon j_min >= dh_logical`, and
/// `|chi| <= 2 epsilon j_min`, all within an absolute tolerance.
pub fn theorem4(
    delta_point: f64,
    delta_charge: f64,
    chi: f64,
    epsilon: f64,
    j_min: Option<f64>,
    dh_logical: f64,
) -> Result<Vec<BoundCheck>> {
    let Some(j) = j_min else {
        return Ok(vec![BoundCheck::vacuous(
            "theorem4",
            "vacuous: no Hamiltonian expansion in the Kraus span",
        )]);
    };
    let budget = 2.0 * epsilon * j;
    let exact = |name: &str, lhs: f64, rhs: f64| BoundCheck {
        name: name.into(),
        lhs,
        rhs,
        satisfied: lhs - rhs >= -EXACT_TOL,
        slack: lhs - rhs,
        notes: "exact inequality".into(),
    };
    Ok(vec![
        exact("theorem4-point", delta_point + budget, dh_logical),
        exact("theorem4-charge", delta_charge + budget, dh_logical),
        exact("theorem4-fluctuation", budget, chi.abs()),
    ])
}

/// Reporting-only comparison of a transversal-gate resolution `d` against
/// the scaling envelope
/// `b = max((sum_l dt_physical_l)^{3/2} / dt_logical^{1/2}, dt_logical)`.
/// The constant in front of `b` is not pinned down, so the check never
/// fails; the ratio `d / b` is reported for trend inspection.
pub fn corollary_gate_bound(dt_physical: &[f64], dt_logical: f64, d: f64) -> Result<BoundCheck> {
    if dt_logical <= 0.0 {
        return Err(Error::InvalidParameter(
            "gate-resolution bound needs a nontrivial logical generator".into(),
        ));
    }
    if dt_physical.iter().any(|&x| x < 0.0) {
        return Err(Error::InvalidParameter(
            "physical generator spreads must be nonnegative".into(),
        ));
    }
    let total: f64 = dt_physical.iter().sum();
    let b = (total.powf(1.5) / dt_logical.sqrt()).max(dt_logical);
    Ok(BoundCheck {
        name: "corollary-gate-resolution".into(),
        lhs: d,
        rhs: b,
        satisfied: true,
        slack: d / b,
        notes: format!("reporting-only; ratio d/b = {:.6}", d / b),
    })
}

/// Evaluate every bound applicable to a finished measure report.
pub fn bound_checks(
    report: &MeasureReport,
    sym: &SymmetryPair,
    c: f64,
) -> Result<Vec<BoundCheck>> {
    let dh_logical = sym.h_logical.spectral_range()?;
    let dh_physical = sym.h_physical.spectral_range()?;
    let mut out = Vec::new();
    out.push(theorem1(
        report.delta_group,
        report.epsilon,
        report.j_min,
        dh_logical,
        dh_physical,
        c,
    )?);
    out.push(theorem2(
        report.epsilon,
        report.delta_group,
        report.f_reg,
        dh_logical,
        c,
    )?);
    out.extend(theorem4(
        report.delta_point,
        report.delta_charge,
        report.chi,
        report.epsilon,
        report.j_min,
        dh_logical,
    )?);
    Ok(out)
}
