//! Operator-level checks over an eps ladder: the averaging identities, the
//! thin-domain Poincare inequality and the Ladyzhenskaya constants.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::avgops::{check_poincare, identity_suite, ladyzhenskaya_battery, LadyzhenskayaBattery, OperatorReport};
use crate::error::Result;
use crate::grid::{Grid3D, VField3D};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridChecks {
    pub eps: f64,
    pub identities: Vec<OperatorReport>,
    /// Largest Poincare ratio over the random fields.
    pub poincare: OperatorReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckOpsReport {
    pub schema_version: u32,
    pub shape: [usize; 3],
    pub n_fields: usize,
    pub grids: Vec<GridChecks>,
    pub ladyzhenskaya: LadyzhenskayaBattery,
    pub identities_passed: bool,
    pub inequalities_passed: bool,
}

impl CheckOpsReport {
    pub fn passed(&self) -> bool {
        self.identities_passed && self.inequalities_passed
    }
}

/// Worst Poincare ratio over `n_fields` random admissible fields.
pub fn poincare_worst(grid: Grid3D, n_fields: usize, seed: u64) -> OperatorReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: Option<OperatorReport> = None;
    for _ in 0..n_fields {
        let r = check_poincare(&VField3D::random(grid, &mut rng));
        if r.applicable && worst.as_ref().is_none_or(|w| r.lhs > w.lhs) {
            worst = Some(r);
        }
    }
    worst.unwrap_or_else(|| OperatorReport::inapplicable("poincare", crate::avgops::CheckKind::Inequality))
}

pub fn run_check_ops(base: Grid3D, eps_list: &[f64], n_fields: usize, seed: u64) -> Result<CheckOpsReport> {
    let mut grids = vec![];
    for (r, &eps) in eps_list.iter().enumerate() {
        let g = base.with_eps(eps)?;
        let s = seed.wrapping_add(r as u64);
        grids.push(GridChecks { eps, identities: identity_suite(g, n_fields, s), poincare: poincare_worst(g, n_fields, s) });
    }
    let ladyzhenskaya = ladyzhenskaya_battery(base, eps_list, n_fields, seed)?;
    let identities_passed = grids.iter().all(|g| g.identities.iter().all(|r| r.passed));
    let inequalities_passed = grids.iter().all(|g| g.poincare.passed && g.poincare.applicable) && ladyzhenskaya.passed;
    Ok(CheckOpsReport {
        schema_version: 1,
        shape: [base.nx, base.ny, base.nz],
        n_fields,
        grids,
        ladyzhenskaya,
        identities_passed,
        inequalities_passed,
    })
}
