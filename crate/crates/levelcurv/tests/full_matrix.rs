//! The full scenario × order verification matrix at reduced grids: every
//! row of every cataloged scenario must pass two-sided comparison. The
//! acceptance suite pins the headline configurations at their stated
//! tolerances; this covers the remaining rows (planes, ellipsoid, the
//! 3-sphere annulus, and the warped product at every order).

use levelcurv::report::{run_verify, VerifyConfig};
use levelcurv::scenarios::catalog;

#[test]
fn every_catalog_row_passes_two_sided_comparison() {
    let config = VerifyConfig {
        scenarios: catalog().into_iter().map(str::to_string).collect(),
        rs: None,
        grid: Some(vec![16, 16, 32]),
        t_nodes: 16,
        tol_rel: 1e-3,
        tol_abs: 1e-9,
        seed: 0,
    };
    let report = run_verify(&config).unwrap();
    // Five n = 3 scenarios contribute three orders each, the two n = 4
    // scenarios four orders each.
    assert_eq!(report.rows.len(), 5 * 3 + 2 * 4);
    for row in &report.rows {
        assert!(row.error.is_none(), "{} r={}: {:?}", row.scenario, row.r, row.error);
        assert!(
            row.pass,
            "{} r={}: lhs={} rhs={} rel={}",
            row.scenario, row.r, row.lhs, row.rhs, row.rel_error
        );
    }
    assert!(report.all_pass);
}
