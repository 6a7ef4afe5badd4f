//! Vectorized losses against their naive loop transcriptions on seeded
//! random instances (B <= 2, C <= 4, h,w <= 8, D <= 16).

use uccl_core::losses;
use uccl_core::verification::{ckr_oracle_campaign, run_oracle_campaign, sbu_oracle_campaign};

const CASES: usize = 200;
const TOL: f64 = 1e-6;
const SEED: u64 = 0x0acc_e55e;

#[test]
fn sbu_matches_naive_oracle_on_200_instances() {
    let reports = sbu_oracle_campaign(SEED, CASES, TOL, &|ps, pw, fs, fw, tau| {
        losses::sbu_loss(ps, pw, fs, fw, tau)
    });
    assert_eq!(reports.len(), CASES);
    for r in &reports {
        assert!(
            r.pass,
            "case {:?}: vectorized {} vs oracle {} (rel {})",
            r.descriptor, r.vectorized, r.oracle, r.rel_err
        );
    }
}

#[test]
fn ckr_matches_naive_oracle_on_200_instances() {
    let reports = ckr_oracle_campaign(SEED ^ 1, CASES, TOL, &|fs, fw, pw| {
        losses::ckr_loss(fs, fw, pw)
    });
    assert_eq!(reports.len(), CASES);
    for r in &reports {
        assert!(
            r.pass,
            "case {:?}: vectorized {} vs oracle {} (rel {})",
            r.descriptor, r.vectorized, r.oracle, r.rel_err
        );
    }
}

#[test]
fn default_campaign_covers_both_losses() {
    let reports = run_oracle_campaign(SEED ^ 2, 25, TOL);
    assert_eq!(reports.len(), 50);
    assert!(reports.iter().all(|r| r.pass));
    assert!(reports.iter().any(|r| r.metric == "sbu_loss"));
    assert!(reports.iter().any(|r| r.metric == "ckr_loss"));
}

/// Mutation sanity: an injected sign error on the cosine term must be caught.
#[test]
fn sign_error_in_ckr_is_detected() {
    let reports = ckr_oracle_campaign(SEED ^ 3, 50, TOL, &|fs, fw, pw| {
        losses::ckr_loss(fs, fw, pw).map(|v| 2.0 - v)
    });
    let failures = reports.iter().filter(|r| !r.pass).count();
    assert!(failures > 0, "mutated loss slipped past the oracle");
}

/// Mutation sanity for the reweighting loss: dropping the per-batch
/// normalization must be caught on multi-image instances.
#[test]
fn scaling_error_in_sbu_is_detected() {
    let reports = sbu_oracle_campaign(SEED ^ 4, 50, TOL, &|ps, pw, fs, fw, tau| {
        losses::sbu_loss(ps, pw, fs, fw, tau).map(|v| v * ps.logits.b as f64)
    });
    let failures = reports.iter().filter(|r| !r.pass).count();
    assert!(failures > 0, "unnormalized loss slipped past the oracle");
}
