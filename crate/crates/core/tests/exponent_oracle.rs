#[path = "support/oracle.rs"]
mod oracle;

#[test]
fn closed_forms_match_high_precision() {
    let r = oracle::run(2_000, 0x00dd_5eed);
    assert!(r.checks > 2_000 * 20, "only {} checks ran", r.checks);
    assert!(r.failures.is_empty(), "{} mismatches, first: {:?}", r.failures.len(), r.failures.first());
}
