mod common;

use common::checks;

#[test]
fn conduction_reaches_linear_profile() {
    let summary = checks::conduction_steady_state(1, 8).unwrap();
    println!("{summary}");
}

#[test]
fn onset_above_critical_decay_below() {
    let summary = checks::convection_onset(16, 3000).unwrap();
    println!("{summary}");
}
