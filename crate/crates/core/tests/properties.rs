mod common;

use common::props;

#[test]
fn read_weights_are_normalised() {
    props::read_weights_are_normalised().unwrap();
}

#[test]
fn masked_softmax_rows_are_normalised() {
    props::masked_softmax_rows_are_normalised().unwrap();
}

#[test]
fn gate_counts_fall_as_threshold_rises() {
    props::gate_counts_fall_as_threshold_rises().unwrap();
}

#[test]
fn all_gates_open_matches_ungated() {
    props::all_gates_open_matches_ungated().unwrap();
}

#[test]
fn high_threshold_opens_at_most_one_gate() {
    props::high_threshold_opens_at_most_one_gate().unwrap();
}

#[test]
fn zero_alpha_keeps_extrinsic_bits() {
    props::zero_alpha_keeps_extrinsic_bits().unwrap();
}

#[test]
fn statistics_ignore_sample_order() {
    props::statistics_ignore_sample_order().unwrap();
}
