mod common;

use common::gradcheck::{self, TOL};

fn assert_below(name: &str, worst: f64) {
    assert!(worst < TOL, "{name}: worst relative error {worst:.3e}");
}

#[test]
fn elementwise_primitives() {
    assert_below("elementwise", gradcheck::elementwise_primitives());
}

#[test]
fn matrix_primitives() {
    assert_below("matrix", gradcheck::matrix_primitives());
}

#[test]
fn smann_encode_read_classify() {
    assert_below("smann", gradcheck::smann_encode_read_classify());
}

#[test]
fn actor_critic_losses() {
    assert_below("actor-critic", gradcheck::actor_critic_losses());
}
