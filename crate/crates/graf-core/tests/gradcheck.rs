//! Finite-difference gradient checks for every differentiable operation and
//! both full model forward passes. The shared harness lives in
//! `common::gradcheck`; the acceptance suite runs the same cases.

mod common;

use common::gradcheck;

#[test]
fn matmul_gradients_match_finite_differences() {
    gradcheck::matmul_cases();
}

#[test]
fn sparse_aggregate_gradients_match_finite_differences() {
    gradcheck::sparse_aggregate_cases();
}

#[test]
fn segment_softmax_gradients_match_finite_differences() {
    gradcheck::segment_softmax_cases();
}

#[test]
fn activation_gradients_match_finite_differences() {
    gradcheck::activation_cases();
}

#[test]
fn edge_pair_leaky_gradients_match_finite_differences() {
    gradcheck::edge_pair_leaky_cases();
}

#[test]
fn concat_and_weighted_sum_gradients_match_finite_differences() {
    gradcheck::concat_and_weighted_sum_cases();
}

#[test]
fn dropout_gradients_match_finite_differences() {
    gradcheck::dropout_cases();
}

#[test]
fn cross_entropy_gradients_match_finite_differences() {
    gradcheck::cross_entropy_cases();
}

#[test]
fn reduction_gradients_match_finite_differences() {
    gradcheck::reduction_cases();
}

#[test]
fn attention_model_gradients_match_finite_differences() {
    gradcheck::attention_model_cases();
}

#[test]
fn gcn_gradients_match_finite_differences() {
    gradcheck::gcn_cases();
}
