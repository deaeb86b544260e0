mod common;

use cubg::regress::{soft_argmin, SoftArgminConfig};
use cubg::{DenseArray, Polarity};
use proptest::prelude::*;

use common::*;

fn column(values: Vec<f32>, polarity: Polarity) -> cubg::CostVolume {
    let d = values.len();
    volume([1, 1, d], values, polarity)
}

#[test]
fn lower_temperature_sharpens_towards_the_winner() {
    // single minimum at index 5 of 8
    let costs = vec![3.0, 2.5, 2.0, 1.8, 1.2, 0.2, 1.5, 2.2];
    let err: Vec<f32> = [1.0f32, 0.1, 0.01]
        .iter()
        .map(|&t| (soft_argmin(&column(costs.clone(), Polarity::Cost), &SoftArgminConfig::new(t).unwrap()).unwrap().values()[0] - 5.0).abs())
        .collect();
    assert!(err[0] > err[1] && err[1] > err[2], "{err:?}");
    assert!(err[2] < 1e-3);
}

#[test]
fn similarity_prefers_the_largest_score() {
    let scores = vec![0.1, 0.9, 0.2, 0.0];
    let d = soft_argmin(&column(scores, Polarity::Similarity), &SoftArgminConfig::new(0.01).unwrap()).unwrap();
    assert!((d.values()[0] - 1.0).abs() < 1e-3);
}

#[test]
fn non_positive_temperature_is_rejected() {
    assert!(SoftArgminConfig::new(0.0).is_err());
    assert!(SoftArgminConfig::new(-1.0).is_err());
    assert!(SoftArgminConfig::new(f32::NAN).is_err());
}

#[test]
fn extreme_costs_stay_finite() {
    let d = soft_argmin(&column(vec![1e30, -1e30, 0.0], Polarity::Cost), &SoftArgminConfig::new(1e-3).unwrap()).unwrap();
    assert_eq!(d.values()[0], 1.0);
}

proptest! {
    #[test]
    fn output_lies_in_disparity_range(values in prop::collection::vec(-50.0f32..50.0, 1..24), tau in 0.01f32..10.0) {
        let d = values.len();
        let out = soft_argmin(&column(values, Polarity::Cost), &SoftArgminConfig::new(tau).unwrap()).unwrap();
        let v = out.values()[0];
        prop_assert!(v >= 0.0 && v <= (d - 1) as f32);
    }

    #[test]
    fn per_pixel_shift_does_not_move_the_estimate(
        values in prop::collection::vec(-5.0f32..5.0, 2..16),
        shift in -10.0f32..10.0,
    ) {
        let d = values.len();
        let cfg = SoftArgminConfig::default();
        let a = soft_argmin(&column(values.clone(), Polarity::Cost), &cfg).unwrap();
        let shifted = DenseArray::from_vec(&[1, 1, d], values.iter().map(|v| v + shift).collect()).unwrap();
        let b = soft_argmin(&cubg::CostVolume::new(shifted, Polarity::Cost).unwrap(), &cfg).unwrap();
        prop_assert!((a.values()[0] - b.values()[0]).abs() <= 1e-4);
    }
}
