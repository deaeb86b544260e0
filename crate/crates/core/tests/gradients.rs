mod common;

use cubg::grid::{slice_backward, slice_backward_with, slice_forward, Accumulation, ExecMode};
use cubg::regress::{smooth_l1_backward, smooth_l1_loss, soft_argmin, soft_argmin_backward, Reduction, SoftArgminConfig};
use cubg::{DenseArray, DisparityMap, Polarity, SliceParams};
use rand::Rng;

use common::*;

const H: f64 = 1e-3;
const TOL: f64 = 1e-3;

#[test]
fn soft_argmin_column_matches_finite_differences() {
    let mut r = rng(21);
    for polarity in [Polarity::Cost, Polarity::Similarity] {
        for tau in [0.25f32, 1.0, 4.0] {
            let vol = volume([1, 1, 5], random_array(&mut r, &[5], -1.0, 1.0).into_vec(), polarity);
            let cfg = SoftArgminConfig::new(tau).unwrap();
            let one = DenseArray::full(&[1, 1], 1.0).unwrap();
            let an = soft_argmin_backward(&vol, &cfg, &one).unwrap();
            let f = |c: &[f32]| soft_argmin(&volume([1, 1, 5], c.to_vec(), polarity), &cfg).unwrap().values()[0] as f64;
            let fd: Vec<f64> = (0..5).map(|k| central_difference(vol.values(), k, H, f)).collect();
            assert!(gradient_error(an.data(), &fd) <= TOL, "{:?} vs {fd:?}", an.data());
        }
    }
}

#[test]
fn soft_argmin_matches_reference_expectation() {
    let mut r = rng(22);
    let vol = volume([2, 3, 7], random_array(&mut r, &[42], 0.0, 4.0).into_vec(), Polarity::Cost);
    let out = soft_argmin(&vol, &SoftArgminConfig::new(0.5).unwrap()).unwrap();
    for (i, col) in vol.values().chunks(7).enumerate() {
        let col: Vec<f64> = col.iter().map(|&v| v as f64).collect();
        assert!((out.values()[i] as f64 - oracle_soft_argmin(&col, -1.0, 0.5)).abs() <= 1e-5);
    }
}

#[test]
fn loss_through_soft_argmin_matches_finite_differences() {
    let mut r = rng(23);
    for _ in 0..20 {
        let (h, w, d) = (r.gen_range(1..=3), r.gen_range(1..=3), r.gen_range(3..=6));
        let vol = volume([h, w, d], random_array(&mut r, &[h * w * d], 0.0, 2.0).into_vec(), Polarity::Cost);
        let gt = DisparityMap::all_valid(random_array(&mut r, &[h, w], 0.0, (d - 1) as f32)).unwrap();
        let cfg = SoftArgminConfig::new(0.5).unwrap();
        let pred = soft_argmin(&vol, &cfg).unwrap();
        let dpred = smooth_l1_backward(&pred, &gt, Reduction::Mean).unwrap();
        let an = soft_argmin_backward(&vol, &cfg, &dpred).unwrap();
        let f = |c: &[f32]| {
            let p = soft_argmin(&volume([h, w, d], c.to_vec(), Polarity::Cost), &cfg).unwrap();
            smooth_l1_loss(&p, &gt).unwrap()
        };
        let fd: Vec<f64> = (0..vol.values().len()).map(|k| central_difference(vol.values(), k, H, f)).collect();
        assert!(gradient_error(an.data(), &fd) <= TOL);
    }
}

#[test]
fn slice_gradients_match_finite_differences() {
    let mut r = rng(24);
    for _ in 0..20 {
        let shape = [r.gen_range(2..=3), r.gen_range(2..=3), r.gen_range(2..=3), r.gen_range(3..=5)];
        let grid = random_grid(&mut r, shape);
        let p = SliceParams::new(r.gen_range(2..=6), r.gen_range(2..=6), r.gen_range(2..=5));
        let guide = guidance_off_knots(&mut r, p.out_w, p.out_h, shape[3], 0.1);
        let up = random_array(&mut r, &[p.out_h, p.out_w, p.out_d], 0.5, 1.5);
        let grads = slice_backward(&grid, &guide, &p, &up).unwrap();
        let f = |g: &[f32]| {
            let g = cubg::GuidanceMap::new(DenseArray::from_vec(&[p.out_h, p.out_w], g.to_vec()).unwrap()).unwrap();
            f64_dot(slice_forward(&grid, &g, &p).unwrap().values(), up.data())
        };
        let fd: Vec<f64> = (0..guide.values().len()).map(|k| central_difference(guide.values(), k, H, f)).collect();
        assert!(gradient_error(grads.guidance.data(), &fd) <= TOL);
    }
}

#[test]
fn accumulation_modes_agree() {
    let mut r = rng(26);
    let grid = random_grid(&mut r, [6, 5, 4, 6]);
    let p = SliceParams::new(40, 30, 16);
    let guide = random_guidance(&mut r, p.out_w, p.out_h);
    let up = random_array(&mut r, &[p.out_h, p.out_w, p.out_d], -1.0, 1.0);
    let a = slice_backward_with(&grid, &guide, &p, &up, ExecMode::Parallel, Accumulation::PartialGrids).unwrap();
    let b = slice_backward_with(&grid, &guide, &p, &up, ExecMode::Parallel, Accumulation::Atomic).unwrap();
    let s = slice_backward_with(&grid, &guide, &p, &up, ExecMode::Sequential, Accumulation::PartialGrids).unwrap();
    for ((x, y), z) in a.grid.data().iter().zip(b.grid.data()).zip(s.grid.data()) {
        assert!((x - y).abs() <= 1e-4 && (x - z).abs() <= 1e-4);
    }
    assert_eq!(a.guidance.data(), b.guidance.data());
    let again = slice_backward_with(&grid, &guide, &p, &up, ExecMode::Parallel, Accumulation::PartialGrids).unwrap();
    assert_eq!(a.grid.data(), again.grid.data());
}
