use lstm_sharp_core::lstm::{
    cell_step, cell_step_detailed, gate_preactivation, mfu_sigmoid, mfu_tanh, random_inputs,
    sequence_eval_with_state,
};
use lstm_sharp_core::{
    sequence_eval, Gate, LstmModelSpec, LstmState, LstmWeights, Matrix, NumericPolicy,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Straight scalar loops with naive summation.
fn scalar_step(w: &LstmWeights, x: &[f64], prev: &LstmState) -> LstmState {
    let h = prev.h.len();
    let mut act = [vec![0.0; h], vec![0.0; h], vec![0.0; h], vec![0.0; h]];
    for g in 0..4 {
        for r in 0..h {
            let mut z = w.b[g][r];
            for (c, xv) in x.iter().enumerate() {
                z += w.w[g].get(r, c) * xv;
            }
            for (c, hv) in prev.h.iter().enumerate() {
                z += w.u[g].get(r, c) * hv;
            }
            act[g][r] = if g == 2 { z.tanh() } else { sig(z) };
        }
    }
    let mut next = LstmState::zeros(h);
    for r in 0..h {
        next.c[r] = act[1][r] * prev.c[r] + act[0][r] * act[2][r];
        next.h[r] = act[3][r] * next.c[r].tanh();
    }
    next
}

fn close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        assert!((x - y).abs() <= tol, "index {i}: {x} vs {y}");
    }
}

#[test]
fn random_4x4_preactivation_matches_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let w = Matrix::random(4, 4, 1.0, &mut rng);
    let u = Matrix::random(4, 4, 1.0, &mut rng);
    let b: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let h: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let z = gate_preactivation(&w, &u, &b, &x, &h, &NumericPolicy::full()).unwrap();
    let oracle: Vec<f64> = (0..4)
        .map(|r| {
            b[r] + (0..4)
                .map(|c| w.get(r, c) * x[c] + u.get(r, c) * h[c])
                .sum::<f64>()
        })
        .collect();
    close(&z, &oracle, 1e-14);
}

#[test]
fn small_cell_step_matches_loops() {
    let spec = LstmModelSpec::new("tiny", 2, 3, 1).unwrap();
    let w = LstmWeights::random(&spec, 5);
    let prev = LstmState {
        c: vec![0.3, -0.2, 0.9],
        h: vec![-0.5, 0.1, 0.4],
    };
    let x = [0.7, -1.1];
    let got = cell_step(&spec, &w, &x, &prev, &NumericPolicy::full()).unwrap();
    let want = scalar_step(&w, &x, &prev);
    close(&got.c, &want.c, 1e-14);
    close(&got.h, &want.h, 1e-14);
}

#[test]
fn three_step_sequence_matches_loops() {
    let spec = LstmModelSpec::new("seq", 3, 4, 3).unwrap();
    let w = LstmWeights::random(&spec, 9);
    let xs = random_inputs(&spec, 9);
    let out = sequence_eval(&spec, &w, &xs, &LstmState::zeros(4), &NumericPolicy::full()).unwrap();
    let mut s = LstmState::zeros(4);
    for t in 0..3 {
        s = scalar_step(&w, xs.row(t), &s);
        close(out.row(t), &s.h, 1e-13);
    }
}

#[test]
fn detailed_trace_is_consistent() {
    let spec = LstmModelSpec::new("tr", 3, 5, 1).unwrap();
    let w = LstmWeights::random(&spec, 1);
    let p = NumericPolicy::full();
    let tr = cell_step_detailed(&spec, &w, &[0.2, 0.4, -0.3], &LstmState::zeros(5), &p).unwrap();
    for g in Gate::ALL {
        for r in 0..5 {
            let z = tr.preactivations[g.index()][r];
            let a = if g == Gate::G {
                mfu_tanh(z, &p)
            } else {
                mfu_sigmoid(z, &p)
            };
            assert_eq!(tr.activations[g.index()][r], a);
        }
    }
}

#[test]
fn half_precision_tracks_full() {
    let spec = LstmModelSpec::new("half", 6, 6, 4).unwrap();
    let w = LstmWeights::random(&spec, 2);
    let xs = random_inputs(&spec, 2);
    let full = sequence_eval(&spec, &w, &xs, &LstmState::zeros(6), &NumericPolicy::full()).unwrap();
    let half = sequence_eval(&spec, &w, &xs, &LstmState::zeros(6), &NumericPolicy::half()).unwrap();
    close(&half.data, &full.data, 1e-2);
}

proptest! {
    #[test]
    fn sigmoid_is_symmetric(x in -30.0f64..30.0) {
        let p = NumericPolicy::full();
        prop_assert!((mfu_sigmoid(-x, &p) - (1.0 - mfu_sigmoid(x, &p))).abs() < 1e-15);
    }

    #[test]
    fn activations_stay_in_range(x in -1e3f64..1e3) {
        for p in [NumericPolicy::full(), NumericPolicy::half()] {
            let s = mfu_sigmoid(x, &p);
            let t = mfu_tanh(x, &p);
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert!((-1.0..=1.0).contains(&t));
        }
    }

    #[test]
    fn sequence_splits_at_any_point(seed in 0u64..1000, t_len in 2usize..7, cut in 1usize..6) {
        let cut = cut.min(t_len - 1);
        let spec = LstmModelSpec::new("p", 3, 4, t_len).unwrap();
        let w = LstmWeights::random(&spec, seed);
        let xs = random_inputs(&spec, seed);
        let p = NumericPolicy::full();
        let (all, _) = sequence_eval_with_state(&spec, &w, &xs, &LstmState::zeros(4), &p).unwrap();

        let head_spec = LstmModelSpec::new("a", 3, 4, cut).unwrap();
        let tail_spec = LstmModelSpec::new("b", 3, 4, t_len - cut).unwrap();
        let head_x = Matrix { rows: cut, cols: 3, data: xs.data[..3 * cut].to_vec() };
        let tail_x = Matrix { rows: t_len - cut, cols: 3, data: xs.data[3 * cut..].to_vec() };
        let (a, mid) = sequence_eval_with_state(&head_spec, &w, &head_x, &LstmState::zeros(4), &p).unwrap();
        let (b, _) = sequence_eval_with_state(&tail_spec, &w, &tail_x, &mid, &p).unwrap();
        prop_assert_eq!(&all.data[..4 * cut], &a.data[..]);
        prop_assert_eq!(&all.data[4 * cut..], &b.data[..]);
    }
}
