//! Functional LSTM reference: the correctness oracle for every tiled and
//! scheduled computation in the simulator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SharpError};
use crate::numeric::NumericPolicy;

/// The four LSTM gates, always in (i, f, g, o) order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Gate {
    I,
    F,
    G,
    O,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::I, Gate::F, Gate::G, Gate::O];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Gate {
        Gate::ALL[i]
    }

    pub fn name(self) -> &'static str {
        match self {
            Gate::I => "i",
            Gate::F => "f",
            Gate::G => "g",
            Gate::O => "o",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LstmModelSpec {
    pub name: String,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub seq_len: usize,
}

impl LstmModelSpec {
    pub fn new(
        name: impl Into<String>,
        input_dim: usize,
        hidden_dim: usize,
        seq_len: usize,
    ) -> Result<Self> {
        let spec = Self {
            name: name.into(),
            input_dim,
            hidden_dim,
            seq_len,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Square model (D = H) as used by the benchmark matrix.
    pub fn square(hidden_dim: usize, seq_len: usize) -> Result<Self> {
        Self::new(format!("h{hidden_dim}"), hidden_dim, hidden_dim, seq_len)
    }

    pub fn validate(&self) -> Result<()> {
        for (what, v) in [
            ("input_dim", self.input_dim),
            ("hidden_dim", self.hidden_dim),
            ("seq_len", self.seq_len),
        ] {
            if v == 0 {
                return Err(SharpError::Config(format!("{what} must be at least 1")));
            }
        }
        Ok(())
    }

    /// Multiply-accumulates of one full sequence: 4 gates x H x (D + H) x T.
    pub fn useful_macs(&self) -> u64 {
        4 * (self.hidden_dim as u64)
            * (self.input_dim + self.hidden_dim) as u64
            * self.seq_len as u64
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(SharpError::Dimension {
                    what: "matrix row length",
                    expected: cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn random(rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> Self {
        let data = (0..rows * cols)
            .map(|_| rng.gen_range(-scale..=scale))
            .collect();
        Self { rows, cols, data }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Per-gate weights, indexed by `Gate::index()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmWeights {
    pub w: [Matrix; 4],
    pub u: [Matrix; 4],
    pub b: [Vec<f64>; 4],
}

impl LstmWeights {
    pub fn zeros(spec: &LstmModelSpec) -> Self {
        let (d, h) = (spec.input_dim, spec.hidden_dim);
        Self {
            w: std::array::from_fn(|_| Matrix::zeros(h, d)),
            u: std::array::from_fn(|_| Matrix::zeros(h, h)),
            b: std::array::from_fn(|_| vec![0.0; h]),
        }
    }

    /// Deterministic uniform weights in +-1/sqrt(H).
    pub fn random(spec: &LstmModelSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (d, h) = (spec.input_dim, spec.hidden_dim);
        let scale = 1.0 / (h as f64).sqrt();
        let w = std::array::from_fn(|_| Matrix::random(h, d, scale, &mut rng));
        let u = std::array::from_fn(|_| Matrix::random(h, h, scale, &mut rng));
        let b = std::array::from_fn(|_| (0..h).map(|_| rng.gen_range(-scale..=scale)).collect());
        Self { w, u, b }
    }

    pub fn validate(&self, spec: &LstmModelSpec) -> Result<()> {
        let (d, h) = (spec.input_dim, spec.hidden_dim);
        for g in 0..4 {
            check_dim("W rows", h, self.w[g].rows)?;
            check_dim("W cols", d, self.w[g].cols)?;
            check_dim("U rows", h, self.u[g].rows)?;
            check_dim("U cols", h, self.u[g].cols)?;
            check_dim("bias length", h, self.b[g].len())?;
        }
        Ok(())
    }

    /// Gate-interleaved fused matrix: row `4r + gate` holds `[W_gate[r] | U_gate[r]]`
    /// restricted to the requested operand columns.
    pub fn fused(&self, input: bool, hidden: bool) -> Matrix {
        let h = self.w[0].rows;
        let d = self.w[0].cols;
        let cols = if input { d } else { 0 } + if hidden { h } else { 0 };
        let mut m = Matrix::zeros(4 * h, cols);
        for r in 0..h {
            for g in 0..4 {
                let dst = &mut m.data[(4 * r + g) * cols..(4 * r + g + 1) * cols];
                let mut off = 0;
                if input {
                    dst[..d].copy_from_slice(self.w[g].row(r));
                    off = d;
                }
                if hidden {
                    dst[off..off + h].copy_from_slice(self.u[g].row(r));
                }
            }
        }
        m
    }

    /// `[W_gate | U_gate]` for a single gate.
    pub fn gate_matrix(&self, gate: Gate) -> Matrix {
        let g = gate.index();
        let (h, d) = (self.w[g].rows, self.w[g].cols);
        let mut m = Matrix::zeros(h, d + h);
        for r in 0..h {
            m.data[r * (d + h)..r * (d + h) + d].copy_from_slice(self.w[g].row(r));
            m.data[r * (d + h) + d..(r + 1) * (d + h)].copy_from_slice(self.u[g].row(r));
        }
        m
    }
}

fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(SharpError::Dimension {
            what,
            expected,
            got,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmState {
    pub c: Vec<f64>,
    pub h: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden_dim: usize) -> Self {
        Self {
            c: vec![0.0; hidden_dim],
            h: vec![0.0; hidden_dim],
        }
    }
}

/// Seeded T x D input sequence in [-1, 1].
pub fn random_inputs(spec: &LstmModelSpec, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_1e57);
    Matrix::random(spec.seq_len, spec.input_dim, 1.0, &mut rng)
}

/// z = W x + U h + b, accumulated under `policy` and rounded once per row.
pub fn gate_preactivation(
    w: &Matrix,
    u: &Matrix,
    b: &[f64],
    x: &[f64],
    h_prev: &[f64],
    policy: &NumericPolicy,
) -> Result<Vec<f64>> {
    let rows = b.len();
    check_dim("W rows", rows, w.rows)?;
    check_dim("U rows", rows, u.rows)?;
    check_dim("x length", w.cols, x.len())?;
    check_dim("h length", u.cols, h_prev.len())?;
    Ok((0..rows)
        .map(|r| {
            let mut acc = policy.from_value(b[r]);
            for (wv, xv) in w.row(r).iter().zip(x) {
                policy.add_product(&mut acc, *wv, *xv);
            }
            for (uv, hv) in u.row(r).iter().zip(h_prev) {
                policy.add_product(&mut acc, *uv, *hv);
            }
            acc.value()
        })
        .collect())
}

/// Sigmoid as the MFU evaluates it: exponentiate, add one, reciprocate.
pub fn mfu_sigmoid(x: f64, policy: &NumericPolicy) -> f64 {
    let e = policy.round((-x).exp());
    let s = policy.round(e + 1.0);
    policy.round(1.0 / s)
}

/// Hyperbolic tangent on the same exponent/add/divide datapath, evaluated on
/// |x| so the function is exactly odd.
pub fn mfu_tanh(x: f64, policy: &NumericPolicy) -> f64 {
    let m = policy.round((-2.0 * x.abs()).exp_m1());
    let num = policy.round(-m);
    let den = policy.round(2.0 + m);
    let t = policy.round(num / den);
    if x.is_sign_negative() {
        -t
    } else {
        t
    }
}

/// One Cell Updater element: c = f*c_prev + i*g, h = o*tanh(c).
#[inline]
pub fn cell_update_element(
    policy: &NumericPolicy,
    i: f64,
    f: f64,
    g: f64,
    o: f64,
    c_prev: f64,
) -> (f64, f64) {
    let c = policy.round(policy.round(f * c_prev) + policy.round(i * g));
    let h = policy.round(o * mfu_tanh(c, policy));
    (c, h)
}

/// Applies the gate's activation function to one preactivation.
#[inline]
pub fn activate(gate: Gate, z: f64, policy: &NumericPolicy) -> f64 {
    match gate {
        Gate::G => mfu_tanh(z, policy),
        _ => mfu_sigmoid(z, policy),
    }
}

/// Everything one time step produces, for detailed comparisons.
#[derive(Debug, Clone)]
pub struct StepTrace {
    pub preactivations: [Vec<f64>; 4],
    pub activations: [Vec<f64>; 4],
    pub state: LstmState,
}

pub fn cell_step_detailed(
    spec: &LstmModelSpec,
    weights: &LstmWeights,
    x_t: &[f64],
    prev: &LstmState,
    policy: &NumericPolicy,
) -> Result<StepTrace> {
    let h = spec.hidden_dim;
    check_dim("x_t length", spec.input_dim, x_t.len())?;
    check_dim("c_prev length", h, prev.c.len())?;
    check_dim("h_prev length", h, prev.h.len())?;
    let mut pre: [Vec<f64>; 4] = Default::default();
    let mut act: [Vec<f64>; 4] = Default::default();
    for gate in Gate::ALL {
        let g = gate.index();
        let z = gate_preactivation(
            &weights.w[g],
            &weights.u[g],
            &weights.b[g],
            x_t,
            &prev.h,
            policy,
        )?;
        if let Some(row) = z.iter().position(|v| !v.is_finite()) {
            return Err(SharpError::NumericOverflow {
                gate: gate.name(),
                row,
            });
        }
        act[g] = z.iter().map(|&v| activate(gate, v, policy)).collect();
        pre[g] = z;
    }
    let mut state = LstmState::zeros(h);
    for r in 0..h {
        let (c, hv) = cell_update_element(
            policy, act[0][r], act[1][r], act[2][r], act[3][r], prev.c[r],
        );
        if !c.is_finite() || !hv.is_finite() {
            return Err(SharpError::NumericOverflow {
                gate: "cell",
                row: r,
            });
        }
        state.c[r] = c;
        state.h[r] = hv;
    }
    Ok(StepTrace {
        preactivations: pre,
        activations: act,
        state,
    })
}

pub fn cell_step(
    spec: &LstmModelSpec,
    weights: &LstmWeights,
    x_t: &[f64],
    prev: &LstmState,
    policy: &NumericPolicy,
) -> Result<LstmState> {
    cell_step_detailed(spec, weights, x_t, prev, policy).map(|t| t.state)
}

/// Folds `cell_step` over the sequence; returns every h_t plus the final state.
pub fn sequence_eval_with_state(
    spec: &LstmModelSpec,
    weights: &LstmWeights,
    inputs: &Matrix,
    init: &LstmState,
    policy: &NumericPolicy,
) -> Result<(Matrix, LstmState)> {
    weights.validate(spec)?;
    check_dim("input rows", spec.seq_len, inputs.rows)?;
    check_dim("input cols", spec.input_dim, inputs.cols)?;
    let mut out = Matrix::zeros(spec.seq_len, spec.hidden_dim);
    let mut state = init.clone();
    for t in 0..spec.seq_len {
        state = cell_step(spec, weights, inputs.row(t), &state, policy)?;
        out.data[t * spec.hidden_dim..(t + 1) * spec.hidden_dim].copy_from_slice(&state.h);
    }
    Ok((out, state))
}

pub fn sequence_eval(
    spec: &LstmModelSpec,
    weights: &LstmWeights,
    inputs: &Matrix,
    init: &LstmState,
    policy: &NumericPolicy,
) -> Result<Matrix> {
    sequence_eval_with_state(spec, weights, inputs, init, policy).map(|(m, _)| m)
}
