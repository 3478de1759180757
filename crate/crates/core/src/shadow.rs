//! Executes a [`StepProgram`] on real numbers, phase by phase, through the
//! tiled datapath and checks every step against the dense reference.

use crate::error::{Result, SharpError};
use crate::lstm::{
    activate, cell_step_detailed, cell_update_element, Gate, LstmModelSpec, LstmState, LstmWeights,
    Matrix, StepTrace,
};
use crate::numeric::{NumericPolicy, Partial};
use crate::schedule::{Operand, PhaseKind, PlanId, StepProgram};
use crate::tiling::{execute_block, interleave_weights, WeightLayout};

struct Layouts {
    gate: Option<[WeightLayout; 4]>,
    fused: Option<WeightLayout>,
    input: Option<WeightLayout>,
    hidden: Option<WeightLayout>,
}

impl Layouts {
    fn build(program: &StepProgram, weights: &LstmWeights) -> Result<Self> {
        let plans = &program.plans;
        let gate = match &plans.gate {
            Some(plan) => {
                let mut v = Vec::with_capacity(4);
                for gate in Gate::ALL {
                    v.push(interleave_weights(&weights.gate_matrix(gate), plan)?);
                }
                Some(v.try_into().unwrap_or_else(|_| unreachable!()))
            }
            None => None,
        };
        let one = |plan: &Option<_>, input: bool, hidden: bool| -> Result<Option<WeightLayout>> {
            plan.as_ref()
                .map(|p| interleave_weights(&weights.fused(input, hidden), p))
                .transpose()
        };
        Ok(Self {
            gate,
            fused: one(&plans.fused, true, true)?,
            input: one(&plans.input, true, false)?,
            hidden: one(&plans.hidden, false, true)?,
        })
    }

    fn get(&self, id: PlanId, gate: Gate) -> &WeightLayout {
        match id {
            PlanId::Gate => &self.gate.as_ref().expect("gate layouts")[gate.index()],
            PlanId::Fused => self.fused.as_ref().expect("fused layout"),
            PlanId::Input => self.input.as_ref().expect("input layout"),
            PlanId::Hidden => self.hidden.as_ref().expect("hidden layout"),
        }
    }
}

/// Per-step working storage; NaN marks values not produced yet.
struct StepData {
    pre: [Vec<Option<Partial>>; 4],
    act: [Vec<f64>; 4],
    buffered: Vec<Option<Partial>>,
    c: Vec<f64>,
    h: Vec<f64>,
}

impl StepData {
    fn new(h: usize) -> Self {
        Self {
            pre: std::array::from_fn(|_| vec![None; h]),
            act: std::array::from_fn(|_| vec![f64::NAN; h]),
            buffered: vec![None; 4 * h],
            c: vec![f64::NAN; h],
            h: vec![f64::NAN; h],
        }
    }
}

fn check(
    policy: &NumericPolicy,
    step: usize,
    gate: &'static str,
    row: usize,
    got: f64,
    expected: f64,
) -> Result<()> {
    let ok = if policy.is_half() {
        policy.close(got, expected)
    } else {
        got == expected || (got.is_nan() && expected.is_nan())
    };
    if ok {
        Ok(())
    } else {
        Err(SharpError::Mismatch {
            step,
            gate,
            row,
            got,
            expected,
        })
    }
}

/// The dense per-step trace the shadow checks against.
pub fn reference_trace(
    spec: &LstmModelSpec,
    weights: &LstmWeights,
    inputs: &Matrix,
    init: &LstmState,
    policy: &NumericPolicy,
) -> Result<Vec<StepTrace>> {
    let mut out = Vec::with_capacity(spec.seq_len);
    let mut state = init.clone();
    for t in 0..spec.seq_len {
        let tr = cell_step_detailed(spec, weights, inputs.row(t), &state, policy)?;
        state = tr.state.clone();
        out.push(tr);
    }
    Ok(out)
}

/// Returns the T x H hidden outputs. Any divergence from the dense
/// reference (exact in full precision, relative tolerance in half) is
/// reported with its (step, gate, row).
pub fn functional_shadow(
    program: &StepProgram,
    weights: &LstmWeights,
    inputs: &Matrix,
    init: &LstmState,
    policy: &NumericPolicy,
) -> Result<Matrix> {
    check_inputs(program, inputs)?;
    let reference = reference_trace(&program.spec, weights, inputs, init, policy)?;
    functional_shadow_against(program, weights, inputs, init, policy, &reference)
}

fn check_inputs(program: &StepProgram, inputs: &Matrix) -> Result<()> {
    let spec = &program.spec;
    if inputs.rows != spec.seq_len || inputs.cols != spec.input_dim {
        return Err(SharpError::Dimension {
            what: "input matrix",
            expected: spec.seq_len * spec.input_dim,
            got: inputs.rows * inputs.cols,
        });
    }
    Ok(())
}

/// [`functional_shadow`] with a precomputed [`reference_trace`], for
/// checking many programs of one model.
pub fn functional_shadow_against(
    program: &StepProgram,
    weights: &LstmWeights,
    inputs: &Matrix,
    init: &LstmState,
    policy: &NumericPolicy,
    reference: &[StepTrace],
) -> Result<Matrix> {
    let spec = &program.spec;
    weights.validate(spec)?;
    program.validate()?;
    check_inputs(program, inputs)?;
    let (h, steps) = (spec.hidden_dim, spec.seq_len);
    if reference.len() != steps {
        return Err(SharpError::Dimension {
            what: "reference steps",
            expected: steps,
            got: reference.len(),
        });
    }
    let layouts = Layouts::build(program, weights)?;
    let mut data: Vec<StepData> = (0..steps).map(|_| StepData::new(h)).collect();

    for p in &program.phases {
        let t = p.step;
        match p.kind {
            PhaseKind::MvmDispatch => {
                let h_prev = if t == 0 {
                    init.h.clone()
                } else {
                    data[t - 1].h.clone()
                };
                let operand = p.operand.expect("mvm operand");
                if operand != Operand::Input {
                    if let Some(r) = h_prev.iter().position(|v| v.is_nan()) {
                        return Err(SharpError::Program(format!(
                            "{} reads h[{r}] before it is produced",
                            p.label()
                        )));
                    }
                }
                let x_t = inputs.row(t);
                let vector: Vec<f64> = match operand {
                    Operand::Fused => x_t.iter().chain(&h_prev).copied().collect(),
                    Operand::Input => x_t.to_vec(),
                    Operand::Hidden => h_prev,
                };
                let plan_id = p.plan.expect("mvm plan");
                let plan = program.plans.get(plan_id).expect("plan present");
                let blk = &plan.blocks[p.block];
                let layout = layouts.get(plan_id, p.gates[0]);
                let mut acc = vec![policy.zero(); blk.rows_covered];
                execute_block(plan, layout, p.block, &vector, policy, &mut acc);
                let sd = &mut data[t];
                for (local, partial) in acc.into_iter().enumerate() {
                    let row = blk.row_start + local;
                    if plan_id == PlanId::Gate {
                        sd.pre[p.gates[0].index()][row] = Some(partial);
                        continue;
                    }
                    let (r, g) = (row / 4, row % 4);
                    match operand {
                        Operand::Input => sd.buffered[row] = Some(partial),
                        Operand::Hidden => {
                            let mut sum = sd.buffered[row].take().ok_or_else(|| {
                                SharpError::Program(format!(
                                    "{} finds no buffered input for row {row}",
                                    p.label()
                                ))
                            })?;
                            policy.merge(&mut sum, &partial);
                            sd.pre[g][r] = Some(sum);
                        }
                        Operand::Fused => sd.pre[g][r] = Some(partial),
                    }
                }
            }
            PhaseKind::Activation => {
                for &gate in &p.gates {
                    let g = gate.index();
                    for r in p.rows.start..p.rows.end() {
                        let mut z = data[t].pre[g][r].take().ok_or_else(|| {
                            SharpError::Program(format!(
                                "{} activates row {r} before its MVM",
                                p.label()
                            ))
                        })?;
                        policy.add_value(&mut z, weights.b[g][r]);
                        let zv = z.value();
                        check(
                            policy,
                            t,
                            gate.name(),
                            r,
                            zv,
                            reference[t].preactivations[g][r],
                        )?;
                        let a = activate(gate, zv, policy);
                        check(policy, t, gate.name(), r, a, reference[t].activations[g][r])?;
                        data[t].act[g][r] = a;
                    }
                }
            }
            PhaseKind::CellUpdate => {
                for r in p.rows.start..p.rows.end() {
                    let c_prev = if t == 0 { init.c[r] } else { data[t - 1].c[r] };
                    let a = &data[t].act;
                    let (c, hv) =
                        cell_update_element(policy, a[0][r], a[1][r], a[2][r], a[3][r], c_prev);
                    check(policy, t, "c", r, c, reference[t].state.c[r])?;
                    check(policy, t, "h", r, hv, reference[t].state.h[r])?;
                    data[t].c[r] = c;
                    data[t].h[r] = hv;
                }
            }
        }
    }

    let mut out = Matrix::zeros(steps, h);
    for (t, sd) in data.iter().enumerate() {
        out.data[t * h..(t + 1) * h].copy_from_slice(&sd.h);
    }
    Ok(out)
}
