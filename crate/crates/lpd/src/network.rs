//! Forward and reverse passes of the unrolled network.

use listrecon::{EventList, Grid, Image2D, Projector, SparseRow};

use crate::config::Mode;
use crate::error::{Error, Result};
use crate::layers::{
    batchnorm, batchnorm_backward, conv, conv_backward, linear, linear_backward, prelu,
    prelu_backward, NormRecord, Shape,
};
use crate::params::{NetworkParams, SetOffsets};

/// The projector restricted to one event list and scaled by a constant, with
/// the event rows computed once and kept.
#[derive(Debug, Clone, PartialEq)]
pub struct NetOperator {
    grid: Grid,
    /// Rows with the event multiplier and the scale folded in.
    rows: Vec<SparseRow>,
    scale: f64,
}

impl NetOperator {
    /// Scaled so that back projecting a vector of ones averages one over the FOV.
    pub fn new(projector: &Projector, events: &EventList) -> Result<Self> {
        if events.is_empty() {
            return Err(listrecon::Error::EmptyData("no events".into()).into());
        }
        let mut rows = events
            .iter()
            .map(|ev| {
                let mut row = projector.compute_row(ev)?;
                row.weights.iter_mut().for_each(|w| *w *= ev.multiplier);
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()?;
        let grid = projector.grid();
        let mut bp = vec![0.0; grid.len()];
        rows.iter().for_each(|row| row.scatter_add(1.0, &mut bp));
        let (sum, count) = bp
            .iter()
            .zip(grid.fov_mask())
            .filter(|(_, m)| *m)
            .fold((0.0, 0usize), |(s, c), (v, _)| (s + v, c + 1));
        if !(sum > 0.0) {
            return Err(
                listrecon::Error::EmptyData("events do not intersect the FOV".into()).into(),
            );
        }
        let scale = count as f64 / sum;
        rows.iter_mut()
            .for_each(|row| row.weights.iter_mut().for_each(|w| *w *= scale));
        Ok(Self { grid, rows, scale })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn n_events(&self) -> usize {
        self.rows.len()
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn forward(&self, img: &[f64]) -> Result<Vec<f64>> {
        check_len("image", img, self.grid.len())?;
        Ok(self.rows.iter().map(|row| row.dot(img)).collect())
    }

    pub fn back(&self, values: &[f64]) -> Result<Vec<f64>> {
        check_len("event values", values, self.rows.len())?;
        let mut out = vec![0.0; self.grid.len()];
        for (row, &v) in self.rows.iter().zip(values) {
            row.scatter_add(v, &mut out);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct DualRecord {
    x: Vec<f64>,
    z1: Vec<f64>,
    a1: Vec<f64>,
    z2: Vec<f64>,
    a2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
struct ConvRecord {
    input: Vec<f64>,
    norm: Option<NormRecord>,
    /// Input to the PReLU.
    pre_activation: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
struct PhaseRecord {
    dual: DualRecord,
    convs: Vec<ConvRecord>,
}

/// Activations retained for the reverse pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    phases: Vec<PhaseRecord>,
}

impl Trace {
    /// Which PReLU inputs were nonpositive, in a fixed order. Finite
    /// differences are only meaningful while this pattern stays constant.
    pub fn activation_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for ph in &self.phases {
            out.extend(ph.dual.z1.iter().chain(&ph.dual.z2).map(|&v| v <= 0.0));
            for c in &ph.convs {
                out.extend(c.pre_activation.iter().map(|&v| v <= 0.0));
            }
        }
        out
    }

    /// Running-statistics offsets and the normalization record of every batchnorm layer.
    fn batch_statistics<'t>(
        &'t self,
        params: &'t NetworkParams,
    ) -> impl Iterator<Item = (usize, usize, &'t NormRecord)> + 't {
        let config = params.config();
        self.phases.iter().enumerate().flat_map(move |(k, ph)| {
            let set = params.layout().set(config.set_of(k));
            ph.convs.iter().zip(&set.convs).filter_map(|(rec, offs)| {
                let norm = offs.norm.as_ref()?;
                Some((norm.running_mean, norm.running_var, rec.norm.as_ref()?))
            })
        })
    }
}

/// Network output, per-phase images and the optional trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub output: Image2D,
    pub phase_outputs: Vec<Image2D>,
    pub trace: Option<Trace>,
}

fn check_len(what: &str, v: &[f64], n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::Dimension(format!(
            "{what} has length {}, expected {n}",
            v.len()
        )));
    }
    Ok(())
}

fn dual_forward(
    params: &NetworkParams,
    set: &SetOffsets,
    h: &[f64],
    af: &[f64],
    g: &[f64],
) -> (Vec<f64>, DualRecord) {
    let n = h.len();
    let v = &params.values;
    let x: Vec<f64> = (0..n).flat_map(|t| [af[t], g[t], h[t]]).collect();
    let [l1, l2, l3] = &set.dual.layers;
    let z1 = linear(
        &x,
        n,
        &v[l1.weight..l1.weight + l1.n_out * l1.n_in],
        &v[l1.bias..l1.bias + l1.n_out],
    );
    let a1 = prelu(&z1, v[set.dual.slopes[0]]);
    let z2 = linear(
        &a1,
        n,
        &v[l2.weight..l2.weight + l2.n_out * l2.n_in],
        &v[l2.bias..l2.bias + l2.n_out],
    );
    let a2 = prelu(&z2, v[set.dual.slopes[1]]);
    let out = linear(
        &a2,
        n,
        &v[l3.weight..l3.weight + l3.n_out * l3.n_in],
        &v[l3.bias..l3.bias + l3.n_out],
    );
    (out, DualRecord { x, z1, a1, z2, a2 })
}

/// Per-event MLP on `(Af, g, h)`, returning the new `h`.
pub fn dual_module_forward(
    params: &NetworkParams,
    phase: usize,
    h: &[f64],
    af: &[f64],
    g: &[f64],
) -> Result<Vec<f64>> {
    check_phase(params, phase)?;
    let n = h.len();
    check_len("Af", af, n)?;
    check_len("g", g, n)?;
    let set = params.layout().set(params.config().set_of(phase));
    Ok(dual_forward(params, set, h, af, g).0)
}

fn primal_forward(
    params: &NetworkParams,
    set: &SetOffsets,
    f: &[f64],
    bp: &[f64],
    shape: Shape,
    mode: Mode,
) -> (Vec<f64>, Vec<ConvRecord>) {
    let n = shape.len();
    let v = &params.values;
    let mut x: Vec<f64> = f.iter().chain(bp).copied().collect();
    let mut records = Vec::with_capacity(set.convs.len());
    for layer in &set.convs {
        let w = &v[layer.weight..layer.weight + layer.c_out * layer.c_in * 9];
        let b = &v[layer.bias..layer.bias + layer.c_out];
        let z = conv(&x, layer.c_in, shape, w, b);
        let input = std::mem::take(&mut x);
        match &layer.norm {
            Some(norm) => {
                let running = match mode {
                    Mode::Train => None,
                    Mode::Eval => Some((
                        &params.running_stats[norm.running_mean..norm.running_mean + layer.c_out],
                        &params.running_stats[norm.running_var..norm.running_var + layer.c_out],
                    )),
                };
                let rec = batchnorm(&z, n, running);
                let mut y = rec.xhat.clone();
                for c in 0..layer.c_out {
                    let (gamma, beta) = (v[norm.scale + c], v[norm.shift + c]);
                    y[c * n..(c + 1) * n]
                        .iter_mut()
                        .for_each(|t| *t = gamma * *t + beta);
                }
                x = prelu(&y, v[norm.slope]);
                records.push(ConvRecord {
                    input,
                    norm: Some(rec),
                    pre_activation: y,
                });
            }
            None => {
                x = z;
                records.push(ConvRecord {
                    input,
                    norm: None,
                    pre_activation: Vec::new(),
                });
            }
        }
    }
    (x, records)
}

/// Image-domain CNN on the stacked `(f, Aᵀh)` channels, returning the new `f`.
pub fn primal_module_forward(
    params: &NetworkParams,
    phase: usize,
    f: &Image2D,
    bp: &Image2D,
    mode: Mode,
) -> Result<Image2D> {
    check_phase(params, phase)?;
    if !f.same_shape(bp) {
        return Err(Error::Dimension(format!(
            "f is {}x{} but the back projection is {}x{}",
            f.width(),
            f.height(),
            bp.width(),
            bp.height()
        )));
    }
    let set = params.layout().set(params.config().set_of(phase));
    let shape = Shape {
        width: f.width(),
        height: f.height(),
    };
    let (out, _) = primal_forward(params, set, f.values(), bp.values(), shape, mode);
    Ok(Image2D::from_values(f.grid(), out)?)
}

fn check_phase(params: &NetworkParams, phase: usize) -> Result<()> {
    if phase >= params.config().n_phases {
        return Err(Error::Dimension(format!(
            "phase {phase} of {}",
            params.config().n_phases
        )));
    }
    Ok(())
}

/// Runs all phases from `f₀ = 0`, `h₀ = 0`; `record` keeps the activations
/// needed by [`lmpd_backward`].
pub fn lmpd_forward(
    params: &NetworkParams,
    op: &NetOperator,
    mode: Mode,
    record: bool,
) -> Result<Forward> {
    let grid = op.grid();
    let shape = Shape {
        width: grid.width,
        height: grid.height,
    };
    let n = op.n_events();
    let g = vec![1.0; n];
    let mut f = vec![0.0; grid.len()];
    let mut h = vec![0.0; n];
    let mut phase_outputs = Vec::with_capacity(params.config().n_phases);
    let mut phases = Vec::new();
    for k in 0..params.config().n_phases {
        let set = params.layout().set(params.config().set_of(k));
        let af = op.forward(&f)?;
        let (h_next, dual) = dual_forward(params, set, &h, &af, &g);
        let bp = op.back(&h_next)?;
        let (f_next, convs) = primal_forward(params, set, &f, &bp, shape, mode);
        h = h_next;
        f = f_next;
        phase_outputs.push(Image2D::from_values(grid, f.clone())?);
        if record {
            phases.push(PhaseRecord { dual, convs });
        }
    }
    Ok(Forward {
        output: Image2D::from_values(grid, f)?,
        phase_outputs,
        trace: record.then_some(Trace { phases }),
    })
}

fn dual_backward(
    params: &NetworkParams,
    set: &SetOffsets,
    rec: &DualRecord,
    dh: &[f64],
    grad: &mut [f64],
) -> Vec<f64> {
    let n = dh.len();
    let v = &params.values;
    let [l1, l2, l3] = &set.dual.layers;
    let mut dw3 = vec![0.0; l3.n_out * l3.n_in];
    let mut db3 = vec![0.0; l3.n_out];
    let mut dz2 = linear_backward(
        &rec.a2,
        n,
        &v[l3.weight..l3.weight + dw3.len()],
        dh,
        &mut dw3,
        &mut db3,
    );
    accumulate(grad, l3.weight, &dw3);
    accumulate(grad, l3.bias, &db3);
    grad[set.dual.slopes[1]] += prelu_backward(&rec.z2, v[set.dual.slopes[1]], &mut dz2);
    let mut dw2 = vec![0.0; l2.n_out * l2.n_in];
    let mut db2 = vec![0.0; l2.n_out];
    let mut dz1 = linear_backward(
        &rec.a1,
        n,
        &v[l2.weight..l2.weight + dw2.len()],
        &dz2,
        &mut dw2,
        &mut db2,
    );
    accumulate(grad, l2.weight, &dw2);
    accumulate(grad, l2.bias, &db2);
    grad[set.dual.slopes[0]] += prelu_backward(&rec.z1, v[set.dual.slopes[0]], &mut dz1);
    let mut dw1 = vec![0.0; l1.n_out * l1.n_in];
    let mut db1 = vec![0.0; l1.n_out];
    let dx = linear_backward(
        &rec.x,
        n,
        &v[l1.weight..l1.weight + dw1.len()],
        &dz1,
        &mut dw1,
        &mut db1,
    );
    accumulate(grad, l1.weight, &dw1);
    accumulate(grad, l1.bias, &db1);
    dx
}

fn accumulate(grad: &mut [f64], offset: usize, values: &[f64]) {
    for (g, v) in grad[offset..offset + values.len()].iter_mut().zip(values) {
        *g += v;
    }
}

fn primal_backward(
    params: &NetworkParams,
    set: &SetOffsets,
    records: &[ConvRecord],
    shape: Shape,
    dout: Vec<f64>,
    grad: &mut [f64],
) -> Vec<f64> {
    let n = shape.len();
    let v = &params.values;
    let mut d = dout;
    for (layer, rec) in set.convs.iter().zip(records).rev() {
        let dz = match (&layer.norm, &rec.norm) {
            (Some(norm), Some(nrec)) => {
                grad[norm.slope] += prelu_backward(&rec.pre_activation, v[norm.slope], &mut d);
                let mut dxhat = d;
                for c in 0..layer.c_out {
                    let gamma = v[norm.scale + c];
                    let range = c * n..(c + 1) * n;
                    let dy = &mut dxhat[range.clone()];
                    grad[norm.shift + c] += dy.iter().sum::<f64>();
                    grad[norm.scale + c] += dy
                        .iter()
                        .zip(&nrec.xhat[range])
                        .map(|(a, b)| a * b)
                        .sum::<f64>();
                    dy.iter_mut().for_each(|t| *t *= gamma);
                }
                batchnorm_backward(nrec, n, &dxhat)
            }
            _ => d,
        };
        let wlen = layer.c_out * layer.c_in * 9;
        let mut dw = vec![0.0; wlen];
        let mut db = vec![0.0; layer.c_out];
        d = conv_backward(
            &rec.input,
            layer.c_in,
            shape,
            &v[layer.weight..layer.weight + wlen],
            &dz,
            &mut dw,
            &mut db,
        );
        accumulate(grad, layer.weight, &dw);
        accumulate(grad, layer.bias, &db);
    }
    d
}

/// Gradient of a loss with respect to every parameter, given the loss
/// gradient `dloss` with respect to the network output.
pub fn lmpd_backward(
    params: &NetworkParams,
    op: &NetOperator,
    fwd: &Forward,
    dloss: &Image2D,
) -> Result<Vec<f64>> {
    let trace = fwd
        .trace
        .as_ref()
        .ok_or_else(|| Error::State("forward pass was run without recording".into()))?;
    let config = params.config();
    if trace.phases.len() != config.n_phases {
        return Err(Error::State(format!(
            "trace has {} phases, network {}",
            trace.phases.len(),
            config.n_phases
        )));
    }
    if !dloss.same_shape(&fwd.output) {
        return Err(Error::Dimension(
            "loss gradient does not match the output image".into(),
        ));
    }
    let grid = op.grid();
    let n_pix = grid.len();
    let shape = Shape {
        width: grid.width,
        height: grid.height,
    };
    let mut grad = vec![0.0; params.layout().n_values()];
    let mut df = dloss.values().to_vec();
    let mut dh = vec![0.0; op.n_events()];
    for k in (0..config.n_phases).rev() {
        let set = params.layout().set(config.set_of(k));
        let rec = &trace.phases[k];
        let dinput = primal_backward(params, set, &rec.convs, shape, df, &mut grad);
        let (df_prev, dbp) = dinput.split_at(n_pix);
        let from_bp = op.forward(dbp)?;
        dh.iter_mut().zip(&from_bp).for_each(|(a, b)| *a += b);
        let dx = dual_backward(params, set, &rec.dual, &dh, &mut grad);
        let daf: Vec<f64> = dx.chunks_exact(3).map(|c| c[0]).collect();
        dh = dx.chunks_exact(3).map(|c| c[2]).collect();
        let from_af = op.back(&daf)?;
        df = df_prev.iter().zip(&from_af).map(|(a, b)| a + b).collect();
    }
    Ok(grad)
}

/// Blends the batch statistics of a training pass into the running ones.
pub fn update_running_stats(params: &mut NetworkParams, trace: &Trace, momentum: f64) {
    let updates: Vec<(usize, usize, Vec<f64>, Vec<f64>)> = trace
        .batch_statistics(params)
        .filter(|(_, _, rec)| rec.batch_stats)
        .map(|(m, v, rec)| (m, v, rec.batch_mean.clone(), rec.batch_var.clone()))
        .collect();
    for (m_off, v_off, mean, var) in updates {
        for (c, (bm, bv)) in mean.iter().zip(&var).enumerate() {
            let rm = &mut params.running_stats[m_off + c];
            *rm = (1.0 - momentum) * *rm + momentum * bm;
            let rv = &mut params.running_stats[v_off + c];
            *rv = (1.0 - momentum) * *rv + momentum * bv;
        }
    }
}

/// Mean squared error and its gradient with respect to `output`.
pub fn mse_loss(output: &Image2D, truth: &Image2D) -> Result<(f64, Image2D)> {
    if !output.same_shape(truth) {
        return Err(Error::Dimension("output and truth differ in shape".into()));
    }
    let n = output.values().len() as f64;
    let diff: Vec<f64> = output
        .values()
        .iter()
        .zip(truth.values())
        .map(|(a, b)| a - b)
        .collect();
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    let grad = Image2D::from_values(
        output.grid(),
        diff.into_iter().map(|d| 2.0 * d / n).collect(),
    )?;
    Ok((loss, grad))
}
