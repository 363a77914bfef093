use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::{LstmConfig, ScalerParams, WindowedDataset};
use crate::error::{Error, Result};
use crate::rng::{self, streams};

const GATE_NAMES: [&str; 4] = ["i", "f", "g", "o"];

/// Trainable tensors. Gate blocks are concatenated column-wise in the order
/// input (i), forget (f), candidate (g), output (o), so `w_input` is
/// `n_features x 4·units` and `w_recurrent` is `units x 4·units`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub w_input: Array2<f64>,
    pub w_recurrent: Array2<f64>,
    pub bias: Array1<f64>,
    pub w_out: Array1<f64>,
    /// Length-1 array so every tensor can be visited uniformly.
    pub b_out: Array1<f64>,
}

impl LstmParams {
    pub fn zeros(n_features: usize, units: usize) -> Self {
        Self {
            w_input: Array2::zeros((n_features, 4 * units)),
            w_recurrent: Array2::zeros((units, 4 * units)),
            bias: Array1::zeros(4 * units),
            w_out: Array1::zeros(units),
            b_out: Array1::zeros(1),
        }
    }

    /// Uniform(-1/√units, 1/√units) weights, zero biases except the forget
    /// gate, which starts at 1 so early gradients flow through the cell.
    pub fn init(n_features: usize, units: usize, seed: u64) -> Self {
        let mut rng = rng::stream(seed, streams::WEIGHT_INIT);
        let k = 1.0 / (units as f64).sqrt();
        let mut p = Self::zeros(n_features, units);
        p.w_input.mapv_inplace(|_| rng.gen_range(-k..k));
        p.w_recurrent.mapv_inplace(|_| rng.gen_range(-k..k));
        p.w_out.mapv_inplace(|_| rng.gen_range(-k..k));
        p.bias.slice_mut(ndarray::s![units..2 * units]).fill(1.0);
        p
    }

    pub fn units(&self) -> usize {
        self.w_recurrent.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.w_input.nrows()
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.n_features(), self.units())
    }

    pub fn num_parameters(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.w_input.dim() == other.w_input.dim()
            && self.w_recurrent.dim() == other.w_recurrent.dim()
            && self.bias.len() == other.bias.len()
            && self.w_out.len() == other.w_out.len()
            && self.b_out.len() == other.b_out.len()
    }

    pub(crate) fn slices(&self) -> [&[f64]; 5] {
        [
            self.w_input.as_slice().expect("standard layout"),
            self.w_recurrent.as_slice().expect("standard layout"),
            self.bias.as_slice().expect("standard layout"),
            self.w_out.as_slice().expect("standard layout"),
            self.b_out.as_slice().expect("standard layout"),
        ]
    }

    pub(crate) fn slices_mut(&mut self) -> [&mut [f64]; 5] {
        [
            self.w_input.as_slice_mut().expect("standard layout"),
            self.w_recurrent.as_slice_mut().expect("standard layout"),
            self.bias.as_slice_mut().expect("standard layout"),
            self.w_out.as_slice_mut().expect("standard layout"),
            self.b_out.as_slice_mut().expect("standard layout"),
        ]
    }

    /// Human-readable name of flat element `index` of tensor `tensor`, e.g. `U_f[3,7]`.
    pub(crate) fn element_name(&self, tensor: usize, index: usize) -> String {
        let units = self.units();
        let width = 4 * units;
        match tensor {
            0 | 1 => {
                let (row, col) = (index / width, index % width);
                let prefix = if tensor == 0 { "W" } else { "U" };
                format!("{prefix}_{}[{row},{}]", GATE_NAMES[col / units], col % units)
            }
            2 => format!("b_{}[{}]", GATE_NAMES[index / units], index % units),
            3 => format!("W_out[{index}]"),
            _ => "b_out".to_string(),
        }
    }

    /// Name of the first non-finite element, if any.
    pub fn first_non_finite(&self) -> Option<String> {
        self.slices().iter().enumerate().find_map(|(t, s)| {
            s.iter().position(|v| !v.is_finite()).map(|i| self.element_name(t, i))
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmModel {
    pub config: LstmConfig,
    pub scaler: ScalerParams,
    pub params: LstmParams,
}

impl LstmModel {
    /// Fresh model with weights drawn from `config.seed`.
    pub fn new(config: LstmConfig, scaler: ScalerParams) -> Result<Self> {
        config.validate()?;
        let params = LstmParams::init(config.n_features, config.units, config.seed);
        Ok(Self { config, scaler, params })
    }

    pub fn check_shapes(&self) -> Result<()> {
        let expected = LstmParams::zeros(self.config.n_features, self.config.units);
        if !self.params.same_shape(&expected) {
            return Err(Error::Shape(format!(
                "parameters do not match {} features x {} units",
                self.config.n_features, self.config.units
            )));
        }
        Ok(())
    }
}

/// A batch laid out time-major: `steps[t]` is the `batch x n_features`
/// matrix of inputs at position `t` of every window.
#[derive(Debug, Clone)]
pub struct Batch {
    pub steps: Vec<Array2<f64>>,
    pub targets: Array1<f64>,
}

impl Batch {
    pub fn from_dataset(data: &WindowedDataset, indices: &[usize]) -> Self {
        let features = data.features();
        let n_features = features.ncols();
        let steps = (0..data.lookback())
            .map(|t| {
                let mut x = Array2::zeros((indices.len(), n_features));
                for (mut row, &i) in x.rows_mut().into_iter().zip(indices) {
                    row.assign(&features.row(i + t));
                }
                x
            })
            .collect();
        let targets = indices.iter().map(|&i| data.targets()[i]).collect();
        Self { steps, targets }
    }

    /// Builds a batch from individual `lookback x n_features` windows.
    pub fn from_windows(windows: &[ArrayView2<'_, f64>], targets: &[f64]) -> Result<Self> {
        let first = windows.first().ok_or_else(|| Error::Empty("batch has no windows".into()))?;
        if windows.len() != targets.len() {
            return Err(Error::Shape(format!("{} windows but {} targets", windows.len(), targets.len())));
        }
        let (lookback, n_features) = first.dim();
        if windows.iter().any(|w| w.dim() != (lookback, n_features)) {
            return Err(Error::Shape("windows in a batch must share one shape".into()));
        }
        let steps = (0..lookback)
            .map(|t| {
                let mut x = Array2::zeros((windows.len(), n_features));
                for (mut row, w) in x.rows_mut().into_iter().zip(windows) {
                    row.assign(&w.row(t));
                }
                x
            })
            .collect();
        Ok(Self {
            steps,
            targets: Array1::from(targets.to_vec()),
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Activations kept from the forward pass for backpropagation.
struct StepCache {
    /// Post-activation gates `[i | f | g | o]`, `batch x 4·units`.
    gates: Array2<f64>,
    c: Array2<f64>,
    tanh_c: Array2<f64>,
    h: Array2<f64>,
}

fn check_batch(params: &LstmParams, batch: &Batch) -> Result<()> {
    if batch.is_empty() || batch.steps.is_empty() {
        return Err(Error::Empty("batch must contain at least one window of length >= 1".into()));
    }
    for x in &batch.steps {
        if x.dim() != (batch.len(), params.n_features()) {
            return Err(Error::Shape(format!(
                "step input is {:?}, expected ({}, {})",
                x.dim(),
                batch.len(),
                params.n_features()
            )));
        }
    }
    Ok(())
}

/// Runs the recurrence from a zero state and returns the final hidden state.
fn run_forward(params: &LstmParams, steps: &[Array2<f64>], mut cache: Option<&mut Vec<StepCache>>) -> Array2<f64> {
    let batch = steps[0].nrows();
    let units = params.units();
    let width = 4 * units;
    let mut h = Array2::<f64>::zeros((batch, units));
    let mut c = Array2::<f64>::zeros((batch, units));
    let bias = params.bias.as_slice().expect("standard layout");

    for x in steps {
        let mut z = Array2::<f64>::zeros((batch, width));
        general_mat_mul(1.0, x, &params.w_input, 0.0, &mut z);
        general_mat_mul(1.0, &h, &params.w_recurrent, 1.0, &mut z);

        let mut c_next = Array2::<f64>::zeros((batch, units));
        let mut tanh_c = Array2::<f64>::zeros((batch, units));
        let mut h_next = Array2::<f64>::zeros((batch, units));
        {
            let zs = z.as_slice_mut().expect("standard layout");
            let cs = c.as_slice().expect("standard layout");
            let cn = c_next.as_slice_mut().expect("standard layout");
            let tc = tanh_c.as_slice_mut().expect("standard layout");
            let hn = h_next.as_slice_mut().expect("standard layout");
            for b in 0..batch {
                let zr = &mut zs[b * width..(b + 1) * width];
                for j in 0..units {
                    let i = sigmoid(zr[j] + bias[j]);
                    let f = sigmoid(zr[units + j] + bias[units + j]);
                    let g = (zr[2 * units + j] + bias[2 * units + j]).tanh();
                    let o = sigmoid(zr[3 * units + j] + bias[3 * units + j]);
                    zr[j] = i;
                    zr[units + j] = f;
                    zr[2 * units + j] = g;
                    zr[3 * units + j] = o;
                    let k = b * units + j;
                    let cv = f * cs[k] + i * g;
                    let t = cv.tanh();
                    cn[k] = cv;
                    tc[k] = t;
                    hn[k] = o * t;
                }
            }
        }
        c = c_next;
        h = h_next;
        if let Some(cache) = cache.as_deref_mut() {
            cache.push(StepCache {
                gates: z,
                c: c.clone(),
                tanh_c,
                h: h.clone(),
            });
        }
    }
    h
}

fn readout(params: &LstmParams, h: &Array2<f64>) -> Array1<f64> {
    h.dot(&params.w_out) + params.b_out[0]
}

/// Scaled predictions for every window of `batch`.
pub fn forward_batch(params: &LstmParams, batch: &Batch) -> Result<Array1<f64>> {
    check_batch(params, batch)?;
    let h = run_forward(params, &batch.steps, None);
    Ok(readout(params, &h))
}

/// Scaled one-step prediction for a single `lookback x n_features` window.
pub fn forward(model: &LstmModel, window: ArrayView2<'_, f64>) -> Result<f64> {
    let expected = (model.config.lookback, model.config.n_features);
    if window.dim() != expected {
        return Err(Error::Shape(format!("window is {:?}, expected {:?}", window.dim(), expected)));
    }
    let batch = Batch::from_windows(&[window], &[0.0])?;
    Ok(forward_batch(&model.params, &batch)?[0])
}

pub fn mae_loss(predictions: &Array1<f64>, targets: &Array1<f64>) -> f64 {
    (predictions - targets).mapv(f64::abs).mean().unwrap_or(0.0)
}

/// Mean absolute error of `batch` and its exact gradient by backpropagation
/// through time. The subgradient of |r| at r = 0 is taken as 0.
pub fn gradients(params: &LstmParams, batch: &Batch) -> Result<(f64, LstmParams)> {
    check_batch(params, batch)?;
    let n = batch.len();
    let units = params.units();
    let width = 4 * units;

    let mut cache = Vec::with_capacity(batch.steps.len());
    let h_last = run_forward(params, &batch.steps, Some(&mut cache));
    let pred = readout(params, &h_last);
    let loss = mae_loss(&pred, &batch.targets);

    let inv_n = 1.0 / n as f64;
    let d_pred: Array1<f64> = pred
        .iter()
        .zip(batch.targets.iter())
        .map(|(p, y)| match p.partial_cmp(y) {
            Some(std::cmp::Ordering::Greater) => inv_n,
            Some(std::cmp::Ordering::Less) => -inv_n,
            _ => 0.0,
        })
        .collect();

    let mut grads = params.zeros_like();
    grads.w_out = h_last.t().dot(&d_pred);
    grads.b_out[0] = d_pred.sum();

    // dh[b, j] = d_pred[b] * w_out[j]
    let mut dh = Array2::from_shape_fn((n, units), |(b, j)| d_pred[b] * params.w_out[j]);
    let mut dc = Array2::<f64>::zeros((n, units));
    let mut dz = Array2::<f64>::zeros((n, width));
    let zero_state = Array2::<f64>::zeros((n, units));

    for t in (0..batch.steps.len()).rev() {
        let step = &cache[t];
        let c_prev = if t > 0 { &cache[t - 1].c } else { &zero_state };
        {
            let gs = step.gates.as_slice().expect("standard layout");
            let tcs = step.tanh_c.as_slice().expect("standard layout");
            let cps = c_prev.as_slice().expect("standard layout");
            let dhs = dh.as_slice().expect("standard layout");
            let dcs = dc.as_slice_mut().expect("standard layout");
            let dzs = dz.as_slice_mut().expect("standard layout");
            for b in 0..n {
                let g_row = &gs[b * width..(b + 1) * width];
                let dz_row = &mut dzs[b * width..(b + 1) * width];
                for j in 0..units {
                    let k = b * units + j;
                    let (i, f, g, o) = (g_row[j], g_row[units + j], g_row[2 * units + j], g_row[3 * units + j]);
                    let tc = tcs[k];
                    let dh_k = dhs[k];
                    let dc_total = dcs[k] + dh_k * o * (1.0 - tc * tc);
                    dz_row[j] = dc_total * g * i * (1.0 - i);
                    dz_row[units + j] = dc_total * cps[k] * f * (1.0 - f);
                    dz_row[2 * units + j] = dc_total * i * (1.0 - g * g);
                    dz_row[3 * units + j] = dh_k * tc * o * (1.0 - o);
                    dcs[k] = dc_total * f;
                }
            }
        }
        general_mat_mul(1.0, &batch.steps[t].t(), &dz, 1.0, &mut grads.w_input);
        if t > 0 {
            general_mat_mul(1.0, &cache[t - 1].h.t(), &dz, 1.0, &mut grads.w_recurrent);
        }
        grads.bias += &dz.sum_axis(Axis(0));
        general_mat_mul(1.0, &dz, &params.w_recurrent.t(), 0.0, &mut dh);
    }

    if let Some(name) = grads.first_non_finite() {
        return Err(Error::NonFiniteParameter(format!("gradient of {name}")));
    }
    Ok((loss, grads))
}
