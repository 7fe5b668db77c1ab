//! Single-direction LSTM layer: forward pass with cached activations and
//! exact backpropagation through time.
//!
//! Gate rows are stacked in the order i, f, g, o: `w` is 4H×D, `u` is 4H×H,
//! `b` is 4H, all row-major. A direction only ever sees the first
//! `true_length` positions of a sequence; PAD positions are never visited.

/// Weights of one direction of one layer; also reused as its gradient
/// buffer, since the shapes are identical.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionParams {
    pub w: Vec<f64>,
    pub u: Vec<f64>,
    pub b: Vec<f64>,
    pub input_dim: usize,
    pub hidden: usize,
}

impl DirectionParams {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        DirectionParams {
            w: vec![0.0; 4 * hidden * input_dim],
            u: vec![0.0; 4 * hidden * hidden],
            b: vec![0.0; 4 * hidden],
            input_dim,
            hidden,
        }
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.u.len() + self.b.len()
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) struct StepCache {
    /// Sequence position this step consumed.
    pos: usize,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    tc: Vec<f64>,
    c_prev: Vec<f64>,
    h_prev: Vec<f64>,
}

pub(crate) struct DirectionCache {
    steps: Vec<StepCache>,
    /// Hidden state indexed by sequence position (not step order).
    pub h_by_pos: Vec<Vec<f64>>,
}

/// Run one direction over `inputs[0..len)`, reversed when `reverse` is set.
pub(crate) fn run_direction(
    params: &DirectionParams,
    inputs: &[Vec<f64>],
    reverse: bool,
) -> DirectionCache {
    let h_size = params.hidden;
    let len = inputs.len();
    let mut steps = Vec::with_capacity(len);
    let mut h_by_pos = vec![Vec::new(); len];
    let mut h = vec![0.0; h_size];
    let mut c = vec![0.0; h_size];
    for step in 0..len {
        let pos = if reverse { len - 1 - step } else { step };
        let x = &inputs[pos];
        let mut z = params.b.clone();
        for row in 0..4 * h_size {
            let mut acc = 0.0;
            let w_row = &params.w[row * params.input_dim..(row + 1) * params.input_dim];
            for (wv, xv) in w_row.iter().zip(x) {
                acc += wv * xv;
            }
            let u_row = &params.u[row * h_size..(row + 1) * h_size];
            for (uv, hv) in u_row.iter().zip(&h) {
                acc += uv * hv;
            }
            z[row] += acc;
        }
        let mut gi = vec![0.0; h_size];
        let mut gf = vec![0.0; h_size];
        let mut gg = vec![0.0; h_size];
        let mut go = vec![0.0; h_size];
        for j in 0..h_size {
            gi[j] = sigmoid(z[j]);
            gf[j] = sigmoid(z[h_size + j]);
            gg[j] = z[2 * h_size + j].tanh();
            go[j] = sigmoid(z[3 * h_size + j]);
        }
        let c_prev = c.clone();
        let h_prev = h.clone();
        let mut tc = vec![0.0; h_size];
        for j in 0..h_size {
            c[j] = gf[j] * c_prev[j] + gi[j] * gg[j];
            tc[j] = c[j].tanh();
            h[j] = go[j] * tc[j];
        }
        h_by_pos[pos] = h.clone();
        steps.push(StepCache {
            pos,
            i: gi,
            f: gf,
            g: gg,
            o: go,
            tc,
            c_prev,
            h_prev,
        });
    }
    DirectionCache { steps, h_by_pos }
}

/// Backpropagate one direction.
///
/// `dh_by_pos` is the gradient arriving at each position's hidden state from
/// above (pooling or the next layer); parameter gradients accumulate into
/// `grads` and input gradients into `dx` (shared by both directions).
pub(crate) fn backward_direction(
    params: &DirectionParams,
    cache: &DirectionCache,
    inputs: &[Vec<f64>],
    dh_by_pos: &[Vec<f64>],
    grads: &mut DirectionParams,
    dx: &mut [Vec<f64>],
) {
    let h_size = params.hidden;
    let mut dh_carry = vec![0.0; h_size];
    let mut dc_carry = vec![0.0; h_size];
    let mut dz = vec![0.0; 4 * h_size];
    for step in cache.steps.iter().rev() {
        let pos = step.pos;
        for j in 0..h_size {
            let dh = dh_by_pos[pos][j] + dh_carry[j];
            let d_o = dh * step.tc[j];
            let dc = dh * step.o[j] * (1.0 - step.tc[j] * step.tc[j]) + dc_carry[j];
            let di = dc * step.g[j];
            let df = dc * step.c_prev[j];
            let dg = dc * step.i[j];
            dz[j] = di * step.i[j] * (1.0 - step.i[j]);
            dz[h_size + j] = df * step.f[j] * (1.0 - step.f[j]);
            dz[2 * h_size + j] = dg * (1.0 - step.g[j] * step.g[j]);
            dz[3 * h_size + j] = d_o * step.o[j] * (1.0 - step.o[j]);
            dc_carry[j] = dc * step.f[j];
        }
        let x = &inputs[pos];
        for row in 0..4 * h_size {
            let dzr = dz[row];
            if dzr == 0.0 {
                continue;
            }
            let gw_row = &mut grads.w[row * params.input_dim..(row + 1) * params.input_dim];
            for (gw, xv) in gw_row.iter_mut().zip(x) {
                *gw += dzr * xv;
            }
            let gu_row = &mut grads.u[row * h_size..(row + 1) * h_size];
            for (gu, hv) in gu_row.iter_mut().zip(&step.h_prev) {
                *gu += dzr * hv;
            }
            grads.b[row] += dzr;
        }
        dh_carry.iter_mut().for_each(|v| *v = 0.0);
        for row in 0..4 * h_size {
            let dzr = dz[row];
            if dzr == 0.0 {
                continue;
            }
            let u_row = &params.u[row * h_size..(row + 1) * h_size];
            for (dh, uv) in dh_carry.iter_mut().zip(u_row) {
                *dh += dzr * uv;
            }
            let w_row = &params.w[row * params.input_dim..(row + 1) * params.input_dim];
            for (d, wv) in dx[pos].iter_mut().zip(w_row) {
                *d += dzr * wv;
            }
        }
    }
}
