//! Small differentiable function approximators over a flat parameter vector:
//! an affine map and a two-hidden-layer ReLU perceptron.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;

use crate::{Error, Result};

pub const HIDDEN: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Topology {
    Linear,
    Mlp2x128,
}

impl Topology {
    pub fn param_count(self, input_dim: usize, output_dim: usize) -> usize {
        match self {
            Topology::Linear => output_dim * (input_dim + 1),
            Topology::Mlp2x128 => {
                HIDDEN * (input_dim + 1) + HIDDEN * (HIDDEN + 1) + output_dim * (HIDDEN + 1)
            }
        }
    }

    fn tag(self) -> u8 {
        match self {
            Topology::Linear => 0,
            Topology::Mlp2x128 => 1,
        }
    }

    fn from_tag(t: u8) -> Result<Self> {
        match t {
            0 => Ok(Topology::Linear),
            1 => Ok(Topology::Mlp2x128),
            other => Err(Error::Parse(format!("unknown topology tag {other}"))),
        }
    }
}

/// A parametric map with explicit forward and parameter-gradient passes.
/// Parameters live in one flat vector so optimizers stay shape-agnostic.
#[derive(Clone, Debug)]
pub struct ParamFunction {
    pub topology: Topology,
    pub input_dim: usize,
    pub output_dim: usize,
    pub params: Vec<f64>,
}

impl ParamFunction {
    pub fn zeros(topology: Topology, input_dim: usize, output_dim: usize) -> Self {
        Self {
            topology,
            input_dim,
            output_dim,
            params: vec![0.0; topology.param_count(input_dim, output_dim)],
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng>(topology: Topology, input_dim: usize, output_dim: usize, rng: &mut R) -> Self {
        let mut f = Self::zeros(topology, input_dim, output_dim);
        match topology {
            Topology::Linear => {
                init_layer(&mut f.params, 0, input_dim, output_dim, rng);
            }
            Topology::Mlp2x128 => {
                let l1 = HIDDEN * (input_dim + 1);
                let l2 = HIDDEN * (HIDDEN + 1);
                init_layer(&mut f.params, 0, input_dim, HIDDEN, rng);
                init_layer(&mut f.params, l1, HIDDEN, HIDDEN, rng);
                init_layer(&mut f.params, l1 + l2, HIDDEN, output_dim, rng);
            }
        }
        f
    }

    /// Glorot hidden layers but a zeroed output layer, so the function is
    /// identically zero at the start. Used for the critic-like nets whose
    /// early outputs feed rewards: starting at zero avoids rewarding or
    /// penalising anything before training has seen data.
    pub fn init_zero_head<R: Rng>(
        topology: Topology,
        input_dim: usize,
        output_dim: usize,
        rng: &mut R,
    ) -> Self {
        let mut f = Self::init(topology, input_dim, output_dim, rng);
        let head = match topology {
            Topology::Linear => 0,
            Topology::Mlp2x128 => HIDDEN * (input_dim + 1) + HIDDEN * (HIDDEN + 1),
        };
        for p in &mut f.params[head..] {
            *p = 0.0;
        }
        f
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        match self.topology {
            Topology::Linear => Ok(affine(&self.params, 0, x, self.output_dim)),
            Topology::Mlp2x128 => {
                let (_, _, out) = self.mlp_forward(x);
                Ok(out)
            }
        }
    }

    /// Gradient of <upstream, forward(x)> with respect to the parameters,
    /// accumulated into `grad`. ReLU subgradient at 0 is 0.
    pub fn backward_acc(&self, x: &[f64], upstream: &[f64], grad: &mut [f64]) -> Result<()> {
        self.check_input(x)?;
        if upstream.len() != self.output_dim {
            return Err(Error::Contract(format!(
                "upstream length {} != output dim {}",
                upstream.len(),
                self.output_dim
            )));
        }
        if grad.len() != self.params.len() {
            return Err(Error::Contract("gradient buffer shape mismatch".into()));
        }
        match self.topology {
            Topology::Linear => {
                affine_backward(grad, 0, x, upstream, None);
            }
            Topology::Mlp2x128 => {
                let (h1, h2, _) = self.mlp_forward(x);
                let l1 = HIDDEN * (self.input_dim + 1);
                let l2 = HIDDEN * (HIDDEN + 1);
                let mut dh2 = vec![0.0; HIDDEN];
                affine_backward(grad, l1 + l2, &h2, upstream, Some((&self.params, &mut dh2)));
                for (d, &a) in dh2.iter_mut().zip(&h2) {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                }
                let mut dh1 = vec![0.0; HIDDEN];
                affine_backward(grad, l1, &h1, &dh2, Some((&self.params, &mut dh1)));
                for (d, &a) in dh1.iter_mut().zip(&h1) {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                }
                affine_backward(grad, 0, x, &dh1, None);
            }
        }
        Ok(())
    }

    pub fn backward(&self, x: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
        let mut grad = vec![0.0; self.params.len()];
        self.backward_acc(x, upstream, &mut grad)?;
        Ok(grad)
    }

    fn mlp_forward(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let l1 = HIDDEN * (self.input_dim + 1);
        let l2 = HIDDEN * (HIDDEN + 1);
        let mut h1 = affine(&self.params, 0, x, HIDDEN);
        relu(&mut h1);
        let mut h2 = affine(&self.params, l1, &h1, HIDDEN);
        relu(&mut h2);
        let out = affine(&self.params, l1 + l2, &h2, self.output_dim);
        (h1, h2, out)
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::Contract(format!(
                "input length {} != input dim {}",
                x.len(),
                self.input_dim
            )));
        }
        Ok(())
    }

    /// Writes the checkpoint format: magic, topology tag, dims, caller header
    /// words, then little-endian f64 parameters.
    pub fn save<W: Write>(&self, w: &mut W, header: &[u32]) -> Result<()> {
        w.write_all(b"PFN1")?;
        w.write_all(&[self.topology.tag()])?;
        w.write_all(&(self.input_dim as u32).to_le_bytes())?;
        w.write_all(&(self.output_dim as u32).to_le_bytes())?;
        w.write_all(&(header.len() as u32).to_le_bytes())?;
        for h in header {
            w.write_all(&h.to_le_bytes())?;
        }
        w.write_all(&(self.params.len() as u64).to_le_bytes())?;
        for p in &self.params {
            w.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn load<R: Read>(r: &mut R) -> Result<(Self, Vec<u32>)> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"PFN1" {
            return Err(Error::Parse("bad checkpoint magic".into()));
        }
        let mut b1 = [0u8; 1];
        r.read_exact(&mut b1)?;
        let topology = Topology::from_tag(b1[0])?;
        let input_dim = read_u32(r)? as usize;
        let output_dim = read_u32(r)? as usize;
        let header_len = read_u32(r)? as usize;
        let mut header = Vec::with_capacity(header_len);
        for _ in 0..header_len {
            header.push(read_u32(r)?);
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let count = u64::from_le_bytes(b8) as usize;
        if count != topology.param_count(input_dim, output_dim) {
            return Err(Error::Parse("parameter count does not match topology".into()));
        }
        let mut params = Vec::with_capacity(count);
        for _ in 0..count {
            r.read_exact(&mut b8)?;
            params.push(f64::from_le_bytes(b8));
        }
        Ok((
            Self {
                topology,
                input_dim,
                output_dim,
                params,
            },
            header,
        ))
    }

    pub fn save_file(&self, path: &Path, header: &[u32]) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.save(&mut f, header)
    }

    pub fn load_file(path: &Path) -> Result<(Self, Vec<u32>)> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::load(&mut f)
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn relu(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

// Layer storage: rows of `W` (one per output unit) followed by the bias
// vector, at `offset` in the flat parameter slice.
fn affine(params: &[f64], offset: usize, x: &[f64], out_dim: usize) -> Vec<f64> {
    let in_dim = x.len();
    let bias = offset + out_dim * in_dim;
    let mut out = Vec::with_capacity(out_dim);
    for o in 0..out_dim {
        let row = &params[offset + o * in_dim..offset + (o + 1) * in_dim];
        let mut acc = params[bias + o];
        for (w, xi) in row.iter().zip(x) {
            acc += w * xi;
        }
        out.push(acc);
    }
    out
}

// Accumulates d<upstream, Wx+b>/d(W,b) into `grad`; optionally also produces
// the input gradient W^T upstream using the same weights.
fn affine_backward(
    grad: &mut [f64],
    offset: usize,
    x: &[f64],
    upstream: &[f64],
    input_grad: Option<(&[f64], &mut [f64])>,
) {
    let in_dim = x.len();
    let out_dim = upstream.len();
    let bias = offset + out_dim * in_dim;
    for (o, &u) in upstream.iter().enumerate() {
        if u == 0.0 {
            continue;
        }
        let row = &mut grad[offset + o * in_dim..offset + (o + 1) * in_dim];
        for (g, xi) in row.iter_mut().zip(x) {
            *g += u * xi;
        }
        grad[bias + o] += u;
    }
    if let Some((params, dx)) = input_grad {
        for (o, &u) in upstream.iter().enumerate() {
            if u == 0.0 {
                continue;
            }
            let row = &params[offset + o * in_dim..offset + (o + 1) * in_dim];
            for (d, w) in dx.iter_mut().zip(row) {
                *d += u * w;
            }
        }
    }
}

fn init_layer<R: Rng>(params: &mut [f64], offset: usize, fan_in: usize, fan_out: usize, rng: &mut R) {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for i in 0..fan_out * fan_in {
        params[offset + i] = rng.gen_range(-a..a);
    }
    // biases stay zero
}
