//! Direct and transposed convolution layers with analytic forward and
//! backward passes, and generator/discriminator network assembly.
//!
//! Kernels are dense f64 and run on the CPU. Both 2D and 3D spatial
//! layouts are supported. With the default layer geometry (kernel 5,
//! stride 2, padding 2) a transposed layer maps a spatial extent `s` to
//! `2s - 1` and a direct layer maps `2s - 1` back to `s`, so a stack of
//! `dp` transposed layers grows a latent extent `z` to `(z - 1) * 2^dp + 1`.

use crate::error::{Error, Result};
use crate::simulate::LatentField;
use crate::tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Elementwise nonlinearity applied after the bias addition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    /// max(0.2 x, x)
    LeakyRelu02,
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu02 => {
                if x > 0.0 {
                    x
                } else {
                    0.2 * x
                }
            }
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation *output* `y = f(x)`.
    /// Every supported activation admits this form, which lets the backward
    /// pass cache outputs only.
    #[inline]
    fn grad_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu02 => {
                if y > 0.0 {
                    1.0
                } else {
                    0.2
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::LeakyRelu02 => "leaky_relu_0.2",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Identity => "none",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "leaky_relu_0.2" => Ok(Activation::LeakyRelu02),
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            "none" => Ok(Activation::Identity),
            other => Err(Error::BadSpec(format!("unknown activation {other:?}"))),
        }
    }
}

/// Geometry and wiring of one convolutional layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvSpec {
    /// Kernel extent per spatial axis; odd, in 3..=9 for network layers.
    pub kernel: Vec<usize>,
    pub stride: usize,
    /// Zero padding per spatial axis.
    pub padding: Vec<usize>,
    pub transposed: bool,
    pub activation: Activation,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl ConvSpec {
    /// Standard network layer: square/cubic kernel, stride 2, symmetric
    /// padding (kernel - 1) / 2 so the extent law above holds exactly.
    pub fn standard(
        dims: usize,
        kernel: usize,
        transposed: bool,
        activation: Activation,
        in_channels: usize,
        out_channels: usize,
    ) -> Self {
        ConvSpec {
            kernel: vec![kernel; dims],
            stride: 2,
            padding: vec![(kernel - 1) / 2; dims],
            transposed,
            activation,
            in_channels,
            out_channels,
        }
    }

    pub fn dims(&self) -> usize {
        self.kernel.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dims();
        if d != 2 && d != 3 {
            return Err(Error::BadSpec(format!("{d} spatial axes (want 2 or 3)")));
        }
        if self.padding.len() != d {
            return Err(Error::BadSpec(format!(
                "padding has {} entries for {d} spatial axes",
                self.padding.len()
            )));
        }
        for &k in &self.kernel {
            if k % 2 == 0 || !(3..=9).contains(&k) && k != 1 {
                return Err(Error::BadSpec(format!(
                    "kernel extent {k} must be odd and in 3..=9 (or 1 for tests)"
                )));
            }
        }
        if self.stride < 1 {
            return Err(Error::BadSpec("stride must be >= 1".into()));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::BadSpec("channel counts must be >= 1".into()));
        }
        Ok(())
    }

    /// Spatial output extent along one axis.
    pub fn output_extent(&self, axis: usize, input: usize) -> Result<usize> {
        let k = self.kernel[axis] as i64;
        let p = self.padding[axis] as i64;
        let s = self.stride as i64;
        let n = input as i64;
        let out = if self.transposed {
            (n - 1) * s - 2 * p + k
        } else {
            (n + 2 * p - k).div_euclid(s) + 1
        };
        if out < 1 {
            return Err(Error::ShapeMismatch {
                axis: axis + 2,
                expected: 1,
                actual: out.max(0) as usize,
                context: format!("convolution output extent for input extent {input}"),
            });
        }
        Ok(out as usize)
    }
}

/// Weights and biases of one layer. Weight layout is
/// (out_channels, in_channels, kernel...) row-major for both modes.
#[derive(Debug, Clone)]
pub struct LayerParams {
    pub spec: ConvSpec,
    pub weights: Tensor,
    pub biases: Vec<f64>,
}

impl LayerParams {
    pub fn zeros(spec: ConvSpec) -> Result<Self> {
        spec.validate()?;
        let mut shape = vec![spec.out_channels, spec.in_channels];
        shape.extend_from_slice(&spec.kernel);
        Ok(LayerParams {
            biases: vec![0.0; spec.out_channels],
            weights: Tensor::zeros(&shape)?,
            spec,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        let mut shape = vec![self.spec.out_channels, self.spec.in_channels];
        shape.extend_from_slice(&self.spec.kernel);
        if self.weights.shape() != shape.as_slice() {
            return Err(Error::BadShape(self.weights.shape().to_vec()));
        }
        if self.biases.len() != self.spec.out_channels {
            return Err(Error::BadShape(vec![self.biases.len()]));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Generator,
    Discriminator,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Generator => "generator",
            Role::Discriminator => "discriminator",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "generator" => Ok(Role::Generator),
            "discriminator" => Ok(Role::Discriminator),
            other => Err(Error::BadSpec(format!("unknown role {other:?}"))),
        }
    }
}

/// A full generator or discriminator: an ordered stack of layers.
#[derive(Debug, Clone)]
pub struct NetworkParams {
    pub role: Role,
    pub layers: Vec<LayerParams>,
}

impl NetworkParams {
    /// Number of stacked convolutional layers.
    pub fn dp(&self) -> usize {
        self.layers.len()
    }

    pub fn dims(&self) -> usize {
        self.layers[0].spec.dims()
    }

    pub fn in_channels(&self) -> usize {
        self.layers[0].spec.in_channels
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::BadLadder("network has no layers".into()));
        }
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.validate()?;
            if i > 0 && layer.spec.in_channels != self.layers[i - 1].spec.out_channels {
                return Err(Error::BadLadder(format!(
                    "layer {i} expects {} input channels but layer {} produces {}",
                    layer.spec.in_channels,
                    i - 1,
                    self.layers[i - 1].spec.out_channels
                )));
            }
            let (want_transposed, want_act) = match self.role {
                Role::Generator => (
                    true,
                    if i == last {
                        Activation::Tanh
                    } else {
                        Activation::Relu
                    },
                ),
                Role::Discriminator => (
                    false,
                    if i == last {
                        Activation::Sigmoid
                    } else {
                        Activation::LeakyRelu02
                    },
                ),
            };
            if layer.spec.transposed != want_transposed || layer.spec.activation != want_act {
                return Err(Error::BadSpec(format!(
                    "layer {i} does not match the {} layout",
                    self.role.name()
                )));
            }
        }
        Ok(())
    }

    /// Sum of squared weights (biases excluded), used by the l2 regularizer.
    pub fn weight_sq_sum(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.weights.data().iter().map(|w| w * w).sum::<f64>())
            .sum()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum()
    }
}

/// Spatial extent produced by a `dp`-layer generator from a latent extent
/// `z`: `(z - 1) * 2^dp + 1`.
pub fn output_size(z_extent: usize, dp: u32) -> usize {
    (z_extent - 1) * (1usize << dp) + 1
}

// ---------------------------------------------------------------------------
// Convolution kernels
// ---------------------------------------------------------------------------

/// Range of indices `j` in `[0, count)` with `j * stride + offset` inside
/// `[0, limit)`. Returned as a half-open interval.
#[inline]
fn stride_span(limit: usize, count: usize, stride: usize, offset: i64) -> (usize, usize) {
    let s = stride as i64;
    let lo = (-offset + s - 1).div_euclid(s).max(0);
    let hi = (limit as i64 - 1 - offset).div_euclid(s).min(count as i64 - 1);
    if hi < lo {
        (0, 0)
    } else {
        (lo as usize, (hi + 1) as usize)
    }
}

struct Geom2 {
    ih: usize,
    iw: usize,
    oh: usize,
    ow: usize,
    kh: usize,
    kw: usize,
    ph: i64,
    pw: i64,
    s: usize,
}

fn geom2(input: &Tensor, output: &Tensor, spec: &ConvSpec) -> Geom2 {
    Geom2 {
        ih: input.spatial()[0],
        iw: input.spatial()[1],
        oh: output.spatial()[0],
        ow: output.spatial()[1],
        kh: spec.kernel[0],
        kw: spec.kernel[1],
        ph: spec.padding[0] as i64,
        pw: spec.padding[1] as i64,
        s: spec.stride,
    }
}

/// Direct 2D convolution, accumulating into `out` (which holds the biases).
fn conv2d_direct(input: &Tensor, weights: &[f64], spec: &ConvSpec, out: &mut Tensor) {
    let g = geom2(input, out, spec);
    for b in 0..input.batch() {
        for oc in 0..spec.out_channels {
            for ic in 0..spec.in_channels {
                let in_slab = input.slab(b, ic);
                let wbase = ((oc * spec.in_channels + ic) * g.kh) * g.kw;
                // Borrow the output slab fresh per (oc, ic) to keep the
                // borrow checker happy without indexing arithmetic inside.
                let out_slab = out.slab_mut(b, oc);
                for ky in 0..g.kh {
                    let y_off = ky as i64 - g.ph;
                    let (oy_lo, oy_hi) = stride_span(g.ih, g.oh, g.s, y_off);
                    for kx in 0..g.kw {
                        let wv = weights[wbase + ky * g.kw + kx];
                        let x_off = kx as i64 - g.pw;
                        let (ox_lo, ox_hi) = stride_span(g.iw, g.ow, g.s, x_off);
                        if ox_hi <= ox_lo {
                            continue;
                        }
                        for oy in oy_lo..oy_hi {
                            let iy = (oy * g.s) as i64 + y_off;
                            let irow = &in_slab[iy as usize * g.iw..][..g.iw];
                            let orow = &mut out_slab[oy * g.ow..][..g.ow];
                            let mut ix = ((ox_lo * g.s) as i64 + x_off) as usize;
                            for v in &mut orow[ox_lo..ox_hi] {
                                *v += wv * irow[ix];
                                ix += g.s;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Transposed 2D convolution, accumulating into `out`.
fn conv2d_transposed(input: &Tensor, weights: &[f64], spec: &ConvSpec, out: &mut Tensor) {
    let g = geom2(input, out, spec);
    for b in 0..input.batch() {
        for oc in 0..spec.out_channels {
            for ic in 0..spec.in_channels {
                let in_slab = input.slab(b, ic);
                let wbase = ((oc * spec.in_channels + ic) * g.kh) * g.kw;
                let out_slab = out.slab_mut(b, oc);
                for ky in 0..g.kh {
                    let y_off = ky as i64 - g.ph;
                    let (u_lo, u_hi) = stride_span(g.oh, g.ih, g.s, y_off);
                    for kx in 0..g.kw {
                        let wv = weights[wbase + ky * g.kw + kx];
                        let x_off = kx as i64 - g.pw;
                        let (v_lo, v_hi) = stride_span(g.ow, g.iw, g.s, x_off);
                        if v_hi <= v_lo {
                            continue;
                        }
                        for u in u_lo..u_hi {
                            let y = ((u * g.s) as i64 + y_off) as usize;
                            let irow = &in_slab[u * g.iw..][..g.iw];
                            let orow = &mut out_slab[y * g.ow..][..g.ow];
                            let mut x = ((v_lo * g.s) as i64 + x_off) as usize;
                            for &iv in &irow[v_lo..v_hi] {
                                orow[x] += wv * iv;
                                x += g.s;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Backward pass of a direct 2D convolution: weight, bias and input
/// gradients from the pre-activation gradient `dz`.
fn conv2d_direct_backward(
    input: &Tensor,
    dz: &Tensor,
    weights: &[f64],
    spec: &ConvSpec,
    dw: &mut [f64],
    db: &mut [f64],
    dx: &mut Tensor,
) {
    let g = geom2(input, dz, spec);
    for b in 0..input.batch() {
        for oc in 0..spec.out_channels {
            let dz_slab = dz.slab(b, oc);
            db[oc] += dz_slab.iter().sum::<f64>();
            for ic in 0..spec.in_channels {
                let in_slab = input.slab(b, ic);
                let wbase = ((oc * spec.in_channels + ic) * g.kh) * g.kw;
                let dx_slab = dx.slab_mut(b, ic);
                for ky in 0..g.kh {
                    let y_off = ky as i64 - g.ph;
                    let (oy_lo, oy_hi) = stride_span(g.ih, g.oh, g.s, y_off);
                    for kx in 0..g.kw {
                        let x_off = kx as i64 - g.pw;
                        let (ox_lo, ox_hi) = stride_span(g.iw, g.ow, g.s, x_off);
                        if ox_hi <= ox_lo {
                            continue;
                        }
                        let wv = weights[wbase + ky * g.kw + kx];
                        let mut wacc = 0.0;
                        for oy in oy_lo..oy_hi {
                            let iy = ((oy * g.s) as i64 + y_off) as usize;
                            let irow = &in_slab[iy * g.iw..][..g.iw];
                            let dxrow = &mut dx_slab[iy * g.iw..][..g.iw];
                            let dzrow = &dz_slab[oy * g.ow..][..g.ow];
                            let mut ix = ((ox_lo * g.s) as i64 + x_off) as usize;
                            for &dzv in &dzrow[ox_lo..ox_hi] {
                                wacc += dzv * irow[ix];
                                dxrow[ix] += wv * dzv;
                                ix += g.s;
                            }
                        }
                        dw[wbase + ky * g.kw + kx] += wacc;
                    }
                }
            }
        }
    }
}

/// Backward pass of a transposed 2D convolution.
fn conv2d_transposed_backward(
    input: &Tensor,
    dz: &Tensor,
    weights: &[f64],
    spec: &ConvSpec,
    dw: &mut [f64],
    db: &mut [f64],
    dx: &mut Tensor,
) {
    let g = geom2(input, dz, spec);
    for b in 0..input.batch() {
        for oc in 0..spec.out_channels {
            let dz_slab = dz.slab(b, oc);
            db[oc] += dz_slab.iter().sum::<f64>();
            for ic in 0..spec.in_channels {
                let in_slab = input.slab(b, ic);
                let wbase = ((oc * spec.in_channels + ic) * g.kh) * g.kw;
                let dx_slab = dx.slab_mut(b, ic);
                for ky in 0..g.kh {
                    let y_off = ky as i64 - g.ph;
                    let (u_lo, u_hi) = stride_span(g.oh, g.ih, g.s, y_off);
                    for kx in 0..g.kw {
                        let x_off = kx as i64 - g.pw;
                        let (v_lo, v_hi) = stride_span(g.ow, g.iw, g.s, x_off);
                        if v_hi <= v_lo {
                            continue;
                        }
                        let wv = weights[wbase + ky * g.kw + kx];
                        let mut wacc = 0.0;
                        for u in u_lo..u_hi {
                            let y = ((u * g.s) as i64 + y_off) as usize;
                            let irow = &in_slab[u * g.iw..][..g.iw];
                            let dxrow = &mut dx_slab[u * g.iw..][..g.iw];
                            let dzrow = &dz_slab[y * g.ow..][..g.ow];
                            let mut x = ((v_lo * g.s) as i64 + x_off) as usize;
                            for v in v_lo..v_hi {
                                let dzv = dzrow[x];
                                wacc += irow[v] * dzv;
                                dxrow[v] += wv * dzv;
                                x += g.s;
                            }
                        }
                        dw[wbase + ky * g.kw + kx] += wacc;
                    }
                }
            }
        }
    }
}

struct Geom3 {
    id: [usize; 3],
    od: [usize; 3],
    k: [usize; 3],
    p: [i64; 3],
    s: usize,
}

fn geom3(input: &Tensor, output: &Tensor, spec: &ConvSpec) -> Geom3 {
    Geom3 {
        id: [input.spatial()[0], input.spatial()[1], input.spatial()[2]],
        od: [output.spatial()[0], output.spatial()[1], output.spatial()[2]],
        k: [spec.kernel[0], spec.kernel[1], spec.kernel[2]],
        p: [
            spec.padding[0] as i64,
            spec.padding[1] as i64,
            spec.padding[2] as i64,
        ],
        s: spec.stride,
    }
}

fn conv3d_direct(input: &Tensor, weights: &[f64], spec: &ConvSpec, out: &mut Tensor) {
    let g = geom3(input, out, spec);
    for b in 0..input.batch() {
        for oc in 0..spec.out_channels {
            for ic in 0..spec.in_channels {
                let in_slab = input.slab(b, ic);
                let wbase = ((oc * spec.in_channels + ic) * g.k[0]) * g.k[1] * g.k[2];
                let out_slab = out.slab_mut(b, oc);
                for kz in 0..g.k[0] {
                    let z_off = kz as i64 - g.p[0];
                    let (oz_lo, oz_hi) = stride_span(g.id[0], g.od[0], g.s, z_off);
                    for ky in 0..g.k[1] {
                        let y_off = ky as i64 - g.p[1];
                        let (oy_lo, oy_hi) = stride_span(g.id[1], g.od[1], g.s, y_off);
                        for kx in 0..g.k[2] {
                            let wv = weights[wbase + (kz * g.k[1] + ky) * g.k[2] + kx];
                            let x_off = kx as i64 - g.p[2];
                            let (ox_lo, ox_hi) = stride_span(g.id[2], g.od[2], g.s, x_off);
                            if ox_hi <= ox_lo {
                                continue;
                            }
                            for oz in oz_lo..oz_hi {
                                let iz = ((oz * g.s) as i64 + z_off) as usize;
                                for oy in oy_lo..oy_hi {
                                    let iy = ((oy * g.s) as i64 + y_off) as usize;
                                    let irow = &in_slab[(iz * g.id[1] + iy) * g.id[2]..][..g.id[2]];
                                    let orow = &mut out_slab
                                        [(oz * g.od[1] + oy) * g.od[2]..][..g.od[2]];
                                    let mut ix = ((ox_lo * g.s) as i64 + x_off) as usize;
                                    for v in &mut orow[ox_lo..ox_hi] {
                                        *v += wv * irow[ix];
                                        ix += g.s;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

fn conv3d_transposed(input: &Tensor, weights: &[f64], spec: &ConvSpec, out: &mut Tensor) {
    let g = geom3(input, out, spec);
    for b in 0..input.batch() {
        for oc in 0..spec.out_channels {
            for ic in 0..spec.in_channels {
                let in_slab = input.slab(b, ic);
                let wbase = ((oc * spec.in_channels + ic) * g.k[0]) * g.k[1] * g.k[2];
                let out_slab = out.slab_mut(b, oc);
                for kz in 0..g.k[0] {
                    let z_off = kz as i64 - g.p[0];
                    let (uz_lo, uz_hi) = stride_span(g.od[0], g.id[0], g.s, z_off);
                    for ky in 0..g.k[1] {
                        let y_off = ky as i64 - g.p[1];
                        let (uy_lo, uy_hi) = stride_span(g.od[1], g.id[1], g.s, y_off);
                        for kx in 0..g.k[2] {
                            let wv = weights[wbase + (kz * g.k[1] + ky) * g.k[2] + kx];
                            let x_off = kx as i64 - g.p[2];
                            let (ux_lo, ux_hi) = stride_span(g.od[2], g.id[2], g.s, x_off);
                            if ux_hi <= ux_lo {
                                continue;
                            }
                            for uz in uz_lo..uz_hi {
                                let z = ((uz * g.s) as i64 + z_off) as usize;
                                for uy in uy_lo..uy_hi {
                                    let y = ((uy * g.s) as i64 + y_off) as usize;
                                    let irow = &in_slab[(uz * g.id[1] + uy) * g.id[2]..][..g.id[2]];
                                    let orow =
                                        &mut out_slab[(z * g.od[1] + y) * g.od[2]..][..g.od[2]];
                                    let mut x = ((ux_lo * g.s) as i64 + x_off) as usize;
                                    for &iv in &irow[ux_lo..ux_hi] {
                                        orow[x] += wv * iv;
                                        x += g.s;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

fn conv3d_direct_backward(
    input: &Tensor,
    dz: &Tensor,
    weights: &[f64],
    spec: &ConvSpec,
    dw: &mut [f64],
    db: &mut [f64],
    dx: &mut Tensor,
) {
    let g = geom3(input, dz, spec);
    for b in 0..input.batch() {
        for oc in 0..spec.out_channels {
            let dz_slab = dz.slab(b, oc);
            db[oc] += dz_slab.iter().sum::<f64>();
            for ic in 0..spec.in_channels {
                let in_slab = input.slab(b, ic);
                let wbase = ((oc * spec.in_channels + ic) * g.k[0]) * g.k[1] * g.k[2];
                let dx_slab = dx.slab_mut(b, ic);
                for kz in 0..g.k[0] {
                    let z_off = kz as i64 - g.p[0];
                    let (oz_lo, oz_hi) = stride_span(g.id[0], g.od[0], g.s, z_off);
                    for ky in 0..g.k[1] {
                        let y_off = ky as i64 - g.p[1];
                        let (oy_lo, oy_hi) = stride_span(g.id[1], g.od[1], g.s, y_off);
                        for kx in 0..g.k[2] {
                            let x_off = kx as i64 - g.p[2];
                            let (ox_lo, ox_hi) = stride_span(g.id[2], g.od[2], g.s, x_off);
                            if ox_hi <= ox_lo {
                                continue;
                            }
                            let widx = wbase + (kz * g.k[1] + ky) * g.k[2] + kx;
                            let wv = weights[widx];
                            let mut wacc = 0.0;
                            for oz in oz_lo..oz_hi {
                                let iz = ((oz * g.s) as i64 + z_off) as usize;
                                for oy in oy_lo..oy_hi {
                                    let iy = ((oy * g.s) as i64 + y_off) as usize;
                                    let ibase = (iz * g.id[1] + iy) * g.id[2];
                                    let irow = &in_slab[ibase..][..g.id[2]];
                                    let dxrow = &mut dx_slab[ibase..][..g.id[2]];
                                    let dzrow =
                                        &dz_slab[(oz * g.od[1] + oy) * g.od[2]..][..g.od[2]];
                                    let mut ix = ((ox_lo * g.s) as i64 + x_off) as usize;
                                    for &dzv in &dzrow[ox_lo..ox_hi] {
                                        wacc += dzv * irow[ix];
                                        dxrow[ix] += wv * dzv;
                                        ix += g.s;
                                    }
                                }
                            }
                            dw[widx] += wacc;
                        }
                    }
                }
            }
        }
    }
}

fn conv3d_transposed_backward(
    input: &Tensor,
    dz: &Tensor,
    weights: &[f64],
    spec: &ConvSpec,
    dw: &mut [f64],
    db: &mut [f64],
    dx: &mut Tensor,
) {
    let g = geom3(input, dz, spec);
    for b in 0..input.batch() {
        for oc in 0..spec.out_channels {
            let dz_slab = dz.slab(b, oc);
            db[oc] += dz_slab.iter().sum::<f64>();
            for ic in 0..spec.in_channels {
                let in_slab = input.slab(b, ic);
                let wbase = ((oc * spec.in_channels + ic) * g.k[0]) * g.k[1] * g.k[2];
                let dx_slab = dx.slab_mut(b, ic);
                for kz in 0..g.k[0] {
                    let z_off = kz as i64 - g.p[0];
                    let (uz_lo, uz_hi) = stride_span(g.od[0], g.id[0], g.s, z_off);
                    for ky in 0..g.k[1] {
                        let y_off = ky as i64 - g.p[1];
                        let (uy_lo, uy_hi) = stride_span(g.od[1], g.id[1], g.s, y_off);
                        for kx in 0..g.k[2] {
                            let x_off = kx as i64 - g.p[2];
                            let (ux_lo, ux_hi) = stride_span(g.od[2], g.id[2], g.s, x_off);
                            if ux_hi <= ux_lo {
                                continue;
                            }
                            let widx = wbase + (kz * g.k[1] + ky) * g.k[2] + kx;
                            let wv = weights[widx];
                            let mut wacc = 0.0;
                            for uz in uz_lo..uz_hi {
                                let z = ((uz * g.s) as i64 + z_off) as usize;
                                for uy in uy_lo..uy_hi {
                                    let y = ((uy * g.s) as i64 + y_off) as usize;
                                    let ibase = (uz * g.id[1] + uy) * g.id[2];
                                    let irow = &in_slab[ibase..][..g.id[2]];
                                    let dxrow = &mut dx_slab[ibase..][..g.id[2]];
                                    let dzrow = &dz_slab[(z * g.od[1] + y) * g.od[2]..][..g.od[2]];
                                    let mut x = ((ux_lo * g.s) as i64 + x_off) as usize;
                                    for v in ux_lo..ux_hi {
                                        let dzv = dzrow[x];
                                        wacc += irow[v] * dzv;
                                        dxrow[v] += wv * dzv;
                                        x += g.s;
                                    }
                                }
                            }
                            dw[widx] += wacc;
                        }
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Layer and network level operations
// ---------------------------------------------------------------------------

fn check_layer_input(input: &Tensor, layer: &LayerParams) -> Result<Vec<usize>> {
    let spec = &layer.spec;
    if input.spatial_dims() != spec.dims() {
        return Err(Error::BadShape(input.shape().to_vec()));
    }
    if input.channels() != spec.in_channels {
        return Err(Error::ShapeMismatch {
            axis: 1,
            expected: spec.in_channels,
            actual: input.channels(),
            context: "convolution input channels".into(),
        });
    }
    let mut out_shape = vec![input.batch(), spec.out_channels];
    for (axis, &e) in input.spatial().iter().enumerate() {
        out_shape.push(spec.output_extent(axis, e)?);
    }
    Ok(out_shape)
}

/// Pre-activation convolution: bias plus kernel sums, no nonlinearity.
fn conv_affine(input: &Tensor, layer: &LayerParams) -> Result<Tensor> {
    layer.validate()?;
    let out_shape = check_layer_input(input, layer)?;
    let mut out = Tensor::zeros(&out_shape)?;
    for b in 0..input.batch() {
        for oc in 0..layer.spec.out_channels {
            let bias = layer.biases[oc];
            out.slab_mut(b, oc).iter_mut().for_each(|v| *v = bias);
        }
    }
    let w = layer.weights.data();
    match (layer.spec.dims(), layer.spec.transposed) {
        (2, false) => conv2d_direct(input, w, &layer.spec, &mut out),
        (2, true) => conv2d_transposed(input, w, &layer.spec, &mut out),
        (3, false) => conv3d_direct(input, w, &layer.spec, &mut out),
        (3, true) => conv3d_transposed(input, w, &layer.spec, &mut out),
        _ => unreachable!("validated dims"),
    }
    Ok(out)
}

/// One convolutional layer: affine map followed by the layer activation.
pub fn conv_forward(input: &Tensor, layer: &LayerParams) -> Result<Tensor> {
    let mut out = conv_affine(input, layer)?;
    let act = layer.spec.activation;
    out.data_mut().iter_mut().for_each(|v| *v = act.apply(*v));
    Ok(out)
}

/// Cached per-layer inputs and outputs from a forward pass, as required by
/// [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    ios: Vec<(Tensor, Tensor)>,
}

impl ForwardTrace {
    pub fn output(&self) -> &Tensor {
        &self.ios.last().expect("trace is never empty").1
    }

    pub fn layer_count(&self) -> usize {
        self.ios.len()
    }
}

/// Forward pass through a full network keeping per-layer activations.
pub fn forward_with_trace(net: &NetworkParams, input: &Tensor) -> Result<ForwardTrace> {
    net.validate()?;
    let mut ios = Vec::with_capacity(net.layers.len());
    let mut cur = input.clone();
    for layer in &net.layers {
        let out = conv_forward(&cur, layer)?;
        ios.push((cur, out.clone()));
        cur = out;
    }
    Ok(ForwardTrace { ios })
}

/// Forward pass without caching, for generation-time use.
pub fn forward(net: &NetworkParams, input: &Tensor) -> Result<Tensor> {
    net.validate()?;
    let mut cur = input.clone();
    for layer in &net.layers {
        cur = conv_forward(&cur, layer)?;
    }
    Ok(cur)
}

/// Gradients for every weight and bias of one layer, flat row-major.
#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub dw: Vec<f64>,
    pub db: Vec<f64>,
}

/// Gradient blocks shaped identically to [`NetworkParams`].
#[derive(Debug, Clone)]
pub struct NetworkGrads {
    pub layers: Vec<LayerGrads>,
}

impl NetworkGrads {
    pub fn zeros_like(net: &NetworkParams) -> Self {
        NetworkGrads {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrads {
                    dw: vec![0.0; l.weights.len()],
                    db: vec![0.0; l.biases.len()],
                })
                .collect(),
        }
    }

    /// Accumulate `other` into `self` (fixed order, for deterministic sums).
    pub fn add_assign(&mut self, other: &NetworkGrads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.dw.iter_mut().zip(&b.dw).for_each(|(x, y)| *x += y);
            a.db.iter_mut().zip(&b.db).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, c: f64) {
        for l in &mut self.layers {
            l.dw.iter_mut().for_each(|x| *x *= c);
            l.db.iter_mut().for_each(|x| *x *= c);
        }
    }
}

/// Backpropagate `grad_output` (gradient of a scalar loss with respect to
/// the network output) through the whole stack. Returns parameter gradients
/// and the gradient with respect to the network input, which allows
/// generator-then-discriminator composites: backpropagate through D first,
/// then feed the returned input gradient into the generator's backward pass.
pub fn backward(
    net: &NetworkParams,
    trace: &ForwardTrace,
    grad_output: &Tensor,
) -> Result<(NetworkGrads, Tensor)> {
    if trace.ios.len() != net.layers.len() {
        return Err(Error::MissingTrace(format!(
            "trace has {} cached layers, network has {}",
            trace.ios.len(),
            net.layers.len()
        )));
    }
    if grad_output.shape() != trace.output().shape() {
        return Err(Error::BadShape(grad_output.shape().to_vec()));
    }
    let mut grads = NetworkGrads::zeros_like(net);
    let mut g_out = grad_output.clone();
    for (i, layer) in net.layers.iter().enumerate().rev() {
        let (input, output) = &trace.ios[i];
        // dz = dL/dout * f'(z), with f' recovered from the cached output.
        let act = layer.spec.activation;
        let mut dz = g_out;
        dz.data_mut()
            .iter_mut()
            .zip(output.data())
            .for_each(|(g, &y)| *g *= act.grad_from_output(y));
        let mut dx = Tensor::zeros(input.shape())?;
        let lg = &mut grads.layers[i];
        let w = layer.weights.data();
        match (layer.spec.dims(), layer.spec.transposed) {
            (2, false) => {
                conv2d_direct_backward(input, &dz, w, &layer.spec, &mut lg.dw, &mut lg.db, &mut dx)
            }
            (2, true) => conv2d_transposed_backward(
                input, &dz, w, &layer.spec, &mut lg.dw, &mut lg.db, &mut dx,
            ),
            (3, false) => {
                conv3d_direct_backward(input, &dz, w, &layer.spec, &mut lg.dw, &mut lg.db, &mut dx)
            }
            (3, true) => conv3d_transposed_backward(
                input, &dz, w, &layer.spec, &mut lg.dw, &mut lg.db, &mut dx,
            ),
            _ => unreachable!("validated dims"),
        }
        g_out = dx;
    }
    Ok((grads, g_out))
}

// ---------------------------------------------------------------------------
// Network assembly
// ---------------------------------------------------------------------------

/// Blueprint for building a generator or discriminator with the standard
/// stride-2 geometry.
#[derive(Debug, Clone)]
pub struct ArchitectureSpec {
    pub role: Role,
    /// Spatial dimensionality, 2 or 3.
    pub dims: usize,
    /// Input channels: the latent channel count `q` for a generator, 1 for
    /// a discriminator.
    pub in_channels: usize,
    /// Output channels per layer; the last entry must be 1.
    pub channels: Vec<usize>,
    /// Kernel extent shared by all axes and layers.
    pub kernel: usize,
}

impl ArchitectureSpec {
    pub fn generator(dims: usize, q: usize, channels: Vec<usize>, kernel: usize) -> Self {
        ArchitectureSpec {
            role: Role::Generator,
            dims,
            in_channels: q,
            channels,
            kernel,
        }
    }

    pub fn discriminator(dims: usize, channels: Vec<usize>, kernel: usize) -> Self {
        ArchitectureSpec {
            role: Role::Discriminator,
            dims,
            in_channels: 1,
            channels,
            kernel,
        }
    }

    pub fn dp(&self) -> usize {
        self.channels.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() {
            return Err(Error::BadLadder("channel ladder is empty".into()));
        }
        if *self.channels.last().unwrap() != 1 {
            return Err(Error::BadLadder(format!(
                "channel ladder must end in 1, got {:?}",
                self.channels
            )));
        }
        if self.channels.iter().any(|&c| c == 0) || self.in_channels == 0 {
            return Err(Error::BadLadder("zero channel count".into()));
        }
        if self.dims != 2 && self.dims != 3 {
            return Err(Error::BadSpec(format!("{} spatial axes", self.dims)));
        }
        if self.kernel % 2 == 0 || !(3..=9).contains(&self.kernel) {
            return Err(Error::BadSpec(format!(
                "kernel {} must be odd and in 3..=9",
                self.kernel
            )));
        }
        Ok(())
    }
}

/// Discriminator ladder mirroring a generator ladder: the feature-map
/// counts are reversed, the final probability map stays single-channel.
/// `[512, 256, 128, 64, 1]` becomes `[64, 128, 256, 512, 1]`.
pub fn mirror_discriminator_channels(generator_channels: &[usize]) -> Vec<usize> {
    let mut ch: Vec<usize> = generator_channels[..generator_channels.len() - 1]
        .iter()
        .rev()
        .copied()
        .collect();
    ch.push(1);
    ch
}

/// Draw initial parameters: weights are zero-mean Gaussian with standard
/// deviation sqrt(2 / fan_in), biases are zero. Deterministic given `seed`.
pub fn init_params(arch: &ArchitectureSpec, seed: u64) -> Result<NetworkParams> {
    arch.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let last = arch.channels.len() - 1;
    let mut layers = Vec::with_capacity(arch.channels.len());
    let mut in_ch = arch.in_channels;
    for (i, &out_ch) in arch.channels.iter().enumerate() {
        let (transposed, activation) = match arch.role {
            Role::Generator => (
                true,
                if i == last {
                    Activation::Tanh
                } else {
                    Activation::Relu
                },
            ),
            Role::Discriminator => (
                false,
                if i == last {
                    Activation::Sigmoid
                } else {
                    Activation::LeakyRelu02
                },
            ),
        };
        let spec = ConvSpec::standard(arch.dims, arch.kernel, transposed, activation, in_ch, out_ch);
        let mut layer = LayerParams::zeros(spec)?;
        let fan_in = (in_ch * arch.kernel.pow(arch.dims as u32)) as f64;
        let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
        layer
            .weights
            .data_mut()
            .iter_mut()
            .for_each(|w| *w = normal.sample(&mut rng));
        layers.push(layer);
        in_ch = out_ch;
    }
    let net = NetworkParams {
        role: arch.role,
        layers,
    };
    net.validate()?;
    Ok(net)
}

/// Propagate a latent field through a generator. The result is a
/// single-channel tensor with values in [-1, 1] and spatial extents given
/// by [`output_size`] under the standard geometry.
pub fn generator_forward(z: &LatentField, net: &NetworkParams) -> Result<Tensor> {
    if net.role != Role::Generator {
        return Err(Error::RoleMismatch {
            expected: "generator",
            actual: net.role.name(),
        });
    }
    forward(net, &z.to_tensor())
}

/// Batched generator forward pass; `zbatch` has shape (batch, q, spatial...).
pub fn generator_forward_batch(zbatch: &Tensor, net: &NetworkParams) -> Result<Tensor> {
    if net.role != Role::Generator {
        return Err(Error::RoleMismatch {
            expected: "generator",
            actual: net.role.name(),
        });
    }
    forward(net, zbatch)
}

/// Score a single-channel input with a discriminator. Returns the sigmoid
/// probability field and its arithmetic mean over every entry.
pub fn discriminator_forward(x: &Tensor, net: &NetworkParams) -> Result<(Tensor, f64)> {
    if net.role != Role::Discriminator {
        return Err(Error::RoleMismatch {
            expected: "discriminator",
            actual: net.role.name(),
        });
    }
    if x.channels() != 1 {
        return Err(Error::ShapeMismatch {
            axis: 1,
            expected: 1,
            actual: x.channels(),
            context: "discriminator input must be single-channel".into(),
        });
    }
    let field = forward(net, x)?;
    let mean = field.mean();
    Ok((field, mean))
}
