//! Miniature two-scale FCN encoder with a skip-fused pixel head.
//!
//! The encoder stacks conv3x3 / relu / pool2 blocks down to `node_stride`,
//! yielding f1, then one more block yields f2 at twice the stride. The pixel
//! head scores both scales with 1x1 convolutions, fuses them at the f1 grid,
//! and upsamples (fixed nearest-neighbor) back to input resolution.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, VarId};
use crate::error::{Error, Result};
use crate::params::{ModelParams, TapeBindings};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct BackboneConfig {
    pub in_channels: usize,
    pub c1: usize,
    pub c2: usize,
    pub node_stride: usize,
    pub num_classes: usize,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        BackboneConfig {
            in_channels: 3,
            c1: 32,
            c2: 64,
            node_stride: 8,
            num_classes: 4,
        }
    }
}

impl BackboneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.node_stride < 2 || !self.node_stride.is_power_of_two() {
            return Err(Error::Parameter(format!(
                "node_stride must be a power of two >= 2, got {}",
                self.node_stride
            )));
        }
        if self.c1 == 0 || self.c2 == 0 || self.num_classes == 0 || self.in_channels == 0 {
            return Err(Error::Parameter("channel counts must be positive".into()));
        }
        Ok(())
    }

    fn num_blocks(&self) -> usize {
        self.node_stride.trailing_zeros() as usize
    }

    /// Output channels of the stride-halving blocks ending at c1.
    fn block_channels(&self) -> Vec<usize> {
        let n = self.num_blocks();
        (0..n).map(|i| (self.c1 >> (n - 1 - i)).max(1)).collect()
    }
}

pub struct BackboneOutput {
    /// c1 x h x w feature map at stride `node_stride`.
    pub f1: VarId,
    /// c2 x h x w map: scale-2 features upsampled x2 onto the f1 grid.
    pub f2_up: VarId,
    /// f2 at its native stride, input to the scale-2 score head.
    pub f2: VarId,
    /// num_classes x H x W logits at input resolution.
    pub pixel_logits: VarId,
    pub grid_h: usize,
    pub grid_w: usize,
}

/// Glorot-uniform kernels (uniform in +-sqrt(6 / (fan_in + fan_out))), zero
/// biases, reproducible from the seed.
pub fn init_params(cfg: &BackboneConfig, seed: u64) -> Result<ModelParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ModelParams::new();
    append_params(cfg, &mut rng, &mut params)?;
    Ok(params)
}

pub(crate) fn append_params(
    cfg: &BackboneConfig,
    rng: &mut ChaCha8Rng,
    params: &mut ModelParams,
) -> Result<()> {
    cfg.validate()?;
    let mut cin = cfg.in_channels;
    for (i, cout) in cfg
        .block_channels()
        .into_iter()
        .chain(std::iter::once(cfg.c2))
        .enumerate()
    {
        params.insert(&format!("enc{i}.kernel"), glorot(rng, cout, cin, 3, 3));
        params.insert(&format!("enc{i}.bias"), Tensor::zeros(vec![cout]));
        cin = cout;
    }
    params.insert("score1.kernel", glorot(rng, cfg.num_classes, cfg.c1, 1, 1));
    params.insert("score1.bias", Tensor::zeros(vec![cfg.num_classes]));
    params.insert("score2.kernel", glorot(rng, cfg.num_classes, cfg.c2, 1, 1));
    params.insert("score2.bias", Tensor::zeros(vec![cfg.num_classes]));
    Ok(())
}

pub(crate) fn glorot(rng: &mut ChaCha8Rng, cout: usize, cin: usize, kh: usize, kw: usize) -> Tensor {
    let fan_in = (cin * kh * kw) as f64;
    let fan_out = (cout * kh * kw) as f64;
    let a = (6.0 / (fan_in + fan_out)).sqrt();
    let data = (0..cout * cin * kh * kw)
        .map(|_| rng.random_range(-a..a))
        .collect();
    Tensor::new(vec![cout, cin, kh, kw], data).expect("shape consistent")
}

pub fn backbone_forward(
    tape: &mut Tape,
    x: VarId,
    binds: &TapeBindings,
    cfg: &BackboneConfig,
) -> Result<BackboneOutput> {
    cfg.validate()?;
    let shape = tape.value(x).shape().to_vec();
    if shape.len() != 3 || shape[0] != cfg.in_channels {
        return Err(Error::ShapeMismatch {
            op: "backbone_forward",
            lhs: shape,
            rhs: vec![cfg.in_channels],
        });
    }
    let (height, width) = (shape[1], shape[2]);
    let s = cfg.node_stride;
    if height < 2 * s || width < 2 * s {
        return Err(Error::Parameter(format!(
            "image {height}x{width} smaller than minimum {}x{}",
            2 * s,
            2 * s
        )));
    }

    // ceiling-division padding so every pool divides evenly
    let grid_h = height.div_ceil(s);
    let grid_w = width.div_ceil(s);
    let mut cur = if grid_h * s != height || grid_w * s != width {
        tape.pad_spatial(x, grid_h * s, grid_w * s)?
    } else {
        x
    };

    let n = cfg.num_blocks();
    for i in 0..n {
        cur = block(tape, cur, binds, i)?;
    }
    let f1 = cur;

    // scale-2 block; pad the grid to even extents first
    let (eh, ew) = (grid_h.div_ceil(2) * 2, grid_w.div_ceil(2) * 2);
    let mut t = f1;
    if eh != grid_h || ew != grid_w {
        t = tape.pad_spatial(t, eh, ew)?;
    }
    let f2 = block(tape, t, binds, n)?;
    let f2_up_full = tape.upsample_nearest(f2, 2)?;
    let f2_up = tape.crop_spatial(f2_up_full, grid_h, grid_w)?;

    // skip-fused pixel head
    let s1 = tape.conv2d(f1, binds.id("score1.kernel"), 1, 0)?;
    let s1 = tape.add_channel_bias(s1, binds.id("score1.bias"))?;
    let s2 = tape.conv2d(f2, binds.id("score2.kernel"), 1, 0)?;
    let s2 = tape.add_channel_bias(s2, binds.id("score2.bias"))?;
    let s2_up = tape.upsample_nearest(s2, 2)?;
    let s2_up = tape.crop_spatial(s2_up, grid_h, grid_w)?;
    let fused = tape.add(s1, s2_up)?;
    let logits_pad = tape.upsample_nearest(fused, s)?;
    let pixel_logits = tape.crop_spatial(logits_pad, height, width)?;

    Ok(BackboneOutput {
        f1,
        f2_up,
        f2,
        pixel_logits,
        grid_h,
        grid_w,
    })
}

fn block(tape: &mut Tape, x: VarId, binds: &TapeBindings, i: usize) -> Result<VarId> {
    let c = tape.conv2d(x, binds.id(&format!("enc{i}.kernel")), 1, 1)?;
    let c = tape.add_channel_bias(c, binds.id(&format!("enc{i}.bias")))?;
    let r = tape.relu(c)?;
    tape.maxpool2d(r, 2, 2)
}
