//! Gated cross-attention feature fusion at toy scale, plus a linear
//! compute-cost model.
//!
//! The fusion block lets a low-resolution token stream attend, frame by
//! frame, into a high-resolution token stream of the same width: queries come
//! from the low branch, keys and values from the high branch, and the
//! attended result is projected and added back through a learnable scalar
//! gate. The gate starts at exactly zero, so an untrained block is an exact
//! identity on the low branch — inserting it into a pipeline cannot perturb
//! existing behavior — while [`gate_sensitivity`] verifies the gate still
//! receives nonzero derivative signal and therefore trains.
//!
//! The cost model is deliberately simple: published compute totals scale
//! linearly in the number of frames, so one (frames, TFLOPs) measurement
//! pins down a per-frame cost that predicts every other row.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::util::pairwise_sum;

/// Central-difference step used by [`gate_sensitivity`].
pub const GATE_PROBE_EPSILON: f64 = 1e-4;

/// Dense per-frame token features: `frames` stacks of `tokens` vectors of
/// `channels` reals, row-major with channels innermost.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenGrid {
    pub frames: usize,
    pub tokens: usize,
    pub channels: usize,
    pub values: Vec<f64>,
}

impl TokenGrid {
    pub fn new(frames: usize, tokens: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != frames * tokens * channels {
            return Err(Error::ShapeMismatch(format!(
                "token grid {}x{}x{} expects {} values, got {}",
                frames,
                tokens,
                channels,
                frames * tokens * channels,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite token value {v}")));
        }
        Ok(Self { frames, tokens, channels, values })
    }

    pub fn zeros(frames: usize, tokens: usize, channels: usize) -> Self {
        Self { frames, tokens, channels, values: vec![0.0; frames * tokens * channels] }
    }

    /// Uniform random tokens in (-1, 1), deterministic under the seed.
    pub fn random(frames: usize, tokens: usize, channels: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..frames * tokens * channels)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        Self { frames, tokens, channels, values }
    }

    #[inline]
    pub fn at(&self, frame: usize, token: usize, ch: usize) -> f64 {
        self.values[(frame * self.tokens + token) * self.channels + ch]
    }

    #[inline]
    fn token(&self, frame: usize, token: usize) -> &[f64] {
        let base = (frame * self.tokens + token) * self.channels;
        &self.values[base..base + self.channels]
    }
}

/// One cross-attention fusion block: four square projection matrices, a head
/// count, and the residual gate. Matrices are row-major and right-multiply
/// row vectors (`projected[j] = sum_i x[i] * w[i*C + j]`).
#[derive(Clone, Debug, PartialEq)]
pub struct FusionBlock {
    pub channels: usize,
    pub heads: usize,
    pub wq: Vec<f64>,
    pub wk: Vec<f64>,
    pub wv: Vec<f64>,
    pub wo: Vec<f64>,
    /// Residual gate. Construction sets it to exactly 0, making the block an
    /// exact identity until trained.
    pub beta: f64,
}

impl FusionBlock {
    /// Random projections scaled by 1/sqrt(channels), gate at exactly zero.
    pub fn new(channels: usize, heads: usize, seed: u64) -> Result<Self> {
        check_heads(channels, heads)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = 1.0 / (channels as f64).sqrt();
        let mut mat = || -> Vec<f64> {
            (0..channels * channels).map(|_| rng.gen_range(-a..a)).collect()
        };
        let (wq, wk, wv, wo) = (mat(), mat(), mat(), mat());
        Ok(Self { channels, heads, wq, wk, wv, wo, beta: 0.0 })
    }

    /// Hand-set projections (each row-major `channels x channels`), gate at
    /// exactly zero.
    pub fn with_weights(
        channels: usize,
        heads: usize,
        wq: Vec<f64>,
        wk: Vec<f64>,
        wv: Vec<f64>,
        wo: Vec<f64>,
    ) -> Result<Self> {
        check_heads(channels, heads)?;
        for (name, w) in [("wq", &wq), ("wk", &wk), ("wv", &wv), ("wo", &wo)] {
            if w.len() != channels * channels {
                return Err(Error::ShapeMismatch(format!(
                    "{name}: expected {}x{} = {} entries, got {}",
                    channels,
                    channels,
                    channels * channels,
                    w.len()
                )));
            }
            if let Some(v) = w.iter().find(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("{name}: non-finite entry {v}")));
            }
        }
        Ok(Self { channels, heads, wq, wk, wv, wo, beta: 0.0 })
    }
}

fn check_heads(channels: usize, heads: usize) -> Result<()> {
    if channels == 0 || heads == 0 {
        return Err(Error::InvalidInput(format!(
            "fusion block needs positive channels and heads, got {channels} and {heads}"
        )));
    }
    if channels % heads != 0 {
        return Err(Error::InvalidInput(format!(
            "channels ({channels}) must divide evenly into heads ({heads})"
        )));
    }
    Ok(())
}

/// Softmax attention weights of one fusion pass, for inspection and tests:
/// entry (frame, head, query token, key token).
#[derive(Clone, Debug)]
pub struct AttentionMap {
    pub frames: usize,
    pub heads: usize,
    pub queries: usize,
    pub keys: usize,
    pub values: Vec<f64>,
}

impl AttentionMap {
    #[inline]
    pub fn at(&self, frame: usize, head: usize, query: usize, key: usize) -> f64 {
        self.values
            [((frame * self.heads + head) * self.queries + query) * self.keys + key]
    }

    /// One query's weights over all keys.
    pub fn row(&self, frame: usize, head: usize, query: usize) -> &[f64] {
        let base = ((frame * self.heads + head) * self.queries + query) * self.keys;
        &self.values[base..base + self.keys]
    }
}

/// Fused tokens plus the attention weights that produced them.
#[derive(Clone, Debug)]
pub struct FusionOutput {
    pub fused: TokenGrid,
    pub attention: AttentionMap,
}

/// Frame-wise gated cross-attention: for each frame independently, the low
/// tokens query the high tokens of the same frame with standard scaled
/// dot-product multi-head attention, the attended values are output-projected
/// and added back as `low + beta * attended`. Token counts may differ between
/// the branches; frame count and channel width must match.
pub fn cross_attend_fuse(
    low: &TokenGrid,
    high: &TokenGrid,
    block: &FusionBlock,
) -> Result<FusionOutput> {
    if low.frames != high.frames || low.channels != high.channels {
        return Err(Error::ShapeMismatch(format!(
            "fusion branches: {} frames x {} channels vs {} frames x {} channels",
            low.frames, low.channels, high.frames, high.channels
        )));
    }
    if low.channels != block.channels {
        return Err(Error::ShapeMismatch(format!(
            "fusion block of {} channels applied to {}-channel tokens",
            block.channels, low.channels
        )));
    }
    if low.tokens == 0 || high.tokens == 0 {
        return Err(Error::InvalidInput("fusion branches need at least one token".into()));
    }
    let c = block.channels;
    let h = block.heads;
    let d = c / h;
    let scale = 1.0 / (d as f64).sqrt();

    let mut fused = low.values.clone();
    let mut attention = AttentionMap {
        frames: low.frames,
        heads: h,
        queries: low.tokens,
        keys: high.tokens,
        values: vec![0.0; low.frames * h * low.tokens * high.tokens],
    };

    // Per-frame projected token buffers, reused across frames.
    let mut q = vec![0.0; low.tokens * c];
    let mut k = vec![0.0; high.tokens * c];
    let mut v = vec![0.0; high.tokens * c];
    let mut attended = vec![0.0; low.tokens * c];

    for f in 0..low.frames {
        project(low, f, &block.wq, c, &mut q);
        project(high, f, &block.wk, c, &mut k);
        project(high, f, &block.wv, c, &mut v);
        attended.iter_mut().for_each(|x| *x = 0.0);

        let mut scores = vec![0.0; high.tokens];
        for head in 0..h {
            let lo = head * d;
            for qi in 0..low.tokens {
                for (ki, s) in scores.iter_mut().enumerate() {
                    let mut dot = 0.0;
                    for a in 0..d {
                        dot += q[qi * c + lo + a] * k[ki * c + lo + a];
                    }
                    *s = dot * scale;
                }
                // Max-shifted softmax: stable and exact for a single key.
                let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
                let denom = pairwise_sum(&exps);
                let att_base =
                    ((f * h + head) * low.tokens + qi) * high.tokens;
                for (ki, e) in exps.iter().enumerate() {
                    let a = e / denom;
                    attention.values[att_base + ki] = a;
                    for ch in 0..d {
                        attended[qi * c + lo + ch] += a * v[ki * c + lo + ch];
                    }
                }
            }
        }

        // Output projection and gated residual.
        for qi in 0..low.tokens {
            let out_base = (f * low.tokens + qi) * c;
            for j in 0..c {
                let mut g = 0.0;
                for i in 0..c {
                    g += attended[qi * c + i] * block.wo[i * c + j];
                }
                fused[out_base + j] += block.beta * g;
            }
        }
    }

    Ok(FusionOutput {
        fused: TokenGrid {
            frames: low.frames,
            tokens: low.tokens,
            channels: low.channels,
            values: fused,
        },
        attention,
    })
}

fn project(tokens: &TokenGrid, frame: usize, w: &[f64], c: usize, out: &mut [f64]) {
    for t in 0..tokens.tokens {
        let x = tokens.token(frame, t);
        for j in 0..c {
            let mut acc = 0.0;
            for i in 0..c {
                acc += x[i] * w[i * c + j];
            }
            out[t * c + j] = acc;
        }
    }
}

/// Applies a sequence of fusion blocks, each refining the previous output
/// against the same high-resolution tokens.
pub fn cross_attend_fuse_stack(
    low: &TokenGrid,
    high: &TokenGrid,
    blocks: &[FusionBlock],
) -> Result<TokenGrid> {
    if blocks.is_empty() {
        return Err(Error::InvalidInput("fusion stack needs at least one block".into()));
    }
    let mut current = low.clone();
    for block in blocks {
        current = cross_attend_fuse(&current, high, block)?.fused;
    }
    Ok(current)
}

/// A default stack of two randomly initialized blocks with zero gates.
pub fn default_fusion_stack(channels: usize, heads: usize, seed: u64) -> Result<Vec<FusionBlock>> {
    Ok(vec![
        FusionBlock::new(channels, heads, seed)?,
        FusionBlock::new(channels, heads, seed.wrapping_add(1))?,
    ])
}

/// Central finite-difference derivative of a probe loss with respect to the
/// gate, evaluated at the block's current gate value (zero for a fresh
/// block). A nonzero result on generic inputs shows the zero-initialized
/// gate still receives gradient signal.
pub fn gate_sensitivity<F: Fn(&TokenGrid) -> f64>(
    low: &TokenGrid,
    high: &TokenGrid,
    block: &FusionBlock,
    probe: F,
) -> Result<f64> {
    let mut plus = block.clone();
    plus.beta = block.beta + GATE_PROBE_EPSILON;
    let mut minus = block.clone();
    minus.beta = block.beta - GATE_PROBE_EPSILON;
    let lp = probe(&cross_attend_fuse(low, high, &plus)?.fused);
    let lm = probe(&cross_attend_fuse(low, high, &minus)?.fused);
    Ok((lp - lm) / (2.0 * GATE_PROBE_EPSILON))
}

/// Mean squared token value; the default probe loss for gate checks.
pub fn probe_mean_square(tokens: &TokenGrid) -> f64 {
    let sq: Vec<f64> = tokens.values.iter().map(|v| v * v).collect();
    if sq.is_empty() {
        return 0.0;
    }
    pairwise_sum(&sq) / sq.len() as f64
}

// ---------------------------------------------------------------------------
// Compute-cost model
// ---------------------------------------------------------------------------

/// Per-frame compute cost of an architecture, in TFLOPs.
#[derive(Clone, Debug, PartialEq)]
pub struct CostProfile {
    pub label: String,
    pub per_frame_tflops: f64,
}

/// Fits the linear cost model from one measurement: published compute totals
/// grow exactly linearly in the frame count, so a single (frames, TFLOPs)
/// pair determines the per-frame cost.
pub fn fit_cost_profile(label: &str, frames: usize, tflops: f64) -> Result<CostProfile> {
    if frames == 0 {
        return Err(Error::InvalidInput("cost fit needs at least one frame".into()));
    }
    if !(tflops > 0.0 && tflops.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "cost fit needs positive finite TFLOPs, got {tflops}"
        )));
    }
    Ok(CostProfile { label: label.to_string(), per_frame_tflops: tflops / frames as f64 })
}

/// Predicted total compute for a frame count under a fitted profile.
pub fn predict_tflops(profile: &CostProfile, frames: usize) -> Result<f64> {
    if frames == 0 {
        return Err(Error::InvalidInput("cost prediction needs at least one frame".into()));
    }
    Ok(profile.per_frame_tflops * frames as f64)
}

/// Built-in profiles fitted from published 8-frame measurements:
/// `vggt518` (25.57 TFLOPs), `vggt1036` (101.99 TFLOPs) and `carve1036`
/// (52.97 TFLOPs).
pub fn builtin_cost_profile(name: &str) -> Result<CostProfile> {
    match name {
        "vggt518" => fit_cost_profile("vggt518", 8, 25.57),
        "vggt1036" => fit_cost_profile("vggt1036", 8, 101.99),
        "carve1036" => fit_cost_profile("carve1036", 8, 52.97),
        other => Err(Error::UnknownProfile(other.to_string())),
    }
}
