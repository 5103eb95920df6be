//! Forward and backward passes for every network in the system: U-Net
//! conditional generators, conditional patch discriminators, the frozen
//! perceptual feature network, the identity classifier and the embedding
//! discriminator used by the adversarial domain-adaptation baseline.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{
    global_avg_pool, global_avg_pool_backward, leaky_relu_backward_inplace, leaky_relu_inplace, relu_backward_inplace,
    relu_inplace, sigmoid_backward_inplace, sigmoid_inplace, tanh_backward_inplace, tanh_inplace, Conv2d, Init, Param,
    Parameterized, UpConv2x2,
};
use crate::rng;
use crate::tensor::{Real, Tensor};

/// Leaky-rectifier slope used by every discriminator.
pub const DISCRIMINATOR_SLOPE: f64 = 0.3;

/// Architecture hyper-parameters shared by all networks of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchConfig {
    pub image_height: usize,
    pub image_width: usize,
    pub image_channels: usize,
    /// Encoder widths are `base_width * (1, 2, 4, 8)`.
    pub base_width: usize,
    pub embedding_dim: usize,
    /// Patch discriminator widths are `disc_base_width * (1, 2, 4)`, plus a
    /// stride-1 block at the widest width.
    pub disc_base_width: usize,
    /// Perceptual network widths are `perceptual_base_width * (1, 1, 2, 2, 4, 4)`.
    pub perceptual_base_width: usize,
    pub embed_disc_hidden: [usize; 2],
    /// Seed of the frozen perceptual network (independent of the run seed).
    pub perceptual_seed: u64,
    /// Feed zeros instead of encoder activations into decoder skip inputs.
    pub zero_skips: bool,
    /// Initialize the stem and residual stages of both domain encoders from
    /// one shared stream; only the projection heads differ. Stands in for
    /// starting both encoders from the same pretrained backbone.
    pub shared_backbone_init: bool,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            image_height: 64,
            image_width: 64,
            image_channels: 3,
            base_width: 32,
            embedding_dim: 256,
            disc_base_width: 64,
            perceptual_base_width: 16,
            embed_disc_hidden: [128, 64],
            perceptual_seed: 0x5eed_fea7,
            zero_skips: false,
            shared_backbone_init: true,
        }
    }
}

impl ArchConfig {
    /// Smallest sensible configuration, used for gradient checks (< 2,000
    /// parameters per network).
    pub fn tiny() -> Self {
        Self {
            image_height: 8,
            image_width: 8,
            image_channels: 3,
            base_width: 1,
            embedding_dim: 3,
            disc_base_width: 2,
            perceptual_base_width: 1,
            embed_disc_hidden: [4, 3],
            perceptual_seed: 11,
            zero_skips: false,
            shared_backbone_init: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.image_height < 8 || self.image_height % 8 != 0 || self.image_width < 8 || self.image_width % 8 != 0 {
            return bad(format!(
                "image size {}x{} must be a positive multiple of 8",
                self.image_height, self.image_width
            ));
        }
        if self.image_channels == 0 {
            return bad("image_channels must be > 0".into());
        }
        if self.base_width == 0
            || self.embedding_dim == 0
            || self.disc_base_width == 0
            || self.perceptual_base_width == 0
        {
            return bad("network widths and embedding_dim must be > 0".into());
        }
        if self.embed_disc_hidden.contains(&0) {
            return bad("embed_disc_hidden widths must be > 0".into());
        }
        Ok(())
    }

    pub fn encoder_widths(&self) -> [usize; 4] {
        let b = self.base_width;
        [b, 2 * b, 4 * b, 8 * b]
    }

    pub fn bottleneck_hw(&self) -> (usize, usize) {
        (self.image_height / 8, self.image_width / 8)
    }

    /// Patch grid produced by the discriminator.
    pub fn patch_grid(&self) -> (usize, usize) {
        (self.image_height / 8, self.image_width / 8)
    }

    pub fn check_images<T: Real>(&self, x: &Tensor<T>) -> Result<()> {
        if x.channels != self.image_channels || x.height != self.image_height || x.width != self.image_width {
            return Err(Error::Shape(format!(
                "expected images {}x{}x{}, got {}x{}x{}",
                self.image_height, self.image_width, self.image_channels, x.height, x.width, x.channels
            )));
        }
        Ok(())
    }
}

/// How the decoder's skip inputs are filled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SkipPolicy {
    /// Use the skip activations carried in the [`EmbeddingOutput`].
    Source,
    /// Substitute zero tensors of the same shapes.
    Zero,
}

impl SkipPolicy {
    pub fn from_zero_skips(zero: bool) -> Self {
        if zero {
            SkipPolicy::Zero
        } else {
            SkipPolicy::Source
        }
    }
}

#[derive(Clone, Debug)]
struct ResStage<T> {
    conv1: Conv2d<T>,
    conv2: Conv2d<T>,
    shortcut: Conv2d<T>,
}

impl<T: Real> ResStage<T> {
    fn new(name: &str, cin: usize, cout: usize, rng: &mut impl Rng) -> Self {
        Self {
            conv1: Conv2d::new(&format!("{name}.conv1"), cin, cout, 3, 2, 1, Init::He(0.0), rng),
            conv2: Conv2d::new(&format!("{name}.conv2"), cout, cout, 3, 1, 1, Init::He(0.0), rng),
            shortcut: Conv2d::new(&format!("{name}.shortcut"), cin, cout, 1, 2, 0, Init::He(0.0), rng),
        }
    }

    /// Returns `(hidden, output)`.
    fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let mut h = self.conv1.forward(x)?;
        relu_inplace(&mut h);
        let mut y = self.conv2.forward(&h)?;
        y.add_assign(&self.shortcut.forward(x)?);
        relu_inplace(&mut y);
        Ok((h, y))
    }

    fn backward(
        &mut self,
        x: &Tensor<T>,
        h: &Tensor<T>,
        y: &Tensor<T>,
        mut dy: Tensor<T>,
        need_dx: bool,
    ) -> Option<Tensor<T>> {
        relu_backward_inplace(y, &mut dy);
        let dx_sc = self.shortcut.backward(x, &dy, need_dx);
        let mut dh = self.conv2.backward(h, &dy, true).expect("requested");
        relu_backward_inplace(h, &mut dh);
        let dx = self.conv1.backward(x, &dh, need_dx);
        match (dx, dx_sc) {
            (Some(mut a), Some(b)) => {
                a.add_assign(&b);
                Some(a)
            }
            _ => None,
        }
    }

    fn params(&self) -> Vec<&Param<T>> {
        [self.conv1.params(), self.conv2.params(), self.shortcut.params()].concat()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = self.conv1.params_mut();
        v.extend(self.conv2.params_mut());
        v.extend(self.shortcut.params_mut());
        v
    }
}

/// Output of the encoder half of a generator.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingOutput<T> {
    /// `[embedding_dim, N, 1, 1]`: the coupled embedding z(x).
    pub embedding: Tensor<T>,
    /// Stem, stage-1 and stage-2 activations (full, 1/2 and 1/4 resolution).
    pub skips: Vec<Tensor<T>>,
    /// Stage-3 activation before pooling (1/8 resolution).
    pub bottleneck_spatial: Tensor<T>,
}

impl<T: Real> EmbeddingOutput<T> {
    pub fn batch(&self) -> usize {
        self.embedding.batch
    }

    /// Embedding of batch item `n` as a plain vector.
    pub fn vector(&self, n: usize) -> Vec<T> {
        self.embedding.row(n)
    }

    pub fn vectors(&self) -> Vec<Vec<T>> {
        self.embedding.rows()
    }

    pub fn all_finite(&self) -> bool {
        self.embedding.all_finite() && self.bottleneck_spatial.all_finite() && self.skips.iter().all(Tensor::all_finite)
    }
}

/// Activations retained by [`Encoder::forward_train`] for backpropagation.
#[derive(Clone, Debug)]
pub struct EncoderCache<T> {
    input: Tensor<T>,
    hidden: Vec<Tensor<T>>,
    pooled: Tensor<T>,
}

/// Stream tag of the shared encoder backbone.
pub const BACKBONE_STREAM: &str = "encoder.backbone";

/// Residual convolutional encoder: stem, three stride-2 residual stages,
/// global average pooling and a fully connected projection.
#[derive(Clone, Debug)]
pub struct Encoder<T> {
    stem: Conv2d<T>,
    stages: Vec<ResStage<T>>,
    fc: Conv2d<T>,
    arch: ArchConfig,
}

impl<T: Real> Encoder<T> {
    /// Stem and stages draw from `backbone`, the projection from `head`.
    pub fn new(name: &str, arch: &ArchConfig, backbone: &mut impl Rng, head: &mut impl Rng) -> Self {
        let w = arch.encoder_widths();
        let rng = backbone;
        Self {
            stem: Conv2d::new(
                &format!("{name}.stem"),
                arch.image_channels,
                w[0],
                3,
                1,
                1,
                Init::He(0.0),
                rng,
            ),
            stages: (0..3)
                .map(|i| ResStage::new(&format!("{name}.stage{}", i + 1), w[i], w[i + 1], rng))
                .collect(),
            fc: Conv2d::linear(&format!("{name}.fc"), w[3], arch.embedding_dim, Init::He(1.0), head),
            arch: arch.clone(),
        }
    }

    /// Seeded initialization. The backbone comes from the stream shared by
    /// all encoders when `arch.shared_backbone_init` is set (else from
    /// `<name>`), the head from `<name>.head`.
    pub fn seeded(name: &str, arch: &ArchConfig, seed: u64) -> Self {
        let backbone_tag = if arch.shared_backbone_init { BACKBONE_STREAM } else { name };
        let mut backbone = rng::stream(seed, backbone_tag);
        let mut head = rng::stream(seed, &format!("{name}.head"));
        Self::new(name, arch, &mut backbone, &mut head)
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.arch
    }

    pub fn forward_train(&self, x: &Tensor<T>) -> Result<(EmbeddingOutput<T>, EncoderCache<T>)> {
        self.arch.check_images(x)?;
        let mut s0 = self.stem.forward(x)?;
        relu_inplace(&mut s0);
        let mut skips = vec![s0];
        let mut hidden = Vec::with_capacity(3);
        let mut current_is_last = None;
        for (i, stage) in self.stages.iter().enumerate() {
            let input = skips.last().expect("nonempty");
            let (h, y) = stage.forward(input)?;
            hidden.push(h);
            if i < 2 {
                skips.push(y);
            } else {
                current_is_last = Some(y);
            }
        }
        let bottleneck_spatial = current_is_last.expect("three stages");
        let pooled = global_avg_pool(&bottleneck_spatial);
        let embedding = self.fc.forward(&pooled)?;
        Ok((
            EmbeddingOutput {
                embedding,
                skips,
                bottleneck_spatial,
            },
            EncoderCache {
                input: x.clone(),
                hidden,
                pooled,
            },
        ))
    }

    pub fn encode(&self, x: &Tensor<T>) -> Result<EmbeddingOutput<T>> {
        self.forward_train(x).map(|(e, _)| e)
    }

    /// Backpropagates gradients arriving at the embedding and (optionally)
    /// at each skip output. Parameter gradients are accumulated.
    pub fn backward(
        &mut self,
        cache: &EncoderCache<T>,
        out: &EmbeddingOutput<T>,
        d_embedding: Option<&Tensor<T>>,
        d_skips: &[Option<Tensor<T>>],
    ) {
        let b = &out.bottleneck_spatial;
        let mut d_y = match d_embedding {
            Some(de) => {
                let d_pooled = self.fc.backward(&cache.pooled, de, true).expect("requested");
                global_avg_pool_backward(&d_pooled, b.height, b.width)
            }
            None => b.zeros_like(),
        };
        let outputs: Vec<&Tensor<T>> = vec![&out.skips[0], &out.skips[1], &out.skips[2], b];
        for i in (0..3).rev() {
            let x = outputs[i];
            let mut dx = self.stages[i]
                .backward(x, &cache.hidden[i], outputs[i + 1], d_y, true)
                .expect("requested");
            if let Some(Some(ds)) = d_skips.get(i) {
                dx.add_assign(ds);
            }
            d_y = dx;
        }
        relu_backward_inplace(&out.skips[0], &mut d_y);
        self.stem.backward(&cache.input, &d_y, false);
    }
}

impl<T: Real> Parameterized<T> for Encoder<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut v = self.stem.params();
        for s in &self.stages {
            v.extend(s.params());
        }
        v.extend(self.fc.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = self.stem.params_mut();
        for s in &mut self.stages {
            v.extend(s.params_mut());
        }
        v.extend(self.fc.params_mut());
        v
    }
}

#[derive(Clone, Debug)]
struct UpStage<T> {
    up: UpConv2x2<T>,
    conv: Conv2d<T>,
}

#[derive(Clone, Debug)]
pub struct DecoderCache<T> {
    embedding: Tensor<T>,
    seed: Tensor<T>,
    concat: Vec<Tensor<T>>,
    stage_out: Vec<Tensor<T>>,
    output: Tensor<T>,
    zero_skips: bool,
}

/// Mirror of the encoder: projects the embedding back to the bottleneck
/// grid, then three up-sampling stages that concatenate skip activations.
#[derive(Clone, Debug)]
pub struct Decoder<T> {
    seed: Conv2d<T>,
    stages: Vec<UpStage<T>>,
    out: Conv2d<T>,
    arch: ArchConfig,
}

impl<T: Real> Decoder<T> {
    pub fn new(name: &str, arch: &ArchConfig, rng: &mut impl Rng) -> Self {
        let w = arch.encoder_widths();
        let (bh, bw) = arch.bottleneck_hw();
        let stages = (0..3)
            .map(|i| {
                let cin = w[3 - i];
                let cout = w[2 - i];
                UpStage {
                    up: UpConv2x2::new(&format!("{name}.up{}", i + 1), cin, cout, Init::He(1.0), rng),
                    conv: Conv2d::new(
                        &format!("{name}.up{}.conv", i + 1),
                        2 * cout,
                        cout,
                        3,
                        1,
                        1,
                        Init::He(0.0),
                        rng,
                    ),
                }
            })
            .collect();
        Self {
            seed: Conv2d::linear(
                &format!("{name}.seed"),
                arch.embedding_dim,
                w[3] * bh * bw,
                Init::He(0.0),
                rng,
            ),
            stages,
            out: Conv2d::new(
                &format!("{name}.out"),
                w[0],
                arch.image_channels,
                3,
                1,
                1,
                Init::Std(0.01),
                rng,
            ),
            arch: arch.clone(),
        }
    }

    fn check_enc(&self, enc: &EmbeddingOutput<T>) -> Result<()> {
        let w = self.arch.encoder_widths();
        let n = enc.embedding.batch;
        if enc.embedding.channels != self.arch.embedding_dim || enc.embedding.plane() != 1 {
            return Err(Error::Shape(format!(
                "decoder expects embedding of length {}, got {:?}",
                self.arch.embedding_dim,
                enc.embedding.shape()
            )));
        }
        if enc.skips.len() != 3 {
            return Err(Error::Shape(format!(
                "decoder expects 3 skip tensors, got {}",
                enc.skips.len()
            )));
        }
        for (i, s) in enc.skips.iter().enumerate() {
            let want = [w[i], n, self.arch.image_height >> i, self.arch.image_width >> i];
            if s.shape() != want {
                return Err(Error::Shape(format!(
                    "skip {i} has shape {:?}, decoder stage expects {want:?}",
                    s.shape()
                )));
            }
        }
        Ok(())
    }

    pub fn forward_train(&self, enc: &EmbeddingOutput<T>, policy: SkipPolicy) -> Result<(Tensor<T>, DecoderCache<T>)> {
        self.check_enc(enc)?;
        let n = enc.embedding.batch;
        let (bh, bw) = self.arch.bottleneck_hw();
        let c3 = self.arch.encoder_widths()[3];
        let p = bh * bw;
        let projected = self.seed.forward(&enc.embedding)?;
        // [c3 * p, N, 1, 1] -> [c3, N, bh, bw]
        let mut seed = Tensor::zeros(c3, n, bh, bw);
        for c in 0..c3 {
            for pos in 0..p {
                for img in 0..n {
                    seed.data[(c * n + img) * p + pos] = projected.data[(c * p + pos) * n + img];
                }
            }
        }
        relu_inplace(&mut seed);
        let mut concat = Vec::with_capacity(3);
        let mut stage_out: Vec<Tensor<T>> = Vec::with_capacity(3);
        for (i, stage) in self.stages.iter().enumerate() {
            let input = if i == 0 { &seed } else { &stage_out[i - 1] };
            let u = stage.up.forward(input)?;
            let skip = &enc.skips[2 - i];
            let cat = match policy {
                SkipPolicy::Source => Tensor::concat_channels(&[&u, skip])?,
                SkipPolicy::Zero => Tensor::concat_channels(&[&u, &skip.zeros_like()])?,
            };
            let mut y = stage.conv.forward(&cat)?;
            relu_inplace(&mut y);
            concat.push(cat);
            stage_out.push(y);
        }
        let mut output = self.out.forward(stage_out.last().expect("three stages"))?;
        tanh_inplace(&mut output);
        Ok((
            output.clone(),
            DecoderCache {
                embedding: enc.embedding.clone(),
                seed,
                concat,
                stage_out,
                output,
                zero_skips: policy == SkipPolicy::Zero,
            },
        ))
    }

    pub fn decode(&self, enc: &EmbeddingOutput<T>, policy: SkipPolicy) -> Result<Tensor<T>> {
        self.forward_train(enc, policy).map(|(y, _)| y)
    }

    /// Returns `(d_embedding, d_skips)`; skip gradients are `None` under the
    /// zero-skip policy.
    pub fn backward(&mut self, cache: &DecoderCache<T>, d_output: &Tensor<T>) -> (Tensor<T>, Vec<Option<Tensor<T>>>) {
        let mut d = d_output.clone();
        tanh_backward_inplace(&cache.output, &mut d);
        let mut d_y = self.out.backward(&cache.stage_out[2], &d, true).expect("requested");
        let mut d_skips: Vec<Option<Tensor<T>>> = vec![None, None, None];
        for i in (0..3).rev() {
            relu_backward_inplace(&cache.stage_out[i], &mut d_y);
            let d_cat = self.stages[i]
                .conv
                .backward(&cache.concat[i], &d_y, true)
                .expect("requested");
            let u_channels = self.stages[i].up.out_channels;
            let mut parts = d_cat.split_channels(&[u_channels, d_cat.channels - u_channels]);
            let d_skip = parts.pop().expect("two parts");
            let d_u = parts.pop().expect("two parts");
            if !cache.zero_skips {
                d_skips[2 - i] = Some(d_skip);
            }
            let up_input = if i == 0 { &cache.seed } else { &cache.stage_out[i - 1] };
            d_y = self.stages[i].up.backward(up_input, &d_u, true).expect("requested");
        }
        relu_backward_inplace(&cache.seed, &mut d_y);
        let (c3, n, p) = (cache.seed.channels, cache.seed.batch, cache.seed.plane());
        let mut d_proj = Tensor::zeros(c3 * p, n, 1, 1);
        for c in 0..c3 {
            for pos in 0..p {
                for img in 0..n {
                    d_proj.data[(c * p + pos) * n + img] = d_y.data[(c * n + img) * p + pos];
                }
            }
        }
        let d_emb = self.seed.backward(&cache.embedding, &d_proj, true).expect("requested");
        (d_emb, d_skips)
    }
}

impl<T: Real> Parameterized<T> for Decoder<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut v = self.seed.params();
        for s in &self.stages {
            v.extend(s.up.params());
            v.extend(s.conv.params());
        }
        v.extend(self.out.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = self.seed.params_mut();
        for s in &mut self.stages {
            v.extend(s.up.params_mut());
            v.extend(s.conv.params_mut());
        }
        v.extend(self.out.params_mut());
        v
    }
}

/// Everything needed to backpropagate one generator pass.
#[derive(Clone, Debug)]
pub struct GeneratorCache<T> {
    pub enc: EmbeddingOutput<T>,
    encoder: EncoderCache<T>,
    decoder: DecoderCache<T>,
}

/// U-Net conditional generator: encoder, decoder and a skip policy.
#[derive(Clone, Debug)]
pub struct Generator<T> {
    pub encoder: Encoder<T>,
    pub decoder: Decoder<T>,
}

impl<T: Real> Generator<T> {
    /// Encoder as in [`Encoder::seeded`], decoder from the stream `<name>.decoder`.
    pub fn new(name: &str, arch: &ArchConfig, seed: u64) -> Self {
        let mut dec_rng = rng::stream(seed, &format!("{name}.decoder"));
        Self {
            encoder: Encoder::seeded(&format!("{name}.encoder"), arch, seed),
            decoder: Decoder::new(&format!("{name}.decoder"), arch, &mut dec_rng),
        }
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.encoder.arch
    }

    pub fn skip_policy(&self) -> SkipPolicy {
        SkipPolicy::from_zero_skips(self.encoder.arch.zero_skips)
    }

    pub fn forward_train(&self, x: &Tensor<T>) -> Result<(Tensor<T>, GeneratorCache<T>)> {
        let (enc, encoder) = self.encoder.forward_train(x)?;
        let (recon, decoder) = self.decoder.forward_train(&enc, self.skip_policy())?;
        Ok((recon, GeneratorCache { enc, encoder, decoder }))
    }

    /// Full reconstruction pass: `(reconstruction, encoder output)`.
    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, EmbeddingOutput<T>)> {
        self.forward_train(x).map(|(r, c)| (r, c.enc))
    }

    pub fn encode(&self, x: &Tensor<T>) -> Result<EmbeddingOutput<T>> {
        self.encoder.encode(x)
    }

    pub fn decode(&self, enc: &EmbeddingOutput<T>, policy: SkipPolicy) -> Result<Tensor<T>> {
        self.decoder.decode(enc, policy)
    }

    /// Backpropagates a reconstruction gradient plus an extra gradient on the
    /// embedding (e.g. from the coupling loss). Either may be absent.
    pub fn backward(
        &mut self,
        cache: &GeneratorCache<T>,
        d_recon: Option<&Tensor<T>>,
        d_embedding: Option<&Tensor<T>>,
    ) {
        let (d_emb, d_skips) = match d_recon {
            Some(dr) => {
                let (mut de, ds) = self.decoder.backward(&cache.decoder, dr);
                if let Some(extra) = d_embedding {
                    de.add_assign(extra);
                }
                (Some(de), ds)
            }
            None => (d_embedding.cloned(), vec![None, None, None]),
        };
        if d_emb.is_none() && d_skips.iter().all(Option::is_none) {
            return;
        }
        self.encoder
            .backward(&cache.encoder, &cache.enc, d_emb.as_ref(), &d_skips);
    }
}

impl<T: Real> Parameterized<T> for Generator<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut v = self.encoder.params();
        v.extend(self.decoder.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = self.encoder.params_mut();
        v.extend(self.decoder.params_mut());
        v
    }
}

#[derive(Clone, Debug)]
pub struct DiscriminatorCache<T> {
    activations: Vec<Tensor<T>>,
    pub output: Tensor<T>,
}

/// Conditional patch discriminator: sees `(condition, candidate)` stacked
/// along channels and emits one probability per receptive-field patch.
#[derive(Clone, Debug)]
pub struct PatchDiscriminator<T> {
    blocks: Vec<Conv2d<T>>,
    out: Conv2d<T>,
    arch: ArchConfig,
}

impl<T: Real> PatchDiscriminator<T> {
    pub fn new(name: &str, arch: &ArchConfig, seed: u64) -> Self {
        let mut r = rng::stream(seed, name);
        let b = arch.disc_base_width;
        let widths = [2 * arch.image_channels, b, 2 * b, 4 * b, 4 * b];
        let strides = [2, 2, 2, 1];
        let blocks = (0..4)
            .map(|i| {
                Conv2d::new(
                    &format!("{name}.block{}", i + 1),
                    widths[i],
                    widths[i + 1],
                    3,
                    strides[i],
                    1,
                    Init::He(DISCRIMINATOR_SLOPE),
                    &mut r,
                )
            })
            .collect();
        Self {
            blocks,
            out: Conv2d::new(&format!("{name}.out"), 4 * b, 1, 3, 1, 1, Init::He(1.0), &mut r),
            arch: arch.clone(),
        }
    }

    pub fn forward_train(&self, condition: &Tensor<T>, candidate: &Tensor<T>) -> Result<DiscriminatorCache<T>> {
        self.arch.check_images(condition)?;
        self.arch.check_images(candidate)?;
        condition.check_shape(candidate, "discriminator condition/candidate")?;
        let mut activations = vec![Tensor::concat_channels(&[condition, candidate])?];
        for block in &self.blocks {
            let mut y = block.forward(activations.last().expect("nonempty"))?;
            leaky_relu_inplace(&mut y, DISCRIMINATOR_SLOPE);
            activations.push(y);
        }
        let mut output = self.out.forward(activations.last().expect("nonempty"))?;
        sigmoid_inplace(&mut output);
        Ok(DiscriminatorCache { activations, output })
    }

    /// Patch probabilities, `[1, N, H/8, W/8]`.
    pub fn forward(&self, condition: &Tensor<T>, candidate: &Tensor<T>) -> Result<Tensor<T>> {
        self.forward_train(condition, candidate).map(|c| c.output)
    }

    /// Backpropagates a gradient on the patch probabilities.
    ///
    /// With `update_params` parameter gradients are accumulated; with
    /// `need_candidate_grad` the gradient with respect to the candidate
    /// image is returned.
    pub fn backward(
        &mut self,
        cache: &DiscriminatorCache<T>,
        d_output: &Tensor<T>,
        update_params: bool,
        need_candidate_grad: bool,
    ) -> Option<Tensor<T>> {
        let mut d = d_output.clone();
        sigmoid_backward_inplace(&cache.output, &mut d);
        let last = cache.activations.len() - 1;
        let mut d_act = if update_params {
            self.out
                .backward(&cache.activations[last], &d, true)
                .expect("requested")
        } else {
            let a = &cache.activations[last];
            self.out.input_grad(a.height, a.width, &d)
        };
        for i in (0..self.blocks.len()).rev() {
            leaky_relu_backward_inplace(&cache.activations[i + 1], &mut d_act, DISCRIMINATOR_SLOPE);
            let x = &cache.activations[i];
            let need_dx = i > 0 || need_candidate_grad;
            let dx = if update_params {
                self.blocks[i].backward(x, &d_act, need_dx)
            } else {
                need_dx.then(|| self.blocks[i].input_grad(x.height, x.width, &d_act))
            };
            match dx {
                Some(dx) => d_act = dx,
                None => return None,
            }
        }
        let c = d_act.channels / 2;
        d_act.split_channels(&[c, c]).pop()
    }
}

impl<T: Real> Parameterized<T> for PatchDiscriminator<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut v: Vec<&Param<T>> = self.blocks.iter().flat_map(Conv2d::params).collect();
        v.extend(self.out.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v: Vec<&mut Param<T>> = self.blocks.iter_mut().flat_map(Conv2d::params_mut).collect();
        v.extend(self.out.params_mut());
        v
    }
}

#[derive(Clone, Debug)]
pub struct PerceptualCache<T> {
    activations: Vec<Tensor<T>>,
}

impl<T: Real> PerceptualCache<T> {
    pub fn features(&self) -> &Tensor<T> {
        self.activations.last().expect("nonempty")
    }
}

/// Frozen convolutional feature extractor V(.). Weights never change after
/// construction; only input gradients are ever computed.
#[derive(Clone, Debug)]
pub struct PerceptualNet<T> {
    convs: Vec<Conv2d<T>>,
    arch: ArchConfig,
}

impl<T: Real> PerceptualNet<T> {
    /// Seeded random He-initialized weights (see [`ArchConfig::perceptual_seed`]).
    pub fn new(arch: &ArchConfig) -> Self {
        let mut r = rng::stream(arch.perceptual_seed, "perceptual");
        let b = arch.perceptual_base_width;
        let widths = [arch.image_channels, b, b, 2 * b, 2 * b, 4 * b, 4 * b];
        let strides = [1, 1, 2, 1, 2, 1];
        let convs = (0..6)
            .map(|i| {
                Conv2d::new(
                    &format!("perceptual.conv{}", i + 1),
                    widths[i],
                    widths[i + 1],
                    3,
                    strides[i],
                    1,
                    Init::He(0.0),
                    &mut r,
                )
            })
            .collect();
        Self {
            convs,
            arch: arch.clone(),
        }
    }

    /// Replaces the weights with externally supplied ones (e.g. pretrained),
    /// matched by parameter name and shape.
    pub fn load_weights(&mut self, named: &[(String, Vec<usize>, Vec<T>)]) -> Result<()> {
        for p in self.params_mut() {
            let (_, shape, data) = named
                .iter()
                .find(|(n, _, _)| *n == p.name)
                .ok_or_else(|| Error::Checkpoint(format!("perceptual weights missing {}", p.name)))?;
            if *shape != p.shape || data.len() != p.value.len() {
                return Err(Error::Shape(format!(
                    "perceptual weight {} has shape {shape:?}, expected {:?}",
                    p.name, p.shape
                )));
            }
            p.value.copy_from_slice(data);
        }
        Ok(())
    }

    /// `(C_p, H_p, W_p)` of the tapped activation.
    pub fn feature_shape(&self) -> (usize, usize, usize) {
        let mut h = self.arch.image_height;
        let mut w = self.arch.image_width;
        for c in &self.convs {
            (h, w) = c.output_size(h, w);
        }
        (self.convs.last().expect("nonempty").out_channels, h, w)
    }

    pub fn forward_train(&self, x: &Tensor<T>) -> Result<PerceptualCache<T>> {
        self.arch.check_images(x)?;
        let mut activations = Vec::with_capacity(self.convs.len() + 1);
        activations.push(x.clone());
        for conv in &self.convs {
            let mut y = conv.forward(activations.last().expect("nonempty"))?;
            relu_inplace(&mut y);
            activations.push(y);
        }
        Ok(PerceptualCache { activations })
    }

    pub fn features(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut cache = self.forward_train(x)?;
        Ok(cache.activations.pop().expect("nonempty"))
    }

    /// Gradient of a feature-space loss with respect to the input image.
    pub fn input_grad(&self, cache: &PerceptualCache<T>, d_features: &Tensor<T>) -> Tensor<T> {
        let mut d = d_features.clone();
        for i in (0..self.convs.len()).rev() {
            relu_backward_inplace(&cache.activations[i + 1], &mut d);
            let x = &cache.activations[i];
            d = self.convs[i].input_grad(x.height, x.width, &d);
        }
        d
    }
}

impl<T: Real> Parameterized<T> for PerceptualNet<T> {
    fn params(&self) -> Vec<&Param<T>> {
        self.convs.iter().flat_map(Conv2d::params).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.convs.iter_mut().flat_map(Conv2d::params_mut).collect()
    }
}

/// Linear identity classifier followed by a softmax.
#[derive(Clone, Debug)]
pub struct Classifier<T> {
    pub linear: Conv2d<T>,
}

#[derive(Clone, Debug)]
pub struct ClassifierCache<T> {
    input: Tensor<T>,
    pub probs: Tensor<T>,
}

pub fn softmax_columns<T: Real>(logits: &Tensor<T>) -> Tensor<T> {
    let (k, n) = (logits.channels, logits.batch);
    let mut probs = logits.clone();
    for i in 0..n {
        let max = (0..k)
            .map(|c| logits.data[c * n + i])
            .fold(T::from_f64(f64::NEG_INFINITY), T::max);
        let mut sum = T::zero();
        for c in 0..k {
            let e = (logits.data[c * n + i] - max).exp();
            probs.data[c * n + i] = e;
            sum += e;
        }
        for c in 0..k {
            probs.data[c * n + i] = probs.data[c * n + i] / sum;
        }
    }
    probs
}

impl<T: Real> Classifier<T> {
    pub fn new(name: &str, embedding_dim: usize, num_classes: usize, seed: u64) -> Self {
        let mut r = rng::stream(seed, name);
        Self {
            linear: Conv2d::linear(name, embedding_dim, num_classes, Init::He(1.0), &mut r),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.linear.out_channels
    }

    pub fn forward_train(&self, embedding: &Tensor<T>) -> Result<ClassifierCache<T>> {
        if embedding.channels != self.linear.in_channels || embedding.plane() != 1 {
            return Err(Error::Shape(format!(
                "classifier expects embeddings of length {}, got {:?}",
                self.linear.in_channels,
                embedding.shape()
            )));
        }
        let logits = self.linear.forward(embedding)?;
        Ok(ClassifierCache {
            input: embedding.clone(),
            probs: softmax_columns(&logits),
        })
    }

    /// `[K, N, 1, 1]` class probabilities.
    pub fn classify(&self, embedding: &Tensor<T>) -> Result<Tensor<T>> {
        self.forward_train(embedding).map(|c| c.probs)
    }

    /// Backpropagates a gradient on the probabilities; returns the
    /// embedding gradient when requested.
    pub fn backward(
        &mut self,
        cache: &ClassifierCache<T>,
        d_probs: &Tensor<T>,
        update_params: bool,
        need_input: bool,
    ) -> Option<Tensor<T>> {
        let (k, n) = (cache.probs.channels, cache.probs.batch);
        let mut d_logits = Tensor::zeros(k, n, 1, 1);
        for i in 0..n {
            let dot: T = (0..k)
                .map(|c| cache.probs.data[c * n + i] * d_probs.data[c * n + i])
                .sum();
            for c in 0..k {
                let p = cache.probs.data[c * n + i];
                d_logits.data[c * n + i] = p * (d_probs.data[c * n + i] - dot);
            }
        }
        if update_params {
            self.linear.backward(&cache.input, &d_logits, need_input)
        } else {
            need_input.then(|| self.linear.input_grad(1, 1, &d_logits))
        }
    }
}

impl<T: Real> Parameterized<T> for Classifier<T> {
    fn params(&self) -> Vec<&Param<T>> {
        self.linear.params()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.linear.params_mut()
    }
}

/// Two-hidden-layer perceptron over embeddings with a sigmoid output:
/// predicts whether an embedding came from the frontal (source) encoder.
#[derive(Clone, Debug)]
pub struct EmbeddingDiscriminator<T> {
    layers: Vec<Conv2d<T>>,
}

#[derive(Clone, Debug)]
pub struct EmbeddingDiscriminatorCache<T> {
    activations: Vec<Tensor<T>>,
    pub output: Tensor<T>,
}

impl<T: Real> EmbeddingDiscriminator<T> {
    pub fn new(name: &str, arch: &ArchConfig, seed: u64) -> Self {
        let mut r = rng::stream(seed, name);
        let [h1, h2] = arch.embed_disc_hidden;
        let dims = [arch.embedding_dim, h1, h2, 1];
        let layers = (0..3)
            .map(|i| {
                let init = if i < 2 {
                    Init::He(DISCRIMINATOR_SLOPE)
                } else {
                    Init::He(1.0)
                };
                Conv2d::linear(&format!("{name}.fc{}", i + 1), dims[i], dims[i + 1], init, &mut r)
            })
            .collect();
        Self { layers }
    }

    pub fn forward_train(&self, embedding: &Tensor<T>) -> Result<EmbeddingDiscriminatorCache<T>> {
        let mut activations = vec![embedding.clone()];
        for (i, layer) in self.layers.iter().enumerate() {
            let mut y = layer.forward(activations.last().expect("nonempty"))?;
            if i < 2 {
                leaky_relu_inplace(&mut y, DISCRIMINATOR_SLOPE);
                activations.push(y);
            } else {
                sigmoid_inplace(&mut y);
                return Ok(EmbeddingDiscriminatorCache { activations, output: y });
            }
        }
        unreachable!("three layers")
    }

    /// `[1, N, 1, 1]` probabilities of "frontal".
    pub fn forward(&self, embedding: &Tensor<T>) -> Result<Tensor<T>> {
        self.forward_train(embedding).map(|c| c.output)
    }

    pub fn backward(
        &mut self,
        cache: &EmbeddingDiscriminatorCache<T>,
        d_output: &Tensor<T>,
        update_params: bool,
        need_input: bool,
    ) -> Option<Tensor<T>> {
        let mut d = d_output.clone();
        sigmoid_backward_inplace(&cache.output, &mut d);
        for i in (0..3).rev() {
            if i < 2 {
                leaky_relu_backward_inplace(&cache.activations[i + 1], &mut d, DISCRIMINATOR_SLOPE);
            }
            let x = &cache.activations[i];
            let need_dx = i > 0 || need_input;
            let dx = if update_params {
                self.layers[i].backward(x, &d, need_dx)
            } else {
                need_dx.then(|| self.layers[i].input_grad(1, 1, &d))
            };
            match dx {
                Some(dx) => d = dx,
                None => return None,
            }
        }
        Some(d)
    }
}

impl<T: Real> Parameterized<T> for EmbeddingDiscriminator<T> {
    fn params(&self) -> Vec<&Param<T>> {
        self.layers.iter().flat_map(Conv2d::params).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.layers.iter_mut().flat_map(Conv2d::params_mut).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Uniform};

    fn random_images(arch: &ArchConfig, n: usize, seed: u64) -> Tensor<f32> {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let u = Uniform::new_inclusive(-1.0f32, 1.0).unwrap();
        let len = arch.image_channels * n * arch.image_height * arch.image_width;
        Tensor::from_vec(
            arch.image_channels,
            n,
            arch.image_height,
            arch.image_width,
            (0..len).map(|_| u.sample(&mut r)).collect(),
        )
        .unwrap()
    }

    fn small_arch() -> ArchConfig {
        ArchConfig {
            image_height: 16,
            image_width: 16,
            base_width: 4,
            embedding_dim: 8,
            disc_base_width: 4,
            perceptual_base_width: 2,
            ..ArchConfig::default()
        }
    }

    #[test]
    fn default_generator_shapes() {
        let arch = ArchConfig::default();
        let g = Generator::<f32>::new("g_pr", &arch, 1);
        let x = random_images(&arch, 2, 1);
        let (recon, enc) = g.forward(&x).unwrap();
        assert_eq!(recon.shape(), x.shape());
        assert_eq!(enc.embedding.shape(), [256, 2, 1, 1]);
        assert_eq!(enc.bottleneck_spatial.shape(), [256, 2, 8, 8]);
        assert_eq!(
            enc.skips.iter().map(|s| s.shape()).collect::<Vec<_>>(),
            vec![[32, 2, 64, 64], [64, 2, 32, 32], [128, 2, 16, 16]]
        );
        assert!(recon.data.iter().all(|v| v.abs() < 1.0));
        assert!(enc.all_finite());
    }

    #[test]
    fn decode_of_encode_equals_forward() {
        let arch = small_arch();
        let g = Generator::<f32>::new("g", &arch, 3);
        let x = random_images(&arch, 3, 2);
        let (recon, enc) = g.forward(&x).unwrap();
        assert_eq!(g.encode(&x).unwrap(), enc);
        assert_eq!(g.decode(&enc, SkipPolicy::Source).unwrap(), recon);
        let zeroed = g.decode(&enc, SkipPolicy::Zero).unwrap();
        assert_eq!(zeroed.shape(), recon.shape());
        assert_ne!(zeroed, recon);
    }

    #[test]
    fn cross_decoding_accepts_other_domain_encoding() {
        let arch = small_arch();
        let g_pr = Generator::<f32>::new("g_pr", &arch, 3);
        let g_fr = Generator::<f32>::new("g_fr", &arch, 3);
        let x = random_images(&arch, 2, 5);
        let out = g_fr.decode(&g_pr.encode(&x).unwrap(), SkipPolicy::Source).unwrap();
        assert_eq!(out.shape(), x.shape());
        assert!(out.data.iter().all(|v| v.is_finite() && v.abs() < 1.0));
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let arch = small_arch();
        let g = Generator::<f32>::new("g", &arch, 3);
        let wrong = Tensor::<f32>::zeros(3, 1, 8, 8);
        assert!(matches!(g.forward(&wrong), Err(Error::Shape(_))));
        let other = ArchConfig {
            embedding_dim: 5,
            ..small_arch()
        };
        let enc = Generator::<f32>::new("h", &other, 3)
            .encode(&random_images(&arch, 1, 0))
            .unwrap();
        assert!(g.decode(&enc, SkipPolicy::Source).is_err());
    }

    #[test]
    fn discriminator_grid_is_eighth_resolution() {
        let arch = ArchConfig::default();
        let d = PatchDiscriminator::<f32>::new("d_fr", &arch, 4);
        let x = random_images(&arch, 2, 7);
        let y = random_images(&arch, 2, 8);
        let out = d.forward(&x, &y).unwrap();
        assert_eq!(out.shape(), [1, 2, 8, 8]);
        assert!(out.data.iter().all(|&p| p > 0.0 && p < 1.0));
        let swapped = d.forward(&y, &x).unwrap();
        assert_ne!(out, swapped);
    }

    #[test]
    fn perceptual_features_are_frozen_and_finite() {
        let arch = ArchConfig::default();
        let v = PerceptualNet::<f32>::new(&arch);
        assert_eq!(v.feature_shape(), (64, 16, 16));
        let x = random_images(&arch, 1, 3);
        assert_eq!(v.features(&x).unwrap(), v.features(&x).unwrap());
        for fill in [-1.0f32, 1.0] {
            let t = Tensor::from_vec(3, 1, 64, 64, vec![fill; 3 * 64 * 64]).unwrap();
            let f = v.features(&t).unwrap();
            assert_eq!(f.shape(), [64, 1, 16, 16]);
            assert!(f.all_finite());
        }
        assert_eq!(PerceptualNet::<f32>::new(&arch).checksum(), v.checksum());
    }

    #[test]
    fn classifier_outputs_probabilities() {
        let mut c = Classifier::<f64>::new("cls", 4, 5, 1);
        let emb = Tensor::from_rows(&[vec![0.3, -1.0, 2.0, 0.5], vec![10.0, 20.0, -30.0, 0.0]]).unwrap();
        let p = c.classify(&emb).unwrap();
        for row in p.rows() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        c.linear.weight.value.iter_mut().for_each(|w| *w = 0.0);
        let p = c.classify(&emb).unwrap();
        assert!(p.data.iter().all(|&v| (v - 0.2).abs() < 1e-15));
    }

    #[test]
    fn softmax_argmax_is_shift_invariant() {
        let logits = Tensor::from_rows(&[vec![0.1f64, 3.0, -2.0]]).unwrap();
        let shifted = logits.map(|v| v + 100.0);
        let a = softmax_columns(&logits);
        let b = softmax_columns(&shifted);
        for (x, y) in a.data.iter().zip(&b.data) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn distinct_inputs_give_distinct_embeddings() {
        let arch = small_arch();
        let g = Generator::<f32>::new("g", &arch, 5);
        let x = random_images(&arch, 100, 11);
        let y = random_images(&arch, 100, 12);
        let ex = g.encode(&x).unwrap().vectors();
        let ey = g.encode(&y).unwrap().vectors();
        assert!(ex.iter().zip(&ey).all(|(a, b)| a != b));
        let zero = g.encode(&Tensor::zeros(3, 1, 16, 16)).unwrap();
        assert!(zero.all_finite());
    }

    #[test]
    fn tiny_arch_fits_gradient_check_budget() {
        let arch = ArchConfig::tiny();
        assert!(Generator::<f64>::new("g", &arch, 0).num_params() <= 2000);
        assert!(PatchDiscriminator::<f64>::new("d", &arch, 0).num_params() <= 2000);
        assert!(EmbeddingDiscriminator::<f64>::new("e", &arch, 0).num_params() <= 2000);
    }
}
