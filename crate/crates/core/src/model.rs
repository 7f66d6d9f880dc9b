//! The WDRN encoder-decoder.
//!
//! Dataflow for `L` levels (wavelet variant):
//!
//! ```text
//! x -> DWT -> space_to_depth(2) -> enc.L1 -> e1
//!   -> DWT -> enc.L2 -> e2 ... -> DWT -> enc.L{L} -> e{L}
//! e{L} -> IDWT + e{L-1} -> dec.D1 -> IDWT + e{L-2} -> dec.D2 ... -> dec.D{L-1}
//!   -> depth_to_space(2) -> out.conv (4 * C_in filters) -> IDWT -> + x
//! ```
//!
//! The strided variant swaps every DWT for a trainable stride-2 convolution
//! (`*.down`, channels x4) and every IDWT for a trainable 2x2 stride-2
//! transposed convolution (`*.up`, channels / 4). Every conv inside a block is
//! followed by ReLU; `out.conv` is not, and it starts at zero so a fresh model
//! is the identity map.

use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Graph, Padding, Real, Shape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DomainVariant {
    Wavelet,
    Strided,
}

impl DomainVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            DomainVariant::Wavelet => "wavelet",
            DomainVariant::Strided => "strided",
        }
    }
}

impl fmt::Display for DomainVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DomainVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "wavelet" => Ok(DomainVariant::Wavelet),
            "strided" | "pixel" => Ok(DomainVariant::Strided),
            other => Err(Error::Config(format!("unknown domain variant `{other}`"))),
        }
    }
}

/// A stack of conv + ReLU layers of uniform width. `last_filters` widens (or
/// narrows) only the final layer of the block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvBlockSpec {
    pub layer_count: usize,
    pub filters: usize,
    pub kernel: usize,
    pub last_filters: Option<usize>,
}

impl ConvBlockSpec {
    pub const fn new(layer_count: usize, filters: usize) -> Self {
        ConvBlockSpec {
            layer_count,
            filters,
            kernel: 3,
            last_filters: None,
        }
    }

    pub const fn widened(mut self, last: usize) -> Self {
        self.last_filters = Some(last);
        self
    }

    fn out_filters(&self) -> usize {
        self.last_filters.unwrap_or(self.filters)
    }
}

/// Positive rational multiplier applied to every block filter count.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WidthScale {
    pub num: u32,
    pub den: u32,
}

impl WidthScale {
    pub const FULL: WidthScale = WidthScale { num: 1, den: 1 };

    pub fn new(num: u32, den: u32) -> Result<Self> {
        if num == 0 || den == 0 {
            return Err(Error::Config(format!("width scale {num}/{den} must be positive")));
        }
        Ok(WidthScale { num, den })
    }

    /// `round(filters * num / den)`, at least 1.
    pub fn apply(&self, filters: usize) -> usize {
        let n = filters as u64 * self.num as u64;
        let d = self.den as u64;
        (((2 * n + d) / (2 * d)) as usize).max(1)
    }
}

impl fmt::Display for WidthScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for WidthScale {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("width scale `{s}` is not of the form N or N/D"));
        match s.trim().split_once('/') {
            Some((n, d)) => WidthScale::new(n.trim().parse().map_err(|_| bad())?, d.trim().parse().map_err(|_| bad())?),
            None => WidthScale::new(s.trim().parse().map_err(|_| bad())?, 1),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WdrnConfig {
    pub levels: usize,
    pub encoder_blocks: Vec<ConvBlockSpec>,
    pub decoder_blocks: Vec<ConvBlockSpec>,
    pub domain_variant: DomainVariant,
    pub width_scale: WidthScale,
    pub input_channels: usize,
}

impl Default for WdrnConfig {
    fn default() -> Self {
        Self::with_levels(3).expect("3 levels is supported")
    }
}

impl WdrnConfig {
    /// Block layout for 2, 3 or 4 decomposition levels. Level 3 is the
    /// published network (with the level-2 encoder at 64 filters and the last
    /// decoder block widened to 64 so the skip additions and the 16-channel
    /// depth-to-space output line up); level 2 drops the deepest encoder and
    /// decoder blocks; level 4 appends a 7-layer block of doubled width whose
    /// last layer is widened to 4x the level-3 width, and a 4-layer decoder
    /// block at the level-3 width.
    pub fn with_levels(levels: usize) -> Result<Self> {
        let l1 = ConvBlockSpec::new(4, 16);
        let l2 = ConvBlockSpec::new(4, 64);
        let l3 = ConvBlockSpec::new(7, 256);
        let l4 = ConvBlockSpec::new(7, 512).widened(1024);
        let d_l3 = ConvBlockSpec::new(4, 256);
        let d_l2 = ConvBlockSpec::new(4, 64);
        let d_l1 = ConvBlockSpec::new(4, 16).widened(64);
        let (encoder_blocks, decoder_blocks) = match levels {
            2 => (vec![l1, l2], vec![d_l1]),
            3 => (vec![l1, l2, l3], vec![d_l2, d_l1]),
            4 => (vec![l1, l2, l3, l4], vec![d_l3, d_l2, d_l1]),
            n => return Err(Error::Config(format!("levels must be 2, 3 or 4, got {n}"))),
        };
        Ok(WdrnConfig {
            levels,
            encoder_blocks,
            decoder_blocks,
            domain_variant: DomainVariant::Wavelet,
            width_scale: WidthScale::FULL,
            input_channels: 3,
        })
    }

    pub fn scaled(mut self, scale: WidthScale) -> Self {
        self.width_scale = scale;
        self
    }

    pub fn variant(mut self, v: DomainVariant) -> Self {
        self.domain_variant = v;
        self
    }

    pub fn with_kernel(mut self, k: usize) -> Self {
        for b in self.encoder_blocks.iter_mut().chain(self.decoder_blocks.iter_mut()) {
            b.kernel = k;
        }
        self
    }

    /// Spatial extents must be multiples of this.
    pub fn divisor(&self) -> usize {
        1 << (self.levels + 1)
    }

    pub fn output_filters(&self) -> usize {
        4 * self.input_channels
    }

    /// Resolved layer list; fails on any inconsistent channel count.
    pub fn layers(&self) -> Result<Vec<LayerSpec>> {
        let cfg_err = |m: String| Error::Config(m);
        if !(2..=4).contains(&self.levels) {
            return Err(cfg_err(format!("levels must be 2, 3 or 4, got {}", self.levels)));
        }
        if self.encoder_blocks.len() != self.levels || self.decoder_blocks.len() + 1 != self.levels {
            return Err(cfg_err(format!(
                "{} levels need {} encoder and {} decoder blocks, got {} and {}",
                self.levels,
                self.levels,
                self.levels - 1,
                self.encoder_blocks.len(),
                self.decoder_blocks.len()
            )));
        }
        if self.input_channels == 0 {
            return Err(cfg_err("input_channels must be >= 1".into()));
        }
        let strided = self.domain_variant == DomainVariant::Strided;
        let mut layers = Vec::new();
        let mut c = self.input_channels;

        if strided {
            layers.push(LayerSpec::down("entry.down", 3, c));
        }
        c = c * 4 * 4;

        let mut skips = Vec::with_capacity(self.levels);
        for (l, block) in self.encoder_blocks.iter().enumerate() {
            let name = format!("enc.L{}", l + 1);
            if l > 0 {
                if strided {
                    layers.push(LayerSpec::down(&format!("{name}.down"), block.kernel, c));
                }
                c *= 4;
            }
            c = self.push_block(&mut layers, &name, block, c)?;
            skips.push(c);
        }
        for (k, block) in self.decoder_blocks.iter().enumerate() {
            let name = format!("dec.D{}", k + 1);
            if !c.is_multiple_of(4) {
                return Err(cfg_err(format!("{name}: {c} channels cannot be split into 4 sub-bands")));
            }
            if strided {
                layers.push(LayerSpec::up(&format!("{name}.up"), c));
            }
            c /= 4;
            let skip = skips[self.levels - 2 - k];
            if c != skip {
                return Err(cfg_err(format!(
                    "{name}: upsampled decoder features have {c} channels but encoder level {} outputs {skip}",
                    self.levels - 1 - k
                )));
            }
            c = self.push_block(&mut layers, &name, block, c)?;
        }
        if !c.is_multiple_of(4) {
            return Err(cfg_err(format!("depth_to_space needs a multiple of 4 channels, got {c}")));
        }
        c /= 4;
        let out_k = self.decoder_blocks.last().map_or(3, |b| b.kernel);
        layers.push(LayerSpec {
            name: "out.conv".into(),
            kind: LayerKind::Output,
            kernel: out_k,
            cin: c,
            cout: self.output_filters(),
        });
        if strided {
            layers.push(LayerSpec::up("out.up", self.output_filters()));
        }
        Ok(layers)
    }

    fn push_block(&self, layers: &mut Vec<LayerSpec>, name: &str, block: &ConvBlockSpec, mut c: usize) -> Result<usize> {
        if block.layer_count == 0 || block.kernel.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "{name}: blocks need >= 1 layer and an odd kernel, got {} layers of {}x{}",
                block.layer_count, block.kernel, block.kernel
            )));
        }
        for i in 0..block.layer_count {
            let f = if i + 1 == block.layer_count { block.out_filters() } else { block.filters };
            let cout = self.width_scale.apply(f);
            layers.push(LayerSpec {
                name: format!("{name}.conv{i}"),
                kind: LayerKind::Conv,
                kernel: block.kernel,
                cin: c,
                cout,
            });
            c = cout;
        }
        Ok(c)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    /// Block convolution, stride 1, followed by ReLU.
    Conv,
    /// Strided-variant downsampler: stride-2 conv, channels x4.
    Down,
    /// Strided-variant upsampler: 2x2 stride-2 transposed conv, channels / 4.
    Up,
    /// Final depth-adjusting convolution, zero-initialized.
    Output,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    pub kernel: usize,
    pub cin: usize,
    pub cout: usize,
}

impl LayerSpec {
    fn down(name: &str, kernel: usize, cin: usize) -> Self {
        LayerSpec {
            name: name.into(),
            kind: LayerKind::Down,
            kernel,
            cin,
            cout: 4 * cin,
        }
    }

    fn up(name: &str, cin: usize) -> Self {
        LayerSpec {
            name: name.into(),
            kind: LayerKind::Up,
            kernel: 2,
            cin,
            cout: cin / 4,
        }
    }

    pub fn weight_shape(&self) -> Shape {
        Shape {
            batch: self.kernel,
            height: self.kernel,
            width: self.cin,
            channels: self.cout,
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.kernel * self.kernel * self.cin * self.cout + self.cout
    }
}

/// Named parameter tensors in a fixed order.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ParameterSet<T: Real = f32> {
    tensors: IndexMap<String, Tensor<T>>,
}

impl<T: Real> ParameterSet<T> {
    pub fn new() -> Self {
        ParameterSet {
            tensors: IndexMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor<T>) -> Result<()> {
        let name = name.into();
        if self.tensors.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter `{name}`")));
        }
        self.tensors.insert(name, t.with_requires_grad(true));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn clear_grads(&mut self) {
        for t in self.tensors.values_mut() {
            t.grad = None;
        }
    }

    pub fn cast<U: Real>(&self) -> ParameterSet<U> {
        ParameterSet {
            tensors: self.tensors.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
        }
    }
}

/// Total number of scalar parameters.
pub fn parameter_count<T: Real>(params: &ParameterSet<T>) -> usize {
    params.iter().map(|(_, t)| t.len()).sum()
}

/// A configuration together with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Wdrn<T: Real = f32> {
    pub config: WdrnConfig,
    pub params: ParameterSet<T>,
}

/// Graph handles of a model's parameters, aligned with `ParameterSet` order.
#[derive(Clone, Debug)]
pub struct BoundParams {
    vars: IndexMap<String, Var>,
}

impl BoundParams {
    pub fn var(&self, name: &str) -> Var {
        self.vars[name]
    }

    pub fn vars(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, &v)| (k.as_str(), v))
    }
}

impl<T: Real> Wdrn<T> {
    /// He-uniform weights (bound `sqrt(6 / fan_in)`), zero biases and a zero
    /// output convolution. Values are drawn in `f32` so every element type
    /// gets the same initial point.
    pub fn build(config: &WdrnConfig, seed: u64) -> Result<Self> {
        let layers = config.layers()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParameterSet::new();
        for layer in &layers {
            let ws = layer.weight_shape();
            let fan_in = (layer.kernel * layer.kernel * layer.cin) as f64;
            let bound = (6.0 / fan_in).sqrt() as f32;
            let w = match layer.kind {
                LayerKind::Output => Tensor::zeros(ws),
                _ => Tensor::from_fn(ws, |_, _, _, _| T::of(rng.gen_range(-bound..bound) as f64)),
            };
            params.insert(format!("{}.weight", layer.name), w)?;
            params.insert(format!("{}.bias", layer.name), Tensor::zeros(Shape::vector(layer.cout)?))?;
        }
        Ok(Wdrn {
            config: config.clone(),
            params,
        })
    }

    /// Rebuilds a model from stored parameters, checking names and shapes
    /// against the configuration's layer plan.
    pub fn from_parts(config: WdrnConfig, params: ParameterSet<T>) -> Result<Self> {
        let expected = Wdrn::<T>::expected_shapes(&config)?;
        for ((name, shape), (pname, t)) in expected.iter().zip(params.iter()) {
            if name != pname {
                return Err(Error::CheckpointLayout(format!(
                    "expected parameter `{name}`, found `{pname}`"
                )));
            }
            if *shape != t.shape() {
                return Err(Error::CheckpointShape {
                    name: name.clone(),
                    found: t.shape(),
                    expected: *shape,
                });
            }
        }
        if expected.len() != params.len() {
            return Err(Error::CheckpointLayout(format!(
                "config expects {} parameter tensors, found {}",
                expected.len(),
                params.len()
            )));
        }
        Ok(Wdrn { config, params })
    }

    pub fn expected_shapes(config: &WdrnConfig) -> Result<Vec<(String, Shape)>> {
        let mut out = Vec::new();
        for l in config.layers()? {
            out.push((format!("{}.weight", l.name), l.weight_shape()));
            out.push((format!("{}.bias", l.name), Shape::vector(l.cout)?));
        }
        Ok(out)
    }

    pub fn parameter_count(&self) -> usize {
        parameter_count(&self.params)
    }

    pub fn cast<U: Real>(&self) -> Wdrn<U> {
        Wdrn {
            config: self.config.clone(),
            params: self.params.cast(),
        }
    }

    pub fn check_input(&self, s: Shape) -> Result<()> {
        let d = self.config.divisor();
        if s.channels != self.config.input_channels {
            return Err(crate::error::invalid(
                "forward",
                format!("expected {} input channels, got {s}", self.config.input_channels),
            ));
        }
        if !s.height.is_multiple_of(d) || !s.width.is_multiple_of(d) {
            return Err(crate::error::invalid(
                "forward",
                format!("spatial extents of {s} must be multiples of {d} for {} levels", self.config.levels),
            ));
        }
        Ok(())
    }

    /// Adds the parameters to `g` (trainable or constant) and returns handles.
    pub fn bind(&self, g: &mut Graph<T>, trainable: bool) -> BoundParams {
        let vars = self
            .params
            .iter()
            .map(|(name, t)| {
                let v = if trainable { g.param(t.clone()) } else { g.constant(t.clone()) };
                (name.to_string(), v)
            })
            .collect();
        BoundParams { vars }
    }

    /// Records the forward pass on `g`.
    pub fn forward_on(&self, g: &mut Graph<T>, p: &BoundParams, x: Var) -> Result<Var> {
        self.check_input(g.shape(x))?;
        let cfg = &self.config;
        let strided = cfg.domain_variant == DomainVariant::Strided;

        let mut h = if strided { down(g, p, "entry.down", x)? } else { g.dwt2(x)? };
        h = g.space_to_depth(h, 2)?;

        let mut skips = Vec::with_capacity(cfg.levels);
        for (l, block) in cfg.encoder_blocks.iter().enumerate() {
            let name = format!("enc.L{}", l + 1);
            if l > 0 {
                h = if strided { down(g, p, &format!("{name}.down"), h)? } else { g.dwt2(h)? };
            }
            h = conv_block(g, p, &name, block.layer_count, h)?;
            skips.push(h);
        }
        for (k, block) in cfg.decoder_blocks.iter().enumerate() {
            let name = format!("dec.D{}", k + 1);
            h = if strided { up(g, p, &format!("{name}.up"), h)? } else { g.idwt2(h)? };
            h = g.add(h, skips[cfg.levels - 2 - k])?;
            h = conv_block(g, p, &name, block.layer_count, h)?;
        }
        h = g.depth_to_space(h, 2)?;
        h = g.conv2d(h, p.var("out.conv.weight"), p.var("out.conv.bias"), 1, Padding::Same)?;
        h = if strided { up(g, p, "out.up", h)? } else { g.idwt2(h)? };
        g.add(h, x)
    }

    /// Inference forward pass; no clamping.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let p = self.bind(&mut g, false);
        let xv = g.constant(x.clone());
        let y = self.forward_on(&mut g, &p, xv)?;
        Ok(g.into_value(y))
    }

    /// Copies gradients of the bound parameters from `g` into `self.params`.
    pub fn collect_grads(&mut self, g: &Graph<T>, p: &BoundParams) {
        for (name, t) in self.params.iter_mut() {
            t.grad = g.grad(p.var(name)).map(Tensor::into_data);
        }
    }

    /// One line per parameter tensor plus the total.
    pub fn summary(&self) -> String {
        let mut s = format!(
            "WDRN: {} levels, {} domain, width scale {}, divisor {}\n",
            self.config.levels,
            self.config.domain_variant,
            self.config.width_scale,
            self.config.divisor()
        );
        for (name, t) in self.params.iter() {
            let [a, b, c, d] = t.shape().dims();
            let dims = if name.ends_with(".bias") { format!("[{d}]") } else { format!("[{a}, {b}, {c}, {d}]") };
            s.push_str(&format!("{name:<24} {dims:<22} {}\n", t.len()));
        }
        s.push_str(&format!("total trainable parameters: {}\n", self.parameter_count()));
        s
    }
}

fn conv_block<T: Real>(g: &mut Graph<T>, p: &BoundParams, name: &str, layers: usize, mut h: Var) -> Result<Var> {
    for i in 0..layers {
        let w = p.var(&format!("{name}.conv{i}.weight"));
        let b = p.var(&format!("{name}.conv{i}.bias"));
        h = g.conv2d(h, w, b, 1, Padding::Same)?;
        h = g.relu(h);
    }
    Ok(h)
}

fn down<T: Real>(g: &mut Graph<T>, p: &BoundParams, name: &str, h: Var) -> Result<Var> {
    let w = p.var(&format!("{name}.weight"));
    let b = p.var(&format!("{name}.bias"));
    g.conv2d(h, w, b, 2, Padding::Same)
}

fn up<T: Real>(g: &mut Graph<T>, p: &BoundParams, name: &str, h: Var) -> Result<Var> {
    let w = p.var(&format!("{name}.weight"));
    let b = p.var(&format!("{name}.bias"));
    g.conv_transpose2d(h, w, b, 2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn width_scale_rounding() {
        let q = WidthScale::new(1, 4).unwrap();
        assert_eq!([q.apply(16), q.apply(64), q.apply(256), q.apply(2)], [4, 16, 64, 1]);
        assert_eq!("1/8".parse::<WidthScale>().unwrap(), WidthScale { num: 1, den: 8 });
        assert_eq!("2".parse::<WidthScale>().unwrap(), WidthScale { num: 2, den: 1 });
        assert!("0/3".parse::<WidthScale>().is_err());
        assert!("x".parse::<WidthScale>().is_err());
    }

    #[test]
    fn default_layer_plan() {
        let layers = WdrnConfig::default().layers().unwrap();
        let first = &layers[0];
        assert_eq!((first.name.as_str(), first.cin, first.cout), ("enc.L1.conv0", 48, 16));
        let out = layers.last().unwrap();
        assert_eq!((out.name.as_str(), out.cin, out.cout), ("out.conv", 16, 12));
        let d2_last = layers.iter().find(|l| l.name == "dec.D2.conv3").unwrap();
        assert_eq!(d2_last.cout, 64);
    }

    #[test]
    fn inconsistent_skip_rejected() {
        let mut cfg = WdrnConfig::default();
        cfg.encoder_blocks[1].filters = 6;
        let err = cfg.layers().unwrap_err().to_string();
        assert!(err.contains("dec.D1"), "{err}");
        assert!(err.contains("encoder level 2"), "{err}");

        // 256/3 rounds to 85, which IDWT cannot split
        let cfg = WdrnConfig::default().scaled(WidthScale::new(1, 3).unwrap());
        assert!(cfg.layers().is_err());
    }

    #[test]
    fn all_level_counts_resolve() {
        for levels in 2..=4 {
            for v in [DomainVariant::Wavelet, DomainVariant::Strided] {
                for s in [WidthScale::FULL, WidthScale::new(1, 8).unwrap()] {
                    WdrnConfig::with_levels(levels).unwrap().variant(v).scaled(s).layers().unwrap();
                }
            }
        }
        assert!(WdrnConfig::with_levels(5).is_err());
    }

    #[test]
    fn single_layer_count() {
        let l = LayerSpec {
            name: "x".into(),
            kind: LayerKind::Conv,
            kernel: 3,
            cin: 3,
            cout: 16,
        };
        assert_eq!(l.parameter_count(), 448);
        let mut p = ParameterSet::<f32>::new();
        assert_eq!(parameter_count(&p), 0);
        p.insert("x.weight", Tensor::zeros(l.weight_shape())).unwrap();
        p.insert("x.bias", Tensor::zeros(Shape::vector(16).unwrap())).unwrap();
        assert_eq!(parameter_count(&p), 448);
        assert!(p.insert("x.bias", Tensor::zeros(Shape::vector(1).unwrap())).is_err());
    }
}
