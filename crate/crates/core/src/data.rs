//! Paired images: PNG I/O, directory ingestion, a synthetic relighting
//! generator and seeded splits.
//!
//! A dataset root holds `input/` and `target/` with identically named 8-bit
//! RGB PNG files. Pixels map to `[0, 1]` by division by 255.
//!
//! The synthetic generator renders a smooth heightfield (sum of 8 random
//! sinusoids) with a Lambertian model under a directional light at 45 degrees
//! elevation, multiplies by a smooth albedo and by a colour-temperature tint
//! that blends linearly from (1.0, 0.6, 0.3) at 2500 K to neutral at 6500 K,
//! and clamps to `[0, 1]`. Azimuth N points up the image, angles run
//! clockwise.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, PngError, Result};
use crate::tensor::{Real, Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Azimuth {
    N,
    NE,
    E,
    SE,
    S,
    SW,
    W,
    NW,
}

impl Azimuth {
    pub const ALL: [Azimuth; 8] = [
        Azimuth::N,
        Azimuth::NE,
        Azimuth::E,
        Azimuth::SE,
        Azimuth::S,
        Azimuth::SW,
        Azimuth::W,
        Azimuth::NW,
    ];

    /// Clockwise from north.
    pub fn degrees(self) -> f64 {
        45.0 * self as usize as f64
    }

    /// Unit horizontal light direction in image coordinates (x right, y down).
    pub fn direction(self) -> (f64, f64) {
        let a = self.degrees().to_radians();
        (a.sin(), -a.cos())
    }
}

impl fmt::Display for Azimuth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for Azimuth {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Azimuth::ALL
            .into_iter()
            .find(|a| a.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Dataset(format!("unknown azimuth `{s}`")))
    }
}

pub const MIN_KELVIN: u32 = 2500;
pub const MAX_KELVIN: u32 = 6500;
pub const WARM_TINT: [f64; 3] = [1.0, 0.6, 0.3];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct IlluminationSetting {
    pub azimuth: Azimuth,
    pub color_temp_kelvin: u32,
}

impl IlluminationSetting {
    pub fn new(azimuth: Azimuth, color_temp_kelvin: u32) -> Result<Self> {
        if !(MIN_KELVIN..=MAX_KELVIN).contains(&color_temp_kelvin) {
            return Err(Error::Dataset(format!(
                "colour temperature {color_temp_kelvin}K outside [{MIN_KELVIN}, {MAX_KELVIN}]"
            )));
        }
        Ok(IlluminationSetting {
            azimuth,
            color_temp_kelvin,
        })
    }

    /// North at 6500 K, the fixed source setting of the one-to-one track.
    pub const SOURCE: IlluminationSetting = IlluminationSetting {
        azimuth: Azimuth::N,
        color_temp_kelvin: 6500,
    };

    /// East at 4500 K, the fixed target setting of the one-to-one track.
    pub const TARGET: IlluminationSetting = IlluminationSetting {
        azimuth: Azimuth::E,
        color_temp_kelvin: 4500,
    };

    /// Per-channel multiplier for this colour temperature.
    pub fn tint(&self) -> [f64; 3] {
        let t = (self.color_temp_kelvin - MIN_KELVIN) as f64 / (MAX_KELVIN - MIN_KELVIN) as f64;
        WARM_TINT.map(|w| w + t * (1.0 - w))
    }
}

impl fmt::Display for IlluminationSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}K", self.azimuth, self.color_temp_kelvin)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImagePair {
    pub name: String,
    pub input_image: Tensor<f32>,
    pub target_image: Tensor<f32>,
    pub from: IlluminationSetting,
    pub to: IlluminationSetting,
}

impl ImagePair {
    pub fn new(
        name: impl Into<String>,
        input_image: Tensor<f32>,
        target_image: Tensor<f32>,
        from: IlluminationSetting,
        to: IlluminationSetting,
    ) -> Result<Self> {
        let name = name.into();
        if input_image.shape() != target_image.shape() {
            return Err(Error::Dataset(format!(
                "{name}: input is {} but target is {}",
                input_image.shape(),
                target_image.shape()
            )));
        }
        for t in [&input_image, &target_image] {
            if !t.data().iter().all(|v| (0.0..=1.0).contains(v)) {
                return Err(Error::Dataset(format!("{name}: pixel values outside [0, 1]")));
            }
        }
        Ok(ImagePair {
            name,
            input_image,
            target_image,
            from,
            to,
        })
    }
}

/// Decodes an 8-bit RGB PNG into a `1 x H x W x 3` tensor in `[0, 1]`.
pub fn load_png(path: &Path) -> Result<Tensor<f32>> {
    let png_err = |source: PngError| Error::Png {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path)?;
    let reader = png::Decoder::new(BufReader::new(file))
        .read_info()
        .map_err(|e| png_err(e.into()))?;
    let (color, depth) = reader.output_color_type();
    if color != png::ColorType::Rgb || depth != png::BitDepth::Eight {
        return Err(png_err(PngError::Unsupported { color, depth }));
    }
    let mut reader = reader;
    let mut buf = vec![0u8; reader.output_buffer_size().ok_or_else(|| {
        Error::Dataset(format!("{}: image too large", path.display()))
    })?];
    let info = reader.next_frame(&mut buf).map_err(|e| png_err(e.into()))?;
    let shape = Shape::new(1, info.height as usize, info.width as usize, 3)?;
    let bytes = &buf[..info.buffer_size()];
    let row = info.line_size;
    let mut data = Vec::with_capacity(shape.len());
    for y in 0..shape.height {
        data.extend(bytes[y * row..y * row + 3 * shape.width].iter().map(|&b| b as f32 / 255.0));
    }
    Tensor::from_vec(shape, data)
}

/// Quantizes `round(clamp(v, 0, 1) * 255)` to 8-bit RGB.
pub fn to_rgb8<T: Real>(img: &Tensor<T>) -> Result<(u32, u32, Vec<u8>)> {
    let s = img.shape();
    if s.batch != 1 || s.channels != 3 {
        return Err(crate::error::invalid("to_rgb8", format!("expected 1xHxWx3, got {s}")));
    }
    let bytes = img
        .data()
        .iter()
        .map(|v| (v.as_f64().clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    Ok((s.width as u32, s.height as u32, bytes))
}

pub fn save_png<T: Real>(img: &Tensor<T>, path: &Path) -> Result<()> {
    let (w, h, bytes) = to_rgb8(img)?;
    let png_err = |source: PngError| Error::Png {
        path: path.to_path_buf(),
        source,
    };
    let file = BufWriter::new(File::create(path)?);
    let mut enc = png::Encoder::new(file, w, h);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| png_err(e.into()))?;
    writer.write_image_data(&bytes).map_err(|e| png_err(e.into()))?;
    writer.finish().map_err(|e| png_err(e.into()))?;
    Ok(())
}

/// Sorted file names of the `.png` files in `dir`.
pub fn list_pngs(dir: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        if !entry.file_type()?.is_file() {
            continue;
        }
        let name = entry.file_name().to_string_lossy().into_owned();
        if Path::new(&name).extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
            names.push(name);
        }
    }
    names.sort();
    Ok(names)
}

/// Loads `root/input/*.png` paired with `root/target/*.png` by file name.
/// Pairs are tagged with the one-to-one track settings.
pub fn load_paired_dataset(root: &Path) -> Result<Vec<ImagePair>> {
    let (in_dir, tgt_dir) = (root.join("input"), root.join("target"));
    for d in [&in_dir, &tgt_dir] {
        if !d.is_dir() {
            return Err(Error::Dataset(format!("missing directory {}", d.display())));
        }
    }
    let inputs = list_all_files(&in_dir)?;
    let targets = list_all_files(&tgt_dir)?;
    for (names, other, side) in [(&inputs, &targets, "target"), (&targets, &inputs, "input")] {
        if let Some(orphan) = names.iter().find(|n| other.binary_search(n).is_err()) {
            return Err(Error::Dataset(format!("`{orphan}` has no counterpart in {side}/")));
        }
    }
    let mut pairs = Vec::with_capacity(inputs.len());
    for name in inputs {
        let a = load_png(&in_dir.join(&name))?;
        let b = load_png(&tgt_dir.join(&name))?;
        pairs.push(ImagePair::new(name, a, b, IlluminationSetting::SOURCE, IlluminationSetting::TARGET)?);
    }
    Ok(pairs)
}

fn list_all_files(dir: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        if entry.file_type()?.is_file() {
            names.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    names.sort();
    Ok(names)
}

const SINUSOIDS: usize = 8;
const AMBIENT: f64 = 0.15;

struct Wave {
    fx: f64,
    fy: f64,
    amp: f64,
    phase: f64,
}

impl Wave {
    fn random(rng: &mut ChaCha8Rng, size: f64, max_cycles: f64, amp: f64) -> Self {
        let angle = rng.gen_range(0.0..2.0 * PI);
        let cycles = rng.gen_range(0.5..max_cycles);
        Wave {
            fx: 2.0 * PI * cycles * angle.cos() / size,
            fy: 2.0 * PI * cycles * angle.sin() / size,
            amp: amp * rng.gen_range(0.5..1.0),
            phase: rng.gen_range(0.0..2.0 * PI),
        }
    }
}

/// Deterministic synthetic pair rendered under `from` (input) and `to`
/// (target) from one heightfield and albedo.
pub fn synth_relight_pair(
    seed: u64,
    size: usize,
    from: IlluminationSetting,
    to: IlluminationSetting,
) -> Result<ImagePair> {
    if size == 0 || !size.is_multiple_of(16) {
        return Err(Error::Dataset(format!("synthetic size {size} must be a positive multiple of 16")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = size as f64;
    // slopes of order one keep the shading varied without saturating
    let height: Vec<Wave> = (0..SINUSOIDS).map(|_| Wave::random(&mut rng, s, 3.0, 0.02 * s)).collect();
    let albedo_waves: Vec<Wave> = (0..3).map(|_| Wave::random(&mut rng, s, 2.0, 0.15)).collect();
    let base: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.55..0.9));

    let render = |light: IlluminationSetting| -> Result<Tensor<f32>> {
        let (dx, dy) = light.azimuth.direction();
        let l = [FRAC_1_SQRT_2 * dx, FRAC_1_SQRT_2 * dy, FRAC_1_SQRT_2];
        let tint = light.tint();
        let shape = Shape::new(1, size, size, 3)?;
        let mut data = Vec::with_capacity(shape.len());
        for y in 0..size {
            for x in 0..size {
                let (xf, yf) = (x as f64 + 0.5, y as f64 + 0.5);
                let (mut hx, mut hy) = (0.0, 0.0);
                for w in &height {
                    let c = w.amp * (w.fx * xf + w.fy * yf + w.phase).cos();
                    hx += c * w.fx;
                    hy += c * w.fy;
                }
                let norm = (hx * hx + hy * hy + 1.0).sqrt();
                let ndotl = (-hx * l[0] - hy * l[1] + l[2]) / norm;
                let shade = AMBIENT + (1.0 - AMBIENT) * ndotl.max(0.0);
                for (c, w) in albedo_waves.iter().enumerate() {
                    let albedo = base[c] + w.amp * (w.fx * xf + w.fy * yf + w.phase).sin();
                    data.push((albedo * shade * tint[c]).clamp(0.0, 1.0) as f32);
                }
            }
        }
        Tensor::from_vec(shape, data)
    };
    ImagePair::new(format!("synth_{seed:06}.png"), render(from)?, render(to)?, from, to)
}

/// `n` synthetic pairs with seeds `seed, seed + 1, ...`.
pub fn synth_dataset(
    n: usize,
    seed: u64,
    size: usize,
    from: IlluminationSetting,
    to: IlluminationSetting,
) -> Result<Vec<ImagePair>> {
    (0..n as u64).map(|i| synth_relight_pair(seed.wrapping_add(i), size, from, to)).collect()
}

/// Index partition of a dataset after a seeded shuffle.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
    /// The shuffled order that was partitioned.
    pub order: Vec<usize>,
}

/// Shuffles `0..len` with `seed` and cuts it into `round(f_train * len)`,
/// `round(f_val * len)` and the remainder.
pub fn split(len: usize, fractions: [f64; 3], seed: u64) -> Result<DatasetSplit> {
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Dataset(format!("split fractions {fractions:?} must be in [0, 1] and sum to 1")));
    }
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((fractions[0] * len as f64).round() as usize).min(len);
    let n_val = ((fractions[1] * len as f64).round() as usize).min(len - n_train);
    Ok(DatasetSplit {
        train: order[..n_train].to_vec(),
        val: order[n_train..n_train + n_val].to_vec(),
        test: order[n_train + n_val..].to_vec(),
        seed,
        order,
    })
}

impl DatasetSplit {
    /// `name<TAB>split` lines in dataset order.
    pub fn write_manifest<W: Write>(&self, mut out: W, pairs: &[ImagePair]) -> std::io::Result<()> {
        let mut tag = vec![""; pairs.len()];
        for (list, name) in [(&self.train, "train"), (&self.val, "val"), (&self.test, "test")] {
            for &i in list {
                if i < tag.len() {
                    tag[i] = name;
                }
            }
        }
        for (p, t) in pairs.iter().zip(tag) {
            writeln!(out, "{}\t{t}", p.name)?;
        }
        Ok(())
    }
}
