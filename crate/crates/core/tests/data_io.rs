use std::fs;
use std::path::Path;

use proptest::prelude::*;
use wdrn::data::{
    load_paired_dataset, load_png, save_png, split, synth_dataset, synth_relight_pair, Azimuth, IlluminationSetting,
};
use wdrn::{Error, Shape, Tensor};

fn write_rgb8(path: &Path, w: u32, h: u32, bytes: &[u8]) {
    let f = fs::File::create(path).unwrap();
    let mut enc = png::Encoder::new(f, w, h);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    enc.write_header().unwrap().write_image_data(bytes).unwrap();
}

fn write_gray8(path: &Path, w: u32, h: u32) {
    let f = fs::File::create(path).unwrap();
    let mut enc = png::Encoder::new(f, w, h);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    enc.write_header().unwrap().write_image_data(&vec![7; (w * h) as usize]).unwrap();
}

fn read_rgb8(path: &Path) -> Vec<u8> {
    let dec = png::Decoder::new(std::io::BufReader::new(fs::File::open(path).unwrap()));
    let mut r = dec.read_info().unwrap();
    let mut buf = vec![0; r.output_buffer_size().unwrap()];
    let info = r.next_frame(&mut buf).unwrap();
    buf.truncate(info.buffer_size());
    buf
}

#[test]
fn decodes_to_unit_range() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("a.png");
    write_rgb8(&p, 2, 1, &[128, 0, 255, 1, 2, 3]);
    let t = load_png(&p).unwrap();
    assert_eq!(t.shape(), Shape::new(1, 1, 2, 3).unwrap());
    assert!((t.data()[0] - 0.50196).abs() < 1e-5);
    assert_eq!(t.data()[0], 128.0 / 255.0);
    assert_eq!(t.data()[2], 1.0);
}

#[test]
fn rejects_non_rgb() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("g.png");
    write_gray8(&p, 4, 4);
    assert!(matches!(load_png(&p), Err(Error::Png { .. })));
    let q = dir.path().join("junk.png");
    fs::write(&q, b"not a png").unwrap();
    assert!(matches!(load_png(&q), Err(Error::Png { .. })));
}

#[test]
fn quantization_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let (src, dst) = (dir.path().join("src.png"), dir.path().join("dst.png"));
    let bytes: Vec<u8> = (0..16 * 16 * 3).map(|i| (i * 37 % 256) as u8).collect();
    write_rgb8(&src, 16, 16, &bytes);
    save_png(&load_png(&src).unwrap(), &dst).unwrap();
    assert_eq!(read_rgb8(&dst), bytes);
}

#[test]
fn save_clamps() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.png");
    let t = Tensor::from_vec(Shape::new(1, 1, 1, 3).unwrap(), vec![-0.5f32, 0.5, 1.7]).unwrap();
    save_png(&t, &p).unwrap();
    assert_eq!(read_rgb8(&p), vec![0, 128, 255]);
}

fn dataset(root: &Path, names: &[&str]) {
    for sub in ["input", "target"] {
        fs::create_dir_all(root.join(sub)).unwrap();
        for (i, n) in names.iter().enumerate() {
            let v = if sub == "input" { i as u8 } else { 200 - i as u8 };
            write_rgb8(&root.join(sub).join(n), 2, 2, &[v; 12]);
        }
    }
}

#[test]
fn loads_pairs_in_name_order() {
    let dir = tempfile::tempdir().unwrap();
    dataset(dir.path(), &[]);
    assert!(load_paired_dataset(dir.path()).unwrap().is_empty());

    let dir = tempfile::tempdir().unwrap();
    dataset(dir.path(), &["c.png", "a.png", "b.png"]);
    let pairs = load_paired_dataset(dir.path()).unwrap();
    let names: Vec<&str> = pairs.iter().map(|p| p.name.as_str()).collect();
    assert_eq!(names, ["a.png", "b.png", "c.png"]);
    assert_eq!(pairs[0].input_image.data()[0], 1.0 / 255.0);
    assert_eq!(pairs[0].target_image.data()[0], 199.0 / 255.0);
}

#[test]
fn orphan_and_mismatch_rejected() {
    let dir = tempfile::tempdir().unwrap();
    dataset(dir.path(), &["a.png"]);
    write_rgb8(&dir.path().join("input/z.png"), 2, 2, &[0; 12]);
    let err = load_paired_dataset(dir.path()).unwrap_err().to_string();
    assert!(err.contains("z.png"), "{err}");

    let dir = tempfile::tempdir().unwrap();
    dataset(dir.path(), &["a.png"]);
    write_rgb8(&dir.path().join("target/a.png"), 4, 2, &[0; 24]);
    assert!(load_paired_dataset(dir.path()).is_err());
}

#[test]
fn manifest_lists_every_pair() {
    let pairs = synth_dataset(5, 0, 16, IlluminationSetting::SOURCE, IlluminationSetting::TARGET).unwrap();
    let s = split(5, [0.6, 0.2, 0.2], 1).unwrap();
    let mut out = Vec::new();
    s.write_manifest(&mut out, &pairs).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert_eq!(text.matches("\ttrain").count(), 3);
    assert_eq!(text.matches("\tval").count(), 1);
    assert_eq!(text.matches("\ttest").count(), 1);
}

#[test]
fn synthetic_light_direction_matters() {
    let from = IlluminationSetting::new(Azimuth::N, 6500).unwrap();
    let to = IlluminationSetting::new(Azimuth::S, 6500).unwrap();
    let p = synth_relight_pair(3, 32, from, to).unwrap();
    assert_ne!(p.input_image, p.target_image);
    // identical tint and azimuth only differ through shading, so the warm
    // render divides channel-wise by the tint exactly where nothing clamps
    let warm = IlluminationSetting::new(Azimuth::N, 2500).unwrap();
    let q = synth_relight_pair(3, 32, from, warm).unwrap();
    for (a, b) in q.input_image.data().chunks(3).zip(q.target_image.data().chunks(3)) {
        assert_eq!(a[0], b[0]);
        assert!((a[1] * 0.6 - b[1]).abs() < 1e-6);
        assert!((a[2] * 0.3 - b[2]).abs() < 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn splits_partition(n in 0usize..200, a in 0.0f64..1.0, b in 0.0f64..1.0, seed in any::<u64>()) {
        let (fa, fb) = (a, (1.0 - a) * b);
        let s = split(n, [fa, fb, 1.0 - fa - fb], seed).unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        prop_assert_eq!(all.len(), n);
        all.sort();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn synthetic_values_in_unit_range(seed in any::<u64>()) {
        let p = synth_relight_pair(seed, 16, IlluminationSetting::SOURCE, IlluminationSetting::TARGET).unwrap();
        for v in p.input_image.data().iter().chain(p.target_image.data()) {
            prop_assert!((0.0..=1.0).contains(v));
        }
    }
}
