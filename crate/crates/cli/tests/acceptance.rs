//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

use std::fs;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wdrn::data::{split, synth_dataset, IlluminationSetting, ImagePair};
use wdrn::losses::{self, LossConfig};
use wdrn::metrics::{mps, ssim_metric};
use wdrn::model::{DomainVariant, Wdrn, WdrnConfig, WidthScale};
use wdrn::shuffle::{depth_to_space, space_to_depth};
use wdrn::trainer::{
    adam_step, lr_at, save_checkpoint, train, AdamParams, AdamState, Checkpoint, TrainConfig, TrainReport,
    FORMAT_VERSION,
};
use wdrn::verify::{run_suite, SuiteOptions};
use wdrn::wavelet::{dwt2_haar, idwt2_haar};
use wdrn::{Error, Graph, Shape, Tensor};
use wdrn_cli::{ablate, infer_dir, AblateArgs, Ablation};

type Outcome = Result<String, String>;

fn check(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(limit: Duration, start: Instant) -> Result<(), String> {
    let t = start.elapsed();
    check(t < limit, format!("took {:.1} s, limit {:.0} s", t.as_secs_f64(), limit.as_secs_f64()))
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Tensor<f64> {
    Tensor::from_fn(Shape::new(1, h, w, 3).unwrap(), |_, _, _, _| rng.gen_range(0.0..1.0))
}

fn energy<T: wdrn::Real>(t: &Tensor<T>) -> f64 {
    t.data().iter().map(|v| v.as_f64() * v.as_f64()).sum()
}

fn c1_wavelet() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut err32, mut err64, mut energy_rel) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..100 {
        let x = random_image(&mut rng, 16, 16);
        let d = dwt2_haar(&x).map_err(e)?;
        err64 = err64.max(idwt2_haar(&d).map_err(e)?.max_abs_diff(&x).map_err(e)?);
        energy_rel = energy_rel.max((energy(&d) - energy(&x)).abs() / energy(&x));
        let x32 = x.cast::<f32>();
        let d32 = dwt2_haar(&x32).map_err(e)?;
        err32 = err32.max(idwt2_haar(&d32).map_err(e)?.max_abs_diff(&x32).map_err(e)? as f64);
        energy_rel = energy_rel.max((energy(&d32) - energy(&x32)).abs() / energy(&x32));
    }
    check(err32 < 1e-5, format!("single precision error {err32:e}"))?;
    check(err64 < 1e-12, format!("double precision error {err64:e}"))?;
    check(energy_rel < 1e-5, format!("energy rel error {energy_rel:e}"))?;
    within(Duration::from_secs(5), start)?;
    Ok(format!("max err f32 {err32:.1e}, f64 {err64:.1e}, energy {energy_rel:.1e}"))
}

fn c2_shuffle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for r in [1usize, 2, 4] {
        for _ in 0..100 {
            let (n, h, w, c) = (rng.gen_range(1..3), r * rng.gen_range(1..5), r * rng.gen_range(1..5), rng.gen_range(1..5));
            let x = Tensor::<f32>::from_fn(Shape::new(n, h, w, c).unwrap(), |_, _, _, _| rng.gen());
            let back = depth_to_space(&space_to_depth(&x, r).map_err(e)?, r).map_err(e)?;
            check(back == x, format!("space_to_depth round trip failed at r={r}, shape {}", x.shape()))?;
            let y = Tensor::<f32>::from_fn(Shape::new(n, h / r, w / r, c * r * r).unwrap(), |_, _, _, _| rng.gen());
            let back = space_to_depth(&depth_to_space(&y, r).map_err(e)?, r).map_err(e)?;
            check(back == y, format!("depth_to_space round trip failed at r={r}, shape {}", y.shape()))?;
        }
    }
    within(Duration::from_secs(1), start)?;
    Ok("300 shapes, both directions bitwise exact".into())
}

fn c3_gradients() -> Outcome {
    let start = Instant::now();
    let rows = run_suite(&SuiteOptions::default()).map_err(e)?;
    let required = [
        "conv2d",
        "relu",
        "add",
        "sub",
        "mul",
        "abs",
        "mean",
        "dwt2",
        "idwt2",
        "space_to_depth",
        "depth_to_space",
        "mae_loss",
        "ssim_loss",
        "gray_loss",
        "wdrn_wavelet",
    ];
    for name in required {
        check(rows.iter().any(|r| r.name == name), format!("no row for {name}"))?;
    }
    let worst = rows.iter().max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error)).unwrap();
    for r in &rows {
        check(r.max_rel_error < 1e-5, format!("{} rel error {:e}", r.name, r.max_rel_error))?;
    }
    within(Duration::from_secs(120), start)?;
    Ok(format!("{} checks, worst {} at {:.1e}", rows.len(), worst.name, worst.max_rel_error))
}

fn mirror(i: i64, n: i64) -> usize {
    let mut i = i;
    while i < 0 || i >= n {
        i = if i < 0 { -i - 1 } else { 2 * n - i - 1 };
    }
    i as usize
}

/// Grayscale, edge-repeating reflection, normalized Gaussian, in plain loops.
fn blurred_gray(img: &Tensor<f64>, cfg: &LossConfig) -> Vec<f64> {
    let s = img.shape();
    let (h, w, r) = (s.height as i64, s.width as i64, cfg.blur_kernel as i64 / 2);
    let weight = |dy: i64, dx: i64| (-((dy * dy + dx * dx) as f64) / (2.0 * cfg.blur_sigma * cfg.blur_sigma)).exp();
    let norm: f64 = (-r..=r).flat_map(|dy| (-r..=r).map(move |dx| weight(dy, dx))).sum();
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for dy in -r..=r {
                for dx in -r..=r {
                    let (yy, xx) = (mirror(y + dy, h), mirror(x + dx, w));
                    let g: f64 = (0..3).map(|c| cfg.gray_weights[c] * img.at(0, yy, xx, c)).sum();
                    acc += weight(dy, dx) / norm * g;
                }
            }
            out.push(acc);
        }
    }
    out
}

fn mean_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

fn graph_value(p: &Tensor<f64>, t: &Tensor<f64>, gray: bool, cfg: &LossConfig) -> Result<f64, String> {
    let mut g = Graph::new();
    let (pv, tv) = (g.constant(p.clone()), g.constant(t.clone()));
    let l = if gray { losses::gray_loss(&mut g, pv, tv, cfg) } else { losses::mae_loss(&mut g, pv, tv) }.map_err(e)?;
    g.value(l).item().map_err(e)
}

fn c4_loss_oracles() -> Outcome {
    let cfg = LossConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut worst_mae, mut worst_gray) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let (p, t) = (random_image(&mut rng, 16, 16), random_image(&mut rng, 16, 16));
        let mae = mean_abs(p.data(), t.data());
        let gray = mean_abs(&blurred_gray(&p, &cfg), &blurred_gray(&t, &cfg));
        worst_mae = worst_mae.max((graph_value(&p, &t, false, &cfg)? - mae).abs() / mae);
        worst_gray = worst_gray.max((graph_value(&p, &t, true, &cfg)? - gray).abs() / gray);
    }
    check(worst_mae < 1e-6, format!("mae rel error {worst_mae:e}"))?;
    check(worst_gray < 1e-6, format!("gray rel error {worst_gray:e}"))?;
    Ok(format!("50 pairs, worst rel error mae {worst_mae:.1e}, gray {worst_gray:.1e}"))
}

fn c5_ssim_closed_forms() -> Outcome {
    let cfg = LossConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random_image(&mut rng, 16, 16);
    let same = ssim_metric(&x, &x, &cfg).map_err(e)?;
    check(same == 1.0, format!("identical images give {same}"))?;
    let s = Shape::new(1, 16, 16, 3).unwrap();
    let v = ssim_metric(&Tensor::<f64>::zeros(s), &Tensor::full(s, 1.0), &cfg).map_err(e)?;
    let c1 = cfg.c1();
    check(c1 == 1e-4, format!("C1 = {c1}"))?;
    check((v - c1 / (1.0 + c1)).abs() < 1e-12, format!("0 vs 1 gives {v}, closed form {}", c1 / (1.0 + c1)))?;
    check((v - 9.999e-5).abs() < 1e-8, format!("0 vs 1 gives {v}"))?;
    Ok(format!("identical = 1 exactly, 0 vs 1 = {v:.6e}"))
}

fn c6_mps() -> Outcome {
    let a = mps(0.6310, 0.3405);
    let b = mps(0.6642, 0.2771);
    check((a - 0.64525).abs() < 1e-9, format!("mps(0.6310, 0.3405) = {a}"))?;
    check((b - 0.69355).abs() < 1e-9, format!("mps(0.6642, 0.2771) = {b}"))?;
    check(format!("{a:.4}") == "0.6452", format!("{a} rounds to {a:.4}"))?;
    check(format!("{b:.4}") == "0.6935", format!("{b} rounds to {b:.4}"))?;
    Ok(format!("{a:.5} -> {a:.4}, {b:.5} -> {b:.4}"))
}

fn c7_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut configs = 0;
    for levels in 2..=4 {
        for variant in [DomainVariant::Wavelet, DomainVariant::Strided] {
            for scale in [WidthScale::new(1, 8).unwrap(), WidthScale::new(1, 4).unwrap()] {
                let cfg = WdrnConfig::with_levels(levels).map_err(e)?.variant(variant).scaled(scale);
                let model = Wdrn::<f32>::build(&cfg, rng.gen()).map_err(e)?;
                let d = cfg.divisor();
                let x = Tensor::from_fn(Shape::new(2, d, 2 * d, 3).unwrap(), |_, _, _, _| rng.gen_range(-1.0f32..2.0));
                check(model.forward(&x).map_err(e)? == x, format!("{levels} levels {variant} {scale} is not identity"))?;
                configs += 1;
            }
        }
    }
    let full = Wdrn::<f32>::build(&WdrnConfig::default(), 7).map_err(e)?;
    let x = Tensor::from_fn(Shape::new(1, 32, 32, 3).unwrap(), |_, _, _, _| rng.gen_range(0.0f32..1.0));
    check(full.forward(&x).map_err(e)? == x, "default model is not identity")?;
    configs += 1;

    let dir = tempfile::tempdir().map_err(e)?;
    let (input, out) = (dir.path().join("in"), dir.path().join("out"));
    fs::create_dir_all(&input).map_err(e)?;
    let pairs = synth_dataset(3, 70, 64, IlluminationSetting::SOURCE, IlluminationSetting::TARGET).map_err(e)?;
    for p in &pairs {
        wdrn::data::save_png(&p.input_image, &input.join(&p.name)).map_err(e)?;
    }
    let report = infer_dir(&full, &input, &out).map_err(e)?;
    check(report.failed.is_empty() && report.written.len() == 3, "inference did not write every image")?;
    for p in &pairs {
        let (a, b) = (fs::read(input.join(&p.name)).map_err(e)?, fs::read(out.join(&p.name)).map_err(e)?);
        check(a == b, format!("{} differs after inference", p.name))?;
    }
    Ok(format!("{configs} configs exact, 3 PNGs byte-identical after inference"))
}

fn c8_schedule() -> Outcome {
    let cfg = TrainConfig::default();
    let got = [lr_at(0, &cfg), lr_at(100, &cfg), lr_at(200, &cfg)];
    check(got == [1e-4, 5e-5, 2.5e-5], format!("lr_at gives {got:?}"))?;
    let mut p = wdrn::model::ParameterSet::<f32>::new();
    p.insert("w", Tensor::scalar(0.0)).map_err(e)?;
    p.get_mut("w").unwrap().grad = Some(vec![1.0]);
    let mut state = AdamState::new(&p);
    adam_step(&mut p, &mut state, 1e-4, &AdamParams::default()).map_err(e)?;
    let w = p.get("w").unwrap().data()[0] as f64;
    check((w - -9.99999e-5).abs() < 1e-10, format!("first Adam update gives {w:e}"))?;
    Ok(format!("lr {got:?}, first update {w:.9e}"))
}

const SMOKE_STEPS: u64 = 500;

fn smoke_data() -> Vec<ImagePair> {
    synth_dataset(4, 0, 64, IlluminationSetting::SOURCE, IlluminationSetting::TARGET).unwrap()
}

fn smoke_run(pairs: &[ImagePair], seed: u64) -> Result<(Checkpoint, TrainReport), String> {
    let model_cfg = WdrnConfig::default().scaled(WidthScale::new(1, 4).unwrap());
    let cfg = TrainConfig {
        epochs: SMOKE_STEPS,
        batch_size: 4,
        lr: 1e-3,
        lr_decay_every: 0,
        seed,
        loss: LossConfig {
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
            ..LossConfig::default()
        },
        max_steps: Some(SMOKE_STEPS),
        ..TrainConfig::default()
    };
    let s = split(pairs.len(), [1.0, 0.0, 0.0], seed).map_err(e)?;
    train(&model_cfg, pairs, &s, &cfg, None).map_err(e)
}

fn c9_overfit(pairs: &[ImagePair], run: &(Checkpoint, TrainReport), elapsed: Duration) -> Outcome {
    let (ck, report) = run;
    check(report.step_losses.len() as u64 == SMOKE_STEPS, format!("{} steps", report.step_losses.len()))?;
    let cfg = LossConfig::default();
    let (mut mae, mut ssim) = (0.0, 0.0);
    for p in pairs {
        let out = ck.model.forward(&p.input_image).map_err(e)?;
        mae += mean_abs(&out.cast::<f64>().into_data(), &p.target_image.cast::<f64>().into_data());
        ssim += ssim_metric(&out, &p.target_image, &cfg).map_err(e)?;
    }
    let n = pairs.len() as f64;
    let (mae, ssim) = (mae / n, ssim / n);
    let tenth = SMOKE_STEPS as usize / 10;
    let mean = |s: &[wdrn::losses::LossValues]| s.iter().map(|v| v.total).sum::<f64>() / s.len() as f64;
    let first = mean(&report.step_losses[..tenth]);
    let last = mean(&report.step_losses[report.step_losses.len() - tenth..]);
    let detail = format!("MAE {mae:.4}, SSIM {ssim:.4}, loss first 10% {first:.4} last 10% {last:.4}");
    check(mae < 0.05, format!("{detail}: MAE not below 0.05"))?;
    check(ssim > 0.9, format!("{detail}: SSIM not above 0.9"))?;
    check(last < first, format!("{detail}: loss did not fall"))?;
    check(elapsed < Duration::from_secs(600), format!("{detail}: took {:.0} s", elapsed.as_secs_f64()))?;
    Ok(format!("{detail} ({:.0} s)", elapsed.as_secs_f64()))
}

fn c10_ablation() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(e)?;
    let mut summary = Vec::new();
    for (which, expected) in [(Ablation::Domain, vec!["wavelet", "strided"]), (Ablation::Levels, vec!["2 level", "3 level", "4 level"])] {
        let path = dir.path().join(format!("{which:?}.csv"));
        let args = AblateArgs {
            which,
            synthetic: 8,
            steps: 100,
            size: 32,
            width_scale: "1/8".into(),
            seed: 0,
            lr: 1e-3,
            batch_size: 2,
            out: Some(path.clone()),
        };
        ablate(&args).map_err(e)?;
        let mut r = csv::Reader::from_path(&path).map_err(e)?;
        let header: Vec<String> = r.headers().map_err(e)?.iter().map(str::to_string).collect();
        check(
            header == wdrn_cli::ABLATION_HEADER.map(str::to_string),
            format!("unexpected header {header:?}"),
        )?;
        let col = |name: &str| header.iter().position(|h| h == name).unwrap();
        let mut variants = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(e)?;
            let num = |name: &str| rec[col(name)].parse::<f64>().map_err(e);
            let (initial, fin) = (num("initial_loss")?, num("final_loss")?);
            num("psnr_db")?;
            num("ssim")?;
            check(fin < initial, format!("{}: final loss {fin} not below initial {initial}", &rec[0]))?;
            summary.push(format!("{} {initial:.3}->{fin:.3}", &rec[0]));
            variants.push(rec[0].to_string());
        }
        check(variants == expected, format!("rows {variants:?}"))?;
    }
    within(Duration::from_secs(1800), start)?;
    Ok(summary.join(", "))
}

fn c11_determinism(pairs: &[ImagePair], base: &Checkpoint) -> Outcome {
    let (again, _) = smoke_run(pairs, 0)?;
    check(again.to_bytes() == base.to_bytes(), "same seed gave a different checkpoint")?;
    let (other, _) = smoke_run(pairs, 1)?;
    check(other.to_bytes() != base.to_bytes(), "different seed gave the same checkpoint")?;
    Ok("same seed bitwise identical, different seed differs".into())
}

fn c12_checkpoint(ck: &Checkpoint) -> Outcome {
    let dir = tempfile::tempdir().map_err(e)?;
    let (a, b) = (dir.path().join("a.wdrn"), dir.path().join("b.wdrn"));
    save_checkpoint(ck, &a).map_err(e)?;
    let loaded = wdrn::trainer::load_checkpoint(&a).map_err(e)?;
    save_checkpoint(&loaded, &b).map_err(e)?;
    let bytes = fs::read(&a).map_err(e)?;
    check(bytes == fs::read(&b).map_err(e)?, "save -> load -> save changed the bytes")?;

    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    let m = Checkpoint::from_bytes(&bad_magic);
    check(matches!(m, Err(Error::BadMagic(_))), format!("corrupt magic gave {:?}", m.err()))?;
    let mut bad_version = bytes.clone();
    bad_version[4..8].copy_from_slice(&(FORMAT_VERSION + 1).to_le_bytes());
    let v = Checkpoint::from_bytes(&bad_version);
    check(matches!(v, Err(Error::VersionMismatch { .. })), format!("bad version gave {:?}", v.err()))?;
    let t = Checkpoint::from_bytes(&bytes[..bytes.len() / 2]);
    check(matches!(t, Err(Error::Truncated(_))), format!("truncation gave {:?}", t.err()))?;
    Ok(format!("{} bytes stable; magic, version and truncation errors distinct", bytes.len()))
}

fn report(results: &mut Vec<bool>, id: usize, title: &str, outcome: Outcome, t: Duration) {
    let (tag, detail) = match &outcome {
        Ok(d) => ("PASS", d.as_str()),
        Err(d) => ("FAIL", d.as_str()),
    };
    println!("criterion {id:>2} [{tag}] {title}: {detail} [{:.1} s]", t.as_secs_f64());
    results.push(outcome.is_ok());
}

fn timed(f: impl FnOnce() -> Outcome) -> (Outcome, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn main() {
    let mut results = Vec::new();
    let simple: [(&str, fn() -> Outcome); 8] = [
        ("wavelet perfect reconstruction", c1_wavelet),
        ("pixel shuffle bijection", c2_shuffle),
        ("gradient suite", c3_gradients),
        ("loss oracle equivalence", c4_loss_oracles),
        ("SSIM closed forms", c5_ssim_closed_forms),
        ("MPS arithmetic", c6_mps),
        ("identity at initialization", c7_identity),
        ("training schedule", c8_schedule),
    ];
    for (i, (title, f)) in simple.into_iter().enumerate() {
        let (o, t) = timed(f);
        report(&mut results, i + 1, title, o, t);
    }

    let pairs = smoke_data();
    let start = Instant::now();
    let smoke = smoke_run(&pairs, 0);
    let elapsed = start.elapsed();
    match &smoke {
        Ok(run) => report(&mut results, 9, "overfit smoke", c9_overfit(&pairs, run, elapsed), elapsed),
        Err(err) => report(&mut results, 9, "overfit smoke", Err(err.clone()), elapsed),
    }
    let (o, t) = timed(c10_ablation);
    report(&mut results, 10, "ablation harness", o, t);
    match &smoke {
        Ok((ck, _)) => {
            let (o, t) = timed(|| c11_determinism(&pairs, ck));
            report(&mut results, 11, "determinism", o, t);
            let (o, t) = timed(|| c12_checkpoint(ck));
            report(&mut results, 12, "checkpoint round trip", o, t);
        }
        Err(_) => {
            report(&mut results, 11, "determinism", Err("overfit run failed".into()), Duration::ZERO);
            report(&mut results, 12, "checkpoint round trip", Err("overfit run failed".into()), Duration::ZERO);
        }
    }
    let passed = results.iter().filter(|&&ok| ok).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
