//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

#[path = "../../core/tests/common/oracles.rs"]
mod oracles;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use image::{GrayImage, ImageBuffer, Luma, Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use simcurate::dataset::{load_dataset, Dataset, ImageRecord, Provenance, Role};
use simcurate::eval::{evaluate, iou_xyxy, write_predictions};
use simcurate::features::{
    brightness, hamming, phash, to_gray, GrayImage as Gray, HashAlgorithm, HashBits, PerceptualHash,
};
use simcurate::{BBox, Det};

type Outcome = Result<String, String>;
type Subsets = BTreeMap<&'static str, Vec<(PathBuf, usize)>>;
type Instance = (Dataset, Vec<Det>, Vec<oracles::Truth>, Vec<oracles::Pred>);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

struct Gate {
    failed: usize,
}

impl Gate {
    fn check(&mut self, name: &str, f: impl FnOnce() -> Outcome) {
        let started = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = started.elapsed().as_secs_f64();
        match res {
            Ok(detail) => println!("PASS  {name}  [{secs:.1}s] {detail}"),
            Err(why) => {
                self.failed += 1;
                println!("FAIL  {name}  [{secs:.1}s] {why}");
            }
        }
    }
}

fn main() -> ExitCode {
    let mut gate = Gate { failed: 0 };
    gate.check("brightness matches the naive oracle", brightness_oracle);
    gate.check("hamming matches the per-bit oracle and is a metric", hamming_oracle);
    gate.check("phash is robust to brightness and downscaling", phash_robustness);
    gate.check("select builds nested, reproducible subsets", curation_protocol);
    gate.check(
        "mock augmentation keeps targets and accounts for every record",
        augment_with_mock,
    );
    gate.check("mAP50 matches the brute-force oracle", map_oracle);
    gate.check("IoU reference values", iou_values);
    gate.check("report is reproducible and totals add up", report_reproducible);
    gate.check("end-to-end smoke run", end_to_end);
    if gate.failed == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {} criteria failed", gate.failed);
        ExitCode::FAILURE
    }
}

// ---- helpers ----

fn cli(args: &[&str]) -> Outcome {
    let out = Command::new(env!("CARGO_BIN_EXE_simcurate"))
        .args(args)
        .env_remove("SIMCURATE_LEDGER")
        .env_remove("SIMCURATE_BACKEND_URL")
        .env("RUST_LOG", "error")
        .output()
        .map_err(|e| format!("cannot run simcurate: {e}"))?;
    if !out.status.success() {
        return Err(format!(
            "simcurate {} exited with {}: {}",
            args.join(" "),
            out.status,
            String::from_utf8_lossy(&out.stderr).trim()
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn s(p: &Path) -> &str {
    p.to_str().expect("temp paths are UTF-8")
}

/// `(path, count)` pairs from the tab-separated lines commands print.
fn printed_manifests(stdout: &str) -> Vec<(PathBuf, usize)> {
    stdout
        .lines()
        .filter_map(|l| {
            let (p, n) = l.split_once('\t')?;
            Some((PathBuf::from(p), n.split_whitespace().next()?.parse().ok()?))
        })
        .collect()
}

/// Every file under `dir` by relative path, minus the resolved settings
/// dumps, which record paths and thread counts by design.
fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
                continue;
            }
            let name = p.file_name().unwrap().to_str().unwrap();
            if name == "resolved_config.toml" || name.ends_with(".config.toml") {
                continue;
            }
            out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

fn same_tree(a: &Path, b: &Path) -> Result<usize, String> {
    let (ta, tb) = (tree(a), tree(b));
    ensure!(
        ta.keys().eq(tb.keys()),
        "{} and {} hold different files",
        a.display(),
        b.display()
    );
    if let Some(k) = ta.keys().find(|k| ta[*k] != tb[*k]) {
        return Err(format!(
            "{} differs between {} and {}",
            k.display(),
            a.display(),
            b.display()
        ));
    }
    Ok(ta.len())
}

type DepthImage = ImageBuffer<Luma<u16>, Vec<u16>>;

/// A procedural frame: a banded gradient background with one or two
/// solid targets, their mask, and a depth ramp.
fn scene(seed: u64, w: u32, h: u32) -> (RgbImage, GrayImage, DepthImage, Vec<(u32, [u32; 4])>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c0: [f64; 3] = [
        rng.random_range(0.0..255.0),
        rng.random_range(0.0..255.0),
        rng.random_range(0.0..255.0),
    ];
    let c1: [f64; 3] = [
        rng.random_range(0.0..255.0),
        rng.random_range(0.0..255.0),
        rng.random_range(0.0..255.0),
    ];
    let (fx, fy, phase) = (
        rng.random_range(0.3..3.0),
        rng.random_range(0.3..3.0),
        rng.random_range(0.0..6.3),
    );
    let amp = rng.random_range(10.0..70.0);
    let mut img = RgbImage::from_fn(w, h, |x, y| {
        let t = x as f64 / w as f64;
        let wave = amp * (std::f64::consts::TAU * (fx * x as f64 / w as f64 + fy * y as f64 / h as f64) + phase).sin();
        Rgb(std::array::from_fn(|c| {
            (c0[c] * (1.0 - t) + c1[c] * t + wave).clamp(0.0, 255.0) as u8
        }))
    });
    let mut mask = GrayImage::new(w, h);
    let mut boxes = Vec::new();
    for _ in 0..rng.random_range(1..=2) {
        let x0 = rng.random_range(0..w - 10);
        let y0 = rng.random_range(0..h - 8);
        let x1 = rng.random_range(x0 + 6..=w.min(x0 + 20));
        let y1 = rng.random_range(y0 + 5..=h.min(y0 + 14));
        let colour = Rgb([rng.random(), rng.random(), rng.random()]);
        for y in y0..y1 {
            for x in x0..x1 {
                img.put_pixel(x, y, colour);
                mask.put_pixel(x, y, Luma([255]));
            }
        }
        boxes.push((rng.random_range(0..3), [x0, y0, x1, y1]));
    }
    let depth = DepthImage::from_fn(w, h, |x, y| Luma([1000 + 40 * y as u16 + 3 * x as u16]));
    (img, mask, depth, boxes)
}

/// Writes `n` frames as a render export (images/, labels/ and, with `aux`,
/// masks/ and depth/).
fn render_dir(root: &Path, n: usize, seed: u64, aux: bool) {
    let (w, h) = (48u32, 32u32);
    for sub in ["images", "labels", "masks", "depth"] {
        fs::create_dir_all(root.join(sub)).unwrap();
    }
    for i in 0..n {
        let stem = format!("frame_{i}");
        let (img, mask, depth, boxes) = scene(seed.wrapping_mul(1_000_003).wrapping_add(i as u64), w, h);
        img.save(root.join(format!("images/{stem}.png"))).unwrap();
        let mut labels = String::new();
        for (class, [x0, y0, x1, y1]) in boxes {
            let b = BBox::from_pixels(class, [x0 as f64, y0 as f64, x1 as f64, y1 as f64], w, h).unwrap();
            labels.push_str(&format!("{} {} {} {} {}\n", b.class_id, b.cx, b.cy, b.w, b.h));
        }
        fs::write(root.join(format!("labels/{stem}.txt")), labels).unwrap();
        if aux {
            mask.save(root.join(format!("masks/{stem}.png"))).unwrap();
            depth.save(root.join(format!("depth/{stem}.png"))).unwrap();
        }
    }
}

fn ingest(render: &Path, name: &str, role: &str, out: &Path) -> Result<PathBuf, String> {
    let stdout = cli(&[
        "ingest",
        "--render-dir",
        s(render),
        "--name",
        name,
        "--role",
        role,
        "--out",
        s(out),
    ])?;
    printed_manifests(&stdout)
        .into_iter()
        .next()
        .map(|(p, _)| p)
        .ok_or_else(|| format!("ingest printed no manifest: {stdout}"))
}

fn ids(d: &Dataset) -> BTreeSet<String> {
    d.records().iter().map(|r| r.id.clone()).collect()
}

fn load(p: &Path) -> Result<Dataset, String> {
    load_dataset(p).map_err(|e| e.to_string())
}

// ---- criteria ----

fn brightness_oracle() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let (rows, cols) = (rng.random_range(1..=24), rng.random_range(1..=24));
        let max = if i % 2 == 0 { 255 } else { 65535 };
        let px: Vec<u16> = (0..rows * cols).map(|_| rng.random_range(0..=max)).collect();
        let g = Gray::new(rows, cols, max, px.clone()).map_err(|e| e.to_string())?;
        let got: f64 = brightness(&g).value();
        let nested: Vec<Vec<u16>> = px.chunks(cols).map(<[u16]>::to_vec).collect();
        worst = worst.max((got - oracles::brightness(&nested, max)).abs());
    }
    ensure!(worst <= 1e-12, "largest deviation {worst:e}");
    for max in [255u16, 65535] {
        let zero: f64 = brightness(&Gray::new(7, 5, max, vec![0; 35]).unwrap()).value();
        let full: f64 = brightness(&Gray::new(7, 5, max, vec![max; 35]).unwrap()).value();
        ensure!(zero == 0.0 && full == 1.0, "extremes at max {max}: {zero}, {full}");
    }
    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    Ok(format!("1000 images, max deviation {worst:e}"))
}

fn hash64(v: u64) -> PerceptualHash {
    PerceptualHash::from_bits(HashAlgorithm::DctPhash, &oracles::bits_of(v))
}

fn hamming_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let d = |a: u64, b: u64| hamming(&hash64(a), &hash64(b)).unwrap();
    for _ in 0..10_000 {
        let (a, b): (u64, u64) = (rng.random(), rng.random());
        ensure!(d(a, b) == oracles::hamming_u64(a, b), "{a:016x} vs {b:016x}");
    }
    for _ in 0..1000 {
        // flip a few bits so some triples are close together
        let a: u64 = rng.random();
        let b = if rng.random_bool(0.5) {
            a ^ (1 << rng.random_range(0..64))
        } else {
            rng.random()
        };
        let c: u64 = rng.random();
        ensure!(d(a, b) == d(b, a), "symmetry");
        ensure!(d(a, a) == 0 && (a == b) == (d(a, b) == 0), "identity");
        ensure!(d(a, c) <= d(a, b) + d(b, c), "triangle inequality");
    }
    Ok("10000 pairs, 1000 triples".into())
}

fn brighten(img: &RgbImage) -> RgbImage {
    let mut out = img.clone();
    for p in out.pixels_mut() {
        for c in p.0.iter_mut() {
            *c = (*c as f64 * 1.2 + 0.5).floor().min(255.0) as u8;
        }
    }
    out
}

fn halve(img: &RgbImage) -> RgbImage {
    RgbImage::from_fn(img.width() / 2, img.height() / 2, |x, y| {
        Rgb(std::array::from_fn(|c| {
            let s: u32 = [(0, 0), (1, 0), (0, 1), (1, 1)]
                .iter()
                .map(|&(dx, dy)| img.get_pixel(2 * x + dx, 2 * y + dy).0[c] as u32)
                .sum();
            ((s + 2) / 4) as u8
        }))
    })
}

fn phash_robustness() -> Outcome {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/corpus");
    let reference: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("reference.json")).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    let mut files: Vec<PathBuf> = fs::read_dir(&dir)
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "png"))
        .collect();
    files.sort();
    ensure!(files.len() >= 20, "corpus has only {} images", files.len());

    let h = |img: &RgbImage| phash(&to_gray(img), HashBits::B64);
    let (mut bright, mut half) = (0, 0);
    let mut hashes = Vec::new();
    for f in &files {
        let img = image::open(f).map_err(|e| e.to_string())?.to_rgb8();
        let base = h(&img);
        bright = bright.max(hamming(&base, &h(&brighten(&img))).unwrap());
        half = half.max(hamming(&base, &h(&halve(&img))).unwrap());
        hashes.push(base);
    }
    let mut distinct = u32::MAX;
    for i in 0..hashes.len() {
        for j in i + 1..hashes.len() {
            distinct = distinct.min(hamming(&hashes[i], &hashes[j]).unwrap());
        }
    }
    ensure!(bright <= 6, "brightness shift moved a hash by {bright} bits");
    ensure!(half <= 2, "downscaling moved a hash by {half} bits");
    ensure!(distinct >= 10, "two distinct images are only {distinct} bits apart");
    let frozen = |k: &str| reference[k].as_u64().unwrap_or(u64::MAX) as u32;
    ensure!(
        (bright, half, distinct) == (frozen("max_bright"), frozen("max_half"), frozen("min_distinct")),
        "measured ({bright}, {half}, {distinct}) differs from the reference implementation"
    );
    Ok(format!(
        "{} images: bright <= {bright}, half <= {half}, distinct >= {distinct}",
        files.len()
    ))
}

/// Scores the pool with both methods and selects subsets into `out`.
fn curate(pool: &Path, refs: &Path, out: &Path, jobs: &str) -> Result<Subsets, String> {
    let mut subsets = BTreeMap::new();
    for method in ["brightness", "phash"] {
        let scores = out.join(format!("scores_{method}.csv"));
        cli(&[
            "--jobs",
            jobs,
            "score",
            "--pool",
            s(pool),
            "--ref",
            s(refs),
            "--method",
            method,
            "--out",
            s(&scores),
        ])?;
        let stdout = cli(&[
            "--jobs",
            jobs,
            "select",
            "--scores",
            s(&scores),
            "--pool",
            s(pool),
            "--plan",
            "400:200:2000",
            "--out",
            s(&out.join(format!("subsets_{method}"))),
        ])?;
        subsets.insert(method, printed_manifests(&stdout));
    }
    Ok(subsets)
}

fn curation_protocol() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let t = tmp.path();
    render_dir(&t.join("render"), 2000, 10, false);
    render_dir(&t.join("refs_render"), 5, 11, false);

    let started = Instant::now();
    let pool = ingest(&t.join("render"), "pool", "train", &t.join("pool"))?;
    let refs = ingest(&t.join("refs_render"), "refs", "ref", &t.join("refs"))?;
    let first = curate(&pool, &refs, &t.join("run_a"), "8")?;
    let elapsed = started.elapsed();

    let pool_ids = ids(&load(&pool)?);
    let first_400: BTreeSet<String> = pool_ids.iter().take(400).cloned().collect();
    let expected: Vec<usize> = (400..=2000).step_by(200).collect();
    for (method, list) in &first {
        let sizes: Vec<usize> = list.iter().map(|(_, n)| *n).collect();
        ensure!(sizes == expected, "{method}: subset sizes {sizes:?}");
        let sets = list
            .iter()
            .map(|(p, _)| load(p).map(|d| ids(&d)))
            .collect::<Result<Vec<_>, _>>()?;
        for (i, w) in sets.windows(2).enumerate() {
            ensure!(
                w[0].is_subset(&w[1]),
                "{method}: subset {} is not inside subset {}",
                expected[i],
                expected[i + 1]
            );
        }
        ensure!(
            sets[0] == first_400,
            "{method}: the 400-image seed is not the first 400 ids"
        );
        ensure!(sets[8] == pool_ids, "{method}: the full subset is not the pool");
    }
    ensure!(
        elapsed < Duration::from_secs(60),
        "scoring and selection took {elapsed:?}"
    );

    curate(&pool, &refs, &t.join("run_b"), "8")?;
    curate(&pool, &refs, &t.join("run_c"), "1")?;
    let files = same_tree(&t.join("run_a"), &t.join("run_b"))?;
    same_tree(&t.join("run_a"), &t.join("run_c"))?;
    Ok(format!(
        "9 nested subsets per method, {files} files identical across runs and --jobs 1/8, one run {:.1}s",
        elapsed.as_secs_f64()
    ))
}

fn augment_with_mock() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let t = tmp.path();
    render_dir(&t.join("render"), 60, 20, true);
    let manifest = ingest(&t.join("render"), "scene", "train", &t.join("scene"))?;
    let source = load(&manifest)?;

    let run = |out: &Path, jobs: &str, fail: &str| {
        cli(&[
            "--seed",
            "7",
            "--jobs",
            jobs,
            "augment",
            "--dataset",
            s(&manifest),
            "--mock",
            "--mock-fail-per-mille",
            fail,
            "--retry-delay-ms",
            "0",
            "--out",
            s(out),
        ])
    };
    run(&t.join("a"), "1", "0")?;
    run(&t.join("b"), "4", "0")?;
    same_tree(&t.join("a"), &t.join("b"))?;

    let out = load(&t.join("a/manifest.json"))?;
    ensure!(
        out.len() == source.len(),
        "{} of {} records came back",
        out.len(),
        source.len()
    );
    let mut checked = 0usize;
    for (orig, aug) in source.records().iter().zip(out.records()) {
        ensure!(aug.id == format!("{}_rnd", orig.id), "unexpected id {}", aug.id);
        ensure!(aug.boxes == orig.boxes, "{}: boxes changed", orig.id);
        let a = image::open(&orig.image_path).map_err(|e| e.to_string())?.to_rgb8();
        let b = image::open(&aug.image_path).map_err(|e| e.to_string())?.to_rgb8();
        let m = image::open(orig.mask_path.as_ref().unwrap())
            .map_err(|e| e.to_string())?
            .to_luma8();
        let mut changed_background = false;
        for (x, y, p) in b.enumerate_pixels() {
            if m.get_pixel(x, y).0[0] != 0 {
                ensure!(p == a.get_pixel(x, y), "{}: masked pixel ({x}, {y}) changed", orig.id);
                checked += 1;
            } else {
                changed_background |= p != a.get_pixel(x, y);
            }
        }
        ensure!(changed_background, "{}: background was not regenerated", orig.id);
    }

    run(&t.join("flaky"), "4", "100")?;
    let produced = load(&t.join("flaky/manifest.json"))?;
    let log = fs::read_to_string(t.join("flaky/skipped.csv")).map_err(|e| e.to_string())?;
    let skipped: BTreeSet<String> = log
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap_or_default().to_string())
        .collect();
    ensure!(!skipped.is_empty(), "a 10% failure rate produced no skips");
    ensure!(
        produced.len() + skipped.len() == source.len(),
        "{} outputs + {} skips != {} inputs",
        produced.len(),
        skipped.len(),
        source.len()
    );
    let mut accounted: BTreeSet<String> = produced
        .records()
        .iter()
        .map(|r| r.id.trim_end_matches("_rnd").to_string())
        .collect();
    accounted.extend(skipped.iter().cloned());
    ensure!(
        accounted == ids(&source),
        "outputs and skips do not cover the input ids"
    );
    Ok(format!(
        "{checked} masked pixels bit-equal, identical reruns, flaky backend: {} + {} skipped = {}",
        produced.len(),
        skipped.len(),
        source.len()
    ))
}

fn test_record(id: String, boxes: Vec<BBox>, width: u32, height: u32) -> ImageRecord {
    ImageRecord {
        image_path: PathBuf::from(format!("/fixture/{id}.png")),
        id,
        boxes,
        mask_path: None,
        depth_path: None,
        provenance: Provenance::Rendered,
        width,
        height,
    }
}

/// Up to 6 truth boxes, 8 predictions and 3 classes; `None` when the draw
/// has no truth at all.
fn random_instance(seed: u64) -> Option<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (100u32, 80u32);
    let n_images = rng.random_range(1..=3);
    let random_box = |rng: &mut ChaCha8Rng| {
        let x0 = rng.random_range(0.0..80.0);
        let y0 = rng.random_range(0.0..60.0);
        let bw = rng.random_range(4.0..(w as f64 - x0));
        let bh = rng.random_range(4.0..(h as f64 - y0));
        [x0, y0, x0 + bw, y0 + bh]
    };
    let mut per_image: Vec<Vec<BBox>> = vec![Vec::new(); n_images];
    let mut truth = Vec::new();
    for _ in 0..rng.random_range(1..=6) {
        let image = rng.random_range(0..n_images);
        let class = rng.random_range(0..3);
        let b = BBox::from_pixels(class, random_box(&mut rng), w, h).unwrap();
        truth.push(oracles::Truth {
            image,
            class,
            bbox: b.to_pixels(w, h),
        });
        per_image[image].push(b);
    }
    let mut preds = Vec::new();
    let mut o_preds = Vec::new();
    for _ in 0..rng.random_range(0..=8) {
        let (image, class, xyxy) = if rng.random_bool(0.6) {
            let t = &truth[rng.random_range(0..truth.len())];
            let b = t.bbox;
            let mut j = || rng.random_range(-6.0..6.0);
            let x0 = (b[0] + j()).clamp(0.0, w as f64 - 2.0);
            let y0 = (b[1] + j()).clamp(0.0, h as f64 - 2.0);
            let x1 = (b[2] + j()).clamp(x0 + 1.0, w as f64);
            let y1 = (b[3] + j()).clamp(y0 + 1.0, h as f64);
            let class = if rng.random_bool(0.85) {
                t.class
            } else {
                rng.random_range(0..3)
            };
            (t.image, class, [x0, y0, x1, y1])
        } else {
            (
                rng.random_range(0..n_images),
                rng.random_range(0..3),
                random_box(&mut rng),
            )
        };
        let bbox = BBox::from_pixels(class, xyxy, w, h).unwrap();
        // coarse confidences so ties get exercised
        let conf = (rng.random_range(0..20) as f64) / 20.0;
        o_preds.push(oracles::Pred {
            image,
            class,
            bbox: bbox.to_pixels(w, h),
            conf,
        });
        preds.push(Det {
            image_id: format!("img{image}"),
            class_id: class,
            bbox,
            confidence: conf,
        });
    }
    let records = per_image
        .into_iter()
        .enumerate()
        .map(|(i, b)| test_record(format!("img{i}"), b, w, h))
        .collect();
    Some((Dataset::new("truth", Role::Test, records).ok()?, preds, truth, o_preds))
}

fn single_image(boxes: Vec<BBox>) -> Dataset {
    Dataset::new("truth", Role::Test, vec![test_record("a".into(), boxes, 100, 100)]).unwrap()
}

fn det(b: BBox, confidence: f64) -> Det {
    Det {
        image_id: "a".into(),
        class_id: b.class_id,
        bbox: b,
        confidence,
    }
}

fn map_oracle() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..500 {
        let (truth, preds, o_truth, o_preds) = random_instance(seed).ok_or("instance without truth")?;
        let got = evaluate(&preds, &truth, 0.5).map_err(|e| e.to_string())?.map50;
        let want = oracles::mean_ap(&o_truth, &o_preds, 0.5);
        worst = worst.max((got - want).abs());
        ensure!((got - want).abs() <= 1e-9, "instance {seed}: {got} vs oracle {want}");
    }

    let target = BBox::new(0, 0.3, 0.3, 0.2, 0.2).unwrap();
    let elsewhere = BBox::new(0, 0.8, 0.8, 0.1, 0.1).unwrap();
    let truth = single_image(vec![target]);
    let hand = evaluate(&[det(target, 0.8), det(elsewhere, 0.9)], &truth, 0.5)
        .unwrap()
        .map50;
    ensure!(hand == 0.5, "one TP at 0.8 behind one FP at 0.9 gave {hand}");

    let boxes = vec![target, elsewhere, BBox::new(2, 0.5, 0.6, 0.3, 0.2).unwrap()];
    let truth = single_image(boxes.clone());
    let perfect: Vec<Det> = boxes.iter().map(|b| det(*b, 0.7)).collect();
    let p = evaluate(&perfect, &truth, 0.5).unwrap().map50;
    let e = evaluate::<f64>(&[], &truth, 0.5).unwrap().map50;
    ensure!(p == 1.0 && e == 0.0, "perfect {p}, empty {e}");
    Ok(format!(
        "500 instances, max deviation {worst:e}; hand case 0.5, perfect 1, empty 0"
    ))
}

fn iou_values() -> Outcome {
    let v = iou_xyxy::<f64>([0.0, 0.0, 2.0, 2.0], [1.0, 1.0, 3.0, 3.0]);
    ensure!((v - 1.0 / 7.0).abs() <= 1e-12, "overlap gave {v}");
    let a: [f64; 4] = [0.1, 0.2, 0.6, 0.9];
    ensure!(iou_xyxy(a, a) == 1.0, "identity gave {}", iou_xyxy(a, a));
    let d = iou_xyxy(a, [0.7, 0.2, 0.9, 0.9]);
    ensure!(d == 0.0, "disjoint gave {d}");
    Ok(format!("overlap {v:.15}"))
}

fn report_reproducible() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let t = tmp.path();
    let ledger = t.join("ledger.ndjson");
    let methods = ["fil_phash", "aug_random"];
    let sizes = [400usize, 600, 800];
    let mut lines = vec![serde_json::json!({"kind": "timing", "stage": "render", "seconds": 120.5})];
    let mut expected: BTreeMap<(String, usize), f64> = BTreeMap::new();
    for (mi, m) in methods.iter().enumerate() {
        let own = if mi == 0 { "filtering" } else { "generation" };
        for (si, &n) in sizes.iter().enumerate() {
            let (work, train) = (1.25 * (si + 1) as f64 + mi as f64 * 40.0, 30.0 + 10.0 * si as f64);
            lines
                .push(serde_json::json!({"kind": "timing", "method": m, "n_images": n, "stage": own, "seconds": work}));
            lines.push(serde_json::json!({
                "kind": "map50", "method": m, "n_images": n,
                "map50": 0.5 + 0.05 * si as f64 + 0.1 * mi as f64, "training_seconds": train
            }));
            expected.insert((m.to_string(), n), 120.5 + work + train);
        }
    }
    let text: String = lines.iter().map(|l| format!("{l}\n")).collect();
    fs::write(&ledger, text).map_err(|e| e.to_string())?;

    for dir in ["r1", "r2"] {
        cli(&["--ledger", s(&ledger), "report", "--out", s(&t.join(dir))])?;
    }
    let files = same_tree(&t.join("r1"), &t.join("r2"))?;
    ensure!(files >= 2, "report wrote {files} files");

    let csv = fs::read_to_string(t.join("r1/report.csv")).map_err(|e| e.to_string())?;
    let mut rows = csv.lines();
    let header: Vec<&str> = rows.next().unwrap_or_default().split(',').collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or(format!("no {name} column"))
    };
    let (method, n, total, status) = (col("method")?, col("n_images")?, col("total_s")?, col("status")?);
    let stages = ["render_s", "generation_s", "filtering_s", "training_s"].map(col);
    let mut seen = 0;
    for row in rows {
        let f: Vec<&str> = row.split(',').collect();
        let num = |i: usize| f[i].parse::<f64>().map_err(|e| format!("{row}: {e}"));
        let mut sum = 0.0;
        for c in &stages {
            sum += num(c.clone()?)?;
        }
        ensure!((num(total)? - sum).abs() < 1e-9, "{row}: total is not the stage sum");
        let key = (f[method].to_string(), f[n].parse::<usize>().map_err(|e| e.to_string())?);
        let want = expected.get(&key).ok_or(format!("unexpected row {row}"))?;
        ensure!((num(total)? - want).abs() < 1e-9, "{row}: expected total {want}");
        ensure!(f[status] == "complete", "{row}: not complete");
        seen += 1;
    }
    ensure!(seen == 6, "{seen} rows instead of 6");
    let svg = fs::read_to_string(t.join("r1/report.svg")).map_err(|e| e.to_string())?;
    ensure!(
        svg.contains("<svg") && svg.trim_end().ends_with("</svg>"),
        "report.svg is not an SVG document"
    );
    Ok("6 records, identical csv/svg across runs".into())
}

fn end_to_end() -> Outcome {
    let started = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let t = tmp.path();
    render_dir(&t.join("render"), 800, 30, true);
    render_dir(&t.join("refs_render"), 5, 31, false);
    let ledger = t.join("ledger.ndjson");
    let l = s(&ledger);

    let pool = ingest(&t.join("render"), "pool", "train", &t.join("pool"))?;
    let refs = ingest(&t.join("refs_render"), "refs", "ref", &t.join("refs"))?;
    let mut six_hundred = None;
    for method in ["brightness", "phash"] {
        let scores = t.join(format!("scores_{method}.csv"));
        cli(&[
            "--ledger",
            l,
            "score",
            "--pool",
            s(&pool),
            "--ref",
            s(&refs),
            "--method",
            method,
            "--out",
            s(&scores),
        ])?;
        let stdout = cli(&[
            "--ledger",
            l,
            "select",
            "--scores",
            s(&scores),
            "--pool",
            s(&pool),
            "--plan",
            "400:200:600",
            "--out",
            s(&t.join(format!("subsets_{method}"))),
        ])?;
        let sizes: Vec<usize> = printed_manifests(&stdout).iter().map(|(_, n)| *n).collect();
        ensure!(sizes == [400, 600], "{method}: subset sizes {sizes:?}");
        six_hundred = printed_manifests(&stdout).pop().map(|(p, _)| p);
    }
    let subset = six_hundred.ok_or("no 600-image subset")?;

    let stdout = cli(&[
        "--seed",
        "5",
        "split",
        "--dataset",
        s(&subset),
        "--out",
        s(&t.join("split")),
    ])?;
    let parts = printed_manifests(&stdout);
    let counts: Vec<usize> = parts.iter().map(|(_, n)| *n).collect();
    ensure!(counts == [480, 120], "split gave {counts:?}");
    let (train, val) = (load(&parts[0].0)?, load(&parts[1].0)?);
    ensure!(ids(&train).is_disjoint(&ids(&val)), "train and val overlap");
    let mut union = ids(&train);
    union.extend(ids(&val));
    ensure!(union == ids(&load(&subset)?), "split lost or invented records");

    let stdout = cli(&[
        "--ledger",
        l,
        "augment",
        "--dataset",
        s(&parts[0].0),
        "--mock",
        "--retry-delay-ms",
        "0",
        "--out",
        s(&t.join("aug")),
    ])?;
    let augmented = load(&t.join("aug/manifest.json"))?;
    ensure!(
        augmented.len() == 480,
        "augment produced {} records: {stdout}",
        augmented.len()
    );

    // detector output on the validation part: jittered hits, a few misses
    // and one stray box per image
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let mut preds = Vec::new();
    let (mut o_truth, mut o_preds) = (Vec::new(), Vec::new());
    for (i, r) in val.records().iter().enumerate() {
        let (w, h) = (r.width, r.height);
        for b in &r.boxes {
            let px = b.to_pixels(w, h);
            o_truth.push(oracles::Truth {
                image: i,
                class: b.class_id,
                bbox: px,
            });
            if rng.random_bool(0.85) {
                let mut j = || rng.random_range(-1.5..1.5);
                let x0 = (px[0] + j()).clamp(0.0, w as f64 - 2.0);
                let y0 = (px[1] + j()).clamp(0.0, h as f64 - 2.0);
                let x1 = (px[2] + j()).clamp(x0 + 1.0, w as f64);
                let y1 = (px[3] + j()).clamp(y0 + 1.0, h as f64);
                preds.push((i, b.class_id, [x0, y0, x1, y1], rng.random_range(0.3..1.0)));
            }
        }
        let x0 = rng.random_range(0.0..30.0);
        let y0 = rng.random_range(0.0..20.0);
        preds.push((
            i,
            rng.random_range(0..3),
            [x0, y0, x0 + 10.0, y0 + 8.0],
            rng.random_range(0.0..0.6),
        ));
    }
    let mut dets = Vec::new();
    for (i, class, xyxy, conf) in preds {
        let r = &val.records()[i];
        let bbox = BBox::from_pixels(class, xyxy, r.width, r.height).map_err(|e| e.to_string())?;
        o_preds.push(oracles::Pred {
            image: i,
            class,
            bbox: bbox.to_pixels(r.width, r.height),
            conf,
        });
        dets.push(Det {
            image_id: r.id.clone(),
            class_id: class,
            bbox,
            confidence: conf,
        });
    }
    let pred_csv = t.join("predictions.csv");
    write_predictions(&pred_csv, &dets).map_err(|e| e.to_string())?;
    let eval_json = t.join("eval.json");
    cli(&[
        "--ledger",
        l,
        "eval",
        "--truth",
        s(&parts[1].0),
        "--predictions",
        s(&pred_csv),
        "--out",
        s(&eval_json),
        "--method",
        "aug_random",
        "--n-images",
        "480",
    ])?;
    let result: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&eval_json).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let map50 = result["map50"].as_f64().ok_or("eval.json has no map50")?;
    let want = oracles::mean_ap(&o_truth, &o_preds, 0.5);
    ensure!((map50 - want).abs() <= 1e-9, "eval gave {map50}, oracle {want}");

    let results = t.join("training.csv");
    fs::write(
        &results,
        "method,n_images,map50,training_seconds\n\
         fil_phash,400,0.61,300\nfil_phash,600,0.66,420\n\
         fil_brightness,400,0.58,300\nfil_brightness,600,0.6,420\n",
    )
    .map_err(|e| e.to_string())?;
    cli(&["--ledger", l, "ingest-results", "--results", s(&results)])?;
    cli(&["--ledger", l, "record-time", "--stage", "render", "--seconds", "95"])?;
    cli(&[
        "--ledger",
        l,
        "record-time",
        "--stage",
        "training",
        "--seconds",
        "510",
        "--method",
        "aug_random",
        "--n-images",
        "480",
    ])?;
    cli(&["--ledger", l, "report", "--out", s(&t.join("report"))])?;
    let csv = fs::read_to_string(t.join("report/report.csv")).map_err(|e| e.to_string())?;
    let complete = csv.lines().filter(|r| r.contains(",complete,")).count();
    ensure!(complete == 5, "report has {complete} complete rows:\n{csv}");
    ensure!(t.join("report/report.svg").is_file(), "no report.svg");

    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(120), "took {elapsed:?}");
    Ok(format!(
        "mAP50 {map50:.4} matches oracle, 5 report rows, {:.1}s",
        elapsed.as_secs_f64()
    ))
}
