//! Acceptance harness: one pass/fail line per criterion, non-zero exit on any failure.

use std::collections::BTreeSet;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use splatlift::aggregate::{cluster_features, filter_observations, project_clusters, ClusterParams, MaskSet};
use splatlift::cli::verify::{bounds_suite, jensen_suite};
use splatlift::io;
use splatlift::model::{LiftConfig, RowMatrix};
use splatlift::query::{auto_threshold_values, ThresholdParams};
use splatlift::rasterize::build_weight_matrix;
use splatlift::solver::{lift, lift_rowsum, lift_streaming, surrogate_gradient, FeatureField, LiftMode};
use splatlift::synthbench::{
    lambda_sweep, lambda_sweep_scene, make_observations, make_scene, mc_background_gradient, overall_alpha_mean,
    random_instance, InstanceLimits, SceneSpec, SWEEP_LAMBDAS,
};
use splatlift::Result;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Result<Outcome> {
    Ok(Outcome { pass, detail: detail.into() })
}

fn frob(m: &RowMatrix) -> f64 {
    m.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt()
}

const SEED: u64 = 7;

fn c1_jensen() -> Result<Outcome> {
    let t = Instant::now();
    let r = jensen_suite(SEED, 100)?;
    let secs = t.elapsed().as_secs_f64();
    let mut detail = format!("{} in {secs:.2}s", r.summary);
    if let Some(v) = r.violations.first() {
        detail.push_str(&format!("; first violation: {v}"));
    }
    outcome(r.passed() && r.summary.starts_with("100/100") && secs < 10.0, detail)
}

fn c2_stationarity() -> Result<Outcome> {
    let mut worst = 0.0f64;
    for k in 0..100 {
        let inst = random_instance(SEED, k, &InstanceLimits::default())?;
        let x = lift_rowsum(&inst.a, &inst.b)?;
        let zero = FeatureField::new(RowMatrix::zeros(x.len(), x.dim()), vec![1.0; x.len()])?;
        let g = frob(&surrogate_gradient(&inst.a, &inst.b, &x)?);
        let g0 = frob(&surrogate_gradient(&inst.a, &inst.b, &zero)?);
        worst = worst.max(g / g0);
    }
    outcome(worst <= 1e-8, format!("max |∇J(x')| / |∇J(0)| = {worst:.2e} over 100 instances (limit 1e-8)"))
}

fn c3_bounds() -> Result<Outcome> {
    let t = Instant::now();
    let r = bounds_suite(SEED, 500)?;
    let secs = t.elapsed().as_secs_f64();
    let csv = Path::new(env!("CARGO_TARGET_TMPDIR")).join("bound_ratios.csv");
    std::fs::write(&csv, r.csv.as_deref().unwrap_or("")).map_err(|e| splatlift::Error::io(&csv, e))?;
    let mut detail = format!("{} in {secs:.2}s; {}; ratios -> {}", r.summary, r.details.join("; "), csv.display());
    if let Some(v) = r.violations.first() {
        detail.push_str(&format!("; first violation: {v}"));
    }
    outcome(r.passed() && r.summary.starts_with("500/500") && secs < 60.0, detail)
}

fn c4_sweep() -> Result<Outcome> {
    let pts = lambda_sweep(0, &SWEEP_LAMBDAS)?;
    let violations = pts.windows(2).filter(|w| w[1].beta > w[0].beta).count();
    let betas: Vec<String> = pts.iter().map(|p| format!("{}:{:.5}", p.lambda, p.beta)).collect();
    outcome(violations == 0, format!("β(λ) = [{}], {violations} increases", betas.join(", ")))
}

fn c5_alpha() -> Result<Outcome> {
    let spec = SceneSpec::preset("opaque-wall")?;
    let s = make_scene(&spec)?;
    let a = build_weight_matrix(&s.scene, &s.views, &LiftConfig::with_lambda(1.0))?;
    let m = overall_alpha_mean(&a);
    outcome(m >= 99.6, format!("mean alpha sum {m:.3}% (target 99.6%, floor 99.0%)"))
}

fn c6_mc() -> Result<Outcome> {
    let t = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for s in [0.0, 0.25, 0.5, 1.0] {
        let e = mc_background_gradient(s, 100_000, SEED)?;
        ok &= e.z_score() <= 3.0;
        parts.push(format!("s={s}: z {:.2}", e.z_score()));
    }
    // standard error at n, 2n and 4n, averaged over seeds
    let (mut r2, mut r4) = (0.0, 0.0);
    for seed in 0..5 {
        let se = |n| mc_background_gradient(0.0, n, 100 + seed).map(|e| e.standard_error);
        let base = se(100_000)?;
        r2 += se(200_000)? / base / 5.0;
        r4 += se(400_000)? / base / 5.0;
    }
    let r2_ok = (r2 * 2f64.sqrt() - 1.0).abs() <= 0.2;
    let r4_ok = (r4 * 2.0 - 1.0).abs() <= 0.2;
    let secs = t.elapsed().as_secs_f64();
    parts.push(format!("SE(2n)/SE(n) {r2:.3} (1/√2 = 0.707), SE(4n)/SE(n) {r4:.3} (0.5)"));
    outcome(ok && r2_ok && r4_ok && secs < 5.0, format!("{} in {secs:.2}s", parts.join("; ")))
}

fn max_rel_diff(a: &FeatureField, b: &FeatureField) -> f64 {
    let scale = b.values().as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    a.values()
        .as_slice()
        .iter()
        .zip(b.values().as_slice())
        .map(|(x, y)| (x - y).abs() / y.abs().max(1e-9 * scale).max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}

fn c7_streaming() -> Result<Outcome> {
    let cfg = LiftConfig::default();
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    let mut check = |name: &str, s: &splatlift::synthbench::SynthScene, obs: &splatlift::solver::ObservationSet| -> Result<()> {
        let a = build_weight_matrix(&s.scene, &s.views, &cfg)?;
        for mode in [LiftMode::RowSum, LiftMode::RowSumSquared] {
            let m = lift(&a, obs, mode)?;
            let st = lift_streaming(&s.scene, &s.views, obs, &cfg, mode)?;
            let d = max_rel_diff(&st, &m);
            worst = worst.max(d);
            parts.push(format!("{name}/{mode} {d:.1e}"));
        }
        Ok(())
    };
    for p in ["opaque-wall", "two-blob", "two-blob-noisy"] {
        let spec = SceneSpec::preset(p)?;
        let s = make_scene(&spec)?;
        let o = make_observations(&s, &spec)?;
        check(p, &s, &o.obs)?;
    }
    let (s, obs) = lambda_sweep_scene(0)?;
    check("lambda-sweep", &s, &obs)?;
    outcome(worst <= 1e-5, format!("max relative difference {worst:.2e} ({})", parts.join(", ")))
}

fn c8_filtering() -> Result<Outcome> {
    let spec = SceneSpec::preset("two-blob-noisy")?;
    let s = make_scene(&spec)?;
    let o = make_observations(&s, &spec)?;
    let a = build_weight_matrix(&s.scene, &s.views, &LiftConfig::default())?;
    let x = lift_rowsum(&a, &o.obs)?;
    let gamma = cluster_features(&x, &ClusterParams::default())?;
    let ms = MaskSet::new(&o.obs, &project_clusters(&a, &gamma)?)?;
    let merged: BTreeSet<(String, i32)> = o.tags.iter().filter(|t| t.merged).map(|t| (t.view_id.clone(), t.label)).collect();
    let clean: BTreeSet<(String, i32)> = o.tags.iter().filter(|t| !t.merged).map(|t| (t.view_id.clone(), t.label)).collect();
    let taus = [0.3, 0.5, 0.6, 0.8];
    let mut kept = Vec::new();
    for tau in taus {
        kept.push(filter_observations(&o.obs, &ms, tau)?.1.kept_set());
    }
    let at = &kept[2];
    let recall = merged.iter().filter(|m| !at.contains(*m)).count() as f64 / merged.len() as f64;
    let retention = clean.iter().filter(|m| at.contains(*m)).count() as f64 / clean.len() as f64;
    let mono = kept.windows(2).filter(|w| !w[1].is_subset(&w[0])).count();
    outcome(
        recall >= 0.9 && retention >= 0.95 && mono == 0 && !merged.is_empty(),
        format!(
            "tau 0.6: merged recall {recall:.2} ({} merged), clean retention {retention:.2} ({} clean); kept sizes {:?}, {mono} monotonicity violations",
            merged.len(),
            clean.len(),
            kept.iter().map(|k| k.len()).collect::<Vec<_>>()
        ),
    )
}

/// Brute-force valley: the lowest smoothed bin strictly between the two mode bins.
fn brute_force_valley(values: &[f64], bins: usize, window: usize, modes: [f64; 2]) -> f64 {
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let w = (hi - lo) / bins as f64;
    let mut h = vec![0f64; bins];
    for &v in values {
        h[(((v - lo) / w) as usize).min(bins - 1)] += 1.0;
    }
    let half = window / 2;
    let s: Vec<f64> = (0..bins)
        .map(|i| {
            let (a, b) = (i.saturating_sub(half), (i + window - half).min(bins));
            h[a..b].iter().sum::<f64>() / (b - a) as f64
        })
        .collect();
    let bin = |m: f64| (((m - lo) / w) as usize).min(bins - 1);
    let (a, b) = (bin(modes[0].min(modes[1])), bin(modes[0].max(modes[1])));
    let min = s[a + 1..b].iter().copied().fold(f64::INFINITY, f64::min);
    let at: Vec<usize> = (a + 1..b).filter(|&i| s[i] == min).collect();
    (at[0] + at[at.len() - 1]) as f64 / 2.0
}

fn c9_threshold() -> Result<Outcome> {
    let p = ThresholdParams::default();
    let mut diffs = Vec::new();
    for k in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(900 + k);
        let m1 = rng.random_range(-0.6..-0.2);
        let s1: f64 = rng.random_range(0.05..0.1);
        let s2 = rng.random_range(0.05..0.1);
        let m2 = m1 + rng.random_range(3.5..4.5) * s1.max(s2);
        let w1 = rng.random_range(0.3..0.7);
        let n = 200_000;
        let g1 = Normal::new(m1, s1).unwrap();
        let g2 = Normal::new(m2, s2).unwrap();
        let v: Vec<f64> = (0..n)
            .map(|_| if rng.random_bool(w1) { g1.sample(&mut rng) } else { g2.sample(&mut rng) })
            .collect();
        let t = auto_threshold_values(&v, &p)?;
        let brute = brute_force_valley(&v, p.bins, p.smoothing_window, [m1, m2]);
        diffs.push((t.bin - brute).abs());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let g = Normal::new(0.0, 1.0).unwrap();
    let uni: Vec<f64> = (0..100_000).map(|_| g.sample(&mut rng)).collect();
    let unimodal = auto_threshold_values(&uni, &p);
    let worst = diffs.iter().copied().fold(0.0, f64::max);
    let within_one = diffs.iter().filter(|d| **d <= 1.0).count();
    let err_ok = matches!(unimodal, Err(splatlift::Error::NoValley));
    outcome(
        worst <= 2.0 && err_ok,
        format!(
            "max |selected - brute force| = {worst} bins over 20 mixtures ({within_one} within 1 bin); unimodal input -> {}",
            match &unimodal {
                Err(e) => format!("error '{e}'"),
                Ok(t) => format!("threshold {} (expected an error)", t.value),
            }
        ),
    )
}

fn run_cli(args: &[&str]) -> Result<()> {
    splatlift::cli::run(std::iter::once("splatlift").chain(args.iter().copied()))
}

fn pipeline_miou(dir: &Path, preset: &str, filter: bool) -> Result<f64> {
    let p = |s: &str| dir.join(s).to_string_lossy().into_owned();
    let fx = p("fx");
    let scene = format!("{fx}/scene.ply");
    let cams = format!("{fx}/cameras.txt");
    let sc = ["--scene", scene.as_str(), "--cameras", cams.as_str()];
    if !Path::new(&scene).exists() {
        run_cli(&["synth", "--preset", preset, "--out", &fx])?;
    }
    let field = p("field.flt");
    let labels = format!("{fx}/labels");
    run_cli(&[&["lift"][..], &sc, &["--lambda", "1.2", "--features", &labels, "--out", &field]].concat())?;
    let seg_field = if filter {
        let cf = p("cf");
        run_cli(&[&["cluster-filter"][..], &sc, &["--field", &field, "--labels", &labels, "--tau", "0.6", "--relift", "--out", &cf]].concat())?;
        format!("{cf}/field.flt")
    } else {
        field.clone()
    };
    let seg = p(if filter { "seg" } else { "seg_nofilter" });
    let queries = format!("{fx}/queries.txt");
    run_cli(&[&["segment"][..], &sc, &["--field", &seg_field, "--query", &queries, "--threshold", "auto", "--out", &seg]].concat())?;
    let csv = p(if filter { "miou.csv" } else { "miou_nofilter.csv" });
    run_cli(&["eval", "--pred", &seg, "--gt", &format!("{fx}/gt"), "--out", &csv])?;
    let text = std::fs::read_to_string(&csv).map_err(|e| splatlift::Error::io(&csv, e))?;
    let last = text.lines().find(|l| l.starts_with("all,mean,")).expect("eval writes the overall mean");
    Ok(last.rsplit(',').next().unwrap().parse().unwrap())
}

fn c10_end_to_end() -> Result<Outcome> {
    let t = Instant::now();
    let root = tempfile::tempdir().map_err(|e| splatlift::Error::io("tempdir", e))?;
    let clean = pipeline_miou(&root.path().join("clean"), "two-blob", true)?;
    let noisy_dir = root.path().join("noisy");
    let unfiltered = pipeline_miou(&noisy_dir, "two-blob-noisy", false)?;
    let filtered = pipeline_miou(&noisy_dir, "two-blob-noisy", true)?;
    let secs = t.elapsed().as_secs_f64();
    outcome(
        clean >= 0.95 && filtered - unfiltered > 0.0 && secs < 180.0,
        format!(
            "clean mIoU {clean:.4}; noisy {unfiltered:.4} unfiltered -> {filtered:.4} filtered (margin {:+.4}); {secs:.1}s",
            filtered - unfiltered
        ),
    )
}

fn c11_formats() -> Result<Outcome> {
    let spec = SceneSpec::preset("two-blob-noisy")?;
    let s = make_scene(&spec)?;
    let o = make_observations(&s, &spec)?;
    let d = tempfile::tempdir().map_err(|e| splatlift::Error::io("tempdir", e))?;
    let dir = d.path();
    let mut failures = Vec::new();

    io::write_ply(&dir.join("s.ply"), &s.scene)?;
    if io::read_ply(&dir.join("s.ply"), None)? != s.scene {
        failures.push("ply");
    }
    io::write_cameras(&dir.join("c.txt"), &s.views)?;
    if io::read_cameras(&dir.join("c.txt"))? != s.views {
        failures.push("cameras");
    }
    io::write_observations(&dir.join("obs"), &o.obs)?;
    if io::load_observations(&dir.join("obs"), &s.views)? != o.obs {
        failures.push("label maps");
    }
    io::write_masks(&dir.join("gt"), &o.gt_masks)?;
    if io::read_masks(&dir.join("gt"))? != o.gt_masks {
        failures.push("masks");
    }
    io::write_queries(&dir.join("q.txt"), &o.queries)?;
    if io::read_queries(&dir.join("q.txt"))? != o.queries {
        failures.push("queries");
    }
    let a = build_weight_matrix(&s.scene, &s.views, &LiftConfig::default())?;
    let x = lift_rowsum(&a, &o.obs)?;
    io::write_field(&dir.join("f.flt"), &x)?;
    let back = io::read_field(&dir.join("f.flt"))?;
    io::write_field(&dir.join("g.flt"), &back)?;
    let same = |n1: &str, n2: &str| std::fs::read(dir.join(n1)).ok() == std::fs::read(dir.join(n2)).ok();
    if !same("f.flt", "g.flt") || !same("f.coverage.flt", "g.coverage.flt") || back.observed() != x.observed() {
        failures.push("field");
    }

    let mut identical = true;
    for threads in [1, 2, 8] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let b = pool.install(|| build_weight_matrix(&s.scene, &s.views, &LiftConfig::default()))?;
        identical &= b.bit_identical(&a);
    }
    if !identical {
        failures.push("weight matrix rebuild");
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            "PLY, cameras, label maps, masks, queries and field round-trip bit-exactly; A is byte-identical across runs at 1, 2 and 8 threads".to_string()
        } else {
            format!("mismatch in: {}", failures.join(", "))
        },
    )
}

fn main() {
    let criteria: [(&str, fn() -> Result<Outcome>); 11] = [
        ("Jensen suite", c1_jensen),
        ("Stationarity", c2_stationarity),
        ("Bound chain", c3_bounds),
        ("Bias shrinks with lambda", c4_sweep),
        ("Alpha-sum", c5_alpha),
        ("Monte-Carlo background gradient", c6_mc),
        ("Streaming/matrix equivalence", c7_streaming),
        ("Aggregation filtering", c8_filtering),
        ("Auto-threshold", c9_threshold),
        ("End-to-end", c10_end_to_end),
        ("Format round-trips and determinism", c11_formats),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let (pass, detail) = match f() {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        failed += !pass as usize;
        println!(
            "[{}] {:>2}. {name}: {detail} ({:.2}s)",
            if pass { "PASS" } else { "FAIL" },
            k + 1,
            t.elapsed().as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
