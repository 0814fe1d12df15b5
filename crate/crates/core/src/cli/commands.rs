use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::json;

use super::config::Config;
use super::verify::run_suite;
use super::{Command, SceneArgs};
use crate::aggregate::{cluster_features, filter_observations, project_clusters, validate_tau, MaskSet};
use crate::error::{Error, Result};
use crate::io::{
    create_dir, load_observations, load_observations_discovered, read_cameras, read_field, read_masks, read_ply,
    read_queries, write_cameras, write_field, write_masks, write_observations, write_ply, write_queries,
    FeatureTensor, GrayImage,
};
use crate::model::{CameraView, LiftConfig, SplatScene};
use crate::query::{
    attention_scores, auto_threshold, eval_cosine, eval_miou, lambda_warning, pca_rgb, render_attention, segment,
    MaskIndex,
};
use crate::rasterize::{build_weight_matrix, render, WeightMatrix};
use crate::solver::{lift, lift_streaming, FeatureField, LiftMode, ObservationSet};
use crate::synthbench::{make_observations, make_scene, SceneSpec};

pub(super) fn dispatch(cmd: Command, config: &Config) -> Result<()> {
    match cmd {
        Command::Lift { scene, features, mode, streaming, matrix: _, out, report } => {
            cmd_lift(config, &scene, &features, mode, streaming, &out, report)
        }
        Command::ClusterFilter { scene, field, labels, tau, relift, mode, out } => {
            cmd_cluster_filter(config, &scene, &field, &labels, tau, relift, mode, &out)
        }
        Command::Segment { scene, field, query, threshold, lift_lambda, out } => {
            cmd_segment(config, &scene, &field, &query, &threshold, lift_lambda, &out)
        }
        Command::Eval { pred, rendered, gt, out } => cmd_eval(pred, rendered, &gt, out),
        Command::Synth { spec, preset, out } => cmd_synth(spec, preset, &out),
        Command::Render { scene, field, pca, out } => cmd_render(config, &scene, &field, pca, &out),
        Command::Verify { suite, seed, out } => cmd_verify(&suite, seed, out),
    }
}

struct Inputs {
    scene: SplatScene,
    cameras: Vec<CameraView>,
    cfg: LiftConfig,
}

fn load_inputs(config: &Config, s: &SceneArgs) -> Result<Inputs> {
    let cfg = config.lift_config(s.lambda)?;
    let scene = read_ply(&s.scene, s.kernel.or(config.kernel))?;
    let cameras = read_cameras(&s.cameras)?;
    Ok(Inputs { scene, cameras, cfg })
}

fn check_field(x: &FeatureField, path: &Path, scene: &SplatScene, dim: Option<usize>) -> Result<()> {
    if x.len() != scene.len() {
        return Err(Error::format(
            path,
            "primitive count",
            format!("field has {} rows, scene has {} primitives", x.len(), scene.len()),
        ));
    }
    if let Some(d) = dim {
        if x.dim() != d {
            return Err(Error::format(path, "feature dimension", format!("field has {}, observations have {d}", x.dim())));
        }
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn coverage_stats(x: &FeatureField) -> serde_json::Value {
    let obs: Vec<f64> = (0..x.len()).filter(|&j| x.is_observed(j)).map(|j| x.coverage()[j]).collect();
    if obs.is_empty() {
        return json!({ "min": null, "mean": null, "max": null });
    }
    let min = obs.iter().copied().fold(f64::INFINITY, f64::min);
    let max = obs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    json!({ "min": min, "mean": obs.iter().sum::<f64>() / obs.len() as f64, "max": max })
}

fn cmd_lift(
    config: &Config,
    s: &SceneArgs,
    features: &Path,
    mode: Option<LiftMode>,
    streaming: bool,
    out: &Path,
    report: Option<PathBuf>,
) -> Result<()> {
    let t0 = Instant::now();
    let inp = load_inputs(config, s)?;
    let obs = load_observations(features, &inp.cameras)?;
    let mode = mode.unwrap_or(config.mode);
    let streaming = streaming || config.streaming;
    let t_load = t0.elapsed().as_secs_f64();
    let (x, nnz) = if streaming {
        (lift_streaming(&inp.scene, &inp.cameras, &obs, &inp.cfg, mode)?, None)
    } else {
        let a = build_weight_matrix(&inp.scene, &inp.cameras, &inp.cfg)?;
        (lift(&a, &obs, mode)?, Some(a.nnz()))
    };
    let t_lift = t0.elapsed().as_secs_f64() - t_load;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_field(out, &x)?;
    let rep = json!({
        "lambda": inp.cfg.lambda,
        "mode": mode.to_string(),
        "path": if streaming { "streaming" } else { "matrix" },
        "primitives": x.len(),
        "observed": x.observed_count(),
        "unobserved": x.len() - x.observed_count(),
        "views": inp.cameras.len(),
        "rays": obs.rows(),
        "observed_rays": obs.observed_rows(),
        "feature_dim": x.dim(),
        "nnz": nnz,
        "coverage": coverage_stats(&x),
        "timing_seconds": { "load": t_load, "lift": t_lift },
    });
    let rpath = report.unwrap_or_else(|| sibling(out, ".report.json"));
    write_text(&rpath, &(serde_json::to_string_pretty(&rep).expect("report serializes") + "\n"))?;
    println!(
        "lifted {} primitives ({} observed) from {} rays in {} views -> {}",
        x.len(),
        x.observed_count(),
        obs.rows(),
        inp.cameras.len(),
        out.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_cluster_filter(
    config: &Config,
    s: &SceneArgs,
    field: &Path,
    labels: &Path,
    tau: Option<f64>,
    relift: bool,
    mode: Option<LiftMode>,
    out: &Path,
) -> Result<()> {
    let tau = tau.unwrap_or(config.tau);
    validate_tau(tau)?;
    config.cluster.validate()?;
    let inp = load_inputs(config, s)?;
    let obs = load_observations(labels, &inp.cameras)?;
    if !obs.is_labeled() {
        return Err(Error::invalid(format!(
            "{}: cluster-filter needs label-backed observations (<view>.lbl + .lft); dense features have no masks to filter",
            labels.display()
        )));
    }
    let x = read_field(field)?;
    check_field(&x, field, &inp.scene, Some(obs.dim()))?;
    let a = build_weight_matrix(&inp.scene, &inp.cameras, &inp.cfg)?;
    let gamma = cluster_features(&x, &config.cluster)?;
    let kappa = project_clusters(&a, &gamma)?;
    let masks = MaskSet::new(&obs, &kappa)?;
    let (filtered, report) = filter_observations(&obs, &masks, tau)?;
    create_dir(out)?;
    write_observations(&out.join("labels"), &filtered)?;
    write_text(&out.join("masks.csv"), &report.to_csv())?;
    let n_clusters = gamma.labels.iter().filter(|&&l| l >= 0).collect::<std::collections::BTreeSet<_>>().len();
    println!(
        "{} clusters ({} noise primitives); kept {} of {} masks at tau {tau}",
        n_clusters,
        gamma.noise_count(),
        report.kept(),
        report.decisions.len()
    );
    if relift {
        let x2 = lift(&a, &filtered, mode.unwrap_or(config.mode))?;
        let p = out.join("field.flt");
        write_field(&p, &x2)?;
        println!("re-lifted {} primitives ({} observed) -> {}", x2.len(), x2.observed_count(), p.display());
    }
    Ok(())
}

enum ThresholdChoice {
    Auto,
    Fixed(f64),
}

fn parse_threshold(s: &str) -> Result<ThresholdChoice> {
    if s == "auto" {
        return Ok(ThresholdChoice::Auto);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(ThresholdChoice::Fixed(v)),
        _ => Err(Error::invalid(format!("threshold must be 'auto' or a number, got '{s}'"))),
    }
}

fn cmd_segment(
    config: &Config,
    s: &SceneArgs,
    field: &Path,
    query: &Path,
    threshold: &str,
    lift_lambda: Option<f64>,
    out: &Path,
) -> Result<()> {
    let choice = parse_threshold(threshold)?;
    config.threshold.validate()?;
    let inp = load_inputs(config, s)?;
    let queries = read_queries(query)?;
    let x = read_field(field)?;
    check_field(&x, field, &inp.scene, None)?;
    if let Some(q) = queries.iter().find(|q| q.vector().len() != x.dim()) {
        return Err(Error::format(
            query,
            format!("query {}", q.name),
            format!("{} components, field dimension is {}", q.vector().len(), x.dim()),
        ));
    }
    let a = build_weight_matrix(&inp.scene, &inp.cameras, &inp.cfg)?;
    if let Some(w) = lambda_warning(&a, lift_lambda.unwrap_or(inp.cfg.lambda)) {
        log::warn!("{w}");
    }
    let mut masks = MaskIndex::new();
    let mut csv = String::from("query,view_id,threshold,mode\n");
    for q in &queries {
        let scores = attention_scores(&x, q)?;
        let adir = out.join("attention").join(&q.name);
        create_dir(&adir)?;
        for map in render_attention(&a, &scores)? {
            let (t, how) = match choice {
                ThresholdChoice::Fixed(t) => (t, "fixed"),
                ThresholdChoice::Auto => {
                    let t = auto_threshold(&map, &config.threshold).map_err(|e| {
                        Error::invalid(format!("query '{}', view '{}': {e}", q.name, map.view_id))
                    })?;
                    (t.value, "auto")
                }
            };
            csv.push_str(&format!("{},{},{t},{how}\n", q.name, map.view_id));
            GrayImage::from_unit(map.width, map.height, &map.display())?
                .write(&adir.join(format!("{}.pgm", map.view_id)))?;
            let raw = map.raw.iter().map(|&v| v as f32).collect();
            FeatureTensor::new(map.height, map.width, 1, raw)?.write(&adir.join(format!("{}.raw.flt", map.view_id)))?;
            masks.insert((q.name.clone(), map.view_id.clone()), segment(&map, t));
        }
    }
    write_masks(&out.join("masks"), &masks)?;
    write_text(&out.join("thresholds.csv"), &csv)?;
    println!("{} masks for {} queries -> {}", masks.len(), queries.len(), out.display());
    Ok(())
}

fn emit(csv: &str, out: Option<PathBuf>) -> Result<()> {
    match out {
        Some(p) => write_text(&p, csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn cmd_eval(pred: Option<PathBuf>, rendered: Option<PathBuf>, gt: &Path, out: Option<PathBuf>) -> Result<()> {
    if let Some(pred) = pred {
        let dir = if pred.join("masks").is_dir() { pred.join("masks") } else { pred };
        let p = read_masks(&dir)?;
        let g = read_masks(gt)?;
        if !p.keys().any(|k| g.contains_key(k)) {
            return Err(Error::invalid(format!(
                "{} and {} share no (query, view) pairs",
                dir.display(),
                gt.display()
            )));
        }
        for ((q, v), m) in &p {
            if let Some(gm) = g.get(&(q.clone(), v.clone())) {
                if (gm.width, gm.height) != (m.width, m.height) {
                    return Err(Error::invalid(format!(
                        "query '{q}', view '{v}': prediction is {}x{}, ground truth {}x{}",
                        m.width, m.height, gm.width, gm.height
                    )));
                }
            }
        }
        let r = eval_miou(&p, &g)?;
        for w in &r.warnings {
            log::warn!("{w}");
        }
        emit(&r.to_csv(), out)?;
        eprintln!("mIoU {:.4}", r.miou);
        return Ok(());
    }
    let rendered = rendered.expect("clap requires --pred or --rendered");
    let g = load_observations_discovered(gt)?;
    let r = load_observations_discovered(&rendered)?;
    if r.views() != g.views() {
        return Err(Error::invalid(format!(
            "{} and {} do not hold the same views at the same sizes",
            rendered.display(),
            gt.display()
        )));
    }
    let rep = eval_cosine(&r.to_dense(), &g)?;
    let csv = format!(
        "metric,value\nmean_cosine,{:.6}\nevaluated,{}\nzero_norm,{}\nunlabeled,{}\n",
        rep.mean, rep.evaluated, rep.zero_norm, rep.unlabeled
    );
    emit(&csv, out)
}

fn cmd_synth(spec: Option<PathBuf>, preset: Option<String>, out: &Path) -> Result<()> {
    let spec = match (spec, preset) {
        (Some(p), _) => SceneSpec::load(&p)?,
        (None, Some(name)) => SceneSpec::preset(&name)?,
        (None, None) => return Err(Error::invalid("synth needs --spec or --preset")),
    };
    let synth = make_scene(&spec)?;
    let obs = make_observations(&synth, &spec)?;
    create_dir(out)?;
    write_text(&out.join("spec.toml"), &spec.to_toml())?;
    write_ply(&out.join("scene.ply"), &synth.scene)?;
    write_cameras(&out.join("cameras.txt"), &synth.views)?;
    write_observations(&out.join("labels"), &obs.obs)?;
    write_queries(&out.join("queries.txt"), &obs.queries)?;
    write_masks(&out.join("gt"), &obs.gt_masks)?;
    write_text(&out.join("tags.csv"), &obs.tags_csv())?;
    let ids: String = synth.object_ids.iter().map(|k| format!("{k}\n")).collect();
    write_text(&out.join("object_ids.txt"), &ids)?;
    println!(
        "{} primitives, {} views, {} masks ({} merged) -> {}",
        synth.scene.len(),
        synth.views.len(),
        obs.tags.len(),
        obs.tags.iter().filter(|t| t.merged).count(),
        out.display()
    );
    Ok(())
}

fn write_view_tensors(dir: &Path, a: &WeightMatrix, rows: &crate::model::RowMatrix, suffix: &str) -> Result<()> {
    let dense = ObservationSet::dense(rows.clone(), a.views().to_vec())?;
    for v in dense.views() {
        let data: Vec<f32> = v.rows().flat_map(|i| rows.row(i).iter().map(|&x| x as f32)).collect();
        FeatureTensor::new(v.height, v.width, rows.cols() as u32, data)?.write(&dir.join(format!("{}{suffix}", v.view_id)))?;
    }
    Ok(())
}

fn cmd_render(config: &Config, s: &SceneArgs, field: &Path, pca: bool, out: &Path) -> Result<()> {
    let inp = load_inputs(config, s)?;
    let x = read_field(field)?;
    check_field(&x, field, &inp.scene, None)?;
    let a = build_weight_matrix(&inp.scene, &inp.cameras, &inp.cfg)?;
    create_dir(out)?;
    let r = render(&a, x.values(), &vec![0.0; x.dim()])?;
    write_view_tensors(out, &a, &r, ".flt")?;
    if pca {
        let c = render(&a, &pca_rgb(&x)?, &[0.0; 3])?;
        let dir = out.join("pca");
        create_dir(&dir)?;
        write_view_tensors(&dir, &a, &c, ".flt")?;
    }
    println!("rendered {} views -> {}", a.views().len(), out.display());
    Ok(())
}

fn cmd_verify(suite: &str, seed: u64, out: Option<PathBuf>) -> Result<()> {
    let rep = run_suite(suite, seed)?;
    for d in &rep.details {
        println!("{d}");
    }
    for v in &rep.violations {
        println!("VIOLATED: {v}");
    }
    println!("{}", rep.summary);
    if let (Some(p), Some(csv)) = (out, &rep.csv) {
        write_text(&p, csv)?;
    }
    if rep.passed() {
        Ok(())
    } else {
        Err(Error::InvariantViolation(format!("suite {suite}: {} violations", rep.violations.len())))
    }
}
