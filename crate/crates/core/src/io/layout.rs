//! Directory layouts: per-view observation files matched to cameras by
//! filename stem, per-query mask directories, and query lists.

use std::path::{Path, PathBuf};

use super::pgm::GrayImage;
use super::tensor::{FeatureTensor, LabelFeatures, LabelMap};
use crate::error::{Error, Result};
use crate::model::{CameraView, RowMatrix};
use crate::query::{MaskIndex, QueryEmbedding};
use crate::rasterize::ViewRange;
use crate::solver::ObservationSet;

pub fn dense_path(dir: &Path, view_id: &str) -> PathBuf {
    dir.join(format!("{view_id}.flt"))
}

pub fn label_path(dir: &Path, view_id: &str) -> PathBuf {
    dir.join(format!("{view_id}.lbl"))
}

pub fn table_path(dir: &Path, view_id: &str) -> PathBuf {
    dir.join(format!("{view_id}.lft"))
}

fn list_dir(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        out.push(e.map_err(|e| Error::io(dir, e))?.path());
    }
    out.sort();
    Ok(out)
}

/// View ids of the observation files in `dir`, sorted.
pub fn observation_stems(dir: &Path) -> Result<Vec<String>> {
    let mut ids: Vec<String> = list_dir(dir)?
        .into_iter()
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("flt" | "lbl")))
        .filter_map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()))
        .collect();
    ids.dedup();
    Ok(ids)
}

enum ViewObs {
    Dense(FeatureTensor),
    Labeled(LabelMap, LabelFeatures),
}

fn read_view(dir: &Path, view_id: &str) -> Result<(ViewObs, PathBuf)> {
    let lbl = label_path(dir, view_id);
    if lbl.exists() {
        let map = LabelMap::read(&lbl)?;
        let tpath = table_path(dir, view_id);
        if !tpath.exists() {
            return Err(Error::format(&tpath, "label table", "missing companion table for label map"));
        }
        let table = LabelFeatures::read(&tpath)?;
        for &l in &map.labels {
            if l >= 0 && !table.entries.contains_key(&l) {
                return Err(Error::format(&lbl, "payload", format!("label {l} has no entry in {}", tpath.display())));
            }
        }
        return Ok((ViewObs::Labeled(map, table), lbl));
    }
    let flt = dense_path(dir, view_id);
    if flt.exists() {
        return Ok((ViewObs::Dense(FeatureTensor::read(&flt)?), flt));
    }
    Err(Error::format(
        dir,
        format!("view {view_id}"),
        format!("no observation file ({view_id}.flt or {view_id}.lbl)"),
    ))
}

fn load(dir: &Path, ids: &[(String, Option<(u32, u32)>)]) -> Result<ObservationSet> {
    if ids.is_empty() {
        return Err(Error::format(dir, "views", "no observation files"));
    }
    let mut views = Vec::new();
    let mut start = 0;
    let mut dense: Vec<f64> = Vec::new();
    let mut labels = Vec::new();
    let mut tables = Vec::new();
    let mut dim: Option<(usize, PathBuf)> = None;
    let mut labeled: Option<bool> = None;
    for (id, size) in ids {
        let (obs, path) = read_view(dir, id)?;
        let (h, w, f, is_labeled) = match &obs {
            ViewObs::Dense(t) => (t.height, t.width, t.channels as usize, false),
            ViewObs::Labeled(m, t) => (m.height, m.width, t.dim as usize, true),
        };
        if let Some((cw, ch)) = size {
            if (w, h) != (*cw, *ch) {
                return Err(Error::format(
                    &path,
                    "header",
                    format!("{w}x{h} does not match camera {id} ({cw}x{ch})"),
                ));
            }
        }
        match &dim {
            Some((d, first)) if *d != f => {
                return Err(Error::format(
                    &path,
                    "feature dimension",
                    format!("{f} differs from {d} in {}", first.display()),
                ))
            }
            None => dim = Some((f, path.clone())),
            _ => {}
        }
        if labeled.is_some_and(|l| l != is_labeled) {
            return Err(Error::format(&path, "kind", "mixes dense and label-backed views in one directory"));
        }
        labeled = Some(is_labeled);
        match obs {
            ViewObs::Dense(t) => dense.extend(t.data.iter().map(|&v| v as f64)),
            ViewObs::Labeled(m, t) => {
                labels.extend(m.labels);
                tables.push(t.to_table());
            }
        }
        let v = ViewRange { view_id: id.clone(), start, width: w, height: h };
        start += v.len();
        views.push(v);
    }
    let dim = dim.map(|d| d.0).unwrap_or(0);
    if labeled == Some(true) {
        ObservationSet::labeled(labels, tables, dim, views)
    } else {
        ObservationSet::dense(RowMatrix::from_vec(start, dim, dense)?, views)
    }
}

/// Observations for each camera, from `<view_id>.lbl` + `.lft` or `<view_id>.flt`.
pub fn load_observations(dir: &Path, cameras: &[CameraView]) -> Result<ObservationSet> {
    let ids: Vec<_> = cameras.iter().map(|c| (c.view_id.clone(), Some((c.width, c.height)))).collect();
    load(dir, &ids)
}

/// Observations for every view file in `dir`, in sorted view-id order.
pub fn load_observations_discovered(dir: &Path) -> Result<ObservationSet> {
    let ids: Vec<_> = observation_stems(dir)?.into_iter().map(|s| (s, None)).collect();
    load(dir, &ids)
}

/// Write one file set per view; values are rounded to f32.
pub fn write_observations(dir: &Path, obs: &ObservationSet) -> Result<()> {
    create_dir(dir)?;
    for (k, v) in obs.views().iter().enumerate() {
        match (obs.labels(), obs.tables()) {
            (Some(labels), Some(tables)) => {
                LabelMap::new(v.height, v.width, labels[v.rows()].to_vec())?.write(&label_path(dir, &v.view_id))?;
                LabelFeatures::from_table(&tables[k], obs.dim())?.write(&table_path(dir, &v.view_id))?;
            }
            _ => {
                let all = obs.dense_values().expect("dense observations");
                let rows: Vec<f32> = v.rows().flat_map(|i| all.row(i).iter().map(|&x| x as f32)).collect();
                FeatureTensor::new(v.height, v.width, obs.dim() as u32, rows)?.write(&dense_path(dir, &v.view_id))?;
            }
        }
    }
    Ok(())
}

pub fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Masks as `<dir>/<query>/<view_id>.pgm`.
pub fn write_masks(dir: &Path, masks: &MaskIndex) -> Result<()> {
    for ((q, v), m) in masks {
        let qdir = dir.join(q);
        create_dir(&qdir)?;
        GrayImage::from_mask(m).write(&qdir.join(format!("{v}.pgm")))?;
    }
    Ok(())
}

pub fn read_masks(dir: &Path) -> Result<MaskIndex> {
    let mut out = MaskIndex::new();
    for qdir in list_dir(dir)?.into_iter().filter(|p| p.is_dir()) {
        let q = qdir.file_name().unwrap().to_string_lossy().into_owned();
        for f in list_dir(&qdir)? {
            if f.extension().and_then(|e| e.to_str()) != Some("pgm") {
                continue;
            }
            let v = f.file_stem().unwrap().to_string_lossy().into_owned();
            out.insert((q.clone(), v), GrayImage::read(&f)?.to_mask());
        }
    }
    if out.is_empty() {
        return Err(Error::format(dir, "masks", "no <query>/<view>.pgm files"));
    }
    Ok(out)
}

/// One query per line: `name v1 v2 ... vF`; `#` starts a comment.
pub fn encode_queries(queries: &[QueryEmbedding]) -> String {
    let mut s = String::from("# name followed by the embedding components\n");
    for q in queries {
        s.push_str(&q.name);
        for v in q.raw() {
            s.push_str(&format!(" {v}"));
        }
        s.push('\n');
    }
    s
}

pub fn decode_queries(text: &str, path: &Path) -> Result<Vec<QueryEmbedding>> {
    let mut out: Vec<QueryEmbedding> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let field = format!("line {} query", n + 1);
        let mut tok = line.split_whitespace();
        let name = tok.next().unwrap();
        if name.contains('/') || name.contains('\\') {
            return Err(Error::format(path, field, format!("name '{name}' must not contain path separators")));
        }
        let vals = tok
            .map(|t| t.parse::<f64>().map_err(|_| Error::format(path, &field, format!("'{t}' is not a number"))))
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = out.first() {
            if first.vector().len() != vals.len() {
                return Err(Error::format(
                    path,
                    field,
                    format!("{} components, expected {}", vals.len(), first.vector().len()),
                ));
            }
        }
        if out.iter().any(|q| q.name == name) {
            return Err(Error::format(path, field, format!("duplicate query '{name}'")));
        }
        out.push(QueryEmbedding::new(name, vals).map_err(|e| Error::format(path, &field, e.to_string()))?);
    }
    if out.is_empty() {
        return Err(Error::format(path, "queries", "file lists no queries"));
    }
    Ok(out)
}

pub fn read_queries(path: &Path) -> Result<Vec<QueryEmbedding>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    decode_queries(&text, path)
}

pub fn write_queries(path: &Path, queries: &[QueryEmbedding]) -> Result<()> {
    std::fs::write(path, encode_queries(queries)).map_err(|e| Error::io(path, e))
}
