use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dataset::DatasetLabels;
use crate::error::{Error, Result};
use crate::inference::{GaussianParams, VariationalState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingKind {
    Participant,
    Stimulus,
}

impl EmbeddingKind {
    fn name(self) -> &'static str {
        match self {
            EmbeddingKind::Participant => "participant",
            EmbeddingKind::Stimulus => "stimulus",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRow {
    pub kind: EmbeddingKind,
    pub index: usize,
    pub label: String,
    pub mean: Vec<f64>,
    pub sigma: Vec<f64>,
}

/// One row per participant, then one per stimulus.
pub fn export_embeddings(state: &VariationalState, labels: &DatasetLabels) -> Vec<EmbeddingRow> {
    let row = |kind, index, label, g: &GaussianParams| EmbeddingRow {
        kind,
        index,
        label,
        mean: g.mean.data().to_vec(),
        sigma: g.sigma().data().to_vec(),
    };
    let participants = state
        .participants
        .iter()
        .enumerate()
        .map(|(p, g)| row(EmbeddingKind::Participant, p, labels.participant(p), g));
    let stimuli = state
        .stimuli
        .iter()
        .enumerate()
        .map(|(s, g)| row(EmbeddingKind::Stimulus, s, labels.stimulus(s), g));
    participants.chain(stimuli).collect()
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        offset: e.position().map_or(0, |p| p.byte()),
        message: e.to_string(),
    }
}

/// Columns `kind,index,label,mean_0..,sigma_0..`.
pub fn write_embeddings_csv(path: &Path, rows: &[EmbeddingRow]) -> Result<()> {
    let d = rows.first().map_or(0, |r| r.mean.len());
    if rows.iter().any(|r| r.mean.len() != d || r.sigma.len() != d) {
        return Err(Error::dim("export_embeddings", "rows have different dimensions"));
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = vec!["kind".to_string(), "index".into(), "label".into()];
    header.extend((0..d).map(|i| format!("mean_{i}")));
    header.extend((0..d).map(|i| format!("sigma_{i}")));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        let mut rec = vec![r.kind.name().to_string(), r.index.to_string(), r.label.clone()];
        rec.extend(r.mean.iter().chain(&r.sigma).map(|x| x.to_string()));
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_embeddings_csv(path: &Path) -> Result<Vec<EmbeddingRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let width = r.headers().map_err(|e| csv_err(path, e))?.len();
    if width < 3 || (width - 3) % 2 != 0 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset: 0,
            message: format!("unexpected header with {width} columns"),
        });
    }
    let d = (width - 3) / 2;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let offset = rec.position().map_or(0, |p| p.byte());
        let bad = |message: String| Error::Format {
            path: path.to_path_buf(),
            offset,
            message,
        };
        let kind = match &rec[0] {
            "participant" => EmbeddingKind::Participant,
            "stimulus" => EmbeddingKind::Stimulus,
            other => return Err(bad(format!("unknown kind {other:?}"))),
        };
        let index = rec[1].parse().map_err(|e| bad(format!("index: {e}")))?;
        let nums: Vec<f64> = (3..width)
            .map(|i| rec[i].parse::<f64>().map_err(|e| bad(format!("column {i}: {e}"))))
            .collect::<Result<_>>()?;
        rows.push(EmbeddingRow {
            kind,
            index,
            label: rec[2].to_string(),
            mean: nums[..d].to_vec(),
            sigma: nums[d..].to_vec(),
        });
    }
    Ok(rows)
}

const PALETTE: [&str; 8] = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666"];

fn panel(out: &mut String, rows: &[&EmbeddingRow], x0: f64, title: &str) {
    let size = 400.0;
    let pad = 30.0;
    let coord = |r: &EmbeddingRow, i: usize| r.mean.get(i).copied().unwrap_or(0.0);
    let spread = |r: &EmbeddingRow, i: usize| r.sigma.get(i).copied().unwrap_or(0.0);
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for r in rows {
        for i in 0..2 {
            lo[i] = lo[i].min(coord(r, i) - spread(r, i));
            hi[i] = hi[i].max(coord(r, i) + spread(r, i));
        }
    }
    let range = (0..2).map(|i| hi[i] - lo[i]).fold(1e-9, f64::max);
    let scale = (size - 2.0 * pad) / range;
    let px = |x: f64| x0 + pad + (x - lo[0]) * scale;
    let py = |y: f64| size - pad - (y - lo[1]) * scale;
    let mut labels: Vec<&str> = rows.iter().map(|r| r.label.as_str()).collect();
    labels.sort_unstable();
    labels.dedup();
    let _ = writeln!(out, r#"<text x="{}" y="18" font-size="14">{title}</text>"#, x0 + pad);
    for r in rows {
        let c = PALETTE[labels.binary_search(&r.label.as_str()).unwrap_or(0) % PALETTE.len()];
        let (cx, cy) = (px(coord(r, 0)), py(coord(r, 1)));
        let _ = writeln!(
            out,
            r#"<ellipse cx="{cx:.2}" cy="{cy:.2}" rx="{:.2}" ry="{:.2}" fill="{c}" fill-opacity="0.2" stroke="{c}"/>"#,
            spread(r, 0) * scale,
            spread(r, 1) * scale
        );
        let _ = writeln!(out, r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="3" fill="{c}"><title>{}</title></circle>"#, r.label);
    }
}

/// Two scatter panels, participants left and stimuli right, over the first
/// two embedding dimensions, each point with its 1-σ ellipse and colored by
/// label.
pub fn embeddings_svg(rows: &[EmbeddingRow]) -> String {
    let mut out = String::from(r#"<svg xmlns="http://www.w3.org/2000/svg" width="800" height="400">"#);
    out.push('\n');
    let parts: Vec<&EmbeddingRow> = rows.iter().filter(|r| r.kind == EmbeddingKind::Participant).collect();
    let stims: Vec<&EmbeddingRow> = rows.iter().filter(|r| r.kind == EmbeddingKind::Stimulus).collect();
    panel(&mut out, &parts, 0.0, "participants");
    panel(&mut out, &stims, 400.0, "stimuli");
    out.push_str("</svg>\n");
    out
}
