//! File formats: IDX datasets, CSV tables, SVG plots and checkpoints.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ccl_core::data::{self, IdxImages, LabeledDataset};
use ccl_core::DenseMatrix;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::report::{EpochRecord, RecallEntry};

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| LabError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| LabError::io(path, e))
}

pub fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| LabError::io(path, e))
}

/// Loads an IDX image file and its label file as one clean dataset.
pub fn read_idx_dataset(images: &Path, labels: &Path) -> Result<LabeledDataset> {
    Ok(data::dataset_from_idx(&read_bytes(images)?, &read_bytes(labels)?)?)
}

/// Writes images (row-major `u8` pixels) and labels as an IDX file pair.
pub fn write_idx_pair(images_path: &Path, labels_path: &Path, images: &IdxImages, labels: &[u8]) -> Result<()> {
    fs::write(images_path, data::encode_idx_images(images)).map_err(|e| LabError::io(images_path, e))?;
    fs::write(labels_path, data::encode_idx_labels(labels)).map_err(|e| LabError::io(labels_path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(LabError::from)
}

/// `epoch,loss,recall@k...` with one row per epoch.
pub fn write_metrics_csv(path: &Path, ks: &[usize], epochs: &[EpochRecord]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["epoch".to_owned(), "loss".to_owned()];
    header.extend(ks.iter().map(|k| format!("recall@{k}")));
    w.write_record(&header)?;
    for e in epochs {
        let mut row = vec![e.epoch.to_string(), e.loss.to_string()];
        row.extend(e.recall.iter().map(|r| r.value.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| LabError::io(path, e))
}

#[derive(Serialize)]
struct MetricRow<'a> {
    metric: &'a str,
    k: usize,
    value: f64,
}

/// Final retrieval metrics as `metric,k,value` CSV and the same rows as JSON.
pub fn write_final_metrics(csv_path: &Path, json_path: &Path, recall: &[RecallEntry]) -> Result<()> {
    let rows: Vec<MetricRow> = recall.iter().map(|r| MetricRow { metric: "recall", k: r.k, value: r.value }).collect();
    let mut w = csv_writer(csv_path)?;
    for row in &rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| LabError::io(csv_path, e))?;
    write_text(json_path, &serde_json::to_string_pretty(&serde_json::json!({ "metrics": rows }))?)
}

/// One row per class: `class_id,c0..c{d-1}`.
pub fn export_centers_csv(path: &Path, class_ids: &[usize], centers: &DenseMatrix) -> Result<()> {
    if class_ids.len() != centers.rows() {
        return Err(ccl_core::Error::DimensionMismatch { expected: centers.rows(), actual: class_ids.len() }.into());
    }
    let mut w = csv_writer(path)?;
    let mut header = vec!["class_id".to_owned()];
    header.extend((0..centers.cols()).map(|j| format!("c{j}")));
    w.write_record(&header)?;
    for (id, row) in class_ids.iter().zip(centers.iter_rows()) {
        let mut rec = vec![id.to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| LabError::io(path, e))
}

pub fn import_centers_csv(path: &Path) -> Result<(Vec<usize>, DenseMatrix)> {
    let mut r = csv::Reader::from_path(path)?;
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let mut fields = rec.iter();
        let id = fields.next().and_then(|f| f.parse().ok()).ok_or_else(|| LabError::format(path, "bad class_id"))?;
        let row: Vec<f64> = fields
            .map(|f| f.parse().map_err(|_| LabError::format(path, format!("bad float {f:?}"))))
            .collect::<Result<_>>()?;
        ids.push(id);
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(LabError::format(path, "no centers"));
    }
    Ok((ids, DenseMatrix::from_rows(&rows)?))
}

/// `id,true_label,train_label,split,f0..f{d-1}`.
pub fn export_dataset_csv(path: &Path, ds: &LabeledDataset) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header: Vec<String> = ["id", "true_label", "train_label", "split"].map(String::from).to_vec();
    header.extend((0..ds.dim()).map(|j| format!("f{j}")));
    w.write_record(&header)?;
    for (i, row) in ds.features().iter_rows().enumerate() {
        let mut rec = vec![
            i.to_string(),
            ds.true_labels()[i].to_string(),
            ds.train_labels()[i].to_string(),
            ds.split_tags()[i].as_str().to_owned(),
        ];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| LabError::io(path, e))
}

const PALETTE: [&str; 10] =
    ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"];

fn class_color(rank: usize) -> String {
    match PALETTE.get(rank) {
        Some(c) => (*c).to_owned(),
        None => format!("hsl({},60%,45%)", (rank * 137) % 360),
    }
}

/// Writes `<stem>.svg` (one color per class, legend, unit circle) and
/// `<stem>.csv` (`x,y,label`). Returns both paths.
pub fn export_scatter_2d(embeddings: &DenseMatrix, labels: &[usize], stem: &Path) -> Result<(PathBuf, PathBuf)> {
    if embeddings.cols() != 2 {
        return Err(ccl_core::Error::WrongDimension { expected: 2, actual: embeddings.cols() }.into());
    }
    if labels.len() != embeddings.rows() {
        return Err(ccl_core::Error::DimensionMismatch { expected: embeddings.rows(), actual: labels.len() }.into());
    }
    let svg_path = stem.with_extension("svg");
    let csv_path = stem.with_extension("csv");

    let mut w = csv_writer(&csv_path)?;
    w.write_record(["x", "y", "label"])?;
    for (row, y) in embeddings.iter_rows().zip(labels) {
        w.write_record([row[0].to_string(), row[1].to_string(), y.to_string()])?;
    }
    w.flush().map_err(|e| LabError::io(&csv_path, e))?;

    write_text(&svg_path, &render_scatter(embeddings, labels))?;
    Ok((svg_path, csv_path))
}

fn render_scatter(embeddings: &DenseMatrix, labels: &[usize]) -> String {
    const SIZE: f64 = 480.0;
    const PAD: f64 = 20.0;
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let extent = embeddings.as_slice().iter().fold(1.0f64, |m, v| m.max(v.abs())) * 1.05;
    let half = SIZE / 2.0;
    let px = |v: f64| PAD + half + v / extent * half;
    let py = |v: f64| PAD + half - v / extent * half;
    let legend_x = SIZE + 2.0 * PAD;
    let width = legend_x + 120.0;
    let height = (SIZE + 2.0 * PAD).max(PAD + 18.0 * classes.len() as f64 + PAD);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{width:.0}" height="{height:.0}" fill="white"/>"#);
    let r = half / extent;
    let _ = writeln!(
        s,
        r##"<ellipse class="unit-circle" cx="{:.3}" cy="{:.3}" rx="{r:.3}" ry="{r:.3}" fill="none" stroke="#444" stroke-dasharray="4 3"/>"##,
        px(0.0),
        py(0.0)
    );
    for (row, y) in embeddings.iter_rows().zip(labels) {
        let rank = classes.binary_search(y).expect("label listed");
        let _ = writeln!(
            s,
            r#"<circle cx="{:.3}" cy="{:.3}" r="2" fill="{}" fill-opacity="0.7"/>"#,
            px(row[0]),
            py(row[1]),
            class_color(rank)
        );
    }
    let _ = writeln!(s, r#"<g class="legend" font-family="sans-serif" font-size="12">"#);
    for (rank, c) in classes.iter().enumerate() {
        let ty = PAD + 18.0 * rank as f64;
        let _ = writeln!(
            s,
            r#"<g class="legend-entry"><rect x="{legend_x:.0}" y="{ty:.0}" width="12" height="12" fill="{}"/><text x="{:.0}" y="{:.0}">class {c}</text></g>"#,
            class_color(rank),
            legend_x + 18.0,
            ty + 10.0
        );
    }
    s.push_str("</g>\n</svg>\n");
    s
}

/// SVG heat grid of `values[row][col]` with row and column labels.
pub fn render_heat_grid(title: &str, row_name: &str, rows: &[f64], col_name: &str, cols: &[f64], values: &[Vec<f64>]) -> String {
    const CELL: f64 = 64.0;
    const LEFT: f64 = 90.0;
    const TOP: f64 = 50.0;
    let (lo, hi) = values.iter().flatten().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let width = LEFT + CELL * cols.len() as f64 + 20.0;
    let height = TOP + CELL * rows.len() as f64 + 40.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<text x="{LEFT:.0}" y="20">{title}</text>"#);
    for (j, c) in cols.iter().enumerate() {
        let _ = writeln!(s, r#"<text x="{:.0}" y="{:.0}" text-anchor="middle">{col_name}={c}</text>"#, LEFT + CELL * (j as f64 + 0.5), TOP - 8.0);
    }
    for (i, r) in rows.iter().enumerate() {
        let y = TOP + CELL * i as f64;
        let _ = writeln!(s, r#"<text x="{:.0}" y="{:.0}" text-anchor="end">{row_name}={r}</text>"#, LEFT - 8.0, y + CELL / 2.0 + 4.0);
        for (j, v) in values[i].iter().enumerate() {
            let t = (v - lo) / span;
            let shade = (255.0 - 180.0 * t).round() as u8;
            let x = LEFT + CELL * j as f64;
            let _ = writeln!(
                s,
                r#"<rect class="cell" x="{x:.0}" y="{y:.0}" width="{CELL:.0}" height="{CELL:.0}" fill="rgb({shade},{shade},255)" stroke="white"/><text x="{:.0}" y="{:.0}" text-anchor="middle">{v:.3}</text>"#,
                x + CELL / 2.0,
                y + CELL / 2.0 + 4.0
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scatter_structure_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        let emb = DenseMatrix::from_rows(&[[0.5, 0.5], [-1.0, 0.2], [2.0, -3.0]]).unwrap();
        let (svg, csv) = export_scatter_2d(&emb, &[3, 7, 3], &dir.path().join("a")).unwrap();
        let text = fs::read_to_string(&svg).unwrap();
        assert_eq!(text.matches("<circle").count(), 3);
        assert_eq!(text.matches("class=\"legend-entry\"").count(), 2);
        assert_eq!(text.matches("unit-circle").count(), 1);
        assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 4);
        let (svg2, csv2) = export_scatter_2d(&emb, &[3, 7, 3], &dir.path().join("b")).unwrap();
        assert_eq!(fs::read(&svg).unwrap(), fs::read(&svg2).unwrap());
        assert_eq!(fs::read(&csv).unwrap(), fs::read(&csv2).unwrap());
    }

    #[test]
    fn scatter_rejects_other_widths() {
        let dir = tempfile::tempdir().unwrap();
        let emb = DenseMatrix::zeros(2, 3);
        let err = export_scatter_2d(&emb, &[0, 1], &dir.path().join("a")).unwrap_err();
        assert!(matches!(err, LabError::Core(ccl_core::Error::WrongDimension { expected: 2, actual: 3 })));
    }

    #[test]
    fn centers_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        let c = DenseMatrix::from_rows(&[[0.1, -1.0 / 3.0], [1e-300, 7.25]]).unwrap();
        export_centers_csv(&path, &[4, 9], &c).unwrap();
        assert_eq!(import_centers_csv(&path).unwrap(), (vec![4, 9], c));
    }

    #[test]
    fn dataset_csv_header_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let ds = data::generate_disjoint_mixture(2, 1, 3, 2, 0.1, 0).unwrap();
        export_dataset_csv(&path, &ds).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "id,true_label,train_label,split,f0,f1,f2");
        assert_eq!(lines.count(), 6);
        assert!(text.contains(",test,"));
    }

    #[test]
    fn metrics_csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let rec = |k, value| RecallEntry { k, value };
        let epochs = vec![EpochRecord { epoch: 1, loss: 0.5, recall: vec![rec(1, 0.25), rec(2, 0.5), rec(4, 1.0)] }];
        write_metrics_csv(&path, &[1, 2, 4], &epochs).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "epoch,loss,recall@1,recall@2,recall@4\n1,0.5,0.25,0.5,1\n");
        let json = dir.path().join("m.json");
        write_final_metrics(&path, &json, &epochs[0].recall).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "metric,k,value\nrecall,1,0.25\nrecall,2,0.5\nrecall,4,1.0\n");
    }

    #[test]
    fn idx_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("i.idx"), dir.path().join("l.idx"));
        let images = IdxImages { count: 2, rows: 1, cols: 2, pixels: vec![0, 255, 51, 102] };
        write_idx_pair(&ip, &lp, &images, &[1, 0]).unwrap();
        let ds = read_idx_dataset(&ip, &lp).unwrap();
        assert_eq!(ds.features().row(0), &[0.0, 1.0]);
        assert_eq!(ds.true_labels(), &[1, 0]);
        let err = read_idx_dataset(&lp, &ip).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }
}
