use std::fmt::Write as _;
use std::path::Path;

use super::corpus::Sample;
use crate::data::postprocess;
use crate::error::{Error, Result};
use crate::metrics::{dsc, hausdorff, paired_t_test, BinaryMask, TTest};
use crate::network::{write_atomic, Network, Session};
use crate::tensor::{Tape, Tensor};

/// Metrics of one evaluated lesion.
#[derive(Clone, Debug, PartialEq)]
pub struct LesionResult {
    pub id: String,
    pub dsc: f64,
    /// `None` when either mask is empty.
    pub hd_mm: Option<f64>,
    pub voxels_true: usize,
    pub voxels_pred: usize,
}

impl LesionResult {
    pub fn score(id: impl Into<String>, truth: &BinaryMask, pred: &BinaryMask) -> Result<Self> {
        let hd_mm = if truth.is_empty() || pred.is_empty() {
            None
        } else {
            Some(hausdorff(truth, pred)?)
        };
        Ok(Self {
            id: id.into(),
            dsc: dsc(truth, pred)?,
            hd_mm,
            voxels_true: truth.count(),
            voxels_pred: pred.count(),
        })
    }
}

/// Mean and sample standard deviation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Option<Self> {
        let n = xs.len();
        if n == 0 {
            return None;
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Some(Self { mean, std: var.sqrt(), n })
    }
}

/// Everything a run produces apart from the checkpoint and wall time.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunReport {
    /// `key=value` lines describing the run.
    pub config: Vec<(String, String)>,
    pub param_count: usize,
    pub losses: Vec<f64>,
    /// `(step, mean validation DSC)` checkpoints.
    pub validation: Vec<(usize, f64)>,
    pub lesions: Vec<LesionResult>,
}

impl RunReport {
    pub fn dsc_values(&self) -> Vec<f64> {
        self.lesions.iter().map(|r| r.dsc).collect()
    }

    pub fn dsc_summary(&self) -> Option<Summary> {
        Summary::of(&self.dsc_values())
    }

    pub fn hd_summary(&self) -> Option<Summary> {
        Summary::of(&self.lesions.iter().filter_map(|r| r.hd_mm).collect::<Vec<_>>())
    }

    /// Per-lesion CSV: `id,dsc,hd_mm,voxels_true,voxels_pred`; undefined HD is
    /// an empty field.
    pub fn lesions_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["id", "dsc", "hd_mm", "voxels_true", "voxels_pred"])?;
        for r in &self.lesions {
            w.write_record([
                r.id.clone(),
                r.dsc.to_string(),
                r.hd_mm.map(|h| h.to_string()).unwrap_or_default(),
                r.voxels_true.to_string(),
                r.voxels_pred.to_string(),
            ])?;
        }
        w.into_inner().map_err(|e| Error::invalid("report", e.to_string()))
    }

    /// `step,loss` CSV.
    pub fn losses_csv(&self) -> String {
        let mut s = String::from("step,loss\n");
        for (i, l) in self.losses.iter().enumerate() {
            let _ = writeln!(s, "{},{l}", i + 1);
        }
        s
    }

    pub fn summary_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.config {
            let _ = writeln!(s, "{k} = {v}");
        }
        let _ = writeln!(s, "parameters = {}", self.param_count);
        if let Some(l) = self.losses.last() {
            let _ = writeln!(s, "steps = {}\nfinal_loss = {l:.6}", self.losses.len());
        }
        if let Some(&(step, d)) = self.validation.iter().max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0))) {
            let _ = writeln!(s, "best_validation = {d:.4} at step {step}");
        }
        if let Some(d) = self.dsc_summary() {
            let _ = writeln!(s, "lesions = {}\ndsc = {:.4} ± {:.4}", d.n, d.mean, d.std);
        }
        if let Some(h) = self.hd_summary() {
            let undefined = self.lesions.len() - h.n;
            let _ = writeln!(s, "hd_mm = {:.3} ± {:.3} (undefined for {undefined})", h.mean, h.std);
        }
        s
    }

    /// Write `summary.txt` into `dir`, plus `lesions.csv` and `losses.csv` when
    /// they have rows.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        if !self.lesions.is_empty() {
            write_atomic(&dir.join("lesions.csv"), &self.lesions_csv()?)?;
        }
        if !self.losses.is_empty() {
            write_atomic(&dir.join("losses.csv"), self.losses_csv().as_bytes())?;
        }
        write_atomic(&dir.join("summary.txt"), self.summary_text().as_bytes())
    }
}

/// Parse a CSV written by [`RunReport::lesions_csv`].
pub fn read_lesions_csv(path: &Path) -> Result<Vec<LesionResult>> {
    const KIND: &str = "lesion report";
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    if r.headers()?.iter().ne(["id", "dsc", "hd_mm", "voxels_true", "voxels_pred"]) {
        return Err(Error::format(KIND, "unexpected header"));
    }
    let bad = |field: &str| Error::format(KIND, format!("bad `{field}` value"));
    r.records()
        .map(|rec| {
            let rec = rec?;
            Ok(LesionResult {
                id: rec[0].to_string(),
                dsc: rec[1].parse().map_err(|_| bad("dsc"))?,
                hd_mm: if rec[2].is_empty() { None } else { Some(rec[2].parse().map_err(|_| bad("hd_mm"))?) },
                voxels_true: rec[3].parse().map_err(|_| bad("voxels_true"))?,
                voxels_pred: rec[4].parse().map_err(|_| bad("voxels_pred"))?,
            })
        })
        .collect()
}

/// Paired two-sided t-test on the DSC of lesions present in both reports.
pub fn compare_reports(a: &RunReport, b: &RunReport) -> Result<TTest> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for r in &a.lesions {
        if let Some(s) = b.lesions.iter().find(|s| s.id == r.id) {
            x.push(r.dsc);
            y.push(s.dsc);
        }
    }
    paired_t_test(&x, &y)
}

/// Two-class logits `[1, 2, h, w, l]` at network resolution.
pub fn predict_logits(net: &Network<f32>, sample: &Sample) -> Result<Tensor<f32>> {
    let tape = Tape::new();
    let s = Session::inference(&tape, &net.params);
    let x = net.input(&s, &sample.prepared.input_tensor());
    let feats = net.encode(&s, x)?;
    Ok(net.segment(&s, &feats)?.to_tensor())
}

/// Binary mask on the evaluation grid.
pub fn predict(net: &Network<f32>, sample: &Sample) -> Result<BinaryMask> {
    let full = &sample.prepared.full;
    postprocess(&predict_logits(net, sample)?, full.dims(), full.spacing())
}

/// Score every sample against its label.
pub fn evaluate(net: &Network<f32>, samples: &[Sample]) -> Result<Vec<LesionResult>> {
    if samples.is_empty() {
        return Err(Error::Empty("evaluation split"));
    }
    samples
        .iter()
        .map(|s| {
            let truth = s.prepared.full.require_label()?;
            LesionResult::score(&s.id, truth, &predict(net, s)?)
        })
        .collect()
}

/// Mean DSC over `samples`.
pub fn mean_dsc(net: &Network<f32>, samples: &[Sample]) -> Result<f64> {
    let rows = evaluate(net, samples)?;
    Ok(rows.iter().map(|r| r.dsc).sum::<f64>() / rows.len() as f64)
}
