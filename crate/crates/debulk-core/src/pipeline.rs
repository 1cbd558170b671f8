//! Batch orchestration: scan → denoise → median filter → heightmap →
//! pocket segmentation → net meshing → constrained solve → ridge
//! post-processing → verdicts, with pocket-level parallelism, plus
//! prediction-vs-measurement comparison against a post-debulk scan.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cloud::{build_heightmap, denoise, median_filter, OrganizedPointCloud};
use crate::energy::MaterialParams;
use crate::error::{Error, Result};
use crate::grid::{HeightMap, ReferenceSurface};
use crate::meshing::{mesh_patch, MeshConfig};
use crate::optimizer::{solve, SolverConfig};
use crate::postprocess::{post_process, DebulkReport, Verdict, DEFAULT_RMS_THRESHOLD};
use crate::segmentation::{extract_patches, AirPocketPatch, SegmentationSettings};

/// Scan conditioning knobs applied before segmentation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScanPrepSettings {
    /// Neighbor count for statistical outlier removal.
    pub denoise_k: usize,
    /// Median filter window in pixels (odd).
    pub median_window: usize,
    /// Heightmap cell size, mm.
    pub heightmap_spacing: f64,
}

impl Default for ScanPrepSettings {
    fn default() -> Self {
        ScanPrepSettings {
            denoise_k: 4,
            median_window: 5,
            heightmap_spacing: 1.0,
        }
    }
}

impl ScanPrepSettings {
    pub fn validate(&self) -> Result<()> {
        if self.denoise_k == 0 {
            return Err(Error::InvalidArgument(
                "denoise_k must be at least 1".into(),
            ));
        }
        if self.median_window == 0 || self.median_window % 2 == 0 {
            return Err(Error::InvalidArgument(format!(
                "median_window must be odd and positive, got {}",
                self.median_window
            )));
        }
        if !(self.heightmap_spacing > 0.0) {
            return Err(Error::InvalidArgument(
                "heightmap_spacing must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Everything one batch run needs. Serializable so a config file can
/// override any subset of the defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub scan: ScanPrepSettings,
    pub segmentation: SegmentationSettings,
    pub mesh: MeshConfig,
    pub material: MaterialParams,
    pub solver: SolverConfig,
    /// RMS crease/cease divider, mm.
    pub threshold_mm: f64,
    /// When set, run() writes summary.json, summary.txt and per-pocket
    /// heightfield grid files here.
    pub artifacts_dir: Option<PathBuf>,
    /// Pocket-level worker threads; 0 picks the machine's parallelism.
    pub workers: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            scan: ScanPrepSettings::default(),
            segmentation: SegmentationSettings::default(),
            mesh: MeshConfig::default(),
            material: MaterialParams::default(),
            solver: SolverConfig::default(),
            threshold_mm: DEFAULT_RMS_THRESHOLD,
            artifacts_dir: None,
            workers: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.scan.validate()?;
        self.material.validate()?;
        self.solver.validate()?;
        if let Some(m) = self.segmentation.margin {
            if !(m > 0.0) {
                return Err(Error::InvalidArgument(
                    "segmentation margin must be positive when set".into(),
                ));
            }
        }
        // A threshold below the consolidated thickness would classify even
        // a perfectly flattened ply as a crease.
        let consolidated = self.material.thickness_mm() / self.material.bulk_factor;
        if self.threshold_mm < consolidated - 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "threshold {} mm is below the consolidated ply thickness {:.4} mm; \
                 every pocket would be classified as a crease",
                self.threshold_mm, consolidated
            )));
        }
        Ok(())
    }
}

/// One line of the batch summary: the verdict plus the solve statistics
/// that matter for budgeting (node count, spacing, RMS, timing, function
/// evaluations).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PocketRecord {
    pub id: u32,
    pub verdict: Verdict,
    /// Net size; 0 when the pocket failed before meshing completed.
    pub nodes: usize,
    /// Net spacing, mm (None when meshing failed).
    pub delta_mm: Option<f64>,
    /// Post-processed RMS, mm (None when any stage failed).
    pub rms_mm: Option<f64>,
    /// Tallest post-processed point, mm (None when any stage failed).
    pub predicted_max_mm: Option<f64>,
    pub function_evaluations: usize,
    /// Constrained-solve wall time, s.
    pub solve_time_s: f64,
    /// Mesh + solve + post-process wall time, s.
    pub total_time_s: f64,
    pub converged: bool,
    /// Stage error that downgraded this pocket, if any.
    pub error: Option<String>,
    pub notes: Vec<String>,
}

/// Batch verdict rollup, in the order a process exit code reports it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchStatus {
    /// Every pocket is predicted to consolidate flat.
    AllCease,
    /// At least one crease and no inconclusive pockets.
    CreasePresent,
    /// At least one pocket needs a manual check; it takes precedence over
    /// creases because no batch verdict is trustworthy until it is done.
    InconclusivePresent,
}

impl BatchStatus {
    /// Exit code for batch runs: 0 all cease, 2 crease present,
    /// 3 inconclusive present. 1 is reserved for hard errors.
    pub fn exit_code(self) -> i32 {
        match self {
            BatchStatus::AllCease => 0,
            BatchStatus::CreasePresent => 2,
            BatchStatus::InconclusivePresent => 3,
        }
    }
}

impl std::fmt::Display for BatchStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BatchStatus::AllCease => "all cease",
            BatchStatus::CreasePresent => "crease present",
            BatchStatus::InconclusivePresent => "inconclusive present",
        })
    }
}

/// Output of a batch run: one summary record per segmented pocket, full
/// reports for the pockets that completed, and the rolled-up status.
#[derive(Clone, Debug, Serialize)]
pub struct PipelineRun {
    pub records: Vec<PocketRecord>,
    /// Full per-pocket reports (heightfield included); absent for pockets
    /// that failed a stage. Not part of the JSON summary — heightfields go
    /// to separate grid files.
    #[serde(skip)]
    pub reports: Vec<DebulkReport>,
    pub status: BatchStatus,
    /// Points removed by the statistical denoise pass.
    pub denoise_removed: usize,
    pub pockets_found: usize,
}

impl PipelineRun {
    /// Fixed-width human-readable summary, one row per pocket.
    pub fn render_table(&self) -> String {
        let mut s = String::new();
        s.push_str(
            "  id  nodes  delta_mm   rms_mm   max_mm  fevals  solve_s  total_s  verdict\n",
        );
        for r in &self.records {
            let delta = r
                .delta_mm
                .map_or("       -".to_string(), |v| format!("{v:8.3}"));
            let rms = r
                .rms_mm
                .map_or("       -".to_string(), |v| format!("{v:8.3}"));
            let max = r
                .predicted_max_mm
                .map_or("       -".to_string(), |v| format!("{v:8.3}"));
            s.push_str(&format!(
                "{:>4}  {:>5}  {}  {}  {}  {:>6}  {:>7.2}  {:>7.2}  {}",
                r.id,
                r.nodes,
                delta,
                rms,
                max,
                r.function_evaluations,
                r.solve_time_s,
                r.total_time_s,
                r.verdict,
            ));
            if let Some(e) = &r.error {
                s.push_str(&format!("  error: {e}"));
            }
            s.push('\n');
        }
        s.push_str(&format!(
            "status: {} ({} pocket(s), {} denoised point(s) removed)\n",
            self.status,
            self.records.len(),
            self.denoise_removed
        ));
        s
    }

    pub fn write_summary_json(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), self)?;
        Ok(())
    }

    /// Writes summary.json, summary.txt and pocket_<id>_height.grid files.
    pub fn write_artifacts(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.write_summary_json(&dir.join("summary.json"))?;
        std::fs::write(dir.join("summary.txt"), self.render_table())?;
        for rep in &self.reports {
            rep.heightfield
                .write(&dir.join(format!("pocket_{:03}_height.grid", rep.pocket_id)))?;
        }
        Ok(())
    }
}

/// Resolves a requested worker count; 0 means machine parallelism.
pub fn effective_workers(requested: usize) -> usize {
    if requested > 0 {
        requested
    } else {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    }
}

fn batch_status(records: &[PocketRecord]) -> BatchStatus {
    if records
        .iter()
        .any(|r| r.verdict == Verdict::Inconclusive)
    {
        BatchStatus::InconclusivePresent
    } else if records.iter().any(|r| r.verdict == Verdict::Crease) {
        BatchStatus::CreasePresent
    } else {
        BatchStatus::AllCease
    }
}

/// Mesh, solve, and post-process one pocket. Stage errors downgrade the
/// pocket to inconclusive instead of failing the batch.
fn process_one(
    patch: &AirPocketPatch,
    cfg: &PipelineConfig,
) -> (PocketRecord, Option<DebulkReport>) {
    let t0 = Instant::now();
    let staged = mesh_patch(patch, &cfg.mesh, cfg.material.thickness_mm())
        .and_then(|net| {
            solve(&net, &cfg.material, &patch.reference, &cfg.solver).map(|s| (net, s))
        })
        .and_then(|(net, s)| {
            post_process(patch, &net, &s, &cfg.material, cfg.threshold_mm)
                .map(|rep| (net, s, rep))
        });
    match staged {
        Ok((net, s, report)) => {
            let record = PocketRecord {
                id: patch.id,
                verdict: report.verdict,
                nodes: net.len(),
                delta_mm: Some(net.delta),
                rms_mm: Some(report.rms_mm),
                predicted_max_mm: Some(report.predicted_max_mm),
                function_evaluations: s.function_evaluations,
                solve_time_s: s.wall_time_s,
                total_time_s: t0.elapsed().as_secs_f64(),
                converged: s.converged,
                error: None,
                notes: report.notes.clone(),
            };
            (record, Some(report))
        }
        Err(e) => (
            PocketRecord {
                id: patch.id,
                verdict: Verdict::Inconclusive,
                nodes: 0,
                delta_mm: None,
                rms_mm: None,
                predicted_max_mm: None,
                function_evaluations: 0,
                solve_time_s: 0.0,
                total_time_s: t0.elapsed().as_secs_f64(),
                converged: false,
                error: Some(e.to_string()),
                notes: Vec::new(),
            },
            None,
        ),
    }
}

/// Runs the per-pocket stages over a bounded worker pool. Results land in
/// per-pocket slots, so the output order matches the patch order whatever
/// the thread interleaving.
fn process_pockets(
    patches: &[AirPocketPatch],
    cfg: &PipelineConfig,
) -> (Vec<PocketRecord>, Vec<DebulkReport>) {
    let n = patches.len();
    if n == 0 {
        return (Vec::new(), Vec::new());
    }
    let workers = effective_workers(cfg.workers).min(n);
    let slots: Vec<Mutex<Option<(PocketRecord, Option<DebulkReport>)>>> =
        (0..n).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let out = process_one(&patches[i], cfg);
                *slots[i].lock().expect("pocket slot poisoned") = Some(out);
            });
        }
    });
    let mut records = Vec::with_capacity(n);
    let mut reports = Vec::new();
    for slot in slots {
        let (rec, rep) = slot
            .into_inner()
            .expect("pocket slot poisoned")
            .expect("every pocket processed");
        records.push(rec);
        if let Some(r) = rep {
            reports.push(r);
        }
    }
    (records, reports)
}

/// Full batch prediction over one draped-ply scan. Pocket-stage errors
/// downgrade that pocket and continue; scan-stage and I/O errors abort.
pub fn run(
    cloud: &OrganizedPointCloud,
    reference: &ReferenceSurface,
    cfg: &PipelineConfig,
) -> Result<PipelineRun> {
    cfg.validate()?;
    let (clean, stats) = denoise(cloud, cfg.scan.denoise_k)?;
    let smooth = median_filter(&clean, cfg.scan.median_window)?;
    let hm = build_heightmap(&smooth, reference, cfg.scan.heightmap_spacing)?;
    let patches = extract_patches(&hm, reference, &cfg.segmentation)?;
    let (records, reports) = process_pockets(&patches, cfg);
    let status = batch_status(&records);
    let run = PipelineRun {
        records,
        reports,
        status,
        denoise_removed: stats.removed,
        pockets_found: patches.len(),
    };
    if let Some(dir) = &cfg.artifacts_dir {
        run.write_artifacts(dir)?;
    }
    Ok(run)
}

/// One pocket's prediction lined up against the post-debulk measurement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub pocket_id: u32,
    pub predicted_rms_mm: f64,
    pub measured_rms_mm: f64,
    pub rms_delta_mm: f64,
    pub predicted: Verdict,
    pub measured: Verdict,
    pub agree: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedPocket {
    pub pocket_id: u32,
    pub reason: String,
}

/// Evaluation table: per-pocket RMS comparison inside the original pocket
/// contours, and the verdict agreement count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    /// Rows where predicted and measured verdicts match.
    pub agreement: usize,
    /// Pockets evaluated (skipped ones excluded).
    pub total: usize,
    pub skipped: Vec<SkippedPocket>,
}

impl Comparison {
    pub fn render_table(&self) -> String {
        let mut s = String::new();
        s.push_str("  id  pred_rms  meas_rms     delta  predicted     measured      agree\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{:>4}  {:>8.3}  {:>8.3}  {:>8.3}  {:<12}  {:<12}  {}\n",
                r.pocket_id,
                r.predicted_rms_mm,
                r.measured_rms_mm,
                r.rms_delta_mm,
                r.predicted.to_string(),
                r.measured.to_string(),
                if r.agree { "yes" } else { "no" },
            ));
        }
        for sk in &self.skipped {
            s.push_str(&format!(
                "{:>4}  skipped: {}\n",
                sk.pocket_id, sk.reason
            ));
        }
        s.push_str(&format!("agreement: {}/{}\n", self.agreement, self.total));
        s
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), self)?;
        Ok(())
    }
}

enum Sample {
    Outside,
    Missing,
    Value(f64),
}

/// Bilinear sample of a heightmap honoring its validity mask. Cell centers
/// that land (numerically) on a grid node take that node's exact value, so
/// comparing a field against itself is exact.
fn sample_height(hm: &HeightMap, x: f64, y: f64) -> Sample {
    let (w, h) = (hm.width(), hm.height());
    let [x0, y0] = hm.origin();
    let [dx, dy] = hm.spacing();
    let fx = (x - x0) / dx;
    let fy = (y - y0) / dy;
    // Anything beyond half a cell outside the outer node ring is out of
    // the measured extent.
    if fx < -0.5 || fy < -0.5 || fx > (w - 1) as f64 + 0.5 || fy > (h - 1) as f64 + 0.5 {
        return Sample::Outside;
    }
    let snap = |f: f64, n: usize| -> (usize, f64) {
        if n == 1 {
            return (0, 0.0);
        }
        let r = f.round();
        if (f - r).abs() < 1e-9 {
            // On a node: exact lookup, clamped to the interpolable range.
            let i = (r.max(0.0) as usize).min(n - 1);
            return (i.min(n - 2), if i == n - 1 { 1.0 } else { 0.0 });
        }
        let c = f.clamp(0.0, (n - 1) as f64);
        let i = (c.floor() as usize).min(n - 2);
        (i, c - i as f64)
    };
    let (i, u) = snap(fx, w);
    let (j, v) = snap(fy, h);
    let (i1, j1) = ((i + 1).min(w - 1), (j + 1).min(h - 1));
    let corners = [
        (j, i, (1.0 - u) * (1.0 - v)),
        (j, i1, u * (1.0 - v)),
        (j1, i, (1.0 - u) * v),
        (j1, i1, u * v),
    ];
    let mut value = 0.0;
    let mut weight = 0.0;
    for &(r, c, wgt) in &corners {
        if wgt > 0.0 && hm.is_valid(r, c) {
            value += wgt * hm.value(r, c);
            weight += wgt;
        }
    }
    if weight > 0.0 {
        Sample::Value(value / weight)
    } else {
        Sample::Missing
    }
}

/// Lines each prediction up against a post-debulk heightmap (heights above
/// the same reference surface): measured RMS is taken over the original
/// pocket contour cells; measured verdict uses each report's own
/// threshold. Pockets whose contour leaves the measured extent are skipped
/// with a warning entry.
pub fn compare_with_scan(reports: &[DebulkReport], debulked: &HeightMap) -> Result<Comparison> {
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    'pocket: for rep in reports {
        let hf = &rep.heightfield;
        let mut sum = 0.0;
        let mut count = 0usize;
        for r in 0..hf.height() {
            for c in 0..hf.width() {
                if !hf.is_valid(r, c) {
                    continue;
                }
                let [x, y] = hf.cell_to_world(r, c);
                match sample_height(debulked, x, y) {
                    Sample::Outside => {
                        skipped.push(SkippedPocket {
                            pocket_id: rep.pocket_id,
                            reason: "contour outside debulked scan extent".into(),
                        });
                        continue 'pocket;
                    }
                    Sample::Missing => {}
                    Sample::Value(z) => {
                        sum += z * z;
                        count += 1;
                    }
                }
            }
        }
        if count == 0 {
            skipped.push(SkippedPocket {
                pocket_id: rep.pocket_id,
                reason: "no valid debulked data inside contour".into(),
            });
            continue;
        }
        let measured_rms = (sum / count as f64).sqrt();
        let measured = if measured_rms <= rep.threshold_mm {
            Verdict::Cease
        } else {
            Verdict::Crease
        };
        let agree = rep.verdict == measured;
        rows.push(ComparisonRow {
            pocket_id: rep.pocket_id,
            predicted_rms_mm: rep.rms_mm,
            measured_rms_mm: measured_rms,
            rms_delta_mm: measured_rms - rep.rms_mm,
            predicted: rep.verdict,
            measured,
            agree,
        });
    }
    let agreement = rows.iter().filter(|r| r.agree).count();
    let total = rows.len();
    Ok(Comparison {
        rows,
        agreement,
        total,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::synth::{generate, MoldKind, PocketSpec, SceneSpec};

    fn scene_spec(pockets: Vec<PocketSpec>, extent: [f64; 2]) -> SceneSpec {
        SceneSpec {
            mold: MoldKind::Flat,
            extent,
            pitch: 1.0,
            ply_outline: None,
            ply_inset: 5.0,
            pockets,
            noise_std: 0.0,
            outlier_fraction: 0.0,
            cut_height: 2.0,
        }
    }

    fn quiet_cfg() -> PipelineConfig {
        PipelineConfig {
            workers: 2,
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn config_validation_catches_cross_field_conflicts() {
        let mut cfg = PipelineConfig::default();
        assert!(cfg.validate().is_ok());
        // Threshold below the consolidated thickness (0.25 mm default).
        cfg.threshold_mm = 0.2;
        assert!(cfg.validate().is_err());
        cfg.threshold_mm = 0.25;
        assert!(cfg.validate().is_ok(), "threshold == t/beta is legal");
        cfg = PipelineConfig::default();
        cfg.scan.median_window = 4;
        assert!(cfg.validate().is_err());
        cfg = PipelineConfig::default();
        cfg.scan.denoise_k = 0;
        assert!(cfg.validate().is_err());
        cfg = PipelineConfig::default();
        cfg.scan.heightmap_spacing = 0.0;
        assert!(cfg.validate().is_err());
        cfg = PipelineConfig::default();
        cfg.segmentation.margin = Some(-1.0);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn batch_status_precedence_and_exit_codes() {
        let rec = |verdict| PocketRecord {
            id: 1,
            verdict,
            nodes: 0,
            delta_mm: None,
            rms_mm: None,
            predicted_max_mm: None,
            function_evaluations: 0,
            solve_time_s: 0.0,
            total_time_s: 0.0,
            converged: true,
            error: None,
            notes: Vec::new(),
        };
        assert_eq!(batch_status(&[]), BatchStatus::AllCease);
        assert_eq!(batch_status(&[rec(Verdict::Cease)]), BatchStatus::AllCease);
        assert_eq!(
            batch_status(&[rec(Verdict::Cease), rec(Verdict::Crease)]),
            BatchStatus::CreasePresent
        );
        assert_eq!(
            batch_status(&[
                rec(Verdict::Crease),
                rec(Verdict::Inconclusive),
                rec(Verdict::Cease)
            ]),
            BatchStatus::InconclusivePresent
        );
        assert_eq!(BatchStatus::AllCease.exit_code(), 0);
        assert_eq!(BatchStatus::CreasePresent.exit_code(), 2);
        assert_eq!(BatchStatus::InconclusivePresent.exit_code(), 3);
    }

    #[test]
    fn zero_pocket_scene_reports_all_cease() {
        let scene = generate(&scene_spec(vec![], [80.0, 80.0]), 7).unwrap();
        let run = run(&scene.cloud, &scene.reference, &quiet_cfg()).unwrap();
        assert!(run.records.is_empty());
        assert!(run.reports.is_empty());
        assert_eq!(run.status, BatchStatus::AllCease);
        assert_eq!(run.pockets_found, 0);
        // Table still renders (header + status line only).
        let t = run.render_table();
        assert!(t.contains("all cease"));
    }

    #[test]
    fn dome_scene_end_to_end_creases_and_writes_artifacts() {
        let scene = generate(
            &scene_spec(
                vec![PocketSpec {
                    center: [0.0, 0.0],
                    rx: 30.0,
                    ry: 30.0,
                    peak: 8.0,
                }],
                [160.0, 160.0],
            ),
            0,
        )
        .unwrap();
        let dir = std::env::temp_dir().join(format!(
            "debulk-pipeline-test-{}-{}",
            std::process::id(),
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .unwrap()
                .as_nanos()
        ));
        let cfg = PipelineConfig {
            artifacts_dir: Some(dir.clone()),
            ..quiet_cfg()
        };
        let run = run(&scene.cloud, &scene.reference, &cfg).unwrap();
        assert_eq!(run.records.len(), 1);
        let rec = &run.records[0];
        assert_eq!(rec.verdict, Verdict::Crease);
        assert!(rec.converged);
        assert!(rec.rms_mm.unwrap() > 0.3);
        assert!(rec.nodes > 50, "net too sparse: {}", rec.nodes);
        assert!(rec.function_evaluations > 0);
        assert!(rec.solve_time_s > 0.0 && rec.total_time_s >= rec.solve_time_s);
        assert_eq!(run.status, BatchStatus::CreasePresent);

        let summary = dir.join("summary.json");
        let table = dir.join("summary.txt");
        let grid_file = dir.join("pocket_001_height.grid");
        assert!(summary.exists() && table.exists() && grid_file.exists());
        let text = std::fs::read_to_string(&table).unwrap();
        assert!(text.contains("crease"));
        let reread = Grid::read(&grid_file).unwrap();
        assert_eq!(reread, run.reports[0].heightfield);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let scene = generate(
            &scene_spec(
                vec![
                    PocketSpec {
                        center: [-45.0, 0.0],
                        rx: 25.0,
                        ry: 25.0,
                        peak: 6.0,
                    },
                    PocketSpec {
                        center: [50.0, 10.0],
                        rx: 22.0,
                        ry: 26.0,
                        peak: 4.0,
                    },
                ],
                [220.0, 160.0],
            ),
            3,
        )
        .unwrap();
        let mut cfg = quiet_cfg();
        cfg.workers = 1;
        let a = run(&scene.cloud, &scene.reference, &cfg).unwrap();
        cfg.workers = 4;
        let b = run(&scene.cloud, &scene.reference, &cfg).unwrap();
        assert_eq!(a.records.len(), 2);
        assert_eq!(a.reports, b.reports);
        assert_eq!(a.status, b.status);
        for (ra, rb) in a.records.iter().zip(&b.records) {
            // Everything but wall time is bit-identical.
            assert_eq!(ra.id, rb.id);
            assert_eq!(ra.verdict, rb.verdict);
            assert_eq!(ra.rms_mm, rb.rms_mm);
            assert_eq!(ra.predicted_max_mm, rb.predicted_max_mm);
            assert_eq!(ra.function_evaluations, rb.function_evaluations);
        }
    }

    #[test]
    fn stage_error_downgrades_pocket_and_run_continues() {
        let scene = generate(
            &scene_spec(
                vec![PocketSpec {
                    center: [0.0, 0.0],
                    rx: 30.0,
                    ry: 30.0,
                    peak: 8.0,
                }],
                [160.0, 160.0],
            ),
            0,
        )
        .unwrap();
        // A margin far below the node spacing makes meshing's trim ring
        // run out of patch surface: that pocket fails, the batch does not.
        let mut cfg = quiet_cfg();
        cfg.segmentation.margin = Some(0.5);
        let run = run(&scene.cloud, &scene.reference, &cfg).unwrap();
        assert_eq!(run.records.len(), 1);
        let rec = &run.records[0];
        assert_eq!(rec.verdict, Verdict::Inconclusive);
        assert!(rec.error.is_some(), "expected a stage error");
        assert!(rec.rms_mm.is_none());
        assert_eq!(run.status, BatchStatus::InconclusivePresent);
        assert!(run.reports.is_empty());
        assert!(run.render_table().contains("error:"));
    }

    #[test]
    fn compare_prediction_with_itself_is_exact() {
        let scene = generate(
            &scene_spec(
                vec![PocketSpec {
                    center: [0.0, 0.0],
                    rx: 30.0,
                    ry: 30.0,
                    peak: 8.0,
                }],
                [160.0, 160.0],
            ),
            0,
        )
        .unwrap();
        let run = run(&scene.cloud, &scene.reference, &quiet_cfg()).unwrap();
        let cmp = compare_with_scan(&run.reports, &run.reports[0].heightfield).unwrap();
        assert_eq!(cmp.total, 1);
        assert_eq!(cmp.agreement, 1);
        assert!(cmp.skipped.is_empty());
        let row = &cmp.rows[0];
        assert_eq!(row.rms_delta_mm, 0.0, "self-comparison must be exact");
        assert_eq!(row.measured_rms_mm, row.predicted_rms_mm);
        assert!(row.agree);
        assert_eq!(row.predicted, row.measured);
    }

    #[test]
    fn compare_skips_contours_outside_scan_extent() {
        let scene = generate(
            &scene_spec(
                vec![PocketSpec {
                    center: [0.0, 0.0],
                    rx: 30.0,
                    ry: 30.0,
                    peak: 8.0,
                }],
                [160.0, 160.0],
            ),
            0,
        )
        .unwrap();
        let run = run(&scene.cloud, &scene.reference, &quiet_cfg()).unwrap();
        // A measured patch nowhere near the pocket.
        let far = Grid::from_fn([2000.0, 2000.0], [1.0, 1.0], 20, 20, |_, _| 0.25).unwrap();
        let cmp = compare_with_scan(&run.reports, &far).unwrap();
        assert!(cmp.rows.is_empty());
        assert_eq!(cmp.total, 0);
        assert_eq!(cmp.skipped.len(), 1);
        assert!(cmp.skipped[0].reason.contains("extent"));
        assert!(cmp.render_table().contains("skipped"));
    }

    #[test]
    fn compare_against_stamped_ground_truth_agrees_fully() {
        // One decisive crease pocket and one decisive cease pocket.
        let scene = generate(
            &scene_spec(
                vec![
                    PocketSpec {
                        center: [-45.0, 0.0],
                        rx: 30.0,
                        ry: 30.0,
                        peak: 8.0,
                    },
                    PocketSpec {
                        center: [50.0, 0.0],
                        rx: 24.0,
                        ry: 24.0,
                        peak: 2.6,
                    },
                ],
                [220.0, 160.0],
            ),
            1,
        )
        .unwrap();
        let run = run(&scene.cloud, &scene.reference, &quiet_cfg()).unwrap();
        assert_eq!(run.reports.len(), 2, "both pockets must survive");
        // Synthetic "measured" debulk: consolidated 0.25 mm everywhere,
        // with a tall ridge strip stamped across the crease pocket.
        let mut measured = Grid::from_fn([-110.0, -80.0], [1.0, 1.0], 221, 161, |_, _| 0.25)
            .unwrap()
            .grid()
            .clone();
        let crease_id = run
            .reports
            .iter()
            .find(|r| r.verdict == Verdict::Crease)
            .expect("large pocket creases")
            .pocket_id;
        let cease_present = run.reports.iter().any(|r| r.verdict == Verdict::Cease);
        assert!(cease_present, "small pocket should cease");
        // Stamp a 1.5 mm ridge band across the crease pocket's center.
        for c in 0..measured.width() {
            let x = measured.x_at(c);
            if (-75.0..=-15.0).contains(&x) {
                for r in 0..measured.height() {
                    let y = measured.y_at(r);
                    if y.abs() <= 1.5 {
                        measured.set_value(r, c, 1.5);
                    }
                }
            }
        }
        let cmp = compare_with_scan(&run.reports, &measured).unwrap();
        assert_eq!(cmp.total, 2);
        assert_eq!(cmp.agreement, 2, "verdicts must agree: {:#?}", cmp.rows);
        let crease_row = cmp
            .rows
            .iter()
            .find(|r| r.pocket_id == crease_id)
            .unwrap();
        assert_eq!(crease_row.measured, Verdict::Crease);
    }

    #[test]
    fn fourteen_pocket_suite_emits_full_summary() {
        // 14 pockets in a 4 x 4 grid (two cells empty), mixed sizes.
        let mut pockets = Vec::new();
        let mut k = 0;
        for gy in 0..4 {
            for gx in 0..4 {
                if (gx, gy) == (3, 3) || (gx, gy) == (0, 3) {
                    continue;
                }
                let rx = 18.0 + 3.0 * ((k * 7) % 4) as f64;
                let ry = 18.0 + 3.0 * ((k * 5) % 4) as f64;
                let peak = 3.0 + 0.8 * ((k * 3) % 7) as f64;
                pockets.push(PocketSpec {
                    center: [-135.0 + 90.0 * gx as f64, -135.0 + 90.0 * gy as f64],
                    rx,
                    ry,
                    peak,
                });
                k += 1;
            }
        }
        assert_eq!(pockets.len(), 14);
        let scene = generate(&scene_spec(pockets, [370.0, 370.0]), 11).unwrap();
        let mut cfg = quiet_cfg();
        cfg.workers = 4;
        cfg.mesh.target_nodes = 64;
        let run = run(&scene.cloud, &scene.reference, &cfg).unwrap();
        assert_eq!(run.records.len(), 14, "{:#?}", run.records);
        for rec in &run.records {
            assert!(rec.total_time_s > 0.0, "pocket {} lacks timing", rec.id);
            assert!(rec.error.is_none(), "pocket {} failed: {:?}", rec.id, rec.error);
        }
        let table = run.render_table();
        // Header + 14 rows + status line.
        assert_eq!(table.lines().count(), 16, "table was:\n{table}");
    }
}
