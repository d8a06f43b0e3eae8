use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use ghm_core::conditions::{
    fatness_fit, ntr_sum_for, sweep_csv, sweep_exponent, FatnessFit, FatnessOptions, NtrOptions, NtrSumReport,
};
use ghm_core::diagnostics::{diagnostics_report, DiagnosticsOptions, DiagnosticsReport};
use ghm_core::horseshoe::{validate_hyperbolicity, HyperbolicityReport};
use ghm_core::measure::{
    density_grid, iterations_for_resolution, lift_srb, tsujii_criterion, ulam_acip, BaseMap, CriterionOptions,
    CriterionTable, Density1D, LiftOptions, SrbEstimate, WindowVerdict, SRB_VERSION,
};
use ghm_core::symbolic::{cache::CACHE_VERSION, enumerate_m_with_store, CylinderStore, EnumerateOptions, MEntry};
use ghm_core::{GhmError, GhmSpec};

use crate::config::RunConfig;
use crate::figure::emit_strip_polygons;
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Validate,
    Enumerate,
    Acip,
    Lift,
    Criterion,
    Fatness,
    Transversality,
    Diagnostics,
    Figure,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::Validate,
        Stage::Enumerate,
        Stage::Acip,
        Stage::Lift,
        Stage::Criterion,
        Stage::Fatness,
        Stage::Transversality,
        Stage::Diagnostics,
        Stage::Figure,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Validate => "validate",
            Stage::Enumerate => "enumerate",
            Stage::Acip => "acip",
            Stage::Lift => "lift",
            Stage::Criterion => "criterion",
            Stage::Fatness => "fatness",
            Stage::Transversality => "transversality",
            Stage::Diagnostics => "diagnostics",
            Stage::Figure => "figure",
        }
    }

    /// Stages that must run first.
    fn needs(self) -> &'static [Stage] {
        match self {
            Stage::Lift => &[Stage::Acip],
            Stage::Criterion => &[Stage::Acip, Stage::Lift],
            Stage::Transversality => &[Stage::Enumerate],
            _ => &[],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub map_hash: String,
    pub versions: Versions,
    pub stages: Vec<StageTiming>,
    pub files: Vec<FileDigest>,
    /// Set when a stage failed; the manifest then lists what was written before.
    pub failed_stage: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub ghm: String,
    pub cylinder_cache: u32,
    pub srb_checkpoint: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransversalWindow {
    /// The non-transversal sum decays along the sweep.
    Decreasing,
    NotDecreasing,
    Undetermined,
}

/// One-page summary of the checklist: fat and transversal imply a bounded `I(r)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub fat: Option<bool>,
    pub transversal_window: TransversalWindow,
    #[serde(rename = "I_r_window")]
    pub i_r_window: Option<WindowVerdict>,
    pub ntr_exponent: Option<f64>,
    pub fatness_epsilon: Option<f64>,
}

/// Everything a run computed, kept in memory for callers.
#[derive(Default)]
pub struct RunState {
    pub hyperbolicity: Option<HyperbolicityReport>,
    pub inventories: Vec<(f64, Vec<MEntry>)>,
    pub acip: Option<Density1D>,
    pub srb: Option<SrbEstimate>,
    pub criterion: Option<CriterionTable>,
    pub fatness: Option<FatnessFit>,
    pub ntr: Vec<NtrSumReport>,
    pub diagnostics: Option<DiagnosticsReport>,
    pub verdict: Option<Verdict>,
}

struct Run<'a> {
    cfg: &'a RunConfig,
    spec: GhmSpec,
    dir: PathBuf,
    state: RunState,
    manifest: RunManifest,
    written: Vec<PathBuf>,
}

fn stage_err(stage: Stage) -> impl Fn(GhmError) -> StageFailure {
    move |source| StageFailure { stage, source }
}

struct StageFailure {
    stage: Stage,
    source: GhmError,
}

impl Run<'_> {
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), GhmError> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes)?;
        self.written.push(path);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), GhmError> {
        if !self.cfg.output.wants("json") {
            return Ok(());
        }
        let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    fn csv(&mut self, name: &str, text: &str) -> Result<(), GhmError> {
        if !self.cfg.output.wants("csv") {
            return Ok(());
        }
        self.write(name, text.as_bytes())
    }

    fn run_stage(&mut self, stage: Stage) -> Result<(), StageFailure> {
        let t = Instant::now();
        let e = stage_err(stage);
        match stage {
            Stage::Validate => self.validate().map_err(e)?,
            Stage::Enumerate => self.enumerate().map_err(e)?,
            Stage::Acip => self.acip().map_err(e)?,
            Stage::Lift => self.lift().map_err(e)?,
            Stage::Criterion => self.criterion().map_err(e)?,
            Stage::Fatness => self.fatness().map_err(e)?,
            Stage::Transversality => self.transversality().map_err(e)?,
            Stage::Diagnostics => self.diagnostics().map_err(e)?,
            Stage::Figure => self.figure().map_err(e)?,
        }
        self.manifest.stages.push(StageTiming { stage: stage.name().into(), seconds: t.elapsed().as_secs_f64() });
        Ok(())
    }

    fn validate(&mut self) -> Result<(), GhmError> {
        let v = &self.cfg.validation;
        let report = validate_hyperbolicity(&self.spec, v.grid_n, v.strict_a4);
        self.json("hyperbolicity.json", &report)?;
        let passed = report.passed();
        self.state.hyperbolicity = Some(report);
        if !passed {
            return Err(GhmError::InvalidInput("hyperbolicity conditions fail; see hyperbolicity.json".into()));
        }
        Ok(())
    }

    fn enumerate(&mut self) -> Result<(), GhmError> {
        let e = &self.cfg.enumeration;
        let opts = EnumerateOptions {
            x_grid_n: e.x_grid_n,
            max_words: e.max_words,
            max_depth: e.max_depth,
            exec: self.cfg.exec,
        };
        let cache_path = self.dir.join("cylinders.bin");
        let hash = self.spec.map_hash();
        let store = if e.cache && cache_path.exists() {
            let s = CylinderStore::load(&cache_path, Some(&hash))?;
            if s.grid_n as usize != e.x_grid_n {
                CylinderStore::new(hash.clone(), e.x_grid_n)
            } else {
                s
            }
        } else {
            CylinderStore::new(hash.clone(), e.x_grid_n)
        };
        let mut summary = String::from("r,words,min_len,max_len,sum_I\n");
        for (k, &r) in e.r_sweep.iter().enumerate() {
            let words = enumerate_m_with_store(&self.spec, r, &opts, e.cache.then_some(&store))?;
            let total: f64 = ghm_core::numeric::compensated_sum(words.iter().map(|m| m.base.len()));
            let lens = words.iter().map(|m| m.word.len());
            let (lo, hi) = (lens.clone().min().unwrap_or(0), lens.max().unwrap_or(0));
            let _ = writeln!(summary, "{r:e},{},{lo},{hi},{total:.15}", words.len());
            let mut inv = String::from("word,base_lo,base_hi,d\n");
            for m in &words {
                let w: Vec<String> = m.word.symbols().iter().map(|s| s.to_string()).collect();
                let _ = writeln!(inv, "{},{:e},{:e},{:e}", w.join(" "), m.base.lo, m.base.hi, m.d);
            }
            self.csv(&format!("m_r_{k}.csv"), &inv)?;
            self.state.inventories.push((r, words));
        }
        self.csv("m_r.csv", &summary)?;
        if e.cache {
            store.save(&cache_path)?;
            self.written.push(cache_path);
        }
        Ok(())
    }

    fn acip(&mut self) -> Result<(), GhmError> {
        let m = &self.cfg.measure;
        let base = BaseMap::from_spec(&self.spec)?;
        let density = ulam_acip(&base, m.bins, m.tol)?;
        self.csv("acip.csv", &density.to_csv())?;
        self.json("acip.json", &density)?;
        self.state.acip = Some(density);
        Ok(())
    }

    fn lift(&mut self) -> Result<(), GhmError> {
        let m = &self.cfg.measure;
        let n_iter = match m.iterations {
            Some(n) => n,
            None => iterations_for_resolution(&self.spec, m.resolution)?,
        };
        let opts = LiftOptions { x_bins: m.x_bins, y_bins: m.y_bins, exec: self.cfg.exec, ..LiftOptions::default() };
        let density = self.state.acip.as_ref().expect("acip runs before lift");
        let path = self.dir.join("srb.bin");
        // reuse a checkpoint written for exactly this request
        let cached = SrbEstimate::load(&path).ok().filter(|s| {
            s.map_hash == self.spec.map_hash()
                && s.seed == self.cfg.seed()
                && s.requested == m.samples
                && s.iterations_used == n_iter
                && s.fiber_bins == m.x_bins
                && s.y_bins == m.y_bins
        });
        let srb = match cached {
            Some(s) => s,
            None => lift_srb(&self.spec, density, n_iter, m.samples, self.cfg.seed(), &opts)?,
        };
        srb.save(&path)?;
        self.written.push(path);
        let grid = density_grid(&srb, m.grid_n, m.grid_n)?;
        self.csv("density_grid.csv", &grid.to_csv())?;
        self.state.srb = Some(srb);
        Ok(())
    }

    fn criterion(&mut self) -> Result<(), GhmError> {
        let m = &self.cfg.measure;
        let opts = CriterionOptions { bounded_ratio: m.bounded_ratio, diverging_slope: m.diverging_slope, exec: self.cfg.exec };
        let srb = self.state.srb.as_ref().expect("lift runs before criterion");
        let table = tsujii_criterion(srb, &m.r_list, &opts)?;
        self.csv("criterion.csv", &table.to_csv())?;
        #[derive(Serialize)]
        struct Summary<'a> {
            r_values: &'a [f64],
            i_of_r: &'a [f64],
            window_ratio: f64,
            loglog_slope: f64,
            verdict: WindowVerdict,
        }
        let summary = Summary {
            r_values: &table.r_values,
            i_of_r: &table.i_of_r,
            window_ratio: table.window_ratio,
            loglog_slope: table.loglog_slope,
            verdict: table.verdict,
        };
        self.json("criterion.json", &summary)?;
        self.state.criterion = Some(table);
        Ok(())
    }

    fn fatness(&mut self) -> Result<(), GhmError> {
        let opts = FatnessOptions { exec: self.cfg.exec, ..FatnessOptions::default() };
        let fit = fatness_fit(&self.spec, self.cfg.conditions.fatness_depth, &opts)?;
        self.json("fatness.json", &fit)?;
        self.state.fatness = Some(fit);
        Ok(())
    }

    fn transversality(&mut self) -> Result<(), GhmError> {
        let c = &self.cfg.conditions;
        let mut opts = NtrOptions::new(self.cfg.delta());
        opts.tail_depth = c.tail_depth;
        opts.x_grid_n = c.x_grid_n;
        opts.pair_budget = c.pair_budget;
        opts.seed = self.cfg.seed();
        opts.exec = self.cfg.exec;
        let mut reports = Vec::new();
        for (r, words) in &self.state.inventories {
            reports.push(ntr_sum_for(&self.spec, *r, words, &opts)?);
        }
        let fit = sweep_exponent(&reports);
        for rep in &mut reports {
            rep.exponent_fit = fit;
        }
        self.csv("ntr.csv", &sweep_csv(&reports))?;
        self.json("ntr.json", &reports)?;
        self.state.ntr = reports;
        Ok(())
    }

    fn diagnostics(&mut self) -> Result<(), GhmError> {
        let d = &self.cfg.diagnostics;
        let opts = DiagnosticsOptions {
            depth: d.depth,
            lattice_n: d.lattice_n,
            x_grid_n: d.x_grid_n,
            seed: self.cfg.seed(),
            exec: self.cfg.exec,
            ..DiagnosticsOptions::default()
        };
        let report = diagnostics_report(&self.spec, &opts)?;
        self.json("diagnostics.json", &report)?;
        self.state.diagnostics = Some(report);
        Ok(())
    }

    fn figure(&mut self) -> Result<(), GhmError> {
        for &n in &self.cfg.output.figure_n.clone() {
            let fig = emit_strip_polygons(&self.spec, n, 129, 1 << 12)?;
            if self.cfg.output.wants("svg") {
                self.write(&format!("strips_n{n}.svg"), fig.to_svg().as_bytes())?;
            }
            self.csv(&format!("strips_n{n}.csv"), &fig.to_csv())?;
        }
        Ok(())
    }

    fn verdict(&mut self) -> Result<(), GhmError> {
        let exponent = sweep_exponent(&self.state.ntr);
        let transversal_window = match (exponent, self.state.ntr.first(), self.state.ntr.last()) {
            (Some(e), Some(first), Some(last)) if e > 0.0 && last.sum < first.sum => TransversalWindow::Decreasing,
            (Some(_), _, _) => TransversalWindow::NotDecreasing,
            // every sum vanished: nothing left to charge
            (None, Some(_), _) if self.state.ntr.iter().all(|r| r.sum == 0.0) => TransversalWindow::Decreasing,
            _ => TransversalWindow::Undetermined,
        };
        let v = Verdict {
            fat: self.state.fatness.as_ref().map(|f| f.passed),
            transversal_window,
            i_r_window: self.state.criterion.as_ref().map(|c| c.verdict),
            ntr_exponent: exponent,
            fatness_epsilon: self.state.fatness.as_ref().and_then(|f| f.epsilon),
        };
        self.json("verdict.json", &v)?;
        self.state.verdict = Some(v);
        Ok(())
    }

    fn finish_manifest(&mut self) -> Result<(), GhmError> {
        let mut files = Vec::new();
        let mut paths = self.written.clone();
        paths.sort();
        paths.dedup();
        for p in paths {
            let bytes = std::fs::read(&p)?;
            files.push(FileDigest {
                path: p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
                bytes: bytes.len() as u64,
                sha256: hex(&Sha256::digest(&bytes)),
            });
        }
        self.manifest.files = files;
        let mut text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        text.push('\n');
        std::fs::write(self.dir.join("manifest.json"), text)?;
        Ok(())
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Result of [`run_pipeline`]: the manifest plus everything computed.
pub struct PipelineOutput {
    pub manifest: RunManifest,
    pub state: RunState,
}

/// Runs the requested stages (with their prerequisites) in fixed order and
/// writes reports into the output directory. The verdict and manifest are
/// always written.
pub fn run_pipeline(cfg: &RunConfig, stages: &[Stage]) -> Result<PipelineOutput, CliError> {
    let spec = cfg.validate()?;
    let mut wanted: Vec<Stage> = Vec::new();
    for &s in stages {
        wanted.extend_from_slice(s.needs());
        wanted.push(s);
    }
    wanted.sort();
    wanted.dedup();

    let mut run = Run {
        cfg,
        dir: cfg.output.directory.clone(),
        manifest: RunManifest {
            map_hash: spec.map_hash(),
            versions: Versions {
                ghm: env!("CARGO_PKG_VERSION").into(),
                cylinder_cache: CACHE_VERSION,
                srb_checkpoint: SRB_VERSION,
            },
            ..RunManifest::default()
        },
        spec,
        state: RunState::default(),
        written: Vec::new(),
    };
    for stage in wanted {
        if let Err(f) = run.run_stage(stage) {
            run.manifest.failed_stage = Some(f.stage.name().into());
            // best effort: the partial manifest is part of the failure report
            let _ = run.finish_manifest();
            return Err(CliError::Stage { stage: f.stage.name(), source: f.source, manifest: Box::new(run.manifest) });
        }
    }
    run.verdict().and_then(|_| run.finish_manifest()).map_err(|source| CliError::Stage {
        stage: "report",
        source,
        manifest: Box::new(run.manifest.clone()),
    })?;
    Ok(PipelineOutput { manifest: run.manifest, state: run.state })
}

/// Reloads the binary caches in `dir`, verifying versions and digests.
pub fn cache_roundtrip(dir: &Path) -> Result<(Option<CylinderStore>, Option<SrbEstimate>), GhmError> {
    let cyl = dir.join("cylinders.bin");
    let srb = dir.join("srb.bin");
    let c = if cyl.exists() { Some(CylinderStore::load(&cyl, None)?) } else { None };
    let s = if srb.exists() { Some(SrbEstimate::load(&srb)?) } else { None };
    Ok((c, s))
}
