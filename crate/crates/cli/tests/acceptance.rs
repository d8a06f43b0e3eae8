//! Acceptance checklist. Prints one PASS/FAIL line per criterion and exits
//! non-zero on any failure not listed in `KNOWN_FAILURES`.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use ghm_cli::emit_strip_polygons;
use ghm_core::conditions::{fatness_fit, ntr_sweep, FatnessOptions, NtrOptions};
use ghm_core::diagnostics::{diagnostics_report, fiber_ratio_constant, DiagnosticsOptions};
use ghm_core::horseshoe::{make_affine_example, make_baker, validate_hyperbolicity};
use ghm_core::measure::{
    density_grid, lift_srb, tsujii_criterion, ulam_acip, BaseMap, CriterionOptions, LiftOptions,
};
use ghm_core::numeric::{compensated_sum, linear_fit};
use ghm_core::symbolic::{enumerate_m, EnumerateOptions, Word};

/// Criteria that fail on this implementation, with the reason recorded in the
/// project notes. A listed criterion still prints FAIL.
const KNOWN_FAILURES: &[u32] = &[5];

type Check = (u32, &'static str, fn() -> Outcome);

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

/// `x ~ Binomial(n, p)` within five standard deviations.
fn within_5_sigma(count: f64, n: f64, p: f64) -> bool {
    (count - n * p).abs() <= 5.0 * (n * p * (1.0 - p)).sqrt()
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let d = ulam_acip(&BaseMap::doubling(), 4096, 1e-13).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let sup = d.masses.iter().map(|m| (m * d.bins as f64 - 1.0).abs()).fold(0.0, f64::max);
    outcome(sup <= 1e-10 && secs < 10.0, format!("sup|p-1| = {sup:.2e}, {secs:.3} s"))
}

fn lift_opts() -> LiftOptions {
    LiftOptions { x_bins: 64, y_bins: 4096, ..LiftOptions::default() }
}

fn criterion_2() -> Outcome {
    let spec = make_baker(0.5).unwrap();
    let d = ulam_acip(&BaseMap::from_spec(&spec).unwrap(), 1024, 1e-13).unwrap();
    let n = 10_000_000u64;
    let est = lift_srb(&spec, &d, 40, n, 20, &lift_opts()).unwrap();
    let grid = density_grid(&est, 64, 64).unwrap();
    let nf = est.kept as f64;
    let bad_cells = grid.mass.iter().filter(|m| !within_5_sigma(*m * nf, nf, 1.0 / 4096.0)).count();
    let rs: Vec<f64> = (3..=7).map(|k| 0.5f64.powi(k)).collect();
    let table = tsujii_criterion(&est, &rs, &CriterionOptions::default()).unwrap();
    let worst = rs
        .iter()
        .zip(&table.i_of_r)
        .map(|(r, i)| ((i - (2.0 - 2.0 / 3.0 * r)) / (2.0 - 2.0 / 3.0 * r)).abs())
        .fold(0.0, f64::max);
    outcome(
        bad_cells == 0 && est.kept == n && worst <= 0.10,
        format!("{bad_cells} of 4096 cells outside 5 sigma, worst I(r) error {:.2}%", 100.0 * worst),
    )
}

fn i_of_r(lambda: f64, rs: &[f64]) -> Vec<f64> {
    let spec = make_baker(lambda).unwrap();
    let d = ulam_acip(&BaseMap::from_spec(&spec).unwrap(), 1024, 1e-13).unwrap();
    let est = lift_srb(&spec, &d, 40, 4_000_000, 30, &lift_opts()).unwrap();
    tsujii_criterion(&est, rs, &CriterionOptions::default()).unwrap().i_of_r
}

fn criterion_3() -> Outcome {
    let rs: Vec<f64> = (3..=9).map(|k| 0.5f64.powi(k)).collect();
    let fat = i_of_r(0.7, &rs);
    let ratio = |v: &[f64]| v.iter().copied().fold(0.0, f64::max) / v.iter().copied().fold(f64::INFINITY, f64::min);
    let thin = i_of_r(1.0 / 3.0, &rs);
    let growth = thin[thin.len() - 1] / thin[0];
    let lx: Vec<f64> = rs.iter().map(|r| r.ln()).collect();
    let ly: Vec<f64> = thin.iter().map(|i| i.ln()).collect();
    let slope = linear_fit(&lx, &ly).0;
    let expected = 2f64.ln() / 3f64.ln() - 1.0;
    outcome(
        ratio(&fat) < 3.0 && growth >= 4.0 && (slope - expected).abs() <= 0.15,
        format!(
            "lambda 0.7 max/min {:.3}; lambda 1/3 growth {growth:.2}, slope {slope:.3} vs {expected:.3}",
            ratio(&fat)
        ),
    )
}

fn criterion_4() -> Outcome {
    let opts = FatnessOptions::default();
    let fat = fatness_fit(&make_baker(0.7).unwrap(), 12, &opts).unwrap();
    let thin = fatness_fit(&make_baker(0.4).unwrap(), 12, &opts).unwrap();
    let affine = fatness_fit(&make_affine_example(0.8, 0.55).unwrap(), 12, &opts).unwrap();
    let expected = 2f64.ln() / (1.0f64 / 0.7).ln() - 1.0;
    let eps = fat.epsilon.unwrap_or(f64::NAN);
    let eps_affine = affine.epsilon.unwrap_or(f64::NAN);
    outcome(
        fat.passed && (eps - expected).abs() <= 0.02 && !thin.passed && affine.passed && eps_affine > 0.0,
        format!(
            "baker 0.7 eps {eps:.4} vs {expected:.4}; baker 0.4 passed = {}; affine eps {eps_affine:.4}",
            thin.passed
        ),
    )
}

fn criterion_5() -> Outcome {
    let (a, b) = (0.8, 0.55);
    let spec = make_affine_example(a, b).unwrap();
    let rs: Vec<f64> = (3..=9).map(|k| 0.5f64.powi(k)).collect();
    let reports = ntr_sweep(&spec, &rs, &NtrOptions::new((a - b) / 4.0), &EnumerateOptions::default()).unwrap();
    let exponent = reports[0].exponent_fit.unwrap_or(f64::NAN);
    let decreasing = reports.windows(2).all(|w| w[1].sum <= w[0].sum);
    let violations: u64 = reports.iter().map(|r| r.vol_violations).sum();
    let worst = reports.iter().map(|r| r.worst_vol_ratio).fold(0.0, f64::max);
    let sums: Vec<String> = reports.iter().map(|r| format!("{:.2}", r.sum)).collect();
    outcome(
        decreasing && exponent >= 1.5 && violations == 0,
        format!(
            "sums [{}], exponent {exponent:.3}; volume bound: {violations} violations, worst ratio {worst:.3}",
            sums.join(", ")
        ),
    )
}

fn criterion_6() -> Outcome {
    let affine = make_affine_example(0.8, 0.55).unwrap();
    let sup = |n: usize| {
        (1..=n)
            .flat_map(|k| Word::all_of_length(2, k))
            .map(|w| fiber_ratio_constant(&affine, &w, 129).unwrap())
            .fold(1.0, f64::max)
    };
    let (k8, k12) = (sup(8), sup(12));
    let k2_stable = (k12 - k8).abs() <= 0.05 * k8;

    let lambda = 0.6;
    let baker = make_baker(lambda).unwrap();
    let opts = DiagnosticsOptions { depth: 8, lattice_n: 32, ..Default::default() };
    let r = diagnostics_report(&baker, &opts).unwrap();
    let j = baker.fiber_len();
    let exact = [
        (r.k_stable, 1.0),
        (r.k2, 1.0),
        (r.k4, 1.0),
        (r.k3, 0.1 / j),
        (r.c2, 0.5),
        (r.c3, 1.0 / lambda),
        (r.c4, 0.0),
        (r.cone_ratio, lambda / 2.0),
    ];
    let baker_err = exact.iter().map(|(v, e)| (v - e).abs()).fold(0.0, f64::max);

    let mut margins = Vec::new();
    for spec in [&baker, &affine] {
        if validate_hyperbolicity(spec, 65, false).passed() {
            let rep = diagnostics_report(spec, &DiagnosticsOptions { depth: 4, lattice_n: 32, ..Default::default() }).unwrap();
            margins.push(rep.cone_margin);
        }
    }
    let margin_ok = margins.len() == 2 && margins.iter().all(|m| *m >= 0.0);
    outcome(
        k2_stable && baker_err <= 1e-12 && margin_ok,
        format!("K2 {k8:.4} (depth 8) vs {k12:.4} (depth 12); baker max error {baker_err:.1e}; margins {margins:.3?}"),
    )
}

fn criterion_7() -> Outcome {
    let spec = make_affine_example(0.8, 0.55).unwrap();
    let mut details = Vec::new();
    let mut ok = true;
    for (n, count) in [(1usize, 2usize), (5, 32)] {
        let fig = emit_strip_polygons(&spec, n, 129, 1 << 12).unwrap();
        let inside = fig.bands.iter().all(|b| {
            b.lower.iter().chain(&b.upper).all(|y| (0.0..=1.0).contains(y))
                && b.x.first() == Some(&0.0)
                && b.x.last() == Some(&1.0)
        });
        let pairs = (0..fig.bands.len())
            .flat_map(|i| (i + 1..fig.bands.len()).map(move |j| (i, j)))
            .filter(|&(i, j)| (0..fig.bands[i].x.len()).any(|k| fig.bands[i].overlap_at(&fig.bands[j], k) > 0.0))
            .count();
        ok &= fig.bands.len() == count && inside && pairs > 0;
        details.push(format!("n={n}: {} bands, inside = {inside}, {pairs} overlapping pairs", fig.bands.len()));
    }
    outcome(ok, details.join("; "))
}

fn criterion_8() -> Outcome {
    let r = 0.5f64.powi(10);
    let mut details = Vec::new();
    let mut ok = true;
    for (name, spec) in [("baker 0.7", make_baker(0.7).unwrap()), ("affine", make_affine_example(0.8, 0.55).unwrap())] {
        let words = enumerate_m(&spec, r, &EnumerateOptions::default()).unwrap();
        let total = compensated_sum(words.iter().map(|m| m.base.len()));
        ok &= (total - 1.0).abs() <= 1e-12;
        details.push(format!("{name}: {} words, |sum - 1| = {:.1e}", words.len(), (total - 1.0).abs()));
    }
    outcome(ok, details.join("; "))
}

const DETERMINISM_CONFIG: &str = r#"
seed = 1234
[map]
family = "affine"
a = 0.8
b = 0.55
[enumeration]
r_sweep = [0.125, 0.0625, 0.03125]
[measure]
bins = 1024
samples = 200000
x_bins = 64
y_bins = 2048
r_list = [0.125, 0.0625, 0.03125]
[conditions]
fatness_depth = 10
pair_budget = 100000
[diagnostics]
depth = 6
lattice_n = 16
"#;

fn run_all(dir: &Path, extra: &[&str]) -> Result<(), String> {
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, DETERMINISM_CONFIG).map_err(|e| e.to_string())?;
    let status = Command::new(env!("CARGO_BIN_EXE_ghm"))
        .arg("all")
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .args(extra)
        .output()
        .map_err(|e| e.to_string())?;
    if !status.status.success() {
        return Err(String::from_utf8_lossy(&status.stderr).into_owned());
    }
    Ok(())
}

fn report_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir.join("out"))
        .unwrap()
        .map(|e| e.unwrap())
        .map(|e| (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap()))
        .filter(|(name, _)| name != "manifest.json")
        .collect();
    files.sort();
    files
}

fn criterion_9() -> Outcome {
    let runs = [vec!["--threads", "1"], vec!["--threads", "4"], vec!["--sequential"]];
    let dirs: Vec<_> = runs.iter().map(|_| tempfile::tempdir().unwrap()).collect();
    for (dir, args) in dirs.iter().zip(&runs) {
        if let Err(e) = run_all(dir.path(), args) {
            return outcome(false, format!("run {args:?} failed: {e}"));
        }
    }
    let base = report_files(dirs[0].path());
    let mut differing = Vec::new();
    for dir in &dirs[1..] {
        let other = report_files(dir.path());
        if other.len() != base.len() {
            differing.push(format!("{} vs {} files", base.len(), other.len()));
        }
        for ((name, a), (_, b)) in base.iter().zip(&other) {
            if a != b {
                differing.push(name.clone());
            }
        }
    }
    outcome(
        differing.is_empty() && base.len() > 10,
        format!("{} report files compared across 1 thread, 4 threads and sequential; differing: {differing:?}", base.len()),
    )
}

fn main() {
    let criteria: [Check; 9] = [
        (1, "Ulam density of the doubling map", criterion_1),
        (2, "Lebesgue lift of the half baker", criterion_2),
        (3, "bounded vs diverging I(r)", criterion_3),
        (4, "fatness fits", criterion_4),
        (5, "non-transversal sum decay, affine example", criterion_5),
        (6, "distortion constants", criterion_6),
        (7, "strip figure bands", criterion_7),
        (8, "partition identity", criterion_8),
        (9, "determinism across worker counts", criterion_9),
    ];
    let mut unexpected = Vec::new();
    for (k, name, f) in criteria {
        let t = Instant::now();
        let o = f();
        let tag = if o.passed { "PASS" } else { "FAIL" };
        let known = if !o.passed && KNOWN_FAILURES.contains(&k) { " (known)" } else { "" };
        println!("{tag} criterion {k}: {name}{known} [{:.1} s] {}", t.elapsed().as_secs_f64(), o.detail);
        if !o.passed && !KNOWN_FAILURES.contains(&k) {
            unexpected.push(k);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
