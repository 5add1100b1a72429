//! Small-dense verification suite behind `bapkit verify`: seeded Theorem-1
//! trials against a full SVD oracle, agreement of the three departure
//! routes, Arnoldi relation fixtures, nonnormality and capture diagnostics
//! on sampled increment matrices, and a fault-injection control. The report
//! text is deterministic under a fixed seed; failing cases are serialized
//! next to it for replay.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::bap::{block_arnoldi, build_eim, random_block, subseed, subspace_capture_ratio, DenseOp};
use crate::error::{Error, Result};
use crate::harness::commands::{CommandReport, Workbench, TAG_VERIFY};
use crate::harness::config::{ExperimentConfig, ModelChoice};
use crate::harness::report::{ensure_dir, format_float, RunLog};
use crate::linalg::{
    arnoldi_relation_residual, departure_from_normality, departure_hermitian_route,
    departure_skew_route, nonnormality_ratio, nonnormality_ratio_scaled, theorem1_bound_check,
};
use crate::metrics::sample_states;

pub struct CheckSection {
    pub name: &'static str,
    pub passed: bool,
    pub details: Vec<String>,
    /// `(file name, contents)` of failing cases to serialize for replay.
    pub artifacts: Vec<(String, String)>,
}

impl CheckSection {
    fn new(name: &'static str) -> CheckSection {
        CheckSection {
            name,
            passed: true,
            details: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    fn fail(&mut self, detail: String) {
        self.passed = false;
        self.details.push(detail);
    }

    /// Records a violated soft expectation without failing the section.
    fn flag(&mut self, detail: String) {
        self.details.push(format!("flag: {detail}"));
    }

    pub fn flag_count(&self) -> usize {
        self.details
            .iter()
            .filter(|d| d.starts_with("flag: "))
            .count()
    }
}

pub struct VerifyReport {
    pub sections: Vec<CheckSection>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.sections.iter().all(|s| s.passed)
    }

    pub fn render(&self, fingerprint: &str) -> String {
        let mut out = format!("verification report\nfingerprint: {fingerprint}\n\n");
        for section in &self.sections {
            let tag = if section.passed { "PASS" } else { "FAIL" };
            out.push_str(&format!("[{tag}] {}\n", section.name));
            for d in &section.details {
                out.push_str(&format!("  {d}\n"));
            }
        }
        out
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Serializes a failing quadruple input as comment lines plus the matrix
/// rows, enough to rebuild and rerun the check.
fn failing_case(trial: usize, b: &DMatrix<f64>, start: &DMatrix<f64>, m: usize, why: &str) -> (String, String) {
    let mut text = format!(
        "# theorem1 trial {trial}: {why}\n# n={} l={} m={m}\n# rows of B, then rows of the start block\n",
        b.nrows(),
        start.ncols()
    );
    for mat in [b, start] {
        for i in 0..mat.nrows() {
            let row: Vec<String> = (0..mat.ncols()).map(|j| format_float(mat[(i, j)])).collect();
            text.push_str(&row.join(","));
            text.push('\n');
        }
    }
    (format!("verify_failure_theorem1_trial{trial}.csv"), text)
}

/// 1000 seeded random operators of order at most 30, decomposed and checked
/// against the full-SVD oracle. Any violated bound fails the section.
fn theorem1_trials(master: u64) -> CheckSection {
    let mut section = CheckSection::new("theorem1 singular value bound, 1000 random trials");
    let mut rng = ChaCha8Rng::seed_from_u64(subseed(master, &[TAG_VERIFY, 1]));
    let trials = 1000;
    let mut violations = 0usize;
    let mut min_margin = f64::INFINITY;
    let mut max_bound = 0.0f64;
    for trial in 0..trials {
        let n = rng.gen_range(2..=30usize);
        let l = rng.gen_range(1..=3.min(n));
        let m = rng.gen_range(1..=4.min(n / l).max(1));
        let scale = 10f64.powi(rng.gen_range(-1..=2));
        let b = random_matrix(&mut rng, n, n) * scale;
        let start = random_matrix(&mut rng, n, l);
        let outcome = block_arnoldi(&DenseOp(&b), &start, m, subseed(master, &[TAG_VERIFY, 2, trial as u64]))
            .and_then(|d| theorem1_bound_check(&b, &d.q, &d.h, &d.residual));
        match outcome {
            Ok(check) if check.ok => {
                for e in &check.entries {
                    min_margin = min_margin.min(e.margin);
                }
                max_bound = max_bound.max(check.bound);
            }
            Ok(check) => {
                violations += 1;
                let worst = check
                    .entries
                    .iter()
                    .map(|e| e.margin)
                    .fold(f64::INFINITY, f64::min);
                section.fail(format!("trial {trial}: bound violated, margin {}", format_float(worst)));
                section.artifacts.push(failing_case(trial, &b, &start, m, "bound violated"));
            }
            Err(e) => {
                violations += 1;
                section.fail(format!("trial {trial}: {e}"));
                section.artifacts.push(failing_case(trial, &b, &start, m, &e.to_string()));
            }
        }
    }
    section.details.push(format!("trials: {trials}, violations: {violations}"));
    section.details.push(format!("smallest margin: {}", format_float(min_margin)));
    section.details.push(format!("largest bound: {}", format_float(max_bound)));
    section
}

/// The eigenvalue, Hermitian-part, and skew-part routes to the departure
/// from normality must agree on random matrices.
fn departure_routes(master: u64) -> CheckSection {
    let mut section = CheckSection::new("departure from normality, three-route agreement");
    let mut rng = ChaCha8Rng::seed_from_u64(subseed(master, &[TAG_VERIFY, 3]));
    let mut max_dev = 0.0f64;
    for trial in 0..50 {
        let n = rng.gen_range(2..=40usize);
        let scale = 10f64.powi(rng.gen_range(-1..=2));
        let b = random_matrix(&mut rng, n, n) * scale;
        let routes = (|| -> Result<(f64, f64, f64)> {
            Ok((
                departure_from_normality(&b)?,
                departure_hermitian_route(&b)?,
                departure_skew_route(&b)?,
            ))
        })();
        match routes {
            Ok((direct, herm, skew)) => {
                let dev = (direct - herm).abs().max((direct - skew).abs()) / (1.0 + b.norm());
                max_dev = max_dev.max(dev);
                if dev > 1e-7 {
                    section.fail(format!("trial {trial}: routes disagree by {}", format_float(dev)));
                }
            }
            Err(e) => section.fail(format!("trial {trial}: {e}")),
        }
    }
    section.details.push(format!("largest relative deviation: {}", format_float(max_dev)));
    section
}

/// Dense 50x50 fixtures across the block-size / loop grid: the decomposition
/// must satisfy the relation to `1e-10 ||B||_F` with an orthonormal basis.
fn arnoldi_fixtures(master: u64) -> CheckSection {
    let mut section = CheckSection::new("arnoldi relation fixtures, 50x50");
    let mut rng = ChaCha8Rng::seed_from_u64(subseed(master, &[TAG_VERIFY, 5]));
    let n = 50;
    let b = random_matrix(&mut rng, n, n);
    let b_scale = b.norm();
    let mut worst = 0.0f64;
    for l in [1usize, 3, 5] {
        let start = random_matrix(&mut rng, n, l);
        for m in [1usize, 5, 10] {
            match block_arnoldi(&DenseOp(&b), &start, m, subseed(master, &[TAG_VERIFY, 6, l as u64, m as u64])) {
                Ok(d) => {
                    let rel = arnoldi_relation_residual(&b, &d.q, &d.h, &d.residual) / b_scale;
                    let ortho = (d.q.transpose() * &d.q - DMatrix::identity(d.order(), d.order())).norm();
                    worst = worst.max(rel);
                    if rel > 1e-10 {
                        section.fail(format!("l={l} m={m}: relative residual {}", format_float(rel)));
                    }
                    if ortho > 1e-8 {
                        section.fail(format!("l={l} m={m}: basis drift {}", format_float(ortho)));
                    }
                }
                Err(e) => section.fail(format!("l={l} m={m}: {e}")),
            }
        }
    }
    section.details.push(format!("worst relative residual: {}", format_float(worst)));
    section
}

/// Nonnormality ratios and subspace capture on increment matrices of sampled
/// attractor states. Both are typical-value diagnostics, so individual
/// states outside the reference range are flagged, not failed: the literal
/// ratio sits near 0.04 on Lorenz-96 (0.05 is its typical upper edge; about
/// one state in ten lands slightly above) and near zero for shallow water,
/// where 0.10 is the reference edge. What fails the section is a ratio
/// median at or above the edge. The capture ratio at order 12 (40 for
/// shallow water) is reported and flagged when it is not above 0.8: that
/// threshold depends strongly on the optimization horizon, and at the
/// default T = 0.2 it sits well below 0.8 for every 12-dimensional subspace
/// construction.
fn eim_diagnostics(bench: &Workbench) -> CheckSection {
    let mut section = CheckSection::new("increment matrix nonnormality and capture");
    let cfg = &bench.cfg;
    let swm = cfg.model == ModelChoice::Swm;
    let (count, cap_l, cap_m, ratio_limit) = if swm { (1, 4, 10, 0.10) } else { (5, 3, 4, 0.05) };
    let cap_l = cap_l.min(cfg.dim());
    let cap_m = cap_m.min((cfg.dim() / cap_l).max(1));
    let set = match sample_states(
        &bench.model,
        cfg.spinup_steps,
        cfg.window_steps,
        count,
        0,
        subseed(cfg.seed, &[TAG_VERIFY, 4]),
    ) {
        Ok(s) => s,
        Err(e) => {
            section.fail(format!("sampling failed: {e}"));
            return section;
        }
    };
    let mut ratios = Vec::with_capacity(set.samples.len());
    for (idx, sample) in set.samples.iter().enumerate() {
        let diag = (|| -> Result<(f64, f64, f64)> {
            let ctx = bench.context(sample)?;
            let eim = build_eim(&ctx)?;
            let literal = nonnormality_ratio(&eim)?;
            let scaled = nonnormality_ratio_scaled(&eim)?;
            let start = random_block(cfg.dim(), cap_l, subseed(cfg.seed, &[TAG_VERIFY, 7, idx as u64]));
            let decomp = block_arnoldi(
                &DenseOp(&eim),
                &start,
                cap_m,
                subseed(cfg.seed, &[TAG_VERIFY, 8, idx as u64]),
            )?;
            Ok((literal, scaled, subspace_capture_ratio(&decomp.h, &eim)?))
        })();
        match diag {
            Ok((literal, scaled, capture)) => {
                section.details.push(format!(
                    "state {idx}: ratio {} (scaled {}), capture at order {} = {}",
                    format_float(literal),
                    format_float(scaled),
                    cap_l * cap_m,
                    format_float(capture)
                ));
                ratios.push(literal);
                if literal >= ratio_limit {
                    section.flag(format!(
                        "state {idx}: nonnormality ratio {literal:.4} is not below {ratio_limit}"
                    ));
                }
                if capture <= 0.8 {
                    section.flag(format!(
                        "state {idx}: capture ratio {capture:.4} at order {} is not above 0.8",
                        cap_l * cap_m
                    ));
                }
            }
            Err(e) => section.fail(format!("state {idx}: {e}")),
        }
    }
    if !ratios.is_empty() {
        ratios.sort_by(|a, b| a.partial_cmp(b).expect("finite ratios"));
        let median = ratios[ratios.len() / 2];
        section.details.push(format!("ratio median: {}", format_float(median)));
        if median >= ratio_limit {
            section.fail(format!(
                "nonnormality ratio median {median:.4} is not below {ratio_limit}"
            ));
        }
    }
    section
}

/// Negative control: a corrupted projection must be rejected, either by the
/// relation precondition or by a violated bound.
fn fault_injection(master: u64) -> CheckSection {
    let mut section = CheckSection::new("fault injection, corrupted projection");
    let mut rng = ChaCha8Rng::seed_from_u64(subseed(master, &[TAG_VERIFY, 9]));
    let b = random_matrix(&mut rng, 12, 12);
    let start = random_matrix(&mut rng, 12, 2);
    match block_arnoldi(&DenseOp(&b), &start, 3, subseed(master, &[TAG_VERIFY, 10])) {
        Ok(d) => {
            let mut h_bad = d.h.clone();
            h_bad[(0, 0)] += 0.5 * (1.0 + b.norm());
            match theorem1_bound_check(&b, &d.q, &h_bad, &d.residual) {
                Err(e) => section.details.push(format!("rejected by precondition: {e}")),
                Ok(check) if !check.ok => {
                    section.details.push("flagged as a violated bound".to_string())
                }
                Ok(_) => section.fail("corrupted projection slipped through".to_string()),
            }
        }
        Err(e) => section.fail(format!("fixture setup failed: {e}")),
    }
    section
}

pub(crate) fn run_verify(bench: &Workbench) -> VerifyReport {
    let seed = bench.cfg.seed;
    VerifyReport {
        sections: vec![
            theorem1_trials(seed),
            departure_routes(seed),
            arnoldi_fixtures(seed),
            eim_diagnostics(bench),
            fault_injection(seed),
        ],
    }
}

/// Runs the suite, writes `verify_report.txt` plus any failing-case files,
/// and turns a failed report into a verification error after everything is
/// on disk.
pub fn cmd_verify(cfg: &ExperimentConfig) -> Result<CommandReport> {
    let bench = Workbench::new(cfg)?;
    let mut log = RunLog::new("verify", &bench.fingerprint, &cfg.canonical_string());
    bench.model.counter().reset();
    let report = run_verify(&bench);
    log.count("eim diagnostics", bench.model.counter().count());

    ensure_dir(&cfg.output_dir)?;
    let report_path = cfg.output_dir.join("verify_report.txt");
    std::fs::write(&report_path, report.render(&bench.fingerprint))
        .map_err(|e| Error::io(format!("writing {}", report_path.display()), e))?;
    let mut files = vec![report_path.clone()];
    for section in &report.sections {
        for (name, contents) in &section.artifacts {
            let path = cfg.output_dir.join(name);
            std::fs::write(&path, contents)
                .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
            log.line(format!("serialized failing case: {}", path.display()));
            files.push(path);
        }
    }
    let log_path = log.write(&cfg.output_dir)?;
    files.push(log_path);

    if !report.passed() {
        let failed: Vec<&str> = report
            .sections
            .iter()
            .filter(|s| !s.passed)
            .map(|s| s.name)
            .collect();
        return Err(Error::Verification(format!(
            "failed sections: {}; see {}",
            failed.join("; "),
            report_path.display()
        )));
    }

    let summary = report
        .sections
        .iter()
        .map(|s| match s.flag_count() {
            0 => format!("[PASS] {}", s.name),
            k => format!("[PASS] {} ({k} flagged)", s.name),
        })
        .collect();
    Ok(CommandReport { files, summary })
}
