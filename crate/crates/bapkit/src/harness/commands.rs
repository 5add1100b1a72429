//! The experiment commands behind the CLI subcommands. Each one computes
//! everything first, then writes its tables, the run log, and a console
//! summary; nothing is written when a command fails early.

use std::path::PathBuf;
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::bap::{
    bap, build_eim, chord_history_depth, chord_vectors, eim_leading_sv, random_block, subseed,
    PerturbationContext, WorkingMap,
};
use crate::dynamics::{steps_for, Model};
use crate::error::{Error, Result};
use crate::harness::config::{ExperimentConfig, InitKind, ModelChoice};
use crate::harness::report::{ensure_dir, format_float, CsvFile, RunLog};
use crate::linalg::svd_triplets;
use crate::metrics::{
    cost_ratio, egr_curve, megr, regi, sample_states, working_base_trajectory, GrowthCurve,
    MegrOutcome, Sample, SampleSet, WorkingTrajectory,
};

/// Seed-stream tags under the master seed. The init tag deliberately leaves
/// out the loop count: a deeper iteration then extends the same Krylov
/// recursion from the same start block instead of reshuffling it.
pub(crate) const TAG_SAMPLES: u64 = 1;
pub(crate) const TAG_INIT: u64 = 2;
pub(crate) const TAG_BREAKDOWN: u64 = 3;
pub(crate) const TAG_VERIFY: u64 = 4;

/// Files a command wrote plus console summary lines.
#[derive(Debug)]
pub struct CommandReport {
    pub files: Vec<PathBuf>,
    pub summary: Vec<String>,
}

/// Shared per-command state: the model, the working-coordinate map, and the
/// config fingerprint stamped into every output file.
pub(crate) struct Workbench {
    pub cfg: ExperimentConfig,
    pub model: Model,
    pub map: WorkingMap,
    pub fingerprint: String,
}

impl Workbench {
    pub fn new(cfg: &ExperimentConfig) -> Result<Workbench> {
        let spec = cfg.model_spec()?;
        let map = WorkingMap::for_model(&spec, cfg.norm)?;
        Ok(Workbench {
            cfg: cfg.clone(),
            model: Model::new(spec),
            map,
            fingerprint: cfg.fingerprint(),
        })
    }

    pub fn sample(&self, history_depth: usize) -> Result<SampleSet> {
        sample_states(
            &self.model,
            self.cfg.spinup_steps,
            self.cfg.window_steps,
            self.cfg.samples,
            history_depth,
            subseed(self.cfg.seed, &[TAG_SAMPLES]),
        )
    }

    pub fn context(&self, sample: &Sample) -> Result<PerturbationContext<'_>> {
        PerturbationContext::new(
            &self.model,
            self.map.clone(),
            sample.state.clone(),
            self.cfg.t,
            self.cfg.amplitude,
        )
    }

    fn history_depth_for(&self, init: InitKind, block_size: usize) -> usize {
        match init {
            InitKind::Random => 0,
            InitKind::Chord => {
                chord_history_depth(block_size, self.cfg.chord_stride, self.cfg.chord_span)
            }
        }
    }

    fn start_block(&self, sample_index: usize, sample: &Sample, init: InitKind, l: usize) -> Result<nalgebra::DMatrix<f64>> {
        match init {
            InitKind::Random => Ok(random_block(
                self.cfg.dim(),
                l,
                subseed(self.cfg.seed, &[TAG_INIT, sample_index as u64, l as u64]),
            )),
            InitKind::Chord => chord_vectors(
                &sample.history,
                &self.map,
                l,
                self.cfg.chord_stride,
                self.cfg.chord_span,
            ),
        }
    }
}

/// Per-sample reference data shared by every table cell: the base trajectory
/// and the growth curve of the exactly computed leading right singular
/// vector of the increment matrix.
struct Baseline {
    base: WorkingTrajectory,
    curve: GrowthCurve,
}

enum SampleBase {
    Ready(Box<Baseline>),
    Failed(String),
}

fn baseline_for(bench: &Workbench, sample: &Sample, curve_horizon: f64) -> Result<Baseline> {
    let ctx = bench.context(sample)?;
    let base = working_base_trajectory(&ctx, curve_horizon)?;
    let trip = eim_leading_sv(&ctx, 1)?.remove(0);
    let curve = egr_curve(&ctx, &trip.right, &base)?;
    Ok(Baseline { base, curve })
}

fn build_baselines(bench: &Workbench, set: &SampleSet, curve_horizon: f64) -> Vec<SampleBase> {
    set.samples
        .par_iter()
        .map(|s| match baseline_for(bench, s, curve_horizon) {
            Ok(b) => SampleBase::Ready(Box::new(b)),
            Err(e) => SampleBase::Failed(e.to_string()),
        })
        .collect()
}

fn megr_from_baselines(bases: &[SampleBase]) -> Result<MegrOutcome> {
    megr(bases.len(), |i| match &bases[i] {
        SampleBase::Ready(b) => Ok(b.curve.clone()),
        SampleBase::Failed(msg) => Err(Error::Domain(msg.clone())),
    })
}

/// Mean growth curve of the BAP direction for one `(init, l, m)` cell,
/// excluding samples whose baseline already failed.
fn bap_megr_cell(
    bench: &Workbench,
    set: &SampleSet,
    bases: &[SampleBase],
    init: InitKind,
    l: usize,
    m: usize,
) -> Result<MegrOutcome> {
    megr(set.samples.len(), |i| {
        let base = match &bases[i] {
            SampleBase::Ready(b) => b,
            SampleBase::Failed(msg) => return Err(Error::Domain(msg.clone())),
        };
        let sample = &set.samples[i];
        let ctx = bench.context(sample)?;
        let start = bench.start_block(i, sample, init, l)?;
        let seed = subseed(
            bench.cfg.seed,
            &[TAG_BREAKDOWN, i as u64, l as u64, m as u64],
        );
        let result = bap(&ctx, &start, m, 1, seed)?;
        let v = result.perturbations.column(0).into_owned();
        egr_curve(&ctx, &v, &base.base)
    })
}

fn curve_csv(fingerprint: &str, curve: &GrowthCurve) -> CsvFile {
    let mut csv = CsvFile::new(fingerprint);
    csv.row_str(&["t", "megr"]);
    for (t, r) in curve.times.iter().zip(curve.rates.iter()) {
        csv.row(None, &[*t, *r]);
    }
    csv
}

fn log_failures(log: &mut RunLog, phase: &str, outcome: &MegrOutcome) {
    for (i, msg) in &outcome.failures {
        log.line(format!("{phase}: sample {i} excluded: {msg}"));
    }
}

/// Mean growth curves of the BAP perturbation and of the exact leading
/// singular vector over the sampled states, written as `megr_bap.csv` and
/// `megr_eimsv.csv`, with their growth-integral ratio in the summary.
pub fn cmd_bap_run(cfg: &ExperimentConfig) -> Result<CommandReport> {
    let bench = Workbench::new(cfg)?;
    let mut log = RunLog::new("bap-run", &bench.fingerprint, &cfg.canonical_string());
    let steps_t = steps_for(cfg.t, cfg.dt)?;
    let steps_h = steps_for(cfg.horizon, cfg.dt)?;
    let n = cfg.dim() as u64;

    let depth = bench.history_depth_for(cfg.init, cfg.block_size);
    bench.model.counter().reset();
    let set = bench.sample(depth)?;
    log.count("sampling", bench.model.counter().count());

    bench.model.counter().reset();
    let bases = build_baselines(&bench, &set, cfg.horizon);
    let megr_eimsv = megr_from_baselines(&bases)?;
    log.count("eimsv baselines", bench.model.counter().count());
    log.line(format!(
        "eimsv formula: samples * (T base + n EIF columns + horizon curve pair) = {} * ({} + {} + {})",
        cfg.samples,
        steps_t,
        n * steps_t,
        2 * steps_h,
    ));

    bench.model.counter().reset();
    let megr_bap = bap_megr_cell(
        &bench,
        &set,
        &bases,
        cfg.init,
        cfg.block_size,
        cfg.iterations,
    )?;
    log.count("bap curves", bench.model.counter().count());
    log.line(format!(
        "bap formula: samples * (T base + m*l EIF applications + horizon curve) = {} * ({} + {} + {})",
        cfg.samples,
        steps_t,
        (cfg.iterations * cfg.block_size) as u64 * steps_t,
        steps_h,
    ));
    log_failures(&mut log, "eimsv", &megr_eimsv);
    log_failures(&mut log, "bap", &megr_bap);

    let regi_value = regi(&megr_bap.curve, &megr_eimsv.curve, cfg.t)?;

    ensure_dir(&cfg.output_dir)?;
    let bap_path = cfg.output_dir.join("megr_bap.csv");
    let eimsv_path = cfg.output_dir.join("megr_eimsv.csv");
    curve_csv(&bench.fingerprint, &megr_bap.curve).write(&bap_path)?;
    curve_csv(&bench.fingerprint, &megr_eimsv.curve).write(&eimsv_path)?;
    log.line(format!("regi(T={}): {}", cfg.t, format_float(regi_value)));
    let log_path = log.write(&cfg.output_dir)?;

    Ok(CommandReport {
        files: vec![bap_path, eimsv_path, log_path],
        summary: vec![
            format!(
                "bap-run: {} samples used (bap {}, eimsv {})",
                set.samples.len(),
                megr_bap.used,
                megr_eimsv.used
            ),
            format!("REGI over [0, {}]: {:.4}", cfg.t, regi_value),
        ],
    })
}

/// Growth-integral ratio for every `(init, l, m)` combination in the
/// configured lists, sharing one sample set and one exact baseline per state.
/// Rows are iteration counts, column groups are random then chord starts.
pub fn cmd_regi_table(cfg: &ExperimentConfig) -> Result<CommandReport> {
    let bench = Workbench::new(cfg)?;
    let mut log = RunLog::new("regi-table", &bench.fingerprint, &cfg.canonical_string());

    let max_l = *cfg.l_list.iter().max().expect("validated nonempty");
    let depth = bench.history_depth_for(InitKind::Chord, max_l);
    bench.model.counter().reset();
    let set = bench.sample(depth)?;
    log.count("sampling", bench.model.counter().count());

    bench.model.counter().reset();
    let bases = build_baselines(&bench, &set, cfg.t);
    let megr_base = megr_from_baselines(&bases)?;
    log.count("eimsv baselines", bench.model.counter().count());
    log_failures(&mut log, "baseline", &megr_base);

    let mut csv = CsvFile::new(&bench.fingerprint);
    let mut header = vec!["m".to_string()];
    for init in ["random", "chord"] {
        for l in &cfg.l_list {
            header.push(format!("{init}_l{l}"));
        }
    }
    csv.row_str(&header);

    bench.model.counter().reset();
    let mut spot = Vec::new();
    for &m in &cfg.m_list {
        let mut row = Vec::new();
        for init in [InitKind::Random, InitKind::Chord] {
            for &l in &cfg.l_list {
                let outcome = bap_megr_cell(&bench, &set, &bases, init, l, m)?;
                let value = regi(&outcome.curve, &megr_base.curve, cfg.t)?;
                let name = match init {
                    InitKind::Random => "random",
                    InitKind::Chord => "chord",
                };
                log.line(format!(
                    "cell {name} l={l} m={m}: regi={} used={}",
                    format_float(value),
                    outcome.used
                ));
                if l == max_l && m == *cfg.m_list.last().expect("nonempty") {
                    spot.push(format!("{name} l={l} m={m}: REGI {value:.3}"));
                }
                row.push(value);
            }
        }
        csv.row(Some(&m.to_string()), &row);
    }
    log.count("table cells", bench.model.counter().count());

    ensure_dir(&cfg.output_dir)?;
    let table_path = cfg.output_dir.join("regi_table.csv");
    csv.write(&table_path)?;
    let log_path = log.write(&cfg.output_dir)?;

    let mut summary = vec![format!(
        "regi-table: {} cells over {} samples",
        2 * cfg.l_list.len() * cfg.m_list.len(),
        set.samples.len()
    )];
    summary.extend(spot);
    Ok(CommandReport {
        files: vec![table_path, log_path],
        summary,
    })
}

/// Cost table: integration-count ratios `l*m/n` for every configured cell.
/// With `measure_wallclock=true` a second, non-reproducible table of measured
/// wall-clock ratios against the full increment-matrix build is written.
pub fn cmd_cost_table(cfg: &ExperimentConfig) -> Result<CommandReport> {
    let bench = Workbench::new(cfg)?;
    let mut log = RunLog::new("cost-table", &bench.fingerprint, &cfg.canonical_string());
    let n = cfg.dim();

    let mut csv = CsvFile::new(&bench.fingerprint);
    csv.comment(&format!("integration-count ratio l*m/n, n={n}"));
    let mut header = vec!["m".to_string()];
    for l in &cfg.l_list {
        header.push(format!("l{l}"));
    }
    csv.row_str(&header);
    for &m in &cfg.m_list {
        let mut row = Vec::new();
        for &l in &cfg.l_list {
            row.push(cost_ratio(l, m, n)?);
        }
        csv.row(Some(&m.to_string()), &row);
    }

    ensure_dir(&cfg.output_dir)?;
    let table_path = cfg.output_dir.join("cost_table.csv");
    csv.write(&table_path)?;
    let mut files = vec![table_path];

    if cfg.measure_wallclock {
        files.push(measure_wallclock_table(cfg, &bench, &mut log)?);
    }
    let log_path = log.write(&cfg.output_dir)?;
    files.push(log_path);

    Ok(CommandReport {
        files,
        summary: vec![format!(
            "cost-table: {} cells, n={n}, largest ratio {:.4}",
            cfg.l_list.len() * cfg.m_list.len(),
            cost_ratio(
                *cfg.l_list.iter().max().expect("nonempty"),
                *cfg.m_list.iter().max().expect("nonempty"),
                n
            )?
        )],
    })
}

/// Times BAP per cell against one full increment-matrix build on the same
/// sampled state. Wall-clock output is inherently non-reproducible, so it
/// lives in its own file and stays out of `cost_table.csv`.
fn measure_wallclock_table(
    cfg: &ExperimentConfig,
    bench: &Workbench,
    log: &mut RunLog,
) -> Result<PathBuf> {
    let max_l = *cfg.l_list.iter().max().expect("validated nonempty");
    let depth = bench.history_depth_for(cfg.init, max_l);
    let set = bench.sample(depth)?;
    let sample = &set.samples[0];
    let ctx = bench.context(sample)?;

    let t0 = Instant::now();
    let eim = build_eim(&ctx)?;
    svd_triplets(&eim)?;
    let full = t0.elapsed().as_secs_f64();
    log.line(format!("wallclock reference (EIM build + SVD): {full:.3}s"));

    let mut csv = CsvFile::new(&bench.fingerprint);
    csv.comment("measured wall-clock ratio against a full EIM build + SVD; not reproducible");
    let mut header = vec!["m".to_string()];
    for l in &cfg.l_list {
        header.push(format!("l{l}"));
    }
    csv.row_str(&header);
    for &m in &cfg.m_list {
        let mut row = Vec::new();
        for &l in &cfg.l_list {
            let start = bench.start_block(0, sample, cfg.init, l)?;
            let seed = subseed(cfg.seed, &[TAG_BREAKDOWN, 0, l as u64, m as u64]);
            let t1 = Instant::now();
            bap(&ctx, &start, m, 1, seed)?;
            row.push(t1.elapsed().as_secs_f64() / full);
        }
        csv.row(Some(&m.to_string()), &row);
    }
    let path = cfg.output_dir.join("cost_wallclock.csv");
    csv.write(&path)?;
    Ok(path)
}

/// Squared-norm fraction of a working-space shallow water vector inside the
/// four `c x c` corner blocks of the mesh, summed over all three fields.
pub fn corner_fraction(v: &DVector<f64>, mesh: usize, c: usize) -> Result<f64> {
    let cells = mesh * mesh;
    if v.len() != 3 * cells {
        return Err(Error::Dimension {
            context: "corner fraction input",
            expected: 3 * cells,
            got: v.len(),
        });
    }
    let total = v.norm_squared();
    if total == 0.0 {
        return Err(Error::Precondition(
            "corner fraction is undefined for the zero vector".into(),
        ));
    }
    let mut num = 0.0;
    for i in 0..mesh {
        for j in 0..mesh {
            let corner = (i < c || i >= mesh - c) && (j < c || j >= mesh - c);
            if corner {
                for f in 0..3 {
                    num += v[f * cells + i * mesh + j].powi(2);
                }
            }
        }
    }
    Ok(num / total)
}

fn field_grid_csv(fingerprint: &str, v: &DVector<f64>, field: usize, mesh: usize) -> CsvFile {
    let mut csv = CsvFile::new(fingerprint);
    let name = ["h", "u", "v"][field];
    csv.comment(&format!("working-coordinate {name} field, {mesh}x{mesh} row-major"));
    let cells = mesh * mesh;
    for i in 0..mesh {
        let row: Vec<f64> = (0..mesh).map(|j| v[field * cells + i * mesh + j]).collect();
        csv.row(None, &row);
    }
    csv
}

/// Dumps the leading exact singular vector and the configured BAP
/// approximation on one sampled shallow water state as per-field mesh grids,
/// plus a summary with their overlap and corner concentration.
pub fn cmd_spatial_dump(cfg: &ExperimentConfig) -> Result<CommandReport> {
    if cfg.model != ModelChoice::Swm {
        return Err(Error::Config {
            field: "model".into(),
            message: "spatial-dump is defined for the shallow water model".into(),
        });
    }
    let mesh = 23;
    let corner = 6;
    let bench = Workbench::new(cfg)?;
    let mut log = RunLog::new("spatial-dump", &bench.fingerprint, &cfg.canonical_string());

    let depth = bench.history_depth_for(cfg.init, cfg.block_size);
    bench.model.counter().reset();
    let set = bench.sample(depth)?;
    let sample = &set.samples[0];
    log.line(format!("state: step {} of the sampled trajectory", sample.step));
    let ctx = bench.context(sample)?;

    let trip = eim_leading_sv(&ctx, 1)?.remove(0);
    let start = bench.start_block(0, sample, cfg.init, cfg.block_size)?;
    let seed = subseed(
        cfg.seed,
        &[
            TAG_BREAKDOWN,
            0,
            cfg.block_size as u64,
            cfg.iterations as u64,
        ],
    );
    let result = bap(&ctx, &start, cfg.iterations, 1, seed)?;
    let v_bap = result.perturbations.column(0).into_owned();
    log.count("eim and bap", bench.model.counter().count());

    let overlap = trip.right.dot(&v_bap).abs();
    let corner_eimsv = corner_fraction(&trip.right, mesh, corner)?;
    let corner_bap = corner_fraction(&v_bap, mesh, corner)?;

    ensure_dir(&cfg.output_dir)?;
    let mut files = Vec::new();
    for (label, vector) in [("eimsv", &trip.right), ("bap", &v_bap)] {
        for field in 0..3 {
            let name = ["h", "u", "v"][field];
            let path = cfg.output_dir.join(format!("{label}_{name}.csv"));
            field_grid_csv(&bench.fingerprint, vector, field, mesh).write(&path)?;
            files.push(path);
        }
    }

    let mut summary_csv = CsvFile::new(&bench.fingerprint);
    summary_csv.row_str(&["quantity", "value"]);
    summary_csv.row(Some("sigma_eimsv"), &[trip.sigma]);
    summary_csv.row(Some("sigma_bap"), &[result.sigmas[0]]);
    summary_csv.row(Some("overlap"), &[overlap]);
    summary_csv.row(Some("corner_fraction_eimsv"), &[corner_eimsv]);
    summary_csv.row(Some("corner_fraction_bap"), &[corner_bap]);
    summary_csv.row(Some("subspace_order"), &[(cfg.block_size * cfg.iterations) as f64]);
    let summary_path = cfg.output_dir.join("spatial_summary.csv");
    summary_csv.write(&summary_path)?;
    files.push(summary_path);
    let log_path = log.write(&cfg.output_dir)?;
    files.push(log_path);

    Ok(CommandReport {
        files,
        summary: vec![
            format!(
                "spatial-dump: overlap |<v_bap, v_eimsv>| = {overlap:.4} at order {}",
                cfg.block_size * cfg.iterations
            ),
            format!(
                "corner energy fraction: eimsv {corner_eimsv:.3}, bap {corner_bap:.3} (uniform {:.3})",
                4.0 * (corner * corner) as f64 / (mesh * mesh) as f64
            ),
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::RawConfig;

    fn small_l96(samples: usize, out: &std::path::Path) -> ExperimentConfig {
        let mut raw = RawConfig::default();
        raw.apply("model", "lorenz96").unwrap();
        raw.apply("K", "6").unwrap();
        raw.apply("samples", &samples.to_string()).unwrap();
        raw.apply("l", "2").unwrap();
        raw.apply("m", "3").unwrap();
        raw.apply("l_list", "1,2").unwrap();
        raw.apply("m_list", "1,3").unwrap();
        raw.apply("horizon", "0.2").unwrap();
        raw.apply("window_steps", "200").unwrap();
        raw.apply("output_dir", out.to_str().unwrap()).unwrap();
        raw.resolve().unwrap()
    }

    #[test]
    fn bap_run_writes_both_curves_and_a_log() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_l96(3, dir.path());
        let report = cmd_bap_run(&cfg).unwrap();
        assert_eq!(report.files.len(), 3);
        let bap_text = std::fs::read_to_string(dir.path().join("megr_bap.csv")).unwrap();
        assert!(bap_text.starts_with(&format!("# fingerprint={}", cfg.fingerprint())));
        assert!(bap_text.lines().nth(1) == Some("t,megr"));
        // 20 steps over T=0.2 at dt=0.01
        assert_eq!(bap_text.lines().count(), 22);
        let log = std::fs::read_to_string(dir.path().join("run.log")).unwrap();
        assert!(log.contains("integrations[sampling]"));
        assert!(log.contains("regi(T=0.2)"));
    }

    #[test]
    fn bap_run_is_bitwise_reproducible() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let cfg_a = small_l96(2, dir_a.path());
        let cfg_b = small_l96(2, dir_b.path());
        cmd_bap_run(&cfg_a).unwrap();
        cmd_bap_run(&cfg_b).unwrap();
        for name in ["megr_bap.csv", "megr_eimsv.csv"] {
            let a = std::fs::read(dir_a.path().join(name)).unwrap();
            let b = std::fs::read(dir_b.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} must not depend on the run");
        }
    }

    #[test]
    fn regi_table_covers_all_cells_and_full_space_hits_one() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_l96(4, dir.path());
        cfg.l_list = vec![1, 2];
        cfg.m_list = vec![1, 3];
        cmd_regi_table(&cfg).unwrap();
        let text = std::fs::read_to_string(dir.path().join("regi_table.csv")).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], "m,random_l1,random_l2,chord_l1,chord_l2");
        assert_eq!(lines.len(), 4);
        // row m=3, column random_l2: order 6 spans the whole 6-dim space.
        // The lifted vector may come back sign-flipped and the increment is
        // nonlinear, so agreement is near-exact rather than exact.
        let row: Vec<&str> = lines[3].split(',').collect();
        assert_eq!(row[0], "3");
        let full: f64 = row[2].parse().unwrap();
        assert!((full - 1.0).abs() < 1e-3, "full-space REGI was {full}");
    }

    #[test]
    fn cost_table_matches_the_count_formula() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_l96(1, dir.path());
        cmd_cost_table(&cfg).unwrap();
        let text = std::fs::read_to_string(dir.path().join("cost_table.csv")).unwrap();
        let last = text.lines().last().unwrap();
        let cells: Vec<&str> = last.split(',').collect();
        assert_eq!(cells[0], "3");
        let ratio: f64 = cells[2].parse().unwrap();
        assert!((ratio - 1.0).abs() < 1e-15, "2*3/6 must be exactly 1");
        assert!(!dir.path().join("cost_wallclock.csv").exists());
    }

    #[test]
    fn spatial_dump_requires_the_shallow_water_model() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_l96(1, dir.path());
        match cmd_spatial_dump(&cfg) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "model"),
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn corner_fraction_counts_the_right_cells() {
        let mesh = 23;
        let cells = mesh * mesh;
        // unit mass at a corner cell of the u field
        let mut v = DVector::zeros(3 * cells);
        v[cells] = 2.0; // u field, i=0, j=0
        assert_eq!(corner_fraction(&v, mesh, 6).unwrap(), 1.0);
        // center cell is outside every corner block
        let mut w = DVector::zeros(3 * cells);
        w[11 * mesh + 11] = 1.0;
        assert_eq!(corner_fraction(&w, mesh, 6).unwrap(), 0.0);
        // uniform vector covers 4 * 36 of 529 cells
        let u = DVector::from_element(3 * cells, 1.0);
        let frac = corner_fraction(&u, mesh, 6).unwrap();
        assert!((frac - 144.0 / 529.0).abs() < 1e-12);
    }
}
