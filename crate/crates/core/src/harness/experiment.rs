use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::{Experiment, ExperimentConfig, KernelMesh, Precision};
use super::functions::{cloud_target, convergence_order, franke, lshape_u, relative_error, Norm};
use crate::compression::CompressionParams;
use crate::error::{Error, Result};
use crate::geometry::{
    grid_points, lshape_points, parse_rows, subsample_indices, Hierarchy, PointSet,
};
use crate::scalar::Scalar;
use crate::solver::{multiscale_solve_partial, Interpolant, MultiscaleSystem, SystemParams};

/// One row of the convergence table. Orders are undefined on the first level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub level: usize,
    pub n: usize,
    pub h: f64,
    pub error_2: f64,
    pub error_inf: f64,
    pub order_2: Option<f64>,
    pub order_inf: Option<f64>,
    /// Stored entries of the diagonal block, percent of its dense size.
    pub nnz_percent: f64,
    pub cg_iterations: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

pub const RESULT_COLUMNS: [&str; 9] = [
    "level",
    "n",
    "h",
    "error_2",
    "error_inf",
    "order_2",
    "order_inf",
    "nnz_percent",
    "cg_iterations",
];

const FAILURE_MARKER: &str = "# FAILED";

impl ResultTable {
    /// Assembles rows from per-level errors; orders follow from consecutive
    /// levels.
    pub fn from_levels(
        n: &[usize],
        h: &[f64],
        errors_2: &[f64],
        errors_inf: &[f64],
        nnz: &[f64],
        iterations: &[usize],
    ) -> Self {
        let order = |e: &[f64], l: usize| -> Option<f64> {
            if l == 0 {
                return None;
            }
            convergence_order(&e[l - 1..=l], &h[l - 1..=l])
                .ok()
                .map(|o| o[0])
        };
        let rows = (0..errors_2.len())
            .map(|l| ResultRow {
                level: l + 1,
                n: n[l],
                h: h[l],
                error_2: errors_2[l],
                error_inf: errors_inf[l],
                order_2: order(errors_2, l),
                order_inf: order(errors_inf, l),
                nnz_percent: nnz[l],
                cg_iterations: iterations[l],
            })
            .collect();
        Self { rows }
    }

    pub fn errors_2(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.error_2).collect()
    }

    pub fn errors_inf(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.error_inf).collect()
    }

    pub fn iterations(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.cg_iterations).collect()
    }

    /// CSV with a header row; a trailing `# FAILED ...` line marks a run that
    /// stopped early.
    pub fn write_csv(&self, path: impl AsRef<Path>, failure: Option<&str>) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(Vec::new());
        w.write_record(RESULT_COLUMNS)?;
        for row in &self.rows {
            w.serialize(row)?;
        }
        let mut bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        if let Some(msg) = failure {
            writeln!(bytes, "{FAILURE_MARKER} {}", msg.replace('\n', " "))?;
        }
        fs::write(path, bytes)?;
        Ok(())
    }

    /// Reads a table written by [`write_csv`](Self::write_csv), ignoring a
    /// failure marker.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_path(path)?;
        let rows = r
            .deserialize()
            .collect::<std::result::Result<Vec<ResultRow>, _>>()?;
        Ok(Self { rows })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockStat {
    pub row_level: usize,
    pub col_level: usize,
    pub nrows: usize,
    pub ncols: usize,
    pub nnz: usize,
    pub nnz_percent: f64,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Timings {
    pub hierarchy: f64,
    pub basis: f64,
    pub assembly: f64,
    pub solve: f64,
    pub evaluation: f64,
    pub total: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LevelMeta {
    pub level: usize,
    pub n: usize,
    pub h: f64,
    pub delta: f64,
    pub cg_iterations: usize,
    pub relative_residual: f64,
    pub diag_nnz_percent: f64,
    pub row_nnz_percent: f64,
    pub solve_seconds: f64,
}

/// Everything a run produced. `failure` is set when a phase failed after the
/// output directory was created; the files then hold the partial results.
#[derive(Debug)]
pub struct ExperimentReport {
    pub table: ResultTable,
    pub blocks: Vec<BlockStat>,
    pub levels: Vec<LevelMeta>,
    pub timings: Timings,
    pub out_dir: PathBuf,
    pub failure: Option<Error>,
}

impl ExperimentReport {
    pub fn into_result(self) -> Result<Self> {
        match self.failure {
            Some(e) => Err(e),
            None => Ok(self),
        }
    }
}

/// Data sites, data values and evaluation set of one experiment.
pub struct Problem<T> {
    pub hierarchy: Hierarchy<T>,
    pub values: Vec<Vec<T>>,
    pub eval: PointSet<T>,
    pub reference: Vec<T>,
    pub eval_description: serde_json::Value,
}

fn eval_on<T: Scalar>(x: &PointSet<T>, f: impl Fn(&[T]) -> Result<T>) -> Result<Vec<T>> {
    x.iter().map(f).collect()
}

/// Builds the problem of a validated config.
pub fn build_problem<T: Scalar>(cfg: &ExperimentConfig) -> Result<Problem<T>> {
    let gamma = T::of(cfg.gamma);
    let franke_at = |p: &[T]| Ok(franke(p[0], p[1]));
    let lshape_at = |p: &[T]| lshape_u(p[0], p[1]);
    match cfg.experiment {
        Experiment::Franke | Experiment::Lshape => {
            let e = cfg.eval_level();
            let (hierarchy, eval) = if cfg.experiment == Experiment::Franke {
                (Hierarchy::grid(2, cfg.levels, gamma)?, grid_points(2, e)?)
            } else {
                let h = Hierarchy::lshape(cfg.levels, gamma)?;
                let h = match cfg.kernel_mesh {
                    KernelMesh::Spacing => h,
                    KernelMesh::Level => {
                        let meshes = (1..=cfg.levels as i32)
                            .map(|l| T::of(2f64.powi(-l)))
                            .collect();
                        h.with_scale_meshes(meshes)?
                    }
                };
                (h, lshape_points(e - 1)?)
            };
            let f = if cfg.experiment == Experiment::Franke {
                franke_at
            } else {
                lshape_at
            };
            let values = hierarchy
                .levels()
                .iter()
                .map(|x| eval_on(x, f))
                .collect::<Result<Vec<_>>>()?;
            let reference = eval_on(&eval, f)?;
            let desc =
                json!({ "kind": "grid", "spacing": 2f64.powi(-(e as i32)), "points": eval.len() });
            Ok(Problem {
                hierarchy,
                values,
                eval,
                reference,
                eval_description: desc,
            })
        }
        Experiment::Cloud | Experiment::Custom => {
            let path = cfg.points.as_ref().expect("validated");
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            let (cols, rows) = parse_rows(&text, path)?;
            let (dim, data) = if cfg.experiment == Experiment::Cloud {
                (cols, None)
            } else {
                if cols < 2 {
                    return Err(Error::Config(
                        "custom data needs coordinates plus a value column".into(),
                    ));
                }
                (
                    cols - 1,
                    Some(rows.iter().map(|r| T::of(r[cols - 1])).collect::<Vec<T>>()),
                )
            };
            let coords: Vec<T> = rows
                .iter()
                .flat_map(|r| r[..dim].iter().map(|&v| T::of(v)))
                .collect();
            let cloud = PointSet::new(dim, coords)?;
            let selections = subsample_indices(
                cloud.len(),
                cfg.base,
                cfg.factor,
                cfg.levels,
                cfg.nested,
                cfg.seed,
            )?;
            let hierarchy = Hierarchy::from_selections(&cloud, &selections, gamma)?;
            match data {
                None => {
                    let x0: Vec<T> = cfg
                        .x0
                        .as_ref()
                        .expect("validated")
                        .iter()
                        .map(|&v| T::of(v))
                        .collect();
                    if x0.len() != dim {
                        return Err(Error::Config(format!(
                            "x0 has {} coordinates but the cloud is {dim}-dimensional",
                            x0.len()
                        )));
                    }
                    let target = |p: &[T]| Ok(cloud_target(p, &x0));
                    let values = hierarchy
                        .levels()
                        .iter()
                        .map(|x| eval_on(x, target))
                        .collect::<Result<Vec<_>>>()?;
                    // fixed random evaluation subset, independent of the level draws
                    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                    rng.set_stream(1);
                    let m = cfg.eval_points.min(cloud.len());
                    let mut pick = index::sample(&mut rng, cloud.len(), m).into_vec();
                    pick.sort_unstable();
                    let eval = cloud.subset(&pick)?;
                    let reference = eval_on(&eval, target)?;
                    let desc = json!({ "kind": "random_subset", "points": m, "cloud_points": cloud.len() });
                    Ok(Problem {
                        hierarchy,
                        values,
                        eval,
                        reference,
                        eval_description: desc,
                    })
                }
                Some(values_all) => {
                    let values = selections
                        .iter()
                        .map(|s| s.iter().map(|&i| values_all[i]).collect())
                        .collect();
                    let desc = json!({ "kind": "data_points", "points": cloud.len() });
                    Ok(Problem {
                        hierarchy,
                        values,
                        eval: cloud,
                        reference: values_all,
                        eval_description: desc,
                    })
                }
            }
        }
    }
}

/// Runs one experiment and writes `results.csv`, `blocks.csv`, `meta.json`
/// and the requested dumps into `cfg.out`.
///
/// Configuration and input errors are returned directly. Failures after the
/// output directory exists are recorded in the report (and in the files).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    match cfg.precision {
        Precision::F64 => run_typed::<f64>(cfg),
        Precision::F32 => run_typed::<f32>(cfg),
    }
}

fn run_typed<T: Scalar>(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let total = Instant::now();
    let start = Instant::now();
    let problem = build_problem::<T>(cfg)?;
    let mut timings = Timings {
        hierarchy: start.elapsed().as_secs_f64(),
        ..Timings::default()
    };
    fs::create_dir_all(&cfg.out)?;
    let mut report = ExperimentReport {
        table: ResultTable::default(),
        blocks: Vec::new(),
        levels: Vec::new(),
        timings: Timings::default(),
        out_dir: cfg.out.clone(),
        failure: None,
    };
    if let Err(e) = execute(cfg, &problem, &mut report, &mut timings) {
        report.failure = Some(e);
    }
    timings.total = total.elapsed().as_secs_f64();
    report.timings = timings;
    write_outputs(cfg, &problem, &report)?;
    Ok(report)
}

fn execute<T: Scalar>(
    cfg: &ExperimentConfig,
    problem: &Problem<T>,
    report: &mut ExperimentReport,
    timings: &mut Timings,
) -> Result<()> {
    let dim = problem.hierarchy.dim();
    let compression = CompressionParams {
        rho: cfg.rho_for(dim).map(T::of),
        kappa: T::of(cfg.kappa),
        tail_tol: Some(T::of(cfg.tail_tol)),
    };
    let params = SystemParams {
        q: cfg.q,
        compression,
        leaf_capacity: cfg.leaf_capacity,
    };
    let specs = crate::solver::level_kernels(&problem.hierarchy, cfg.kernel)?;
    let mut pattern_error = None;
    let system = MultiscaleSystem::assemble_observed(
        problem.hierarchy.clone(),
        specs,
        params,
        |l, lp, m| {
            report.blocks.push(BlockStat {
                row_level: l,
                col_level: lp,
                nrows: m.nrows(),
                ncols: m.ncols(),
                nnz: m.nnz(),
                nnz_percent: m.nnz_percent(),
            });
            if cfg.dump_patterns && pattern_error.is_none() {
                let path = cfg.out.join(format!("pattern_L{l}_Lp{lp}.txt"));
                pattern_error = m.write_pattern(path).err();
            }
        },
    )
    .map_err(|e| e.in_phase("assembly"))?;
    if let Some(e) = pattern_error {
        return Err(e.in_phase("pattern dump"));
    }
    timings.basis = system.timings.basis;
    timings.assembly = system.timings.assembly;

    let (solve, failure) = multiscale_solve_partial(&system, &problem.values, &cfg.solve_config());
    timings.solve = solve.seconds;
    let solved = solve.levels.len();
    for (l, s) in solve.levels.iter().enumerate() {
        report.levels.push(LevelMeta {
            level: l + 1,
            n: problem.hierarchy.level(l).len(),
            h: problem.hierarchy.mesh_sizes()[l].as_f64(),
            delta: problem.hierarchy.scales()[l].as_f64(),
            cg_iterations: s.iterations,
            relative_residual: s.relative_residual,
            diag_nnz_percent: s.diag_nnz_percent,
            row_nnz_percent: s.row_nnz_percent,
            solve_seconds: s.seconds,
        });
        if cfg.dump_coefficients {
            dump_site_values(
                &cfg.out.join(format!("coefficients_L{}.txt", l + 1)),
                problem.hierarchy.level(l),
                &s.coefficients,
                "coefficient",
            )?;
        }
        if cfg.dump_residuals {
            dump_site_values(
                &cfg.out.join(format!("residual_L{}.txt", l + 1)),
                problem.hierarchy.level(l),
                &s.residual,
                "residual",
            )?;
        }
    }

    let start = Instant::now();
    if solved > 0 {
        let s = Interpolant::new(
            system.kernels()[..solved].to_vec(),
            problem.hierarchy.levels()[..solved].to_vec(),
            solve.coefficients(),
        )?;
        let cumulative = s
            .evaluate_cumulative(&problem.eval, Some(T::of(cfg.tail_tol)))
            .map_err(|e| e.in_phase("evaluation"))?;
        let e2 = cumulative
            .iter()
            .map(|v| relative_error(v, &problem.reference, Norm::L2))
            .collect::<Result<Vec<_>>>()?;
        let einf = cumulative
            .iter()
            .map(|v| relative_error(v, &problem.reference, Norm::Max))
            .collect::<Result<Vec<_>>>()?;
        let h: Vec<f64> = problem
            .hierarchy
            .mesh_sizes()
            .iter()
            .map(|v| v.as_f64())
            .collect();
        let nnz: Vec<f64> = solve.levels.iter().map(|l| l.diag_nnz_percent).collect();
        report.table = ResultTable::from_levels(
            &problem.hierarchy.cardinalities(),
            &h,
            &e2,
            &einf,
            &nnz,
            &solve.iterations(),
        );
    }
    timings.evaluation = start.elapsed().as_secs_f64();
    match failure {
        Some(e) => Err(e.in_phase("solve")),
        None => Ok(()),
    }
}

/// `x_1 … x_d value` per line, full precision, original site order.
fn dump_site_values<T: Scalar>(
    path: &Path,
    sites: &PointSet<T>,
    values: &[T],
    name: &str,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let header: Vec<String> = (1..=sites.dim()).map(|k| format!("x{k}")).collect();
    writeln!(w, "# {} {name}", header.join(" "))?;
    for (p, v) in sites.iter().zip(values) {
        for c in p {
            write!(w, "{:.17e} ", c.as_f64())?;
        }
        writeln!(w, "{:.17e}", v.as_f64())?;
    }
    w.flush()?;
    Ok(())
}

fn write_outputs<T: Scalar>(
    cfg: &ExperimentConfig,
    problem: &Problem<T>,
    report: &ExperimentReport,
) -> Result<()> {
    let failure = report.failure.as_ref().map(|e| e.to_string());
    report
        .table
        .write_csv(cfg.out.join("results.csv"), failure.as_deref())?;

    let mut w = csv::Writer::from_path(cfg.out.join("blocks.csv"))?;
    for b in &report.blocks {
        w.serialize(b)?;
    }
    w.flush()?;

    let meta = json!({
        "config": cfg,
        "versions": {
            "msrbf": env!("CARGO_PKG_VERSION"),
            "results_format": 1,
        },
        "status": if failure.is_some() { "failed" } else { "ok" },
        "error": failure,
        "dimension": problem.hierarchy.dim(),
        "rho_effective": cfg.rho_for(problem.hierarchy.dim()),
        "evaluation": problem.eval_description,
        "levels": report.levels,
        "timings": report.timings,
    });
    fs::write(
        cfg.out.join("meta.json"),
        serde_json::to_string_pretty(&meta)?,
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(experiment: Experiment, dir: &Path) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(experiment);
        c.levels = 3;
        c.eval_level = Some(5);
        c.out = dir.to_path_buf();
        c
    }

    #[test]
    fn franke_run_writes_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(Experiment::Franke, dir.path());
        cfg.dump_patterns = true;
        cfg.dump_coefficients = true;
        cfg.dump_residuals = true;
        let report = run_experiment(&cfg).unwrap().into_result().unwrap();
        assert_eq!(report.table.rows.len(), 3);
        assert!(report.table.rows[0].order_2.is_none());
        let e = report.table.errors_2();
        assert!(e[2] < e[0]);
        let text = fs::read_to_string(dir.path().join("results.csv")).unwrap();
        assert!(text.starts_with(
            "level,n,h,error_2,error_inf,order_2,order_inf,nnz_percent,cg_iterations\n"
        ));
        assert_eq!(
            ResultTable::read_csv(dir.path().join("results.csv")).unwrap(),
            report.table
        );
        for name in [
            "meta.json",
            "blocks.csv",
            "pattern_L3_Lp1.txt",
            "coefficients_L2.txt",
            "residual_L3.txt",
        ] {
            assert!(dir.path().join(name).exists(), "{name}");
        }
        assert_eq!(report.blocks.len(), 6);
    }

    #[test]
    fn failure_is_marked() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(Experiment::Lshape, dir.path());
        cfg.max_iters = 1;
        cfg.cg_tol = 1e-12;
        let report = run_experiment(&cfg).unwrap();
        let err = report.failure.as_ref().unwrap();
        assert!(err.is_solver_failure());
        let text = fs::read_to_string(dir.path().join("results.csv")).unwrap();
        assert!(text.lines().last().unwrap().starts_with("# FAILED"));
        let meta: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("meta.json")).unwrap())
                .unwrap();
        assert_eq!(meta["status"], "failed");
    }

    #[test]
    fn custom_data_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data.txt");
        let mut text = String::from("# x y value\n");
        for i in 0..30 {
            for j in 0..30 {
                let (x, y) = (i as f64 / 29.0, j as f64 / 29.0);
                text += &format!("{x} {y} {}\n", x * x + y);
            }
        }
        fs::write(&data, text).unwrap();
        let mut cfg = small(Experiment::Custom, &dir.path().join("out"));
        cfg.points = Some(data);
        cfg.base = 10;
        cfg.factor = 4;
        let report = run_experiment(&cfg).unwrap().into_result().unwrap();
        assert_eq!(
            report.table.rows.iter().map(|r| r.n).collect::<Vec<_>>(),
            vec![10, 40, 160]
        );
        let e = report.table.errors_2();
        assert!(e[0] > e[1] && e[1] > e[2] && e[2] < 0.1, "{e:?}");
    }

    #[test]
    fn single_precision_run() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(Experiment::Franke, dir.path());
        cfg.precision = Precision::F32;
        cfg.kappa = 1e-4;
        cfg.cg_tol = 1e-4;
        let report = run_experiment(&cfg).unwrap().into_result().unwrap();
        assert!(report.table.rows[2].error_2 < 0.1);
    }
}
