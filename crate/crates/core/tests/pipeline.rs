use std::fs;
use std::path::Path;

use msrbf::harness::{build_problem, franke, run_experiment, Experiment, ExperimentConfig};
use msrbf::solver::{level_kernels, multiscale_solve, SystemParams};
use msrbf::{CompressionParams, Hierarchy, KernelFamily, MultiscaleSystem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn franke_config(out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(Experiment::Franke);
    cfg.levels = 4;
    cfg.q = 3;
    cfg.rho = Some(2.0);
    cfg.kappa = 1e-6;
    cfg.eval_level = Some(7);
    cfg.out = out.to_path_buf();
    cfg
}

/// Rows of `x1 x2 value` from a site dump.
fn read_dump(path: &Path) -> Vec<[f64; 3]> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| {
            let v: Vec<f64> = l.split_whitespace().map(|f| f.parse().unwrap()).collect();
            [v[0], v[1], v[2]]
        })
        .collect()
}

#[test]
fn results_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let a = franke_config(&dir.path().join("a"));
    let b = franke_config(&dir.path().join("b"));
    run_experiment(&a).unwrap().into_result().unwrap();
    run_experiment(&b).unwrap().into_result().unwrap();
    for file in ["results.csv", "blocks.csv"] {
        assert_eq!(
            fs::read(a.out.join(file)).unwrap(),
            fs::read(b.out.join(file)).unwrap(),
            "{file} differs"
        );
    }
}

#[test]
fn cloud_hierarchy_depends_only_on_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = dir.path().join("cloud.txt");
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let text: String = (0..3000)
        .map(|_| {
            let p: [f64; 3] = rng.gen();
            format!("{} {} {}\n", p[0], p[1], p[2])
        })
        .collect();
    fs::write(&cloud, text).unwrap();
    let cfg = |seed: u64, name: &str| {
        let mut c = ExperimentConfig::new(Experiment::Cloud);
        c.kernel = KernelFamily::Matern12;
        c.gamma = 0.5;
        c.levels = 3;
        c.base = 10;
        c.factor = 8;
        c.seed = seed;
        c.points = Some(cloud.clone());
        c.x0 = Some(vec![0.5, 0.5, 0.5]);
        c.eval_points = 500;
        c.out = dir.path().join(name);
        c
    };
    let p1 = build_problem::<f64>(&cfg(7, "a")).unwrap();
    let p2 = build_problem::<f64>(&cfg(7, "b")).unwrap();
    let p3 = build_problem::<f64>(&cfg(8, "c")).unwrap();
    assert_eq!(p1.hierarchy.levels(), p2.hierarchy.levels());
    assert_eq!(p1.eval, p2.eval);
    assert_ne!(p1.hierarchy.levels(), p3.hierarchy.levels());

    let (a, b) = (cfg(7, "a"), cfg(7, "b"));
    run_experiment(&a).unwrap().into_result().unwrap();
    run_experiment(&b).unwrap().into_result().unwrap();
    assert_eq!(
        fs::read(a.out.join("results.csv")).unwrap(),
        fs::read(b.out.join("results.csv")).unwrap()
    );
}

#[test]
fn dumped_coefficients_and_residuals_are_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = franke_config(&dir.path().join("dump"));
    // uncompressed, so the solver's residuals equal the exact kernel sums
    cfg.no_cutoff = true;
    cfg.kappa = 0.0;
    cfg.dump_coefficients = true;
    cfg.dump_residuals = true;
    run_experiment(&cfg).unwrap().into_result().unwrap();

    // the same system solved in memory
    let h = Hierarchy::<f64>::grid(2, 4, 0.5).unwrap();
    let values: Vec<Vec<f64>> = h
        .levels()
        .iter()
        .map(|x| x.iter().map(|p| franke(p[0], p[1])).collect())
        .collect();
    let params = SystemParams {
        q: 3,
        compression: CompressionParams {
            rho: None,
            kappa: 0.0,
            tail_tol: Some(cfg.tail_tol),
        },
        leaf_capacity: None,
    };
    let system = MultiscaleSystem::assemble(h.clone(), KernelFamily::Matern32, params).unwrap();
    let report = multiscale_solve(&system, &values, &cfg.solve_config()).unwrap();
    let specs = level_kernels(&h, KernelFamily::Matern32).unwrap();

    let mut dumped: Vec<Vec<f64>> = Vec::new();
    for l in 0..4 {
        let coeffs = read_dump(&cfg.out.join(format!("coefficients_L{}.txt", l + 1)));
        let expect = &report.levels[l].coefficients;
        let scale = expect.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (i, row) in coeffs.iter().enumerate() {
            assert_eq!(&row[..2], h.level(l).point(i));
            assert!((row[2] - expect[i]).abs() <= 1e-12 * scale);
        }
        dumped.push(coeffs.iter().map(|r| r[2]).collect());

        // residual f - s_{l-1} at the level's sites, by direct summation
        let resid = read_dump(&cfg.out.join(format!("residual_L{}.txt", l + 1)));
        let fmax = values[l].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (i, row) in resid.iter().enumerate() {
            let x = h.level(l).point(i);
            let s: f64 = (0..l)
                .map(|lp| {
                    (0..h.level(lp).len())
                        .map(|j| dumped[lp][j] * specs[lp].eval(x, h.level(lp).point(j)).unwrap())
                        .sum::<f64>()
                })
                .sum();
            assert!(
                (row[2] - (values[l][i] - s)).abs() <= 1e-12 * fmax,
                "level {} site {i}: {} vs {}",
                l + 1,
                row[2],
                values[l][i] - s
            );
        }
    }
}
