//! Experiment pipelines behind the CLI subcommands.

use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;

use mgbound::bounds;
use mgbound::mat::write_matrix_market;
use mgbound::multigrid::{self, HierarchyOptions};
use mgbound::problems::{poisson_1d, poisson_2d, random_spd, ModelProblem};
use mgbound::smoothers::{gauss_seidel, jacobi, SmootherPair};
use mgbound::transfer::{
    amg_direct_interp, galerkin, geometric_interp_1d, geometric_interp_2d, perturb_coarse,
    write_split, PerturbMode, Prolongation,
};
use mgbound::twogrid::{assemble, TwoGridSetup};
use mgbound::Mat;

use crate::config::{mode_from, CoarseConfig, ExperimentConfig};
use crate::report::{MultigridRow, Report, TwoGridRow};

pub fn build_problem(cfg: &ExperimentConfig) -> Result<ModelProblem> {
    let p = &cfg.problem;
    Ok(match p.kind.as_str() {
        "poisson1d" => poisson_1d(p.n)?,
        "poisson2d" => poisson_2d(p.nx, p.ny)?,
        "random_spd" => random_spd(p.n, p.condition, p.seed)?,
        other => bail!("problem.kind: unknown kind {other:?}"),
    })
}

fn build_smoother(cfg: &ExperimentConfig, a: &Mat) -> Result<SmootherPair> {
    Ok(match cfg.smoother.kind.as_str() {
        "jacobi" => jacobi(a, cfg.smoother.omega)?,
        _ => gauss_seidel(a)?,
    })
}

fn build_prolongation(cfg: &ExperimentConfig, problem: &ModelProblem) -> Result<Prolongation> {
    Ok(match cfg.transfer.method.as_str() {
        "amg_direct" => amg_direct_interp(&problem.matrix.to_csr(), cfg.transfer.strong_threshold)?,
        _ => match problem.grid_shape.len() {
            1 => geometric_interp_1d(problem.grid_shape[0])?,
            2 => geometric_interp_2d(problem.grid_shape[0], problem.grid_shape[1])?,
            _ => bail!(
                "geometric transfer needs a grid problem; use transfer.method = \"amg_direct\" for {}",
                problem.label()
            ),
        },
    })
}

fn evaluate_instance(
    cfg: &ExperimentConfig,
    instance: String,
    x: f64,
    mode: PerturbMode,
) -> Result<TwoGridRow> {
    let start = Instant::now();
    let problem = build_problem(cfg)?;
    let a = problem.matrix.to_dense(cfg.analysis.dense_cap)?;
    let smoother = build_smoother(cfg, &a)?;
    let prol = build_prolongation(cfg, &problem)?;
    let a_c = galerkin(&a, &prol.dense());
    let b_c = perturb_coarse(&a_c, mode)?;
    let setup = TwoGridSetup::new(a, smoother, &prol, b_c)?;
    let ops = assemble(&setup)?;
    let report = bounds::evaluate(&setup, &ops, cfg.analysis.zero_tol)?;
    let time_ms = start.elapsed().as_secs_f64() * 1e3;
    let mut row = TwoGridRow::from_report(instance, x, &report, time_ms);
    // the exact case is worth distinguishing in sweep transitions
    if (report.quantities.r1 - 1.0).abs() <= 1e-12 && (report.quantities.r2 - 1.0).abs() <= 1e-12 {
        row.case_id = "exact".into();
    }
    Ok(row)
}

fn instance_name(cfg: &ExperimentConfig, mode: &PerturbMode, seed_tag: Option<u64>) -> String {
    let problem = match cfg.problem.kind.as_str() {
        "poisson2d" => format!("poisson2d_{}x{}", cfg.problem.nx, cfg.problem.ny),
        "random_spd" => format!("randspd_n{}", cfg.problem.n),
        _ => format!("poisson1d_n{}", cfg.problem.n),
    };
    let smoother = match cfg.smoother.kind.as_str() {
        "jacobi" => format!("jacobi{}", cfg.smoother.omega),
        _ => "gs".to_string(),
    };
    match seed_tag {
        Some(s) => format!("{problem}_{smoother}_{}_s{s}", mode.label()),
        None => format!("{problem}_{smoother}_{}", mode.label()),
    }
}

/// Single-instance two-grid experiment.
pub fn run_twogrid(cfg: &ExperimentConfig) -> Result<Report> {
    let mode = cfg.perturb_mode();
    let row = evaluate_instance(cfg, instance_name(cfg, &mode, None), cfg.coarse.alpha, mode)?;
    maybe_dump(cfg)?;
    Ok(Report {
        twogrid: vec![row],
        multigrid: vec![],
    })
}

/// Sweep over coarse-matrix perturbations: a scale sweep over
/// `sweep.alphas` or a randomized (mode x seed) suite.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Report> {
    let specs: Vec<(String, f64, PerturbMode)> = match cfg.sweep.kind.as_str() {
        "alpha" => cfg
            .sweep
            .alphas
            .iter()
            .map(|&alpha| {
                let mode = PerturbMode::Scale { alpha };
                (instance_name(cfg, &mode, None), alpha, mode)
            })
            .collect(),
        _ => {
            let mut specs = Vec::new();
            for seed in cfg.sweep.seed_start..=cfg.sweep.seed_end {
                for name in &cfg.sweep.modes {
                    let coarse = CoarseConfig {
                        mode: name.clone(),
                        alpha: 0.5 + 0.1 * (seed % 16) as f64,
                        magnitude: if cfg.coarse.magnitude > 0.0 {
                            cfg.coarse.magnitude
                        } else {
                            0.02 + 0.03 * (seed % 10) as f64
                        },
                        seed,
                    };
                    let mode = mode_from(name, &coarse);
                    specs.push((instance_name(cfg, &mode, Some(seed)), seed as f64, mode));
                }
            }
            specs
        }
    };
    let rows: Vec<Result<TwoGridRow>> = specs
        .into_par_iter()
        .map(|(name, x, mode)| evaluate_instance(cfg, name, x, mode))
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    maybe_dump(cfg)?;
    Ok(Report {
        twogrid: rows,
        multigrid: vec![],
    })
}

/// Hierarchy experiment: per-level rows plus an aggregate row carrying the
/// level-independent and level-indexed bounds.
pub fn run_multigrid(cfg: &ExperimentConfig) -> Result<Report> {
    let start = Instant::now();
    let problem = build_problem(cfg)?;
    let h = multigrid::build_hierarchy(
        &problem,
        cfg.smoother_kind(),
        cfg.coarsening(),
        cfg.multigrid.levels,
        cfg.multigrid.gamma,
        cfg.a0_policy(),
        HierarchyOptions {
            dense_limit: cfg.analysis.dense_cap,
        },
    )?;
    let q = multigrid::level_quantities(&h)?;
    let instance = format!(
        "{}_{}_L{}_g{}",
        problem.label(),
        cfg.smoother.kind,
        h.num_levels(),
        cfg.multigrid.gamma
    );

    let ub = if q.nontrivial {
        Some(multigrid::uniform_bound(&h, &q.agg)?)
    } else {
        None
    };
    let sigma_img_1 = q.rows[0].sigma_img;
    let mut rows = Vec::new();
    let mut all_ok = true;
    for r in &q.rows {
        let bound_indexed = ub.and_then(|u| {
            multigrid::level_indexed_bound(&q.agg, h.gamma, u.x_gamma, sigma_img_1, r.level)
        });
        let mut ordering_ok = r.sigma_img >= r.sigma_tg - 1e-9;
        if let Some(u) = ub {
            if u.applicable {
                ordering_ok &= r.sigma_img <= u.x_gamma + 1e-9;
            }
            if let Some(b) = bound_indexed {
                if u.applicable {
                    ordering_ok &= r.sigma_img <= b + 1e-9;
                }
            }
        }
        all_ok &= ordering_ok;
        rows.push(MultigridRow {
            instance: instance.clone(),
            level: r.level.to_string(),
            n: r.n,
            k_tg: Some(r.k_tg),
            sigma_tg: Some(r.sigma_tg),
            sigma_img: Some(r.sigma_img),
            eps: Some(r.eps),
            estimated: r.estimated,
            sigma_l: None,
            eps_l: None,
            delta_l: None,
            x_gamma: None,
            uniform_applicable: None,
            bound_indexed,
            bound_v: None,
            bound_w: None,
            existing: None,
            ordering_ok,
            time_ms: 0.0,
        });
    }
    let k = h.num_levels();
    rows.push(MultigridRow {
        instance,
        level: "all".into(),
        n: h.level(k).n,
        k_tg: None,
        sigma_tg: None,
        sigma_img: Some(q.rows[k - 1].sigma_img),
        eps: None,
        estimated: q.rows.iter().any(|r| r.estimated),
        sigma_l: Some(q.agg.sigma_l),
        eps_l: Some(q.agg.eps_l),
        delta_l: Some(q.agg.delta_l),
        x_gamma: ub.map(|u| u.x_gamma),
        uniform_applicable: ub.map(|u| u.applicable),
        bound_indexed: ub.and_then(|u| {
            multigrid::level_indexed_bound(&q.agg, h.gamma, u.x_gamma, sigma_img_1, k)
        }),
        bound_v: Some(multigrid::v_bound_zero_eps(q.agg.sigma_l, k)),
        bound_w: Some(multigrid::w_bound_zero_eps(q.agg.sigma_l, q.agg.delta_l, k)),
        existing: multigrid::existing_w_bound(q.agg.sigma_l),
        ordering_ok: all_ok,
        time_ms: start.elapsed().as_secs_f64() * 1e3,
    });
    maybe_dump(cfg)?;
    Ok(Report {
        twogrid: vec![],
        multigrid: rows,
    })
}

fn maybe_dump(cfg: &ExperimentConfig) -> Result<()> {
    if !cfg.output.dump_split && !cfg.output.dump_matrix {
        return Ok(());
    }
    let dir = std::path::Path::new(&cfg.output.dir);
    std::fs::create_dir_all(dir)?;
    let problem = build_problem(cfg)?;
    if cfg.output.dump_split {
        let prol = build_prolongation(cfg, &problem)?;
        let mut f = std::fs::File::create(dir.join("split.txt"))
            .context("writing coarse/fine split")?;
        write_split(&mut f, &prol.split)?;
    }
    if cfg.output.dump_matrix {
        let mut f = std::fs::File::create(dir.join("matrix.mtx"))
            .context("writing matrix export")?;
        write_matrix_market(&mut f, &problem.matrix.to_csr())?;
    }
    Ok(())
}

/// Rows that failed a recorded check, for naming in the exit path.
pub fn failed_rows(report: &Report) -> Vec<String> {
    let mut out = Vec::new();
    for r in &report.twogrid {
        if !r.sandwich_ok {
            out.push(format!("{} (sandwich)", r.instance));
        }
    }
    for r in &report.multigrid {
        if !r.ordering_ok {
            out.push(format!("{} level {} (ordering)", r.instance, r.level));
        }
    }
    out
}

/// Built-in verification run: a fast subset of the crate's invariants,
/// printed one line per check.
pub fn selftest() -> Result<()> {
    let mut failures = Vec::new();
    let mut check = |name: &str, ok: bool| {
        println!("selftest {:<40} {}", name, if ok { "PASS" } else { "FAIL" });
        if !ok {
            failures.push(name.to_string());
        }
    };

    // exact two-grid identity
    {
        let problem = poisson_1d(15)?;
        let a = problem.matrix.to_dense(64)?;
        let s = gauss_seidel(&a)?;
        let prol = geometric_interp_1d(15)?;
        let setup = TwoGridSetup::exact(a, s, &prol)?;
        let ops = assemble(&setup)?;
        let measured = mgbound::twogrid::conv_factor(&ops.e_tg, &setup.a)?;
        let k = mgbound::twogrid::k_tg(&setup.a, setup.smoother.m_tilde()?, &setup.p)?;
        check("exact identity", (measured - (1.0 - 1.0 / k)).abs() <= 1e-10);
    }

    // sandwich across a scale sweep
    {
        let mut ok = true;
        for alpha in [0.5, 0.8, 1.0, 1.25, 2.0] {
            let problem = poisson_1d(31)?;
            let a = problem.matrix.to_dense(64)?;
            let s = gauss_seidel(&a)?;
            let prol = geometric_interp_1d(31)?;
            let a_c = galerkin(&a, &prol.dense());
            let b_c = perturb_coarse(&a_c, PerturbMode::Scale { alpha })?;
            let setup = TwoGridSetup::new(a, s, &prol, b_c)?;
            let ops = assemble(&setup)?;
            let report = bounds::evaluate(&setup, &ops, 1e-10)?;
            ok &= report.sandwich_holds(1e-9) && report.upper <= report.notay_upper + 1e-12;
        }
        check("two-sided sandwich", ok);
    }

    // root bisection vs closed forms
    {
        let mut ok = true;
        for sigma in [0.2, 0.45, 0.7] {
            for eps in [0.01, 0.1] {
                if sigma >= 1.0 - eps {
                    continue;
                }
                let x1 = multigrid::x_gamma_root(sigma, eps, 1)?;
                let x2 = multigrid::x_gamma_root(sigma, eps, 2)?;
                ok &= (x1 - multigrid::x1_closed(sigma, eps)).abs() <= 1e-12;
                ok &= (x2 - multigrid::x2_closed(sigma, eps)).abs() <= 1e-12;
            }
        }
        check("cycle-root closed forms", ok);
    }

    // cycle vs assembled operator
    {
        let problem = poisson_2d(15, 15)?;
        let h = multigrid::build_hierarchy(
            &problem,
            mgbound::smoothers::SmootherKind::GaussSeidel,
            multigrid::Coarsening::Geometric,
            2,
            2,
            multigrid::A0Policy::Exact,
            HierarchyOptions::default(),
        )?;
        let e = multigrid::assemble_e_img(&h, 2)?;
        let n = h.level(2).n;
        let zero = vec![0.0; n];
        let v: Vec<f64> = (0..n).map(|i| ((i % 23) as f64 - 11.0) / 23.0).collect();
        let via_cycle = multigrid::mg_cycle(&h, 2, &zero, &v)?;
        let via_matrix = e.matvec(&v);
        let diff: f64 = via_cycle
            .iter()
            .zip(via_matrix.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let scale: f64 = via_matrix.iter().map(|x| x * x).sum::<f64>().sqrt();
        check("cycle/matrix consistency", diff <= 1e-10 * scale);
    }

    // published bound columns
    {
        let v = multigrid::v_bound_zero_eps(0.462, 5);
        let w = multigrid::w_bound_zero_eps(0.462, 0.232, 5);
        let ex = multigrid::existing_w_bound(0.462).unwrap_or(f64::NAN);
        check(
            "reported bound columns",
            (v - 0.955).abs() <= 5e-4
                && (w - 0.812).abs() <= 5e-4
                && (ex - 0.859).abs() <= 5e-4
                && multigrid::existing_w_bound(0.625).is_none(),
        );
    }

    if failures.is_empty() {
        Ok(())
    } else {
        Err(anyhow!("selftest failures: {}", failures.join(", ")))
    }
}
