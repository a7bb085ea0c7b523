use std::path::{Path, PathBuf};

use anyhow::Context;
use cournot_core::driver::SweepRow;
use cournot_core::scenario::{self, generate_random};
use cournot_core::{
    phm, GameInstance, GeneratorConfig, PhmConfig, ScenarioBatch, SmoothingOptions,
};

use crate::args::{
    parse_eps_list, parse_nu_list, Command, GenArgs, GeneratorArgs, SolveArgs, SolverArgs,
    SweepArgs,
};
use crate::files::{self, InstanceFile, RunManifest};

/// How a command finished when it did not hit an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    CheckFailed,
    NotConverged,
}

pub fn generator_config(g: &GeneratorArgs, num_samples: usize) -> GeneratorConfig {
    GeneratorConfig::new(g.players as usize, num_samples, g.seed)
        .with_costs(g.cost_low, g.cost_high)
        .with_gamma_mode(g.gamma_mode.into())
}

pub fn phm_config(s: &SolverArgs) -> PhmConfig {
    PhmConfig {
        step_size: s.step_size,
        tol: s.tol,
        max_iter: s.max_iter,
        block_size: s.block_size,
        warm_start: true,
        inner: SmoothingOptions {
            tol: s.inner_tol,
            max_iter: s.inner_max_iter,
            ..SmoothingOptions::default()
        },
    }
}

pub fn gen(args: &GenArgs, command: &Command) -> anyhow::Result<Outcome> {
    let cfg = generator_config(&args.generator, args.generator.samples as usize);
    let (inst, batch) = generate_random(&cfg)?;
    files::ensure_dir(&args.out)?;
    let inst_path = args.out.join("instance.json");
    let csv_path = args.out.join("scenarios.csv");
    files::write_json(&inst_path, &InstanceFile::from_instance(&inst))?;
    scenario::write_csv(&batch, &csv_path)?;
    RunManifest::write(
        command,
        &args.out,
        vec![inst_path.clone(), csv_path.clone()],
    )?;
    println!(
        "wrote {} ({} agents) and {} ({} scenarios)",
        inst_path.display(),
        inst.num_agents(),
        csv_path.display(),
        batch.len()
    );
    Ok(Outcome::Success)
}

fn load_problem(args: &SolveArgs) -> anyhow::Result<(GameInstance, ScenarioBatch)> {
    let batch = if let Some(path) = &args.scenarios {
        Some(scenario::load_csv(path)?)
    } else if let Some(text) = &args.samples_inline {
        Some(files::parse_inline(text)?)
    } else {
        None
    };
    let instance = match &args.instance {
        Some(path) => Some(files::read_instance(path)?),
        None => None,
    };
    match (instance, batch) {
        (Some(i), Some(b)) => Ok((i, b)),
        (None, None) => {
            let cfg = generator_config(&args.generator, args.generator.samples as usize);
            Ok(generate_random(&cfg)?)
        }
        (Some(i), None) => {
            let cfg = GeneratorConfig {
                num_agents: i.num_agents(),
                ..generator_config(&args.generator, args.generator.samples as usize)
            };
            Ok((i, scenario::generate_scenarios(&cfg)?))
        }
        (None, Some(b)) => {
            let cfg = GeneratorConfig {
                num_agents: b.num_agents(),
                ..generator_config(&args.generator, 1)
            };
            Ok((generate_random(&cfg)?.0, b))
        }
    }
}

pub fn solve(args: &SolveArgs, command: &Command) -> anyhow::Result<Outcome> {
    let (inst, batch) = load_problem(args)?;
    let config = phm_config(&args.solver);
    let (z, mut report, _) = phm::run(&inst, &batch, args.solver.epsilon, &config)?;
    report.seed = Some(args.generator.seed);

    files::ensure_dir(&args.out)?;
    let report_path = args.out.join("report.json");
    files::write_json(&report_path, &report)?;
    let mut outputs = vec![report_path];
    if args.dump_solution {
        let path = args.out.join("solution.json");
        files::write_json(&path, &z.as_slice())?;
        outputs.push(path);
    }
    RunManifest::write(command, &args.out, outputs)?;

    println!(
        "{} after {} iterations: res_eps {:.3e}, res {:.3e}",
        if report.converged {
            "converged"
        } else {
            "not converged"
        },
        report.iterations,
        report.res_epsilon,
        report.res_original
    );
    println!("x = {:?}", report.x);
    Ok(if report.converged {
        Outcome::Success
    } else {
        Outcome::NotConverged
    })
}

pub fn sweep(args: &SweepArgs, command: &Command) -> anyhow::Result<Outcome> {
    let eps_list = parse_eps_list(&args.eps_list).context("--eps-list")?;
    let nu_list = parse_nu_list(&args.nu_list).context("--nu-list")?;
    let config = phm_config(&args.solver);
    config.validate()?;
    let j = args.generator.players as usize;

    let mut rows = Vec::new();
    for &nu in &nu_list {
        let (inst, batch) = generate_random(&generator_config(&args.generator, nu))?;
        let results = cournot_core::driver::sweep_epsilon(&inst, &batch, &eps_list, &config)?;
        for (eps, result) in results {
            let row = match result {
                Ok(report) => SweepRow::from_report(&report),
                Err(e) => SweepRow::failed(nu, j, eps, &e),
            };
            eprintln!(
                "nu={} eps={:e} iter={} res={:.3e}{}",
                row.nu,
                row.epsilon,
                row.iter,
                row.res,
                if row.error.is_empty() {
                    String::new()
                } else {
                    format!(" error: {}", row.error)
                }
            );
            rows.push(row);
        }
    }

    files::ensure_dir(&args.out)?;
    let csv_path = args.out.join("sweep.csv");
    let json_path = args.out.join("sweep.json");
    write_sweep_csv(&csv_path, &rows)?;
    files::write_json(&json_path, &rows)?;
    RunManifest::write(command, &args.out, vec![csv_path.clone(), json_path])?;
    println!("wrote {} rows to {}", rows.len(), csv_path.display());

    Ok(if rows.iter().all(|r| r.converged) {
        Outcome::Success
    } else {
        Outcome::NotConverged
    })
}

fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> anyhow::Result<()> {
    let mut wtr =
        csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for row in rows {
        wtr.serialize(row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn replay(manifest_path: &Path, out: Option<&PathBuf>) -> anyhow::Result<Command> {
    let manifest = RunManifest::read(manifest_path)?;
    let mut command = manifest.command;
    if let Some(dir) = out {
        match &mut command {
            Command::Gen(a) => a.out = dir.clone(),
            Command::Solve(a) => a.out = dir.clone(),
            Command::Sweep(a) => a.out = dir.clone(),
            Command::Check(a) => a.out = dir.clone(),
            Command::Replay(_) => anyhow::bail!("manifest records a replay"),
        }
    }
    if let Command::Replay(_) = command {
        anyhow::bail!("manifest records a replay");
    }
    Ok(command)
}
