//! `spikes`: command-line pipelines for multi-spike Lane-Emden runs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use spike_core::pde::io::{lambda_table, ray_table, write_snapshot};
use spike_core::pipeline::{profile_rows, CriticalSummary, Pipeline, Report, RunConfig};
use spike_core::profiles::{ProfileOptions, ProfileTable, CACHE_ENV};

#[derive(Parser)]
#[command(name = "spikes", version, about = "Multi-spike solutions of -Δu = u^p in planar domains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the profile equations (cached) and print the moment table.
    Profiles(Common),
    /// Locate a nondegenerate critical point of the Kirchhoff-Routh function.
    Critpoints(Common),
    /// Solve the scaling-parameter system and report predictions.
    Construct(Common),
    /// Newton solve of the finite-element problem; writes snapshots.
    Solve(Common),
    /// Linearized eigenvalues and Morse index.
    Spectrum(Common),
    /// Run the whole pipeline with every enabled check.
    Verify(Common),
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON); defaults to the unit disc with k = 1, p = 40.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides the configuration).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exponents, comma separated (overrides the configuration).
    #[arg(long, value_delimiter = ',')]
    p: Option<Vec<f64>>,
    /// Number of spikes (overrides the configuration).
    #[arg(long)]
    k: Option<usize>,
    /// Mesh resolution factor (overrides the configuration).
    #[arg(long)]
    resolution: Option<f64>,
    /// Profile cache directory.
    #[arg(long, env = CACHE_ENV)]
    cache_dir: Option<PathBuf>,
}

impl Common {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_path(path).with_context(|| format!("reading {}", path.display()))?,
            None => RunConfig::disc(1, vec![40.0]),
        };
        if let Some(p) = &self.p {
            cfg.p = p.clone();
        }
        if let Some(k) = self.k {
            cfg.k = k;
        }
        if let Some(r) = self.resolution {
            cfg.resolution = r;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = Some(out.clone());
        }
        Ok(cfg)
    }

    fn cache_dir(&self) -> PathBuf {
        self.cache_dir.clone().unwrap_or_else(ProfileTable::default_cache_dir)
    }
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("spikes-out"));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn pretty<T: serde::Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn tag(p: f64) -> String {
    format!("p{p}")
}

fn cmd_profiles(c: &Common) -> Result<ExitCode> {
    let cfg = c.config()?;
    let dir = out_dir(&cfg)?;
    let (table, cached) = ProfileTable::load_or_compute(&c.cache_dir(), &ProfileOptions::default())?;
    eprintln!("profiles {}", if cached { "loaded from cache" } else { "computed and cached" });
    let rows = profile_rows(&table, &cfg.tolerances);
    println!("{:<22} {:>22} {:>22} {:>9}  result", "moment", "predicted", "computed", "tol");
    for r in &rows {
        let verdict = if r.pass { "PASS" } else { "FAIL" };
        let note = if r.gating { "" } else { " (non-gating)" };
        println!("{:<22} {:>22.15e} {:>22.15e} {:>9.1e}  {verdict}{note}", r.name, r.predicted, r.computed, r.tol);
    }
    let (b0, b1) = table.offsets();
    let report = json!({
        "schema": "spike-profiles",
        "version": 1,
        "options": table.options,
        "c0": table.c0, "c1": table.c1,
        "c0_moment": table.c0_moment, "c1_moment": table.c1_moment,
        "b0": b0, "b1": b1,
        "moments": table.moments,
        "rows": rows,
    });
    write(&dir, "profiles.json", &pretty(&report)?)?;
    Ok(if rows.iter().filter(|r| r.gating).all(|r| r.pass) { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn pipeline(c: &Common) -> Result<(Pipeline, PathBuf)> {
    let cfg = c.config()?;
    let dir = out_dir(&cfg)?;
    Ok((Pipeline::new(cfg, c.cache_dir())?, dir))
}

fn cmd_critpoints(c: &Common) -> Result<ExitCode> {
    let (pl, dir) = pipeline(c)?;
    let crit = pl.critical()?;
    let s = CriticalSummary::new(&crit);
    for (j, x) in s.points.iter().enumerate() {
        println!("x_{j} = ({:.12}, {:.12})", x.x, x.y);
    }
    println!("psi = {:.12}  |grad| = {:.3e}  morse = {}  degree = {}", s.psi, s.grad_norm, s.morse, s.degree);
    println!("theta = {:?}", s.theta);
    let report = json!({ "schema": "spike-critpoints", "version": 1, "summary": s, "configuration": crit });
    write(&dir, "critpoints.json", &pretty(&report)?)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_construct(c: &Common) -> Result<ExitCode> {
    let (pl, dir) = pipeline(c)?;
    let (table, _) = pl.profiles()?;
    let crit = pl.critical()?;
    for &p in &pl.config.p {
        let con = pl.construct(&table, &crit, p)?;
        println!(
            "p = {p}: F residual {:.2e}, eps_bar {:?}, predicted morse {}, degree {}, mesh {} nodes",
            con.params.residual,
            con.params.eps_bar,
            con.prediction.morse_pred,
            con.prediction.degree_pred,
            con.mesh.len()
        );
        let report = json!({
            "schema": "spike-construct",
            "version": 1,
            "points": crit.points,
            "parameters": con.params,
            "prediction": con.prediction,
        });
        write(&dir, &format!("construct-{}.json", tag(p)), &pretty(&report)?)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_solve(c: &Common, with_spectrum: bool) -> Result<ExitCode> {
    let (pl, dir) = pipeline(c)?;
    let (table, _) = pl.profiles()?;
    let crit = pl.critical()?;
    let mut lambdas = Vec::new();
    for &p in &pl.config.p {
        let con = pl.construct(&table, &crit, p)?;
        let sol = pl.solve(&table, &con)?;
        println!("p = {p}: {} Newton steps, peaks {:?}, energy {:.6}", sol.iterations, sol.peak_values, sol.energy);
        let snap = dir.join(format!("solution-{}.snap", tag(p)));
        write_snapshot(std::io::BufWriter::new(fs::File::create(&snap)?), &con.mesh, &sol)?;
        eprintln!("wrote {}", snap.display());
        let center = sol.peak_points[0];
        let reach = con.mesh.nodes.iter().map(|x| (x - center).norm()).fold(0.0, f64::max);
        write(&dir, &format!("rays-{}.dat", tag(p)), &ray_table(&con.mesh, &sol.u, center, 8, reach, 401))?;
        if with_spectrum {
            let spec = pl.spectrum(&con, &sol, pl.config.checks.identities)?;
            println!("  eigenvalues {:?}\n  morse {} (predicted {})", spec.eigenvalues, spec.morse, con.prediction.morse_pred);
            write(&dir, &format!("spectrum-{}.json", tag(p)), &pretty(&spec)?)?;
            lambdas.push((p, spec.eigenvalues));
        }
    }
    if with_spectrum {
        write(&dir, "lambda.dat", &lambda_table(&lambdas))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(c: &Common) -> Result<ExitCode> {
    let cfg = c.config()?;
    let dir = out_dir(&cfg)?;
    let report = match Pipeline::new(cfg.clone(), c.cache_dir()) {
        Ok(pl) => pl.verify(),
        Err(e) => {
            let mut r = Report::new(cfg);
            r.fail("config", None, &e);
            r.finalize();
            write(&dir, "verify.json", &r.to_json()?)?;
            return Err(e.into());
        }
    };
    for r in &report.rows {
        let verdict = match (r.pass, r.gating) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "info",
        };
        let p = r.p.map(|p| format!(" p={p}")).unwrap_or_default();
        println!("{verdict} {}{p} {}: computed {:.6e}, predicted {:.6e}, tol {:.1e}", r.stage, r.name, r.computed, r.predicted, r.tol);
    }
    for f in &report.failures {
        println!("FAIL {} {:?}: {}", f.stage, f.p, f.error);
    }
    println!("overall: {}", if report.pass { "PASS" } else { "FAIL" });
    write(&dir, "verify.json", &report.to_json()?)?;
    Ok(if report.pass { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = match &cli.command {
        Command::Profiles(c) => cmd_profiles(c),
        Command::Critpoints(c) => cmd_critpoints(c),
        Command::Construct(c) => cmd_construct(c),
        Command::Solve(c) => cmd_solve(c, false),
        Command::Spectrum(c) => cmd_solve(c, true),
        Command::Verify(c) => cmd_verify(c),
    };
    match run {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
