use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use bohmlab_core::error::BohmError;
use bohmlab_core::scenario::{self, find_bundled, RunOptions, Scenario};
use clap::{Parser, Subcommand};
use log::info;

const EXIT_FAIL: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "bohmlab", version, about = "Run Bohmian mechanics scenarios and write their reports")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario from a config file or by bundled name.
    Run {
        config: String,
        /// Output directory. Defaults to `$BOHMLAB_OUT/<output or name>`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Output root used when --out is absent.
        #[arg(long, env = "BOHMLAB_OUT", default_value = "bohmlab-out", hide_env_values = true)]
        root: PathBuf,
        /// Worker threads. Results do not depend on this.
        #[arg(long)]
        threads: Option<usize>,
        /// Override the seed of every sampler in the scenario.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// List the bundled scenarios.
    List,
    /// Show a bundled scenario's description and config.
    Describe { scenario: String },
}

fn load(config: &str) -> Result<(Scenario, String), BohmError> {
    let path = Path::new(config);
    if path.is_file() {
        return Scenario::from_path(path);
    }
    match find_bundled(config) {
        Some(b) => Ok((Scenario::from_json(b.text)?, b.text.to_string())),
        None => Err(BohmError::validation(
            "config",
            format!("`{config}` is neither a file nor a bundled scenario"),
        )),
    }
}

fn invalid(e: &BohmError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(EXIT_INVALID)
}

fn run(config: &str, out: Option<PathBuf>, root: PathBuf, threads: Option<usize>, seed: Option<u64>) -> ExitCode {
    let (sc, text) = match load(config) {
        Ok(v) => v,
        Err(e) => return invalid(&e),
    };
    if let Some(n) = threads {
        if n == 0 {
            return invalid(&BohmError::validation("--threads", "must be at least 1"));
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    }
    let dir = out.unwrap_or_else(|| root.join(sc.output.as_deref().unwrap_or(&sc.name)));
    info!("running `{}` ({} pipeline) into {}", sc.name, sc.pipeline, dir.display());

    let started = SystemTime::now();
    let result = match scenario::run(&sc, &text, &RunOptions { seed }) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error in `{}` pipeline: {e}", sc.pipeline);
            return ExitCode::from(EXIT_RUNTIME);
        }
    };
    let elapsed = started.elapsed().unwrap_or_default();

    if let Err(e) = result.write(&dir).and_then(|_| {
        let meta = serde_json::json!({
            "started_unix": started.duration_since(UNIX_EPOCH).unwrap_or_default().as_secs_f64(),
            "elapsed_seconds": elapsed.as_secs_f64(),
            "threads": rayon::current_num_threads(),
            "version": env!("CARGO_PKG_VERSION"),
        });
        bohmlab_core::io::write_json(&dir.join("metadata.json"), &meta)
    }) {
        eprintln!("error writing {}: {e}", dir.display());
        return ExitCode::from(EXIT_RUNTIME);
    }

    let r = &result.report;
    println!("{} [{}] config {}", r.scenario, r.pipeline, &r.config_hash[..12]);
    for c in &r.checks {
        println!(
            "  {}  {:<48} {:>12.4e}  (tol {:.1e})",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.tolerance
        );
    }
    let passed = r.checks.iter().filter(|c| c.pass).count();
    println!("{passed}/{} checks passed, {:.2}s, wrote {}", r.checks.len(), elapsed.as_secs_f64(), dir.display());
    if r.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAIL)
    }
}

fn list() -> ExitCode {
    for b in scenario::bundled() {
        // bundled configs are checked by the test suite
        let desc = Scenario::from_json(b.text).map(|s| s.description).unwrap_or_default();
        println!("{:<28} {desc}", b.name);
    }
    ExitCode::SUCCESS
}

fn describe(name: &str) -> ExitCode {
    let Some(b) = find_bundled(name) else {
        return invalid(&BohmError::validation("scenario", format!("no bundled scenario `{name}`")));
    };
    let sc = match Scenario::from_json(b.text) {
        Ok(s) => s,
        Err(e) => return invalid(&e),
    };
    println!("{}", sc.name);
    println!("pipeline: {}", sc.pipeline);
    if let Ok(p) = scenario::pipeline_registry().get(&sc.pipeline) {
        println!("  {}", p.describe());
    }
    println!("{}\n", sc.description);
    print!("{}", b.text);
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run {
            config,
            out,
            root,
            threads,
            seed,
        } => run(&config, out, root, threads, seed),
        Command::List => list(),
        Command::Describe { scenario } => describe(&scenario),
    }
}
