use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sparse_tag::gnn::gradcheck::{run_suite, DEFAULT_EPS};
use sparse_tag::pipeline::{gen_synthetic, run_ablation, run_pipeline, run_sweep, Ablation, PipelineConfig, PipelineError, RunReport, SynthSpec};

/// Node classification on text-attributed graphs under text and edge sparsity.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML pipeline configuration.
    config: PathBuf,
    /// Override any config key, e.g. `--set train.lr=0.005` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Shorthand for `--set sparsity=R`.
    #[arg(long)]
    sparsity: Option<f64>,
    /// Comma-separated seeds, shorthand for `--set seeds=[..]`.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Output directory (relative to the working directory).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline once per configured seed.
    Run(ConfigArgs),
    /// Run the pipeline at several sparsity ratios.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        ratios: Vec<f64>,
    },
    /// Compare the full method against variants with modules disabled.
    Ablate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Module(s) to disable: text_aug, struct_aug, struct_learn; join with
        /// `+` to disable several in one variant. Default: each one alone.
        #[arg(long)]
        without: Vec<String>,
    },
    /// Generate a synthetic planted-partition dataset as JSONL.
    Synth {
        /// Output file.
        #[arg(long, short)]
        out: PathBuf,
        /// TOML file with generator parameters (a `[synthetic]` table or bare keys).
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Check reverse-mode gradients against central finite differences.
    Gradcheck {
        #[arg(long, default_value_t = DEFAULT_EPS)]
        eps: f64,
    },
}

fn load_config(a: &ConfigArgs) -> Result<PipelineConfig, PipelineError> {
    let mut overrides = a.overrides.clone();
    if let Some(s) = a.sparsity {
        overrides.push(format!("sparsity={s}"));
    }
    if !a.seeds.is_empty() {
        let list: Vec<String> = a.seeds.iter().map(u64::to_string).collect();
        overrides.push(format!("seeds=[{}]", list.join(",")));
    }
    let mut cfg = PipelineConfig::load(&a.config, &overrides)?;
    if let Some(out) = &a.output {
        cfg.output_dir = std::path::absolute(out)?;
    }
    Ok(cfg)
}

/// Prints the header of each report and returns the exit code of the first
/// failed seed, if any.
fn summarize(reports: &[RunReport]) -> ExitCode {
    for r in reports {
        println!("{}", r.header);
    }
    match reports.iter().find_map(RunReport::first_failure) {
        Some(kind) => ExitCode::from(kind.exit_code() as u8),
        None => ExitCode::SUCCESS,
    }
}

fn synth_spec(spec: Option<&PathBuf>, overrides: &[String]) -> Result<SynthSpec, PipelineError> {
    let mut table = match spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| PipelineError::Config(format!("{}: {e}", p.display())))?;
            let mut t: toml::Table = toml::from_str(&text).map_err(|e| PipelineError::Config(e.to_string()))?;
            match t.remove("synthetic") {
                Some(toml::Value::Table(inner)) => inner,
                _ => t,
            }
        }
        None => toml::Table::new(),
    };
    for o in overrides {
        sparse_tag::pipeline::config::apply_override(&mut table, o)?;
    }
    toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| PipelineError::Config(e.to_string()))
}

fn execute(cmd: Command) -> Result<ExitCode, PipelineError> {
    match cmd {
        Command::Run(a) => {
            let report = run_pipeline(&load_config(&a)?)?;
            Ok(summarize(std::slice::from_ref(&report)))
        }
        Command::Sweep { cfg, ratios } => Ok(summarize(&run_sweep(&load_config(&cfg)?, &ratios)?)),
        Command::Ablate { cfg, without } => {
            let cfg = load_config(&cfg)?;
            let mut variants = vec![Ablation::default()];
            if without.is_empty() {
                for m in ["text_aug", "struct_aug", "struct_learn"] {
                    let mut v = Ablation::default();
                    v.disable(m)?;
                    variants.push(v);
                }
            }
            for w in &without {
                let mut v = Ablation::default();
                for m in w.split('+') {
                    v.disable(m.trim())?;
                }
                variants.push(v);
            }
            Ok(summarize(&run_ablation(&cfg, &variants)?))
        }
        Command::Synth { out, spec, overrides } => {
            let spec = synth_spec(spec.as_ref(), &overrides)?;
            let g = gen_synthetic(&spec)?;
            g.save(&out)?;
            println!(
                "wrote {} ({} nodes, {} edges, {} classes)",
                out.display(),
                g.num_nodes(),
                g.edges().len(),
                g.num_classes()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Gradcheck { eps } => {
            let start = std::time::Instant::now();
            let mut ok = true;
            for r in run_suite(eps) {
                println!(
                    "{:<9} {} coords  max rel err {:.3e}  max abs err {:.3e}  {}",
                    r.name,
                    r.coordinates,
                    r.max_rel_err,
                    r.max_abs_err,
                    if r.passed() { "ok" } else { "FAIL" }
                );
                ok &= r.passed();
            }
            println!("{:.2}s", start.elapsed().as_secs_f64());
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(4) })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.kind().exit_code() as u8)
        }
    }
}
