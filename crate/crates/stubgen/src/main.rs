use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use stubgen::{generate_stubs, merge_annotations, parse_api, AnnotationFile, ApiSpec, Templates};

#[derive(Parser)]
#[command(name = "stubgen", about = "Generate runtime stubs from an accelerator API header")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse a header into an API spec; lists functions that need annotations.
    Parse {
        header: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Merge an annotation file into a spec (in place unless -o is given).
    Merge {
        spec: PathBuf,
        annotations: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Render client and server stubs from a complete spec.
    Gen {
        spec: PathBuf,
        #[arg(long)]
        templates: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
}

fn read(path: &PathBuf) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_spec(path: &PathBuf) -> Result<ApiSpec> {
    ApiSpec::from_json(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Parse { header, out } => {
            let (spec, unresolved) =
                parse_api(&read(&header)?).with_context(|| header.display().to_string())?;
            std::fs::write(&out, spec.to_json())?;
            let n = spec.functions.len();
            eprintln!(
                "{n} functions, {} complete ({:.1}%)",
                n - unresolved.len(),
                if n == 0 { 100.0 } else { 100.0 * (n - unresolved.len()) as f64 / n as f64 }
            );
            for f in &unresolved {
                eprintln!("needs annotation: {f}");
            }
        }
        Cmd::Merge {
            spec,
            annotations,
            out,
        } => {
            let s = load_spec(&spec)?;
            let ann = AnnotationFile::parse(&read(&annotations)?)
                .with_context(|| annotations.display().to_string())?;
            let merged = merge_annotations(&s, &ann)?;
            std::fs::write(out.as_ref().unwrap_or(&spec), merged.to_json())?;
        }
        Cmd::Gen {
            spec,
            templates,
            out,
        } => {
            let s = load_spec(&spec)?;
            let t = Templates::load(&templates)?;
            let artifacts = generate_stubs(&s, &t)?;
            artifacts.write_to(&out)?;
            eprintln!("wrote {} stubs to {}", s.functions.len(), out.display());
        }
    }
    Ok(())
}
