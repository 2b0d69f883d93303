use std::io::Write;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Parser;
use projsynth::{MetricReport, Projection};

#[derive(Parser)]
pub struct Args {
    /// Predicted / synthesized projection.
    #[arg(long)]
    pub pred: PathBuf,
    /// Reference projection.
    #[arg(long)]
    pub truth: PathBuf,
    /// Also write the JSON report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Append one CSV row here (header is written when the file is new).
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

fn number(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        "inf".to_string()
    }
}

pub fn run(args: &Args) -> Result<()> {
    let pred = Projection::load(&args.pred)?;
    let truth = Projection::load(&args.truth)?;
    let report = MetricReport::compute(&pred, &truth)?;

    let json = serde_json::to_string_pretty(&report)?;
    println!("{json}");
    if let Some(path) = &args.out {
        std::fs::write(path, format!("{json}\n"))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = &args.csv {
        let new = std::fs::metadata(path)
            .map(|m| m.len() == 0)
            .unwrap_or(true);
        let mut file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .with_context(|| format!("opening {}", path.display()))?;
        if new {
            writeln!(file, "pred,truth,mae,nrmse,psnr,ssim")?;
        }
        writeln!(
            file,
            "{},{},{},{},{},{}",
            args.pred.display(),
            args.truth.display(),
            number(report.mae),
            number(report.nrmse),
            number(report.psnr),
            number(report.ssim),
        )?;
    }
    Ok(())
}
