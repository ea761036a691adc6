//! CSV artifacts for a finished campaign.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::harness::Campaign;

/// 15 significant digits, scientific notation.
fn num(x: f64) -> String {
    format!("{x:.14e}")
}

#[derive(Debug, Clone)]
pub struct OutputPaths {
    pub rates: PathBuf,
    pub summary: PathBuf,
    pub cdf: PathBuf,
}

impl OutputPaths {
    pub fn for_prefix(prefix: &Path) -> Self {
        let with = |suffix: &str| {
            let mut s = prefix.as_os_str().to_owned();
            s.push(suffix);
            PathBuf::from(s)
        };
        Self {
            rates: with("_rates.csv"),
            summary: with("_summary.csv"),
            cdf: with("_cdf.csv"),
        }
    }
}

pub fn write_rates<W: Write>(campaign: &Campaign, out: &mut W) -> std::io::Result<()> {
    writeln!(out, "trial,user,link,bf_mode,estimator,rate_bps,distance_m")?;
    for t in &campaign.trials {
        for s in &t.samples {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                t.trial,
                s.user,
                s.link,
                s.bf_mode,
                s.estimator,
                num(s.rate),
                num(t.distances[s.user])
            )?;
        }
    }
    Ok(())
}

pub fn write_summary<W: Write>(campaign: &Campaign, out: &mut W) -> std::io::Result<()> {
    writeln!(out, "link,bf_mode,estimator,median_bps,p90_bps,n_samples")?;
    for (key, s) in &campaign.stats.series {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            key.link,
            key.bf_mode,
            key.estimator,
            num(s.median),
            num(s.p90),
            s.n_samples
        )?;
    }
    Ok(())
}

pub fn write_cdf<W: Write>(campaign: &Campaign, out: &mut W) -> std::io::Result<()> {
    writeln!(out, "link,bf_mode,estimator,rate_bps,cdf")?;
    for (key, s) in &campaign.stats.series {
        for (v, p) in &s.cdf {
            writeln!(
                out,
                "{},{},{},{},{}",
                key.link,
                key.bf_mode,
                key.estimator,
                num(*v),
                num(*p)
            )?;
        }
    }
    Ok(())
}

/// Write `<prefix>_rates.csv`, `<prefix>_summary.csv` and `<prefix>_cdf.csv`.
pub fn emit_results(campaign: &Campaign, prefix: &Path) -> Result<OutputPaths> {
    let paths = OutputPaths::for_prefix(prefix);
    let targets: [(&PathBuf, fn(&Campaign, &mut BufWriter<File>) -> std::io::Result<()>); 3] = [
        (&paths.rates, write_rates),
        (&paths.summary, write_summary),
        (&paths.cdf, write_cdf),
    ];
    for (path, write) in targets {
        let mut w = BufWriter::new(File::create(path)?);
        write(campaign, &mut w)?;
        w.flush()?;
    }
    Ok(paths)
}
