//! CSV serialization and run manifests.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use kinmix::diagrams::{DiagramPoint, ScatterReport};
use kinmix::Config;
use serde::{Deserialize, Serialize};

pub const DIAGRAM_HEADER: &str =
    "s,rho_c,rho_t,rho_total,q_c,q_t,q_total,u_c,u_t,u_total,converged,residual,t_final,sample_id,combo_label";

/// 17 significant digits, lossless for binary64; non-finite values as `nan`/`inf`.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x:.16e}")
    }
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "nan".to_string(), num)
}

pub fn diagram_row(p: &DiagramPoint) -> String {
    [
        num(p.s),
        num(p.rho_c),
        num(p.rho_t),
        num(p.rho_total),
        num(p.q_c),
        num(p.q_t),
        num(p.q_total),
        opt(p.u_c),
        opt(p.u_t),
        opt(p.u_total),
        p.converged.to_string(),
        num(p.residual),
        num(p.t_final),
        p.sample_id.to_string(),
        p.combo_label.clone(),
    ]
    .join(",")
}

pub fn write_diagram<W: Write>(mut w: W, points: &[DiagramPoint]) -> io::Result<()> {
    writeln!(w, "{DIAGRAM_HEADER}")?;
    for p in points {
        writeln!(w, "{}", diagram_row(p))?;
    }
    w.flush()
}

pub fn write_scatter<W: Write>(mut w: W, report: &ScatterReport) -> io::Result<()> {
    writeln!(w, "# bins of width {} veh/km, s_c = {}", num(report.bin_width), num(report.s_c))?;
    writeln!(w, "lo,hi,phase,count,mean,min,max,std_dev,range,fixed_density_range")?;
    for b in &report.bins {
        let phase = serde_json::to_value(b.phase).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        writeln!(
            w,
            "{},{},{phase},{},{},{},{},{},{},{}",
            num(b.lo),
            num(b.hi),
            b.count,
            num(b.mean),
            num(b.min),
            num(b.max),
            num(b.std_dev),
            num(b.range()),
            num(b.fixed_density_range)
        )?;
    }
    w.flush()
}

/// Everything needed to rerun a command bit for bit.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    /// Command-line arguments after the program name.
    pub args: Vec<String>,
    /// Effective configuration after file loading and flag overrides.
    pub config: Config,
    pub seed: u64,
    pub outputs: Vec<PathBuf>,
    pub wall_clock_seconds: f64,
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

impl RunManifest {
    pub fn write(&self, out: &Path) -> io::Result<PathBuf> {
        let path = manifest_path(out);
        let text = serde_json::to_string_pretty(self).map_err(io::Error::other)?;
        fs::write(&path, text + "\n")?;
        Ok(path)
    }

    pub fn read(path: &Path) -> io::Result<Self> {
        serde_json::from_str(&fs::read_to_string(path)?).map_err(io::Error::other)
    }
}
