//! Deterministic output files: provenance-stamped CSVs, the spline cache,
//! and the run manifest. No timestamps anywhere, so repeated runs with the
//! same config are byte-identical.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};

use nestenv_core::{c64, CoherenceTrace, CubicSpline};

use crate::config::{canonical_toml, ConfigFile};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn config_hash(config: &ConfigFile) -> anyhow::Result<String> {
    let canonical = canonical_toml(config)?;
    let digest = Sha256::digest(canonical.as_bytes());
    Ok(format!("{digest:x}"))
}

pub struct OutputWriter {
    dir: PathBuf,
    hash: String,
    base_seed: u64,
    files: Vec<String>,
}

impl OutputWriter {
    pub fn create(dir: &Path, config: &ConfigFile, base_seed: u64) -> anyhow::Result<Self> {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("cannot create output directory {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            hash: config_hash(config)?,
            base_seed,
            files: Vec::new(),
        })
    }

    fn open(&mut self, name: &str) -> anyhow::Result<BufWriter<File>> {
        let path = self.dir.join(name);
        let file = File::create(&path)
            .with_context(|| format!("cannot write output file {}", path.display()))?;
        self.files.push(name.to_string());
        Ok(BufWriter::new(file))
    }

    fn provenance(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "# config_sha256={}", self.hash)?;
        writeln!(w, "# base_seed={}", self.base_seed)?;
        writeln!(w, "# version={VERSION}")
    }

    pub fn write_trace(&mut self, name: &str, trace: &CoherenceTrace) -> anyhow::Result<()> {
        let mut w = self.open(name)?;
        self.provenance(&mut w)?;
        trace.write_csv(&mut w)?;
        Ok(())
    }

    /// Comparison CSV: simulation and theory curves with the ELR reference
    /// subtracted, plus the fitted-rate theory column.
    #[allow(clippy::too_many_arguments)]
    pub fn write_compare(
        &mut self,
        name: &str,
        grid: &[f64],
        sim: &CoherenceTrace,
        theory: &[c64],
        fit_theory: &[c64],
        elr: &[c64],
        gamma: f64,
        gamma_fit: f64,
    ) -> anyhow::Result<()> {
        let mut w = self.open(name)?;
        self.provenance(&mut w)?;
        writeln!(w, "# gamma={gamma}")?;
        writeln!(w, "# gamma_fit={gamma_fit}")?;
        writeln!(
            w,
            "t,re_sim_minus_elr,im_sim_minus_elr,re_theory_minus_elr,im_theory_minus_elr,\
             re_fit_theory_minus_elr,im_fit_theory_minus_elr,stderr_re,stderr_im"
        )?;
        for (i, &t) in grid.iter().enumerate() {
            let s = sim.values[i] - elr[i];
            let th = theory[i] - elr[i];
            let ft = fit_theory[i] - elr[i];
            writeln!(
                w,
                "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
                t, s.re, s.im, th.re, th.im, ft.re, ft.im, sim.stderr_re[i], sim.stderr_im[i]
            )?;
        }
        Ok(())
    }

    pub fn write_fit_table(&mut self, name: &str, rows: &[FitRow]) -> anyhow::Result<()> {
        let mut w = self.open(name)?;
        self.provenance(&mut w)?;
        writeln!(
            w,
            "lambda,n_e,gamma_nominal,gamma_fit,residual,stderr,window_lo,window_hi"
        )?;
        for r in rows {
            writeln!(
                w,
                "{:.12e},{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
                r.lambda,
                r.n_e,
                r.gamma_nominal,
                r.gamma_fit,
                r.residual,
                r.stderr,
                r.window.0,
                r.window.1
            )?;
        }
        Ok(())
    }

    pub fn write_saturation_points(
        &mut self,
        name: &str,
        points: &[(f64, f64, f64, usize)],
    ) -> anyhow::Result<()> {
        let mut w = self.open(name)?;
        self.provenance(&mut w)?;
        writeln!(w, "alpha,gamma_fit_over_lambda,lambda,n_e")?;
        for &(alpha, ratio, lambda, n_e) in points {
            writeln!(w, "{alpha:.12e},{ratio:.12e},{lambda:.12e},{n_e}")?;
        }
        Ok(())
    }

    pub fn write_spline(&mut self, name: &str, spline: &CubicSpline) -> anyhow::Result<()> {
        #[derive(Serialize)]
        struct SplineFile<'a> {
            config_sha256: &'a str,
            base_seed: u64,
            version: &'a str,
            knots: &'a [f64],
            /// per-interval [a, b, c, d], each as [re, im]
            coefficients: Vec<[[f64; 2]; 4]>,
        }
        let coefficients = spline
            .coefficients()
            .iter()
            .map(|row| {
                [
                    [row[0].re, row[0].im],
                    [row[1].re, row[1].im],
                    [row[2].re, row[2].im],
                    [row[3].re, row[3].im],
                ]
            })
            .collect();
        let mut w = self.open(name)?;
        let payload = SplineFile {
            config_sha256: &self.hash,
            base_seed: self.base_seed,
            version: VERSION,
            knots: spline.knots(),
            coefficients,
        };
        serde_json::to_writer_pretty(&mut w, &payload)?;
        writeln!(w)?;
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, payload: &T) -> anyhow::Result<()> {
        let mut w = self.open(name)?;
        serde_json::to_writer_pretty(&mut w, payload)?;
        writeln!(w)?;
        Ok(())
    }

    /// Manifest carrying the resolved config, seed, and produced files.
    pub fn finish(mut self, command: &str, config: &ConfigFile) -> anyhow::Result<()> {
        #[derive(Serialize)]
        struct Manifest<'a> {
            version: &'a str,
            command: &'a str,
            title: Option<&'a str>,
            config_sha256: &'a str,
            base_seed: u64,
            files: &'a [String],
            config: &'a ConfigFile,
        }
        let hash = self.hash.clone();
        let files = self.files.clone();
        let mut w = self.open("manifest.json")?;
        let manifest = Manifest {
            version: VERSION,
            command,
            title: config.title.as_deref(),
            config_sha256: &hash,
            base_seed: self.base_seed,
            files: &files,
            config,
        };
        serde_json::to_writer_pretty(&mut w, &manifest)?;
        writeln!(w)?;
        Ok(())
    }
}

pub struct FitRow {
    pub lambda: f64,
    pub n_e: usize,
    pub gamma_nominal: f64,
    pub gamma_fit: f64,
    pub residual: f64,
    pub stderr: f64,
    pub window: (f64, f64),
}

/// Decimal string for a rate used inside file names (`0.02` -> `0.02`).
pub fn gamma_tag(gamma: f64) -> String {
    format!("{gamma}").replace('.', "p").replace('-', "m")
}
