//! Coherence traces and their CSV serialization.
//!
//! CSV schema: comment lines `# key=value` carrying the parameter record,
//! then a header row and one row per grid point with columns
//! `t,re_f,im_f,stderr_re,stderr_im`.

use std::io::{BufRead, Write};

use ndarray_linalg::c64;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;

/// Parameter record attached to a trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceMeta {
    pub kind: String,
    pub lambda: f64,
    pub gamma: f64,
    pub dim: usize,
    pub n_run: usize,
    pub base_seed: Option<u64>,
    pub dt: Option<f64>,
    pub integrator: Option<String>,
    pub vprime: Option<String>,
    pub initial_state: Option<String>,
}

impl Default for TraceMeta {
    fn default() -> Self {
        Self {
            kind: "trace".into(),
            lambda: 0.0,
            gamma: 0.0,
            dim: 0,
            n_run: 1,
            base_seed: None,
            dt: None,
            integrator: None,
            vprime: None,
            initial_state: None,
        }
    }
}

impl TraceMeta {
    fn header_pairs(&self) -> Vec<(&'static str, String)> {
        let mut pairs = vec![
            ("kind", self.kind.clone()),
            ("lambda", fmt_f64(self.lambda)),
            ("gamma", fmt_f64(self.gamma)),
            ("n_e", self.dim.to_string()),
            ("n_run", self.n_run.to_string()),
        ];
        if let Some(seed) = self.base_seed {
            pairs.push(("base_seed", seed.to_string()));
        }
        if let Some(dt) = self.dt {
            pairs.push(("dt", fmt_f64(dt)));
        }
        if let Some(ref s) = self.integrator {
            pairs.push(("integrator", s.clone()));
        }
        if let Some(ref s) = self.vprime {
            pairs.push(("vprime", s.clone()));
        }
        if let Some(ref s) = self.initial_state {
            pairs.push(("initial_state", s.clone()));
        }
        pairs
    }
}

fn fmt_f64(x: f64) -> String {
    // Shortest representation that round-trips; deterministic.
    format!("{x}")
}

/// Time grid plus complex relative-coherence values with per-point
/// statistical errors of the real and imaginary parts.
#[derive(Debug, Clone)]
pub struct CoherenceTrace {
    pub grid: TimeGrid,
    pub values: Vec<c64>,
    pub stderr_re: Vec<f64>,
    pub stderr_im: Vec<f64>,
    pub meta: TraceMeta,
}

impl CoherenceTrace {
    /// Trace without statistical errors (single realization or theory).
    pub fn new(grid: TimeGrid, values: Vec<c64>, meta: TraceMeta) -> Result<Self> {
        let n = grid.len();
        if values.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} grid points but {} values",
                n,
                values.len()
            )));
        }
        Ok(Self {
            grid,
            values,
            stderr_re: vec![0.0; n],
            stderr_im: vec![0.0; n],
            meta,
        })
    }

    pub fn with_stderr(
        grid: TimeGrid,
        values: Vec<c64>,
        stderr_re: Vec<f64>,
        stderr_im: Vec<f64>,
        meta: TraceMeta,
    ) -> Result<Self> {
        let n = grid.len();
        if values.len() != n || stderr_re.len() != n || stderr_im.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "grid has {n} points; values/stderr lengths {}/{}/{}",
                values.len(),
                stderr_re.len(),
                stderr_im.len()
            )));
        }
        Ok(Self {
            grid,
            values,
            stderr_re,
            stderr_im,
            meta,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (k, v) in self.meta.header_pairs() {
            writeln!(w, "# {k}={v}")?;
        }
        writeln!(w, "t,re_f,im_f,stderr_re,stderr_im")?;
        for (i, &t) in self.grid.points().iter().enumerate() {
            writeln!(
                w,
                "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
                t, self.values[i].re, self.values[i].im, self.stderr_re[i], self.stderr_im[i]
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("write to Vec cannot fail");
        String::from_utf8(buf).expect("CSV output is valid UTF-8")
    }

    /// Parse the CSV written by [`CoherenceTrace::write_csv`].
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut meta = TraceMeta::default();
        let mut points = Vec::new();
        let mut values = Vec::new();
        let mut stderr_re = Vec::new();
        let mut stderr_im = Vec::new();
        let mut saw_header = false;
        for line in r.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((k, v)) = rest.trim().split_once('=') {
                    apply_meta(&mut meta, k.trim(), v.trim());
                }
                continue;
            }
            if !saw_header {
                // column header row
                saw_header = true;
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 5 {
                return Err(Error::Validation(format!(
                    "expected 5 CSV columns, got {} in '{line}'"
                , cols.len())));
            }
            let parse = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|e| Error::Validation(format!("bad float '{s}': {e}")))
            };
            points.push(parse(cols[0])?);
            values.push(c64::new(parse(cols[1])?, parse(cols[2])?));
            stderr_re.push(parse(cols[3])?);
            stderr_im.push(parse(cols[4])?);
        }
        let grid = TimeGrid::from_points(points)?;
        Self::with_stderr(grid, values, stderr_re, stderr_im, meta)
    }
}

fn apply_meta(meta: &mut TraceMeta, key: &str, value: &str) {
    match key {
        "kind" => meta.kind = value.to_string(),
        "lambda" => meta.lambda = value.parse().unwrap_or(meta.lambda),
        "gamma" => meta.gamma = value.parse().unwrap_or(meta.gamma),
        "n_e" => meta.dim = value.parse().unwrap_or(meta.dim),
        "n_run" => meta.n_run = value.parse().unwrap_or(meta.n_run),
        "base_seed" => meta.base_seed = value.parse().ok(),
        "dt" => meta.dt = value.parse().ok(),
        "integrator" => meta.integrator = Some(value.to_string()),
        "vprime" => meta.vprime = Some(value.to_string()),
        "initial_state" => meta.initial_state = Some(value.to_string()),
        _ => {}
    }
}
