use std::io::Write;
use std::path::Path;
use std::time::Instant;

use crate::error::Result;
use crate::particles::ParticleSet;

/// A named set of scalar columns evaluated on the particle cloud.
pub trait Monitor: Send {
    fn columns(&self) -> Vec<String>;
    fn observe(&mut self, step: usize, particles: &ParticleSet) -> Result<Vec<f64>>;
}

/// A monitor backed by a closure.
pub struct FnMonitor<F> {
    names: Vec<String>,
    f: F,
}

impl<F> FnMonitor<F>
where
    F: FnMut(usize, &ParticleSet) -> Result<Vec<f64>> + Send,
{
    pub fn new(names: &[&str], f: F) -> Self {
        Self { names: names.iter().map(|s| s.to_string()).collect(), f }
    }
}

impl<F> Monitor for FnMonitor<F>
where
    F: FnMut(usize, &ParticleSet) -> Result<Vec<f64>> + Send,
{
    fn columns(&self) -> Vec<String> {
        self.names.clone()
    }

    fn observe(&mut self, step: usize, particles: &ParticleSet) -> Result<Vec<f64>> {
        (self.f)(step, particles)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RecordConfig {
    /// Evaluate monitors every `every` steps (and at the first and last step).
    pub every: usize,
    pub snapshot_every: Option<usize>,
    /// Record elapsed wall time. When off the column is written as 0 so that
    /// repeated runs produce identical files.
    pub wall_clock: bool,
}

impl Default for RecordConfig {
    fn default() -> Self {
        Self { every: 1, snapshot_every: None, wall_clock: true }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub step: usize,
    pub wall_ms: f64,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunTrace {
    pub columns: Vec<String>,
    pub records: Vec<TraceRecord>,
    pub snapshots: Vec<ParticleSet>,
    /// Whether `wall_ms` was measured; the column is only written if so.
    pub wall_clock: bool,
}

impl RunTrace {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.records.iter().map(|r| r.values[k]).collect())
    }

    pub fn steps(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.step).collect()
    }

    /// Header `step,[wall_ms,]<columns>`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["step".to_string()];
        if self.wall_clock {
            header.push("wall_ms".to_string());
        }
        header.extend(self.columns.iter().cloned());
        out.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![r.step.to_string()];
            if self.wall_clock {
                row.push(format!("{:.3}", r.wall_ms));
            }
            row.extend(r.values.iter().map(|v| format!("{v:e}")));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Writes `snap_<step>.csv` for every snapshot into `dir`.
    pub fn write_snapshots(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for s in &self.snapshots {
            let f = std::fs::File::create(dir.join(format!("snap_{}.csv", s.step())))?;
            s.write_csv(std::io::BufWriter::new(f))?;
        }
        Ok(())
    }
}

/// Drives monitors and snapshots for one run.
pub(crate) struct Recorder<'m> {
    cfg: RecordConfig,
    monitors: Vec<&'m mut dyn Monitor>,
    start: Instant,
    trace: RunTrace,
}

impl<'m> Recorder<'m> {
    pub fn new(cfg: RecordConfig, monitors: Vec<&'m mut dyn Monitor>) -> Self {
        let columns = monitors.iter().flat_map(|m| m.columns()).collect();
        Self { cfg, monitors, start: Instant::now(), trace: RunTrace { columns, wall_clock: cfg.wall_clock, ..RunTrace::default() } }
    }

    pub fn observe(&mut self, particles: &ParticleSet, last: bool) -> Result<()> {
        let step = particles.step();
        let every = self.cfg.every.max(1);
        let due = step % every == 0 || last;
        if due && self.trace.records.last().map(|r| r.step) != Some(step) {
            let wall_ms = if self.cfg.wall_clock { self.start.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
            let mut values = Vec::with_capacity(self.trace.columns.len());
            for m in self.monitors.iter_mut() {
                values.extend(m.observe(step, particles)?);
            }
            self.trace.records.push(TraceRecord { step, wall_ms, values });
        }
        if let Some(s) = self.cfg.snapshot_every {
            if step % s.max(1) == 0 && self.trace.snapshots.last().map(|p| p.step()) != Some(step) {
                self.trace.snapshots.push(particles.clone());
            }
        }
        Ok(())
    }

    pub fn finish(self) -> RunTrace {
        self.trace
    }
}
