use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;

use gwforest::{Error, Result};

pub struct Context {
    pub out: PathBuf,
    threads: Option<usize>,
    started: Instant,
}

#[derive(Serialize)]
struct Report<'a, C: Serialize, R: Serialize> {
    command: &'a str,
    config: &'a C,
    result: &'a R,
    pass: bool,
}

#[derive(Serialize)]
struct Metadata<'a> {
    command: &'a str,
    version: &'a str,
    finished_unix_seconds: u64,
    runtime_seconds: f64,
    threads: usize,
    threads_requested: Option<usize>,
    out_dir: String,
}

impl Context {
    pub fn new(out: PathBuf, threads: Option<usize>) -> Self {
        Context {
            out,
            threads,
            started: Instant::now(),
        }
    }

    fn ensure_dir(&self) -> Result<()> {
        fs::create_dir_all(&self.out).map_err(|e| {
            Error::InvalidArgument(format!(
                "output directory {} is not writable: {e}",
                self.out.display()
            ))
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// Writes a CSV trace file in the output directory.
    pub fn csv<F>(&self, name: &str, write: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<()>,
    {
        self.ensure_dir()?;
        let mut w = BufWriter::new(File::create(self.path(name))?);
        write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// Writes the report and its metadata and prints the report path.
    pub fn emit<C: Serialize, R: Serialize>(
        &self,
        command: &str,
        config: &C,
        result: &R,
        pass: bool,
    ) -> Result<bool> {
        self.ensure_dir()?;
        let report = Report {
            command,
            config,
            result,
            pass,
        };
        let path = self.path(&format!("{command}.json"));
        write_json(&path, &report)?;
        let meta = Metadata {
            command,
            version: env!("CARGO_PKG_VERSION"),
            finished_unix_seconds: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            runtime_seconds: self.started.elapsed().as_secs_f64(),
            threads: rayon::current_num_threads(),
            threads_requested: self.threads,
            out_dir: self.out.display().to_string(),
        };
        write_json(&self.path(&format!("{command}.meta.json")), &meta)?;
        println!(
            "{}: {} ({})",
            command,
            if pass { "pass" } else { "FAIL" },
            path.display()
        );
        Ok(pass)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}
