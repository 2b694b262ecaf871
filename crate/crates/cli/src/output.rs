//! Result tables as CSV with `#` header lines, or as one JSON document.
//!
//! The table itself depends only on the command, its configuration and the
//! seed. Wall-clock facts go to a `<out>.meta.json` sidecar instead.

use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};

use crate::{Cli, CliError, Format};

pub struct Context {
    pub seed: u64,
    pub format: Format,
    pub out: Option<PathBuf>,
    pub workers: usize,
    started: Instant,
    started_unix: f64,
}

impl Context {
    pub fn new(cli: &Cli, workers: usize) -> Self {
        Context {
            seed: cli.seed,
            format: cli.format,
            out: cli.out.clone(),
            workers,
            started: Instant::now(),
            started_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs_f64())
                .unwrap_or(0.0),
        }
    }

    /// Writes `rows` with the run description and an optional summary.
    pub fn emit<T: Serialize>(
        &self,
        command: &str,
        config: Value,
        rows: &[T],
        summary: Value,
    ) -> Result<(), CliError> {
        let mut sink: Box<dyn Write> = match &self.out {
            Some(path) => Box::new(io::BufWriter::new(create(path)?)),
            None => Box::new(io::stdout().lock()),
        };
        match self.format {
            Format::Json => {
                let doc = json!({
                    "tool": "predecode",
                    "version": env!("CARGO_PKG_VERSION"),
                    "command": command,
                    "seed": self.seed,
                    "config": config,
                    "summary": summary,
                    "rows": rows,
                });
                serde_json::to_writer_pretty(&mut sink, &doc).map_err(anyhow::Error::from)?;
                writeln!(sink).map_err(anyhow::Error::from)?;
            }
            Format::Csv => {
                writeln!(sink, "# predecode {}", env!("CARGO_PKG_VERSION")).map_err(anyhow::Error::from)?;
                writeln!(sink, "# command: {command}").map_err(anyhow::Error::from)?;
                writeln!(sink, "# seed: {}", self.seed).map_err(anyhow::Error::from)?;
                writeln!(sink, "# config: {config}").map_err(anyhow::Error::from)?;
                if !summary.is_null() {
                    writeln!(sink, "# summary: {summary}").map_err(anyhow::Error::from)?;
                }
                let mut w = csv::Writer::from_writer(&mut sink);
                for row in rows {
                    w.serialize(row).map_err(anyhow::Error::from)?;
                }
                w.flush().map_err(anyhow::Error::from)?;
            }
        }
        sink.flush().map_err(anyhow::Error::from)?;
        drop(sink);
        self.write_sidecar(command)
    }

    fn write_sidecar(&self, command: &str) -> Result<(), CliError> {
        let Some(out) = &self.out else {
            return Ok(());
        };
        let mut path = out.clone().into_os_string();
        path.push(".meta.json");
        let meta = json!({
            "command": command,
            "seed": self.seed,
            "workers": self.workers,
            "started_unix_s": self.started_unix,
            "elapsed_s": self.started.elapsed().as_secs_f64(),
            "argv": std::env::args().collect::<Vec<_>>(),
        });
        let f = create(&PathBuf::from(path))?;
        serde_json::to_writer_pretty(f, &meta).map_err(anyhow::Error::from)?;
        Ok(())
    }
}

fn create(path: &PathBuf) -> Result<File, CliError> {
    File::create(path).map_err(|e| CliError::Other(anyhow::anyhow!("cannot create {}: {e}", path.display())))
}
