//! Worker side of distributed runs.

use std::net::{Shutdown, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use super::protocol::{read_frame, write_message, TaskMessage, TileResult};
use super::{map_tiles, EngineError, PipelineConfig};
use crate::tiling::Tile;

#[derive(Clone, Debug)]
pub struct WorkerOptions {
    pub worker_id: String,
    /// Threads used for the tiles of one task.
    pub cores: usize,
    pub heartbeat: Duration,
    pub reconnect_attempts: u32,
    /// First reconnect delay; doubles on every further attempt.
    pub backoff: Duration,
    /// Drop the connection without answering once this many tasks have been
    /// received, as if the process had died. Used for fault injection.
    pub abort_after_tasks: Option<usize>,
}

impl Default for WorkerOptions {
    fn default() -> Self {
        Self {
            worker_id: format!("worker-{}", std::process::id()),
            cores: 1,
            heartbeat: Duration::from_secs(2),
            reconnect_attempts: 3,
            backoff: Duration::from_millis(250),
            abort_after_tasks: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct WorkerSummary {
    pub tasks: usize,
    pub tiles: usize,
    pub reconnects: u32,
}

enum SessionEnd {
    Shutdown,
    Lost(String),
    Aborted,
}

/// Serves tasks from the master at `addr` until it sends SHUTDOWN.
///
/// A lost connection or a malformed frame from the master triggers a
/// reconnect with exponential backoff; after `reconnect_attempts` failed
/// attempts in a row the worker gives up with an error.
pub fn run_worker(addr: &str, opts: &WorkerOptions) -> Result<WorkerSummary, EngineError> {
    let mut summary = WorkerSummary::default();
    let mut failures = 0u32;
    let mut first = true;
    loop {
        if !first {
            summary.reconnects += 1;
        }
        first = false;
        let last = match TcpStream::connect(addr) {
            Ok(stream) => {
                let before = summary.tasks;
                match session(stream, opts, &mut summary) {
                    SessionEnd::Shutdown => return Ok(summary),
                    SessionEnd::Aborted => return Err(EngineError::Aborted(summary.tasks)),
                    SessionEnd::Lost(reason) => {
                        if summary.tasks > before {
                            failures = 0;
                        }
                        reason
                    }
                }
            }
            Err(e) => format!("connect {addr}: {e}"),
        };
        failures += 1;
        if failures > opts.reconnect_attempts {
            return Err(EngineError::ConnectionLost {
                attempts: opts.reconnect_attempts,
                last,
            });
        }
        let delay = opts.backoff * 2u32.pow(failures - 1);
        log::warn!("{last}; reconnecting in {delay:?} ({failures}/{})", opts.reconnect_attempts);
        thread::sleep(delay);
    }
}

fn session(stream: TcpStream, opts: &WorkerOptions, summary: &mut WorkerSummary) -> SessionEnd {
    let _ = stream.set_nodelay(true);
    let mut reader = match stream.try_clone() {
        Ok(r) => r,
        Err(e) => return SessionEnd::Lost(e.to_string()),
    };
    let writer = Arc::new(Mutex::new(stream));
    let send = |msg: &TaskMessage| -> std::io::Result<()> {
        let mut w = writer.lock().unwrap_or_else(|e| e.into_inner());
        write_message(&mut *w, msg)
    };
    let hello = TaskMessage::Hello {
        worker_id: opts.worker_id.clone(),
        cores: opts.cores as u32,
    };
    if let Err(e) = send(&hello) {
        return SessionEnd::Lost(e.to_string());
    }

    let stop = Arc::new(AtomicBool::new(false));
    let beat = {
        let writer = writer.clone();
        let stop = stop.clone();
        let every = opts.heartbeat;
        thread::spawn(move || {
            let step = Duration::from_millis(20).min(every);
            let mut waited = Duration::ZERO;
            while !stop.load(Ordering::SeqCst) {
                thread::sleep(step);
                waited += step;
                if waited >= every {
                    waited = Duration::ZERO;
                    let mut w = writer.lock().unwrap_or_else(|e| e.into_inner());
                    if write_message(&mut *w, &TaskMessage::Heartbeat).is_err() {
                        return;
                    }
                }
            }
        })
    };

    let mut received = 0usize;
    let end = loop {
        let payload = match read_frame(&mut reader) {
            Ok(Some(p)) => p,
            Ok(None) => break SessionEnd::Lost("master closed the connection".into()),
            Err(e) => break SessionEnd::Lost(e.to_string()),
        };
        match TaskMessage::decode(&payload) {
            Ok(TaskMessage::Task { task_id, config, tiles }) => {
                received += 1;
                if opts.abort_after_tasks.is_some_and(|n| received >= n) {
                    let _ = reader.shutdown(Shutdown::Both);
                    break SessionEnd::Aborted;
                }
                let cfg = match PipelineConfig::from_toml(&config) {
                    Ok(c) => c,
                    Err(e) => {
                        let reason = format!("bad task config: {e}");
                        if send(&TaskMessage::Error { task_id, reason }).is_err() {
                            break SessionEnd::Lost("write failed".into());
                        }
                        continue;
                    }
                };
                let indices: Vec<u64> = tiles.iter().map(|t| t.index).collect();
                let tiles: Vec<Tile> = tiles.into_iter().map(|t| t.tile).collect();
                let outcomes = map_tiles(&tiles, &cfg, opts.cores, 1);
                let results = outcomes
                    .into_iter()
                    .zip(indices)
                    .map(|(o, index)| match o.result {
                        Ok(p) => TileResult::Ok {
                            index,
                            labels: p.labels,
                            filtered: p.filtered,
                            affected_fraction: p.affected_fraction,
                            micros: p.micros,
                        },
                        Err(reason) => TileResult::Failed { index, reason },
                    })
                    .collect::<Vec<_>>();
                summary.tasks += 1;
                summary.tiles += results.len();
                if let Err(e) = send(&TaskMessage::Result { task_id, results }) {
                    break SessionEnd::Lost(e.to_string());
                }
            }
            Ok(TaskMessage::Shutdown) => break SessionEnd::Shutdown,
            Ok(TaskMessage::Heartbeat) => {}
            Ok(other) => {
                let reason = format!("unexpected {} from master", other.name());
                let _ = send(&TaskMessage::Error { task_id: 0, reason });
            }
            Err(e) => {
                let reason = e.to_string();
                let _ = send(&TaskMessage::Error {
                    task_id: 0,
                    reason: reason.clone(),
                });
                let _ = reader.shutdown(Shutdown::Both);
                break SessionEnd::Lost(format!("malformed frame from master: {reason}"));
            }
        }
    };
    stop.store(true, Ordering::SeqCst);
    let _ = beat.join();
    end
}
