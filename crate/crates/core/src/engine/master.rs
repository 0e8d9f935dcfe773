//! Master side of distributed runs.
//!
//! One reader thread per worker connection turns frames into events on a
//! channel. A single scheduler loop owns every socket write, the task queue
//! and the output slots, so there is no shared mutable output state.
//! Scheduling is pull-based: a worker holds at most `in_flight` unanswered
//! tasks and receives a new one for each RESULT it returns.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::io::ErrorKind;
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use super::protocol::{read_frame, write_message, TaskMessage, TileResult, WireTile};
use super::{finish, load, EngineError, JobOutput, JobSpec, PhaseTiming, PipelineConfig, TileOutcome, TileProduct};
use crate::tiling::Tile;

#[derive(Clone, Debug)]
pub struct MasterOptions {
    /// Unanswered tasks allowed per worker.
    pub in_flight: usize,
    /// How long the master waits with no worker connected before failing.
    pub worker_wait: Duration,
    /// A worker silent for this long is dropped and its tasks re-queued.
    pub liveness_timeout: Duration,
    /// Dispatch attempts per chunk before its tiles are recorded as failed.
    pub max_attempts: u32,
}

impl Default for MasterOptions {
    fn default() -> Self {
        Self {
            in_flight: 2,
            worker_wait: Duration::from_secs(30),
            liveness_timeout: Duration::from_secs(10),
            max_attempts: 3,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MasterStats {
    pub workers_seen: usize,
    pub tasks_dispatched: usize,
    pub tasks_requeued: usize,
    /// Highest number of unanswered tasks any worker held at once.
    pub max_in_flight: usize,
    pub stale_results: usize,
    pub malformed_frames: usize,
}

pub struct Master {
    listener: TcpListener,
    addr: SocketAddr,
}

enum Event {
    Joined {
        conn: usize,
        worker_id: String,
        cores: u32,
        stream: TcpStream,
    },
    Message {
        conn: usize,
        msg: TaskMessage,
    },
    Malformed {
        conn: usize,
        reason: String,
    },
    Left {
        conn: usize,
        reason: String,
    },
}

struct WorkerConn {
    id: String,
    stream: TcpStream,
    tasks: Vec<u64>,
    last_seen: Instant,
}

impl Master {
    pub fn bind(addr: &str) -> Result<Self, EngineError> {
        let listener = TcpListener::bind(addr).map_err(|e| EngineError::io(format!("bind {addr}"), e))?;
        let addr = listener.local_addr().map_err(|e| EngineError::io("local address", e))?;
        Ok(Self { listener, addr })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Loads the job's inputs, distributes the tiles and reassembles the
    /// results. The reduce time covers dispatch through the last result plus
    /// stitching; the map time covers partitioning into tasks.
    pub fn run(&self, job: &JobSpec, opts: &MasterOptions) -> Result<JobOutput, EngineError> {
        job.validate()?;
        let start = Instant::now();
        let loaded = load(&job.inputs, job.tile_size, job.io_workers);
        let load_seconds = start.elapsed().as_secs_f64();

        let start = Instant::now();
        let tasks = partition(&loaded.tiles, job.chunk_size);
        let config = job.config.to_toml();
        let map_seconds = start.elapsed().as_secs_f64();

        let start = Instant::now();
        let (tiles, stats) = self.dispatch(&loaded.tiles, &tasks, &config, opts)?;
        let timing = PhaseTiming {
            load_seconds,
            map_seconds,
            reduce_seconds: start.elapsed().as_secs_f64(),
            workers: stats.workers_seen,
            ..PhaseTiming::default()
        };
        Ok(finish(loaded, tiles, timing))
    }

    /// Distributes already loaded tiles and returns outcomes in tile order.
    pub fn run_tiles(
        &self,
        tiles: &[Tile],
        config: &PipelineConfig,
        chunk_size: usize,
        opts: &MasterOptions,
    ) -> Result<(Vec<TileOutcome>, MasterStats), EngineError> {
        let tasks = partition(tiles, chunk_size.max(1));
        self.dispatch(tiles, &tasks, &config.to_toml(), opts)
    }

    fn dispatch(
        &self,
        tiles: &[Tile],
        chunks: &[std::ops::Range<usize>],
        config: &str,
        opts: &MasterOptions,
    ) -> Result<(Vec<TileOutcome>, MasterStats), EngineError> {
        let mut stats = MasterStats::default();
        if chunks.is_empty() {
            return Ok((Vec::new(), stats));
        }
        let (tx, rx) = mpsc::channel();
        let stop = Arc::new(AtomicBool::new(false));
        let listener = self.listener.try_clone().map_err(|e| EngineError::io("listener", e))?;
        listener
            .set_nonblocking(true)
            .map_err(|e| EngineError::io("listener", e))?;
        let acceptor = {
            let stop = stop.clone();
            thread::spawn(move || accept_loop(listener, tx, stop))
        };

        let result = Scheduler {
            tiles,
            chunks,
            config,
            opts,
            stats: &mut stats,
        }
        .run(&rx);

        stop.store(true, Ordering::SeqCst);
        let _ = acceptor.join();
        result.map(|outcomes| (outcomes, stats))
    }
}

fn partition(tiles: &[Tile], chunk_size: usize) -> Vec<std::ops::Range<usize>> {
    (0..tiles.len())
        .step_by(chunk_size)
        .map(|lo| lo..(lo + chunk_size).min(tiles.len()))
        .collect()
}

fn accept_loop(listener: TcpListener, tx: Sender<Event>, stop: Arc<AtomicBool>) {
    let mut next_conn = 0usize;
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                log::debug!("connection from {peer}");
                let _ = stream.set_nonblocking(false);
                let _ = stream.set_nodelay(true);
                let conn = next_conn;
                next_conn += 1;
                let tx = tx.clone();
                thread::spawn(move || read_loop(conn, stream, tx));
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(10)),
            Err(e) => {
                log::warn!("accept failed: {e}");
                thread::sleep(Duration::from_millis(50));
            }
        }
    }
}

fn read_loop(conn: usize, mut stream: TcpStream, tx: Sender<Event>) {
    let mut joined = false;
    loop {
        let payload = match read_frame(&mut stream) {
            Ok(Some(p)) => p,
            Ok(None) => {
                let _ = tx.send(Event::Left {
                    conn,
                    reason: "connection closed".into(),
                });
                return;
            }
            Err(e) => {
                let _ = tx.send(Event::Left {
                    conn,
                    reason: e.to_string(),
                });
                return;
            }
        };
        let event = match TaskMessage::decode(&payload) {
            Ok(TaskMessage::Hello { worker_id, cores }) if !joined => {
                let Ok(writer) = stream.try_clone() else { return };
                joined = true;
                Event::Joined {
                    conn,
                    worker_id,
                    cores,
                    stream: writer,
                }
            }
            Ok(msg) if joined => Event::Message { conn, msg },
            Ok(msg) => {
                // Nothing may precede HELLO; the scheduler does not know this
                // connection yet, so answer directly.
                let reason = format!("expected HELLO, got {}", msg.name());
                let _ = write_message(&mut stream, &TaskMessage::Error { task_id: 0, reason });
                continue;
            }
            Err(e) if joined => Event::Malformed {
                conn,
                reason: e.to_string(),
            },
            Err(e) => {
                let reason = e.to_string();
                let _ = write_message(&mut stream, &TaskMessage::Error { task_id: 0, reason });
                continue;
            }
        };
        if tx.send(event).is_err() {
            return;
        }
    }
}

struct Scheduler<'a> {
    tiles: &'a [Tile],
    chunks: &'a [std::ops::Range<usize>],
    config: &'a str,
    opts: &'a MasterOptions,
    stats: &'a mut MasterStats,
}

impl Scheduler<'_> {
    fn run(self, rx: &Receiver<Event>) -> Result<Vec<TileOutcome>, EngineError> {
        let Scheduler {
            tiles,
            chunks,
            config,
            opts,
            stats,
        } = self;
        let in_flight = opts.in_flight.max(1);
        let mut pending: VecDeque<usize> = (0..chunks.len()).collect();
        let mut attempts = vec![0u32; chunks.len()];
        let mut remaining = chunks.len();
        let mut slots: Vec<Option<Result<TileProduct, String>>> = vec![None; tiles.len()];
        // task id -> (chunk, conn)
        let mut tasks: HashMap<u64, (usize, usize)> = HashMap::new();
        let mut next_task = 1u64;
        let mut workers: BTreeMap<usize, WorkerConn> = BTreeMap::new();
        let mut idle_since = Some(Instant::now());

        let fail_chunk = |slots: &mut Vec<Option<Result<TileProduct, String>>>, chunk: usize, reason: &str| {
            for i in chunks[chunk].clone() {
                slots[i] = Some(Err(format!("tile {}: {reason}", tiles[i].file_stem())));
            }
        };

        // Drops a worker and puts its unanswered tasks back at the front of
        // the queue. Returns how many chunks ran out of attempts.
        let drop_worker = |conn: usize,
                           reason: &str,
                           workers: &mut BTreeMap<usize, WorkerConn>,
                           tasks: &mut HashMap<u64, (usize, usize)>,
                           pending: &mut VecDeque<usize>,
                           attempts: &mut Vec<u32>,
                           slots: &mut Vec<Option<Result<TileProduct, String>>>,
                           stats: &mut MasterStats|
         -> usize {
            let Some(w) = workers.remove(&conn) else { return 0 };
            let _ = w.stream.shutdown(Shutdown::Both);
            log::warn!("worker {} dropped: {reason}", w.id);
            let mut exhausted = 0;
            for t in w.tasks.iter().rev() {
                if let Some((chunk, _)) = tasks.remove(t) {
                    attempts[chunk] += 1;
                    if attempts[chunk] >= opts.max_attempts {
                        fail_chunk(slots, chunk, &format!("gave up after {} attempts: {reason}", attempts[chunk]));
                        exhausted += 1;
                    } else {
                        stats.tasks_requeued += 1;
                        pending.push_front(chunk);
                    }
                }
            }
            exhausted
        };

        while remaining > 0 {
            match rx.recv_timeout(Duration::from_millis(50)) {
                Ok(Event::Joined {
                    conn,
                    worker_id,
                    cores,
                    stream,
                }) => {
                    log::info!("worker {worker_id} joined with {cores} core(s)");
                    stats.workers_seen += 1;
                    workers.insert(
                        conn,
                        WorkerConn {
                            id: worker_id,
                            stream,
                            tasks: Vec::new(),
                            last_seen: Instant::now(),
                        },
                    );
                }
                Ok(Event::Message { conn, msg }) => {
                    let Some(w) = workers.get_mut(&conn) else { continue };
                    w.last_seen = Instant::now();
                    match msg {
                        TaskMessage::Heartbeat => {}
                        TaskMessage::Result { task_id, results } => {
                            let owned = tasks.get(&task_id).is_some_and(|&(_, c)| c == conn);
                            if !owned {
                                stats.stale_results += 1;
                                continue;
                            }
                            let chunk = tasks[&task_id].0;
                            let range = chunks[chunk].clone();
                            let indices: Vec<u64> = results.iter().map(TileResult::index).collect();
                            let expected: Vec<u64> = range.clone().map(|i| i as u64).collect();
                            if indices != expected {
                                stats.malformed_frames += 1;
                                let reason = format!("RESULT {task_id} carries tiles {indices:?}, expected {expected:?}");
                                let _ = write_message(&mut w.stream, &TaskMessage::Error { task_id, reason: reason.clone() });
                                tasks.remove(&task_id);
                                w.tasks.retain(|&t| t != task_id);
                                attempts[chunk] += 1;
                                if attempts[chunk] >= opts.max_attempts {
                                    fail_chunk(&mut slots, chunk, &reason);
                                    remaining -= 1;
                                } else {
                                    stats.tasks_requeued += 1;
                                    pending.push_front(chunk);
                                }
                                continue;
                            }
                            tasks.remove(&task_id);
                            w.tasks.retain(|&t| t != task_id);
                            for r in results {
                                let i = r.index() as usize;
                                slots[i] = Some(match r {
                                    TileResult::Ok {
                                        labels,
                                        mut filtered,
                                        affected_fraction,
                                        micros,
                                        ..
                                    } => {
                                        filtered.set_scene_id(&tiles[i].scene_id);
                                        Ok(TileProduct {
                                            labels,
                                            filtered,
                                            affected_fraction,
                                            micros,
                                        })
                                    }
                                    TileResult::Failed { reason, .. } => Err(reason),
                                });
                            }
                            remaining -= 1;
                        }
                        TaskMessage::Error { task_id, reason } => {
                            log::warn!("worker {} reported error on task {task_id}: {reason}", w.id);
                            if let Some(&(chunk, c)) = tasks.get(&task_id) {
                                if c == conn {
                                    tasks.remove(&task_id);
                                    w.tasks.retain(|&t| t != task_id);
                                    attempts[chunk] += 1;
                                    if attempts[chunk] >= opts.max_attempts {
                                        fail_chunk(&mut slots, chunk, &reason);
                                        remaining -= 1;
                                    } else {
                                        stats.tasks_requeued += 1;
                                        pending.push_front(chunk);
                                    }
                                }
                            }
                        }
                        other => {
                            stats.malformed_frames += 1;
                            let reason = format!("unexpected {} from worker", other.name());
                            let _ = write_message(&mut w.stream, &TaskMessage::Error { task_id: 0, reason });
                        }
                    }
                }
                Ok(Event::Malformed { conn, reason }) => {
                    stats.malformed_frames += 1;
                    if let Some(w) = workers.get_mut(&conn) {
                        log::warn!("malformed frame from {}: {reason}", w.id);
                        let _ = write_message(&mut w.stream, &TaskMessage::Error { task_id: 0, reason });
                    }
                }
                Ok(Event::Left { conn, reason }) => {
                    remaining -= drop_worker(
                        conn,
                        &reason,
                        &mut workers,
                        &mut tasks,
                        &mut pending,
                        &mut attempts,
                        &mut slots,
                        stats,
                    );
                }
                Err(RecvTimeoutError::Timeout) => {}
                Err(RecvTimeoutError::Disconnected) => unreachable!("acceptor holds a sender"),
            }

            let silent: Vec<usize> = workers
                .iter()
                .filter(|(_, w)| w.last_seen.elapsed() > opts.liveness_timeout)
                .map(|(&c, _)| c)
                .collect();
            for conn in silent {
                remaining -= drop_worker(
                    conn,
                    "heartbeat timeout",
                    &mut workers,
                    &mut tasks,
                    &mut pending,
                    &mut attempts,
                    &mut slots,
                    stats,
                );
            }

            // Top every worker up to the in-flight limit.
            let mut broken = Vec::new();
            for (&conn, w) in workers.iter_mut() {
                while w.tasks.len() < in_flight {
                    let Some(chunk) = pending.pop_front() else { break };
                    let task_id = next_task;
                    next_task += 1;
                    let msg = TaskMessage::Task {
                        task_id,
                        config: config.to_string(),
                        tiles: chunks[chunk]
                            .clone()
                            .map(|i| WireTile {
                                index: i as u64,
                                tile: tiles[i].clone(),
                            })
                            .collect(),
                    };
                    tasks.insert(task_id, (chunk, conn));
                    w.tasks.push(task_id);
                    stats.tasks_dispatched += 1;
                    stats.max_in_flight = stats.max_in_flight.max(w.tasks.len());
                    if let Err(e) = write_message(&mut w.stream, &msg) {
                        broken.push((conn, e.to_string()));
                        break;
                    }
                }
            }
            for (conn, reason) in broken {
                remaining -= drop_worker(
                    conn,
                    &reason,
                    &mut workers,
                    &mut tasks,
                    &mut pending,
                    &mut attempts,
                    &mut slots,
                    stats,
                );
            }

            if workers.is_empty() && remaining > 0 {
                let since = *idle_since.get_or_insert_with(Instant::now);
                if since.elapsed() > opts.worker_wait {
                    return Err(EngineError::NoWorkers(opts.worker_wait));
                }
            } else {
                idle_since = None;
            }
        }

        for w in workers.values_mut() {
            let _ = write_message(&mut w.stream, &TaskMessage::Shutdown);
            let _ = w.stream.shutdown(Shutdown::Both);
        }
        Ok(tiles
            .iter()
            .zip(slots)
            .enumerate()
            .map(|(i, (t, r))| TileOutcome::new(i, t, r.expect("every chunk resolved")))
            .collect())
    }
}
