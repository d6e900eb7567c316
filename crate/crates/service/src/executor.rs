//! Single-threaded command executor. All mutations funnel through one
//! channel into the thread that owns the [`Controller`]; motion commands
//! queue behind the plan currently executing and are applied one tick at a
//! time. Snapshots are published on a watch channel after every change.

use std::collections::VecDeque;
use std::sync::mpsc::{self, RecvTimeoutError, TryRecvError};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use coilboard_core::grid::CoilGrid;
use tokio::sync::{oneshot, watch};

use crate::controller::{Controller, Execution, PlanSummary, Snapshot};
use crate::error::ServiceError;

/// Runs against the controller and returns the reply to deliver once the
/// resulting snapshot has been published.
type Task = Box<dyn FnOnce(&mut Controller) -> Box<dyn FnOnce() + Send> + Send>;
type Prepare = Box<dyn FnOnce(&mut Controller) -> Result<Execution, ServiceError> + Send>;
type Reply<T> = oneshot::Sender<Result<T, ServiceError>>;

enum Job {
    Now(Task),
    Motion { prepare: Prepare, reply: Reply<PlanSummary>, wait: bool },
    Shutdown(Reply<()>),
}

#[derive(Debug, Clone, Copy)]
pub struct ExecutorConfig {
    /// Wall-clock pause after each applied tick; zero runs plans as fast as
    /// the simulator allows.
    pub tick_pause: Duration,
    /// When set, hold coils are re-scanned at this interval while idle.
    pub idle_interval: Option<Duration>,
}

impl Default for ExecutorConfig {
    fn default() -> Self {
        Self { tick_pause: Duration::ZERO, idle_interval: None }
    }
}

/// Cloneable handle to the executor thread.
#[derive(Clone)]
pub struct ServiceHandle {
    tx: mpsc::Sender<Job>,
    snapshots: watch::Receiver<Arc<Snapshot>>,
    closing: watch::Receiver<bool>,
    grid: Arc<CoilGrid>,
}

struct Running {
    exec: Execution,
    reply: Option<Reply<PlanSummary>>,
}

struct Worker {
    ctl: Controller,
    config: ExecutorConfig,
    rx: mpsc::Receiver<Job>,
    publish: watch::Sender<Arc<Snapshot>>,
    closing: watch::Sender<bool>,
    pending: VecDeque<(Prepare, Reply<PlanSummary>, bool)>,
    current: Option<Running>,
}

impl Worker {
    fn publish(&self) {
        let queued = self.pending.len();
        self.publish.send_replace(Arc::new(self.ctl.snapshot(queued)));
    }

    /// Returns false once the worker should stop.
    fn handle(&mut self, job: Job) -> bool {
        match job {
            Job::Now(task) => {
                let deliver = task(&mut self.ctl);
                self.publish();
                deliver();
                true
            }
            Job::Motion { prepare, reply, wait } => {
                self.pending.push_back((prepare, reply, wait));
                true
            }
            Job::Shutdown(reply) => {
                let _ = reply.send(self.ctl.flush());
                false
            }
        }
    }

    /// Applies one tick of the running plan, or starts the next queued one.
    /// Replies go out after the snapshot reflecting them is published.
    fn advance(&mut self) {
        let mut done: Option<(Reply<PlanSummary>, Result<PlanSummary, ServiceError>)> = None;
        if let Some(run) = self.current.as_mut() {
            let result = self.ctl.step_execution(&mut run.exec);
            if result.is_err() {
                self.ctl.abort_execution();
            }
            if !matches!(result, Ok(false)) {
                let run = self.current.take().unwrap();
                if let Some(reply) = run.reply {
                    done = Some((reply, result.map(|_| run.exec.summary)));
                }
            }
        } else if let Some((prepare, reply, wait)) = self.pending.pop_front() {
            match prepare(&mut self.ctl) {
                Ok(exec) if exec.is_done() => done = Some((reply, self.ctl.execute(exec))),
                Ok(exec) if wait => self.current = Some(Running { exec, reply: Some(reply) }),
                Ok(exec) => {
                    done = Some((reply, Ok(exec.summary.clone())));
                    self.current = Some(Running { exec, reply: None });
                }
                Err(e) => done = Some((reply, Err(e))),
            }
        } else {
            return;
        }
        self.publish();
        if let Some((reply, result)) = done {
            let _ = reply.send(result);
        }
    }

    fn run(mut self) {
        self.publish();
        let mut last_idle = Instant::now();
        let mut connected = true;
        loop {
            let busy = self.current.is_some() || !self.pending.is_empty();
            let job = if busy {
                if self.config.tick_pause.is_zero() {
                    match self.rx.try_recv() {
                        Ok(j) => Some(j),
                        Err(TryRecvError::Empty) => None,
                        Err(TryRecvError::Disconnected) => {
                            connected = false;
                            None
                        }
                    }
                } else {
                    match self.rx.recv_timeout(self.config.tick_pause) {
                        Ok(j) => Some(j),
                        Err(RecvTimeoutError::Timeout) => None,
                        Err(RecvTimeoutError::Disconnected) => {
                            connected = false;
                            None
                        }
                    }
                }
            } else if !connected {
                break;
            } else if let Some(every) = self.config.idle_interval {
                let wait = every.saturating_sub(last_idle.elapsed());
                match self.rx.recv_timeout(wait) {
                    Ok(j) => Some(j),
                    Err(RecvTimeoutError::Timeout) => None,
                    Err(RecvTimeoutError::Disconnected) => break,
                }
            } else {
                match self.rx.recv() {
                    Ok(j) => Some(j),
                    Err(_) => break,
                }
            };
            if let Some(job) = job {
                if !self.handle(job) {
                    break;
                }
                continue;
            }
            if busy {
                self.advance();
            } else if let Some(every) = self.config.idle_interval {
                if last_idle.elapsed() >= every {
                    last_idle = Instant::now();
                    if self.ctl.idle_pass().is_ok() {
                        self.publish();
                    }
                }
            }
        }
        for (_, reply, _) in self.pending.drain(..) {
            let _ = reply.send(Err(ServiceError::Unavailable));
        }
        if let Some(Running { reply: Some(reply), .. }) = self.current.take() {
            let _ = reply.send(Err(ServiceError::Unavailable));
        }
        let _ = self.ctl.flush();
        self.closing.send_replace(true);
    }
}

impl ServiceHandle {
    pub fn spawn(ctl: Controller, config: ExecutorConfig) -> Self {
        let grid = ctl.grid().clone();
        let (tx, rx) = mpsc::channel();
        let (publish, snapshots) = watch::channel(Arc::new(ctl.snapshot(0)));
        let (closing_tx, closing) = watch::channel(false);
        let worker = Worker { ctl, config, rx, publish, closing: closing_tx, pending: VecDeque::new(), current: None };
        thread::Builder::new().name("coil-executor".into()).spawn(move || worker.run()).expect("spawn executor");
        Self { tx, snapshots, closing, grid }
    }

    pub fn grid(&self) -> &Arc<CoilGrid> {
        &self.grid
    }

    /// Runs `f` on the executor thread between ticks.
    pub async fn call<T, F>(&self, f: F) -> Result<T, ServiceError>
    where
        T: Send + 'static,
        F: FnOnce(&mut Controller) -> Result<T, ServiceError> + Send + 'static,
    {
        let (reply, rx) = oneshot::channel();
        let task: Task = Box::new(move |ctl| {
            let result = f(ctl);
            Box::new(move || {
                let _ = reply.send(result);
            })
        });
        self.tx.send(Job::Now(task)).map_err(|_| ServiceError::Unavailable)?;
        rx.await.map_err(|_| ServiceError::Unavailable)?
    }

    /// Queues a motion command. Replies once planned, or once executed when
    /// `wait` is set.
    pub async fn motion<F>(&self, prepare: F, wait: bool) -> Result<PlanSummary, ServiceError>
    where
        F: FnOnce(&mut Controller) -> Result<Execution, ServiceError> + Send + 'static,
    {
        let (reply, rx) = oneshot::channel();
        self.tx.send(Job::Motion { prepare: Box::new(prepare), reply, wait }).map_err(|_| ServiceError::Unavailable)?;
        rx.await.map_err(|_| ServiceError::Unavailable)?
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshots.borrow().clone()
    }

    pub fn subscribe(&self) -> watch::Receiver<Arc<Snapshot>> {
        self.snapshots.clone()
    }

    /// Resolves once the executor has stopped.
    pub fn closing(&self) -> watch::Receiver<bool> {
        self.closing.clone()
    }

    /// Flushes the content store and stops the executor.
    pub async fn shutdown(&self) -> Result<(), ServiceError> {
        let (reply, rx) = oneshot::channel();
        self.tx.send(Job::Shutdown(reply)).map_err(|_| ServiceError::Unavailable)?;
        rx.await.map_err(|_| ServiceError::Unavailable)?
    }
}
