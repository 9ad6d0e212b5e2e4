//! Simulated inference devices.
//!
//! A [`DeviceHandle`] owns one execution thread that drains a FIFO job
//! queue. [`DeviceHandle::load_tensor`] charges the simulated host-to-device
//! transfer on the caller's thread, enqueues the job and returns without
//! waiting for it to run. [`DeviceHandle::get_result`] blocks until the
//! oldest outstanding job has finished.
//!
//! At most `queue_capacity` jobs may be outstanding (loaded but not yet
//! retrieved); a load past that blocks until a result is taken.
//!
//! ```
//! use std::sync::Arc;
//! use vpuflow::device::{DeviceDescriptor, DeviceHandle};
//! use vpuflow::netgraph::{LayerKind, LayerSpec, NetworkGraph};
//! use vpuflow::tensor::{Shape, Tensor};
//!
//! let graph = NetworkGraph::new(
//!     Shape::new(1, 4, 1, 1),
//!     vec![],
//!     vec![LayerSpec::new("prob", &["input"], LayerKind::Softmax)],
//!     vec![],
//! )?;
//! let dev = DeviceHandle::open(DeviceDescriptor::synthetic(5.0), Arc::new(graph))?;
//! dev.load_tensor(Tensor::zeros(Shape::new(1, 4, 1, 1)), 7)?;
//! let out = dev.get_result()?;
//! assert_eq!(out.tag, 7);
//! assert_eq!(out.confidences, vec![0.25; 4]);
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use crossbeam_channel::{bounded, unbounded, Receiver, Sender};
use thiserror::Error;

use crate::infer::{self, InferError, LayerTiming, PrecisionMode};
use crate::netgraph::NetworkGraph;
use crate::tensor::Tensor;

/// Peak draw of one USB compute stick.
pub const VPU_STICK_TDP_WATTS: f32 = 2.5;
/// The VPU chip alone.
pub const VPU_CHIP_TDP_WATTS: f32 = 0.9;
/// Reference server CPU / GPU.
pub const HOST_TDP_WATTS: f32 = 80.0;
pub const DEFAULT_QUEUE_CAPACITY: usize = 2;

/// Opaque job tag echoed back by [`DeviceHandle::get_result`].
pub type Tag = u64;

#[derive(Debug, Error)]
pub enum DeviceError {
    #[error("device is closed")]
    DeviceClosed,
    #[error("no job in flight")]
    NoJobInFlight,
    #[error("input shape {found} does not match graph input {expected}")]
    ShapeMismatch { expected: crate::tensor::Shape, found: crate::tensor::Shape },
    #[error("invalid device descriptor: {0}")]
    InvalidDescriptor(String),
    #[error("job {tag} failed: {source}")]
    Inference { tag: Tag, source: InferError },
    #[error("could not start device thread: {0}")]
    Spawn(#[from] std::io::Error),
    #[error("device thread terminated unexpectedly")]
    WorkerLost,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DeviceKind {
    /// Binary32 reference on the host.
    HostFp32,
    /// Emulated accelerator: binary16 input and activations.
    SimVpuFp16,
    /// Sleeps a fixed service time and returns uniform confidences.
    SyntheticDelay,
}

impl DeviceKind {
    pub fn name(self) -> &'static str {
        match self {
            DeviceKind::HostFp32 => "host-fp32",
            DeviceKind::SimVpuFp16 => "sim-vpu-fp16",
            DeviceKind::SyntheticDelay => "synthetic",
        }
    }
}

impl fmt::Display for DeviceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DeviceKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "host-fp32" | "host" | "cpu" => Ok(DeviceKind::HostFp32),
            "sim-vpu-fp16" | "sim-vpu" | "vpu" => Ok(DeviceKind::SimVpuFp16),
            "synthetic" | "synthetic-delay" => Ok(DeviceKind::SyntheticDelay),
            other => Err(format!("unknown device kind `{other}` (expected host-fp32, sim-vpu-fp16 or synthetic)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bandwidth {
    Unlimited,
    BytesPerSec(u64),
}

impl Bandwidth {
    pub fn transfer_time(self, bytes: usize) -> Duration {
        match self {
            Bandwidth::Unlimited => Duration::ZERO,
            Bandwidth::BytesPerSec(rate) => Duration::from_secs_f64(bytes as f64 / rate as f64),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeviceDescriptor {
    pub kind: DeviceKind,
    pub tdp_watts: f32,
    pub bandwidth: Bandwidth,
    /// Only read by [`DeviceKind::SyntheticDelay`].
    pub service_ms: f32,
    pub queue_capacity: usize,
}

impl DeviceDescriptor {
    pub fn new(kind: DeviceKind) -> DeviceDescriptor {
        let tdp_watts = match kind {
            DeviceKind::HostFp32 => HOST_TDP_WATTS,
            DeviceKind::SimVpuFp16 | DeviceKind::SyntheticDelay => VPU_STICK_TDP_WATTS,
        };
        DeviceDescriptor {
            kind,
            tdp_watts,
            bandwidth: Bandwidth::Unlimited,
            service_ms: 0.0,
            queue_capacity: DEFAULT_QUEUE_CAPACITY,
        }
    }

    pub fn host() -> DeviceDescriptor {
        DeviceDescriptor::new(DeviceKind::HostFp32)
    }

    pub fn sim_vpu() -> DeviceDescriptor {
        DeviceDescriptor::new(DeviceKind::SimVpuFp16)
    }

    pub fn synthetic(service_ms: f32) -> DeviceDescriptor {
        DeviceDescriptor { service_ms, ..DeviceDescriptor::new(DeviceKind::SyntheticDelay) }
    }

    pub fn with_tdp(mut self, watts: f32) -> Self {
        self.tdp_watts = watts;
        self
    }

    pub fn with_bandwidth(mut self, bandwidth: Bandwidth) -> Self {
        self.bandwidth = bandwidth;
        self
    }

    pub fn with_queue_capacity(mut self, capacity: usize) -> Self {
        self.queue_capacity = capacity;
        self
    }

    pub fn validate(&self) -> Result<(), DeviceError> {
        let bad = |m: String| Err(DeviceError::InvalidDescriptor(m));
        if !(self.tdp_watts.is_finite() && self.tdp_watts > 0.0) {
            return bad(format!("tdp_watts must be positive, got {}", self.tdp_watts));
        }
        if self.queue_capacity == 0 {
            return bad("queue_capacity must be at least 1".into());
        }
        if let Bandwidth::BytesPerSec(0) = self.bandwidth {
            return bad("bandwidth must be positive".into());
        }
        if self.kind == DeviceKind::SyntheticDelay && !(self.service_ms.is_finite() && self.service_ms >= 0.0) {
            return bad(format!("service_ms must be non-negative, got {}", self.service_ms));
        }
        Ok(())
    }

    fn service_time(&self) -> Duration {
        Duration::from_secs_f64(self.service_ms as f64 / 1000.0)
    }
}

/// What [`DeviceHandle::get_result`] hands back.
#[derive(Clone, Debug, PartialEq)]
pub struct DeviceOutput {
    pub tag: Tag,
    pub confidences: Vec<f32>,
    pub timings: Vec<LayerTiming>,
}

struct Job {
    tag: Tag,
    input: Arc<Tensor>,
}

struct Completion {
    tag: Tag,
    result: Result<infer::Inference, InferError>,
}

/// Union of the intervals during which the device had outstanding work.
#[derive(Default)]
struct BusyClock {
    active: usize,
    since: Option<Instant>,
    total: Duration,
}

impl BusyClock {
    fn begin(&mut self, now: Instant) {
        if self.active == 0 {
            self.since = Some(now);
        }
        self.active += 1;
    }

    fn end(&mut self, now: Instant) {
        self.active -= 1;
        if self.active == 0 {
            if let Some(s) = self.since.take() {
                self.total += now.saturating_duration_since(s);
            }
        }
    }

    fn elapsed(&self, now: Instant) -> Duration {
        self.total + self.since.map_or(Duration::ZERO, |s| now.saturating_duration_since(s))
    }
}

static NEXT_HANDLE_ID: AtomicU64 = AtomicU64::new(1);

/// A live session on one simulated device.
///
/// Methods take `&self` so a handle can be lent to a worker thread, but a
/// handle is meant to be driven by one client at a time.
pub struct DeviceHandle {
    id: u64,
    desc: DeviceDescriptor,
    graph: Arc<NetworkGraph>,
    jobs: Mutex<Option<Sender<Job>>>,
    results: Receiver<Completion>,
    slot_acquire: Sender<()>,
    slot_release: Receiver<()>,
    in_flight: AtomicUsize,
    loaded: AtomicU64,
    closed: AtomicBool,
    busy: Arc<Mutex<BusyClock>>,
    worker: Mutex<Option<JoinHandle<()>>>,
}

impl fmt::Debug for DeviceHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DeviceHandle")
            .field("id", &self.id)
            .field("desc", &self.desc)
            .field("in_flight", &self.in_flight())
            .field("closed", &self.is_closed())
            .finish()
    }
}

impl DeviceHandle {
    /// Installs `graph` on a new device and starts its execution thread.
    pub fn open(desc: DeviceDescriptor, graph: Arc<NetworkGraph>) -> Result<DeviceHandle, DeviceError> {
        desc.validate()?;
        let id = NEXT_HANDLE_ID.fetch_add(1, Ordering::Relaxed);
        let (job_tx, job_rx) = unbounded::<Job>();
        let (res_tx, res_rx) = unbounded::<Completion>();
        let (slot_acquire, slot_release) = bounded::<()>(desc.queue_capacity);
        let busy = Arc::new(Mutex::new(BusyClock::default()));

        let worker = {
            let graph = Arc::clone(&graph);
            let busy = Arc::clone(&busy);
            thread::Builder::new()
                .name(format!("device-{id}-{}", desc.kind))
                .spawn(move || execute_jobs(desc, &graph, job_rx, res_tx, &busy))?
        };

        Ok(DeviceHandle {
            id,
            desc,
            graph,
            jobs: Mutex::new(Some(job_tx)),
            results: res_rx,
            slot_acquire,
            slot_release,
            in_flight: AtomicUsize::new(0),
            loaded: AtomicU64::new(0),
            closed: AtomicBool::new(false),
            busy,
            worker: Mutex::new(Some(worker)),
        })
    }

    /// Process-unique handle id.
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn descriptor(&self) -> &DeviceDescriptor {
        &self.desc
    }

    pub fn graph(&self) -> &Arc<NetworkGraph> {
        &self.graph
    }

    /// Jobs loaded and not yet retrieved.
    pub fn in_flight(&self) -> usize {
        self.in_flight.load(Ordering::SeqCst)
    }

    /// Total jobs ever loaded.
    pub fn jobs_loaded(&self) -> u64 {
        self.loaded.load(Ordering::SeqCst)
    }

    pub fn is_closed(&self) -> bool {
        self.closed.load(Ordering::SeqCst)
    }

    /// Transfers `input` and schedules it. Returns once the simulated
    /// transfer is done; blocks first if the queue is full.
    pub fn load_tensor(&self, input: impl Into<Arc<Tensor>>, tag: Tag) -> Result<(), DeviceError> {
        let input = input.into();
        if self.is_closed() {
            return Err(DeviceError::DeviceClosed);
        }
        let expected = self.graph.input_shape();
        if input.shape() != expected {
            return Err(DeviceError::ShapeMismatch { expected, found: input.shape() });
        }
        self.slot_acquire.send(()).map_err(|_| DeviceError::WorkerLost)?;

        self.busy.lock().unwrap().begin(Instant::now());
        let transfer = self.desc.bandwidth.transfer_time(input.byte_len());
        if !transfer.is_zero() {
            sleep_until(Instant::now() + transfer);
        }

        let guard = self.jobs.lock().unwrap();
        let Some(jobs) = guard.as_ref() else {
            drop(guard);
            self.busy.lock().unwrap().end(Instant::now());
            let _ = self.slot_release.try_recv();
            return Err(DeviceError::DeviceClosed);
        };
        self.in_flight.fetch_add(1, Ordering::SeqCst);
        self.loaded.fetch_add(1, Ordering::SeqCst);
        if jobs.send(Job { tag, input }).is_err() {
            self.in_flight.fetch_sub(1, Ordering::SeqCst);
            return Err(DeviceError::WorkerLost);
        }
        Ok(())
    }

    /// Blocks until the oldest outstanding job completes and returns it.
    pub fn get_result(&self) -> Result<DeviceOutput, DeviceError> {
        if self.in_flight() == 0 {
            return Err(if self.is_closed() { DeviceError::DeviceClosed } else { DeviceError::NoJobInFlight });
        }
        let done = self.results.recv().map_err(|_| DeviceError::WorkerLost)?;
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        let _ = self.slot_release.try_recv();
        match done.result {
            Ok(r) => Ok(DeviceOutput { tag: done.tag, confidences: r.confidences, timings: r.timings }),
            Err(source) => Err(DeviceError::Inference { tag: done.tag, source }),
        }
    }

    /// Rejects further loads. Outstanding jobs still run and stay
    /// retrievable. Idempotent.
    pub fn close(&self) {
        self.closed.store(true, Ordering::SeqCst);
        self.jobs.lock().unwrap().take();
    }

    /// Time during which this device had outstanding work.
    pub fn busy_time(&self) -> Duration {
        self.busy.lock().unwrap().elapsed(Instant::now())
    }

    /// `tdp_watts × busy_time`, in joules.
    pub fn energy_joules(&self) -> f64 {
        self.desc.tdp_watts as f64 * self.busy_time().as_secs_f64()
    }
}

impl Drop for DeviceHandle {
    fn drop(&mut self) {
        self.close();
        if let Some(w) = self.worker.lock().unwrap().take() {
            let _ = w.join();
        }
    }
}

/// Opens a device; see [`DeviceHandle::open`].
pub fn open_device(desc: DeviceDescriptor, graph: Arc<NetworkGraph>) -> Result<DeviceHandle, DeviceError> {
    DeviceHandle::open(desc, graph)
}

/// Summed energy proxy of several handles.
pub fn fleet_energy_joules(handles: &[DeviceHandle]) -> f64 {
    handles.iter().map(DeviceHandle::energy_joules).sum()
}

/// Summed TDP of several handles.
pub fn fleet_tdp_watts(handles: &[DeviceHandle]) -> f32 {
    handles.iter().map(|h| h.desc.tdp_watts).sum()
}

fn execute_jobs(
    desc: DeviceDescriptor,
    graph: &NetworkGraph,
    jobs: Receiver<Job>,
    results: Sender<Completion>,
    busy: &Mutex<BusyClock>,
) {
    let out_len = graph.output_shape().len();
    for job in jobs {
        let start = Instant::now();
        let result = match desc.kind {
            DeviceKind::HostFp32 => infer::forward(graph, &job.input, PrecisionMode::Fp32),
            DeviceKind::SimVpuFp16 => infer::forward(graph, &job.input, PrecisionMode::Fp16Layer),
            DeviceKind::SyntheticDelay => {
                sleep_until(start + desc.service_time());
                Ok(infer::Inference { confidences: vec![1.0 / out_len as f32; out_len], timings: Vec::new() })
            }
        };
        busy.lock().unwrap().end(Instant::now());
        if results.send(Completion { tag: job.tag, result }).is_err() {
            break;
        }
    }
}

fn sleep_until(deadline: Instant) {
    loop {
        let now = Instant::now();
        if now >= deadline {
            return;
        }
        thread::sleep(deadline - now);
    }
}
