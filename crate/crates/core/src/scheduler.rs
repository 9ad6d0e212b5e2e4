//! Static round-robin pipelining over several devices.
//!
//! Job `i` goes to device `i mod D`. Each device gets its own worker
//! thread, which keeps the device queue full (loading up to
//! `queue_capacity` jobs ahead) and retrieves results in FIFO order. Loads
//! on different devices overlap, so while one device is receiving its next
//! input the others are already computing.
//!
//! Results are reported in job order no matter which device finished
//! first.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use crossbeam_channel::unbounded;
use thiserror::Error;

use crate::device::{DeviceError, DeviceHandle};
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Debug)]
pub struct Job {
    pub index: usize,
    pub sample_id: String,
    pub input: Arc<Tensor>,
}

impl Job {
    pub fn new(index: usize, sample_id: impl Into<String>, input: impl Into<Arc<Tensor>>) -> Job {
        Job { index, sample_id: sample_id.into(), input: input.into() }
    }
}

/// Wraps inputs into jobs indexed `0..N` in iteration order.
pub fn jobs_from<I, S>(inputs: I) -> Vec<Job>
where
    I: IntoIterator<Item = (S, Arc<Tensor>)>,
    S: Into<String>,
{
    inputs.into_iter().enumerate().map(|(i, (id, t))| Job::new(i, id, t)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct JobResult {
    pub index: usize,
    pub sample_id: String,
    pub confidences: Vec<f32>,
    /// Position of the device in the handle list.
    pub device_ordinal: usize,
    /// When the load started, relative to the batch start.
    pub enqueued: Duration,
    /// When the result was retrieved, relative to the batch start.
    pub completed: Duration,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BatchResult {
    /// Ordered by job index.
    pub results: Vec<JobResult>,
    /// First load start to last result retrieval.
    pub wall_seconds: f64,
}

impl BatchResult {
    fn from_results(mut results: Vec<JobResult>) -> BatchResult {
        results.sort_by_key(|r| r.index);
        let first = results.iter().map(|r| r.enqueued).min();
        let last = results.iter().map(|r| r.completed).max();
        let wall_seconds = match (first, last) {
            (Some(a), Some(b)) => b.saturating_sub(a).as_secs_f64(),
            _ => 0.0,
        };
        BatchResult { results, wall_seconds }
    }

    pub fn len(&self) -> usize {
        self.results.len()
    }

    pub fn is_empty(&self) -> bool {
        self.results.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("no device handles")]
    NoDevices,
    #[error("job at position {position} has index {index}; indices must be 0..N in order")]
    NonDenseIndex { position: usize, index: usize },
    #[error("job {index}: input {found} does not match device {device} input {expected}")]
    ShapeMismatch { index: usize, device: usize, expected: Shape, found: Shape },
    #[error("job {index} on device {device}: {source}")]
    Device {
        index: usize,
        device: usize,
        #[source]
        source: DeviceError,
    },
    #[error("device handle {0} appears in more than one group")]
    SharedHandle(u64),
    #[error("device {device} returned job {found} while job {expected} was oldest")]
    OrderViolation { device: usize, expected: usize, found: u64 },
}

/// A failed batch together with every result completed before the abort.
#[derive(Debug, Error)]
#[error("batch aborted after {} of {total} jobs: {error}", partial.len())]
pub struct BatchError {
    #[source]
    pub error: ScheduleError,
    pub partial: Vec<JobResult>,
    pub total: usize,
}

impl BatchError {
    fn early(error: ScheduleError, total: usize) -> BatchError {
        BatchError { error, partial: Vec::new(), total }
    }

    /// Job index the failure is attributed to, if any.
    pub fn job_index(&self) -> Option<usize> {
        match &self.error {
            ScheduleError::ShapeMismatch { index, .. } | ScheduleError::Device { index, .. } => Some(*index),
            ScheduleError::OrderViolation { expected, .. } => Some(*expected),
            _ => None,
        }
    }
}

/// Runs `jobs` over `handles` and returns results in job order.
///
/// Fails fast: the first device error stops further loads, outstanding jobs
/// are drained, and the error carries whatever finished.
pub fn run_batch(handles: &[DeviceHandle], jobs: &[Job]) -> Result<BatchResult, BatchError> {
    let total = jobs.len();
    if handles.is_empty() {
        return Err(BatchError::early(ScheduleError::NoDevices, total));
    }
    for (position, job) in jobs.iter().enumerate() {
        if job.index != position {
            return Err(BatchError::early(ScheduleError::NonDenseIndex { position, index: job.index }, total));
        }
        let device = position % handles.len();
        let expected = handles[device].graph().input_shape();
        if job.input.shape() != expected {
            return Err(BatchError::early(
                ScheduleError::ShapeMismatch { index: position, device, expected, found: job.input.shape() },
                total,
            ));
        }
    }

    let devices = handles.len();
    let origin = Instant::now();
    let abort = AtomicBool::new(false);
    let failure: Mutex<Option<ScheduleError>> = Mutex::new(None);
    let (tx, rx) = unbounded::<JobResult>();

    let results = thread::scope(|s| {
        for (ordinal, handle) in handles.iter().enumerate() {
            let tx = tx.clone();
            let (abort, failure) = (&abort, &failure);
            let mine = jobs.iter().skip(ordinal).step_by(devices);
            s.spawn(move || {
                let fail = |e: ScheduleError| {
                    abort.store(true, Ordering::SeqCst);
                    failure.lock().unwrap().get_or_insert(e);
                };
                drive_device(ordinal, handle, mine, origin, abort, &tx, fail);
            });
        }
        drop(tx);
        let mut slots: Vec<Option<JobResult>> = vec![None; total];
        for r in rx {
            let i = r.index;
            slots[i] = Some(r);
        }
        slots.into_iter().flatten().collect::<Vec<_>>()
    });

    let batch = BatchResult::from_results(results);
    match failure.into_inner().unwrap() {
        None => Ok(batch),
        Some(error) => Err(BatchError { error, partial: batch.results, total }),
    }
}

fn drive_device<'a>(
    ordinal: usize,
    handle: &DeviceHandle,
    mut mine: impl Iterator<Item = &'a Job>,
    origin: Instant,
    abort: &AtomicBool,
    tx: &crossbeam_channel::Sender<JobResult>,
    fail: impl Fn(ScheduleError),
) {
    let capacity = handle.descriptor().queue_capacity;
    let mut pending: VecDeque<(&Job, Duration)> = VecDeque::with_capacity(capacity);
    let mut exhausted = false;
    loop {
        while !exhausted && pending.len() < capacity && !abort.load(Ordering::SeqCst) {
            let Some(job) = mine.next() else {
                exhausted = true;
                break;
            };
            let enqueued = origin.elapsed();
            if let Err(source) = handle.load_tensor(Arc::clone(&job.input), job.index as u64) {
                fail(ScheduleError::Device { index: job.index, device: ordinal, source });
                break;
            }
            pending.push_back((job, enqueued));
        }
        let Some((job, enqueued)) = pending.pop_front() else {
            return;
        };
        match handle.get_result() {
            Ok(out) if out.tag == job.index as u64 => {
                let r = JobResult {
                    index: job.index,
                    sample_id: job.sample_id.clone(),
                    confidences: out.confidences,
                    device_ordinal: ordinal,
                    enqueued,
                    completed: origin.elapsed(),
                };
                if tx.send(r).is_err() {
                    return;
                }
            }
            Ok(out) => fail(ScheduleError::OrderViolation { device: ordinal, expected: job.index, found: out.tag }),
            Err(source) => fail(ScheduleError::Device { index: job.index, device: ordinal, source }),
        }
    }
}

/// One independent source/target pairing for [`run_grouped`].
pub struct Group<'a> {
    pub handles: &'a [DeviceHandle],
    pub jobs: Vec<Job>,
}

impl<'a> Group<'a> {
    pub fn new(handles: &'a [DeviceHandle], jobs: Vec<Job>) -> Group<'a> {
        Group { handles, jobs }
    }
}

/// Runs several batches concurrently, one per group. A failure in one
/// group does not affect the others. Groups must not share handles.
pub fn run_grouped(groups: &[Group<'_>]) -> Result<Vec<Result<BatchResult, BatchError>>, ScheduleError> {
    let mut seen = std::collections::HashSet::new();
    for g in groups {
        for h in g.handles {
            if !seen.insert(h.id()) {
                return Err(ScheduleError::SharedHandle(h.id()));
            }
        }
    }
    Ok(thread::scope(|s| {
        let running: Vec<_> = groups.iter().map(|g| s.spawn(move || run_batch(g.handles, &g.jobs))).collect();
        running.into_iter().map(|t| t.join().expect("group thread panicked")).collect()
    }))
}
