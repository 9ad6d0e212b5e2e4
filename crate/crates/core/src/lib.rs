//! Offloading convolutional-network inference to a fleet of low-power
//! accelerators, simulated.
//!
//! - [`half16`]: binary16 conversion used to emulate the accelerator's
//!   native half precision.
//! - [`tensor`]: NCHW tensors plus the `NTSR` tensor and label file formats.
//! - [`netgraph`]: network manifests, weight blobs and shape inference.
//! - [`infer`]: the forward pass in binary32 or emulated binary16.
//! - [`device`]: device handles with a non-blocking load and a blocking,
//!   FIFO result retrieval.
//! - [`scheduler`]: one worker per device, round-robin assignment, results
//!   returned in submission order.
//! - [`metrics`]: throughput, images per watt, top-1 error, confidence
//!   difference, scaling and projection.
//!
//! The guide in `book/` walks through each of these; its code listings are
//! compiled and run as doctests.

pub mod device;
pub mod half16;
pub mod infer;
pub mod metrics;
pub mod netgraph;
pub mod scheduler;
pub mod tensor;

pub use device::{Bandwidth, DeviceDescriptor, DeviceError, DeviceHandle, DeviceKind, DeviceOutput};
pub use half16::Half;
pub use infer::{forward, Inference, InferError, LayerTiming, PrecisionMode};
pub use metrics::MetricsReport;
pub use netgraph::{load_manifest, GraphError, LayerKind, LayerSpec, NetworkGraph};
pub use scheduler::{run_batch, run_grouped, BatchError, BatchResult, Group, Job, JobResult, ScheduleError};
pub use tensor::{Shape, Tensor};

// Book chapters are compiled as doctests so their listings stay current.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/half-precision.md")]
    mod half_precision {}
    #[doc = include_str!("../../../book/src/tensors.md")]
    mod tensors {}
    #[doc = include_str!("../../../book/src/manifests.md")]
    mod manifests {}
    #[doc = include_str!("../../../book/src/inference.md")]
    mod inference {}
    #[doc = include_str!("../../../book/src/devices.md")]
    mod devices {}
    #[doc = include_str!("../../../book/src/scheduling.md")]
    mod scheduling {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
}
