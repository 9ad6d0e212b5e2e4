//! Throughput, energy efficiency and accuracy metrics.

use thiserror::Error;

use crate::infer::argmax;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("wall time must be positive, got {0} s")]
    ZeroDuration(f64),
    #[error("TDP must be positive, got {0} W")]
    NonPositiveTdp(f32),
    #[error("{left} predictions but {right} labels")]
    LengthMismatch { left: usize, right: usize },
    #[error("sample {0} has no confidences")]
    EmptyPrediction(usize),
    #[error("no sample is classified correctly by both sides")]
    NoSurvivingSamples,
    #[error("scaling baseline must be positive, got {0}")]
    NonPositiveBaseline(f32),
    #[error("all measurements share one device count; no line can be fitted")]
    DegenerateFit,
    #[error("projection needs at least one measurement")]
    NoMeasurements,
    #[error("target count {target} must exceed the largest measured count {max}")]
    TargetNotBeyondMeasured { target: usize, max: usize },
    #[error("standard deviation of an empty sample")]
    EmptyInput,
}

/// Images per second.
pub fn throughput(n_images: usize, wall_seconds: f64) -> Result<f32, MetricsError> {
    if wall_seconds.is_nan() || wall_seconds <= 0.0 {
        return Err(MetricsError::ZeroDuration(wall_seconds));
    }
    Ok((n_images as f64 / wall_seconds) as f32)
}

/// Images per second per watt of summed TDP.
pub fn throughput_per_watt(images_per_second: f32, tdp_watts: f32) -> Result<f32, MetricsError> {
    if tdp_watts.is_nan() || tdp_watts <= 0.0 {
        return Err(MetricsError::NonPositiveTdp(tdp_watts));
    }
    Ok(images_per_second / tdp_watts)
}

/// Fraction of samples whose top confidence is not at the label. Labels
/// outside the confidence vector always count as misses.
pub fn top1_error<P: AsRef<[f32]>>(predictions: &[P], labels: &[usize]) -> Result<f32, MetricsError> {
    if predictions.len() != labels.len() {
        return Err(MetricsError::LengthMismatch { left: predictions.len(), right: labels.len() });
    }
    if predictions.is_empty() {
        return Ok(0.0);
    }
    let mut misses = 0usize;
    for (i, (p, &label)) in predictions.iter().zip(labels).enumerate() {
        if !is_top1(p.as_ref(), label).ok_or(MetricsError::EmptyPrediction(i))? {
            misses += 1;
        }
    }
    Ok((misses as f64 / labels.len() as f64) as f32)
}

/// `None` for an empty confidence vector.
fn is_top1(confidences: &[f32], label: usize) -> Option<bool> {
    if confidences.is_empty() {
        return None;
    }
    Some(argmax(confidences) == Some(label))
}

/// Mean `|ref[label] - test[label]|` over samples that both sides classify
/// correctly.
pub fn confidence_diff<P: AsRef<[f32]>>(reference: &[P], test: &[P], labels: &[usize]) -> Result<f32, MetricsError> {
    if reference.len() != test.len() {
        return Err(MetricsError::LengthMismatch { left: reference.len(), right: test.len() });
    }
    if reference.len() != labels.len() {
        return Err(MetricsError::LengthMismatch { left: reference.len(), right: labels.len() });
    }
    let mut sum = 0.0f64;
    let mut kept = 0usize;
    for (i, ((r, t), &label)) in reference.iter().zip(test).zip(labels).enumerate() {
        let (r, t) = (r.as_ref(), t.as_ref());
        let ok_r = is_top1(r, label).ok_or(MetricsError::EmptyPrediction(i))?;
        let ok_t = is_top1(t, label).ok_or(MetricsError::EmptyPrediction(i))?;
        if ok_r && ok_t {
            sum += (r[label] as f64 - t[label] as f64).abs();
            kept += 1;
        }
    }
    if kept == 0 {
        return Err(MetricsError::NoSurvivingSamples);
    }
    Ok((sum / kept as f64) as f32)
}

/// Divides each throughput by the single-device baseline.
pub fn normalize_scaling(measurements: &[(usize, f32)], baseline: f32) -> Result<Vec<(usize, f32)>, MetricsError> {
    if baseline.is_nan() || baseline <= 0.0 {
        return Err(MetricsError::NonPositiveBaseline(baseline));
    }
    Ok(measurements.iter().map(|&(d, r)| (d, r / baseline)).collect())
}

/// Least-squares line through `(count, img/s)` evaluated at `target`.
///
/// A single measurement is extrapolated through the origin.
pub fn project_linear(measured: &[(usize, f32)], target: usize) -> Result<f32, MetricsError> {
    let max = measured.iter().map(|m| m.0).max().ok_or(MetricsError::NoMeasurements)?;
    if target <= max {
        return Err(MetricsError::TargetNotBeyondMeasured { target, max });
    }
    if let [(count, rate)] = measured {
        if *count == 0 {
            return Err(MetricsError::DegenerateFit);
        }
        return Ok((*rate as f64 / *count as f64 * target as f64) as f32);
    }
    let n = measured.len() as f64;
    let mean_x = measured.iter().map(|m| m.0 as f64).sum::<f64>() / n;
    let mean_y = measured.iter().map(|m| m.1 as f64).sum::<f64>() / n;
    let sxx: f64 = measured.iter().map(|m| (m.0 as f64 - mean_x).powi(2)).sum();
    if sxx == 0.0 {
        return Err(MetricsError::DegenerateFit);
    }
    let sxy: f64 = measured.iter().map(|m| (m.0 as f64 - mean_x) * (m.1 as f64 - mean_y)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    Ok((slope * target as f64 + intercept) as f32)
}

/// Population standard deviation (divides by N).
pub fn stddev(samples: &[f32]) -> Result<f32, MetricsError> {
    Ok(mean_and_variance(samples)?.1.sqrt() as f32)
}

pub fn mean(samples: &[f32]) -> Result<f32, MetricsError> {
    Ok(mean_and_variance(samples)?.0 as f32)
}

fn mean_and_variance(samples: &[f32]) -> Result<(f64, f64), MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let n = samples.len() as f64;
    let mean = samples.iter().map(|&x| x as f64).sum::<f64>() / n;
    let var = samples.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, var))
}

/// One measured configuration.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MetricsReport {
    pub images_per_second: f32,
    pub images_per_watt: f32,
    pub total_tdp_watts: f32,
    pub top1_error: Option<f32>,
    pub mean_abs_confidence_diff: Option<f32>,
    pub scaling_factor: Option<f32>,
    pub images_per_second_stddev: Option<f32>,
    pub images_per_watt_stddev: Option<f32>,
    pub top1_error_stddev: Option<f32>,
    pub mean_abs_confidence_diff_stddev: Option<f32>,
    pub scaling_factor_stddev: Option<f32>,
}

impl MetricsReport {
    pub fn new(n_images: usize, wall_seconds: f64, total_tdp_watts: f32) -> Result<MetricsReport, MetricsError> {
        let images_per_second = throughput(n_images, wall_seconds)?;
        Ok(MetricsReport {
            images_per_second,
            images_per_watt: throughput_per_watt(images_per_second, total_tdp_watts)?,
            total_tdp_watts,
            ..MetricsReport::default()
        })
    }
}
