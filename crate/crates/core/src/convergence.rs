//! Windowed-sinc smoothing of the raw stress sequence and the termination
//! test built on it.
//!
//! The sampled stress is noisy because the random neighbor halves change
//! every iteration. It is low-pass filtered over the last `m` samples and
//! the run stops once consecutive filtered values agree to a relative
//! tolerance. The filter starts short (`base_filter_length`) and grows by
//! `length_step` whenever a full extra step of samples has been seen without
//! convergence, up to `max_filter_length`.

use crate::error::{GlimmerError, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceConfig<T> {
    pub base_filter_length: usize,
    pub max_filter_length: usize,
    pub length_step: usize,
    /// Normalized cutoff frequency (cycles per sample), in `(0, 0.5)`.
    pub cutoff: f64,
    pub rel_tolerance: T,
}

impl<T: Scalar> Default for ConvergenceConfig<T> {
    fn default() -> Self {
        Self {
            base_filter_length: 10,
            max_filter_length: 50,
            length_step: 10,
            cutoff: 0.05,
            rel_tolerance: T::of(1e-3),
        }
    }
}

impl<T: Scalar> ConvergenceConfig<T> {
    /// Fixed-length filter, no growth.
    pub fn fixed(length: usize) -> Self {
        Self {
            base_filter_length: length,
            max_filter_length: length,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_filter_length < 2 {
            return Err(GlimmerError::InvalidConfig("filter length must be >= 2".into()));
        }
        if self.base_filter_length > self.max_filter_length {
            return Err(GlimmerError::InvalidConfig(
                "base filter length exceeds the maximum".into(),
            ));
        }
        let span = self.max_filter_length - self.base_filter_length;
        if span > 0 && (self.length_step == 0 || !span.is_multiple_of(self.length_step)) {
            return Err(GlimmerError::InvalidConfig(format!(
                "length step {} does not divide {span}",
                self.length_step
            )));
        }
        if !(self.cutoff > 0.0 && self.cutoff < 0.5) {
            return Err(GlimmerError::InvalidConfig("cutoff must lie in (0, 0.5)".into()));
        }
        if !(self.rel_tolerance > T::zero()) {
            return Err(GlimmerError::InvalidConfig("tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Low-pass FIR coefficients: `sinc(2 fc (i - (L-1)/2))` under a Hamming
/// window, scaled to unit DC gain.
pub fn sinc_kernel<T: Scalar>(length: usize, cutoff: f64) -> Result<Vec<T>> {
    if length < 2 {
        return Err(GlimmerError::InvalidConfig("kernel length must be >= 2".into()));
    }
    if !(cutoff > 0.0 && cutoff < 0.5) {
        return Err(GlimmerError::InvalidConfig("cutoff must lie in (0, 0.5)".into()));
    }
    let center = (length - 1) as f64 / 2.0;
    let raw: Vec<f64> = (0..length)
        .map(|i| {
            let x = 2.0 * cutoff * (i as f64 - center);
            let sinc = if x == 0.0 {
                1.0
            } else {
                (std::f64::consts::PI * x).sin() / (std::f64::consts::PI * x)
            };
            let window = 0.54
                - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (length - 1) as f64).cos();
            sinc * window
        })
        .collect();
    let sum: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|c| T::of(c / sum)).collect())
}

/// Raw per-iteration stress samples plus what the filter made of them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StressTrace<T> {
    pub raw: Vec<T>,
    /// Filtered value after each sample; `None` until a full window fits.
    pub smoothed: Vec<Option<T>>,
    /// Filter length in effect when each sample was checked.
    pub filter_lengths: Vec<usize>,
}

impl<T: Scalar> StressTrace<T> {
    pub fn new() -> Self {
        Self {
            raw: Vec::new(),
            smoothed: Vec::new(),
            filter_lengths: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn push(&mut self, sample: T) {
        debug_assert!(sample >= T::zero() || sample.is_nan());
        self.raw.push(sample);
    }

    pub fn last_smoothed(&self) -> Option<T> {
        self.smoothed.last().copied().flatten()
    }
}

/// Filter output over the most recent `filter_length` samples, `None` when
/// fewer samples exist.
pub fn smoothed_stress<T: Scalar>(raw: &[T], filter_length: usize, cutoff: f64) -> Result<Option<T>> {
    if raw.len() < filter_length {
        return Ok(None);
    }
    let kernel = sinc_kernel::<T>(filter_length, cutoff)?;
    Ok(Some(apply(&kernel, raw)))
}

fn apply<T: Scalar>(kernel: &[T], raw: &[T]) -> T {
    let tail = &raw[raw.len() - kernel.len()..];
    kernel.iter().zip(tail).fold(T::zero(), |acc, (c, s)| acc + *c * *s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Continue,
    Converged,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvergenceState {
    pub filter_length: usize,
}

impl ConvergenceState {
    pub fn new<T: Scalar>(config: &ConvergenceConfig<T>) -> Self {
        Self {
            filter_length: config.base_filter_length,
        }
    }
}

/// Evaluate the termination test on the raw samples so far.
///
/// Converged iff at least `L + 1` samples exist (two consecutive filtered
/// values) and their relative change is below the tolerance. Otherwise the
/// filter grows by one step once `L + length_step` samples exist.
pub fn check_converged<T: Scalar>(
    raw: &[T],
    config: &ConvergenceConfig<T>,
    state: ConvergenceState,
) -> (Decision, ConvergenceState, Option<T>) {
    let len = state.filter_length;
    let kernel = sinc_kernel::<T>(len, config.cutoff).expect("validated configuration");
    let now = (raw.len() >= len).then(|| apply(&kernel, raw));
    if let Some(now) = now {
        if raw.len() > len {
            let prev = apply(&kernel, &raw[..raw.len() - 1]);
            let denom = prev.max(T::min_positive_value());
            if ((now - prev).abs() / denom) < config.rel_tolerance {
                return (Decision::Converged, state, Some(now));
            }
        }
    }
    let mut next = state;
    if raw.len() >= len + config.length_step && len < config.max_filter_length {
        next.filter_length = (len + config.length_step).min(config.max_filter_length);
    }
    (Decision::Continue, next, now)
}

/// Stateful wrapper used by the relaxation loops: records every sample and
/// filter decision in a [`StressTrace`].
#[derive(Debug, Clone)]
pub struct ConvergenceMonitor<T> {
    config: ConvergenceConfig<T>,
    state: ConvergenceState,
    trace: StressTrace<T>,
}

impl<T: Scalar> ConvergenceMonitor<T> {
    pub fn new(config: ConvergenceConfig<T>) -> Self {
        Self {
            state: ConvergenceState::new(&config),
            config,
            trace: StressTrace::new(),
        }
    }

    pub fn observe(&mut self, sample: T) -> Decision {
        self.trace.push(sample);
        let checked_at = self.state.filter_length;
        let (decision, state, smoothed) = check_converged(&self.trace.raw, &self.config, self.state);
        self.state = state;
        self.trace.smoothed.push(smoothed);
        self.trace.filter_lengths.push(checked_at);
        decision
    }

    pub fn filter_length(&self) -> usize {
        self.state.filter_length
    }

    pub fn trace(&self) -> &StressTrace<T> {
        &self.trace
    }

    pub fn into_trace(self) -> StressTrace<T> {
        self.trace
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_rejects_bad_parameters() {
        assert!(sinc_kernel::<f64>(1, 0.1).is_err());
        assert!(sinc_kernel::<f64>(10, 0.0).is_err());
        assert!(sinc_kernel::<f64>(10, 0.5).is_err());
    }

    #[test]
    fn constant_sequence_passes_through() {
        let raw = vec![3.25; 40];
        let s: f64 = smoothed_stress(&raw, 20, 0.05).unwrap().unwrap();
        assert!((s - 3.25).abs() < 1e-12);
    }

    #[test]
    fn not_ready_below_filter_length() {
        assert_eq!(smoothed_stress(&[1.0; 9], 10, 0.05).unwrap(), None);
    }

    #[test]
    fn smoothing_is_linear() {
        let raw: Vec<f64> = (0..30).map(|i| (i as f64 * 0.7).sin() + 2.0).collect();
        let scaled: Vec<f64> = raw.iter().map(|v| 4.5 * v).collect();
        let a = smoothed_stress(&raw, 20, 0.05).unwrap().unwrap();
        let b = smoothed_stress(&scaled, 20, 0.05).unwrap().unwrap();
        assert!((4.5 * a - b).abs() < 1e-12);
    }

    #[test]
    fn identical_values_converge_at_eleven() {
        let cfg = ConvergenceConfig::<f64>::default();
        let mut m = ConvergenceMonitor::new(cfg);
        let mut at = None;
        for it in 1..=50 {
            if m.observe(2.0) == Decision::Converged {
                at = Some(it);
                break;
            }
        }
        assert_eq!(at, Some(11));
    }

    #[test]
    fn nine_samples_continue() {
        let cfg = ConvergenceConfig::<f64>::default();
        let (d, s, smoothed) = check_converged(&[1.0; 9], &cfg, ConvergenceState::new(&cfg));
        assert_eq!(d, Decision::Continue);
        assert_eq!(s.filter_length, 10);
        assert_eq!(smoothed, None);
    }

    #[test]
    fn decreasing_sequence_grows_filter() {
        let cfg = ConvergenceConfig::<f64>::default();
        let mut m = ConvergenceMonitor::new(cfg);
        let mut v = 100.0;
        let mut seen = vec![m.filter_length()];
        for _ in 0..50 {
            assert_eq!(m.observe(v), Decision::Continue);
            seen.push(m.filter_length());
            v *= 0.9;
        }
        seen.dedup();
        assert_eq!(seen, vec![10, 20, 30, 40, 50]);
        assert_eq!(m.filter_length(), 50);
    }

    #[test]
    fn config_validation() {
        assert!(ConvergenceConfig::<f64>::default().validate().is_ok());
        assert!(ConvergenceConfig::<f64>::fixed(50).validate().is_ok());
        let bad = ConvergenceConfig::<f64> {
            length_step: 7,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
