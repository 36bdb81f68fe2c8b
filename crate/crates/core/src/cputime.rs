//! Thread CPU-time measurement for speed-up factors.
//!
//! Speed-up is defined as a ratio of CPU times of the single-threaded main
//! loops, so the clock must charge only the calling thread; wall clocks
//! would be distorted by concurrent runs (the test harness and the matrix
//! runner both execute runs in parallel).

/// CPU time consumed by the calling thread, in seconds.
pub fn thread_cpu_seconds() -> f64 {
    let mut ts = libc::timespec { tv_sec: 0, tv_nsec: 0 };
    let rc = unsafe { libc::clock_gettime(libc::CLOCK_THREAD_CPUTIME_ID, &mut ts) };
    if rc != 0 {
        return 0.0;
    }
    ts.tv_sec as f64 + ts.tv_nsec as f64 * 1e-9
}

/// Stopwatch accumulating thread CPU time, with support for excluding
/// intervals (snapshot emission, I/O).
#[derive(Debug, Default)]
pub struct CpuStopwatch {
    accumulated: f64,
    started_at: Option<f64>,
}

impl CpuStopwatch {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn start(&mut self) {
        if self.started_at.is_none() {
            self.started_at = Some(thread_cpu_seconds());
        }
    }

    pub fn pause(&mut self) {
        if let Some(t0) = self.started_at.take() {
            self.accumulated += thread_cpu_seconds() - t0;
        }
    }

    pub fn seconds(&self) -> f64 {
        match self.started_at {
            Some(t0) => self.accumulated + thread_cpu_seconds() - t0,
            None => self.accumulated,
        }
    }
}
