// SPDX-License-Identifier: Apache-2.0

use super::StoreError;

const MIB: f64 = 1024.0 * 1024.0;

/// Per-request latency plus per-stream bandwidth, used to advance the
/// simulated store's virtual clock.
///
/// A single transfer of `s` bytes costs `base + s / bandwidth`. A group of
/// transfers spread over `k` streams costs the makespan of a work queue
/// drained by `k` workers, i.e. the slowest stream rather than the sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatencyModel {
    base_ns: u64,
    bandwidth_bps: u64,
    copy_bandwidth_bps: u64,
    max_parallel_streams: usize,
}

impl LatencyModel {
    pub fn new(
        base_latency_s: f64,
        bandwidth_mib_s: f64,
        copy_bandwidth_mib_s: f64,
        max_parallel_streams: usize,
    ) -> Result<Self, StoreError> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(base_latency_s) || !positive(bandwidth_mib_s) || !positive(copy_bandwidth_mib_s)
        {
            return Err(StoreError::InvalidArgument(
                "latency model parameters must be strictly positive".into(),
            ));
        }
        if max_parallel_streams == 0 {
            return Err(StoreError::InvalidArgument("max_parallel_streams must be >= 1".into()));
        }
        Ok(LatencyModel {
            base_ns: (base_latency_s * 1e9).round() as u64,
            bandwidth_bps: (bandwidth_mib_s * MIB).round() as u64,
            copy_bandwidth_bps: (copy_bandwidth_mib_s * MIB).round() as u64,
            max_parallel_streams,
        })
    }

    /// 20 ms per request, 100 MiB/s per stream, 32 MiB/s server-side copy,
    /// gains saturating at 8 streams.
    pub fn calibrated() -> Self {
        LatencyModel::new(0.02, 100.0, 32.0, 8).expect("calibrated model is valid")
    }

    pub fn base_latency_s(&self) -> f64 {
        self.base_ns as f64 / 1e9
    }

    pub fn bandwidth_bps(&self) -> u64 {
        self.bandwidth_bps
    }

    pub fn copy_bandwidth_bps(&self) -> u64 {
        self.copy_bandwidth_bps
    }

    pub fn max_parallel_streams(&self) -> usize {
        self.max_parallel_streams
    }

    pub fn with_max_parallel_streams(mut self, streams: usize) -> Self {
        self.max_parallel_streams = streams.max(1);
        self
    }

    fn scaled(base_ns: u64, bytes: u64, bps: u64) -> u64 {
        let transfer = (bytes as u128 * 1_000_000_000).div_ceil(bps as u128);
        base_ns + transfer as u64
    }

    /// Duration of one PUT or GET moving `bytes` over a single stream.
    pub fn transfer_ns(&self, bytes: u64) -> u64 {
        Self::scaled(self.base_ns, bytes, self.bandwidth_bps)
    }

    /// Duration of a server-side copy of `bytes`.
    pub fn copy_ns(&self, bytes: u64) -> u64 {
        Self::scaled(self.base_ns, bytes, self.copy_bandwidth_bps)
    }

    /// Duration of a request that moves no payload (DEL, LIST, metadata).
    pub fn request_ns(&self) -> u64 {
        self.base_ns
    }

    /// Effective stream count for a caller asking for `threads`.
    pub fn streams(&self, threads: usize) -> usize {
        threads.clamp(1, self.max_parallel_streams)
    }

    /// Makespan of `durations` drained in order by `threads` workers (clamped
    /// to the stream limit); each item goes to the earliest-free worker.
    pub fn parallel_ns(&self, durations: &[u64], threads: usize) -> u64 {
        let streams = self.streams(threads);
        let mut busy = vec![0u64; streams];
        for d in durations {
            let (idx, _) = busy
                .iter()
                .enumerate()
                .min_by_key(|(i, t)| (**t, *i))
                .expect("at least one stream");
            busy[idx] += d;
        }
        busy.into_iter().max().unwrap_or(0)
    }
}
