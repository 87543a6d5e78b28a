use std::sync::{Arc, RwLock};

use crate::decoder::EegEpoch;
use crate::error::{Error, Result};

/// Default capacity: 8 s at 500 Hz.
pub const DEFAULT_CAPACITY: usize = 4000;

/// Fixed-capacity circular store of multichannel samples.
///
/// Samples are addressed by their absolute index in the stream. The most
/// recent `capacity` samples are resident.
#[derive(Debug, Clone)]
pub struct RingBuffer {
    channels: usize,
    capacity: usize,
    sample_rate: f64,
    /// time-major: `data[(i % capacity) * channels + c]`
    data: Vec<f64>,
    counter: u64,
}

impl RingBuffer {
    pub fn new(channels: usize, capacity: usize, sample_rate: f64) -> Result<Self> {
        if channels == 0 || capacity == 0 {
            return Err(Error::InvalidInput("ring buffer needs at least one channel and one sample".into()));
        }
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::InvalidInput(format!("sample rate must be positive, got {sample_rate}")));
        }
        Ok(Self {
            channels,
            capacity,
            sample_rate,
            data: vec![0.0; channels * capacity],
            counter: 0,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    /// Total number of samples ever written.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Index of the oldest resident sample.
    pub fn oldest(&self) -> u64 {
        self.counter.saturating_sub(self.capacity as u64)
    }

    /// Appends a `C x k` chunk after the last written sample.
    pub fn append_chunk(&mut self, chunk: &EegEpoch) -> Result<()> {
        if chunk.channels() != self.channels {
            return Err(Error::DimensionMismatch {
                expected: self.channels,
                actual: chunk.channels(),
            });
        }
        let c = self.channels;
        for t in 0..chunk.samples() {
            let slot = (self.counter % self.capacity as u64) as usize;
            for ch in 0..c {
                self.data[slot * c + ch] = chunk.get(ch, t);
            }
            self.counter += 1;
        }
        Ok(())
    }

    /// Channel-major copy of samples `[start, start + len)`.
    pub fn read(&self, start: u64, len: usize) -> Result<Vec<f64>> {
        let end = start + len as u64;
        if end > self.counter {
            return Err(Error::NotYetWritten {
                start,
                end,
                counter: self.counter,
            });
        }
        if start < self.oldest() {
            return Err(Error::Overwritten {
                start,
                end,
                oldest: self.oldest(),
            });
        }
        let c = self.channels;
        let mut out = vec![0.0; c * len];
        for i in 0..len {
            let slot = ((start + i as u64) % self.capacity as u64) as usize;
            for ch in 0..c {
                out[ch * len + i] = self.data[slot * c + ch];
            }
        }
        Ok(out)
    }

    /// Samples `[start + offset, start + offset + length)` with both bounds
    /// given in seconds and rounded to whole samples.
    pub fn extract_epoch(&self, start_sample: u64, offset_s: f64, length_s: f64) -> Result<EegEpoch> {
        if !(offset_s >= 0.0 && length_s > 0.0 && offset_s.is_finite() && length_s.is_finite()) {
            return Err(Error::InvalidInput(format!("invalid epoch window offset {offset_s} s, length {length_s} s")));
        }
        let first = start_sample + (offset_s * self.sample_rate).round() as u64;
        let len = (length_s * self.sample_rate).round() as usize;
        if len == 0 {
            return Err(Error::InvalidInput("epoch window shorter than one sample".into()));
        }
        let data = self.read(first, len)?;
        EegEpoch::new(self.channels, len, self.sample_rate, data, None)
    }
}

/// A [`RingBuffer`] shared between one writer and any number of readers.
///
/// Writes hold the lock for a whole chunk, so readers only ever observe the
/// counter after all samples below it are in place.
#[derive(Debug, Clone)]
pub struct SharedRingBuffer(Arc<RwLock<RingBuffer>>);

impl SharedRingBuffer {
    pub fn new(buffer: RingBuffer) -> Self {
        Self(Arc::new(RwLock::new(buffer)))
    }

    pub fn append_chunk(&self, chunk: &EegEpoch) -> Result<()> {
        self.0.write().unwrap_or_else(|e| e.into_inner()).append_chunk(chunk)
    }

    pub fn extract_epoch(&self, start_sample: u64, offset_s: f64, length_s: f64) -> Result<EegEpoch> {
        self.0.read().unwrap_or_else(|e| e.into_inner()).extract_epoch(start_sample, offset_s, length_s)
    }

    pub fn counter(&self) -> u64 {
        self.0.read().unwrap_or_else(|e| e.into_inner()).counter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::{prop_assert_eq, proptest};

    fn ramp(c: usize, start: usize, k: usize) -> EegEpoch {
        let rows: Vec<Vec<f64>> = (0..c)
            .map(|ch| (start..start + k).map(|t| (t * 10 + ch) as f64).collect())
            .collect();
        EegEpoch::from_rows(&rows, 500.0, None).unwrap()
    }

    #[test]
    fn wraparound_overwrites_oldest() {
        let mut buf = RingBuffer::new(2, 4000, 500.0).unwrap();
        buf.append_chunk(&ramp(2, 0, 4000)).unwrap();
        assert!(buf.read(0, 1).is_ok());
        buf.append_chunk(&ramp(2, 4000, 1)).unwrap();
        assert_eq!(buf.counter(), 4001);
        assert!(matches!(buf.read(0, 1), Err(Error::Overwritten { oldest: 1, .. })));
        assert_eq!(buf.read(4000, 1).unwrap(), vec![40000.0, 40001.0]);
    }

    #[test]
    fn future_reads_are_distinguished() {
        let mut buf = RingBuffer::new(1, 10, 500.0).unwrap();
        buf.append_chunk(&ramp(1, 0, 5)).unwrap();
        assert!(matches!(buf.read(3, 3), Err(Error::NotYetWritten { counter: 5, .. })));
    }

    #[test]
    fn epoch_conventions() {
        let mut buf = RingBuffer::new(12, DEFAULT_CAPACITY, 500.0).unwrap();
        buf.append_chunk(&ramp(12, 0, 2100)).unwrap();
        let offline = buf.extract_epoch(100, 0.14, 3.86).unwrap();
        assert_eq!(offline.samples(), 1930);
        assert_eq!(offline.get(0, 0), 1700.0);
        let online = buf.extract_epoch(100, 0.0, 3.0).unwrap();
        assert_eq!(online.samples(), 1500);
        assert!(buf.extract_epoch(1000, 0.0, 3.0).is_err());
    }

    #[test]
    fn channel_mismatch_rejected() {
        let mut buf = RingBuffer::new(3, 10, 500.0).unwrap();
        assert!(buf.append_chunk(&ramp(2, 0, 1)).is_err());
    }

    #[test]
    fn shared_buffer_concurrent_reader_sees_complete_samples() {
        let shared = SharedRingBuffer::new(RingBuffer::new(2, 1000, 500.0).unwrap());
        let writer = {
            let shared = shared.clone();
            std::thread::spawn(move || {
                for i in 0..200 {
                    shared.append_chunk(&ramp(2, i * 5, 5)).unwrap();
                }
            })
        };
        for _ in 0..200 {
            let n = shared.counter();
            if n >= 5 {
                let e = shared.extract_epoch(n - 5, 0.0, 0.01).unwrap();
                for t in 0..5 {
                    let expected = ((n - 5) as usize + t) * 10;
                    assert_eq!(e.get(0, t), expected as f64);
                    assert_eq!(e.get(1, t), expected as f64 + 1.0);
                }
            }
        }
        writer.join().unwrap();
        assert_eq!(shared.counter(), 1000);
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_identical(cap in 1usize..50, pre in 0usize..120, k in 1usize..50) {
            let k = k.min(cap);
            let mut buf = RingBuffer::new(3, cap, 500.0).unwrap();
            buf.append_chunk(&ramp(3, 0, pre.max(1))).unwrap();
            let chunk = ramp(3, 7, k);
            let start = buf.counter();
            buf.append_chunk(&chunk).unwrap();
            prop_assert_eq!(buf.read(start, k).unwrap(), chunk.data().to_vec());
        }

        #[test]
        fn split_appends_match_single_append(cap in 1usize..40, k1 in 1usize..30, k2 in 1usize..30) {
            let whole = ramp(2, 0, k1 + k2);
            let mut a = RingBuffer::new(2, cap, 500.0).unwrap();
            a.append_chunk(&whole).unwrap();
            let mut b = RingBuffer::new(2, cap, 500.0).unwrap();
            b.append_chunk(&whole.slice(0, k1).unwrap()).unwrap();
            b.append_chunk(&whole.slice(k1, k2).unwrap()).unwrap();
            prop_assert_eq!(a.counter(), b.counter());
            prop_assert_eq!(&a.data, &b.data);
        }
    }
}
