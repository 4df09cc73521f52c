use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::XorShift64Star;

/// Dense 3-axis array of f32: feature maps x frequency x time, stored
/// row-major with time fastest. The hot loops of the engine run along time,
/// so a dilated kernel tap reads a strided sequence of contiguous rows.
///
/// Tensors are immutable after construction; every operation returns a fresh
/// tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    fmaps: usize,
    freq: usize,
    time: usize,
    data: Vec<f32>,
}

impl Tensor3 {
    fn checked_len(fmaps: usize, freq: usize, time: usize) -> Result<usize> {
        if fmaps == 0 || freq == 0 || time == 0 {
            return Err(Error::Dimension(format!(
                "all dimensions must be >= 1, got {fmaps} x {freq} x {time}"
            )));
        }
        fmaps
            .checked_mul(freq)
            .and_then(|n| n.checked_mul(time))
            .ok_or_else(|| {
                Error::Dimension(format!("element count overflows: {fmaps} x {freq} x {time}"))
            })
    }

    /// All-zero tensor.
    pub fn zeros(fmaps: usize, freq: usize, time: usize) -> Result<Tensor3> {
        let len = Self::checked_len(fmaps, freq, time)?;
        Ok(Tensor3 { fmaps, freq, time, data: vec![0.0; len] })
    }

    /// Tensor of uniform values in [-1, 1) drawn from the xorshift64*
    /// stream. Identical (dims, seed) give bit-identical tensors.
    pub fn seeded_random(fmaps: usize, freq: usize, time: usize, seed: u64) -> Result<Tensor3> {
        let len = Self::checked_len(fmaps, freq, time)?;
        let mut rng = XorShift64Star::new(seed);
        let data = (0..len).map(|_| rng.next_unit()).collect();
        Ok(Tensor3 { fmaps, freq, time, data })
    }

    /// Wrap an existing buffer. Length must match the dims exactly.
    pub fn from_vec(fmaps: usize, freq: usize, time: usize, data: Vec<f32>) -> Result<Tensor3> {
        let len = Self::checked_len(fmaps, freq, time)?;
        if data.len() != len {
            return Err(Error::Dimension(format!(
                "buffer length {} does not match {fmaps} x {freq} x {time} = {len}",
                data.len()
            )));
        }
        Ok(Tensor3 { fmaps, freq, time, data })
    }

    pub fn fmaps(&self) -> usize {
        self.fmaps
    }

    pub fn freq(&self) -> usize {
        self.freq
    }

    pub fn time(&self) -> usize {
        self.time
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.fmaps, self.freq, self.time)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    fn index(&self, m: usize, f: usize, t: usize) -> usize {
        (m * self.freq + f) * self.time + t
    }

    /// Element accessor; panics on out-of-range indices like slice indexing.
    #[inline]
    pub fn get(&self, m: usize, f: usize, t: usize) -> f32 {
        assert!(m < self.fmaps && f < self.freq && t < self.time, "index out of range");
        self.data[self.index(m, f, t)]
    }

    /// One (map, freq) row along time as a contiguous slice.
    #[inline]
    pub fn row(&self, m: usize, f: usize) -> &[f32] {
        let base = (m * self.freq + f) * self.time;
        &self.data[base..base + self.time]
    }

    #[cfg(test)]
    pub(crate) fn set(&mut self, m: usize, f: usize, t: usize, value: f32) {
        assert!(m < self.fmaps && f < self.freq && t < self.time, "index out of range");
        let i = self.index(m, f, t);
        self.data[i] = value;
    }

    /// Copy of the time window [start, start+length).
    pub fn slice_time(&self, start: usize, length: usize) -> Result<Tensor3> {
        if length == 0 {
            return Err(Error::Bounds("slice length must be >= 1".into()));
        }
        let end = start.checked_add(length).ok_or_else(|| {
            Error::Bounds(format!("slice window {start}+{length} overflows"))
        })?;
        if end > self.time {
            return Err(Error::Bounds(format!(
                "slice window [{start}, {end}) exceeds time extent {}",
                self.time
            )));
        }
        let mut data = Vec::with_capacity(self.fmaps * self.freq * length);
        for m in 0..self.fmaps {
            for f in 0..self.freq {
                let base = self.index(m, f, start);
                data.extend_from_slice(&self.data[base..base + length]);
            }
        }
        Ok(Tensor3 { fmaps: self.fmaps, freq: self.freq, time: length, data })
    }

    /// Zero-pad the time axis: `left` zero frames before, `right` after.
    pub fn pad_time(&self, left: usize, right: usize) -> Result<Tensor3> {
        let time = self
            .time
            .checked_add(left)
            .and_then(|t| t.checked_add(right))
            .ok_or_else(|| Error::Dimension("padded time extent overflows".into()))?;
        let mut out = Tensor3::zeros(self.fmaps, self.freq, time)?;
        for m in 0..self.fmaps {
            for f in 0..self.freq {
                let dst = out.index(m, f, left);
                let src = self.index(m, f, 0);
                out.data[dst..dst + self.time].copy_from_slice(&self.data[src..src + self.time]);
            }
        }
        Ok(out)
    }

    /// Binary dump: three little-endian u32 dims, then the raw little-endian
    /// f32 elements in storage order.
    pub fn write_dump<W: Write>(&self, w: &mut W) -> Result<()> {
        for dim in [self.fmaps, self.freq, self.time] {
            let dim = u32::try_from(dim)
                .map_err(|_| Error::Dimension(format!("dimension {dim} exceeds u32")))?;
            w.write_all(&dim.to_le_bytes())?;
        }
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_dump<R: Read>(r: &mut R) -> Result<Tensor3> {
        let mut dim = [0u8; 4];
        let mut dims = [0usize; 3];
        for d in &mut dims {
            r.read_exact(&mut dim)?;
            *d = u32::from_le_bytes(dim) as usize;
        }
        let len = Self::checked_len(dims[0], dims[1], dims[2])?;
        let mut data = vec![0f32; len];
        let mut buf = [0u8; 4];
        for v in &mut data {
            r.read_exact(&mut buf)?;
            *v = f32::from_le_bytes(buf);
        }
        Ok(Tensor3 { fmaps: dims[0], freq: dims[1], time: dims[2], data })
    }

    pub fn save_dump(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_dump(&mut file)
    }

    pub fn load_dump(path: impl AsRef<Path>) -> Result<Tensor3> {
        let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_dump(&mut file)
    }
}
