use std::path::Path;

use super::IoError;
use crate::exec::{self, Execution};

/// Default number of temporal slices per tensor.
pub const DEFAULT_SLICES: usize = 10;
/// Default tensor window, seconds.
pub const DEFAULT_WINDOW_S: f64 = 0.05;

const MAGIC: &[u8; 4] = b"VLEV";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 16;
const RECORD_LEN: usize = 13;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub x: u16,
    pub y: u16,
    pub t: f64,
    /// +1 or -1
    pub p: i8,
}

/// Events with the sensor resolution they were recorded at.
#[derive(Debug, Clone, PartialEq)]
pub struct EventStream {
    pub width: u32,
    pub height: u32,
    pub events: Vec<Event>,
}

/// Per-polarity event counts, shape `(2, slices, height, width)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventTensor {
    slices: usize,
    height: usize,
    width: usize,
    data: Vec<u32>,
    pub window_start: f64,
    pub window_len: f64,
}

impl EventTensor {
    pub fn zeros(slices: usize, height: usize, width: usize, window_start: f64, window_len: f64) -> Self {
        Self {
            slices,
            height,
            width,
            data: vec![0; 2 * slices * height * width],
            window_start,
            window_len,
        }
    }

    /// `(2, T, h, w)`
    pub fn dims(&self) -> [usize; 4] {
        [2, self.slices, self.height, self.width]
    }

    fn index(&self, channel: usize, slice: usize, y: usize, x: usize) -> usize {
        ((channel * self.slices + slice) * self.height + y) * self.width + x
    }

    pub fn get(&self, channel: usize, slice: usize, y: usize, x: usize) -> u32 {
        self.data[self.index(channel, slice, y, x)]
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.data
    }

    pub fn total(&self) -> u64 {
        self.data.iter().map(|&c| c as u64).sum()
    }
}

/// Counters for events discarded while binning.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BinStats {
    pub binned: u64,
    pub out_of_window: u64,
    pub out_of_bounds: u64,
}

/// Bins events into a `(2, slices, h, w)` count tensor over
/// `[window_start, window_start + window_len)`.
///
/// Polarity +1 goes to channel 0, -1 to channel 1.
pub fn bin_events(
    events: &[Event],
    window_start: f64,
    window_len: f64,
    slices: usize,
    h: usize,
    w: usize,
) -> (EventTensor, BinStats) {
    bin_events_with(Execution::default(), events, window_start, window_len, slices, h, w)
}

pub fn bin_events_with(
    exec: Execution,
    events: &[Event],
    window_start: f64,
    window_len: f64,
    slices: usize,
    h: usize,
    w: usize,
) -> (EventTensor, BinStats) {
    assert!(slices >= 1 && h >= 1 && w >= 1, "tensor dims must be positive");
    assert!(window_len > 0.0, "window length must be positive");
    let window_end = window_start + window_len;
    let plane = h * w;
    // cell index or the reason for dropping
    let locate = |e: &Event| -> Result<usize, bool> {
        if !(e.t >= window_start && e.t < window_end) {
            return Err(true);
        }
        let (x, y) = (e.x as usize, e.y as usize);
        if x >= w || y >= h {
            return Err(false);
        }
        let slice = (((e.t - window_start) / window_len * slices as f64).floor() as usize).min(slices - 1);
        let channel = if e.p > 0 { 0 } else { 1 };
        Ok((channel * slices + slice) * plane + y * w + x)
    };

    let len = 2 * slices * plane;
    let (data, stats) = exec::fold_reduce(
        exec,
        events,
        || (vec![0u32; len], BinStats::default()),
        |(counts, stats), e| match locate(e) {
            Ok(i) => {
                counts[i] += 1;
                stats.binned += 1;
            }
            Err(true) => stats.out_of_window += 1,
            Err(false) => stats.out_of_bounds += 1,
        },
        |(mut a, sa), (b, sb)| {
            for (x, y) in a.iter_mut().zip(&b) {
                *x += *y;
            }
            (a, merge_stats(sa, sb))
        },
    );
    let tensor = EventTensor {
        slices,
        height: h,
        width: w,
        data,
        window_start,
        window_len,
    };
    (tensor, stats)
}

fn merge_stats(a: BinStats, b: BinStats) -> BinStats {
    BinStats {
        binned: a.binned + b.binned,
        out_of_window: a.out_of_window + b.out_of_window,
        out_of_bounds: a.out_of_bounds + b.out_of_bounds,
    }
}

/// Offset of the source inside the target along one axis: zero-padding is
/// split evenly with the odd cell at the high end, cropping keeps the centre.
fn axis_map(src: usize, dst: usize) -> (usize, usize, usize) {
    // (src_start, dst_start, len)
    if dst >= src {
        (0, (dst - src) / 2, src)
    } else {
        ((src - dst) / 2, 0, dst)
    }
}

/// Crops or zero-pads each spatial axis independently to the target size.
pub fn fit_tensor(t: &EventTensor, target_h: usize, target_w: usize) -> EventTensor {
    assert!(target_h >= 1 && target_w >= 1, "target dims must be positive");
    let mut out = EventTensor::zeros(t.slices, target_h, target_w, t.window_start, t.window_len);
    let (sy, dy, ny) = axis_map(t.height, target_h);
    let (sx, dx, nx) = axis_map(t.width, target_w);
    for c in 0..2 {
        for s in 0..t.slices {
            for y in 0..ny {
                let src = t.index(c, s, sy + y, sx);
                let dst = out.index(c, s, dy + y, dx);
                out.data[dst..dst + nx].copy_from_slice(&t.data[src..src + nx]);
            }
        }
    }
    out
}

pub fn write_events(stream: &EventStream) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + RECORD_LEN * stream.events.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&stream.width.to_le_bytes());
    out.extend_from_slice(&stream.height.to_le_bytes());
    for e in &stream.events {
        out.extend_from_slice(&e.x.to_le_bytes());
        out.extend_from_slice(&e.y.to_le_bytes());
        out.extend_from_slice(&e.t.to_le_bytes());
        out.extend_from_slice(&e.p.to_le_bytes());
    }
    out
}

pub fn read_events(bytes: &[u8]) -> Result<EventStream, IoError> {
    let err = |m: String| IoError::Events(m);
    if bytes.len() < HEADER_LEN {
        return Err(err(format!("truncated header ({} bytes)", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(err("bad magic".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let version = u32_at(4);
    if version != VERSION {
        return Err(err(format!("unsupported version {version}")));
    }
    let width = u32_at(8);
    let height = u32_at(12);
    let body = &bytes[HEADER_LEN..];
    if !body.len().is_multiple_of(RECORD_LEN) {
        return Err(err(format!("trailing {} bytes", body.len() % RECORD_LEN)));
    }
    let mut events = Vec::with_capacity(body.len() / RECORD_LEN);
    for (i, r) in body.chunks_exact(RECORD_LEN).enumerate() {
        let x = u16::from_le_bytes([r[0], r[1]]);
        let y = u16::from_le_bytes([r[2], r[3]]);
        let t = f64::from_le_bytes(r[4..12].try_into().expect("8 bytes"));
        let p = r[12] as i8;
        if x as u32 >= width || y as u32 >= height {
            return Err(err(format!("event {i}: pixel ({x}, {y}) outside {width}x{height}")));
        }
        if p != 1 && p != -1 {
            return Err(err(format!("event {i}: polarity {p}")));
        }
        if !t.is_finite() {
            return Err(err(format!("event {i}: non-finite timestamp")));
        }
        events.push(Event { x, y, t, p });
    }
    Ok(EventStream { width, height, events })
}

pub fn load_events(path: &Path) -> Result<EventStream, IoError> {
    let bytes = std::fs::read(path).map_err(|e| IoError::io(path, e))?;
    read_events(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ev(x: u16, y: u16, t: f64, p: i8) -> Event {
        Event { x, y, t, p }
    }

    #[test]
    fn single_event_lands_in_first_cell() {
        let (t, stats) = bin_events(&[ev(3, 4, 1.0, 1)], 1.0, 0.05, 10, 8, 8);
        assert_eq!(t.get(0, 0, 4, 3), 1);
        assert_eq!(t.total(), 1);
        assert_eq!(stats.binned, 1);
    }

    #[test]
    fn default_window_slicing() {
        let start = 12.5;
        let (t, _) = bin_events(
            &[ev(0, 0, start + 0.049, -1)],
            start,
            DEFAULT_WINDOW_S,
            DEFAULT_SLICES,
            2,
            2,
        );
        assert_eq!(t.get(1, 9, 0, 0), 1);
        // each 5 ms slice boundary
        for k in 0..10 {
            let e = ev(1, 1, start + 0.005 * k as f64 + 0.0025, 1);
            let (t, _) = bin_events(&[e], start, DEFAULT_WINDOW_S, DEFAULT_SLICES, 2, 2);
            assert_eq!(t.get(0, k, 1, 1), 1, "slice {k}");
        }
    }

    #[test]
    fn window_end_and_bounds_are_dropped() {
        let events = [
            ev(0, 0, 1.05, 1),
            ev(0, 0, 0.99, 1),
            ev(9, 0, 1.01, 1),
            ev(0, 0, 1.0, -1),
        ];
        let (t, stats) = bin_events(&events, 1.0, 0.05, 10, 4, 4);
        assert_eq!(t.total(), 1);
        assert_eq!(
            stats,
            BinStats {
                binned: 1,
                out_of_window: 2,
                out_of_bounds: 1
            }
        );
    }

    fn random_events(n: usize, seed: u64, start: f64, len: f64, h: u16, w: u16) -> Vec<Event> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Event {
                x: rng.random_range(0..w),
                y: rng.random_range(0..h),
                t: start + rng.random_range(0.0..len),
                p: if rng.random_bool(0.5) { 1 } else { -1 },
            })
            .collect()
    }

    #[test]
    fn count_conservation_and_paths_agree() {
        let events = random_events(1000, 7, 3.0, 0.05, 26, 34);
        let (seq, s1) = bin_events_with(Execution::Sequential, &events, 3.0, 0.05, 10, 26, 34);
        let (par, s2) = bin_events_with(Execution::Parallel, &events, 3.0, 0.05, 10, 26, 34);
        assert_eq!(seq.total(), 1000);
        assert_eq!(seq, par);
        assert_eq!(s1, s2);
    }

    #[test]
    fn pad_to_megapixel_keeps_counts_centred() {
        let events = random_events(500, 1, 0.0, 0.05, 260, 346);
        let (t, _) = bin_events(&events, 0.0, 0.05, 10, 260, 346);
        let big = fit_tensor(&t, 720, 1280);
        assert_eq!(big.dims(), [2, 10, 720, 1280]);
        assert_eq!(big.total(), t.total());
        for e in &events {
            let c = if e.p > 0 { 0 } else { 1 };
            let s = ((e.t / 0.05) * 10.0).floor() as usize;
            assert_eq!(
                big.get(c, s, e.y as usize + 230, e.x as usize + 467),
                t.get(c, s, e.y as usize, e.x as usize)
            );
        }
    }

    #[test]
    fn crop_keeps_source_cells() {
        let events = random_events(20_000, 2, 0.0, 0.05, 720, 1280);
        let (t, _) = bin_events(&events, 0.0, 0.05, 2, 720, 1280);
        let small = fit_tensor(&t, 260, 346);
        for c in 0..2 {
            for s in 0..2 {
                for y in 0..260 {
                    for x in 0..346 {
                        assert_eq!(small.get(c, s, y, x), t.get(c, s, y + 230, x + 467));
                    }
                }
            }
        }
    }

    #[test]
    fn identity_fit() {
        let events = random_events(100, 3, 0.0, 0.05, 5, 7);
        let (t, _) = bin_events(&events, 0.0, 0.05, 3, 5, 7);
        assert_eq!(fit_tensor(&t, 5, 7), t);
    }

    #[test]
    fn odd_padding_puts_extra_cell_high() {
        let (t, _) = bin_events(&[ev(0, 0, 0.0, 1)], 0.0, 0.05, 1, 1, 1);
        let p = fit_tensor(&t, 4, 2);
        // 3 extra rows: 1 above, 2 below; 1 extra column: 0 left, 1 right
        assert_eq!(p.get(0, 0, 1, 0), 1);
    }

    #[test]
    fn binary_roundtrip_and_errors() {
        let stream = EventStream {
            width: 346,
            height: 260,
            events: random_events(50, 4, 0.0, 1.0, 260, 346),
        };
        let bytes = write_events(&stream);
        assert_eq!(bytes.len(), 16 + 13 * 50);
        let back = read_events(&bytes).unwrap();
        assert_eq!(back, stream);
        assert_eq!(write_events(&back), bytes);

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(read_events(&bad).is_err());
        assert!(read_events(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[16 + 12] = 0;
        assert!(read_events(&bad).is_err());
    }

    proptest! {
        #[test]
        fn binning_is_permutation_invariant(seed in any::<u64>(), shift in 0usize..200) {
            let mut events = random_events(200, seed, 0.0, 0.06, 6, 6);
            let (a, _) = bin_events_with(Execution::Sequential, &events, 0.0, 0.05, 4, 5, 5);
            events.rotate_left(shift);
            events.reverse();
            let (b, _) = bin_events_with(Execution::Sequential, &events, 0.0, 0.05, 4, 5, 5);
            prop_assert_eq!(a, b);
        }

        #[test]
        fn pad_then_crop_restores(h in 1usize..12, w in 1usize..12, dh in 0usize..7, dw in 0usize..7, seed in any::<u64>()) {
            let events = random_events(60, seed, 0.0, 0.05, h as u16, w as u16);
            let (t, _) = bin_events(&events, 0.0, 0.05, 2, h, w);
            let padded = fit_tensor(&t, h + dh, w + dw);
            prop_assert_eq!(padded.total(), t.total());
            prop_assert_eq!(fit_tensor(&padded, h, w), t);
        }
    }
}
