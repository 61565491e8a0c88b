//! Event-stream ingestion: parsing, validation, slicing, and integration of
//! DVS events into event-frame count tensors.
//!
//! An event is `(x, y, p, t)`: pixel position, polarity (OFF/ON), and a
//! microsecond timestamp. Streams are kept sorted by timestamp; integration
//! buckets events into half-open windows `[t0 + j*w, t0 + (j+1)*w)` anchored
//! at the first event's timestamp, counting per polarity channel.

use ndarray::Array4;
use thiserror::Error;

/// Window length matching one event frame per 16 source video frames.
pub const DEFAULT_WINDOW_US: u64 = 533_328;

/// Errors raised while parsing, slicing, or integrating event data.
///
/// `pos` is the 1-based line number for CSV input and the byte offset for
/// binary input.
#[derive(Debug, Error)]
pub enum EventError {
    #[error("at {pos}: malformed record: {reason}")]
    Malformed { pos: usize, reason: String },
    #[error("at {pos}: polarity {value} outside {{0, 1}}")]
    BadPolarity { pos: usize, value: u8 },
    #[error("at {pos}: coordinate ({x}, {y}) outside {width}x{height} sensor")]
    OutOfBounds {
        pos: usize,
        x: u16,
        y: u16,
        width: u16,
        height: u16,
    },
    #[error("at {pos}: timestamp {t} regresses below {prev}")]
    TimestampRegression { pos: usize, t: u64, prev: u64 },
    #[error("bad magic, expected {expected:?}")]
    BadMagic { expected: &'static str },
    #[error("truncated input: {0}")]
    Truncated(String),
    #[error("window length must be positive")]
    ZeroWindow,
    #[error("anchor {anchor} lies after first event timestamp {t0}")]
    AnchorAfterFirst { anchor: u64, t0: u64 },
    #[error("slice boundaries must be strictly increasing")]
    UnsortedBoundaries,
    #[error("frame tensor of {frames} windows exceeds capacity")]
    FrameTensorTooLarge { frames: u64 },
}

/// Brightness-change direction of a single event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarity {
    Off,
    On,
}

impl Polarity {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Polarity::Off),
            1 => Some(Polarity::On),
            _ => None,
        }
    }

    pub fn as_u8(self) -> u8 {
        match self {
            Polarity::Off => 0,
            Polarity::On => 1,
        }
    }

    /// Channel index used by frame tensors: OFF = 0, ON = 1.
    pub fn channel(self) -> usize {
        self.as_u8() as usize
    }
}

/// A single DVS event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    /// Timestamp in microseconds.
    pub t: u64,
    /// Pixel column.
    pub x: u16,
    /// Pixel row.
    pub y: u16,
    pub p: Polarity,
}

/// A validated, time-sorted sequence of events over a fixed sensor geometry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    width: u16,
    height: u16,
    events: Vec<Event>,
}

impl EventStream {
    /// Builds a stream, checking coordinate bounds and non-decreasing
    /// timestamps.
    pub fn new(width: u16, height: u16, events: Vec<Event>) -> Result<Self, EventError> {
        let mut prev_t = 0u64;
        for (i, ev) in events.iter().enumerate() {
            if ev.x >= width || ev.y >= height {
                return Err(EventError::OutOfBounds {
                    pos: i,
                    x: ev.x,
                    y: ev.y,
                    width,
                    height,
                });
            }
            if i > 0 && ev.t < prev_t {
                return Err(EventError::TimestampRegression {
                    pos: i,
                    t: ev.t,
                    prev: prev_t,
                });
            }
            prev_t = ev.t;
        }
        Ok(Self {
            width,
            height,
            events,
        })
    }

    pub fn empty(width: u16, height: u16) -> Self {
        Self {
            width,
            height,
            events: Vec::new(),
        }
    }

    // Invariants already hold; used by slicing and parsers.
    fn from_validated(width: u16, height: u16, events: Vec<Event>) -> Self {
        Self {
            width,
            height,
            events,
        }
    }

    pub fn width(&self) -> u16 {
        self.width
    }

    pub fn height(&self) -> u16 {
        self.height
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Timestamp of the first event, if any.
    pub fn t0(&self) -> Option<u64> {
        self.events.first().map(|e| e.t)
    }
}

/// Declared encoding of raw event bytes.
///
/// CSV carries no sensor geometry, so it must be supplied; the binary header
/// embeds it.
#[derive(Debug, Clone, Copy)]
pub enum EventFormat {
    Csv { width: u16, height: u16 },
    Bin,
}

const BIN_MAGIC: &[u8; 4] = b"EVS1";
const BIN_RECORD_LEN: usize = 16;
const FRAME_MAGIC: &[u8; 4] = b"EVF1";

/// Parses raw bytes in the declared format into a validated stream.
///
/// Every record is preserved; malformed records, polarity outside `{0, 1}`,
/// out-of-bounds coordinates, and timestamp regressions are rejected with
/// their line number (CSV) or byte offset (binary).
pub fn parse_events(bytes: &[u8], format: EventFormat) -> Result<EventStream, EventError> {
    match format {
        EventFormat::Csv { width, height } => parse_csv(bytes, width, height),
        EventFormat::Bin => parse_bin(bytes),
    }
}

fn parse_csv(bytes: &[u8], width: u16, height: u16) -> Result<EventStream, EventError> {
    let text = std::str::from_utf8(bytes).map_err(|e| EventError::Malformed {
        pos: 0,
        reason: format!("invalid utf-8: {e}"),
    })?;
    let mut events = Vec::new();
    let mut prev_t = 0u64;
    for (idx, line) in text.split('\n').enumerate() {
        let pos = idx + 1;
        if line.is_empty() {
            // Only a trailing newline is tolerated.
            if idx == text.split('\n').count() - 1 {
                continue;
            }
            return Err(EventError::Malformed {
                pos,
                reason: "empty line".into(),
            });
        }
        let mut fields = line.split(',');
        let mut next = |name: &str| {
            fields.next().ok_or_else(|| EventError::Malformed {
                pos,
                reason: format!("missing field {name}"),
            })
        };
        let t: u64 = parse_field(next("t")?, "t", pos)?;
        let x: u16 = parse_field(next("x")?, "x", pos)?;
        let y: u16 = parse_field(next("y")?, "y", pos)?;
        let p_raw: u8 = parse_field(next("p")?, "p", pos)?;
        if fields.next().is_some() {
            return Err(EventError::Malformed {
                pos,
                reason: "extra fields".into(),
            });
        }
        let p = Polarity::from_u8(p_raw).ok_or(EventError::BadPolarity { pos, value: p_raw })?;
        validate_record(pos, t, x, y, width, height, &mut prev_t, !events.is_empty())?;
        events.push(Event { t, x, y, p });
    }
    Ok(EventStream::from_validated(width, height, events))
}

fn parse_field<T: std::str::FromStr>(s: &str, name: &str, pos: usize) -> Result<T, EventError>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e| EventError::Malformed {
        pos,
        reason: format!("field {name} ({s:?}): {e}"),
    })
}

fn validate_record(
    pos: usize,
    t: u64,
    x: u16,
    y: u16,
    width: u16,
    height: u16,
    prev_t: &mut u64,
    has_prev: bool,
) -> Result<(), EventError> {
    if x >= width || y >= height {
        return Err(EventError::OutOfBounds {
            pos,
            x,
            y,
            width,
            height,
        });
    }
    if has_prev && t < *prev_t {
        return Err(EventError::TimestampRegression {
            pos,
            t,
            prev: *prev_t,
        });
    }
    *prev_t = t;
    Ok(())
}

fn parse_bin(bytes: &[u8]) -> Result<EventStream, EventError> {
    if bytes.len() < 8 {
        return Err(EventError::Truncated(format!(
            "header needs 8 bytes, got {}",
            bytes.len()
        )));
    }
    if &bytes[0..4] != BIN_MAGIC {
        return Err(EventError::BadMagic { expected: "EVS1" });
    }
    let width = u16::from_le_bytes([bytes[4], bytes[5]]);
    let height = u16::from_le_bytes([bytes[6], bytes[7]]);
    let body = &bytes[8..];
    if body.len() % BIN_RECORD_LEN != 0 {
        return Err(EventError::Truncated(format!(
            "{} trailing bytes after last whole record",
            body.len() % BIN_RECORD_LEN
        )));
    }
    let mut events = Vec::with_capacity(body.len() / BIN_RECORD_LEN);
    let mut prev_t = 0u64;
    for (rec_idx, rec) in body.chunks_exact(BIN_RECORD_LEN).enumerate() {
        let pos = 8 + rec_idx * BIN_RECORD_LEN;
        let t = u64::from_le_bytes(rec[0..8].try_into().unwrap());
        let x = u16::from_le_bytes([rec[8], rec[9]]);
        let y = u16::from_le_bytes([rec[10], rec[11]]);
        let p_raw = rec[12];
        if rec[13..16] != [0, 0, 0] {
            return Err(EventError::Malformed {
                pos,
                reason: "nonzero pad bytes".into(),
            });
        }
        let p = Polarity::from_u8(p_raw).ok_or(EventError::BadPolarity { pos, value: p_raw })?;
        validate_record(pos, t, x, y, width, height, &mut prev_t, !events.is_empty())?;
        events.push(Event { t, x, y, p });
    }
    Ok(EventStream::from_validated(width, height, events))
}

/// Encodes a stream as `t,x,y,p` CSV lines.
pub fn serialize_csv(stream: &EventStream) -> Vec<u8> {
    let mut out = String::new();
    for ev in stream.events() {
        out.push_str(&format!("{},{},{},{}\n", ev.t, ev.x, ev.y, ev.p.as_u8()));
    }
    out.into_bytes()
}

/// Encodes a stream in the EVS1 binary layout.
pub fn serialize_bin(stream: &EventStream) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + stream.len() * BIN_RECORD_LEN);
    out.extend_from_slice(BIN_MAGIC);
    out.extend_from_slice(&stream.width().to_le_bytes());
    out.extend_from_slice(&stream.height().to_le_bytes());
    for ev in stream.events() {
        out.extend_from_slice(&ev.t.to_le_bytes());
        out.extend_from_slice(&ev.x.to_le_bytes());
        out.extend_from_slice(&ev.y.to_le_bytes());
        out.push(ev.p.as_u8());
        out.extend_from_slice(&[0, 0, 0]);
    }
    out
}

/// Per-window event counts with shape `[J, 2, H, W]`.
///
/// Cell `(j, p, y, x)` counts events at `(x, y)` with polarity channel `p`
/// whose timestamp fell in window `j`. The final, possibly partial, window is
/// kept.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventFrameTensor {
    frames: Array4<u32>,
    window_us: u64,
    t0: u64,
}

impl EventFrameTensor {
    pub fn frames(&self) -> &Array4<u32> {
        &self.frames
    }

    pub fn num_frames(&self) -> usize {
        self.frames.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.frames.shape()[2]
    }

    pub fn width(&self) -> usize {
        self.frames.shape()[3]
    }

    pub fn window_us(&self) -> u64 {
        self.window_us
    }

    /// Anchor timestamp of window 0.
    pub fn t0(&self) -> u64 {
        self.t0
    }

    pub fn total_count(&self) -> u64 {
        self.frames.iter().map(|&c| c as u64).sum()
    }
}

/// Integrates a stream into event frames anchored at its first event.
///
/// `J = ceil(span / window_us)` with `span = t_last - t0 + 1`; an empty
/// stream yields zero frames.
pub fn integrate_frames(
    stream: &EventStream,
    window_us: u64,
) -> Result<EventFrameTensor, EventError> {
    let anchor = stream.t0().unwrap_or(0);
    integrate_frames_from(stream, window_us, anchor)
}

/// Integrates with an explicit window-0 anchor.
///
/// Useful when several slices of one recording must share a common window
/// grid; `anchor` must not exceed the first event timestamp.
pub fn integrate_frames_from(
    stream: &EventStream,
    window_us: u64,
    anchor: u64,
) -> Result<EventFrameTensor, EventError> {
    if window_us == 0 {
        return Err(EventError::ZeroWindow);
    }
    let (h, w) = (stream.height() as usize, stream.width() as usize);
    let num_frames = match stream.events().last() {
        None => 0u64,
        Some(last) => {
            let t0 = stream.t0().unwrap();
            if anchor > t0 {
                return Err(EventError::AnchorAfterFirst { anchor, t0 });
            }
            let span = last.t - anchor + 1;
            span.div_ceil(window_us)
        }
    };
    let cells = num_frames
        .checked_mul(2)
        .and_then(|v| v.checked_mul(h as u64))
        .and_then(|v| v.checked_mul(w as u64))
        .filter(|&v| v <= (isize::MAX as u64) / 8)
        .ok_or(EventError::FrameTensorTooLarge { frames: num_frames })?;
    let _ = cells;
    let mut frames = Array4::<u32>::zeros((num_frames as usize, 2, h, w));
    for ev in stream.events() {
        let j = ((ev.t - anchor) / window_us) as usize;
        frames[[j, ev.p.channel(), ev.y as usize, ev.x as usize]] += 1;
    }
    Ok(EventFrameTensor {
        frames,
        window_us,
        t0: anchor,
    })
}

/// Splits a stream at the given timestamps into `boundaries.len() + 1`
/// sub-streams.
///
/// Sub-stream `i` holds events with `boundaries[i-1] <= t < boundaries[i]`
/// (half-open, first unbounded below, last unbounded above). Concatenating
/// the pieces in order reproduces the input.
pub fn slice_stream(
    stream: &EventStream,
    boundaries_us: &[u64],
) -> Result<Vec<EventStream>, EventError> {
    if boundaries_us.windows(2).any(|w| w[0] >= w[1]) {
        return Err(EventError::UnsortedBoundaries);
    }
    let mut out = Vec::with_capacity(boundaries_us.len() + 1);
    let events = stream.events();
    let mut start = 0usize;
    for &b in boundaries_us {
        let end = start + events[start..].partition_point(|e| e.t < b);
        out.push(EventStream::from_validated(
            stream.width(),
            stream.height(),
            events[start..end].to_vec(),
        ));
        start = end;
    }
    out.push(EventStream::from_validated(
        stream.width(),
        stream.height(),
        events[start..].to_vec(),
    ));
    Ok(out)
}

/// Encodes a frame tensor in the EVF1 layout: magic, `u32 J`, `u32 H`,
/// `u32 W`, `u64 window_us`, then `J*2*H*W` little-endian `u16` counts,
/// saturating at 65535.
pub fn frame_tensor_to_bytes(tensor: &EventFrameTensor) -> Vec<u8> {
    let (j, _, h, w) = tensor.frames.dim();
    let mut out = Vec::with_capacity(24 + j * 2 * h * w * 2);
    out.extend_from_slice(FRAME_MAGIC);
    out.extend_from_slice(&(j as u32).to_le_bytes());
    out.extend_from_slice(&(h as u32).to_le_bytes());
    out.extend_from_slice(&(w as u32).to_le_bytes());
    out.extend_from_slice(&tensor.window_us.to_le_bytes());
    for &c in tensor.frames.iter() {
        out.extend_from_slice(&(c.min(u16::MAX as u32) as u16).to_le_bytes());
    }
    out
}

/// Decodes an EVF1 frame tensor. The anchor timestamp is not stored and
/// reads back as zero.
pub fn frame_tensor_from_bytes(bytes: &[u8]) -> Result<EventFrameTensor, EventError> {
    if bytes.len() < 24 {
        return Err(EventError::Truncated(format!(
            "header needs 24 bytes, got {}",
            bytes.len()
        )));
    }
    if &bytes[0..4] != FRAME_MAGIC {
        return Err(EventError::BadMagic { expected: "EVF1" });
    }
    let j = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let h = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let w = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let window_us = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    if window_us == 0 {
        return Err(EventError::ZeroWindow);
    }
    let expected = j
        .checked_mul(2)
        .and_then(|v| v.checked_mul(h))
        .and_then(|v| v.checked_mul(w))
        .and_then(|v| v.checked_mul(2))
        .ok_or(EventError::FrameTensorTooLarge { frames: j as u64 })?;
    let body = &bytes[24..];
    if body.len() != expected {
        return Err(EventError::Truncated(format!(
            "expected {} count bytes, got {}",
            expected,
            body.len()
        )));
    }
    let counts: Vec<u32> = body
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]) as u32)
        .collect();
    let frames = Array4::from_shape_vec((j, 2, h, w), counts).expect("shape checked");
    Ok(EventFrameTensor {
        frames,
        window_us,
        t0: 0,
    })
}
