//! Finite-alphabet distribution estimation under an `l`-bit budget per
//! terminal.
//!
//! Symbols are 0-indexed (`0..k`). Every protocol except [`idealized_round`]
//! produces a [`Transcript`] of `m` messages of exactly `l` bits each.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::Serialize;

use crate::error::{precondition, Error, Result};
use crate::regimes::RegimeCase;
use crate::rng::{stream, StreamRng, TAG_PUBLIC, TAG_TERMINAL};
use crate::wavelet::ceil_log2;

/// An `l`-bit message, most significant bit first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    len: u32,
    bytes: Vec<u8>,
}

impl Message {
    pub fn zeros(len: u32) -> Self {
        Self { len, bytes: vec![0; (len as usize).div_ceil(8)] }
    }

    pub fn len(&self) -> u32 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn bit(&self, i: u32) -> bool {
        assert!(i < self.len, "bit {i} of {}-bit message", self.len);
        self.bytes[(i / 8) as usize] >> (7 - i % 8) & 1 == 1
    }

    pub fn set_bit(&mut self, i: u32, v: bool) {
        assert!(i < self.len, "bit {i} of {}-bit message", self.len);
        let mask = 1u8 << (7 - i % 8);
        if v {
            self.bytes[(i / 8) as usize] |= mask;
        } else {
            self.bytes[(i / 8) as usize] &= !mask;
        }
    }

    /// Writes `value` as a `width`-bit big-endian field at `offset`.
    pub fn write_uint(&mut self, offset: u32, width: u32, value: u64) -> Result<()> {
        if offset + width > self.len {
            return Err(Error::BudgetTooSmall(format!(
                "field [{offset}, {}) exceeds {}-bit message",
                offset + width,
                self.len
            )));
        }
        if width < 64 && value >> width != 0 {
            return Err(precondition(format!("value {value} does not fit in {width} bits")));
        }
        for j in 0..width {
            self.set_bit(offset + j, value >> (width - 1 - j) & 1 == 1);
        }
        Ok(())
    }

    pub fn read_uint(&self, offset: u32, width: u32) -> u64 {
        (0..width).fold(0u64, |acc, j| acc << 1 | self.bit(offset + j) as u64)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }
}

/// The ordered messages `B_1, ..., B_m` of one round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transcript {
    l: u32,
    messages: Vec<Message>,
}

impl Transcript {
    pub fn new(l: u32, messages: Vec<Message>) -> Result<Self> {
        if let Some(bad) = messages.iter().find(|msg| msg.len() != l) {
            return Err(Error::Transcript(format!("message of {} bits in an {l}-bit transcript", bad.len())));
        }
        Ok(Self { l, messages })
    }

    pub fn l(&self) -> u32 {
        self.l
    }

    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    pub fn total_bits(&self) -> u64 {
        self.l as u64 * self.messages.len() as u64
    }

    /// `m` and `l` as little-endian `u32`, then each message in `⌈l/8⌉` bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.messages.len() * (self.l as usize).div_ceil(8));
        out.extend_from_slice(&(self.messages.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.l.to_le_bytes());
        for msg in &self.messages {
            out.extend_from_slice(msg.as_bytes());
        }
        out
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        if data.len() < 8 {
            return Err(Error::Transcript("truncated header".into()));
        }
        let m = u32::from_le_bytes(data[0..4].try_into().unwrap()) as usize;
        let l = u32::from_le_bytes(data[4..8].try_into().unwrap());
        let width = (l as usize).div_ceil(8);
        let body = &data[8..];
        if body.len() != m * width {
            return Err(Error::Transcript(format!("expected {} body bytes, found {}", m * width, body.len())));
        }
        let pad_mask = if l % 8 == 0 { 0 } else { 0xFFu8 >> (l % 8) };
        let messages = body
            .chunks(width.max(1))
            .take(m)
            .map(|chunk| {
                if width > 0 && chunk[width - 1] & pad_mask != 0 {
                    return Err(Error::Transcript("non-zero padding bits".into()));
                }
                Ok(Message { len: l, bytes: chunk.to_vec() })
            })
            .collect::<Result<Vec<_>>>()?;
        if messages.len() != m {
            return Err(Error::Transcript("zero-width messages are not serialisable".into()));
        }
        Ok(Self { l, messages })
    }
}

/// Estimate of `p_W`; may leave the simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct DistEstimate {
    pub values: Vec<f64>,
}

impl DistEstimate {
    pub fn k(&self) -> usize {
        self.values.len()
    }

    pub fn sq_error(&self, p: &[f64]) -> f64 {
        self.values.iter().zip(p).map(|(a, b)| (a - b).powi(2)).sum()
    }

    /// Euclidean projection onto the probability simplex.
    pub fn project_simplex(&self) -> DistEstimate {
        let mut u = self.values.clone();
        u.sort_by(|a, b| b.total_cmp(a));
        let mut acc = 0.0;
        let mut theta = 0.0;
        for (j, &v) in u.iter().enumerate() {
            acc += v;
            let t = (acc - 1.0) / (j + 1) as f64;
            if v - t > 0.0 {
                theta = t;
            }
        }
        DistEstimate { values: self.values.iter().map(|v| (v - theta).max(0.0)).collect() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum ProtocolVariant {
    CountFrames,
    QuantizedFrames { bits: u32 },
    RandomPartition,
    Idealized,
}

impl ProtocolVariant {
    pub fn name(&self) -> String {
        match self {
            ProtocolVariant::CountFrames => "count_frames".into(),
            ProtocolVariant::QuantizedFrames { bits } => format!("quantized_frames_b{bits}"),
            ProtocolVariant::RandomPartition => "random_partition".into(),
            ProtocolVariant::Idealized => "idealized".into(),
        }
    }
}

impl std::fmt::Display for ProtocolVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.name())
    }
}

impl std::str::FromStr for ProtocolVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "count_frames" | "countframes" => Ok(ProtocolVariant::CountFrames),
            "random_partition" | "randompartition" => Ok(ProtocolVariant::RandomPartition),
            "idealized" => Ok(ProtocolVariant::Idealized),
            _ => {
                let bits = s
                    .strip_prefix("quantized_frames_b")
                    .or_else(|| s.strip_prefix("quantized_frames:"))
                    .ok_or_else(|| Error::Parse(format!("unknown inner protocol `{s}`")))?;
                let bits = bits.parse().map_err(|_| Error::Parse(format!("bad bit width in `{s}`")))?;
                Ok(ProtocolVariant::QuantizedFrames { bits })
            }
        }
    }
}

/// Bits needed to send a count in `0..=n`.
pub fn count_bits(n: u64) -> u32 {
    ceil_log2(n + 1).max(1)
}

/// Round-robin frame allocation shared by the two frame protocols.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameLayout {
    pub k: usize,
    pub m: usize,
    pub frame_bits: u32,
    /// Frames per encoder, `⌊l / b⌋ ∧ k`.
    pub frames: usize,
    /// Frames per symbol, `⌊m l' / k⌋`.
    pub per_symbol: usize,
}

impl FrameLayout {
    pub fn new(k: usize, m: usize, l: u32, frame_bits: u32) -> Result<Self> {
        if k == 0 || m == 0 || frame_bits == 0 {
            return Err(precondition("frame layout needs k, m, b ≥ 1"));
        }
        let frames = ((l / frame_bits) as usize).min(k);
        let per_symbol = m * frames / k;
        if per_symbol == 0 {
            return Err(Error::BudgetTooSmall(format!(
                "m = {m} encoders with {frames} frames of {frame_bits} bits cannot cover k = {k} symbols"
            )));
        }
        Ok(Self { k, m, frame_bits, frames, per_symbol })
    }

    /// Symbol carried by frame `j` of encoder `i`, if the frame is used.
    pub fn symbol(&self, i: usize, j: usize) -> Option<usize> {
        let g = i * self.frames + j;
        (j < self.frames && g < self.per_symbol * self.k).then_some(g % self.k)
    }
}

/// One encoder/decoder pair; encoders run in index order and may read the
/// messages already sent.
pub trait InnerProtocol: Send + Sync {
    fn variant(&self) -> ProtocolVariant;

    fn alphabet(&self) -> usize;

    fn bits(&self) -> u32;

    fn encode(&self, i: usize, samples: &[usize], prev: &[Message], rng: &mut StreamRng) -> Result<Message>;

    fn decode(&self, transcript: &Transcript) -> Result<DistEstimate>;
}

fn check_samples(k: usize, samples: &[usize]) -> Result<()> {
    match samples.iter().find(|&&w| w >= k) {
        Some(&w) => Err(precondition(format!("symbol {w} outside alphabet 0..{k}"))),
        None => Ok(()),
    }
}

fn local_counts(k: usize, samples: &[usize]) -> Vec<u64> {
    let mut c = vec![0u64; k];
    for &w in samples {
        c[w] += 1;
    }
    c
}

/// Each frame carries an encoder's exact count of its symbol.
#[derive(Debug, Clone)]
pub struct CountFrames {
    layout: FrameLayout,
    n: u64,
    l: u32,
}

impl CountFrames {
    pub fn new(k: usize, m: usize, n: u64, l: u32) -> Result<Self> {
        let b = count_bits(n);
        if l < b {
            return Err(Error::BudgetTooSmall(format!("l = {l} below one {b}-bit count frame")));
        }
        Ok(Self { layout: FrameLayout::new(k, m, l, b)?, n, l })
    }

    pub fn layout(&self) -> &FrameLayout {
        &self.layout
    }
}

impl InnerProtocol for CountFrames {
    fn variant(&self) -> ProtocolVariant {
        ProtocolVariant::CountFrames
    }

    fn alphabet(&self) -> usize {
        self.layout.k
    }

    fn bits(&self) -> u32 {
        self.l
    }

    fn encode(&self, i: usize, samples: &[usize], _prev: &[Message], _rng: &mut StreamRng) -> Result<Message> {
        check_samples(self.layout.k, samples)?;
        if samples.len() as u64 != self.n {
            return Err(precondition(format!("encoder {i} holds {} samples, expected {}", samples.len(), self.n)));
        }
        let counts = local_counts(self.layout.k, samples);
        let b = self.layout.frame_bits;
        let mut msg = Message::zeros(self.l);
        for j in 0..self.layout.frames {
            if let Some(w) = self.layout.symbol(i, j) {
                msg.write_uint(j as u32 * b, b, counts[w])?;
            }
        }
        Ok(msg)
    }

    fn decode(&self, t: &Transcript) -> Result<DistEstimate> {
        let lay = &self.layout;
        let mut num = vec![0u64; lay.k];
        for (i, msg) in t.messages().iter().enumerate() {
            for j in 0..lay.frames {
                if let Some(w) = lay.symbol(i, j) {
                    num[w] += msg.read_uint(j as u32 * lay.frame_bits, lay.frame_bits);
                }
            }
        }
        let denom = (lay.per_symbol as u64 * self.n) as f64;
        Ok(DistEstimate { values: num.iter().map(|&c| c as f64 / denom).collect() })
    }
}

/// Each frame carries a `b`-bit dithered rounding of `n_w / n`.
#[derive(Debug, Clone)]
pub struct QuantizedFrames {
    layout: FrameLayout,
    l: u32,
}

impl QuantizedFrames {
    pub fn new(k: usize, m: usize, l: u32, bits: u32) -> Result<Self> {
        if bits == 0 || bits > l || bits > 52 {
            return Err(precondition(format!("frame width b = {bits} must lie in [1, min(l, 52)]")));
        }
        Ok(Self { layout: FrameLayout::new(k, m, l, bits)?, l })
    }

    pub fn layout(&self) -> &FrameLayout {
        &self.layout
    }

    fn levels(&self) -> f64 {
        ((1u64 << self.layout.frame_bits) - 1) as f64
    }
}

impl InnerProtocol for QuantizedFrames {
    fn variant(&self) -> ProtocolVariant {
        ProtocolVariant::QuantizedFrames { bits: self.layout.frame_bits }
    }

    fn alphabet(&self) -> usize {
        self.layout.k
    }

    fn bits(&self) -> u32 {
        self.l
    }

    fn encode(&self, i: usize, samples: &[usize], _prev: &[Message], rng: &mut StreamRng) -> Result<Message> {
        check_samples(self.layout.k, samples)?;
        if samples.is_empty() {
            return Err(precondition("encoder holds no samples"));
        }
        let counts = local_counts(self.layout.k, samples);
        let levels = self.levels();
        let b = self.layout.frame_bits;
        let mut msg = Message::zeros(self.l);
        for j in 0..self.layout.frames {
            if let Some(w) = self.layout.symbol(i, j) {
                let x = counts[w] as f64 / samples.len() as f64 * levels;
                let base = x.floor();
                let up = rng.random::<f64>() < x - base;
                let v = (base as u64 + up as u64).min(levels as u64);
                msg.write_uint(j as u32 * b, b, v)?;
            }
        }
        Ok(msg)
    }

    fn decode(&self, t: &Transcript) -> Result<DistEstimate> {
        let lay = &self.layout;
        let mut acc = vec![0.0; lay.k];
        for (i, msg) in t.messages().iter().enumerate() {
            for j in 0..lay.frames {
                if let Some(w) = lay.symbol(i, j) {
                    acc[w] += msg.read_uint(j as u32 * lay.frame_bits, lay.frame_bits) as f64;
                }
            }
        }
        let denom = lay.per_symbol as f64 * self.levels();
        Ok(DistEstimate { values: acc.iter().map(|a| a / denom).collect() })
    }
}

/// Public-coin random partition into equal cells; each encoder announces the
/// cell of one uniformly chosen local sample.
#[derive(Debug, Clone)]
pub struct RandomPartition {
    k: usize,
    l: u32,
    cells: usize,
    k_pad: usize,
    public_seed: u64,
}

impl RandomPartition {
    pub fn new(k: usize, l: u32, public_seed: u64) -> Result<Self> {
        if k == 0 || l == 0 {
            return Err(precondition("random partition needs k ≥ 1 and l ≥ 1"));
        }
        let cells = 1usize << l.min(ceil_log2(k as u64));
        let k_pad = k.div_ceil(cells) * cells;
        Ok(Self { k, l, cells, k_pad, public_seed })
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn padded_alphabet(&self) -> usize {
        self.k_pad
    }

    /// Estimator coefficients `(a, c)` with `p̂(w) = a 1{w ∈ cell} + c`.
    ///
    /// A fixed symbol shares the announced cell with a different sample's
    /// symbol with probability `β = (size−1)/(k_pad−1)`, so
    /// `P[w ∈ cell] = p(w)(1−β) + β`; inverting gives the pair below.
    pub fn coefficients(&self) -> (f64, f64) {
        if self.k_pad == 1 {
            return (0.0, 1.0);
        }
        let size = (self.k_pad / self.cells) as f64;
        let kp = self.k_pad as f64;
        ((kp - 1.0) / (kp - size), -(size - 1.0) / (kp - size))
    }

    /// Public permutation of encoder `i`: symbol `w` lies in cell `perm[w] / size`.
    fn permutation(&self, i: usize) -> Vec<usize> {
        let mut perm: Vec<usize> = (0..self.k_pad).collect();
        perm.shuffle(&mut stream(self.public_seed, &[TAG_PUBLIC, i as u64]));
        perm
    }
}

impl InnerProtocol for RandomPartition {
    fn variant(&self) -> ProtocolVariant {
        ProtocolVariant::RandomPartition
    }

    fn alphabet(&self) -> usize {
        self.k
    }

    fn bits(&self) -> u32 {
        self.l
    }

    fn encode(&self, i: usize, samples: &[usize], _prev: &[Message], rng: &mut StreamRng) -> Result<Message> {
        check_samples(self.k, samples)?;
        let w = *samples.choose(rng).ok_or_else(|| precondition("encoder holds no samples"))?;
        let size = self.k_pad / self.cells;
        let cell = self.permutation(i)[w] / size;
        let mut msg = Message::zeros(self.l);
        let width = self.l.min(ceil_log2(self.cells as u64));
        msg.write_uint(self.l - width, width, cell as u64)?;
        Ok(msg)
    }

    fn decode(&self, t: &Transcript) -> Result<DistEstimate> {
        let m = t.messages().len();
        if m == 0 {
            return Err(precondition("empty transcript"));
        }
        let (a, c) = self.coefficients();
        let size = self.k_pad / self.cells;
        let width = self.l.min(ceil_log2(self.cells as u64));
        let mut hits = vec![0u64; self.k];
        for (i, msg) in t.messages().iter().enumerate() {
            let cell = msg.read_uint(self.l - width, width) as usize;
            let perm = self.permutation(i);
            for (w, h) in hits.iter_mut().enumerate() {
                if perm[w] / size == cell {
                    *h += 1;
                }
            }
        }
        Ok(DistEstimate { values: hits.iter().map(|&h| a * h as f64 / m as f64 + c).collect() })
    }
}

/// Pooled empirical distribution of all samples (no budget).
pub fn idealized_round(k: usize, samples: &[Vec<usize>]) -> Result<DistEstimate> {
    let mut counts = vec![0u64; k];
    let mut total = 0u64;
    for batch in samples {
        check_samples(k, batch)?;
        for &w in batch {
            counts[w] += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(precondition("no samples"));
    }
    Ok(DistEstimate { values: counts.iter().map(|&c| c as f64 / total as f64).collect() })
}

/// Builds the budgeted protocol for `variant`; `None` for [`ProtocolVariant::Idealized`].
pub fn build(
    variant: ProtocolVariant,
    k: usize,
    m: usize,
    n: u64,
    l: u32,
    public_seed: u64,
) -> Result<Option<Box<dyn InnerProtocol>>> {
    Ok(match variant {
        ProtocolVariant::CountFrames => Some(Box::new(CountFrames::new(k, m, n, l)?)),
        ProtocolVariant::QuantizedFrames { bits } => Some(Box::new(QuantizedFrames::new(k, m, l, bits)?)),
        ProtocolVariant::RandomPartition => Some(Box::new(RandomPartition::new(k, l, public_seed)?)),
        ProtocolVariant::Idealized => None,
    })
}

#[derive(Debug, Clone)]
pub struct RoundOutput {
    pub transcript: Option<Transcript>,
    pub estimate: DistEstimate,
}

/// Runs encoders `0..m` in order, then the decoder. Encoder `i` draws from
/// the stream `(seed, TERMINAL, i)`; public coins come from `(seed, PUBLIC)`.
pub fn run_round(variant: ProtocolVariant, k: usize, l: u32, samples: &[Vec<usize>], seed: u64) -> Result<RoundOutput> {
    let m = samples.len();
    if m == 0 {
        return Err(precondition("no encoders"));
    }
    let n = samples[0].len() as u64;
    if samples.iter().any(|s| s.len() as u64 != n) {
        return Err(precondition("encoders hold different sample counts"));
    }
    let public = crate::rng::derive_seed(seed, &[TAG_PUBLIC]);
    let Some(proto) = build(variant, k, m, n, l, public)? else {
        return Ok(RoundOutput { transcript: None, estimate: idealized_round(k, samples)? });
    };
    run_with(proto.as_ref(), samples, seed)
}

pub fn run_with(proto: &dyn InnerProtocol, samples: &[Vec<usize>], seed: u64) -> Result<RoundOutput> {
    let mut messages = Vec::with_capacity(samples.len());
    for (i, batch) in samples.iter().enumerate() {
        let mut rng = stream(seed, &[TAG_TERMINAL, i as u64]);
        let msg = proto.encode(i, batch, &messages, &mut rng)?;
        debug_assert_eq!(msg.len(), proto.bits());
        messages.push(msg);
    }
    let transcript = Transcript::new(proto.bits(), messages)?;
    let estimate = proto.decode(&transcript)?;
    Ok(RoundOutput { transcript: Some(transcript), estimate })
}

/// Maps a regime case to an inner protocol, falling back to
/// [`ProtocolVariant::RandomPartition`] when the frame protocols cannot
/// cover the alphabet.
pub fn select_protocol(case: RegimeCase, k: usize, m: usize, n: u64, l: u32) -> ProtocolVariant {
    let cb = count_bits(n);
    let chosen = match case {
        RegimeCase::Case1 => ProtocolVariant::RandomPartition,
        RegimeCase::Case2 | RegimeCase::Case4 => ProtocolVariant::QuantizedFrames { bits: l.min(cb) },
        RegimeCase::Case3 | RegimeCase::Case5 if l >= cb => ProtocolVariant::CountFrames,
        RegimeCase::Case3 => ProtocolVariant::QuantizedFrames { bits: l.min(4) },
        RegimeCase::Case5 => ProtocolVariant::QuantizedFrames { bits: l.min(cb) },
    };
    let fits = match chosen {
        ProtocolVariant::CountFrames => FrameLayout::new(k, m, l, cb).is_ok(),
        ProtocolVariant::QuantizedFrames { bits } => FrameLayout::new(k, m, l, bits).is_ok(),
        _ => true,
    };
    if fits {
        chosen
    } else {
        ProtocolVariant::RandomPartition
    }
}
