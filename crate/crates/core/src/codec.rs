//! LT encoding and incremental peeling decoding.

use std::collections::VecDeque;

use crate::distributions::DegreeDistribution;
use crate::error::{invalid, Error, Result};
use crate::rng::{derive_seed, floyd_sample, SplitMix64, GENERATOR_VERSION};

/// `k` input symbols of `symbol_size` bytes each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceBlock {
    k: usize,
    symbol_size: usize,
    data: Vec<u8>,
}

impl SourceBlock {
    pub fn new(k: usize, symbol_size: usize, data: Vec<u8>) -> Result<Self> {
        if k == 0 || symbol_size == 0 {
            return Err(invalid("source block needs k >= 1 and symbol_size >= 1"));
        }
        if data.len() != k * symbol_size {
            return Err(invalid(format!(
                "data length {} != k * symbol_size = {}",
                data.len(),
                k * symbol_size
            )));
        }
        Ok(Self {
            k,
            symbol_size,
            data,
        })
    }

    /// Splits `bytes` into `k` symbols, zero-padding the last one.
    pub fn from_bytes(bytes: &[u8], k: usize) -> Result<Self> {
        if k == 0 {
            return Err(invalid("k must be at least 1"));
        }
        let symbol_size = bytes.len().div_ceil(k).max(1);
        let mut data = bytes.to_vec();
        data.resize(k * symbol_size, 0);
        Self::new(k, symbol_size, data)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn symbol_size(&self) -> usize {
        self.symbol_size
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn symbol(&self, i: usize) -> &[u8] {
        &self.data[i * self.symbol_size..(i + 1) * self.symbol_size]
    }
}

/// One output symbol.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedPacket {
    pub config_id: u8,
    pub seed: u64,
    pub k: u32,
    pub payload: Vec<u8>,
    /// Carried only in simulation; never serialized.
    pub neighbors: Option<Vec<u32>>,
}

/// Expands `(seed, config_id, k)` into a degree and a sorted set of distinct neighbors.
pub fn generate_neighbors(dist: &DegreeDistribution, config_id: u8, seed: u64) -> Vec<u32> {
    let k = dist.k() as u64;
    let mut rng = SplitMix64::new(derive_seed(seed, (k << 8) | config_id as u64));
    let degree = dist.sample(rng.next_f64());
    floyd_sample(&mut rng, k as u32, degree as u32)
}

pub(crate) fn xor_into(dst: &mut [u8], src: &[u8]) {
    for (a, b) in dst.iter_mut().zip(src) {
        *a ^= b;
    }
}

pub fn encode(
    block: &SourceBlock,
    dist: &DegreeDistribution,
    config_id: u8,
    seed: u64,
) -> Result<EncodedPacket> {
    if dist.k() != block.k() {
        return Err(invalid(format!(
            "distribution k = {} but block k = {}",
            dist.k(),
            block.k()
        )));
    }
    let neighbors = generate_neighbors(dist, config_id, seed);
    let mut payload = vec![0u8; block.symbol_size()];
    for &n in &neighbors {
        xor_into(&mut payload, block.symbol(n as usize));
    }
    Ok(EncodedPacket {
        config_id,
        seed,
        k: block.k() as u32,
        payload,
        neighbors: None,
    })
}

/// Reconstructs the neighbor set the encoder used for `packet`.
pub fn neighbors_of(packet: &EncodedPacket, dist: &DegreeDistribution) -> Result<Vec<u32>> {
    if packet.k as usize != dist.k() {
        return Err(invalid(format!(
            "packet k = {} but distribution k = {}",
            packet.k,
            dist.k()
        )));
    }
    if let Some(n) = &packet.neighbors {
        return Ok(n.clone());
    }
    Ok(generate_neighbors(dist, packet.config_id, packet.seed))
}

// Wire format, little-endian:
//   magic "MCLT" | version u8 | config_id u8 | reserved u16 | k u32 |
//   symbol_size u32 | seed u64 | payload | crc32c u32
pub const MAGIC: [u8; 4] = *b"MCLT";
pub const HEADER_LEN: usize = 24;
pub const TRAILER_LEN: usize = 4;

impl EncodedPacket {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len() + TRAILER_LEN);
        out.extend_from_slice(&MAGIC);
        out.push(GENERATOR_VERSION);
        out.push(self.config_id);
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(&self.k.to_le_bytes());
        out.extend_from_slice(&(self.payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.payload);
        let crc = crc32c::crc32c(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: String| Error::MalformedPacket(m);
        if bytes.len() < HEADER_LEN + TRAILER_LEN {
            return Err(bad(format!("{} bytes is shorter than a header", bytes.len())));
        }
        if bytes[0..4] != MAGIC {
            return Err(bad("bad magic".into()));
        }
        if bytes[4] != GENERATOR_VERSION {
            return Err(bad(format!("unsupported version {}", bytes[4])));
        }
        let config_id = bytes[5];
        if u16::from_le_bytes([bytes[6], bytes[7]]) != 0 {
            return Err(bad("reserved field is nonzero".into()));
        }
        let k = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        let symbol_size = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let seed = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
        if bytes.len() != HEADER_LEN + symbol_size + TRAILER_LEN {
            return Err(bad(format!(
                "length {} does not match symbol_size {symbol_size}",
                bytes.len()
            )));
        }
        let body_end = HEADER_LEN + symbol_size;
        let crc = u32::from_le_bytes(bytes[body_end..].try_into().unwrap());
        if crc32c::crc32c(&bytes[..body_end]) != crc {
            return Err(bad("crc32c mismatch".into()));
        }
        Ok(Self {
            config_id,
            seed,
            k,
            payload: bytes[HEADER_LEN..body_end].to_vec(),
            neighbors: None,
        })
    }
}

#[derive(Debug, Clone)]
struct Buffered {
    // Reduced neighbor set: only unrecovered indices. Empty means discarded.
    neighbors: Vec<u32>,
    payload: Vec<u8>,
}

/// Peeling decoder state for one receiver.
///
/// A `symbol_size` of zero runs the decoder on structure alone, which is what
/// the simulations use.
#[derive(Debug, Clone)]
pub struct DecoderState {
    k: usize,
    symbol_size: usize,
    recovered: Vec<bool>,
    data: Vec<u8>,
    unsolved: usize,
    buffer: Vec<Buffered>,
    // input index -> buffer slots that referenced it when buffered
    refs: Vec<Vec<u32>>,
    ripple: VecDeque<u32>,
    received: usize,
    per_config: Vec<usize>,
    recovery_order: Vec<u32>,
}

impl DecoderState {
    pub fn new(k: usize, symbol_size: usize) -> Self {
        Self {
            k,
            symbol_size,
            recovered: vec![false; k],
            data: vec![0; k * symbol_size],
            unsolved: k,
            buffer: Vec::new(),
            refs: vec![Vec::new(); k],
            ripple: VecDeque::new(),
            received: 0,
            per_config: Vec::new(),
            recovery_order: Vec::with_capacity(k),
        }
    }

    /// Structure-only decoder (no payloads).
    pub fn symbolic(k: usize) -> Self {
        Self::new(k, 0)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn symbol_size(&self) -> usize {
        self.symbol_size
    }

    pub fn unsolved(&self) -> usize {
        self.unsolved
    }

    pub fn is_complete(&self) -> bool {
        self.unsolved == 0
    }

    pub fn received(&self) -> usize {
        self.received
    }

    /// Received count for one configuration.
    pub fn received_from(&self, config_id: u8) -> usize {
        self.per_config.get(config_id as usize).copied().unwrap_or(0)
    }

    pub fn is_recovered(&self, index: usize) -> bool {
        self.recovered[index]
    }

    pub fn recovered_mask(&self) -> &[bool] {
        &self.recovered
    }

    /// Input indices in the order they were recovered.
    pub fn recovery_order(&self) -> &[u32] {
        &self.recovery_order
    }

    pub fn symbol(&self, index: usize) -> Option<&[u8]> {
        self.recovered[index]
            .then(|| &self.data[index * self.symbol_size..(index + 1) * self.symbol_size])
    }

    /// The decoded block, once every symbol is recovered.
    pub fn data(&self) -> Option<&[u8]> {
        self.is_complete().then_some(self.data.as_slice())
    }

    /// Live buffered symbols as (reduced neighbors, reduced payload).
    pub fn buffered(&self) -> impl Iterator<Item = (&[u32], &[u8])> {
        self.buffer
            .iter()
            .filter(|b| !b.neighbors.is_empty())
            .map(|b| (b.neighbors.as_slice(), b.payload.as_slice()))
    }

    /// Ingests a packet, regenerating its neighbors from `dist`.
    pub fn ingest_packet(&mut self, packet: &EncodedPacket, dist: &DegreeDistribution) -> Result<usize> {
        if packet.k as usize != self.k {
            return Err(invalid(format!(
                "packet k = {} but decoder k = {}",
                packet.k, self.k
            )));
        }
        if packet.payload.len() != self.symbol_size {
            return Err(invalid(format!(
                "payload of {} bytes, decoder expects {}",
                packet.payload.len(),
                self.symbol_size
            )));
        }
        let neighbors = neighbors_of(packet, dist)?;
        Ok(self.ingest(packet.config_id, &neighbors, &packet.payload))
    }

    /// Adds one received output symbol and peels to a fixpoint.
    /// Returns how many input symbols were newly recovered.
    pub fn ingest(&mut self, config_id: u8, neighbors: &[u32], payload: &[u8]) -> usize {
        debug_assert!(self.symbol_size == 0 || payload.len() == self.symbol_size);
        self.received += 1;
        let cfg = config_id as usize;
        if self.per_config.len() <= cfg {
            self.per_config.resize(cfg + 1, 0);
        }
        self.per_config[cfg] += 1;

        let mut reduced_payload = if self.symbol_size == 0 {
            Vec::new()
        } else {
            payload.to_vec()
        };
        let mut reduced = Vec::with_capacity(neighbors.len());
        for &n in neighbors {
            let i = n as usize;
            if self.recovered[i] {
                if self.symbol_size > 0 {
                    let sym = &self.data[i * self.symbol_size..(i + 1) * self.symbol_size];
                    xor_into(&mut reduced_payload, sym);
                }
            } else {
                reduced.push(n);
            }
        }
        if reduced.is_empty() {
            return 0;
        }
        let slot = self.buffer.len() as u32;
        for &n in &reduced {
            self.refs[n as usize].push(slot);
        }
        if reduced.len() == 1 {
            self.ripple.push_back(slot);
        }
        self.buffer.push(Buffered {
            neighbors: reduced,
            payload: reduced_payload,
        });
        self.drain_ripple()
    }

    fn drain_ripple(&mut self) -> usize {
        let before = self.unsolved;
        while let Some(slot) = self.ripple.pop_front() {
            let entry = &mut self.buffer[slot as usize];
            if entry.neighbors.len() != 1 {
                continue;
            }
            let index = entry.neighbors[0] as usize;
            entry.neighbors.clear();
            let payload = std::mem::take(&mut entry.payload);
            self.recover(index, &payload);
        }
        before - self.unsolved
    }

    fn recover(&mut self, index: usize, payload: &[u8]) {
        debug_assert!(!self.recovered[index]);
        self.recovered[index] = true;
        self.unsolved -= 1;
        self.recovery_order.push(index as u32);
        let size = self.symbol_size;
        if size > 0 {
            self.data[index * size..(index + 1) * size].copy_from_slice(payload);
        }
        let slots = std::mem::take(&mut self.refs[index]);
        for slot in slots {
            let entry = &mut self.buffer[slot as usize];
            let Some(pos) = entry.neighbors.iter().position(|&n| n as usize == index) else {
                continue;
            };
            entry.neighbors.swap_remove(pos);
            if size > 0 {
                xor_into(&mut entry.payload, &self.data[index * size..(index + 1) * size]);
            }
            match entry.neighbors.len() {
                0 => entry.payload = Vec::new(),
                1 => self.ripple.push_back(slot),
                _ => {}
            }
        }
    }
}

pub fn is_complete(state: &DecoderState) -> bool {
    state.is_complete()
}

pub fn unsolved(state: &DecoderState) -> usize {
    state.unsolved()
}
