//! Canonical Huffman coding of codeword-index streams and the `PQB1` bitstream container.
//!
//! Dictionaries are stored as per-symbol code lengths only; codes are assigned canonically
//! (shorter codes first, ties in symbol order) and written MSB-first. Indices are serialized
//! position-major, subspace-minor, matching [`IndexTensor`] layout.
//!
//! ```text
//! PQB1: magic | version u16 | h,w,c,d,K u32 | codebook hash u64
//!       | dict mode u8 (0: external id u32, 1: K code lengths u8)
//!       | payload_bits u32 | payload bytes (last byte zero-padded)
//! ```

use std::path::Path;

use crate::error::{config_err, format_err, Error, Result};
use crate::format::{fnv1a32, read_file, write_file, ByteReader, ByteWriter};
use crate::pq::{read_config, write_config, IndexTensor, PQConfig, SharedCodebook};

pub const STREAM_MAGIC: &[u8; 4] = b"PQB1";
pub const DICT_MAGIC: &[u8; 4] = b"PQD1";
const STREAM_VERSION: u16 = 1;
const DICT_VERSION: u16 = 1;
const MAX_CODE_LEN: u8 = 64;

/// Canonical Huffman code over symbols `0..K`. A length of 0 marks an unused symbol.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntropyDictionary {
    lengths: Vec<u8>,
    codes: Vec<u64>,
    decoder: CanonicalDecoder,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct CanonicalDecoder {
    /// Per code length `l` (index `l`): first canonical code, number of codes, offset into
    /// `sorted`.
    first: Vec<u64>,
    count: Vec<u64>,
    offset: Vec<usize>,
    sorted: Vec<u32>,
    max_len: u8,
}

impl EntropyDictionary {
    /// Build from explicit code lengths, validating the Kraft inequality.
    pub fn from_lengths(lengths: Vec<u8>) -> Result<Self> {
        if lengths.iter().all(|&l| l == 0) {
            return Err(config_err!("dictionary has no used symbols"));
        }
        if let Some(&l) = lengths.iter().find(|&&l| l > MAX_CODE_LEN) {
            return Err(Error::Encoding(format!("code length {l} exceeds {MAX_CODE_LEN}")));
        }
        let kraft: u128 = lengths.iter().filter(|&&l| l > 0).map(|&l| 1u128 << (64 - l)).sum();
        if kraft > 1u128 << 64 {
            return Err(Error::Encoding("code lengths violate the Kraft inequality".into()));
        }

        let mut sorted: Vec<u32> = (0..lengths.len() as u32).filter(|&s| lengths[s as usize] > 0).collect();
        sorted.sort_by_key(|&s| (lengths[s as usize], s));
        let max_len = lengths[*sorted.last().unwrap() as usize];

        let mut codes = vec![0u64; lengths.len()];
        let mut first = vec![0u64; max_len as usize + 1];
        let mut count = vec![0u64; max_len as usize + 1];
        let mut offset = vec![0usize; max_len as usize + 1];
        let mut code: u64 = 0;
        let mut prev_len = lengths[sorted[0] as usize];
        first[prev_len as usize] = 0;
        for (pos, &s) in sorted.iter().enumerate() {
            let len = lengths[s as usize];
            if len != prev_len {
                code <<= len - prev_len;
                prev_len = len;
                first[len as usize] = code;
                offset[len as usize] = pos;
            }
            if count[len as usize] == 0 {
                first[len as usize] = code;
                offset[len as usize] = pos;
            }
            codes[s as usize] = code;
            count[len as usize] += 1;
            code = code.wrapping_add(1);
        }
        Ok(Self { lengths, codes, decoder: CanonicalDecoder { first, count, offset, sorted, max_len } })
    }

    pub fn symbol_count(&self) -> usize {
        self.lengths.len()
    }

    pub fn code_lengths(&self) -> &[u8] {
        &self.lengths
    }

    pub fn code(&self, symbol: u32) -> Option<(u64, u8)> {
        let s = symbol as usize;
        match self.lengths.get(s) {
            Some(&l) if l > 0 => Some((self.codes[s], l)),
            _ => None,
        }
    }

    /// 32-bit identifier pinned by streams that reference an external dictionary.
    pub fn id(&self) -> u32 {
        let mut w = ByteWriter::new();
        w.u32(self.lengths.len() as u32).bytes(&self.lengths);
        fnv1a32(w.as_slice())
    }

    /// Bits needed to code a stream with this symbol histogram.
    pub fn cost(&self, histogram: &[u64]) -> Result<u64> {
        let mut bits = 0u64;
        for (s, &n) in histogram.iter().enumerate() {
            if n == 0 {
                continue;
            }
            match self.lengths.get(s) {
                Some(&l) if l > 0 => bits += n * u64::from(l),
                _ => return Err(Error::Encoding(format!("symbol {s} has no code"))),
            }
        }
        Ok(bits)
    }

    /// Bits spent sending this dictionary inline (one byte per symbol).
    pub fn inline_bits(&self) -> u64 {
        8 * self.lengths.len() as u64
    }

    /// `PQD1`: magic | version u16 | K u32 | K code lengths u8.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(DICT_MAGIC).u16(DICT_VERSION).u32(self.lengths.len() as u32).bytes(&self.lengths);
        w.into_inner()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes, "PQD1");
        r.expect_magic(DICT_MAGIC)?;
        let version = r.u16()?;
        if version != DICT_VERSION {
            return Err(format_err!("PQD1: unsupported version {version}"));
        }
        let k = r.u32()? as usize;
        let lengths = r.take(k)?.to_vec();
        r.finish()?;
        Self::from_lengths(lengths).map_err(|e| format_err!("PQD1: {e}"))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?)
    }
}

/// Huffman-optimal code lengths for `histogram`, canonically assigned.
///
/// Zero-count symbols get length 0 (no code). A single used symbol gets a 1-bit code.
pub fn build_dictionary(histogram: &[u64]) -> Result<EntropyDictionary> {
    EntropyDictionary::from_lengths(huffman_lengths(histogram)?)
}

/// Dictionary over add-one smoothed counts, so every symbol is encodable.
pub fn build_smoothed_dictionary(histogram: &[u64]) -> Result<EntropyDictionary> {
    let smoothed: Vec<u64> = histogram.iter().map(|&c| c.saturating_add(1)).collect();
    build_dictionary(&smoothed)
}

/// Two-queue Huffman construction over counts sorted by (count, symbol).
fn huffman_lengths(histogram: &[u64]) -> Result<Vec<u8>> {
    let mut leaves: Vec<(u64, usize)> =
        histogram.iter().enumerate().filter(|(_, &c)| c > 0).map(|(s, &c)| (c, s)).collect();
    if leaves.is_empty() {
        return Err(config_err!("histogram has no positive counts"));
    }
    let mut lengths = vec![0u8; histogram.len()];
    if leaves.len() == 1 {
        lengths[leaves[0].1] = 1;
        return Ok(lengths);
    }
    leaves.sort_unstable();
    let n = leaves.len();
    // nodes 0..n are leaves, n.. are internal nodes in creation (= non-decreasing weight) order
    let mut weight: Vec<u64> = leaves.iter().map(|l| l.0).collect();
    let mut parent: Vec<usize> = vec![usize::MAX; n];
    let (mut next_leaf, mut next_internal) = (0usize, n);
    let mut pop = |weight: &Vec<u64>| -> usize {
        let take_leaf = next_leaf < n && (next_internal >= weight.len() || weight[next_leaf] <= weight[next_internal]);
        if take_leaf {
            next_leaf += 1;
            next_leaf - 1
        } else {
            next_internal += 1;
            next_internal - 1
        }
    };
    for _ in 0..n - 1 {
        let a = pop(&weight);
        let b = pop(&weight);
        let id = weight.len();
        weight.push(weight[a].saturating_add(weight[b]));
        parent.push(usize::MAX);
        parent[a] = id;
        parent[b] = id;
    }
    let mut depth = vec![0usize; weight.len()];
    for node in (0..weight.len() - 1).rev() {
        depth[node] = depth[parent[node]] + 1;
    }
    for (i, &(_, s)) in leaves.iter().enumerate() {
        if depth[i] > MAX_CODE_LEN as usize {
            return Err(Error::Encoding(format!("Huffman code length {} exceeds {MAX_CODE_LEN}", depth[i])));
        }
        lengths[s] = depth[i] as u8;
    }
    Ok(lengths)
}

/// MSB-first bit sink.
#[derive(Debug, Default)]
pub struct BitWriter {
    bytes: Vec<u8>,
    bits: u64,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn write(&mut self, code: u64, len: u8) {
        for i in (0..len).rev() {
            let bit = (code >> i) & 1;
            if self.bits % 8 == 0 {
                self.bytes.push(0);
            }
            if bit == 1 {
                let last = self.bytes.last_mut().unwrap();
                *last |= 0x80 >> (self.bits % 8);
            }
            self.bits += 1;
        }
    }

    pub fn bit_len(&self) -> u64 {
        self.bits
    }

    pub fn finish(self) -> (Vec<u8>, u64) {
        (self.bytes, self.bits)
    }
}

struct BitReader<'a> {
    bytes: &'a [u8],
    pos: u64,
    limit: u64,
}

impl BitReader<'_> {
    fn next(&mut self) -> Option<u64> {
        if self.pos >= self.limit {
            return None;
        }
        let byte = self.bytes[(self.pos / 8) as usize];
        let bit = (byte >> (7 - self.pos % 8)) & 1;
        self.pos += 1;
        Some(u64::from(bit))
    }
}

/// Append the codes of `symbols` to `out`.
pub fn encode_symbols_into(symbols: &[u32], dict: &EntropyDictionary, out: &mut BitWriter) -> Result<()> {
    for &s in symbols {
        let (code, len) = dict
            .code(s)
            .ok_or_else(|| Error::Encoding(format!("symbol {s} has no code in the dictionary")))?;
        out.write(code, len);
    }
    Ok(())
}

/// Encode a symbol stream; returns the zero-padded bytes and the exact bit count.
pub fn encode_symbols(symbols: &[u32], dict: &EntropyDictionary) -> Result<(Vec<u8>, u64)> {
    let mut w = BitWriter::new();
    encode_symbols_into(symbols, dict, &mut w)?;
    Ok(w.finish())
}

/// Decode exactly `n` symbols from `bits` bits of `bytes`. Every bit must be consumed and the
/// padding of the final byte must be zero.
pub fn decode_symbols(bytes: &[u8], bits: u64, n: usize, dict: &EntropyDictionary) -> Result<Vec<u32>> {
    if bytes.len() as u64 != bits.div_ceil(8) {
        return Err(Error::CorruptStream(format!("{} payload bytes cannot hold exactly {bits} bits", bytes.len())));
    }
    if bits % 8 != 0 {
        let pad_mask = 0xffu8 >> (bits % 8);
        if bytes[bytes.len() - 1] & pad_mask != 0 {
            return Err(Error::CorruptStream("non-zero padding bits".into()));
        }
    }
    let dec = &dict.decoder;
    let mut r = BitReader { bytes, pos: 0, limit: bits };
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let mut code = 0u64;
        let mut len = 0u8;
        loop {
            let bit = r.next().ok_or_else(|| {
                Error::CorruptStream(format!("bit underrun after {} of {n} symbols", out.len()))
            })?;
            code = (code << 1) | bit;
            len += 1;
            let l = len as usize;
            if dec.count[l] > 0 && code >= dec.first[l] && code - dec.first[l] < dec.count[l] {
                out.push(dec.sorted[dec.offset[l] + (code - dec.first[l]) as usize]);
                break;
            }
            if len >= dec.max_len {
                return Err(Error::CorruptStream(format!("invalid code word at bit {}", r.pos)));
            }
        }
    }
    if r.pos != bits {
        return Err(Error::CorruptStream(format!("{} trailing payload bits", bits - r.pos)));
    }
    Ok(out)
}

/// How a stream refers to its dictionary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DictRef {
    /// Shared dictionary identified by [`EntropyDictionary::id`].
    External(u32),
    /// Code lengths carried in the header.
    Inline(Vec<u8>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DictMode {
    #[default]
    External,
    Inline,
}

/// One compressed feature: header plus Huffman payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompressedFeature {
    pub config: PQConfig,
    pub codebook_hash: u64,
    pub dict: DictRef,
    pub payload_bits: u32,
    pub payload: Vec<u8>,
}

impl CompressedFeature {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(STREAM_MAGIC).u16(STREAM_VERSION);
        write_config(&mut w, &self.config);
        w.u64(self.codebook_hash);
        match &self.dict {
            DictRef::External(id) => {
                w.u8(0).u32(*id);
            }
            DictRef::Inline(lengths) => {
                w.u8(1).bytes(lengths);
            }
        }
        w.u32(self.payload_bits).bytes(&self.payload);
        w.into_inner()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes, "PQB1");
        r.expect_magic(STREAM_MAGIC)?;
        let version = r.u16()?;
        if version != STREAM_VERSION {
            return Err(format_err!("PQB1: unsupported version {version}"));
        }
        let config = read_config(&mut r).map_err(|e| format_err!("PQB1: {e}"))?;
        let codebook_hash = r.u64()?;
        let dict = match r.u8()? {
            0 => DictRef::External(r.u32()?),
            1 => DictRef::Inline(r.take(config.k)?.to_vec()),
            m => return Err(format_err!("PQB1: unknown dictionary mode {m}")),
        };
        let payload_bits = r.u32()?;
        let payload = r.take(u64::from(payload_bits).div_ceil(8) as usize)?.to_vec();
        r.finish()?;
        Ok(Self { config, codebook_hash, dict, payload_bits, payload })
    }

    /// Size of everything but the payload bits: header plus final-byte padding.
    pub fn overhead_bits(&self) -> u64 {
        8 * self.to_bytes().len() as u64 - u64::from(self.payload_bits)
    }

    pub fn check_codebook(&self, cb: &SharedCodebook) -> Result<()> {
        let actual = cb.content_hash();
        if actual != self.codebook_hash {
            return Err(Error::CodebookMismatch { expected: self.codebook_hash, actual });
        }
        if cb.config() != &self.config {
            return Err(config_err!("stream config {} differs from codebook config {}", self.config, cb.config()));
        }
        Ok(())
    }

    /// The dictionary carried inline, if any.
    pub fn inline_dictionary(&self) -> Result<Option<EntropyDictionary>> {
        match &self.dict {
            DictRef::Inline(lengths) => {
                EntropyDictionary::from_lengths(lengths.clone()).map(Some).map_err(|e| Error::CorruptStream(e.to_string()))
            }
            DictRef::External(_) => Ok(None),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?)
    }
}

/// Entropy-code an index tensor.
pub fn encode(
    z: &IndexTensor,
    config: &PQConfig,
    dict: &EntropyDictionary,
    codebook_hash: u64,
    mode: DictMode,
) -> Result<CompressedFeature> {
    if (z.h, z.w, z.d) != (config.h, config.w, config.d) {
        return Err(config_err!("index tensor {}x{}x{} does not match {config}", z.h, z.w, z.d));
    }
    if dict.symbol_count() != config.k {
        return Err(config_err!("dictionary has {} symbols, codebook has {}", dict.symbol_count(), config.k));
    }
    let (payload, bits) = encode_symbols(z.indices(), dict)?;
    let payload_bits = u32::try_from(bits).map_err(|_| Error::Encoding(format!("{bits} payload bits overflow u32")))?;
    let dict = match mode {
        DictMode::External => DictRef::External(dict.id()),
        DictMode::Inline => DictRef::Inline(dict.code_lengths().to_vec()),
    };
    Ok(CompressedFeature { config: *config, codebook_hash, dict, payload_bits, payload })
}

/// Inverse of [`encode`]. The stream must reference `dict`.
pub fn decode(cf: &CompressedFeature, dict: &EntropyDictionary) -> Result<IndexTensor> {
    if dict.symbol_count() != cf.config.k {
        return Err(config_err!("dictionary has {} symbols, stream config has K={}", dict.symbol_count(), cf.config.k));
    }
    match &cf.dict {
        DictRef::External(id) if *id != dict.id() => {
            return Err(Error::DictionaryMismatch { expected: *id, actual: dict.id() })
        }
        DictRef::Inline(lengths) if lengths.as_slice() != dict.code_lengths() => {
            return Err(Error::DictionaryMismatch {
                expected: EntropyDictionary::from_lengths(lengths.clone()).map(|d| d.id()).unwrap_or(0),
                actual: dict.id(),
            })
        }
        _ => {}
    }
    let c = &cf.config;
    let symbols = decode_symbols(&cf.payload, u64::from(cf.payload_bits), c.symbols(), dict)?;
    IndexTensor::new(c.h, c.w, c.d, symbols)
}

/// Decode a stream, also verifying that it was produced against `cb`.
pub fn decode_checked(cf: &CompressedFeature, dict: &EntropyDictionary, cb: &SharedCodebook) -> Result<IndexTensor> {
    cf.check_codebook(cb)?;
    decode(cf, dict)
}

/// Bits per feature dimension for `bits` bits describing a `k`-dimensional feature.
pub fn bpd(bits: f64, k: usize) -> f64 {
    bits / k as f64
}

/// Payload bits per feature dimension. Header and dictionary overhead are not counted.
pub fn measure_bpd(cf: &CompressedFeature, k: usize) -> f64 {
    bpd(f64::from(cf.payload_bits), k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_three_symbols() {
        let d = build_dictionary(&[2, 1, 1]).unwrap();
        assert_eq!(d.code_lengths(), &[1, 2, 2]);
        let (_, bits) = encode_symbols(&[0, 0, 1, 2], &d).unwrap();
        assert_eq!(bits, 6);
        assert_eq!(d.cost(&[2, 1, 1]).unwrap(), 6);
    }

    #[test]
    fn canonical_codes() {
        let d = build_dictionary(&[2, 1, 1]).unwrap();
        assert_eq!(d.code(0), Some((0b0, 1)));
        assert_eq!(d.code(1), Some((0b10, 2)));
        assert_eq!(d.code(2), Some((0b11, 2)));
    }

    #[test]
    fn single_symbol_costs_one_bit() {
        let d = build_dictionary(&[0, 0, 7, 0]).unwrap();
        assert_eq!(d.code_lengths(), &[0, 0, 1, 0]);
        let (bytes, bits) = encode_symbols(&[2; 7], &d).unwrap();
        assert_eq!(bits, 7);
        assert_eq!(decode_symbols(&bytes, bits, 7, &d).unwrap(), vec![2; 7]);
    }

    #[test]
    fn uniform_eight_is_three_bits() {
        let d = build_dictionary(&[5; 8]).unwrap();
        assert!(d.code_lengths().iter().all(|&l| l == 3));
    }

    #[test]
    fn zero_histogram_and_unknown_symbol() {
        assert!(matches!(build_dictionary(&[0, 0]), Err(Error::Config(_))));
        let d = build_dictionary(&[1, 0, 1]).unwrap();
        assert!(matches!(encode_symbols(&[1], &d), Err(Error::Encoding(_))));
        let s = build_smoothed_dictionary(&[1, 0, 1]).unwrap();
        assert!(s.code(1).is_some());
    }

    #[test]
    fn kraft_violation_rejected() {
        assert!(matches!(EntropyDictionary::from_lengths(vec![1, 1, 1]), Err(Error::Encoding(_))));
        assert!(EntropyDictionary::from_lengths(vec![1, 2, 2]).is_ok());
    }

    #[test]
    fn underrun_overrun_and_padding() {
        let d = build_dictionary(&[2, 1, 1]).unwrap();
        let (bytes, bits) = encode_symbols(&[1, 2, 0], &d).unwrap();
        assert_eq!(bits, 5);
        assert!(matches!(decode_symbols(&bytes, bits, 4, &d), Err(Error::CorruptStream(_))));
        assert!(matches!(decode_symbols(&bytes, bits, 2, &d), Err(Error::CorruptStream(_))));
        let mut padded = bytes.clone();
        padded[0] |= 1;
        assert!(matches!(decode_symbols(&padded, bits, 3, &d), Err(Error::CorruptStream(_))));
    }

    #[test]
    fn container_round_trip_and_mismatches() {
        let cfg = PQConfig::new(2, 1, 4, 2, 4).unwrap();
        let z = IndexTensor::new(2, 1, 2, vec![0, 3, 3, 1]).unwrap();
        let dict = build_smoothed_dictionary(&z.histogram(4)).unwrap();
        for mode in [DictMode::External, DictMode::Inline] {
            let cf = encode(&z, &cfg, &dict, 0xabcdef, mode).unwrap();
            let bytes = cf.to_bytes();
            let back = CompressedFeature::from_bytes(&bytes).unwrap();
            assert_eq!(back, cf);
            assert_eq!(back.to_bytes(), bytes);
            assert_eq!(decode(&back, &dict).unwrap(), z);
        }
        let other = build_dictionary(&[10, 1, 1, 1]).unwrap();
        assert_ne!(other.code_lengths(), dict.code_lengths());
        let cf = encode(&z, &cfg, &dict, 1, DictMode::External).unwrap();
        assert!(matches!(decode(&cf, &other), Err(Error::DictionaryMismatch { .. })));
    }

    #[test]
    fn bpd_values() {
        assert!((bpd(400.0, 768) - 0.5208).abs() < 1e-4);
        assert_eq!(bpd(600.0, 768), 0.78125);
        assert!((bpd(2000.0, 768) - 2.604).abs() < 1e-3);
    }

    #[test]
    fn dictionary_file_round_trip() {
        let d = build_smoothed_dictionary(&[9, 0, 3, 3, 1]).unwrap();
        let bytes = d.to_bytes();
        let back = EntropyDictionary::from_bytes(&bytes).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.to_bytes(), bytes);
    }
}
