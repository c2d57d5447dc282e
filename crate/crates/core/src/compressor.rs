//! Real-world stand-ins for the ideal Kolmogorov compressor.
//!
//! Everything downstream consumes exactly one number per input: the size in
//! bytes of its compressed form, `Z(x)`. Three backend classes are exposed:
//!
//! * `lzma` (default): large configurable dictionary, the only backend whose
//!   window can be made to cover whole concatenated pairs. Container
//!   overhead: an empty input compresses to 32 bytes, so `Z(empty) = 0`
//!   never holds exactly.
//! * `deflate`: fixed 32 KiB window. On inputs much larger than the window
//!   the second half of `xx` no longer sees the first, which visibly breaks
//!   the compressor axioms; useful precisely to demonstrate that.
//! * `bzip2`: block-sorting; the block size is `level * 100_000` bytes and
//!   the `dictionary_bytes` setting is recorded but not consulted.
//!
//! Axiom conformance is never assumed. [`normality_report`] measures the
//! worst idempotency / monotonicity / symmetry / distributivity deviations
//! on a concrete suite and names the witnesses.

use std::collections::HashMap;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Mutex, RwLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{read_sample_bytes, CorpusSet};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Lzma,
    Deflate,
    Bzip2,
}

impl Backend {
    pub fn as_str(self) -> &'static str {
        match self {
            Backend::Lzma => "lzma",
            Backend::Deflate => "deflate",
            Backend::Bzip2 => "bzip2",
        }
    }

    pub fn parse(s: &str) -> Option<Backend> {
        match s.trim() {
            "lzma" => Some(Backend::Lzma),
            "deflate" => Some(Backend::Deflate),
            "bzip2" => Some(Backend::Bzip2),
            _ => None,
        }
    }
}

/// Compressor settings. Two runs with equal fingerprints produce identical
/// sizes for identical bytes, which is what makes [`SizeCache`] sound.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompressorConfig {
    pub backend: Backend,
    pub level: u32,
    /// Capacity limit for the match window. For `lzma` any input (or
    /// concatenated pair) longer than this is rejected rather than silently
    /// measured through a too-small window; the working window actually
    /// allocated per call is clamped down to the input size (see
    /// [`effective_dictionary_bytes`]), which does not change the output.
    pub dictionary_bytes: u64,
}

impl Default for CompressorConfig {
    fn default() -> Self {
        CompressorConfig {
            backend: Backend::Lzma,
            level: 6,
            dictionary_bytes: 64 * 1024 * 1024,
        }
    }
}

/// liblzma's encoder accepts dictionaries up to 1.5 GiB.
const MAX_DICT: u64 = 1536 * 1024 * 1024;
const MIN_DICT: u64 = 4096;

impl CompressorConfig {
    pub fn validate(&self) -> Result<()> {
        let level_ok = match self.backend {
            Backend::Lzma | Backend::Deflate => self.level <= 9,
            Backend::Bzip2 => (1..=9).contains(&self.level),
        };
        if !level_ok {
            return Err(Error::InvalidConfig {
                message: format!(
                    "level {} out of range for backend {}",
                    self.level,
                    self.backend.as_str()
                ),
            });
        }
        if !(MIN_DICT..=MAX_DICT).contains(&self.dictionary_bytes) {
            return Err(Error::InvalidConfig {
                message: format!(
                    "dictionary_bytes {} out of [{MIN_DICT}, {MAX_DICT}]",
                    self.dictionary_bytes
                ),
            });
        }
        Ok(())
    }

    /// Stable id for cache keys, matrix headers and feature sidecars.
    pub fn fingerprint(&self) -> String {
        format!(
            "{}:{}:{}",
            self.backend.as_str(),
            self.level,
            self.dictionary_bytes
        )
    }
}

/// The dictionary actually handed to liblzma for one call: the configured
/// capacity clamped down to the smallest power of two covering the input
/// (floor 4 KiB). LZMA2 output depends on the dictionary only through
/// matches it can hold, and a dictionary covering the whole input holds
/// every match a larger one could, so the compressed size is identical while
/// the encoder stops allocating ~10x the configured capacity per call.
pub fn effective_dictionary_bytes(cfg: &CompressorConfig, input_len: usize) -> u64 {
    let need = (input_len.max(MIN_DICT as usize) as u64).next_power_of_two();
    need.min(cfg.dictionary_bytes)
}

/// `Z(data)`: the backend's compressed size in bytes.
///
/// Pure in `(data, cfg)`. Empty input is legal here (it measures container
/// overhead); emptiness checks belong to the callers that divide by length.
pub fn compressed_size(data: &[u8], cfg: &CompressorConfig) -> Result<u64> {
    cfg.validate()?;
    let compression_failed = |e: &dyn std::fmt::Display| Error::Compression {
        message: format!("{} backend: {e}", cfg.backend.as_str()),
    };
    let mut out = Vec::new();
    match cfg.backend {
        Backend::Lzma => {
            if data.len() as u64 > cfg.dictionary_bytes {
                return Err(Error::InputExceedsDictionary {
                    len: data.len() as u64,
                    dictionary_bytes: cfg.dictionary_bytes,
                });
            }
            let mut opts = xz2::stream::LzmaOptions::new_preset(cfg.level)
                .map_err(|e| compression_failed(&e))?;
            opts.dict_size(effective_dictionary_bytes(cfg, data.len()) as u32);
            let mut filters = xz2::stream::Filters::new();
            filters.lzma2(&opts);
            let stream =
                xz2::stream::Stream::new_stream_encoder(&filters, xz2::stream::Check::None)
                    .map_err(|e| compression_failed(&e))?;
            let mut enc = xz2::bufread::XzEncoder::new_stream(data, stream);
            enc.read_to_end(&mut out).map_err(|e| compression_failed(&e))?;
        }
        Backend::Deflate => {
            let mut enc =
                flate2::bufread::DeflateEncoder::new(data, flate2::Compression::new(cfg.level));
            enc.read_to_end(&mut out).map_err(|e| compression_failed(&e))?;
        }
        Backend::Bzip2 => {
            let mut enc = bzip2::bufread::BzEncoder::new(data, bzip2::Compression::new(cfg.level));
            enc.read_to_end(&mut out).map_err(|e| compression_failed(&e))?;
        }
    }
    Ok(out.len() as u64)
}

/// `Z(x) / |x|`, unclamped: incompressible data commonly lands slightly
/// above 1 because of container overhead. Clamping to [0, 1] is the feature
/// layer's job.
pub fn compressibility_ratio(data: &[u8], cfg: &CompressorConfig) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyInput {
            what: "compressibility_ratio input",
        });
    }
    Ok(compressed_size(data, cfg)? as f64 / data.len() as f64)
}

// ---------------------------------------------------------------------------
// Size cache
// ---------------------------------------------------------------------------

const CACHE_HEADER: &str = "#zcache v1";

/// Memoises `Z` keyed by `(content digest, config fingerprint)`, optionally
/// persisted as an append-only text file:
///
/// ```text
/// #zcache v1
/// <sha256 hex>/<fingerprint> <size>
/// ```
///
/// Reads are concurrent; appends are serialized and flushed per entry, so a
/// killed run loses at most its final line (a torn trailing line is dropped
/// on reload). Concatenation digests are cached too, which is what lets an
/// interrupted pairwise run resume without recompressing finished pairs.
pub struct SizeCache {
    map: RwLock<HashMap<String, u64>>,
    file: Option<Mutex<BufWriter<std::fs::File>>>,
    path: Option<PathBuf>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl SizeCache {
    /// Cache that lives and dies with the process.
    pub fn in_memory() -> SizeCache {
        SizeCache {
            map: RwLock::new(HashMap::new()),
            file: None,
            path: None,
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }

    /// Open or create a persistent cache at `path`, loading existing entries.
    pub fn open(path: &Path) -> Result<SizeCache> {
        let mut map = HashMap::new();
        match std::fs::read_to_string(path) {
            Ok(text) if text.is_empty() => {}
            Ok(text) => {
                let lines: Vec<&str> = text.lines().collect();
                if lines.first() != Some(&CACHE_HEADER) {
                    return Err(Error::CacheFormat {
                        path: path.into(),
                        message: format!("missing `{CACHE_HEADER}` header"),
                    });
                }
                let last = lines.len().saturating_sub(1);
                for (i, line) in lines.iter().enumerate().skip(1) {
                    match parse_cache_line(line) {
                        Some((key, size)) => {
                            map.insert(key.to_string(), size);
                        }
                        // A torn final line means the previous run died
                        // mid-append; everything before it is still good.
                        None if i == last => {}
                        None => {
                            return Err(Error::CacheFormat {
                                path: path.into(),
                                message: format!("malformed line {}", i + 1),
                            })
                        }
                    }
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(Error::io(path, e)),
        }

        let fresh = map.is_empty();
        let mut file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        if fresh && file.metadata().map_err(|e| Error::io(path, e))?.len() == 0 {
            writeln!(file, "{CACHE_HEADER}").map_err(|e| Error::io(path, e))?;
        }
        Ok(SizeCache {
            map: RwLock::new(map),
            file: Some(Mutex::new(BufWriter::new(file))),
            path: Some(path.to_path_buf()),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        })
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.map.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn key(digest: &str, cfg: &CompressorConfig) -> String {
        format!("{digest}/{}", cfg.fingerprint())
    }

    /// Look up `Z` for pre-hashed content, computing and recording it on a
    /// miss. Two threads racing on the same key may both compute; both
    /// arrive at the same value, and the file keeps a single line.
    pub fn size_for(
        &self,
        digest: &str,
        cfg: &CompressorConfig,
        compute: impl FnOnce() -> Result<u64>,
    ) -> Result<u64> {
        let key = Self::key(digest, cfg);
        if let Some(&size) = self.map.read().expect("cache lock").get(&key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(size);
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let size = compute()?;
        let mut map = self.map.write().expect("cache lock");
        if map.insert(key.clone(), size).is_none() {
            if let Some(file) = &self.file {
                let mut w = file.lock().expect("cache file lock");
                writeln!(w, "{key} {size}")
                    .and_then(|_| w.flush())
                    .map_err(|e| Error::io(self.path.clone().unwrap_or_default(), e))?;
            }
        }
        Ok(size)
    }

    /// [`size_for`](Self::size_for) with the digest computed here.
    pub fn size_of_bytes(&self, data: &[u8], cfg: &CompressorConfig) -> Result<u64> {
        self.size_for(&crate::corpus::sha256_hex(data), cfg, || {
            compressed_size(data, cfg)
        })
    }
}

fn parse_cache_line(line: &str) -> Option<(&str, u64)> {
    let (key, size) = line.rsplit_once(' ')?;
    if key.is_empty() || !key.contains('/') {
        return None;
    }
    Some((key, size.parse().ok()?))
}

// ---------------------------------------------------------------------------
// Corpus-level compression pass
// ---------------------------------------------------------------------------

/// Per-sample compression measurement.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompressionRecord {
    pub id: String,
    pub raw_bytes: u64,
    pub z_bytes: u64,
    /// Unclamped `z_bytes / raw_bytes`.
    pub ratio: f64,
}

/// Measure `Z` for every sample, in parallel, through the cache. Records
/// come back in corpus (id) order regardless of scheduling.
pub fn compress_corpus(
    corpus: &CorpusSet,
    cfg: &CompressorConfig,
    cache: &SizeCache,
) -> Result<Vec<CompressionRecord>> {
    cfg.validate()?;
    corpus
        .samples()
        .par_iter()
        .map(|s| {
            if s.size_bytes == 0 {
                return Err(Error::EmptySample { id: s.id.clone() });
            }
            let z = cache.size_for(&s.sha256, cfg, || {
                compressed_size(&read_sample_bytes(s)?, cfg)
            })?;
            Ok(CompressionRecord {
                id: s.id.clone(),
                raw_bytes: s.size_bytes,
                z_bytes: z,
                ratio: z as f64 / s.size_bytes as f64,
            })
        })
        .collect()
}

/// Write `id,raw_bytes,z_bytes,ratio` rows.
pub fn write_compression_csv(records: &[CompressionRecord], out: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(out)?;
    w.write_record(["id", "raw_bytes", "z_bytes", "ratio"])?;
    for r in records {
        w.write_record([
            r.id.as_str(),
            &r.raw_bytes.to_string(),
            &r.z_bytes.to_string(),
            &r.ratio.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(out, e))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Normality measurement
// ---------------------------------------------------------------------------

/// Worst observed deviation for one axiom, in bytes, with the tuple of suite
/// ids that achieved it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AxiomDeviation {
    pub max_deviation_bytes: i64,
    pub witness_tuple_ids: Vec<String>,
}

/// How far a backend sits from an ideal "normal" compressor on a concrete
/// suite. Deviations are reported, never asserted away: real codecs violate
/// the axioms by bounded margins (and `Z(empty) = 0` fails outright, see
/// `empty_input_bytes`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormalityReport {
    pub config_fingerprint: String,
    pub suite_size: usize,
    /// `Z(empty)`: pure container overhead (32 for the lzma backend).
    pub empty_input_bytes: u64,
    /// Worst `Z(xx) - Z(x)`.
    pub idempotency: AxiomDeviation,
    /// Worst `max(0, Z(x) - Z(xy))`.
    pub monotonicity: AxiomDeviation,
    /// Worst `|Z(xy) - Z(yx)|`.
    pub symmetry: AxiomDeviation,
    /// Worst `max(0, Z(xy) + Z(z) - Z(xz) - Z(yz))`.
    pub distributivity: AxiomDeviation,
}

/// Measure all four axiom deviations on `suite`. Costs `m` single and `m^2`
/// pair compressions for `m` strings, so keep suites small.
pub fn normality_report(
    suite: &[(String, Vec<u8>)],
    cfg: &CompressorConfig,
) -> Result<NormalityReport> {
    cfg.validate()?;
    if suite.is_empty() {
        return Err(Error::EmptyInput {
            what: "normality suite",
        });
    }
    let m = suite.len();
    let singles: Vec<i64> = suite
        .par_iter()
        .map(|(_, data)| compressed_size(data, cfg).map(|z| z as i64))
        .collect::<Result<_>>()?;
    // pair[i][j] = Z(x_i x_j), order significant.
    let pair_list: Vec<i64> = (0..m * m)
        .into_par_iter()
        .map(|n| {
            let (i, j) = (n / m, n % m);
            let mut joined = Vec::with_capacity(suite[i].1.len() + suite[j].1.len());
            joined.extend_from_slice(&suite[i].1);
            joined.extend_from_slice(&suite[j].1);
            compressed_size(&joined, cfg).map(|z| z as i64)
        })
        .collect::<Result<_>>()?;
    let pair = |i: usize, j: usize| pair_list[i * m + j];
    let id = |i: usize| suite[i].0.clone();

    let mut idempotency = (i64::MIN, vec![0]);
    for i in 0..m {
        let dev = pair(i, i) - singles[i];
        if dev > idempotency.0 {
            idempotency = (dev, vec![i]);
        }
    }
    let mut monotonicity = (i64::MIN, vec![0, 0]);
    let mut symmetry = (i64::MIN, vec![0, 0]);
    for i in 0..m {
        for j in 0..m {
            let mono = (singles[i] - pair(i, j)).max(0);
            if mono > monotonicity.0 {
                monotonicity = (mono, vec![i, j]);
            }
            if i < j {
                let sym = (pair(i, j) - pair(j, i)).abs();
                if sym > symmetry.0 {
                    symmetry = (sym, vec![i, j]);
                }
            }
        }
    }
    if m == 1 {
        symmetry = (0, vec![0, 0]);
    }
    let mut distributivity = (i64::MIN, vec![0, 0, 0]);
    for i in 0..m {
        for j in 0..m {
            for k in 0..m {
                let dev = (pair(i, j) + singles[k] - pair(i, k) - pair(j, k)).max(0);
                if dev > distributivity.0 {
                    distributivity = (dev, vec![i, j, k]);
                }
            }
        }
    }

    let witness = |(dev, ids): (i64, Vec<usize>)| AxiomDeviation {
        max_deviation_bytes: dev,
        witness_tuple_ids: ids.into_iter().map(id).collect(),
    };
    Ok(NormalityReport {
        config_fingerprint: cfg.fingerprint(),
        suite_size: m,
        empty_input_bytes: compressed_size(&[], cfg)?,
        idempotency: witness(idempotency),
        monotonicity: witness(monotonicity),
        symmetry: witness(symmetry),
        distributivity: witness(distributivity),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    fn lzma() -> CompressorConfig {
        CompressorConfig::default()
    }

    #[test]
    fn empty_input_measures_container_overhead() {
        assert_eq!(compressed_size(&[], &lzma()).unwrap(), 32);
        assert!(compressed_size(&[], &CompressorConfig {
            backend: Backend::Deflate,
            level: 6,
            dictionary_bytes: 1 << 20,
        })
        .unwrap() > 0);
    }

    #[test]
    fn repetitive_data_compresses_and_random_does_not() {
        let cfg = lzma();
        let rep = vec![b'A'; 1 << 20];
        let z_rep = compressed_size(&rep, &cfg).unwrap();
        assert!(z_rep < 2048, "repetitive 1 MiB compressed to {z_rep}");

        let rnd = synth::random_bytes(1 << 20, 1);
        let z_rnd = compressed_size(&rnd, &cfg).unwrap();
        assert!(z_rnd > (1 << 20), "random data grew only to {z_rnd}");
        let ratio = compressibility_ratio(&rnd, &cfg).unwrap();
        assert!(ratio > 1.0 && ratio < 1.01, "ratio {ratio}");
    }

    #[test]
    fn ratio_orders_text_below_random() {
        let cfg = lzma();
        let text = synth::text_bytes(16384, 2);
        let rnd = synth::random_bytes(16384, 3);
        let rt = compressibility_ratio(&text, &cfg).unwrap();
        let rr = compressibility_ratio(&rnd, &cfg).unwrap();
        assert!(rt < 0.3, "text ratio {rt}");
        assert!(rr > 0.9, "random ratio {rr}");
    }

    #[test]
    fn dictionary_clamp_is_invisible_in_the_output() {
        // Identical sizes with the clamped working window and with a config
        // whose capacity equals exactly what the clamp would choose.
        for n in [1000usize, 32 * 1024, 100_000] {
            let data = synth::mixed_bytes(n, n as u64, 0.5);
            let big = CompressorConfig {
                dictionary_bytes: 64 * 1024 * 1024,
                ..lzma()
            };
            let tight = CompressorConfig {
                dictionary_bytes: effective_dictionary_bytes(&big, n).max(MIN_DICT),
                ..lzma()
            };
            assert_eq!(
                compressed_size(&data, &big).unwrap(),
                compressed_size(&data, &tight).unwrap(),
                "clamp changed output at n = {n}"
            );
        }
    }

    #[test]
    fn lzma_rejects_inputs_beyond_the_dictionary() {
        let cfg = CompressorConfig {
            dictionary_bytes: 4096,
            ..lzma()
        };
        let data = vec![0u8; 5000];
        match compressed_size(&data, &cfg) {
            Err(Error::InputExceedsDictionary { len, dictionary_bytes }) => {
                assert_eq!(len, 5000);
                assert_eq!(dictionary_bytes, 4096);
            }
            other => panic!("expected InputExceedsDictionary, got {other:?}"),
        }
    }

    #[test]
    fn config_validation_rejects_bad_levels() {
        assert!(CompressorConfig { level: 10, ..lzma() }.validate().is_err());
        assert!(CompressorConfig {
            backend: Backend::Bzip2,
            level: 0,
            dictionary_bytes: 1 << 20,
        }
        .validate()
        .is_err());
        assert!(CompressorConfig {
            dictionary_bytes: 16,
            ..lzma()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn cache_counts_hits_and_misses() {
        let cache = SizeCache::in_memory();
        let cfg = lzma();
        let data = synth::mixed_bytes(4096, 7, 0.5);
        let a = cache.size_of_bytes(&data, &cfg).unwrap();
        let b = cache.size_of_bytes(&data, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(cache.hits(), 1);
        assert_eq!(cache.misses(), 1);
    }

    #[test]
    fn cache_separates_configs() {
        let cache = SizeCache::in_memory();
        let data = synth::text_bytes(8192, 9);
        let z6 = cache.size_of_bytes(&data, &lzma()).unwrap();
        let z1 = cache
            .size_of_bytes(&data, &CompressorConfig { level: 1, ..lzma() })
            .unwrap();
        assert_eq!(cache.misses(), 2, "distinct fingerprints must not collide");
        // Not asserting z1 != z6: levels may tie on easy data.
        let _ = (z6, z1);
    }

    #[test]
    fn cache_survives_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("z.cache");
        let cfg = lzma();
        let data = synth::mixed_bytes(2048, 11, 0.5);
        let first = {
            let cache = SizeCache::open(&path).unwrap();
            cache.size_of_bytes(&data, &cfg).unwrap()
        };
        let cache = SizeCache::open(&path).unwrap();
        assert_eq!(cache.len(), 1);
        let second = cache.size_of_bytes(&data, &cfg).unwrap();
        assert_eq!(first, second);
        assert_eq!(cache.hits(), 1);
        assert_eq!(cache.misses(), 0);
    }

    #[test]
    fn cache_tolerates_a_torn_final_line_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("z.cache");
        std::fs::write(&path, "#zcache v1\nabc/lzma:6:65536 120\nd3f/lzma:6").unwrap();
        let cache = SizeCache::open(&path).unwrap();
        assert_eq!(cache.len(), 1);

        let bad = dir.path().join("bad.cache");
        std::fs::write(&bad, "#zcache v1\ngarbage\nabc/lzma:6:65536 120\n").unwrap();
        assert!(matches!(
            SizeCache::open(&bad),
            Err(Error::CacheFormat { .. })
        ));

        let no_header = dir.path().join("nh.cache");
        std::fs::write(&no_header, "abc/lzma:6:65536 120\n").unwrap();
        assert!(matches!(
            SizeCache::open(&no_header),
            Err(Error::CacheFormat { .. })
        ));
    }

    #[test]
    fn small_window_backend_breaks_idempotency_on_large_inputs() {
        // Two copies of 96 KiB of random data: deflate's 32 KiB window
        // cannot see the first copy while coding the second, so Z(xx) is
        // roughly 2 Z(x) instead of Z(x) + O(log).
        let cfg = CompressorConfig {
            backend: Backend::Deflate,
            level: 6,
            dictionary_bytes: 1 << 20,
        };
        let x = synth::random_bytes(96 * 1024, 13);
        let zx = compressed_size(&x, &cfg).unwrap();
        let mut xx = x.clone();
        xx.extend_from_slice(&x);
        let zxx = compressed_size(&xx, &cfg).unwrap();
        assert!(
            zxx as f64 > 1.8 * zx as f64,
            "expected a blown window: zx = {zx}, zxx = {zxx}"
        );
    }

    #[test]
    fn normality_report_on_a_small_suite() {
        let cfg = lzma();
        let suite: Vec<(String, Vec<u8>)> = (0..4)
            .map(|i| (format!("s{i}"), synth::mixed_bytes(4096, 100 + i, 0.5)))
            .collect();
        let report = normality_report(&suite, &cfg).unwrap();
        assert_eq!(report.suite_size, 4);
        assert_eq!(report.empty_input_bytes, 32);
        // A whole-input window keeps the duplicate-half nearly free.
        assert!(
            report.idempotency.max_deviation_bytes < 256,
            "idempotency deviation {}",
            report.idempotency.max_deviation_bytes
        );
        assert!(report.monotonicity.max_deviation_bytes >= 0);
        assert!(report.symmetry.max_deviation_bytes >= 0);
        assert!(report.distributivity.max_deviation_bytes >= 0);
        assert_eq!(report.idempotency.witness_tuple_ids.len(), 1);
        assert_eq!(report.symmetry.witness_tuple_ids.len(), 2);
        assert_eq!(report.distributivity.witness_tuple_ids.len(), 3);
    }
}
