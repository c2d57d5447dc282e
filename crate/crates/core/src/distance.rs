//! Normalised compression distance and its cheap lower bound.
//!
//! For compressed sizes `zx = Z(x)`, `zy = Z(y)` and `zxy = Z(x ++ y)`:
//!
//! ```text
//! ncd(x, y) = (zxy - min(zx, zy)) / max(zx, zy)
//! ```
//!
//! Values near 0 mean one input contains most of what the other contains;
//! values near 1 mean compressing them together saved nothing. Real codecs
//! overshoot 1 slightly (container overhead), which callers must expect.
//!
//! Since `zxy >= max(zx, zy)` for any sane codec,
//!
//! ```text
//! ncd(x, y) >= 1 - min(zx, zy) / max(zx, zy) = ncd_lower_bound(zx, zy)
//! ```
//!
//! and the bound needs only the two single-file sizes. When a caller only
//! cares about distances below a threshold, any pair whose bound already
//! clears the threshold can skip the concatenation compression entirely;
//! that is the pruning offered by [`pairwise_matrix`].

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::compressor::{compressed_size, CompressorConfig, SizeCache};
use crate::corpus::{read_sample_bytes, sha256_hex, CorpusSet, Sample};
use crate::seed::derive_seed;
use crate::{Error, Result};

/// The NCD formula on raw sizes. Callers guarantee positive sizes; every
/// real backend emits at least its container header.
pub fn ncd_from_sizes(zx: u64, zy: u64, zxy: u64) -> f64 {
    debug_assert!(zx > 0 && zy > 0);
    let (lo, hi) = if zx <= zy { (zx, zy) } else { (zy, zx) };
    (zxy as f64 - lo as f64) / hi as f64
}

/// `1 - min(zx, zy) / max(zx, zy)`: a floor for the NCD of any pair with
/// these single sizes, e.g. sizes 10 and 3 give `1 - 3/10 = 0.7`.
pub fn ncd_lower_bound(zx: u64, zy: u64) -> Result<f64> {
    if zx == 0 || zy == 0 {
        return Err(Error::NonPositiveSize);
    }
    let (lo, hi) = if zx <= zy { (zx, zy) } else { (zy, zx) };
    Ok(1.0 - lo as f64 / hi as f64)
}

fn check_pair_fits(a_len: usize, b_len: usize, cfg: &CompressorConfig) -> Result<()> {
    if cfg.backend == crate::compressor::Backend::Lzma {
        let combined = a_len as u64 + b_len as u64;
        if combined > cfg.dictionary_bytes {
            return Err(Error::InputExceedsDictionary {
                len: combined,
                dictionary_bytes: cfg.dictionary_bytes,
            });
        }
    }
    Ok(())
}

/// NCD of two byte strings, concatenated in the order given (no ids, so no
/// canonical reordering; `ncd_bytes(x, y)` and `ncd_bytes(y, x)` may differ
/// by the compressor's symmetry deviation).
pub fn ncd_bytes(x: &[u8], y: &[u8], cfg: &CompressorConfig) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::EmptyInput { what: "ncd input" });
    }
    check_pair_fits(x.len(), y.len(), cfg)?;
    let zx = compressed_size(x, cfg)?;
    let zy = compressed_size(y, cfg)?;
    let mut joined = Vec::with_capacity(x.len() + y.len());
    joined.extend_from_slice(x);
    joined.extend_from_slice(y);
    let zxy = compressed_size(&joined, cfg)?;
    Ok(ncd_from_sizes(zx, zy, zxy))
}

/// A sample whose bytes are already in memory. Batch callers load each
/// file once and reuse it across many pairs.
pub struct Prepared<'a> {
    pub id: &'a str,
    pub digest: &'a str,
    pub bytes: &'a [u8],
}

impl<'a> Prepared<'a> {
    pub fn new(sample: &'a Sample, bytes: &'a [u8]) -> Prepared<'a> {
        Prepared {
            id: &sample.id,
            digest: &sample.sha256,
            bytes,
        }
    }
}

/// Cached NCD between two prepared samples.
///
/// The pair is concatenated in canonical order (smaller id first) so the
/// result is exactly symmetric in its arguments, and all three sizes go
/// through the cache: singles keyed by each sample's digest, the pair keyed
/// by the digest of the concatenation.
pub fn ncd_prepared(
    a: &Prepared,
    b: &Prepared,
    cfg: &CompressorConfig,
    cache: &SizeCache,
) -> Result<f64> {
    let (first, second) = if a.id <= b.id { (a, b) } else { (b, a) };
    for p in [first, second] {
        if p.bytes.is_empty() {
            return Err(Error::EmptySample { id: p.id.into() });
        }
    }
    check_pair_fits(first.bytes.len(), second.bytes.len(), cfg).map_err(|e| match e {
        Error::InputExceedsDictionary { len, dictionary_bytes } => Error::PairExceedsDictionary {
            id_a: first.id.into(),
            id_b: second.id.into(),
            combined: len,
            dictionary_bytes,
        },
        other => other,
    })?;

    let zx = cache.size_for(first.digest, cfg, || compressed_size(first.bytes, cfg))?;
    let zy = cache.size_for(second.digest, cfg, || compressed_size(second.bytes, cfg))?;
    let mut joined = Vec::with_capacity(first.bytes.len() + second.bytes.len());
    joined.extend_from_slice(first.bytes);
    joined.extend_from_slice(second.bytes);
    let zxy = cache.size_for(&sha256_hex(&joined), cfg, || compressed_size(&joined, cfg))?;
    Ok(ncd_from_sizes(zx, zy, zxy))
}

/// Cached NCD between two corpus samples, reading their bytes from disk.
pub fn ncd(a: &Sample, b: &Sample, cfg: &CompressorConfig, cache: &SizeCache) -> Result<f64> {
    let a_bytes = read_sample_bytes(a)?;
    let b_bytes = read_sample_bytes(b)?;
    ncd_prepared(
        &Prepared::new(a, &a_bytes),
        &Prepared::new(b, &b_bytes),
        cfg,
        cache,
    )
}

// ---------------------------------------------------------------------------
// Pairwise matrix
// ---------------------------------------------------------------------------

/// One upper-triangle cell: either a measured NCD or the lower bound that
/// justified skipping the measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MatrixEntry {
    Exact(f64),
    Pruned(f64),
}

impl MatrixEntry {
    /// The usable distance value: the NCD if measured, else its floor.
    pub fn value(self) -> f64 {
        match self {
            MatrixEntry::Exact(v) | MatrixEntry::Pruned(v) => v,
        }
    }

    pub fn is_pruned(self) -> bool {
        matches!(self, MatrixEntry::Pruned(_))
    }
}

/// Symmetric pairwise distances over a fixed id list, stored as the upper
/// triangle (diagonal included): `n (n + 1) / 2` entries.
#[derive(Debug, Clone)]
pub struct DistanceMatrix {
    ids: Vec<String>,
    entries: Vec<MatrixEntry>,
    config_fingerprint: String,
    prune_threshold: Option<f64>,
}

impl DistanceMatrix {
    /// Build a matrix from a dense symmetric table (e.g. distances computed
    /// elsewhere). Row order defines the id order.
    pub fn from_dense(ids: Vec<String>, dense: &[Vec<f64>], fingerprint: String) -> Result<Self> {
        let n = ids.len();
        if dense.len() != n || dense.iter().any(|row| row.len() != n) {
            return Err(Error::MatrixFormat {
                message: format!("dense table is not {n} x {n}"),
            });
        }
        let mut entries = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in i..n {
                if dense[i][j] != dense[j][i] {
                    return Err(Error::MatrixFormat {
                        message: format!(
                            "asymmetry at ({i}, {j}): {} vs {}",
                            dense[i][j], dense[j][i]
                        ),
                    });
                }
                entries.push(MatrixEntry::Exact(dense[i][j]));
            }
        }
        Ok(DistanceMatrix {
            ids,
            entries,
            config_fingerprint: fingerprint,
            prune_threshold: None,
        })
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn config_fingerprint(&self) -> &str {
        &self.config_fingerprint
    }

    pub fn prune_threshold(&self) -> Option<f64> {
        self.prune_threshold
    }

    fn index(&self, i: usize, j: usize) -> usize {
        let n = self.ids.len();
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        debug_assert!(j < n);
        // Row i starts after rows 0..i, which hold (n) + (n-1) + ... entries.
        i * (2 * n - i + 1) / 2 + (j - i)
    }

    pub fn entry(&self, i: usize, j: usize) -> MatrixEntry {
        self.entries[self.index(i, j)]
    }

    /// Distance for algorithms that accept bounds in place of pruned exact
    /// values (conservative substitution).
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.entry(i, j).value()
    }

    pub fn pruned_count(&self) -> usize {
        self.entries.iter().filter(|e| e.is_pruned()).count()
    }

    pub fn entry_count(&self) -> usize {
        self.entries.len()
    }
}

/// Compute the full pairwise matrix over the corpus, in parallel, through
/// the cache. With `prune_threshold = Some(t)`, any pair whose lower bound
/// reaches `t` is recorded as [`MatrixEntry::Pruned`] with that bound and
/// its concatenation is never compressed.
///
/// All sample bytes are held in memory for the duration of the call, so this
/// is sized for corpora that fit in RAM.
pub fn pairwise_matrix(
    corpus: &CorpusSet,
    cfg: &CompressorConfig,
    cache: &SizeCache,
    prune_threshold: Option<f64>,
) -> Result<DistanceMatrix> {
    cfg.validate()?;
    if let Some(t) = prune_threshold {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidArgument {
                message: format!("prune threshold {t} out of [0, 1]"),
            });
        }
    }
    let samples = corpus.samples();
    let bytes: Vec<Vec<u8>> = samples
        .par_iter()
        .map(|s| {
            let b = read_sample_bytes(s)?;
            if b.is_empty() {
                return Err(Error::EmptySample { id: s.id.clone() });
            }
            Ok(b)
        })
        .collect::<Result<_>>()?;
    let singles: Vec<u64> = samples
        .par_iter()
        .zip(&bytes)
        .map(|(s, b)| cache.size_for(&s.sha256, cfg, || compressed_size(b, cfg)))
        .collect::<Result<_>>()?;

    let n = samples.len();
    let mut pairs = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in i..n {
            pairs.push((i, j));
        }
    }
    let entries: Vec<MatrixEntry> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let bound = ncd_lower_bound(singles[i], singles[j])?;
            if let Some(t) = prune_threshold {
                if bound >= t {
                    return Ok(MatrixEntry::Pruned(bound));
                }
            }
            let value = ncd_prepared(
                &Prepared::new(&samples[i], &bytes[i]),
                &Prepared::new(&samples[j], &bytes[j]),
                cfg,
                cache,
            )?;
            Ok(MatrixEntry::Exact(value))
        })
        .collect::<Result<_>>()?;

    Ok(DistanceMatrix {
        ids: samples.iter().map(|s| s.id.clone()).collect(),
        entries,
        config_fingerprint: cfg.fingerprint(),
        prune_threshold,
    })
}

// ---------------------------------------------------------------------------
// Savings curve and bound audit
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct SavingsPoint {
    pub threshold: f64,
    /// Fraction of the `n (n + 1) / 2` pairs whose bound reaches the
    /// threshold, i.e. the share of concatenation compressions a pruned
    /// matrix run would skip.
    pub pruned_fraction: f64,
}

/// Predict pruning savings from single-file sizes alone: no concatenation
/// is compressed here.
pub fn savings_curve(
    corpus: &CorpusSet,
    cfg: &CompressorConfig,
    cache: &SizeCache,
    thresholds: &[f64],
) -> Result<Vec<SavingsPoint>> {
    for &t in thresholds {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidArgument {
                message: format!("savings threshold {t} out of [0, 1]"),
            });
        }
    }
    let records = crate::compressor::compress_corpus(corpus, cfg, cache)?;
    let singles: Vec<u64> = records.iter().map(|r| r.z_bytes).collect();
    let n = singles.len();
    let mut bounds = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in i..n {
            bounds.push(ncd_lower_bound(singles[i], singles[j])?);
        }
    }
    let total = bounds.len() as f64;
    Ok(thresholds
        .iter()
        .map(|&t| SavingsPoint {
            threshold: t,
            pruned_fraction: if bounds.is_empty() {
                0.0
            } else {
                bounds.iter().filter(|&&b| b >= t).count() as f64 / total
            },
        })
        .collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundViolation {
    pub id_a: String,
    pub id_b: String,
    pub bound: f64,
    pub ncd: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundAudit {
    pub pairs_checked: usize,
    pub tolerance: f64,
    pub violations: Vec<BoundViolation>,
}

/// Verify `bound <= ncd + tolerance` on every pair of the corpus. The
/// tolerance absorbs container overhead on tiny inputs; with a sane backend
/// the violation list stays empty.
pub fn audit_lower_bound(
    corpus: &CorpusSet,
    cfg: &CompressorConfig,
    cache: &SizeCache,
    tolerance: f64,
) -> Result<BoundAudit> {
    let matrix = pairwise_matrix(corpus, cfg, cache, None)?;
    let records = crate::compressor::compress_corpus(corpus, cfg, cache)?;
    let singles: Vec<u64> = records.iter().map(|r| r.z_bytes).collect();
    let n = matrix.n();
    let mut violations = Vec::new();
    let mut checked = 0;
    for i in 0..n {
        for j in i..n {
            let bound = ncd_lower_bound(singles[i], singles[j])?;
            let ncd = matrix.value(i, j);
            checked += 1;
            if bound > ncd + tolerance {
                violations.push(BoundViolation {
                    id_a: matrix.ids()[i].clone(),
                    id_b: matrix.ids()[j].clone(),
                    bound,
                    ncd,
                });
            }
        }
    }
    Ok(BoundAudit {
        pairs_checked: checked,
        tolerance,
        violations,
    })
}

// ---------------------------------------------------------------------------
// Self-distance diagnostic
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct SelfDistancePoint {
    pub size: u64,
    pub ncd: Option<f64>,
    pub error: Option<String>,
}

/// `ncd(x, x)` for deterministically generated mixed-content files of the
/// given sizes: the practical floor of the distance at each scale. Sizes
/// whose doubled form no longer fits the backend's window come back as
/// error entries instead of failing the whole curve.
pub fn self_distance_curve(
    sizes: &[u64],
    cfg: &CompressorConfig,
    seed: u64,
) -> Result<Vec<SelfDistancePoint>> {
    cfg.validate()?;
    Ok(sizes
        .iter()
        .enumerate()
        .map(|(i, &size)| {
            let data = crate::synth::mixed_bytes(size as usize, derive_seed(seed, i as u64), 0.5);
            match ncd_bytes(&data, &data, cfg) {
                Ok(v) => SelfDistancePoint {
                    size,
                    ncd: Some(v),
                    error: None,
                },
                Err(e) => SelfDistancePoint {
                    size,
                    ncd: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect())
}

/// Write `size,ncd,error` rows.
pub fn write_self_distance_csv(points: &[SelfDistancePoint], out: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(out)?;
    w.write_record(["size", "ncd", "error"])?;
    for p in points {
        w.write_record([
            p.size.to_string(),
            p.ncd.map(|v| v.to_string()).unwrap_or_default(),
            p.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(out, e))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Matrix persistence
// ---------------------------------------------------------------------------

const MATRIX_MAGIC: &[u8; 4] = b"NCDM";
const MATRIX_VERSION: u32 = 1;

/// Binary matrix layout (all integers little-endian):
///
/// ```text
/// "NCDM" | version u32 | n u64 | n x (len u32, id bytes) |
/// fingerprint (len u32, bytes) | prune flag u8 (+ f64 when 1) |
/// n(n+1)/2 x (tag u8: 0 exact / 1 pruned, value f64)
/// ```
pub fn save_matrix(matrix: &DistanceMatrix, out: &Path) -> Result<()> {
    let file = std::fs::File::create(out).map_err(|e| Error::io(out, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::io(out, e);
    w.write_all(MATRIX_MAGIC).map_err(io_err)?;
    w.write_all(&MATRIX_VERSION.to_le_bytes()).map_err(io_err)?;
    w.write_all(&(matrix.ids.len() as u64).to_le_bytes()).map_err(io_err)?;
    for id in &matrix.ids {
        w.write_all(&(id.len() as u32).to_le_bytes()).map_err(io_err)?;
        w.write_all(id.as_bytes()).map_err(io_err)?;
    }
    let fp = matrix.config_fingerprint.as_bytes();
    w.write_all(&(fp.len() as u32).to_le_bytes()).map_err(io_err)?;
    w.write_all(fp).map_err(io_err)?;
    match matrix.prune_threshold {
        Some(t) => {
            w.write_all(&[1]).map_err(io_err)?;
            w.write_all(&t.to_le_bytes()).map_err(io_err)?;
        }
        None => w.write_all(&[0]).map_err(io_err)?,
    }
    for e in &matrix.entries {
        let (tag, value) = match e {
            MatrixEntry::Exact(v) => (0u8, *v),
            MatrixEntry::Pruned(v) => (1u8, *v),
        };
        w.write_all(&[tag]).map_err(io_err)?;
        w.write_all(&value.to_le_bytes()).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn load_matrix(path: &Path) -> Result<DistanceMatrix> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let bad = |message: &str| Error::MatrixFormat {
        message: format!("{}: {message}", path.display()),
    };

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| bad("truncated magic"))?;
    if &magic != MATRIX_MAGIC {
        return Err(bad("bad magic"));
    }
    let version = read_u32(&mut r).map_err(|_| bad("truncated version"))?;
    if version != MATRIX_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let n = read_u64(&mut r).map_err(|_| bad("truncated size"))? as usize;
    if n > 1 << 24 {
        return Err(bad("implausible matrix size"));
    }
    let mut ids = Vec::with_capacity(n);
    for _ in 0..n {
        ids.push(read_string(&mut r).map_err(|_| bad("truncated id"))?);
    }
    let config_fingerprint = read_string(&mut r).map_err(|_| bad("truncated fingerprint"))?;
    let mut flag = [0u8; 1];
    r.read_exact(&mut flag).map_err(|_| bad("truncated prune flag"))?;
    let prune_threshold = match flag[0] {
        0 => None,
        1 => Some(read_f64(&mut r).map_err(|_| bad("truncated threshold"))?),
        _ => return Err(bad("bad prune flag")),
    };
    let count = n * (n + 1) / 2;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag).map_err(|_| bad("truncated entry"))?;
        let value = read_f64(&mut r).map_err(|_| bad("truncated entry value"))?;
        entries.push(match tag[0] {
            0 => MatrixEntry::Exact(value),
            1 => MatrixEntry::Pruned(value),
            _ => return Err(bad("bad entry tag")),
        });
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(|e| Error::io(path, e))? != 0 {
        return Err(bad("trailing bytes"));
    }
    Ok(DistanceMatrix {
        ids,
        entries,
        config_fingerprint,
        prune_threshold,
    })
}

fn read_u32(r: &mut impl Read) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> std::io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn read_string(r: &mut impl Read) -> std::io::Result<String> {
    let len = read_u32(r)? as usize;
    if len > 1 << 20 {
        return Err(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            "string too long",
        ));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}

/// Write `id_a,id_b,status,value` rows in upper-triangle order. `value`
/// prints with Rust's shortest round-trip float formatting, so re-parsing
/// recovers the exact f64.
pub fn write_matrix_csv(matrix: &DistanceMatrix, out: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(out)?;
    w.write_record(["id_a", "id_b", "status", "value"])?;
    let n = matrix.n();
    for i in 0..n {
        for j in i..n {
            let entry = matrix.entry(i, j);
            w.write_record([
                matrix.ids()[i].as_str(),
                matrix.ids()[j].as_str(),
                if entry.is_pruned() { "pruned" } else { "exact" },
                &entry.value().to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(out, e))?;
    Ok(())
}
