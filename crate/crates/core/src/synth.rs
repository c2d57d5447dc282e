//! Deterministic generators for synthetic corpora.
//!
//! Benchmarks and the acceptance suite need labelled populations with known
//! structure: one family whose members are near-copies of a few templates
//! (so they sit close together in compression distance) and one family of
//! mutually unrelated files. Everything here is a pure function of its seed.

use std::path::{Path, PathBuf};

use crate::corpus::Label;
use crate::seed::{derive_seed, draw_index, rng_from_seed};
use crate::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Bytes are produced in blocks this size; each block is independently
/// chosen to be compressible or incompressible.
const BLOCK: usize = 512;

/// A file that mixes compressible and incompressible regions.
///
/// `compressible_fraction` of the 512-byte blocks repeat a short per-file
/// pattern; the rest are raw RNG output. Patterns are drawn per file, so two
/// files built from different seeds share no material and their NCD stays
/// near 1, while the file remains partly compressible on its own.
pub fn mixed_bytes(size: usize, seed: u64, compressible_fraction: f64) -> Vec<u8> {
    let mut rng = rng_from_seed(seed);
    let mut pattern = vec![0u8; 4 + draw_index(&mut rng, 13)];
    rng.fill(&mut pattern[..]);

    let mut out = Vec::with_capacity(size);
    while out.len() < size {
        let take = BLOCK.min(size - out.len());
        if rng.random::<f64>() < compressible_fraction {
            out.extend(pattern.iter().cycle().take(take));
        } else {
            let start = out.len();
            out.resize(start + take, 0);
            rng.fill(&mut out[start..]);
        }
    }
    out
}

/// Word-salad text over a tiny per-seed lexicon: low entropy per byte, so
/// it compresses far better than packed or random data. Each seed invents
/// its own 32 words, so two text files are internally repetitive yet share
/// nothing beyond the alphabet; their mutual distance stays near the
/// unrelated-pair ceiling.
pub fn text_bytes(size: usize, seed: u64) -> Vec<u8> {
    let mut rng = rng_from_seed(seed);
    let lexicon: Vec<Vec<u8>> = (0..32)
        .map(|_| {
            (0..4 + draw_index(&mut rng, 6))
                .map(|_| b'a' + draw_index(&mut rng, 26) as u8)
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(size + 16);
    while out.len() < size {
        out.extend_from_slice(&lexicon[draw_index(&mut rng, lexicon.len())]);
        out.push(if rng.random::<f64>() < 0.1 { b'\n' } else { b' ' });
    }
    out.truncate(size);
    out
}

/// Uniform random bytes: incompressible by design.
pub fn random_bytes(size: usize, seed: u64) -> Vec<u8> {
    let mut rng = rng_from_seed(seed);
    let mut out = vec![0u8; size];
    rng.fill(&mut out[..]);
    out
}

/// Replace each byte independently with probability `rate`.
///
/// Length is preserved; replacement bytes are uniform, so about `rate *
/// 255/256` of positions actually change.
pub fn mutate(template: &[u8], rate: f64, seed: u64) -> Vec<u8> {
    assert!((0.0..=1.0).contains(&rate), "mutation rate out of [0, 1]");
    let mut rng = rng_from_seed(seed);
    template
        .iter()
        .map(|&b| {
            if rng.random::<f64>() < rate {
                rng.random::<u8>()
            } else {
                b
            }
        })
        .collect()
}

/// How the files of one synthetic family are produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FamilyKind {
    /// Mutated copies of a few shared templates; members of the same
    /// template sit close in compression distance.
    TemplateMutants {
        templates: usize,
        mutation_min: f64,
        mutation_max: f64,
        compressible_fraction: f64,
    },
    /// Mutually unrelated mixes; the compressible fraction of each file is
    /// drawn from the given range.
    IndependentMixes {
        compressible_min: f64,
        compressible_max: f64,
    },
    /// Low-entropy word salad.
    PlainText,
    /// Incompressible RNG output.
    RandomBytes,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FamilySpec {
    pub label: Label,
    pub kind: FamilyKind,
    pub count: usize,
    pub size: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub families: Vec<FamilySpec>,
}

/// Generate every file described by `spec` as `(file name, label, bytes)`.
pub fn generate(spec: &SynthSpec) -> Result<Vec<(String, Label, Vec<u8>)>> {
    let mut out = Vec::new();
    for (f, family) in spec.families.iter().enumerate() {
        let family_seed = derive_seed(spec.seed, f as u64);
        let templates: Vec<Vec<u8>> = match &family.kind {
            FamilyKind::TemplateMutants {
                templates,
                mutation_min,
                mutation_max,
                compressible_fraction,
            } => {
                if *templates == 0 {
                    return Err(Error::InvalidArgument {
                        message: "TemplateMutants needs at least one template".into(),
                    });
                }
                if !(0.0..=1.0).contains(mutation_min)
                    || !(0.0..=1.0).contains(mutation_max)
                    || mutation_min > mutation_max
                {
                    return Err(Error::InvalidArgument {
                        message: "mutation range must satisfy 0 <= min <= max <= 1".into(),
                    });
                }
                (0..*templates)
                    .map(|t| {
                        mixed_bytes(
                            family.size,
                            derive_seed(family_seed, 1_000_000 + t as u64),
                            *compressible_fraction,
                        )
                    })
                    .collect()
            }
            _ => Vec::new(),
        };

        for i in 0..family.count {
            let file_seed = derive_seed(family_seed, i as u64);
            let bytes = match &family.kind {
                FamilyKind::TemplateMutants {
                    templates: n_templates,
                    mutation_min,
                    mutation_max,
                    ..
                } => {
                    let mut rng = rng_from_seed(file_seed);
                    let rate = mutation_min + (mutation_max - mutation_min) * rng.random::<f64>();
                    mutate(
                        &templates[i % n_templates],
                        rate,
                        derive_seed(file_seed, 1),
                    )
                }
                FamilyKind::IndependentMixes {
                    compressible_min,
                    compressible_max,
                } => {
                    let mut rng = rng_from_seed(file_seed);
                    let frac =
                        compressible_min + (compressible_max - compressible_min) * rng.random::<f64>();
                    mixed_bytes(family.size, derive_seed(file_seed, 1), frac)
                }
                FamilyKind::PlainText => text_bytes(family.size, file_seed),
                FamilyKind::RandomBytes => random_bytes(family.size, file_seed),
            };
            let name = format!("f{f:02}_{}_{i:04}.bin", family.label.as_manifest_str());
            out.push((name, family.label, bytes));
        }
    }
    Ok(out)
}

/// Write the files of `spec` into `dir` plus a `manifest.csv` describing
/// them. Returns the manifest path.
pub fn write_corpus(dir: &Path, spec: &SynthSpec) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = generate(spec)?;
    let manifest_path = dir.join("manifest.csv");
    let mut writer = csv::Writer::from_path(&manifest_path)?;
    writer.write_record(["path", "label", "sha256"])?;
    for (name, label, bytes) in &files {
        let path = dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        writer.write_record([
            name.as_str(),
            label.as_manifest_str(),
            &crate::corpus::sha256_hex(bytes),
        ])?;
    }
    writer.flush().map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest_path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn generators_are_deterministic() {
        assert_eq!(mixed_bytes(4096, 9, 0.5), mixed_bytes(4096, 9, 0.5));
        assert_eq!(text_bytes(4096, 9), text_bytes(4096, 9));
        assert_eq!(random_bytes(4096, 9), random_bytes(4096, 9));
        assert_ne!(mixed_bytes(4096, 9, 0.5), mixed_bytes(4096, 10, 0.5));
    }

    #[test]
    fn mutation_rate_is_roughly_honoured() {
        let template = random_bytes(16384, 1);
        let mutant = mutate(&template, 0.10, 2);
        let changed = template
            .iter()
            .zip(&mutant)
            .filter(|(a, b)| a != b)
            .count();
        let frac = changed as f64 / template.len() as f64;
        // Expected ~0.0996 (draws can re-select the original byte).
        assert!((0.07..0.13).contains(&frac), "changed fraction {frac}");
    }

    #[test]
    fn template_family_shares_material() {
        let spec = SynthSpec {
            seed: 3,
            families: vec![FamilySpec {
                label: Label::Positive,
                kind: FamilyKind::TemplateMutants {
                    templates: 2,
                    mutation_min: 0.05,
                    mutation_max: 0.15,
                    compressible_fraction: 0.5,
                },
                count: 6,
                size: 2048,
            }],
        };
        let files = generate(&spec).unwrap();
        assert_eq!(files.len(), 6);
        // Files 0 and 2 mutate the same template: most bytes agree.
        let same = files[0].2.iter().zip(&files[2].2).filter(|(a, b)| a == b).count();
        assert!(same > 1500, "same-template files agree on {same}/2048 bytes");
        // Files 0 and 1 mutate different templates: agreement is near chance.
        let cross = files[0].2.iter().zip(&files[1].2).filter(|(a, b)| a == b).count();
        assert!(cross < 1200, "cross-template files agree on {cross}/2048 bytes");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn mixed_bytes_has_requested_length(size in 0usize..8192, seed in any::<u64>()) {
            prop_assert_eq!(mixed_bytes(size, seed, 0.5).len(), size);
            prop_assert_eq!(text_bytes(size, seed).len(), size);
        }

        #[test]
        fn mutate_preserves_length(size in 0usize..4096, seed in any::<u64>(), rate in 0.0f64..=1.0) {
            let t = random_bytes(size, seed);
            prop_assert_eq!(mutate(&t, rate, seed ^ 1).len(), size);
        }
    }
}
