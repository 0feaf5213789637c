//! Seeded mixing of real and synthetic corpora into one training file,
//! with a manifest of what went in.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{read_parallel, to_jsonl_line, CorpusError, ParallelExample};

#[derive(Debug, Error)]
pub enum MixError {
    #[error("stage I plans cannot include a synthetic corpus")]
    SyntheticInStageOne,
    #[error("synthetic cap {cap} exceeds the {available} available pairs")]
    CapTooLarge { cap: usize, available: usize },
    #[error("synthetic cap given without a synthetic corpus")]
    CapWithoutCorpus,
    #[error("duplicate cap {0} in sweep")]
    DuplicateCap(usize),
    #[error("invalid plan: {0}")]
    Plan(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    I,
    II,
    III,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagePlan {
    pub stage: Stage,
    pub real_corpora: Vec<PathBuf>,
    #[serde(default)]
    pub synthetic_corpus: Option<PathBuf>,
    /// Leading synthetic pairs to take; all of them when absent.
    #[serde(default)]
    pub synthetic_count: Option<usize>,
    pub seed: u64,
}

impl StagePlan {
    pub fn validate(&self) -> Result<(), MixError> {
        if self.stage == Stage::I && self.synthetic_corpus.is_some() {
            return Err(MixError::SyntheticInStageOne);
        }
        if self.synthetic_count.is_some_and(|c| c > 0) && self.synthetic_corpus.is_none() {
            return Err(MixError::CapWithoutCorpus);
        }
        Ok(())
    }

    /// Reads a plan; relative corpus paths resolve against the plan's
    /// directory.
    pub fn read(path: impl AsRef<Path>) -> Result<Self, MixError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
        let mut plan: StagePlan = serde_json::from_str(&text).map_err(|e| MixError::Plan(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in plan.real_corpora.iter_mut().chain(plan.synthetic_corpus.as_mut()) {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        plan.validate()?;
        Ok(plan)
    }
}

/// A corpus tagged with the name used for its id prefix and manifest entry.
#[derive(Debug, Clone)]
pub struct Component {
    pub origin: String,
    pub examples: Vec<ParallelExample>,
}

impl Component {
    pub fn new(origin: impl Into<String>, examples: Vec<ParallelExample>) -> Self {
        Component {
            origin: origin.into(),
            examples,
        }
    }

    pub fn load(path: &Path) -> Result<Self, MixError> {
        let origin = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "corpus".into());
        Ok(Component::new(origin, read_parallel(path)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixManifest {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stage: Option<Stage>,
    pub seed: u64,
    pub counts: BTreeMap<String, usize>,
    pub synthetic_origin: Option<String>,
    pub total: usize,
    pub errorful: usize,
    pub errorful_fraction: f64,
    /// sha256 of the JSONL serialization.
    pub sha256: String,
}

#[derive(Debug, Clone)]
pub struct Mixed {
    pub examples: Vec<ParallelExample>,
    pub manifest: MixManifest,
}

impl Mixed {
    pub fn to_jsonl(&self) -> String {
        jsonl(&self.examples)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), MixError> {
        let path = path.as_ref();
        let io = |e| CorpusError::io(path, e);
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        w.write_all(self.to_jsonl().as_bytes()).map_err(io)?;
        w.flush().map_err(io)?;
        Ok(())
    }
}

fn jsonl(examples: &[ParallelExample]) -> String {
    let mut out = String::new();
    for ex in examples {
        out.push_str(&to_jsonl_line(ex));
        out.push('\n');
    }
    out
}

fn unique_origins(components: &[&Component]) -> Vec<String> {
    let mut seen = BTreeSet::new();
    components
        .iter()
        .map(|c| {
            let mut name = c.origin.clone();
            let mut k = 2;
            while !seen.insert(name.clone()) {
                name = format!("{}-{k}", c.origin);
                k += 1;
            }
            name
        })
        .collect()
}

/// Concatenates the real corpora with the first `cap` synthetic pairs and
/// shuffles the result with a generator seeded by `seed`. Ids become
/// `origin:id`.
pub fn mix_components(real: &[Component], synthetic: Option<&Component>, cap: Option<usize>, seed: u64) -> Result<Mixed, MixError> {
    let take = match (synthetic, cap) {
        (None, Some(c)) if c > 0 => return Err(MixError::CapWithoutCorpus),
        (None, _) => 0,
        (Some(s), None) => s.examples.len(),
        (Some(s), Some(c)) if c > s.examples.len() => {
            return Err(MixError::CapTooLarge {
                cap: c,
                available: s.examples.len(),
            })
        }
        (Some(_), Some(c)) => c,
    };
    let all: Vec<&Component> = real.iter().chain(synthetic).collect();
    let names = unique_origins(&all);
    let mut counts = BTreeMap::new();
    let mut examples = Vec::new();
    for (i, (component, name)) in all.iter().zip(&names).enumerate() {
        let is_synthetic = synthetic.is_some() && i == all.len() - 1;
        let part = if is_synthetic {
            &component.examples[..take]
        } else {
            &component.examples[..]
        };
        counts.insert(name.clone(), part.len());
        examples.extend(part.iter().map(|ex| ParallelExample {
            id: format!("{name}:{}", ex.id),
            ..ex.clone()
        }));
    }
    examples.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let errorful = examples.iter().filter(|e| e.is_errorful()).count();
    let total = examples.len();
    let text = jsonl(&examples);
    let manifest = MixManifest {
        stage: None,
        seed,
        counts,
        synthetic_origin: synthetic.map(|_| names[names.len() - 1].clone()),
        total,
        errorful,
        errorful_fraction: if total == 0 { 0.0 } else { errorful as f64 / total as f64 },
        sha256: hex::encode(Sha256::digest(text.as_bytes())),
    };
    Ok(Mixed { examples, manifest })
}

fn load_plan(plan: &StagePlan) -> Result<(Vec<Component>, Option<Component>), MixError> {
    plan.validate()?;
    let real = plan
        .real_corpora
        .iter()
        .map(|p| Component::load(p))
        .collect::<Result<_, _>>()?;
    let synthetic = plan.synthetic_corpus.as_deref().map(Component::load).transpose()?;
    Ok((real, synthetic))
}

pub fn mix(plan: &StagePlan) -> Result<Mixed, MixError> {
    let (real, synthetic) = load_plan(plan)?;
    let mut mixed = mix_components(&real, synthetic.as_ref(), plan.synthetic_count, plan.seed)?;
    mixed.manifest.stage = Some(plan.stage);
    Ok(mixed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub cap: usize,
    pub file: String,
    pub manifest: MixManifest,
}

/// Runs [`mix`] once per cap, writing `mix-cap{cap}.jsonl` and its manifest
/// into `out_dir` plus `sweep-summary.json`.
pub fn ratio_sweep(plan: &StagePlan, caps: &[usize], out_dir: impl AsRef<Path>) -> Result<Vec<SweepRow>, MixError> {
    let mut seen = BTreeSet::new();
    for &c in caps {
        if !seen.insert(c) {
            return Err(MixError::DuplicateCap(c));
        }
    }
    let out_dir = out_dir.as_ref();
    let (real, synthetic) = load_plan(plan)?;
    // fail before writing anything
    let available = synthetic.as_ref().map_or(0, |s| s.examples.len());
    if let Some(&cap) = caps.iter().find(|&&c| c > available) {
        return Err(if synthetic.is_none() {
            MixError::CapWithoutCorpus
        } else {
            MixError::CapTooLarge { cap, available }
        });
    }
    let mut rows = Vec::with_capacity(caps.len());
    for &cap in caps {
        let mut mixed = mix_components(&real, synthetic.as_ref(), Some(cap), plan.seed)?;
        mixed.manifest.stage = Some(plan.stage);
        let file = format!("mix-cap{cap}.jsonl");
        mixed.write(out_dir.join(&file))?;
        write_json(&out_dir.join(format!("mix-cap{cap}.manifest.json")), &mixed.manifest)?;
        rows.push(SweepRow {
            cap,
            file,
            manifest: mixed.manifest,
        });
    }
    write_json(&out_dir.join("sweep-summary.json"), &rows)?;
    Ok(rows)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), MixError> {
    let mut text = serde_json::to_string_pretty(value).expect("manifest serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CorpusError::io(path, e).into())
}
