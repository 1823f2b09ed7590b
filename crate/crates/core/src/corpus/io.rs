use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    branch_counts, tokenize, tokens_cover_text, Benchmark, BenchmarkItem, CorpusError, ImageRef,
    Metadata, PairedItem, Polarity, Reference, TaxonomyBranch,
};
use crate::perturb::PosTag;

/// Sidecar written next to an assembled benchmark.
pub const METADATA_FILE: &str = "metadata.json";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RefRecord {
    id: String,
    text: String,
    polarity: Polarity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tokens: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pos_tags: Option<Vec<PosTag>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ItemRecord {
    item_id: String,
    branch: String,
    #[serde(default)]
    source: String,
    #[serde(default)]
    image: Option<ImageRef>,
    references: Vec<RefRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PairRecord {
    pair_id: String,
    #[serde(default)]
    image_0: Option<ImageRef>,
    #[serde(default)]
    image_1: Option<ImageRef>,
    caption_0: String,
    caption_1: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    source: String,
}

fn parse_err(line: usize, reason: impl Into<String>) -> CorpusError {
    CorpusError::Parse {
        line,
        reason: reason.into(),
    }
}

fn build_reference(line: usize, owner: &str, rec: RefRecord) -> Result<Reference, CorpusError> {
    let tokens = match rec.tokens {
        Some(tokens) => {
            if !tokens_cover_text(&tokens, &rec.text) {
                return Err(parse_err(
                    line,
                    format!("{owner}/{}: tokens do not segment the text", rec.id),
                ));
            }
            tokens
        }
        None => tokenize(&rec.text),
    };
    if tokens.is_empty() && !rec.text.trim().is_empty() {
        return Err(parse_err(
            line,
            format!("{owner}/{}: empty token list", rec.id),
        ));
    }
    if let Some(tags) = &rec.pos_tags {
        if tags.len() != tokens.len() {
            return Err(parse_err(
                line,
                format!(
                    "{owner}/{}: pos_tags has {} entries for {} tokens",
                    rec.id,
                    tags.len(),
                    tokens.len()
                ),
            ));
        }
    }
    Ok(Reference {
        id: rec.id,
        text: rec.text,
        polarity: rec.polarity,
        tokens,
        pos_tags: rec.pos_tags,
    })
}

fn build_item(line: usize, rec: ItemRecord) -> Result<BenchmarkItem, CorpusError> {
    let branch = rec
        .branch
        .parse()
        .map_err(|_| parse_err(line, format!("unknown branch `{}`", rec.branch)))?;
    let mut seen = HashSet::new();
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for r in rec.references {
        if !seen.insert(r.id.clone()) {
            return Err(CorpusError::DuplicateId(format!(
                "{}/{}",
                rec.item_id, r.id
            )));
        }
        let reference = build_reference(line, &rec.item_id, r)?;
        match reference.polarity {
            Polarity::Positive => positives.push(reference),
            Polarity::Negative => negatives.push(reference),
        }
    }
    if positives.is_empty() {
        return Err(CorpusError::MissingPositive(rec.item_id));
    }
    Ok(BenchmarkItem {
        item_id: rec.item_id,
        branch: TaxonomyBranch::new(branch, rec.source),
        image: rec.image,
        positives,
        negatives,
    })
}

fn build_pair(rec: PairRecord) -> PairedItem {
    let caption = |k: u8, text: String| {
        Reference::new(format!("{}/c{k}", rec.pair_id), text, Polarity::Positive)
    };
    PairedItem {
        caption_0: caption(0, rec.caption_0),
        caption_1: caption(1, rec.caption_1),
        pair_id: rec.pair_id,
        source: rec.source,
        image_0: rec.image_0,
        image_1: rec.image_1,
    }
}

/// Loads a benchmark from line-delimited JSON.
///
/// Lines carrying a `pair_id` key are pair records; all others are item
/// records. Missing token lists are filled in with [`tokenize`]. If a
/// `metadata.json` sidecar in the same directory names this file, its
/// metadata is used; otherwise metadata is derived from the contents.
pub fn load_benchmark(path: &Path) -> Result<Benchmark, CorpusError> {
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let mut items = Vec::new();
    let mut pairs = Vec::new();
    let mut ids = HashSet::new();

    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| parse_err(lineno, e.to_string()))?;
        if value.get("pair_id").is_some() {
            let rec: PairRecord =
                serde_json::from_value(value).map_err(|e| parse_err(lineno, e.to_string()))?;
            if !ids.insert(rec.pair_id.clone()) {
                return Err(CorpusError::DuplicateId(rec.pair_id));
            }
            pairs.push(build_pair(rec));
        } else {
            let rec: ItemRecord =
                serde_json::from_value(value).map_err(|e| parse_err(lineno, e.to_string()))?;
            if !ids.insert(rec.item_id.clone()) {
                return Err(CorpusError::DuplicateId(rec.item_id));
            }
            items.push(build_item(lineno, rec)?);
        }
    }

    let metadata = match read_sidecar(path)? {
        Some(meta) => meta,
        None => Metadata {
            name: path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
            version: "1".into(),
            file: file_name(path),
            counts: branch_counts(&items, &pairs),
            params: Default::default(),
        },
    };
    Ok(Benchmark {
        items,
        pairs,
        metadata,
    })
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn sidecar_path(jsonl: &Path) -> std::path::PathBuf {
    jsonl
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(METADATA_FILE)
}

fn read_sidecar(jsonl: &Path) -> Result<Option<Metadata>, CorpusError> {
    let path = sidecar_path(jsonl);
    if !path.is_file() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path).map_err(|e| CorpusError::io(&path, e))?;
    let meta: Metadata = serde_json::from_str(&text).map_err(|e| CorpusError::Metadata {
        path: path.clone(),
        reason: e.to_string(),
    })?;
    Ok((meta.file == file_name(jsonl)).then_some(meta))
}

fn item_record(item: &BenchmarkItem) -> ItemRecord {
    ItemRecord {
        item_id: item.item_id.clone(),
        branch: item.branch.name.name().to_string(),
        source: item.branch.source.clone(),
        image: item.image.clone(),
        references: item
            .candidates()
            .map(|r| RefRecord {
                id: r.id.clone(),
                text: r.text.clone(),
                polarity: r.polarity,
                tokens: Some(r.tokens.clone()),
                pos_tags: r.pos_tags.clone(),
            })
            .collect(),
    }
}

fn pair_record(pair: &PairedItem) -> PairRecord {
    PairRecord {
        pair_id: pair.pair_id.clone(),
        image_0: pair.image_0.clone(),
        image_1: pair.image_1.clone(),
        caption_0: pair.caption_0.text.clone(),
        caption_1: pair.caption_1.text.clone(),
        source: pair.source.clone(),
    }
}

/// Writes one JSON document per line.
pub fn write_jsonl<T: Serialize>(
    path: &Path,
    records: impl IntoIterator<Item = T>,
) -> Result<(), CorpusError> {
    let file = File::create(path).map_err(|e| CorpusError::io(path, e))?;
    let mut out = BufWriter::new(file);
    for rec in records {
        serde_json::to_writer(&mut out, &rec).map_err(|e| CorpusError::io(path, e.into()))?;
        out.write_all(b"\n").map_err(|e| CorpusError::io(path, e))?;
    }
    out.flush().map_err(|e| CorpusError::io(path, e))
}

/// Writes items then pairs as JSONL. Metadata is not written; see [`save_metadata`].
pub fn save_benchmark(b: &Benchmark, path: &Path) -> Result<(), CorpusError> {
    let file = File::create(path).map_err(|e| CorpusError::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut emit = |v: serde_json::Result<String>| -> Result<(), CorpusError> {
        let line = v.map_err(|e| CorpusError::io(path, e.into()))?;
        out.write_all(line.as_bytes())
            .map_err(|e| CorpusError::io(path, e))?;
        out.write_all(b"\n").map_err(|e| CorpusError::io(path, e))
    };
    for item in &b.items {
        emit(serde_json::to_string(&item_record(item)))?;
    }
    for pair in &b.pairs {
        emit(serde_json::to_string(&pair_record(pair)))?;
    }
    out.flush().map_err(|e| CorpusError::io(path, e))
}

/// Writes the `metadata.json` sidecar for the benchmark stored at `jsonl`.
pub fn save_metadata(meta: &Metadata, jsonl: &Path) -> Result<(), CorpusError> {
    let mut meta = meta.clone();
    meta.file = file_name(jsonl);
    let path = sidecar_path(jsonl);
    let mut text =
        serde_json::to_string_pretty(&meta).map_err(|e| CorpusError::io(&path, e.into()))?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| CorpusError::io(&path, e))
}

/// Loads a pool of candidate negative sentences.
///
/// `.txt` files hold one sentence per line (ids are `<stem>:<line>`); any
/// other extension is read as a benchmark and its positive references form
/// the pool.
pub fn load_pool(path: &Path) -> Result<Vec<Reference>, CorpusError> {
    if path.extension().is_some_and(|e| e == "txt") {
        let text = std::fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Ok(text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(k, l)| Reference::new(format!("{stem}:{}", k + 1), l.trim(), Polarity::Negative))
            .collect())
    } else {
        let b = load_benchmark(path)?;
        Ok(b.items.into_iter().flat_map(|i| i.positives).collect())
    }
}
