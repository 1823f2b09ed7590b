//! Acceptance gate: one PASS/FAIL line per criterion. Runs without the test
//! harness so the lines are always printed.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sade_core::corpus::{
    load_benchmark, save_benchmark, Benchmark, BenchmarkItem, Branch, ImageRef, PairedItem,
    Polarity, Reference, TaxonomyBranch, METADATA_FILE,
};
use sade_core::debias::{
    apply_threshold, assemble_sade, compute_bias_distribution, filter_by_threshold,
    make_noise_image, BiasOptions, BiasReport, SadeConfig, SadeSources, TestPolicy, SADE_FILE,
};
use sade_core::eval::{
    ablate_noise, branch_scores, emit_report, pair_outcome, recall_at_1, score_benchmark,
    winoground_scores, AblationOptions, Candidate, EvalOptions, EvalReport, ReportFormat,
    ScoredBenchmark, ScoredItem, ScoredPair,
};
use sade_core::perturb::{content_only, perturb, tags_of, PerturbError, ShuffleStrategy};
use sade_core::scorer::{
    visual_gpt_score, Endpoint, ImageDigestMock, LogProbProvider, MockTable, ScoreRequest,
    UnigramMock, WeightScheme, DEFAULT_PROMPT,
};
use sade_core::Seed;
use sade_oracles::{
    check_shuffle, is_subsequence, t_statistic, t_two_sided_p, unigram_mean_logprob,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_time(elapsed: Duration, limit_s: u64) -> Result<(), String> {
    ensure(elapsed < Duration::from_secs(limit_s), || {
        format!("took {:.2}s, limit {limit_s}s", elapsed.as_secs_f64())
    })
}

fn words(prefix: &str, n: usize) -> Vec<String> {
    (0..n)
        .map(|k| {
            format!(
                "{prefix}{}",
                char::from(b'a' + (k % 26) as u8)
                    .to_string()
                    .repeat(k / 26 + 1)
            )
        })
        .collect()
}

fn item(
    id: &str,
    branch: Branch,
    source: &str,
    image: Option<ImageRef>,
    pos: &[String],
    neg: &[String],
) -> BenchmarkItem {
    BenchmarkItem {
        item_id: id.to_string(),
        branch: TaxonomyBranch::new(branch, source),
        image,
        positives: pos
            .iter()
            .enumerate()
            .map(|(k, t)| Reference::new(format!("p{k}"), t.as_str(), Polarity::Positive))
            .collect(),
        negatives: neg
            .iter()
            .enumerate()
            .map(|(k, t)| Reference::new(format!("n{k}"), t.as_str(), Polarity::Negative))
            .collect(),
    }
}

fn phrase<R: Rng>(rng: &mut R, vocab: &[String], len: usize) -> String {
    (0..len)
        .map(|_| vocab[rng.random_range(0..vocab.len())].as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let known = words("k", 60);
    let unknown = words("u", 20);
    let probs: HashMap<String, f64> = known
        .iter()
        .map(|w| (w.clone(), rng.random_range(0.0005..0.015)))
        .collect();
    let slots = 50;
    let mock = UnigramMock::new(
        MockTable::new(probs.clone(), slots).map_err(|e| e.to_string())?,
        "unigram",
    );
    let vocab: Vec<String> = known.iter().chain(&unknown).cloned().collect();
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let len = rng.random_range(1..25);
        let text = phrase(&mut rng, &vocab, len);
        let tlp = mock
            .logprobs(&ScoreRequest::text_only("unigram", "", text.as_str()))
            .map_err(|e| e.to_string())?;
        let got = visual_gpt_score(&tlp, WeightScheme::Uniform);
        let tokens: Vec<String> = text.split(' ').map(String::from).collect();
        worst = worst.max((got - unigram_mean_logprob(&probs, slots, &tokens)).abs());
    }
    ensure(worst <= 1e-9, || format!("max deviation {worst:e}"))?;
    within_time(start.elapsed(), 5)?;
    Ok(format!(
        "1000 refs, max deviation {worst:.1e}, {:.2}s",
        start.elapsed().as_secs_f64()
    ))
}

fn criterion_2() -> Outcome {
    const VOCAB: &[&str] = &[
        "a", "the", "brown", "dog", "chases", "small", "cat", "on", "red", "bike", "man", "riding",
        "quickly", "two", "horses", "eat", "green", "grass", "near", "old", "house", "is", "not",
        "under", "table", "blue", "car", "with", "and", "big", "sits", "in", "water", ".",
    ];
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for strategy in ShuffleStrategy::ALL {
        for trial in 0..10_000 {
            let len = rng.random_range(1..18);
            let tokens: Vec<String> = (0..len)
                .map(|_| VOCAB[rng.random_range(0..VOCAB.len())].to_string())
                .collect();
            let r = Reference::from_tokens("r", tokens, None, Polarity::Positive);
            let seed = Seed(rng.random());
            let movable: Vec<bool> = tags_of(&r).iter().map(|t| t.is_content()).collect();
            let out = perturb(&r, strategy, seed).map_err(|e| e.to_string())?;
            check_shuffle(&r.tokens, &movable, strategy.slug(), &out.reference.tokens)
                .map_err(|e| format!("{} trial {trial}: {e}", strategy.slug()))?;
            ensure(
                out == perturb(&r, strategy, seed).map_err(|e| e.to_string())?,
                || format!("{} trial {trial}: not deterministic", strategy.slug()),
            )?;
            match content_only(&r) {
                Ok(c) => {
                    ensure(is_subsequence(&c.tokens, &r.tokens), || {
                        format!("content_only not a subsequence: {:?}", r.tokens)
                    })?;
                    ensure(content_only(&c).ok().as_ref() == Some(&c), || {
                        format!("content_only not idempotent: {:?}", r.tokens)
                    })?;
                }
                Err(PerturbError::EmptyContent(_)) => {
                    ensure(movable.iter().all(|m| !m), || {
                        format!("content_only dropped content: {:?}", r.tokens)
                    })?;
                }
                Err(e) => return Err(e.to_string()),
            }
        }
    }
    within_time(start.elapsed(), 30)?;
    Ok(format!(
        "4 strategies x 10000 trials, {:.2}s",
        start.elapsed().as_secs_f64()
    ))
}

fn random_item<R: Rng>(rng: &mut R, id: usize, branch: Branch, candidates: usize) -> ScoredItem {
    let mut cands: Vec<Candidate> = (0..candidates)
        .map(|k| Candidate {
            id: format!("c{k}"),
            polarity: if k == 0 {
                Polarity::Positive
            } else {
                Polarity::Negative
            },
        })
        .collect();
    cands.shuffle(rng);
    ScoredItem {
        item_id: format!("i{id}"),
        branch,
        source: "synthetic".into(),
        candidates: cands,
        scores: (0..candidates).map(|_| rng.random::<f64>()).collect(),
    }
}

fn random_pair<R: Rng>(rng: &mut R, id: usize) -> ScoredPair {
    ScoredPair {
        pair_id: format!("w{id}"),
        source: "synthetic".into(),
        cells: [
            [Some(rng.random()), Some(rng.random())],
            [Some(rng.random()), Some(rng.random())],
        ],
    }
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 20_000;
    let setup = [
        (Branch::Relation, 2, 50.0),
        (Branch::Attribute, 3, 100.0 / 3.0),
        (Branch::Atomic, 6, 100.0 / 6.0),
    ];
    let mut scored = ScoredBenchmark::default();
    for (branch, candidates, _) in setup {
        scored
            .items
            .extend((0..n).map(|k| random_item(&mut rng, k, branch, candidates)));
    }
    scored.pairs = (0..60_000).map(|k| random_pair(&mut rng, k)).collect();
    let scores = branch_scores(&scored).map_err(|e| e.to_string())?;
    let mut parts = Vec::new();
    for (branch, _, expected) in setup {
        let got = 100.0 * scores[&branch].value;
        ensure((got - expected).abs() <= 1.5, || {
            format!("{branch}: {got:.2} vs {expected:.2}")
        })?;
        parts.push(format!("{branch} {got:.2}"));
    }
    let group = 100.0 * scores[&Branch::Comprehensive].value;
    ensure((group - 100.0 / 6.0).abs() <= 1.5, || {
        format!("group {group:.2} vs 16.67")
    })?;
    parts.push(format!("group {group:.2}"));
    within_time(start.elapsed(), 60)?;
    Ok(format!(
        "{}, {:.2}s",
        parts.join(", "),
        start.elapsed().as_secs_f64()
    ))
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for draw in 0..10_000 {
        let n = rng.random_range(1..12);
        // Small integers so ties occur.
        let pairs: Vec<ScoredPair> = (0..n)
            .map(|k| ScoredPair {
                pair_id: format!("w{k}"),
                source: "s".into(),
                cells: [[0, 0], [0, 0]]
                    .map(|row: [i32; 2]| row.map(|_| Some(f64::from(rng.random_range(0..4))))),
            })
            .collect();
        let w = winoground_scores(&pairs).map_err(|e| e.to_string())?;
        ensure(w.group_score <= w.text_score.min(w.image_score), || {
            format!("draw {draw}: {w:?}")
        })?;
        for p in &pairs {
            let (t, i, g) = pair_outcome(p.cells.map(|r| r.map(Option::unwrap)));
            ensure(g == (t && i), || {
                format!("draw {draw}: inconsistent pair outcome")
            })?;
        }
    }
    let transforms: [fn(f64) -> f64; 4] = [
        |x| 3.0 * x - 7.0,
        |x| x * x * x + x,
        |x| (x / 10.0).exp(),
        |x| x.atan(),
    ];
    for trial in 0..1000 {
        let items: Vec<ScoredItem> = (0..rng.random_range(1..40))
            .map(|k| {
                let c = rng.random_range(2..7);
                let mut s = random_item(&mut rng, k, Branch::Relation, c);
                s.scores = (0..c)
                    .map(|_| f64::from(rng.random_range(-20..=20)))
                    .collect();
                s
            })
            .collect();
        let base = recall_at_1(&items);
        for f in transforms {
            let moved: Vec<ScoredItem> = items
                .iter()
                .cloned()
                .map(|mut s| {
                    s.scores = s.scores.iter().map(|&x| f(x)).collect();
                    s
                })
                .collect();
            let got = recall_at_1(&moved);
            ensure(got == base, || format!("trial {trial}: {got} vs {base}"))?;
        }
    }
    Ok(format!(
        "10000 pair draws, 1000 transform trials, {:.2}s",
        start.elapsed().as_secs_f64()
    ))
}

/// Planted-bias corpus: 70% of items pair positives from a high-probability
/// vocabulary with negatives 4x less likely; the rest draw both from the
/// high vocabulary.
fn planted_bias(n: usize, rng: &mut ChaCha8Rng) -> (UnigramMock, Vec<BenchmarkItem>) {
    let high = words("h", 20);
    let low = words("l", 20);
    let mut probs = HashMap::new();
    for (h, l) in high.iter().zip(&low) {
        let p = 0.02 * rng.random_range(1.0..1.1);
        probs.insert(h.clone(), p);
        probs.insert(l.clone(), p / 4.0);
    }
    let mock = UnigramMock::new(MockTable::new(probs, 10).expect("valid table"), "unigram");
    let items = (0..n)
        .map(|k| {
            let planted = rng.random_bool(0.7);
            let pos = phrase(rng, &high, 5);
            let neg = phrase(rng, if planted { &low } else { &high }, 5);
            item(
                &format!("b{k}"),
                Branch::Relation,
                "synthetic",
                None,
                &[pos],
                &[neg],
            )
        })
        .collect();
    (mock, items)
}

fn p_matches(xs: &[f64], got: Option<sade_core::TestResult64>) -> Result<(f64, f64), String> {
    let got = got.ok_or("missing test result")?;
    let (t, df) = t_statistic(xs);
    let want = t_two_sided_p(t, df);
    ensure((got.p_value - want).abs() <= 1e-9, || {
        format!("p {:e} vs oracle {want:e}", got.p_value)
    })?;
    Ok((got.p_value, want))
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mock, items) = planted_bias(600, &mut rng);
    let mut report: BiasReport = compute_bias_distribution(&items, &mock, &BiasOptions::default())
        .map_err(|e| e.to_string())?;
    let before = report.normalized();
    let mean_before = before.iter().sum::<f64>() / before.len() as f64;
    ensure(mean_before > 0.2, || {
        format!("pre-filter mean {mean_before:.3}")
    })?;
    p_matches(&before, report.test)?;

    let outcome = filter_by_threshold(&report, 0.05).map_err(|e| e.to_string())?;
    apply_threshold(&mut report, 0.05, TestPolicy::ReportOnly).map_err(|e| e.to_string())?;
    ensure(outcome.retained == report.retained_ids, || {
        "filter and apply disagree".into()
    })?;
    let kept = report.retained_normalized();
    ensure(!kept.is_empty(), || "nothing retained".into())?;
    ensure(kept.iter().all(|s| s.abs() <= 0.05), || {
        "retained score above threshold".into()
    })?;
    let mean_after = kept.iter().sum::<f64>() / kept.len() as f64;
    ensure(mean_after.abs() < 0.05, || {
        format!("retained mean {mean_after:.4}")
    })?;
    let (p_after, oracle) = p_matches(&kept, report.retained_test)?;
    within_time(start.elapsed(), 30)?;
    Ok(format!(
        "mean {mean_before:.3} -> {mean_after:.4}, kept {}/{}, p_after {p_after:.4} (oracle {oracle:.4}), {:.2}s",
        kept.len(),
        before.len(),
        start.elapsed().as_secs_f64()
    ))
}

fn tiny_png(seed: u64) -> Vec<u8> {
    make_noise_image(4, 4, Seed(seed)).expect("png")
}

/// Branches with 2, 3 and 6 candidates plus Winoground pairs, each image
/// favoring its own positive under the digest mock.
fn ablation_corpus(n: usize, rng: &mut ChaCha8Rng) -> (Benchmark, ImageDigestMock) {
    let vocab = words("v", 200);
    let mut mock = ImageDigestMock::new("digest");
    let mut items = Vec::new();
    let mut next = 0u64;
    for (branch, candidates) in [
        (Branch::Relation, 2),
        (Branch::Attribute, 3),
        (Branch::Atomic, 6),
    ] {
        for k in 0..n {
            let texts: Vec<String> = (0..candidates).map(|_| phrase(rng, &vocab, 4)).collect();
            let png = tiny_png(next);
            next += 1;
            mock.favor(&png, &texts[0]);
            items.push(item(
                &format!("{branch}-{k}"),
                branch,
                "synthetic",
                Some(ImageRef::inline(png)),
                &texts[..1],
                &texts[1..],
            ));
        }
    }
    let pairs = (0..n)
        .map(|k| {
            let (c0, c1) = (phrase(rng, &vocab, 4), phrase(rng, &vocab, 4));
            let (i0, i1) = (tiny_png(next), tiny_png(next + 1));
            next += 2;
            mock.favor(&i0, &c0);
            mock.favor(&i1, &c1);
            PairedItem {
                pair_id: format!("w{k}"),
                source: "synthetic".into(),
                image_0: Some(ImageRef::inline(i0)),
                image_1: Some(ImageRef::inline(i1)),
                caption_0: Reference::new("c0", c0, Polarity::Positive),
                caption_1: Reference::new("c1", c1, Polarity::Positive),
            }
        })
        .collect();
    (Benchmark::new("ablation", items, pairs), mock)
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (b, digest) = ablation_corpus(8000, &mut rng);
    let opts = AblationOptions {
        seed: Seed(6),
        ..AblationOptions::default()
    };

    let table: HashMap<String, f64> = words("v", 200).into_iter().map(|w| (w, 0.004)).collect();
    let text_only = UnigramMock::new(
        MockTable::new(table, 10).map_err(|e| e.to_string())?,
        "unigram",
    );
    let rows = ablate_noise(&b, &text_only, &opts).map_err(|e| e.to_string())?;
    ensure(rows.len() == 4, || format!("{} branches", rows.len()))?;
    for (branch, row) in &rows {
        ensure(row.delta == 0.0 && row.noise == row.original, || {
            format!("text-only {branch}: {row:?}")
        })?;
    }

    let rows = ablate_noise(&b, &digest, &opts).map_err(|e| e.to_string())?;
    let chance = BTreeMap::from([
        (Branch::Relation, 50.0),
        (Branch::Attribute, 100.0 / 3.0),
        (Branch::Atomic, 100.0 / 6.0),
        (Branch::Comprehensive, 100.0 / 6.0),
    ]);
    let mut parts = Vec::new();
    for (branch, expected) in chance {
        let row = rows
            .get(&branch)
            .ok_or_else(|| format!("{branch} missing"))?;
        let noise = 100.0 * row.noise;
        ensure(row.original == 1.0, || {
            format!("{branch}: original accuracy {}", row.original)
        })?;
        ensure((noise - expected).abs() <= 2.0, || {
            format!("{branch}: noise {noise:.2} vs chance {expected:.2}")
        })?;
        parts.push(format!("{branch} {noise:.2}"));
    }
    within_time(start.elapsed(), 60)?;
    Ok(format!(
        "text-only delta 0; digest noise {}, {:.2}s",
        parts.join(", "),
        start.elapsed().as_secs_f64()
    ))
}

/// Source files for assembly: three filtered branches under a unigram
/// table, Content with a few tagless captions, and Winoground pairs.
fn write_sources(dir: &Path, rng: &mut ChaCha8Rng) -> Result<PathBuf, String> {
    let io = |e: std::io::Error| e.to_string();
    let high = [
        "the", "dog", "cat", "man", "sits", "on", "mat", "near", "red", "big",
    ];
    let low = ["zyx", "qwv", "plk", "vrt", "gmn"];
    let mut table = String::new();
    for w in high {
        table += &format!("{w}\t0.04\n");
    }
    for w in low {
        table += &format!("{w}\t0.01\n");
    }
    std::fs::write(dir.join("table.tsv"), table).map_err(io)?;
    let high: Vec<String> = high.iter().map(|s| s.to_string()).collect();
    let low: Vec<String> = low.iter().map(|s| s.to_string()).collect();

    for (branch, file) in [
        (Branch::Relation, "rel.jsonl"),
        (Branch::Attribute, "attr.jsonl"),
        (Branch::Negate, "neg.jsonl"),
    ] {
        let items: Vec<BenchmarkItem> = (0..40)
            .map(|k| {
                let pos = phrase(rng, &high, 5);
                let neg = if rng.random_bool(0.5) {
                    let mut t: Vec<&str> = pos.split(' ').collect();
                    t.reverse();
                    t.join(" ")
                } else {
                    phrase(rng, &low, 5)
                };
                let neg = if neg == pos {
                    format!("{neg} zyx")
                } else {
                    neg
                };
                item(
                    &format!("{file}-{k}"),
                    branch,
                    "synthetic",
                    Some(ImageRef::inline(tiny_png(k))),
                    &[pos],
                    &[neg],
                )
            })
            .collect();
        save_benchmark(&Benchmark::new(file, items, vec![]), &dir.join(file))
            .map_err(|e| e.to_string())?;
    }

    let nouns = [
        "dog", "cat", "sofa", "bus", "tree", "boat", "kitchen", "horse",
    ];
    let adjs = ["brown", "red", "small", "old", "green"];
    let content: Vec<BenchmarkItem> = (0..30)
        .map(|k| {
            let first = if k % 10 == 9 {
                "running quickly".to_string()
            } else {
                format!(
                    "a {} {} on a {}",
                    adjs[rng.random_range(0..adjs.len())],
                    nouns[rng.random_range(0..nouns.len())],
                    nouns[rng.random_range(0..nouns.len())]
                )
            };
            item(
                &format!("coco-{k}"),
                Branch::Content,
                "coco",
                Some(ImageRef::inline(tiny_png(100 + k))),
                &[first, "another caption".into()],
                &[],
            )
        })
        .collect();
    save_benchmark(
        &Benchmark::new("coco", content, vec![]),
        &dir.join("coco.jsonl"),
    )
    .map_err(|e| e.to_string())?;
    let pool: String = (0..25)
        .map(|k| format!("a sentence about scene number {k}\n"))
        .collect();
    std::fs::write(dir.join("pool.txt"), pool).map_err(io)?;

    let pairs: Vec<PairedItem> = (0..12)
        .map(|k| PairedItem {
            pair_id: format!("wino-{k}"),
            source: "winoground".into(),
            image_0: Some(ImageRef::inline(tiny_png(200 + 2 * k))),
            image_1: Some(ImageRef::inline(tiny_png(201 + 2 * k))),
            caption_0: Reference::new("c0", "a dog on the mat", Polarity::Positive),
            caption_1: Reference::new("c1", "the mat on a dog", Polarity::Positive),
        })
        .collect();
    save_benchmark(
        &Benchmark::new("wino", vec![], pairs),
        &dir.join("wino.jsonl"),
    )
    .map_err(|e| e.to_string())?;

    let config = dir.join("sade.toml");
    std::fs::write(
        &config,
        r#"seed = 17
model = "unigram"
[comprehensive]
sources = ["wino.jsonl"]
[branches.Relation]
sources = ["rel.jsonl"]
[branches.Attribute]
sources = ["attr.jsonl"]
[branches.Negate]
sources = ["neg.jsonl"]
tau = 0.1
[content]
sources = ["coco.jsonl"]
pool = "pool.txt"
"#,
    )
    .map_err(io)?;
    Ok(config)
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = write_sources(dir.path(), &mut ChaCha8Rng::seed_from_u64(7))?;
    let cfg = SadeConfig::load(&config).map_err(|e| e.to_string())?;
    let sources = SadeSources::load(&cfg, dir.path()).map_err(|e| e.to_string())?;
    let mock = UnigramMock::from_file(&dir.path().join("table.tsv"), "unigram")
        .map_err(|e| e.to_string())?;

    let mut runs = Vec::new();
    for out in ["run1", "run2"] {
        let a = assemble_sade(&cfg, &sources, &mock).map_err(|e| e.to_string())?;
        a.write(&dir.path().join(out)).map_err(|e| e.to_string())?;
        runs.push(a);
    }
    for f in [SADE_FILE, METADATA_FILE] {
        let read =
            |run: &str| std::fs::read(dir.path().join(run).join(f)).map_err(|e| e.to_string());
        ensure(read("run1")? == read("run2")?, || {
            format!("{f} differs between runs")
        })?;
    }
    let a = &runs[0];
    let b = load_benchmark(&dir.path().join("run1").join(SADE_FILE)).map_err(|e| e.to_string())?;
    let counts = &b.metadata.counts;

    let content: Vec<&BenchmarkItem> = b
        .items
        .iter()
        .filter(|i| i.branch.name == Branch::Content)
        .collect();
    ensure(
        content
            .iter()
            .all(|i| i.positives.len() == 1 && i.negatives.len() == 2),
        || "Content item without 1+2 refs".into(),
    )?;
    ensure(a.dropped_content.len() == 3, || {
        format!("dropped {:?}", a.dropped_content)
    })?;
    ensure(
        counts[&Branch::Content].items == 30 - 3 && counts[&Branch::Content].references == 3 * 27,
        || format!("Content counts {:?}", counts[&Branch::Content]),
    )?;

    ensure(b.pairs == sources.comprehensive, || {
        "Comprehensive altered".into()
    })?;
    ensure(counts[&Branch::Comprehensive].items == 12, || {
        "Comprehensive count".into()
    })?;

    let mut filtered = Vec::new();
    for branch in [Branch::Relation, Branch::Attribute, Branch::Negate] {
        let report = &a.reports[&branch];
        let kept = report.retained_ids.len();
        ensure(counts.get(&branch).map_or(0, |c| c.items) == kept, || {
            format!("{branch}: count vs retained {kept}")
        })?;
        ensure(kept < 40 && kept > 0, || {
            format!("{branch}: kept {kept} of 40")
        })?;
        let tau = cfg.tau(branch);
        ensure(
            report.retained_normalized().iter().all(|s| s.abs() <= tau),
            || format!("{branch}: above tau"),
        )?;
        filtered.push(format!("{branch} {kept}/40"));
    }
    Ok(format!(
        "Content 27x3 refs, Comprehensive 12 pairs, {}, identical reruns, {:.2}s",
        filtered.join(", "),
        start.elapsed().as_secs_f64()
    ))
}

fn sade(args: &[&str], cwd: &Path) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_sade"))
        .args(args)
        .current_dir(cwd)
        .env_remove("SADE_PROVIDER")
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.code() == Some(0), || {
        format!(
            "sade {} exited {:?}: {}",
            args[0],
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn pretty<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializes") + "\n"
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();
    let config = write_sources(dir, &mut ChaCha8Rng::seed_from_u64(8))?;
    let table = dir.join("table.tsv");
    let provider = format!("mock://{}", table.display());
    let read = |p: &str| std::fs::read_to_string(dir.join(p)).map_err(|e| format!("{p}: {e}"));

    sade(
        &[
            "bias",
            "--in",
            "rel.jsonl",
            "--out",
            "bias/rel.json",
            "--provider",
            &provider,
            "--model",
            "unigram",
        ],
        dir,
    )?;
    sade(
        &[
            "filter",
            "--bias",
            "bias/rel.json",
            "--out",
            "bias/rel.filtered.json",
            "--tau",
            "0.05",
        ],
        dir,
    )?;
    sade(
        &[
            "assemble",
            "--config",
            config.to_str().unwrap(),
            "--out",
            "sade",
            "--provider",
            &provider,
            "--model",
            "unigram",
        ],
        dir,
    )?;
    sade(
        &[
            "eval",
            "--in",
            "sade/sade.jsonl",
            "--out",
            "eval.json",
            "--provider",
            &provider,
            "--model",
            "unigram",
        ],
        dir,
    )?;
    sade(
        &[
            "report",
            "--in",
            "eval.json",
            "--out",
            "report.md",
            "--bias",
            "bias/rel.filtered.json",
        ],
        dir,
    )?;

    let mock = UnigramMock::from_file(&table, "unigram").map_err(|e| e.to_string())?;
    let rel = load_benchmark(&dir.join("rel.jsonl")).map_err(|e| e.to_string())?;
    let mut bias: BiasReport =
        compute_bias_distribution(&rel.items, &mock, &BiasOptions::default())
            .map_err(|e| e.to_string())?;
    ensure(read("bias/rel.json")? == pretty(&bias), || {
        "bias report differs from module output".into()
    })?;
    apply_threshold(&mut bias, 0.05, TestPolicy::ReportOnly).map_err(|e| e.to_string())?;
    ensure(read("bias/rel.filtered.json")? == pretty(&bias), || {
        "filtered report differs from module output".into()
    })?;

    let cfg = SadeConfig::load(&config).map_err(|e| e.to_string())?;
    let sources = SadeSources::load(&cfg, dir).map_err(|e| e.to_string())?;
    let assembly = assemble_sade(&cfg, &sources, &mock).map_err(|e| e.to_string())?;
    assembly
        .write(&dir.join("module"))
        .map_err(|e| e.to_string())?;
    for f in [SADE_FILE, METADATA_FILE] {
        ensure(
            read(&format!("sade/{f}"))? == read(&format!("module/{f}"))?,
            || format!("assembled {f} differs"),
        )?;
    }

    let b = &assembly.benchmark;
    let opts = EvalOptions {
        image_root: dir.join("sade"),
        ..EvalOptions::default()
    };
    let scored = score_benchmark(b, &mock, &opts).map_err(|e| e.to_string())?;
    let mut report = EvalReport {
        benchmark: b.metadata.name.clone(),
        provider: Endpoint::Mock(table.clone()).to_string(),
        model: "unigram".into(),
        prompt: DEFAULT_PROMPT.into(),
        weights: WeightScheme::Uniform,
        seed: 0,
        declared: b.metadata.counts.keys().copied().collect(),
        branches: branch_scores(&scored).map_err(|e| e.to_string())?,
        ablation: BTreeMap::new(),
        histograms: BTreeMap::new(),
        human: Vec::new(),
    };
    let from_cli: EvalReport =
        serde_json::from_str(&read("eval.json")?).map_err(|e| e.to_string())?;
    ensure(from_cli == report, || {
        "eval report differs from module output".into()
    })?;

    report
        .histograms
        .insert(Branch::Relation, bias.histogram.clone());
    let md = emit_report(&report, ReportFormat::Markdown).map_err(|e| e.to_string())?;
    ensure(read("report.md")? == md, || {
        "markdown report differs from module output".into()
    })?;
    within_time(start.elapsed(), 180)?;
    Ok(format!(
        "5 subcommands exit 0, artifacts match, {:.2}s",
        start.elapsed().as_secs_f64()
    ))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("score-oracle equivalence", criterion_1),
        ("perturbation properties", criterion_2),
        ("random baselines", criterion_3),
        ("metric invariants", criterion_4),
        ("de-biasing effect", criterion_5),
        ("noise ablation", criterion_6),
        ("assembly structure", criterion_7),
        ("end-to-end CLI", criterion_8),
    ];
    let start = Instant::now();
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("PASS criterion {} ({name}): {detail}", k + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {} ({name}): {why}", k + 1);
            }
        }
    }
    println!(
        "acceptance total {:.2}s, {failed} failed",
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
