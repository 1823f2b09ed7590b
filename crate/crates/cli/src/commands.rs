use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;
use serde_json::Value;

use sade_core::corpus::{
    load_benchmark, load_pool, save_benchmark, validate, write_jsonl, Benchmark, Branch,
};
use sade_core::debias::{
    apply_threshold, assemble_sade, compute_bias_distribution, BiasOptions, BiasReport, SadeConfig,
    SadeSources, TestPolicy,
};
use sade_core::eval::{
    ablate_noise, branch_scores, emit_report, human_eval_aggregate, human_eval_rows, parse_ratings,
    score_benchmark, AblationOptions, AblationRow, EvalOptions, EvalReport, ReportFormat,
};
use sade_core::perturb::{build_case_suite, perturb, ShuffleStrategy};
use sade_core::scorer::{
    open_provider, Endpoint, LogProbProvider, ProviderOptions, WeightScheme, DEFAULT_PROMPT,
};
use sade_core::Seed;

use crate::args::{Command, ProviderArgs, PROVIDER_ENV};
use crate::manifest::{digest, RunManifest};
use crate::UsageError;

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Bookkeeping for the manifest of one run.
struct Run {
    subcommand: &'static str,
    started: Instant,
    started_unix_ms: u128,
    params: BTreeMap<String, Value>,
    seeds: BTreeMap<String, u64>,
    provider: Option<String>,
    model: Option<String>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Run {
    fn new(subcommand: &'static str) -> Self {
        Run {
            subcommand,
            started: Instant::now(),
            started_unix_ms: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis())
                .unwrap_or_default(),
            params: BTreeMap::new(),
            seeds: BTreeMap::new(),
            provider: None,
            model: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    fn param(&mut self, key: &str, value: impl Serialize) -> &mut Self {
        self.params.insert(
            key.to_string(),
            serde_json::to_value(value).expect("params serialize"),
        );
        self
    }

    fn seed(&mut self, key: &str, seed: u64) -> &mut Self {
        self.seeds.insert(key.to_string(), seed);
        self.param(key, seed)
    }

    fn input(&mut self, path: &Path) -> &mut Self {
        self.inputs.push(path.to_path_buf());
        self
    }

    fn provider(&mut self, p: &Provider) -> &mut Self {
        self.provider = Some(p.endpoint.to_string());
        self.model = Some(p.model.clone());
        if let Endpoint::Mock(table) = &p.endpoint {
            self.inputs.push(table.clone());
        }
        self.param("provider", p.endpoint.to_string())
            .param("model", &p.model)
    }

    fn finish(self, primary: &Path) -> Result<()> {
        let manifest = RunManifest {
            subcommand: self.subcommand.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_digest: digest(&self.params, &self.inputs)?,
            params: self.params,
            seeds: self.seeds,
            provider: self.provider,
            model: self.model,
            inputs: self.inputs,
            outputs: self.outputs,
            started_unix_ms: self.started_unix_ms,
            wall_clock_ms: self.started.elapsed().as_millis(),
        };
        manifest.write(primary)?;
        Ok(())
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    ensure_parent(path)?;
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn save(b: &Benchmark, path: &Path) -> Result<()> {
    ensure_parent(path)?;
    Ok(save_benchmark(b, path)?)
}

fn parse_branch(s: &str) -> Result<Branch> {
    s.parse()
        .map_err(|_| usage(format!("unknown branch `{s}`")))
}

struct Provider {
    endpoint: Endpoint,
    model: String,
    parallel: usize,
    inner: Box<dyn LogProbProvider>,
}

/// Endpoint precedence: flag, then config, then `SADE_PROVIDER`.
fn open(
    args: &ProviderArgs,
    configured: Option<Endpoint>,
    default_model: &str,
    default_parallel: usize,
) -> Result<Provider> {
    let endpoint = match (&args.provider, configured) {
        (Some(s), _) => s.parse::<Endpoint>()?,
        (None, Some(e)) => e,
        (None, None) => match std::env::var(PROVIDER_ENV) {
            Ok(s) if !s.trim().is_empty() => s.parse::<Endpoint>()?,
            _ => {
                return Err(usage(format!(
                    "no provider: pass --provider or set {PROVIDER_ENV}"
                )))
            }
        },
    };
    let model = args
        .model
        .clone()
        .unwrap_or_else(|| default_model.to_string());
    let parallel = args.parallel.unwrap_or(default_parallel);
    if parallel == 0 {
        return Err(usage("--parallel must be at least 1"));
    }
    let opts = ProviderOptions {
        model: model.clone(),
        ..ProviderOptions::default()
    };
    let inner = open_provider(&endpoint, &opts)?;
    Ok(Provider {
        endpoint,
        model,
        parallel,
        inner,
    })
}

fn load(path: &Path) -> Result<Benchmark> {
    load_benchmark(path).with_context(|| format!("loading {}", path.display()))
}

fn image_root(input: &Path) -> PathBuf {
    input.parent().map(Path::to_path_buf).unwrap_or_default()
}

pub fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Validate { input, out } => cmd_validate(&input, out.as_deref()),
        Command::Perturb {
            input,
            out,
            strategy,
            seed,
        } => cmd_perturb(&input, &out, &strategy, seed),
        Command::Cases {
            input,
            pool,
            out,
            seed,
        } => cmd_cases(&input, &pool, &out, seed),
        Command::Bias {
            input,
            out,
            branch,
            bins,
            provider,
        } => cmd_bias(&input, &out, branch.as_deref(), bins, &provider),
        Command::Filter {
            bias,
            out,
            tau,
            input,
            items,
            strict,
        } => cmd_filter(
            &bias,
            &out,
            tau,
            input.as_deref().zip(items.as_deref()),
            strict,
        ),
        Command::Assemble {
            config,
            out,
            seed,
            tau,
            bins,
            strict,
            provider,
        } => cmd_assemble(&config, &out, seed, tau, bins, strict, &provider),
        Command::Eval {
            input,
            out,
            prompt,
            seed,
            scores,
            provider,
        } => cmd_eval(&input, &out, prompt, seed, scores.as_deref(), &provider),
        Command::Ablate {
            input,
            out,
            prompt,
            seed,
            noise_size,
            provider,
        } => cmd_ablate(&input, &out, prompt, seed, &noise_size, &provider),
        Command::Report {
            input,
            out,
            format,
            ablation,
            human,
            bias,
        } => cmd_report(
            &input,
            &out,
            &format,
            ablation.as_deref(),
            human.as_deref(),
            &bias,
        ),
    }
}

#[derive(Debug)]
struct ValidationFailed(usize);

impl std::fmt::Display for ValidationFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} violation(s) found", self.0)
    }
}

impl std::error::Error for ValidationFailed {}

fn cmd_validate(input: &Path, out: Option<&Path>) -> Result<()> {
    let mut run = Run::new("validate");
    run.input(input);
    let report = validate(&load(input)?);
    match out {
        Some(path) => {
            write_json(path, &report)?;
            run.outputs.push(path.to_path_buf());
            run.finish(path)?;
        }
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    if report.is_clean() {
        Ok(())
    } else {
        Err(ValidationFailed(report.violations.len()).into())
    }
}

fn cmd_perturb(input: &Path, out: &Path, strategy: &str, seed: u64) -> Result<()> {
    let strategy: ShuffleStrategy = strategy.parse().map_err(|e: String| usage(e))?;
    let mut run = Run::new("perturb");
    run.input(input)
        .param("strategy", strategy.slug())
        .seed("seed", seed);
    let mut b = load(input)?;
    let mut identity = 0;
    for item in &mut b.items {
        let mut negatives = Vec::with_capacity(item.positives.len());
        for p in &item.positives {
            let label = format!("perturb/{}/{}", item.item_id, p.id);
            let out = perturb(p, strategy, Seed(seed).derive(&label))?;
            identity += usize::from(out.identity);
            negatives.push(out.reference);
        }
        item.negatives = negatives;
    }
    if identity > 0 {
        log::warn!("{identity} shuffle(s) left their sentence unchanged");
    }
    b.recount();
    save(&b, out)?;
    run.outputs.push(out.to_path_buf());
    run.finish(out)
}

fn cmd_cases(input: &Path, pool_path: &Path, out: &Path, seed: u64) -> Result<()> {
    let mut run = Run::new("cases");
    run.input(input).input(pool_path).seed("seed", seed);
    let b = load(input)?;
    let pool =
        load_pool(pool_path).with_context(|| format!("loading pool {}", pool_path.display()))?;
    let suite = build_case_suite(&b.items, &pool, Seed(seed))?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for (name, case) in [
        ("case1", &suite.case1),
        ("case2", &suite.case2),
        ("case3", &suite.case3),
    ] {
        let path = out.join(format!("{name}.jsonl"));
        save(case, &path)?;
        run.outputs.push(path);
    }
    let summary = out.join("cases.json");
    write_json(
        &summary,
        &serde_json::json!({
            "items": b.items.len(),
            "case3_dropped": suite.dropped_from_case3,
            "identity_shuffles": suite.identity_shuffles,
        }),
    )?;
    run.outputs.push(summary);
    run.finish(out)
}

fn cmd_bias(
    input: &Path,
    out: &Path,
    branch: Option<&str>,
    bins: usize,
    args: &ProviderArgs,
) -> Result<()> {
    if bins == 0 {
        return Err(usage("--bins must be at least 1"));
    }
    let b = load(input)?;
    let branch = match branch {
        Some(s) => parse_branch(s)?,
        None => {
            let present: Vec<Branch> = b
                .items
                .iter()
                .map(|i| i.branch.name)
                .collect::<std::collections::BTreeSet<_>>()
                .into_iter()
                .collect();
            match present.as_slice() {
                [one] => *one,
                [] => bail!("{} has no retrieval items", input.display()),
                many => {
                    return Err(usage(format!(
                        "input mixes branches {many:?}; pass --branch"
                    )))
                }
            }
        }
    };
    let items: Vec<_> = b
        .items
        .into_iter()
        .filter(|i| i.branch.name == branch)
        .collect();
    let provider = open(args, None, "default", 1)?;
    let mut run = Run::new("bias");
    run.input(input)
        .provider(&provider)
        .param("branch", branch)
        .param("bins", bins)
        .param("parallel", provider.parallel);

    let opts = BiasOptions {
        bins,
        parallel: provider.parallel,
        ..BiasOptions::default()
    };
    let report: BiasReport = compute_bias_distribution(&items, &provider.inner, &opts)?;
    write_json(out, &report)?;
    run.outputs.push(out.to_path_buf());
    run.finish(out)
}

fn cmd_filter(
    bias: &Path,
    out: &Path,
    tau: f64,
    bench: Option<(&Path, &Path)>,
    strict: bool,
) -> Result<()> {
    let mut run = Run::new("filter");
    run.input(bias).param("tau", tau).param("strict", strict);
    let mut report: BiasReport = read_json(bias)?;
    let policy = if strict {
        TestPolicy::RequireUnbiased
    } else {
        TestPolicy::ReportOnly
    };
    let outcome = apply_threshold(&mut report, tau, policy)?;
    log::info!(
        "{}: retained {} of {} items",
        report.branch,
        outcome.retained.len(),
        report.records.len()
    );
    write_json(out, &report)?;
    run.outputs.push(out.to_path_buf());

    if let Some((input, items_out)) = bench {
        run.input(input);
        let mut b = load(input)?;
        let keep: HashSet<&str> = report.retained_ids.iter().map(String::as_str).collect();
        b.items
            .retain(|i| i.branch.name != report.branch || keep.contains(i.item_id.as_str()));
        b.recount();
        save(&b, items_out)?;
        run.outputs.push(items_out.to_path_buf());
    }
    run.finish(out)
}

fn cmd_assemble(
    config: &Path,
    out: &Path,
    seed: Option<u64>,
    tau: Option<f64>,
    bins: Option<usize>,
    strict: bool,
    args: &ProviderArgs,
) -> Result<()> {
    let mut cfg = SadeConfig::load(config)?;
    let base = config.parent().map(Path::to_path_buf).unwrap_or_default();
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(t) = tau {
        cfg.default_tau = t;
    }
    if let Some(b) = bins {
        cfg.bins = b;
    }
    if let Some(p) = args.parallel {
        cfg.parallel = p;
    }
    if let Some(m) = &args.model {
        cfg.model = m.clone();
    }
    if strict {
        cfg.test_policy = TestPolicy::RequireUnbiased;
    }
    cfg.check()?;

    let sources = SadeSources::load(&cfg, &base)?;
    let configured = cfg
        .provider
        .as_deref()
        .map(|s| {
            s.parse::<Endpoint>().map(|e| match e {
                Endpoint::Mock(p) if p.is_relative() => Endpoint::Mock(base.join(p)),
                other => other,
            })
        })
        .transpose()?;
    let provider = open(args, configured, &cfg.model.clone(), cfg.parallel)?;
    cfg.model = provider.model.clone();

    let mut run = Run::new("assemble");
    run.input(config);
    for p in cfg.input_paths(&base) {
        run.input(&p);
    }
    run.provider(&provider)
        .seed("seed", cfg.seed)
        .param("config", &cfg);

    let assembly = assemble_sade(&cfg, &sources, &provider.inner)?;
    let jsonl = assembly.write(out)?;
    run.outputs.push(jsonl);
    run.outputs.push(out.join(sade_core::corpus::METADATA_FILE));
    for (branch, report) in &assembly.reports {
        let path = out
            .join("bias")
            .join(format!("{}.json", branch.name().to_lowercase()));
        write_json(&path, report)?;
        run.outputs.push(path);
    }
    run.finish(out)
}

fn eval_options(input: &Path, prompt: Option<String>, parallel: usize) -> EvalOptions {
    EvalOptions {
        prompt: prompt.unwrap_or_else(|| DEFAULT_PROMPT.to_string()),
        parallel,
        weights: WeightScheme::Uniform,
        image_root: image_root(input),
    }
}

fn cmd_eval(
    input: &Path,
    out: &Path,
    prompt: Option<String>,
    seed: u64,
    scores: Option<&Path>,
    args: &ProviderArgs,
) -> Result<()> {
    let b = load(input)?;
    let provider = open(args, None, "default", 1)?;
    let opts = eval_options(input, prompt, provider.parallel);
    let mut run = Run::new("eval");
    run.input(input)
        .provider(&provider)
        .seed("seed", seed)
        .param("prompt", &opts.prompt)
        .param("parallel", opts.parallel);

    let scored = score_benchmark(&b, &provider.inner, &opts)?;
    let report = EvalReport {
        benchmark: b.metadata.name.clone(),
        provider: provider.endpoint.to_string(),
        model: provider.model.clone(),
        prompt: opts.prompt.clone(),
        weights: opts.weights,
        seed,
        declared: b.metadata.counts.keys().copied().collect(),
        branches: branch_scores(&scored)?,
        ablation: BTreeMap::new(),
        histograms: BTreeMap::new(),
        human: Vec::new(),
    };
    write_json(out, &report)?;
    run.outputs.push(out.to_path_buf());
    if let Some(path) = scores {
        ensure_parent(path)?;
        write_jsonl(path, &scored.items)?;
        run.outputs.push(path.to_path_buf());
    }
    run.finish(out)
}

fn parse_dims(s: &str) -> Result<(u32, u32)> {
    let bad = || usage(format!("--noise-size must look like 224x224, got `{s}`"));
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let w: u32 = w.trim().parse().map_err(|_| bad())?;
    let h: u32 = h.trim().parse().map_err(|_| bad())?;
    if w == 0 || h == 0 {
        return Err(bad());
    }
    Ok((w, h))
}

fn cmd_ablate(
    input: &Path,
    out: &Path,
    prompt: Option<String>,
    seed: u64,
    noise_size: &str,
    args: &ProviderArgs,
) -> Result<()> {
    let dims = parse_dims(noise_size)?;
    let b = load(input)?;
    let provider = open(args, None, "default", 1)?;
    let opts = AblationOptions {
        eval: eval_options(input, prompt, provider.parallel),
        seed: Seed(seed),
        default_dims: dims,
    };
    let mut run = Run::new("ablate");
    run.input(input)
        .provider(&provider)
        .seed("seed", seed)
        .param("prompt", &opts.eval.prompt)
        .param("noise_size", dims);

    let rows = ablate_noise(&b, &provider.inner, &opts)?;
    write_json(out, &rows)?;
    run.outputs.push(out.to_path_buf());
    run.finish(out)
}

fn cmd_report(
    input: &Path,
    out: &Path,
    format: &str,
    ablation: Option<&Path>,
    human: Option<&Path>,
    bias: &[PathBuf],
) -> Result<()> {
    let format: ReportFormat = format.parse().map_err(|e: String| usage(e))?;
    let mut run = Run::new("report");
    run.input(input).param("format", format);
    let mut report: EvalReport = read_json(input)?;
    if let Some(path) = ablation {
        run.input(path);
        report.ablation = read_json::<BTreeMap<Branch, AblationRow>>(path)?;
    }
    if let Some(path) = human {
        run.input(path);
        let file =
            std::fs::File::open(path).with_context(|| format!("reading {}", path.display()))?;
        report.human = human_eval_rows(&human_eval_aggregate(&parse_ratings(file)?)?);
    }
    for path in bias {
        run.input(path);
        let b: BiasReport = read_json(path)?;
        if report.histograms.insert(b.branch, b.histogram).is_some() {
            return Err(anyhow!("two bias reports for branch {}", b.branch));
        }
    }
    let doc = emit_report(&report, format)?;
    write_text(out, &doc)?;
    run.outputs.push(out.to_path_buf());
    run.finish(out)
}
