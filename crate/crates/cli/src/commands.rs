//! The five subcommands: extract, vectorize, evaluate, report, selftest.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use anyhow::{anyhow, bail, ensure, Context, Result};

use topodigit::imageio::LabeledDataset;
use topodigit::learn::{
    crossvalidate, Architecture, EvalReport, FixedSource, ReportTags, StreamSource,
};
use topodigit::pipeline::{
    assemble_rows, extract_dataset, image_matrix, read_diagram_cache, read_feature_matrix,
    with_pool, write_diagram_cache, write_feature_matrix, FeatureCacheHeader, TopoSource,
    CACHE_VERSION, FEATURE_CACHE_KIND,
};
use topodigit::vectorize::{fit_sample_ranges, FieldPair, Strategy, VectorizerConfig};

use crate::config::{dataset_fingerprint, file_digest, PipelineConfig, VectorizerSpec};
use crate::manifest::{RunManifest, StageRecord};

pub const DIAGRAMS_FILE: &str = "diagrams.bin";

fn diagrams_path(out: &Path) -> PathBuf {
    out.join(DIAGRAMS_FILE)
}

fn feature_path(out: &Path, vectorizer: &str, strategy: &str) -> PathBuf {
    out.join("features")
        .join(format!("{vectorizer}-{strategy}.bin"))
}

/// Load the configured subset plus its content fingerprint and the manifest.
fn open_run(cfg: &PipelineConfig, out: &Path) -> Result<(LabeledDataset, String, RunManifest)> {
    std::fs::create_dir_all(out)
        .with_context(|| format!("creating output directory {}", out.display()))?;
    let ds = cfg.load_dataset()?;
    let ds_fp = dataset_fingerprint(&ds);
    let manifest = RunManifest::load_or_new(out, cfg.fingerprint(), ds_fp.clone());
    Ok((ds, ds_fp, manifest))
}

pub fn cmd_extract(cfg: &PipelineConfig, out: &Path, workers: Option<usize>) -> Result<()> {
    let start = Instant::now();
    let (ds, ds_fp, mut manifest) = open_run(cfg, out)?;
    let filtration = cfg.effective_filtration();
    let path = diagrams_path(out);

    if path.exists() {
        match read_diagram_cache(&path) {
            Ok((header, _))
                if header.dataset_fingerprint == ds_fp && header.filtration == filtration =>
            {
                let seconds = start.elapsed().as_secs_f64();
                println!(
                    "extract: cache hit — {} already covers this subset ({} images)",
                    path.display(),
                    header.image_count
                );
                manifest.record(
                    "extract",
                    StageRecord {
                        artifact: DIAGRAMS_FILE.into(),
                        fingerprint: file_digest(&path)?,
                        seconds,
                        cache_hit: true,
                        note: "cache hit".into(),
                    },
                );
                manifest.save(out)?;
                return Ok(());
            }
            Ok(_) => eprintln!(
                "warning: {} was built under a different configuration; rebuilding",
                path.display()
            ),
            Err(e) => eprintln!("warning: corrupt cache ({e}); rebuilding"),
        }
    }

    let diagrams = extract_dataset(&ds.images, &filtration, workers)?;
    let header = write_diagram_cache(&path, &ds_fp, &filtration, &diagrams)?;
    let records: u64 = header.counts.iter().map(|&c| c as u64).sum();
    let seconds = start.elapsed().as_secs_f64();
    println!(
        "extract: {} images → {} diagram records in {} ({seconds:.1}s)",
        header.image_count,
        records,
        path.display()
    );
    manifest.record(
        "extract",
        StageRecord {
            artifact: DIAGRAMS_FILE.into(),
            fingerprint: file_digest(&path)?,
            seconds,
            cache_hit: false,
            note: format!("{} images, {records} records", header.image_count),
        },
    );
    manifest.save(out)
}

/// Read the diagram cache, translating the failure modes into actionable
/// messages and refusing caches built for a different dataset or filtration.
fn load_diagrams(cfg: &PipelineConfig, out: &Path, ds_fp: &str) -> Result<Vec<Vec<FieldPair>>> {
    let path = diagrams_path(out);
    let (header, diagrams) = read_diagram_cache(&path).map_err(|e| {
        if e.is_not_found() {
            anyhow!(
                "diagram cache {} not found — run `topodigit extract` first",
                path.display()
            )
        } else {
            anyhow!("{e} — rerun `topodigit extract` to rebuild it")
        }
    })?;
    ensure!(
        header.dataset_fingerprint == ds_fp,
        "diagram cache {} was extracted from a different dataset/subset — rerun `topodigit extract`",
        path.display()
    );
    ensure!(
        header.filtration == cfg.effective_filtration(),
        "diagram cache {} was extracted under different filtration settings — rerun `topodigit extract`",
        path.display()
    );
    Ok(diagrams)
}

/// The configured parameter overrides for a vectorizer kind, if any.
fn spec_for(cfg: &PipelineConfig, kind: &str) -> Result<(VectorizerSpec, VectorizerConfig)> {
    let spec = cfg
        .vectorizers
        .iter()
        .find(|s| s.kind == kind)
        .cloned()
        .unwrap_or_else(|| VectorizerSpec::plain(kind));
    let vcfg = spec.to_config()?;
    Ok((spec, vcfg))
}

/// Build the feature-cache header this run expects for `(vectorizer,
/// strategy)`; the expensive matrix assembly is skipped when an existing
/// file already carries exactly this header.
fn expected_feature_header(
    cfg: &PipelineConfig,
    out: &Path,
    ds: &LabeledDataset,
    ds_fp: &str,
    diagrams: &[Vec<FieldPair>],
    vectorizer: &str,
    strategy: Strategy,
) -> Result<(VectorizerConfig, FeatureCacheHeader)> {
    let (_, vcfg) = spec_for(cfg, vectorizer)?;
    let ranges = fit_sample_ranges(ds.train_indices.iter().map(|&i| &diagrams[i]))?;
    let cols = vcfg.vector_len(strategy, ranges.field_count);
    let header = FeatureCacheHeader {
        kind: FEATURE_CACHE_KIND.into(),
        version: CACHE_VERSION,
        dataset_fingerprint: ds_fp.into(),
        diagram_fingerprint: file_digest(&diagrams_path(out))?,
        vectorizer: vectorizer.into(),
        strategy: strategy.to_string(),
        config: vcfg.clone(),
        ranges,
        rows: ds.images.len(),
        cols,
    };
    Ok((vcfg, header))
}

pub fn cmd_vectorize(
    cfg: &PipelineConfig,
    out: &Path,
    workers: Option<usize>,
    vectorizer: &str,
    strategy: &str,
) -> Result<()> {
    let start = Instant::now();
    let strategy: Strategy = Strategy::from_str(strategy).map_err(anyhow::Error::msg)?;
    let (ds, ds_fp, mut manifest) = open_run(cfg, out)?;
    let diagrams = load_diagrams(cfg, out, &ds_fp)?;
    let (vcfg, header) =
        expected_feature_header(cfg, out, &ds, &ds_fp, &diagrams, vectorizer, strategy)?;

    let path = feature_path(out, vectorizer, &strategy.to_string());
    let stage = format!("vectorize/{vectorizer}-{strategy}");
    if path.exists() {
        match read_feature_matrix(&path) {
            Ok((existing, _)) if existing == header => {
                let seconds = start.elapsed().as_secs_f64();
                println!(
                    "vectorize: cache hit — {} is up to date ({}×{})",
                    path.display(),
                    header.rows,
                    header.cols
                );
                manifest.record(
                    &stage,
                    StageRecord {
                        artifact: relative_to(&path, out),
                        fingerprint: file_digest(&path)?,
                        seconds,
                        cache_hit: true,
                        note: "cache hit".into(),
                    },
                );
                manifest.save(out)?;
                return Ok(());
            }
            Ok(_) => eprintln!(
                "warning: {} was built under a different configuration; rebuilding",
                path.display()
            ),
            Err(e) => eprintln!("warning: corrupt cache ({e}); rebuilding"),
        }
    }

    std::fs::create_dir_all(path.parent().unwrap())
        .with_context(|| format!("creating {}", path.parent().unwrap().display()))?;
    let all_rows: Vec<usize> = (0..diagrams.len()).collect();
    let matrix = with_pool(workers, || {
        assemble_rows(&diagrams, &all_rows, &vcfg, strategy, &header.ranges)
    })??;
    write_feature_matrix(&path, &header, &matrix)?;
    let seconds = start.elapsed().as_secs_f64();
    println!(
        "vectorize: {vectorizer}/{strategy} → {}×{} matrix in {} ({seconds:.1}s)",
        header.rows,
        header.cols,
        path.display()
    );
    manifest.record(
        &stage,
        StageRecord {
            artifact: relative_to(&path, out),
            fingerprint: file_digest(&path)?,
            seconds,
            cache_hit: false,
            note: format!("{}×{}", header.rows, header.cols),
        },
    );
    manifest.save(out)
}

fn relative_to(path: &Path, base: &Path) -> String {
    path.strip_prefix(base)
        .unwrap_or(path)
        .to_string_lossy()
        .into_owned()
}

/// Split a comma-separated flag into the per-stream list an architecture
/// needs, broadcasting a single value across both streams.
fn per_stream(flag: Option<&str>, name: &str, streams: usize) -> Result<Vec<String>> {
    let raw = flag.ok_or_else(|| anyhow!("--{name} is required for this architecture"))?;
    let parts: Vec<String> = raw.split(',').map(|s| s.trim().to_string()).collect();
    match (parts.len(), streams) {
        (n, s) if n == s => Ok(parts),
        (1, s) => Ok(vec![parts[0].clone(); s]),
        (n, s) => {
            bail!("--{name} lists {n} values but the architecture has {s} topological stream(s)")
        }
    }
}

/// Verify that a cached feature matrix matches what this run would produce;
/// any difference is refused with a field-by-field diff.
fn check_feature_cache(
    out: &Path,
    expected: &FeatureCacheHeader,
    vectorizer: &str,
    strategy: &str,
) -> Result<()> {
    let path = feature_path(out, vectorizer, strategy);
    let (cached, _) = read_feature_matrix(&path).map_err(|e| {
        if e.is_not_found() {
            anyhow!(
                "feature matrix {} not found — run `topodigit vectorize --vectorizer {vectorizer} --strategy {strategy}` first",
                path.display()
            )
        } else {
            anyhow!("{e}")
        }
    })?;
    if cached == *expected {
        return Ok(());
    }
    let mut diffs = Vec::new();
    let mut diff = |field: &str, a: String, b: String| {
        if a != b {
            diffs.push(format!("  - {field}: cached {a}, requested {b}"));
        }
    };
    diff(
        "vectorizer",
        cached.vectorizer.clone(),
        expected.vectorizer.clone(),
    );
    diff(
        "strategy",
        cached.strategy.clone(),
        expected.strategy.clone(),
    );
    diff(
        "resolution",
        cached.config.resolution.to_string(),
        expected.config.resolution.to_string(),
    );
    diff(
        "layers",
        cached.config.layers.to_string(),
        expected.config.layers.to_string(),
    );
    diff(
        "power",
        cached.config.power.to_string(),
        expected.config.power.to_string(),
    );
    diff(
        "sigma",
        cached.config.sigma.to_string(),
        expected.config.sigma.to_string(),
    );
    diff(
        "dataset",
        short_fp(&cached.dataset_fingerprint),
        short_fp(&expected.dataset_fingerprint),
    );
    diff(
        "diagram cache",
        short_fp(&cached.diagram_fingerprint),
        short_fp(&expected.diagram_fingerprint),
    );
    diff("rows", cached.rows.to_string(), expected.rows.to_string());
    if diffs.is_empty() {
        diffs.push("  - fitted sample ranges differ".into());
    }
    bail!(
        "feature cache {} does not match the requested configuration:\n{}\nrerun `topodigit vectorize --vectorizer {vectorizer} --strategy {strategy}` after reconciling the config",
        path.display(),
        diffs.join("\n")
    );
}

fn short_fp(fp: &str) -> String {
    format!("{}…", &fp[..fp.len().min(12)])
}

fn report_slug(arch: &str, vectorizer: &str, strategy: &str) -> String {
    let mut parts = vec![arch.to_string()];
    if vectorizer != "-" {
        parts.push(vectorizer.replace(',', "+"));
    }
    if strategy != "-" {
        parts.push(strategy.replace(',', "+"));
    }
    parts.join("-")
}

pub fn cmd_evaluate(
    cfg: &PipelineConfig,
    out: &Path,
    workers: Option<usize>,
    arch: &str,
    vectorizer: Option<&str>,
    strategy: Option<&str>,
) -> Result<()> {
    let start = Instant::now();
    let arch: Architecture = arch.parse().map_err(anyhow::Error::msg)?;
    let (ds, ds_fp, mut manifest) = open_run(cfg, out)?;

    let topo_streams = match arch {
        Architecture::MlpI => 0,
        Architecture::MlpT | Architecture::MlpTPlusI => 1,
        Architecture::MlpTPlusT => 2,
    };

    let diagrams;
    let mut topo_sources: Vec<TopoSource> = Vec::new();
    let (vec_tag, strat_tag) = if topo_streams > 0 {
        let vec_names = per_stream(vectorizer, "vectorizer", topo_streams)?;
        let strat_names = per_stream(strategy, "strategy", topo_streams)?;
        diagrams = load_diagrams(cfg, out, &ds_fp)?;
        for (v, s) in vec_names.iter().zip(&strat_names) {
            let strat = Strategy::from_str(s).map_err(anyhow::Error::msg)?;
            let (vcfg, expected) =
                expected_feature_header(cfg, out, &ds, &ds_fp, &diagrams, v, strat)?;
            check_feature_cache(out, &expected, v, s)?;
            topo_sources.push(TopoSource::new(&diagrams, vcfg, strat)?);
        }
        (vec_names.join("+"), strat_names.join("+"))
    } else {
        ("-".to_string(), "-".to_string())
    };

    let image_source;
    let mut sources: Vec<&dyn StreamSource> = topo_sources
        .iter()
        .map(|s| s as &dyn StreamSource)
        .collect();
    if matches!(arch, Architecture::MlpI | Architecture::MlpTPlusI) {
        image_source = FixedSource {
            rows: image_matrix(&ds.images),
        };
        sources.push(&image_source as &dyn StreamSource);
    }

    let tags = ReportTags {
        architecture: arch.to_string(),
        vectorizer: vec_tag.clone(),
        strategy: strat_tag.clone(),
    };
    let report = with_pool(workers, || {
        crossvalidate(&sources, &ds.labels, cfg.folds, &cfg.train_config, tags)
    })??;

    let reports_dir = out.join("reports");
    std::fs::create_dir_all(&reports_dir)
        .with_context(|| format!("creating {}", reports_dir.display()))?;
    let slug = report_slug(&report.architecture, &vec_tag, &strat_tag);
    let json_path = reports_dir.join(format!("{slug}.json"));
    let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
    json.push('\n');
    std::fs::write(&json_path, &json)
        .with_context(|| format!("writing {}", json_path.display()))?;

    let table = render_report(&report);
    let txt_path = reports_dir.join(format!("{slug}.txt"));
    std::fs::write(&txt_path, &table).with_context(|| format!("writing {}", txt_path.display()))?;
    print!("{table}");

    append_results_row(out, &report)?;

    let seconds = start.elapsed().as_secs_f64();
    manifest.record(
        &format!("evaluate/{slug}"),
        StageRecord {
            artifact: relative_to(&json_path, out),
            fingerprint: file_digest(&json_path)?,
            seconds,
            cache_hit: false,
            note: format!("mean {:.5}", report.mean_accuracy),
        },
    );
    manifest.save(out)
}

fn render_report(report: &EvalReport) -> String {
    let mut s = String::new();
    s.push_str(&format!("architecture: {}\n", report.architecture));
    s.push_str(&format!("vectorizer:   {}\n", report.vectorizer));
    s.push_str(&format!("strategy:     {}\n", report.strategy));
    s.push_str(&format!("folds:        {}\n", report.fold_accuracies.len()));
    s.push_str("fold accuracies:");
    for acc in &report.fold_accuracies {
        s.push_str(&format!(" {acc:.5}"));
    }
    s.push('\n');
    s.push_str(&format!(
        "mean ± std:   {:.5} ± {:.5}\n",
        report.mean_accuracy, report.std_accuracy
    ));
    s.push_str("confusion (rows = true class, columns = predicted):\n");
    s.push_str("     ");
    for c in 0..report.confusion.len() {
        s.push_str(&format!("{c:>6}"));
    }
    s.push('\n');
    for (r, row) in report.confusion.iter().enumerate() {
        s.push_str(&format!("{r:>5}"));
        for &v in row {
            s.push_str(&format!("{v:>6}"));
        }
        s.push('\n');
    }
    s
}

fn append_results_row(out: &Path, report: &EvalReport) -> Result<()> {
    use std::io::Write;
    let path = out.join("results.tsv");
    let new = !path.exists();
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .with_context(|| format!("opening {}", path.display()))?;
    if new {
        writeln!(f, "architecture\tvectorizer\tstrategy\tfolds\tmean\tstd")?;
    }
    writeln!(
        f,
        "{}\t{}\t{}\t{}\t{:.5}\t{:.5}",
        report.architecture,
        report.vectorizer,
        report.strategy,
        report.fold_accuracies.len(),
        report.mean_accuracy,
        report.std_accuracy
    )?;
    Ok(())
}

pub fn cmd_report(out: &Path) -> Result<()> {
    let reports_dir = out.join("reports");
    let mut files: Vec<PathBuf> = match std::fs::read_dir(&reports_dir) {
        Ok(entries) => entries
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect(),
        Err(_) => Vec::new(),
    };
    files.sort();
    if files.is_empty() {
        bail!(
            "no evaluations found under {} — run `topodigit evaluate` first",
            reports_dir.display()
        );
    }
    let mut reports = Vec::new();
    for path in &files {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let report: EvalReport =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        reports.push(report);
    }

    let baseline = reports
        .iter()
        .find(|r| r.architecture == "mlp-i")
        .map(|r| r.mean_accuracy);

    let mut s = String::new();
    s.push_str(&format!(
        "{:<14} {:<24} {:<12} {:>8} {:>8}  {}\n",
        "architecture", "vectorizer", "strategy", "mean", "std", "flag"
    ));
    for r in &reports {
        let flag = match baseline {
            Some(base) if r.mean_accuracy > base => "*",
            _ => "",
        };
        s.push_str(&format!(
            "{:<14} {:<24} {:<12} {:>8.5} {:>8.5}  {}\n",
            r.architecture, r.vectorizer, r.strategy, r.mean_accuracy, r.std_accuracy, flag
        ));
    }
    match baseline {
        Some(base) => s.push_str(&format!(
            "* = mean accuracy above the mlp-i baseline ({base:.5})\n"
        )),
        None => s.push_str("note: no mlp-i baseline run found; improvement flags suppressed\n"),
    }

    std::fs::write(out.join("report.txt"), &s)
        .with_context(|| format!("writing {}", out.join("report.txt").display()))?;
    print!("{s}");
    Ok(())
}

/// Fast built-in correctness checks that need no dataset: golden diagrams,
/// an oracle sweep, vectorizer identities, and a gradient check.
pub fn cmd_selftest() -> Result<()> {
    use ndarray::Array1;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use topodigit::cubical::build_complex;
    use topodigit::filtration::ScalarField;
    use topodigit::learn::{gradient_check, DenseClassifier};
    use topodigit::persistence::{
        betti_of_diagram, compute_persistence, finalize_diagram, h0_union_find,
    };

    let start = Instant::now();
    let mut checks = 0;

    // Golden ring: one component and one loop, both spanning (0, 2).
    let ring = ScalarField::from_values(3, 3, vec![0., 0., 0., 0., 2., 0., 0., 0., 0.]);
    let complex = build_complex(&ring);
    let (d0, d1) = compute_persistence(&complex)?;
    let f0 = finalize_diagram(&d0, ring.max_value());
    let f1 = finalize_diagram(&d1, ring.max_value());
    ensure!(
        f0.points.len() == 1 && f0.points[0].birth == 0.0 && f0.points[0].death == 2.0,
        "selftest: ring H0 mismatch: {:?}",
        f0.points
    );
    ensure!(
        f1.points.len() == 1 && f1.points[0].birth == 0.0 && f1.points[0].death == 2.0,
        "selftest: ring H1 mismatch: {:?}",
        f1.points
    );
    checks += 2;

    // Random fields: union-find agreement in dimension 0 plus Euler balance.
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..25 {
        let w = rng.gen_range(3..=6);
        let h = rng.gen_range(3..=6);
        let values: Vec<f64> = (0..w * h).map(|_| rng.gen_range(0..=3) as f64).collect();
        let field = ScalarField::from_values(w, h, values);
        let complex = build_complex(&field);
        let (d0, d1) = compute_persistence(&complex)?;
        let uf = h0_union_find(&complex);
        let key = |d: &topodigit::persistence::PersistenceDiagram| {
            d.points
                .iter()
                .map(|p| {
                    (
                        p.birth.to_bits(),
                        p.death.to_bits(),
                        p.essential,
                        p.multiplicity,
                    )
                })
                .collect::<Vec<_>>()
        };
        ensure!(key(&d0) == key(&uf), "selftest: union-find disagreement");
        for t in 0..=3 {
            let t = t as f64;
            let (v, e, f) = complex.sublevel_counts(t);
            ensure!(
                betti_of_diagram(&d0, t) as i64 - betti_of_diagram(&d1, t) as i64
                    == v as i64 - e as i64 + f as i64,
                "selftest: Euler imbalance at t = {t}"
            );
        }
        checks += 1;
    }

    // Gradient check on two small models in the f64 shadow.
    for seed in [3u64, 4] {
        let model = DenseClassifier::<f64>::new(&[6], seed);
        let mut srng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array1::from_shape_fn(6, |_| srng.gen_range(-1.0..1.0));
        let err = gradient_check(&model, &[x], 2);
        ensure!(err < 1e-4, "selftest: gradient error {err}");
        checks += 1;
    }

    println!(
        "selftest: {checks} checks passed in {:.2}s",
        start.elapsed().as_secs_f64()
    );
    Ok(())
}
