use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use vetri_core::adapters::{
    ingest_report, ingest_static_analysis, AppFinding, IngestOptions, StaticAnalysisOptions, ToolFormat, ToolReport,
};
use vetri_core::extract::{
    assemble_filesystem, build_inventory, load_image, load_image_dir, CoordinatePattern, Inventory,
};
use vetri_core::manifest::Platform;
use vetri_core::metrics::{
    coverage_report, evaluate as run_evaluation, filter_detections, landscape_csv, CoverageReport, EvaluationConfig,
    FeedRef, ImageEvidence, LandscapeSummary,
};
use vetri_core::vulnfeed::{load_feed_file, match_inventory, CpeMapping, FeedFormat, FeedSnapshot};
use vetri_core::{Detection, ImageRef, JoinKey, Severity};
use vetri_registry::{CatalogEntry, CatalogQuery, Crawl, RegistryClient, RegistryConfig};

use crate::error::{CliError, Result, EXIT_OK, EXIT_PARTIAL};
use crate::store::{load_json, to_json_pretty, write_file, ScanRecord, Store};
use crate::{Context, CrawlArgs, EvalOptions, ExtractArgs, IngestArgs, PullArgs, ReportArgs, ScanArgs};

fn say(out: &mut dyn Write, line: impl std::fmt::Display) -> Result<()> {
    writeln!(out, "{line}").map_err(|e| CliError::internal(format!("writing output: {e}")))
}

fn parse_image(s: &str) -> Result<ImageRef> {
    ImageRef::parse(s).map_err(|e| CliError::usage(format!("image {s:?}: {e}")))
}

fn parse_platform(ctx: &Context, flag: Option<&String>) -> Result<Platform> {
    match flag.map(String::as_str).or(ctx.file.get("platform")) {
        Some(p) => p.parse().map_err(CliError::usage),
        None => Ok(Platform::default()),
    }
}

pub fn parse_severity(s: &str) -> Result<Severity> {
    match Severity::normalize_checked(s) {
        (sev, true) => Ok(sev),
        _ => Err(CliError::usage(format!("unknown severity {s:?}"))),
    }
}

#[derive(Serialize)]
struct CatalogFile<'a> {
    query: &'a str,
    source: vetri_registry::SourceType,
    limit: usize,
    partial: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<&'a str>,
    entries: &'a [CatalogEntry],
}

pub fn crawl(ctx: &Context, a: &CrawlArgs, out: &mut dyn Write) -> Result<i32> {
    if a.limit == 0 {
        return Err(CliError::usage("--limit must be at least 1"));
    }
    if a.page_size == 0 {
        return Err(CliError::usage("--page-size must be at least 1"));
    }
    let mut cfg = RegistryConfig::from_env();
    if let Some(h) = a.hub_url.as_deref().or(ctx.file.get("hub_url")) {
        cfg.hub_url = h.to_string();
    }
    let client = RegistryClient::new(cfg);
    let query = CatalogQuery {
        query: a.query.clone(),
        source: a.source,
        page_limit: a.limit.div_ceil(a.page_size),
        page_size: a.page_size,
        registry: a.registry.clone(),
        resolve_sources: a.resolve_sources,
    };
    let Crawl {
        mut entries,
        partial,
        error,
    } = client.crawl_catalog(&query)?;
    entries.truncate(a.limit);
    let path = a.out.clone().unwrap_or_else(|| ctx.store.catalog_path());
    let file = CatalogFile {
        query: &a.query,
        source: a.source,
        limit: a.limit,
        partial,
        error: error.as_deref(),
        entries: &entries,
    };
    write_file(&path, to_json_pretty(&file).as_bytes())?;
    say(out, format!("{} entries -> {}", entries.len(), path.display()))?;
    if partial {
        eprintln!("vetri: crawl incomplete: {}", error.unwrap_or_default());
        return Ok(EXIT_PARTIAL);
    }
    Ok(EXIT_OK)
}

pub fn pull(ctx: &Context, a: &PullArgs, out: &mut dyn Write) -> Result<i32> {
    let image = parse_image(&a.image)?;
    let mut cfg = RegistryConfig::from_env();
    cfg.registry_url = a
        .registry
        .registry_url
        .clone()
        .or_else(|| ctx.file.get("registry_url").map(str::to_string));
    cfg.platform = parse_platform(ctx, a.registry.platform.as_ref())?;
    if let Some(p) = a.registry.parallelism {
        cfg.parallelism = p;
    } else if let Some(p) = ctx.file.parsed::<usize>("parallelism")? {
        cfg.parallelism = p;
    }
    if cfg.parallelism == 0 {
        return Err(CliError::usage("parallelism must be at least 1"));
    }
    let client = RegistryClient::new(cfg);
    let dir = ctx.store.image_dir(&image)?;
    let pulled = client.pull_image(&image, &dir)?;
    ctx.store.write_image_ref(&dir, &pulled.image)?;
    say(
        out,
        format!(
            "{} ({} layers, {} blobs fetched, {} reused)",
            pulled.image,
            pulled.manifest.layer_digests.len(),
            pulled.blobs_fetched,
            pulled.blobs_reused
        ),
    )?;
    Ok(EXIT_OK)
}

pub fn extract(ctx: &Context, a: &ExtractArgs, out: &mut dyn Write) -> Result<i32> {
    let (image, dir) = ctx.store.resolve_image(&parse_image(&a.image)?)?;
    let platform = parse_platform(ctx, a.platform.as_ref())?;
    let loaded = match &a.from {
        Some(path) => load_image(path, &platform)?,
        None => {
            if !dir.join("manifest.json").is_file() {
                return Err(CliError::usage(format!(
                    "{image} has not been pulled; run pull or pass --from"
                )));
            }
            load_image_dir(&dir, &platform)?
        }
    };
    let mut selectors: Vec<CoordinatePattern> = a.app_selectors.iter().map(CoordinatePattern::new).collect();
    if selectors.is_empty() {
        selectors = ctx
            .file
            .list("app_selectors")
            .into_iter()
            .map(CoordinatePattern::new)
            .collect();
    }
    let tree = assemble_filesystem(&loaded.manifest, loaded.blobs.as_ref())?;
    let extraction = build_inventory(image.clone(), &tree, &selectors)?;
    for w in &extraction.warnings {
        eprintln!("vetri: warning: {w}");
    }
    let mut inventory = extraction.inventory;
    let path = Store::inventory_path(&dir);
    if let Ok(old) = load_json::<Inventory>(&path) {
        if (Inventory {
            extracted_at: old.extracted_at,
            ..inventory.clone()
        }) == old
        {
            inventory.extracted_at = old.extracted_at;
        }
    }
    ctx.store.write_image_ref(&dir, &image)?;
    write_file(&path, inventory.to_json().as_bytes())?;
    say(out, format!("{image}: {} packages", inventory.packages.len()))?;
    Ok(EXIT_OK)
}

pub fn scan(ctx: &Context, a: &ScanArgs, out: &mut dyn Write) -> Result<i32> {
    let (_, dir) = ctx.store.resolve_image(&parse_image(&a.image)?)?;
    let inventory = ctx.store.read_inventory(&dir)?;
    let mut mapping = CpeMapping::builtin();
    if let Some(p) = &a.cpe_map {
        let bytes = std::fs::read(p).map_err(|e| CliError::data(format!("{}: {e}", p.display())))?;
        mapping.extend(CpeMapping::from_json(&bytes)?);
    }
    let mut feeds = a.feeds.clone();
    let mut nvd = a.nvd_feeds.clone();
    if feeds.is_empty() && nvd.is_empty() {
        feeds = ctx.file.list("feeds").into_iter().map(PathBuf::from).collect();
        nvd = ctx.file.list("nvd_feeds").into_iter().map(PathBuf::from).collect();
    }
    if feeds.is_empty() && nvd.is_empty() {
        return Err(CliError::usage("no feeds given; pass --feed or --nvd-feed"));
    }
    let mut snapshots: Vec<FeedSnapshot> = Vec::new();
    for (paths, format) in [(&feeds, FeedFormat::CanonicalJson), (&nvd, FeedFormat::NvdJsonSubset)] {
        for p in paths {
            let (snap, report) = load_feed_file(p, format, &mapping)?;
            for w in &report.warnings {
                log::info!("{}: {w}", p.display());
            }
            if report.dropped > 0 {
                eprintln!(
                    "vetri: {}: {} feed item(s) had no package mapping",
                    p.display(),
                    report.dropped
                );
            }
            snapshots.push(snap);
        }
    }
    let outcome = match_inventory(&inventory, &snapshots, &a.tool_id);
    let mut report = ToolReport {
        tool_id: a.tool_id.clone(),
        image: inventory.image.clone(),
        detections: outcome.detections,
        raw_source: PathBuf::from("inventory.json"),
        ingested_at: vetri_core::now_utc(),
    };
    let mut feeds: Vec<FeedRef> = snapshots
        .iter()
        .map(|s| FeedRef {
            feed_id: s.feed_id.clone(),
            content_hash: s.content_hash.clone(),
        })
        .collect();
    feeds.sort();
    feeds.dedup();
    let record = ScanRecord {
        tool_id: a.tool_id.clone(),
        feeds,
        skipped_unknown_version: outcome.skipped_unknown_version,
        comparator_errors: outcome.comparator_errors,
    };
    let path = Store::report_path(&dir, &a.tool_id)?;
    keep_timestamp(&path, &mut report);
    write_file(&path, report.to_json().as_bytes())?;
    write_file(&dir.join("scan.json"), to_json_pretty(&record).as_bytes())?;
    say(
        out,
        format!("{}: {} detections", inventory.image, report.detections.len()),
    )?;
    Ok(EXIT_OK)
}

pub fn ingest(ctx: &Context, a: &IngestArgs, out: &mut dyn Write) -> Result<i32> {
    let (image, dir) = ctx.store.resolve_image(&parse_image(&a.image)?)?;
    if a.format.eq_ignore_ascii_case("spotbugs") {
        let project = a
            .project
            .as_deref()
            .ok_or_else(|| CliError::usage("--project is required for spotbugs reports"))?;
        let options = StaticAnalysisOptions {
            allowlist: (!a.allow.is_empty()).then(|| a.allow.iter().cloned().collect()),
            ..Default::default()
        };
        let outcome = ingest_static_analysis(&a.report, project, &options)?;
        let mut findings = outcome.findings;
        findings.sort();
        ctx.store.write_image_ref(&dir, &image)?;
        write_file(
            &Store::findings_path(&dir, project)?,
            to_json_pretty(&findings).as_bytes(),
        )?;
        say(
            out,
            format!(
                "{project}: {} security findings ({} non-security dropped)",
                findings.len(),
                outcome.dropped_non_security
            ),
        )?;
        return Ok(EXIT_OK);
    }
    let format: ToolFormat = a.format.parse().map_err(CliError::usage)?;
    let tool = match (&a.tool, format) {
        (Some(t), _) => t.clone(),
        (None, ToolFormat::Clair) => "clair".into(),
        (None, ToolFormat::Anchore) => "anchore".into(),
        (None, ToolFormat::Generic) => return Err(CliError::usage("--tool is required for generic reports")),
    };
    let path = Store::report_path(&dir, &tool)?;
    let mut ingested = ingest_report(format, &a.report, &tool, &image, IngestOptions { lenient: a.lenient })?;
    keep_timestamp(&path, &mut ingested.report);
    for w in &ingested.stats.warnings {
        eprintln!("vetri: warning: {w}");
    }
    ctx.store.write_image_ref(&dir, &image)?;
    write_file(&path, ingested.report.to_json().as_bytes())?;
    say(out, format!("{tool}: {}", ingested.stats))?;
    Ok(EXIT_OK)
}

/// Reuses the stored report's timestamp when nothing else changed, so
/// re-running a step leaves the file alone.
fn keep_timestamp(path: &Path, report: &mut ToolReport) {
    if let Ok(old) = load_json::<ToolReport>(path) {
        if (ToolReport {
            ingested_at: old.ingested_at,
            ..report.clone()
        }) == old
        {
            report.ingested_at = old.ingested_at;
        }
    }
}

/// Everything the metrics need for one image.
struct ImageData {
    image: ImageRef,
    inventory: Option<Inventory>,
    reports: Vec<ToolReport>,
    findings: Vec<AppFinding>,
    scan: Option<ScanRecord>,
}

fn load_scope(ctx: &Context, images: &[String]) -> Result<Vec<ImageData>> {
    let dirs: Vec<PathBuf> = if images.is_empty() {
        ctx.store.image_dirs()?
    } else {
        let mut dirs = Vec::new();
        for i in images {
            let dir = ctx.store.image_dir(&parse_image(i)?)?;
            if !dir.join("image.json").is_file() {
                return Err(CliError::usage(format!("{i} is not in the store")));
            }
            dirs.push(dir);
        }
        dirs.sort();
        dirs.dedup();
        dirs
    };
    dirs.iter()
        .map(|dir| {
            let inv_path = Store::inventory_path(dir);
            Ok(ImageData {
                image: ctx.store.read_image_ref(dir)?,
                inventory: if inv_path.is_file() {
                    Some(load_json(&inv_path)?)
                } else {
                    None
                },
                reports: ctx.store.read_reports(dir)?,
                findings: ctx.store.read_findings(dir)?,
                scan: ctx.store.read_scan_record(dir)?,
            })
        })
        .collect()
}

fn eval_config(ctx: &Context, o: &EvalOptions, data: &[ImageData]) -> Result<EvaluationConfig> {
    let mut cfg = EvaluationConfig::default();
    if let Some(k) = o.join_key.as_deref().or(ctx.file.get("join_key")) {
        cfg.join_key = k.parse::<JoinKey>().map_err(CliError::usage)?;
    }
    if let Some(s) = o.min_severity.as_deref().or(ctx.file.get("min_severity")) {
        cfg.min_severity = parse_severity(s)?;
    }
    if let Some(f) = o.fixed_only {
        cfg.fixed_only = f;
    } else if let Some(f) = ctx.file.parsed::<bool>("fixed_only")? {
        cfg.fixed_only = f;
    }
    cfg.tool_ids = if o.tools.is_empty() {
        let all: BTreeSet<&str> = data
            .iter()
            .flat_map(|d| d.reports.iter().map(|r| r.tool_id.as_str()))
            .collect();
        all.into_iter().map(str::to_string).collect()
    } else {
        o.tools.clone()
    };
    if !o.images.is_empty() {
        cfg.image_scope = data.iter().map(|d| d.image.clone()).collect();
    }
    Ok(cfg)
}

#[derive(Serialize)]
struct CoverageFile<'a> {
    images: Vec<CoverageReport>,
    landscape: BTreeMap<&'a str, LandscapeSummary>,
}

/// Per-tool filtered detections of one image; tools without a report for
/// the image get an empty list.
fn filtered_by_tool(d: &ImageData, cfg: &EvaluationConfig) -> Result<BTreeMap<String, Vec<Detection>>> {
    let mut out = BTreeMap::new();
    for tool in &cfg.tool_ids {
        let reports: Vec<ToolReport> = d.reports.iter().filter(|r| &r.tool_id == tool).cloned().collect();
        let dets = if reports.is_empty() {
            Vec::new()
        } else {
            let one = EvaluationConfig {
                tool_ids: vec![tool.clone()],
                ..cfg.clone()
            };
            filter_detections(&reports, &one)?
                .remove(tool)
                .map(|f| f.detections)
                .unwrap_or_default()
        };
        out.insert(tool.clone(), dets);
    }
    Ok(out)
}

/// Returns (landscape.csv, coverage.json).
fn landscape_outputs(data: &[ImageData], cfg: &EvaluationConfig) -> Result<(String, String)> {
    let per_image: Vec<BTreeMap<String, Vec<Detection>>> =
        data.iter().map(|d| filtered_by_tool(d, cfg)).collect::<Result<_>>()?;
    let keys: Vec<String> = data.iter().map(|d| d.image.key_name()).collect();

    let mut landscapes = BTreeMap::new();
    for tool in &cfg.tool_ids {
        let evidence: Vec<ImageEvidence> = data
            .iter()
            .zip(&per_image)
            .zip(&keys)
            .map(|((d, by_tool), key)| ImageEvidence {
                image: key,
                detections: &by_tool[tool],
                app_findings: &d.findings,
                inventory: d.inventory.as_ref(),
            })
            .collect();
        landscapes.insert(tool.as_str(), vetri_core::metrics::landscape(&evidence));
    }

    let mut images = Vec::new();
    for (d, by_tool) in data.iter().zip(&per_image) {
        let Some(inv) = &d.inventory else { continue };
        let all: Vec<Detection> = by_tool.values().flatten().cloned().collect();
        images.push(coverage_report(inv, &all, &d.findings)?);
    }
    let csv = landscape_csv(landscapes.iter().map(|(t, l)| (*t, l)));
    let json = to_json_pretty(&CoverageFile {
        images,
        landscape: landscapes,
    });
    Ok((csv, json))
}

pub fn evaluate(ctx: &Context, o: &EvalOptions, out: &mut dyn Write) -> Result<i32> {
    let data = load_scope(ctx, &o.images)?;
    let cfg = eval_config(ctx, o, &data)?;
    let reports: Vec<ToolReport> = data.iter().flat_map(|d| d.reports.iter().cloned()).collect();
    let mut evaluation = run_evaluation(&reports, &cfg)?;
    let feeds: BTreeSet<FeedRef> = data
        .iter()
        .filter_map(|d| d.scan.as_ref())
        .filter(|s| cfg.tool_ids.contains(&s.tool_id))
        .flat_map(|s| s.feeds.iter().cloned())
        .collect();
    evaluation.feeds = feeds.into_iter().collect();
    let (landscape, coverage) = landscape_outputs(&data, &cfg)?;

    let stamp = vetri_core::now_utc().format("%Y%m%dT%H%M%SZ");
    let dir = ctx
        .store
        .evaluations_root()
        .join(format!("{stamp}-{}", cfg.config_hash()));
    write_file(&dir.join("evaluation.json"), evaluation.to_json().as_bytes())?;
    write_file(&dir.join("dhr.csv"), evaluation.dhr_csv().as_bytes())?;
    write_file(&dir.join("landscape.csv"), landscape.as_bytes())?;
    write_file(&dir.join("coverage.json"), coverage.as_bytes())?;
    for w in &evaluation.warnings {
        eprintln!("vetri: warning: {w}");
    }
    say(out, dir.display())?;
    Ok(EXIT_OK)
}

pub fn landscape(ctx: &Context, o: &EvalOptions, out: &mut dyn Write) -> Result<i32> {
    let data = load_scope(ctx, &o.images)?;
    let cfg = eval_config(ctx, o, &data)?;
    cfg.validate()?;
    let (csv, coverage) = landscape_outputs(&data, &cfg)?;
    let dir = ctx.store.root().join("landscape");
    write_file(&dir.join("landscape.csv"), csv.as_bytes())?;
    write_file(&dir.join("coverage.json"), coverage.as_bytes())?;
    write!(out, "{csv}").map_err(|e| CliError::internal(e.to_string()))?;
    Ok(EXIT_OK)
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

pub fn report(ctx: &Context, a: &ReportArgs, out: &mut dyn Write) -> Result<i32> {
    let dir = match &a.evaluation {
        Some(d) => d.clone(),
        None => ctx
            .store
            .latest_evaluation()?
            .ok_or_else(|| CliError::usage("no evaluations in the store; run evaluate first"))?,
    };
    let eval: serde_json::Value = load_json(&dir.join("evaluation.json"))?;
    say(out, format!("evaluation {}", dir.display()))?;
    if let Some(c) = eval.get("config") {
        say(
            out,
            format!(
                "join key {}, min severity {}, fixed only {}",
                c["join_key"].as_str().unwrap_or("?"),
                c["min_severity"].as_str().unwrap_or("?"),
                c["fixed_only"]
            ),
        )?;
    }
    say(out, format!("union {}", eval["union_size"]))?;
    say(
        out,
        format!("{:<16} {:>8} {:>8} {:>8}", "tool", "hits", "misses", "dhr%"),
    )?;
    for t in eval["tools"].as_array().into_iter().flatten() {
        let dhr = t["dhr"]
            .as_f64()
            .map_or("undefined".to_string(), |v| format!("{:.2}", v * 100.0));
        say(
            out,
            format!(
                "{:<16} {:>8} {:>8} {:>8}",
                t["tool_id"].as_str().unwrap_or("?"),
                t["hits"],
                t["misses"],
                dhr
            ),
        )?;
    }
    for f in eval["feeds"].as_array().into_iter().flatten() {
        say(
            out,
            format!(
                "feed {} {}",
                f["feed_id"].as_str().unwrap_or("?"),
                f["content_hash"].as_str().unwrap_or("?")
            ),
        )?;
    }
    for w in eval["warnings"].as_array().into_iter().flatten() {
        say(out, format!("warning: {}", w.as_str().unwrap_or("?")))?;
    }
    let landscape = dir.join("landscape.csv");
    if landscape.is_file() {
        say(out, "")?;
        write!(out, "{}", read_text(&landscape)?).map_err(|e| CliError::internal(e.to_string()))?;
    }
    Ok(EXIT_OK)
}
