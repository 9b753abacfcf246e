//! Subcommand implementations over the library pipeline.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crashprint_core::bundle::{ModelBundle, TensorBundle};
use crashprint_core::config::PipelineConfig;
use crashprint_core::emerging::write_verdicts_jsonl;
use crashprint_core::error::{Error, Result};
use crashprint_core::explain::{
    absence_table, average_value_table, mutation_test, presence_table, write_average_value_csv,
};
use crashprint_core::ingest::{read_traces_jsonl, write_traces_jsonl, MetricVocabulary, RawTrace};
use crashprint_core::pipeline::{
    assign, calibrate, detect, embed_bundle, labels_for_sessions, preprocess,
    read_assignments_jsonl, train, write_assignments_jsonl,
};
use crashprint_core::synthetic::{generate, SyntheticSpec};
use crashprint_core::tsne::{tsne, write_projection_csv, TsneConfig};

use crate::{Command, ConfigArgs};

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Preprocess {
            input,
            out,
            vocab_from,
            split,
            config,
        } => {
            let config = resolve_config(&config)?;
            let traces = load_traces(&input)?;
            let vocabulary = vocab_from.as_deref().map(load_vocabulary).transpose()?;
            let bundle = preprocess(&traces, &config, vocabulary, split)?;
            bundle.save(&out)?;
            println!(
                "preprocessed {} sessions into {}x{} tensors ({})",
                bundle.len(),
                bundle.t,
                bundle.vocabulary.len(),
                out.display()
            );
            Ok(())
        }
        Command::Train {
            tensors,
            out,
            app_version,
            config,
        } => {
            let config = resolve_config(&config)?;
            let tensors = TensorBundle::load(&tensors)?;
            let bundle = train(&tensors, &config, &app_version)?;
            bundle.save(&out)?;
            let last_loss = bundle.training_curve.total.last().copied().unwrap_or(f64::NAN);
            println!(
                "trained {} embedder (z={}) on {} sessions; final loss {last_loss:.6} ({})",
                bundle.config.variant,
                bundle.embedder.z_len(),
                tensors.len(),
                out.display()
            );
            Ok(())
        }
        Command::Calibrate {
            bundle,
            tensors,
            out,
            k_range,
            percentile,
            curve_out,
        } => {
            let model = ModelBundle::load(&bundle)?;
            let tensors = TensorBundle::load(&tensors)?;
            let (lo, hi) = k_range
                .map(|r| (r.lo, r.hi))
                .unwrap_or(model.config.k_range);
            let percentile = percentile.unwrap_or(model.config.emerging_percentile);
            let (calibrated, report) = calibrate(&model, &tensors, lo..=hi, percentile)?;
            if let Some(path) = curve_out {
                report.write_csv(BufWriter::new(File::create(&path)?))?;
            }
            let cluster_model = calibrated.require_cluster_model()?;
            println!(
                "calibrated k'={} (scanned {lo}..={hi}); threshold {:.6} at p{:.0} ({})",
                cluster_model.k_prime,
                cluster_model.threshold,
                percentile * 100.0,
                out.display()
            );
            calibrated.save(&out)?;
            Ok(())
        }
        Command::Assign { bundle, input, out } => {
            let model = ModelBundle::load(&bundle)?;
            let traces = load_traces(&input)?;
            let assignments = assign(&model, &traces)?;
            write_assignments_jsonl(&assignments, BufWriter::new(File::create(&out)?))?;
            println!("assigned {} sessions ({})", assignments.len(), out.display());
            Ok(())
        }
        Command::Detect { bundle, input, out } => {
            let model = ModelBundle::load(&bundle)?;
            let traces = load_traces(&input)?;
            let verdicts = detect(&model, &traces)?;
            let flagged = verdicts.iter().filter(|v| v.flagged).count();
            write_verdicts_jsonl(&verdicts, BufWriter::new(File::create(&out)?))?;
            println!(
                "assessed {} sessions, {flagged} flagged as emerging ({})",
                verdicts.len(),
                out.display()
            );
            Ok(())
        }
        Command::Explain {
            bundle,
            tensors,
            labels,
            top_n,
            absence,
            average,
            mutation,
            min_presence,
            out_dir,
        } => run_explain(
            &bundle,
            &tensors,
            &labels,
            top_n,
            absence,
            average,
            mutation,
            min_presence,
            out_dir.as_deref(),
        ),
        Command::Viz {
            bundle,
            tensors,
            labels,
            tags,
            out,
            perplexity,
            iters,
            seed,
        } => run_viz(
            &bundle,
            &tensors,
            labels.as_deref(),
            tags.as_deref(),
            &out,
            perplexity,
            iters,
            seed,
        ),
        Command::GenSynthetic {
            out,
            labels_out,
            spec_file,
            archetypes,
            sessions_per_archetype,
            metrics,
            defining_per_archetype,
            len_min,
            len_max,
            noise,
            sparsity,
            faint_presence,
            seed,
        } => {
            let spec = match spec_file {
                Some(path) => {
                    let text = std::fs::read_to_string(&path)?;
                    serde_json::from_str(&text)?
                }
                None => SyntheticSpec {
                    archetypes,
                    sessions_per_archetype,
                    metrics,
                    defining_per_archetype,
                    session_len: (len_min, len_max),
                    noise,
                    sparsity,
                    faint_presence,
                    gauge_scales: None,
                    seed,
                },
            };
            let (traces, labels) = generate(&spec)?;
            write_traces_jsonl(BufWriter::new(File::create(&out)?), &traces)?;
            write_archetype_labels(&labels_out, &traces, &labels)?;
            println!(
                "generated {} sessions across {} archetypes ({})",
                traces.len(),
                spec.archetypes,
                out.display()
            );
            Ok(())
        }
    }
}

fn resolve_config(args: &ConfigArgs) -> Result<PipelineConfig> {
    let mut config = match &args.config {
        Some(path) => PipelineConfig::from_json_file(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(variant) = args.variant {
        config.variant = variant;
    }
    if let Some(dec) = args.dec {
        config.dec_enabled = dec;
    }
    if let Some(epochs) = args.epochs {
        config.epochs = epochs;
    }
    if let Some(t) = args.t {
        config.t = t;
    }
    if let Some(threshold) = args.presence_threshold {
        config.presence_threshold = threshold;
    }
    config.validate()?;
    Ok(config)
}

fn load_traces(path: &Path) -> Result<Vec<RawTrace>> {
    let traces = read_traces_jsonl(BufReader::new(File::open(path)?))?;
    if traces.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no traces in {}",
            path.display()
        )));
    }
    Ok(traces)
}

/// Accepts either a tensor bundle or a model bundle.
fn load_vocabulary(path: &Path) -> Result<MetricVocabulary> {
    if let Ok(tensors) = TensorBundle::load(path) {
        return Ok(tensors.vocabulary);
    }
    let model = ModelBundle::load(path)?;
    Ok(model.vocabulary)
}

#[allow(clippy::too_many_arguments)]
fn run_explain(
    bundle: &Path,
    tensors: &Path,
    labels: &Path,
    top_n: usize,
    absence: bool,
    average: bool,
    mutation: bool,
    min_presence: f64,
    out_dir: Option<&Path>,
) -> Result<()> {
    let model = ModelBundle::load(bundle)?;
    let tensors = TensorBundle::load(tensors)?;
    model.check_tensor_bundle(&tensors)?;
    let dataset = tensors.to_dataset()?;
    let assignments = read_assignments_jsonl(BufReader::new(File::open(labels)?))?;
    let session_ids: Vec<String> = dataset
        .tensors
        .iter()
        .map(|t| t.session_id.clone())
        .collect();
    let labels = labels_for_sessions(&assignments, &session_ids)?;

    let presence = presence_table(&dataset.tensors, &model.vocabulary, &labels, top_n)?;
    print!("{}", presence.render_text());
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        presence.write_csv(BufWriter::new(File::create(dir.join("presence.csv"))?))?;
        if absence {
            let table = absence_table(&dataset.tensors, &model.vocabulary, &labels, top_n)?;
            table.write_csv(BufWriter::new(File::create(dir.join("absence.csv"))?))?;
        }
        if average {
            let rows =
                average_value_table(&dataset.tensors, &model.vocabulary, &labels, min_presence, top_n)?;
            write_average_value_csv(
                &rows,
                BufWriter::new(File::create(dir.join("average_value.csv"))?),
            )?;
        }
        if mutation {
            let cluster_model = model.require_cluster_model()?;
            let report = mutation_test(
                &model.embedder,
                cluster_model,
                &dataset.tensors,
                &model.vocabulary,
                &labels,
            )?;
            report.write_csv(BufWriter::new(File::create(dir.join("mutations.csv"))?))?;
            report.write_summary_csv(BufWriter::new(File::create(
                dir.join("mutation_summary.csv"),
            )?))?;
        }
    } else if absence || average || mutation {
        return Err(Error::InvalidInput(
            "--absence/--average/--mutation need --out-dir for their CSV outputs".into(),
        ));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_viz(
    bundle: &Path,
    tensors: &Path,
    labels: Option<&Path>,
    tags: Option<&Path>,
    out: &Path,
    perplexity: f64,
    iters: usize,
    seed: Option<u64>,
) -> Result<()> {
    let model = ModelBundle::load(bundle)?;
    let tensors = TensorBundle::load(tensors)?;
    let (session_ids, embeddings) = embed_bundle(&model, &tensors)?;

    let config = TsneConfig {
        perplexity,
        iterations: iters,
        seed: seed.unwrap_or(model.config.seed),
        ..TsneConfig::default()
    };
    let mut projection = tsne(&embeddings, &config)?;

    if let Some(path) = labels {
        let assignments = read_assignments_jsonl(BufReader::new(File::open(path)?))?;
        projection.labels = Some(labels_for_sessions(&assignments, &session_ids)?);
    }
    if let Some(path) = tags {
        projection.tags = Some(read_tags(path, &session_ids)?);
    }
    write_projection_csv(&projection, &session_ids, BufWriter::new(File::create(out)?))?;
    println!("projected {} sessions ({})", session_ids.len(), out.display());
    Ok(())
}

fn read_tags(path: &Path, session_ids: &[String]) -> Result<Vec<String>> {
    #[derive(serde::Deserialize)]
    struct TagLine {
        session_id: String,
        tag: String,
    }
    let text = std::fs::read_to_string(path)?;
    let mut by_id = std::collections::BTreeMap::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let tag: TagLine =
            serde_json::from_str(line).map_err(|e| Error::InvalidInput(e.to_string()))?;
        by_id.insert(tag.session_id, tag.tag);
    }
    Ok(session_ids
        .iter()
        .map(|id| by_id.get(id).cloned().unwrap_or_default())
        .collect())
}

fn write_archetype_labels(path: &PathBuf, traces: &[RawTrace], labels: &[usize]) -> Result<()> {
    #[derive(serde::Serialize)]
    struct LabelLine<'a> {
        session_id: &'a str,
        archetype: usize,
    }
    let mut writer = BufWriter::new(File::create(path)?);
    for (trace, &archetype) in traces.iter().zip(labels) {
        serde_json::to_writer(
            &mut writer,
            &LabelLine {
                session_id: &trace.session_id,
                archetype,
            },
        )?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}
