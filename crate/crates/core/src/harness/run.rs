use std::collections::BTreeMap;
use std::path::PathBuf;

use super::{
    CellRecord, CellStatus, EmbeddingRecord, ExperimentMode, ExperimentSpec, HarnessError, PromptSpec,
    RankingRecord, RunManifest,
};
use crate::clock::Clock;
use crate::expert::{aggregate_seed_queries, consult_panel, PanelSubject};
use crate::exploration::Lexicon;
use crate::fanout::bounded_map;
use crate::json::{to_canonical_string, to_jsonl};
use crate::metrics::blind_rank;
use crate::persistence::{self, atomic_write, ArtifactStore};
use crate::providers::ProviderHandle;
use crate::rng::{keyed_hash, mix64};
use crate::synthesis::{run_pipeline, PipelineConfig, Providers, RunOutput, RunSink, SeedSource};

#[derive(Debug, Clone)]
pub struct ExperimentProviders {
    pub chat: ProviderHandle,
    pub search: ProviderHandle,
    pub embed: ProviderHandle,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub clock: Clock,
    pub store: Option<ArtifactStore>,
}

/// Seed of one cell. `mix64` is a bijection and the ordinal is injective
/// over cells, so seeds never collide within an experiment.
pub fn cell_seed(base: u64, prompt_index: usize, mode: ExperimentMode, sample: usize, samples: usize) -> u64 {
    let modes = ExperimentMode::ALL.len() as u64;
    let ordinal = (prompt_index as u64 * modes + mode.ordinal()) * samples as u64 + sample as u64;
    mix64(base.wrapping_add(ordinal))
}

struct Cell<'a> {
    prompt: &'a PromptSpec,
    mode: ExperimentMode,
    sample_index: usize,
    rng_seed: u64,
}

fn load_lexicon(spec: &ExperimentSpec) -> Result<Lexicon, HarnessError> {
    match &spec.lexicon {
        None => Ok(Lexicon::builtin()),
        Some(path) => {
            let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or("lexicon");
            Lexicon::load(path, id).map_err(|e| HarnessError::InvalidSpec(format!("lexicon: {e}")))
        }
    }
}

fn run_cell(
    cell: &Cell<'_>,
    spec: &ExperimentSpec,
    lexicon: &Lexicon,
    providers: &Providers,
    sink: &RunSink,
) -> Result<(RunOutput, Vec<String>), String> {
    let cfg = PipelineConfig {
        mode: cell.mode.pipeline_mode(),
        rng_seed: cell.rng_seed,
        ..spec.pipeline.clone()
    };
    let text = cell.prompt.text.as_str();
    if cell.mode != ExperimentMode::PrismExpert {
        let out = run_pipeline(text, &cfg, SeedSource::Lexicon(lexicon), providers, sink)
            .map_err(|e| e.to_string())?;
        return Ok((out, Vec::new()));
    }
    let ex = &spec.expert;
    let panel = consult_panel(
        PanelSubject::Text(text),
        &ex.personas,
        &providers.chat,
        ex.temperature,
        ex.max_in_flight,
    )
    .map_err(|e| e.to_string())?;
    let queries = aggregate_seed_queries(&panel.nominations, &[text.to_owned()], ex.per_prompt_limit);
    let warnings = panel
        .failures
        .iter()
        .map(|(p, e)| format!("persona {p} dropped: {e}"))
        .collect();
    let out = run_pipeline(text, &cfg, SeedSource::Queries(&queries), providers, sink)
        .map_err(|e| e.to_string())?;
    Ok((out, warnings))
}

fn write(
    out_dir: &std::path::Path,
    name: &str,
    body: &str,
    schema: &str,
    store: Option<&ArtifactStore>,
) -> Result<(), HarnessError> {
    atomic_write(&out_dir.join(name), body.as_bytes())?;
    if let Some(s) = store {
        s.put(body.as_bytes(), schema)?;
    }
    Ok(())
}

/// Run every (prompt, mode, sample) cell, embed the outputs, rank them
/// against human baselines when a judge is configured, and write the
/// manifest. Cell failures are recorded, not raised.
pub fn run_experiment(
    spec: &ExperimentSpec,
    providers: &ExperimentProviders,
    opts: &RunOptions,
) -> Result<RunManifest, HarnessError> {
    spec.validate()?;
    let lexicon = load_lexicon(spec)?;
    let started_at = opts.clock.now_unix();
    let samples = spec.samples_per_prompt;

    let mut cells = Vec::new();
    for (p, prompt) in spec.prompts.iter().enumerate() {
        for &mode in &spec.modes {
            for i in 0..samples {
                cells.push(Cell {
                    prompt,
                    mode,
                    sample_index: i,
                    rng_seed: cell_seed(spec.rng_seed, p, mode, i, samples),
                });
            }
        }
    }

    let pipeline_providers = Providers {
        chat: providers.chat.clone(),
        search: providers.search.clone(),
    };
    let sink = RunSink {
        runs_root: Some(opts.out_dir.join("runs")),
        store: opts.store.clone(),
        clock: opts.clock,
    };
    let results = bounded_map(&cells, spec.max_workers, |_, cell| {
        run_cell(cell, spec, &lexicon, &pipeline_providers, &sink)
    });

    let mut statuses = Vec::with_capacity(cells.len());
    let mut records = Vec::new();
    for (cell, result) in cells.iter().zip(results) {
        let mut status = CellStatus {
            prompt_id: cell.prompt.id.clone(),
            mode: cell.mode,
            sample_index: cell.sample_index,
            rng_seed: cell.rng_seed,
            run_id: None,
            error: None,
            warnings: Vec::new(),
        };
        match result {
            Ok((out, warnings)) => {
                status.run_id = Some(out.run_id.clone());
                status.warnings = warnings;
                status.warnings.extend(out.warnings);
                records.push(CellRecord {
                    prompt_id: cell.prompt.id.clone(),
                    mode: cell.mode,
                    sample_index: cell.sample_index,
                    rng_seed: cell.rng_seed,
                    record: out.record,
                });
            }
            Err(e) => {
                log::warn!(
                    "cell {}/{}/{} failed: {e}",
                    cell.prompt.id,
                    cell.mode,
                    cell.sample_index
                );
                status.error = Some(e);
            }
        }
        statuses.push(status);
    }

    let mut failures = Vec::new();
    let mut groups: BTreeMap<(usize, ExperimentMode), Vec<&CellRecord>> = BTreeMap::new();
    for r in &records {
        let p = spec
            .prompts
            .iter()
            .position(|x| x.id == r.prompt_id)
            .expect("known prompt");
        groups.entry((p, r.mode)).or_default().push(r);
    }
    let groups: Vec<((usize, ExperimentMode), Vec<&CellRecord>)> = groups.into_iter().collect();

    let embedded = bounded_map(&groups, spec.max_workers, |_, (_, rs)| {
        let texts: Vec<String> = rs.iter().map(|r| r.record.output.clone()).collect();
        providers.embed.embed(&texts)
    });
    let mut embeddings = Vec::new();
    for ((_, rs), result) in groups.iter().zip(embedded) {
        match result {
            Ok(vectors) => {
                for (r, v) in rs.iter().zip(vectors) {
                    embeddings.push(EmbeddingRecord {
                        prompt_id: r.prompt_id.clone(),
                        mode: r.mode,
                        sample_index: r.sample_index,
                        run_id: r.record.run_id.clone(),
                        model_id: v.model_id,
                        values: v.values,
                    });
                }
            }
            Err(e) => failures.push(format!("embedding {}/{}: {e}", rs[0].prompt_id, rs[0].mode)),
        }
    }

    let mut rankings = Vec::new();
    if let Some(judge) = &spec.judge {
        let ranked: Vec<_> = groups
            .iter()
            .filter(|((p, _), _)| spec.prompts[*p].human.is_some())
            .collect();
        let outcomes = bounded_map(&ranked, spec.max_workers, |_, ((p, mode), rs)| {
            let prompt = &spec.prompts[*p];
            if rs.len() != samples {
                return Err(format!(
                    "ranking {}/{mode} skipped: {} of {samples} samples succeeded",
                    prompt.id,
                    rs.len()
                ));
            }
            let mut candidates: Vec<String> = rs.iter().map(|r| r.record.output.clone()).collect();
            candidates.push(prompt.human.clone().expect("filtered"));
            let seed = keyed_hash(
                spec.rng_seed,
                &[b"rank", prompt.id.as_bytes(), mode.as_str().as_bytes()],
            );
            blind_rank(
                &format!("{}/{mode}", prompt.id),
                &candidates,
                candidates.len() - 1,
                &judge.dimension,
                &providers.chat,
                seed,
            )
            .map(|outcome| RankingRecord {
                prompt_id: prompt.id.clone(),
                mode: *mode,
                outcome,
            })
            .map_err(|e| format!("ranking {}/{mode}: {e}", prompt.id))
        });
        for o in outcomes {
            match o {
                Ok(r) => rankings.push(r),
                Err(e) => failures.push(e),
            }
        }
    }

    let store = opts.store.as_ref();
    let mut artifacts = BTreeMap::new();
    write(
        &opts.out_dir,
        "records.jsonl",
        &to_jsonl(&records),
        persistence::SCHEMA_GENERATION,
        store,
    )?;
    artifacts.insert("records".to_owned(), "records.jsonl".to_owned());
    write(
        &opts.out_dir,
        "embeddings.jsonl",
        &to_jsonl(&embeddings),
        persistence::SCHEMA_EMBEDDINGS,
        store,
    )?;
    artifacts.insert("embeddings".to_owned(), "embeddings.jsonl".to_owned());
    if spec.judge.is_some() {
        write(
            &opts.out_dir,
            "rankings.jsonl",
            &to_jsonl(&rankings),
            persistence::SCHEMA_BLOB,
            store,
        )?;
        artifacts.insert("rankings".to_owned(), "rankings.jsonl".to_owned());
    }

    let run_ids: Vec<String> = statuses.iter().filter_map(|s| s.run_id.clone()).collect();
    for id in &run_ids {
        artifacts.insert(format!("run:{id}"), format!("runs/{id}"));
    }
    let complete = statuses.iter().all(CellStatus::ok) && failures.is_empty();
    let provider_ids = [
        ("chat", &providers.chat),
        ("search", &providers.search),
        ("embed", &providers.embed),
    ]
    .into_iter()
    .map(|(k, h)| (k.to_owned(), h.id().to_owned()))
    .collect();
    let manifest = RunManifest {
        schema: persistence::SCHEMA_MANIFEST.to_owned(),
        name: spec.name.clone(),
        configs_digest: spec.digest(),
        spec: spec.clone(),
        provider_ids,
        run_ids,
        cells: statuses,
        artifacts,
        failures,
        started_at,
        finished_at: opts.clock.now_unix(),
        complete,
    };
    write(
        &opts.out_dir,
        "manifest.json",
        &to_canonical_string(&manifest),
        persistence::SCHEMA_MANIFEST,
        store,
    )?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn cell_seeds_are_distinct() {
        let mut seen = HashSet::new();
        for p in 0..20 {
            for m in ExperimentMode::ALL {
                for i in 0..50 {
                    assert!(seen.insert(cell_seed(7, p, m, i, 50)));
                }
            }
        }
    }
}
