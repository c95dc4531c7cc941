use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use asreader::analysis::{
    accuracy_by_answer_rank, accuracy_by_candidate_count, accuracy_by_length, outcomes,
    overall_accuracy, write_csv,
};
use asreader::data::{
    gen_synthetic, is_entity_token, write_canonical, Batch, DataError, EncodedExample, Example,
    SyntheticSpec, PLACEHOLDER_ID,
};
use asreader::ensemble::{
    average, avg_ensemble, avg_ensemble_size, greedy_ensemble, ModelScore, PredictionSet,
};
use asreader::model::{
    gradient_check, load_checkpoint, save_checkpoint, trace_example, Dims, ModelParams,
};
use asreader::training::{evaluate, init_params, seeded_stream, train_with, TrainConfig};
use clap::parser::ValueSource;
use clap::ArgMatches;
use serde_json::json;

use crate::args::{
    AnalyzeArgs, EnsembleArgs, EvaluateArgs, Format, GenSyntheticArgs, GradcheckArgs, Mode,
    PredictArgs, TrainArgs,
};
use crate::output::{CliError, Run};

fn answers(examples: &[Example]) -> HashMap<String, String> {
    examples
        .iter()
        .filter_map(|e| e.answer.clone().map(|a| (e.id.clone(), a)))
        .collect()
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .or_else(|| path.file_name())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".into())
}

fn load_model(
    run: &mut Run,
    path: &Path,
) -> Result<(ModelParams<f32>, asreader::data::Vocabulary), CliError> {
    let bytes = run.read(path, false)?;
    load_checkpoint::<f32, _>(bytes.as_slice())
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn read_predictions(run: &mut Run, path: &Path) -> Result<PredictionSet, CliError> {
    let bytes = run.read(path, false)?;
    PredictionSet::read(bytes.as_slice())
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn fmt_accuracy(a: Option<f64>) -> String {
    a.map_or("-".into(), |a| format!("{a:.4}"))
}

fn train_config(
    args: &TrainArgs,
    matches: &ArgMatches,
    run: &mut Run,
) -> Result<TrainConfig, CliError> {
    let mut config = match &args.config {
        Some(path) => {
            let bytes = run.read(path, false)?;
            let text = String::from_utf8(bytes)
                .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
            toml::from_str(&text)
                .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?
        }
        None => TrainConfig::default(),
    };
    let given = |id: &str| {
        matches!(
            matches.value_source(id),
            Some(ValueSource::CommandLine) | Some(ValueSource::EnvVariable)
        )
    };
    if given("learning_rate") {
        config.learning_rate = args.learning_rate;
    }
    if given("batch_size") {
        config.batch_size = args.batch_size;
    }
    if given("clip_threshold") {
        config.clip_threshold = args.clip_threshold;
    }
    if given("embed_dim") {
        config.embed_dim = args.embed_dim;
    }
    if given("hidden_dim") {
        config.hidden_dim = args.hidden_dim;
    }
    if given("seed") {
        config.seed = args.seed;
    }
    if given("max_epochs") {
        config.max_epochs = args.max_epochs;
    }
    if given("prefetch") {
        config.prefetch = args.prefetch;
    }
    if given("patience") {
        config.patience = args.patience;
    }
    if given("reshuffle_entities") {
        config.reshuffle_entities = args.reshuffle_entities;
    }
    if args.vocab_size.is_some() {
        config.vocab_size = args.vocab_size;
    }
    if args.train_path.is_some() {
        config.train_path = args.train_path.clone();
    }
    if args.valid_path.is_some() {
        config.valid_path = args.valid_path.clone();
    }
    config.validate()?;
    Ok(config)
}

pub fn train(
    args: &TrainArgs,
    matches: &ArgMatches,
    format: Format,
    run: &mut Run,
) -> Result<(), CliError> {
    let config = train_config(args, matches, run)?;
    let train_path = config.train_path.clone().ok_or_else(|| {
        CliError::usage("no training data: pass --train or set train_path in --config")
    })?;
    let tr = run.dataset(&train_path, format)?;
    let va = match &config.valid_path {
        Some(p) => run.dataset(p, format)?,
        None => Vec::new(),
    };
    run.set_config(
        serde_json::to_value(&config).expect("config serializes"),
        Some(config.seed),
    );

    let out = train_with::<f32>(&config, &tr, &va, |r| {
        eprintln!(
            "epoch {:>3}  train_loss {:.6}  valid_accuracy {}  {:.1}s",
            r.epoch,
            r.train_loss,
            fmt_accuracy(r.valid_accuracy),
            r.wall_time
        );
    })?;
    for s in out.skipped_train.iter().chain(&out.skipped_valid) {
        eprintln!("skipped {}: {}", s.id, s.reason);
    }

    let mut ckpt = Vec::new();
    save_checkpoint(&mut ckpt, &out.params, &out.vocab)?;
    run.artifact(args.out.join("model.ckpt"), ckpt);
    run.artifact(
        args.out.join("log.csv"),
        out.log.to_csv(args.wall_time).into_bytes(),
    );
    if !va.is_empty() {
        let model_id = args
            .model_id
            .clone()
            .unwrap_or_else(|| file_stem(&args.out));
        let eval = evaluate(
            &out.params,
            &out.vocab,
            &va,
            &model_id,
            config.batch_size.max(1),
        )?;
        let mut bytes = Vec::new();
        eval.predictions.write(&mut bytes)?;
        run.artifact(args.out.join("valid_predictions.tsv"), bytes);
    }
    println!("best_epoch\t{}", out.best_epoch);
    println!("best_valid_accuracy\t{}", fmt_accuracy(out.best_accuracy));
    println!("stopped_early\t{}", out.stopped_early);
    Ok(())
}

pub fn evaluate_cmd(args: &EvaluateArgs, format: Format, run: &mut Run) -> Result<(), CliError> {
    if args.batch_size == 0 {
        return Err(CliError::usage("--batch-size must be at least 1"));
    }
    let (params, vocab) = load_model(run, &args.checkpoint)?;
    let data = run.dataset(&args.data, format)?;
    let model_id = args
        .model_id
        .clone()
        .unwrap_or_else(|| file_stem(&args.checkpoint));
    run.set_config(
        json!({"model_id": model_id, "batch_size": args.batch_size}),
        None,
    );
    let eval = evaluate(&params, &vocab, &data, &model_id, args.batch_size)?;
    for s in &eval.skipped {
        eprintln!("skipped {}: {}", s.id, s.reason);
    }
    let mut bytes = Vec::new();
    eval.predictions.write(&mut bytes)?;
    run.artifact(&args.out, bytes);

    if let Some(path) = &args.attention {
        let mut lines = String::new();
        for ex in &data {
            let Ok(enc) = ex.validate().and_then(|_| vocab.encode(ex)) else {
                continue;
            };
            let trace = trace_example(&params, &enc)?;
            let record = json!({"id": ex.id, "tokens": ex.document, "attention": trace.attention});
            writeln!(lines, "{record}").expect("string write");
        }
        run.artifact(path, lines.into_bytes());
    }
    println!("accuracy\t{}", fmt_accuracy(eval.accuracy()));
    println!("correct\t{}", eval.correct);
    println!("labeled\t{}", eval.labeled);
    println!("skipped\t{}", eval.skipped.len());
    Ok(())
}

fn inline_example(args: &PredictArgs) -> Example {
    let split = |s: &str| s.split_whitespace().map(String::from).collect::<Vec<_>>();
    let document = split(args.document.as_deref().unwrap_or_default());
    let candidates = match &args.candidates {
        Some(c) => split(c),
        None => {
            let mut seen = Vec::new();
            for t in document.iter().filter(|t| is_entity_token(t)) {
                if !seen.contains(t) {
                    seen.push(t.clone());
                }
            }
            seen
        }
    };
    Example {
        id: "inline".into(),
        query: split(args.query.as_deref().unwrap_or_default()),
        document,
        candidates,
        answer: None,
    }
}

pub fn predict(args: &PredictArgs, format: Format, run: &mut Run) -> Result<(), CliError> {
    let (params, vocab) = load_model(run, &args.checkpoint)?;
    let example = match (&args.data, &args.id) {
        (Some(path), Some(id)) => run
            .dataset(path, format)?
            .into_iter()
            .find(|e| &e.id == id)
            .ok_or_else(|| {
                CliError::data(format!("{}: no example with id {id}", path.display()))
            })?,
        _ if args.document.is_some() => inline_example(args),
        _ => {
            return Err(CliError::usage(
                "pass either --data with --id, or --document with --query",
            ))
        }
    };
    example.validate()?;
    let enc = vocab.encode(&example)?;
    let trace = trace_example(&params, &enc)?;

    let mut report = String::new();
    writeln!(report, "id\t{}", example.id).unwrap();
    if let Some(a) = &example.answer {
        writeln!(report, "answer\t{a}").unwrap();
    }
    writeln!(report, "\nrank\tcandidate\tprobability").unwrap();
    for (rank, (id, p)) in trace.predict().iter().enumerate() {
        writeln!(report, "{}\t{}\t{p}", rank + 1, vocab.token(*id)).unwrap();
    }
    writeln!(report, "\nposition\ttoken\tattention").unwrap();
    for (i, (tok, a)) in example.document.iter().zip(&trace.attention).enumerate() {
        writeln!(report, "{i}\t{tok}\t{a}").unwrap();
    }
    match &args.out {
        Some(path) => {
            run.set_config(json!({"example": example.id}), None);
            run.artifact(path, report.into_bytes());
        }
        None => print!("{report}"),
    }
    Ok(())
}

pub fn ensemble(args: &EnsembleArgs, format: Format, run: &mut Run) -> Result<(), CliError> {
    let sets = args
        .predictions
        .iter()
        .map(|p| read_predictions(run, p))
        .collect::<Result<Vec<_>, _>>()?;
    let applied = args
        .apply
        .iter()
        .map(|p| read_predictions(run, p))
        .collect::<Result<Vec<_>, _>>()?;
    if !applied.is_empty() && applied.len() != sets.len() {
        return Err(CliError::usage(format!(
            "--apply needs one file per model: got {} for {} models",
            applied.len(),
            sets.len()
        )));
    }
    let answers = match &args.valid {
        Some(p) => Some(answers(&run.dataset(p, format)?)),
        None => None,
    };
    let mode = match args.mode {
        Mode::Avg => "avg",
        Mode::Greedy => "greedy",
    };
    run.set_config(
        json!({"mode": mode, "models": sets.len(), "applied": !applied.is_empty()}),
        None,
    );

    let scores: Vec<Option<f64>> = sets
        .iter()
        .map(|s| {
            answers
                .as_ref()
                .and_then(|a| s.accuracy_against(a))
                .or(s.accuracy)
        })
        .collect();
    let (members, steps) = match args.mode {
        Mode::Avg => {
            if avg_ensemble_size(sets.len()) == sets.len() {
                ((0..sets.len()).collect::<Vec<_>>(), Vec::new())
            } else {
                let known = sets
                    .iter()
                    .zip(&scores)
                    .map(|(s, a)| {
                        a.map(|accuracy| ModelScore {
                            id: s.model_id.clone(),
                            accuracy,
                        })
                        .ok_or_else(|| {
                            CliError::data(format!(
                                "{}: no validation accuracy; pass --valid",
                                s.model_id
                            ))
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                (avg_ensemble(&known), Vec::new())
            }
        }
        Mode::Greedy => {
            let answers = answers.as_ref().ok_or_else(|| {
                CliError::usage("greedy selection needs a labeled --valid dataset")
            })?;
            let g = greedy_ensemble(&sets, answers)?;
            let steps: Vec<_> = g
                .steps
                .iter()
                .map(|s| json!({"model": sets[s.model].model_id, "accuracy_with": s.accuracy_with, "accepted": s.accepted}))
                .collect();
            (g.members, steps)
        }
    };

    let source = if applied.is_empty() { &sets } else { &applied };
    let refs: Vec<&PredictionSet> = members.iter().map(|&i| &source[i]).collect();
    let mut combined = average(&refs)?;
    let valid_refs: Vec<&PredictionSet> = members.iter().map(|&i| &sets[i]).collect();
    let valid_accuracy = match &answers {
        Some(a) => average(&valid_refs)?.accuracy_against(a),
        None => None,
    };
    if combined.accuracy.is_none() && applied.is_empty() {
        combined.accuracy = valid_accuracy;
    }
    let mut bytes = Vec::new();
    combined.write(&mut bytes)?;
    run.artifact(&args.out, bytes);

    let report = json!({
        "mode": mode,
        "models": sets.iter().zip(&scores).map(|(s, a)| json!({"id": s.model_id, "valid_accuracy": a})).collect::<Vec<_>>(),
        "members": members.iter().map(|&i| sets[i].model_id.clone()).collect::<Vec<_>>(),
        "steps": steps,
        "valid_accuracy": valid_accuracy,
        "model_id": combined.model_id,
    });
    let mut report_path = args.out.as_os_str().to_os_string();
    report_path.push(".report.json");
    let mut text = serde_json::to_vec_pretty(&report).expect("report serializes");
    text.push(b'\n');
    run.artifact(report_path, text);
    println!("members\t{}", report["members"]);
    println!("valid_accuracy\t{}", fmt_accuracy(valid_accuracy));
    Ok(())
}

pub fn analyze(args: &AnalyzeArgs, format: Format, run: &mut Run) -> Result<(), CliError> {
    if args.buckets == 0 || args.max_rank == 0 {
        return Err(CliError::usage(
            "--buckets and --max-rank must be at least 1",
        ));
    }
    let set = read_predictions(run, &args.predictions)?;
    let data = run.dataset(&args.data, format)?;
    run.set_config(
        json!({"buckets": args.buckets, "max_rank": args.max_rank}),
        None,
    );
    let o = outcomes(&set, &data)?;
    let length = accuracy_by_length(&o, args.buckets);
    if let Some(w) = &length.warning {
        eprintln!("warning: {w}");
    }
    let mut csv = |name: &str,
                   write: &dyn Fn(&mut Vec<u8>) -> Result<(), CliError>|
     -> Result<(), CliError> {
        let mut bytes = Vec::new();
        write(&mut bytes)?;
        run.artifact(args.out_dir.join(name), bytes);
        Ok(())
    };
    csv("length_buckets.csv", &|b| {
        Ok(write_csv(b, &length.buckets)?)
    })?;
    csv("length_histogram.csv", &|b| {
        Ok(write_csv(b, &length.histogram)?)
    })?;
    csv("candidate_counts.csv", &|b| {
        Ok(write_csv(b, &accuracy_by_candidate_count(&o))?)
    })?;
    csv("answer_rank.csv", &|b| {
        Ok(write_csv(b, &accuracy_by_answer_rank(&o, args.max_rank))?)
    })?;
    println!("examples\t{}", o.len());
    println!("accuracy\t{}", fmt_accuracy(overall_accuracy(&o)));
    Ok(())
}

pub fn gen_synthetic_cmd(args: &GenSyntheticArgs, run: &mut Run) -> Result<(), CliError> {
    let spec = SyntheticSpec {
        examples: args.examples,
        doc_len: args.doc_len,
        candidates: args.candidates,
        entity_pool: args.entity_pool,
        filler_words: args.filler_words,
        id_prefix: args.id_prefix.clone(),
    };
    run.set_config(
        json!({
            "examples": spec.examples,
            "doc_len": spec.doc_len,
            "candidates": spec.candidates,
            "entity_pool": spec.entity_pool,
            "filler_words": spec.filler_words,
            "id_prefix": spec.id_prefix,
        }),
        Some(args.seed),
    );
    let data = gen_synthetic(&spec, &mut seeded_stream(args.seed, 0)).map_err(|e| match e {
        DataError::InvalidSpec(_) => CliError::usage(e.to_string()),
        e => e.into(),
    })?;
    let mut bytes = Vec::new();
    write_canonical(&mut bytes, &data)?;
    run.artifact(&args.out, bytes);
    println!("examples\t{}", data.len());
    Ok(())
}

pub fn gradcheck(args: &GradcheckArgs) -> Result<(), CliError> {
    let dims = Dims::new(7, 3, 2)?;
    let ex = EncodedExample {
        id: "toy".into(),
        doc: vec![3, 4, 5, 3, 6],
        query: vec![5, PLACEHOLDER_ID, 4],
        candidates: vec![3, 4, 6],
        answer: Some(3),
    };
    let batch = Batch::collate(&[&ex]);
    let mut worst = 0.0f64;
    println!("trial\ttensor\tnumel\trel_error\tmax_abs_error");
    for trial in 0..args.trials {
        let params: ModelParams<f64> =
            init_params(dims, &mut seeded_stream(args.seed.wrapping_add(trial), 0));
        let report = gradient_check(&params, &batch, args.eps)?;
        for c in &report.checks {
            println!(
                "{trial}\t{}\t{}\t{:.3e}\t{:.3e}",
                c.name, c.numel, c.rel_error, c.max_abs_error
            );
        }
        worst = worst.max(report.max_rel_error());
    }
    if worst < args.tolerance {
        println!("ok: max relative error {worst:.3e} < {:e}", args.tolerance);
        Ok(())
    } else {
        Err(CliError::numeric(format!(
            "gradient check failed: max relative error {worst:.3e} >= {:e}",
            args.tolerance
        )))
    }
}
