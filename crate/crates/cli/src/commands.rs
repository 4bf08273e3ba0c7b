use std::collections::BTreeMap;

use coldgnn::dataio::{
    chronological_split, kshot_mask_testset, split_meta, split_train_test, InteractionGraph, NodeId, Side,
};
use coldgnn::diagnostics::{gradient_suite, TOLERANCE};
use coldgnn::encoder::PretrainData;
use coldgnn::evalrec::{
    extrinsic_eval, finetune as run_finetune, intrinsic_eval, layer_sweep, predict_targets, train_bpr_encoder,
    FinetuneData, IntrinsicSetup, RecommenderHead, Scoring,
};
use coldgnn::ground_truth::{train_ground_truth, train_transductive};
use coldgnn::numerics::rng::derive_seed;
use coldgnn::orchestrator::{run_stage, ModelState, Stage, Variant};
use coldgnn::Error;
use log::info;

use crate::artifacts::{self, name_map, names, work_graph, Split, SplitFile, Workspace};
use crate::CliError;

/// The `n` highest-degree users (ties by id) and every item they touched.
fn top_users(g: &InteractionGraph, n: usize) -> Result<InteractionGraph, CliError> {
    let mut users: Vec<NodeId> = g.users().collect();
    users.sort_by_key(|&u| (std::cmp::Reverse(g.degree(u)), u));
    users.truncate(n);
    users.sort();
    let records = g
        .edges()
        .iter()
        .filter(|e| users.binary_search(&e.user).is_ok())
        .map(|e| (g.original_id(e.user).to_string(), g.original_id(e.item).to_string(), e.timestamp));
    Ok(InteractionGraph::from_records(records)?)
}

pub fn ingest(ws: &Workspace) -> Result<(), CliError> {
    let c = &ws.cfg;
    let raw = ws.load_raw()?;
    let g = if c.data.max_users > 0 { top_users(&raw, c.data.max_users)? } else { raw };
    g.validate(false)?;
    let ms = split_meta(&g, c.data.side, c.threshold(), None)?;
    if ms.d_t.len() < 2 {
        return Err(Error::EmptyDataset(format!(
            "only {} {}s have more than {} interactions",
            ms.d_t.len(),
            c.data.side,
            c.threshold()
        ))
        .into());
    }
    let tt = split_train_test(&ms.d_t, c.data.train_ratio, derive_seed(c.seed, &[0x7]))?;
    let masked = kshot_mask_testset(&g, &tt.test, c.data.k, c.model.layers, derive_seed(c.seed, &[0x8]))?;
    // the recommendation protocol is defined for cold users only
    let chrono = match c.data.side {
        Side::User => Some(chronological_split(&g, &ms.d_n, c.finetune.train_fraction)),
        Side::Item => None,
    };
    let mut cold_train: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
    if let Some(ch) = &chrono {
        for e in &ch.train {
            cold_train.entry(e.user).or_default().push(e.item);
        }
    }
    let split = SplitFile {
        fingerprint: ws.fingerprint.clone(),
        side: c.data.side,
        d_t: names(&g, &ms.d_t),
        d_n: names(&g, &ms.d_n),
        train: names(&g, &tt.train),
        test: names(&g, &tt.test),
        kept: name_map(&g, &masked.kept),
        cold_train: name_map(&g, &cold_train),
        cold_test: chrono.as_ref().map(|ch| name_map(&g, &ch.test)).unwrap_or_default(),
        cold_excluded: chrono.as_ref().map(|ch| names(&g, &ch.excluded)).unwrap_or_default(),
    };
    let tmp = ws.path(&format!("{}.partial", artifacts::GRAPH));
    g.write_tsv(&tmp)?;
    std::fs::rename(&tmp, ws.path(artifacts::GRAPH))?;
    ws.save_split(&split)?;
    info!(
        "ingested {} users, {} items, {} interactions; {} targets ({} train, {} test), {} cold, {} cold users excluded",
        g.num_users(),
        g.num_items(),
        g.num_edges(),
        ms.d_t.len(),
        tt.train.len(),
        tt.test.len(),
        ms.d_n.len(),
        split.cold_excluded.len()
    );
    Ok(())
}

struct Loaded {
    graph: InteractionGraph,
    split: Split,
    work: InteractionGraph,
}

fn load(ws: &Workspace) -> Result<Loaded, CliError> {
    let graph = ws.graph()?;
    let split = ws.split(&graph)?;
    let work = work_graph(&graph, &split);
    Ok(Loaded { graph, split, work })
}

pub fn ground_truth(ws: &Workspace) -> Result<(), CliError> {
    let c = &ws.cfg;
    let l = load(ws)?;
    let ms = split_meta(&l.graph, c.data.side, c.threshold(), None)?;
    // targets' own abundant interactions for the truth, the masked graph
    // for the initial embeddings
    let truth = train_ground_truth(&l.graph, &ms, &c.ground_truth(derive_seed(c.seed, &[0x1])))?;
    info!("ground truth: loss {:.6} -> {:.6}", truth.initial_loss, truth.final_loss());
    let init = train_transductive(&l.work, &c.ground_truth(derive_seed(c.seed, &[0x2])))?;
    info!("initial embeddings: loss {:.6} -> {:.6}", init.initial_loss, init.final_loss());
    ws.save_tables(&truth.table, &init.table)
}

pub fn pretrain(ws: &Workspace, stage: Option<&str>, epoch_limit: Option<usize>) -> Result<(), CliError> {
    let c = &ws.cfg;
    let stage = stage
        .map(|s| {
            Stage::from_short(s).ok_or_else(|| CliError::Config(vec![format!("unknown stage `{s}`; use g, f, s or joint")]))
        })
        .transpose()?;
    let l = load(ws)?;
    let (truth, init) = (ws.truth()?, ws.init()?);
    let mut state = if ws.has(artifacts::MODEL) {
        ws.model(artifacts::MODEL, "pretrain")?
    } else {
        ModelState::new(c.model.variant, c.encoder(), c.model.heads, c.seed)?
    };
    let data = PretrainData {
        graph: &l.work,
        init: &init,
        truth: &truth,
        targets: &l.split.train,
        k: c.data.k,
    };
    let schedule = c.schedule(c.seed);
    let stages = match stage {
        Some(s) => vec![s],
        None => state.remaining(),
    };
    for s in stages {
        let r = run_stage(s, &mut state, &data, &schedule, epoch_limit)?;
        info!(
            "stage {}: {} epochs, last loss {}, {}",
            s.short(),
            r.losses.len(),
            r.losses.last().map_or("n/a".into(), |v| format!("{v:.6}")),
            if r.completed { "completed" } else { "interrupted" }
        );
        ws.save_model(artifacts::MODEL, &state)?;
        if !r.completed {
            break;
        }
    }
    Ok(())
}

fn pretrained(ws: &Workspace) -> Result<ModelState, CliError> {
    let st = ws.model(artifacts::MODEL, "pretrain")?;
    let left = st.remaining();
    if !left.is_empty() {
        let names: Vec<&str> = left.iter().map(|s| s.short()).collect();
        return Err(Error::Staging(format!("pre-training is unfinished; stages left: {}", names.join(", "))).into());
    }
    Ok(st)
}

fn cold_users_only(ws: &Workspace) -> Result<(), CliError> {
    if ws.cfg.data.side != Side::User {
        return Err(CliError::Config(vec![
            "the recommendation protocol covers cold users; set data.side = \"user\"".into(),
        ]));
    }
    Ok(())
}

pub fn finetune(ws: &Workspace, scratch: bool) -> Result<(), CliError> {
    cold_users_only(ws)?;
    let c = &ws.cfg;
    let l = load(ws)?;
    let init = ws.init()?;
    let pairs: Vec<(NodeId, NodeId)> =
        l.split.cold_train.iter().flat_map(|(&u, is)| is.iter().map(move |&i| (u, i))).collect();
    let data = FinetuneData {
        graph: &l.work,
        init: &init,
        pairs: &pairs,
    };
    let fc = c.finetune();
    if scratch {
        let (st, losses) = train_bpr_encoder(c.encoder(), &data, &fc)?;
        info!("from-scratch BPR encoder: losses {losses:.4?}");
        return ws.save_model(artifacts::SCRATCH, &st);
    }
    let mut st = pretrained(ws)?;
    let mut head = RecommenderHead::new(c.model.dim, derive_seed(c.seed, &[0x4e]));
    let losses = run_finetune(&mut st, Some(&mut head), &data, &fc)?;
    info!("fine-tuning losses {losses:.4?}");
    ws.save_model(artifacts::FINETUNED, &st)?;
    ws.save_head(&head)
}

pub fn eval_intrinsic(ws: &Workspace) -> Result<(), CliError> {
    let c = &ws.cfg;
    let l = load(ws)?;
    let (truth, init) = (ws.truth()?, ws.init()?);
    let st = pretrained(ws)?;
    let preds = predict_targets(&st, &l.work, &init, &l.split.test, c.data.k, c.seed)?;
    let report = intrinsic_eval(&preds, &truth, &l.work, &ws.fingerprint, c.seed)?;
    ws.write("intrinsic.jsonl", report.to_jsonl()?.as_bytes())?;
    info!("spearman {:.6} over {} nodes ({} skipped)", report.mean, report.per_node.len(), report.skipped.len());
    println!("spearman\t{:.6}", report.mean);
    Ok(())
}

pub fn eval_extrinsic(ws: &Workspace, scratch: bool) -> Result<(), CliError> {
    cold_users_only(ws)?;
    let c = &ws.cfg;
    let l = load(ws)?;
    let init = ws.init()?;
    let (st, head) = if scratch {
        (ws.model(artifacts::SCRATCH, "finetune --scratch")?, None)
    } else {
        (ws.model(artifacts::FINETUNED, "finetune")?, Some(ws.head()?))
    };
    let scoring = head.as_ref().map_or(Scoring::Dot, Scoring::Head);
    let (rec, ndcg) = extrinsic_eval(
        &st,
        scoring,
        &l.work,
        &init,
        &l.split.cold_test,
        c.data.k,
        c.eval.k_metric,
        &ws.fingerprint,
        c.seed,
    )?;
    let name = if scratch { "extrinsic-scratch.jsonl" } else { "extrinsic.jsonl" };
    ws.write(name, format!("{}{}", rec.to_jsonl()?, ndcg.to_jsonl()?).as_bytes())?;
    info!("{} users evaluated, {} skipped", rec.per_node.len(), rec.skipped.len());
    println!("{}\t{:.6}\n{}\t{:.6}", rec.metric, rec.mean, ndcg.metric, ndcg.mean);
    Ok(())
}

pub fn sweep_layers(ws: &Workspace) -> Result<(), CliError> {
    let c = &ws.cfg;
    let l = load(ws)?;
    let (truth, init) = (ws.truth()?, ws.init()?);
    let setup = IntrinsicSetup {
        train: PretrainData {
            graph: &l.work,
            init: &init,
            truth: &truth,
            targets: &l.split.train,
            k: c.data.k,
        },
        test: &l.split.test,
    };
    let out = layer_sweep(
        &c.eval.sweep_layers,
        &c.eval.sweep_variants,
        c.encoder(),
        c.model.heads,
        &c.schedule(c.seed),
        &setup,
        &ws.fingerprint,
    )?;
    let mut text = String::new();
    for e in &out {
        let line = serde_json::json!({
            "layers": e.layers,
            "variant": e.variant,
            "metric": e.report.metric,
            "mean": e.report.mean,
            "count": e.report.per_node.len(),
            "skipped": e.report.skipped.len(),
            "fingerprint": e.report.fingerprint,
            "seed": e.report.seed,
        });
        text.push_str(&serde_json::to_string(&line).map_err(Error::from)?);
        text.push('\n');
        println!("L={}\t{}\t{:.6}", e.layers, variant_name(e.variant), e.report.mean);
    }
    ws.write("sweep.jsonl", text.as_bytes())
}

fn variant_name(v: Variant) -> &'static str {
    match v {
        Variant::Basic => "basic",
        Variant::Meta => "meta",
        Variant::NSampler => "nsampler",
        Variant::Full => "full",
    }
}

pub fn gradcheck(points: usize, seed: u64) -> Result<(), CliError> {
    let t0 = std::time::Instant::now();
    let reports = gradient_suite(points, seed)?;
    let width = reports.iter().map(|r| r.name.len()).max().unwrap_or(5).max(5);
    println!("{:<width$}  points  max rel. error", "block");
    let mut bad = Vec::new();
    for r in &reports {
        let ok = r.max_rel_error < TOLERANCE;
        println!("{:<width$}  {:>6}  {:.3e}{}", r.name, r.points, r.max_rel_error, if ok { "" } else { "  FAIL" });
        if !ok {
            bad.push(r.name.clone());
        }
    }
    let worst = reports.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    println!("{} blocks, worst {worst:.3e}, {:.1}s", reports.len(), t0.elapsed().as_secs_f64());
    if bad.is_empty() {
        Ok(())
    } else {
        Err(CliError::GradCheck(format!("{} above {TOLERANCE:e}", bad.join(", "))))
    }
}
