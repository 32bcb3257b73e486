//! One function per subcommand; each writes its artifacts plus a run
//! manifest and the resolved configuration into the output directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use graphex::estimators::{calibrate_replicate, clamp_sigma, estimate_sigma, estimate_size};
use graphex::evaluate::{
    evaluate_per_user, predictive_sample, summarize, PredictiveOptions, PredictiveSummary,
    FRESH_ID_BASE,
};
use graphex::graph::BipartiteGraph;
use graphex::inference::{fit, fit_test_users};
use graphex::math::mean_sd;
use graphex::rng::hash3;
use graphex::simulate::{edge_count_estimate, simulate_graph_with, SimOptions};
use graphex::sparsity::{classify, default_levels, density_replicate, DensityCurve, Side};
use graphex::split::split;

use crate::config::RunConfig;
use crate::io::{
    digest_file, fmt_real, load_checkpoint, load_graph, read_edge_names,
    render_summary_csv, save_checkpoint, save_graph, save_sampling_record, write_file, Checkpoint,
    Manifest, NamedGraph,
};
use crate::par::indexed_map;
use crate::Args;

fn out_dir(args: &Args) -> Result<PathBuf> {
    let dir = PathBuf::from(args.require("out")?);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn run_manifest(args: &Args, inputs: &[(&str, &Path)]) -> Result<Manifest> {
    let mut m = Manifest::default();
    m.push("command", args.cmd.clone());
    for (key, value) in &args.flags {
        m.push(&format!("flag_{key}"), value.clone());
    }
    for (name, path) in inputs {
        m.push(&format!("input_{name}"), path.display().to_string());
        m.push(&format!("digest_{name}"), digest_file(path)?);
    }
    Ok(m)
}

fn finish(dir: &Path, cfg: &RunConfig, mut manifest: Manifest, outputs: &[&str]) -> Result<()> {
    for name in outputs {
        manifest.push("output", name.to_string());
    }
    manifest.save(&dir.join("run_manifest.txt"))?;
    write_file(&dir.join("resolved.cfg"), &cfg.render())
}

pub fn simulate(args: &Args) -> Result<()> {
    let dir = out_dir(args)?;
    let seed = args.seed()?;
    let cfg = args.config()?;
    let h = cfg.hyperparams()?;
    let opts = SimOptions {
        max_expected_edges: cfg.f64_or("max_edges", 5e7)?,
        ..Default::default()
    };
    let (graph, truth) = simulate_graph_with(&h, seed, &opts)?;

    let named = NamedGraph {
        user_names: graph.user_ids().iter().map(|id| format!("u{id}")).collect(),
        item_names: graph.item_ids().iter().map(|id| format!("i{id}")).collect(),
        graph,
    };
    // vertex ids are atom indices; name tables must be addressable by id
    let named = reindex_names(named);
    save_graph(&dir.join("graph.tsv"), &named)?;

    let mut users = String::new();
    for (row, &id) in truth.user_ids.iter().enumerate() {
        let _ = write!(users, "u{id}\t{}", fmt_real(truth.user_weights[row]));
        for l in 0..truth.k {
            let _ = write!(users, "\t{}", fmt_real(truth.user_affinities[row * truth.k + l]));
        }
        users.push('\n');
    }
    write_file(&dir.join("users.tsv"), &users)?;
    let mut items = String::new();
    for (row, &id) in truth.item_ids.iter().enumerate() {
        let _ = write!(items, "i{id}\t{}", fmt_real(truth.item_weights[row]));
        for l in 0..truth.k {
            let _ = write!(items, "\t{}", fmt_real(truth.item_affinities[row * truth.k + l]));
        }
        items.push('\n');
    }
    write_file(&dir.join("items.tsv"), &items)?;

    let mut m = run_manifest(args, &[])?;
    m.push("seed", seed.to_string());
    push_hyper(&mut m, &h);
    m.push("users", named.graph.num_users().to_string());
    m.push("items", named.graph.num_items().to_string());
    m.push("edges", named.graph.num_edges().to_string());
    m.push_real("edge_count_estimate", edge_count_estimate(&h));
    println!(
        "simulated users={} items={} edges={}",
        named.graph.num_users(),
        named.graph.num_items(),
        named.graph.num_edges()
    );
    finish(&dir, &cfg, m, &["graph.tsv", "users.tsv", "items.tsv"])
}

/// Simulated graphs carry sparse atom-index ids; reindex the name tables so
/// `name[id]` addressing works.
fn reindex_names(named: NamedGraph) -> NamedGraph {
    let max_user = named.graph.user_ids().iter().max().copied().unwrap_or(0) as usize;
    let max_item = named.graph.item_ids().iter().max().copied().unwrap_or(0) as usize;
    let mut user_names = vec![String::new(); max_user + 1];
    for (pos, &id) in named.graph.user_ids().iter().enumerate() {
        user_names[id as usize] = named.user_names[pos].clone();
    }
    let mut item_names = vec![String::new(); max_item + 1];
    for (pos, &id) in named.graph.item_ids().iter().enumerate() {
        item_names[id as usize] = named.item_names[pos].clone();
    }
    NamedGraph { graph: named.graph, user_names, item_names }
}

pub fn check_sparsity(args: &Args) -> Result<()> {
    let dir = out_dir(args)?;
    let seed = args.seed()?;
    let cfg = args.config()?;
    let graph_path = PathBuf::from(args.require("graph")?);
    let named = load_graph(&graph_path)?;
    let threads = cfg.usize_or("threads", 1)?;
    let reps = cfg.usize_or("reps", 10)? as u32;
    let flat_tol = cfg.f64_or("flat_tol", graphex::sparsity::DEFAULT_FLAT_TOL)?;
    let levels = match cfg.get("levels") {
        None => default_levels(),
        Some(text) => text
            .split(',')
            .map(|x| x.trim().parse::<f64>().map_err(|e| anyhow!("bad level {x:?}: {e}")))
            .collect::<Result<Vec<f64>>>()?,
    };
    let sides: Vec<Side> = match args.flags.get("side").map(|s| s.as_str()).unwrap_or("both") {
        "user" => vec![Side::User],
        "item" => vec![Side::Item],
        "both" => vec![Side::User, Side::Item],
        other => bail!("--side must be user, item, or both, got {other:?}"),
    };

    let mut csv = String::from("side,level,rep,density\n");
    let mut m = run_manifest(args, &[("graph", graph_path.as_path())])?;
    m.push("seed", seed.to_string());
    m.push_real("flat_tol", flat_tol);
    m.push("reps", reps.to_string());
    for side in sides {
        let curve = profile_parallel(&named.graph, side, &levels, reps, seed, threads)?;
        for (li, &level) in curve.levels.iter().enumerate() {
            for r in 0..reps {
                let rep = li as u32 * reps + r;
                match density_replicate(&named.graph, side, level, seed, rep) {
                    Some(d) => {
                        let _ = writeln!(csv, "{side},{level},{r},{d}");
                    }
                    None => {
                        let _ = writeln!(csv, "{side},{level},{r},empty");
                    }
                }
            }
        }
        let verdict = classify(&curve, flat_tol)?;
        let _ = writeln!(csv, "{side},summary,,{verdict}");
        m.push(&format!("verdict_{side}"), verdict.to_string());
        println!("{side}: {verdict}");
    }
    write_file(&dir.join("density.csv"), &csv)?;
    finish(&dir, &cfg, m, &["density.csv"])
}

/// Parallel replicate evaluation that reproduces
/// `sparsity::density_profile` exactly: same per-replicate seeds, means and
/// sds assembled in index order.
fn profile_parallel(
    g: &BipartiteGraph,
    side: Side,
    levels: &[f64],
    reps: u32,
    seed: u64,
    threads: usize,
) -> Result<DensityCurve> {
    if threads <= 1 {
        return Ok(graphex::sparsity::density_profile(g, side, levels, reps, seed)?);
    }
    graphex::sparsity::validate_levels(levels)?;
    if reps < 1 {
        bail!("reps must be >= 1");
    }
    let n = levels.len() * reps as usize;
    let densities = indexed_map(n, threads, |idx| {
        let level = levels[idx / reps as usize];
        density_replicate(g, side, level, seed, idx as u32)
    });
    let mut mean_density = Vec::with_capacity(levels.len());
    let mut sd_density = Vec::with_capacity(levels.len());
    let mut valid_reps = Vec::with_capacity(levels.len());
    for li in 0..levels.len() {
        let slice: Vec<f64> = densities[li * reps as usize..(li + 1) * reps as usize]
            .iter()
            .flatten()
            .copied()
            .collect();
        valid_reps.push(slice.len() as u32);
        let (m, s) = mean_sd(&slice);
        mean_density.push(m);
        sd_density.push(s);
    }
    Ok(DensityCurve {
        side,
        levels: levels.to_vec(),
        mean_density,
        sd_density,
        valid_reps,
        reps,
        seed,
    })
}

pub fn estimate(args: &Args) -> Result<()> {
    let dir = out_dir(args)?;
    let seed = args.seed()?;
    let cfg = args.config()?;
    let graph_path = PathBuf::from(args.require("graph")?);
    let named = load_graph(&graph_path)?;
    let g = &named.graph;
    let threads = cfg.usize_or("threads", 1)?;
    let n_sims = cfg.usize_or("n_sims", 20)? as u32;

    let sigma_u_raw = estimate_sigma(&g.user_degrees())?;
    let sigma_i_raw = estimate_sigma(&g.item_degrees())?;
    let sigma_u = clamp_sigma(sigma_u_raw);
    let sigma_i = clamp_sigma(sigma_i_raw);
    if sigma_u != sigma_u_raw || sigma_i != sigma_i_raw {
        eprintln!(
            "warning: raw sigma estimates ({sigma_u_raw:.4}, {sigma_i_raw:.4}) clamped to the admissible range"
        );
    }

    let mut h = cfg.hyperparams()?;
    h.sigma_u = sigma_u;
    h.sigma_i = sigma_i;
    h.validate().map_err(|e| anyhow!("{e}"))?;

    let calibrate = |h: graphex::simulate::ModelHyperparams, sigma_hat: f64, tag: u64| {
        let per: Vec<Option<f64>> = indexed_map(n_sims as usize, threads, |i| {
            calibrate_replicate(&h, sigma_hat, hash3(seed, tag, 0), i as u32)
        });
        let kept: Vec<f64> = per.iter().flatten().copied().collect();
        let dropped = per.len() - kept.len();
        (kept, dropped)
    };
    let (c_user, dropped_user) = calibrate(h, sigma_u, 1);
    if c_user.is_empty() {
        bail!("every user-side calibration replicate was empty");
    }
    let (c_item, dropped_item) = calibrate(h.swapped(), sigma_i, 2);
    if c_item.is_empty() {
        bail!("every item-side calibration replicate was empty");
    }
    let (c_hat_u, c_sd_u) = mean_sd(&c_user);
    let (c_hat_i, c_sd_i) = mean_sd(&c_item);

    let s_hat = estimate_size(g.num_users() as u64, g.num_edges() as u64, sigma_u, c_hat_u)?;
    let alpha_hat = estimate_size(g.num_items() as u64, g.num_edges() as u64, sigma_i, c_hat_i)?;

    let mut est = Manifest::default();
    est.push_real("sigma_u_raw", sigma_u_raw);
    est.push_real("sigma_i_raw", sigma_i_raw);
    est.push_real("sigma_u", sigma_u);
    est.push_real("sigma_i", sigma_i);
    est.push_real("c_hat_user", c_hat_u);
    est.push_real("c_hat_item", c_hat_i);
    est.push_real("c_spread_user", c_sd_u / c_hat_u.abs());
    est.push_real("c_spread_item", c_sd_i / c_hat_i.abs());
    est.push("c_dropped_user", dropped_user.to_string());
    est.push("c_dropped_item", dropped_item.to_string());
    est.push_real("s", s_hat);
    est.push_real("alpha", alpha_hat);
    est.push("n_sims", n_sims.to_string());
    est.push_real("calibration_s", h.s);
    est.push_real("calibration_alpha", h.alpha);
    est.save(&dir.join("estimates.txt"))?;

    print!(
        "sigma_hat_u={sigma_u_raw:.6}\nsigma_hat_i={sigma_i_raw:.6}\ns_hat={s_hat:.4}\nalpha_hat={alpha_hat:.4}\nc_hat_user={c_hat_u:.6}\nc_hat_item={c_hat_i:.6}\n"
    );

    let mut m = run_manifest(args, &[("graph", graph_path.as_path())])?;
    m.push("seed", seed.to_string());
    finish(&dir, &cfg, m, &["estimates.txt"])
}

pub fn split_cmd(args: &Args) -> Result<()> {
    let dir = out_dir(args)?;
    let seed = args.seed()?;
    let cfg = args.config()?;
    let graph_path = PathBuf::from(args.require("graph")?);
    let named = load_graph(&graph_path)?;
    let p: f64 = args.parse_flag("p")?;
    let q: f64 = args.parse_flag("q")?;

    let mut bundle = split(&named.graph, p, q, seed).map_err(|e| anyhow!("{e}"))?;
    if let (Some(s), Some(alpha)) = (cfg.get("s"), cfg.get("alpha")) {
        let s: f64 = s.parse().context("bad s")?;
        let alpha: f64 = alpha.parse().context("bad alpha")?;
        bundle = bundle.with_source_sizes(s, alpha);
    }

    for (name, part) in [
        ("train", &bundle.train),
        ("holdout", &bundle.holdout),
        ("test", &bundle.test),
        ("holdoutfit", &bundle.holdoutfit),
    ] {
        let sub = NamedGraph {
            graph: part.clone(),
            user_names: named.user_names.clone(),
            item_names: named.item_names.clone(),
        };
        save_graph(&dir.join(format!("{name}.tsv")), &sub)?;
    }
    save_sampling_record(
        &dir,
        "user_split",
        &graphex::graph::SamplingRecord {
            p,
            q: 1.0,
            seed,
            kept_users: bundle.train_users.clone(),
            kept_items: vec![],
            empty: false,
        },
        &named.user_names,
        &named.item_names,
    )?;
    save_sampling_record(
        &dir,
        "item_split",
        &graphex::graph::SamplingRecord {
            p: 1.0,
            q,
            seed,
            kept_users: vec![],
            kept_items: bundle.test_items.clone(),
            empty: false,
        },
        &named.user_names,
        &named.item_names,
    )?;

    let mut m = run_manifest(args, &[("graph", graph_path.as_path())])?;
    m.push("seed", seed.to_string());
    m.push_real("p", p);
    m.push_real("q", q);
    for (name, part) in [
        ("train", &bundle.train),
        ("holdout", &bundle.holdout),
        ("test", &bundle.test),
        ("holdoutfit", &bundle.holdoutfit),
    ] {
        m.push(&format!("{name}_users"), part.num_users().to_string());
        m.push(&format!("{name}_items"), part.num_items().to_string());
        m.push(&format!("{name}_edges"), part.num_edges().to_string());
    }
    if let Some(sizes) = bundle.size_map {
        m.push_real("s_train", sizes.s_train);
        m.push_real("alpha_train", sizes.alpha_train);
        m.push_real("s_test", sizes.s_test);
        m.push_real("alpha_test", sizes.alpha_test);
        // The test user size follows the split construction (holdout user
        // share (1-p)); the reciprocal p/(1-p) convention also circulates,
        // so both are surfaced.
        m.push_real("s_test_reciprocal_convention", sizes.s_train * bundle.p / (1.0 - bundle.p));
    }
    println!(
        "train {}e / holdout {}e / test {}e / holdoutfit {}e",
        bundle.train.num_edges(),
        bundle.holdout.num_edges(),
        bundle.test.num_edges(),
        bundle.holdoutfit.num_edges()
    );
    finish(
        &dir,
        &cfg,
        m,
        &["train.tsv", "holdout.tsv", "test.tsv", "holdoutfit.tsv"],
    )
}

pub fn fit_cmd(args: &Args) -> Result<()> {
    let dir = out_dir(args)?;
    let seed = args.seed()?;
    let mut cfg = args.config()?;
    let graph_path = PathBuf::from(args.require("graph")?);
    let named = load_graph(&graph_path)?;

    let mut inputs = vec![("graph", graph_path.clone())];
    if let Some(est_path) = args.flags.get("estimates") {
        let est_path = PathBuf::from(est_path);
        let est = Manifest::load(&est_path)?;
        for key in ["sigma_u", "sigma_i", "s", "alpha"] {
            cfg.set(key, est.require(key)?)?;
        }
        inputs.push(("estimates", est_path));
    }
    let h = cfg.hyperparams()?;
    let fit_cfg = cfg.fit_config(seed)?;

    let state = fit(&named.graph, &fit_cfg, &h).map_err(|e| anyhow!("{e}"))?;
    if !state.converged {
        eprintln!(
            "warning: not converged after {} sweeps (last metric {:.3e})",
            state.iterations,
            state.history.last().copied().unwrap_or(f64::NAN)
        );
    }
    println!(
        "fit mode={} iterations={} converged={}",
        match fit_cfg.mode {
            graphex::inference::FitMode::Sparse => "sparse",
            graphex::inference::FitMode::Dense => "dense",
        },
        state.iterations,
        state.converged
    );

    let cp = Checkpoint {
        state,
        user_names: named.user_names.clone(),
        item_names: named.item_names.clone(),
    };
    save_checkpoint(&dir, &cp)?;
    let input_refs: Vec<(&str, &Path)> =
        inputs.iter().map(|(n, p)| (*n, p.as_path())).collect();
    let mut m = run_manifest(args, &input_refs)?;
    m.push("seed", seed.to_string());
    finish(
        &dir,
        &cfg,
        m,
        &["manifest.txt", "gamma.tsv", "theta.tsv", "omega.tsv", "beta.tsv", "leftover.tsv"],
    )
}

pub fn fit_users(args: &Args) -> Result<()> {
    let dir = out_dir(args)?;
    let seed = args.seed()?;
    let cfg = args.config()?;
    let graph_path = PathBuf::from(args.require("graph")?);
    let model_dir = PathBuf::from(args.require("model")?);
    let user_size: f64 = args.parse_flag("user-size")?;

    let cp = load_checkpoint(&model_dir)?;
    let pairs = read_edge_names(&graph_path)?;
    if pairs.is_empty() {
        bail!("{}: empty graph", graph_path.display());
    }

    // Join holdout-fit items onto the trained state's positions; edges to
    // items the model never saw cannot inform the refit and are dropped.
    let item_pos: BTreeMap<&str, u32> = cp
        .item_names
        .iter()
        .enumerate()
        .map(|(p, name)| (name.as_str(), p as u32))
        .collect();
    let mut user_index: BTreeMap<&str, u32> = BTreeMap::new();
    let mut user_names: Vec<String> = Vec::new();
    let mut edges = Vec::with_capacity(pairs.len());
    let mut dropped = 0usize;
    for (user, item) in &pairs {
        let Some(&ipos) = item_pos.get(item.as_str()) else {
            dropped += 1;
            continue;
        };
        let u = *user_index.entry(user).or_insert_with(|| {
            user_names.push(user.clone());
            (user_names.len() - 1) as u32
        });
        edges.push((u, ipos));
    }
    if edges.is_empty() {
        bail!("no holdout-fit edge touches an item known to the model");
    }
    let hf = BipartiteGraph::from_edges(&edges);
    // users that lost every edge drop out of the graph; compact the names
    let user_names: Vec<String> =
        hf.user_ids().iter().map(|&id| user_names[id as usize].clone()).collect();
    let hf = remap_dense(&hf);

    let mut fit_cfg = cfg.fit_config(seed)?;
    // k, mode, and the leftover form belong to the trained model
    fit_cfg.k = cp.state.cfg.k;
    fit_cfg.mode = cp.state.cfg.mode;
    fit_cfg.leftover_form = cp.state.cfg.leftover_form;
    let state = fit_test_users(&hf, &cp.state, &fit_cfg, user_size).map_err(|e| anyhow!("{e}"))?;
    println!(
        "refit users={} dropped_unknown_item_edges={} iterations={} converged={}",
        state.user_ids.len(),
        dropped,
        state.iterations,
        state.converged
    );

    let merged = Checkpoint { state, user_names, item_names: cp.item_names.clone() };
    save_checkpoint(&dir, &merged)?;
    let mut m = run_manifest(args, &[("graph", graph_path.as_path()), ("model", &model_dir.join("manifest.txt"))])?;
    m.push("seed", seed.to_string());
    m.push("dropped_unknown_item_edges", dropped.to_string());
    m.push_real("user_size", user_size);
    finish(&dir, &cfg, m, &["manifest.txt", "gamma.tsv", "theta.tsv", "omega.tsv", "beta.tsv"])
}

/// Rebuild a graph so vertex ids are dense positions (names line up by
/// position after joins).
fn remap_dense(g: &BipartiteGraph) -> BipartiteGraph {
    let user_map: BTreeMap<u32, u32> =
        g.user_ids().iter().enumerate().map(|(p, &id)| (id, p as u32)).collect();
    let edges: Vec<(u32, u32)> =
        g.edges().map(|(u, i)| (user_map[&u], i)).collect();
    BipartiteGraph::from_edges(&edges)
}

pub fn predict(args: &Args) -> Result<()> {
    let dir = out_dir(args)?;
    let seed = args.seed()?;
    let cfg = args.config()?;
    let model_dir = PathBuf::from(args.require("model")?);
    let cp = load_checkpoint(&model_dir)?;
    let draws = cfg.usize_or("draws", 1)?.max(1);
    let opts = PredictiveOptions {
        user_size: cfg.f64_or("user_size", 0.0)?,
        item_size: cfg.f64_or("item_size", 0.0)?,
        user_keep: cfg.f64_or("user_keep", 1.0)?,
        item_keep: cfg.f64_or("item_keep", 1.0)?,
        trunc_tol: None,
        path: graphex::simulate::EdgePath::Auto,
    };

    let mut inputs: Vec<(&str, PathBuf)> = vec![("model", model_dir.join("manifest.txt"))];
    let mut outputs: Vec<String> = Vec::new();
    let mut sparse_summaries = Vec::new();
    for d in 0..draws {
        let g = predictive_sample(&cp.state, &opts, hash3(seed, 0x7072_4457, d as u64))
            .map_err(|e| anyhow!("{e}"))?;
        if g.is_empty() {
            eprintln!("warning: draw {d} came out empty");
            continue;
        }
        let named = predictive_names(&g, &cp);
        let file = format!("draw_{d}.tsv");
        save_graph(&dir.join(&file), &named)?;
        let s = summarize(&g).map_err(|e| anyhow!("{e}"))?;
        println!(
            "draw {d}: U={} I={} E={} sigma_hat=({:.4}, {:.4})",
            s.users, s.items, s.edges, s.sigma_hat_u, s.sigma_hat_i
        );
        sparse_summaries.push(s);
        outputs.push(file);
    }

    let dense_summaries = match args.flags.get("dense-model") {
        None => Vec::new(),
        Some(path) => {
            let dense_dir = PathBuf::from(path);
            let dcp = load_checkpoint(&dense_dir)?;
            inputs.push(("dense_model", dense_dir.join("manifest.txt")));
            let mut acc = Vec::new();
            for d in 0..draws {
                let g = predictive_sample(&dcp.state, &opts, hash3(seed, 0x7072_4457, d as u64))
                    .map_err(|e| anyhow!("{e}"))?;
                if !g.is_empty() {
                    acc.push(summarize(&g).map_err(|e| anyhow!("{e}"))?);
                }
            }
            acc
        }
    };

    let test_summary = match args.flags.get("test") {
        None => None,
        Some(path) => {
            let test_path = PathBuf::from(path);
            let named = load_graph(&test_path)?;
            inputs.push(("test", test_path));
            Some(summarize(&named.graph).map_err(|e| anyhow!("{e}"))?)
        }
    };

    let csv = render_summary_csv(
        test_summary.as_ref(),
        mean_summary(&sparse_summaries).as_ref(),
        mean_summary(&dense_summaries).as_ref(),
    );
    write_file(&dir.join("summary.csv"), &csv)?;
    outputs.push("summary.csv".to_string());

    let input_refs: Vec<(&str, &Path)> = inputs.iter().map(|(n, p)| (*n, p.as_path())).collect();
    let mut m = run_manifest(args, &input_refs)?;
    m.push("seed", seed.to_string());
    m.push("draws", draws.to_string());
    let output_refs: Vec<&str> = outputs.iter().map(|s| s.as_str()).collect();
    finish(&dir, &cfg, m, &output_refs)
}

fn predictive_names(g: &BipartiteGraph, cp: &Checkpoint) -> NamedGraph {
    let name = |id: u32, names: &[String], side: &str| -> String {
        if id >= FRESH_ID_BASE {
            format!("fresh_{side}{}", id - FRESH_ID_BASE)
        } else {
            names[id as usize].clone()
        }
    };
    let mut user_names: Vec<String> = Vec::new();
    let mut item_names: Vec<String> = Vec::new();
    // dense positional names aligned with a remapped graph
    let user_map: BTreeMap<u32, u32> =
        g.user_ids().iter().enumerate().map(|(p, &id)| (id, p as u32)).collect();
    let item_map: BTreeMap<u32, u32> =
        g.item_ids().iter().enumerate().map(|(p, &id)| (id, p as u32)).collect();
    for &id in g.user_ids() {
        user_names.push(name(id, &cp.user_names, "u"));
    }
    for &id in g.item_ids() {
        item_names.push(name(id, &cp.item_names, "i"));
    }
    let edges: Vec<(u32, u32)> = g.edges().map(|(u, i)| (user_map[&u], item_map[&i])).collect();
    NamedGraph { graph: BipartiteGraph::from_edges(&edges), user_names, item_names }
}

/// Entry-wise mean of draw summaries; counts round to the nearest integer.
fn mean_summary(summaries: &[PredictiveSummary]) -> Option<PredictiveSummary> {
    if summaries.is_empty() {
        return None;
    }
    let n = summaries.len() as f64;
    Some(PredictiveSummary {
        users: (summaries.iter().map(|s| s.users as f64).sum::<f64>() / n).round() as u64,
        items: (summaries.iter().map(|s| s.items as f64).sum::<f64>() / n).round() as u64,
        edges: (summaries.iter().map(|s| s.edges as f64).sum::<f64>() / n).round() as u64,
        sigma_hat_u: summaries.iter().map(|s| s.sigma_hat_u).sum::<f64>() / n,
        sigma_hat_i: summaries.iter().map(|s| s.sigma_hat_i).sum::<f64>() / n,
        user_degree_hist: vec![],
        item_degree_hist: vec![],
    })
}

pub fn evaluate(args: &Args) -> Result<()> {
    let dir = out_dir(args)?;
    let cfg = args.config()?;
    let model_dir = PathBuf::from(args.require("model")?);
    let test_path = PathBuf::from(args.require("test")?);
    let train_path = PathBuf::from(args.require("train")?);
    let m_top = cfg.usize_or("m", 20)?;
    let unpopular_pct = cfg.f64_or("unpopular_pct", 0.05)?;

    let cp = load_checkpoint(&model_dir)?;
    let user_pos: BTreeMap<&str, u32> =
        cp.user_names.iter().enumerate().map(|(p, n)| (n.as_str(), p as u32)).collect();
    let item_pos: BTreeMap<&str, u32> =
        cp.item_names.iter().enumerate().map(|(p, n)| (n.as_str(), p as u32)).collect();

    // Join the test and seen graphs onto state positions. Test items the
    // model cannot score keep distinct out-of-range ids and are skipped by
    // the scorer. Test users without a fitted representation (no usable
    // holdout-fit data) cannot be scored and are skipped with a count.
    let map_graph = |path: &Path| -> Result<(BipartiteGraph, usize)> {
        let pairs = read_edge_names(path)?;
        let mut edges = Vec::with_capacity(pairs.len());
        let mut fresh: BTreeMap<String, u32> = BTreeMap::new();
        let mut skipped_users: BTreeMap<&str, ()> = BTreeMap::new();
        for (user, item) in &pairs {
            let Some(&u) = user_pos.get(user.as_str()) else {
                skipped_users.insert(user, ());
                continue;
            };
            let i = match item_pos.get(item.as_str()) {
                Some(&i) => i,
                None => {
                    let next = FRESH_ID_BASE + fresh.len() as u32;
                    *fresh.entry(item.clone()).or_insert(next)
                }
            };
            edges.push((u, i));
        }
        Ok((BipartiteGraph::from_edges(&edges), skipped_users.len()))
    };
    let (test, unscored_users) = map_graph(&test_path)?;
    let (seen, _) = map_graph(&train_path)?;
    if test.is_empty() {
        bail!("test graph is empty after joining onto the model");
    }
    if unscored_users > 0 {
        eprintln!("warning: {unscored_users} test users have no fitted representation and are skipped");
    }

    let rows = evaluate_per_user(&cp.state, &test, &seen, m_top, unpopular_pct)
        .map_err(|e| anyhow!("{e}"))?;
    let mut csv = String::from("user,relevant,recall,ndcg,recall_unpopular,ndcg_unpopular\n");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            cp.user_names[r.user as usize],
            r.relevant,
            r.recall,
            r.ndcg,
            r.recall_unpopular.map(|x| x.to_string()).unwrap_or_default(),
            r.ndcg_unpopular.map(|x| x.to_string()).unwrap_or_default(),
        );
    }
    let scores = graphex::evaluate::evaluate_recommendations(&cp.state, &test, &seen, m_top, unpopular_pct)
        .map_err(|e| anyhow!("{e}"))?;
    let _ = writeln!(
        csv,
        "summary,{},{},{},{},{}",
        scores.users_scored, scores.recall_at_m, scores.ndcg, scores.recall_at_m_unpopular, scores.ndcg_unpopular
    );
    write_file(&dir.join("scores.csv"), &csv)?;
    println!(
        "recall@{m_top}={:.4} ndcg={:.4} recall@{m_top}_unpopular={:.4} ndcg_unpopular={:.4} users={}",
        scores.recall_at_m,
        scores.ndcg,
        scores.recall_at_m_unpopular,
        scores.ndcg_unpopular,
        scores.users_scored
    );

    let mut m = run_manifest(
        args,
        &[
            ("model", &model_dir.join("manifest.txt")),
            ("test", test_path.as_path()),
            ("train", train_path.as_path()),
        ],
    )?;
    m.push("m", m_top.to_string());
    m.push("unscored_users", unscored_users.to_string());
    m.push_real("unpopular_pct", unpopular_pct);
    m.push_real("recall_at_m", scores.recall_at_m);
    m.push_real("ndcg", scores.ndcg);
    finish(&dir, &cfg, m, &["scores.csv"])
}

fn push_hyper(m: &mut Manifest, h: &graphex::simulate::ModelHyperparams) {
    m.push_real("sigma_u", h.sigma_u);
    m.push_real("tau_u", h.tau_u);
    m.push_real("sigma_i", h.sigma_i);
    m.push_real("tau_i", h.tau_i);
    m.push_real("a", h.a);
    m.push_real("b", h.b);
    m.push_real("c", h.c);
    m.push_real("d", h.d);
    m.push("k", h.k.to_string());
    m.push_real("s", h.s);
    m.push_real("alpha", h.alpha);
}
