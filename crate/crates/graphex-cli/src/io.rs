//! File formats: edge-list TSV, key=value manifests, model checkpoints, and
//! the CSV reports.
//!
//! All real numbers in checkpoints are written with 17 significant digits so
//! a reload reproduces the state bit for bit. Manifests carry no timestamps;
//! rerunning a command with the same inputs and seed yields byte-identical
//! outputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use graphex::evaluate::PredictiveSummary;
use graphex::graph::{BipartiteGraph, SamplingRecord, VertexId};
use graphex::inference::{FitConfig, FitMode, GammaMat, GammaVec, LeftoverForm, VariationalState};
use graphex::simulate::ModelHyperparams;

/// A graph together with the external string names of its vertices; vertex
/// id `i` names `user_names[i]` / `item_names[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedGraph {
    pub graph: BipartiteGraph,
    pub user_names: Vec<String>,
    pub item_names: Vec<String>,
}

impl NamedGraph {
    pub fn user_name(&self, id: VertexId) -> &str {
        &self.user_names[id as usize]
    }

    pub fn item_name(&self, id: VertexId) -> &str {
        &self.item_names[id as usize]
    }
}

/// Raw `user<TAB>item[<TAB>weight]` pairs; any positive weight marks edge
/// presence, duplicates collapse later.
pub fn read_edge_names(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading edge list {}", path.display()))?;
    let mut pairs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        if raw.is_empty() {
            continue;
        }
        let mut fields = raw.split('\t');
        let (Some(user), Some(item)) = (fields.next(), fields.next()) else {
            bail!("{}:{}: expected user<TAB>item, got {raw:?}", path.display(), lineno + 1);
        };
        if user.is_empty() || item.is_empty() {
            bail!("{}:{}: empty vertex id", path.display(), lineno + 1);
        }
        if let Some(weight) = fields.next() {
            let w: f64 = weight.parse().map_err(|_| {
                anyhow!("{}:{}: bad weight {weight:?}", path.display(), lineno + 1)
            })?;
            if w <= 0.0 {
                continue;
            }
        }
        if fields.next().is_some() {
            bail!("{}:{}: too many fields", path.display(), lineno + 1);
        }
        pairs.push((user.to_string(), item.to_string()));
    }
    Ok(pairs)
}

/// Load an edge list, mapping string ids to dense integers in
/// first-appearance order. Weighted lines binarize; the empty graph is an
/// error.
pub fn load_graph(path: &Path) -> Result<NamedGraph> {
    let pairs = read_edge_names(path)?;
    if pairs.is_empty() {
        bail!("{}: empty graph", path.display());
    }
    let mut user_index: BTreeMap<&str, u32> = BTreeMap::new();
    let mut item_index: BTreeMap<&str, u32> = BTreeMap::new();
    let mut user_names = Vec::new();
    let mut item_names = Vec::new();
    let mut edges = Vec::with_capacity(pairs.len());
    for (user, item) in &pairs {
        let u = *user_index.entry(user).or_insert_with(|| {
            user_names.push(user.clone());
            (user_names.len() - 1) as u32
        });
        let i = *item_index.entry(item).or_insert_with(|| {
            item_names.push(item.clone());
            (item_names.len() - 1) as u32
        });
        edges.push((u, i));
    }
    Ok(NamedGraph { graph: BipartiteGraph::from_edges(&edges), user_names, item_names })
}

/// Serialize a graph back to edge-list TSV in storage order.
pub fn save_graph(path: &Path, named: &NamedGraph) -> Result<()> {
    let mut out = String::new();
    for (u, i) in named.graph.edges() {
        out.push_str(named.user_name(u));
        out.push('\t');
        out.push_str(named.item_name(i));
        out.push('\n');
    }
    write_file(path, &out)
}

/// One real with 17 significant digits; round-trips f64 exactly.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_file(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .with_context(|| format!("creating {}", parent.display()))?;
    }
    std::fs::write(path, content).with_context(|| format!("writing {}", path.display()))
}

/// FNV-1a digest of a file, recorded in manifests for provenance.
pub fn digest_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("digesting {}", path.display()))?;
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    Ok(format!("fnv1a64:{hash:016x}"))
}

/// Ordered key=value manifest.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn push(&mut self, key: &str, value: impl Into<String>) {
        self.entries.push((key.to_string(), value.into()));
    }

    pub fn push_real(&mut self, key: &str, value: f64) {
        self.push(key, fmt_real(value));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| anyhow!("manifest is missing key {key:?}"))
    }

    pub fn real(&self, key: &str) -> Result<f64> {
        self.require(key)?.parse().with_context(|| format!("manifest key {key} is not a number"))
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.render())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading manifest {}", path.display()))?;
        let mut entries = Vec::new();
        for raw in text.lines() {
            if raw.trim().is_empty() {
                continue;
            }
            let (k, v) = raw
                .split_once('=')
                .ok_or_else(|| anyhow!("{}: bad manifest line {raw:?}", path.display()))?;
            entries.push((k.to_string(), v.to_string()));
        }
        Ok(Manifest { entries })
    }
}

/// Sampling record: manifest plus kept-id lists, one name per line.
pub fn save_sampling_record(
    dir: &Path,
    stem: &str,
    record: &SamplingRecord,
    user_names: &[String],
    item_names: &[String],
) -> Result<()> {
    let mut m = Manifest::default();
    m.push_real("p", record.p);
    m.push_real("q", record.q);
    m.push("seed", record.seed.to_string());
    m.push("empty", record.empty.to_string());
    m.push("kept_users", record.kept_users.len().to_string());
    m.push("kept_items", record.kept_items.len().to_string());
    m.save(&dir.join(format!("{stem}_record.txt")))?;
    let users: String = record
        .kept_users
        .iter()
        .map(|&id| format!("{}\n", user_names[id as usize]))
        .collect();
    write_file(&dir.join(format!("{stem}_kept_users.txt")), &users)?;
    let items: String = record
        .kept_items
        .iter()
        .map(|&id| format!("{}\n", item_names[id as usize]))
        .collect();
    write_file(&dir.join(format!("{stem}_kept_items.txt")), &items)
}

/// Model checkpoint: per-family TSVs keyed by vertex name, the per-factor
/// leftover masses, and a manifest carrying hyperparameters and history.
pub struct Checkpoint {
    pub state: VariationalState,
    pub user_names: Vec<String>,
    pub item_names: Vec<String>,
}

pub fn save_checkpoint(dir: &Path, cp: &Checkpoint) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let st = &cp.state;
    save_gamma_vec(&dir.join("gamma.tsv"), &cp.user_names, &st.gamma)?;
    save_gamma_mat(&dir.join("theta.tsv"), &cp.user_names, &st.theta)?;
    save_gamma_vec(&dir.join("omega.tsv"), &cp.item_names, &st.omega)?;
    save_gamma_mat(&dir.join("beta.tsv"), &cp.item_names, &st.beta)?;

    let mut leftover = String::new();
    for l in 0..st.mu.len() {
        let _ = writeln!(leftover, "{l}\t{}\t{}", fmt_real(st.mu[l]), fmt_real(st.rho[l]));
    }
    write_file(&dir.join("leftover.tsv"), &leftover)?;

    let mut m = Manifest::default();
    let h = &st.hyper;
    m.push("mode", mode_str(st.cfg.mode));
    m.push("leftover_form", leftover_str(st.cfg.leftover_form));
    m.push("k", st.cfg.k.to_string());
    m.push("max_iters", st.cfg.max_iters.to_string());
    m.push_real("conv_tol", st.cfg.conv_tol);
    m.push("mc_samples", st.cfg.mc_samples.to_string());
    m.push("seed", st.cfg.seed.to_string());
    m.push_real("dense_sigma", st.cfg.dense_sigma);
    m.push_real("sigma_u", h.sigma_u);
    m.push_real("tau_u", h.tau_u);
    m.push_real("sigma_i", h.sigma_i);
    m.push_real("tau_i", h.tau_i);
    m.push_real("a", h.a);
    m.push_real("b", h.b);
    m.push_real("c", h.c);
    m.push_real("d", h.d);
    m.push_real("s", h.s);
    m.push_real("alpha", h.alpha);
    m.push("users", st.user_ids.len().to_string());
    m.push("items", st.item_ids.len().to_string());
    m.push("iterations", st.iterations.to_string());
    m.push("converged", st.converged.to_string());
    m.push(
        "history",
        st.history.iter().map(|&x| fmt_real(x)).collect::<Vec<_>>().join(","),
    );
    m.save(&dir.join("manifest.txt"))
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let m = Manifest::load(&dir.join("manifest.txt"))?;
    let k: usize = m.require("k")?.parse()?;
    let cfg = FitConfig {
        k,
        max_iters: m.require("max_iters")?.parse()?,
        conv_tol: m.real("conv_tol")?,
        mc_samples: m.require("mc_samples")?.parse()?,
        seed: m.require("seed")?.parse()?,
        mode: match m.require("mode")? {
            "dense" => FitMode::Dense,
            _ => FitMode::Sparse,
        },
        dense_sigma: m.real("dense_sigma")?,
        leftover_form: match m.require("leftover_form")? {
            "literal" => LeftoverForm::Literal,
            _ => LeftoverForm::Tilted,
        },
    };
    let hyper = ModelHyperparams {
        sigma_u: m.real("sigma_u")?,
        tau_u: m.real("tau_u")?,
        sigma_i: m.real("sigma_i")?,
        tau_i: m.real("tau_i")?,
        a: m.real("a")?,
        b: m.real("b")?,
        c: m.real("c")?,
        d: m.real("d")?,
        k,
        s: m.real("s")?,
        alpha: m.real("alpha")?,
    };
    let (user_names, gamma) = load_gamma_vec(&dir.join("gamma.tsv"))?;
    let (names2, theta) = load_gamma_mat(&dir.join("theta.tsv"), k)?;
    if names2 != user_names {
        bail!("{}: theta.tsv names disagree with gamma.tsv", dir.display());
    }
    let (item_names, omega) = load_gamma_vec(&dir.join("omega.tsv"))?;
    let (names4, beta) = load_gamma_mat(&dir.join("beta.tsv"), k)?;
    if names4 != item_names {
        bail!("{}: beta.tsv names disagree with omega.tsv", dir.display());
    }

    let mut mu = Vec::with_capacity(k);
    let mut rho = Vec::with_capacity(k);
    let leftover = std::fs::read_to_string(dir.join("leftover.tsv"))
        .with_context(|| format!("reading {}/leftover.tsv", dir.display()))?;
    for line in leftover.lines() {
        let mut fields = line.split('\t');
        let _ = fields.next();
        mu.push(parse_real(fields.next(), "leftover mu")?);
        rho.push(parse_real(fields.next(), "leftover rho")?);
    }
    if mu.len() != k {
        bail!("{}: leftover.tsv has {} rows, expected {k}", dir.display(), mu.len());
    }

    let history = match m.require("history")? {
        "" => Vec::new(),
        text => text
            .split(',')
            .map(|x| x.parse::<f64>().map_err(|e| anyhow!("bad history entry: {e}")))
            .collect::<Result<Vec<f64>>>()?,
    };

    let state = VariationalState {
        user_ids: (0..user_names.len() as u32).collect(),
        item_ids: (0..item_names.len() as u32).collect(),
        gamma,
        theta,
        omega,
        beta,
        mu,
        rho,
        hyper,
        cfg,
        iterations: m.require("iterations")?.parse()?,
        history,
        converged: m.require("converged")? == "true",
    };
    Ok(Checkpoint { state, user_names, item_names })
}

fn mode_str(mode: FitMode) -> &'static str {
    match mode {
        FitMode::Sparse => "sparse",
        FitMode::Dense => "dense",
    }
}

fn leftover_str(form: LeftoverForm) -> &'static str {
    match form {
        LeftoverForm::Tilted => "tilted",
        LeftoverForm::Literal => "literal",
    }
}

fn parse_real(field: Option<&str>, what: &str) -> Result<f64> {
    field
        .ok_or_else(|| anyhow!("missing {what} field"))?
        .parse()
        .with_context(|| format!("bad {what} value"))
}

fn save_gamma_vec(path: &Path, names: &[String], fam: &GammaVec) -> Result<()> {
    let mut out = String::new();
    for (i, name) in names.iter().enumerate() {
        let _ = writeln!(out, "{name}\t{}\t{}", fmt_real(fam.shape[i]), fmt_real(fam.rate[i]));
    }
    write_file(path, &out)
}

fn load_gamma_vec(path: &Path) -> Result<(Vec<String>, GammaVec)> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut names = Vec::new();
    let mut shape = Vec::new();
    let mut rate = Vec::new();
    for line in text.lines() {
        let mut fields = line.split('\t');
        names.push(fields.next().unwrap_or_default().to_string());
        shape.push(parse_real(fields.next(), "shape")?);
        rate.push(parse_real(fields.next(), "rate")?);
    }
    Ok((names, GammaVec { shape, rate }))
}

fn save_gamma_mat(path: &Path, names: &[String], fam: &GammaMat) -> Result<()> {
    let k = fam.k;
    let mut out = String::new();
    for (i, name) in names.iter().enumerate() {
        out.push_str(name);
        for l in 0..k {
            let _ = write!(out, "\t{}\t{}", fmt_real(fam.shape[i * k + l]), fmt_real(fam.rate[i * k + l]));
        }
        out.push('\n');
    }
    write_file(path, &out)
}

fn load_gamma_mat(path: &Path, k: usize) -> Result<(Vec<String>, GammaMat)> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut names = Vec::new();
    let mut shape = Vec::new();
    let mut rate = Vec::new();
    for line in text.lines() {
        let mut fields = line.split('\t');
        names.push(fields.next().unwrap_or_default().to_string());
        for _ in 0..k {
            shape.push(parse_real(fields.next(), "shape")?);
            rate.push(parse_real(fields.next(), "rate")?);
        }
        if fields.next().is_some() {
            bail!("{}: row has more than {k} factor columns", path.display());
        }
    }
    Ok((names, GammaMat { shape, rate, k }))
}

/// The posterior-predictive summary CSV: one row per statistic, one column
/// per available source.
pub fn render_summary_csv(
    test: Option<&PredictiveSummary>,
    sparse: Option<&PredictiveSummary>,
    dense: Option<&PredictiveSummary>,
) -> String {
    type Cell = Box<dyn Fn(&PredictiveSummary) -> String>;
    let mut out = String::from("statistic,test_set,sparse_model,dense_model\n");
    let cell = |s: Option<&PredictiveSummary>, f: &dyn Fn(&PredictiveSummary) -> String| match s {
        Some(s) => f(s),
        None => String::new(),
    };
    let rows: [(&str, Cell); 5] = [
        ("U", Box::new(|s: &PredictiveSummary| s.users.to_string())),
        ("I", Box::new(|s: &PredictiveSummary| s.items.to_string())),
        ("E", Box::new(|s: &PredictiveSummary| s.edges.to_string())),
        ("sigma_hat_u", Box::new(|s: &PredictiveSummary| format!("{:.4}", s.sigma_hat_u))),
        ("sigma_hat_i", Box::new(|s: &PredictiveSummary| format!("{:.4}", s.sigma_hat_i))),
    ];
    for (name, f) in &rows {
        let _ = writeln!(
            out,
            "{name},{},{},{}",
            cell(test, f.as_ref()),
            cell(sparse, f.as_ref()),
            cell(dense, f.as_ref()),
        );
    }
    out
}
