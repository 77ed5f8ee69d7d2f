#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use dsrm::disambiguator::{
    build_graph, decode, link_by_prior, mine_seeds, objective, regularize, regularize_observed, GraphNode, Linker,
    Mention, MentionCandidates, ReguConfig, RelationalGraph, SameDocument, ScoredCandidate,
};
use dsrm::dsrm::{gradients, train, DsrmEmbeddings, LayerSizes, NetworkParams, Tensor, TrainConfig, TrainingGroup, TrainingReport};
use dsrm::evaluate::{decisions_of, gold_mentions, precision_at_1, Averaging};
use dsrm::kg::{build_dictionary, EntityId, EntityRecord, KnowledgeGraph};
use dsrm::miner::{mine_kg_pairs, mine_pairs, MinerConfig};
use dsrm::relatedness::{build_tfidf, ngd_relatedness, vsp_relatedness, TableRelatedness};
use dsrm::synth::{generate, SynthConfig, SynthFixture};
use dsrm::vectorizer::SparseVector;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn eid(s: &str) -> EntityId {
    EntityId::new(s).unwrap()
}

// ---------------------------------------------------------------- gradients

/// Dense re-implementation of the network and loss, sharing no code with the
/// library beyond parameter access.
pub struct DenseNet {
    w1: Vec<Vec<f64>>,
    w2: Vec<Vec<f64>>,
    b2: Vec<f64>,
    w3: Vec<Vec<f64>>,
    b3: Vec<f64>,
}

impl DenseNet {
    pub fn from_params(p: &NetworkParams) -> Self {
        let s = p.sizes();
        let rows = |flat: &[f64], r: usize, c: usize| -> Vec<Vec<f64>> {
            (0..r).map(|i| flat[i * c..(i + 1) * c].to_vec()).collect()
        };
        DenseNet {
            w1: (0..s.hidden1)
                .map(|r| (0..s.input).map(|c| p.w1(r, c)).collect())
                .collect(),
            w2: rows(p.tensor(Tensor::W2), s.hidden2, s.hidden1),
            b2: p.tensor(Tensor::B2).to_vec(),
            w3: rows(p.tensor(Tensor::W3), s.output, s.hidden2),
            b3: p.tensor(Tensor::B3).to_vec(),
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let l1: Vec<f64> = self
            .w1
            .iter()
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect();
        let layer = |w: &[Vec<f64>], b: &[f64], input: &[f64]| -> Vec<f64> {
            w.iter()
                .zip(b)
                .map(|(row, bias)| (row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>() + bias).tanh())
                .collect()
        };
        let l2 = layer(&self.w2, &self.b2, &l1);
        layer(&self.w3, &self.b3, &l2)
    }
}

fn dense_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// `(anchor, positive, negatives)` as dense vectors.
pub type DenseGroup = (Vec<f64>, Vec<f64>, Vec<Vec<f64>>);

pub fn oracle_loss(p: &NetworkParams, groups: &[DenseGroup], gamma: f64) -> f64 {
    let net = DenseNet::from_params(p);
    let per_group: Vec<f64> = groups
        .iter()
        .map(|(a, pos, negs)| {
            let ya = net.forward(a);
            let s0 = dense_cosine(&ya, &net.forward(pos));
            let mut z = (gamma * s0).exp();
            for n in negs {
                z += (gamma * dense_cosine(&ya, &net.forward(n))).exp();
            }
            -((gamma * s0).exp() / z).ln()
        })
        .collect();
    per_group.iter().sum::<f64>() / groups.len() as f64
}

pub struct GradientCheck {
    pub coordinates: usize,
    pub max_rel_error: f64,
    pub worst: String,
    pub elapsed: Duration,
}

pub const TOY_SIZES: (usize, usize, usize, usize) = (12, 5, 5, 4);

/// Toy network with every tensor (biases included) drawn uniformly from
/// `[-0.8, 0.8]`.
pub fn toy_params(seed: u64) -> NetworkParams {
    let (i, h1, h2, o) = TOY_SIZES;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-0.8..0.8)).collect() };
    let w1 = draw(h1 * i);
    NetworkParams::from_tensors(LayerSizes::new(i, h1, h2, o), seed, &w1, draw(h2 * h1), draw(h2), draw(o * h2), draw(o))
        .unwrap()
}

pub fn toy_groups(seed: u64, groups: usize, negatives: usize) -> Vec<DenseGroup> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vec = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..TOY_SIZES.0).map(|_| rng.gen_range(-1.0..1.0)).collect() };
    (0..groups)
        .map(|_| {
            let a = vec(&mut rng);
            let p = vec(&mut rng);
            let n = (0..negatives).map(|_| vec(&mut rng)).collect();
            (a, p, n)
        })
        .collect()
}

pub fn sparse_groups(groups: &[DenseGroup]) -> Vec<(SparseVector, SparseVector, Vec<SparseVector>)> {
    groups
        .iter()
        .map(|(a, p, n)| {
            (
                SparseVector::from_dense(a),
                SparseVector::from_dense(p),
                n.iter().map(|v| SparseVector::from_dense(v)).collect(),
            )
        })
        .collect()
}

/// Analytic gradients against central differences of the dense oracle loss
/// on a 12/5/5/4 network with 3 groups of 4 negatives.
pub fn gradient_check() -> GradientCheck {
    let start = Instant::now();
    let gamma = 5.0;
    let eps = 1e-5;
    let params = toy_params(11);
    let dense = toy_groups(12, 3, 4);
    let sparse = sparse_groups(&dense);
    let neg_refs: Vec<Vec<&SparseVector>> = sparse.iter().map(|(_, _, n)| n.iter().collect()).collect();
    let batch: Vec<TrainingGroup<'_>> = sparse
        .iter()
        .zip(&neg_refs)
        .map(|((a, p, _), n)| TrainingGroup {
            anchor: a,
            positive: p,
            negatives: n,
        })
        .collect();
    let grad = gradients(&params, &batch, gamma).unwrap();

    let mut coordinates = 0;
    let mut max_rel_error: f64 = 0.0;
    let mut worst = String::new();
    for t in Tensor::ALL {
        let analytic = grad.dense(t, params.sizes());
        for (k, a) in analytic.iter().enumerate() {
            let mut plus = params.clone();
            plus.tensor_mut(t)[k] += eps;
            let mut minus = params.clone();
            minus.tensor_mut(t)[k] -= eps;
            let numeric = (oracle_loss(&plus, &dense, gamma) - oracle_loss(&minus, &dense, gamma)) / (2.0 * eps);
            let scale = a.abs().max(numeric.abs());
            let rel = if scale == 0.0 { 0.0 } else { (a - numeric).abs() / scale };
            coordinates += 1;
            if rel > max_rel_error {
                max_rel_error = rel;
                worst = format!("{t:?}[{k}] analytic {a:e} numeric {numeric:e}");
            }
        }
    }
    GradientCheck {
        coordinates,
        max_rel_error,
        worst,
        elapsed: start.elapsed(),
    }
}

// ------------------------------------------------------------------- solver

pub fn mention(doc: &str, offset: usize) -> Mention {
    Mention {
        doc_id: doc.into(),
        offset,
        surface: format!("m{offset}"),
        context_tokens: Vec::new(),
    }
}

/// Random graph of at most `max_nodes` hypotheses with random seeds,
/// initial scores in `[0, 1]` and edge density `density`.
pub fn random_graph(rng: &mut ChaCha8Rng, max_nodes: usize, density: f64) -> RelationalGraph {
    let mut mentions = Vec::new();
    let mut nodes = Vec::new();
    let target = rng.gen_range(2..=max_nodes);
    while nodes.len() < target {
        let m = mentions.len();
        mentions.push(mention("d", m));
        let k = rng.gen_range(1..=5).min(target - nodes.len());
        for c in 0..k {
            let is_seed = rng.gen_bool(0.2);
            nodes.push(GraphNode {
                mention: m,
                candidate: eid(&format!("e{m}_{c}")),
                prior: rng.gen_range(0.0..1.0),
                r0: rng.gen_range(0.0..1.0),
                is_seed,
            });
        }
    }
    let mut edges = Vec::new();
    for i in 0..nodes.len() {
        for j in i + 1..nodes.len() {
            if nodes[i].mention != nodes[j].mention && rng.gen_bool(density) {
                edges.push((i, j, rng.gen_range(0.01..1.0)));
            }
        }
    }
    RelationalGraph::from_edges(mentions, nodes, &edges).unwrap()
}

/// Stationary point of the objective by a dense linear solve over the free
/// nodes: `(D_ii + mu) r_i - sum_{j free} W_ij r_j = mu r0_i + sum_{j seed} W_ij r_j`.
pub fn direct_solve(graph: &RelationalGraph, mu: f64) -> Vec<f64> {
    let n = graph.len();
    let free: Vec<usize> = (0..n).filter(|&i| !graph.nodes[i].is_seed).collect();
    let pos: BTreeMap<usize, usize> = free.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    let mut a = DMatrix::<f64>::zeros(free.len(), free.len());
    let mut b = DVector::<f64>::zeros(free.len());
    for (row, &i) in free.iter().enumerate() {
        let mut degree = 0.0;
        for j in 0..n {
            let w = graph.weight(i, j);
            if w == 0.0 {
                continue;
            }
            degree += w;
            match pos.get(&j) {
                Some(&col) => a[(row, col)] -= w,
                None => b[row] += w * graph.nodes[j].r0,
            }
        }
        a[(row, row)] += degree + mu;
        b[row] += mu * graph.nodes[i].r0;
    }
    let x = a.lu().solve(&b).expect("system is diagonally dominant");
    (0..n)
        .map(|i| match pos.get(&i) {
            Some(&k) => x[k],
            None => graph.nodes[i].r0,
        })
        .collect()
}

pub struct SolverCheck {
    pub graphs: usize,
    pub max_nodes_seen: usize,
    pub max_abs_diff: f64,
    pub max_objective_increase: f64,
    pub all_converged: bool,
    pub elapsed: Duration,
}

pub fn solver_check(graphs: usize, seed: u64) -> SolverCheck {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = ReguConfig::default();
    let mut check = SolverCheck {
        graphs,
        max_nodes_seen: 0,
        max_abs_diff: 0.0,
        max_objective_increase: f64::NEG_INFINITY,
        all_converged: true,
        elapsed: Duration::ZERO,
    };
    for _ in 0..graphs {
        let density = rng.gen_range(0.05..0.6);
        let graph = random_graph(&mut rng, 50, density);
        check.max_nodes_seen = check.max_nodes_seen.max(graph.len());
        let mut values = Vec::new();
        let solution = regularize_observed(&graph, &config, |_, r| {
            values.push(objective(&graph, r, config.mu).unwrap());
        })
        .unwrap();
        check.all_converged &= solution.converged;
        for w in values.windows(2) {
            check.max_objective_increase = check.max_objective_increase.max(w[1] - w[0]);
        }
        let exact = direct_solve(&graph, config.mu);
        for (x, y) in solution.scores.iter().zip(&exact) {
            check.max_abs_diff = check.max_abs_diff.max((x - y).abs());
        }
    }
    check.elapsed = start.elapsed();
    check
}

// ------------------------------------------------------------- relatedness

/// Ten entities with single-word labels so token bags are easy to recount.
pub fn ten_entity_kg() -> KnowledgeGraph {
    let rows: [(&str, &str, &[&str], &[(&str, &str)], &str, &[&str]); 10] = [
        ("e0", "alpha", &["team"], &[("league", "e1"), ("city", "e2")], "club football club", &["e1", "e2", "e3", "e4"]),
        ("e1", "beta", &["league"], &[("member", "e0"), ("member", "e3")], "football league", &["e0", "e3", "e5"]),
        ("e2", "gamma", &["city"], &[("country", "e9")], "harbor city market", &["e0", "e4", "e5", "e6", "e7"]),
        ("e3", "delta", &["team"], &[("league", "e1"), ("city", "e2")], "football club", &["e1", "e0"]),
        ("e4", "epsilon", &["person"], &[("team", "e0")], "player striker goal", &["e0"]),
        ("e5", "zeta", &["company"], &[("city", "e2")], "bank market stock", &["e2", "e6", "e7", "e8"]),
        ("e6", "eta", &["company"], &[("city", "e2"), ("partner", "e5")], "bank fund market", &["e5", "e7"]),
        ("e7", "theta", &["person"], &[("employer", "e5")], "investor fund", &[]),
        ("e8", "iota", &["company"], &[], "stock exchange", &["e5", "e6", "e7", "e2", "e0"]),
        ("e9", "kappa", &["country"], &[], "", &["e2", "e8", "e0", "e1", "e3", "e4", "e5", "e6", "e7"]),
    ];
    KnowledgeGraph::from_records(rows.iter().map(|(id, surface, types, facts, desc, incoming)| {
        let mut r = EntityRecord::new(eid(id), *surface);
        r.types = types.iter().map(|t| t.to_string()).collect();
        r.facts = facts.iter().map(|(rel, o)| (rel.to_string(), eid(o))).collect();
        r.description = desc.to_string();
        (r, incoming.iter().map(|s| eid(s)).collect::<BTreeSet<_>>())
    }))
    .unwrap()
}

/// Set-overlap relatedness recomputed by direct counting, base-2 logs.
pub fn brute_ngd(kg: &KnowledgeGraph, a: &EntityId, b: &EntityId) -> f64 {
    let ea: Vec<&EntityId> = kg.incoming_links(a).unwrap().iter().collect();
    let eb: Vec<&EntityId> = kg.incoming_links(b).unwrap().iter().collect();
    let overlap = ea.iter().filter(|x| eb.contains(x)).count();
    if overlap == 0 {
        return 0.0;
    }
    let (lo, hi) = (ea.len().min(eb.len()) as f64, ea.len().max(eb.len()) as f64);
    let n = kg.len() as f64;
    let denom = n.log2() - lo.log2();
    if denom <= 0.0 {
        return 1.0;
    }
    (1.0 - (hi.log2() - (overlap as f64).log2()) / denom).clamp(0.0, 1.0)
}

/// Token bag recounted from the record: neighbor surfaces, relation labels,
/// type labels and description words (all single lowercase words here).
fn brute_bag(kg: &KnowledgeGraph, id: &EntityId) -> Vec<String> {
    let r = kg.get(id).unwrap();
    let mut bag = Vec::new();
    for (rel, o) in &r.facts {
        bag.push(kg.get(o).unwrap().surface.to_lowercase());
        bag.push(rel.clone());
    }
    bag.extend(r.types.iter().cloned());
    bag.extend(r.description.split_whitespace().map(str::to_string));
    bag
}

pub fn brute_vsp(kg: &KnowledgeGraph, a: &EntityId, b: &EntityId) -> f64 {
    let bags: Vec<(EntityId, Vec<String>)> = kg.ids().map(|e| (e.clone(), brute_bag(kg, e))).collect();
    let vocab: BTreeSet<&String> = bags.iter().flat_map(|(_, b)| b).collect();
    let n = bags.len() as f64;
    let vector = |id: &EntityId| -> Vec<f64> {
        let bag = &bags.iter().find(|(e, _)| e == id).unwrap().1;
        let raw: Vec<f64> = vocab
            .iter()
            .map(|t| {
                let tf = bag.iter().filter(|x| x == t).count() as f64;
                let df = bags.iter().filter(|(_, b)| b.contains(t)).count() as f64;
                tf * (n / df).ln()
            })
            .collect();
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            raw
        } else {
            raw.iter().map(|x| x / norm).collect()
        }
    };
    let (va, vb) = (vector(a), vector(b));
    if va.iter().all(|x| *x == 0.0) || vb.iter().all(|x| *x == 0.0) {
        return 0.0;
    }
    va.iter().zip(&vb).map(|(x, y)| x * y).sum::<f64>().clamp(0.0, 1.0)
}

pub struct RelatednessCheck {
    pub pairs: usize,
    pub max_ngd_diff: f64,
    pub max_vsp_diff: f64,
}

pub fn relatedness_check() -> RelatednessCheck {
    let kg = ten_entity_kg();
    let model = build_tfidf(&kg).unwrap();
    let ids: Vec<EntityId> = kg.ids().cloned().collect();
    let mut check = RelatednessCheck {
        pairs: 0,
        max_ngd_diff: 0.0,
        max_vsp_diff: 0.0,
    };
    for a in &ids {
        for b in &ids {
            check.pairs += 1;
            let ngd = ngd_relatedness(&kg, a, b).unwrap();
            check.max_ngd_diff = check.max_ngd_diff.max((ngd - brute_ngd(&kg, a, b)).abs());
            let vsp = vsp_relatedness(&model, a, b).unwrap();
            check.max_vsp_diff = check.max_vsp_diff.max((vsp - brute_vsp(&kg, a, b)).abs());
        }
    }
    check
}

const WORDS: &[&str] = &["red", "blue", "green", "club", "bank", "city", "goal", "fund", "port", "star"];

/// Random graph with random link sets (empty and singleton sets included),
/// facts, types and descriptions.
pub fn random_kg(rng: &mut ChaCha8Rng) -> KnowledgeGraph {
    let n = rng.gen_range(1..=12);
    let ids: Vec<EntityId> = (0..n).map(|i| eid(&format!("x{i}"))).collect();
    let records: Vec<_> = ids
        .iter()
        .map(|id| {
            let mut r = EntityRecord::new(id.clone(), WORDS[rng.gen_range(0..WORDS.len())]);
            for _ in 0..rng.gen_range(0..3) {
                r.facts.push((WORDS[rng.gen_range(0..4)].to_string(), ids[rng.gen_range(0..n)].clone()));
            }
            for _ in 0..rng.gen_range(0..3) {
                r.types.insert(WORDS[rng.gen_range(0..WORDS.len())].to_string());
            }
            let words = rng.gen_range(0..4);
            r.description = (0..words).map(|_| WORDS[rng.gen_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ");
            let links: BTreeSet<EntityId> = match rng.gen_range(0..4) {
                0 => BTreeSet::new(),
                1 => [ids[rng.gen_range(0..n)].clone()].into(),
                _ => ids.iter().filter(|_| rng.gen_bool(0.5)).cloned().collect(),
            };
            (r, links)
        })
        .collect();
    KnowledgeGraph::from_records(records).unwrap()
}

/// Symmetry and range of both baselines over `cases` random graphs.
pub fn relatedness_sweep(cases: usize, seed: u64) -> (usize, bool, bool) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut symmetric = true;
    let mut in_range = true;
    let mut pairs = 0;
    for _ in 0..cases {
        let kg = random_kg(&mut rng);
        let model = build_tfidf(&kg).unwrap();
        let ids: Vec<EntityId> = kg.ids().cloned().collect();
        for a in &ids {
            for b in &ids {
                pairs += 1;
                let (n1, n2) = (ngd_relatedness(&kg, a, b).unwrap(), ngd_relatedness(&kg, b, a).unwrap());
                let (v1, v2) = (vsp_relatedness(&model, a, b).unwrap(), vsp_relatedness(&model, b, a).unwrap());
                symmetric &= n1.to_bits() == n2.to_bits() && v1.to_bits() == v2.to_bits();
                in_range &= [n1, v1].iter().all(|x| (0.0..=1.0).contains(x));
            }
        }
    }
    (pairs, symmetric, in_range)
}

// ---------------------------------------------------------- coherence flip

/// Mention `M` with candidates A (prior 0.6) and B (prior 0.4) next to an
/// unambiguous mention whose entity S is seeded. Returns the decision for
/// `M` and the regularized scores of A and B.
pub fn coherence_flip(sr_sb: f64, sr_sa: f64) -> (EntityId, f64, f64) {
    let cand = |e: &str, prior: f64| ScoredCandidate {
        entity: eid(e),
        prior,
        context: 0.0,
        r0: 0.5 * prior,
    };
    let groups = vec![
        MentionCandidates {
            mention: mention("doc", 0),
            candidates: vec![cand("A", 0.6), cand("B", 0.4)],
        },
        MentionCandidates {
            mention: mention("doc", 30),
            candidates: vec![cand("S", 1.0)],
        },
    ];
    let mut sr = TableRelatedness::new();
    sr.insert(eid("S"), eid("B"), sr_sb);
    sr.insert(eid("S"), eid("A"), sr_sa);
    let config = ReguConfig::default();
    let seeds = mine_seeds(&groups);
    let graph = build_graph(&groups, &seeds, &sr, &SameDocument, &config).unwrap();
    let solution = regularize(&graph, &config).unwrap();
    let decisions = decode(&graph, &solution.scores).unwrap();
    let score_of = |e: &str| {
        let i = graph.nodes.iter().position(|n| n.candidate == eid(e)).unwrap();
        solution.scores[i]
    };
    (decisions[0].chosen.clone().unwrap(), score_of("A"), score_of("B"))
}

// ---------------------------------------------------------------- synthetic

/// Small-network settings for the synthetic fixture.
pub fn synthetic_train_config() -> TrainConfig {
    TrainConfig {
        hidden1: 32,
        hidden2: 32,
        output_dim: 32,
        gamma: 10.0,
        learning_rate: 0.05,
        minibatch_size: 16,
        max_epochs: 20,
        validation_fraction: 0.1,
        patience: 3,
        seed: 7,
    }
}

pub struct SyntheticOutcome {
    pub fixture: SynthFixture,
    pub embeddings: DsrmEmbeddings,
    pub report: TrainingReport,
    pub train_time: Duration,
    pub intra_mean: f64,
    pub inter_mean: f64,
    pub dsrm_p_at_1: f64,
    pub prior_p_at_1: f64,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

/// Generates the fixture, trains on a single thread, and links the held-out
/// corpus with coherence and by prior alone.
pub fn run_synthetic(config: &TrainConfig) -> SyntheticOutcome {
    let fixture = generate(&SynthConfig::default()).unwrap();
    let dictionary = build_dictionary(&fixture.train);
    let miner = MinerConfig {
        seed: config.seed,
        ..MinerConfig::default()
    };
    let mut pairs = mine_pairs(&fixture.train, &dictionary, &miner);
    pairs.extend(mine_kg_pairs(&fixture.kg, miner.n_negatives, miner.seed));

    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let start = Instant::now();
    let (params, report) = pool.install(|| train(&fixture.kg, &pairs, config)).unwrap();
    let train_time = start.elapsed();

    let embeddings = DsrmEmbeddings::compute(&fixture.kg, &params).unwrap();
    let (intra, inter) = fixture.cluster_pairs();
    let intra_mean = mean(intra.iter().map(|(a, b)| embeddings.cosine(a, b).unwrap()));
    let inter_mean = mean(inter.iter().map(|(a, b)| embeddings.cosine(a, b).unwrap()));

    let content = build_tfidf(&fixture.kg).unwrap();
    let linker = Linker {
        dictionary: &dictionary,
        content: &content,
        relatedness: &embeddings,
        config: ReguConfig::default(),
    };
    let gold = gold_mentions(&fixture.heldout);
    let links = linker.link_corpus(&fixture.heldout).unwrap();
    let dsrm_p_at_1 = precision_at_1(&decisions_of(&links), &gold, Averaging::Micro).unwrap();
    let prior = link_by_prior(&dictionary, &fixture.heldout, ReguConfig::default().top_n);
    let prior_p_at_1 = precision_at_1(&decisions_of(&prior), &gold, Averaging::Micro).unwrap();

    SyntheticOutcome {
        fixture,
        embeddings,
        report,
        train_time,
        intra_mean,
        inter_mean,
        dsrm_p_at_1,
        prior_p_at_1,
    }
}

// --------------------------------------------------------------------- cli

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_dsrm"))
}

pub struct CliRun {
    pub code: i32,
    pub stdout: Vec<u8>,
    pub stderr: String,
}

pub fn run_cli(dir: &Path, args: &[&str]) -> CliRun {
    let out = Command::new(bin())
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs");
    CliRun {
        code: out.status.code().unwrap_or(-1),
        stdout: out.stdout,
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

/// Every subcommand of the pipeline on the shipped synthetic fixture, run in
/// `dir` with the given thread count. Returns `(subcommand, output bytes)`.
pub fn pipeline_outputs(dir: &Path, threads: &str) -> Vec<(String, Vec<u8>)> {
    let fx = fixture_dir().join("synth");
    let fx = fx.to_str().unwrap();
    let config = format!("{}/pipeline.toml", fx);
    let steps: Vec<(&str, Vec<String>, Option<&str>)> = vec![
        ("synth", vec!["synth".into(), "--out-dir".into(), "gen".into()], Some("gen/train.jsonl")),
        ("prune", vec!["prune".into(), "--kg".into(), format!("{fx}/kg.jsonl"), "--out".into(), "kg.jsonl".into(), "--min-incoming".into(), "1".into()], Some("kg.jsonl")),
        ("build-dict", vec!["build-dict".into(), "--corpus".into(), format!("{fx}/train.jsonl"), "--kg".into(), "kg.jsonl".into(), "--out".into(), "dict.tsv".into()], Some("dict.tsv")),
        ("mine-pairs", vec!["mine-pairs".into(), "--corpus".into(), format!("{fx}/train.jsonl"), "--kg".into(), "kg.jsonl".into(), "--dict".into(), "dict.tsv".into(), "--out".into(), "pairs.jsonl".into()], Some("pairs.jsonl")),
        ("train", vec!["train".into(), "--kg".into(), "kg.jsonl".into(), "--pairs".into(), "pairs.jsonl".into(), "--out".into(), "m.ckpt".into()], Some("m.ckpt")),
        ("train-report", vec![], Some("m.ckpt.report.json")),
        ("score", vec!["score".into(), "--measure".into(), "dsrm".into(), "--kg".into(), "kg.jsonl".into(), "--model".into(), "m.ckpt".into(), "--pairs".into(), format!("{fx}/score_pairs.tsv")], None),
        ("link", vec!["link".into(), "--kg".into(), "kg.jsonl".into(), "--model".into(), "m.ckpt".into(), "--docs".into(), format!("{fx}/heldout.jsonl"), "--dict".into(), "dict.tsv".into(), "--out".into(), "links.jsonl".into()], Some("links.jsonl")),
        ("evaluate", vec!["evaluate".into(), "--pred".into(), "links.jsonl".into(), "--gold".into(), format!("{fx}/heldout.jsonl"), "--report".into(), "report.json".into()], Some("report.json")),
        ("dump-features", vec!["dump-features".into(), "--kg".into(), "kg.jsonl".into(), "--out".into(), "features.jsonl".into()], Some("features.jsonl")),
    ];
    let mut outputs = Vec::new();
    for (name, args, file) in steps {
        let stdout = if args.is_empty() {
            Vec::new()
        } else {
            let mut full: Vec<&str> = args.iter().map(String::as_str).collect();
            full.extend(["--seed", "7", "--threads", threads, "--config", &config]);
            let run = run_cli(dir, &full);
            assert_eq!(run.code, 0, "{name} failed: {}", run.stderr);
            run.stdout
        };
        let bytes = match file {
            Some(f) => std::fs::read(dir.join(f)).unwrap(),
            None => stdout,
        };
        outputs.push((name.to_string(), bytes));
    }
    outputs
}
