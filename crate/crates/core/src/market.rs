//! Stock price series → thresholded market graph, diversification metrics
//! and repeated bisection into sub-portfolios.

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cutfinder::{self, EdaConfig};
use crate::qaoa::{self, CutStrategy, OptimizerConfig, QaoaError, WeightedGraph};
use crate::reconstruct::ExecutionBackend;
use crate::rng;
use crate::sim::Simulator;

pub const CSV_HEADER: [&str; 7] = ["date", "open", "high", "low", "close", "volume", "Name"];

/// Edge weights are rounded to multiples of this, so sums over any subset of
/// edges are exact in `f64` and the conservation identity holds bit-for-bit.
pub const WEIGHT_QUANTUM: f64 = 1.0 / 4_294_967_296.0;

const DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarketError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("malformed CSV: {0}")]
    MalformedCsv(String),
    #[error("no dates shared by all assets")]
    EmptyIntersection,
    #[error("series {0} is constant")]
    ConstantSeries(String),
    #[error("series has zero variance")]
    ZeroVariance,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("series needs at least 2 points, got {0}")]
    TooShort(usize),
    #[error("weights sum to {0}, expected 1")]
    WeightSumInvalid(f64),
    #[error("node {node} not in graph of {n} nodes")]
    UnknownNode { node: usize, n: usize },
    #[error("invalid market graph: {0}")]
    InvalidGraph(String),
    #[error(transparent)]
    Solver(#[from] QaoaError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssetSeries {
    pub ticker: String,
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    /// Sorted by ticker, aligned on the shared dates.
    pub series: Vec<AssetSeries>,
    /// Rows dropped for unparsable or non-positive prices, or duplicates.
    pub dropped_rows: usize,
}

pub fn ingest_csv(path: &Path) -> Result<Ingested, MarketError> {
    let f = std::fs::File::open(path)
        .map_err(|e| MarketError::Io { path: path.display().to_string(), message: e.to_string() })?;
    ingest_reader(f)
}

pub fn ingest_reader<R: Read>(r: R) -> Result<Ingested, MarketError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(r);
    let headers = rdr.headers().map_err(|e| MarketError::MalformedCsv(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(MarketError::MalformedCsv(format!(
            "expected header `{}`, got `{}`",
            CSV_HEADER.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut by_name: BTreeMap<String, BTreeMap<NaiveDate, f64>> = BTreeMap::new();
    let mut dropped = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| MarketError::MalformedCsv(e.to_string()))?;
        if rec.len() != CSV_HEADER.len() {
            return Err(MarketError::MalformedCsv(format!(
                "line {}: {} fields",
                rec.position().map_or(0, |p| p.line()),
                rec.len()
            )));
        }
        let date = NaiveDate::parse_from_str(&rec[0], DATE_FORMAT);
        let close = rec[4].parse::<f64>();
        let name = &rec[6];
        match (date, close) {
            (Ok(d), Ok(c)) if c.is_finite() && c > 0.0 && !name.is_empty() => {
                // first occurrence of a (ticker, date) wins
                match by_name.entry(name.to_string()).or_default().entry(d) {
                    Entry::Occupied(_) => dropped += 1,
                    Entry::Vacant(v) => {
                        v.insert(c);
                    }
                }
            }
            _ => dropped += 1,
        }
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} rows with unparsable or invalid values");
    }
    if by_name.is_empty() {
        return Err(MarketError::EmptyIntersection);
    }
    let mut shared: Option<BTreeSet<NaiveDate>> = None;
    for m in by_name.values() {
        let keys: BTreeSet<NaiveDate> = m.keys().copied().collect();
        shared = Some(match shared {
            None => keys,
            Some(s) => s.intersection(&keys).copied().collect(),
        });
    }
    let dates: Vec<NaiveDate> = shared.unwrap_or_default().into_iter().collect();
    if dates.is_empty() {
        return Err(MarketError::EmptyIntersection);
    }
    if dates.len() < 2 {
        return Err(MarketError::TooShort(dates.len()));
    }
    let series = by_name
        .into_iter()
        .map(|(ticker, m)| AssetSeries { values: dates.iter().map(|d| m[d]).collect(), dates: dates.clone(), ticker })
        .collect();
    Ok(Ingested { series, dropped_rows: dropped })
}

/// Min–max scaling to `[0, 1]`.
pub fn normalize(x: &[f64]) -> Result<Vec<f64>, MarketError> {
    let (lo, hi) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    if x.is_empty() || hi <= lo {
        return Err(MarketError::ConstantSeries(format!("{x:?}").chars().take(40).collect()));
    }
    Ok(x.iter().map(|v| (v - lo) / (hi - lo)).collect())
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Zero mean, unit population standard deviation.
pub fn standardize(x: &[f64]) -> Result<Vec<f64>, MarketError> {
    if x.len() < 2 {
        return Err(MarketError::TooShort(x.len()));
    }
    let mu = mean(x);
    let var = x.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / x.len() as f64;
    if var <= 0.0 {
        return Err(MarketError::ZeroVariance);
    }
    let sd = var.sqrt();
    Ok(x.iter().map(|v| (v - mu) / sd).collect())
}

/// `r = (Σxy − n·μx·μy) / √((Σx² − n·μx²)(Σy² − n·μy²))`, clamped to `[−1, 1]`.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, MarketError> {
    if x.len() != y.len() {
        return Err(MarketError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(MarketError::TooShort(x.len()));
    }
    let n = x.len() as f64;
    let (mx, my) = (mean(x), mean(y));
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() - n * mx * my;
    let sxx: f64 = x.iter().map(|a| a * a).sum::<f64>() - n * mx * mx;
    let syy: f64 = y.iter().map(|b| b * b).sum::<f64>() - n * my * my;
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(MarketError::ZeroVariance);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Population covariance. With `standardized`, every series is first
/// normalized and standardized, which makes the result a correlation matrix.
pub fn covariance_matrix(series: &[Vec<f64>], standardized: bool) -> Result<Vec<Vec<f64>>, MarketError> {
    let len = series.first().map_or(0, |s| s.len());
    if let Some(bad) = series.iter().find(|s| s.len() != len) {
        return Err(MarketError::LengthMismatch(len, bad.len()));
    }
    let data: Vec<Vec<f64>> = if standardized {
        series.iter().map(|s| standardize(&normalize(s)?)).collect::<Result<_, _>>()?
    } else {
        series.to_vec()
    };
    if len == 0 {
        return Ok(vec![vec![0.0; data.len()]; data.len()]);
    }
    let centered: Vec<Vec<f64>> = data
        .iter()
        .map(|s| {
            let mu = mean(s);
            s.iter().map(|v| v - mu).collect()
        })
        .collect();
    let k = centered.len();
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| (i..k).map(move |j| (i, j))).collect();
    let vals: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum::<f64>() / len as f64)
        .collect();
    let mut cov = vec![vec![0.0; k]; k];
    for (&(i, j), v) in pairs.iter().zip(vals) {
        cov[i][j] = v;
        cov[j][i] = v;
    }
    Ok(cov)
}

pub fn quantize(w: f64) -> f64 {
    (w / WEIGHT_QUANTUM).round() * WEIGHT_QUANTUM
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketGraph {
    pub tickers: Vec<String>,
    pub alpha: f64,
    pub graph: WeightedGraph,
}

#[derive(Serialize, Deserialize)]
struct MarketGraphRepr {
    tickers: Vec<String>,
    /// `null` encodes −∞.
    alpha: Option<f64>,
    edges: Vec<(usize, usize, f64)>,
}

impl MarketGraph {
    pub fn to_json(&self) -> String {
        let repr = MarketGraphRepr {
            tickers: self.tickers.clone(),
            alpha: self.alpha.is_finite().then_some(self.alpha),
            edges: self.graph.edges().to_vec(),
        };
        serde_json::to_string(&repr).expect("market graph serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, MarketError> {
        let r: MarketGraphRepr = serde_json::from_str(s).map_err(|e| MarketError::InvalidGraph(e.to_string()))?;
        let graph = WeightedGraph::new(r.tickers.len(), r.edges)?;
        Ok(MarketGraph { tickers: r.tickers, alpha: r.alpha.unwrap_or(f64::NEG_INFINITY), graph })
    }
}

/// Edge `(i, j)` weighted by `cov[i][j]` whenever it exceeds `alpha`.
pub fn build_market_graph(cov: &[Vec<f64>], alpha: f64, tickers: &[String]) -> MarketGraph {
    let n = cov.len();
    let mut g = WeightedGraph::new(n, []).expect("empty graph");
    for i in 0..n {
        for j in i + 1..n {
            if cov[i][j] > alpha {
                g.add_edge(i, j, quantize(cov[i][j])).expect("finite covariance");
            }
        }
    }
    MarketGraph { tickers: tickers.to_vec(), alpha, graph: g }
}

/// `Σ_i w_i R_i`.
pub fn portfolio_return(weights: &[f64], returns: &[f64]) -> Result<f64, MarketError> {
    check_weights(weights, returns.len())?;
    Ok(weights.iter().zip(returns).map(|(w, r)| w * r).sum())
}

/// `Σ_i Σ_j w_i w_j Cov_ij`.
pub fn portfolio_variance(weights: &[f64], cov: &[Vec<f64>]) -> Result<f64, MarketError> {
    check_weights(weights, cov.len())?;
    let mut v = 0.0;
    for (i, wi) in weights.iter().enumerate() {
        for (j, wj) in weights.iter().enumerate() {
            v += wi * wj * cov[i][j];
        }
    }
    Ok(v)
}

fn check_weights(weights: &[f64], n: usize) -> Result<(), MarketError> {
    if weights.len() != n {
        return Err(MarketError::LengthMismatch(weights.len(), n));
    }
    let s: f64 = weights.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(MarketError::WeightSumInvalid(s));
    }
    Ok(())
}

/// Total weight of edges with both endpoints in `part`.
pub fn acum(g: &WeightedGraph, part: &[usize]) -> Result<f64, MarketError> {
    let mut inside = vec![false; g.n()];
    for &v in part {
        if v >= g.n() {
            return Err(MarketError::UnknownNode { node: v, n: g.n() });
        }
        inside[v] = true;
    }
    Ok(g.edges().iter().filter(|(i, j, _)| inside[*i] && inside[*j]).map(|e| e.2).fold(0.0, |acc, w| acc + w))
}

/// Anything that proposes a Max-Cut bipartition.
pub trait MaxCutSolver {
    fn solve(&self, g: &WeightedGraph) -> Result<Vec<bool>, MarketError>;
}

/// Exhaustive search with node 0 pinned to side `false`; the first optimum
/// in index order wins.
#[derive(Debug, Clone, Copy, Default)]
pub struct BruteForceMaxCut;

pub const BRUTE_FORCE_MAX_NODES: usize = 24;

impl MaxCutSolver for BruteForceMaxCut {
    fn solve(&self, g: &WeightedGraph) -> Result<Vec<bool>, MarketError> {
        let n = g.n();
        if n > BRUTE_FORCE_MAX_NODES {
            return Err(MarketError::InvalidGraph(format!("{n} nodes is too many for exhaustive search")));
        }
        if n == 0 {
            return Ok(Vec::new());
        }
        let mut best = (f64::NEG_INFINITY, 0usize);
        for mask in 0..1usize << (n - 1) {
            let x = qaoa::bits_of(mask << 1, n);
            let v = qaoa::cut_value(g, &x)?;
            if v > best.0 {
                best = (v, mask << 1);
            }
        }
        Ok(qaoa::bits_of(best.1, n))
    }
}

/// Best of `samples` uniform random assignments.
#[derive(Debug, Clone, Copy)]
pub struct RandomMaxCut {
    pub samples: usize,
    pub seed: u64,
}

impl MaxCutSolver for RandomMaxCut {
    fn solve(&self, g: &WeightedGraph) -> Result<Vec<bool>, MarketError> {
        let mut r = rng::stream(self.seed, 0x7a4d);
        let mut best: Option<(f64, Vec<bool>)> = None;
        for _ in 0..self.samples.max(1) {
            let x: Vec<bool> = (0..g.n()).map(|_| r.random()).collect();
            let v = qaoa::cut_value(g, &x)?;
            if best.as_ref().is_none_or(|b| v > b.0) {
                best = Some((v, x));
            }
        }
        Ok(best.map(|b| b.1).unwrap_or_default())
    }
}

/// Estimation-of-distribution search over two labels.
#[derive(Debug, Clone)]
pub struct EdaMaxCut {
    pub cfg: EdaConfig,
}

impl MaxCutSolver for EdaMaxCut {
    fn solve(&self, g: &WeightedGraph) -> Result<Vec<bool>, MarketError> {
        if g.n() < 2 {
            return Ok(vec![false; g.n()]);
        }
        let objective = |a: &[usize]| {
            let x: Vec<bool> = a.iter().map(|&l| l == 1).collect();
            -qaoa::cut_value(g, &x).expect("length matches")
        };
        let best = cutfinder::eda_minimize(objective, g.n(), 2, &self.cfg);
        Ok(best.iter().map(|&l| l == 1).collect())
    }
}

/// Optimized QAOA ansatz, read out as its most probable basis state.
#[derive(Debug, Clone)]
pub struct QaoaMaxCut {
    pub p: usize,
    pub backend: ExecutionBackend,
    pub cut: CutStrategy,
    pub cfg: OptimizerConfig,
}

impl MaxCutSolver for QaoaMaxCut {
    fn solve(&self, g: &WeightedGraph) -> Result<Vec<bool>, MarketError> {
        if g.n() == 0 {
            return Ok(Vec::new());
        }
        let run = qaoa::optimize(g, self.p, &self.backend, &self.cut, &self.cfg)?;
        Ok(qaoa::extract_solution(g, &run.params, &Simulator::with_cap(self.backend.qubit_cap))?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BisectionNode {
    /// Node indices of the full graph, ascending.
    pub nodes: Vec<usize>,
    pub split: Option<Split>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Split {
    pub cut_value: f64,
    /// Acum of the two children.
    pub acum: [f64; 2],
    pub children: Box<[BisectionNode; 2]>,
}

impl BisectionNode {
    pub fn leaves(&self) -> Vec<&[usize]> {
        match &self.split {
            None => vec![&self.nodes],
            Some(s) => s.children.iter().flat_map(|c| c.leaves()).collect(),
        }
    }

    /// Every split in pre-order.
    pub fn splits(&self) -> Vec<&Split> {
        match &self.split {
            None => Vec::new(),
            Some(s) => std::iter::once(s).chain(s.children.iter().flat_map(|c| c.splits())).collect(),
        }
    }
}

/// Splits `g` with `solver`, then each side again, `depth` levels deep.
/// Parts with fewer than two nodes are not split further.
pub fn repeated_bisection(g: &WeightedGraph, depth: usize, solver: &dyn MaxCutSolver) -> Result<BisectionNode, MarketError> {
    if depth == 0 {
        return Err(MarketError::InvalidGraph("bisection depth must be at least 1".into()));
    }
    bisect(g, (0..g.n()).collect(), depth, solver)
}

fn bisect(g: &WeightedGraph, nodes: Vec<usize>, depth: usize, solver: &dyn MaxCutSolver) -> Result<BisectionNode, MarketError> {
    if depth == 0 || nodes.len() < 2 {
        return Ok(BisectionNode { nodes, split: None });
    }
    let sub = g.induced(&nodes);
    let x = solver.solve(&sub)?;
    let cut_value = qaoa::cut_value(&sub, &x)?;
    let a: Vec<usize> = nodes.iter().zip(&x).filter(|(_, s)| !**s).map(|(v, _)| *v).collect();
    let b: Vec<usize> = nodes.iter().zip(&x).filter(|(_, s)| **s).map(|(v, _)| *v).collect();
    let acum_pair = [acum(g, &a)?, acum(g, &b)?];
    let children = Box::new([bisect(g, a, depth - 1, solver)?, bisect(g, b, depth - 1, solver)?]);
    Ok(BisectionNode { nodes, split: Some(Split { cut_value, acum: acum_pair, children }) })
}

/// Parameters of the synthetic price generator: a market factor plus one
/// factor per sector driving correlated geometric random walks.
#[derive(Debug, Clone)]
pub struct SyntheticMarket {
    pub n_assets: usize,
    pub n_days: usize,
    pub sectors: usize,
    pub seed: u64,
}

impl Default for SyntheticMarket {
    fn default() -> Self {
        SyntheticMarket { n_assets: 16, n_days: 250, sectors: 4, seed: 2024 }
    }
}

impl SyntheticMarket {
    pub fn ticker(i: usize) -> String {
        format!("SYN{i:02}")
    }

    /// Prices in the `date,open,high,low,close,volume,Name` layout, one
    /// asset after another, on consecutive business days.
    pub fn to_csv(&self) -> String {
        let mut r = rng::stream(self.seed, 0x3a7e);
        let std = Normal::new(0.0, 1.0).expect("unit normal");
        let start = NaiveDate::from_ymd_opt(2013, 2, 8).expect("valid date");
        let dates: Vec<NaiveDate> = start
            .iter_days()
            .filter(|d| !matches!(chrono::Datelike::weekday(d), chrono::Weekday::Sat | chrono::Weekday::Sun))
            .take(self.n_days)
            .collect();
        let sectors = self.sectors.max(1);
        let market: Vec<f64> = (0..self.n_days).map(|_| std.sample(&mut r)).collect();
        let sector: Vec<Vec<f64>> =
            (0..sectors).map(|_| (0..self.n_days).map(|_| std.sample(&mut r)).collect()).collect();

        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER).expect("in-memory write");
        for i in 0..self.n_assets {
            let s = i % sectors;
            let b_market = 0.002 + 0.002 * r.random::<f64>();
            let b_sector = 0.010 + 0.006 * r.random::<f64>();
            let idio = 0.008 + 0.008 * r.random::<f64>();
            let mut log_price = (20.0 + 180.0 * r.random::<f64>()).ln();
            for t in 0..self.n_days {
                log_price += 0.0002 + b_market * market[t] + b_sector * sector[s][t] + idio * std.sample(&mut r);
                let close = log_price.exp();
                let open = close * (1.0 + 0.003 * std.sample(&mut r));
                let high = open.max(close) * (1.0 + 0.004 * r.random::<f64>());
                let low = open.min(close) * (1.0 - 0.004 * r.random::<f64>());
                let volume = 100_000 + (r.random::<f64>() * 5_000_000.0) as u64;
                w.write_record([
                    dates[t].format(DATE_FORMAT).to_string(),
                    format!("{open:.4}"),
                    format!("{high:.4}"),
                    format!("{low:.4}"),
                    format!("{close:.4}"),
                    volume.to_string(),
                    Self::ticker(i),
                ])
                .expect("in-memory write");
            }
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("ascii")
    }
}

/// Ingested series → standardized covariance → market graph at `alpha`.
pub fn market_graph_from_series(series: &[AssetSeries], alpha: f64) -> Result<MarketGraph, MarketError> {
    let values: Vec<Vec<f64>> = series.iter().map(|s| s.values.clone()).collect();
    for s in series {
        if normalize(&s.values).is_err() {
            return Err(MarketError::ConstantSeries(s.ticker.clone()));
        }
    }
    let cov = covariance_matrix(&values, true)?;
    let tickers: Vec<String> = series.iter().map(|s| s.ticker.clone()).collect();
    Ok(build_market_graph(&cov, alpha, &tickers))
}
