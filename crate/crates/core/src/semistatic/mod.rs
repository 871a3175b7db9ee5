//! Robust superhedging on a finite tree with finitely many priced static
//! options.
//!
//! The dual maximises the claim's expectation over martingale measures on
//! paths that reprice the statics; the primal minimises the cost of a static
//! portfolio plus dynamic stock trading that dominates the claim on every
//! path. On a finite tree both are linear programs with equal values. Only
//! true martingales exist on a finite tree, so strict local martingales play
//! no role here.

mod simplex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::payoff::PayoffFn;
use simplex::{minimize, LpOutcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub price: f64,
    #[serde(default)]
    pub children: Vec<TreeNode>,
}

/// A recombination-free price tree rooted at `s0`; every leaf sits at the
/// same depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeMarket {
    pub s0: f64,
    pub children: Vec<TreeNode>,
}

/// A non-leaf node, where the dynamic position is chosen.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TradingNode {
    pub depth: usize,
    pub price: f64,
    /// Index of the first path through this node.
    pub first_path: usize,
}

/// Paths of a tree and the trading nodes each one visits.
#[derive(Debug, Clone)]
struct Layout {
    paths: Vec<Vec<f64>>,
    nodes: Vec<TradingNode>,
    /// `visits[p][k]`: trading node of path `p` at step `k`.
    visits: Vec<Vec<usize>>,
}

impl TreeMarket {
    /// One-step tree.
    pub fn one_step(s0: f64, prices: &[f64]) -> Self {
        TreeMarket { s0, children: prices.iter().map(|&price| TreeNode { price, children: vec![] }).collect() }
    }

    pub fn n_steps(&self) -> usize {
        fn depth(n: &TreeNode) -> usize {
            n.children.first().map_or(0, |c| 1 + depth(c))
        }
        self.children.first().map_or(0, |c| 1 + depth(c))
    }

    pub fn validate(&self) -> Result<()> {
        fn walk(n: &TreeNode, left: usize) -> Result<()> {
            if !(n.price.is_finite() && n.price > 0.0) {
                return Err(Error::InvalidParameter(format!("tree price {} is not positive", n.price)));
            }
            if (left == 0) != n.children.is_empty() {
                return Err(Error::InvalidParameter("all leaves must sit at the same depth".into()));
            }
            n.children.iter().try_for_each(|c| walk(c, left - 1))
        }
        let root = TreeNode { price: self.s0, children: self.children.clone() };
        let n = self.n_steps();
        if n == 0 {
            return Err(Error::InvalidParameter("tree needs at least one step".into()));
        }
        walk(&root, n)
    }

    fn layout(&self) -> Layout {
        fn walk(n: &TreeNode, depth: usize, prefix: &mut Vec<f64>, hist: &mut Vec<usize>, out: &mut Layout) {
            prefix.push(n.price);
            if n.children.is_empty() {
                out.paths.push(prefix.clone());
                out.visits.push(hist.clone());
            } else {
                out.nodes.push(TradingNode { depth, price: n.price, first_path: out.paths.len() });
                hist.push(out.nodes.len() - 1);
                for c in &n.children {
                    walk(c, depth + 1, prefix, hist, out);
                }
                hist.pop();
            }
            prefix.pop();
        }
        let mut out = Layout { paths: vec![], nodes: vec![], visits: vec![] };
        let root = TreeNode { price: self.s0, children: self.children.clone() };
        walk(&root, 0, &mut vec![], &mut vec![], &mut out);
        out
    }

    /// Every root-to-leaf price sequence, depth first.
    pub fn paths(&self) -> Vec<Vec<f64>> {
        self.layout().paths
    }
}

/// A claim on the whole price path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PathClaim {
    /// Payoff of the final price.
    Terminal { payoff: PayoffFn<f64> },
    /// `(max_k S_k - K)+`.
    MaxCall {
        #[serde(rename = "K")]
        strike: f64,
    },
    /// One value per path, in [`TreeMarket::paths`] order.
    Values { values: Vec<f64> },
}

impl PathClaim {
    fn evaluate(&self, paths: &[Vec<f64>]) -> Result<Vec<f64>> {
        let v: Vec<f64> = match self {
            PathClaim::Terminal { payoff } => {
                payoff.validate()?;
                paths.iter().map(|p| payoff.eval(*p.last().unwrap())).collect::<Result<_>>()?
            }
            PathClaim::MaxCall { strike } => paths
                .iter()
                .map(|p| (p.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - strike).max(0.0))
                .collect(),
            PathClaim::Values { values } => {
                if values.len() != paths.len() {
                    return Err(Error::Mismatch(format!("{} values for {} paths", values.len(), paths.len())));
                }
                values.clone()
            }
        };
        if let Some(x) = v.iter().find(|x| !x.is_finite()) {
            return Err(Error::Domain(format!("claim value {x} is not finite")));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticInstrument {
    pub payoff: PathClaim,
    pub price: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    /// No martingale measure reprices the statics: they admit arbitrage.
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodePosition {
    #[serde(flatten)]
    pub node: TradingNode,
    pub shares: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LpReport {
    pub status: LpStatus,
    pub dual_value: Option<f64>,
    pub primal_value: Option<f64>,
    /// Cash `c_0` followed by the static holdings `c_1..c_N`.
    pub statics: Vec<f64>,
    pub strategy: Vec<NodePosition>,
    /// Optimal path measure, in [`TreeMarket::paths`] order.
    pub measure: Vec<f64>,
}

impl LpReport {
    fn empty(status: LpStatus) -> Self {
        LpReport { status, dual_value: None, primal_value: None, statics: vec![], strategy: vec![], measure: vec![] }
    }
}

struct Problem {
    layout: Layout,
    claim: Vec<f64>,
    statics: Vec<Vec<f64>>,
    prices: Vec<f64>,
}

impl Problem {
    fn new(tree: &TreeMarket, claim: &PathClaim, statics: &[StaticInstrument]) -> Result<Self> {
        tree.validate()?;
        let layout = tree.layout();
        let claim = claim.evaluate(&layout.paths)?;
        let values = statics.iter().map(|s| s.payoff.evaluate(&layout.paths)).collect::<Result<Vec<_>>>()?;
        Ok(Problem { layout, claim, statics: values, prices: statics.iter().map(|s| s.price).collect() })
    }

    /// Price move after trading node `k` of path `p`.
    fn step(&self, p: usize, k: usize) -> f64 {
        self.layout.paths[p][k + 1] - self.layout.paths[p][k]
    }

    /// Rows `sum q = 1`, martingale condition per trading node, repricing per static.
    fn measure_constraints(&self, prices: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let n_paths = self.layout.paths.len();
        let mut a = vec![vec![1.0; n_paths]];
        let mut b = vec![1.0];
        let mut mart = vec![vec![0.0; n_paths]; self.layout.nodes.len()];
        for (p, visits) in self.layout.visits.iter().enumerate() {
            for (k, &node) in visits.iter().enumerate() {
                mart[node][p] = self.step(p, k);
            }
        }
        a.extend(mart);
        b.extend(std::iter::repeat_n(0.0, self.layout.nodes.len()));
        for (h, &price) in self.statics.iter().zip(prices) {
            a.push(h.clone());
            b.push(price);
        }
        (a, b)
    }
}

/// `sup E_q[H]` over martingale path measures repricing every static.
pub fn dual_price(tree: &TreeMarket, claim: &PathClaim, statics: &[StaticInstrument]) -> Result<LpReport> {
    let pb = Problem::new(tree, claim, statics)?;
    let (a, b) = pb.measure_constraints(&pb.prices);
    let cost: Vec<f64> = pb.claim.iter().map(|h| -h).collect();
    Ok(match minimize(&cost, &a, &b)? {
        LpOutcome::Optimal { x, value } => LpReport {
            dual_value: Some(-value),
            measure: x,
            ..LpReport::empty(LpStatus::Optimal)
        },
        LpOutcome::Infeasible => LpReport::empty(LpStatus::Infeasible),
        LpOutcome::Unbounded => LpReport::empty(LpStatus::Unbounded),
    })
}

/// Cheapest `c_0 + sum c_i price_i` whose portfolio with stock trading
/// dominates the claim on every path.
pub fn primal_superhedge(tree: &TreeMarket, claim: &PathClaim, statics: &[StaticInstrument]) -> Result<LpReport> {
    let pb = Problem::new(tree, claim, statics)?;
    let (n_paths, n_static, n_nodes) = (pb.layout.paths.len(), pb.statics.len(), pb.layout.nodes.len());
    // free variables split as x+ - x-: cash, statics, node positions; then path slacks
    let n_free = 1 + n_static + n_nodes;
    let n_vars = 2 * n_free + n_paths;
    let mut cost = vec![0.0; n_vars];
    cost[0] = 1.0;
    cost[1] = -1.0;
    for (i, &price) in pb.prices.iter().enumerate() {
        cost[2 * (1 + i)] = price;
        cost[2 * (1 + i) + 1] = -price;
    }
    let mut a = vec![vec![0.0; n_vars]; n_paths];
    for (p, row) in a.iter_mut().enumerate() {
        let mut put = |var: usize, coef: f64| {
            row[2 * var] += coef;
            row[2 * var + 1] -= coef;
        };
        put(0, 1.0);
        for i in 0..n_static {
            put(1 + i, pb.statics[i][p]);
        }
        for (k, &node) in pb.layout.visits[p].iter().enumerate() {
            put(1 + n_static + node, pb.step(p, k));
        }
        row[2 * n_free + p] = -1.0;
    }
    Ok(match minimize(&cost, &a, &pb.claim)? {
        LpOutcome::Optimal { x, value } => {
            let free = |v: usize| x[2 * v] - x[2 * v + 1];
            LpReport {
                primal_value: Some(value),
                statics: (0..=n_static).map(free).collect(),
                strategy: pb
                    .layout
                    .nodes
                    .iter()
                    .enumerate()
                    .map(|(k, node)| NodePosition { node: node.clone(), shares: free(1 + n_static + k) })
                    .collect(),
                ..LpReport::empty(LpStatus::Optimal)
            }
        }
        LpOutcome::Infeasible => LpReport::empty(LpStatus::Infeasible),
        LpOutcome::Unbounded => LpReport::empty(LpStatus::Unbounded),
    })
}

/// Both programs; the report carries both values and all optimisers.
pub fn robust_price(tree: &TreeMarket, claim: &PathClaim, statics: &[StaticInstrument]) -> Result<LpReport> {
    let (dual, primal) = rayon::join(|| dual_price(tree, claim, statics), || primal_superhedge(tree, claim, statics));
    let (dual, primal) = (dual?, primal?);
    let status = match (dual.status, primal.status) {
        (LpStatus::Optimal, LpStatus::Optimal) => LpStatus::Optimal,
        (LpStatus::Infeasible, _) | (_, LpStatus::Unbounded) => LpStatus::Infeasible,
        (d, _) => d,
    };
    Ok(LpReport { status, measure: dual.measure, dual_value: dual.dual_value, ..primal })
}

/// Whether every static price vector within `eps` (in each coordinate) is
/// attained by some martingale measure. Checks the `2^N` corners; convexity
/// covers the rest of the box.
pub fn feasibility_ball(tree: &TreeMarket, statics: &[StaticInstrument], eps: f64) -> Result<bool> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter("eps must be positive".into()));
    }
    if statics.len() > 20 {
        return Err(Error::InvalidParameter("too many statics to enumerate corners".into()));
    }
    let claim = PathClaim::Values { values: vec![0.0; tree.paths().len()] };
    let pb = Problem::new(tree, &claim, statics)?;
    let zero = vec![0.0; pb.layout.paths.len()];
    let results = (0..1usize << statics.len())
        .into_par_iter()
        .map(|corner| {
            let y: Vec<f64> = pb
                .prices
                .iter()
                .enumerate()
                .map(|(i, p)| if corner >> i & 1 == 1 { p + eps } else { p - eps })
                .collect();
            let (a, b) = pb.measure_constraints(&y);
            Ok(matches!(minimize(&zero, &a, &b)?, LpOutcome::Optimal { .. }))
        })
        .collect::<Result<Vec<bool>>>()?;
    Ok(results.into_iter().all(|ok| ok))
}

/// A random tree of the given depth in which every node has between 2 and
/// `max_children` children straddling its price, so a martingale measure
/// always exists.
pub fn random_tree(seed: u64, depth: usize, max_children: usize) -> TreeMarket {
    fn grow(rng: &mut ChaCha8Rng, price: f64, left: usize, max_children: usize) -> Vec<TreeNode> {
        if left == 0 {
            return vec![];
        }
        let k = rng.random_range(2..=max_children.max(2));
        (0..k)
            .map(|i| {
                let u: f64 = rng.random_range(0.05..0.4);
                let p = match i {
                    0 => price * (1.0 - u),
                    1 => price * (1.0 + u),
                    _ => price * rng.random_range(0.6..1.4),
                };
                let p = (p * 100.0).round() / 100.0;
                TreeNode { price: p, children: grow(rng, p, left - 1, max_children) }
            })
            .collect()
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    TreeMarket { s0: 100.0, children: grow(&mut rng, 100.0, depth.max(1), max_children) }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(k: f64) -> PathClaim {
        PathClaim::Terminal { payoff: PayoffFn::call(k, 1.0, 0.0).unwrap() }
    }

    #[test]
    fn binomial_call() {
        let tree = TreeMarket::one_step(100.0, &[80.0, 120.0]);
        let rep = robust_price(&tree, &call(100.0), &[]).unwrap();
        assert_eq!(rep.status, LpStatus::Optimal);
        assert!((rep.dual_value.unwrap() - 10.0).abs() < 1e-12);
        assert!((rep.primal_value.unwrap() - 10.0).abs() < 1e-12);
        assert!((rep.strategy[0].shares - 0.5).abs() < 1e-12);
        assert_eq!(rep.measure, vec![0.5, 0.5]);
    }

    #[test]
    fn trinomial_call_and_constant_claim() {
        let tree = TreeMarket::one_step(100.0, &[80.0, 100.0, 130.0]);
        let rep = robust_price(&tree, &call(100.0), &[]).unwrap();
        assert!((rep.dual_value.unwrap() - 12.0).abs() < 1e-12);
        assert!((rep.primal_value.unwrap() - 12.0).abs() < 1e-12);
        let seven = PathClaim::Values { values: vec![7.0; 3] };
        let rep = primal_superhedge(&tree, &seven, &[]).unwrap();
        assert!((rep.primal_value.unwrap() - 7.0).abs() < 1e-12);
        assert!(rep.strategy[0].shares.abs() < 1e-12);
    }

    #[test]
    fn pricing_the_claim_itself_pins_the_value() {
        let tree = TreeMarket::one_step(100.0, &[80.0, 100.0, 130.0]);
        let statics = [StaticInstrument { payoff: call(100.0), price: 7.5 }];
        let rep = robust_price(&tree, &call(100.0), &statics).unwrap();
        assert!((rep.dual_value.unwrap() - 7.5).abs() < 1e-10);
        assert!((rep.primal_value.unwrap() - 7.5).abs() < 1e-10);
    }

    #[test]
    fn arbitrage_statics_are_reported() {
        let tree = TreeMarket::one_step(100.0, &[80.0, 120.0]);
        let statics = [StaticInstrument { payoff: call(100.0), price: 11.0 }];
        let rep = robust_price(&tree, &call(100.0), &statics).unwrap();
        assert_eq!(rep.status, LpStatus::Infeasible);
        assert_eq!(primal_superhedge(&tree, &call(100.0), &statics).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn feasibility_ball_examples() {
        let bin = TreeMarket::one_step(100.0, &[80.0, 120.0]);
        let tri = TreeMarket::one_step(100.0, &[80.0, 100.0, 130.0]);
        let h = [StaticInstrument { payoff: call(100.0), price: 10.0 }];
        assert!(!feasibility_ball(&bin, &h, 0.5).unwrap());
        assert!(feasibility_ball(&tri, &h, 1.0).unwrap());
        assert!(feasibility_ball(&bin, &[], 3.0).unwrap());
    }

    #[test]
    fn path_dependent_claim() {
        let tree = TreeMarket {
            s0: 100.0,
            children: vec![
                TreeNode { price: 120.0, children: TreeMarket::one_step(0.0, &[100.0, 140.0]).children },
                TreeNode { price: 80.0, children: TreeMarket::one_step(0.0, &[60.0, 100.0]).children },
            ],
        };
        let rep = robust_price(&tree, &PathClaim::MaxCall { strike: 100.0 }, &[]).unwrap();
        // binomial: (0.5 * 20 + 0.5 * 40) / 2 on the up branch
        assert!((rep.dual_value.unwrap() - 15.0).abs() < 1e-12);
        assert!((rep.primal_value.unwrap() - 15.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_ragged_trees() {
        let tree = TreeMarket {
            s0: 100.0,
            children: vec![TreeNode { price: 90.0, children: vec![] }, TreeNode {
                price: 110.0,
                children: TreeMarket::one_step(0.0, &[100.0, 120.0]).children,
            }],
        };
        assert!(tree.validate().is_err());
        assert!(random_tree(3, 3, 4).validate().is_ok());
    }
}
