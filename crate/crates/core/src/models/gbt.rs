//! Second-order gradient-boosted trees for logistic loss with exact greedy
//! split search.

use serde::{Deserialize, Serialize};

use super::{clamp_prob, log_loss, sigmoid, Predictor};
use crate::dataset::Matrix;
use crate::error::{Error, Result};
use crate::par;

const BASE_SCORE_LIMIT: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GbtConfig {
    pub n_trees: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub lambda: f64,
    pub gamma: f64,
    pub min_child_weight: f64,
    pub seed: u64,
}

impl Default for GbtConfig {
    fn default() -> Self {
        Self {
            n_trees: 200,
            learning_rate: 0.1,
            max_depth: 4,
            lambda: 1.0,
            gamma: 0.0,
            min_child_weight: 1.0,
            seed: 0,
        }
    }
}

impl GbtConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::param("n_trees", "must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::param("learning_rate", "must lie in (0, 1]"));
        }
        if self.max_depth == 0 {
            return Err(Error::param("max_depth", "must be at least 1"));
        }
        if !(self.lambda >= 0.0) || !(self.gamma >= 0.0) || !(self.min_child_weight >= 0.0) {
            return Err(Error::param("gbt", "lambda, gamma and min_child_weight must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        gain: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        weight: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    /// Root is `nodes[0]`.
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { weight } => return weight,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => at = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    fn render(&self, names: &[String], out: &mut String) {
        fn walk(tree: &Tree, names: &[String], at: usize, indent: usize, out: &mut String) {
            let pad = "  ".repeat(indent);
            match &tree.nodes[at] {
                Node::Leaf { weight } => out.push_str(&format!("{pad}leaf {weight:.6}\n")),
                Node::Split {
                    feature,
                    threshold,
                    gain,
                    left,
                    right,
                } => {
                    let name = names.get(*feature).map_or("?", String::as_str);
                    out.push_str(&format!("{pad}[{name} <= {threshold}] gain {gain:.6}\n"));
                    walk(tree, names, *left, indent + 1, out);
                    walk(tree, names, *right, indent + 1, out);
                }
            }
        }
        walk(self, names, 0, 1, out);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub feature_names: Vec<String>,
    pub base_score: f64,
    pub trees: Vec<Tree>,
    pub config: GbtConfig,
    /// Mean training log-loss before any tree, then after each round.
    pub train_log_loss: Vec<f64>,
}

/// `-G / (H + lambda)`.
pub fn gbt_leaf_weight(g: f64, h: f64, lambda: f64) -> Result<f64> {
    if !(h + lambda > 0.0) {
        return Err(Error::param(
            "lambda",
            format!("hessian sum {h} + lambda {lambda} must be positive"),
        ));
    }
    Ok(-g / (h + lambda))
}

fn split_gain(gl: f64, hl: f64, gr: f64, hr: f64, lambda: f64, gamma: f64) -> f64 {
    let g = gl + gr;
    let h = hl + hr;
    0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - g * g / (h + lambda)) - gamma
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m >= b {
        a
    } else {
        m
    }
}

/// Best threshold over `(value, g, h)` rows sorted by value. Only
/// candidates with positive gain and both hessian sums at least
/// `min_child_weight` qualify; ties keep the lowest threshold.
pub fn gbt_best_split(rows: &[(f64, f64, f64)], lambda: f64, gamma: f64, min_child_weight: f64) -> Option<(f64, f64)> {
    let (g_total, h_total) = rows.iter().fold((0.0, 0.0), |(g, h), r| (g + r.1, h + r.2));
    let mut gl = 0.0;
    let mut hl = 0.0;
    let mut best: Option<(f64, f64)> = None;
    for i in 0..rows.len().saturating_sub(1) {
        gl += rows[i].1;
        hl += rows[i].2;
        if rows[i].0 >= rows[i + 1].0 {
            continue;
        }
        let hr = h_total - hl;
        if hl < min_child_weight || hr < min_child_weight {
            continue;
        }
        let gain = split_gain(gl, hl, g_total - gl, hr, lambda, gamma);
        if gain > 0.0 && best.is_none_or(|(_, b)| gain > b) {
            best = Some((midpoint(rows[i].0, rows[i + 1].0), gain));
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

struct Grower<'a> {
    x: &'a Matrix,
    g: &'a [f64],
    h: &'a [f64],
    cfg: &'a GbtConfig,
    nodes: Vec<Node>,
}

impl Grower<'_> {
    /// `order[f]` lists this node's rows sorted by feature `f`.
    fn grow(&mut self, order: Vec<Vec<usize>>, depth: usize) -> Result<usize> {
        let rows = &order[0];
        let (gs, hs) = rows
            .iter()
            .fold((0.0, 0.0), |(g, h), &i| (g + self.g[i], h + self.h[i]));
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf {
            weight: gbt_leaf_weight(gs, hs, self.cfg.lambda)?,
        });
        if depth >= self.cfg.max_depth || rows.len() < 2 {
            return Ok(id);
        }
        let Some(best) = best_candidate(self.x, self.g, self.h, &order, self.cfg) else {
            return Ok(id);
        };
        let n = self.x.n_rows();
        let mut goes_left = vec![false; n];
        for &i in rows {
            goes_left[i] = self.x.get(i, best.feature) <= best.threshold;
        }
        let (left_order, right_order): (Vec<_>, Vec<_>) = order
            .into_iter()
            .map(|list| list.into_iter().partition::<Vec<_>, _>(|&i| goes_left[i]))
            .unzip();
        let left = self.grow(left_order, depth + 1)?;
        let right = self.grow(right_order, depth + 1)?;
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            gain: best.gain,
            left,
            right,
        };
        Ok(id)
    }
}

fn best_candidate(x: &Matrix, g: &[f64], h: &[f64], order: &[Vec<usize>], cfg: &GbtConfig) -> Option<SplitCandidate> {
    let per_feature = par::map_range(order.len(), |f| {
        let rows: Vec<(f64, f64, f64)> = order[f].iter().map(|&i| (x.get(i, f), g[i], h[i])).collect();
        gbt_best_split(&rows, cfg.lambda, cfg.gamma, cfg.min_child_weight).map(|(threshold, gain)| SplitCandidate {
            feature: f,
            threshold,
            gain,
        })
    });
    // Lowest feature index wins ties.
    per_feature
        .into_iter()
        .flatten()
        .fold(None, |acc: Option<SplitCandidate>, c| match acc {
            Some(a) if a.gain >= c.gain => Some(a),
            _ => Some(c),
        })
}

fn presort(x: &Matrix) -> Vec<Vec<usize>> {
    par::map_range(x.n_cols(), |f| {
        let mut idx: Vec<usize> = (0..x.n_rows()).collect();
        idx.sort_by(|&a, &b| x.get(a, f).total_cmp(&x.get(b, f)));
        idx
    })
}

/// Grows one tree on the given gradients and hessians.
pub fn grow_tree(x: &Matrix, g: &[f64], h: &[f64], cfg: &GbtConfig) -> Result<Tree> {
    grow_presorted(x, g, h, cfg, presort(x))
}

fn grow_presorted(x: &Matrix, g: &[f64], h: &[f64], cfg: &GbtConfig, order: Vec<Vec<usize>>) -> Result<Tree> {
    let mut grower = Grower {
        x,
        g,
        h,
        cfg,
        nodes: Vec::new(),
    };
    if x.n_cols() == 0 {
        grower.nodes.push(Node::Leaf {
            weight: gbt_leaf_weight(g.iter().sum(), h.iter().sum(), cfg.lambda)?,
        });
    } else {
        grower.grow(order, 0)?;
    }
    Ok(Tree { nodes: grower.nodes })
}

pub fn gbt_fit(x: &Matrix, y: &[u8], cfg: &GbtConfig) -> Result<GbtModel> {
    cfg.validate()?;
    let n = x.n_rows();
    if n != y.len() {
        return Err(Error::LengthMismatch {
            expected: n,
            found: y.len(),
        });
    }
    if x.rows().flatten().any(|v| !v.is_finite()) {
        return Err(Error::MissingInput("training matrix".into()));
    }
    let positives = y.iter().filter(|&&t| t == 1).count();
    if n < 2 || positives == 0 || positives == n {
        return Err(Error::SingleClass);
    }
    let rate = positives as f64 / n as f64;
    let base_score = (rate / (1.0 - rate)).ln().clamp(-BASE_SCORE_LIMIT, BASE_SCORE_LIMIT);
    let order = presort(x);
    let mut raw = vec![base_score; n];
    let probs = |raw: &[f64]| raw.iter().map(|&r| clamp_prob(sigmoid(r))).collect::<Vec<_>>();
    let mut p = probs(&raw);
    let mut train_log_loss = vec![log_loss(y, &p)];
    let mut trees = Vec::with_capacity(cfg.n_trees);
    for _ in 0..cfg.n_trees {
        let g: Vec<f64> = p.iter().zip(y).map(|(&q, &t)| q - f64::from(t)).collect();
        let h: Vec<f64> = p.iter().map(|&q| q * (1.0 - q)).collect();
        let tree = grow_presorted(x, &g, &h, cfg, order.clone())?;
        for (i, r) in raw.iter_mut().enumerate() {
            *r += cfg.learning_rate * tree.predict(x.row(i));
        }
        p = probs(&raw);
        train_log_loss.push(log_loss(y, &p));
        trees.push(tree);
    }
    Ok(GbtModel {
        feature_names: x.names().to_vec(),
        base_score,
        trees,
        config: cfg.clone(),
        train_log_loss,
    })
}

pub fn gbt_predict_proba(model: &GbtModel, row: &[f64]) -> Result<f64> {
    if row.len() != model.feature_names.len() {
        return Err(Error::LengthMismatch {
            expected: model.feature_names.len(),
            found: row.len(),
        });
    }
    if let Some(j) = row.iter().position(|v| !v.is_finite()) {
        return Err(Error::MissingInput(model.feature_names[j].clone()));
    }
    let sum: f64 = model.trees.iter().map(|t| t.predict(row)).sum();
    Ok(clamp_prob(sigmoid(model.base_score + model.config.learning_rate * sum)))
}

impl GbtModel {
    pub fn render_trees(&self) -> String {
        let mut out = String::new();
        for (k, tree) in self.trees.iter().enumerate() {
            out.push_str(&format!("tree {k} (depth {})\n", tree.depth()));
            tree.render(&self.feature_names, &mut out);
        }
        out
    }
}

impl Predictor for GbtModel {
    fn predict_proba(&self, row: &[f64]) -> Result<f64> {
        gbt_predict_proba(self, row)
    }

    fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    fn model_type(&self) -> &str {
        "gbt"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::accuracy;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn xor(n: usize, seed: u64) -> (Matrix, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = Vec::with_capacity(2 * n);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let a: f64 = rng.random_range(-1.0..1.0);
            let b: f64 = rng.random_range(-1.0..1.0);
            data.extend([a, b]);
            y.push(u8::from((a > 0.0) != (b > 0.0)));
        }
        (Matrix::new(n, 2, data).unwrap(), y)
    }

    #[test]
    fn leaf_weight_formula() {
        let g = 4.0 * -0.5;
        let h = 4.0 * 0.25;
        assert_eq!(gbt_leaf_weight(g, h, 1.0).unwrap(), 1.0);
        assert_eq!(gbt_leaf_weight(0.0, 3.0, 0.5).unwrap(), 0.0);
        assert!(gbt_leaf_weight(2.0, 1.0, 0.0).unwrap() < 0.0);
        assert!(gbt_leaf_weight(1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn homogeneous_gradients_do_not_split() {
        // 0.5 * (1/1.5 + 1/1.5 - 4/2)
        assert!((split_gain(-1.0, 0.5, -1.0, 0.5, 1.0, 0.0) + 1.0 / 3.0).abs() < 1e-15);
        let rows = [
            (0.0, -0.5, 0.25),
            (1.0, -0.5, 0.25),
            (2.0, -0.5, 0.25),
            (3.0, -0.5, 0.25),
        ];
        assert_eq!(gbt_best_split(&rows, 1.0, 0.0, 0.0), None);
    }

    #[test]
    fn separating_threshold_between_clusters() {
        let rows = [
            (1.0, -1.0, 0.25),
            (1.5, -1.0, 0.25),
            (2.0, -1.0, 0.25),
            (2.5, -1.0, 0.25),
            (7.0, 1.0, 0.25),
            (7.5, 1.0, 0.25),
            (8.0, 1.0, 0.25),
            (9.0, 1.0, 0.25),
        ];
        let (t, gain) = gbt_best_split(&rows, 1.0, 0.0, 0.0).unwrap();
        assert_eq!(t, 4.75);
        assert!(gain > 0.0);
        assert_eq!(gbt_best_split(&rows, 1.0, gain + 1.0, 0.0), None);
    }

    #[test]
    fn ties_pick_lowest_threshold() {
        let rows = [(0.0, 1.0, 1.0), (1.0, -1.0, 1.0), (2.0, 1.0, 1.0), (3.0, -1.0, 1.0)];
        let (t, _) = gbt_best_split(&rows, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(t, 0.5);
    }

    #[test]
    fn stump_matches_brute_force() {
        let values = [0.3, 1.2, 2.2, 2.9, 4.1, 5.0, 6.3, 7.7];
        let y = [0, 0, 0, 1, 0, 1, 1, 1];
        let x = Matrix::new(8, 1, values.to_vec()).unwrap();
        let cfg = GbtConfig {
            n_trees: 1,
            max_depth: 1,
            min_child_weight: 0.0,
            ..GbtConfig::default()
        };
        let model = gbt_fit(&x, &y, &cfg).unwrap();
        let Node::Split { threshold, .. } = model.trees[0].nodes[0] else {
            panic!("expected a split");
        };
        let p = 0.5;
        let mut best = (f64::NEG_INFINITY, 0.0);
        for k in 0..7 {
            let t = (values[k] + values[k + 1]) / 2.0;
            let (mut gl, mut gr) = (0.0, 0.0);
            let (mut hl, mut hr) = (0.0, 0.0);
            for i in 0..8 {
                let gi = p - f64::from(y[i]);
                if values[i] <= t {
                    gl += gi;
                    hl += 0.25;
                } else {
                    gr += gi;
                    hr += 0.25;
                }
            }
            let gain = 0.5 * (gl * gl / (hl + 1.0) + gr * gr / (hr + 1.0) - (gl + gr).powi(2) / (hl + hr + 1.0));
            if gain > best.0 {
                best = (gain, t);
            }
        }
        assert_eq!(threshold, best.1);
    }

    #[test]
    fn xor_needs_depth() {
        let (x, y) = xor(400, 7);
        let shallow = gbt_fit(
            &x,
            &y,
            &GbtConfig {
                max_depth: 1,
                n_trees: 50,
                ..GbtConfig::default()
            },
        )
        .unwrap();
        let deep = gbt_fit(
            &x,
            &y,
            &GbtConfig {
                max_depth: 3,
                n_trees: 50,
                ..GbtConfig::default()
            },
        )
        .unwrap();
        let acc = |m: &GbtModel| {
            let p: Vec<f64> = x.rows().map(|r| m.predict_proba(r).unwrap()).collect();
            accuracy(&y, &p)
        };
        let a1 = acc(&shallow);
        assert!((0.4..=0.6).contains(&a1), "depth-1 accuracy {a1}");
        assert!(acc(&deep) >= 0.95);
        for w in deep.train_log_loss.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
        assert!(deep.trees.iter().all(|t| t.depth() <= 3));
    }

    #[test]
    fn prediction_contract() {
        let x = Matrix::new(4, 1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let y = [0, 1, 1, 1];
        let mut model = gbt_fit(
            &x,
            &y,
            &GbtConfig {
                n_trees: 1,
                max_depth: 1,
                min_child_weight: 0.0,
                ..GbtConfig::default()
            },
        )
        .unwrap();
        let base = model.base_score;
        let Node::Split { threshold, left, .. } = model.trees[0].nodes[0] else {
            panic!("expected a split");
        };
        let Node::Leaf { weight } = model.trees[0].nodes[left] else {
            panic!("expected a leaf");
        };
        let p = model.predict_proba(&[threshold - 0.1]).unwrap();
        assert!((p - sigmoid(base + 0.1 * weight)).abs() < 1e-15);
        assert_eq!(p, model.predict_proba(&[threshold - 0.1]).unwrap());
        assert!(matches!(model.predict_proba(&[f64::NAN]), Err(Error::MissingInput(_))));
        model.trees.clear();
        assert!((model.predict_proba(&[0.0]).unwrap() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn fit_errors() {
        let x = Matrix::new(3, 1, vec![0.0, 1.0, 2.0]).unwrap();
        assert!(matches!(
            gbt_fit(&x, &[1, 1, 1], &GbtConfig::default()),
            Err(Error::SingleClass)
        ));
        assert!(gbt_fit(
            &x,
            &[0, 1, 1],
            &GbtConfig {
                n_trees: 0,
                ..GbtConfig::default()
            }
        )
        .is_err());
        assert!(gbt_fit(
            &x,
            &[0, 1, 1],
            &GbtConfig {
                learning_rate: 1.5,
                ..GbtConfig::default()
            }
        )
        .is_err());
    }
}
