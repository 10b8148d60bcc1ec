//! Regression trees stored as flat node arrays.

use serde::{Deserialize, Serialize};

use crate::sparse::FeatureVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: u32,
        threshold: f64,
        default_left: bool,
        left: u32,
        right: u32,
    },
    Leaf {
        value: f64,
    },
}

/// Node 0 is the root. Children always have larger indices than their parent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

/// Zero and NaN take the default direction; other values go left when `v <= threshold`.
pub fn goes_left(v: f64, threshold: f64, default_left: bool) -> bool {
    if v == 0.0 || v.is_nan() {
        default_left
    } else {
        v <= threshold
    }
}

impl Tree {
    pub fn leaf(value: f64) -> Self {
        Self {
            nodes: vec![Node::Leaf { value }],
        }
    }

    pub fn num_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub fn predict(&self, x: &FeatureVector) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    default_left,
                    left,
                    right,
                } => {
                    let v = x.get(feature as usize);
                    i = if goes_left(v, threshold, default_left) { left } else { right } as usize;
                }
            }
        }
    }

    /// Structural check: a single root, every node reachable exactly once,
    /// children after parents, finite numbers, features below `dim`.
    pub fn validate(&self, dim: usize) -> Result<(), String> {
        if self.nodes.is_empty() {
            return Err("empty tree".into());
        }
        let mut parents = vec![0usize; self.nodes.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            match *node {
                Node::Leaf { value } => {
                    if !value.is_finite() {
                        return Err(format!("node {i}: non-finite leaf"));
                    }
                }
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    if feature as usize >= dim {
                        return Err(format!("node {i}: feature {feature} out of range"));
                    }
                    if threshold.is_nan() {
                        return Err(format!("node {i}: NaN threshold"));
                    }
                    for child in [left as usize, right as usize] {
                        if child <= i || child >= self.nodes.len() {
                            return Err(format!("node {i}: bad child {child}"));
                        }
                        parents[child] += 1;
                    }
                }
            }
        }
        if parents[0] != 0 || parents[1..].iter().any(|&p| p != 1) {
            return Err("nodes do not form a single tree".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stump() -> Tree {
        Tree {
            nodes: vec![
                Node::Split {
                    feature: 1,
                    threshold: 0.5,
                    default_left: true,
                    left: 1,
                    right: 2,
                },
                Node::Leaf { value: -1.0 },
                Node::Leaf { value: 1.0 },
            ],
        }
    }

    #[test]
    fn routing() {
        let t = stump();
        let at = |v: f64| t.predict(&FeatureVector::from_dense(&[0.0, v]).unwrap());
        assert_eq!(at(0.0), -1.0);
        assert_eq!(at(0.4), -1.0);
        assert_eq!(at(0.5), -1.0);
        assert_eq!(at(0.6), 1.0);
        assert_eq!(t.num_leaves(), 2);
        assert!(t.validate(2).is_ok());
        assert!(t.validate(1).is_err());
    }

    #[test]
    fn rejects_shared_children() {
        let mut t = stump();
        t.nodes[0] = Node::Split {
            feature: 0,
            threshold: 0.0,
            default_left: true,
            left: 1,
            right: 1,
        };
        assert!(t.validate(2).is_err());
    }
}
