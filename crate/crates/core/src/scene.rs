//! The JSON instance format and its conversion into a [`CrfInstance`].
//!
//! ```json
//! {"labels": 3,
//!  "nodes": [{"id": 0, "unary_scores": [0.1, 0.9, -0.2], "observed": true,
//!             "gt": 1, "color": [0.2, 0.4, 0.9]}, ...],
//!  "edges": [{"i": 0, "j": 1, "similarity": null}, ...]}
//! ```
//!
//! `unary_scores` are raw classifier outputs; they pass through the sigmoid,
//! are renormalized per node and stored as clamped log-probabilities.
//! `similarity` in `[0, 1]` overrides the color-derived similarity of an edge;
//! the Potts strength is `weight · similarity`.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::crf::{log_probabilities, CrfGraph, CrfInstance, LabelSpace, Labeling, PairwiseLayout, StatVector};
use crate::error::{CrfError, Result};
use crate::seg::{color_similarity, scores_to_probabilities, PottsParams, SigmoidParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: usize,
    pub unary_scores: Option<Vec<f64>>,
    pub observed: bool,
    pub gt: Option<usize>,
    pub color: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub i: usize,
    pub j: usize,
    pub similarity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub labels: usize,
    pub nodes: Vec<NodeRecord>,
    pub edges: Vec<EdgeRecord>,
}

impl Scene {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Scene::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// Nodes reordered by id; ids must be exactly `0..N`.
    fn ordered_nodes(&self) -> Result<Vec<&NodeRecord>> {
        let n = self.nodes.len();
        let mut slots: Vec<Option<&NodeRecord>> = vec![None; n];
        for node in &self.nodes {
            if node.id >= n {
                return Err(CrfError::invalid(format!("node id {} outside [0, {n})", node.id)));
            }
            if slots[node.id].replace(node).is_some() {
                return Err(CrfError::invalid(format!("duplicate node id {}", node.id)));
            }
        }
        Ok(slots.into_iter().map(|s| s.expect("ids form a permutation")).collect())
    }

    /// Assemble the CRF: sigmoid log-probability unaries and color-modulated
    /// Potts pairwise blocks `(0, −C)`.
    pub fn to_instance(&self, sigmoid: &SigmoidParams, potts: &PottsParams) -> Result<CrfInstance> {
        let labels = LabelSpace::new(self.labels)?;
        let l = labels.count();
        let nodes = self.ordered_nodes()?;
        let n = nodes.len();

        let mut unary = Vec::with_capacity(n);
        let mut observed = Vec::with_capacity(n);
        for node in &nodes {
            match (&node.unary_scores, node.observed) {
                (Some(scores), true) => {
                    if scores.len() != l {
                        return Err(CrfError::shape(format!(
                            "node {} has {} scores, expected {l}",
                            node.id,
                            scores.len()
                        )));
                    }
                    if !scores.iter().all(|s| s.is_finite()) {
                        return Err(CrfError::invalid(format!("node {} has a non-finite score", node.id)));
                    }
                    unary.push(log_probabilities(&scores_to_probabilities(scores, sigmoid)));
                    observed.push(true);
                }
                (None, true) => {
                    return Err(CrfError::invalid(format!(
                        "node {} is marked observed but has no unary scores",
                        node.id
                    )))
                }
                (_, false) => {
                    unary.push(vec![0.0; l]);
                    observed.push(false);
                }
            }
        }

        let colors: Option<Vec<[f64; 3]>> = nodes.iter().map(|node| node.color).collect();
        let ground_truth = match nodes.iter().filter(|node| node.gt.is_some()).count() {
            0 => None,
            k if k == n => Some(Labeling::new(nodes.iter().map(|node| node.gt.unwrap()).collect())),
            _ => return Err(CrfError::invalid("ground truth must be given for all nodes or none")),
        };

        let graph = CrfGraph::new(n, self.edges.iter().map(|e| (e.i, e.j)))?;
        let mut pairwise = vec![Vec::new(); graph.edge_count()];
        for edge in &self.edges {
            let similarity = match edge.similarity {
                Some(s) if (0.0..=1.0).contains(&s) => s,
                Some(s) => {
                    return Err(CrfError::invalid(format!(
                        "edge ({}, {}) similarity {s} outside [0, 1]",
                        edge.i, edge.j
                    )))
                }
                None => match (nodes[edge.i].color, nodes[edge.j].color) {
                    (Some(ci), Some(cj)) => color_similarity(&ci, &cj, potts.decay)?,
                    _ => {
                        return Err(CrfError::invalid(format!(
                            "edge ({}, {}) has neither a similarity nor endpoint colors",
                            edge.i, edge.j
                        )))
                    }
                },
            };
            let e = graph.edge_index(edge.i, edge.j).expect("edge was just inserted");
            pairwise[e] = vec![0.0, -potts.weight * similarity];
        }

        let theta = StatVector::from_blocks(PairwiseLayout::PottsAgreement, l, &unary, &pairwise)?;
        let instance = CrfInstance {
            graph,
            labels,
            theta,
            observed,
            ground_truth,
            colors,
        };
        instance.validate()?;
        Ok(instance)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{
        "labels": 2,
        "nodes": [
            {"id": 1, "unary_scores": null, "observed": false, "gt": 1, "color": [1, 1, 1]},
            {"id": 0, "unary_scores": [0.4666666666666667, 0.0], "observed": true, "gt": 0, "color": [0, 0, 0]},
            {"id": 2, "unary_scores": [0.0, 1.0], "observed": true, "gt": 1, "color": [1, 1, 1]}
        ],
        "edges": [{"i": 0, "j": 1, "similarity": null}, {"i": 2, "j": 1, "similarity": 0.5}]
    }"#;

    #[test]
    fn parses_and_builds() {
        let scene = Scene::from_json(SAMPLE).unwrap();
        let inst = scene.to_instance(&SigmoidParams::default(), &PottsParams::semantic()).unwrap();
        assert_eq!(inst.observed, vec![true, false, true]);
        assert_eq!(inst.theta.unary_block(1), &[0.0, 0.0]);
        assert_eq!(inst.ground_truth.as_ref().unwrap().to_vec(), vec![0, 1, 1]);
        // black vs white: C = 0.08 e^-10
        let c01 = -inst.theta.pairwise_block(0)[1];
        assert!((c01 - 0.08 * (-10.0f64).exp()).abs() < 1e-15);
        assert_eq!(inst.theta.pairwise_block(1), &[0.0, -0.04]);
        // node 0: sigmoid(0)=0.5 vs sigmoid(-7)
        let b0 = inst.theta.unary_block(0);
        let p0 = 0.5 / (0.5 + 1.0 / (1.0 + 7.0f64.exp()));
        assert!((b0[0] - p0.ln()).abs() < 1e-12);
    }

    #[test]
    fn rejects_malformed() {
        assert!(matches!(Scene::from_json("{ not json"), Err(CrfError::Parse(_))));
        let mut scene = Scene::from_json(SAMPLE).unwrap();
        scene.nodes[0].id = 0;
        assert!(scene.to_instance(&SigmoidParams::default(), &PottsParams::semantic()).is_err());

        let mut scene = Scene::from_json(SAMPLE).unwrap();
        scene.nodes[2].observed = true;
        scene.nodes[0].observed = true;
        assert!(scene.to_instance(&SigmoidParams::default(), &PottsParams::semantic()).is_err());

        let mut scene = Scene::from_json(SAMPLE).unwrap();
        scene.edges[1].similarity = Some(1.5);
        assert!(scene.to_instance(&SigmoidParams::default(), &PottsParams::semantic()).is_err());

        let mut scene = Scene::from_json(SAMPLE).unwrap();
        scene.nodes[2].gt = None;
        assert!(scene.to_instance(&SigmoidParams::default(), &PottsParams::semantic()).is_err());
    }

    #[test]
    fn json_round_trip() {
        let scene = Scene::from_json(SAMPLE).unwrap();
        assert_eq!(Scene::from_json(&scene.to_json().unwrap()).unwrap(), scene);
    }
}
