//! Channel geometry and tree wiring.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_GRAVITY: f64 = 9.81;
pub const SPLIT_SUM_TOL: f64 = 1e-12;
pub const MIN_CELLS: usize = 8;

fn default_gravity() -> f64 {
    DEFAULT_GRAVITY
}

fn default_cells() -> usize {
    64
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("cycle detected through channel {0}")]
    CycleDetected(usize),
    #[error("channel {child} has more than one parent ({first} and {second})")]
    MultipleParents { child: usize, first: usize, second: usize },
    #[error("split fractions at junction after channel {junction} sum to {sum}")]
    BadSplitSum { junction: usize, sum: f64 },
    #[error("split fraction {value} at junction after channel {junction} is outside (0, 1)")]
    BadSplitFraction { junction: usize, value: f64 },
    #[error("junction after channel {junction} lists {outgoing} outgoing channels but {fractions} split fractions")]
    SplitLengthMismatch { junction: usize, outgoing: usize, fractions: usize },
    #[error("junction after channel {0} has no outgoing channels")]
    EmptyJunction(usize),
    #[error("channel {0} appears in more than one junction as incoming")]
    DuplicateJunction(usize),
    #[error("unknown channel {0}")]
    UnknownChannel(usize),
    #[error("duplicate channel id {0}")]
    DuplicateId(usize),
    #[error("channel {0} is not reachable from the root")]
    Disconnected(usize),
    #[error("root channel {0} cannot be the child of a junction")]
    RootHasParent(usize),
    #[error("channel {id}: invalid parameter {what}")]
    BadParameter { id: usize, what: &'static str },
    #[error("network has no channels")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub id: usize,
    pub length: f64,
    pub friction: f64,
    pub friction_exponent: f64,
    #[serde(default = "default_gravity")]
    pub gravity: f64,
    #[serde(default = "default_cells")]
    pub cells: usize,
}

impl ChannelSpec {
    pub fn new(id: usize, length: f64, friction: f64, friction_exponent: f64) -> Self {
        Self { id, length, friction, friction_exponent, gravity: DEFAULT_GRAVITY, cells: default_cells() }
    }

    pub fn with_cells(mut self, cells: usize) -> Self {
        self.cells = cells;
        self
    }

    pub fn check(&self) -> Result<(), TopologyError> {
        let bad = |what| Err(TopologyError::BadParameter { id: self.id, what });
        if !(self.length > 0.0 && self.length.is_finite()) {
            return bad("length must be positive");
        }
        if !(self.friction >= 0.0 && self.friction.is_finite()) {
            return bad("friction must be non-negative");
        }
        if !(self.friction_exponent >= 0.0 && self.friction_exponent.is_finite()) {
            return bad("friction exponent must be non-negative");
        }
        if !(self.gravity > 0.0 && self.gravity.is_finite()) {
            return bad("gravity must be positive");
        }
        if self.cells < MIN_CELLS {
            return bad("at least 8 cells required");
        }
        Ok(())
    }
}

/// One multiple node: a single incoming channel feeding an ordered list of
/// outgoing channels with steady flux fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Junction {
    pub incoming: usize,
    pub outgoing: Vec<usize>,
    pub split_fractions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkTopology {
    pub channels: Vec<ChannelSpec>,
    pub root_channel: usize,
    #[serde(default)]
    pub junctions: Vec<Junction>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    /// Channels ending in a junction.
    pub internal: Vec<usize>,
    /// Channels ending at a feedback-controlled outlet.
    pub terminal: Vec<usize>,
    /// Junction degree (incoming plus outgoing count) keyed by incoming channel.
    pub degrees: BTreeMap<usize, usize>,
}

/// Validated, index-resolved view of a [`NetworkTopology`].
#[derive(Debug, Clone)]
pub struct Network {
    pub topology: NetworkTopology,
    index: HashMap<usize, usize>,
    parent: HashMap<usize, usize>,
    children: HashMap<usize, (Vec<usize>, Vec<f64>)>,
    order: Vec<usize>,
    report: ValidationReport,
}

impl NetworkTopology {
    pub fn single(channel: ChannelSpec) -> Self {
        Self { root_channel: channel.id, channels: vec![channel], junctions: vec![] }
    }

    /// Trunk feeding every other channel through one junction with equal splits.
    pub fn star(trunk: ChannelSpec, branches: Vec<ChannelSpec>) -> Self {
        let n = branches.len();
        let outgoing: Vec<usize> = branches.iter().map(|c| c.id).collect();
        let junction = Junction {
            incoming: trunk.id,
            outgoing,
            split_fractions: vec![1.0 / n as f64; n],
        };
        let root = trunk.id;
        let mut channels = vec![trunk];
        channels.extend(branches);
        Self { channels, root_channel: root, junctions: vec![junction] }
    }

    pub fn validate(&self) -> Result<ValidationReport, TopologyError> {
        Network::new(self.clone()).map(|n| n.report)
    }

    pub fn traversal_order(&self) -> Result<Vec<usize>, TopologyError> {
        Network::new(self.clone()).map(|n| n.order)
    }
}

impl Network {
    pub fn new(topology: NetworkTopology) -> Result<Self, TopologyError> {
        if topology.channels.is_empty() {
            return Err(TopologyError::Empty);
        }
        let mut index = HashMap::new();
        for (k, c) in topology.channels.iter().enumerate() {
            c.check()?;
            if index.insert(c.id, k).is_some() {
                return Err(TopologyError::DuplicateId(c.id));
            }
        }
        let root = topology.root_channel;
        if !index.contains_key(&root) {
            return Err(TopologyError::UnknownChannel(root));
        }

        let mut parent: HashMap<usize, usize> = HashMap::new();
        let mut children: HashMap<usize, (Vec<usize>, Vec<f64>)> = HashMap::new();
        for j in &topology.junctions {
            let inc = j.incoming;
            if !index.contains_key(&inc) {
                return Err(TopologyError::UnknownChannel(inc));
            }
            if children.contains_key(&inc) {
                return Err(TopologyError::DuplicateJunction(inc));
            }
            if j.outgoing.is_empty() {
                return Err(TopologyError::EmptyJunction(inc));
            }
            if j.outgoing.len() != j.split_fractions.len() {
                return Err(TopologyError::SplitLengthMismatch {
                    junction: inc,
                    outgoing: j.outgoing.len(),
                    fractions: j.split_fractions.len(),
                });
            }
            for &c in &j.outgoing {
                if !index.contains_key(&c) {
                    return Err(TopologyError::UnknownChannel(c));
                }
                if let Some(&first) = parent.get(&c) {
                    return Err(TopologyError::MultipleParents { child: c, first, second: inc });
                }
                if j.outgoing.iter().filter(|&&o| o == c).count() > 1 {
                    return Err(TopologyError::MultipleParents { child: c, first: inc, second: inc });
                }
                parent.insert(c, inc);
            }
            for &s in &j.split_fractions {
                if !(s > 0.0 && s < 1.0) && !(j.outgoing.len() == 1 && s == 1.0) {
                    return Err(TopologyError::BadSplitFraction { junction: inc, value: s });
                }
            }
            let sum: f64 = j.split_fractions.iter().sum();
            if (sum - 1.0).abs() > SPLIT_SUM_TOL {
                return Err(TopologyError::BadSplitSum { junction: inc, sum });
            }
            children.insert(inc, (j.outgoing.clone(), j.split_fractions.clone()));
        }

        // Walk parent pointers from every channel; a cycle never reaches a
        // parentless node.
        for c in &topology.channels {
            let mut seen = BTreeSet::new();
            let mut cur = c.id;
            while let Some(&p) = parent.get(&cur) {
                if !seen.insert(cur) {
                    return Err(TopologyError::CycleDetected(cur));
                }
                cur = p;
            }
            if cur != root {
                if c.id == root || seen.contains(&root) {
                    return Err(TopologyError::RootHasParent(root));
                }
                return Err(TopologyError::Disconnected(c.id));
            }
        }
        if parent.contains_key(&root) {
            return Err(TopologyError::RootHasParent(root));
        }

        let mut order = Vec::with_capacity(topology.channels.len());
        let mut queue = std::collections::VecDeque::from([root]);
        while let Some(c) = queue.pop_front() {
            order.push(c);
            if let Some((kids, _)) = children.get(&c) {
                queue.extend(kids.iter().copied());
            }
        }

        let mut internal: Vec<usize> = children.keys().copied().collect();
        internal.sort_unstable();
        let terminal: Vec<usize> = {
            let mut t: Vec<usize> =
                topology.channels.iter().map(|c| c.id).filter(|id| !children.contains_key(id)).collect();
            t.sort_unstable();
            t
        };
        let degrees = children.iter().map(|(k, (kids, _))| (*k, 1 + kids.len())).collect();
        let report = ValidationReport { internal, terminal, degrees };

        Ok(Self { topology, index, parent, children, order, report })
    }

    pub fn report(&self) -> &ValidationReport {
        &self.report
    }

    pub fn root(&self) -> usize {
        self.topology.root_channel
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn channel(&self, id: usize) -> &ChannelSpec {
        &self.topology.channels[self.index[&id]]
    }

    pub fn channels(&self) -> &[ChannelSpec] {
        &self.topology.channels
    }

    pub fn parent(&self, id: usize) -> Option<usize> {
        self.parent.get(&id).copied()
    }

    /// Outgoing channels and split fractions of the junction after `id`.
    pub fn children(&self, id: usize) -> Option<(&[usize], &[f64])> {
        self.children.get(&id).map(|(k, s)| (k.as_slice(), s.as_slice()))
    }

    pub fn is_terminal(&self, id: usize) -> bool {
        !self.children.contains_key(&id)
    }

    pub fn terminals(&self) -> &[usize] {
        &self.report.terminal
    }

    pub fn internals(&self) -> &[usize] {
        &self.report.internal
    }

    pub fn position(&self, id: usize) -> usize {
        self.index[&id]
    }

    pub fn contains(&self, id: usize) -> bool {
        self.index.contains_key(&id)
    }
}
