//! Decomposition format templates.
//!
//! A [`TnFormat`] is a tensor network with the *data* modes marked instead of
//! carrying values: each dangling mode is assigned to one mode of the data
//! tensor, bonds carry the ranks, and nodes flagged `fixed_diagonal` hold a
//! frozen superdiagonal of ones (the CP weight node). Given concrete node
//! tensors it instantiates the reconstruction network, and for an update of
//! node `m` it builds the design TN matrix of everything except `m`.
//!
//! Formats come from the canonical [`cp_format`]/[`tr_format`] constructors
//! or from a TOML description (see [`TnFormat::from_toml_str`]).

use std::collections::{BTreeMap, BTreeSet};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::network::{Slot, TNMatrix, TensorNetwork};
use crate::tensor::DenseTensor;

/// Which canonical family a format belongs to; decides whether the ALS
/// driver may substitute the CP/TR fast paths for the generic ones.
/// Parsed formats are always `Generic`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FormatKind {
    Generic,
    Cp,
    TensorRing,
}

#[derive(Clone, Debug)]
pub struct TnFormat {
    /// (id, mode extents) in declaration order.
    nodes: Vec<(String, Vec<usize>)>,
    /// Declared order fixes the column order of design matrices.
    bonds: Vec<(Slot, Slot)>,
    /// `data_modes[k]` owns data mode `k + 1`.
    data_modes: Vec<Slot>,
    fixed: BTreeSet<String>,
    update_order: Vec<String>,
    kind: FormatKind,
}

impl TnFormat {
    pub fn new(
        nodes: Vec<(String, Vec<usize>)>,
        bonds: Vec<(Slot, Slot)>,
        data_modes: Vec<Slot>,
        fixed: Vec<String>,
        update_order: Option<Vec<String>>,
    ) -> Result<Self> {
        let fixed: BTreeSet<String> = fixed.into_iter().collect();
        let update_order = update_order.unwrap_or_else(|| {
            nodes
                .iter()
                .map(|(id, _)| id.clone())
                .filter(|id| !fixed.contains(id))
                .collect()
        });
        let f = Self {
            nodes,
            bonds,
            data_modes,
            fixed,
            update_order,
            kind: FormatKind::Generic,
        };
        f.validate()?;
        Ok(f)
    }

    fn with_kind(mut self, kind: FormatKind) -> Self {
        self.kind = kind;
        self
    }

    fn validate(&self) -> Result<()> {
        fn fail<T>(msg: String) -> Result<T> {
            Err(Error::Format(msg))
        }
        if self.nodes.is_empty() {
            return fail("format has no nodes".into());
        }
        let mut dims: BTreeMap<&str, &[usize]> = BTreeMap::new();
        for (id, d) in &self.nodes {
            if id.is_empty() || id.contains('.') {
                return fail(format!("bad node id {id:?}: must be nonempty without '.'"));
            }
            if d.is_empty() || d.iter().any(|&e| e == 0) {
                return fail(format!(
                    "node {id} needs at least one mode, all extents positive"
                ));
            }
            if dims.insert(id, d).is_some() {
                return fail(format!("duplicate node id {id}"));
            }
        }
        let extent = |s: &Slot| -> Result<usize> {
            let d = dims
                .get(s.node.as_str())
                .ok_or_else(|| Error::Format(format!("slot {s} names an unknown node")))?;
            if s.mode == 0 || s.mode > d.len() {
                return fail(format!("slot {s}: node has {} modes", d.len()));
            }
            Ok(d[s.mode - 1])
        };
        // every slot in exactly one bond endpoint or one data assignment
        let mut seen: BTreeSet<Slot> = BTreeSet::new();
        let mut claim = |s: &Slot| -> Result<()> {
            if !seen.insert(s.clone()) {
                return Err(Error::Format(format!("slot {s} referenced twice")));
            }
            Ok(())
        };
        for (a, b) in &self.bonds {
            if a == b {
                return fail(format!("bond pairs slot {a} with itself"));
            }
            claim(a)?;
            claim(b)?;
            let (ea, eb) = (extent(a)?, extent(b)?);
            if ea != eb {
                return fail(format!("bond {a} -- {b} has extents {ea} vs {eb}"));
            }
        }
        for s in &self.data_modes {
            claim(s)?;
            extent(s)?;
        }
        let total: usize = self.nodes.iter().map(|(_, d)| d.len()).sum();
        if seen.len() != total {
            return fail(format!(
                "{} of {total} node modes assigned; every mode needs a bond or a data mode",
                seen.len()
            ));
        }
        for id in &self.fixed {
            let d = dims
                .get(id.as_str())
                .ok_or_else(|| Error::Format(format!("fixed_diagonal names unknown node {id}")))?;
            if d.iter().any(|&e| e != d[0]) {
                return fail(format!("diagonal node {id} has unequal extents {d:?}"));
            }
            if self.data_modes.iter().any(|s| &s.node == id) {
                return fail(format!("diagonal node {id} may not own data modes"));
            }
        }
        let free: BTreeSet<&str> = self
            .nodes
            .iter()
            .map(|(id, _)| id.as_str())
            .filter(|id| !self.fixed.contains(*id))
            .collect();
        let order: BTreeSet<&str> = self.update_order.iter().map(|s| s.as_str()).collect();
        if order.len() != self.update_order.len() || order != free {
            return fail(format!(
                "update_order {:?} must list each non-fixed node exactly once",
                self.update_order
            ));
        }
        Ok(())
    }

    pub fn node_ids(&self) -> impl Iterator<Item = &str> {
        self.nodes.iter().map(|(id, _)| id.as_str())
    }

    pub fn node_dims(&self, id: &str) -> Option<&[usize]> {
        self.nodes
            .iter()
            .find(|(n, _)| n == id)
            .map(|(_, d)| d.as_slice())
    }

    pub fn bonds(&self) -> &[(Slot, Slot)] {
        &self.bonds
    }

    pub fn data_modes(&self) -> &[Slot] {
        &self.data_modes
    }

    pub fn is_fixed(&self, id: &str) -> bool {
        self.fixed.contains(id)
    }

    pub fn update_order(&self) -> &[String] {
        &self.update_order
    }

    pub fn kind(&self) -> FormatKind {
        self.kind
    }

    /// Extents of the data tensor this format describes, in data-mode order.
    pub fn data_dims(&self) -> Vec<usize> {
        self.data_modes
            .iter()
            .map(|s| self.node_dims(&s.node).expect("validated")[s.mode - 1])
            .collect()
    }

    /// Checks that `tensors` supplies every node with exactly the declared
    /// extents (and nothing else).
    pub fn check_tensors(&self, tensors: &BTreeMap<String, DenseTensor>) -> Result<()> {
        for (id, dims) in &self.nodes {
            let t = tensors
                .get(id)
                .ok_or_else(|| Error::Format(format!("missing tensor for node {id}")))?;
            if t.dims() != dims.as_slice() {
                return Err(Error::Format(format!(
                    "node {id}: tensor dims {:?} don't match declared {dims:?}",
                    t.dims()
                )));
            }
        }
        if let Some(extra) = tensors.keys().find(|k| self.node_dims(k).is_none()) {
            return Err(Error::Format(format!(
                "tensor supplied for unknown node {extra}"
            )));
        }
        Ok(())
    }

    /// The reconstruction network: all nodes and bonds, data modes dangling
    /// as `d1..dN` in data-mode order (so contraction yields the tensor with
    /// modes in data order).
    pub fn network(&self, tensors: &BTreeMap<String, DenseTensor>) -> Result<TensorNetwork> {
        self.check_tensors(tensors)?;
        let mut net = TensorNetwork::new();
        for (id, _) in &self.nodes {
            net.add_node(id.clone(), tensors[id].clone())?;
        }
        for (a, b) in &self.bonds {
            net.add_bond(a.clone(), b.clone());
        }
        for (k, s) in self.data_modes.iter().enumerate() {
            net.add_dangling(format!("d{}", k + 1), s.clone());
        }
        net.ensure_valid()?;
        Ok(net)
    }

    /// Design matrix for updating node `m`: the network of all other nodes,
    /// rows labeled by the data modes not owned by `m` (ascending), columns
    /// by the bonds incident to `m` in declared order.
    pub fn design_network(
        &self,
        tensors: &BTreeMap<String, DenseTensor>,
        m: &str,
    ) -> Result<TNMatrix> {
        self.check_tensors(tensors)?;
        if self.node_dims(m).is_none() {
            return Err(Error::Format(format!("unknown node {m}")));
        }
        if self.nodes.len() < 2 {
            return Err(Error::Format(format!(
                "cannot form a design for {m}: it is the only node"
            )));
        }
        let mut net = TensorNetwork::new();
        for (id, _) in &self.nodes {
            if id != m {
                net.add_node(id.clone(), tensors[id].clone())?;
            }
        }
        let mut cols = Vec::new();
        for (i, (a, b)) in self.bonds.iter().enumerate() {
            match (a.node == m, b.node == m) {
                (false, false) => net.add_bond(a.clone(), b.clone()),
                (true, true) => {
                    return Err(Error::Format(format!(
                        "node {m} is self-bonded; its update is not a linear problem"
                    )));
                }
                (am, _) => {
                    let freed = if am { b } else { a };
                    let label = format!("r{}", i + 1);
                    net.add_dangling(label.clone(), freed.clone());
                    cols.push(label);
                }
            }
        }
        let mut rows = Vec::new();
        for (k, s) in self.data_modes.iter().enumerate() {
            if s.node != m {
                let label = format!("d{}", k + 1);
                net.add_dangling(label.clone(), s.clone());
                rows.push(label);
            }
        }
        let a = TNMatrix::new(net, rows, cols);
        a.ensure_valid()?;
        Ok(a)
    }

    /// Node-mode numbers of `m` freed by its incident bonds, in declared
    /// bond order — the row modes of the least-squares solution.
    pub fn bond_modes_of(&self, m: &str) -> Vec<usize> {
        self.bonds
            .iter()
            .flat_map(|(a, b)| [a, b])
            .filter(|s| s.node == m)
            .map(|s| s.mode)
            .collect()
    }

    /// `(data index, node mode)` pairs owned by `m`, ascending data index —
    /// the column modes of the least-squares solution.
    pub fn own_data(&self, m: &str) -> Vec<(usize, usize)> {
        self.data_modes
            .iter()
            .enumerate()
            .filter(|(_, s)| s.node == m)
            .map(|(k, s)| (k + 1, s.mode))
            .collect()
    }

    /// Data indices not owned by `m`, ascending — the design's row modes.
    pub fn other_data(&self, m: &str) -> Vec<usize> {
        self.data_modes
            .iter()
            .enumerate()
            .filter(|(_, s)| s.node != m)
            .map(|(k, _)| k + 1)
            .collect()
    }
}

/// Canonical CP format: factor nodes `a1..aN` (modes: data, rank) bonded to
/// a fixed diagonal weight node `lam`.
pub fn cp_format(dims: &[usize], r: usize) -> Result<TnFormat> {
    if dims.len() < 2 {
        return Err(Error::Format(format!(
            "cp needs at least 2 data modes, got {}",
            dims.len()
        )));
    }
    if r == 0 {
        return Err(Error::Format("cp rank must be positive".into()));
    }
    let n = dims.len();
    let mut nodes: Vec<(String, Vec<usize>)> = dims
        .iter()
        .enumerate()
        .map(|(j, &i)| (format!("a{}", j + 1), vec![i, r]))
        .collect();
    nodes.push(("lam".into(), vec![r; n]));
    let bonds = (1..=n)
        .map(|j| (Slot::new(format!("a{j}"), 2), Slot::new("lam", j)))
        .collect();
    let data_modes = (1..=n).map(|j| Slot::new(format!("a{j}"), 1)).collect();
    Ok(
        TnFormat::new(nodes, bonds, data_modes, vec!["lam".into()], None)?
            .with_kind(FormatKind::Cp),
    )
}

/// Canonical tensor-ring format: cores `c1..cN` of shape
/// `(rank[j-1], dims[j], rank[j])`, `rank[0] = rank[N]` closing the ring.
/// Bond `j` is the edge between cores `j` and `j+1`.
pub fn tr_format(dims: &[usize], ranks: &[usize]) -> Result<TnFormat> {
    let n = dims.len();
    if n < 2 {
        return Err(Error::Format(format!(
            "tr needs at least 2 data modes, got {n}"
        )));
    }
    if ranks.len() != n {
        return Err(Error::Format(format!(
            "tr needs {n} ranks (one per edge), got {}",
            ranks.len()
        )));
    }
    if ranks.iter().any(|&r| r == 0) {
        return Err(Error::Format("tr ranks must be positive".into()));
    }
    let left = |j: usize| ranks[(j + n - 2) % n]; // rank of edge j-1
    let nodes = dims
        .iter()
        .enumerate()
        .map(|(j0, &i)| (format!("c{}", j0 + 1), vec![left(j0 + 1), i, ranks[j0]]))
        .collect();
    let bonds = (1..=n)
        .map(|j| {
            (
                Slot::new(format!("c{j}"), 3),
                Slot::new(format!("c{}", j % n + 1), 1),
            )
        })
        .collect();
    let data_modes = (1..=n).map(|j| Slot::new(format!("c{j}"), 2)).collect();
    Ok(
        TnFormat::new(nodes, bonds, data_modes, Vec::new(), None)?
            .with_kind(FormatKind::TensorRing),
    )
}

#[derive(Deserialize)]
struct NodeDecl {
    id: String,
    n_modes: usize,
}

/// On-disk schema; see `TnFormat::from_toml_str` for the layout.
#[derive(Deserialize)]
struct FormatFile {
    nodes: Vec<NodeDecl>,
    extents: BTreeMap<String, usize>,
    bonds: Vec<[String; 2]>,
    data_modes: Vec<String>,
    #[serde(default)]
    fixed_diagonal: Vec<String>,
    #[serde(default)]
    update_order: Option<Vec<String>>,
}

fn parse_slot(s: &str) -> Result<Slot> {
    let (node, mode) = s
        .rsplit_once('.')
        .ok_or_else(|| Error::Parse(format!("slot {s:?} is not of the form node.mode")))?;
    let mode: usize = mode
        .parse()
        .map_err(|_| Error::Parse(format!("slot {s:?} has a bad mode number")))?;
    if node.is_empty() || mode == 0 {
        return Err(Error::Parse(format!(
            "slot {s:?} needs a node id and a 1-based mode"
        )));
    }
    Ok(Slot::new(node, mode))
}

impl TnFormat {
    /// Parses the TOML format description:
    ///
    /// ```toml
    /// bonds = [["a1.2", "a2.2"]]
    /// data_modes = ["a1.1", "a2.1"]
    /// fixed_diagonal = []          # optional
    /// update_order = ["a1", "a2"]  # optional
    ///
    /// [[nodes]]
    /// id = "a1"
    /// n_modes = 2
    ///
    /// [[nodes]]
    /// id = "a2"
    /// n_modes = 2
    ///
    /// [extents]
    /// "a1.1" = 10
    /// "a1.2" = 3
    /// "a2.1" = 8
    /// "a2.2" = 3
    /// ```
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let file: FormatFile = toml::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        let mut extents: BTreeMap<Slot, usize> = BTreeMap::new();
        for (k, v) in &file.extents {
            extents.insert(parse_slot(k)?, *v);
        }
        let mut nodes = Vec::new();
        for decl in &file.nodes {
            let mut dims = Vec::with_capacity(decl.n_modes);
            for mode in 1..=decl.n_modes {
                let slot = Slot::new(decl.id.clone(), mode);
                let e = extents
                    .remove(&slot)
                    .ok_or_else(|| Error::Format(format!("missing extent for slot {slot}")))?;
                dims.push(e);
            }
            nodes.push((decl.id.clone(), dims));
        }
        if let Some((slot, _)) = extents.into_iter().next() {
            return Err(Error::Format(format!(
                "extent given for undeclared slot {slot}"
            )));
        }
        let bonds = file
            .bonds
            .iter()
            .map(|[a, b]| Ok((parse_slot(a)?, parse_slot(b)?)))
            .collect::<Result<Vec<_>>>()?;
        let data_modes = file
            .data_modes
            .iter()
            .map(|s| parse_slot(s))
            .collect::<Result<Vec<_>>>()?;
        TnFormat::new(
            nodes,
            bonds,
            data_modes,
            file.fixed_diagonal,
            file.update_order,
        )
    }
}
