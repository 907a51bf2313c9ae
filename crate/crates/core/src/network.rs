//! Tensor networks: nodes joined by bonds, with ordered dangling edges.
//!
//! A network's value is the tensor obtained by summing over every bond and
//! leaving one result mode per dangling edge, in the dangling list's order.
//! A [`TNMatrix`] additionally splits the dangling edges into ordered row and
//! column lists; its matrix elements are addressed by the linear indices over
//! those lists.
//!
//! Contraction happens pairwise along a [`ContractionPlan`]; plans come from
//! the caller or from [`greedy_plan`], which repeatedly merges the bonded
//! pair with the smallest pairwise flop count (ties broken by smallest
//! `(node, node)` pair, lexicographically). Bonds within a single node
//! (traces) are resolved by self-trace passes; disconnected components are
//! combined last via outer products.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{linear_index, strides, DenseMatrix, DenseTensor};

/// One mode of one node, identified by node id and 1-based mode number.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Slot {
    pub node: String,
    pub mode: usize,
}

impl Slot {
    pub fn new(node: impl Into<String>, mode: usize) -> Self {
        Self {
            node: node.into(),
            mode,
        }
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.node, self.mode)
    }
}

/// A structural defect found by [`TensorNetwork::validate`].
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    /// Bond or dangling entry references a node that is not present.
    UnknownNode(Slot),
    /// Mode number is zero or larger than the node's mode count.
    BadMode { slot: Slot, n_modes: usize },
    /// The two ends of a bond have different extents.
    ExtentMismatch {
        a: Slot,
        b: Slot,
        ea: usize,
        eb: usize,
    },
    /// A bond pairs a slot with itself.
    SelfPairedSlot(Slot),
    /// A slot appears in more than one bond/dangling entry.
    SlotReused(Slot),
    /// A slot with extent > 1 is neither bonded nor dangling.
    SlotUnreferenced { slot: Slot, extent: usize },
    /// Two dangling entries share a label.
    DuplicateLabel(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::UnknownNode(s) => write!(f, "slot {s} references unknown node"),
            Violation::BadMode { slot, n_modes } => {
                write!(f, "slot {slot} out of range (node has {n_modes} modes)")
            }
            Violation::ExtentMismatch { a, b, ea, eb } => {
                write!(f, "bond {a} -- {b} joins extents {ea} and {eb}")
            }
            Violation::SelfPairedSlot(s) => write!(f, "bond pairs {s} with itself"),
            Violation::SlotReused(s) => write!(f, "slot {s} used more than once"),
            Violation::SlotUnreferenced { slot, extent } => {
                write!(
                    f,
                    "slot {slot} (extent {extent}) is neither bonded nor dangling"
                )
            }
            Violation::DuplicateLabel(l) => write!(f, "dangling label {l:?} repeated"),
        }
    }
}

/// A tensor network. Nodes are named tensors; bonds join two slots and are
/// summed over; dangling entries give external labels to free slots, and
/// their order fixes the mode order of contraction results.
///
/// Slots of extent 1 may be left unreferenced (this is what indexing-fixing
/// leaves behind); they are squeezed out of contraction results.
#[derive(Clone, Debug, Default)]
pub struct TensorNetwork {
    nodes: BTreeMap<String, DenseTensor>,
    bonds: Vec<(Slot, Slot)>,
    dangling: Vec<(String, Slot)>,
}

impl TensorNetwork {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a named tensor node. Errors if the id is already taken.
    pub fn add_node(&mut self, id: impl Into<String>, tensor: DenseTensor) -> Result<()> {
        let id = id.into();
        if self.nodes.contains_key(&id) {
            return Err(Error::Plan(format!("node {id:?} already exists")));
        }
        self.nodes.insert(id, tensor);
        Ok(())
    }

    /// Declares a bond between two slots (self-bonds on one node are allowed).
    pub fn add_bond(&mut self, a: Slot, b: Slot) {
        self.bonds.push((a, b));
    }

    /// Appends a dangling edge; its position in the dangling list determines
    /// the corresponding result mode.
    pub fn add_dangling(&mut self, label: impl Into<String>, slot: Slot) {
        self.dangling.push((label.into(), slot));
    }

    pub fn nodes(&self) -> &BTreeMap<String, DenseTensor> {
        &self.nodes
    }

    pub fn node(&self, id: &str) -> Option<&DenseTensor> {
        self.nodes.get(id)
    }

    pub fn bonds(&self) -> &[(Slot, Slot)] {
        &self.bonds
    }

    pub fn dangling(&self) -> &[(String, Slot)] {
        &self.dangling
    }

    pub fn dangling_slot(&self, label: &str) -> Option<&Slot> {
        self.dangling
            .iter()
            .find(|(l, _)| l == label)
            .map(|(_, s)| s)
    }

    /// Extent of the slot, if the node exists and the mode is in range.
    pub fn slot_extent(&self, slot: &Slot) -> Option<usize> {
        let t = self.nodes.get(&slot.node)?;
        if slot.mode == 0 || slot.mode > t.ndim() {
            return None;
        }
        Some(t.dims()[slot.mode - 1])
    }

    /// Extent of a dangling edge by label.
    pub fn label_extent(&self, label: &str) -> Option<usize> {
        self.slot_extent(self.dangling_slot(label)?)
    }

    /// Checks structural consistency and returns every violation found.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut usage: HashMap<&Slot, usize> = HashMap::new();
        let check_slot = |s: &Slot, out: &mut Vec<Violation>| -> bool {
            match self.nodes.get(&s.node) {
                None => {
                    out.push(Violation::UnknownNode(s.clone()));
                    false
                }
                Some(t) if s.mode == 0 || s.mode > t.ndim() => {
                    out.push(Violation::BadMode {
                        slot: s.clone(),
                        n_modes: t.ndim(),
                    });
                    false
                }
                Some(_) => true,
            }
        };
        for (a, b) in &self.bonds {
            let oka = check_slot(a, &mut out);
            let okb = check_slot(b, &mut out);
            if a == b {
                out.push(Violation::SelfPairedSlot(a.clone()));
                continue;
            }
            if oka {
                *usage.entry(a).or_insert(0) += 1;
            }
            if okb {
                *usage.entry(b).or_insert(0) += 1;
            }
            if oka && okb {
                let (ea, eb) = (self.slot_extent(a).unwrap(), self.slot_extent(b).unwrap());
                if ea != eb {
                    out.push(Violation::ExtentMismatch {
                        a: a.clone(),
                        b: b.clone(),
                        ea,
                        eb,
                    });
                }
            }
        }
        let mut labels_seen: HashMap<&str, usize> = HashMap::new();
        for (label, s) in &self.dangling {
            *labels_seen.entry(label.as_str()).or_insert(0) += 1;
            if check_slot(s, &mut out) {
                *usage.entry(s).or_insert(0) += 1;
            }
        }
        for (label, count) in labels_seen {
            if count > 1 {
                out.push(Violation::DuplicateLabel(label.to_string()));
            }
        }
        for (slot, count) in &usage {
            if *count > 1 {
                out.push(Violation::SlotReused((*slot).clone()));
            }
        }
        for (id, t) in &self.nodes {
            for mode in 1..=t.ndim() {
                let s = Slot::new(id.clone(), mode);
                let extent = t.dims()[mode - 1];
                if !usage.contains_key(&s) && extent > 1 {
                    out.push(Violation::SlotUnreferenced { slot: s, extent });
                }
            }
        }
        // deterministic report order
        out.sort_by_key(|v| format!("{v}"));
        out
    }

    pub(crate) fn ensure_valid(&self) -> Result<()> {
        let violations = self.validate();
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid(
                violations.iter().map(|v| v.to_string()).collect(),
            ))
        }
    }

    /// Adds a mirrored copy of `other` with `suffix` appended to every node
    /// id, returning the suffix used. Bonds inside `other` are copied;
    /// dangling entries are not.
    fn absorb_mirror(&mut self, other: &TensorNetwork, suffix: &str) -> Result<()> {
        for (id, t) in &other.nodes {
            self.add_node(format!("{id}{suffix}"), t.clone())?;
        }
        for (a, b) in &other.bonds {
            self.add_bond(
                Slot::new(format!("{}{suffix}", a.node), a.mode),
                Slot::new(format!("{}{suffix}", b.node), b.mode),
            );
        }
        Ok(())
    }

    /// Shortest run of `~` that, appended to node ids and labels, collides
    /// with nothing already present.
    fn fresh_suffix(&self) -> String {
        let mut sfx = "~".to_string();
        loop {
            let id_clash = self.nodes.keys().any(|id| {
                let candidate = format!("{id}{sfx}");
                self.nodes.contains_key(&candidate)
            });
            let label_clash = self.dangling.iter().any(|(l, _)| {
                let candidate = format!("{l}{sfx}");
                self.dangling.iter().any(|(l2, _)| *l2 == candidate)
            });
            if !id_clash && !label_clash {
                return sfx;
            }
            sfx.push('~');
        }
    }
}

/// A tensor network viewed as a matrix: the dangling labels are split into
/// an ordered row list and an ordered column list. Entry `(r, c)` is the
/// network value at the multi-indices decoded from the linear indices `r`
/// and `c` over the row and column extents.
#[derive(Clone, Debug)]
pub struct TNMatrix {
    pub net: TensorNetwork,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
}

impl TNMatrix {
    pub fn new(net: TensorNetwork, row_labels: Vec<String>, col_labels: Vec<String>) -> Self {
        Self {
            net,
            row_labels,
            col_labels,
        }
    }

    /// Network validation plus the row/column partition check.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = self.net.validate();
        let mut labels: Vec<&str> = self
            .row_labels
            .iter()
            .chain(&self.col_labels)
            .map(|s| s.as_str())
            .collect();
        labels.sort_unstable();
        let mut net_labels: Vec<&str> = self.net.dangling.iter().map(|(l, _)| l.as_str()).collect();
        net_labels.sort_unstable();
        if labels != net_labels {
            // reuse DuplicateLabel for any partition defect, with a synthetic label
            out.push(Violation::DuplicateLabel(
                "row/col labels do not partition the dangling set".into(),
            ));
        }
        out
    }

    pub(crate) fn ensure_valid(&self) -> Result<()> {
        let violations = self.validate();
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid(
                violations.iter().map(|v| v.to_string()).collect(),
            ))
        }
    }

    pub fn row_extents(&self) -> Vec<usize> {
        self.row_labels
            .iter()
            .map(|l| self.net.label_extent(l).unwrap_or(0))
            .collect()
    }

    pub fn col_extents(&self) -> Vec<usize> {
        self.col_labels
            .iter()
            .map(|l| self.net.label_extent(l).unwrap_or(0))
            .collect()
    }

    /// Logical `(rows, cols)` without materializing anything.
    pub fn shape(&self) -> (u128, u128) {
        let rows = self.row_extents().iter().map(|&e| e as u128).product();
        let cols = self.col_extents().iter().map(|&e| e as u128).product();
        (rows, cols)
    }
}

/// Ordered pairwise merge steps; each step merges its second node into its
/// first. A full plan ends with a single node.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ContractionPlan {
    pub steps: Vec<(String, String)>,
}

/// Plans a full contraction greedily: among bonded pairs, merge the one with
/// the smallest pairwise flop count, breaking ties by the smallest
/// `(node, node)` pair in lexicographic order. Once no bonds remain between
/// distinct nodes, remaining components are combined by outer products under
/// the same rule.
pub fn greedy_plan(net: &TensorNetwork) -> Result<ContractionPlan> {
    net.ensure_valid()?;
    if net.nodes.is_empty() {
        return Err(Error::Plan("cannot plan an empty network".into()));
    }
    // free extents per node: slots not consumed by self-bonds
    let mut owner: HashMap<Slot, String> = HashMap::new();
    let mut extents: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (id, t) in &net.nodes {
        let mut self_bonded = vec![false; t.ndim()];
        for (a, b) in &net.bonds {
            if a.node == *id && b.node == *id {
                self_bonded[a.mode - 1] = true;
                self_bonded[b.mode - 1] = true;
            }
        }
        let mut free = Vec::new();
        for mode in 1..=t.ndim() {
            if !self_bonded[mode - 1] {
                owner.insert(Slot::new(id.clone(), mode), id.clone());
                free.push(t.dims()[mode - 1]);
            }
        }
        extents.insert(id.clone(), free);
    }
    let mut live_bonds: Vec<(Slot, Slot)> = net
        .bonds
        .iter()
        .filter(|(a, b)| a.node != b.node)
        .cloned()
        .collect();

    let mut steps = Vec::new();
    while extents.len() > 1 {
        // shared extent products per unordered live pair
        let mut shared: BTreeMap<(String, String), u128> = BTreeMap::new();
        for (a, b) in &live_bonds {
            let (na, nb) = (owner[a].clone(), owner[b].clone());
            if na == nb {
                continue; // became a self-bond; absorbed by its merge
            }
            let key = if na <= nb { (na, nb) } else { (nb, na) };
            let e = net.slot_extent(a).unwrap() as u128;
            *shared.entry(key).or_insert(1) = shared.get(&key).copied().unwrap_or(1) * e;
        }
        let product = |id: &str| -> u128 { extents[id].iter().map(|&e| e as u128).product() };
        let mut best: Option<(u128, (String, String))> = None;
        if !shared.is_empty() {
            for ((a, b), sh) in &shared {
                // free products exclude the shared bonds
                let cost = (product(a) / sh) * (product(b) / sh) * sh;
                if best.as_ref().map_or(true, |(c, k)| {
                    cost < *c || (cost == *c && (a, b) < (&k.0, &k.1))
                }) {
                    best = Some((cost, (a.clone(), b.clone())));
                }
            }
        } else {
            let ids: Vec<&String> = extents.keys().collect();
            for i in 0..ids.len() {
                for j in (i + 1)..ids.len() {
                    let (a, b) = (ids[i], ids[j]);
                    let cost = product(a) * product(b);
                    if best.as_ref().map_or(true, |(c, k)| {
                        cost < *c || (cost == *c && (a, b) < (&&k.0, &&k.1))
                    }) {
                        best = Some((cost, (a.clone(), b.clone())));
                    }
                }
            }
        }
        let (_, (a, b)) = best.expect("at least two live nodes");
        // merge b into a in the simulation
        let sh = shared.get(&(a.clone(), b.clone())).copied().unwrap_or(1);
        let merged_free = (product(&a) / sh) * (product(&b) / sh);
        // rebuild a's extent list coarsely: planning only needs products, so
        // collapse to a single pseudo-extent (safe because costs multiply)
        let merged_free_usize = usize::try_from(merged_free).unwrap_or(usize::MAX);
        extents.insert(a.clone(), vec![merged_free_usize.max(1)]);
        extents.remove(&b);
        // drop bonds now internal to a, retarget ownership
        for (sa, sb) in &live_bonds {
            for s in [sa, sb] {
                if owner[s] == b {
                    owner.insert(s.clone(), a.clone());
                }
            }
        }
        live_bonds.retain(|(sa, sb)| owner[sa] != owner[sb]);
        steps.push((a, b));
    }
    Ok(ContractionPlan { steps })
}

struct WorkNode {
    tensor: DenseTensor,
    slots: Vec<Slot>,
}

struct Work {
    nodes: BTreeMap<String, WorkNode>,
    bonds: Vec<(Slot, Slot)>,
    owner: HashMap<Slot, String>,
}

impl Work {
    fn build(net: &TensorNetwork) -> Work {
        let mut nodes = BTreeMap::new();
        let mut owner = HashMap::new();
        for (id, t) in &net.nodes {
            let slots: Vec<Slot> = (1..=t.ndim()).map(|m| Slot::new(id.clone(), m)).collect();
            for s in &slots {
                owner.insert(s.clone(), id.clone());
            }
            nodes.insert(
                id.clone(),
                WorkNode {
                    tensor: t.clone(),
                    slots,
                },
            );
        }
        Work {
            nodes,
            bonds: net.bonds.clone(),
            owner,
        }
    }

    /// Resolves all self-bonds on node `id` in one pass.
    fn self_trace(&mut self, id: &str) {
        let node = &self.nodes[id];
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        let mut used = Vec::new();
        for (idx, (a, b)) in self.bonds.iter().enumerate() {
            if self.owner.get(a) == Some(&id.to_string())
                && self.owner.get(b) == Some(&id.to_string())
            {
                let pa = node
                    .slots
                    .iter()
                    .position(|s| s == a)
                    .expect("slot present");
                let pb = node
                    .slots
                    .iter()
                    .position(|s| s == b)
                    .expect("slot present");
                pairs.push((pa, pb));
                used.push(idx);
            }
        }
        if pairs.is_empty() {
            return;
        }
        let node = self.nodes.remove(id).unwrap();
        let traced = trace_pairs(&node.tensor, &pairs);
        let mut in_pair = vec![false; node.slots.len()];
        for &(a, b) in &pairs {
            in_pair[a] = true;
            in_pair[b] = true;
        }
        let slots: Vec<Slot> = node
            .slots
            .iter()
            .enumerate()
            .filter(|(i, _)| !in_pair[*i])
            .map(|(_, s)| s.clone())
            .collect();
        for &(a, b) in &pairs {
            self.owner.remove(&node.slots[a]);
            self.owner.remove(&node.slots[b]);
        }
        for idx in used.into_iter().rev() {
            self.bonds.remove(idx);
        }
        self.nodes.insert(
            id.to_string(),
            WorkNode {
                tensor: traced,
                slots,
            },
        );
    }

    /// Merges `b` into `a`, contracting every bond between them.
    fn merge(&mut self, a: &str, b: &str) -> Result<()> {
        if a == b {
            return Err(Error::Plan(format!("cannot merge node {a:?} with itself")));
        }
        let (na, nb) = match (self.nodes.remove(a), self.nodes.remove(b)) {
            (Some(x), Some(y)) => (x, y),
            _ => {
                return Err(Error::Plan(format!(
                    "merge ({a:?}, {b:?}) references a dead node"
                )))
            }
        };
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        let mut used = Vec::new();
        for (idx, (s0, s1)) in self.bonds.iter().enumerate() {
            let (o0, o1) = (self.owner.get(s0), self.owner.get(s1));
            let (pa, pb) = if o0 == Some(&a.to_string()) && o1 == Some(&b.to_string()) {
                (s0, s1)
            } else if o0 == Some(&b.to_string()) && o1 == Some(&a.to_string()) {
                (s1, s0)
            } else {
                continue;
            };
            let ia = na.slots.iter().position(|s| s == pa).expect("slot present");
            let ib = nb.slots.iter().position(|s| s == pb).expect("slot present");
            pairs.push((ia, ib));
            used.push(idx);
        }
        let merged = contract_pair(&na.tensor, &nb.tensor, &pairs);
        let mut bonded_a = vec![false; na.slots.len()];
        let mut bonded_b = vec![false; nb.slots.len()];
        for &(ia, ib) in &pairs {
            bonded_a[ia] = true;
            bonded_b[ib] = true;
            self.owner.remove(&na.slots[ia]);
            self.owner.remove(&nb.slots[ib]);
        }
        let mut slots = Vec::new();
        for (i, s) in na.slots.iter().enumerate() {
            if !bonded_a[i] {
                slots.push(s.clone());
            }
        }
        for (i, s) in nb.slots.iter().enumerate() {
            if !bonded_b[i] {
                slots.push(s.clone());
                self.owner.insert(s.clone(), a.to_string());
            }
        }
        for idx in used.into_iter().rev() {
            self.bonds.remove(idx);
        }
        self.nodes.insert(
            a.to_string(),
            WorkNode {
                tensor: merged,
                slots,
            },
        );
        Ok(())
    }
}

/// Sums over the given (0-based) mode-position pairs of one tensor.
fn trace_pairs(t: &DenseTensor, pairs: &[(usize, usize)]) -> DenseTensor {
    let n = t.ndim();
    let mut in_pair = vec![false; n];
    for &(a, b) in pairs {
        in_pair[a] = true;
        in_pair[b] = true;
    }
    let free: Vec<usize> = (0..n).filter(|&k| !in_pair[k]).collect();
    let out_dims: Vec<usize> = free.iter().map(|&k| t.dims()[k]).collect();
    let out_strides = strides(&out_dims);
    let mut out = DenseTensor::zeros(out_dims);
    let mut midx = vec![0usize; n];
    for &v in t.values() {
        if pairs.iter().all(|&(a, b)| midx[a] == midx[b]) {
            let off: usize = free
                .iter()
                .enumerate()
                .map(|(j, &k)| midx[k] * out_strides[j])
                .sum();
            out.values_mut()[off] += v;
        }
        for k in 0..n {
            midx[k] += 1;
            if midx[k] < t.dims()[k] {
                break;
            }
            midx[k] = 0;
        }
    }
    out
}

/// Contracts two tensors over the given (0-based) mode-position pairs by
/// permuting both into matrix layout and multiplying.
fn contract_pair(a: &DenseTensor, b: &DenseTensor, pairs: &[(usize, usize)]) -> DenseTensor {
    let (na, nb) = (a.ndim(), b.ndim());
    let mut bonded_a = vec![false; na];
    let mut bonded_b = vec![false; nb];
    for &(ia, ib) in pairs {
        bonded_a[ia] = true;
        bonded_b[ib] = true;
    }
    let free_a: Vec<usize> = (0..na).filter(|&k| !bonded_a[k]).collect();
    let free_b: Vec<usize> = (0..nb).filter(|&k| !bonded_b[k]).collect();
    // a -> (free_a..., shared...), b -> (shared..., free_b...)
    let mut perm_a = free_a.clone();
    perm_a.extend(pairs.iter().map(|&(ia, _)| ia));
    let mut perm_b: Vec<usize> = pairs.iter().map(|&(_, ib)| ib).collect();
    perm_b.extend(free_b.iter().copied());
    let pa = a.permuted(&perm_a);
    let pb = b.permuted(&perm_b);
    let m: usize = free_a.iter().map(|&k| a.dims()[k]).product();
    let k: usize = pairs.iter().map(|&(ia, _)| a.dims()[ia]).product();
    let n: usize = free_b.iter().map(|&k| b.dims()[k]).product();
    let mut out_dims: Vec<usize> = free_a.iter().map(|&k| a.dims()[k]).collect();
    out_dims.extend(free_b.iter().map(|&k| b.dims()[k]));
    let mut out = DenseTensor::zeros(out_dims);
    crate::tensor::gemm(m, k, n, pa.values(), pb.values(), out.values_mut());
    out
}

/// Contracts a validated network to a dense tensor with one mode per
/// dangling edge, in dangling-list order. Uses the supplied plan, or a
/// greedy plan when none is given.
pub fn contract(net: &TensorNetwork, plan: Option<&ContractionPlan>) -> Result<DenseTensor> {
    net.ensure_valid()?;
    if net.nodes.is_empty() {
        return Err(Error::Plan("cannot contract an empty network".into()));
    }
    let owned_plan;
    let plan = match plan {
        Some(p) => p,
        None => {
            owned_plan = greedy_plan(net)?;
            &owned_plan
        }
    };
    let mut work = Work::build(net);
    let ids: Vec<String> = work.nodes.keys().cloned().collect();
    for id in &ids {
        work.self_trace(id);
    }
    for (a, b) in &plan.steps {
        work.merge(a, b)?;
    }
    if work.nodes.len() != 1 {
        return Err(Error::Plan(format!(
            "plan leaves {} nodes instead of 1",
            work.nodes.len()
        )));
    }
    let (_, last) = work.nodes.pop_first().expect("one node");
    // remaining self-bonds cannot exist: merge contracts all pairwise bonds
    debug_assert!(work.bonds.is_empty(), "unresolved bonds after full plan");

    // order result modes by the dangling list; squeeze leftover extent-1 slots
    let mut perm = Vec::with_capacity(last.slots.len());
    for (label, slot) in &net.dangling {
        match last.slots.iter().position(|s| s == slot) {
            Some(p) => perm.push(p),
            None => {
                return Err(Error::Plan(format!(
                    "dangling slot {slot} (label {label:?}) lost during contraction"
                )))
            }
        }
    }
    let mut seen = vec![false; last.slots.len()];
    for &p in &perm {
        seen[p] = true;
    }
    for (p, s) in last.slots.iter().enumerate() {
        if !seen[p] {
            debug_assert_eq!(
                last.tensor.dims()[p],
                1,
                "unlabeled slot {s} with extent > 1"
            );
            perm.push(p);
        }
    }
    let full = last.tensor.permuted(&perm);
    let kept = net.dangling.len();
    let dims = full.dims()[..kept].to_vec();
    DenseTensor::new(dims, full.into_values())
}

/// Default cap on materialized entries (`rows * cols`).
pub const DEFAULT_SIZE_GUARD: u128 = 1 << 27;

/// Contracts a TN matrix to an explicit dense matrix, refusing if
/// `rows * cols` exceeds `guard`.
pub fn materialize(a: &TNMatrix, guard: u128) -> Result<DenseMatrix> {
    a.ensure_valid()?;
    let (rows, cols) = a.shape();
    let entries = rows * cols;
    if entries > guard {
        return Err(Error::TooLarge { entries, guard });
    }
    let t = contract(&a.net, None)?;
    // dangling order -> (row_labels, col_labels) order
    let positions: HashMap<&str, usize> = a
        .net
        .dangling()
        .iter()
        .enumerate()
        .map(|(i, (l, _))| (l.as_str(), i + 1))
        .collect();
    let row_modes: Vec<usize> = a.row_labels.iter().map(|l| positions[l.as_str()]).collect();
    let col_modes: Vec<usize> = a.col_labels.iter().map(|l| positions[l.as_str()]).collect();
    crate::tensor::unfold(&t, &row_modes, &col_modes)
}

/// One row of a TN matrix, gathered by fixing every row label at `multi`
/// (1-based, in `row_labels` order) and contracting. The entries are ordered
/// by the linear column index.
pub fn matrix_row(a: &TNMatrix, multi: &[usize]) -> Result<Vec<f64>> {
    if multi.len() != a.row_labels.len() {
        return Err(Error::Index(format!(
            "row multi-index has {} entries for {} row labels",
            multi.len(),
            a.row_labels.len()
        )));
    }
    let mut net = a.net.clone();
    for (label, &idx) in a.row_labels.iter().zip(multi) {
        net = fix_index(&net, label, idx)?;
    }
    let t = contract(&net, None)?;
    // modes are the column labels in dangling order, which after fixing is
    // the original relative column order; flatten is the column linear index
    let expected: Vec<&str> = net.dangling().iter().map(|(l, _)| l.as_str()).collect();
    let want: Vec<&str> = a.col_labels.iter().map(|s| s.as_str()).collect();
    if expected != want {
        // column labels may be interleaved with rows in the dangling list;
        // reorder to declared column order
        let positions: HashMap<&str, usize> = net
            .dangling()
            .iter()
            .enumerate()
            .map(|(i, (l, _))| (l.as_str(), i + 1))
            .collect();
        let col_modes: Vec<usize> = a.col_labels.iter().map(|l| positions[l.as_str()]).collect();
        let m = crate::tensor::unfold(&t, &[], &col_modes)?;
        return Ok(m.values().to_vec());
    }
    Ok(t.into_values())
}

/// Fixes a dangling edge at a 1-based index: the owning tensor is sliced to
/// extent 1 at that mode and the label disappears; everything else is
/// untouched.
pub fn fix_index(net: &TensorNetwork, label: &str, value: usize) -> Result<TensorNetwork> {
    let slot = net
        .dangling_slot(label)
        .cloned()
        .ok_or_else(|| Error::Index(format!("no dangling edge labeled {label:?}")))?;
    let extent = net
        .slot_extent(&slot)
        .ok_or_else(|| Error::Index(format!("dangling slot {slot} is invalid")))?;
    if value == 0 || value > extent {
        return Err(Error::Index(format!(
            "index {value} out of range 1..={extent} for label {label:?}"
        )));
    }
    let mut out = net.clone();
    let t = out.nodes.get_mut(&slot.node).expect("slot owner exists");
    *t = slice_mode(t, slot.mode - 1, value - 1);
    out.dangling.retain(|(l, _)| l != label);
    Ok(out)
}

/// Keeps only index `fixed0` of mode `mode0` (both 0-based); the mode stays
/// with extent 1.
fn slice_mode(t: &DenseTensor, mode0: usize, fixed0: usize) -> DenseTensor {
    let st = strides(t.dims());
    let inner = st[mode0];
    let d = t.dims()[mode0];
    let outer = t.len() / (inner * d);
    let mut dims = t.dims().to_vec();
    dims[mode0] = 1;
    let mut values = Vec::with_capacity(inner * outer);
    for o in 0..outer {
        let base = o * inner * d + fixed0 * inner;
        values.extend_from_slice(&t.values()[base..base + inner]);
    }
    DenseTensor::new(dims, values).expect("slice preserves finiteness")
}

/// The Gram network of a TN matrix: a mirrored copy bonded to the original
/// along every row label. Contracting it yields `A^T A`; the result is a
/// square TN matrix whose rows are the original column labels and whose
/// columns are the mirrored ones.
pub fn gram_network(a: &TNMatrix) -> Result<TNMatrix> {
    a.ensure_valid()?;
    let sfx = a.net.fresh_suffix();
    let mut net = a.net.clone();
    net.absorb_mirror(&a.net, &sfx)?;
    net.dangling.clear();
    for label in &a.row_labels {
        let slot = a.net.dangling_slot(label).expect("validated").clone();
        let mirror = Slot::new(format!("{}{sfx}", slot.node), slot.mode);
        net.add_bond(slot, mirror);
    }
    let mut row_labels = Vec::new();
    let mut col_labels = Vec::new();
    for label in &a.col_labels {
        let slot = a.net.dangling_slot(label).expect("validated").clone();
        net.add_dangling(label.clone(), slot);
        row_labels.push(label.clone());
    }
    for label in &a.col_labels {
        let slot = a.net.dangling_slot(label).expect("validated").clone();
        let mlabel = format!("{label}{sfx}");
        net.add_dangling(
            mlabel.clone(),
            Slot::new(format!("{}{sfx}", slot.node), slot.mode),
        );
        col_labels.push(mlabel);
    }
    Ok(TNMatrix::new(net, row_labels, col_labels))
}

/// Builds the network whose contraction is `M^(n)`: the `A Phi A^T` network
/// with row positions `1..n-1` fixed at `prefix` in both copies, positions
/// `n+1..` bonded pairwise between the copies, and the two position-`n`
/// edges left dangling (original first). The diagonal of the contracted
/// matrix is `rank * P(prefix, i_n)`.
pub fn marginal_network(
    a: &TNMatrix,
    phi: &DenseMatrix,
    prefix: &[usize],
    n: usize,
) -> Result<TNMatrix> {
    a.ensure_valid()?;
    let nr = a.row_labels.len();
    if n == 0 || n > nr {
        return Err(Error::Index(format!("position {n} out of range 1..={nr}")));
    }
    if prefix.len() != n - 1 {
        return Err(Error::Index(format!(
            "prefix has {} entries, position {n} needs {}",
            prefix.len(),
            n - 1
        )));
    }
    let col_extents = a.col_extents();
    let csize: usize = col_extents.iter().product();
    if phi.rows() != csize || phi.cols() != csize {
        return Err(Error::Shape(format!(
            "phi is {}x{}, expected {csize}x{csize}",
            phi.rows(),
            phi.cols()
        )));
    }
    // fix the prefix first so the mirror copy shares it
    let mut fixed = a.net.clone();
    for (k, &idx) in prefix.iter().enumerate() {
        fixed = fix_index(&fixed, &a.row_labels[k], idx)?;
    }
    let sfx = fixed.fresh_suffix();
    let mut net = fixed.clone();
    net.absorb_mirror(&fixed, &sfx)?;
    net.dangling.clear();

    // phi as a (cols..., cols...) tensor; its row block attaches to the
    // original copy, its column block to the mirror
    let mut phi_dims = col_extents.clone();
    phi_dims.extend(&col_extents);
    let phi_id = {
        let mut id = "phi".to_string();
        while net.nodes.contains_key(&id) {
            id.push('~');
        }
        id
    };
    let nc = col_extents.len();
    net.add_node(
        phi_id.clone(),
        DenseTensor::new(phi_dims, phi.values().to_vec())?,
    )?;
    for (i, label) in a.col_labels.iter().enumerate() {
        let slot = a.net.dangling_slot(label).expect("validated").clone();
        let mirror = Slot::new(format!("{}{sfx}", slot.node), slot.mode);
        net.add_bond(slot, Slot::new(phi_id.clone(), i + 1));
        net.add_bond(mirror, Slot::new(phi_id.clone(), nc + i + 1));
    }
    // suffix row positions are summed against the mirror
    for label in &a.row_labels[n..] {
        let slot = a.net.dangling_slot(label).expect("validated").clone();
        let mirror = Slot::new(format!("{}{sfx}", slot.node), slot.mode);
        net.add_bond(slot, mirror);
    }
    let label_n = &a.row_labels[n - 1];
    let slot_n = a.net.dangling_slot(label_n).expect("validated").clone();
    let mirror_n = Slot::new(format!("{}{sfx}", slot_n.node), slot_n.mode);
    let mlabel = format!("{label_n}{sfx}");
    net.add_dangling(label_n.clone(), slot_n);
    net.add_dangling(mlabel.clone(), mirror_n);
    Ok(TNMatrix::new(net, vec![label_n.clone()], vec![mlabel]))
}

/// Decodes a 1-based row linear index of `a` into the row multi-index.
pub fn row_multi(a: &TNMatrix, linear: usize) -> Result<Vec<usize>> {
    crate::tensor::multi_index(linear, &a.row_extents())
}

/// Encodes a row multi-index of `a` into its 1-based linear index.
pub fn row_linear(a: &TNMatrix, multi: &[usize]) -> Result<usize> {
    linear_index(multi, &a.row_extents())
}
