//! Reference implementations by exhaustive enumeration.
//!
//! Everything here evaluates network values straight from the definition —
//! assign an index to every edge, multiply one entry per node, sum — with no
//! shared machinery with the pairwise contraction engine. Exponential cost;
//! intended for small cross-check instances only.

use crate::error::{Error, Result};
use crate::network::{Slot, TNMatrix, TensorNetwork};
use crate::tensor::{linear_index, DenseMatrix, DenseTensor};

/// An edge of the network seen as a hypergraph on slots: either a bond
/// (internal, summed) or a dangling edge (external, free).
struct Edges {
    /// per-edge extent, bonds first then dangling in declaration order
    extents: Vec<usize>,
    n_bonds: usize,
    /// for each node: (edge index, 0-based mode) pairs covering every mode
    node_edges: Vec<(String, Vec<(usize, usize)>)>,
}

fn index_edges(net: &TensorNetwork) -> Result<Edges> {
    net.ensure_valid()?;
    let mut extents = Vec::new();
    let mut slot_edge: Vec<(Slot, usize)> = Vec::new();
    for (a, b) in net.bonds() {
        let e = extents.len();
        extents.push(net.slot_extent(a).expect("validated"));
        slot_edge.push((a.clone(), e));
        slot_edge.push((b.clone(), e));
    }
    let n_bonds = extents.len();
    for (_, slot) in net.dangling() {
        let e = extents.len();
        extents.push(net.slot_extent(slot).expect("validated"));
        slot_edge.push((slot.clone(), e));
    }
    let mut node_edges = Vec::new();
    for (id, t) in net.nodes() {
        let mut entries = Vec::new();
        for mode in 1..=t.ndim() {
            let slot = Slot::new(id.clone(), mode);
            match slot_edge.iter().find(|(s, _)| *s == slot) {
                Some((_, e)) => entries.push((*e, mode - 1)),
                None => {
                    // validated: unreferenced slots have extent 1, index pinned
                    debug_assert_eq!(t.dims()[mode - 1], 1);
                }
            }
        }
        node_edges.push((id.clone(), entries));
    }
    Ok(Edges {
        extents,
        n_bonds,
        node_edges,
    })
}

/// Network value at a full edge assignment (1-based indices per edge).
fn term(net: &TensorNetwork, edges: &Edges, assign: &[usize]) -> f64 {
    let mut prod = 1.0;
    for (id, entries) in &edges.node_edges {
        let t = net.node(id).expect("validated");
        let mut multi = vec![1usize; t.ndim()];
        for &(e, mode0) in entries {
            multi[mode0] = assign[e];
        }
        prod *= t.get(&multi);
        if prod == 0.0 {
            return 0.0;
        }
    }
    prod
}

fn for_each_assignment(extents: &[usize], mut f: impl FnMut(&[usize])) {
    let mut assign = vec![1usize; extents.len()];
    loop {
        f(&assign);
        let mut k = 0;
        loop {
            if k == extents.len() {
                return;
            }
            assign[k] += 1;
            if assign[k] <= extents[k] {
                break;
            }
            assign[k] = 1;
            k += 1;
        }
    }
}

/// Contracts by full enumeration. Result modes follow the dangling order,
/// exactly like the engine's `contract`.
pub fn contract(net: &TensorNetwork) -> Result<DenseTensor> {
    if net.nodes().is_empty() {
        return Err(Error::Plan("cannot contract an empty network".into()));
    }
    let edges = index_edges(net)?;
    let out_extents = edges.extents[edges.n_bonds..].to_vec();
    let bond_extents = edges.extents[..edges.n_bonds].to_vec();
    let mut out = DenseTensor::zeros(out_extents.clone());
    for_each_assignment(&out_extents, |free| {
        let mut acc = 0.0;
        let mut assign = vec![0usize; edges.extents.len()];
        assign[edges.n_bonds..].copy_from_slice(free);
        for_each_assignment(&bond_extents, |bound| {
            assign[..edges.n_bonds].copy_from_slice(bound);
            acc += term(net, &edges, &assign);
        });
        let off = if out_extents.is_empty() {
            1
        } else {
            linear_index(free, &out_extents).expect("in range")
        };
        out.values_mut()[off - 1] = acc;
    });
    Ok(out)
}

/// Materializes a TN matrix entry by entry from the definition: entry
/// `(r, c)` is the network value at the row/column multi-indices decoded
/// from the linear indices `r` and `c`.
pub fn materialize(a: &TNMatrix) -> Result<DenseMatrix> {
    a.ensure_valid()?;
    let t = contract(&a.net)?;
    let row_extents = a.row_extents();
    let col_extents = a.col_extents();
    let rows: usize = row_extents.iter().product();
    let cols: usize = col_extents.iter().product();
    // dangling order -> label -> position
    let positions: Vec<usize> = {
        let order: Vec<&str> = a.net.dangling().iter().map(|(l, _)| l.as_str()).collect();
        a.row_labels
            .iter()
            .chain(&a.col_labels)
            .map(|l| order.iter().position(|o| o == l).expect("validated"))
            .collect()
    };
    let mut out = DenseMatrix::zeros(rows, cols);
    for c in 1..=cols {
        let cm = crate::tensor::multi_index(c, &col_extents).expect("in range");
        for r in 1..=rows {
            let rm = crate::tensor::multi_index(r, &row_extents).expect("in range");
            let mut full = vec![1usize; a.net.dangling().len()];
            for (k, &i) in rm.iter().chain(cm.iter()).enumerate() {
                full[positions[k]] = i;
            }
            out.set(r, c, t.get(&full));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bruteforce_single_node_is_identity() {
        let mut net = TensorNetwork::new();
        let t = DenseTensor::new(vec![2, 3], (1..=6).map(f64::from).collect()).unwrap();
        net.add_node("t", t.clone()).unwrap();
        net.add_dangling("i", Slot::new("t", 1));
        net.add_dangling("j", Slot::new("t", 2));
        let out = contract(&net).unwrap();
        assert_eq!(out, t);
    }

    #[test]
    fn bruteforce_trace_and_product() {
        // tr(A B) for small A, B
        let a = DenseMatrix::from_rows(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = DenseMatrix::from_rows(3, 2, &[1.0, 0.5, -1.0, 2.0, 0.0, 1.0]).unwrap();
        let mut net = TensorNetwork::new();
        net.add_node("a", a.clone().into_tensor()).unwrap();
        net.add_node("b", b.clone().into_tensor()).unwrap();
        net.add_bond(Slot::new("a", 2), Slot::new("b", 1));
        net.add_bond(Slot::new("b", 2), Slot::new("a", 1));
        let out = contract(&net).unwrap();
        let ab = a.matmul(&b).unwrap();
        let tr = ab.get(1, 1) + ab.get(2, 2);
        assert_eq!(out.dims(), &[] as &[usize]);
        assert!((out.values()[0] - tr).abs() < 1e-12);
    }
}
