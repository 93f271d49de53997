use std::collections::{BTreeMap, HashMap, VecDeque};

use nalgebra::DMatrix;

use super::{CellError, DistanceMatrix};
use crate::grid::Network;

/// Assignment of every network bus to one of `k` cells.
#[derive(Debug, Clone, PartialEq)]
pub struct CellPartition {
    pub k: usize,
    /// Bus id → cell index, for all buses of the network.
    pub cell_of: BTreeMap<String, usize>,
    /// Buses that took part in clustering (PQ buses), in matrix order.
    pub clustered: Vec<String>,
    /// Controllable, model-internal generators per cell.
    pub devices: Vec<Vec<String>>,
}

impl CellPartition {
    /// Buses of one cell in id order.
    pub fn members(&self, cell: usize) -> Vec<&str> {
        self.cell_of
            .iter()
            .filter(|(_, &c)| c == cell)
            .map(|(b, _)| b.as_str())
            .collect()
    }

    /// PQ buses of one cell in matrix order.
    pub fn clustered_members(&self, cell: usize) -> Vec<&str> {
        self.clustered
            .iter()
            .filter(|b| self.cell_of[b.as_str()] == cell)
            .map(String::as_str)
            .collect()
    }

    /// Errors if some cell has no controllable device.
    pub fn validate_for_control(&self) -> Result<(), CellError> {
        match self.devices.iter().position(Vec::is_empty) {
            Some(cell) => Err(CellError::NoControllableDevice(cell)),
            None => Ok(()),
        }
    }

    /// True if every cell induces a connected subgraph of `net`.
    pub fn is_contiguous(&self, net: &Network) -> bool {
        let adj = net.adjacency();
        (0..self.k).all(|cell| {
            let members = self.members(cell);
            let Some(&start) = members.first() else {
                return false;
            };
            let mut seen = vec![start];
            let mut queue = VecDeque::from([start]);
            while let Some(bus) = queue.pop_front() {
                for &next in &adj[bus] {
                    if self.cell_of.get(next) == Some(&cell) && !seen.contains(&next) {
                        seen.push(next);
                        queue.push_back(next);
                    }
                }
            }
            seen.len() == members.len()
        })
    }

    /// Renders `cell,bus` lines, cells ascending, buses by id.
    pub fn listing(&self) -> String {
        let mut out = String::from("cell,bus,devices\n");
        for cell in 0..self.k {
            for bus in self.members(cell) {
                out.push_str(&format!("{},{},{}\n", cell + 1, bus, self.devices[cell].join(" ")));
            }
        }
        out
    }
}

/// Average-linkage agglomerative clustering of a symmetric dissimilarity
/// matrix into `k` groups.
///
/// Returns a label per row. Labels are ordered by each group's lowest member
/// index; equal linkage distances merge the pair with the lowest indices.
pub fn cluster_indices(dissimilarity: &DMatrix<f64>, k: usize) -> Result<Vec<usize>, CellError> {
    let n = dissimilarity.nrows();
    if k == 0 {
        return Err(CellError::ZeroCells);
    }
    if k > n {
        return Err(CellError::TooManyCells { k, buses: n });
    }
    // Clusters ordered by their lowest member.
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut link: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| dissimilarity[(i, j)]).collect()).collect();

    while clusters.len() > k {
        let m = clusters.len();
        let mut best = (f64::INFINITY, 0, 1);
        for a in 0..m {
            for b in (a + 1)..m {
                if link[a][b] < best.0 {
                    best = (link[a][b], a, b);
                }
            }
        }
        let (_, a, b) = best;
        let (na, nb) = (clusters[a].len() as f64, clusters[b].len() as f64);
        for c in 0..m {
            if c != a && c != b {
                let merged = (na * link[a][c] + nb * link[b][c]) / (na + nb);
                link[a][c] = merged;
                link[c][a] = merged;
            }
        }
        let moved = clusters.remove(b);
        clusters[a].extend(moved);
        clusters[a].sort_unstable();
        link.remove(b);
        for row in &mut link {
            row.remove(b);
        }
    }

    let mut labels = vec![0; n];
    for (label, members) in clusters.iter().enumerate() {
        for &i in members {
            labels[i] = label;
        }
    }
    Ok(labels)
}

/// Clusters the PQ buses of `d_norm` into `k` cells on the max-symmetrized
/// matrix, then attaches the remaining buses (slack, PV) to the cell of their
/// lowest-impedance neighbour.
pub fn cluster_cells(d_norm: &DistanceMatrix, k: usize, net: &Network) -> Result<CellPartition, CellError> {
    let labels = cluster_indices(&d_norm.symmetrized(), k)?;
    let mut cell_of: BTreeMap<String, usize> =
        d_norm.bus_ids.iter().cloned().zip(labels.iter().copied()).collect();

    let bus_order: HashMap<&str, usize> =
        net.buses.iter().enumerate().map(|(i, b)| (b.id.as_str(), i)).collect();
    loop {
        let mut changed = false;
        for bus in &net.buses {
            if cell_of.contains_key(&bus.id) {
                continue;
            }
            let nearest = net
                .branches
                .iter()
                .filter_map(|br| {
                    let other = if br.from_bus == bus.id {
                        &br.to_bus
                    } else if br.to_bus == bus.id {
                        &br.from_bus
                    } else {
                        return None;
                    };
                    let cell = *cell_of.get(other)?;
                    let z = br.r_per_km.hypot(br.x_per_km) * br.length_km;
                    Some((z, bus_order[other.as_str()], cell))
                })
                .min_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
            if let Some((_, _, cell)) = nearest {
                cell_of.insert(bus.id.clone(), cell);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    // Buses with no path to a clustered bus join cell 0.
    for bus in &net.buses {
        cell_of.entry(bus.id.clone()).or_insert(0);
    }

    let mut devices = vec![Vec::new(); k];
    for gen in net.generators.iter().filter(|g| g.controllable && !g.external) {
        devices[cell_of[&gen.bus]].push(gen.id.clone());
    }
    for list in &mut devices {
        list.sort();
    }

    Ok(CellPartition { k, cell_of, clustered: d_norm.bus_ids.clone(), devices })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blocks() -> DMatrix<f64> {
        DMatrix::from_fn(6, 6, |i, j| {
            if i == j {
                0.0
            } else if (i < 3) == (j < 3) {
                0.1
            } else {
                0.9
            }
        })
    }

    #[test]
    fn one_cluster_holds_everything() {
        assert_eq!(cluster_indices(&blocks(), 1).unwrap(), vec![0; 6]);
    }

    #[test]
    fn block_structure_recovered() {
        assert_eq!(cluster_indices(&blocks(), 2).unwrap(), vec![0, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn singletons_at_k_equal_n() {
        assert_eq!(cluster_indices(&blocks(), 6).unwrap(), vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn k_bounds() {
        assert!(matches!(cluster_indices(&blocks(), 7), Err(CellError::TooManyCells { k: 7, buses: 6 })));
        assert!(matches!(cluster_indices(&blocks(), 0), Err(CellError::ZeroCells)));
    }

    #[test]
    fn ties_merge_lowest_indices_first() {
        // All distances equal: merges proceed (0,1), then ({0,1},2), ...
        let d = DMatrix::from_fn(4, 4, |i, j| if i == j { 0.0 } else { 1.0 });
        assert_eq!(cluster_indices(&d, 3).unwrap(), vec![0, 0, 1, 2]);
        assert_eq!(cluster_indices(&d, 2).unwrap(), vec![0, 0, 0, 1]);
    }
}
