use std::path::{Path, PathBuf};

use super::{ConfigError, ExperimentError};
use crate::cells::{cluster_cells, count_above, distance_pipeline, export_heatmap, CellPartition};
use crate::grid::{apply_weak_coupling_modifications, benchmark, parse_network, Network};

/// Cell structure of one network variant.
#[derive(Debug, Clone)]
pub struct CellsVariant {
    pub name: &'static str,
    pub partition: CellPartition,
    /// Normalized distances above 0.5.
    pub above_half: usize,
    /// Every cell holds a controllable device.
    pub controllable: bool,
    pub contiguous: bool,
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct CellsReport {
    pub k: usize,
    pub variants: Vec<CellsVariant>,
}

impl CellsReport {
    pub fn summary(&self) -> String {
        let mut s = String::new();
        for v in &self.variants {
            s.push_str(&format!(
                "{}: k={} above_0.5={} controllable={} contiguous={}\n",
                v.name, self.k, v.above_half, v.controllable, v.contiguous
            ));
            for cell in 0..self.k {
                s.push_str(&format!(
                    "  cell {}: {} | devices: {}\n",
                    cell + 1,
                    v.partition.members(cell).join(" "),
                    v.partition.devices[cell].join(" ")
                ));
            }
        }
        s
    }
}

fn variant(name: &'static str, net: &Network, k: usize, out_dir: &Path) -> Result<CellsVariant, ExperimentError> {
    let pipeline = distance_pipeline(net).map_err(ConfigError::from)?;
    let partition = cluster_cells(&pipeline.normalized, k, net).map_err(ConfigError::from)?;
    let (csv, svg) = export_heatmap(&pipeline.normalized, out_dir.join(format!("distance_{name}.csv")))
        .map_err(ConfigError::from)?;
    let listing = out_dir.join(format!("cells_{name}_k{k}.csv"));
    std::fs::write(&listing, partition.listing()).map_err(ExperimentError::io(&listing))?;
    Ok(CellsVariant {
        name,
        above_half: count_above(&pipeline.normalized, 0.5),
        controllable: partition.validate_for_control().is_ok(),
        contiguous: partition.is_contiguous(net),
        partition,
        files: vec![csv, svg, listing],
    })
}

/// Distance heat map, partition listing and threshold count for a network
/// (`None` for the bundled benchmark) and, with `modified`, for the variant
/// with the weak-coupling line changes.
pub fn cells_report(
    network: Option<&Path>,
    k: usize,
    modified: bool,
    out_dir: impl AsRef<Path>,
) -> Result<CellsReport, ExperimentError> {
    let out_dir = out_dir.as_ref();
    if k == 0 {
        return Err(ConfigError::Invalid("k must be >= 1".into()).into());
    }
    let net = match network {
        None => benchmark::network(),
        Some(p) => parse_network(p).map_err(ConfigError::from)?,
    };
    std::fs::create_dir_all(out_dir).map_err(ExperimentError::io(out_dir))?;
    let mut variants = vec![variant("original", &net, k, out_dir)?];
    if modified {
        let m = apply_weak_coupling_modifications(&net).map_err(ConfigError::from)?;
        variants.push(variant("modified", &m, k, out_dir)?);
    }
    Ok(CellsReport { k, variants })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn benchmark_report_writes_both_variants() {
        let tmp = tempfile::tempdir().unwrap();
        let r = cells_report(None, 3, true, tmp.path()).unwrap();
        assert_eq!(r.variants.len(), 2);
        assert!(r.variants[1].above_half > r.variants[0].above_half);
        assert!(r.variants[1].controllable);
        for v in &r.variants {
            for f in &v.files {
                assert!(f.exists(), "{}", f.display());
            }
        }
        assert!(r.summary().contains("modified: k=3"));
    }
}
