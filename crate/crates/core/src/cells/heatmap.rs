use std::path::{Path, PathBuf};

use super::{CellError, DistanceMatrix};
use crate::numfmt::sig9;
use crate::plot;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CellError + '_ {
    move |source| CellError::Io { path: path.display().to_string(), source }
}

/// Writes the matrix as CSV: header row `bus,<ids...>`, then one row per bus
/// led by its id.
pub fn write_matrix_csv(d: &DistanceMatrix, path: &Path) -> Result<(), CellError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["bus".to_string()];
    header.extend(d.bus_ids.iter().cloned());
    w.write_record(&header)?;
    for (i, id) in d.bus_ids.iter().enumerate() {
        let mut row = vec![id.clone()];
        row.extend(d.d.row(i).iter().map(|&x| sig9(x)));
        w.write_record(&row)?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// Writes `<csv_path>` and a color plot next to it with extension `svg`.
/// Returns both paths.
pub fn export_heatmap(d_norm: &DistanceMatrix, csv_path: impl AsRef<Path>) -> Result<(PathBuf, PathBuf), CellError> {
    let csv_path = csv_path.as_ref();
    write_matrix_csv(d_norm, csv_path)?;
    let svg_path = csv_path.with_extension("svg");
    let values: Vec<f64> = (0..d_norm.len())
        .flat_map(|i| (0..d_norm.len()).map(move |j| (i, j)))
        .map(|(i, j)| d_norm.d[(i, j)])
        .collect();
    let title = if d_norm.normalized { "Normalized electrical distance" } else { "Electrical distance" };
    let svg = plot::heatmap(title, &d_norm.bus_ids, &values);
    std::fs::write(&svg_path, svg).map_err(io_err(&svg_path))?;
    Ok((csv_path.to_path_buf(), svg_path))
}

/// Number of entries strictly above `threshold`.
pub fn count_above(d: &DistanceMatrix, threshold: f64) -> usize {
    d.d.iter().filter(|&&x| x > threshold).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn two_by_two_csv_and_dir_creation() {
        let tmp = tempfile::tempdir().unwrap();
        let d = DistanceMatrix {
            d: DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0 / 3.0, 0.0]),
            bus_ids: vec!["a".into(), "b,c".into()],
            normalized: true,
            capped: vec![],
        };
        let target = tmp.path().join("nested/dir/heat.csv");
        let (csv_path, svg_path) = export_heatmap(&d, &target).unwrap();
        let text = std::fs::read_to_string(csv_path).unwrap();
        assert_eq!(text, "bus,a,\"b,c\"\na,0,1\n\"b,c\",0.333333333,0\n");
        assert!(svg_path.exists());
    }
}
