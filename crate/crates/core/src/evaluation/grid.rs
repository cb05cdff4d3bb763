//! Cartesian validation grids, ground-truth files and grid flood-fill.

use std::io::{BufRead, BufReader, Read, Write};

use crate::domain::{Objective, SearchSpace};
use crate::error::{Error, Result};

/// Equispaced values on one axis, endpoints exact.
pub fn axis_values(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            if i + 1 == n {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}

/// All grid points in row-major order (last axis fastest).
pub fn grid_points(space: &SearchSpace, resolution: &[usize]) -> Result<Vec<Vec<f64>>> {
    check_resolution(space, resolution)?;
    let axes: Vec<Vec<f64>> = (0..space.dim())
        .map(|a| axis_values(space.lower()[a], space.upper()[a], resolution[a]))
        .collect();
    let total: usize = resolution.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; space.dim()];
    for _ in 0..total {
        out.push(idx.iter().enumerate().map(|(a, &i)| axes[a][i]).collect());
        for a in (0..idx.len()).rev() {
            idx[a] += 1;
            if idx[a] < resolution[a] {
                break;
            }
            idx[a] = 0;
        }
    }
    Ok(out)
}

fn check_resolution(space: &SearchSpace, resolution: &[usize]) -> Result<()> {
    if resolution.len() != space.dim() {
        return Err(Error::DimensionMismatch {
            expected: space.dim(),
            got: resolution.len(),
        });
    }
    if let Some(r) = resolution.iter().find(|&&r| r < 2) {
        return Err(Error::Config(format!(
            "grid resolution must be at least 2 per dimension, got {r}"
        )));
    }
    Ok(())
}

/// Objective values on a full grid, as persisted by the `truth` command.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub space: SearchSpace,
    pub resolution: Vec<usize>,
    pub delta: f64,
    pub values: Vec<f64>,
}

impl GroundTruth {
    pub fn generate(
        objective: &dyn Objective,
        space: &SearchSpace,
        resolution: &[usize],
        delta: f64,
    ) -> Result<Self> {
        let points = grid_points(space, resolution)?;
        let values = objective.evaluate_batch(&points)?;
        Ok(Self {
            space: space.clone(),
            resolution: resolution.to_vec(),
            delta,
            values,
        })
    }

    pub fn labels(&self) -> Vec<bool> {
        self.values.iter().map(|&y| y > self.delta).collect()
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        grid_points(&self.space, &self.resolution).expect("validated on construction")
    }

    /// `#`-prefixed header lines, then `x1..xd,y,label` rows.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut out = out;
        let join = |v: &[f64]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        writeln!(out, "# dims={}", self.space.dim())?;
        let res: Vec<String> = self.resolution.iter().map(|r| r.to_string()).collect();
        writeln!(out, "# resolution={}", res.join(","))?;
        writeln!(out, "# lower={}", join(self.space.lower()))?;
        writeln!(out, "# upper={}", join(self.space.upper()))?;
        writeln!(out, "# delta={}", self.delta)?;
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=self.space.dim()).map(|i| format!("x{i}")).collect();
        header.extend(["y".into(), "label".into()]);
        w.write_record(&header)?;
        for (x, y) in self.points().iter().zip(&self.values) {
            let mut row: Vec<String> = x.iter().map(|v| v.to_string()).collect();
            row.push(y.to_string());
            row.push((*y > self.delta).to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(input: impl Read) -> Result<Self> {
        let mut reader = BufReader::new(input);
        let mut header = std::collections::HashMap::new();
        let mut line = String::new();
        let mut body = String::new();
        loop {
            line.clear();
            if reader.read_line(&mut line)? == 0 {
                break;
            }
            match line.strip_prefix('#') {
                Some(rest) => {
                    if let Some((k, v)) = rest.trim().split_once('=') {
                        header.insert(k.trim().to_string(), v.trim().to_string());
                    }
                }
                None => {
                    body.push_str(&line);
                    reader.read_to_string(&mut body)?;
                    break;
                }
            }
        }
        let get = |k: &str| {
            header
                .get(k)
                .cloned()
                .ok_or_else(|| Error::TruthShape(format!("missing header field `{k}`")))
        };
        let floats = |s: String| -> Result<Vec<f64>> {
            s.split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::TruthShape(format!("bad number `{t}`: {e}")))
                })
                .collect()
        };
        let dims: usize = get("dims")?
            .parse()
            .map_err(|e| Error::TruthShape(format!("bad dims: {e}")))?;
        let resolution: Vec<usize> = get("resolution")?
            .split(',')
            .map(|t| t.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::TruthShape(format!("bad resolution: {e}")))?;
        let lower = floats(get("lower")?)?;
        let upper = floats(get("upper")?)?;
        let delta: f64 = get("delta")?
            .parse()
            .map_err(|e| Error::TruthShape(format!("bad delta: {e}")))?;
        if resolution.len() != dims || lower.len() != dims || upper.len() != dims {
            return Err(Error::TruthShape(format!(
                "header declares {dims} dims but lists {} resolutions, {} lower and {} upper bounds",
                resolution.len(),
                lower.len(),
                upper.len()
            )));
        }
        let space = SearchSpace::new(lower, upper)?;
        check_resolution(&space, &resolution).map_err(|e| Error::TruthShape(e.to_string()))?;

        let mut rdr = csv::Reader::from_reader(body.as_bytes());
        let mut values = Vec::new();
        for row in rdr.records() {
            let row = row?;
            if row.len() != dims + 2 {
                return Err(Error::TruthShape(format!(
                    "row {} has {} fields, expected {}",
                    values.len() + 1,
                    row.len(),
                    dims + 2
                )));
            }
            let y: f64 = row[dims]
                .parse()
                .map_err(|e| Error::TruthShape(format!("bad y `{}`: {e}", &row[dims])))?;
            values.push(y);
        }
        let expected: usize = resolution.iter().product();
        if values.len() != expected {
            return Err(Error::TruthShape(format!(
                "{} rows for a grid of {expected} points",
                values.len()
            )));
        }
        Ok(Self {
            space,
            resolution,
            delta,
            values,
        })
    }
}

/// Labels face-connected components of `mask` on a row-major grid.
/// Returns per-cell component ids (`None` for unmasked cells) and the count.
pub fn connected_components(resolution: &[usize], mask: &[bool]) -> (Vec<Option<usize>>, usize) {
    let total: usize = resolution.iter().product();
    assert_eq!(mask.len(), total, "mask does not match the grid");
    let d = resolution.len();
    let mut strides = vec![1usize; d];
    for a in (0..d.saturating_sub(1)).rev() {
        strides[a] = strides[a + 1] * resolution[a + 1];
    }
    let mut labels = vec![None; total];
    let mut count = 0;
    let mut stack = Vec::new();
    for start in 0..total {
        if !mask[start] || labels[start].is_some() {
            continue;
        }
        labels[start] = Some(count);
        stack.push(start);
        while let Some(cell) = stack.pop() {
            for a in 0..d {
                let coord = (cell / strides[a]) % resolution[a];
                let mut visit = |n: usize| {
                    if mask[n] && labels[n].is_none() {
                        labels[n] = Some(count);
                        stack.push(n);
                    }
                };
                if coord > 0 {
                    visit(cell - strides[a]);
                }
                if coord + 1 < resolution[a] {
                    visit(cell + strides[a]);
                }
            }
        }
        count += 1;
    }
    (labels, count)
}

/// Row-major flat index of the grid point nearest to `x`.
pub fn nearest_grid_index(space: &SearchSpace, resolution: &[usize], x: &[f64]) -> usize {
    (0..space.dim()).fold(0, |acc, a| {
        let t = (x[a] - space.lower()[a]) / space.width(a);
        let i = (t * (resolution[a] - 1) as f64).round().clamp(0.0, (resolution[a] - 1) as f64);
        acc * resolution[a] + i as usize
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{HolderTable, holder_table};

    #[test]
    fn resolution_two_gives_corners() {
        let s = SearchSpace::cube(3, -1.0, 1.0).unwrap();
        let pts = grid_points(&s, &[2, 2, 2]).unwrap();
        assert_eq!(pts.len(), 8);
        assert!(pts.iter().all(|p| p.iter().all(|v| v.abs() == 1.0)));
        assert!(grid_points(&s, &[2, 1, 2]).is_err());
    }

    #[test]
    fn endpoints_are_exact() {
        let v = axis_values(10.0, 110.0, 100);
        assert_eq!((v[0], v[99]), (10.0, 110.0));
        assert!(v.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn truth_csv_roundtrip() {
        let gt =
            GroundTruth::generate(&holder_table, &HolderTable::space(), &[7, 5], 18.0).unwrap();
        let mut buf = Vec::new();
        gt.write_csv(&mut buf).unwrap();
        let back = GroundTruth::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, gt);
    }

    #[test]
    fn truth_shape_mismatch() {
        let gt =
            GroundTruth::generate(&holder_table, &HolderTable::space(), &[4, 4], 18.0).unwrap();
        let mut buf = Vec::new();
        gt.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let broken = text.replace("# resolution=4,4", "# resolution=4,5");
        assert!(matches!(
            GroundTruth::read_csv(broken.as_bytes()),
            Err(Error::TruthShape(_))
        ));
    }

    #[test]
    fn flood_fill_counts_blobs() {
        #[rustfmt::skip]
        let mask = [
            true,  true,  false, false,
            false, false, false, true,
            true,  false, true,  true,
        ];
        let (labels, n) = connected_components(&[3, 4], &mask);
        assert_eq!(n, 3);
        assert_eq!(labels[6], None);
        assert_eq!(labels[7], labels[11]);
        assert_eq!(labels[10], labels[11]);
        assert_ne!(labels[0], labels[8]);
    }

    #[test]
    fn nearest_index_matches_row_major() {
        let s = SearchSpace::cube(2, 0.0, 1.0).unwrap();
        let pts = grid_points(&s, &[3, 4]).unwrap();
        for (i, p) in pts.iter().enumerate() {
            assert_eq!(nearest_grid_index(&s, &[3, 4], p), i);
        }
    }
}
