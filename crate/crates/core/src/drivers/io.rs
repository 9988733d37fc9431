//! CSV import/export for points, lifted paths and trajectories.
//!
//! * points / trajectories: header `t,x_1,..,x_d` (trajectories use `y_i`);
//! * lifted paths: header `t,x_1,..,x_d,l2_1_1,..,l2_d_d`, where the level-2
//!   block of each value `x_{0,t}` is flattened row-major.

use std::io::{Read, Write};

use super::SampledRoughPath;
use crate::error::{Error, Result};
use crate::tensor::GroupElement;

fn write_rows<W: Write>(out: W, header: Vec<String>, times: &[f64], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&header)?;
    for (t, row) in times.iter().zip(rows) {
        let mut rec = Vec::with_capacity(row.len() + 1);
        rec.push(format_f64(*t));
        rec.extend(row.iter().map(|v| format_f64(*v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Shortest representation that parses back to the same `f64`.
fn format_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Header, time column and the remaining columns row by row.
type Table = (Vec<String>, Vec<f64>, Vec<Vec<f64>>);

fn read_rows<R: Read>(input: R, prefix: &str) -> Result<Table> {
    let mut rdr = csv::Reader::from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    if header.first().map(String::as_str) != Some("t") || header.len() < 2 {
        return Err(Error::Io(format!(
            "expected header 't,{prefix}_1,...', got {:?}",
            header
        )));
    }
    let mut times = Vec::new();
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(Error::Io(format!("row {} has {} fields", line + 1, rec.len())));
        }
        let vals: Vec<f64> = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Io(format!("row {}: {e}", line + 1)))?;
        times.push(vals[0]);
        rows.push(vals[1..].to_vec());
    }
    Ok((header, times, rows))
}

pub fn write_points_csv<W: Write>(out: W, times: &[f64], points: &[Vec<f64>]) -> Result<()> {
    let d = points.first().map_or(0, Vec::len);
    let mut header = vec!["t".to_string()];
    header.extend((1..=d).map(|i| format!("x_{i}")));
    write_rows(out, header, times, points)
}

pub fn read_points_csv<R: Read>(input: R) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let (_, t, rows) = read_rows(input, "x")?;
    Ok((t, rows))
}

pub fn write_trajectory_csv<W: Write>(out: W, times: &[f64], values: &[Vec<f64>]) -> Result<()> {
    let m = values.first().map_or(0, Vec::len);
    let mut header = vec!["t".to_string()];
    header.extend((1..=m).map(|i| format!("y_{i}")));
    write_rows(out, header, times, values)
}

pub fn read_trajectory_csv<R: Read>(input: R) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let (_, t, rows) = read_rows(input, "y")?;
    Ok((t, rows))
}

pub fn write_rough_path_csv<W: Write>(out: W, path: &SampledRoughPath) -> Result<()> {
    let d = path.dim();
    let mut header = vec!["t".to_string()];
    header.extend((1..=d).map(|i| format!("x_{i}")));
    for i in 1..=d {
        for j in 1..=d {
            header.push(format!("l2_{i}_{j}"));
        }
    }
    let rows: Vec<Vec<f64>> = path
        .values()
        .iter()
        .map(|g| g.level1().iter().chain(g.level2()).copied().collect())
        .collect();
    write_rows(out, header, path.times(), &rows)
}

/// Read a lifted path; `p_hint` is not stored in the file.
pub fn read_rough_path_csv<R: Read>(input: R, p_hint: f64) -> Result<SampledRoughPath> {
    let (header, times, rows) = read_rows(input, "x")?;
    let cols = header.len() - 1;
    let d = (((4 * cols + 1) as f64).sqrt() as usize).saturating_sub(1) / 2;
    if d == 0 || d + d * d != cols {
        return Err(Error::Io(format!("{cols} data columns is not d + d^2")));
    }
    let values = rows
        .into_iter()
        .map(|r| GroupElement::new(r[..d].to_vec(), r[d..].to_vec()))
        .collect::<Result<Vec<_>>>()?;
    SampledRoughPath::new(times, values, p_hint)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drivers::lift_piecewise_linear;

    #[test]
    fn rough_path_round_trip() {
        let pts = vec![vec![0.0, 0.0], vec![0.1, 0.7], vec![-0.3, 0.2], vec![1.0 / 3.0, -0.9]];
        let x = lift_piecewise_linear(&pts, &[0.0, 0.25, 0.5, 1.0]).unwrap();
        let mut buf = Vec::new();
        write_rough_path_csv(&mut buf, &x).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,x_1,x_2,l2_1_1,l2_1_2,l2_2_1,l2_2_2\n"));
        let y = read_rough_path_csv(buf.as_slice(), 1.0).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn points_round_trip() {
        let t = vec![0.0, 0.5, 1.0];
        let p = vec![vec![0.0], vec![1e-17], vec![-2.5]];
        let mut buf = Vec::new();
        write_points_csv(&mut buf, &t, &p).unwrap();
        let (t2, p2) = read_points_csv(buf.as_slice()).unwrap();
        assert_eq!(t, t2);
        assert_eq!(p, p2);
    }

    #[test]
    fn bad_header_is_rejected() {
        let data = "time,x_1\n0,0\n";
        assert!(read_points_csv(data.as_bytes()).is_err());
        let short = "t,x_1,x_2\n0,0\n";
        assert!(read_points_csv(short.as_bytes()).is_err());
    }
}
