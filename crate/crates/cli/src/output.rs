//! Trajectory CSV with the fixed header `t,x1,...,xn,delta,indicator`.

use std::io::Write;
use std::path::Path;

use switchmargin_core::switching::{Indicator, Trajectory};

use crate::error::{CliError, CliResult};

pub fn header(n: usize, impulse: bool) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((1..=n).map(|k| format!("x{k}")));
    h.push("delta".into());
    h.push("indicator".into());
    if impulse {
        h.push("h_worst".into());
        h.push("h_nominal".into());
    }
    h
}

/// Writes one row per sample. The indicator column is NaN without a
/// certificate. `impulse` supplies the `h_worst`, `h_nominal` columns.
pub fn write_trajectory<W: Write>(
    out: W,
    n: usize,
    traj: &Trajectory,
    indicator: Option<&Indicator>,
    impulse: Option<(&[f64], &[f64])>,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(n, impulse.is_some()))?;
    let mut row = Vec::with_capacity(n + 5);
    for (k, s) in traj.samples.iter().enumerate() {
        let x = s.state();
        row.clear();
        row.push(s.t.to_string());
        row.extend(x.iter().map(|v| v.to_string()));
        row.push(s.delta.to_string());
        row.push(indicator.map_or(f64::NAN, |ind| ind.eval(&x)).to_string());
        if let Some((hw, hn)) = impulse {
            row.push(hw[k].to_string());
            row.push(hn[k].to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trajectory_file(
    path: &Path,
    n: usize,
    traj: &Trajectory,
    indicator: Option<&Indicator>,
    impulse: Option<(&[f64], &[f64])>,
) -> CliResult<()> {
    let file = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    write_trajectory(std::io::BufWriter::new(file), n, traj, indicator, impulse).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::parse(path, format!("{other:?}")),
    })
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use switchmargin_core::linalg::Vector;
    use switchmargin_core::switching::Sample;

    #[test]
    fn header_is_exact() {
        assert_eq!(header(2, false).join(","), "t,x1,x2,delta,indicator");
        assert_eq!(header(1, true).join(","), "t,x1,delta,indicator,h_worst,h_nominal");
    }

    #[test]
    fn rows_follow_samples() {
        let traj = Trajectory {
            samples: vec![Sample {
                t: 0.5,
                x: Vector::from_vec(vec![1.0, -2.0]),
                delta: 2.21,
                log_scale: 0.0,
            }],
            diverged: false,
        };
        let mut buf = Vec::new();
        write_trajectory(&mut buf, 2, &traj, None, Some((&[3.0], &[4.0]))).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "t,x1,x2,delta,indicator,h_worst,h_nominal\n0.5,1,-2,2.21,NaN,3,4\n");
    }
}
