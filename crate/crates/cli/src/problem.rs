//! Problem files: a TOML description of `(A, A₀)`, optional `B`, `C`, and
//! per-problem defaults for the commands.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use switchmargin_core::hierarchy::SwitchedLinearSystem;
use switchmargin_core::linalg::{Matrix, Vector};
use switchmargin_core::serde_util::from_rows;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Defaults {
    pub epsilon: Option<f64>,
    pub i_max: Option<usize>,
    pub increment: Option<f64>,
    pub tol_unit: Option<f64>,
    pub sdp_tol: Option<f64>,
    pub rtol: Option<f64>,
    pub atol: Option<f64>,
    pub event_tol: Option<f64>,
    pub sample_dt: Option<f64>,
    pub delta: Option<f64>,
    pub t_f: Option<f64>,
    pub x0: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    n: usize,
    a: Vec<Vec<f64>>,
    a0: Vec<Vec<f64>>,
    b: Option<Vec<f64>>,
    c: Option<Vec<f64>>,
    #[serde(default)]
    defaults: Defaults,
}

#[derive(Debug, Clone)]
pub struct Problem {
    pub path: PathBuf,
    pub sys: SwitchedLinearSystem,
    pub b: Option<Vector>,
    pub c: Option<Vector>,
    pub defaults: Defaults,
    /// SHA-256 over n, A and A₀; keys the certificate cache.
    pub hash: String,
}

/// Echo of the problem data in reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemEcho {
    pub path: String,
    pub n: usize,
    #[serde(with = "switchmargin_core::serde_util::matrix")]
    pub a: Matrix,
    #[serde(with = "switchmargin_core::serde_util::matrix")]
    pub a0: Matrix,
    pub hash: String,
}

fn matrix_field(path: &Path, name: &str, rows: &[Vec<f64>], n: usize) -> CliResult<Matrix> {
    if rows.len() != n {
        return Err(CliError::parse(path, format!("field `{name}`: expected {n} rows, got {}", rows.len())));
    }
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
        return Err(CliError::parse(
            path,
            format!("field `{name}`: row {} has {} entries, expected {n}", i + 1, r.len()),
        ));
    }
    let m = from_rows(rows).map_err(|e| CliError::parse(path, format!("field `{name}`: {e}")))?;
    if m.iter().any(|v| !v.is_finite()) {
        return Err(CliError::parse(path, format!("field `{name}`: entries must be finite")));
    }
    Ok(m)
}

fn vector_field(path: &Path, name: &str, v: &[f64], n: usize) -> CliResult<Vector> {
    if v.len() != n {
        return Err(CliError::parse(path, format!("field `{name}`: expected {n} entries, got {}", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(CliError::parse(path, format!("field `{name}`: entries must be finite")));
    }
    Ok(Vector::from_column_slice(v))
}

pub fn matrix_hash(n: usize, a: &Matrix, a0: &Matrix) -> String {
    let mut h = Sha256::new();
    h.update((n as u64).to_le_bytes());
    for m in [a, a0] {
        for i in 0..n {
            for j in 0..n {
                h.update(m[(i, j)].to_le_bytes());
            }
        }
    }
    format!("{:x}", h.finalize())
}

impl Problem {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(path, &text)
    }

    pub fn parse(path: &Path, text: &str) -> CliResult<Self> {
        let raw: RawProblem = toml::from_str(text).map_err(|e| CliError::parse(path, e.to_string()))?;
        let n = raw.n;
        if n == 0 {
            return Err(CliError::parse(path, "field `n`: must be at least 1"));
        }
        let a = matrix_field(path, "a", &raw.a, n)?;
        let a0 = matrix_field(path, "a0", &raw.a0, n)?;
        let b = raw.b.as_deref().map(|v| vector_field(path, "b", v, n)).transpose()?;
        let c = raw.c.as_deref().map(|v| vector_field(path, "c", v, n)).transpose()?;
        if let Some(x0s) = &raw.defaults.x0 {
            for (k, x0) in x0s.iter().enumerate() {
                vector_field(path, &format!("defaults.x0[{k}]"), x0, n)?;
            }
        }
        let hash = matrix_hash(n, &a, &a0);
        let sys = SwitchedLinearSystem::new(a, a0).map_err(|e| CliError::parse(path, e.to_string()))?;
        Ok(Self {
            path: path.to_path_buf(),
            sys,
            b,
            c,
            defaults: raw.defaults,
            hash,
        })
    }

    pub fn n(&self) -> usize {
        self.sys.n()
    }

    pub fn echo(&self) -> ProblemEcho {
        ProblemEcho {
            path: self.path.display().to_string(),
            n: self.n(),
            a: self.sys.a().clone(),
            a0: self.sys.a0().clone(),
            hash: self.hash.clone(),
        }
    }

    /// First `defaults.x0` entry, if any.
    pub fn default_x0(&self) -> Option<Vector> {
        self.defaults
            .x0
            .as_ref()
            .and_then(|v| v.first())
            .map(|x| Vector::from_column_slice(x))
    }

    /// `<dir>/<stem>.certs.json` next to the problem file.
    pub fn default_cache_path(&self) -> PathBuf {
        let stem = self.path.file_stem().and_then(|s| s.to_str()).unwrap_or("problem");
        self.path.with_file_name(format!("{stem}.certs.json"))
    }
}

/// Parse a comma-separated state such as `"1,1"` or `"-0.2, 0.8"`.
pub fn parse_state(text: &str, n: usize) -> CliResult<Vector> {
    let values = text
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("--x0: `{}` is not a number", s.trim())))
        })
        .collect::<CliResult<Vec<f64>>>()?;
    if values.len() != n {
        return Err(CliError::Usage(format!("--x0: expected {n} entries, got {}", values.len())));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(CliError::Usage("--x0: entries must be finite".into()));
    }
    Ok(Vector::from_vec(values))
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
n = 2
a = [[0.0, 1.0], [-1.0, -0.5]]
a0 = [[0.0, 0.0], [-1.0, 0.0]]
b = [0.0, 1.0]

[defaults]
epsilon = 0.01
x0 = [[1.0, 1.0]]
"#;

    #[test]
    fn parses_example() {
        let p = Problem::parse(Path::new("ex.toml"), EXAMPLE).unwrap();
        assert_eq!(p.n(), 2);
        assert_eq!(p.sys.a()[(1, 1)], -0.5);
        assert_eq!(p.b.as_ref().unwrap()[1], 1.0);
        assert!(p.c.is_none());
        assert_eq!(p.defaults.epsilon, Some(0.01));
        assert_eq!(p.default_x0().unwrap()[0], 1.0);
        assert_eq!(p.default_cache_path(), PathBuf::from("ex.certs.json"));
    }

    #[test]
    fn hash_depends_on_matrices_only() {
        let p = Problem::parse(Path::new("x.toml"), EXAMPLE).unwrap();
        let q = Problem::parse(Path::new("y.toml"), &EXAMPLE.replace("epsilon = 0.01", "epsilon = 0.5")).unwrap();
        assert_eq!(p.hash, q.hash);
        let r = Problem::parse(Path::new("x.toml"), &EXAMPLE.replace("-0.5", "-0.6")).unwrap();
        assert_ne!(p.hash, r.hash);
    }

    #[test]
    fn dimension_errors_name_the_field() {
        let bad = EXAMPLE.replace("a0 = [[0.0, 0.0], [-1.0, 0.0]]", "a0 = [[0.0, 0.0], [-1.0]]");
        let err = Problem::parse(Path::new("ex.toml"), &bad).unwrap_err().to_string();
        assert!(err.contains("`a0`") && err.contains("row 2"), "{err}");
        let bad = EXAMPLE.replace("b = [0.0, 1.0]", "b = [0.0, 1.0, 2.0]");
        let err = Problem::parse(Path::new("ex.toml"), &bad).unwrap_err().to_string();
        assert!(err.contains("`b`"), "{err}");
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        let err = Problem::parse(Path::new("ex.toml"), "n = 2\na = [[0.0, 1.0]\n").unwrap_err().to_string();
        assert!(err.contains("line 2") || err.contains(":2:"), "{err}");
    }

    #[test]
    fn unknown_fields_rejected() {
        let err = Problem::parse(Path::new("ex.toml"), &format!("{EXAMPLE}\nfoo = 1\n")).unwrap_err();
        assert!(err.to_string().contains("foo"));
    }

    #[test]
    fn state_parsing() {
        assert_eq!(parse_state("-0.2, 0.8", 2).unwrap().as_slice(), &[-0.2, 0.8]);
        assert!(parse_state("1,1,1", 2).is_err());
        assert!(parse_state("1,x", 2).is_err());
    }
}
