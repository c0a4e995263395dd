use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ResultError {
    #[error("vector {module}.{name}: time {time} does not follow {last}")]
    NonMonotonicVector {
        module: String,
        name: String,
        last: f64,
        time: f64,
    },
    #[error("I/O error on {}: {source}", path.display())]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

type Key = (String, String);

/// Scalar and vector statistics keyed by (module, name).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultStore {
    scalars: BTreeMap<Key, f64>,
    vectors: BTreeMap<Key, Vec<(f64, f64)>>,
}

impl ResultStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets (or overwrites) a scalar.
    pub fn set_scalar(&mut self, module: &str, name: &str, value: f64) {
        self.scalars.insert((module.into(), name.into()), value);
    }

    pub fn add_scalar(&mut self, module: &str, name: &str, delta: f64) {
        *self
            .scalars
            .entry((module.into(), name.into()))
            .or_insert(0.0) += delta;
    }

    pub fn scalar(&self, module: &str, name: &str) -> Option<f64> {
        self.scalars.get(&(module.into(), name.into())).copied()
    }

    /// Appends a sample; times must be strictly increasing per vector.
    pub fn record(
        &mut self,
        module: &str,
        name: &str,
        time: f64,
        value: f64,
    ) -> Result<(), ResultError> {
        let series = self
            .vectors
            .entry((module.into(), name.into()))
            .or_default();
        if let Some(&(last, _)) = series.last() {
            if time.partial_cmp(&last) != Some(std::cmp::Ordering::Greater) {
                return Err(ResultError::NonMonotonicVector {
                    module: module.into(),
                    name: name.into(),
                    last,
                    time,
                });
            }
        }
        series.push((time, value));
        Ok(())
    }

    pub fn vector(&self, module: &str, name: &str) -> Option<&[(f64, f64)]> {
        self.vectors
            .get(&(module.into(), name.into()))
            .map(Vec::as_slice)
    }

    /// Moves every entry of `other` into `self`; on key clashes `other` wins.
    pub fn merge(&mut self, other: ResultStore) {
        self.scalars.extend(other.scalars);
        self.vectors.extend(other.vectors);
    }

    pub fn scalar_count(&self) -> usize {
        self.scalars.len()
    }

    pub fn vector_count(&self) -> usize {
        self.vectors.len()
    }

    pub fn render_scalars(&self) -> String {
        let mut out = String::from("# module name value\n");
        for ((module, name), v) in &self.scalars {
            let _ = writeln!(out, "{module} {name} {}", format_value(*v));
        }
        out
    }

    pub fn render_vectors(&self) -> String {
        let mut out = String::from("module,name,time_s,value\n");
        for ((module, name), series) in &self.vectors {
            for (t, v) in series {
                let _ = writeln!(out, "{module},{name},{t:.6},{}", format_value(*v));
            }
        }
        out
    }
}

/// Integral values print without a fractional part; others use the shortest
/// round-tripping form.
pub(crate) fn format_value(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Writes `result.sca` and `result.vec` into `dir`.
pub fn write_results(store: &ResultStore, dir: &Path) -> Result<(), ResultError> {
    for (file, body) in [
        ("result.sca", store.render_scalars()),
        ("result.vec", store.render_vectors()),
    ] {
        let path = dir.join(file);
        std::fs::write(&path, body).map_err(|source| ResultError::IoFailure { path, source })?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_line() {
        let mut s = ResultStore::new();
        s.set_scalar("radio", "frames_sent", 500.0);
        s.set_scalar("ego", "min_gap", 3.25);
        assert_eq!(
            s.render_scalars(),
            "# module name value\nego min_gap 3.25\nradio frames_sent 500\n"
        );
    }

    #[test]
    fn empty_store_headers_only() {
        let dir = tempfile::tempdir().unwrap();
        write_results(&ResultStore::new(), dir.path()).unwrap();
        assert_eq!(
            std::fs::read_to_string(dir.path().join("result.sca")).unwrap(),
            "# module name value\n"
        );
        assert_eq!(
            std::fs::read_to_string(dir.path().join("result.vec")).unwrap(),
            "module,name,time_s,value\n"
        );
    }

    #[test]
    fn vector_time_must_increase() {
        let mut s = ResultStore::new();
        s.record("ego", "speed", 0.1, 1.0).unwrap();
        assert!(s.record("ego", "speed", 0.1, 2.0).is_err());
        assert!(s.record("ego", "speed", f64::NAN, 2.0).is_err());
        s.record("ego", "speed", 0.2, 2.5).unwrap();
        assert_eq!(
            s.render_vectors(),
            "module,name,time_s,value\nego,speed,0.100000,1\nego,speed,0.200000,2.5\n"
        );
    }

    #[test]
    fn sorted_by_module_then_name() {
        let mut s = ResultStore::new();
        s.record("z", "a", 1.0, 1.0).unwrap();
        s.record("a", "z", 2.0, 1.0).unwrap();
        s.record("a", "b", 3.0, 1.0).unwrap();
        let lines: Vec<String> = s
            .render_vectors()
            .lines()
            .skip(1)
            .map(|l| l[..3].to_string())
            .collect();
        assert_eq!(lines, ["a,b", "a,z", "z,a"]);
    }

    #[test]
    fn io_failure_reported() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope");
        assert!(matches!(
            write_results(&ResultStore::new(), &missing),
            Err(ResultError::IoFailure { .. })
        ));
    }
}
