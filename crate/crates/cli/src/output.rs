//! Artifact writer: every file starts with a config-hash comment line.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use hypokfem_core::DiscreteField;

use crate::config::ExperimentConfig;

pub struct Output {
    dir: PathBuf,
    hash: String,
    written: Vec<PathBuf>,
}

impl Output {
    pub fn new(dir: &Path, hash: &str) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), hash: hash.to_string(), written: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    fn put(&mut self, name: &str, body: &str) -> io::Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, body)?;
        self.written.push(path.clone());
        Ok(path)
    }

    /// Text file with a `#` comment header (CSV, reports, manifests).
    pub fn text(&mut self, name: &str, body: &str) -> io::Result<PathBuf> {
        let s = format!("# config-hash: {}\n{body}", self.hash);
        self.put(name, &s)
    }

    /// Legacy VTK; the hash goes into the header line.
    pub fn vtk(&mut self, name: &str, field: &DiscreteField, label: &str) -> io::Result<PathBuf> {
        let body = field.to_vtk(label);
        let mut lines = body.splitn(3, '\n');
        let (version, _, rest) = (lines.next().unwrap_or(""), lines.next(), lines.next().unwrap_or(""));
        let s = format!("{version}\n{label} config-hash: {}\n{rest}", self.hash);
        self.put(name, &s)
    }

    /// `key = value` run manifest echoing every parameter.
    pub fn manifest(&mut self, cfg: &ExperimentConfig, extra: &[(String, String)]) -> io::Result<PathBuf> {
        let mut s = String::new();
        let _ = writeln!(s, "library = hypokfem-core {}", hypokfem_core::VERSION);
        let _ = writeln!(s, "experiment = {}", cfg.experiment);
        let _ = writeln!(s, "expensive = {}", cfg.expensive);
        for line in cfg.to_text().lines().filter(|l| !l.starts_with('#')) {
            let _ = writeln!(s, "{line}");
        }
        for (k, v) in extra {
            let _ = writeln!(s, "{k} = {v}");
        }
        self.text("manifest.txt", &s)
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use hypokfem_core::mesh::build_structured;
    use hypokfem_core::space::build_space;
    use hypokfem_core::Constraint;

    use super::*;
    use crate::config::Experiment;

    #[test]
    fn every_file_carries_the_hash() {
        let dir = std::env::temp_dir().join(format!("hypokfem-output-{}", std::process::id()));
        let cfg = ExperimentConfig::defaults(Experiment::Decay, false);
        let mut out = Output::new(&dir, &cfg.hash()).unwrap();
        let sp = build_space(Arc::new(build_structured(2, 2, 1.0).unwrap()), 2).unwrap();
        out.text("a.csv", "x,y\n1,2\n").unwrap();
        out.vtk("u.vtk", &DiscreteField::zeros(&sp, Constraint::Free), "u").unwrap();
        out.manifest(&cfg, &[("note".into(), "x".into())]).unwrap();
        for p in out.written() {
            let s = fs::read_to_string(p).unwrap();
            assert!(s.lines().take(2).any(|l| l.contains(&cfg.hash())), "{}", p.display());
        }
        let vtk = fs::read_to_string(dir.join("u.vtk")).unwrap();
        assert!(vtk.starts_with("# vtk DataFile Version 3.0\nu config-hash"));
        assert!(vtk.contains("\nASCII\nDATASET UNSTRUCTURED_GRID"));
        fs::remove_dir_all(dir).unwrap();
    }
}
