//! Run directory writer.
//!
//! Every CSV starts with a `# manifest ...` comment line and every image
//! carries the same line in its header, so a file can be traced back to the
//! config and seed that produced it. `manifest.toml` holds the resolved
//! config and can be passed back through `--config` to reproduce the run.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use ssnscope_core::imaging::io::GrayImage;

use crate::config::Config;

/// Shortest round-trip decimal form.
pub fn num(x: f64) -> String {
    format!("{x}")
}

pub struct RunDir {
    dir: PathBuf,
    stamp: String,
    manifest_body: String,
    hash: String,
    files: Vec<String>,
    notes: Vec<String>,
}

impl RunDir {
    pub fn create(dir: &Path, config: &Config) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(RunDir {
            dir: dir.to_path_buf(),
            stamp: config.stamp(),
            manifest_body: config.to_toml(),
            hash: config.hash(),
            files: Vec::new(),
            notes: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    fn open(&mut self, name: &str) -> io::Result<BufWriter<fs::File>> {
        self.files.push(name.to_string());
        Ok(BufWriter::new(fs::File::create(self.dir.join(name))?))
    }

    /// A table with a header row; fields are quoted where needed.
    pub fn csv<I>(&mut self, name: &str, header: &[&str], rows: I) -> io::Result<()>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let mut f = self.open(name)?;
        writeln!(f, "# {}", self.stamp)?;
        let mut w = csv::Writer::from_writer(f);
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// `row,col,value` table of a row-major grid.
    pub fn grid_csv(&mut self, name: &str, width: usize, values: &[f64]) -> io::Result<()> {
        let rows = values
            .iter()
            .enumerate()
            .map(|(i, v)| vec![(i / width).to_string(), (i % width).to_string(), num(*v)]);
        self.csv(name, &["row", "col", "value"], rows)
    }

    /// 16-bit PGM scaled to `[lo, hi]`.
    pub fn pgm(&mut self, name: &str, width: usize, height: usize, values: &[f64], lo: f64, hi: f64) -> io::Result<()> {
        let comments = vec![self.stamp.clone()];
        let f = self.open(name)?;
        GrayImage::encode(width, height, values, lo, hi).write(f, &comments)
    }

    /// Extra `# key = value` comment line in the manifest.
    pub fn note(&mut self, key: &str, value: impl std::fmt::Display) {
        self.notes.push(format!("{key} = {value}"));
    }

    /// Write `manifest.toml` and return its path.
    pub fn finish(self) -> io::Result<PathBuf> {
        let path = self.dir.join("manifest.toml");
        let mut f = BufWriter::new(fs::File::create(&path)?);
        writeln!(f, "# {}", self.stamp)?;
        writeln!(f, "# config_sha256 = {}", self.hash)?;
        for name in &self.files {
            writeln!(f, "# output = {name}")?;
        }
        for n in &self.notes {
            writeln!(f, "# {n}")?;
        }
        f.write_all(self.manifest_body.as_bytes())?;
        f.flush()?;
        Ok(path)
    }
}
