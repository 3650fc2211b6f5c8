//! Retained draws, one [`DrawBlock`] per parameter block, with CSV and
//! binary columnar persistence.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcmc::config::Variant;

/// Row-major table of draws for one parameter block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrawBlock {
    pub name: String,
    pub columns: Vec<String>,
    pub values: Vec<f64>,
}

impl DrawBlock {
    pub fn new(name: impl Into<String>, columns: Vec<String>) -> Self {
        Self {
            name: name.into(),
            columns,
            values: Vec::new(),
        }
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn n_draws(&self) -> usize {
        if self.columns.is_empty() {
            0
        } else {
            self.values.len() / self.columns.len()
        }
    }

    pub fn push_row(&mut self, row: &[f64]) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.values.extend_from_slice(row);
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let k = self.n_columns();
        &self.values[i * k..(i + 1) * k]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        let k = self.n_columns();
        self.values.iter().skip(j).step_by(k).copied().collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column_by_name(&self, name: &str) -> Option<Vec<f64>> {
        self.column_index(name).map(|j| self.column(j))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
        w.write_record(&self.columns)?;
        let mut buf = Vec::with_capacity(self.n_columns());
        for i in 0..self.n_draws() {
            buf.clear();
            buf.extend(self.row(i).iter().map(|v| v.to_string()));
            w.write_record(&buf)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path, name: &str) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_io(path, e))?;
        let columns: Vec<String> = r.headers()?.iter().map(String::from).collect();
        let mut block = Self::new(name, columns);
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            for field in rec.iter() {
                let v: f64 = field.trim().parse().map_err(|_| {
                    Error::Parse(format!("{}: row {}: {field:?} is not a number", path.display(), i + 1))
                })?;
                block.values.push(v);
            }
        }
        Ok(block)
    }

    /// Binary layout: magic, row and column counts, length-prefixed column
    /// names, then each column as little-endian `f64`.
    pub fn write_columnar(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let n = self.n_draws();
        let mut put = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
        put(COLUMNAR_MAGIC)?;
        put(&(n as u64).to_le_bytes())?;
        put(&(self.n_columns() as u64).to_le_bytes())?;
        for c in &self.columns {
            put(&(c.len() as u32).to_le_bytes())?;
            put(c.as_bytes())?;
        }
        for j in 0..self.n_columns() {
            for i in 0..n {
                put(&self.values[i * self.n_columns() + j].to_le_bytes())?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_columnar(path: &Path, name: &str) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        let bad = || Error::Parse(format!("{}: malformed columnar file", path.display()));
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            let s = bytes.get(pos..pos + n).ok_or_else(bad)?;
            pos += n;
            Ok(s)
        };
        if take(COLUMNAR_MAGIC.len())? != COLUMNAR_MAGIC {
            return Err(bad());
        }
        let n = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        let k = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        let mut columns = Vec::with_capacity(k);
        for _ in 0..k {
            let len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
            let s = String::from_utf8(take(len)?.to_vec()).map_err(|_| bad())?;
            columns.push(s);
        }
        let mut values = vec![0.0; n * k];
        for j in 0..k {
            for i in 0..n {
                values[i * k + j] = f64::from_le_bytes(take(8)?.try_into().unwrap());
            }
        }
        Ok(Self {
            name: name.to_string(),
            columns,
            values,
        })
    }
}

const COLUMNAR_MAGIC: &[u8; 8] = b"H2MCOL1\0";

fn csv_io(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse(format!("{}: {other:?}", path.display())),
    }
}

/// On-disk encoding of draw blocks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DrawFormat {
    #[default]
    Csv,
    Columnar,
}

impl DrawFormat {
    fn extension(self) -> &'static str {
        match self {
            DrawFormat::Csv => "csv",
            DrawFormat::Columnar => "bin",
        }
    }
}

impl std::str::FromStr for DrawFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(DrawFormat::Csv),
            "columnar" => Ok(DrawFormat::Columnar),
            _ => Err(Error::InvalidConfig(format!("unknown draw format {s:?}"))),
        }
    }
}

/// Everything one chain leaves behind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainDraws {
    pub chain: usize,
    pub variant: Variant,
    /// Seed derivation path of the chain's streams.
    pub seed_path: String,
    #[serde(skip)]
    pub blocks: Vec<DrawBlock>,
    /// Post-burn-in acceptance rate of every Metropolis block.
    pub acceptance: BTreeMap<String, f64>,
    /// Days entering the health likelihood.
    pub health_days: Vec<usize>,
    /// Posterior mean of `log lambda` on each health day.
    pub eta_mean: Vec<f64>,
    /// Posterior mean and sd of the latent concentrations in original
    /// units, `T x P` column-major; empty when exposure is not modelled.
    pub latent_mean: Vec<f64>,
    pub latent_sd: Vec<f64>,
    pub n_days: usize,
}

#[derive(Serialize, Deserialize)]
struct ChainMeta {
    #[serde(flatten)]
    draws: ChainDraws,
    format: DrawFormat,
    blocks: Vec<String>,
}

impl ChainDraws {
    pub fn block(&self, name: &str) -> Option<&DrawBlock> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub fn n_draws(&self) -> usize {
        self.blocks.first().map_or(0, DrawBlock::n_draws)
    }

    /// Latent mean of day `t`, pollutant `p`, if exposure was modelled.
    pub fn latent(&self, t: usize, p: usize) -> Option<(f64, f64)> {
        let i = p * self.n_days + t;
        Some((*self.latent_mean.get(i)?, *self.latent_sd.get(i)?))
    }

    fn prefix(&self) -> String {
        format!("chain{}", self.chain)
    }

    fn block_path(&self, dir: &Path, block: &str, format: DrawFormat) -> PathBuf {
        dir.join(format!("{}.{block}.{}", self.prefix(), format.extension()))
    }

    /// Write one file per block plus `chain<k>.meta.json`.
    pub fn write_dir(&self, dir: &Path, format: DrawFormat) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for b in &self.blocks {
            let path = self.block_path(dir, &b.name, format);
            match format {
                DrawFormat::Csv => b.write_csv(&path)?,
                DrawFormat::Columnar => b.write_columnar(&path)?,
            }
        }
        let meta = ChainMeta {
            draws: self.clone(),
            format,
            blocks: self.blocks.iter().map(|b| b.name.clone()).collect(),
        };
        let path = dir.join(format!("{}.meta.json", self.prefix()));
        let json = serde_json::to_string_pretty(&meta).map_err(|e| Error::Parse(e.to_string()))?;
        fs::write(&path, json).map_err(|e| Error::io(&path, e))
    }

    /// Read every chain stored in `dir`, ordered by chain index.
    pub fn read_dir(dir: &Path) -> Result<Vec<ChainDraws>> {
        let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut metas = Vec::new();
        for entry in entries {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            if name.starts_with("chain") && name.ends_with(".meta.json") {
                metas.push(path);
            }
        }
        let mut chains = Vec::with_capacity(metas.len());
        for path in metas {
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let meta: ChainMeta = serde_json::from_str(&text)
                .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
            let mut draws = meta.draws;
            for name in &meta.blocks {
                let p = draws.block_path(dir, name, meta.format);
                let block = match meta.format {
                    DrawFormat::Csv => DrawBlock::read_csv(&p, name)?,
                    DrawFormat::Columnar => DrawBlock::read_columnar(&p, name)?,
                };
                draws.blocks.push(block);
            }
            chains.push(draws);
        }
        chains.sort_by_key(|c| c.chain);
        Ok(chains)
    }
}
