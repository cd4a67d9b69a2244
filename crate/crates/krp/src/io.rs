//! Sequence CSV, dataset manifests, and the binary descriptor/model
//! formats.
//!
//! - Sequence files: headerless CSV, UTF-8, `\n` line endings, `.`
//!   decimal separator, one row per frame. Values are printed with
//!   Rust's shortest round-trip formatting, so write/read loses nothing
//!   on finite doubles.
//! - Manifests: CSV lines `relative/path.csv,label`; string labels are
//!   mapped to dense ids in first-appearance order.
//! - Descriptors: little-endian binary, magic `KRPD`, version `u32`,
//!   kind `u8` (0 = pre-image, 1 = subspace), then the payload.
//! - Models: little-endian binary, magic `KRPM`, with the dual
//!   coefficients, the label mapping, and the training descriptor paths.
//!
//! Files are written to a temporary sibling and renamed into place, so a
//! crashed run never leaves a truncated artifact behind.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};

use krp_core::classify::GramModel;
use krp_core::grasskernel::{ClassificationGram, Descriptor, DescriptorKind};
use krp_core::krpfs::SubspaceDescriptor;
use krp_core::linrank::{PoolMeta, PoolMethod, PreimageDescriptor};
use krp_core::seq::{LabeledDataset, Sequence};

use crate::{Error, Result};

const DESCRIPTOR_MAGIC: &[u8; 4] = b"KRPD";
const MODEL_MAGIC: &[u8; 4] = b"KRPM";
const FORMAT_VERSION: u32 = 1;

// ---------------------------------------------------------------------
// Sequence CSV
// ---------------------------------------------------------------------

/// Loads a headerless numeric CSV as a sequence (rows are frames).
pub fn load_sequence(path: &Path) -> Result<Sequence> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.split('\n').enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for cell in line.split(',') {
            let value: f64 = cell.trim().parse().map_err(|_| {
                Error::format(format!(
                    "{}:{}: non-numeric cell {cell:?}",
                    path.display(),
                    lineno + 1
                ))
            })?;
            row.push(value);
        }
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::format(format!(
                    "{}:{}: ragged row has {} cells, expected {}",
                    path.display(),
                    lineno + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    Ok(Sequence::from_rows(&rows)?)
}

/// Writes a sequence as headerless CSV with round-trip precision.
pub fn save_sequence(path: &Path, x: &Sequence) -> Result<()> {
    let mut out = String::new();
    for i in 0..x.frame_count() {
        for c in 0..x.dim() {
            if c > 0 {
                out.push(',');
            }
            out.push_str(&format!("{}", x.frames()[(i, c)]));
        }
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

// ---------------------------------------------------------------------
// Manifests
// ---------------------------------------------------------------------

/// One manifest line: a sequence file and its dense class id.
#[derive(Debug, Clone)]
pub struct ManifestEntry {
    pub rel_path: String,
    pub label: usize,
}

/// A parsed dataset manifest.
#[derive(Debug, Clone)]
pub struct Manifest {
    /// Directory the relative paths resolve against.
    pub dir: PathBuf,
    pub entries: Vec<ManifestEntry>,
    /// Original label strings in dense-id order.
    pub class_names: Vec<String>,
}

impl Manifest {
    pub fn sequence_path(&self, entry: &ManifestEntry) -> PathBuf {
        self.dir.join(&entry.rel_path)
    }
}

/// Parses `path,label` lines; labels become dense ids in first-appearance
/// order. Requires at least two classes.
pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let dir = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
    let mut entries = Vec::new();
    let mut class_names: Vec<String> = Vec::new();
    for (lineno, line) in text.split('\n').enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let Some((rel_path, label_name)) = line.rsplit_once(',') else {
            return Err(Error::format(format!(
                "{}:{}: expected `path,label`",
                path.display(),
                lineno + 1
            )));
        };
        let label_name = label_name.trim();
        let label = match class_names.iter().position(|n| n == label_name) {
            Some(id) => id,
            None => {
                class_names.push(label_name.to_string());
                class_names.len() - 1
            }
        };
        entries.push(ManifestEntry {
            rel_path: rel_path.trim().to_string(),
            label,
        });
    }
    if entries.is_empty() {
        return Err(Error::format(format!("{}: empty manifest", path.display())));
    }
    if class_names.len() < 2 {
        return Err(Error::format(format!(
            "{}: need at least 2 classes, found {}",
            path.display(),
            class_names.len()
        )));
    }
    Ok(Manifest {
        dir,
        entries,
        class_names,
    })
}

/// Loads every sequence referenced by a manifest, in manifest order.
pub fn load_sequences(manifest: &Manifest) -> Result<Vec<Sequence>> {
    manifest
        .entries
        .iter()
        .map(|e| load_sequence(&manifest.sequence_path(e)))
        .collect()
}

/// Loads a manifest into a labeled dataset.
pub fn load_labeled_dataset(path: &Path) -> Result<LabeledDataset> {
    let manifest = load_manifest(path)?;
    let sequences = load_sequences(&manifest)?;
    let items = sequences
        .into_iter()
        .zip(manifest.entries.iter().map(|e| e.label))
        .collect();
    Ok(LabeledDataset::new(items, manifest.class_names.clone())?)
}

// ---------------------------------------------------------------------
// Little-endian primitives
// ---------------------------------------------------------------------

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::format(format!(
                "{}: unexpected end of file",
                self.path.display()
            )));
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len(&mut self, what: &str) -> Result<usize> {
        let n = self.u64()?;
        if n > 1 << 32 {
            return Err(Error::format(format!(
                "{}: implausible {what} count {n}",
                self.path.display()
            )));
        }
        Ok(n as usize)
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| Error::format(format!("{}: invalid UTF-8", self.path.display())))
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::format(format!(
                "{}: {} trailing bytes",
                self.path.display(),
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn push_string(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn push_matrix_row_major(out: &mut Vec<u8>, m: &DMatrix<f64>) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
}

fn read_matrix_row_major(r: &mut Reader, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = r.f64()?;
        }
    }
    Ok(m)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let tmp = path.with_extension("tmp~");
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().ok();
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------
// Descriptor files
// ---------------------------------------------------------------------

fn method_byte(method: PoolMethod) -> u8 {
    match method {
        PoolMethod::Avg => 0,
        PoolMethod::Rp => 1,
        PoolMethod::Bkrp => 2,
        PoolMethod::Ibkrp => 3,
    }
}

fn method_from_byte(b: u8, path: &Path) -> Result<PoolMethod> {
    Ok(match b {
        0 => PoolMethod::Avg,
        1 => PoolMethod::Rp,
        2 => PoolMethod::Bkrp,
        3 => PoolMethod::Ibkrp,
        other => {
            return Err(Error::format(format!(
                "{}: unknown pooling method tag {other}",
                path.display()
            )))
        }
    })
}

/// Serializes a descriptor of either kind.
pub fn write_descriptor(path: &Path, desc: &Descriptor) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(DESCRIPTOR_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    match desc {
        Descriptor::Preimage(d) => {
            out.push(0);
            out.push(method_byte(d.method));
            out.extend_from_slice(&(d.z.len() as u64).to_le_bytes());
            for v in d.z.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
            for v in [
                d.meta.eta,
                d.meta.lambda,
                d.meta.slack_c,
                d.meta.sigma,
            ] {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out.extend_from_slice(&d.meta.iterations.to_le_bytes());
            out.extend_from_slice(&d.meta.final_objective.to_le_bytes());
        }
        Descriptor::Subspace(d) => {
            out.push(1);
            let (n, p, dim) = (d.frames.frame_count(), d.p, d.frames.dim());
            out.extend_from_slice(&(n as u64).to_le_bytes());
            out.extend_from_slice(&(p as u64).to_le_bytes());
            out.extend_from_slice(&(dim as u64).to_le_bytes());
            out.extend_from_slice(&d.sigma.to_le_bytes());
            out.extend_from_slice(&d.jitter.to_le_bytes());
            out.extend_from_slice(&d.final_objective.to_le_bytes());
            push_matrix_row_major(&mut out, &d.a);
            push_matrix_row_major(&mut out, d.frames.frames());
        }
    }
    write_atomic(path, &out)
}

/// Reads a descriptor written by [`write_descriptor`].
pub fn read_descriptor(path: &Path) -> Result<Descriptor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader {
        buf: &bytes,
        pos: 0,
        path,
    };
    if r.take(4)? != DESCRIPTOR_MAGIC {
        return Err(Error::format(format!(
            "{}: not a descriptor file (bad magic)",
            path.display()
        )));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::format(format!(
            "{}: unsupported descriptor version {version}",
            path.display()
        )));
    }
    let desc = match r.u8()? {
        0 => {
            let method = method_from_byte(r.u8()?, path)?;
            let d = r.len("dimension")?;
            let mut z = DVector::zeros(d);
            for i in 0..d {
                z[i] = r.f64()?;
            }
            let meta = PoolMeta {
                eta: r.f64()?,
                lambda: r.f64()?,
                slack_c: r.f64()?,
                sigma: r.f64()?,
                iterations: r.u64()?,
                final_objective: r.f64()?,
            };
            Descriptor::Preimage(PreimageDescriptor { z, method, meta })
        }
        1 => {
            let n = r.len("frame")?;
            let p = r.len("subspace")?;
            let dim = r.len("dimension")?;
            let sigma = r.f64()?;
            let jitter = r.f64()?;
            let final_objective = r.f64()?;
            let a = read_matrix_row_major(&mut r, n, p)?;
            let frames = read_matrix_row_major(&mut r, n, dim)?;
            Descriptor::Subspace(SubspaceDescriptor {
                a,
                frames: Sequence::from_frames(frames)?,
                sigma,
                jitter,
                p,
                final_objective,
            })
        }
        other => {
            return Err(Error::format(format!(
                "{}: unknown descriptor kind {other}",
                path.display()
            )))
        }
    };
    r.finish()?;
    Ok(desc)
}

// ---------------------------------------------------------------------
// Model files
// ---------------------------------------------------------------------

/// A trained model plus everything needed to score new descriptors.
#[derive(Debug, Clone)]
pub struct StoredModel {
    pub model: GramModel,
    pub kind: DescriptorKind,
    /// ν for subspace models, σ_c for pre-image models.
    pub hyper: f64,
    /// Label strings in dense-id order.
    pub class_names: Vec<String>,
    /// Relative descriptor paths of the training set, in Gram order.
    pub train_refs: Vec<String>,
}

/// Serializes a trained model.
pub fn write_model(path: &Path, stored: &StoredModel) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(match stored.kind {
        DescriptorKind::Preimage => 0,
        DescriptorKind::Subspace => 1,
    });
    out.extend_from_slice(&stored.hyper.to_le_bytes());
    let dual = stored.model.dual_coefficients();
    out.extend_from_slice(&(dual.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(dual.ncols() as u64).to_le_bytes());
    out.extend_from_slice(&stored.model.reg().to_le_bytes());
    push_matrix_row_major(&mut out, dual);
    for name in &stored.class_names {
        push_string(&mut out, name);
    }
    for r in &stored.train_refs {
        push_string(&mut out, r);
    }
    write_atomic(path, &out)
}

/// Reads a model written by [`write_model`].
pub fn read_model(path: &Path) -> Result<StoredModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader {
        buf: &bytes,
        pos: 0,
        path,
    };
    if r.take(4)? != MODEL_MAGIC {
        return Err(Error::format(format!(
            "{}: not a model file (bad magic)",
            path.display()
        )));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::format(format!(
            "{}: unsupported model version {version}",
            path.display()
        )));
    }
    let kind = match r.u8()? {
        0 => DescriptorKind::Preimage,
        1 => DescriptorKind::Subspace,
        other => {
            return Err(Error::format(format!(
                "{}: unknown model kind {other}",
                path.display()
            )))
        }
    };
    let hyper = r.f64()?;
    let m = r.len("training point")?;
    let class_count = r.len("class")?;
    let reg = r.f64()?;
    let dual = read_matrix_row_major(&mut r, m, class_count)?;
    let class_names = (0..class_count)
        .map(|_| r.string())
        .collect::<Result<Vec<_>>>()?;
    let train_refs = (0..m).map(|_| r.string()).collect::<Result<Vec<_>>>()?;
    r.finish()?;
    Ok(StoredModel {
        model: GramModel::from_parts(dual, reg)?,
        kind,
        hyper,
        class_names,
        train_refs,
    })
}

// ---------------------------------------------------------------------
// Gram CSV
// ---------------------------------------------------------------------

/// Writes a Gram matrix as plain numeric CSV (for external solvers).
pub fn write_gram_csv(path: &Path, gram: &ClassificationGram) -> Result<()> {
    let v = gram.values();
    let mut out = String::new();
    for i in 0..v.nrows() {
        for j in 0..v.ncols() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&format!("{}", v[(i, j)]));
        }
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Reads a square numeric CSV back into a Gram matrix wrapper.
pub fn read_gram_csv(path: &Path, hyper: f64, kind: DescriptorKind) -> Result<ClassificationGram> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.split('\n').enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|c| {
                c.trim().parse::<f64>().map_err(|_| {
                    Error::format(format!(
                        "{}:{}: non-numeric cell {c:?}",
                        path.display(),
                        lineno + 1
                    ))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    let m = rows.len();
    if m == 0 || rows.iter().any(|r| r.len() != m) {
        return Err(Error::format(format!(
            "{}: Gram CSV must be square and non-empty",
            path.display()
        )));
    }
    let values = DMatrix::from_fn(m, m, |i, j| rows[i][j]);
    Ok(ClassificationGram::from_values(values, hyper, kind)?)
}
