//! The database of aligned reduced models and its on-disk format.
//!
//! Files are JSON documents whose matrices are stored as base64-encoded
//! little-endian `f64` payloads in row-major order, so a save/load round trip
//! is bit-exact. A SHA-256 checksum over the document detects tampering.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::asub::{AsBasis, AsMethod};
use crate::flutter::{flutter_constraint_at, FlutterEvaluation};
use crate::interp::{Kernel, TupleDerivative, TupleInterpolant};
use crate::manifolds::orthonormality_defect;
use crate::rom::{Projection, PromEntry, PromTuple};
use crate::{Error, Matrix, Result, Vector};

pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GreedyStatus {
    Converged,
    BudgetExhausted,
    /// Every candidate has been sampled.
    CandidatesExhausted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromDatabase {
    pub hdm_digest: String,
    pub basis: AsBasis,
    pub entries: Vec<PromEntry>,
    pub ref_index: usize,
    pub consistency_applied: bool,
    /// Largest error indicator over the candidates before each greedy step.
    pub history: Vec<f64>,
    pub status: GreedyStatus,
    pub kernel: Kernel,
}

impl PromDatabase {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn interpolant(&self) -> Result<TupleInterpolant> {
        if self.entries.is_empty() {
            return Err(Error::EmptyDatabase);
        }
        if !self.consistency_applied {
            return Err(Error::InconsistentDatabase);
        }
        TupleInterpolant::new(&self.entries, self.ref_index, self.kernel)
    }

    pub fn interpolate_tuple(&self, query: &Vector) -> Result<PromTuple> {
        self.interpolant()?.tuple(query)
    }

    pub fn tuple_sensitivities(&self, query: &Vector) -> Result<Vec<TupleDerivative>> {
        if self.entries.len() < 2 {
            return Err(Error::InvalidParameter(
                "sensitivities need at least two entries".into(),
            ));
        }
        Ok(self.interpolant()?.tuple_with_sensitivities(query)?.1)
    }

    pub fn flutter_constraint(&self, query: &Vector, zeta_lb: f64, n_track: usize) -> Result<FlutterEvaluation> {
        flutter_constraint_at(&self.interpolant()?, query, zeta_lb, n_track)
    }

    /// Largest deviation from identity of the Procrustes rotations that would
    /// align each entry onto the reference; zero for a consistent database.
    pub fn consistency_defect(&self) -> Result<f64> {
        let r = &self.entries[self.ref_index];
        let mut worst: f64 = 0.0;
        for e in &self.entries {
            let qw = crate::manifolds::procrustes(&r.v_w, &e.v_w)?;
            let qu = crate::manifolds::procrustes(&r.v_u, &e.v_u)?;
            for q in [qw, qu] {
                let n = q.nrows();
                worst = worst.max((q - Matrix::identity(n, n)).amax());
            }
        }
        Ok(worst)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EncodedMatrix {
    rows: usize,
    cols: usize,
    data: String,
}

impl EncodedMatrix {
    fn encode(m: &Matrix) -> Self {
        let mut bytes = Vec::with_capacity(8 * m.len());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                bytes.extend_from_slice(&m[(i, j)].to_le_bytes());
            }
        }
        EncodedMatrix {
            rows: m.nrows(),
            cols: m.ncols(),
            data: B64.encode(bytes),
        }
    }

    fn encode_vector(v: &Vector) -> Self {
        Self::encode(&Matrix::from_column_slice(v.len(), 1, v.as_slice()))
    }

    fn decode(&self) -> Result<Matrix> {
        let bytes = B64
            .decode(&self.data)
            .map_err(|e| invalid_data(format!("matrix payload: {e}")))?;
        if bytes.len() != 8 * self.rows * self.cols {
            return Err(invalid_data(format!(
                "matrix payload holds {} bytes for a {}x{} matrix",
                bytes.len(),
                self.rows,
                self.cols
            )));
        }
        let mut m = Matrix::zeros(self.rows, self.cols);
        for (k, chunk) in bytes.chunks_exact(8).enumerate() {
            let x = f64::from_le_bytes(chunk.try_into().expect("eight bytes"));
            if !x.is_finite() {
                return Err(invalid_data("non-finite matrix entry".into()));
            }
            m[(k / self.cols, k % self.cols)] = x;
        }
        Ok(m)
    }

    fn decode_vector(&self) -> Result<Vector> {
        if self.cols != 1 {
            return Err(invalid_data("vector payload with more than one column".into()));
        }
        Ok(self.decode()?.column(0).into_owned())
    }
}

fn invalid_data(msg: String) -> Error {
    Error::Io(io::Error::new(io::ErrorKind::InvalidData, msg))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BasisFile {
    method: AsMethod,
    n_g: usize,
    v: EncodedMatrix,
    singular_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryFile {
    mu_r: EncodedMatrix,
    mu: EncodedMatrix,
    nf: usize,
    ns: usize,
    cal_a: EncodedMatrix,
    cal_b: EncodedMatrix,
    v_w: EncodedMatrix,
    v_u: EncodedMatrix,
    w_w: EncodedMatrix,
    projection: Projection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatabaseFile {
    format_version: u64,
    hdm_digest: String,
    n_entries: usize,
    ref_index: usize,
    consistency_applied: bool,
    status: GreedyStatus,
    kernel: Kernel,
    history: Vec<f64>,
    basis: BasisFile,
    entries: Vec<EntryFile>,
    checksum: String,
}

impl DatabaseFile {
    fn from_db(db: &PromDatabase) -> Self {
        let mut file = DatabaseFile {
            format_version: FORMAT_VERSION,
            hdm_digest: db.hdm_digest.clone(),
            n_entries: db.entries.len(),
            ref_index: db.ref_index,
            consistency_applied: db.consistency_applied,
            status: db.status,
            kernel: db.kernel,
            history: db.history.clone(),
            basis: BasisFile {
                method: db.basis.method,
                n_g: db.basis.n_g(),
                v: EncodedMatrix::encode(&db.basis.v),
                singular_values: db.basis.singular_values.clone(),
            },
            entries: db
                .entries
                .iter()
                .map(|e| EntryFile {
                    mu_r: EncodedMatrix::encode_vector(&e.mu_r),
                    mu: EncodedMatrix::encode_vector(&e.mu),
                    nf: e.tuple.nf,
                    ns: e.tuple.ns,
                    cal_a: EncodedMatrix::encode(&e.tuple.cal_a),
                    cal_b: EncodedMatrix::encode(&e.tuple.cal_b),
                    v_w: EncodedMatrix::encode(&e.v_w),
                    v_u: EncodedMatrix::encode(&e.v_u),
                    w_w: EncodedMatrix::encode(&e.w_w),
                    projection: e.projection,
                })
                .collect(),
            checksum: String::new(),
        };
        file.checksum = file.compute_checksum();
        file
    }

    fn compute_checksum(&self) -> String {
        let mut unsigned = self.clone();
        unsigned.checksum.clear();
        let bytes = serde_json::to_vec(&unsigned).expect("database serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    fn into_db(self) -> Result<PromDatabase> {
        if self.checksum != self.compute_checksum() {
            return Err(invalid_data("database checksum mismatch".into()));
        }
        if self.n_entries != self.entries.len() {
            return Err(invalid_data("entry count disagrees with the entry list".into()));
        }
        let v = self.basis.v.decode()?;
        if v.ncols() != self.basis.n_g || orthonormality_defect(&v) > 1e-10 {
            return Err(invalid_data("stored basis is not orthonormal".into()));
        }
        let basis = AsBasis {
            v,
            singular_values: self.basis.singular_values,
            method: self.basis.method,
        };
        let entries = self
            .entries
            .into_iter()
            .map(|e| {
                let tuple = PromTuple {
                    cal_a: e.cal_a.decode()?,
                    cal_b: e.cal_b.decode()?,
                    nf: e.nf,
                    ns: e.ns,
                };
                let nq = tuple.nq();
                if tuple.cal_a.shape() != (nq, nq) || tuple.cal_b.shape() != (nq, nq) {
                    return Err(invalid_data("tuple shape disagrees with its dimensions".into()));
                }
                Ok(PromEntry {
                    mu_r: e.mu_r.decode_vector()?,
                    mu: e.mu.decode_vector()?,
                    tuple,
                    v_w: e.v_w.decode()?,
                    v_u: e.v_u.decode()?,
                    w_w: e.w_w.decode()?,
                    projection: e.projection,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if !entries.is_empty() && self.ref_index >= entries.len() {
            return Err(invalid_data("reference index out of range".into()));
        }
        Ok(PromDatabase {
            hdm_digest: self.hdm_digest,
            basis,
            entries,
            ref_index: self.ref_index,
            consistency_applied: self.consistency_applied,
            history: self.history,
            status: self.status,
            kernel: self.kernel,
        })
    }
}

/// Serialized form of `db`; identical databases give identical bytes.
pub fn database_bytes(db: &PromDatabase) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(&DatabaseFile::from_db(db)).expect("database serializes");
    bytes.push(b'\n');
    bytes
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::Io(io::Error::new(io::ErrorKind::InvalidInput, "path has no file name")))?;
    let mut tmp_name = name.to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn save_database(db: &PromDatabase, path: &Path) -> Result<()> {
    write_atomic(path, &database_bytes(db))
}

pub fn parse_database(bytes: &[u8]) -> Result<PromDatabase> {
    let value: serde_json::Value =
        serde_json::from_slice(bytes).map_err(|e| invalid_data(format!("database is not valid JSON: {e}")))?;
    let found = value
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| invalid_data("database has no format_version".into()))?;
    if found != FORMAT_VERSION {
        return Err(Error::FormatVersionMismatch {
            found,
            expected: FORMAT_VERSION,
        });
    }
    let file: DatabaseFile =
        serde_json::from_value(value).map_err(|e| invalid_data(format!("malformed database: {e}")))?;
    file.into_db()
}

pub fn load_database(path: &Path) -> Result<PromDatabase> {
    parse_database(&fs::read(path)?)
}

/// Loads a database and checks that it was built from the model with digest
/// `expected`.
pub fn load_database_for(path: &Path, expected: &str) -> Result<PromDatabase> {
    let db = load_database(path)?;
    if db.hdm_digest != expected {
        return Err(Error::DigestMismatch {
            found: db.hdm_digest,
            expected: expected.to_string(),
        });
    }
    Ok(db)
}
