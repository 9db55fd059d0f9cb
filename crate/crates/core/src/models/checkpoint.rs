use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ParamSet, StudentConfig, StudentModel, TeacherConfig, TeacherModel};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"STKD";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Teacher,
    Student,
}

impl ModelKind {
    fn byte(self) -> u8 {
        match self {
            ModelKind::Teacher => 0,
            ModelKind::Student => 1,
        }
    }

    fn from_byte(b: u8) -> Result<Self> {
        match b {
            0 => Ok(ModelKind::Teacher),
            1 => Ok(ModelKind::Student),
            other => Err(Error::Format(format!("unknown model kind byte {other}"))),
        }
    }
}

/// A model restored from disk.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyModel {
    Teacher(TeacherModel),
    Student(StudentModel),
}

impl AnyModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            AnyModel::Teacher(_) => ModelKind::Teacher,
            AnyModel::Student(_) => ModelKind::Student,
        }
    }

    pub fn into_teacher(self) -> Result<TeacherModel> {
        match self {
            AnyModel::Teacher(m) => Ok(m),
            AnyModel::Student(_) => Err(Error::Format(
                "expected a teacher checkpoint, found a student".into(),
            )),
        }
    }

    pub fn into_student(self) -> Result<StudentModel> {
        match self {
            AnyModel::Student(m) => Ok(m),
            AnyModel::Teacher(_) => Err(Error::Format(
                "expected a student checkpoint, found a teacher".into(),
            )),
        }
    }
}

impl From<TeacherModel> for AnyModel {
    fn from(m: TeacherModel) -> Self {
        AnyModel::Teacher(m)
    }
}

impl From<StudentModel> for AnyModel {
    fn from(m: StudentModel) -> Self {
        AnyModel::Student(m)
    }
}

fn encode(kind: ModelKind, hyper: &impl Serialize, params: &ParamSet) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.push(kind.byte());
    let json = serde_json::to_vec(hyper).map_err(|e| Error::Format(e.to_string()))?;
    push_len(&mut out, json.len())?;
    out.extend_from_slice(&json);
    for p in params.iter() {
        push_len(&mut out, p.name.len())?;
        out.extend_from_slice(p.name.as_bytes());
        let dims = p.tensor.dims();
        out.push(dims.len() as u8);
        for &d in dims {
            push_len(&mut out, d)?;
        }
        for v in p.tensor.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn push_len(out: &mut Vec<u8>, n: usize) -> Result<()> {
    let n = u32::try_from(n).map_err(|_| Error::Format(format!("length {n} exceeds u32")))?;
    out.extend_from_slice(&n.to_le_bytes());
    Ok(())
}

/// Writes `model` to `path` (via a temporary sibling file, then a rename).
pub fn save_checkpoint(model: &AnyModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = match model {
        AnyModel::Teacher(m) => encode(ModelKind::Teacher, m.config(), m.params())?,
        AnyModel::Student(m) => encode(ModelKind::Student, m.config(), m.params())?,
    };
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, &bytes).map_err(|e| Error::io(Path::new(&tmp), e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format(format!(
                "checkpoint truncated while reading {what} at byte {}",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }
}

/// Reads a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<AnyModel> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

fn decode(bytes: &[u8]) -> Result<AnyModel> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic bytes)".into()));
    }
    let version = r.u32("version")? as u32;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"
        )));
    }
    let kind = ModelKind::from_byte(r.take(1, "model kind")?[0])?;
    let len = r.u32("hyperparameter length")?;
    let json = r.take(len, "hyperparameters")?;
    let mut params = ParamSet::default();
    while !r.done() {
        let len = r.u32("parameter name length")?;
        let name = std::str::from_utf8(r.take(len, "parameter name")?)
            .map_err(|_| Error::Format("parameter name is not UTF-8".into()))?
            .to_string();
        let rank = r.take(1, "rank")?[0] as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u32("dimension")?);
        }
        let numel: usize = dims.iter().product();
        let raw = r.take(numel * 8, "parameter values")?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let tensor = Tensor::new(&dims, values).map_err(|e| Error::Format(e.to_string()))?;
        params.push(name, tensor);
    }
    let bad_json = |e: serde_json::Error| Error::Format(format!("hyperparameters: {e}"));
    match kind {
        ModelKind::Teacher => {
            let cfg: TeacherConfig = serde_json::from_slice(json).map_err(bad_json)?;
            Ok(AnyModel::Teacher(TeacherModel::from_parts(cfg, params)?))
        }
        ModelKind::Student => {
            let cfg: StudentConfig = serde_json::from_slice(json).map_err(bad_json)?;
            Ok(AnyModel::Student(StudentModel::from_parts(cfg, params)?))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn teacher() -> TeacherModel {
        let cfg = TeacherConfig {
            n_nodes: 4,
            history: 5,
            horizon: 2,
            hidden: 3,
            blocks: 2,
            kernel: 3,
            ..TeacherConfig::default()
        };
        TeacherModel::new(cfg, 7).unwrap()
    }

    fn student() -> StudentModel {
        let cfg = StudentConfig {
            n_nodes: 4,
            history: 5,
            horizon: 2,
            hidden: 3,
            teacher_hidden: 3,
            ..StudentConfig::default()
        };
        StudentModel::new(cfg, 7).unwrap()
    }

    #[test]
    fn round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        for model in [AnyModel::from(teacher()), AnyModel::from(student())] {
            let path = dir.path().join("m.ckpt");
            save_checkpoint(&model, &path).unwrap();
            let back = load_checkpoint(&path).unwrap();
            assert_eq!(back.kind(), model.kind());
            match (&model, &back) {
                (AnyModel::Teacher(a), AnyModel::Teacher(b)) => {
                    assert!(a.params().bitwise_eq(b.params()));
                    assert_eq!(a.config(), b.config());
                }
                (AnyModel::Student(a), AnyModel::Student(b)) => {
                    assert!(a.params().bitwise_eq(b.params()));
                    assert_eq!(a.config(), b.config());
                }
                _ => unreachable!(),
            }
        }
    }

    #[test]
    fn kind_byte_distinguishes_models() {
        let t = encode(ModelKind::Teacher, teacher().config(), teacher().params()).unwrap();
        let s = encode(ModelKind::Student, student().config(), student().params()).unwrap();
        assert_eq!(t[8], 0);
        assert_eq!(s[8], 1);
        assert!(decode(&s).unwrap().into_teacher().is_err());
    }

    #[test]
    fn corrupted_magic() {
        let mut b = encode(ModelKind::Teacher, teacher().config(), teacher().params()).unwrap();
        b[0] = b'X';
        assert!(matches!(decode(&b), Err(Error::Format(_))));
    }

    #[test]
    fn wrong_version() {
        let mut b = encode(ModelKind::Teacher, teacher().config(), teacher().params()).unwrap();
        b[4] = 9;
        assert!(matches!(decode(&b), Err(Error::Format(m)) if m.contains("version")));
    }

    #[test]
    fn every_truncation_is_rejected() {
        let b = encode(ModelKind::Student, student().config(), student().params()).unwrap();
        for cut in 0..b.len() {
            assert!(decode(&b[..cut]).is_err(), "accepted {cut} of {} bytes", b.len());
        }
    }

    #[test]
    fn mismatched_parameters_are_rejected() {
        let mut other = teacher().config().clone();
        other.hidden = 4;
        let b = encode(ModelKind::Teacher, &other, teacher().params()).unwrap();
        assert!(matches!(decode(&b), Err(Error::Format(_))));
    }
}
