//! Binary checkpoint: `SACK` magic, u32 LE header length, JSON header, then
//! each parameter block as a u64 LE count followed by f64 LE values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Architecture, Model, ModelConfig};
use crate::corpus::{Label, LabelSet, Vocabulary, AUG_LABEL};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"SACK";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub architecture: Architecture,
    pub config: ModelConfig,
    pub embedding_dim: usize,
    pub labels: Vec<Label>,
    pub vocab_hash: String,
}

pub fn write_checkpoint<W: Write>(model: &Model, mut w: W) -> Result<()> {
    let header = CheckpointHeader {
        format_version: FORMAT_VERSION,
        architecture: model.config().arch,
        config: model.config().clone(),
        embedding_dim: model.config().embedding_dim,
        labels: model.labels.all(),
        vocab_hash: model.vocab().hash(),
    };
    let json = serde_json::to_vec(&header)?;
    let io = |e| Error::io("<checkpoint>", e);
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&(json.len() as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&json).map_err(io)?;
    for block in model.blocks() {
        w.write_all(&(block.len() as u64).to_le_bytes()).map_err(io)?;
        for v in block {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|e| Error::Checkpoint(format!("truncated checkpoint: {e}")))
}

/// Reads a checkpoint, checking that `vocab` is the vocabulary it was trained with.
pub fn read_checkpoint<R: Read>(mut r: R, vocab: Vocabulary) -> Result<(Model, CheckpointHeader)> {
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let mut len = [0u8; 4];
    read_exact(&mut r, &mut len)?;
    let mut json = vec![0u8; u32::from_le_bytes(len) as usize];
    read_exact(&mut r, &mut json)?;
    let header: CheckpointHeader = serde_json::from_slice(&json)?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {}",
            header.format_version
        )));
    }
    let found = vocab.hash();
    if found != header.vocab_hash {
        return Err(Error::VocabHash {
            expected: header.vocab_hash,
            found,
        });
    }
    let base: Vec<&str> = header
        .labels
        .iter()
        .map(Label::as_str)
        .filter(|l| *l != AUG_LABEL)
        .collect();
    let mut labels = LabelSet::new(&base)?;
    if base.len() < header.labels.len() {
        labels = labels.with_aug();
    }
    let expected_blocks = header.config.block_layout().len() + 2;
    let mut blocks = Vec::with_capacity(expected_blocks);
    for _ in 0..expected_blocks {
        let mut n = [0u8; 8];
        read_exact(&mut r, &mut n)?;
        let n = u64::from_le_bytes(n) as usize;
        let mut raw = vec![0u8; n * 8];
        read_exact(&mut r, &mut raw)?;
        blocks.push(
            raw.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect(),
        );
    }
    let model = Model::from_parts(header.config.clone(), labels, vocab, blocks)?;
    Ok((model, header))
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(model, BufWriter::new(f))
}

pub fn load_checkpoint(path: &Path, vocab: Vocabulary) -> Result<Model> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(BufReader::new(f), vocab).map(|(m, _)| m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::tiny;
    use crate::model::Classifier;

    #[test]
    fn round_trip_preserves_parameters_and_predictions() {
        for arch in [Architecture::Cnn, Architecture::Rnn] {
            let m = tiny(arch, 3);
            let m = m.clone().with_labels(m.labels().clone().with_aug(), 3).unwrap();
            let mut buf = Vec::new();
            write_checkpoint(&m, &mut buf).unwrap();
            let (back, header) = read_checkpoint(buf.as_slice(), m.vocab().clone()).unwrap();
            assert_eq!(header.architecture, arch);
            assert_eq!(back.blocks(), m.blocks());
            assert_eq!(back.labels(), m.labels());
            let words = ["good", "plot", "the"];
            assert_eq!(back.scores(&words), m.scores(&words));
        }
    }

    #[test]
    fn vocabulary_mismatch_is_rejected() {
        let m = tiny(Architecture::Cnn, 1);
        let mut buf = Vec::new();
        write_checkpoint(&m, &mut buf).unwrap();
        let other = Vocabulary::from_words(["good", "bad", "film", "the", "story"]);
        assert!(matches!(
            read_checkpoint(buf.as_slice(), other),
            Err(Error::VocabHash { .. })
        ));
    }

    #[test]
    fn truncation_is_an_error() {
        let m = tiny(Architecture::Rnn, 1);
        let mut buf = Vec::new();
        write_checkpoint(&m, &mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(read_checkpoint(buf.as_slice(), m.vocab().clone()).is_err());
    }
}
