//! Record of everything that crossed a party boundary during training.
//!
//! Text form, one line per transfer:
//!
//! ```text
//! round=<r> from=<party> to=<party> kind=<kind> rows=<n> bytes=<n> user_rows=<n> dense_params=<n> feature_set=<hex>
//! ```
//!
//! `feature_set` is a SHA-256 prefix of the sorted feature ids carried by a
//! `feature_embeddings` payload (`-` for other kinds), so a log can be checked
//! against a split without listing thousands of ids.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Party {
    Client(usize),
    Server,
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Party::Client(c) => write!(f, "client{}", c + 1),
            Party::Server => f.write_str("server"),
        }
    }
}

impl FromStr for Party {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "server" {
            return Ok(Party::Server);
        }
        s.strip_prefix("client")
            .and_then(|n| n.parse::<usize>().ok())
            .filter(|&n| n >= 1)
            .map(|n| Party::Client(n - 1))
            .ok_or_else(|| Error::Config(format!("bad party `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PayloadKind {
    FeatureEmbeddings,
    UserEmbeddings,
    DenseParameters,
    FullModel,
}

impl PayloadKind {
    fn name(self) -> &'static str {
        match self {
            PayloadKind::FeatureEmbeddings => "feature_embeddings",
            PayloadKind::UserEmbeddings => "user_embeddings",
            PayloadKind::DenseParameters => "dense_parameters",
            PayloadKind::FullModel => "full_model",
        }
    }
}

impl FromStr for PayloadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            PayloadKind::FeatureEmbeddings,
            PayloadKind::UserEmbeddings,
            PayloadKind::DenseParameters,
            PayloadKind::FullModel,
        ]
        .into_iter()
        .find(|k| k.name() == s)
        .ok_or_else(|| Error::Config(format!("bad payload kind `{s}`")))
    }
}

/// The only payload FedDMF clients send: embedding rows of named features.
#[derive(Clone, Debug, PartialEq)]
pub struct SharedEmbeddings {
    pub feature_ids: Vec<usize>,
    pub rows: Matrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExchangeRecord {
    pub round: usize,
    pub from: Party,
    pub to: Party,
    pub kind: PayloadKind,
    pub rows: usize,
    pub bytes: usize,
    pub user_rows: usize,
    pub dense_params: usize,
    pub feature_set: Option<String>,
}

pub fn feature_set_digest(ids: &[usize]) -> String {
    let mut sorted = ids.to_vec();
    sorted.sort_unstable();
    let mut h = Sha256::new();
    for id in sorted {
        h.update((id as u64).to_le_bytes());
    }
    hex::encode(&h.finalize()[..8])
}

impl ExchangeRecord {
    pub fn shared_embeddings(round: usize, from: Party, to: Party, payload: &SharedEmbeddings) -> Self {
        let rows = payload.rows.rows();
        ExchangeRecord {
            round,
            from,
            to,
            kind: PayloadKind::FeatureEmbeddings,
            rows,
            bytes: rows * payload.rows.cols() * std::mem::size_of::<f64>(),
            user_rows: 0,
            dense_params: 0,
            feature_set: Some(feature_set_digest(&payload.feature_ids)),
        }
    }

    pub fn full_model(round: usize, from: Party, to: Party, model: &crate::model::DmfModel) -> Self {
        let values = model.param_values();
        let total: usize = values.iter().map(|(_, v)| v.len()).sum();
        let user_rows = model.num_users();
        let emb = model.embed_dim();
        let dense = total - (model.num_users() + model.num_features()) * emb;
        ExchangeRecord {
            round,
            from,
            to,
            kind: PayloadKind::FullModel,
            rows: model.num_users() + model.num_features(),
            bytes: total * std::mem::size_of::<f64>(),
            user_rows,
            dense_params: dense,
            feature_set: None,
        }
    }
}

impl fmt::Display for ExchangeRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "round={} from={} to={} kind={} rows={} bytes={} user_rows={} dense_params={} feature_set={}",
            self.round,
            self.from,
            self.to,
            self.kind.name(),
            self.rows,
            self.bytes,
            self.user_rows,
            self.dense_params,
            self.feature_set.as_deref().unwrap_or("-"),
        )
    }
}

impl FromStr for ExchangeRecord {
    type Err = Error;

    fn from_str(line: &str) -> Result<Self> {
        let mut fields = std::collections::BTreeMap::new();
        for tok in line.split_whitespace() {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("bad audit token `{tok}`")))?;
            fields.insert(k, v);
        }
        let get = |k: &str| fields.get(k).copied().ok_or_else(|| Error::Config(format!("audit line lacks `{k}`")));
        let num = |k: &str| -> Result<usize> {
            get(k)?
                .parse::<usize>()
                .map_err(|e| Error::Config(format!("audit field `{k}`: {e}")))
        };
        if fields.len() != 9 {
            return Err(Error::Config(format!("audit line has {} fields, expected 9", fields.len())));
        }
        Ok(ExchangeRecord {
            round: num("round")?,
            from: get("from")?.parse()?,
            to: get("to")?.parse()?,
            kind: get("kind")?.parse()?,
            rows: num("rows")?,
            bytes: num("bytes")?,
            user_rows: num("user_rows")?,
            dense_params: num("dense_params")?,
            feature_set: match get("feature_set")? {
                "-" => None,
                s => Some(s.to_string()),
            },
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExchangeLog {
    pub records: Vec<ExchangeRecord>,
}

impl ExchangeLog {
    pub fn push(&mut self, record: ExchangeRecord) {
        self.records.push(record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&r.to_string());
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<ExchangeLog> {
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(str::parse)
            .collect::<Result<Vec<_>>>()?;
        Ok(ExchangeLog { records })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<ExchangeLog> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ExchangeLog::parse(&text)
    }

    /// Checks that every transfer carried exactly the common-feature embedding
    /// rows and nothing else: no user rows, no dense-layer parameters.
    pub fn verify_feature_only(&self, common_features: &[usize]) -> Result<()> {
        let digest = feature_set_digest(common_features);
        for (i, r) in self.records.iter().enumerate() {
            let fail = |why: String| Err(Error::State(format!("audit record {i} ({r}): {why}")));
            if r.kind != PayloadKind::FeatureEmbeddings {
                return fail(format!("payload kind {}", r.kind.name()));
            }
            if r.user_rows != 0 {
                return fail("carries user embedding rows".into());
            }
            if r.dense_params != 0 {
                return fail("carries dense-layer parameters".into());
            }
            if r.rows != common_features.len() {
                return fail(format!("{} rows, common set has {}", r.rows, common_features.len()));
            }
            if r.feature_set.as_deref() != Some(digest.as_str()) {
                return fail("feature ids differ from the common feature set".into());
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn payload(ids: Vec<usize>) -> SharedEmbeddings {
        SharedEmbeddings {
            rows: Matrix::filled(ids.len(), 4, 0.1),
            feature_ids: ids,
        }
    }

    #[test]
    fn text_roundtrip() {
        let mut log = ExchangeLog::default();
        log.push(ExchangeRecord::shared_embeddings(0, Party::Client(0), Party::Client(1), &payload(vec![3, 1, 2])));
        log.push(ExchangeRecord::shared_embeddings(0, Party::Client(1), Party::Client(0), &payload(vec![1, 2, 3])));
        let text = log.to_text();
        assert!(text.starts_with("round=0 from=client1 to=client2 kind=feature_embeddings rows=3 bytes=96 user_rows=0 dense_params=0"));
        assert_eq!(ExchangeLog::parse(&text).unwrap(), log);
        log.verify_feature_only(&[1, 2, 3]).unwrap();
    }

    #[test]
    fn verify_catches_violations() {
        let mut log = ExchangeLog::default();
        log.push(ExchangeRecord::shared_embeddings(0, Party::Client(0), Party::Client(1), &payload(vec![1, 2, 4])));
        assert!(log.verify_feature_only(&[1, 2, 3]).is_err());

        let mut rng = crate::nn::Rng::new(1);
        let model = crate::model::init_model(2, 3, 4, 4, 0.0, &mut rng).unwrap();
        let mut log = ExchangeLog::default();
        log.push(ExchangeRecord::full_model(0, Party::Client(0), Party::Server, &model));
        let err = log.verify_feature_only(&[0, 1, 2]).unwrap_err();
        assert!(err.to_string().contains("full_model"));
        assert_eq!(log.records[0].user_rows, 2);
        assert_eq!(log.records[0].dense_params, 4 * 4 + 4 + 4 * 4 + 4 + 8 + 1);
    }

    #[test]
    fn malformed_lines_rejected() {
        assert!(ExchangeLog::parse("round=0 from=client1").is_err());
        assert!(ExchangeLog::parse("garbage").is_err());
    }
}
