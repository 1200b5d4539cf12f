//! Hub state as stored by the mock and returned from `GET /_state`.

use std::collections::BTreeMap;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HubState {
    pub repos: BTreeMap<String, RepoRecord>,
    /// Content-addressed store keyed by lowercase sha256 hex.
    pub objects: BTreeMap<String, StoredObject>,
    pub commits: Vec<CommitRecord>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoRecord {
    pub private: bool,
    /// Revision name to commit ids, oldest first; the last one is the head.
    pub revisions: BTreeMap<String, Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredObject {
    pub size: u64,
    #[serde(serialize_with = "to_base64", deserialize_with = "from_base64")]
    pub content: Vec<u8>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommittedFile {
    #[serde(with = "hex_digest")]
    pub sha256: [u8; 32],
    pub size: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitRecord {
    pub id: String,
    pub repo: String,
    pub revision: String,
    pub parent: Option<String>,
    pub summary: String,
    /// Full tree after this commit.
    pub files: BTreeMap<String, CommittedFile>,
}

fn to_base64<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&BASE64.encode(bytes))
}

fn from_base64<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
    let s = String::deserialize(d)?;
    BASE64.decode(s).map_err(serde::de::Error::custom)
}

mod hex_digest {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(d))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 32], D::Error> {
        let s = String::deserialize(d)?;
        let mut out = [0u8; 32];
        hex::decode_to_slice(&s, &mut out).map_err(serde::de::Error::custom)?;
        Ok(out)
    }
}

impl HubState {
    pub fn commit(&self, id: &str) -> Option<&CommitRecord> {
        self.commits.iter().find(|c| c.id == id)
    }

    pub fn head(&self, repo: &str, revision: &str) -> Option<&CommitRecord> {
        let id = self.repos.get(repo)?.revisions.get(revision)?.last()?;
        self.commit(id)
    }

    /// Files at the head of `revision`; empty if nothing was committed.
    pub fn tree(&self, repo: &str, revision: &str) -> BTreeMap<String, CommittedFile> {
        self.head(repo, revision).map(|c| c.files.clone()).unwrap_or_default()
    }

    /// Bytes of a committed file.
    pub fn file_content(&self, repo: &str, revision: &str, path: &str) -> Option<&[u8]> {
        let head = self.head(repo, revision)?;
        let file = head.files.get(path)?;
        self.objects.get(&hex::encode(file.sha256)).map(|o| o.content.as_slice())
    }

    pub(crate) fn store(&mut self, content: Vec<u8>) -> String {
        let oid = hex::encode(Sha256::digest(&content));
        self.objects
            .entry(oid.clone())
            .or_insert_with(|| StoredObject { size: content.len() as u64, content });
        oid
    }
}

/// Deterministic commit id over parent, summary and resulting tree.
pub(crate) fn commit_id(
    parent: Option<&str>,
    summary: &str,
    files: &BTreeMap<String, CommittedFile>,
) -> String {
    let mut h = Sha256::new();
    h.update(parent.unwrap_or("").as_bytes());
    h.update([0]);
    h.update(summary.as_bytes());
    h.update([0]);
    for (path, f) in files {
        h.update(path.as_bytes());
        h.update([0]);
        h.update(f.sha256);
        h.update(f.size.to_le_bytes());
    }
    hex::encode(&h.finalize()[..20])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let mut state = HubState::default();
        let oid = state.store(b"hi".to_vec());
        assert_eq!(oid, "8f434346648f6b96df89dda901c5176b10a6d83961dd3c1ac88b59b2dc327aa4");
        let mut files = BTreeMap::new();
        let mut sha = [0u8; 32];
        hex::decode_to_slice(&oid, &mut sha).unwrap();
        files.insert("a.txt".to_string(), CommittedFile { sha256: sha, size: 2 });
        let id = commit_id(None, "init", &files);
        state.commits.push(CommitRecord {
            id: id.clone(),
            repo: "ns/x".into(),
            revision: "main".into(),
            parent: None,
            summary: "init".into(),
            files,
        });
        state.repos.insert(
            "ns/x".into(),
            RepoRecord { private: false, revisions: [("main".to_string(), vec![id])].into() },
        );
        let json = serde_json::to_string(&state).unwrap();
        assert!(json.contains("\"content\":\"aGk=\""));
        let back: HubState = serde_json::from_str(&json).unwrap();
        assert_eq!(back, state);
        assert_eq!(back.file_content("ns/x", "main", "a.txt"), Some(&b"hi"[..]));
    }

    #[test]
    fn identical_bytes_stored_once() {
        let mut state = HubState::default();
        state.store(vec![1, 2, 3]);
        state.store(vec![1, 2, 3]);
        assert_eq!(state.objects.len(), 1);
    }
}
