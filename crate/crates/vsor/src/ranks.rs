//! `{"ranks": {"<id>": <rank>, ...}}` rank tables.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RanksDoc {
    ranks: BTreeMap<String, usize>,
}

pub fn decode(text: &str) -> std::result::Result<BTreeMap<u16, usize>, String> {
    let doc: RanksDoc = serde_json::from_str(text).map_err(|e| e.to_string())?;
    doc.ranks
        .into_iter()
        .map(|(k, v)| {
            k.parse::<u16>()
                .map(|id| (id, v))
                .map_err(|_| format!("instance id `{k}` is not a 16-bit integer"))
        })
        .collect()
}

pub fn encode(ranks: &BTreeMap<u16, usize>) -> String {
    let doc = RanksDoc {
        ranks: ranks.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
    };
    serde_json::to_string(&doc).unwrap() + "\n"
}

pub fn read(path: &Path) -> Result<BTreeMap<u16, usize>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    decode(&text).map_err(|reason| Error::Json {
        path: path.into(),
        reason,
    })
}

pub fn write(path: &Path, ranks: &BTreeMap<u16, usize>) -> Result<()> {
    std::fs::write(path, encode(ranks)).map_err(|e| Error::io(path, e))
}
