//! File formats. Variable labels in every file are 1-based.
//!
//! - DAG (JSON): `{"n", "cards", "delta", "parents", "cpts"}` with CPT rows in
//!   the canonical parent-configuration order.
//! - Samples (CSV): header `x1,…,xn`, one integer row per sample.
//! - Frequencies (JSON): `{"n", "k", "l", "cards", "entries": [{"positions", "values", "count"}]}`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{FrequencyTable, SampleMatrix};
use crate::model::{CylinderKey, DiscreteDag};

fn to_one_based(v: usize) -> usize {
    v + 1
}

fn from_one_based<E: serde::de::Error>(v: usize) -> Result<usize, E> {
    v.checked_sub(1)
        .ok_or_else(|| E::custom("variable labels are 1-based; found 0"))
}

/// `#[serde(with)]` adapter storing a 0-based index as a 1-based label.
pub mod one_based_scalar {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &usize, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(super::to_one_based(*v) as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<usize, D::Error> {
        super::from_one_based(usize::deserialize(d)?)
    }
}

/// `#[serde(with)]` adapter for a list of indices.
pub mod one_based {
    use serde::ser::SerializeSeq;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[usize], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for &i in v {
            seq.serialize_element(&super::to_one_based(i))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<usize>, D::Error> {
        Vec::<usize>::deserialize(d)?
            .into_iter()
            .map(super::from_one_based)
            .collect()
    }
}

/// `#[serde(with)]` adapter for a list of index lists.
pub mod one_based_nested {
    use serde::ser::SerializeSeq;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[Vec<usize>], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for inner in v {
            let labels: Vec<usize> = inner.iter().map(|&i| super::to_one_based(i)).collect();
            seq.serialize_element(&labels)?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<usize>>, D::Error> {
        Vec::<Vec<usize>>::deserialize(d)?
            .into_iter()
            .map(|inner| inner.into_iter().map(super::from_one_based).collect())
            .collect()
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DagFile {
    n: usize,
    cards: Vec<usize>,
    delta: usize,
    #[serde(with = "one_based_nested")]
    parents: Vec<Vec<usize>>,
    cpts: Vec<Vec<Vec<f64>>>,
}

pub fn write_dag<W: Write>(dag: &DiscreteDag, w: W) -> Result<()> {
    let file = DagFile {
        n: dag.n(),
        cards: dag.cards().to_vec(),
        delta: dag.delta(),
        parents: dag.parent_sets().to_vec(),
        cpts: dag.cpts().to_vec(),
    };
    write_json(&file, w)
}

pub fn read_dag<R: Read>(r: R) -> Result<DiscreteDag> {
    let file: DagFile = serde_json::from_reader(r)?;
    if file.n != file.cards.len() {
        return Err(Error::Format(format!(
            "n = {} but {} cardinalities",
            file.n,
            file.cards.len()
        )));
    }
    DiscreteDag::new(file.cards, file.delta, file.parents, file.cpts)
}

pub fn save_dag(dag: &DiscreteDag, path: impl AsRef<Path>) -> Result<()> {
    write_dag(dag, BufWriter::new(File::create(path)?))
}

pub fn load_dag(path: impl AsRef<Path>) -> Result<DiscreteDag> {
    read_dag(BufReader::new(File::open(path)?))
}

pub fn write_samples<W: Write>(samples: &SampleMatrix, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record((1..=samples.n()).map(|j| format!("x{j}")))?;
    for row in samples.rows() {
        out.write_record(row.iter().map(usize::to_string))?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a samples CSV. Without `cards`, each cardinality is inferred as
/// the column maximum plus one.
pub fn read_samples<R: Read>(r: R, cards: Option<&[usize]>) -> Result<SampleMatrix> {
    let mut input = csv::Reader::from_reader(r);
    let header = input.headers()?.clone();
    for (j, name) in header.iter().enumerate() {
        if name.trim() != format!("x{}", j + 1) {
            return Err(Error::Format(format!(
                "column {} is named {name:?}, expected x{}",
                j + 1,
                j + 1
            )));
        }
    }
    let n = header.len();
    let mut rows = Vec::new();
    for record in input.records() {
        let record = record?;
        let row = record
            .iter()
            .map(|v| {
                v.trim()
                    .parse::<usize>()
                    .map_err(|e| Error::Format(format!("line {}: {v:?}: {e}", rows.len() + 2)))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let cards = match cards {
        Some(c) => {
            if c.len() != n {
                return Err(Error::ShapeMismatch(format!(
                    "{} cardinalities for {n} columns",
                    c.len()
                )));
            }
            c.to_vec()
        }
        None => (0..n)
            .map(|j| {
                rows.iter()
                    .map(|r: &Vec<usize>| r[j] + 1)
                    .max()
                    .unwrap_or(1)
            })
            .collect(),
    };
    SampleMatrix::new(cards, rows)
}

pub fn save_samples(samples: &SampleMatrix, path: impl AsRef<Path>) -> Result<()> {
    write_samples(samples, BufWriter::new(File::create(path)?))
}

pub fn load_samples(path: impl AsRef<Path>, cards: Option<&[usize]>) -> Result<SampleMatrix> {
    read_samples(BufReader::new(File::open(path)?), cards)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrequencyEntry {
    #[serde(with = "one_based")]
    positions: Vec<usize>,
    values: Vec<usize>,
    count: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrequencyFile {
    n: usize,
    k: usize,
    l: usize,
    cards: Vec<usize>,
    entries: Vec<FrequencyEntry>,
}

pub fn write_frequencies<W: Write>(freq: &FrequencyTable, w: W) -> Result<()> {
    let file = FrequencyFile {
        n: freq.n(),
        k: freq.k(),
        l: freq.l(),
        cards: freq.cards().to_vec(),
        entries: freq
            .entries()
            .into_iter()
            .map(|(key, count)| FrequencyEntry {
                positions: key.positions,
                values: key.values,
                count,
            })
            .collect(),
    };
    write_json(&file, w)
}

pub fn read_frequencies<R: Read>(r: R) -> Result<FrequencyTable> {
    let file: FrequencyFile = serde_json::from_reader(r)?;
    if file.n != file.cards.len() {
        return Err(Error::Format(format!(
            "n = {} but {} cardinalities",
            file.n,
            file.cards.len()
        )));
    }
    FrequencyTable::from_entries(
        file.cards,
        file.k,
        file.l,
        file.entries.into_iter().map(|e| {
            (
                CylinderKey {
                    positions: e.positions,
                    values: e.values,
                },
                e.count,
            )
        }),
    )
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize, W: Write>(value: &T, mut w: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn save_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    write_json(value, BufWriter::new(File::create(path)?))
}

pub fn load_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}
