//! Newline-delimited JSON dataset file.
//!
//! Line 1 is a `world` record carrying the generating process; every other
//! line is a `train`, `forget`, `remain` or `ref` record. Floats use the
//! shortest representation that round-trips.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::splits::{DatasetSplits, Pool};
use super::world::WorldSpec;
use super::{DatasetError, PairedExample, Prompt};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: u32,
    vocab: usize,
    genres: usize,
    moods: usize,
    seq_len: usize,
    seed: u64,
    remain_shift: f64,
    initial: Vec<f64>,
    transitions: Vec<f64>,
    remain_transitions: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
enum Record {
    World(Header),
    Train {
        prompt: [usize; 2],
        tokens: Vec<usize>,
    },
    Forget {
        index: usize,
        prompt: [usize; 2],
        tokens: Vec<usize>,
    },
    Remain {
        prompt: [usize; 2],
        tokens: Vec<usize>,
    },
    Ref {
        pool: Pool,
        owner: [usize; 2],
        tokens: Vec<usize>,
    },
}

fn pair(p: Prompt) -> [usize; 2] {
    [p.genre, p.mood]
}

pub fn write_splits<W: Write>(splits: &DatasetSplits, out: W) -> Result<(), DatasetError> {
    let mut out = BufWriter::new(out);
    let w = &splits.world;
    let mut emit = |r: &Record| -> Result<(), DatasetError> {
        serde_json::to_writer(&mut out, r).map_err(std::io::Error::other)?;
        out.write_all(b"\n")?;
        Ok(())
    };
    emit(&Record::World(Header {
        format: FORMAT_VERSION,
        vocab: w.vocab(),
        genres: w.genres(),
        moods: w.moods(),
        seq_len: w.seq_len(),
        seed: w.seed(),
        remain_shift: splits.remain_shift,
        initial: w.initial_table().to_vec(),
        transitions: w.transition_table().to_vec(),
        remain_transitions: splits.remain_transitions.clone(),
    }))?;
    for e in &splits.train {
        emit(&Record::Train {
            prompt: pair(e.prompt),
            tokens: e.tokens.clone(),
        })?;
    }
    for &i in &splits.forget_indices {
        let e = &splits.train[i];
        emit(&Record::Forget {
            index: i,
            prompt: pair(e.prompt),
            tokens: e.tokens.clone(),
        })?;
    }
    for e in &splits.remain {
        emit(&Record::Remain {
            prompt: pair(e.prompt),
            tokens: e.tokens.clone(),
        })?;
    }
    for ((pool, p), seqs) in &splits.references {
        for s in seqs {
            emit(&Record::Ref {
                pool: *pool,
                owner: pair(*p),
                tokens: s.clone(),
            })?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_splits<R: BufRead>(input: R) -> Result<DatasetSplits, DatasetError> {
    let mut lines = input.lines().enumerate();
    let malformed = |line: usize, message: String| DatasetError::Malformed { line, message };

    let (_, first) = lines.next().ok_or_else(|| malformed(1, "empty file".into()))?;
    let header = match serde_json::from_str::<Record>(&first?) {
        Ok(Record::World(h)) => h,
        Ok(_) => return Err(malformed(1, "first record must be the world header".into())),
        Err(e) => return Err(malformed(1, e.to_string())),
    };
    if header.format != FORMAT_VERSION {
        return Err(malformed(1, format!("unsupported format version {}", header.format)));
    }
    let world = WorldSpec::from_parts(
        header.vocab,
        header.genres,
        header.moods,
        header.seq_len,
        header.seed,
        header.initial,
        header.transitions,
    )
    .map_err(|e| malformed(1, e.to_string()))?;
    if header.remain_transitions.len() != world.transition_table().len() {
        return Err(malformed(1, "remain transition table has the wrong size".into()));
    }

    let mut train = Vec::new();
    let mut forget_indices = Vec::new();
    let mut remain = Vec::new();
    let mut references: BTreeMap<(Pool, Prompt), Vec<Vec<usize>>> = BTreeMap::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| malformed(lineno, e.to_string()))?;
        let example = |prompt: [usize; 2], tokens: Vec<usize>| -> Result<PairedExample, DatasetError> {
            let p = Prompt::new(prompt[0], prompt[1]);
            world.check_prompt(p).map_err(|e| malformed(lineno, e.to_string()))?;
            if tokens.len() != world.seq_len() {
                return Err(malformed(lineno, format!("sequence length {} ≠ {}", tokens.len(), world.seq_len())));
            }
            if let Some(&t) = tokens.iter().find(|&&t| t >= world.vocab()) {
                let err = DatasetError::TokenOutOfVocab {
                    token: t,
                    vocab: world.vocab(),
                };
                return Err(malformed(lineno, err.to_string()));
            }
            Ok(PairedExample::new(p, tokens))
        };
        match rec {
            Record::World(_) => return Err(malformed(lineno, "duplicate world header".into())),
            Record::Train { prompt, tokens } => train.push(example(prompt, tokens)?),
            Record::Forget { index, prompt, tokens } => {
                let e = example(prompt, tokens)?;
                if train.get(index) != Some(&e) {
                    return Err(malformed(lineno, format!("forget record does not match train[{index}]")));
                }
                forget_indices.push(index);
            }
            Record::Remain { prompt, tokens } => remain.push(example(prompt, tokens)?),
            Record::Ref { pool, owner, tokens } => {
                let e = example(owner, tokens)?;
                references.entry((pool, e.prompt)).or_default().push(e.tokens);
            }
        }
    }
    let splits = DatasetSplits {
        world,
        remain_shift: header.remain_shift,
        remain_transitions: header.remain_transitions,
        train,
        forget_indices,
        remain,
        references,
    };
    splits.validate()?;
    Ok(splits)
}

pub fn save_splits(splits: &DatasetSplits, path: &Path) -> Result<(), DatasetError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    write_splits(splits, File::create(path)?)
}

pub fn load_splits(path: &Path) -> Result<DatasetSplits, DatasetError> {
    read_splits(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = r#"{"record":"world","format":1,"vocab":2,"genres":1,"moods":1,"seq_len":3,"seed":0,"remain_shift":0.0,"initial":[0.5,0.5],"transitions":[0.5,0.5,0.5,0.5],"remain_transitions":[0.5,0.5,0.5,0.5]}"#;

    fn fixture(remain: &str) -> String {
        let mut s = format!("{HEADER}\n");
        s.push_str("{\"record\":\"train\",\"prompt\":[0,0],\"tokens\":[0,1,1]}\n");
        s.push_str("{\"record\":\"forget\",\"index\":0,\"prompt\":[0,0],\"tokens\":[0,1,1]}\n");
        s.push_str(remain);
        for i in 0..8 {
            s.push_str(&format!(
                "{{\"record\":\"ref\",\"pool\":\"{}\",\"owner\":[0,0],\"tokens\":[{},0,1]}}\n",
                if i % 2 == 0 { "forget" } else { "remain" },
                i % 2
            ));
        }
        for _ in 0..8 {
            s.push_str("{\"record\":\"ref\",\"pool\":\"forget\",\"owner\":[0,0],\"tokens\":[1,1,1]}\n");
            s.push_str("{\"record\":\"ref\",\"pool\":\"remain\",\"owner\":[0,0],\"tokens\":[0,0,0]}\n");
        }
        s
    }

    #[test]
    fn hand_written_fixture_loads() {
        let text = fixture("{\"record\":\"remain\",\"prompt\":[0,0],\"tokens\":[1,0,0]}\n");
        let s = read_splits(text.as_bytes()).unwrap();
        assert_eq!(s.train, vec![PairedExample::new(Prompt::new(0, 0), vec![0, 1, 1])]);
        assert_eq!(s.forget_indices, vec![0]);
        assert_eq!(s.remain, vec![PairedExample::new(Prompt::new(0, 0), vec![1, 0, 0])]);
        assert_eq!(s.references(Pool::Forget, Prompt::new(0, 0)).len(), 12);
    }

    #[test]
    fn empty_remain_rejected() {
        let text = fixture("");
        assert!(matches!(read_splits(text.as_bytes()), Err(DatasetError::EmptyRemain)));
    }

    #[test]
    fn malformed_line_reports_number() {
        let text = fixture("{\"record\":\"remain\",\"prompt\":[0,0]\n");
        match read_splits(text.as_bytes()) {
            Err(DatasetError::Malformed { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn out_of_vocab_token_rejected() {
        let text = fixture("{\"record\":\"remain\",\"prompt\":[0,0],\"tokens\":[2,0,0]}\n");
        match read_splits(text.as_bytes()) {
            Err(DatasetError::Malformed { line, message }) => {
                assert_eq!(line, 4);
                assert!(message.contains("outside vocabulary"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn remain_overlapping_train_rejected() {
        let text = fixture("{\"record\":\"remain\",\"prompt\":[0,0],\"tokens\":[0,1,1]}\n");
        assert!(matches!(read_splits(text.as_bytes()), Err(DatasetError::Invariant(_))));
    }
}
