//! On-disk trajectory formats.
//!
//! The binary container is little-endian:
//!
//! ```text
//! magic "SQRL" | version u32 = 1 | name_len u16 | name (UTF-8)
//! action_space_size u16 | episode_count u32
//! per episode:
//!   length u32
//!   frames_len u32 | zlib stream of length·84·84 bytes (row-major)
//!   actions: length × u8
//!   rewards: length × f32
//! ```
//!
//! Return-to-go is never stored; it is recomputed on load. The JSON-lines
//! debug format carries one self-describing episode per line.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::ZlibDecoder;
use flate2::write::ZlibEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};

use super::{Episode, TrajectoryDataset, FRAME_PIXELS, FRAME_SIDE};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SQRL";
pub const VERSION: u32 = 1;
const FRAME_LEVEL: u32 = 6;

pub fn encode_container(dataset: &TrajectoryDataset) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let name = dataset.game_name().as_bytes();
    let name_len = u16::try_from(name.len()).map_err(|_| Error::Format("game name too long".into()))?;
    out.extend_from_slice(&name_len.to_le_bytes());
    out.extend_from_slice(name);
    out.extend_from_slice(&(dataset.action_space_size() as u16).to_le_bytes());
    out.extend_from_slice(&(dataset.episodes().len() as u32).to_le_bytes());
    for ep in dataset.episodes() {
        out.extend_from_slice(&(ep.len() as u32).to_le_bytes());
        let mut enc = ZlibEncoder::new(Vec::new(), Compression::new(FRAME_LEVEL));
        enc.write_all(ep.frames())?;
        let block = enc.finish()?;
        out.extend_from_slice(&(block.len() as u32).to_le_bytes());
        out.extend_from_slice(&block);
        out.extend_from_slice(ep.actions());
        for r in ep.rewards() {
            out.extend_from_slice(&r.to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode_container(bytes: &[u8]) -> Result<TrajectoryDataset> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let name_len = cur.u16()? as usize;
    let name = std::str::from_utf8(cur.take(name_len)?)
        .map_err(|_| Error::Format("game name is not UTF-8".into()))?
        .to_string();
    let action_space_size = cur.u16()? as usize;
    let count = cur.u32()? as usize;
    let mut episodes = Vec::with_capacity(count);
    for e in 0..count {
        let len = cur.u32()? as usize;
        let block_len = cur.u32()? as usize;
        let block = cur.take(block_len)?;
        let expected = len * FRAME_PIXELS;
        let mut frames = Vec::with_capacity(expected);
        ZlibDecoder::new(block)
            .take(expected as u64 + 1)
            .read_to_end(&mut frames)
            .map_err(|err| Error::Format(format!("episode {e}: frame block: {err}")))?;
        if frames.len() != expected {
            return Err(Error::Format(format!(
                "episode {e}: frame block holds {} bytes, expected {expected}",
                frames.len()
            )));
        }
        let actions = cur.take(len)?.to_vec();
        let rewards = cur
            .take(4 * len)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        episodes.push(Episode::new(frames, actions, rewards)?);
    }
    if cur.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes", bytes.len() - cur.pos)));
    }
    TrajectoryDataset::new(name, action_space_size, episodes)
}

pub fn write_container(dataset: &TrajectoryDataset, path: &Path) -> Result<()> {
    fs::write(path, encode_container(dataset)?)?;
    Ok(())
}

pub fn read_container(path: &Path) -> Result<TrajectoryDataset> {
    decode_container(&fs::read(path)?)
}

#[derive(Serialize, Deserialize)]
struct JsonEpisode {
    game_name: String,
    action_space_size: usize,
    /// `[len][84][84]`.
    frames: Vec<Vec<Vec<u8>>>,
    actions: Vec<u8>,
    rewards: Vec<f32>,
}

pub fn encode_jsonl(dataset: &TrajectoryDataset) -> Result<String> {
    let mut out = String::new();
    for ep in dataset.episodes() {
        let frames = (0..ep.len())
            .map(|t| ep.frame(t).chunks(FRAME_SIDE).map(<[u8]>::to_vec).collect())
            .collect();
        let line = JsonEpisode {
            game_name: dataset.game_name().to_string(),
            action_space_size: dataset.action_space_size(),
            frames,
            actions: ep.actions().to_vec(),
            rewards: ep.rewards().to_vec(),
        };
        out.push_str(&serde_json::to_string(&line)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn decode_jsonl(text: &str) -> Result<TrajectoryDataset> {
    let mut header: Option<(String, usize)> = None;
    let mut episodes = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let ep: JsonEpisode = serde_json::from_str(line)?;
        match &header {
            None => header = Some((ep.game_name.clone(), ep.action_space_size)),
            Some((g, m)) if *g != ep.game_name || *m != ep.action_space_size => {
                return Err(Error::Format(format!("line {}: mixed games in one file", i + 1)))
            }
            _ => {}
        }
        let mut frames = Vec::with_capacity(ep.frames.len() * FRAME_PIXELS);
        for frame in &ep.frames {
            if frame.len() != FRAME_SIDE || frame.iter().any(|row| row.len() != FRAME_SIDE) {
                return Err(Error::Format(format!("line {}: frame is not 84×84", i + 1)));
            }
            frame.iter().for_each(|row| frames.extend_from_slice(row));
        }
        episodes.push(Episode::new(frames, ep.actions, ep.rewards)?);
    }
    let (name, m) = header.ok_or_else(|| Error::Format("no episodes".into()))?;
    TrajectoryDataset::new(name, m, episodes)
}
