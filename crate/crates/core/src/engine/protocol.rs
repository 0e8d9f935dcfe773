//! Framed master/worker wire protocol.
//!
//! Every frame is a 4-byte big-endian length `n`, then `n` bytes holding a
//! 1-byte message tag followed by the body. Integers in bodies are
//! big-endian; strings and byte blobs carry a u32 length prefix.
//!
//! | tag | message   | body |
//! |-----|-----------|------|
//! | 1   | HELLO     | worker_id: str, cores: u32 |
//! | 2   | TASK      | task_id: u64, config: str (TOML), tiles: u32 count × tile |
//! | 3   | RESULT    | task_id: u64, results: u32 count × result |
//! | 4   | HEARTBEAT | empty |
//! | 5   | SHUTDOWN  | empty |
//! | 6   | ERROR     | task_id: u64 (0 = none), reason: str |
//!
//! tile = index: u64, scene_id: str, row: u32, col: u32, width: u32,
//! height: u32, rgb: bytes.
//! result = index: u64, status: u8 (0 ok, 1 failed), then for ok:
//! width: u32, height: u32, labels: bytes (one class byte per pixel),
//! filtered rgb: bytes, affected_fraction: f64, micros: u64; for failed:
//! reason: str.

use std::io::{self, Read, Write};

use crate::raster::{LabelMask, SceneRaster};
use crate::tiling::Tile;

/// Frames larger than this are refused without reading the body.
pub const MAX_FRAME_LEN: u32 = 512 * 1024 * 1024;

pub const TAG_HELLO: u8 = 1;
pub const TAG_TASK: u8 = 2;
pub const TAG_RESULT: u8 = 3;
pub const TAG_HEARTBEAT: u8 = 4;
pub const TAG_SHUTDOWN: u8 = 5;
pub const TAG_ERROR: u8 = 6;

#[derive(Debug, thiserror::Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("frame length {0} exceeds limit")]
    FrameTooLarge(u32),
    #[error("empty frame")]
    EmptyFrame,
    #[error("unknown message tag {0}")]
    UnknownTag(u8),
    #[error("malformed {what}: {detail}")]
    Malformed { what: &'static str, detail: String },
}

impl ProtocolError {
    /// Errors after which the byte stream can no longer be trusted.
    pub fn is_fatal(&self) -> bool {
        matches!(self, ProtocolError::Io(_) | ProtocolError::FrameTooLarge(_))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WireTile {
    pub index: u64,
    pub tile: Tile,
}

#[derive(Clone, Debug, PartialEq)]
pub enum TileResult {
    Ok {
        index: u64,
        labels: LabelMask,
        filtered: SceneRaster,
        affected_fraction: f64,
        micros: u64,
    },
    Failed {
        index: u64,
        reason: String,
    },
}

impl TileResult {
    pub fn index(&self) -> u64 {
        match self {
            TileResult::Ok { index, .. } | TileResult::Failed { index, .. } => *index,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TaskMessage {
    Hello { worker_id: String, cores: u32 },
    Task { task_id: u64, config: String, tiles: Vec<WireTile> },
    Result { task_id: u64, results: Vec<TileResult> },
    Heartbeat,
    Shutdown,
    Error { task_id: u64, reason: String },
}

impl TaskMessage {
    pub fn tag(&self) -> u8 {
        match self {
            TaskMessage::Hello { .. } => TAG_HELLO,
            TaskMessage::Task { .. } => TAG_TASK,
            TaskMessage::Result { .. } => TAG_RESULT,
            TaskMessage::Heartbeat => TAG_HEARTBEAT,
            TaskMessage::Shutdown => TAG_SHUTDOWN,
            TaskMessage::Error { .. } => TAG_ERROR,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TaskMessage::Hello { .. } => "HELLO",
            TaskMessage::Task { .. } => "TASK",
            TaskMessage::Result { .. } => "RESULT",
            TaskMessage::Heartbeat => "HEARTBEAT",
            TaskMessage::Shutdown => "SHUTDOWN",
            TaskMessage::Error { .. } => "ERROR",
        }
    }

    /// Full frame bytes, length prefix included.
    pub fn encode(&self) -> Vec<u8> {
        let mut body = Encoder::default();
        body.u8(self.tag());
        match self {
            TaskMessage::Hello { worker_id, cores } => {
                body.str(worker_id);
                body.u32(*cores);
            }
            TaskMessage::Task { task_id, config, tiles } => {
                body.u64(*task_id);
                body.str(config);
                body.u32(tiles.len() as u32);
                for t in tiles {
                    body.u64(t.index);
                    body.str(&t.tile.scene_id);
                    body.u32(t.tile.grid_row as u32);
                    body.u32(t.tile.grid_col as u32);
                    body.u32(t.tile.raster.width() as u32);
                    body.u32(t.tile.raster.height() as u32);
                    body.bytes(t.tile.raster.data());
                }
            }
            TaskMessage::Result { task_id, results } => {
                body.u64(*task_id);
                body.u32(results.len() as u32);
                for r in results {
                    match r {
                        TileResult::Ok {
                            index,
                            labels,
                            filtered,
                            affected_fraction,
                            micros,
                        } => {
                            body.u64(*index);
                            body.u8(0);
                            body.u32(labels.width() as u32);
                            body.u32(labels.height() as u32);
                            body.bytes(&labels.to_bytes());
                            body.bytes(filtered.data());
                            body.f64(*affected_fraction);
                            body.u64(*micros);
                        }
                        TileResult::Failed { index, reason } => {
                            body.u64(*index);
                            body.u8(1);
                            body.str(reason);
                        }
                    }
                }
            }
            TaskMessage::Heartbeat | TaskMessage::Shutdown => {}
            TaskMessage::Error { task_id, reason } => {
                body.u64(*task_id);
                body.str(reason);
            }
        }
        let mut frame = Vec::with_capacity(4 + body.buf.len());
        frame.extend_from_slice(&(body.buf.len() as u32).to_be_bytes());
        frame.extend_from_slice(&body.buf);
        frame
    }

    /// Parses a frame payload (tag + body, without the length prefix).
    pub fn decode(payload: &[u8]) -> Result<Self, ProtocolError> {
        let (&tag, body) = payload.split_first().ok_or(ProtocolError::EmptyFrame)?;
        let mut d = Decoder { buf: body, what: "frame" };
        let msg = match tag {
            TAG_HELLO => {
                d.what = "HELLO";
                TaskMessage::Hello {
                    worker_id: d.str()?,
                    cores: d.u32()?,
                }
            }
            TAG_TASK => {
                d.what = "TASK";
                let task_id = d.u64()?;
                let config = d.str()?;
                let n = d.u32()? as usize;
                let mut tiles = Vec::with_capacity(n.min(4096));
                for _ in 0..n {
                    let index = d.u64()?;
                    let scene_id = d.str()?;
                    let row = d.u32()? as usize;
                    let col = d.u32()? as usize;
                    let w = d.u32()? as usize;
                    let h = d.u32()? as usize;
                    let data = d.bytes()?.to_vec();
                    let raster = SceneRaster::new(w, h, data, scene_id).map_err(|e| d.err(e.to_string()))?;
                    tiles.push(WireTile {
                        index,
                        tile: Tile::new(raster, row, col),
                    });
                }
                TaskMessage::Task { task_id, config, tiles }
            }
            TAG_RESULT => {
                d.what = "RESULT";
                let task_id = d.u64()?;
                let n = d.u32()? as usize;
                let mut results = Vec::with_capacity(n.min(4096));
                for _ in 0..n {
                    let index = d.u64()?;
                    match d.u8()? {
                        0 => {
                            let w = d.u32()? as usize;
                            let h = d.u32()? as usize;
                            let labels = LabelMask::from_bytes(w, h, d.bytes()?)
                                .ok_or_else(|| d.err("invalid label bytes".into()))?;
                            let filtered = SceneRaster::new(w, h, d.bytes()?.to_vec(), "")
                                .map_err(|e| d.err(e.to_string()))?;
                            results.push(TileResult::Ok {
                                index,
                                labels,
                                filtered,
                                affected_fraction: d.f64()?,
                                micros: d.u64()?,
                            });
                        }
                        1 => results.push(TileResult::Failed {
                            index,
                            reason: d.str()?,
                        }),
                        s => return Err(d.err(format!("unknown result status {s}"))),
                    }
                }
                TaskMessage::Result { task_id, results }
            }
            TAG_HEARTBEAT => TaskMessage::Heartbeat,
            TAG_SHUTDOWN => TaskMessage::Shutdown,
            TAG_ERROR => {
                d.what = "ERROR";
                TaskMessage::Error {
                    task_id: d.u64()?,
                    reason: d.str()?,
                }
            }
            other => return Err(ProtocolError::UnknownTag(other)),
        };
        if !d.buf.is_empty() {
            return Err(d.err(format!("{} trailing bytes", d.buf.len())));
        }
        Ok(msg)
    }
}

/// Reads one frame payload. `Ok(None)` means the peer closed cleanly
/// between frames.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<Vec<u8>>, ProtocolError> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let len = u32::from_be_bytes(len);
    if len > MAX_FRAME_LEN {
        return Err(ProtocolError::FrameTooLarge(len));
    }
    let mut payload = vec![0u8; len as usize];
    r.read_exact(&mut payload)?;
    Ok(Some(payload))
}

pub fn write_message<W: Write>(w: &mut W, msg: &TaskMessage) -> io::Result<()> {
    w.write_all(&msg.encode())?;
    w.flush()
}

#[derive(Default)]
struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_bits().to_be_bytes());
    }
    fn bytes(&mut self, b: &[u8]) {
        self.u32(b.len() as u32);
        self.buf.extend_from_slice(b);
    }
    fn str(&mut self, s: &str) {
        self.bytes(s.as_bytes());
    }
}

struct Decoder<'a> {
    buf: &'a [u8],
    what: &'static str,
}

impl<'a> Decoder<'a> {
    fn err(&self, detail: String) -> ProtocolError {
        ProtocolError::Malformed {
            what: self.what,
            detail,
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], ProtocolError> {
        if self.buf.len() < n {
            return Err(self.err(format!("truncated: need {n} bytes, have {}", self.buf.len())));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, ProtocolError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, ProtocolError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, ProtocolError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, ProtocolError> {
        Ok(f64::from_bits(self.u64()?))
    }
    fn bytes(&mut self) -> Result<&'a [u8], ProtocolError> {
        let n = self.u32()? as usize;
        self.take(n)
    }
    fn str(&mut self) -> Result<String, ProtocolError> {
        let b = self.bytes()?;
        String::from_utf8(b.to_vec()).map_err(|e| self.err(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::ClassId;

    fn roundtrip(msg: TaskMessage) {
        let frame = msg.encode();
        let len = u32::from_be_bytes(frame[..4].try_into().unwrap()) as usize;
        assert_eq!(len, frame.len() - 4);
        assert_eq!(frame[4], msg.tag());
        let mut cursor = io::Cursor::new(frame);
        let payload = read_frame(&mut cursor).unwrap().unwrap();
        assert_eq!(TaskMessage::decode(&payload).unwrap(), msg);
    }

    #[test]
    fn control_messages() {
        roundtrip(TaskMessage::Heartbeat);
        roundtrip(TaskMessage::Shutdown);
        roundtrip(TaskMessage::Hello {
            worker_id: "w-1".into(),
            cores: 4,
        });
        roundtrip(TaskMessage::Error {
            task_id: 9,
            reason: "bad".into(),
        });
    }

    #[test]
    fn heartbeat_bytes_are_exact() {
        assert_eq!(TaskMessage::Heartbeat.encode(), vec![0, 0, 0, 1, TAG_HEARTBEAT]);
        assert_eq!(TaskMessage::Shutdown.encode(), vec![0, 0, 0, 1, TAG_SHUTDOWN]);
    }

    #[test]
    fn task_and_result() {
        let raster = SceneRaster::filled(4, 4, [9, 8, 7], "scene");
        roundtrip(TaskMessage::Task {
            task_id: 3,
            config: "x = 1".into(),
            tiles: vec![WireTile {
                index: 11,
                tile: Tile::new(raster.clone(), 1, 2),
            }],
        });
        let mut filtered = raster;
        filtered.set_scene_id("");
        roundtrip(TaskMessage::Result {
            task_id: 3,
            results: vec![
                TileResult::Ok {
                    index: 11,
                    labels: LabelMask::filled(4, 4, ClassId::ThinIce),
                    filtered,
                    affected_fraction: 0.25,
                    micros: 77,
                },
                TileResult::Failed {
                    index: 12,
                    reason: "boom".into(),
                },
            ],
        });
    }

    #[test]
    fn malformed_payloads() {
        assert!(matches!(TaskMessage::decode(&[]), Err(ProtocolError::EmptyFrame)));
        assert!(matches!(TaskMessage::decode(&[99]), Err(ProtocolError::UnknownTag(99))));
        assert!(matches!(
            TaskMessage::decode(&[TAG_HELLO, 0, 0]),
            Err(ProtocolError::Malformed { what: "HELLO", .. })
        ));
        assert!(matches!(
            TaskMessage::decode(&[TAG_HEARTBEAT, 1]),
            Err(ProtocolError::Malformed { .. })
        ));
    }

    #[test]
    fn oversized_frame_is_refused() {
        let mut cursor = io::Cursor::new((MAX_FRAME_LEN + 1).to_be_bytes().to_vec());
        let err = read_frame(&mut cursor).unwrap_err();
        assert!(err.is_fatal());
    }

    #[test]
    fn clean_eof_between_frames() {
        let mut cursor = io::Cursor::new(Vec::<u8>::new());
        assert!(read_frame(&mut cursor).unwrap().is_none());
    }
}
