//! NTU RGB+D `.skeleton` files.
//!
//! Layout: a frame count line; per frame a body count line; per body an info
//! line (first field is the tracking id), a joint count line and one line per
//! joint whose first three fields are `x y z`. File names follow
//! `SsssCcccPpppRrrrAaaa`.

use super::{Frame, Joint, SkeletonSequence};
use crate::error::{Error, Result};

pub const NTU_JOINTS: usize = 25;

/// Metadata encoded in an NTU file name (all 1-based as written).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NtuMeta {
    pub setup: u32,
    pub camera: u32,
    pub performer: u32,
    pub replication: u32,
    pub action: u32,
}

pub fn parse_ntu_file_name(name: &str) -> Option<NtuMeta> {
    let base = name.rsplit(['/', '\\']).next()?;
    let bytes = base.as_bytes();
    if bytes.len() < 20 {
        return None;
    }
    let field = |i: usize, tag: u8| -> Option<u32> {
        let chunk = &bytes[i * 4..i * 4 + 4];
        if chunk[0].to_ascii_uppercase() != tag || !chunk[1..].iter().all(u8::is_ascii_digit) {
            return None;
        }
        std::str::from_utf8(&chunk[1..]).ok()?.parse().ok()
    };
    Some(NtuMeta {
        setup: field(0, b'S')?,
        camera: field(1, b'C')?,
        performer: field(2, b'P')?,
        replication: field(3, b'R')?,
        action: field(4, b'A')?,
    })
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    path: &'a str,
}

impl<'a> Lines<'a> {
    /// Next non-blank line with its 1-based number.
    fn next_line(&mut self, what: &str) -> Result<(usize, &'a str)> {
        for (i, l) in self.inner.by_ref() {
            if !l.trim().is_empty() {
                return Ok((i + 1, l));
            }
        }
        Err(Error::Malformed {
            path: self.path.to_string(),
            msg: format!("unexpected end of file while reading {what}"),
        })
    }

    fn next_count(&mut self, what: &str) -> Result<usize> {
        let (line, text) = self.next_line(what)?;
        text.trim().parse().map_err(|_| Error::Parse {
            path: self.path.to_string(),
            line,
            msg: format!("expected {what}, found {:?}", text.trim()),
        })
    }
}

/// Parses an NTU `.skeleton` file into one sequence per tracked body id, in
/// order of first appearance. Frames where a body is absent are skipped for
/// that body; every sequence carries the label from the file name.
pub fn parse_ntu(bytes: &[u8], file_name: &str) -> Result<Vec<SkeletonSequence>> {
    let meta = parse_ntu_file_name(file_name).ok_or_else(|| Error::Malformed {
        path: file_name.to_string(),
        msg: "file name does not match SsssCcccPpppRrrrAaaa".into(),
    })?;
    if meta.action == 0 {
        return Err(Error::Malformed {
            path: file_name.to_string(),
            msg: "action ids are 1-based".into(),
        });
    }
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Malformed {
        path: file_name.to_string(),
        msg: format!("not UTF-8 text: {e}"),
    })?;
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        path: file_name,
    };

    let frame_count = lines.next_count("frame count")?;
    let mut bodies: Vec<(u64, Vec<Frame>)> = Vec::new();
    for _ in 0..frame_count {
        let body_count = lines.next_count("body count")?;
        for _ in 0..body_count {
            let (line, info) = lines.next_line("body info")?;
            let id_tok = info.split_whitespace().next().unwrap_or_default();
            let body_id: u64 = id_tok.parse().map_err(|_| Error::Parse {
                path: file_name.to_string(),
                line,
                msg: format!("invalid body id {id_tok:?}"),
            })?;
            let joint_count = lines.next_count("joint count")?;
            if joint_count != NTU_JOINTS {
                return Err(Error::Malformed {
                    path: file_name.to_string(),
                    msg: format!("body declares {joint_count} joints, expected {NTU_JOINTS}"),
                });
            }
            let mut joints = Vec::with_capacity(joint_count);
            for _ in 0..joint_count {
                let (line, row) = lines.next_line("joint")?;
                let mut xyz = [0.0f64; 3];
                let mut toks = row.split_whitespace();
                for v in xyz.iter_mut() {
                    let tok = toks.next().ok_or_else(|| Error::Parse {
                        path: file_name.to_string(),
                        line,
                        msg: "joint line has fewer than 3 values".into(),
                    })?;
                    *v = tok
                        .parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| Error::Parse {
                            path: file_name.to_string(),
                            line,
                            msg: format!("invalid number {tok:?}"),
                        })?;
                }
                joints.push(Joint::new(xyz[0], xyz[1], xyz[2]));
            }
            let frame = Frame { joints, body_id };
            match bodies.iter_mut().find(|(id, _)| *id == body_id) {
                Some((_, frames)) => frames.push(frame),
                None => bodies.push((body_id, vec![frame])),
            }
        }
    }
    if let Ok((line, _)) = lines.next_line("trailing data") {
        return Err(Error::Malformed {
            path: file_name.to_string(),
            msg: format!("data after the declared {frame_count} frames (line {line})"),
        });
    }

    Ok(bodies
        .into_iter()
        .map(|(_, frames)| SkeletonSequence {
            frames,
            label: (meta.action - 1) as usize,
            subject: meta.performer,
            camera: meta.camera,
            trial: meta.replication,
            source_path: file_name.to_string(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const NAME: &str = "S001C002P003R002A013.skeleton";

    fn body_block(id: u64, value: f64) -> String {
        let mut s = format!("{id} 0 1 1 1 1 0 0.1 0.2 2\n25\n");
        for _ in 0..25 {
            s.push_str(&format!("{value} {value} {value} 0 0 0 0 0 0 0 0 2\n"));
        }
        s
    }

    #[test]
    fn single_zero_body() {
        let text = format!("1\n1\n{}", body_block(7, 0.0));
        let seqs = parse_ntu(text.as_bytes(), NAME).unwrap();
        assert_eq!(seqs.len(), 1);
        let s = &seqs[0];
        assert_eq!(s.frames.len(), 1);
        assert_eq!(s.frames[0].joints.len(), 25);
        assert!(s.frames[0].joints.iter().all(|j| j.xyz() == [0.0; 3]));
        assert_eq!((s.label, s.subject, s.camera, s.trial), (12, 3, 2, 2));
    }

    #[test]
    fn two_bodies_two_sequences() {
        let text = format!(
            "2\n2\n{}{}1\n{}",
            body_block(11, 0.0),
            body_block(22, 1.0),
            body_block(22, 2.0)
        );
        let seqs = parse_ntu(text.as_bytes(), NAME).unwrap();
        assert_eq!(seqs.len(), 2);
        assert_eq!(seqs[0].frames[0].body_id, 11);
        assert_eq!(seqs[1].frames[0].body_id, 22);
        assert_eq!(seqs[0].frames.len(), 1);
        assert_eq!(seqs[1].frames.len(), 2);
        assert_eq!(seqs[1].frames[1].joints[0].x, 2.0);
        assert_eq!(seqs[0].label, seqs[1].label);
    }

    #[test]
    fn missing_frame_block() {
        let mut text = String::from("10\n");
        for _ in 0..9 {
            text.push_str("1\n");
            text.push_str(&body_block(1, 0.5));
        }
        assert!(matches!(
            parse_ntu(text.as_bytes(), NAME),
            Err(Error::Malformed { .. })
        ));
    }

    #[test]
    fn trailing_data_rejected() {
        let text = format!("1\n1\n{}1\n", body_block(7, 0.0));
        assert!(matches!(
            parse_ntu(text.as_bytes(), NAME),
            Err(Error::Malformed { .. })
        ));
    }

    #[test]
    fn file_name() {
        let m = parse_ntu_file_name("x/S017C003P020R002A060.skeleton").unwrap();
        assert_eq!(
            m,
            NtuMeta {
                setup: 17,
                camera: 3,
                performer: 20,
                replication: 2,
                action: 60
            }
        );
        assert!(parse_ntu_file_name("S017C003P020R002.skeleton").is_none());
    }
}
