//! MSR Action3D skeleton text files: one `x y z confidence` row per joint,
//! 20 rows per frame, metadata in the `aAA_sSS_eEE` file name.

use super::{Frame, Joint, SkeletonSequence};
use crate::error::{Error, Result};

pub const MSR_JOINTS: usize = 20;

/// Extracts `(action, subject, trial)` (all 1-based, as written) from a file
/// name such as `a01_s03_e02_skeleton.txt`.
pub fn parse_msr_file_name(name: &str) -> Option<(u32, u32, u32)> {
    let stem = name.rsplit(['/', '\\']).next()?;
    let mut parts = stem.split('_');
    let mut field = |prefix: char| -> Option<u32> {
        let p = parts.next()?;
        let rest = p.strip_prefix(prefix)?;
        if rest.is_empty() || !rest.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        rest.parse().ok()
    };
    let a = field('a')?;
    let s = field('s')?;
    let e = field('e')?;
    Some((a, s, e))
}

/// Parses an MSR Action3D skeleton file.
///
/// `file_name` supplies the metadata; the label is `action - 1`. Joint order
/// is kept exactly as on disk. Confidences outside [0,1] are clamped.
pub fn parse_msr(bytes: &[u8], file_name: &str, joint_count: usize) -> Result<SkeletonSequence> {
    if joint_count == 0 {
        return Err(Error::Config("joint count must be positive".into()));
    }
    let (action, subject, trial) = parse_msr_file_name(file_name).ok_or_else(|| Error::Malformed {
        path: file_name.to_string(),
        msg: "file name does not match aAA_sSS_eEE".into(),
    })?;
    if action == 0 {
        return Err(Error::Malformed {
            path: file_name.to_string(),
            msg: "action ids are 1-based".into(),
        });
    }
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Malformed {
        path: file_name.to_string(),
        msg: format!("not UTF-8 text: {e}"),
    })?;

    let mut joints = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let parse_err = |msg: String| Error::Parse {
            path: file_name.to_string(),
            line: line_no,
            msg,
        };
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        if tokens.len() != 4 {
            return Err(parse_err(format!("expected 4 values, found {}", tokens.len())));
        }
        let mut vals = [0.0f64; 4];
        for (v, tok) in vals.iter_mut().zip(&tokens) {
            *v = tok
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(format!("invalid number {tok:?}")))?;
        }
        joints.push(Joint {
            x: vals[0],
            y: vals[1],
            z: vals[2],
            confidence: vals[3].clamp(0.0, 1.0),
        });
    }

    if joints.is_empty() || joints.len() % joint_count != 0 {
        return Err(Error::Malformed {
            path: file_name.to_string(),
            msg: format!(
                "{} joint rows is not a positive multiple of {joint_count}",
                joints.len()
            ),
        });
    }
    let frames = joints
        .chunks_exact(joint_count)
        .map(|c| Frame::new(c.to_vec()))
        .collect();
    Ok(SkeletonSequence {
        frames,
        label: (action - 1) as usize,
        subject,
        camera: 0,
        trial,
        source_path: file_name.to_string(),
    })
}
