//! Dataset-agnostic JSON interchange: one document per sequence with the
//! frames flattened to `[x, y, z, confidence]` rows.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Frame, Joint, SkeletonSequence};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct CanonicalDoc {
    label: usize,
    subject: u32,
    camera: u32,
    trial: u32,
    joints_per_frame: usize,
    frames: Vec<[f64; 4]>,
    #[serde(default, skip_serializing_if = "is_zero")]
    body_id: u64,
}

fn is_zero(v: &u64) -> bool {
    *v == 0
}

pub fn write_canonical(seq: &SkeletonSequence) -> Result<String> {
    seq.validate(None)?;
    let doc = CanonicalDoc {
        label: seq.label,
        subject: seq.subject,
        camera: seq.camera,
        trial: seq.trial,
        joints_per_frame: seq.joint_count(),
        frames: seq
            .frames
            .iter()
            .flat_map(|f| f.joints.iter().map(|j| [j.x, j.y, j.z, j.confidence]))
            .collect(),
        body_id: seq.frames[0].body_id,
    };
    Ok(serde_json::to_string(&doc)?)
}

/// Parses a canonical document. `source_path` is recorded on the sequence.
pub fn read_canonical(bytes: &[u8], source_path: &str) -> Result<SkeletonSequence> {
    let doc: CanonicalDoc = serde_json::from_slice(bytes).map_err(|e| Error::Parse {
        path: source_path.to_string(),
        line: e.line(),
        msg: e.to_string(),
    })?;
    let jpf = doc.joints_per_frame;
    if jpf == 0 || doc.frames.is_empty() || doc.frames.len() % jpf != 0 {
        return Err(Error::Malformed {
            path: source_path.to_string(),
            msg: format!(
                "{} joint rows is not a positive multiple of joints_per_frame {jpf}",
                doc.frames.len()
            ),
        });
    }
    let frames = doc
        .frames
        .chunks_exact(jpf)
        .map(|rows| Frame {
            joints: rows
                .iter()
                .map(|r| Joint {
                    x: r[0],
                    y: r[1],
                    z: r[2],
                    confidence: r[3],
                })
                .collect(),
            body_id: doc.body_id,
        })
        .collect();
    let seq = SkeletonSequence {
        frames,
        label: doc.label,
        subject: doc.subject,
        camera: doc.camera,
        trial: doc.trial,
        source_path: source_path.to_string(),
    };
    seq.validate(None)?;
    Ok(seq)
}

pub fn read_canonical_file(path: &Path) -> Result<SkeletonSequence> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_canonical(&bytes, &path.to_string_lossy())
}

pub fn write_canonical_file(path: &Path, seq: &SkeletonSequence) -> Result<()> {
    let text = write_canonical(seq)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn arb_sequence() -> impl Strategy<Value = SkeletonSequence> {
        (1usize..6, 1usize..5, any::<u64>(), 0usize..60, 0u32..50, 0u32..9, 0u32..5).prop_flat_map(
            |(joints, frames, body_id, label, subject, camera, trial)| {
                let coord = prop_oneof![
                    -1e6f64..1e6,
                    any::<f64>().prop_filter("finite", |v| v.is_finite())
                ];
                prop::collection::vec((coord.clone(), coord.clone(), coord, 0.0f64..=1.0), joints * frames)
                    .prop_map(move |rows| SkeletonSequence {
                        frames: rows
                            .chunks(joints)
                            .map(|c| Frame {
                                joints: c
                                    .iter()
                                    .map(|&(x, y, z, confidence)| Joint { x, y, z, confidence })
                                    .collect(),
                                body_id,
                            })
                            .collect(),
                        label,
                        subject,
                        camera,
                        trial,
                        source_path: "seq.json".into(),
                    })
            },
        )
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(seq in arb_sequence()) {
            let text = write_canonical(&seq).unwrap();
            let back = read_canonical(text.as_bytes(), "seq.json").unwrap();
            prop_assert_eq!(back.frames.len(), seq.frames.len());
            for (a, b) in back.frames.iter().zip(&seq.frames) {
                for (ja, jb) in a.joints.iter().zip(&b.joints) {
                    prop_assert_eq!(ja.x.to_bits(), jb.x.to_bits());
                    prop_assert_eq!(ja.y.to_bits(), jb.y.to_bits());
                    prop_assert_eq!(ja.z.to_bits(), jb.z.to_bits());
                    prop_assert_eq!(ja.confidence.to_bits(), jb.confidence.to_bits());
                }
            }
            prop_assert_eq!(back, seq);
        }
    }

    #[test]
    fn rejects_ragged_rows() {
        let text = r#"{"label":0,"subject":1,"camera":0,"trial":1,"joints_per_frame":2,"frames":[[0,0,0,1]]}"#;
        assert!(matches!(read_canonical(text.as_bytes(), "x"), Err(Error::Malformed { .. })));
    }

    #[test]
    fn rejects_bad_json() {
        assert!(matches!(read_canonical(b"{", "x"), Err(Error::Parse { .. })));
    }
}
