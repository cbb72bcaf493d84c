// Reads the three supported skeleton formats and builds an evaluation split.
//
// MSR Action3D and NTU RGB+D files are synthesized in memory so the example
// runs without the real datasets.

use spmf::skeleton::{
    parse_msr, parse_ntu, read_canonical, split_sequences, write_canonical, SkeletonSequence, SplitSpec, MSR_JOINTS,
    NTU_JOINTS,
};
use spmf::synthetic::{generate, SyntheticConfig};

fn msr_text(seq: &SkeletonSequence) -> String {
    let mut s = String::new();
    for f in &seq.frames {
        for j in &f.joints {
            s.push_str(&format!("{} {} {} {}\n", j.x, j.y, j.z, j.confidence));
        }
    }
    s
}

fn ntu_text(seq: &SkeletonSequence) -> String {
    let mut s = format!("{}\n", seq.frames.len());
    for f in &seq.frames {
        s.push_str(&format!("1\n72057594037931101 0 1 1 1 1 0 0.1 0.2 2\n{NTU_JOINTS}\n"));
        for k in 0..NTU_JOINTS {
            // NTU has 25 joints; repeat the last five of the 20-joint body
            let j = &f.joints[k.min(f.joints.len() - 1)];
            s.push_str(&format!("{} {} {} 0 0 0 0 0 0 0 0 2\n", j.x, j.y, j.z));
        }
    }
    s
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seqs = generate(&SyntheticConfig {
        classes: 2,
        per_class: 10,
        ..Default::default()
    })?;
    let first = &seqs[0];

    let msr = parse_msr(msr_text(first).as_bytes(), "a01_s02_e03_skeleton.txt", MSR_JOINTS)?;
    println!(
        "msr: {} frames x {} joints, label {}, subject {}, trial {}",
        msr.len(),
        msr.joint_count(),
        msr.label,
        msr.subject,
        msr.trial
    );

    let ntu = parse_ntu(ntu_text(first).as_bytes(), "S001C002P003R001A010.skeleton")?;
    println!(
        "ntu: {} body sequence(s), {} frames x {} joints, label {}, camera {}",
        ntu.len(),
        ntu[0].len(),
        ntu[0].joint_count(),
        ntu[0].label,
        ntu[0].camera
    );

    let json = write_canonical(first)?;
    let back = read_canonical(json.as_bytes(), "in-memory")?;
    assert_eq!(back.frames, first.frames);
    println!("canonical json: {} bytes, round trip exact", json.len());

    let spec = SplitSpec::builtin("odd-even").expect("built-in split");
    let (train, test) = split_sequences(&seqs, &spec)?;
    println!("odd-even subjects split: {} train, {} test", train.len(), test.len());
    println!("built-in splits: {}", SplitSpec::builtin_names().join(", "));
    Ok(())
}
