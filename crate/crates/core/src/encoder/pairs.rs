//! Joint pair enumerations for pose and motion features.

/// Pose pairs are all `j < k`; motion pairs are all `j <= k` (the diagonal
/// carries each joint's own displacement between frames). Both in
/// lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairIndex {
    joints: usize,
    pose: Vec<(usize, usize)>,
    motion: Vec<(usize, usize)>,
}

impl PairIndex {
    pub fn new(joints: usize) -> Self {
        let mut pose = Vec::with_capacity(joints * joints.saturating_sub(1) / 2);
        let mut motion = Vec::with_capacity(joints * (joints + 1) / 2);
        for j in 0..joints {
            for k in j..joints {
                if j < k {
                    pose.push((j, k));
                }
                motion.push((j, k));
            }
        }
        PairIndex {
            joints,
            pose,
            motion,
        }
    }

    pub fn joints(&self) -> usize {
        self.joints
    }

    pub fn pose_pairs(&self) -> &[(usize, usize)] {
        &self.pose
    }

    pub fn motion_pairs(&self) -> &[(usize, usize)] {
        &self.motion
    }

    /// Height of every column in the assembled image: the pose column height.
    pub fn column_height(&self) -> usize {
        2 * self.pose.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes() {
        for j in 1..30 {
            let p = PairIndex::new(j);
            assert_eq!(p.pose_pairs().len(), j * (j - 1) / 2);
            assert_eq!(p.motion_pairs().len(), j * (j + 1) / 2);
        }
        assert_eq!(PairIndex::new(20).column_height(), 380);
    }

    #[test]
    fn order_is_lexicographic() {
        let p = PairIndex::new(3);
        assert_eq!(p.pose_pairs(), &[(0, 1), (0, 2), (1, 2)]);
        assert_eq!(p.motion_pairs(), &[(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]);
    }
}
