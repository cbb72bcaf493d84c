//! 256-entry JET palette.

/// Anchor table `(value, rgb)`; entries in between are linear.
pub const JET_ANCHORS: [(f64, [f64; 3]); 6] = [
    (0.0, [0.0, 0.0, 128.0]),
    (0.125, [0.0, 0.0, 255.0]),
    (0.375, [0.0, 255.0, 255.0]),
    (0.625, [255.0, 255.0, 0.0]),
    (0.875, [255.0, 0.0, 0.0]),
    (1.0, [128.0, 0.0, 0.0]),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JetPalette {
    entries: [[u8; 3]; 256],
}

impl Default for JetPalette {
    fn default() -> Self {
        Self::new()
    }
}

impl JetPalette {
    /// Samples the anchor polyline at `i / 255` for every entry and rounds
    /// half-up. Interpolation runs in index units (anchor values times 255,
    /// exact in binary) so ties such as 125.5 round deterministically.
    pub fn new() -> Self {
        let mut entries = [[0u8; 3]; 256];
        for (i, e) in entries.iter_mut().enumerate() {
            let x = i as f64;
            let seg = JET_ANCHORS
                .windows(2)
                .find(|w| x <= w[1].0 * 255.0)
                .unwrap_or(&JET_ANCHORS[4..6]);
            let (a0, c0) = (seg[0].0 * 255.0, seg[0].1);
            let (a1, c1) = (seg[1].0 * 255.0, seg[1].1);
            for ch in 0..3 {
                let v = c0[ch] + (x - a0) * (c1[ch] - c0[ch]) / (a1 - a0);
                e[ch] = (v + 0.5).floor().clamp(0.0, 255.0) as u8;
            }
        }
        JetPalette { entries }
    }

    pub fn entries(&self) -> &[[u8; 3]; 256] {
        &self.entries
    }

    #[inline]
    pub fn get(&self, index: u8) -> [u8; 3] {
        self.entries[index as usize]
    }

    /// Color for a normalized value; `d` is clamped into [0,1] (NaN maps to
    /// entry 0).
    #[inline]
    pub fn encode(&self, d: f64) -> [u8; 3] {
        let d = if d.is_nan() { 0.0 } else { d.clamp(0.0, 1.0) };
        let idx = ((d * 255.0).floor() as usize).min(255);
        self.entries[idx]
    }
}

/// Free-function form of [`JetPalette::encode`].
pub fn jet_encode(d: f64, palette: &JetPalette) -> [u8; 3] {
    palette.encode(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_match_anchors() {
        let p = JetPalette::new();
        assert_eq!(jet_encode(0.0, &p), [0, 0, 128]);
        assert_eq!(jet_encode(1.0, &p), [128, 0, 0]);
        assert_eq!(jet_encode(-3.0, &p), [0, 0, 128]);
        assert_eq!(jet_encode(7.0, &p), [128, 0, 0]);
    }

    #[test]
    fn midpoint_is_entry_127() {
        let p = JetPalette::new();
        // 127/255 = 0.498..., inside the cyan->yellow segment [0.375, 0.625]:
        // f = (127/255 - 0.375) / 0.25 = 0.49215..., so R = 125.5 -> 126,
        // G = 255, B = 129.5 -> 130 (rounded half-up).
        assert_eq!(p.get(127), [126, 255, 130]);
        assert_eq!(jet_encode(0.5, &p), p.get(127));
    }

    /// Integer-rational evaluation of the anchor polyline (positions scaled
    /// by 2040 = 8 * 255 so every anchor and entry is an integer).
    fn rational_entry(i: i64) -> [u8; 3] {
        let anchors: [(i64, [i64; 3]); 6] = [
            (0, [0, 0, 128]),
            (255, [0, 0, 255]),
            (765, [0, 255, 255]),
            (1275, [255, 255, 0]),
            (1785, [255, 0, 0]),
            (2040, [128, 0, 0]),
        ];
        let x = 8 * i;
        let k = (0..5).find(|&k| x <= anchors[k + 1].0).unwrap();
        let (a0, c0) = anchors[k];
        let (a1, c1) = anchors[k + 1];
        let den = a1 - a0;
        let mut out = [0u8; 3];
        for ch in 0..3 {
            let num = 2 * (c0[ch] * den + (x - a0) * (c1[ch] - c0[ch])) + den;
            out[ch] = num.div_euclid(2 * den) as u8;
        }
        out
    }

    #[test]
    fn every_entry_matches_rational_oracle() {
        let p = JetPalette::new();
        for i in 0..256 {
            assert_eq!(p.get(i as u8), rational_entry(i), "entry {i}");
        }
    }

    #[test]
    fn anchors_are_hit_where_they_land_on_an_entry() {
        let p = JetPalette::new();
        for &(v, c) in &JET_ANCHORS {
            let x = v * 255.0;
            if x.fract() == 0.0 {
                assert_eq!(p.get(x as u8), c.map(|v| v as u8));
            }
        }
    }

    #[test]
    fn palette_moves_blue_to_red() {
        let p = JetPalette::new();
        let first = p.get(0);
        let last = p.get(255);
        assert!(first[2] > first[0]);
        assert!(last[0] > last[2]);
        // consecutive entries change by a bounded step (piecewise linear)
        for w in p.entries().windows(2) {
            for ch in 0..3 {
                assert!((w[0][ch] as i32 - w[1][ch] as i32).abs() <= 9);
            }
        }
    }
}
