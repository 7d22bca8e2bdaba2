//! Signed axis permutations: the lattice-preserving rotations used to move
//! an arbitrary unit mode onto `e_z`.

use crate::spectral::{WaveVector, C3};

/// `(P v)_i = sign_i · v_{perm_i}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SignedPermutation {
    perm: [usize; 3],
    sign: [i32; 3],
}

impl SignedPermutation {
    pub const IDENTITY: SignedPermutation = SignedPermutation {
        perm: [0, 1, 2],
        sign: [1, 1, 1],
    };

    pub fn new(perm: [usize; 3], sign: [i32; 3]) -> Option<Self> {
        let mut seen = [false; 3];
        for &p in &perm {
            if p > 2 || seen[p] {
                return None;
            }
            seen[p] = true;
        }
        if sign.iter().any(|s| s.abs() != 1) {
            return None;
        }
        Some(Self { perm, sign })
    }

    /// A proper rotation taking the unit lattice vector `k` to `e_z`.
    pub fn to_ez(k: WaveVector) -> Option<Self> {
        let (perm, sign) = match k.to_array() {
            [1, 0, 0] => ([1, 2, 0], [1, 1, 1]),
            [-1, 0, 0] => ([1, 2, 0], [1, -1, -1]),
            [0, 1, 0] => ([2, 0, 1], [1, 1, 1]),
            [0, -1, 0] => ([2, 0, 1], [-1, 1, -1]),
            [0, 0, 1] => ([0, 1, 2], [1, 1, 1]),
            [0, 0, -1] => ([0, 1, 2], [1, -1, -1]),
            _ => return None,
        };
        Self::new(perm, sign)
    }

    pub fn inverse(&self) -> Self {
        let mut perm = [0; 3];
        let mut sign = [1; 3];
        for i in 0..3 {
            perm[self.perm[i]] = i;
            sign[self.perm[i]] = self.sign[i];
        }
        Self { perm, sign }
    }

    pub fn determinant(&self) -> i32 {
        let p = self.perm;
        let inversions = (p[0] > p[1]) as i32 + (p[0] > p[2]) as i32 + (p[1] > p[2]) as i32;
        let parity = if inversions % 2 == 0 { 1 } else { -1 };
        parity * self.sign.iter().product::<i32>()
    }

    pub fn apply_k(&self, k: WaveVector) -> WaveVector {
        let a = k.to_array();
        WaveVector::from_array([0, 1, 2].map(|i| self.sign[i] * a[self.perm[i]]))
    }

    pub fn apply_c3(&self, v: &C3) -> C3 {
        [0, 1, 2].map(|i| v[self.perm[i]] * self.sign[i] as f64)
    }

    pub fn apply_f64(&self, v: [f64; 3]) -> [f64; 3] {
        [0, 1, 2].map(|i| v[self.perm[i]] * self.sign[i] as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_unit_mode_maps_to_ez_properly() {
        for k in WaveVector::unit_modes() {
            let p = SignedPermutation::to_ez(k).unwrap();
            assert_eq!(p.apply_k(k), WaveVector::EZ, "{k}");
            assert_eq!(p.determinant(), 1);
            assert_eq!(p.inverse().apply_k(WaveVector::EZ), k);
        }
    }

    #[test]
    fn inverse_composes_to_identity() {
        let p = SignedPermutation::new([2, 0, 1], [-1, 1, -1]).unwrap();
        let q = p.inverse();
        let k = WaveVector::new(3, -5, 7);
        assert_eq!(q.apply_k(p.apply_k(k)), k);
        assert_eq!(p.apply_k(q.apply_k(k)), k);
    }

    #[test]
    fn rejects_non_unit_targets() {
        assert!(SignedPermutation::to_ez(WaveVector::new(1, 1, 0)).is_none());
        assert!(SignedPermutation::new([0, 0, 1], [1, 1, 1]).is_none());
    }
}
