/// One flag per block. A clear bit means the next erase starts with a shallow pulse.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SefBitmap {
    bits: Vec<u8>,
    blocks: u32,
}

impl SefBitmap {
    pub fn new(blocks: u32) -> Self {
        SefBitmap { bits: vec![0; blocks.div_ceil(8) as usize], blocks }
    }

    pub fn shallow(&self, block: u32) -> bool {
        debug_assert!(block < self.blocks);
        self.bits[(block / 8) as usize] & (1 << (block % 8)) == 0
    }

    /// Stop shallow erasure for this block. There is no way back.
    pub fn disable(&mut self, block: u32) {
        self.bits[(block / 8) as usize] |= 1 << (block % 8);
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bits
    }

    pub fn disabled_count(&self) -> u32 {
        self.bits.iter().map(|b| b.count_ones()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn storage_and_one_way() {
        let mut s = SefBitmap::new(17);
        assert_eq!(s.as_bytes().len(), 3);
        assert!((0..17).all(|b| s.shallow(b)));
        s.disable(9);
        s.disable(9);
        assert!(!s.shallow(9));
        assert!(s.shallow(8));
        assert_eq!(s.disabled_count(), 1);
    }
}
