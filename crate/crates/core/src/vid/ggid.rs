use super::VidError;

pub const FNV_OFFSET_BASIS: u32 = 2_166_136_261;
pub const FNV_PRIME: u32 = 16_777_619;

pub fn fnv1a32(bytes: &[u8]) -> u32 {
    bytes.iter().fold(FNV_OFFSET_BASIS, |h, &b| (h ^ b as u32).wrapping_mul(FNV_PRIME))
}

/// Global group id of a communicator: FNV-1a over its world ranks, each as
/// four little-endian bytes, in communicator-rank order.
pub fn ggid_compute(members: &[u32]) -> Result<u32, VidError> {
    if members.is_empty() {
        return Err(VidError::EmptyMembers);
    }
    let bytes: Vec<u8> = members.iter().flat_map(|r| r.to_le_bytes()).collect();
    Ok(fnv1a32(&bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_vectors() {
        assert_eq!(fnv1a32(b""), 0x811c9dc5);
        assert_eq!(fnv1a32(b"a"), 0xe40c292c);
        assert_eq!(fnv1a32(b"foobar"), 0xbf9cf968);
    }

    #[test]
    fn empty_members_rejected() {
        assert_eq!(ggid_compute(&[]), Err(VidError::EmptyMembers));
    }
}
