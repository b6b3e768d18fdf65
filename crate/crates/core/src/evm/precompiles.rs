use alloy_primitives::{keccak256, Address, Bytes};
use sha2::Digest;

use super::HaltReason;

pub(super) fn is_precompile(address: &Address) -> bool {
    let bytes = address.as_slice();
    bytes[..19].iter().all(|b| *b == 0) && (1..=9).contains(&bytes[19])
}

pub(super) fn addresses() -> impl Iterator<Item = Address> {
    (1u8..=9).map(|i| {
        let mut raw = [0u8; 20];
        raw[19] = i;
        Address::from(raw)
    })
}

fn words(len: usize) -> u64 {
    (len as u64).div_ceil(32)
}

/// Runs a precompile, returning (gas used, output).
pub(super) fn run(address: &Address, input: &[u8], gas_limit: u64) -> Result<(u64, Bytes), HaltReason> {
    let id = address.as_slice()[19];
    let cost = match id {
        1 => 3_000,
        2 => 60 + 12 * words(input.len()),
        3 => 600 + 120 * words(input.len()),
        4 => 15 + 3 * words(input.len()),
        _ => return Err(HaltReason::UnsupportedPrecompile),
    };
    if cost > gas_limit {
        return Err(HaltReason::OutOfGas);
    }
    let output = match id {
        1 => ecrecover(input),
        2 => Bytes::from(sha2::Sha256::digest(input).to_vec()),
        3 => {
            let digest = ripemd::Ripemd160::digest(input);
            let mut out = vec![0u8; 12];
            out.extend_from_slice(&digest);
            Bytes::from(out)
        }
        _ => Bytes::copy_from_slice(input),
    };
    Ok((cost, output))
}

fn ecrecover(input: &[u8]) -> Bytes {
    use k256::ecdsa::{RecoveryId, Signature, VerifyingKey};

    let mut buf = [0u8; 128];
    let n = input.len().min(128);
    buf[..n].copy_from_slice(&input[..n]);
    let hash = &buf[0..32];
    let v = &buf[32..64];
    if v[..31].iter().any(|b| *b != 0) || !(v[31] == 27 || v[31] == 28) {
        return Bytes::new();
    }
    let Ok(sig) = Signature::from_slice(&buf[64..128]) else {
        return Bytes::new();
    };
    let Some(rec) = RecoveryId::from_byte(v[31] - 27) else {
        return Bytes::new();
    };
    let Ok(key) = VerifyingKey::recover_from_prehash(hash, &sig, rec) else {
        return Bytes::new();
    };
    let point = key.to_encoded_point(false);
    let digest = keccak256(&point.as_bytes()[1..]);
    let mut out = vec![0u8; 12];
    out.extend_from_slice(&digest[12..]);
    Bytes::from(out)
}
