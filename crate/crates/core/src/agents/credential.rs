use sha2::{Digest, Sha256};

fn digest(salt: &str, secret: &str) -> String {
    let mut h = Sha256::new();
    h.update(salt.as_bytes());
    h.update([0]);
    h.update(secret.as_bytes());
    hex::encode(h.finalize())
}

/// Stored form of a password: `salt$hex(sha256(salt 0x00 password))`.
pub fn hash_credential(salt: &str, secret: &str) -> String {
    format!("{salt}${}", digest(salt, secret))
}

pub fn verify_credential(stored: &str, secret: &str) -> bool {
    let Some((salt, want)) = stored.split_once('$') else {
        return false;
    };
    let got = digest(salt, secret);
    // Length is fixed by the hash, so only the contents can differ.
    got.len() == want.len() && got.bytes().zip(want.bytes()).fold(0u8, |acc, (a, b)| acc | (a ^ b)) == 0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_then_verify() {
        let stored = hash_credential("pepper", "hunter2");
        assert!(stored.starts_with("pepper$"));
        assert!(verify_credential(&stored, "hunter2"));
        assert!(!verify_credential(&stored, "hunter3"));
        assert!(!verify_credential("nodollar", "hunter2"));
        assert_ne!(hash_credential("a", "x"), hash_credential("b", "x"));
    }
}
