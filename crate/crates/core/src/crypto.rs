//! Key material, addresses, signatures, datum encryption and digests.
//!
//! Signatures are Ed25519 (deterministic, seeded from 32 bytes). Datum
//! confidentiality uses an ephemeral X25519 agreement against the recipient's
//! Ed25519 key (converted to its Montgomery form) followed by an
//! authenticated cipher selected through [`EnvelopeCipher`].

use std::fmt;
use std::str::FromStr;

use chacha20poly1305::aead::{AeadInPlace, KeyInit};
use chacha20poly1305::{ChaCha20Poly1305, Nonce, Tag};
use ed25519_dalek::{Signer, SigningKey, VerifyingKey};
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const HASH_LEN: usize = 32;
pub const PUBLIC_KEY_LEN: usize = 32;
pub const SIGNATURE_LEN: usize = 64;
pub const KEY_DIGEST_LEN: usize = 20;
pub const NONCE_LEN: usize = 12;
pub const TAG_LEN: usize = 16;
/// Fixed bytes an envelope adds on top of its ciphertext.
pub const ENVELOPE_OVERHEAD: usize = PUBLIC_KEY_LEN + NONCE_LEN + TAG_LEN;

/// Version byte of every address produced by this crate.
pub const ADDRESS_PREFIX: u8 = 0x53;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("seed must be exactly 32 bytes, got {0}")]
    BadSeedLength(usize),
    #[error("public key is not a valid curve point")]
    InvalidPublicKey,
    #[error("plaintext must not be empty")]
    EmptyPlaintext,
    #[error("authenticated decryption failed")]
    AuthenticationFailed,
    #[error("malformed envelope encoding")]
    MalformedEnvelope,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AddressError {
    #[error("address must be {expected} hex characters, got {got}")]
    BadLength { expected: usize, got: usize },
    #[error("address is not valid hex")]
    BadHex,
    #[error("unknown address prefix {0:#04x}")]
    BadPrefix(u8),
    #[error("address checksum mismatch")]
    BadChecksum,
}

/// 32-byte SHA-256 digest.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Hash(pub [u8; HASH_LEN]);

impl Hash {
    pub const ZERO: Hash = Hash([0u8; HASH_LEN]);

    pub fn as_bytes(&self) -> &[u8; HASH_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let bytes = hex::decode(s).ok()?;
        Some(Hash(bytes.try_into().ok()?))
    }
}

impl fmt::Display for Hash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Hash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Hash({})", &self.to_hex()[..16])
    }
}

impl Serialize for Hash {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Hash {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Hash::from_hex(&s).ok_or_else(|| serde::de::Error::custom("expected 64 hex characters"))
    }
}

/// SHA-256 over `bytes`. The one digest used for tx ids, anchors and addresses.
pub fn digest(bytes: &[u8]) -> Hash {
    Hash(Sha256::digest(bytes).into())
}

/// Digest over several parts, concatenated.
pub fn digest_parts(parts: &[&[u8]]) -> Hash {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    Hash(h.finalize().into())
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PublicKey(pub [u8; PUBLIC_KEY_LEN]);

impl PublicKey {
    pub fn key_digest(&self) -> KeyDigest {
        let full = digest(&self.0);
        let mut out = [0u8; KEY_DIGEST_LEN];
        out.copy_from_slice(&full.0[..KEY_DIGEST_LEN]);
        KeyDigest(out)
    }

    pub fn address(&self) -> Address {
        derive_address(self)
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", &hex::encode(self.0)[..16])
    }
}

/// Truncated digest of a public key; what pay-to-key-hash outputs commit to.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct KeyDigest(pub [u8; KEY_DIGEST_LEN]);

impl fmt::Debug for KeyDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "KeyDigest({})", hex::encode(self.0))
    }
}

impl Serialize for PublicKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(self.0))
    }
}

impl Serialize for KeyDigest {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(self.0))
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Signature(pub [u8; SIGNATURE_LEN]);

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({}..)", &hex::encode(self.0)[..16])
    }
}

#[derive(Clone)]
pub struct KeyPair {
    signing: SigningKey,
    public: PublicKey,
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair").field("public", &self.public).finish_non_exhaustive()
    }
}

impl KeyPair {
    pub fn public_key(&self) -> PublicKey {
        self.public
    }

    pub fn private_key(&self) -> [u8; 32] {
        self.signing.to_bytes()
    }

    pub fn address(&self) -> Address {
        derive_address(&self.public)
    }

    pub fn key_digest(&self) -> KeyDigest {
        self.public.key_digest()
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        sign(self, message)
    }

    /// Key pair for a human-readable label; convenient in scenarios and tests.
    pub fn from_label(label: &str) -> KeyPair {
        let seed = digest_parts(&[b"s2aas/key/", label.as_bytes()]);
        KeyPair::from_seed(seed.0)
    }

    pub fn from_seed(seed: [u8; 32]) -> KeyPair {
        let signing = SigningKey::from_bytes(&seed);
        let public = PublicKey(signing.verifying_key().to_bytes());
        KeyPair { signing, public }
    }
}

pub fn generate_keypair(seed: &[u8]) -> Result<KeyPair, CryptoError> {
    let seed: [u8; 32] = seed.try_into().map_err(|_| CryptoError::BadSeedLength(seed.len()))?;
    Ok(KeyPair::from_seed(seed))
}

pub fn sign(keypair: &KeyPair, message: &[u8]) -> Signature {
    Signature(keypair.signing.sign(message).to_bytes())
}

pub fn verify(public_key: &PublicKey, message: &[u8], signature: &Signature) -> bool {
    let Ok(vk) = VerifyingKey::from_bytes(&public_key.0) else {
        return false;
    };
    let sig = ed25519_dalek::Signature::from_bytes(&signature.0);
    vk.verify_strict(message, &sig).is_ok()
}

/// Versioned, checksummed key digest. Text form is 50 lowercase hex
/// characters (`prefix ‖ key_digest ‖ checksum`); parsing is case-insensitive.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Address {
    pub version_prefix: u8,
    pub key_digest: KeyDigest,
    pub checksum: [u8; 4],
}

pub const ADDRESS_BYTES: usize = 1 + KEY_DIGEST_LEN + 4;

fn address_checksum(prefix: u8, key_digest: &KeyDigest) -> [u8; 4] {
    let h = digest_parts(&[&[prefix], &key_digest.0]);
    [h.0[0], h.0[1], h.0[2], h.0[3]]
}

pub fn derive_address(public_key: &PublicKey) -> Address {
    Address::from_key_digest(public_key.key_digest())
}

impl Address {
    pub fn from_key_digest(key_digest: KeyDigest) -> Address {
        Address { version_prefix: ADDRESS_PREFIX, key_digest, checksum: address_checksum(ADDRESS_PREFIX, &key_digest) }
    }

    pub fn to_bytes(&self) -> [u8; ADDRESS_BYTES] {
        let mut out = [0u8; ADDRESS_BYTES];
        out[0] = self.version_prefix;
        out[1..21].copy_from_slice(&self.key_digest.0);
        out[21..].copy_from_slice(&self.checksum);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Address, AddressError> {
        if bytes.len() != ADDRESS_BYTES {
            return Err(AddressError::BadLength { expected: ADDRESS_BYTES * 2, got: bytes.len() * 2 });
        }
        if bytes[0] != ADDRESS_PREFIX {
            return Err(AddressError::BadPrefix(bytes[0]));
        }
        let mut kd = [0u8; KEY_DIGEST_LEN];
        kd.copy_from_slice(&bytes[1..21]);
        let key_digest = KeyDigest(kd);
        let expected = address_checksum(bytes[0], &key_digest);
        if bytes[21..] != expected {
            return Err(AddressError::BadChecksum);
        }
        Ok(Address { version_prefix: bytes[0], key_digest, checksum: expected })
    }

    pub fn encode(&self) -> String {
        hex::encode(self.to_bytes())
    }

    pub fn decode(text: &str) -> Result<Address, AddressError> {
        if text.len() != ADDRESS_BYTES * 2 {
            return Err(AddressError::BadLength { expected: ADDRESS_BYTES * 2, got: text.len() });
        }
        let bytes = hex::decode(text.to_ascii_lowercase()).map_err(|_| AddressError::BadHex)?;
        Address::from_bytes(&bytes)
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.encode())
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Address({})", self.encode())
    }
}

impl FromStr for Address {
    type Err = AddressError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Address::decode(s)
    }
}

impl Serialize for Address {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.encode())
    }
}

/// Symmetric authenticated cipher used inside a [`CipherEnvelope`].
pub trait EnvelopeCipher {
    fn seal(&self, key: &[u8; 32], nonce: &[u8; NONCE_LEN], plaintext: &[u8]) -> (Vec<u8>, [u8; TAG_LEN]);
    fn open(
        &self,
        key: &[u8; 32],
        nonce: &[u8; NONCE_LEN],
        ciphertext: &[u8],
        tag: &[u8; TAG_LEN],
    ) -> Result<Vec<u8>, CryptoError>;
}

/// ChaCha20-Poly1305; the default cipher.
#[derive(Debug, Clone, Copy, Default)]
pub struct ChaChaPoly;

impl EnvelopeCipher for ChaChaPoly {
    fn seal(&self, key: &[u8; 32], nonce: &[u8; NONCE_LEN], plaintext: &[u8]) -> (Vec<u8>, [u8; TAG_LEN]) {
        let cipher = ChaCha20Poly1305::new(key.into());
        let mut buf = plaintext.to_vec();
        let tag = cipher
            .encrypt_in_place_detached(Nonce::from_slice(nonce), b"", &mut buf)
            .expect("plaintext length within cipher limits");
        (buf, tag.into())
    }

    fn open(
        &self,
        key: &[u8; 32],
        nonce: &[u8; NONCE_LEN],
        ciphertext: &[u8],
        tag: &[u8; TAG_LEN],
    ) -> Result<Vec<u8>, CryptoError> {
        let cipher = ChaCha20Poly1305::new(key.into());
        let mut buf = ciphertext.to_vec();
        cipher
            .decrypt_in_place_detached(Nonce::from_slice(nonce), b"", &mut buf, Tag::from_slice(tag))
            .map_err(|_| CryptoError::AuthenticationFailed)?;
        Ok(buf)
    }
}

/// Keyed SHA-256 keystream with a SHA-256 tag. Byte-stable and dependency
/// free; meant for golden files, not for confidentiality.
#[derive(Debug, Clone, Copy, Default)]
pub struct DigestStreamCipher;

impl DigestStreamCipher {
    fn keystream_xor(key: &[u8; 32], nonce: &[u8; NONCE_LEN], data: &mut [u8]) {
        for (block, chunk) in data.chunks_mut(HASH_LEN).enumerate() {
            let ks = digest_parts(&[b"ks", key, nonce, &(block as u32).to_le_bytes()]);
            for (b, k) in chunk.iter_mut().zip(ks.0.iter()) {
                *b ^= k;
            }
        }
    }

    fn tag(key: &[u8; 32], nonce: &[u8; NONCE_LEN], ciphertext: &[u8]) -> [u8; TAG_LEN] {
        let h = digest_parts(&[b"tag", key, nonce, ciphertext]);
        let mut t = [0u8; TAG_LEN];
        t.copy_from_slice(&h.0[..TAG_LEN]);
        t
    }
}

impl EnvelopeCipher for DigestStreamCipher {
    fn seal(&self, key: &[u8; 32], nonce: &[u8; NONCE_LEN], plaintext: &[u8]) -> (Vec<u8>, [u8; TAG_LEN]) {
        let mut buf = plaintext.to_vec();
        Self::keystream_xor(key, nonce, &mut buf);
        let tag = Self::tag(key, nonce, &buf);
        (buf, tag)
    }

    fn open(
        &self,
        key: &[u8; 32],
        nonce: &[u8; NONCE_LEN],
        ciphertext: &[u8],
        tag: &[u8; TAG_LEN],
    ) -> Result<Vec<u8>, CryptoError> {
        let expected = Self::tag(key, nonce, ciphertext);
        // constant-time comparison is irrelevant for the test cipher
        if &expected != tag {
            return Err(CryptoError::AuthenticationFailed);
        }
        let mut buf = ciphertext.to_vec();
        Self::keystream_xor(key, nonce, &mut buf);
        Ok(buf)
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct CipherEnvelope {
    pub ephemeral_key: [u8; PUBLIC_KEY_LEN],
    pub nonce: [u8; NONCE_LEN],
    pub ciphertext: Vec<u8>,
    pub tag: [u8; TAG_LEN],
}

impl CipherEnvelope {
    /// `ephemeral_key ‖ nonce ‖ tag ‖ ciphertext`; the ciphertext runs to the end.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(ENVELOPE_OVERHEAD + self.ciphertext.len());
        out.extend_from_slice(&self.ephemeral_key);
        out.extend_from_slice(&self.nonce);
        out.extend_from_slice(&self.tag);
        out.extend_from_slice(&self.ciphertext);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<CipherEnvelope, CryptoError> {
        if bytes.len() <= ENVELOPE_OVERHEAD {
            return Err(CryptoError::MalformedEnvelope);
        }
        let (eph, rest) = bytes.split_at(PUBLIC_KEY_LEN);
        let (nonce, rest) = rest.split_at(NONCE_LEN);
        let (tag, ct) = rest.split_at(TAG_LEN);
        Ok(CipherEnvelope {
            ephemeral_key: eph.try_into().unwrap(),
            nonce: nonce.try_into().unwrap(),
            tag: tag.try_into().unwrap(),
            ciphertext: ct.to_vec(),
        })
    }

    pub fn encoded_len(&self) -> usize {
        ENVELOPE_OVERHEAD + self.ciphertext.len()
    }
}

fn montgomery_of(public_key: &PublicKey) -> Result<[u8; 32], CryptoError> {
    let vk = VerifyingKey::from_bytes(&public_key.0).map_err(|_| CryptoError::InvalidPublicKey)?;
    Ok(vk.to_montgomery().to_bytes())
}

fn envelope_key(shared: &[u8; 32], ephemeral: &[u8; 32], recipient: &[u8; 32]) -> [u8; 32] {
    digest_parts(&[b"s2aas/envelope", shared, ephemeral, recipient]).0
}

/// Encrypts `plaintext` to `public_key` with the default cipher.
pub fn encrypt_for<R: RngCore + CryptoRng>(
    public_key: &PublicKey,
    plaintext: &[u8],
    rng: &mut R,
) -> Result<CipherEnvelope, CryptoError> {
    encrypt_for_with(&ChaChaPoly, public_key, plaintext, rng)
}

pub fn encrypt_for_with<C: EnvelopeCipher, R: RngCore + CryptoRng>(
    cipher: &C,
    public_key: &PublicKey,
    plaintext: &[u8],
    rng: &mut R,
) -> Result<CipherEnvelope, CryptoError> {
    if plaintext.is_empty() {
        return Err(CryptoError::EmptyPlaintext);
    }
    let recipient = montgomery_of(public_key)?;
    let mut eph_secret = [0u8; 32];
    rng.fill_bytes(&mut eph_secret);
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);

    let ephemeral_key = x25519_dalek::x25519(eph_secret, x25519_dalek::X25519_BASEPOINT_BYTES);
    let shared = x25519_dalek::x25519(eph_secret, recipient);
    let key = envelope_key(&shared, &ephemeral_key, &recipient);
    let (ciphertext, tag) = cipher.seal(&key, &nonce, plaintext);
    Ok(CipherEnvelope { ephemeral_key, nonce, ciphertext, tag })
}

pub fn decrypt(keypair: &KeyPair, envelope: &CipherEnvelope) -> Result<Vec<u8>, CryptoError> {
    decrypt_with(&ChaChaPoly, keypair, envelope)
}

pub fn decrypt_with<C: EnvelopeCipher>(
    cipher: &C,
    keypair: &KeyPair,
    envelope: &CipherEnvelope,
) -> Result<Vec<u8>, CryptoError> {
    let recipient = montgomery_of(&keypair.public)?;
    let shared = x25519_dalek::x25519(keypair.signing.to_scalar_bytes(), envelope.ephemeral_key);
    let key = envelope_key(&shared, &envelope.ephemeral_key, &recipient);
    cipher.open(&key, &envelope.nonce, &envelope.ciphertext, &envelope.tag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn seed(i: u32) -> [u8; 32] {
        digest(&i.to_le_bytes()).0
    }

    #[test]
    fn keypair_is_deterministic() {
        let a = generate_keypair(&seed(1)).unwrap();
        let b = generate_keypair(&seed(1)).unwrap();
        assert_eq!(a.public_key(), b.public_key());
        assert_eq!(a.private_key(), b.private_key());
        let c = generate_keypair(&seed(2)).unwrap();
        assert_ne!(a.public_key(), c.public_key());
    }

    #[test]
    fn rejects_bad_seed_length() {
        assert_eq!(generate_keypair(&[0u8; 31]).unwrap_err(), CryptoError::BadSeedLength(31));
        assert_eq!(generate_keypair(&[0u8; 33]).unwrap_err(), CryptoError::BadSeedLength(33));
    }

    #[test]
    fn thousand_seeds_thousand_addresses() {
        let addrs: std::collections::BTreeSet<_> =
            (0..1000).map(|i| generate_keypair(&seed(i)).unwrap().address().encode()).collect();
        assert_eq!(addrs.len(), 1000);
    }

    #[test]
    fn address_round_trip_and_case_insensitive() {
        let kp = KeyPair::from_label("sensor");
        let addr = kp.address();
        assert_eq!(addr, derive_address(&kp.public_key()));
        let text = addr.encode();
        assert_eq!(text.len(), 50);
        assert_eq!(Address::decode(&text).unwrap(), addr);
        assert_eq!(Address::decode(&text.to_uppercase()).unwrap(), addr);
    }

    #[test]
    fn public_key_bit_flip_changes_digest() {
        for i in 0..8 {
            let kp = generate_keypair(&seed(100 + i)).unwrap();
            let pk = kp.public_key();
            for bit in 0..(PUBLIC_KEY_LEN * 8) {
                let mut flipped = pk;
                flipped.0[bit / 8] ^= 1 << (bit % 8);
                assert_ne!(flipped.key_digest(), pk.key_digest());
            }
        }
    }

    #[test]
    fn every_checksum_corruption_is_rejected() {
        let bytes = KeyPair::from_label("x").address().to_bytes();
        for pos in 21..ADDRESS_BYTES {
            for delta in 1..=255u8 {
                let mut b = bytes;
                b[pos] ^= delta;
                assert_eq!(Address::from_bytes(&b).unwrap_err(), AddressError::BadChecksum);
            }
        }
        let mut bad = bytes;
        bad[0] = 0x00;
        assert_eq!(Address::from_bytes(&bad).unwrap_err(), AddressError::BadPrefix(0));
        assert!(matches!(Address::decode("zz"), Err(AddressError::BadLength { .. })));
        assert_eq!(Address::decode(&"g".repeat(50)).unwrap_err(), AddressError::BadHex);
    }

    #[test]
    fn sign_verify() {
        let kp = KeyPair::from_label("a");
        let other = KeyPair::from_label("b");
        let msg = b"pay 100 to sensor";
        let sig = kp.sign(msg);
        assert!(verify(&kp.public_key(), msg, &sig));
        assert!(!verify(&other.public_key(), msg, &sig));
        for pos in 0..msg.len() {
            let mut m = msg.to_vec();
            m[pos] ^= 0x01;
            assert!(!verify(&kp.public_key(), &m, &sig), "mutation at byte {pos} verified");
        }
        for pos in 0..SIGNATURE_LEN {
            let mut s = sig;
            s.0[pos] ^= 0x80;
            assert!(!verify(&kp.public_key(), msg, &s));
        }
    }

    #[test]
    fn envelope_round_trip_and_wrong_key() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let a = KeyPair::from_label("requester");
        let env = encrypt_for(&a.public_key(), b"21.5C", &mut rng).unwrap();
        assert_eq!(decrypt(&a, &env).unwrap(), b"21.5C");
        let stranger = KeyPair::from_label("stranger");
        assert_eq!(decrypt(&stranger, &env).unwrap_err(), CryptoError::AuthenticationFailed);
        assert_eq!(encrypt_for(&a.public_key(), b"", &mut rng).unwrap_err(), CryptoError::EmptyPlaintext);
    }

    #[test]
    fn every_ciphertext_and_tag_byte_is_authenticated() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let a = KeyPair::from_label("requester");
        let env = encrypt_for(&a.public_key(), b"pm25=17.3ug/m3;t=1200", &mut rng).unwrap();
        for i in 0..env.ciphertext.len() {
            let mut e = env.clone();
            e.ciphertext[i] ^= 0x01;
            assert!(decrypt(&a, &e).is_err(), "ciphertext byte {i}");
        }
        for i in 0..TAG_LEN {
            let mut e = env.clone();
            e.tag[i] ^= 0x01;
            assert!(decrypt(&a, &e).is_err(), "tag byte {i}");
        }
    }

    #[test]
    fn test_cipher_is_byte_stable() {
        let a = KeyPair::from_label("requester");
        let env1 = encrypt_for_with(&DigestStreamCipher, &a.public_key(), b"21.5C", &mut ChaCha20Rng::seed_from_u64(1))
            .unwrap();
        let env2 = encrypt_for_with(&DigestStreamCipher, &a.public_key(), b"21.5C", &mut ChaCha20Rng::seed_from_u64(1))
            .unwrap();
        assert_eq!(env1.to_bytes(), env2.to_bytes());
        assert_eq!(decrypt_with(&DigestStreamCipher, &a, &env1).unwrap(), b"21.5C");
        let mut t = env1.clone();
        t.ciphertext[0] ^= 1;
        assert!(decrypt_with(&DigestStreamCipher, &a, &t).is_err());
    }

    #[test]
    fn envelope_bytes_round_trip() {
        let a = KeyPair::from_label("r");
        let env = encrypt_for(&a.public_key(), b"0123456789abcdef", &mut ChaCha20Rng::seed_from_u64(3)).unwrap();
        let bytes = env.to_bytes();
        assert_eq!(bytes.len(), ENVELOPE_OVERHEAD + 16);
        assert_eq!(CipherEnvelope::from_bytes(&bytes).unwrap(), env);
        assert_eq!(
            CipherEnvelope::from_bytes(&bytes[..ENVELOPE_OVERHEAD]).unwrap_err(),
            CryptoError::MalformedEnvelope
        );
    }

    #[test]
    fn digest_golden_values() {
        // SHA-256 of the empty string.
        assert_eq!(digest(b"").to_hex(), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
        assert_eq!(digest(b"x"), digest(b"x"));
        assert_ne!(digest(b"x"), digest(b"x\x00"));
    }
}
