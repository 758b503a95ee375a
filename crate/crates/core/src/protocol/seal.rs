//! Public-key sealing of pairwise randoms so the relaying server cannot read them.
//!
//! Hashed ElGamal over the commitment group: the sender picks an ephemeral
//! `y`, publishes `g^y`, and derives a keystream and tag from `pk^y`.

use rand::RngCore;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::group::{Element, GroupParams, Scalar};

#[derive(Clone, Debug)]
pub struct KeyPair {
    secret: Scalar,
    public: Element,
}

impl KeyPair {
    pub fn generate<R: RngCore + ?Sized>(params: &GroupParams, rng: &mut R) -> Self {
        let secret = params.random_scalar(rng);
        let public = params.commit(&secret);
        Self { secret, public }
    }

    pub fn public(&self) -> &Element {
        &self.public
    }
}

fn derive_key(params: &GroupParams, shared: &Element) -> [u8; 32] {
    let mut bytes = Vec::with_capacity(params.width());
    params.element_to_bytes(shared, &mut bytes);
    let mut h = Sha256::new();
    h.update(b"seal-key");
    h.update(&bytes);
    h.finalize().into()
}

fn keystream_xor(key: &[u8; 32], data: &mut [u8]) {
    for (block, chunk) in data.chunks_mut(32).enumerate() {
        let mut h = Sha256::new();
        h.update(b"seal-stream");
        h.update(key);
        h.update((block as u64).to_le_bytes());
        let pad: [u8; 32] = h.finalize().into();
        for (b, p) in chunk.iter_mut().zip(pad) {
            *b ^= p;
        }
    }
}

fn tag(key: &[u8; 32], ephemeral: &[u8], body: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"seal-tag");
    h.update(key);
    h.update(ephemeral);
    h.update(body);
    h.finalize().into()
}

/// Output layout: `g^y` (modulus width) || ciphertext || 32-byte tag.
pub fn seal<R: RngCore + ?Sized>(
    params: &GroupParams,
    recipient: &Element,
    plaintext: &[u8],
    rng: &mut R,
) -> Vec<u8> {
    let ephemeral = params.random_scalar(rng);
    let shared = params.pow(recipient, &ephemeral);
    let key = derive_key(params, &shared);
    let mut out = Vec::with_capacity(params.width() + plaintext.len() + 32);
    params.element_to_bytes(&params.commit(&ephemeral), &mut out);
    let body_start = out.len();
    out.extend_from_slice(plaintext);
    keystream_xor(&key, &mut out[body_start..]);
    let t = tag(&key, &out[..body_start], &out[body_start..]);
    out.extend_from_slice(&t);
    out
}

pub fn open(params: &GroupParams, keys: &KeyPair, sealed: &[u8]) -> Result<Vec<u8>> {
    let w = params.width();
    if sealed.len() < w + 32 {
        return Err(Error::SealAuthentication);
    }
    let (head, rest) = sealed.split_at(w);
    let (body, t) = rest.split_at(rest.len() - 32);
    let ephemeral = params
        .element_from_bytes(head)
        .map_err(|_| Error::SealAuthentication)?;
    let key = derive_key(params, &params.pow(&ephemeral, &keys.secret));
    if tag(&key, head, body) != t {
        return Err(Error::SealAuthentication);
    }
    let mut plain = body.to_vec();
    keystream_xor(&key, &mut plain);
    Ok(plain)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds::derive_rng;

    #[test]
    fn round_trip_and_tamper_detection() {
        for params in [GroupParams::test(), GroupParams::tiny()] {
            let mut rng = derive_rng(1, "seal", &[]);
            let alice = KeyPair::generate(&params, &mut rng);
            let bob = KeyPair::generate(&params, &mut rng);
            let msg: Vec<u8> = (0..100u8).collect();
            let sealed = seal(&params, alice.public(), &msg, &mut rng);
            assert_eq!(open(&params, &alice, &sealed).unwrap(), msg);
            assert_ne!(&sealed[params.width()..params.width() + 100], &msg[..]);
            let mut bad = sealed.clone();
            bad[params.width() + 3] ^= 1;
            assert!(open(&params, &alice, &bad).is_err());
            if params.q().bits() > 8 {
                assert!(open(&params, &bob, &sealed).is_err());
            }
            assert!(open(&params, &alice, &sealed[..10]).is_err());
        }
    }
}
