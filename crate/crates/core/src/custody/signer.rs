//! Signature plumbing. Only a keyed-hash test signer ships here.

use std::fmt;

use serde::{Serialize, Serializer};
use sha2::{Digest, Sha256};

macro_rules! byte_newtype {
    ($name:ident) => {
        #[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub Vec<u8>);

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({})", stringify!($name), hex::encode(&self.0))
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&hex::encode(&self.0))
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&hex::encode(&self.0))
            }
        }
    };
}

byte_newtype!(PublicKey);
byte_newtype!(SecretKey);
byte_newtype!(Signature);

pub trait SignatureScheme {
    fn public_key(&self, secret: &SecretKey) -> PublicKey;
    fn sign(&self, secret: &SecretKey, message: &[u8]) -> Signature;
    fn verify(&self, public: &PublicKey, message: &[u8], signature: &Signature) -> bool;
}

/// Deterministic keyed hash standing in for a signature scheme.
///
/// NOT SECURE: the "signature" is a hash of the public key and the
/// message, so anyone can forge it. It exists so that chains can be built
/// and checked bit-exactly in tests and examples.
#[derive(Debug, Clone, Copy, Default)]
pub struct InsecureHashSigner;

fn tagged(tag: &[u8], parts: &[&[u8]]) -> Vec<u8> {
    let mut h = Sha256::new();
    h.update(tag);
    for p in parts {
        h.update((p.len() as u64).to_be_bytes());
        h.update(p);
    }
    h.finalize().to_vec()
}

impl SignatureScheme for InsecureHashSigner {
    fn public_key(&self, secret: &SecretKey) -> PublicKey {
        PublicKey(tagged(b"insecure-pk", &[&secret.0]))
    }

    fn sign(&self, secret: &SecretKey, message: &[u8]) -> Signature {
        let pk = self.public_key(secret);
        Signature(tagged(b"insecure-sig", &[&pk.0, message]))
    }

    fn verify(&self, public: &PublicKey, message: &[u8], signature: &Signature) -> bool {
        signature.0 == tagged(b"insecure-sig", &[&public.0, message])
    }
}

/// A secret deterministically derived from a parent secret and a label,
/// used for the fresh identities a node creates for its clones.
pub fn derive_secret(parent: &SecretKey, label: &[u8]) -> SecretKey {
    SecretKey(tagged(b"derive", &[&parent.0, label]))
}

/// A secret derived from a seed number, handy in tests and examples.
pub fn secret_from_seed(seed: u64) -> SecretKey {
    SecretKey(tagged(b"seed", &[&seed.to_be_bytes()]))
}
