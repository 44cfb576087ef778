//! Leveled RNS-CKKS over Z[X]/(X^N + 1).
//!
//! The operation set is deliberately narrow: encode/decode, encrypt/decrypt,
//! ciphertext addition, plaintext multiplication, rescaling and slot
//! rotation. There is no ciphertext-ciphertext multiply, relinearization or
//! bootstrapping — the encrypted pipeline this crate serves multiplies by
//! plaintext operands only, so none of that machinery is needed.
//!
//! All operations are pure functions over immutable key material and are safe
//! to call concurrently; `keygen` and `encrypt` draw randomness from an
//! explicit RNG handle.

mod arith;
mod encode;
mod error;
mod keys;
mod ntt;
mod ops;
mod params;
mod ring;
pub mod wire;

pub use encode::{decode, encode, PlaintextOperand};
pub use error::{CkksError, Result};
pub use keys::{galois_element, keygen, KeyMaterial, PublicKeySet, RotationKeys, SecretKey};
pub use ops::{add, add_plain, cmult_plain, decrypt, encrypt, rescale, rotate, sub, Ciphertext};
pub use params::{
    CkksParams, DEFAULT_CHAIN_BITS, DEFAULT_RING_DEGREE, DEFAULT_SCALE_BITS, DEFAULT_SIGMA,
};

pub use ring::{Domain, RingElement};
