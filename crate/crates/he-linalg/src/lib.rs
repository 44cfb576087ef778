//! Encrypted low-rank matrix product over packed SIMD slots.
//!
//! The client packs its d x m activation block in a replicated row-block
//! layout and encrypts it; the server multiplies through the low-rank factors
//! with three plaintext multiplications, a shift-and-sum inner product, a
//! head mask, a replication pass and a row-group sum, then adds the per-round
//! offset. The result decrypts to x * A1 * A2 + Q_t in strided result slots
//! with uniform junk everywhere else.

mod error;
mod kernel;
mod layout;
mod operands;

pub use error::{LinalgError, Result};
pub use kernel::{extract_result, he_lora_apply, pack_input, ApplyStats, PackedMatrix};
pub use layout::PackLayout;
pub use operands::{build_server_operands, output_scale, ServerOperands};
