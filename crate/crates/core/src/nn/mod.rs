//! Minimal dense-network engine: parameters, initialization, forward and
//! reverse passes, Adam, and the learning-rate schedule.

mod adam;
mod mlp;
mod real;
mod schedule;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use mlp::{glorot_init, mlp_forward, mlp_grad, Activation, Dense, ForwardTrace, MlpGrads, MlpParams};
pub use real::Real;
pub(crate) use mlp::validate_widths;
pub(crate) use real::{gemm, View};
pub use schedule::{lr_schedule, LrSchedule};

/// FNV-1a over the bit patterns of a parameter stream.
pub fn checksum<'a, T: Real, I: IntoIterator<Item = &'a T>>(values: I) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in values {
        for b in v.as_f64().to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}
