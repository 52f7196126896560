//! Integer-nanosecond time helpers.

/// Simulation timestamps and durations, in nanoseconds.
pub type Nanos = u64;

pub const NS_PER_US: Nanos = 1_000;
pub const NS_PER_MS: Nanos = 1_000_000;
pub const NS_PER_SEC: Nanos = 1_000_000_000;

pub const fn us(v: u64) -> Nanos {
    v * NS_PER_US
}

pub const fn ms(v: u64) -> Nanos {
    v * NS_PER_MS
}

/// Milliseconds with a fractional part, rounded to the nearest nanosecond.
pub fn ms_f(v: f64) -> Nanos {
    (v * NS_PER_MS as f64).round() as Nanos
}

pub fn to_ms(ns: Nanos) -> f64 {
    ns as f64 / NS_PER_MS as f64
}
